from .config import NativeSpec, NodeConfig
from .node import (
    CaasUnreachable,
    DivergenceDetected,
    GasPriceBelowFloor,
    JournalEntry,
    Node,
    NodeHalted,
    ProofDiscontinuity,
    Watermark,
    build_natives,
    replay,
)
from .service import BlockTimer, confirmation_app, confirmation_sink
