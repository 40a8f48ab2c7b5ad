from .backend import (
    DEFAULT_FEE_PER_MESSAGE,
    BackendUnavailable,
    ConsensusBackend,
    Delivery,
    LatencyModel,
    MockBackend,
    TopicNotFound,
)
from .proof import GENESIS_RUNNING_HASH, Confirmation, first_broken_link, running_hash_step
from .service import (
    DEFAULT_WEI_PER_TINYBAR,
    ConsensusService,
    InvalidProof,
    MessageRecord,
    NotFound,
    TamperDetected,
    UnknownNetwork,
)
