from .contracts import (
    BURN_TOPIC,
    DEPOSIT_TOPIC,
    MINT_TOPIC,
    TRANSFER_TOPIC,
    WITHDRAW_TOPIC,
    BridgeDest,
    BridgeOrigin,
    Token,
    build_native,
)
from .mediator import DIRECTIONS, ChainEndpoint, Direction, Mediator, Relay, event_id, event_key
