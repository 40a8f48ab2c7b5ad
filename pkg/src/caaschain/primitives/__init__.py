from . import rlp
from .crypto import (
    EMPTY_KECCAK,
    InvalidSignature,
    PrivateKey,
    keccak256,
    public_key_to_address,
    recover_signer,
)
from .rlp import MalformedRlp

__all__ = [
    "rlp",
    "EMPTY_KECCAK",
    "InvalidSignature",
    "MalformedRlp",
    "PrivateKey",
    "keccak256",
    "public_key_to_address",
    "recover_signer",
]
