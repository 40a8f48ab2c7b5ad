from .kv import Batch, KvStore, MemoryStore, SqliteStore, StoreFailure
from .trie import MissingNode, NodeStore, Trie, trie_delete, trie_get, trie_put
from .world import AccountChange, StateChanges, StateOverlay, WorldState, genesis_state

__all__ = [
    "AccountChange", "Batch", "KvStore", "MemoryStore", "MissingNode", "NodeStore", "SqliteStore",
    "StateChanges", "StateOverlay", "StoreFailure", "Trie", "WorldState", "genesis_state",
    "trie_delete", "trie_get", "trie_put",
]
