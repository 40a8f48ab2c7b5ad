"""Account/storage/code world state over secure (hashed-key) tries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from ..primitives import rlp
from ..primitives.crypto import EMPTY_KECCAK, keccak256
from ..primitives.rlp import decode_int
from ..types import EMPTY_ACCOUNT, EMPTY_TRIE_ROOT, Account
from .kv import CODE, Batch, KvStore, MemoryStore, StoreFailure
from .trie import NodeStore, Trie


def slot_key(slot: int) -> bytes:
    return keccak256(slot.to_bytes(32, "big"))


@dataclass
class AccountChange:
    nonce: int
    balance: int
    code_hash: bytes
    storage: Dict[int, int] = field(default_factory=dict)


@dataclass
class StateChanges:
    accounts: Dict[bytes, AccountChange] = field(default_factory=dict)
    code: Dict[bytes, bytes] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.accounts or self.code)


class WorldState:
    """State rooted at ``root``; ``commit`` produces and persists a new root.

    Readers created with ``at(root)`` share the node store and keep seeing
    their root while the writer commits newer ones.
    """

    def __init__(self, store: Optional[KvStore] = None, root: bytes = EMPTY_TRIE_ROOT,
                 nodes: Optional[NodeStore] = None):
        self.store = store if store is not None else MemoryStore()
        self.nodes = nodes if nodes is not None else NodeStore(self.store)
        self.root = root
        self._trie = Trie(self.nodes, root)

    def at(self, root: bytes) -> "WorldState":
        return WorldState(self.store, root, self.nodes)

    def get_account(self, address: bytes) -> Account:
        raw = self._trie.get(keccak256(address))
        return Account.decode(raw) if raw else EMPTY_ACCOUNT

    def get_balance(self, address: bytes) -> int:
        return self.get_account(address).balance

    def get_nonce(self, address: bytes) -> int:
        return self.get_account(address).nonce

    def get_storage(self, address: bytes, slot: int) -> int:
        account = self.get_account(address)
        if account.storage_root == EMPTY_TRIE_ROOT:
            return 0
        raw = Trie(self.nodes, account.storage_root).get(slot_key(slot))
        return decode_int(rlp.decode(raw)) if raw else 0

    def get_code(self, address: bytes) -> bytes:
        return self.code_by_hash(self.get_account(address).code_hash)

    def code_by_hash(self, code_hash: bytes) -> bytes:
        if code_hash == EMPTY_KECCAK:
            return b""
        code = self.store.get(CODE, code_hash)
        if code is None:
            raise StoreFailure(f"missing code {code_hash.hex()}")
        return code

    def commit(self, changes: StateChanges, batch: Optional[Batch] = None, on_root=None) -> bytes:
        """Apply ``changes`` and write them, plus ``batch``, in one atomic batch.

        ``on_root(new_root, batch)`` may add ops that depend on the new root
        before the batch is written.
        """
        batch = batch if batch is not None else Batch()
        trie = Trie(self.nodes, self.root)
        for address in sorted(changes.accounts):
            change = changes.accounts[address]
            old = self.get_account(address)
            storage_root = old.storage_root
            if change.storage:
                storage = Trie(self.nodes, storage_root)
                for slot in sorted(change.storage):
                    value = change.storage[slot]
                    if value:
                        storage.put(slot_key(slot), rlp.encode(value))
                    else:
                        storage.delete(slot_key(slot))
                storage_root = storage.root
            account = Account(change.nonce, change.balance, storage_root, change.code_hash)
            if account.is_empty:
                trie.delete(keccak256(address))
            else:
                trie.put(keccak256(address), account.encode())
        for code_hash, code in changes.code.items():
            batch.put(CODE, code_hash, code)
        new_root = trie.root
        self.nodes.flush_into(batch)
        try:
            if on_root is not None:
                on_root(new_root, batch)
            self.store.write(batch)
        except Exception as exc:
            self.nodes.discard()
            if isinstance(exc, StoreFailure):
                raise
            raise StoreFailure(str(exc)) from exc
        self.nodes.flushed()
        self.root = new_root
        self._trie = trie
        return new_root

    def dump(self) -> Dict[bytes, Tuple[Account, Dict[bytes, bytes]]]:
        """Every account keyed by hashed address, with its raw storage entries."""
        out = {}
        for key, raw in self._trie.items():
            account = Account.decode(raw)
            storage = dict(Trie(self.nodes, account.storage_root).items())
            out[key] = (account, storage)
        return out


def genesis_state(store: KvStore, allocations: Mapping[bytes, int]) -> WorldState:
    ws = WorldState(store)
    changes = StateChanges()
    for address, balance in allocations.items():
        if balance < 0:
            raise ValueError("genesis balances must be non-negative")
        changes.accounts[address] = AccountChange(0, balance, EMPTY_KECCAK)
    ws.commit(changes)
    return ws


class StateOverlay:
    """Journaled mutable view over a ``WorldState`` used during execution."""

    def __init__(self, base: WorldState):
        self.base = base
        self._accounts: Dict[bytes, List] = {}
        self._storage: Dict[Tuple[bytes, int], int] = {}
        self._code: Dict[bytes, bytes] = {}
        self._journal: List[Tuple] = []

    def _account(self, address: bytes) -> List:
        entry = self._accounts.get(address)
        if entry is None:
            acct = self.base.get_account(address)
            entry = [acct.nonce, acct.balance, acct.code_hash]
            self._accounts[address] = entry
            self._journal.append(("load", address))
        return entry

    def get_balance(self, address: bytes) -> int:
        return self._account(address)[1]

    def get_nonce(self, address: bytes) -> int:
        return self._account(address)[0]

    def get_code_hash(self, address: bytes) -> bytes:
        return self._account(address)[2]

    def get_code(self, address: bytes) -> bytes:
        code_hash = self.get_code_hash(address)
        if code_hash in self._code:
            return self._code[code_hash]
        return self.base.code_by_hash(code_hash)

    def set_balance(self, address: bytes, value: int) -> None:
        if value < 0:
            raise ValueError("negative balance")
        entry = self._account(address)
        self._journal.append(("balance", address, entry[1]))
        entry[1] = value

    def add_balance(self, address: bytes, delta: int) -> None:
        self.set_balance(address, self.get_balance(address) + delta)

    def set_nonce(self, address: bytes, value: int) -> None:
        entry = self._account(address)
        self._journal.append(("nonce", address, entry[0]))
        entry[0] = value

    def set_code(self, address: bytes, code: bytes) -> None:
        entry = self._account(address)
        code_hash = keccak256(code) if code else EMPTY_KECCAK
        self._journal.append(("code", address, entry[2]))
        entry[2] = code_hash
        if code:
            self._code[code_hash] = code

    def get_storage(self, address: bytes, slot: int) -> int:
        key = (address, slot)
        if key in self._storage:
            return self._storage[key]
        return self.base.get_storage(address, slot)

    def set_storage(self, address: bytes, slot: int, value: int) -> None:
        key = (address, slot)
        self._account(address)
        self._journal.append(("storage", key, key in self._storage, self._storage.get(key)))
        self._storage[key] = value

    def checkpoint(self) -> int:
        return len(self._journal)

    def revert(self, checkpoint: int) -> None:
        while len(self._journal) > checkpoint:
            entry = self._journal.pop()
            kind = entry[0]
            if kind == "load":
                del self._accounts[entry[1]]
            elif kind == "balance":
                self._accounts[entry[1]][1] = entry[2]
            elif kind == "nonce":
                self._accounts[entry[1]][0] = entry[2]
            elif kind == "code":
                self._accounts[entry[1]][2] = entry[2]
            elif kind == "storage":
                _, key, existed, old = entry
                if existed:
                    self._storage[key] = old
                else:
                    del self._storage[key]

    def changes(self) -> StateChanges:
        """Net mutations relative to the base state (unchanged accounts omitted)."""
        out = StateChanges()
        per_account: Dict[bytes, Dict[int, int]] = {}
        for (address, slot), value in self._storage.items():
            if self.base.get_storage(address, slot) != value:
                per_account.setdefault(address, {})[slot] = value
        for address, (nonce, balance, code_hash) in self._accounts.items():
            base = self.base.get_account(address)
            storage = per_account.get(address, {})
            if (nonce, balance, code_hash) == (base.nonce, base.balance, base.code_hash) and not storage:
                continue
            out.accounts[address] = AccountChange(nonce, balance, code_hash, storage)
            if code_hash != base.code_hash and code_hash in self._code:
                out.code[code_hash] = self._code[code_hash]
        return out
