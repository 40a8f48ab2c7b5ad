"""Hexary Merkle Patricia Trie.

Nodes are kept in their decoded RLP shape: a branch is a 17-item list, a leaf
or extension is ``[hex_prefix_path, value_or_child]``.  A child reference is
either the 32-byte hash of a node whose encoding is at least 32 bytes, or the
node itself when it is shorter (inlined).  Nodes are content-addressed and
never overwritten, so every historical root remains readable.
"""
from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

from ..primitives import rlp
from ..primitives.crypto import keccak256
from ..types import EMPTY_TRIE_ROOT
from .kv import TRIE_NODES, Batch, KvStore

BLANK = b""
_CACHE_LIMIT = 200_000


class MissingNode(KeyError):
    pass


def bytes_to_nibbles(key: bytes) -> bytes:
    out = bytearray()
    for c in key:
        out.append(c >> 4)
        out.append(c & 0x0F)
    return bytes(out)


def hex_prefix_encode(nibbles: bytes, leaf: bool) -> bytes:
    flag = 2 if leaf else 0
    if len(nibbles) % 2:
        nibbles = bytes([flag + 1]) + nibbles
    else:
        nibbles = bytes([flag, 0]) + nibbles
    return bytes(nibbles[i] << 4 | nibbles[i + 1] for i in range(0, len(nibbles), 2))


def hex_prefix_decode(data: bytes) -> Tuple[bytes, bool]:
    nibbles = bytes_to_nibbles(data)
    flag = nibbles[0]
    leaf = flag >= 2
    if flag & 1:
        return nibbles[1:], leaf
    return nibbles[2:], leaf


class NodeStore:
    """Hash -> encoded-node map layered over an optional ``KvStore``.

    New nodes sit in ``dirty`` until ``flush_into`` copies them to a batch.
    """

    def __init__(self, store: Optional[KvStore] = None):
        self.store = store
        self.dirty: Dict[bytes, bytes] = {}
        self._decoded: Dict[bytes, object] = {}

    def put(self, node_hash: bytes, encoded: bytes) -> None:
        if node_hash not in self.dirty:
            self.dirty[node_hash] = encoded

    def get_encoded(self, node_hash: bytes) -> bytes:
        enc = self.dirty.get(node_hash)
        if enc is None and self.store is not None:
            enc = self.store.get(TRIE_NODES, node_hash)
        if enc is None:
            raise MissingNode(node_hash.hex())
        return enc

    def load(self, node_hash: bytes):
        node = self._decoded.get(node_hash)
        if node is None:
            node = rlp.decode(self.get_encoded(node_hash))
            if len(self._decoded) >= _CACHE_LIMIT:
                self._decoded.clear()
            self._decoded[node_hash] = node
        return node

    def flush_into(self, batch: Batch) -> None:
        if self.store is None:
            return
        for h, enc in self.dirty.items():
            batch.put(TRIE_NODES, h, enc)

    def flushed(self) -> None:
        """Call after the batch from ``flush_into`` committed."""
        if self.store is not None:
            self.dirty.clear()

    def discard(self) -> None:
        if self.store is not None:
            self.dirty.clear()


def _is_branch(node) -> bool:
    return isinstance(node, list) and len(node) == 17


class Trie:
    def __init__(self, db: Optional[NodeStore] = None, root: bytes = EMPTY_TRIE_ROOT):
        self.db = db if db is not None else NodeStore()
        self._root_node = self._load_root(root)
        self._root_hash: Optional[bytes] = root

    # node plumbing

    def _load_root(self, root: bytes):
        if root == EMPTY_TRIE_ROOT:
            return BLANK
        return self.db.load(root)

    def _resolve(self, ref):
        if ref == BLANK or isinstance(ref, list):
            return ref
        if len(ref) == 32:
            return self.db.load(ref)
        # inline nodes stored as encoded bytes by foreign encoders
        return rlp.decode(ref)

    def _ref(self, node):
        if node == BLANK:
            return BLANK
        enc = rlp.encode(node)
        if len(enc) < 32:
            return node
        h = keccak256(enc)
        self.db.put(h, enc)
        return h

    @property
    def root(self) -> bytes:
        if self._root_hash is None:
            node = self._root_node
            if node == BLANK:
                self._root_hash = EMPTY_TRIE_ROOT
            else:
                enc = rlp.encode(node)
                h = keccak256(enc)
                self.db.put(h, enc)
                self._root_hash = h
        return self._root_hash

    # lookups

    def get(self, key: bytes) -> Optional[bytes]:
        node = self._root_node
        path = bytes_to_nibbles(key)
        while True:
            if node == BLANK:
                return None
            if _is_branch(node):
                if not path:
                    return node[16] or None
                node = self._resolve(node[path[0]])
                path = path[1:]
                continue
            nibbles, leaf = hex_prefix_decode(node[0])
            if leaf:
                return node[1] if path == nibbles else None
            if path[:len(nibbles)] != nibbles:
                return None
            path = path[len(nibbles):]
            node = self._resolve(node[1])

    def __contains__(self, key: bytes) -> bool:
        return self.get(key) is not None

    # updates

    def put(self, key: bytes, value: bytes) -> bytes:
        if not value:
            return self.delete(key)
        self._root_node = self._put(self._root_node, bytes_to_nibbles(key), value)
        self._root_hash = None
        return self.root

    def delete(self, key: bytes) -> bytes:
        new = self._delete(self._root_node, bytes_to_nibbles(key))
        if new is not self._root_node:
            self._root_node = new
            self._root_hash = None
        return self.root

    def _leaf(self, path: bytes, value: bytes):
        return [hex_prefix_encode(path, True), value]

    def _put(self, node, path: bytes, value: bytes):
        if node == BLANK:
            return self._leaf(path, value)
        if _is_branch(node):
            new = list(node)
            if not path:
                new[16] = value
            else:
                new[path[0]] = self._ref(self._put(self._resolve(node[path[0]]), path[1:], value))
            return new
        nibbles, leaf = hex_prefix_decode(node[0])
        common = 0
        limit = min(len(nibbles), len(path))
        while common < limit and nibbles[common] == path[common]:
            common += 1
        if leaf and nibbles == path:
            return [node[0], value]
        if not leaf and common == len(nibbles):
            child = self._put(self._resolve(node[1]), path[common:], value)
            return [node[0], self._ref(child)]
        branch = [BLANK] * 17
        rest = nibbles[common:]
        if leaf:
            if not rest:
                branch[16] = node[1]
            else:
                branch[rest[0]] = self._ref(self._leaf(rest[1:], node[1]))
        elif len(rest) == 1:
            branch[rest[0]] = node[1]
        else:
            branch[rest[0]] = self._ref([hex_prefix_encode(rest[1:], False), node[1]])
        rest_path = path[common:]
        if not rest_path:
            branch[16] = value
        else:
            branch[rest_path[0]] = self._ref(self._leaf(rest_path[1:], value))
        if common:
            return [hex_prefix_encode(path[:common], False), self._ref(branch)]
        return branch

    def _delete(self, node, path: bytes):
        if node == BLANK:
            return node
        if _is_branch(node):
            new = list(node)
            if not path:
                if node[16] == BLANK:
                    return node
                new[16] = BLANK
            else:
                old_child = self._resolve(node[path[0]])
                child = self._delete(old_child, path[1:])
                if child is old_child:
                    return node
                new[path[0]] = self._ref(child)
            return self._normalize_branch(new)
        nibbles, leaf = hex_prefix_decode(node[0])
        if leaf:
            return BLANK if path == nibbles else node
        if path[:len(nibbles)] != nibbles:
            return node
        old_child = self._resolve(node[1])
        child = self._delete(old_child, path[len(nibbles):])
        if child is old_child:
            return node
        if child == BLANK:
            return BLANK
        if _is_branch(child):
            return [node[0], self._ref(child)]
        child_nibbles, child_leaf = hex_prefix_decode(child[0])
        return [hex_prefix_encode(nibbles + child_nibbles, child_leaf), child[1]]

    def _normalize_branch(self, branch):
        occupied = [i for i in range(16) if branch[i] != BLANK]
        has_value = branch[16] != BLANK
        if len(occupied) + has_value >= 2:
            return branch
        if has_value:
            return self._leaf(b"", branch[16])
        if not occupied:
            return BLANK
        i = occupied[0]
        child = self._resolve(branch[i])
        if _is_branch(child):
            return [hex_prefix_encode(bytes([i]), False), branch[i]]
        child_nibbles, child_leaf = hex_prefix_decode(child[0])
        return [hex_prefix_encode(bytes([i]) + child_nibbles, child_leaf), child[1]]

    # iteration (used by dumps and tests)

    def items(self) -> Iterator[Tuple[bytes, bytes]]:
        yield from self._walk(self._root_node, b"")

    def _walk(self, node, prefix: bytes):
        if node == BLANK:
            return
        if _is_branch(node):
            if node[16] != BLANK:
                yield _nibbles_to_bytes(prefix), node[16]
            for i in range(16):
                if node[i] != BLANK:
                    yield from self._walk(self._resolve(node[i]), prefix + bytes([i]))
            return
        nibbles, leaf = hex_prefix_decode(node[0])
        if leaf:
            yield _nibbles_to_bytes(prefix + nibbles), node[1]
        else:
            yield from self._walk(self._resolve(node[1]), prefix + nibbles)


def _nibbles_to_bytes(nibbles: bytes) -> bytes:
    return bytes(nibbles[i] << 4 | nibbles[i + 1] for i in range(0, len(nibbles), 2))


def trie_put(db: NodeStore, root: bytes, key: bytes, value: bytes) -> bytes:
    return Trie(db, root).put(key, value)


def trie_get(db: NodeStore, root: bytes, key: bytes) -> Optional[bytes]:
    return Trie(db, root).get(key)


def trie_delete(db: NodeStore, root: bytes, key: bytes) -> bytes:
    return Trie(db, root).delete(key)
