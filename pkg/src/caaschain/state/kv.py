"""Embedded key-value stores with named keyspaces and atomic batches."""
from __future__ import annotations

import os
import sqlite3
import threading
from abc import ABC, abstractmethod
from typing import Dict, Iterator, List, Optional, Tuple

TRIE_NODES = "trie-nodes"
CODE = "code"
BLOCKS = "blocks"
RECEIPTS = "receipts"
META = "meta"
CAAS_MESSAGES = "caas-messages"


class StoreFailure(RuntimeError):
    pass


class Batch:
    """Ordered list of puts/deletes applied all-or-nothing by ``KvStore.write``."""

    def __init__(self):
        self.ops: List[Tuple[str, bytes, Optional[bytes]]] = []
        self._view: Dict[Tuple[str, bytes], Optional[bytes]] = {}

    def put(self, space: str, key: bytes, value: bytes) -> None:
        self.ops.append((space, key, value))
        self._view[(space, key)] = value

    def delete(self, space: str, key: bytes) -> None:
        self.ops.append((space, key, None))
        self._view[(space, key)] = None

    def pending(self, space: str, key: bytes):
        """(hit, value) for reads that must see this batch before it commits."""
        k = (space, key)
        if k in self._view:
            return True, self._view[k]
        return False, None

    def __len__(self) -> int:
        return len(self.ops)


class KvStore(ABC):
    @abstractmethod
    def get(self, space: str, key: bytes) -> Optional[bytes]:
        ...

    @abstractmethod
    def write(self, batch: Batch) -> None:
        """Apply ``batch`` atomically: afterwards either all or none of it is visible."""

    @abstractmethod
    def iterate(self, space: str, start: bytes = b"", stop: Optional[bytes] = None) -> Iterator[Tuple[bytes, bytes]]:
        """Yield ``(key, value)`` with ``start <= key < stop`` in key order."""

    def put(self, space: str, key: bytes, value: bytes) -> None:
        batch = Batch()
        batch.put(space, key, value)
        self.write(batch)

    def delete(self, space: str, key: bytes) -> None:
        batch = Batch()
        batch.delete(space, key)
        self.write(batch)

    def close(self) -> None:
        pass


class MemoryStore(KvStore):
    def __init__(self):
        self._spaces: Dict[str, Dict[bytes, bytes]] = {}
        self._lock = threading.Lock()

    def get(self, space, key):
        with self._lock:
            return self._spaces.get(space, {}).get(key)

    def write(self, batch):
        with self._lock:
            for space, key, value in batch.ops:
                data = self._spaces.setdefault(space, {})
                if value is None:
                    data.pop(key, None)
                else:
                    data[key] = value

    def iterate(self, space, start=b"", stop=None):
        with self._lock:
            data = self._spaces.get(space, {})
            rows = [(k, data[k]) for k in sorted(k for k in data if k >= start and (stop is None or k < stop))]
        yield from rows


class SqliteStore(KvStore):
    """Durable store; one sqlite transaction per batch."""

    def __init__(self, path: str):
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        self.path = path
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False, isolation_level=None)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._conn.execute(
            "CREATE TABLE IF NOT EXISTS kv (space TEXT NOT NULL, key BLOB NOT NULL, value BLOB NOT NULL,"
            " PRIMARY KEY (space, key)) WITHOUT ROWID"
        )

    @classmethod
    def in_dir(cls, data_dir: str, name: str = "store.sqlite") -> "SqliteStore":
        return cls(os.path.join(data_dir, name))

    def get(self, space, key):
        with self._lock:
            row = self._conn.execute("SELECT value FROM kv WHERE space=? AND key=?", (space, key)).fetchone()
        return row[0] if row else None

    def write(self, batch):
        with self._lock:
            try:
                self._conn.execute("BEGIN")
                for space, key, value in batch.ops:
                    if value is None:
                        self._conn.execute("DELETE FROM kv WHERE space=? AND key=?", (space, key))
                    else:
                        self._conn.execute("INSERT OR REPLACE INTO kv VALUES (?, ?, ?)", (space, key, value))
                self._conn.execute("COMMIT")
            except sqlite3.Error as exc:
                self._conn.execute("ROLLBACK")
                raise StoreFailure(str(exc)) from exc

    def iterate(self, space, start=b"", stop=None):
        with self._lock:
            if stop is None:
                rows = self._conn.execute(
                    "SELECT key, value FROM kv WHERE space=? AND key>=? ORDER BY key", (space, start)).fetchall()
            else:
                rows = self._conn.execute(
                    "SELECT key, value FROM kv WHERE space=? AND key>=? AND key<? ORDER BY key",
                    (space, start, stop)).fetchall()
        yield from rows

    def close(self):
        with self._lock:
            self._conn.close()
