"""Content-addressed disk cache for chat replies and embeddings.

One JSON file per entry, named by the hex SHA-256 of the entry key. Writes
go to a temporary file in the same directory and are published with
``os.replace``, so concurrent readers never observe a partial entry.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from pathlib import Path
from typing import Any, Optional, Sequence

from ..core import Embedding
from .base import Backend, ChatRequest, check_uniform

logger = logging.getLogger(__name__)


def cache_key(fingerprint: str, op: str, content: str) -> str:
    raw = json.dumps([fingerprint, op, content], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


class DiskCache:
    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> Optional[Any]:
        path = self.path_for(key)
        try:
            with open(path, encoding="utf-8") as f:
                entry = json.load(f)
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        except json.JSONDecodeError:
            # only possible if something outside this class wrote the file
            logger.warning("ignoring corrupt cache entry %s", path)
            with self._lock:
                self.misses += 1
            return None
        with self._lock:
            self.hits += 1
        return entry["value"]

    def put(self, key: str, fingerprint: str, value: Any) -> None:
        path = self.path_for(key)
        if path.exists():
            return  # entries are immutable once written
        entry = {"key": key, "fingerprint": fingerprint, "value": value, "created_at": time.time()}
        fd, tmp = tempfile.mkstemp(prefix=f".{key[:16]}.", suffix=".tmp", dir=self.root)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f, ensure_ascii=False)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json"))


class CachedBackend:
    """Wraps a backend so that repeated requests are answered from ``cache``.

    Also keeps an in-process memo so a sweep does not re-read the same files.
    """

    def __init__(self, inner: Backend, cache: DiskCache):
        self.inner = inner
        self.cache = cache
        self._memo: dict[str, Any] = {}
        self._memo_lock = threading.Lock()

    @property
    def fingerprint(self):
        return self.inner.fingerprint

    @property
    def calls(self) -> int:
        return self.inner.calls

    def _lookup(self, key: str) -> Optional[Any]:
        with self._memo_lock:
            if key in self._memo:
                return self._memo[key]
        value = self.cache.get(key)
        if value is not None:
            with self._memo_lock:
                self._memo[key] = value
        return value

    def _store(self, key: str, value: Any) -> None:
        self.cache.put(key, str(self.inner.fingerprint), value)
        with self._memo_lock:
            self._memo[key] = value

    def chat(self, request: ChatRequest) -> str:
        key = cache_key(str(self.inner.fingerprint), "chat", request.content_hash())
        hit = self._lookup(key)
        if hit is not None:
            return hit
        text = self.inner.chat(request)
        self._store(key, text)
        return text

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        texts = list(texts)
        fp = str(self.inner.fingerprint)
        keys = [cache_key(fp, "embed", t) for t in texts]
        found: dict[str, list[float]] = {}
        for k in dict.fromkeys(keys):
            hit = self._lookup(k)
            if hit is not None:
                found[k] = hit
        missing = list(dict.fromkeys(t for t, k in zip(texts, keys) if k not in found))
        if missing or not texts:
            fresh = self.inner.embed(missing)
            for t, e in zip(missing, fresh):
                k = cache_key(fp, "embed", t)
                vec = e.values.tolist()
                self._store(k, vec)
                found[k] = vec
        out = [Embedding(found[k]) for k in keys]
        check_uniform(out)
        return out
