from __future__ import annotations

import hashlib
import json
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Sequence, Union

from ..core import Embedding
from ..errors import DimensionMismatchError, ValidationError

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class TextPart:
    text: str

    def to_wire(self) -> dict[str, Any]:
        return {"type": "text", "text": self.text}


@dataclass(frozen=True)
class ImagePart:
    """An image as a URL; local files are sent as base64 ``data:`` URLs."""

    url: str

    def to_wire(self) -> dict[str, Any]:
        return {"type": "image_url", "image_url": {"url": self.url}}


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r}")
        if not self.parts:
            raise ValidationError("message has no content")

    @property
    def text(self) -> str:
        return "".join(p.text for p in self.parts if isinstance(p, TextPart))

    @property
    def images(self) -> list[str]:
        return [p.url for p in self.parts if isinstance(p, ImagePart)]

    def to_wire(self) -> dict[str, Any]:
        if all(isinstance(p, TextPart) for p in self.parts):
            return {"role": self.role, "content": self.text}
        return {"role": self.role, "content": [p.to_wire() for p in self.parts]}


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float
    model_name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not any(m.role == "user" for m in self.messages):
            raise ValidationError("chat request needs at least one user message")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")

    @classmethod
    def user(cls, *parts: Part, temperature: float, model_name: str = "") -> "ChatRequest":
        return cls((Message("user", parts),), temperature, model_name)

    @property
    def user_text(self) -> str:
        return "\n".join(m.text for m in self.messages if m.role == "user")

    @property
    def images(self) -> list[str]:
        return [url for m in self.messages for url in m.images]

    def wire_messages(self) -> list[dict[str, Any]]:
        return [m.to_wire() for m in self.messages]

    def content_hash(self) -> str:
        payload = json.dumps(
            {"messages": self.wire_messages(), "temperature": self.temperature, "model": self.model_name},
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendFingerprint:
    kind: str
    model_name: str
    prompt_hash: str = ""
    temperature: float | None = None

    def __str__(self) -> str:
        parts = [self.kind, self.model_name or "-"]
        if self.prompt_hash:
            parts.append(self.prompt_hash[:12])
        if self.temperature is not None:
            parts.append(f"t={self.temperature!r}")
        return ":".join(parts)

    def with_prompt(self, template: str, temperature: float | None = None) -> "BackendFingerprint":
        return BackendFingerprint(self.kind, self.model_name, text_hash(template), temperature)


class Backend(ABC):
    """A chat and/or embedding provider.

    ``calls`` counts requests that actually reached the provider; cache hits
    in :class:`~zsvmr.backends.cache.CachedBackend` never increment it.
    """

    kind = "abstract"

    def __init__(self, model_name: str = "", max_inflight: int = 8):
        self.model_name = model_name
        self.calls = 0
        self._count_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_inflight)

    @property
    def fingerprint(self) -> BackendFingerprint:
        return BackendFingerprint(self.kind, self.model_name)

    def _tick(self, n: int = 1) -> None:
        with self._count_lock:
            self.calls += n

    def chat(self, request: ChatRequest) -> str:
        with self._slots:
            self._tick()
            return self._chat(request)

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        texts = list(texts)
        if not texts:
            raise ValidationError("embed() needs at least one text")
        if any(not t or not t.strip() for t in texts):
            raise ValidationError("embed() got an empty text")
        with self._slots:
            self._tick()
            out = self._embed(texts)
        check_uniform(out)
        return out

    @abstractmethod
    def _chat(self, request: ChatRequest) -> str: ...

    @abstractmethod
    def _embed(self, texts: list[str]) -> list[Embedding]: ...


def check_uniform(embeddings: Sequence[Embedding]) -> None:
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise DimensionMismatchError(f"embedding batch has mixed dimensions {sorted(dims)}")

