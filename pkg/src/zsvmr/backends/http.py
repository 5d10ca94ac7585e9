"""Client for OpenAI-compatible ``/v1/chat/completions`` and ``/v1/embeddings``."""

from __future__ import annotations

import json
import logging
import os
import time
from typing import Any, Callable, Optional

import httpx

from ..core import Embedding
from ..errors import BackendError, MalformedResponseError, TransportError
from .base import Backend, BackendFingerprint, ChatRequest

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "ZSVMR_API_KEY"


class HTTPBackend(Backend):
    """One model behind an OpenAI-compatible server.

    Transport errors and 5xx replies are retried ``retries - 1`` times with
    exponential backoff (``backoff``, ``2 * backoff``, ...). Other failures
    are raised immediately.
    """

    kind = "http"

    def __init__(
        self,
        base_url: str,
        model_name: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 1.0,
        max_inflight: int = 8,
        sleep: Callable[[float], None] = time.sleep,
        client: Optional[httpx.Client] = None,
    ):
        super().__init__(model_name, max_inflight)
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.retries = max(1, retries)
        self.backoff = backoff
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    @property
    def fingerprint(self) -> BackendFingerprint:
        return BackendFingerprint(self.kind, self.model_name)

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.base_url}{path}"
        last: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning("retrying %s in %.1fs (%s)", url, delay, last)
                self._sleep(delay)
            try:
                resp = self._client.post(url, json=payload)
            except httpx.TransportError as exc:
                last = TransportError(f"POST {url} failed: {exc}")
                continue
            if resp.status_code >= 500:
                last = TransportError(f"POST {url} returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"POST {url} returned {resp.status_code}: {resp.text[:300]}")
            try:
                return resp.json()
            except (json.JSONDecodeError, ValueError):
                raise MalformedResponseError(f"POST {url} returned non-JSON", resp.content) from None
        assert last is not None
        raise last

    def _chat(self, request: ChatRequest) -> str:
        payload = {
            "model": request.model_name or self.model_name,
            "messages": request.wire_messages(),
            "temperature": request.temperature,
        }
        body = self._post("/v1/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponseError("chat response lacks choices[0].message.content", json.dumps(body)) from None
        if not isinstance(content, str):
            raise MalformedResponseError("chat content is not a string", json.dumps(body))
        return content

    def _embed(self, texts: list[str]) -> list[Embedding]:
        body = self._post("/v1/embeddings", {"model": self.model_name, "input": texts})
        try:
            rows = sorted(body["data"], key=lambda r: r.get("index", 0))
            vectors = [r["embedding"] for r in rows]
        except (KeyError, TypeError, AttributeError):
            raise MalformedResponseError("embedding response lacks data[*].embedding", json.dumps(body)) from None
        if len(vectors) != len(texts):
            raise MalformedResponseError(f"expected {len(texts)} embeddings, got {len(vectors)}", json.dumps(body))
        return [Embedding(v) for v in vectors]
