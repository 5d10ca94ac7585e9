"""Query rewriting: prompt construction and response parsing."""

from __future__ import annotations

import re

from .backends.base import ChatRequest, TextPart
from .core import DebiasedQuerySet, PipelineConfig
from .errors import ValidationError
from .prompts import DEBIAS_TEMPLATE, count_word

_MARKER = re.compile(r"^\s*(?:(?:\(?\d+[.):\]]|[-*•–—>]|#+)\s*)+")
_QUOTES = "\"'`“”‘’"
_PREAMBLE = re.compile(r"^(here are|sure|rewrites?|rewritten sentences?|corrected sentence)\b.*:$", re.IGNORECASE)


def build_debias_prompt(raw_query: str, n_d: int = 3, temperature: float = 0.3, model_name: str = "") -> ChatRequest:
    if not raw_query or not raw_query.strip():
        raise ValidationError("cannot debias an empty query")
    text = DEBIAS_TEMPLATE.replace("<Count>", count_word(n_d)).replace("<Query>", raw_query)
    return ChatRequest.user(TextPart(text), temperature=temperature, model_name=model_name)


def _clean(line: str) -> str:
    line = _MARKER.sub("", line.strip()).strip()
    while len(line) >= 2 and line[0] in _QUOTES and line[-1] in _QUOTES:
        line = line[1:-1].strip()
    return line


def parse_debias_response(text: str, n_d: int, raw_query: str, qid: str = "") -> DebiasedQuerySet:
    """Split a model reply into at most ``n_d`` distinct rewrites.

    Never fails: a reply with no usable line falls back to the raw query.
    """
    if n_d < 1:
        raise ValidationError("n_d must be >= 1")
    seen: list[str] = []
    for line in (text or "").splitlines():
        cleaned = _clean(line)
        if not cleaned or _PREAMBLE.match(cleaned) or cleaned in seen:
            continue
        seen.append(cleaned)
    if not seen:
        return DebiasedQuerySet(qid, raw_query, (raw_query,), fallback_used=True)
    return DebiasedQuerySet(qid, raw_query, tuple(seen[:n_d]))


def debias_query(raw_query: str, backend, config: PipelineConfig, qid: str = "") -> DebiasedQuerySet:
    request = build_debias_prompt(raw_query, config.n_d, config.temperatures.debias)
    return parse_debias_response(backend.chat(request), config.n_d, raw_query, qid)
