"""Small test doubles shared across test modules."""

from __future__ import annotations

import numpy as np

from zsvmr.core import Embedding


class TableEmbedder:
    """Looks embeddings up in a fixed text -> vector table and counts calls."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        return [Embedding(self.table[t]) for t in texts]


def unit_at_cosine(c: float) -> list[float]:
    """2-D unit vector whose cosine with (1, 0) is ``c``."""
    return [c, float(np.sqrt(max(0.0, 1.0 - c * c)))]


def random_retrieval_instance(rng: np.random.Generator, max_preds: int = 10, max_gts: int = 4):
    """One query's predictions (start, end, score) and ground-truth spans on a 0-60 s grid."""

    def span():
        s = float(rng.integers(0, 50))
        return s, s + float(rng.integers(1, 15))

    preds = [(*span(), float(rng.integers(0, 6)) / 5) for _ in range(int(rng.integers(0, max_preds + 1)))]
    gts = [span() for _ in range(int(rng.integers(1, max_gts + 1)))]
    return preds, gts


def random_saliency_instance(rng: np.random.Generator, n_clips: int = 10):
    pred = (rng.integers(0, 8, n_clips) / 7).tolist()
    gt = rng.integers(0, 5, size=(n_clips, 3)).tolist()
    return pred, gt


class RecordingBackend:
    """Chat double: remembers every request and answers with ``reply(request)``."""

    def __init__(self, reply=lambda request: "a caption"):
        from zsvmr.backends import SyntheticBackend

        self._fp = SyntheticBackend(canned_reply="recording").fingerprint
        self.reply = reply
        self.requests = []
        self.calls = 0

    @property
    def fingerprint(self):
        return self._fp

    def chat(self, request):
        self.calls += 1
        self.requests.append(request)
        return self.reply(request)
