"""Acceptance criteria, one test per criterion.

Each test prints (and records for the terminal summary) a single line of
the form ``criterion N: PASS|FAIL <title> (<elapsed>)``.
"""

from __future__ import annotations

import contextlib
import socket
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from golden import Y1BWP_ROW, Y1BWP_SPANS
from helpers import random_retrieval_instance, random_saliency_instance
from zsvmr.cli import PREDICTIONS, build_backends, cmd_evaluate, cmd_retrieve, read_jsonl
from zsvmr.core import CandidateSpan, FrameScoreMatrix, PipelineConfig, ScoredSpan, Temperatures
from zsvmr.datasets import (
    dump_activitynet,
    dump_charades_sta,
    dump_qvhighlights,
    generate_synthetic,
    load_activitynet,
    load_charades_sta,
    load_qvhighlights,
    parse_activitynet,
    parse_charades_sta,
    parse_qvhighlights,
)
from zsvmr.errors import DatasetFormatError
from zsvmr.metrics import MAP_GRID, map_at, map_avg, mean_hit_at_1, miou, r1_at, vhd_map
from zsvmr.scoring import combined_score
from zsvmr.selection import nms, temporal_iou
from zsvmr.span_gen import adaptive_threshold, generate, segment_row

DATA = Path(__file__).parent / "data"


@contextlib.contextmanager
def criterion(number: int, title: str, budget_s: float | None = None):
    """Record PASS/FAIL for one criterion; also fails when over ``budget_s``."""
    t0 = time.perf_counter()
    status, note = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - t0
        if budget_s is not None and elapsed >= budget_s:
            note = f" over budget {budget_s:g}s"
            raise AssertionError(f"criterion {number} took {elapsed:.3f}s, budget {budget_s:g}s")
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - t0
        line = f"criterion {number}: {status} {title} ({elapsed * 1000:.1f} ms){note}"
        ACCEPTANCE_LINES.append(line)
        print(line)


def spans_of(cands):
    return [(c.start_s, c.end_s) for c in cands]


def test_criterion_1_golden_span_generator():
    cfg = PipelineConfig()
    scores = FrameScoreMatrix([Y1BWP_ROW])

    def once():
        gamma = adaptive_threshold(Y1BWP_ROW, cfg.eta, cfg.kappa)
        return gamma, generate(scores, cfg, fps=1.0, duration_s=33.0)

    once()  # compile the kernels outside the timed region
    with criterion(1, "golden 33-moment span generator: gamma=0.7, spans {[9,12],[20,26]}"):
        timings = []
        for _ in range(5):
            t0 = time.perf_counter()
            gamma, spans = once()
            timings.append(time.perf_counter() - t0)
        assert gamma == 0.7
        assert spans_of(spans) == Y1BWP_SPANS
        median = statistics.median(timings)
        print(f"  median runtime {median * 1e3:.3f} ms over 5 runs")
        assert median < 1e-3


def test_criterion_2_span_generator_oracle():
    rng = np.random.default_rng(2024)
    segment_row([0.0, 1.0], 0.5, 5, 1.0)  # warm-up
    with criterion(2, "1000 random rows: threshold + segmentation == oracle; shift/scale invariant", 5.0):
        for _ in range(1000):
            n = int(rng.integers(5, 201))
            row = rng.uniform(-1, 1, n)
            gamma = adaptive_threshold(row, 10, 7)
            assert gamma == oracles.threshold(row.tolist(), 10, 7)
            got = spans_of(segment_row(row, gamma, 5, 1.0))
            assert got == oracles.spans_for_row(row.tolist(), 10, 7, 5, 1.0)
            shift, scale = rng.uniform(-3, 3), rng.uniform(0.05, 20)
            moved = row * scale + shift
            assert spans_of(segment_row(moved, adaptive_threshold(moved, 10, 7), 5, 1.0)) == got


def test_criterion_3_metrics_oracle():
    rng = np.random.default_rng(7)
    with criterion(3, "500 random instances: R1, mIoU, mAP grid, mAP@avg, HIT@1, VHD mAP == oracle", 10.0):
        for _ in range(500):
            k = int(rng.integers(1, 6))
            preds, gts = zip(*(random_retrieval_instance(rng, 10, 4) for _ in range(k)))
            for n in (0.3, 0.5, 0.7):
                assert abs(r1_at(preds, gts, n) - oracles.r1(preds, gts, n)) <= 1e-9
            assert abs(miou(preds, gts) - oracles.miou(preds, gts)) <= 1e-9
            grid = [oracles.mean_ap(preds, gts, m) for m in MAP_GRID]
            for m, want in zip(MAP_GRID, grid):
                assert abs(map_at(preds, gts, m) - want) <= 1e-9
            assert abs(map_avg(preds, gts) - sum(grid) / len(grid)) <= 1e-9
            sal, gsal = zip(*(random_saliency_instance(rng) for _ in range(k)))
            assert abs(mean_hit_at_1(sal, gsal) - np.mean([oracles.hit1(p, g) for p, g in zip(sal, gsal)])) <= 1e-9
            aps = [a for a in (oracles.saliency_ap(p, g) for p, g in zip(sal, gsal)) if a is not None]
            assert abs(vhd_map(sal, gsal) - (np.mean(aps) if aps else 0.0)) <= 1e-9


def test_criterion_4_nms_properties():
    rng = np.random.default_rng(4)
    nms([ScoredSpan(CandidateSpan(0, 1), 0.0, 0.0, 0.0)] * 2, 0.9)  # warm-up
    with criterion(4, "1000 random span sets: IoU <= sigma, idempotent, nonincreasing, == oracle", 5.0):
        for _ in range(1000):
            n = int(rng.integers(1, 21))
            sigma = float(rng.choice([0.3, 0.5, 0.7, 0.9, 1.0]))
            starts = rng.integers(0, 60, n).astype(float)
            ends = starts + rng.integers(1, 25, n)
            scores = rng.integers(0, 10, n) / 9
            spans = [ScoredSpan(CandidateSpan(s, e), sc, 0.0, sc) for s, e, sc in zip(starts, ends, scores)]
            out = nms(spans, sigma)
            kept = [s.span for s in out]
            assert all(temporal_iou(a, b) <= sigma for i, a in enumerate(kept) for b in kept[i + 1 :])
            assert nms(out, sigma) == out
            assert all(a.score >= b.score for a, b in zip(out, out[1:]))
            triples = [(s.start_s, s.end_s, s.score) for s in out]
            assert triples == oracles.greedy_nms([(s.start_s, s.end_s, s.score) for s in spans], sigma)


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


def test_criterion_5_end_to_end_synthetic(tmp_path, no_network):
    ds = generate_synthetic(seed=0, n_videos=50, duration_range=(60, 120), spans_per_video=(1, 2))
    cfg = PipelineConfig()
    assert (cfg.n_d, cfg.eta, cfg.kappa, cfg.tau, cfg.lam, cfg.sigma) == (3, 10, 7, 5, 0.2, 0.9)
    with criterion(5, "50-video synthetic run: R1@0.5 >= 0.90, mIoU >= 0.70, oracle >= pipeline", 30.0):
        backends = build_backends({}, ds, cache_dir=None)
        assert cmd_retrieve(ds, cfg, backends, tmp_path, with_candidates=True) == 0
        report = cmd_evaluate(read_jsonl(tmp_path / PREDICTIONS), ds)
        r1, mi, oracle_r1 = report.r1[0.5], report.miou, report.oracle["r1@0.5"]
        print(f"  R1@0.5={r1:.3f} mIoU={mi:.3f} oracle R1@0.5={oracle_r1:.3f} backend calls={backends.total_calls()}")
        assert r1 >= 0.90
        assert mi >= 0.70
        assert oracle_r1 >= r1


def test_criterion_6_combined_score_grid():
    with criterion(6, "combined score == (1-lambda)*S_span + lambda*E_span on a 100-case grid"):
        cases = 0
        for lam in np.linspace(0, 1, 5):
            for s in np.linspace(-1, 1, 5):
                for length in (1.0, 10.0, 30.0, 100.0):
                    span, duration = CandidateSpan(0.0, length), 100.0
                    got = combined_score(float(s), span, duration, float(lam))
                    assert abs(got - ((1 - lam) * s + lam * length / duration)) <= 1e-12
                    if lam == 0:
                        assert got == s
                    cases += 1
        assert cases == 100


def test_criterion_7_warm_cache_determinism(tmp_path):
    ds = generate_synthetic(seed=11, n_videos=8)
    cache = tmp_path / "cache"
    with criterion(7, "warm-cache rerun: byte-identical predictions, zero backend calls"):
        cold = build_backends({}, ds, cache)
        cmd_retrieve(ds, PipelineConfig(), cold, tmp_path / "run1", with_saliency=True)
        assert cold.total_calls() > 0
        warm = build_backends({}, ds, cache)
        cmd_retrieve(ds, PipelineConfig(), warm, tmp_path / "run2", with_saliency=True)
        first = (tmp_path / "run1" / PREDICTIONS).read_bytes()
        assert first and first == (tmp_path / "run2" / PREDICTIONS).read_bytes()
        assert warm.total_calls() == 0


def test_criterion_8_config_defaults():
    with criterion(8, "PipelineConfig() defaults"):
        c = PipelineConfig()
        assert c.n_d == 3 and c.kappa == 7 and c.tau == 5 and c.eta == 10
        assert c.lam == 0.2 and c.sigma == 0.9
        assert c.temperatures == Temperatures(debias=0.3, frame_caption=0.2, span_caption=0.2)
        assert c.fps_for("charades_sta") == 1.0
        assert c.fps_for("activitynet") == 1.0
        assert c.fps_for("qvhighlights") == 0.5


def test_criterion_9_dataset_loaders():
    with criterion(9, "loaders: round-trip + strict errors for all three formats"):
        charades = load_charades_sta(DATA / "charades_sta.txt")
        assert any(q.video_id == "Y1BWP" for _, q in charades)
        assert parse_charades_sta(dump_charades_sta(charades)) == charades
        qvh = load_qvhighlights(DATA / "qvhighlights.jsonl")
        assert parse_qvhighlights(dump_qvhighlights(qvh)) == qvh
        anet = load_activitynet(DATA / "activitynet.json")
        assert parse_activitynet(dump_activitynet(anet)) == anet

        with pytest.raises(DatasetFormatError) as e:
            load_charades_sta(DATA / "charades_sta_bad.txt")
        assert e.value.line == 2
        with pytest.raises(DatasetFormatError, match="'duration'") as e:
            load_qvhighlights(DATA / "qvhighlights_bad.jsonl")
        assert e.value.line == 2
        with pytest.raises(DatasetFormatError, match="timestamps but"):
            load_activitynet(DATA / "activitynet_bad.json")
