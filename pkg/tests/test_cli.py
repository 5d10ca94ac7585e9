import json

import pytest

from zsvmr.backends import SyntheticBackend
from zsvmr.cli import (
    DEBIASED,
    ERRORS,
    FRAME_CAPTIONS,
    PREDICTIONS,
    build_backends,
    build_parser,
    cmd_caption,
    cmd_debias,
    cmd_evaluate,
    cmd_retrieve,
    cmd_sweep,
    main,
    parse_grid,
    read_jsonl,
    resolve_config,
)
from zsvmr.core import PipelineConfig
from zsvmr.datasets import Dataset, generate_synthetic
from zsvmr.errors import ValidationError
from zsvmr.pipeline import Backends, Retriever


@pytest.fixture
def ds():
    return generate_synthetic(seed=5, n_videos=4)


def perfect(ds):
    return [{"qid": q.qid, "spans": [[s, e, 1.0 - 0.1 * k] for k, (s, e) in enumerate(q.gt_spans)]} for q in ds.queries]


class TestDebias:
    def test_empty_dataset_is_noop(self, tmp_path):
        empty = Dataset("synthetic", {}, [])
        assert cmd_debias(empty, PipelineConfig(), Backends.single(SyntheticBackend()), tmp_path) == 0
        assert list(read_jsonl(tmp_path / DEBIASED)) == []

    def test_full_run_and_resume(self, ds, tmp_path):
        backend = SyntheticBackend(ds.plans)
        assert cmd_debias(ds, PipelineConfig(), Backends.single(backend), tmp_path) == 0
        recs = list(read_jsonl(tmp_path / DEBIASED))
        assert [r["qid"] for r in recs] == [q.qid for q in ds.queries]
        assert all(len(r["rewrites"]) == 3 for r in recs)
        calls = backend.calls
        assert cmd_debias(ds, PipelineConfig(), Backends.single(backend), tmp_path) == 0
        assert backend.calls == calls
        assert len(list(read_jsonl(tmp_path / DEBIASED))) == len(ds.queries)

    def test_partial_resume_only_missing(self, ds, tmp_path):
        backend = SyntheticBackend(ds.plans)
        first = Dataset(ds.name, ds.videos, ds.queries[:2], plans=ds.plans)
        cmd_debias(first, PipelineConfig(), Backends.single(backend), tmp_path)
        backend.calls = 0
        cmd_debias(ds, PipelineConfig(), Backends.single(backend), tmp_path)
        assert backend.calls == len(ds.queries) - 2

    def test_failures_recorded(self, ds, tmp_path):
        class Broken(SyntheticBackend):
            def _chat(self, request):
                raise RuntimeError("boom")

        assert cmd_debias(ds, PipelineConfig(), Backends.single(Broken()), tmp_path) == len(ds.queries)
        errors = list(read_jsonl(tmp_path / ERRORS))
        assert {e["id"] for e in errors} == {q.qid for q in ds.queries}
        assert "boom" in errors[0]["error"]


class TestRetrieve:
    def test_single_query_smoke(self, ds, tmp_path):
        one = Dataset(ds.name, ds.videos, ds.queries[:1], plans=ds.plans)
        assert cmd_retrieve(one, PipelineConfig(), Backends.single(SyntheticBackend(ds.plans)), tmp_path) == 0
        (rec,) = read_jsonl(tmp_path / PREDICTIONS)
        assert rec["qid"] == ds.queries[0].qid and rec["spans"]
        scores = [s[2] for s in rec["spans"]]
        assert scores == sorted(scores, reverse=True)
        manifest = json.loads((tmp_path / "predictions.manifest.json").read_text())
        assert set(manifest) >= {"config_hash", "backends", "dataset"}

    def test_warm_cache_byte_identical(self, ds, tmp_path):
        cache = tmp_path / "cache"
        b1 = build_backends({}, ds, cache)
        cmd_retrieve(ds, PipelineConfig(), b1, tmp_path / "a", with_saliency=True)
        b2 = build_backends({}, ds, cache)
        cmd_retrieve(ds, PipelineConfig(), b2, tmp_path / "b", with_saliency=True)
        assert (tmp_path / "a" / PREDICTIONS).read_bytes() == (tmp_path / "b" / PREDICTIONS).read_bytes()
        assert b2.total_calls() == 0
        for name in ("predictions.manifest.json",):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_reuses_intermediates(self, ds, tmp_path):
        backend = SyntheticBackend(ds.plans)
        b = Backends.single(backend)
        cmd_debias(ds, PipelineConfig(), b, tmp_path)
        cmd_caption(ds, PipelineConfig(), b, tmp_path)
        assert len(list(read_jsonl(tmp_path / FRAME_CAPTIONS))) == len(ds.videos)
        backend.calls = 0
        cmd_retrieve(ds, PipelineConfig(), b, tmp_path)
        # only span captions and embeddings remain: no debias or frame caption requests
        frames = sum(v.n_frames for v in ds.videos.values())
        assert backend.calls < frames

    def test_resume_appends_missing_only(self, ds, tmp_path):
        backend = SyntheticBackend(ds.plans)
        first = Dataset(ds.name, ds.videos, ds.queries[:1], plans=ds.plans)
        cmd_retrieve(first, PipelineConfig(), Backends.single(backend), tmp_path)
        cmd_retrieve(ds, PipelineConfig(), Backends.single(backend), tmp_path)
        assert [r["qid"] for r in read_jsonl(tmp_path / PREDICTIONS)] == [q.qid for q in ds.queries]


class TestEvaluate:
    def test_perfect(self, ds):
        report = cmd_evaluate(perfect(ds), ds)
        assert set(report.flat().values()) == {1.0}

    def test_empty_predictions(self, ds):
        report = cmd_evaluate([{"qid": q.qid, "spans": []} for q in ds.queries], ds)
        assert set(report.flat().values()) == {0.0}

    def test_qid_mismatch_lists_ids(self, ds):
        preds = perfect(ds)[1:] + [{"qid": "ghost", "spans": []}]
        with pytest.raises(ValidationError) as info:
            cmd_evaluate(preds, ds)
        assert ds.queries[0].qid in str(info.value) and "ghost" in str(info.value)

    def test_categories_present(self, ds):
        report = cmd_evaluate(perfect(ds), ds)
        assert sum(report.categories[c].n_queries for c in ("biased", "common") if c in report.categories) == len(ds.queries)


class TestSweep:
    def test_one_point_equals_retrieve_then_evaluate(self, ds, tmp_path):
        rows = cmd_sweep(ds, PipelineConfig(), Backends.single(SyntheticBackend(ds.plans)), {"kappa": [7]})
        cmd_retrieve(ds, PipelineConfig(), Backends.single(SyntheticBackend(ds.plans)), tmp_path)
        direct = cmd_evaluate(read_jsonl(tmp_path / PREDICTIONS), ds)
        (params, report), = rows
        assert params == {"kappa": 7}
        # the sweep additionally records saliency and candidates; the shared metrics must agree
        assert (report.r1, report.miou, report.map, report.map_avg) == (direct.r1, direct.miou, direct.map, direct.map_avg)

    def test_frame_captions_fetched_once(self, ds):
        calls = []

        class Counting(SyntheticBackend):
            def _chat(self, request):
                calls.append(request.user_text.split("]")[0])
                return super()._chat(request)

        cmd_sweep(ds, PipelineConfig(), Backends.single(Counting(ds.plans)), {"kappa": [5, 7], "lambda": [0.0, 0.2]})
        frames = sum(v.n_frames for v in ds.videos.values())
        assert calls.count("[image caption") == frames

    def test_lambda_only_recombines(self, ds):
        backend = SyntheticBackend(ds.plans)
        for q in ds.queries:
            v = ds.videos[q.video_id]
            r0 = Retriever(Backends.single(backend), PipelineConfig(lam=0.0, sigma=1.0)).run(v, q)
            r2 = Retriever(Backends.single(backend), PipelineConfig(lam=0.2, sigma=1.0)).run(v, q)
            assert r0.candidates == r2.candidates
            by_span = {p.span: p for p in r0.predictions}
            for p in r2.predictions:
                assert p.s_span == by_span[p.span].s_span
                assert p.score == pytest.approx(0.8 * p.s_span + 0.2 * p.e_norm, abs=1e-12)

    def test_parse_grid(self):
        assert parse_grid(["kappa=5,7", "lambda=0,0.2"]) == {"kappa": [5, 7], "lambda": [0.0, 0.2]}
        with pytest.raises(ValidationError):
            parse_grid(["gamma=1"])


class TestConfig:
    def test_precedence_flags_over_file_over_defaults(self, tmp_path):
        args = build_parser().parse_args(
            ["retrieve", "--dataset", "d", "--format", "qvhighlights", "--out", "o", "--kappa", "9", "--fps", "2"]
        )
        file_cfg = {"pipeline": {"kappa": 4, "tau": 3, "temperatures": {"debias": 0.5}}}
        c = resolve_config(args, file_cfg)
        assert (c.kappa, c.tau, c.eta, c.temperatures.debias) == (9, 3, 10, 0.5)
        assert c.fps_for("qvhighlights") == 2.0 and c.fps_for("charades_sta") == 1.0

    def test_unknown_file_key(self):
        args = build_parser().parse_args(["retrieve", "--dataset", "d", "--format", "synthetic", "--out", "o"])
        with pytest.raises(ValidationError):
            resolve_config(args, {"pipeline": {"kapa": 3}})

    def test_roles_share_identical_backends(self, ds, tmp_path):
        b = build_backends({"backends": {"default": {"kind": "synthetic"}}}, ds, None)
        assert b.debias is b.embed
        b = build_backends(
            {"backends": {"default": {"kind": "synthetic"}, "embed": {"kind": "http", "base_url": "http://x"}}}, ds, None
        )
        assert b.debias is not b.embed and b.embed.base_url == "http://x"


class TestMain:
    def test_synth_retrieve_evaluate(self, tmp_path, capsys):
        data, out = tmp_path / "data", tmp_path / "out"
        assert main(["synth", "--out", str(data), "--n-videos", "3", "--seed", "1"]) == 0
        common = ["--dataset", str(data), "--format", "synthetic"]
        assert main(["retrieve", *common, "--out", str(out), "--saliency", "--candidates"]) == 0
        report = tmp_path / "report.json"
        code = main(["evaluate", *common, "--predictions", str(out / PREDICTIONS), "--report", str(report)])
        assert code == 0
        assert "mAP@avg" in capsys.readouterr().out
        d = json.loads(report.read_text())
        assert d["n_queries"] == 3 and "oracle" in d and "hit_at_1" in d

    def test_config_file(self, tmp_path):
        data, out = tmp_path / "data", tmp_path / "out"
        main(["synth", "--out", str(data), "--n-videos", "2"])
        cfg = tmp_path / "run.toml"
        cfg.write_text('[pipeline]\nn_d = 2\n\n[backends.default]\nkind = "synthetic"\n')
        assert main(["debias", "--dataset", str(data), "--format", "synthetic", "--out", str(out), "--config", str(cfg)]) == 0
        assert all(len(r["rewrites"]) == 2 for r in read_jsonl(out / DEBIASED))

    def test_sweep_command(self, tmp_path, capsys):
        data, out = tmp_path / "data", tmp_path / "out"
        main(["synth", "--out", str(data), "--n-videos", "2"])
        code = main(["sweep", "--dataset", str(data), "--format", "synthetic", "--out", str(out), "--grid", "tau=3,5"])
        assert code == 0
        assert len(list(read_jsonl(out / "sweep.jsonl"))) == 2
        assert "R1@0.5" in capsys.readouterr().out

    def test_bad_dataset_exit_code(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("Y1BWP 1 2 no separator\n")
        code = main(["retrieve", "--dataset", str(bad), "--format", "charades_sta", "--frames-root", str(tmp_path), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_per_query_failure_exit_code(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('[backends.default]\nkind = "http"\nbase_url = "http://127.0.0.1:9"\nretries = 1\ntimeout = 1\n')
        data = tmp_path / "data"
        main(["synth", "--out", str(data), "--n-videos", "1"])
        code = main(["debias", "--dataset", str(data), "--format", "synthetic", "--out", str(tmp_path / "o"), "--config", str(cfg)])
        assert code == 1
