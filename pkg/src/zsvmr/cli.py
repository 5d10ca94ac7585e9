"""Command-line entry point.

Subcommands: ``synth``, ``debias``, ``caption``, ``retrieve``, ``evaluate``
and ``sweep``. Settings come from CLI flags, then the ``--config`` TOML
file, then built-in defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import kernels
from .backends import CachedBackend, DiskCache, HTTPBackend, SyntheticBackend
from .core import Caption, DebiasedQuerySet, PipelineConfig, QueryRecord
from .datasets import FORMATS, Dataset, generate_synthetic, load_dataset, queries_by_id, save_synthetic
from .errors import ValidationError, ZsvmrError
from .metrics import MAP_GRID, R1_THRESHOLDS, EvalReport, categorize_queries, evaluate
from .pipeline import ROLES, Backends, Memo, Retriever

logger = logging.getLogger("zsvmr")

PREDICTIONS = "predictions.jsonl"
DEBIASED = "debiased.jsonl"
FRAME_CAPTIONS = "frame_captions.jsonl"
ERRORS = "errors.jsonl"


# -----------------------------
# JSONL helpers
# -----------------------------


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    if not path.exists():
        return
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield json.loads(line)


def done_keys(path: Path, key: str) -> set[str]:
    return {str(r[key]) for r in read_jsonl(path)}


def sha256_json(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")).hexdigest()


def dataset_hash(ds: Dataset) -> str:
    return sha256_json(
        {
            "queries": [q.to_dict() for q in ds.queries],
            "videos": [ds.videos[k].to_dict() for k in sorted(ds.videos)],
        }
    )


def write_manifest(path: Path, command: str, config: PipelineConfig, backends: Optional[Backends], ds: Dataset) -> None:
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "config_hash": sha256_json(config.to_dict()),
        "backends": backends.fingerprints() if backends else {},
        "dataset": {"name": ds.name, "hash": dataset_hash(ds), "n_queries": len(ds.queries)},
        "kernels": kernels.BACKEND,
    }
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# -----------------------------
# Config and backends
# -----------------------------

_FLAG_KEYS = {
    "n_d": "n_d",
    "eta": "eta",
    "kappa": "kappa",
    "tau": "tau",
    "lam": "lambda",
    "sigma": "sigma",
    "max_span_frames": "max_span_frames",
    "concurrency": "concurrency",
}


def load_config_file(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    with open(path, "rb") as f:
        return tomllib.load(f)


def resolve_config(args: argparse.Namespace, file_cfg: dict[str, Any]) -> PipelineConfig:
    raw = dict(file_cfg.get("pipeline", {}))
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            raw[key] = value
    temps = dict(raw.get("temperatures", {}))
    for role in ("debias", "frame_caption", "span_caption"):
        value = getattr(args, f"temp_{role}", None)
        if value is not None:
            temps[role] = value
    raw["temperatures"] = temps
    fps = dict(raw.get("fps", {}))
    if getattr(args, "fps", None) is not None and getattr(args, "format", None):
        fps[args.format] = args.fps
    raw["fps"] = fps
    return PipelineConfig.from_dict(raw)


def _make_backend(settings: dict[str, Any], ds: Optional[Dataset], concurrency: int):
    kind = settings.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticBackend(ds.plans if ds else {}, canned_reply=settings.get("canned_reply"), max_inflight=concurrency)
    if kind == "http":
        return HTTPBackend(
            base_url=settings["base_url"],
            model_name=settings.get("model", ""),
            api_key_env=settings.get("api_key_env", "ZSVMR_API_KEY"),
            timeout=float(settings.get("timeout", 120.0)),
            retries=int(settings.get("retries", 3)),
            backoff=float(settings.get("backoff", 1.0)),
            max_inflight=int(settings.get("max_inflight", concurrency)),
        )
    raise ValidationError(f"unknown backend kind {kind!r}")


def build_backends(
    file_cfg: dict[str, Any],
    ds: Optional[Dataset],
    cache_dir: Optional[Path],
    concurrency: int = 8,
) -> Backends:
    """One backend per role from the ``[backends.*]`` tables.

    Roles without their own table use ``[backends.default]``; with no tables
    at all the synthetic backend is used. Roles with identical settings
    share one instance.
    """
    tables = file_cfg.get("backends", {})
    default = tables.get("default", {"kind": "synthetic"})
    cache = DiskCache(cache_dir) if cache_dir else None
    made: dict[str, Any] = {}
    chosen = {}
    for role in ROLES:
        settings = {**default, **tables.get(role, {})}
        key = sha256_json(settings)
        if key not in made:
            backend = _make_backend(settings, ds, concurrency)
            made[key] = CachedBackend(backend, cache) if cache is not None else backend
        chosen[role] = made[key]
    return Backends(**chosen)


# -----------------------------
# Programmatic API
# -----------------------------


def _ordered_parallel(fn: Callable[[Any], Any], items: Sequence[Any], workers: int) -> Iterator[tuple[Any, Any]]:
    """Yield ``(item, result_or_exception)`` in input order."""

    def safe(item):
        try:
            return fn(item)
        except Exception as exc:  # isolated per item, reported by the caller
            return exc

    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from zip(items, pool.map(safe, items))


def _append(path: Path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "a", encoding="utf-8") as f:
        for rec in records:
            f.write(dumps(rec) + "\n")
            f.flush()


def _record_error(out_dir: Path, stage: str, key: str, exc: BaseException) -> None:
    logger.error("%s failed for %s: %s", stage, key, exc)
    _append(out_dir / ERRORS, [{"stage": stage, "id": key, "error": f"{type(exc).__name__}: {exc}"}])


def cmd_debias(ds: Dataset, config: PipelineConfig, backends: Backends, out_dir: Path) -> int:
    """Write one debiased query set per query; qids already on disk are skipped.

    Returns the number of failed queries.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / DEBIASED
    done = done_keys(path, "qid")
    todo = [q for q in ds.queries if q.qid not in done]
    retriever = Retriever(backends, config)
    failures = 0
    with open(path, "a", encoding="utf-8") as f:
        for q, res in _ordered_parallel(retriever.debias, todo, config.concurrency):
            if isinstance(res, BaseException):
                failures += 1
                _record_error(out_dir, "debias", q.qid, res)
                continue
            f.write(dumps(res.to_dict()) + "\n")
    logger.info("debias: %d written, %d skipped, %d failed", len(todo) - failures, len(done), failures)
    return failures


def cmd_caption(ds: Dataset, config: PipelineConfig, backends: Backends, out_dir: Path, frames_root: Optional[Path] = None) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / FRAME_CAPTIONS
    done = done_keys(path, "video_id")
    needed = sorted({q.video_id for q in ds.runnable()} - done)
    retriever = Retriever(backends, config, frames_root)
    failures = 0
    with open(path, "a", encoding="utf-8") as f:
        # videos run one at a time; their frames are captioned concurrently
        for vid in needed:
            try:
                caps = retriever.frame_captions(ds.videos[vid])
            except Exception as exc:
                failures += 1
                _record_error(out_dir, "caption", vid, exc)
                continue
            f.write(dumps({"video_id": vid, "captions": [c.to_dict() for c in caps]}) + "\n")
    return failures


def load_intermediates(out_dir: Path, memo: Memo) -> dict[str, DebiasedQuerySet]:
    for rec in read_jsonl(out_dir / FRAME_CAPTIONS):
        memo.frame_captions[rec["video_id"]] = [Caption.from_dict(c) for c in rec["captions"]]
    return {str(r["qid"]): DebiasedQuerySet.from_dict(r) for r in read_jsonl(out_dir / DEBIASED)}


def cmd_retrieve(
    ds: Dataset,
    config: PipelineConfig,
    backends: Backends,
    out_dir: Path,
    frames_root: Optional[Path] = None,
    with_saliency: bool = False,
    with_candidates: bool = False,
    reuse_intermediates: bool = True,
) -> int:
    """Run the full pipeline and append ``{qid, spans}`` records in dataset order.

    Debiased queries and frame captions already in ``out_dir`` are reused.
    Returns the number of failed queries.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / PREDICTIONS
    memo = Memo()
    debiased = load_intermediates(out_dir, memo) if reuse_intermediates else {}
    retriever = Retriever(backends, config, frames_root, memo)
    done = done_keys(path, "qid")
    todo = [q for q in ds.runnable() if q.qid not in done]
    for vid in ds.missing_frames:
        logger.warning("skipping queries of %s: no frames", vid)

    def work(q: QueryRecord):
        return retriever.run(ds.videos[q.video_id], q, debiased.get(q.qid))

    failures = 0
    with open(path, "a", encoding="utf-8") as f:
        for q, res in _ordered_parallel(work, todo, config.concurrency):
            if isinstance(res, BaseException):
                failures += 1
                _record_error(out_dir, "retrieve", q.qid, res)
                continue
            f.write(dumps(res.to_record(with_saliency, with_candidates)) + "\n")
    write_manifest(out_dir / "predictions.manifest.json", "retrieve", config, backends, ds)
    logger.info("retrieve: %d queries, %d failed, %d backend calls", len(todo), failures, backends.total_calls())
    return failures


def _eval_inputs(ds: Dataset, preds: dict[str, dict[str, Any]], qids: Sequence[str]) -> dict[str, Any]:
    """Keyword arguments for :func:`zsvmr.metrics.evaluate`."""
    qmap = queries_by_id(ds.queries)
    all_preds, all_gts, sal, gt_sal, cands = [], [], [], [], []
    for qid in qids:
        q, p = qmap[qid], preds[qid]
        all_preds.append([tuple(s) for s in p.get("spans", [])])
        all_gts.append(q.gt_spans)
        s = p.get("saliency")
        sal.append(s)
        gt_sal.append(q.saliency_per_clip(len(s)) if s is not None else None)
        cands.append([tuple(c) for c in p["candidates"]] if "candidates" in p else None)
    has_cands = bool(cands) and all(c is not None for c in cands)
    return {
        "all_preds": all_preds,
        "all_gts": all_gts,
        "all_saliency": sal,
        "all_gt_saliency": gt_sal,
        "all_candidates": cands if has_cands else None,
    }


def cmd_evaluate(
    predictions: Iterable[dict[str, Any]],
    ds: Dataset,
    r1_thresholds: Sequence[float] = R1_THRESHOLDS,
    map_thresholds: Sequence[float] = MAP_GRID,
    debiased: Optional[dict[str, DebiasedQuerySet]] = None,
) -> EvalReport:
    """Score predictions against the dataset, with a per-category breakdown.

    Raises ``ValidationError`` listing qids present in only one of the two.
    """
    preds = {str(r["qid"]): r for r in predictions}
    dataset_qids = [q.qid for q in ds.queries]
    extra = sorted(set(preds) - set(dataset_qids))
    missing = [q for q in dataset_qids if q not in preds]
    if extra or missing:
        raise ValidationError(
            f"qid mismatch: {len(missing)} dataset qids without predictions {missing[:10]}, "
            f"{len(extra)} predicted qids not in dataset {extra[:10]}"
        )
    grids = {"r1_thresholds": r1_thresholds, "map_thresholds": map_thresholds}
    report = evaluate(**_eval_inputs(ds, preds, dataset_qids), **grids)
    texts = [q.raw_text for q in ds.queries]
    firsts = [debiased[q.qid].rewrites[0] if debiased and q.qid in debiased else None for q in ds.queries]
    labels = categorize_queries(texts, texts, firsts)
    for cat in ("rare", "error", "biased", "common"):
        qids = [q.qid for q, lab in zip(ds.queries, labels) if cat in lab]
        if qids:
            report.categories[cat] = evaluate(**_eval_inputs(ds, preds, qids), **grids)
    return report


def parse_grid(items: Sequence[str]) -> dict[str, list[Any]]:
    """``["kappa=5,7", "lambda=0,0.2"]`` -> ``{"kappa": [5, 7], "lambda": [0.0, 0.2]}``."""
    casts = {"n_d": int, "kappa": int, "tau": int, "eta": int, "lambda": float, "sigma": float}
    grid: dict[str, list[Any]] = {}
    for item in items:
        name, sep, values = item.partition("=")
        name = name.strip().replace("-", "_")
        if not sep or name not in casts:
            raise ValidationError(f"bad grid item {item!r}; expected NAME=v1,v2 with NAME in {sorted(casts)}")
        grid[name] = [casts[name](v) for v in values.split(",") if v.strip()]
    return grid


def cmd_sweep(
    ds: Dataset,
    base: PipelineConfig,
    backends: Backends,
    grid: dict[str, list[Any]],
    frames_root: Optional[Path] = None,
) -> list[tuple[dict[str, Any], EvalReport]]:
    """Evaluate every combination in ``grid``; frame captions are computed once."""
    memo = Memo()
    names = sorted(grid)
    rows = []
    for values in itertools.product(*(grid[n] for n in names)):
        params = dict(zip(names, values))
        fields = {("lam" if k == "lambda" else k): v for k, v in params.items()}
        config = dataclasses.replace(base, **fields)
        retriever = Retriever(backends, config, frames_root, memo)
        queries = ds.runnable()
        results = {}
        for q, res in _ordered_parallel(lambda q: retriever.run(ds.videos[q.video_id], q), queries, config.concurrency):
            if isinstance(res, BaseException):
                logger.error("sweep %s: %s failed: %s", params, q.qid, res)
                res_rec = {"qid": q.qid, "spans": []}
            else:
                res_rec = res.to_record(with_saliency=True, with_candidates=True)
            results[q.qid] = res_rec
        sub = Dataset(ds.name, ds.videos, queries, plans=ds.plans)
        rows.append((params, cmd_evaluate(results.values(), sub)))
    return rows


def sweep_table(rows: list[tuple[dict[str, Any], EvalReport]]) -> str:
    if not rows:
        return ""
    names = list(rows[0][0])
    metrics = ["R1@0.3", "R1@0.5", "R1@0.7", "mIoU", "mAP@0.5", "mAP@avg"]
    header = names + metrics
    body = [[f"{p[n]:g}" for n in names] + [f"{100 * r.flat()[m]:.2f}" for m in metrics] for p, r in rows]
    widths = [max(len(x[i]) for x in [header] + body) for i in range(len(header))]
    return "\n".join("  ".join(x.rjust(w) for x, w in zip(line, widths)) for line in [header] + body)


# -----------------------------
# argparse
# -----------------------------


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="annotation file, or directory for --format synthetic")
    p.add_argument("--format", choices=FORMATS, required=True)
    p.add_argument("--frames-root", type=Path, help="directory holding <video_id>/<index>.jpg")
    p.add_argument("--lenient", action="store_true", help="skip malformed annotation lines instead of failing")
    p.add_argument("--limit", type=int, default=0, help="only the first N queries (0 = all)")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with [pipeline] and [backends.*] tables")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--cache-dir", type=Path, help="response cache (default: <out>/cache)")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--n-d", dest="n_d", type=int)
    p.add_argument("--eta", type=int)
    p.add_argument("--kappa", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--fps", type=float, help="override the dataset's frame rate")
    p.add_argument("--max-span-frames", type=int)
    p.add_argument("--concurrency", type=int)
    for role in ("debias", "frame_caption", "span_caption"):
        p.add_argument(f"--temp-{role.replace('_', '-')}", dest=f"temp_{role}", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zsvmr", description="Zero-shot video moment retrieval pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-videos", type=int, default=50)
    p.add_argument("--min-duration", type=float, default=60.0)
    p.add_argument("--max-duration", type=float, default=120.0)
    p.add_argument("--min-spans", type=int, default=1)
    p.add_argument("--max-spans", type=int, default=2)
    p.add_argument("--typo-rate", type=float, default=0.2)

    for name, help_ in (
        ("debias", "rewrite queries"),
        ("caption", "caption every frame"),
        ("retrieve", "predict spans"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_dataset_args(p)
        _add_run_args(p)
        if name == "retrieve":
            p.add_argument("--saliency", action="store_true", help="also write per-frame saliency tracks")
            p.add_argument("--candidates", action="store_true", help="also write candidate spans")

    p = sub.add_parser("evaluate", help="score a predictions file")
    _add_dataset_args(p)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--debiased", type=Path, help="debiased.jsonl, used to flag corrected queries")
    p.add_argument("--report", type=Path, help="write the report as JSON here")
    p.add_argument("--config", help="TOML config (only [pipeline.fps] is used)")

    p = sub.add_parser("sweep", help="evaluate a hyperparameter grid")
    _add_dataset_args(p)
    _add_run_args(p)
    p.add_argument("--grid", action="append", default=[], help="NAME=v1,v2 (repeatable)")
    return parser


def _load(args: argparse.Namespace, config: PipelineConfig) -> Dataset:
    fps = config.fps.get(args.format)
    ds = load_dataset(args.format, args.dataset, args.frames_root, args.lenient, fps)
    if args.limit:
        ds = Dataset(ds.name, ds.videos, ds.queries[: args.limit], ds.missing_frames, ds.plans)
    return ds


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    try:
        return _dispatch(args)
    except (ZsvmrError, OSError) as exc:
        logger.error("%s", exc)
        return 2


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "synth":
        ds = generate_synthetic(
            args.seed,
            args.n_videos,
            (args.min_duration, args.max_duration),
            (args.min_spans, args.max_spans),
            args.typo_rate,
        )
        save_synthetic(ds, args.out)
        logger.info("wrote %d synthetic videos to %s", len(ds.videos), args.out)
        return 0

    file_cfg = load_config_file(args.config)
    config = resolve_config(args, file_cfg)
    ds = _load(args, config)

    if args.command == "evaluate":
        debiased = None
        if args.debiased:
            debiased = {str(r["qid"]): DebiasedQuerySet.from_dict(r) for r in read_jsonl(args.debiased)}
        report = cmd_evaluate(read_jsonl(args.predictions), ds, debiased=debiased)
        print(report.to_table())
        if args.report:
            args.report.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return 0

    cache_dir = None if args.no_cache else (args.cache_dir or args.out / "cache")
    backends = build_backends(file_cfg, ds, cache_dir, config.concurrency)

    if args.command == "debias":
        return 1 if cmd_debias(ds, config, backends, args.out) else 0
    if args.command == "caption":
        return 1 if cmd_caption(ds, config, backends, args.out, args.frames_root) else 0
    if args.command == "retrieve":
        failed = cmd_retrieve(ds, config, backends, args.out, args.frames_root, args.saliency, args.candidates)
        return 1 if failed else 0
    if args.command == "sweep":
        rows = cmd_sweep(ds, config, backends, parse_grid(args.grid), args.frames_root)
        args.out.mkdir(parents=True, exist_ok=True)
        _append_fresh(args.out / "sweep.jsonl", [{"params": p, "report": r.to_dict()} for p, r in rows])
        table = sweep_table(rows)
        (args.out / "sweep.txt").write_text(table + "\n", encoding="utf-8")
        print(table)
        return 0
    raise AssertionError(args.command)


def _append_fresh(path: Path, records: Iterable[dict[str, Any]]) -> None:
    if path.exists():
        os.remove(path)
    _append(path, records)


if __name__ == "__main__":
    sys.exit(main())
