"""Command line workflow: detect, calibrate, explain, report.

A run writes under <out>/<category>/<setup>/:

    scores.csv        per-sample anomaly scores (detect)
    calibration.json  threshold and operating point (calibrate)
    explanations/     attribution rasters, heatmaps, coefficients, traces,
                      per-sample localization json (explain)
    panels/           eight-tile audit panels (explain)
    report.csv        per-sample table joining scores and localization (report)
    summary.json      dataset roll-up (report)

Options resolve CLI > config file > built-in defaults; the config file is
INI with a single [reconaudit] section whose keys match the long option
names. Outputs are byte-deterministic for a fixed input, seed, and
installed versions: files are written from sorted collections, floats are
serialized with repr, and nothing embeds a timestamp.

Commands that process samples individually record per-sample failures,
report them on stderr, and exit nonzero if any occurred, so a partial run
is never mistaken for a clean one.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, detector, evaluation, lime_ad, shap_ad
from .dataset_io import (
    DEFAULT_SIDE,
    SampleRecord,
    cached_provider,
    inference_provider,
    load_and_resize,
    load_mask_resized,
    scan_dataset,
    write_cache_entry,
)
from .errors import (
    DatasetLayoutError,
    GoodSampleError,
    ModelGraphError,
    ModelShapeError,
    SingleClassError,
    UnknownSampleError,
)
from .imagecore import (
    RgbImage,
    ScalarMap,
    anomaly_map,
    anomaly_score,
    save_float_raster,
    save_heatmap_png,
)
from .segmentation import QuickshiftParams, calibrate_segment_count, gt_aware_segmentation

SETUPS = ("S1", "S2", "S3")
_CONFIG_SECTION = "reconaudit"


def _per_sample_seed(seed: int, sample_id: str) -> int:
    """Stable per-sample stream: base seed offset by a checksum of the id."""
    return (seed + zlib.crc32(sample_id.encode("utf-8"))) % (2**32)


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise SystemExit(f"error: config file {path!r} not found")
    if not parser.has_section(_CONFIG_SECTION):
        raise SystemExit(f"error: config file {path!r} has no [{_CONFIG_SECTION}] section")
    return dict(parser[_CONFIG_SECTION])


def _resolve(ns: argparse.Namespace, config: dict[str, str], key: str, default, cast):
    cli_val = getattr(ns, key, None)
    if cli_val is not None:
        return cli_val
    if key in config:
        return cast(config[key])
    return default


def _require(value, flag: str):
    if value is None:
        raise SystemExit(f"error: {flag} is required (flag or config)")
    return value


def _build_provider(ns: argparse.Namespace, config: dict[str, str]):
    provider_kind = _resolve(ns, config, "provider", None, str)
    cache = _resolve(ns, config, "cache", None, str)
    model = _resolve(ns, config, "model", None, str)
    if provider_kind == "cache":
        return cached_provider(_require(cache, "--cache"))
    if provider_kind == "model":
        return inference_provider(_require(model, "--model"))
    if provider_kind is not None:
        raise SystemExit(f"error: unknown provider {provider_kind!r} (cache or model)")
    if (cache is None) == (model is None):
        raise SystemExit("error: exactly one of --cache or --model is required")
    return cached_provider(cache) if cache is not None else inference_provider(model)


def _run_dir(ns: argparse.Namespace, config: dict[str, str]) -> tuple[Path, str, str]:
    out = _require(_resolve(ns, config, "out", None, str), "--out")
    category = _require(_resolve(ns, config, "category", None, str), "--category")
    setup = _resolve(ns, config, "setup", "S1", str)
    if setup not in SETUPS:
        raise SystemExit(f"error: setup must be one of {', '.join(SETUPS)}, got {setup!r}")
    return Path(out) / category / setup, category, setup


def _map_samples(records, fn, jobs: int):
    """Run fn over records, serially or on a thread pool; keep failures."""
    results: dict[str, object] = {}
    failures: list[tuple[str, str]] = []
    if jobs <= 1:
        for rec in records:
            try:
                results[rec.sample_id] = fn(rec)
            except Exception as e:  # noqa: BLE001 - per-sample isolation is the point
                failures.append((rec.sample_id, f"{type(e).__name__}: {e}"))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {rec.sample_id: pool.submit(fn, rec) for rec in records}
            for sid in sorted(futures):
                try:
                    results[sid] = futures[sid].result()
                except Exception as e:  # noqa: BLE001
                    failures.append((sid, f"{type(e).__name__}: {e}"))
    return results, failures


def _finish(failures: list[tuple[str, str]]) -> int:
    for sid, msg in failures:
        print(f"FAILED {sid}: {msg}", file=sys.stderr)
    if failures:
        print(f"{len(failures)} sample(s) failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# detect


def cmd_detect(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    run_dir, category, _setup = _run_dir(ns, config)
    dataset = _require(_resolve(ns, config, "dataset", None, str), "--dataset")
    jobs = _resolve(ns, config, "jobs", 1, int)
    dump_recon = _resolve(ns, config, "dump_recon", None, str)
    provider = _build_provider(ns, config)

    records = [r for r in scan_dataset(dataset, category) if r.split == "test"]

    def score_one(rec: SampleRecord) -> tuple[str, float]:
        img = load_and_resize(rec.image_path, DEFAULT_SIDE)
        recon = provider.reconstruct([img], [rec.sample_id])[0]
        if dump_recon is not None:
            write_cache_entry(dump_recon, rec.sample_id, recon)
        return rec.label, anomaly_score(anomaly_map(img, recon))

    results, failures = _map_samples(records, score_one, jobs)

    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "scores.csv", "w", newline="") as f:
        f.write("sample_id,label,score\n")
        for sid in sorted(results):
            label, score = results[sid]
            f.write(f"{sid},{label},{score!r}\n")
    print(f"scored {len(results)} samples -> {run_dir / 'scores.csv'}")
    return _finish(failures)


def _read_scores(run_dir: Path) -> list[detector.ScoredSample]:
    path = run_dir / "scores.csv"
    if not path.is_file():
        raise SystemExit(
            f"error: {path} not found; run `reconaudit detect` for this setup first"
        )
    samples = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            samples.append(
                detector.ScoredSample(
                    sample_id=row["sample_id"],
                    score=float(row["score"]),
                    label=row["label"],
                )
            )
    return samples


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    run_dir, _category, _setup = _run_dir(ns, config)
    samples = _read_scores(run_dir)
    result = detector.calibrate(samples)
    payload = {
        "threshold": result.threshold,
        "objective": result.objective,
        "tpr": result.tpr,
        "fpr": result.fpr,
        "confusion": result.confusion,
        "roc_points": [list(p) for p in result.roc_points],
        "counts": {
            "good": sum(1 for s in samples if s.label == detector.LABEL_GOOD),
            "anomalous": sum(1 for s in samples if s.label == detector.LABEL_ANOMALOUS),
        },
    }
    with open(run_dir / "calibration.json", "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    print(
        f"threshold {result.threshold!r} (objective {result.objective:.4f}) "
        f"-> {run_dir / 'calibration.json'}"
    )
    return 0


# ---------------------------------------------------------------------------
# explain


def _parse_methods(raw: str, setup: str) -> list[str]:
    methods = [m.strip() for m in raw.split(",") if m.strip()]
    for m in methods:
        if m not in ("lime", "shap"):
            raise SystemExit(f"error: unknown method {m!r} (lime or shap)")
    if setup == "S3" and methods != ["shap"]:
        raise SystemExit("error: setup S3 is partition attribution only (--method shap)")
    if not methods:
        raise SystemExit("error: no methods selected")
    return methods


def _loc_or_none(beta: ScalarMap, gt) -> evaluation.LocalizationResult | None:
    if gt is None or gt.count() == 0:
        return None
    return evaluation.optimal_jaccard(beta, gt)


def cmd_explain(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    run_dir, category, setup = _run_dir(ns, config)
    dataset = _require(_resolve(ns, config, "dataset", None, str), "--dataset")
    jobs = _resolve(ns, config, "jobs", 1, int)
    seed = _resolve(ns, config, "seed", 0, int)
    segments = _resolve(ns, config, "segments", 100, int)
    samples_n = _resolve(ns, config, "samples", 5000, int)
    min_leaf = _resolve(ns, config, "min_leaf", 4, int)
    methods = _parse_methods(_resolve(ns, config, "method", None, str) or
                             ("shap" if setup == "S3" else "lime,shap"), setup)
    provider = _build_provider(ns, config)

    records = [
        r
        for r in scan_dataset(dataset, category)
        if r.split == "test" and r.label == "anomalous"
    ]
    tree = (
        shap_ad.build_partition_tree(DEFAULT_SIDE, DEFAULT_SIDE, min_leaf)
        if "shap" in methods
        else None
    )
    budget = None if samples_n == 0 else samples_n

    expl_dir = run_dir / "explanations"
    panel_dir = run_dir / "panels"

    def explain_one(rec: SampleRecord) -> dict:
        img = load_and_resize(rec.image_path, DEFAULT_SIDE)
        recon = provider.reconstruct([img], [rec.sample_id])[0]
        amap = anomaly_map(img, recon)
        alpha = anomaly_score(amap)
        gt = (
            load_mask_resized(rec.mask_path, DEFAULT_SIDE)
            if rec.mask_path is not None
            else None
        )
        if setup == "S2" and (gt is None or gt.count() == 0):
            raise GoodSampleError(
                "setup S2 needs a non-empty ground truth mask for every anomalous sample"
            )
        base = expl_dir / rec.sample_id
        base.parent.mkdir(parents=True, exist_ok=True)
        entry: dict = {"alpha": alpha, "lime": None, "shap": None}

        beta_l = loc_l = None
        if "lime" in methods:
            _seg_blind, params = calibrate_segment_count(img, segments, QuickshiftParams())
            if setup == "S2":
                seg = gt_aware_segmentation(img, gt, params)
            else:
                seg = _seg_blind
            expl = lime_ad.explain(
                img, recon, seg, n=samples_n, seed=_per_sample_seed(seed, rec.sample_id)
            )
            beta_l = expl.pixel_attribution
            loc_l = _loc_or_none(beta_l, gt)
            save_float_raster(beta_l.data, base.parent / f"{base.name}_beta_lime.npy")
            save_heatmap_png(beta_l, base.parent / f"{base.name}_beta_lime.png")
            with open(base.parent / f"{base.name}_lime_coeffs.csv", "w", newline="") as f:
                f.write("segment,coefficient\n")
                for i, c in enumerate(expl.coefficients):
                    f.write(f"{i},{float(c)!r}\n")
            entry["lime"] = {
                "segments": seg.k,
                "intercept": expl.intercept,
                "jaccard": loc_l.jaccard if loc_l else None,
                "threshold": loc_l.threshold if loc_l else None,
            }

        beta_s = loc_s = None
        if "shap" in methods:
            sexpl = shap_ad.partition_attribution(img, recon, tree, budget=budget)
            beta_s = sexpl.pixel_attribution
            loc_s = _loc_or_none(beta_s, gt)
            save_float_raster(beta_s.data, base.parent / f"{base.name}_beta_shap.npy")
            save_heatmap_png(beta_s, base.parent / f"{base.name}_beta_shap.png")
            with open(base.parent / f"{base.name}_shap_trace.jsonl", "w") as f:
                for t in sexpl.trace:
                    f.write(
                        json.dumps(
                            {"node": t.node, "credit": t.credit, "evaluations": t.evaluations},
                            sort_keys=True,
                        )
                        + "\n"
                    )
            entry["shap"] = {
                "evaluations": sexpl.evaluations_used,
                "frontier": len(sexpl.frontier),
                "jaccard": loc_s.jaccard if loc_s else None,
                "threshold": loc_s.threshold if loc_s else None,
            }

        with open(base.parent / f"{base.name}_loc.json", "w") as f:
            json.dump(entry, f, indent=2, sort_keys=True)
            f.write("\n")

        panel_path = panel_dir / f"{rec.sample_id}.png"
        panel_path.parent.mkdir(parents=True, exist_ok=True)
        evaluation.save_panels(
            panel_path, img, recon, amap, gt, beta_l, beta_s, loc_l, loc_s
        )
        return entry

    results, failures = _map_samples(records, explain_one, jobs)
    print(f"explained {len(results)} samples -> {expl_dir}")
    return _finish(failures)


# ---------------------------------------------------------------------------
# report


def cmd_report(ns: argparse.Namespace) -> int:
    config = _load_config(ns.config)
    run_dir, category, setup = _run_dir(ns, config)
    samples = _read_scores(run_dir)
    calib_path = run_dir / "calibration.json"
    if not calib_path.is_file():
        raise SystemExit(
            f"error: {calib_path} not found; run `reconaudit calibrate` for this setup first"
        )
    with open(calib_path) as f:
        calib = json.load(f)
    threshold = float(calib["threshold"])

    rows = []
    loc_stats: dict[str, list[float]] = {"lime": [], "shap": []}
    for s in samples:
        j_lime = j_shap = theta_lime = theta_shap = None
        loc_path = run_dir / "explanations" / f"{s.sample_id}_loc.json"
        if loc_path.is_file():
            with open(loc_path) as f:
                entry = json.load(f)
            for method in ("lime", "shap"):
                info = entry.get(method)
                if info and info.get("jaccard") is not None:
                    loc_stats[method].append(info["jaccard"])
            if entry.get("lime"):
                j_lime = entry["lime"].get("jaccard")
                theta_lime = entry["lime"].get("threshold")
            if entry.get("shap"):
                j_shap = entry["shap"].get("jaccard")
                theta_shap = entry["shap"].get("threshold")
        rows.append(
            evaluation.ReportRow(
                sample_id=s.sample_id,
                category=category,
                setup=setup,
                alpha=s.score,
                verdict=detector.classify(s.score, threshold),
                label=s.label,
                j_lime=j_lime,
                j_shap=j_shap,
                theta_lime=theta_lime,
                theta_shap=theta_shap,
            )
        )
    with open(run_dir / "report.csv", "w", newline="") as f:
        f.write(evaluation.scatter_report(rows))

    result = detector.calibrate(samples)
    summary = detector.summarize(samples, result)
    summary["category"] = category
    summary["setup"] = setup
    summary["localization"] = {}
    for method, js in loc_stats.items():
        if js:
            a = np.array(js)
            summary["localization"][method] = {
                "count": int(a.size),
                "mean_jaccard": float(a.mean()),
                "median_jaccard": float(np.median(a)),
                "min_jaccard": float(a.min()),
            }
        else:
            summary["localization"][method] = {"count": 0}
    with open(run_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"report -> {run_dir / 'report.csv'}\nsummary -> {run_dir / 'summary.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, with_provider: bool) -> None:
    p.add_argument("--out", help="output root directory")
    p.add_argument("--category", help="dataset category name")
    p.add_argument("--setup", choices=SETUPS, default=None,
                   help="evaluation setup (default S1)")
    p.add_argument("--config", default=None, help="INI config file ([reconaudit] section)")
    if with_provider:
        p.add_argument("--dataset", help="dataset root directory")
        p.add_argument("--provider", choices=("cache", "model"), default=None,
                       help="reconstruction source (inferred from --cache/--model)")
        p.add_argument("--cache", help="reconstruction cache directory")
        p.add_argument("--model", help="serialized encoder-decoder model file")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker threads for per-sample work (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reconaudit",
        description="Audit reconstruction-based anomaly detection models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="score test samples and write scores.csv")
    _add_common(p, with_provider=True)
    p.add_argument("--dump-recon", dest="dump_recon", default=None,
                   help="also write reconstructions as float rasters to this directory")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("calibrate", help="pick a threshold from scores.csv")
    _add_common(p, with_provider=False)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("explain", help="attribute error for anomalous test samples")
    _add_common(p, with_provider=True)
    p.add_argument("--method", default=None,
                   help="comma list of lime,shap (default both; S3 forces shap)")
    p.add_argument("--segments", type=int, default=None,
                   help="target superpixel count for lime (default 100)")
    p.add_argument("--samples", type=int, default=None,
                   help="lime perturbations / shap evaluation budget "
                        "(default 5000; 0 = unlimited shap)")
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=None,
                   help="partition tree leaf size (default 4)")
    p.add_argument("--seed", type=int, default=None, help="base RNG seed (default 0)")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("report", help="join scores, calibration, and localization")
    _add_common(p, with_provider=False)
    p.set_defaults(fn=cmd_report)

    return parser


# Environment and input problems that surface before (or instead of)
# per-sample work; per-sample failures are already isolated in _map_samples.
_USAGE_ERRORS = (
    DatasetLayoutError,
    SingleClassError,
    ModelGraphError,
    ModelShapeError,
    UnknownSampleError,
)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.fn(ns)
    except _USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
