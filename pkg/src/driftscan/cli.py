"""Command-line interface.

One executable, five subcommands (pvalues, detect, identify, refit,
simulate) plus replay.  Every run writes its outputs under --out with
fixed filenames (result.json, table.csv where applicable) together with
a manifest.json recording the subcommand, the fully resolved
configuration, content digests of the input files, and the seed.
Replaying a manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import pvalue_table
from .data_io import load_dataset, score_dataset
from .detect import detect_regions
from .identify import ScanConfig, scan, scan_penalty
from .refit import (average_predictions, median_relative_abs_dev, refit_two_step,
                    stack_weights, sure_mle)
from .regions import IntervalFamily, load_family
from .sim import run_sweep

SEED_ENV_VAR = "DRIFTSCAN_SEED"
_TABLE_ROW_LIMIT = 200_000


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: Path, subcommand: str, config: dict, inputs: list[str],
                    seed: int) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "seed": seed,
        "version": __version__,
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load_scores(path: str, fmt: str | None, role: str = "calibration"):
    dataset = load_dataset(path, format=fmt, role=role)
    return score_dataset(dataset), dataset


def _out_dir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- runners: each takes the resolved config dict and writes artifacts ----


def run_pvalues(config: dict) -> None:
    out = _out_dir(config)
    calib_scores, _ = _load_scores(config["calib"], config.get("format"))
    test_scores, _ = _load_scores(config["test"], config.get("format"), role="test")
    table = pvalue_table(calib_scores, test_scores, config["seed"])
    table.to_csv(out / "table.csv")
    _write_json(out / "result.json", {
        "m": int(len(calib_scores)),
        "n": int(len(test_scores)),
        "seed": config["seed"],
        "min_randomized": float(np.min(table.randomized)),
        "max_randomized": float(np.max(table.randomized)),
        "infinite_zscores": int(np.sum(np.isinf(table.zscores))),
    })
    _write_manifest(out, "pvalues", config, [config["calib"], config["test"]], config["seed"])


def run_detect(config: dict) -> None:
    out = _out_dir(config)
    family = load_family(config["family"])
    calib_scores, _ = _load_scores(config["calib"], config.get("format"))
    test_scores, _ = _load_scores(config["test"], config.get("format"), role="test")
    disjoint = {"auto": None, "true": True, "false": False}[config["disjoint"]]
    result, table = detect_regions(family, calib_scores, test_scores,
                                   config["alpha"], config["seed"], disjoint)
    with open(out / "table.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "pvalue", "n_calib", "n_test", "unevaluable", "rejected"])
        rejected = set(result.rejected)
        for row in table:
            writer.writerow([
                row.region_id,
                "" if row.pvalue is None else repr(row.pvalue),
                row.n_calib, row.n_test,
                int(row.unevaluable),
                int(row.region_id in rejected),
            ])
    _write_json(out / "result.json", result.to_dict())
    _write_manifest(out, "detect", config,
                    [config["family"], config["calib"], config["test"]], config["seed"])


def _zscores_from_data(config: dict) -> np.ndarray:
    calib_scores, _ = _load_scores(config["calib"], config.get("format"))
    test_scores, _ = _load_scores(config["test"], config.get("format"), role="test")
    return pvalue_table(calib_scores, test_scores, config["seed"]).zscores


def run_identify(config: dict) -> None:
    out = _out_dir(config)
    family = load_family(config["family"])
    z = _zscores_from_data(config)
    cfg = ScanConfig(sigma=config["sigma"], size_penalty_C=config["penalty_c"],
                     max_card=config.get("max_card"), penalized=not config["unpenalized"])
    result = scan(z, family, cfg)
    _write_json(out / "result.json", result.to_dict())
    _write_objective_table(out / "table.csv", z, family, cfg)
    _write_manifest(out, "identify", config,
                    [config["family"], config["calib"], config["test"]], config["seed"])


def _write_objective_table(path: Path, z: np.ndarray, family, cfg: ScanConfig) -> None:
    """Per-region objective table; interval families past the row limit
    get one summary row per window length instead."""
    d = cfg.vc_dim_d if cfg.vc_dim_d is not None else family.vc_dim
    C = cfg.effective_C()
    n = z.size
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if isinstance(family, IntervalFamily) and len(family) > _TABLE_ROW_LIMIT:
            writer.writerow(["length", "best_start", "best_objective", "penalty"])
            cums = np.concatenate([[0.0], np.cumsum(z)])
            for length in range(family.min_size, family.max_size + 1):
                if cfg.max_card is not None and length > cfg.max_card:
                    break
                pen = scan_penalty(n, d, length, C, cfg.sigma)
                obj = (cums[length:] - cums[: n - length + 1]) / np.sqrt(length) - pen
                i = int(np.argmax(obj))
                writer.writerow([length, i, repr(float(obj[i])), repr(pen)])
            return
        writer.writerow(["region_id", "cardinality", "z_R", "penalty", "objective"])
        regions = family.regions
        if cfg.max_card is not None:
            regions = [r for r in regions if r.cardinality <= cfg.max_card]
        for r in regions:
            card = r.cardinality
            z_r = float(z[list(r.member_indices)].sum() / np.sqrt(card))
            pen = scan_penalty(n, d, card, C, cfg.sigma)
            writer.writerow([r.id, card, repr(z_r), repr(pen), repr(z_r - pen)])


def _read_matrix_csv(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def run_refit(config: dict) -> None:
    out = _out_dir(config)
    strategy = config["strategy"]
    inputs: list[str] = []
    if strategy in ("two-step", "sure-const", "sure-card"):
        family = load_family(config["family"])
        data = load_dataset(config["data"], format=config.get("format"))
        y = np.array([p.y if p.y is not None else p.score for p in data.points], dtype=float)
        inputs = [config["family"], config["data"]]
        if strategy == "two-step":
            cfg = ScanConfig(sigma=config["sigma"], size_penalty_C=config["penalty_c"],
                             max_card=config.get("max_card"))
            estimate = refit_two_step(y, family, cfg)
            payload = estimate.to_dict()
            payload["scan"] = estimate.scan_result.to_dict()
        else:
            df_model = "constant-one" if strategy == "sure-const" else "cardinality"
            selection, vec = sure_mle(y, family, config["sigma"], df_model)
            payload = selection.to_dict()
            payload["estimate"] = [float(v) for v in vec]
    elif strategy == "average":
        preds = _read_matrix_csv(config["preds"])
        inputs = [config["preds"]]
        payload = {"prediction": [float(v) for v in average_predictions(preds)]}
    elif strategy == "stack":
        preds = _read_matrix_csv(config["preds"])
        target = load_dataset(config["data"], format=config.get("format"))
        y = np.array([p.y if p.y is not None else p.score for p in target.points], dtype=float)
        inputs = [config["preds"], config["data"]]
        weights = stack_weights(preds, y)
        payload = weights.to_dict()
        payload["prediction"] = [float(v) for v in preds @ weights.w]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    _write_json(out / "result.json", payload)
    _write_manifest(out, "refit", config, inputs, config["seed"])


def _load_sweep_config(path: str) -> dict:
    p = Path(path)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def run_simulate(config: dict) -> None:
    out = _out_dir(config)
    sweep_config = _load_sweep_config(config["config"])
    report = run_sweep(sweep_config, config["seed"], workers=config["threads"])
    report.to_csv(out / "table.csv")
    report.to_json_summary(out / "result.json")
    _write_manifest(out, "simulate", config, [config["config"]], config["seed"])
    n_err = sum(1 for r in report.rows if r.get("error"))
    if n_err:
        print(f"{n_err} of {len(report.rows)} trials recorded errors; see table.csv",
              file=sys.stderr)


_RUNNERS = {
    "pvalues": run_pvalues,
    "detect": run_detect,
    "identify": run_identify,
    "refit": run_refit,
    "simulate": run_simulate,
}


def run_replay(config: dict) -> None:
    with open(config["manifest"], encoding="utf-8") as fh:
        manifest = json.load(fh)
    sub = manifest["subcommand"]
    if sub not in _RUNNERS:
        raise ValueError(f"manifest names unknown subcommand {sub!r}")
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists():
            raise FileNotFoundError(f"replay input missing: {path}")
        if _sha256(Path(path)) != digest:
            raise ValueError(f"replay input changed since the original run: {path}")
    replay_config = dict(manifest["config"])
    replay_config["out"] = config["out"]
    _RUNNERS[sub](replay_config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftscan",
        description="Monitor deployed predictive models: conformal p-values, "
                    "FDR-controlled region detection, penalized scan identification, "
                    "refitting, and a simulation harness.",
    )
    parser.add_argument("--version", action="version", version=f"driftscan {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, inputs=True):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help=f"RNG seed (default: ${SEED_ENV_VAR} or 0)")
        if inputs:
            p.add_argument("--format", choices=["csv", "json"], default=None,
                           help="input format (default: infer from extension)")

    p = sub.add_parser("pvalues", help="global conformal p-values of test scores")
    p.add_argument("--calib", required=True)
    p.add_argument("--test", required=True)
    add_common(p)

    p = sub.add_parser("detect", help="FDR-controlled detection over a region family")
    p.add_argument("--family", required=True, help="region family manifest (JSON)")
    p.add_argument("--calib", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--disjoint", choices=["auto", "true", "false"], default="auto")
    add_common(p)

    p = sub.add_parser("identify", help="penalized multi-scale scan for the worst region")
    p.add_argument("--family", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--penalty-C", dest="penalty_c", type=float, default=1.0)
    p.add_argument("--max-card", dest="max_card", type=int, default=None)
    p.add_argument("--unpenalized", action="store_true")
    add_common(p)

    p = sub.add_parser("refit", help="refit estimators and local-model aggregation")
    p.add_argument("--strategy", required=True,
                   choices=["two-step", "sure-const", "sure-card", "average", "stack"])
    p.add_argument("--family", help="region family manifest (two-step/sure-*)")
    p.add_argument("--data", help="observations file with y or score column")
    p.add_argument("--preds", help="prediction matrix CSV (average/stack)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--penalty-C", dest="penalty_c", type=float, default=1.0)
    p.add_argument("--max-card", dest="max_card", type=int, default=None)
    add_common(p)

    p = sub.add_parser("simulate", help="seeded Monte Carlo sweep")
    p.add_argument("--config", required=True, help="sweep config (TOML or JSON)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes (results are identical for any value)")
    add_common(p, inputs=False)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest", help="path to a manifest.json from a previous run")
    p.add_argument("--out", required=True)

    return parser


def _check_required(config: dict) -> None:
    strategy = config.get("strategy")
    if strategy in ("two-step", "sure-const", "sure-card"):
        missing = [f for f in ("family", "data") if not config.get(f)]
    elif strategy == "average":
        missing = [] if config.get("preds") else ["preds"]
    elif strategy == "stack":
        missing = [f for f in ("preds", "data") if not config.get(f)]
    else:
        return
    if missing:
        raise ValueError(f"strategy {strategy!r} requires --" + " --".join(missing))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    try:
        if args.subcommand == "replay":
            run_replay(config)
        else:
            _check_required(config)
            _RUNNERS[args.subcommand](config)
    except (ValueError, OSError, KeyError) as exc:
        print(f"driftscan {args.subcommand}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
