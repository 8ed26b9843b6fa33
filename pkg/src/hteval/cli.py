"""``hteval`` command line: validate, simulate, metrics, chart.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .charts import KINDS, emit_svg_chart
from .config import build_plan, load_config, load_datasets
from .data import ColumnMapping, dataset_csv_text, load_csv_dataset, merge
from .errors import ConfigInvalid, DataError, HteError, IdMismatch, UnknownKind
from .fileio import atomic_write_text
from .metrics import compute_report
from .report import canonical_hash, csv_text, file_hash, run_status, versions, write_outputs
from .simulation import PRESETS, generate, setting
from .validation import Mode, RunResult, fit_seed, run_plan, split_seed

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def _seed_table(plan) -> dict:
    out = {}
    for spec in plan.estimators:
        rows = []
        for r in range(plan.replicates_for(spec)):
            rows.append({
                "replicate": r,
                "split_seed": split_seed(plan.seed, r) if plan.mode in (Mode.INTERNAL_RANDOM,
                                                                       Mode.INTERNAL_COMBINED) else None,
                "fit_seed": fit_seed(plan.seed, r, spec.display),
            })
        out[spec.display] = rows
    return out


def cmd_validate(config_path: str | Path, out_dir: str | Path | None = None) -> int:
    cfg = load_config(config_path)
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    if out is None:
        raise ConfigInvalid("no output directory: pass --out or set 'output_dir'")
    datasets = load_datasets(cfg)
    plan = build_plan(cfg, datasets)
    results = run_plan(plan)
    external = plan.mode is Mode.EXTERNAL
    if plan.mode is Mode.INTERNAL_COMBINED:
        row_ids = merge(datasets).row_ids
    elif external:
        row_ids = None
    else:
        row_ids = datasets[0].row_ids
    manifest = {
        "command": "validate",
        "config_sha256": canonical_hash(cfg.raw),
        "config_file_sha256": file_hash(config_path),
        "datasets": [{"label": ref.label, "path": ref.path.name, "sha256": file_hash(ref.path),
                      "rows_used": d.n, "rows_dropped": d.n_dropped}
                     for ref, d in zip(cfg.datasets, datasets)],
        "mode": plan.mode.value,
        "master_seed": plan.seed,
        "seeds": _seed_table(plan),
        "estimators": run_status(results),
        "versions": versions(),
    }
    failed = write_outputs(out, results, external, row_ids, manifest)
    for name, err in failed.items():
        print(f"hteval: estimator {name!r} unavailable: {err}", file=sys.stderr)
    if len(failed) == len({r.estimator for r in results}):
        excs = [r.exception for r in results if r.exception is not None]
        if excs and all(isinstance(e, DataError) for e in excs):
            return EXIT_DATA
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_simulate(preset: str, n: int, seed: int, out_dir: str | Path) -> int:
    if preset not in PRESETS:
        raise ConfigInvalid(f"--setting must be one of {PRESETS}")
    cfg = setting(preset, n, seed)
    trial = generate(cfg)
    out = Path(out_dir)
    atomic_write_text(out / "trial.csv", dataset_csv_text(trial.data))
    atomic_write_text(out / "true_ite.csv",
                      csv_text(["patient_id", "ite"], ([str(i), v] for i, v in enumerate(trial.true_ite))))
    dgp = {"preset": preset, **cfg.to_dict(),
           "feature_names": list(trial.data.feature_names)}
    atomic_write_text(out / "dgp.json", json.dumps(dgp, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def read_predictions(path: str | Path):
    """(ids, ite, mu0 or None, mu1 or None) from a predictions CSV."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("patient_id", "ite"):
            if col not in header:
                raise ConfigInvalid(f"predictions file lacks required column {col!r}")
        has_mu = "mu0" in header and "mu1" in header
        if ("mu0" in header) != ("mu1" in header):
            raise ConfigInvalid("predictions must carry both mu0 and mu1 or neither")
        rows = list(reader)
    try:
        ids = [r["patient_id"].strip() for r in rows]
        ite = np.array([float(r["ite"]) for r in rows])
        mu0 = np.array([float(r["mu0"]) for r in rows]) if has_mu else None
        mu1 = np.array([float(r["mu1"]) for r in rows]) if has_mu else None
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad prediction value: {exc}") from None
    for v in (ite, mu0, mu1):
        if v is not None and not np.all(np.isfinite(v)):
            raise DataError("predictions must be finite")
    return ids, ite, mu0, mu1


def align_predictions(row_ids, pred_ids) -> np.ndarray:
    """Index into the predictions for each data row; every id must match exactly once."""
    pos = {}
    for k, pid in enumerate(pred_ids):
        if pid in pos:
            raise IdMismatch(f"duplicate patient_id {pid!r} in predictions")
        pos[pid] = k
    missing = [rid for rid in row_ids if rid not in pos]
    if missing:
        raise IdMismatch(f"{len(missing)} data rows have no prediction (first: {missing[0]!r})")
    extra = set(pos) - set(row_ids)
    if extra:
        raise IdMismatch(f"{len(extra)} predictions match no data row (first: {sorted(extra)[0]!r})")
    return np.array([pos[rid] for rid in row_ids], dtype=np.intp)


def cmd_metrics(pred_path, data_path, mapping_path, out_dir, k_bins: int = 10) -> int:
    """Score externally supplied predictions; they are reported as the test partition."""
    try:
        mraw = json.loads(Path(mapping_path).read_bytes())
    except FileNotFoundError:
        raise ConfigInvalid(f"mapping file not found: {mapping_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"mapping is not valid JSON: {exc}") from None
    if isinstance(mraw, dict) and "mapping" in mraw:
        k_bins = int(mraw.get("k_bins", k_bins))
        mraw = mraw["mapping"]
    mapping = ColumnMapping.from_dict(mraw)
    data = load_csv_dataset(data_path, mapping)
    ids, ite, mu0, mu1 = read_predictions(pred_path)
    take = align_predictions(list(data.row_ids), ids)
    ite = ite[take]
    arm_probs = None if mu0 is None else (mu0[take], mu1[take])
    report = compute_report(ite, data.outcome, data.treatment, arm_probs, k_bins=k_bins)
    name = Path(pred_path).stem
    res = RunResult(name, 0, "all", None, report, None, ite, None, np.arange(data.n))
    manifest = {
        "command": "metrics",
        "predictions": {"path": Path(pred_path).name, "sha256": file_hash(pred_path)},
        "data": {"path": Path(data_path).name, "sha256": file_hash(data_path),
                 "rows_used": data.n, "rows_dropped": data.n_dropped},
        "mapping_sha256": canonical_hash(mraw),
        "k_bins": k_bins,
        "versions": versions(),
    }
    write_outputs(out_dir, [res], False, data.row_ids, manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hteval", description="Estimate and validate individualized "
                                "treatment effects from randomized-trial data.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="run a validation plan from a JSON config")
    v.add_argument("--config", required=True)
    v.add_argument("--out", help="output directory (overrides output_dir in the config)")
    s = sub.add_parser("simulate", help="write a synthetic trial with its true ITEs")
    s.add_argument("--setting", required=True, choices=PRESETS)
    s.add_argument("--n", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    m = sub.add_parser("metrics", help="score externally produced ITE predictions")
    m.add_argument("--pred", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--mapping", required=True)
    m.add_argument("--out", required=True)
    c = sub.add_parser("chart", help="render an emitted CSV as SVG")
    c.add_argument("--kind", required=True, help=f"one of {', '.join(KINDS)}")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "validate":
            return cmd_validate(args.config, args.out)
        if args.command == "simulate":
            if args.seed < 0:
                raise ConfigInvalid("--seed must be >= 0")
            return cmd_simulate(args.setting, args.n, args.seed, args.out)
        if args.command == "metrics":
            return cmd_metrics(args.pred, args.data, args.mapping, args.out)
        emit_svg_chart(args.kind, args.inp, args.out)
        return EXIT_OK
    except (ConfigInvalid, UnknownKind) as exc:
        print(f"hteval: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"hteval: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HteError as exc:
        print(f"hteval: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"hteval: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
