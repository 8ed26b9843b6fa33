"""CSV/JSON emitters for validation results.

Plot-data files carry full-precision floats (``repr``); the metrics table
uses 3 decimals. Anything unavailable or non-finite is written as ``-``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fileio import atomic_write_text
from .metrics import EffectSummary, MetricReport
from .validation import AggregateResult, QUANTILES, RunResult, aggregate

DASH = "-"
TABLE_COLUMNS = ("estimator", "cfb_train", "cfb_test", "mbc_train", "mbc_test",
                 "pseudo_r2_train", "pseudo_r2_test")
PER_ESTIMATOR_FILES = ("subgroup_ate.csv", "outcome_ite_curves.csv", "benefit_harm_density.csv",
                       "calibration.csv", "roc.csv", "ite_density.csv")
SUMMARY_FIELDS = ("n_treated", "n_control", "events_treated", "events_control", "risk_treated",
                  "risk_control", "risk_difference", "rd_ci_low", "rd_ci_high", "risk_ratio",
                  "rr_ci_low", "rr_ci_high", "odds_ratio", "or_ci_low", "or_ci_high",
                  "continuity_corrected")


def fmt(x) -> str:
    """Full-precision cell; ``-`` for None or non-finite."""
    if x is None:
        return DASH
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return DASH
    return repr(x)


def fmt3(x) -> str:
    if x is None:
        return DASH
    x = float(x)
    if not math.isfinite(x):
        return DASH
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def summary_cells(s: EffectSummary | None) -> list:
    if s is None:
        return [DASH] * len(SUMMARY_FIELDS)
    return [s.n_treated, s.n_control, s.events_treated, s.events_control, s.risk_treated,
            s.risk_control, s.risk_difference, *s.rd_ci, s.risk_ratio, *s.rr_ci, s.odds_ratio,
            *s.or_ci, s.continuity_corrected]


# -- metrics table -------------------------------------------------------------

def table_row_name(res: RunResult, external: bool) -> str:
    return f"{res.estimator}@{res.split_id}" if external else res.estimator


def metrics_table_rows(results: Sequence[RunResult], external: bool = False) -> list[list[str]]:
    """One row per estimator from its first replicate (per direction when external)."""
    rows = []
    for res in results:
        if not external and res.replicate != 0:
            continue
        tr, te = res.train, res.test
        rows.append([
            table_row_name(res, external),
            fmt3(tr and tr.c_for_benefit), fmt3(te and te.c_for_benefit),
            fmt3(tr and tr.mbc), fmt3(te and te.mbc),
            fmt3(tr and tr.pseudo_r2), fmt3(te and te.pseudo_r2),
        ])
    return rows


def metrics_table_text(results: Sequence[RunResult], external: bool = False) -> str:
    return csv_text(TABLE_COLUMNS, metrics_table_rows(results, external))


# -- per-estimator plot data ------------------------------------------------------

def _parts(res: RunResult):
    if res.train is not None:
        yield "train", res.train, res.ite_train, res.train_indices
    if res.test is not None:
        yield "test", res.test, res.ite_test, res.test_indices


def subgroup_rows(shown: Sequence[RunResult]):
    for res in shown:
        for part, rep, _, _ in _parts(res):
            if rep.bins is None:
                continue
            for k, b in enumerate(rep.bins.bins):
                yield [res.split_id, part, k, b.ite_low, b.ite_high, b.n, b.mean_ite,
                       *summary_cells(b.summary)]


def curve_rows(shown: Sequence[RunResult]):
    for res in shown:
        for part, rep, _, _ in _parts(res):
            if rep.curves is None:
                continue
            for arm, c in sorted(rep.curves.items()):
                for g, p, lo, hi in zip(c.grid, c.prob, c.low, c.high):
                    yield [res.split_id, part, arm, g, p, lo, hi, c.slope, c.slope_se]


def strata_rows(all_runs: Sequence[RunResult]):
    for res in all_runs:
        for part, rep, _, _ in _parts(res):
            for stratum in ("benefit", "harm"):
                yield [res.replicate, res.split_id, part, stratum,
                       *summary_cells(getattr(rep, stratum))]


def calibration_rows(shown: Sequence[RunResult]):
    for res in shown:
        for part, rep, _, _ in _parts(res):
            for arm in sorted(rep.calibration):
                for k, b in enumerate(rep.calibration[arm]):
                    yield [res.split_id, part, arm, k, b.mean_predicted, b.observed_rate, b.n,
                           rep.auc.get(arm)]


def roc_rows(shown: Sequence[RunResult]):
    for res in shown:
        for part, rep, _, _ in _parts(res):
            for arm in sorted(rep.roc):
                fpr, tpr, thr = rep.roc[arm]
                for f, t, h in zip(fpr, tpr, thr):
                    yield [res.split_id, part, arm, f, t, h]


def ite_rows(shown: Sequence[RunResult], row_ids=None):
    for res in shown:
        for part, _, ite, idx in _parts(res):
            for k, v in enumerate(ite):
                if row_ids is not None and idx is not None:
                    rid = row_ids[idx[k]]
                elif idx is not None:
                    rid = str(int(idx[k]))
                else:
                    rid = str(k)
                yield [res.split_id, part, rid, v]


def quantile_rows(agg: AggregateResult, name: str):
    dist = agg.per_estimator[name]
    for key, qs in dist.quantiles().items():
        part, stratum = key.split("_")
        n_ok = int(np.isfinite(getattr(dist, key)).sum())
        yield [part, stratum, n_ok, *(qs[q] for q in QUANTILES)]


def estimator_files(runs: Sequence[RunResult], external: bool = False, row_ids=None) -> dict[str, str]:
    """File name -> CSV text for one estimator's successful runs.

    Plot-data files cover the first replicate (both directions when
    external); the benefit/harm file covers every replicate.
    """
    runs = [r for r in runs if r.available]
    shown = runs if external else [r for r in runs if r.replicate == 0]
    part_cols = ["split", "partition"]
    summ = list(SUMMARY_FIELDS)
    files = {
        "subgroup_ate.csv": csv_text(
            part_cols + ["bin", "ite_low", "ite_high", "n", "mean_ite"] + summ, subgroup_rows(shown)),
        "outcome_ite_curves.csv": csv_text(
            part_cols + ["arm", "ite", "prob", "ci_low", "ci_high", "slope", "slope_se"],
            curve_rows(shown)),
        "benefit_harm_density.csv": csv_text(
            ["replicate"] + part_cols + ["stratum"] + summ, strata_rows(runs)),
        "calibration.csv": csv_text(
            part_cols + ["arm", "bin", "mean_predicted", "observed_rate", "n", "auc"],
            calibration_rows(shown)),
        "roc.csv": csv_text(part_cols + ["arm", "fpr", "tpr", "threshold"], roc_rows(shown)),
        "ite_density.csv": csv_text(part_cols + ["patient_id", "ite"], ite_rows(shown, row_ids)),
    }
    if runs:
        agg = aggregate(runs)
        files["benefit_harm_quantiles.csv"] = csv_text(
            ["partition", "stratum", "replicates"] + [f"q{q * 100:g}" for q in QUANTILES],
            quantile_rows(agg, runs[0].estimator))
    return files


def write_outputs(out_dir: str | Path, results: Sequence[RunResult], external: bool = False,
                  row_ids=None, manifest: dict | None = None) -> dict[str, str]:
    """Write the metrics table, per-estimator directories and manifest.

    Returns ``{estimator: error message}`` for estimators with no successful run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "metrics_table.csv", metrics_table_text(results, external))
    groups: dict[str, list[RunResult]] = {}
    for r in results:
        groups.setdefault(r.estimator, []).append(r)
    failed = {}
    for name, runs in groups.items():
        if not any(r.available for r in runs):
            failed[name] = next(r.error for r in runs if r.error)
            continue
        for fname, text in estimator_files(runs, external, row_ids).items():
            atomic_write_text(out / safe_name(name) / fname, text)
    if manifest is not None:
        atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return failed


# -- manifest ------------------------------------------------------------------

def canonical_hash(obj) -> str:
    """SHA-256 of canonical JSON, so formatting-only edits keep the hash."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict[str, str]:
    import numba
    import scipy

    from . import __version__

    return {"hteval": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def run_status(results: Sequence[RunResult]) -> dict:
    status = {}
    for r in results:
        entry = status.setdefault(r.estimator, {"completed": 0, "failed": 0, "errors": []})
        if r.available:
            entry["completed"] += 1
        else:
            entry["failed"] += 1
            entry["errors"].append({"replicate": r.replicate, "split": r.split_id, "error": r.error})
    return status
