"""Loading, harmonizing, merging and splitting randomized-trial datasets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigInvalid,
    DegenerateSplit,
    EmptyAfterFiltering,
    EmptyPartition,
    FeatureAbsent,
    MissingColumn,
    NoRegionColumn,
    NonBinaryValue,
    SchemaMismatch,
)
from .fileio import atomic_write_text
from .rng import make_rng

_ROW = object()  # key for the row id inside parsed CSV row dicts


@dataclass(frozen=True)
class TrialDataset:
    """Covariates, binary treatment and binary outcome for one (sub)trial.

    ``covariates`` is dense float64 with categorical columns already one-hot
    expanded (reference level dropped, names ``"<column>=<level>"``).
    ``provenance`` carries the per-row source label after :func:`merge`.
    ``row_ids`` holds patient identifiers when loaded from a file.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    feature_names: tuple[str, ...]
    region: np.ndarray | None = None
    source_label: str = ""
    provenance: np.ndarray | None = None
    n_dropped: int = 0
    row_ids: np.ndarray | None = None  # patient identifiers as strings

    def __post_init__(self):
        X = np.ascontiguousarray(self.covariates, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("covariates must be a 2-d matrix")
        t = np.asarray(self.treatment)
        y = np.asarray(self.outcome)
        n = X.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise ValueError("treatment/outcome length must equal number of rows")
        if not np.all((t == 0) | (t == 1)):
            raise NonBinaryValue("treatment must be 0/1")
        if not np.all((y == 0) | (y == 1)):
            raise NonBinaryValue("outcome must be 0/1")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates contain missing or non-finite values")
        if len(self.feature_names) != X.shape[1]:
            raise ValueError("feature_names length must equal matrix width")
        if n < 2 or t.sum() == 0 or t.sum() == n:
            raise ValueError("need n >= 2 with at least one patient per arm")
        for name, vec in (("region", self.region), ("provenance", self.provenance),
                          ("row_ids", self.row_ids)):
            if vec is not None and len(vec) != n:
                raise ValueError(f"{name} length must equal number of rows")
        X.setflags(write=False)
        t = t.astype(np.int8)
        y = y.astype(np.int8)
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    def subset(self, indices: Sequence[int]) -> "TrialDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return TrialDataset(
            self.covariates[idx],
            self.treatment[idx],
            self.outcome[idx],
            self.feature_names,
            None if self.region is None else self.region[idx],
            self.source_label,
            None if self.provenance is None else self.provenance[idx],
            row_ids=None if self.row_ids is None else self.row_ids[idx],
        )

    def select_features(self, names: Sequence[str]) -> "TrialDataset":
        cols = [self.feature_names.index(nm) for nm in names]
        return TrialDataset(
            self.covariates[:, cols],
            self.treatment,
            self.outcome,
            tuple(names),
            self.region,
            self.source_label,
            self.provenance,
            self.n_dropped,
            self.row_ids,
        )


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str = "numeric"  # or "categorical"

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise ConfigInvalid(f"covariate {self.name!r}: kind must be numeric or categorical")


@dataclass(frozen=True)
class ColumnMapping:
    """Which CSV columns play which role.

    ``treatment_values`` / ``outcome_values`` optionally recode raw cell text
    (e.g. ``{"Y": 1, "N": 0}``); a code mapped to ``None`` marks the cell as
    missing. Without a recode map cells must parse as 0 or 1.
    Row identifiers come from ``id_column``, else a ``patient_id`` column if
    present, else the 0-based data row number in the file.
    """

    treatment_column: str
    outcome_column: str
    covariate_columns: tuple[Covariate, ...]
    region_column: str | None = None
    missing_token: str = ""
    treatment_values: dict | None = None
    outcome_values: dict | None = None
    id_column: str | None = None

    def __post_init__(self):
        covs = tuple(c if isinstance(c, Covariate) else Covariate(*c) for c in self.covariate_columns)
        if not covs:
            raise ConfigInvalid("covariate list must be non-empty")
        names = [c.name for c in covs]
        if self.treatment_column in names or self.outcome_column in names:
            raise ConfigInvalid("treatment/outcome columns must not be listed among covariates")
        object.__setattr__(self, "covariate_columns", covs)

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        try:
            covs = []
            for c in d["covariates"]:
                if isinstance(c, str):
                    covs.append(Covariate(c))
                else:
                    covs.append(Covariate(c["name"], c.get("kind", "numeric")))
            return cls(
                treatment_column=d["treatment_column"],
                outcome_column=d["outcome_column"],
                covariate_columns=tuple(covs),
                region_column=d.get("region_column"),
                missing_token=d.get("missing_token", ""),
                treatment_values=d.get("treatment_values"),
                outcome_values=d.get("outcome_values"),
                id_column=d.get("id_column"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigInvalid(f"bad column mapping: {exc}") from exc

    @property
    def used_columns(self) -> list[str]:
        cols = [self.treatment_column, self.outcome_column]
        cols += [c.name for c in self.covariate_columns]
        if self.region_column:
            cols.append(self.region_column)
        return cols


class SplitMethod(Enum):
    RANDOM = "random"
    GEOGRAPHIC = "geographic"
    EXTERNAL = "external"


@dataclass(frozen=True)
class SplitAssignment:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int | None
    method: SplitMethod

    def __post_init__(self):
        if np.intersect1d(self.train_indices, self.test_indices).size:
            raise ValueError("train and test indices overlap")


def is_missing(cell: str | None, token: str) -> bool:
    if cell is None:
        return True
    s = cell.strip()
    return s == "" or s == token


def complete_cases(rows: list[dict], columns: Iterable[str], token: str = "") -> list[dict]:
    """Rows with a non-missing value in every listed column (idempotent)."""
    columns = list(columns)
    return [r for r in rows if not any(is_missing(r.get(c), token) for c in columns)]


def _natural_levels(values: Iterable[str]) -> list[str]:
    levels = sorted(set(values))
    try:
        return sorted(levels, key=float)
    except ValueError:
        return levels


def _binary(cells: list[str], column: str, recode: dict | None) -> np.ndarray:
    out = np.empty(len(cells), dtype=np.int8)
    for i, c in enumerate(cells):
        c = c.strip()
        if recode is not None:
            if c not in recode:
                raise NonBinaryValue(f"column {column!r}: value {c!r} not in recode map")
            v = float(recode[c])
        else:
            try:
                v = float(c)
            except ValueError:
                raise NonBinaryValue(f"column {column!r}: value {c!r} is not 0/1") from None
        if v not in (0.0, 1.0):
            raise NonBinaryValue(f"column {column!r}: value {c!r} is not 0/1")
        out[i] = int(v)
    return out


def load_csv_dataset(path: str | Path, mapping: ColumnMapping, source_label: str = "") -> TrialDataset:
    """Read a CSV, drop incomplete rows, one-hot encode categoricals.

    The number of dropped rows is available as ``dataset.n_dropped``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in mapping.used_columns:
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path.name}")
        rows = list(reader)
    id_col = mapping.id_column or ("patient_id" if "patient_id" in header else None)
    if id_col is not None and id_col not in header:
        raise MissingColumn(f"id column {id_col!r} not found in {path.name}")
    for k, r in enumerate(rows):
        r[_ROW] = r[id_col].strip() if id_col else str(k)

    kept = complete_cases(rows, mapping.used_columns, mapping.missing_token)
    for col, recode in ((mapping.treatment_column, mapping.treatment_values),
                        (mapping.outcome_column, mapping.outcome_values)):
        if recode is not None:
            kept = [r for r in kept if r[col].strip() not in recode or recode[r[col].strip()] is not None]
    if not kept:
        raise EmptyAfterFiltering(f"{path.name}: no complete rows")

    t = _binary([r[mapping.treatment_column] for r in kept], mapping.treatment_column,
                mapping.treatment_values)
    y = _binary([r[mapping.outcome_column] for r in kept], mapping.outcome_column,
                mapping.outcome_values)

    blocks = []
    names: list[str] = []
    for cov in mapping.covariate_columns:
        cells = [r[cov.name].strip() for r in kept]
        if cov.kind == "numeric":
            try:
                blocks.append(np.array([float(c) for c in cells])[:, None])
            except ValueError as exc:
                raise ConfigInvalid(f"numeric covariate {cov.name!r}: {exc}") from exc
            names.append(cov.name)
        else:
            levels = _natural_levels(cells)
            cells_arr = np.array(cells, dtype=object)
            for lev in levels[1:]:
                blocks.append((cells_arr == lev).astype(np.float64)[:, None])
                names.append(f"{cov.name}={lev}")
    X = np.hstack(blocks) if blocks else np.empty((len(kept), 0))
    region = None
    if mapping.region_column:
        region = np.array([r[mapping.region_column].strip() for r in kept], dtype=object)
    ids = np.array([r[_ROW] for r in kept], dtype=object)
    return TrialDataset(X, t, y, tuple(names), region, source_label or path.stem,
                        n_dropped=len(rows) - len(kept), row_ids=ids)


def _both_arms(t: np.ndarray) -> bool:
    return 0 < t.sum() < len(t)


def random_split(data: TrialDataset, train_fraction: float = 2 / 3, seed: int = 0) -> SplitAssignment:
    """Seeded random train/test split with ``round(n * train_fraction)`` training rows.

    Sampling is stratified by arm: the training part takes
    ``round(n_train * n_treated / n)`` treated rows, so its treated fraction
    is within ``1 / n_train`` of the full data. Rows are drawn with PCG64(seed),
    one permutation per arm (control first).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = data.n
    n_train = int(math.floor(n * train_fraction + 0.5))
    if n_train < 1 or n - n_train < 1:
        raise DegenerateSplit(f"n={n} too small for train_fraction={train_fraction}")
    t = data.treatment
    treated = np.flatnonzero(t == 1)
    control = np.flatnonzero(t == 0)
    k1 = int(math.floor(n_train * treated.size / n + 0.5))
    k1 = min(max(k1, n_train - control.size), treated.size)
    k0 = n_train - k1
    rng = make_rng(seed)
    c = rng.permutation(control)
    tr = rng.permutation(treated)
    train = np.sort(np.concatenate([c[:k0], tr[:k1]]))
    test = np.sort(np.concatenate([c[k0:], tr[k1:]]))
    if not all(len(part) < 2 or _both_arms(t[part]) for part in (train, test)):
        raise DegenerateSplit(f"n_treated={treated.size}, n_control={control.size} cannot fill "
                              f"both arms in a {len(train)}/{len(test)} split")
    return SplitAssignment(train, test, seed, SplitMethod.RANDOM)


def geographic_split(data: TrialDataset, train_regions: Iterable[str]) -> SplitAssignment:
    if data.region is None:
        raise NoRegionColumn("dataset has no region vector")
    train_regions = set(train_regions)
    observed = set(data.region.tolist())
    if not train_regions:
        raise EmptyPartition("train_regions is empty")
    mask = np.isin(data.region, list(train_regions))
    train = np.flatnonzero(mask)
    test = np.flatnonzero(~mask)
    if train.size == 0 or test.size == 0 or observed <= train_regions:
        raise EmptyPartition("geographic split leaves an empty partition")
    t = data.treatment
    if not (_both_arms(t[train]) and _both_arms(t[test])):
        raise DegenerateSplit("a geographic partition lacks one treatment arm")
    return SplitAssignment(train, test, None, SplitMethod.GEOGRAPHIC)


def harmonize(datasets: Sequence[TrialDataset], shared_features: Sequence[str]) -> list[TrialDataset]:
    """Restrict every dataset to ``shared_features`` in exactly that order."""
    for d in datasets:
        for name in shared_features:
            if name not in d.feature_names:
                raise FeatureAbsent(f"feature {name!r} absent from dataset {d.source_label!r}")
    return [d.select_features(shared_features) for d in datasets]


def merge(datasets: Sequence[TrialDataset]) -> TrialDataset:
    """Row-concatenate harmonized datasets, recording per-row provenance."""
    if not datasets:
        raise ValueError("nothing to merge")
    names = datasets[0].feature_names
    for d in datasets[1:]:
        if d.feature_names != names:
            raise SchemaMismatch(
                f"feature names of {d.source_label!r} differ from {datasets[0].source_label!r}")
    if len(datasets) == 1:
        return datasets[0]
    prov = np.concatenate([
        d.provenance if d.provenance is not None else np.full(d.n, d.source_label, dtype=object)
        for d in datasets
    ])
    regions = None
    if all(d.region is not None for d in datasets):
        regions = np.concatenate([d.region for d in datasets])
    ids = None
    if all(d.row_ids is not None for d in datasets):
        ids = np.concatenate([d.row_ids for d in datasets])
    return TrialDataset(
        np.vstack([d.covariates for d in datasets]),
        np.concatenate([d.treatment for d in datasets]),
        np.concatenate([d.outcome for d in datasets]),
        names,
        regions,
        "+".join(d.source_label for d in datasets),
        prov,
        sum(d.n_dropped for d in datasets),
        ids,
    )


def dataset_csv_text(data: TrialDataset, treatment_column: str = "treatment",
                     outcome_column: str = "outcome") -> str:
    """CSV text with a ``patient_id`` column (row ids or 0..n-1), numeric
    covariates in full precision, then treatment and outcome."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", *data.feature_names, treatment_column, outcome_column])
    ids = data.row_ids if data.row_ids is not None else [str(i) for i in range(data.n)]
    for i in range(data.n):
        w.writerow([ids[i], *(repr(float(v)) for v in data.covariates[i]),
                    int(data.treatment[i]), int(data.outcome[i])])
    return buf.getvalue()


def write_csv_dataset(data: TrialDataset, path: str | Path, treatment_column: str = "treatment",
                      outcome_column: str = "outcome") -> None:
    atomic_write_text(path, dataset_csv_text(data, treatment_column, outcome_column))


def numeric_mapping(feature_names: Sequence[str], treatment_column: str = "treatment",
                    outcome_column: str = "outcome") -> ColumnMapping:
    return ColumnMapping(treatment_column, outcome_column,
                         tuple(Covariate(nm) for nm in feature_names))
