"""JSON run configuration for ``hteval validate`` (schema in docs/config.md)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .data import ColumnMapping, TrialDataset, harmonize, load_csv_dataset
from .errors import ConfigInvalid
from .estimators import EstimatorSpec, parse_estimator
from .validation import Mode, ValidationPlan

TOP_KEYS = {"datasets", "shared_features", "mode", "estimators", "replicates", "k_bins",
            "train_fraction", "seed", "train_regions", "scale", "grid_size", "output_dir"}
DATASET_KEYS = {"path", "label", "mapping"}


@dataclass(frozen=True)
class DatasetRef:
    path: Path
    label: str
    mapping: ColumnMapping


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path
    datasets: tuple[DatasetRef, ...]
    shared_features: tuple[str, ...] | None
    mode: Mode
    estimators: tuple[EstimatorSpec, ...]
    replicates: int
    k_bins: int
    train_fraction: float
    seed: int
    train_regions: tuple[str, ...] | None
    scale: str
    grid_size: int
    output_dir: Path | None


def _int(d, key, default, lo=None):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigInvalid(f"{key!r} must be an integer")
    if lo is not None and v < lo:
        raise ConfigInvalid(f"{key!r} must be >= {lo}")
    return v


def parse_config(raw: Any, base_dir: str | Path = ".") -> RunConfig:
    """Validate a decoded config object; relative paths resolve against ``base_dir``."""
    base_dir = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    if not raw.get("datasets"):
        raise ConfigInvalid("'datasets' must be a non-empty list")
    refs = []
    for k, d in enumerate(raw["datasets"]):
        if not isinstance(d, dict) or "path" not in d or "mapping" not in d:
            raise ConfigInvalid(f"datasets[{k}] needs 'path' and 'mapping'")
        extra = set(d) - DATASET_KEYS
        if extra:
            raise ConfigInvalid(f"datasets[{k}]: unknown keys {sorted(extra)}")
        path = base_dir / d["path"]
        if not path.is_file():
            raise ConfigInvalid(f"datasets[{k}].path: file not found: {d['path']}")
        refs.append(DatasetRef(path, str(d.get("label") or path.stem), ColumnMapping.from_dict(d["mapping"])))
    try:
        mode = Mode(raw.get("mode", "internal_random"))
    except ValueError:
        raise ConfigInvalid(f"'mode' must be one of {[m.value for m in Mode]}") from None
    ests = raw.get("estimators")
    if not isinstance(ests, list) or not ests:
        raise ConfigInvalid("'estimators' must be a non-empty list")
    specs = []
    for k, e in enumerate(ests):
        try:
            specs.append(parse_estimator(e))
        except ConfigInvalid as exc:
            raise ConfigInvalid(f"estimators[{k}]: {exc}") from None
    for s in specs:
        if s.replicates is not None and (not isinstance(s.replicates, int) or s.replicates < 1):
            raise ConfigInvalid(f"estimator {s.display!r}: replicates must be a positive integer")
    tf = raw.get("train_fraction", 2 / 3)
    if not isinstance(tf, (int, float)) or not 0 < tf < 1:
        raise ConfigInvalid("'train_fraction' must lie in (0, 1)")
    scale = raw.get("scale", "rr")
    if scale not in ("rd", "rr", "or"):
        raise ConfigInvalid("'scale' must be rd, rr or or")
    shared = raw.get("shared_features")
    regions = raw.get("train_regions")
    out = raw.get("output_dir")
    return RunConfig(
        raw, base_dir, tuple(refs), None if shared is None else tuple(shared), mode, tuple(specs),
        _int(raw, "replicates", 1, 1), _int(raw, "k_bins", 10, 2), float(tf),
        _int(raw, "seed", 0, 0), None if regions is None else tuple(str(r) for r in regions),
        scale, _int(raw, "grid_size", 50, 2), None if out is None else base_dir / out,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_bytes())
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from None
    return parse_config(raw, path.parent)


def load_datasets(cfg: RunConfig) -> list[TrialDataset]:
    data = [load_csv_dataset(r.path, r.mapping, r.label) for r in cfg.datasets]
    if cfg.shared_features is not None:
        data = harmonize(data, cfg.shared_features)
    return data


def build_plan(cfg: RunConfig, datasets: list[TrialDataset] | None = None) -> ValidationPlan:
    datasets = load_datasets(cfg) if datasets is None else datasets
    return ValidationPlan(cfg.mode, tuple(datasets), cfg.estimators, cfg.train_fraction,
                          cfg.replicates, cfg.k_bins, cfg.seed, cfg.train_regions, cfg.scale,
                          cfg.grid_size)
