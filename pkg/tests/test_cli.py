import csv
import json

import numpy as np
import pytest

from hteval.charts import KINDS
from hteval.cli import main

COVS = [f"x{j}" for j in range(1, 21)]
MAPPING = {"treatment_column": "treatment", "outcome_column": "outcome", "covariates": COVS,
           "id_column": "patient_id"}
TLR = {"name": "t_learner.logistic", "label": "T-LR"}
BROKEN = {"name": "causal_forest", "params": {"min_leaf_per_arm": 10_000}, "label": "CF-broken"}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def trial_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--setting", "I", "--n", "1000", "--seed", "7", "--out", str(d)]) == 0
    return d


def write_config(tmp_path, trial_dir, estimators, **extra):
    cfg = {"datasets": [{"path": str(trial_dir / "trial.csv"), "mapping": MAPPING}],
           "estimators": estimators, "seed": 3, **extra}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_is_byte_identical(tmp_path, trial_dir):
    again = tmp_path / "again"
    assert main(["simulate", "--setting", "I", "--n", "1000", "--seed", "7", "--out", str(again)]) == 0
    assert tree_bytes(again) == tree_bytes(trial_dir)


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--setting", "II", "--n", "100", "--seed", "1", "--out", str(tmp_path)]) == 0
    trial = read_rows(tmp_path / "trial.csv")
    ite = read_rows(tmp_path / "true_ite.csv")
    assert len(trial) == 101 and len(ite) == 101
    assert trial[0][0] == "patient_id" and trial[0][-2:] == ["treatment", "outcome"]
    assert len(trial[0]) == 6 + 3
    assert ite[0] == ["patient_id", "ite"]
    dgp = json.loads((tmp_path / "dgp.json").read_text())
    assert dgp["preset"] == "II" and len(dgp["feature_names"]) == 6


def test_simulate_rejects_bad_arguments(tmp_path, capsys):
    assert main(["simulate", "--setting", "IV", "--n", "100", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--setting", "I", "--n", "100", "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--setting", "I", "--n", "5", "--out", str(tmp_path)]) == 2


def test_validate_minimal_config(tmp_path, trial_dir):
    cfg = write_config(tmp_path, trial_dir, [TLR])
    out = tmp_path / "out"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 0
    table = read_rows(out / "metrics_table.csv")
    assert table[0] == ["estimator", "cfb_train", "cfb_test", "mbc_train", "mbc_test",
                        "pseudo_r2_train", "pseudo_r2_test"]
    assert len(table) == 2 and table[1][0] == "T-LR"
    for name in ("subgroup_ate.csv", "outcome_ite_curves.csv", "benefit_harm_density.csv",
                 "calibration.csv", "roc.csv", "ite_density.csv"):
        assert (out / "T-LR" / name).is_file(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["estimators"]["T-LR"] == {"completed": 1, "failed": 0, "errors": []}
    assert manifest["datasets"][0]["rows_used"] == 1000


def test_validate_output_dir_from_config(tmp_path, trial_dir):
    cfg = write_config(tmp_path, trial_dir, [TLR], output_dir="from_cfg")
    assert main(["validate", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_cfg" / "metrics_table.csv").is_file()


def test_validate_ignores_thread_count(tmp_path, trial_dir, monkeypatch):
    ests = [TLR, {"name": "t_learner.random_forest", "params": {"n_trees": 10}, "label": "T-RF"}]
    cfg = write_config(tmp_path, trial_dir, ests, replicates=3)
    outs = []
    for k in ("1", "4"):
        monkeypatch.setenv("HTE_THREADS", k)
        out = tmp_path / f"t{k}"
        assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(tree_bytes(out))
    assert outs[0] == outs[1]


def test_no_nonfinite_text_in_outputs(tmp_path, trial_dir):
    cfg = write_config(tmp_path, trial_dir, [TLR, BROKEN])
    out = tmp_path / "out"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 0
    for path in out.rglob("*.csv"):
        text = path.read_text().lower()
        for token in ("nan", "inf"):
            assert token not in text, (path, token)


def test_unknown_estimator_is_config_error(tmp_path, trial_dir, capsys):
    cfg = write_config(tmp_path, trial_dir, [{"name": "q_learner.logistic"}])
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "estimators[0]" in capsys.readouterr().err


def test_config_errors(tmp_path, trial_dir):
    assert main(["validate", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    cfg = write_config(tmp_path, trial_dir, [TLR], colour="blue")
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["validate"]) == 2


def test_missing_column_is_data_error(tmp_path, trial_dir, capsys):
    mapping = dict(MAPPING, covariates=COVS + ["x99"])
    cfg = {"datasets": [{"path": str(trial_dir / "trial.csv"), "mapping": mapping}], "estimators": [TLR]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["validate", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "x99" in capsys.readouterr().err


def test_all_estimators_failing_is_data_error(tmp_path, trial_dir):
    cfg = write_config(tmp_path, trial_dir, [BROKEN])
    out = tmp_path / "out"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 3
    table = read_rows(out / "metrics_table.csv")
    assert table[1] == ["CF-broken"] + ["-"] * 6


def test_failing_estimator_is_isolated(tmp_path, trial_dir, capsys):
    out = tmp_path / "out"
    assert main(["validate", "--config", str(write_config(tmp_path, trial_dir, [TLR, BROKEN])),
                 "--out", str(out)]) == 0
    assert "CF-broken" in capsys.readouterr().err
    assert not (out / "CF-broken").exists()
    rows = {r[0]: r[1:] for r in read_rows(out / "metrics_table.csv")[1:]}
    assert rows["CF-broken"] == ["-"] * 6
    assert "-" not in rows["T-LR"][:4]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["estimators"]["CF-broken"]["failed"] == 1
    assert "ArmTooSmall" in manifest["estimators"]["CF-broken"]["errors"][0]["error"]


def test_manifest_hash_tracks_content_not_format(tmp_path, trial_dir):
    cfg = {"datasets": [{"path": str(trial_dir / "trial.csv"), "mapping": MAPPING}],
           "estimators": [TLR], "seed": 3}
    hashes = []
    for k, text in enumerate([json.dumps(cfg), json.dumps(cfg, indent=4),
                              json.dumps(dict(cfg, seed=4))]):
        path = tmp_path / f"c{k}.json"
        path.write_text(text)
        out = tmp_path / f"o{k}"
        assert main(["validate", "--config", str(path), "--out", str(out)]) == 0
        hashes.append(json.loads((out / "manifest.json").read_text())["config_sha256"])
    assert hashes[0] == hashes[1]
    assert hashes[2] != hashes[0]


# -- metrics subcommand -----------------------------------------------------------

@pytest.fixture(scope="module")
def big_trial(tmp_path_factory):
    d = tmp_path_factory.mktemp("big")
    assert main(["simulate", "--setting", "I", "--n", "20000", "--seed", "11", "--out", str(d)]) == 0
    mapping = d / "mapping.json"
    mapping.write_text(json.dumps(MAPPING))
    return d, mapping


def metrics_table(out):
    header, row = read_rows(out / "metrics_table.csv")
    return dict(zip(header, row))


def test_metrics_true_ite_sidecar(tmp_path, big_trial):
    d, mapping = big_trial
    out = tmp_path / "m"
    assert main(["metrics", "--pred", str(d / "true_ite.csv"), "--data", str(d / "trial.csv"),
                 "--mapping", str(mapping), "--out", str(out)]) == 0
    row = metrics_table(out)
    assert float(row["pseudo_r2_test"]) > 0.9
    assert row["cfb_train"] == "-" and row["mbc_test"] == "-"
    assert (out / "true_ite" / "ite_density.csv").is_file()


def test_metrics_constant_global_effect(tmp_path, big_trial):
    d, mapping = big_trial
    rows = read_rows(d / "trial.csv")[1:]
    t = np.array([int(r[-2]) for r in rows])
    y = np.array([int(r[-1]) for r in rows])
    rd = float(y[t == 1].mean() - y[t == 0].mean())
    pred = tmp_path / "const.csv"
    pred.write_text("patient_id,ite,mu0,mu1\n" + "".join(
        f"{r[0]},{rd!r},0.3,{0.3 + rd!r}\n" for r in rows))
    out = tmp_path / "m"
    assert main(["metrics", "--pred", str(pred), "--data", str(d / "trial.csv"),
                 "--mapping", str(mapping), "--out", str(out)]) == 0
    row = metrics_table(out)
    assert row["cfb_test"] == "0.500"
    assert row["mbc_test"] == "0.500"
    assert abs(float(row["pseudo_r2_test"])) < 1e-3


def test_metrics_id_mismatch(tmp_path, big_trial):
    d, mapping = big_trial
    lines = (d / "true_ite.csv").read_text().splitlines()
    pred = tmp_path / "short.csv"
    pred.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["metrics", "--pred", str(pred), "--data", str(d / "trial.csv"),
                 "--mapping", str(mapping), "--out", str(tmp_path / "m")]) == 3


def test_metrics_mapping_with_k_bins(tmp_path, big_trial):
    d, _ = big_trial
    mapping = tmp_path / "mapping.json"
    mapping.write_text(json.dumps({"mapping": MAPPING, "k_bins": 4}))
    out = tmp_path / "m"
    assert main(["metrics", "--pred", str(d / "true_ite.csv"), "--data", str(d / "trial.csv"),
                 "--mapping", str(mapping), "--out", str(out)]) == 0
    bins = {r[2] for r in read_rows(out / "true_ite" / "subgroup_ate.csv")[1:]}
    assert bins == {"0", "1", "2", "3"}


# -- chart subcommand ---------------------------------------------------------------

@pytest.fixture(scope="module")
def emitted(tmp_path_factory, trial_dir):
    d = tmp_path_factory.mktemp("emit")
    cfg = {"datasets": [{"path": str(trial_dir / "trial.csv"), "mapping": MAPPING}],
           "estimators": [TLR], "replicates": 2}
    path = d / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["validate", "--config", str(path), "--out", str(d / "out")]) == 0
    return d / "out" / "T-LR"


@pytest.mark.parametrize("kind", KINDS)
def test_chart_renders_every_kind(tmp_path, emitted, kind):
    svg = tmp_path / f"{kind}.svg"
    assert main(["chart", "--kind", kind, "--in", str(emitted / f"{kind}.csv"), "--out", str(svg)]) == 0
    text = svg.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    again = tmp_path / "again.svg"
    assert main(["chart", "--kind", kind, "--in", str(emitted / f"{kind}.csv"), "--out", str(again)]) == 0
    assert again.read_bytes() == svg.read_bytes()


def test_chart_subgroup_has_reference_line(tmp_path, emitted):
    svg = tmp_path / "s.svg"
    assert main(["chart", "--kind", "subgroup_ate", "--in", str(emitted / "subgroup_ate.csv"),
                 "--out", str(svg)]) == 0
    assert 'stroke-dasharray="4,4"' in svg.read_text()


def test_chart_errors(tmp_path, emitted):
    src = str(emitted / "roc.csv")
    assert main(["chart", "--kind", "violin", "--in", src, "--out", str(tmp_path / "a.svg")]) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("split,partition,arm,fpr,tpr,threshold\n")
    assert main(["chart", "--kind", "roc", "--in", str(empty), "--out", str(tmp_path / "b.svg")]) == 2
