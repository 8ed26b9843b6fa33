"""Benefit and harm strata when treatment does nothing.

Draws trials with no treatment effect at all, fits a T-learner random forest
on two thirds of each, and splits patients by the sign of their predicted
ITE. On the training rows the two strata look very different. On held-out
rows they do not, which is the signature of an estimator fitting noise.

    python demos/null_overfitting.py --replicates 20
"""

import argparse

from hteval.simulation import null_setting, run_simulation_study
from hteval.validation import QUANTILES, aggregate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    est = {"name": "t_learner.random_forest", "params": {"n_trees": 50}, "label": "T-RF"}
    study = run_simulation_study(["null"], [est], replicates=args.replicates, seed=args.seed,
                                 fresh_trials=True, configs={"null": null_setting(args.n, args.seed)})
    q = aggregate(study.results["null"]).quantiles()["T-RF"]

    print("risk difference (treated - control) within each stratum, across replicates")
    print(f"{'':16}" + "".join(f"{f'q{x * 100:g}':>9}" for x in QUANTILES))
    for key in ("train_benefit", "train_harm", "test_benefit", "test_harm"):
        print(f"{key:16}" + "".join(f"{q[key][x]:9.3f}" for x in QUANTILES))
    sep = q["train_harm"][0.5] - q["train_benefit"][0.5]
    diff = q["test_harm"][0.5] - q["test_benefit"][0.5]
    print(f"\nmedian harm - benefit: train {sep:.3f}, test {diff:+.4f}")


if __name__ == "__main__":
    main()
