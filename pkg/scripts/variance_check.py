"""Sandwich standard errors against the Monte Carlo SD of the estimates.

For each variance mode, prints the mean estimated SE of psi0 and psi1, the
empirical SD across replications, and the percentage deficit.

    python3 scripts/variance_check.py --scenario 5 --strategy local_all --reps 1000
"""
import argparse

import numpy as np

from fedwsurv.dwsurv import VARIANCE_MODES
from fedwsurv.experiment import SimulationConfig, run_simulation


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", type=int, default=5)
    p.add_argument("--strategy", default="local_all")
    p.add_argument("--tf", default="correct")
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    cfg = SimulationConfig(args.scenario, args.n, args.reps, tf=args.tf, strategy=args.strategy,
                           seed=args.seed, cohort_size=1000)
    results = run_simulation(cfg, args.workers)
    k = cfg.model_spec().pf
    for j, name in enumerate(("psi0", "psi1")):
        sd = np.std([r.psi[j] for r in results], ddof=1)
        for mode in VARIANCE_MODES:
            se = np.mean([r.se[mode][k + j] for r in results])
            print(f"{name} {mode:<20} mean SE {se:.5f}  empirical SD {sd:.5f}  "
                  f"deficit {100 * (sd - se) / sd:+.2f}%")


if __name__ == "__main__":
    main()
