"""Relative bias of each strategy as the sample size grows.

Used to check consistency (correct treatment-free model) and double
robustness (misspecified treatment-free model with local nuisance models).

    python3 scripts/large_sample.py --scenario 6 --tf misspecified --n 2500,25000,250000 --reps 40
"""
import argparse

from fedwsurv.experiment import SimulationConfig, run_simulation, summarize_results


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", type=int, default=5)
    p.add_argument("--tf", default="correct")
    p.add_argument("--strategies", default="global_all,local_all,local_selected")
    p.add_argument("--n", default="2500,25000,250000")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    for n in map(int, args.n.split(",")):
        for strategy in args.strategies.split(","):
            cfg = SimulationConfig(args.scenario, n, args.reps, tf=args.tf, strategy=strategy,
                                   seed=args.seed, cohort_size=10_000)
            s = summarize_results(cfg, run_simulation(cfg, args.workers))
            rb, se = s.relative_bias_pct, 100 * s.mc_se / abs(s.truth)
            print(f"n={n:<7} {strategy:<15} RB psi0 {rb[0]:+7.2f}% (MC SE {se[0]:.2f})  "
                  f"RB psi1 {rb[1]:+7.2f}% (MC SE {se[1]:.2f})", flush=True)


if __name__ == "__main__":
    main()
