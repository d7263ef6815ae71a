"""Command-line entry point.

    fedwsurv simulate       Monte Carlo runs of one scenario/strategy
    fedwsurv generate       dump one simulated dataset as CSV
    fedwsurv fit            fit a rule to a CSV dataset
    fedwsurv site-summarize export one site's aggregate payload
    fedwsurv combine        combine payload files at the coordinator
    fedwsurv screen         per-site covariate screening report
    fedwsurv report         metrics table from a per-replication estimates file

Errors exit non-zero with ``error: <category>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .core import (DegeneratePredictorError, ModelSpec, NoInformationError, PositivityError,
                   SchemaError, SingularityError)
from .dwsurv import AS_WRITTEN, VARIANCE_MODES, decide
from .evaluator import summarize, write_metrics_csv
from .experiment import (GLOBAL_ALL, GLOBAL_INTERCEPT, INTERCEPT_ONLY, LOCAL_ALL, LOCAL_SELECTED,
                         METHOD_LABELS, STRATEGIES, SimulationConfig, fit_dataset, run_simulation,
                         summarize_results, write_rep_csv)
from .federation import (LocalAll, LocalSelected, PayloadFormatError, ProtocolError, Supplied,
                         combine, format_matrix, format_real, format_vector, read_payload,
                         site_summarize, write_payload)
from .io import read_dataset, read_nuisances, write_dataset
from .selection import screen_site, screen_sites
from .simgen import EFFECTS, ScenarioConfig, gen_dataset
from .weights import IPT, OVERLAP, WeightSpec

ERROR_CATEGORIES = (
    (SchemaError, "schema"),
    (SingularityError, "singularity"),
    (NoInformationError, "no_information"),
    (DegeneratePredictorError, "degenerate_predictor"),
    (PositivityError, "positivity"),
    (ProtocolError, "protocol"),
    (PayloadFormatError, "payload_format"),
    (OSError, "io"),
)


class UsageError(Exception):
    pass


def _write_kv(path, items):
    with open(path, "w") as fh:
        for key, val in items:
            fh.write(f"{key} = {val}\n")


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_simulate(args):
    try:
        cfg = SimulationConfig(args.scenario, args.n, args.reps, args.effect, args.tf, args.strategy,
                               args.seed, args.variance_mode, args.cohort_size, args.selection,
                               args.alpha, args.weights)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    results = run_simulation(cfg, args.workers)
    out = _out_dir(args.out)
    summary = summarize_results(cfg, results)
    write_metrics_csv(os.path.join(out, "metrics.csv"), summary.rows(cfg.method, cfg.scenario))
    write_rep_csv(os.path.join(out, "estimates.csv"), cfg, results)
    for row in summary.rows(cfg.method, cfg.scenario):
        print(f"{row['method']} sc{row['scenario']} {row['param']}: mean {row['mean']:.4f} "
              f"[{row['lo']:.3f}; {row['hi']:.3f}] RB {row['rb_pct']:.3f}% MSE {row['mse']:.4f}")
    print(f"dVF {summary.dvf_mean:.4f} (SD {summary.dvf_sd:.4f}) over {summary.n_reps} reps"
          + ("; single replication, SD undefined" if summary.degenerate else ""))
    return 0


def cmd_generate(args):
    ds, _ = gen_dataset(ScenarioConfig(args.scenario, args.n, args.effect, args.seed), args.rep)
    write_dataset(ds, args.out)
    return 0


def _load_spec(path) -> ModelSpec:
    with open(path) as fh:
        return ModelSpec.from_text(fh.read())


def cmd_fit(args):
    ds = read_dataset(args.data)
    spec = _load_spec(args.spec)
    spec.validate_against(ds)
    wspec = WeightSpec(args.weights, args.truncate)
    strategy = args.strategy
    candidates = sorted({v for e in spec.treatment_model + spec.censoring_model for v in e.variables}
                        - {"a"}) or list(ds.covariate_names)
    if strategy == LOCAL_SELECTED:
        def chooser(site, ds_j):
            return screen_site(ds_j, candidates, args.alpha).nuisance()
    elif strategy in (INTERCEPT_ONLY, GLOBAL_INTERCEPT):
        spec = ModelSpec(spec.treatment_free, spec.blip)
        chooser = None
    else:
        chooser = None
    rule, _ = fit_dataset(ds, spec, strategy, args.variance_mode, wspec, chooser)
    out = _out_dir(args.out)
    se = rule.standard_errors
    names = spec.column_names
    _write_kv(os.path.join(out, "rule.txt"), [
        ("strategy", f'"{strategy}"'),
        ("variance_mode", f'"{args.variance_mode}"'),
        ("columns", "[" + ", ".join(f'"{n}"' for n in names) + "]"),
        ("theta", format_vector(rule.theta)),
        ("se", format_vector(se)),
        ("covariance", format_matrix(rule.covariance)),
        ("n_events", rule.n_events),
    ])
    rec = np.asarray(decide(rule, ds))
    blip = rule.blip(ds)
    with open(os.path.join(out, "decisions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "blip", "recommended_a"])
        for i, b, d in zip(ds.id, blip, rec):
            w.writerow([int(i), repr(float(b)), int(d)])
    for n, t, s in zip(names, rule.theta, se):
        print(f"{n:>12s} {t: .6f} (SE {s:.6f})")
    return 0


def cmd_site_summarize(args):
    ds = read_dataset(args.data)
    if args.site is not None:
        mask = ds.site == args.site
        if not np.any(mask):
            raise SchemaError(f"no records for site {args.site}")
        ds = ds.subset(mask)
    spec = _load_spec(args.spec)
    if args.supplied:
        pi, phi = read_nuisances(args.supplied, ds)
        nuisance = Supplied(pi, phi)
    elif args.strategy == LOCAL_SELECTED:
        candidates = args.candidates.split(",") if args.candidates else list(ds.covariate_names)
        nuisance = screen_site(ds, candidates, args.alpha).nuisance()
    elif args.strategy == INTERCEPT_ONLY:
        nuisance = LocalSelected()
    else:
        nuisance = LocalAll()
    payload = site_summarize(ds, spec, WeightSpec(args.weights, args.truncate), nuisance)
    write_payload(payload, args.out)
    print(f"site {payload.site_id}: {payload.n_events} events, p = {payload.p} -> {args.out}")
    return 0


def cmd_combine(args):
    payloads = [read_payload(p) for p in args.payloads]
    fit = combine(payloads, args.variance_mode)
    if args.out:
        _write_kv(args.out, [
            ("variance_mode", f'"{fit.variance_mode}"'),
            ("spec_hash", f'"{fit.spec_hash}"'),
            ("sites_used", "[" + ", ".join(str(s) for s in fit.sites_used) + "]"),
            ("n_events", fit.n_events),
            ("theta", format_vector(fit.theta)),
            ("se", format_vector(fit.standard_errors)),
            ("covariance", format_matrix(fit.covariance)),
            ("per_site_sigma", "[" + ", ".join("null" if np.isnan(s) else format_real(s)
                                               for s in fit.per_site_sigma) + "]"),
        ])
    for k, (t, s) in enumerate(zip(fit.theta, fit.standard_errors)):
        print(f"theta[{k}] = {t:.10g}  (SE {s:.6g})")
    for site, sig in zip(fit.sites_used, fit.per_site_sigma):
        print(f"site {site}: sigma = {sig:.6g}")
    return 0


def cmd_screen(args):
    ds = read_dataset(args.data)
    candidates = args.candidates.split(",") if args.candidates else list(ds.covariate_names)
    report = screen_sites(ds, candidates, args.alpha)
    report.write_csv(args.out)
    for s in report.sites:
        print(f"site {s.site}: treatment {list(s.treatment_vars)} censoring {list(s.censoring_vars)}")
    return 0


def cmd_report(args):
    with open(args.estimates, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{args.estimates}: no replications")
    est = np.array([[float(r["psi0"]), float(r["psi1"])] for r in rows])
    dvf = [float(r["dvf"]) for r in rows]
    summary = summarize(est, EFFECTS[args.effect], dvf)
    write_metrics_csv(args.out, summary.rows(args.method, args.scenario))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedwsurv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def weight_opts(sp):
        sp.add_argument("--weights", choices=(OVERLAP, IPT), default=OVERLAP)
        sp.add_argument("--truncate", type=float, default=None,
                        help="probability floor applied before weighting")

    s = sub.add_parser("simulate", help="Monte Carlo runs of one configuration")
    s.add_argument("--scenario", type=int, required=True, choices=range(1, 8))
    s.add_argument("--n", type=int, default=2500)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--effect", choices=sorted(EFFECTS), default="small")
    s.add_argument("--tf", choices=("correct", "misspecified"), default="correct")
    s.add_argument("--strategy", choices=STRATEGIES, default=GLOBAL_ALL)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--variance-mode", choices=VARIANCE_MODES, default=AS_WRITTEN)
    s.add_argument("--cohort-size", type=int, default=100_000)
    s.add_argument("--selection", choices=("known", "screen"), default="known",
                   help="local_selected: true local confounders or per-site screening")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--weights", choices=(OVERLAP, IPT), default=OVERLAP)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("generate", help="write one simulated dataset as CSV")
    g.add_argument("--scenario", type=int, required=True, choices=range(1, 8))
    g.add_argument("--n", type=int, default=2500)
    g.add_argument("--effect", choices=sorted(EFFECTS), default="small")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--rep", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a treatment rule to a CSV dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--spec", required=True)
    f.add_argument("--strategy", choices=STRATEGIES, default=GLOBAL_ALL)
    f.add_argument("--variance-mode", choices=VARIANCE_MODES, default=AS_WRITTEN)
    f.add_argument("--alpha", type=float, default=0.05)
    weight_opts(f)
    f.add_argument("--out", default="fit_out")
    f.set_defaults(func=cmd_fit)

    ss = sub.add_parser("site-summarize", help="export one site's aggregate payload")
    ss.add_argument("--data", required=True)
    ss.add_argument("--spec", required=True)
    ss.add_argument("--site", type=int, default=None, help="keep only this site's rows")
    ss.add_argument("--strategy", choices=(LOCAL_ALL, LOCAL_SELECTED, INTERCEPT_ONLY),
                    default=LOCAL_ALL)
    ss.add_argument("--supplied", default=None, help="CSV with id,pi,phi to use instead of fitting")
    ss.add_argument("--candidates", default=None)
    ss.add_argument("--alpha", type=float, default=0.05)
    weight_opts(ss)
    ss.add_argument("--out", required=True)
    ss.set_defaults(func=cmd_site_summarize)

    c = sub.add_parser("combine", help="combine site payloads")
    c.add_argument("payloads", nargs="+")
    c.add_argument("--variance-mode", choices=VARIANCE_MODES, default=AS_WRITTEN)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_combine)

    sc = sub.add_parser("screen", help="per-site covariate screening")
    sc.add_argument("--data", required=True)
    sc.add_argument("--candidates", default=None)
    sc.add_argument("--alpha", type=float, default=0.05)
    sc.add_argument("--out", required=True)
    sc.set_defaults(func=cmd_screen)

    r = sub.add_parser("report", help="metrics CSV from an estimates CSV")
    r.add_argument("--estimates", required=True)
    r.add_argument("--effect", choices=sorted(EFFECTS), default="small")
    r.add_argument("--scenario", type=int, required=True)
    r.add_argument("--method", default=METHOD_LABELS[GLOBAL_ALL])
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except tuple(cls for cls, _ in ERROR_CATEGORIES) as exc:
        category = next(name for cls, name in ERROR_CATEGORIES if isinstance(exc, cls))
        print(f"error: {category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
