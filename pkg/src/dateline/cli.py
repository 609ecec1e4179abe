"""Command-line entry point: ``dateline {fit,sample,verify,bounds,eval}``.

Exit codes: 0 success, 1 input or validation error (or a failed verify
property), 2 fit stopped at the iteration limit without converging.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import _accel
from .data import DataError, load_dataset
from .errors import DivergenceError, EnumerationCapError
from .estimation import FitConfig, evaluate_ranking, fit
from .network import load_checkpoint, log_scores, save_checkpoint
from .synthgen import SynthSpec, generate, save_truth
from .uncertainty import load_profiles, save_profiles

logger = logging.getLogger("dateline")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


def _fail(msg):
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def _check_distinct(outputs, inputs):
    ins = {Path(p).resolve() for p in inputs if p is not None}
    for o in outputs:
        if Path(o).resolve() in ins:
            raise UsageError(f"output {o} would overwrite an input file")


def _fit_config(args):
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        known = {f.name for f in fields(FitConfig)}
        bad = sorted(set(cfg) - known)
        if bad:
            raise UsageError(f"unknown config keys: {', '.join(bad)}")
    overrides = {
        "max_iterations": args.max_iter, "lr": args.lr, "tol": args.tol,
        "seed": args.seed, "hidden": args.hidden,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return FitConfig(**cfg)


def cmd_fit(args):
    _accel.set_threads(args.threads)
    out = Path(args.out_dir)
    paths = {name: out / name for name in ("model.json", "profiles.jsonl", "trajectory.csv")}
    _check_distinct(paths.values(), [args.catalog, args.prefs, args.profiles, args.config])
    config = _fit_config(args)
    ds = load_dataset(args.catalog, args.prefs)
    profiles = None
    if args.profiles:
        profiles = load_profiles(args.profiles)
        config.fit_eta = False
    out.mkdir(parents=True, exist_ok=True)
    res = fit(ds, config, profiles=profiles, progress=paths["trajectory.csv"])
    save_checkpoint(res.model, paths["model.json"], res.centering, res.log_scores)
    save_profiles(res.profiles, paths["profiles.jsonl"])
    print(f"loglik={res.loglik!r} iterations={res.trajectory[-1][0]} converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_sample(args):
    try:
        spec = SynthSpec.load(args.spec)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"cannot read spec {args.spec}: {exc}") from None
    spec.seed = args.seed
    out = Path(args.out_dir)
    names = ("catalog.jsonl", "preferences.jsonl", "profiles.jsonl", "truth.json")
    _check_distinct([out / n for n in names], [args.spec])
    ds, lam, profiles = generate(spec)
    out.mkdir(parents=True, exist_ok=True)
    from .data import save_dataset

    save_dataset(ds, out / "catalog.jsonl", out / "preferences.jsonl")
    save_profiles(profiles, out / "profiles.jsonl")
    save_truth(out / "truth.json", lam, spec.seed)
    print(f"wrote {len(ds.preferences)} preferences over {len(ds.catalog)} objects to {out}")
    return EXIT_OK


def cmd_verify(args):
    from . import verify

    results = verify.run(only=args.only, inject=args.inject, seed=args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_INPUT


def cmd_bounds(args):
    from . import theory

    try:
        spec = SynthSpec.load(args.spec)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"cannot read spec {args.spec}: {exc}") from None
    if args.seed is not None:
        spec.seed = args.seed
    try:
        grid = [int(x) for x in args.n_grid.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--n-grid must be comma-separated integers, got {args.n_grid!r}") from None
    if not grid or min(grid) < 1:
        raise UsageError("--n-grid needs positive integers")
    spec.check()
    rows, reports = theory.empirical_risk_experiment(
        spec, grid, args.reps, alpha=args.alpha, processes=args.processes
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "risk.csv").write_text(theory.risk_table_csv(rows), encoding="utf-8")
    (out / "bounds.json").write_text(
        json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8"
    )
    for r in rows:
        print(f"N_w={r['N_w']} risk_L={r['mean_risk_L']:.4g} lower_L={r['lower_L']:.4g} "
              f"upper_L={r['upper_L']:.4g} failed={r['failed']}")
    return EXIT_OK


def cmd_eval(args):
    model, doc = load_checkpoint(args.checkpoint)
    truth = json.loads(Path(args.truth).read_text(encoding="utf-8"))
    lam_star = np.asarray(truth["lambda_star"], dtype=np.float64)
    if args.catalog:
        from .data import load_catalog

        f, _ = log_scores(model, load_catalog(args.catalog))
    elif "log_scores" in doc:
        f = np.asarray(doc["log_scores"], dtype=np.float64)
    else:
        raise UsageError("checkpoint has no stored scores; pass --catalog")
    tau, gap = evaluate_ranking(np.exp(f - f.max()), lam_star)
    print(f"kendall_tau={tau!r} log_score_gap={gap!r}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dateline", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit scores and worker profiles")
    f.add_argument("--catalog", required=True)
    f.add_argument("--prefs", required=True)
    f.add_argument("--out-dir", required=True)
    f.add_argument("--seed", type=int, required=True)
    f.add_argument("--max-iter", type=int)
    f.add_argument("--lr", type=float)
    f.add_argument("--tol", type=float)
    f.add_argument("--hidden", type=int, help="hidden width, 0 for a linear score model")
    f.add_argument("--threads", type=int)
    f.add_argument("--config", help="JSON file of fit settings; flags override it")
    f.add_argument("--profiles", help="hold worker profiles fixed at these values")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("sample", help="draw a synthetic dataset")
    s.add_argument("--spec", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--only")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject", choices=["gradient-sign"], help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bounds", help="risk-versus-N sweep with minimax bound columns")
    b.add_argument("--spec", required=True)
    b.add_argument("--n-grid", required=True, help="comma-separated N_w values")
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--seed", type=int)
    b.add_argument("--processes", type=int, default=1)
    b.set_defaults(func=cmd_bounds)

    e = sub.add_parser("eval", help="compare a fitted checkpoint with true scores")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--catalog", help="recompute scores from the model on this catalog")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, EnumerationCapError, DivergenceError, KeyError,
            ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        return _fail(msg)


if __name__ == "__main__":
    sys.exit(main())
