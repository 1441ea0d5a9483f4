"""Command-line entry point: ``cofu simulate | fit | cv | eval | roc | ooi | replay``.

Every command writes into ``--out`` and leaves exactly one ``manifest.json``
there. Numeric outputs depend only on the inputs, flags and ``--seed``; the
worker count (``--threads`` or ``COFU_THREADS``) changes speed, not results.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import PenaltyConfig
from .evaluate import (
    COMMUNITY_POSITIVE,
    IdentificationTruth,
    community_rates,
    detect_commonality,
    effect_rates,
    ermse,
    grid_panels,
    ooi,
    prmse,
    prmse_normalized,
    roc_from_panels,
    train_test_split,
)
from .io import (
    MANIFEST,
    DataDir,
    FormatError,
    load_replicate,
    predictor_names,
    read_json,
    save_replicate,
    write_json,
    write_panel,
    write_table,
)
from .parallel import pmap, resolve_threads
from .selection import (
    METHODS,
    fit_cofu,
    fit_method_cv,
    fit_plasso,
    fit_slasso,
    lambda1_max,
    make_grid,
    validation_loss,
)
from .simgen import EffectScheme, SimScenario, simulate

log = logging.getLogger("cofu")

EXIT_NONCONVERGED = 3
COEF_RULES = {"const": "constant_half", "unif": "uniform_02_1", "graded": "stage_graded"}


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def _rho(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--rho expects three numbers a,h,n, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"--rho expects three numbers a,h,n, got {text!r}")
    return vals


def _manifest(args, start: float, inputs, outputs, extra=None) -> dict:
    skip = {"func", "argv"}
    m = {
        "command": args.command,
        "argv": args.argv,
        "parameters": {k: v for k, v in sorted(vars(args).items()) if k not in skip},
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "software": {"cofu": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "wall_clock_seconds": round(time.perf_counter() - start, 3),
    }
    if extra:
        m.update(extra)
    return m


def _load(path, standardize: bool) -> DataDir:
    d = load_replicate(path)
    if standardize:
        d.data = d.data.standardized()
    return d


def _model(args, d: DataDir) -> str:
    if args.model:
        return args.model
    if d.manifest and "model" in d.manifest.get("scenario", {}):
        return d.manifest["scenario"]["model"]
    return "lr"


def _replicate_dirs(path: Path) -> list[Path]:
    """A replicate directory itself, or the replicate subdirectories of a scenario root."""
    path = Path(path)
    if (path / "X_1.csv").exists():
        return [path]
    subs = sorted(p for p in path.iterdir() if p.is_dir() and (p / "X_1.csv").exists())
    if not subs:
        raise FormatError(f"{path}: neither a replicate directory nor a scenario root")
    return subs


def _finish(converged: bool, args) -> int:
    if converged or args.allow_nonconverged:
        return 0
    log.error("some fits did not converge (pass --allow-nonconverged to accept them)")
    return EXIT_NONCONVERGED


# -- simulate --------------------------------------------------------------------

def _scenario(args) -> SimScenario:
    rule = COEF_RULES[args.coef]
    if rule == "stage_graded" and args.k != 3:
        raise UsageError("--coef graded requires --k 3")
    if args.rho[1] > 0 and args.k != 3:
        raise UsageError("half-overlapping communities (--rho a,h,n with h > 0) require --k 3")
    try:
        return SimScenario(p=args.p, K=args.k, n=args.n, L=args.l, correlation=args.corr,
                           effects=EffectScheme(args.r, args.rho, rule), model=args.model,
                           seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _scenario_dict(s: SimScenario) -> dict:
    return {"p": s.p, "K": s.K, "n": s.n, "L": s.L, "correlation": s.correlation,
            "rho": list(s.effects.rho), "r": s.effects.r,
            "coefficient_rule": s.effects.coefficient_rule, "model": s.model, "seed": s.seed}


def _simulate_task(job):
    scenario, rep, directory = job
    r = simulate(scenario, rep)
    files = save_replicate(directory, r.data, r.partition, r.panel, r.labels)
    write_json(directory / MANIFEST, {
        "command": "simulate-replicate",
        "scenario": _scenario_dict(scenario),
        "replicate": rep,
        "seed": scenario.seed,
        "files": files,
        "correlation_min_eigenvalue": r.correlation.lambda_min,
        "software": {"cofu": __version__},
    })
    return directory.name


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    scenario = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(args.reps)))
    jobs = [(scenario, rep, out / f"rep_{rep + 1:0{width}d}") for rep in range(args.reps)]
    names = pmap(_simulate_task, jobs, args.threads)
    write_json(out / MANIFEST, _manifest(args, start, [], names,
                                         {"scenario": _scenario_dict(scenario)}))
    log.info("wrote %d replicate(s) under %s", len(names), out)
    return 0


# -- fit / cv --------------------------------------------------------------------

def cmd_fit(args) -> int:
    start = time.perf_counter()
    d = _load(args.data, args.standardize)
    model = _model(args, d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"method": args.method, "model": model}
    if args.method == "cofu":
        cfg = PenaltyConfig(args.lambda1, args.lambda2, epsilon=args.epsilon, max_iter=args.max_iter)
        res = fit_cofu(d.data, d.partition, cfg, model)
        panel, converged = res.panel, res.converged
        summary.update(converged=res.converged, iterations=res.iterations,
                       objective=res.objective, residual_norms=list(res.residual_norms),
                       inner_failures=res.inner_failures)
    elif args.method == "slasso":
        panel, converged = fit_slasso(d.data, [args.lambda1] * d.data.K, model), True
        summary.update(converged=True)
    else:
        panel, converged = fit_plasso(d.data, args.lambda1, model), True
        summary.update(converged=True)
    write_panel(out / "coefficients.csv", panel)
    write_json(out / MANIFEST, _manifest(args, start, [args.data], ["coefficients.csv"],
                                         {"convergence": summary}))
    return _finish(converged, args)


def cmd_cv(args) -> int:
    start = time.perf_counter()
    d = _load(args.data, args.standardize)
    model = _model(args, d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fit = fit_method_cv(d.data, d.partition, args.method, args.folds, args.seed, model,
                        args.threads, epsilon=args.epsilon, max_iter=args.max_iter)
    outputs = ["coefficients.csv"]
    extra = {"method": args.method, "model": model, "selected_lambda1": fit.lambda1,
             "selected_lambda2": fit.lambda2, "convergence": {"refit_converged": fit.converged}}
    if fit.cv is not None:
        rep = fit.cv
        rows = []
        for j, l2 in enumerate(rep.lambda2_values):
            for i, l1 in enumerate(rep.lambda1_values):
                row = {"lambda1": float(l1), "lambda2": float(l2), "mean_loss": float(rep.mean_loss[j, i])}
                for v in range(rep.fold_loss.shape[0]):
                    row[f"fold{v + 1}"] = float(rep.fold_loss[v, j, i])
                rows.append(row)
        write_table(out / "cv_loss.csv", rows)
        outputs.append("cv_loss.csv")
        extra["convergence"]["nonconverged_grid_fits"] = rep.nonconverged
    write_panel(out / "coefficients.csv", fit.panel)
    write_json(out / MANIFEST, _manifest(args, start, [args.data], outputs, extra))
    return _finish(fit.converged, args)


# -- eval ------------------------------------------------------------------------

def _eval_task(job):
    directory, method, args_d = job
    d = _load(directory, args_d["standardize"])
    model = args_d["model"] or (d.manifest or {}).get("scenario", {}).get("model", "lr")
    train, test = train_test_split(d.data, (2, 1), args_d["seed"])
    if lambda1_max(train, model) == 0.0:
        panel, converged = np.zeros((d.data.p, d.data.K)), True
    else:
        fit = fit_method_cv(train, d.partition, method, args_d["folds"], args_d["seed"], model, 1,
                            epsilon=args_d["epsilon"], max_iter=args_d["max_iter"])
        panel, converged = fit.panel, fit.converged
    metrics = {"test_loss": validation_loss(test, panel, model)}
    if model == "lr":
        metrics["prmse"] = prmse(test, panel)
        metrics["rmse"] = prmse_normalized(test, panel)
    if d.true_panel is not None:
        metrics["ermse"] = ermse(panel, d.true_panel)
        tpr, fpr = effect_rates(panel, d.true_panel != 0)
        metrics["effect_tpr"], metrics["effect_fpr"] = tpr, fpr
        if d.labels is not None and method != "plasso" and d.data.K > 1:
            tpr, fpr = community_rates(detect_commonality(panel, d.partition), d.labels)
            metrics["community_tpr"], metrics["community_fpr"] = tpr, fpr
    rows = [{"replicate": directory.name, "method": method, "metric": k, "value": v}
            for k, v in metrics.items() if v is not None]
    return rows, converged


def _summary(rows: list[dict]) -> list[dict]:
    out = []
    keys = []
    for r in rows:
        if (r["method"], r["metric"]) not in keys:
            keys.append((r["method"], r["metric"]))
    for method, metric in keys:
        vals = np.array([r["value"] for r in rows if r["method"] == method and r["metric"] == metric])
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
        out.append({"method": method, "metric": metric, "n": int(vals.size), "mean": mean, "sd": sd,
                    "formatted": f"{mean:.3f}({sd:.3f})"})
    return out


def cmd_eval(args) -> int:
    start = time.perf_counter()
    dirs = _replicate_dirs(Path(args.data))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    args_d = {k: getattr(args, k) for k in ("standardize", "model", "seed", "folds", "epsilon", "max_iter")}
    jobs = [(dd, m, args_d) for dd in dirs for m in args.methods]
    results = pmap(_eval_task, jobs, args.threads)
    rows = [r for res, _ in results for r in res]
    converged = all(c for _, c in results)
    write_table(out / "metrics.csv", rows)
    write_table(out / "summary.csv", _summary(rows))
    extra = {"methods": list(args.methods), "replicates": [p.name for p in dirs],
             "convergence": {"fits": len(results),
                             "nonconverged": sum(not c for _, c in results)}}
    write_json(out / MANIFEST, _manifest(args, start, dirs, ["metrics.csv", "summary.csv"], extra))
    return _finish(converged, args)


# -- roc / ooi ---------------------------------------------------------------------

def cmd_roc(args) -> int:
    start = time.perf_counter()
    d = _load(args.data, args.standardize)
    if d.true_panel is None:
        raise UsageError(f"{args.data}: ROC needs true_panel.csv")
    model = _model(args, d)
    targets = ["effects", "communities"] if args.target == "both" else [args.target]
    truth = IdentificationTruth(d.true_panel != 0, d.labels if d.labels is not None
                                else detect_commonality(d.true_panel, d.partition, 0.0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_grid(d.data, "roc", model=model)
    auc_rows, outputs, converged = [], [], True
    for method in args.methods:
        fits = grid_panels(d.data, d.partition, grid, method, model, args.epsilon, args.max_iter)
        converged &= all(r["converged"] for r in fits.rows)
        for target in targets:
            if method == "plasso" and target == "communities":
                log.warning("skipping plasso for the communities target (no differences possible)")
                continue
            res = roc_from_panels(fits, truth, d.partition, target)
            name = f"roc_{method}_{target}.csv"
            write_table(out / name, [{"method": method, "target": target, **r} for r in res.table])
            outputs.append(name)
            auc_rows.append({"method": method, "target": target, "auc": res.curve.auc,
                             "points": len(res.table),
                             "positive_class": COMMUNITY_POSITIVE if target == "communities" else "nonzero"})
            print(f"{method}\t{target}\tAUC={res.curve.auc:.4f}")
    write_table(out / "roc_auc.csv", auc_rows)
    outputs.append("roc_auc.csv")
    write_json(out / MANIFEST, _manifest(args, start, [args.data], outputs,
                                         {"convergence": {"all_grid_fits_converged": converged}}))
    return _finish(converged, args)


def cmd_ooi(args) -> int:
    start = time.perf_counter()
    d = _load(args.data, args.standardize)
    model = _model(args, d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    freq = ooi(d.data, d.partition, args.method, args.resamples, args.seed, model, args.folds,
               args.threads)
    write_table(out / "ooi.csv", [{"predictor": n, "ooi": float(f)}
                                  for n, f in zip(predictor_names(d.data.p), freq)])
    write_json(out / MANIFEST, _manifest(args, start, [args.data], ["ooi.csv"],
                                         {"method": args.method, "model": model}))
    return 0


def cmd_replay(args) -> int:
    m = read_json(args.manifest)
    argv = m.get("argv")
    if not argv:
        raise UsageError(f"{args.manifest}: manifest has no argv to replay")
    log.info("replaying: cofu %s", " ".join(argv))
    return main(argv)


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cofu", description="Community-fusion estimation across ordered datasets.")
    parser.add_argument("--version", action="version", version=f"cofu {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, seed=True):
        if data:
            p.add_argument("--data", required=True, help="replicate directory (X_k.csv, y_k.csv, partition.csv)")
            p.add_argument("--model", choices=["lr", "logit"], default=None,
                           help="default: the scenario manifest's model, else lr")
            p.add_argument("--standardize", action="store_true", help="z-score predictors per dataset")
            p.add_argument("--epsilon", type=float, default=1e-3, help="ADMM stopping tolerance")
            p.add_argument("--max-iter", type=int, default=5000)
            p.add_argument("--allow-nonconverged", action="store_true")
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=None, help="worker processes (default $COFU_THREADS or 1)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="generate synthetic replicates")
    common(p, data=False)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--l", type=int, default=50)
    p.add_argument("--corr", choices=["structured", "unstructured", "independence"], default="structured")
    p.add_argument("--rho", type=_rho, default=(0.4, 0.1, 0.5), help="overlap proportions a,h,n")
    p.add_argument("--r", type=int, default=100, help="important effects per dataset")
    p.add_argument("--coef", choices=sorted(COEF_RULES), default="const")
    p.add_argument("--model", choices=["lr", "logit"], default="lr")
    p.add_argument("--reps", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit at fixed tuning parameters")
    common(p, seed=False)
    p.add_argument("--method", choices=METHODS, default="cofu")
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate the tuning grid and refit")
    common(p)
    p.add_argument("--method", choices=METHODS, default="cofu")
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("eval", help="holdout metrics over replicates")
    common(p)
    p.add_argument("--methods", type=lambda s: s.split(","), default=list(METHODS))
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("roc", help="ROC points over the tuning grid and envelope AUC")
    common(p, seed=False)
    p.add_argument("--methods", type=lambda s: s.split(","), default=["cofu"])
    p.add_argument("--target", choices=["effects", "communities", "both"], default="effects")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("ooi", help="selection frequency over 2:1 resamples")
    common(p)
    p.add_argument("--method", choices=METHODS, default="cofu")
    p.add_argument("--resamples", type=int, default=100)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_ooi)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    for name in ("methods",):
        for m in getattr(args, name, None) or []:
            if m not in METHODS:
                parser.error(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    try:
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        return args.func(args)
    except (FormatError, UsageError, ValueError) as e:
        print(f"cofu {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
