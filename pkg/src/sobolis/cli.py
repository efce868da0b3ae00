"""Command-line entry point: ``sobolis {estimate,variance,sweep,validate}``.

Single results print as JSON on stdout; grids are CSV (``--out`` or stdout).
Exit codes: 0 success, 2 configuration error, 3 support or numerical error,
4 validation failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from typing import Sequence

import numpy as np

from .densities import BetaParams, Box, SubsetIndex, SupportError, independent_conditional, product_density, uniform_density, weight
from .estimators import double_loop_eta, nn_rank_eta, rank_eta, reweighted_outputs, sobol_from_eta
from .givendata import (
    DatasetError,
    SweepSpec,
    ThetaConfig,
    _fmt,
    estimate_theta,
    eta_sweep,
    load_dataset,
    standardize,
    theta_weight,
    write_sweep,
    write_sweep_rows,
)
from .models import GFunctionSpec, gfunction_eta, gfunction_model, gfunction_moments, synthetic_dataset
from .variance_opt import (
    DEFAULT_ORDER,
    beta_variance_surface,
    cv_curve,
    optimal_marginal,
    s_function,
    sigma_opt_p,
    sigma_opt_q,
    symmetric_beta_marginal,
    zero_variance_density,
    zero_variance_products,
)

log = logging.getLogger("sobolis")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4
ALT_COMPLEMENT_CONSTANT = 99 / 96


class ConfigError(Exception):
    pass


# -- argument parsing helpers ---------------------------------------------------


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def parse_pair(text: str) -> tuple[float, float]:
    vals = parse_floats(text)
    if len(vals) != 2:
        raise ConfigError(f"expected 'alpha,beta', got {text!r}")
    return vals[0], vals[1]


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:count``, inclusive at both ends."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must look like lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"bad grid {text!r}") from None
    if count < 1 or (count == 1 and lo != hi):
        raise ConfigError(f"grid {text!r} needs count >= 2 unless lo == hi")
    return np.round(np.linspace(lo, hi, count), 12)


def parse_theta_item(text: str) -> tuple[int, float, float]:
    """``j=alpha,beta`` with ``j`` 1-based."""
    if "=" not in text:
        raise ConfigError(f"--theta expects j=alpha,beta, got {text!r}")
    j, pair = text.split("=", 1)
    try:
        j = int(j)
    except ValueError:
        raise ConfigError(f"--theta index must be an integer, got {j!r}") from None
    return (j, *parse_pair(pair))


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join(f"--{n}" for n in missing))


def _spec(args) -> GFunctionSpec:
    if args.model != "gfun":
        raise ConfigError(f"unknown model {args.model!r}")
    return GFunctionSpec(tuple(parse_floats(args.a)))


def _subset(args, k: int) -> SubsetIndex:
    try:
        return SubsetIndex.parse(args.u, k)
    except ValueError as exc:
        raise ConfigError(f"--u: {exc}") from None


def _rng(args) -> np.random.Generator:
    _require(args, "seed")
    return np.random.default_rng(args.seed)


def _load(args):
    if (args.lower is None) != (args.upper is None):
        raise ConfigError("give both --lower and --upper or neither")
    lower = parse_floats(args.lower) if args.lower else None
    upper = parse_floats(args.upper) if args.upper else None
    data = load_dataset(args.data, lower, upper)
    return standardize(data)


def _theta(args, k: int) -> ThetaConfig:
    theta = ThetaConfig.baseline(k)
    if args.theta_all:
        theta = ThetaConfig.uniform_all(k, *parse_pair(args.theta_all))
    for item in args.theta or ():
        j, a, b = parse_theta_item(item)
        if not 1 <= j <= k:
            raise ConfigError(f"--theta index {j} outside 1..{k}")
        theta = theta.with_input(j, a, b)
    return theta


def _source(args) -> None:
    if (args.model is None) == (args.data is None):
        raise ConfigError("give exactly one of --model or --data")


def _emit_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _weighted_sobol(eta_hat: float, y: np.ndarray, w: np.ndarray | None) -> float | None:
    if w is None:
        try:
            return sobol_from_eta(eta_hat, y)
        except ValueError:
            return None
    mean = float(np.mean(w * y))
    var = float(np.mean(w * y**2)) - mean**2
    return (eta_hat - mean**2) / var if var > 0 else None


# -- subcommands ----------------------------------------------------------------


def cmd_estimate(args) -> int:
    _source(args)
    if args.data is not None:
        data = _load(args)
        u = _subset(args, data.k)
        theta = _theta(args, data.k)
        est, e = estimate_theta(data, u, theta)
        w = None if theta.is_baseline else theta_weight(data.x, theta)
        out = est.as_dict()
        out.update(
            {
                "u": list(u.u),
                "ess": e,
                "theta": [[p.alpha, p.beta] for p in theta.params],
                "sobol_index": _weighted_sobol(est.value, data.y, w),
            }
        )
        _emit_json(out)
        return EXIT_OK

    spec = _spec(args)
    u = _subset(args, spec.k)
    _require(args, "n")
    if args.n < 2:
        raise ConfigError("--n must be >= 2")
    rng = _rng(args)
    model = gfunction_model(spec)
    p = product_density([uniform_density(Box.unit(1)) for _ in range(spec.k)])
    if args.estimator == "double-loop":
        est = double_loop_eta(model, p, u, args.n, args.n_inner, rng)
        out = est.as_dict()
    else:
        q_u = p.marginal(u.idx)
        if args.beta:
            q_u = symmetric_beta_marginal(BetaParams(*parse_pair(args.beta)), Box.unit(len(u.u)))
        marginals = list(p.marginals)
        for pos, j in enumerate(u.idx):
            marginals[j] = q_u.marginals[pos]
        q = product_density(marginals)
        data = synthetic_dataset(model, q, args.n, rng)
        q_cond = None if u.is_full else independent_conditional(p.marginal(u.bar_idx))
        z = reweighted_outputs(data, u, p, q_u, q_cond)
        xu = data.x[:, u.idx]
        est = rank_eta(z, xu[:, 0]) if len(u.u) == 1 else nn_rank_eta(z, xu)
        out = est.as_dict()
        w = None if args.beta is None else weight(p, q, data.x)
        out["sobol_index"] = _weighted_sobol(est.value, data.y, w)
    out.update({"u": list(u.u), "eta_exact": gfunction_eta(spec, u), "seed": args.seed})
    _emit_json(out)
    return EXIT_OK


def _moments(args, spec: GFunctionSpec, u: SubsetIndex, noise_ok: bool = True):
    const = ALT_COMPLEMENT_CONSTANT if args.alt_constant else args.complement_constant
    if const is not None or args.noise_complement:
        if not noise_ok:
            raise ConfigError("this construction needs the deterministic model; drop the complement options")
        return gfunction_moments(spec, u, complement_factor=const)
    return gfunction_moments(spec, u, deterministic=True)


def cmd_variance(args) -> int:
    _require(args, "model", "u")
    spec = _spec(args)
    u = _subset(args, spec.k)
    p = product_density([uniform_density(Box.unit(1)) for _ in range(spec.k)])
    order = args.order
    base = sigma_opt_p(_moments(args, spec, u), p, u, order)
    out = {"u": list(u.u), "eta_exact": gfunction_eta(spec, u), "reference": base.as_dict()}

    if args.case is not None and args.beta is not None:
        raise ConfigError("--case and --beta are mutually exclusive")
    if args.case == "zero":
        md = _moments(args, spec, u, noise_ok=False)
        zv = zero_variance_density(md, p, u, eta=gfunction_eta(spec, u), order=min(order, 32))
        rep = sigma_opt_q(md, p, zv.q_u, zv.q_cond, u, order=min(order, 32))
        g = np.linspace(0.0, 1.0, 21)
        grid = np.stack(np.meshgrid(*([g] * spec.k), indexing="ij"), axis=-1).reshape(-1, spec.k)
        dev = float(np.max(np.abs(zero_variance_products(zv, md, p, grid) / zv.eta - 1.0)))
        out.update({"case": "zero", "result": rep.as_dict(), "max_rel_deviation": dev})
    elif args.case in ("A", "B"):
        s = s_function(_moments(args, spec, u), p, u, args.case, order)
        _, rep = optimal_marginal(p.marginal(u.idx), s, order)
        out.update({"case": args.case, "result": rep.as_dict()})
    elif args.beta is not None:
        params = BetaParams(*parse_pair(args.beta))
        q_u = symmetric_beta_marginal(params, Box.unit(len(u.u)))
        kw = {}
        if args.method != "quadrature":
            _require(args, "n")
            kw = {"n": args.n, "rng": _rng(args), "model": gfunction_model(spec)}
        mo = _moments(args, spec, u)
        rep = sigma_opt_q(mo, p, q_u, None, u, order, method=args.method, **kw)
        # Quadrature never sees a non-integrable face singularity; the surface rule does.
        divergent = bool(beta_variance_surface(mo, p, [params.alpha], [params.beta], u, order).divergent[0, 0])
        out.update(
            {
                "beta": [params.alpha, params.beta],
                "result": rep.as_dict(),
                "divergent": divergent,
                "reduction": None if divergent else 1.0 - rep.sigma_sq / base.sigma_sq,
            }
        )
    else:
        out["result"] = base.as_dict()
    if args.compare_constant is not None:
        alt_mo = gfunction_moments(spec, u, complement_factor=args.compare_constant)
        alt = sigma_opt_p(alt_mo, p, u, order)
        out["compare_constant"] = {"constant": args.compare_constant, "reference": alt.as_dict()}
        if args.beta is not None:
            alt_q = sigma_opt_q(alt_mo, p, q_u, None, u, order)
            out["compare_constant"].update({"result": alt_q.as_dict(), "reduction": None if out["divergent"] else 1.0 - alt_q.sigma_sq / alt.sigma_sq})
    _emit_json(out)
    return EXIT_OK


def _open_out(path: str | None):
    return open(path, "w", newline="") if path else contextlib.nullcontext(sys.stdout)


def _sweep_data(args):
    if args.data is not None:
        return _load(args)
    spec = _spec(args)
    _require(args, "n")
    p = product_density([uniform_density(Box.unit(1)) for _ in range(spec.k)])
    return synthetic_dataset(gfunction_model(spec), p, args.n, _rng(args))


def cmd_sweep(args) -> int:
    _source(args)
    modes = [m for m in ("marginal", "global_", "surface", "cv_curve") if getattr(args, m) not in (None, False)]
    if len(modes) != 1:
        raise ConfigError("choose exactly one of --marginal, --global, --surface, --cv-curve")
    mode = modes[0]
    summary: dict

    if mode in ("marginal", "global_"):
        _require(args, "u", "alpha-grid", "beta-grid")
        data = _sweep_data(args)
        u = _subset(args, data.k)
        spec = SweepSpec(
            "marginal" if mode == "marginal" else "global",
            u,
            tuple(parse_grid(args.alpha_grid)),
            tuple(parse_grid(args.beta_grid)),
            target_input=args.marginal,
            paired=args.paired,
        )
        res = eta_sweep(data, spec)
        if args.out:
            write_sweep(res, args.out)
        else:
            write_sweep_rows(res, sys.stdout)
        best = max(res.entries, key=lambda e: e.eta_hat)
        summary = {
            "mode": spec.mode,
            "rows": len(res.entries),
            "n": res.n,
            "baseline_eta": res.baseline_eta,
            "baseline_stderr": res.baseline_stderr,
            "unreliable_rows": sum(not e.reliable(res.n) for e in res.entries),
            "max_eta": {"theta": [[p.alpha, p.beta] for p in best.theta.params], "eta_hat": best.eta_hat},
        }
    elif mode == "surface":
        _require(args, "model", "u", "grid")
        gspec = _spec(args)
        u = _subset(args, gspec.k)
        p = product_density([uniform_density(Box.unit(1)) for _ in range(gspec.k)])
        grid = parse_grid(args.grid)
        surf = beta_variance_surface(_moments(args, gspec, u), p, grid, grid, u, args.order)
        with _open_out(args.out) as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "beta", "sigma_sq", "cv", "divergent", "argmin"])
            for i, a in enumerate(surf.alpha_grid):
                for j, b in enumerate(surf.beta_grid):
                    s = surf.sigma_sq[i, j]
                    cv = np.sqrt(max(s, 0.0)) / surf.eta
                    w.writerow([_fmt(a), _fmt(b), _fmt(s), _fmt(cv), int(surf.divergent[i, j]), int((a, b) == surf.argmin)])
        summary = {
            "mode": "surface",
            "argmin": list(surf.argmin),
            "min_sigma_sq": surf.minimum,
            "baseline_sigma_sq": surf.baseline,
            "reduction": surf.reduction,
            "divergent_cells": int(surf.divergent.sum()),
        }
        if args.compare_constant is not None:
            alt = beta_variance_surface(gfunction_moments(gspec, u, complement_factor=args.compare_constant), p, grid, grid, u, args.order)
            summary["compare_constant"] = {
                "constant": args.compare_constant,
                "argmin": list(alt.argmin),
                "min_sigma_sq": alt.minimum,
                "baseline_sigma_sq": alt.baseline,
                "reduction": alt.reduction,
            }
    else:
        _require(args, "model", "u", "t-grid")
        gspec = _spec(args)
        u = _subset(args, gspec.k)
        p = product_density([uniform_density(Box.unit(1)) for _ in range(gspec.k)])
        p_u = p.marginal(u.idx)
        s = s_function(_moments(args, gspec, u), p, u, "A", args.order)
        q_star, _ = optimal_marginal(p_u, s, args.order)
        kw = {"n_mc": args.n_mc, "rng": _rng(args)} if args.n_mc else {}
        curve = cv_curve(p_u, q_star, s, s.eta, parse_grid(args.t_grid), order=args.order, **kw)
        with _open_out(args.out) as fh:
            w = csv.writer(fh)
            head = ["t", "sigma_sq", "cv"] + (["sigma_sq_mc", "stderr_mc", "cv_mc"] if args.n_mc else [])
            w.writerow(head)
            for i, t in enumerate(curve.t):
                row = [_fmt(t), _fmt(curve.sigma_sq[i]), _fmt(curve.cv[i])]
                if args.n_mc:
                    row += [_fmt(curve.sigma_sq_mc[i]), _fmt(curve.stderr_mc[i]), _fmt(curve.cv_mc[i])]
                w.writerow(row)
        summary = {
            "mode": "cv_curve",
            "rows": int(curve.t.size),
            "cv_ratio": float(curve.cv[-1] / curve.cv[0]) if curve.cv[0] > 0 else None,
            "strictly_decreasing": bool(np.all(np.diff(curve.cv) < 0)),
        }

    stream = sys.stdout if args.out else sys.stderr
    json.dump(summary, stream, indent=2, sort_keys=True)
    stream.write("\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import results_as_json, run_suite

    results = run_suite(args.seed, quick=args.quick)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<24s} {r.seconds:7.2f}s")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump({"seed": args.seed, "quick": args.quick, "checks": results_as_json(results)}, fh, indent=2, default=float)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


# -- parser -----------------------------------------------------------------------


def _add_source(sp, with_theta: bool = False) -> None:
    sp.add_argument("--model", choices=["gfun"], help="built-in model")
    sp.add_argument("--a", default="1,2,3", help="g-function coefficients (default 1,2,3)")
    sp.add_argument("--data", help="CSV dataset: header, k input columns, one output column")
    sp.add_argument("--lower", help="comma-separated lower input bounds (default: column minima)")
    sp.add_argument("--upper", help="comma-separated upper input bounds (default: column maxima)")
    if with_theta:
        sp.add_argument("--theta-all", help="alpha,beta applied to every input")
        sp.add_argument("--theta", action="append", help="j=alpha,beta for input j (repeatable)")


def _add_constants(sp) -> None:
    sp.add_argument("--noise-complement", action="store_true", help="treat complement inputs as noise")
    sp.add_argument("--complement-constant", type=float, help="override the complement second-moment product")
    sp.add_argument("--alt-constant", action="store_true", help=f"use complement constant {ALT_COMPLEMENT_CONSTANT:g}")
    sp.add_argument("--compare-constant", type=float, help="also report results under this complement constant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sobolis", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("estimate", help="estimate eta_u and the Sobol' index")
    _add_source(sp, with_theta=True)
    sp.add_argument("--u", required=True, help="1-based subset, e.g. 1,2")
    sp.add_argument("--n", type=int, help="sample size (model mode)")
    sp.add_argument("--seed", type=int, help="RNG seed (required when sampling)")
    sp.add_argument("--beta", help="alpha,beta: sample the u block from this Beta (model mode)")
    sp.add_argument("--estimator", choices=["rank", "double-loop"], default="rank")
    sp.add_argument("--n-inner", type=int, default=16)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("variance", help="efficiency bounds and optimal densities")
    sp.add_argument("--model", choices=["gfun"], default="gfun")
    sp.add_argument("--a", default="1,2,3")
    sp.add_argument("--u", required=True)
    sp.add_argument("--dist", choices=["p"], help="variance under the reference density (default)")
    sp.add_argument("--case", choices=["A", "B", "zero"])
    sp.add_argument("--beta", help="alpha,beta: symmetric Beta sampling marginal on the u block")
    sp.add_argument("--method", choices=["quadrature", "mc", "qform"], default="quadrature")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--order", type=int, default=DEFAULT_ORDER)
    _add_constants(sp)
    sp.set_defaults(func=cmd_variance)

    sp = sub.add_parser("sweep", help="reverse-IS sweeps, Beta variance surface, CV curve")
    _add_source(sp)
    sp.add_argument("--u")
    sp.add_argument("--n", type=int, help="synthetic sample size when sweeping a model")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--marginal", type=int, metavar="J", help="perturb input J only")
    sp.add_argument("--global", dest="global_", action="store_true", help="perturb every input")
    sp.add_argument("--alpha-grid")
    sp.add_argument("--beta-grid")
    sp.add_argument("--paired", action="store_true", help="zip the alpha and beta grids")
    sp.add_argument("--surface", action="store_true")
    sp.add_argument("--grid", help="lo:hi:count for both Beta parameters (surface)")
    sp.add_argument("--cv-curve", action="store_true")
    sp.add_argument("--t-grid")
    sp.add_argument("--n-mc", type=int, help="also evaluate the CV curve by Monte Carlo")
    sp.add_argument("--order", type=int, default=DEFAULT_ORDER)
    sp.add_argument("--out", help="CSV output path (default stdout)")
    _add_constants(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="run the g-function self-check suite")
    sp.add_argument("--quick", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report", help="write check results as JSON")
    sp.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SupportError as exc:
        print(f"sobolis: support violation: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, RuntimeError, ZeroDivisionError) as exc:
        print(f"sobolis: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DatasetError, FileNotFoundError) as exc:
        parser.print_usage(sys.stderr)
        print(f"sobolis: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"sobolis: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
