"""Self-check suite on the g-function benchmark (``k = 3``, ``a_i = i``).

Each check returns a :class:`CheckResult`; ``run_suite`` runs them all.
``quick`` shrinks sample sizes and widens Monte Carlo bands.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .densities import (
    BetaParams,
    Box,
    SubsetIndex,
    beta_density,
    independent_conditional,
    product_density,
    uniform_density,
)
from .estimators import rank_eta, reweighted_outputs
from .givendata import ThetaConfig, estimate_theta
from .models import (
    GFunctionSpec,
    gfunction_eta,
    gfunction_eta_under,
    gfunction_model,
    gfunction_moments,
    synthetic_dataset,
)
from .quadrature import integrate, tensor_gl
from .variance_opt import (
    beta_variance_surface,
    chi2_functional,
    cv_curve,
    jensen_chain,
    optimal_marginal,
    s_function,
    sigma_opt_q,
    symmetric_beta_marginal,
    zero_variance_density,
    zero_variance_products,
)

SPEC = GFunctionSpec.benchmark(3)
U12 = SubsetIndex((1, 2), 3)
U1 = SubsetIndex((1,), 3)
MARGINAL_SUITE = (BetaParams(2, 2), BetaParams(0.8, 0.8), BetaParams(2, 1))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0


def unit_product(k: int):
    return product_density([uniform_density(Box.unit(1)) for _ in range(k)])


def _timed(fn: Callable[..., CheckResult]):
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    return run


@_timed
def check_exact_eta(quick: bool, rng) -> CheckResult:
    exact = gfunction_eta(SPEC, U12)
    mo = gfunction_moments(SPEC, U12)
    rule = tensor_gl(Box.unit(2), 128, [(0.5,), (0.5,)])
    quad = integrate(lambda x: mo.m_u(x) ** 2, rule)
    return CheckResult("exact_eta", abs(quad - exact) < 1e-10 and abs(exact - 91 / 81) < 1e-15, {"exact": exact, "quadrature": quad})


@_timed
def check_distribution_change(quick: bool, rng) -> CheckResult:
    n, reps, band = (20_000, 5, 5.0) if quick else (100_000, 20, 4.0)
    target = gfunction_eta(SPEC, U1)
    p = unit_product(3)
    model = gfunction_model(SPEC)
    q_cond = independent_conditional(p.marginal(U1.bar_idx))
    detail = {}
    ok = True
    for prm in MARGINAL_SUITE:
        q_u = beta_density(prm)
        q = product_density([q_u] + p.marginals[1:])
        hits = 0
        for _ in range(reps):
            data = synthetic_dataset(model, q, n, rng)
            z = reweighted_outputs(data, U1, p, q_u, q_cond)
            est = rank_eta(z, data.x[:, 0])
            hits += abs(est.value - target) <= band * est.stderr
        frac = hits / reps
        detail[f"Beta({prm.alpha:g},{prm.beta:g})"] = frac
        ok &= frac >= (0.8 if quick else 0.95)
    return CheckResult("distribution_change", ok, detail)


@_timed
def check_zero_variance(quick: bool, rng) -> CheckResult:
    p = unit_product(3)
    md = gfunction_moments(SPEC, U12, deterministic=True)
    eta = gfunction_eta(SPEC, U12)
    zv = zero_variance_density(md, p, U12, eta=eta)
    g = np.linspace(0.0, 1.0, 21)
    grid = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    dev = float(np.max(np.abs(zero_variance_products(zv, md, p, grid) / eta - 1.0)))
    x = zv.sample(rng, 2_000 if quick else 10_000)
    prod = zero_variance_products(zv, md, p, x)
    rel_var = float(prod.var() / eta**2)
    return CheckResult("zero_variance", dev < 1e-10 and rel_var < 1e-18, {"max_rel_dev": dev, "rel_var": rel_var})


@_timed
def check_optimal_marginal(quick: bool, rng) -> CheckResult:
    p = unit_product(3)
    mo = gfunction_moments(SPEC, U12)
    eta = gfunction_eta(SPEC, U12)
    s = s_function(mo, p, U12, "A")
    q, _ = optimal_marginal(p.marginal(U12.idx), s)
    g = (np.arange(50) + 0.5) / 50
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    m2 = mo.m_u(grid) ** 2
    shape_dev = float(np.max(np.abs(q.pdf(grid) - m2 / eta)))
    ratio = s(grid) / m2**2
    spread = float((ratio.max() - ratio.min()) / ratio.mean())
    return CheckResult("optimal_marginal_shape", shape_dev < 1e-8 and spread < 1e-9, {"max_abs_dev": shape_dev, "S_over_m4_spread": spread, "S_over_m4": float(ratio.mean())})


@_timed
def check_cv_curve(quick: bool, rng) -> CheckResult:
    p = unit_product(3)
    mo = gfunction_moments(SPEC, U12)
    p_u = p.marginal(U12.idx)
    s = s_function(mo, p, U12, "A")
    q, _ = optimal_marginal(p_u, s)
    band = 5.0 if quick else 4.0
    curve = cv_curve(p_u, q, s, s.eta, np.linspace(0, 1, 11), n_mc=20_000 if quick else 100_000, rng=rng)
    decreasing = bool(np.all(np.diff(curve.cv) < 0))
    ratio = float(curve.cv[-1] / curve.cv[0])
    agree = bool(np.all(np.abs(curve.sigma_sq_mc - curve.sigma_sq) <= band * curve.stderr_mc))
    return CheckResult("cv_curve", decreasing and ratio < 0.5 and agree, {"cv": curve.cv.tolist(), "cv_ratio": ratio, "mc_agrees": agree})


@_timed
def check_beta_surface(quick: bool, rng, compare_constant: float = 99 / 96) -> CheckResult:
    p = unit_product(3)
    grid = np.round(np.linspace(0.4, 2.0, 17), 10)
    surf = beta_variance_surface(gfunction_moments(SPEC, U12), p, grid, grid, U12)
    alt = beta_variance_surface(gfunction_moments(SPEC, U12, complement_factor=compare_constant), p, grid, grid, U12)
    a, b = surf.argmin
    ok = abs(a - b) < 1e-12 and 0.5 <= a <= 0.9 and surf.reduction >= 0.40
    return CheckResult(
        "beta_surface",
        bool(ok),
        {
            "argmin": surf.argmin,
            "min_sigma_sq": surf.minimum,
            "baseline": surf.baseline,
            "reduction": surf.reduction,
            "alt_constant": compare_constant,
            "alt_argmin": alt.argmin,
            "alt_min_sigma_sq": alt.minimum,
            "alt_baseline": alt.baseline,
            "alt_reduction": alt.reduction,
        },
    )


@_timed
def check_jensen(quick: bool, rng) -> CheckResult:
    chain = jensen_chain(gfunction_moments(SPEC, U12, deterministic=True), unit_product(3), U12)
    g1, g2 = chain.gaps
    return CheckResult(
        "jensen_chain",
        g1 > 1e-6 and g2 > 1e-6,
        {"case_B": chain.optimal_joint.sigma_sq, "case_A": chain.optimal_marginal.sigma_sq, "reference": chain.reference.sigma_sq},
    )


@_timed
def check_cross_form(quick: bool, rng) -> CheckResult:
    p = unit_product(3)
    md = gfunction_moments(SPEC, U12, deterministic=True)
    model = gfunction_model(SPEC)
    n, band = (200_000, 5.0) if quick else (1_000_000, 4.0)
    detail = {}
    ok = True
    for prm in (BetaParams(0.7, 0.7), BetaParams(0.9, 0.6), BetaParams(1.2, 1.2)):
        q_u = symmetric_beta_marginal(prm, Box.unit(2))
        quad = sigma_opt_q(md, p, q_u, None, U12)
        mc = sigma_opt_q(md, p, q_u, None, U12, method="qform", n=n, rng=rng, model=model)
        good = abs(mc.sigma_sq - quad.sigma_sq) <= band * mc.stderr
        ok &= good
        detail[f"Beta({prm.alpha:g},{prm.beta:g})"] = {"quadrature": quad.sigma_sq, "qform": mc.sigma_sq, "stderr": mc.stderr}
    return CheckResult("cross_form", bool(ok), detail)


def _fresh_theta_dataset(theta: ThetaConfig, n: int, rng):
    q = product_density([beta_density(t) for t in theta.params])
    return synthetic_dataset(gfunction_model(SPEC), q, n, rng)


@_timed
def check_reverse_is(quick: bool, rng) -> CheckResult:
    n, band = (20_000, 5.0) if quick else (100_000, 4.0)
    base_data = synthetic_dataset(gfunction_model(SPEC), unit_product(3), n, rng)
    base_est, _ = estimate_theta(base_data, U1, ThetaConfig.baseline(3))
    plain = rank_eta(base_data.y, base_data.x[:, 0])
    ok = base_est.value == plain.value
    detail = {"baseline_bit_identical": bool(ok)}
    for t in (ThetaConfig.baseline(3).with_input(1, 0.5, 0.5), ThetaConfig.baseline(3).with_input(1, 2, 2), ThetaConfig.uniform_all(3, 1.5, 0.8)):
        rw, _ = estimate_theta(base_data, U1, t)
        fresh_data = _fresh_theta_dataset(t, n, rng)
        fresh = rank_eta(fresh_data.y, fresh_data.x[:, 0])
        good = abs(rw.value - fresh.value) <= band * np.hypot(rw.stderr, fresh.stderr)
        ok &= bool(good)
        detail[str([(q.alpha, q.beta) for q in t.params])] = {"reweighted": rw.value, "fresh": fresh.value}
    # A complement-only perturbation still moves eta_1: m_1 carries E_theta[g_3].
    for ab in (0.5, 2.0):
        theta = ThetaConfig.baseline(3).with_input(3, ab, ab)
        target = gfunction_eta_under(SPEC, U1, [beta_density(t) for t in theta.params])
        est, _ = estimate_theta(base_data, U1, theta)
        good = abs(est.value - target) <= band * est.stderr
        ok &= bool(good)
        detail[f"complement_only_{ab:g}"] = {"estimate": est.value, "exact": target}
    return CheckResult("reverse_is", bool(ok), detail)


@_timed
def check_chi2_minimality(quick: bool, rng) -> CheckResult:
    mo = gfunction_moments(SPEC, U12)
    eta = gfunction_eta(SPEC, U12)
    box = Box.unit(2)
    bp = [(0.5,), (0.5,)]

    def g(x):
        return mo.m_u(x) ** 2 / eta

    trials = {
        "q=g": g,
        "uniform": uniform_density(box).pdf,
        "Beta(0.7,0.7)^2": symmetric_beta_marginal(BetaParams(0.7, 0.7), box).pdf,
        "Beta(0.5,0.5)^2": symmetric_beta_marginal(BetaParams(0.5, 0.5), box).pdf,
        "Beta(1.5,0.8)^2": symmetric_beta_marginal(BetaParams(1.5, 0.8), box).pdf,
        "mixture": lambda x: 0.5 * g(x) + 0.5,
    }
    vals = {name: chi2_functional(g, q, box, 64, bp) for name, q in trials.items()}
    best = min(vals, key=vals.get)
    ok = best == "q=g" and min(vals.values()) >= 1 - 1e-10
    return CheckResult("chi2_minimality", bool(ok), vals)


CHECKS = (
    check_exact_eta,
    check_distribution_change,
    check_zero_variance,
    check_optimal_marginal,
    check_cv_curve,
    check_beta_surface,
    check_jensen,
    check_cross_form,
    check_reverse_is,
    check_chi2_minimality,
)


def run_suite(seed: int, quick: bool = False) -> list[CheckResult]:
    """Run every check; each gets its own child stream of ``seed``."""
    streams = np.random.SeedSequence(seed).spawn(len(CHECKS))
    return [chk(quick, np.random.default_rng(s)) for chk, s in zip(CHECKS, streams)]


def results_as_json(results: list[CheckResult]) -> list[dict]:
    return [asdict(r) for r in results]
