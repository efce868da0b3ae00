"""Optimal asymptotic variances for estimating ``eta_u`` and the densities that minimize them.

Everything here works from closed-form conditional moments (``m_u`` and
``phi^2``).  Outer expectations over ``x_u`` and inner conditional
expectations over ``x_bar`` use split-axis Gauss-Legendre rules, nested when
the complement is non-empty.

The variance of the efficient estimator under a sampling density
``q = q_u * q_bar|u`` is evaluated in its reference-measure form::

    4 E_p[w_u m_u^2 E_p[w_bar phi^2 | X_u]] - 3 E_p[w_u m_u^4] - eta_u^2

and, for cross-checking, in its sampling-measure form built from the
reweighted outputs ``Z_u`` drawn under ``q``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .densities import (
    Box,
    ConditionalDensity,
    Density,
    ProductDensity,
    SubsetIndex,
    _ratio,
    beta_density,
    BetaParams,
    factorized_weight,
    independent_conditional,
    joint_from_factors,
    normalize_density,
    product_density,
)
from .models import ConditionalMoments, Model
from .quadrature import mc_estimate, tensor_gl

log = logging.getLogger(__name__)

DEFAULT_ORDER = 64
INNER_CHUNK = 4096


@dataclass(frozen=True)
class VarianceReport:
    sigma_sq: float
    eta: float
    cv: float
    method: str
    stderr: float | None = None
    clamped: bool = False
    raw_sigma_sq: float | None = None
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "sigma_sq": self.sigma_sq,
            "eta": self.eta,
            "cv": self.cv,
            "method": self.method,
            "stderr": self.stderr,
            "clamped": self.clamped,
            "raw_sigma_sq": self.raw_sigma_sq,
            "notes": list(self.notes),
        }


def make_report(raw: float, eta: float, method: str, stderr: float | None = None, notes: Sequence[str] = ()) -> VarianceReport:
    """Clamp a small negative variance to zero and flag it."""
    notes = tuple(notes)
    clamped = bool(raw < 0)
    sigma_sq = max(float(raw), 0.0)
    if clamped:
        notes += (f"negative variance {raw:.3e} clamped to 0",)
        log.info("clamped negative variance %.3e (%s)", raw, method)
    cv = float(np.sqrt(sigma_sq) / eta) if np.isfinite(sigma_sq) else float("inf")
    return VarianceReport(sigma_sq, float(eta), cv, method, stderr, clamped, float(raw), notes)


@dataclass(frozen=True)
class SFunction:
    """Integrand ``S(x_u)`` of the marginal-optimization step (``sigma^2 = E_p[w_u S] - eta^2``)."""

    case: str
    func: Callable[[np.ndarray], np.ndarray]
    eta: float
    breakpoints: tuple[tuple[float, ...], ...] = ()

    def __call__(self, xu) -> np.ndarray:
        return self.func(np.asarray(xu, dtype=float))


# -- quadrature plumbing --------------------------------------------------------


def _subset(moments: ConditionalMoments, u: SubsetIndex | None) -> SubsetIndex:
    if u is None:
        return moments.u
    if u != moments.u:
        raise ValueError(f"moments were built for u={moments.u}, got u={u}")
    return u


def _outer(moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex, order: int):
    p_u = p.marginal(u.idx)
    rule = tensor_gl(p_u.box, order, moments.breaks(u.idx))
    return rule.nodes, rule.weights * p_u.pdf(rule.nodes), p_u


def _inner(moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex, order: int):
    if u.is_full:
        return None, None, None
    p_bar = p.marginal(u.bar_idx)
    rule = tensor_gl(p_bar.box, order, moments.breaks(u.bar_idx))
    return rule.nodes, rule.weights * p_bar.pdf(rule.nodes), p_bar


def conditional_expectation(
    h: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    moments: ConditionalMoments,
    p: ProductDensity,
    u: SubsetIndex,
    xu: np.ndarray,
    order: int = DEFAULT_ORDER,
) -> np.ndarray:
    """``E_p[h | X_u = xu]`` for each row of ``xu`` by quadrature over ``x_bar``.

    ``h(xu_b, xbar_b, x)`` receives ``xu`` with shape ``(n, 1, du)``, the inner
    nodes with shape ``(1, m, dbar)`` and the assembled points ``(n, m, k)``.
    """
    xu = np.atleast_2d(np.asarray(xu, dtype=float))
    nodes, pw, _ = _inner(moments, p, u, order)
    if nodes is None:
        x = u.assemble(xu, np.empty(xu.shape[:-1] + (0,)))
        return np.asarray(h(xu[:, None, :], np.empty((1, 1, 0)), x[:, None, :]), dtype=float)[:, 0]
    out = np.empty(xu.shape[0])
    for s in range(0, xu.shape[0], INNER_CHUNK):
        xb = xu[s : s + INNER_CHUNK, None, :]
        x = u.assemble(xb, nodes[None])
        out[s : s + INNER_CHUNK] = np.asarray(h(xb, nodes[None], x), dtype=float) @ pw
    return out


def eta_by_quadrature(moments: ConditionalMoments, p: ProductDensity, order: int = DEFAULT_ORDER) -> float:
    nodes, ow, _ = _outer(moments, p, moments.u, order)
    return float(ow @ moments.m_u(nodes) ** 2)


# -- variances ------------------------------------------------------------------


def sigma_opt_p(moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex | None = None, order: int = DEFAULT_ORDER) -> VarianceReport:
    """Efficiency bound under the reference density ``p``."""
    u = _subset(moments, u)
    nodes, ow, _ = _outer(moments, p, u, order)
    m2 = moments.m_u(nodes) ** 2
    phi2 = conditional_expectation(lambda xu, xb, x: moments.phi_sq(x), moments, p, u, nodes, order)
    eta = float(ow @ m2)
    raw = 4.0 * float(ow @ (m2 * phi2)) - 3.0 * float(ow @ m2**2) - eta**2
    return make_report(raw, eta, "quadrature")


def _cond_weight(p_bar: Density, q_cond: ConditionalDensity, xu_b, xbar_b) -> np.ndarray:
    num = np.broadcast_to(p_bar.pdf(xbar_b), np.broadcast_shapes(xu_b.shape[:-1], xbar_b.shape[:-1]))
    return _ratio(num, q_cond.pdf(xu_b, xbar_b))


def sigma_opt_q(
    moments: ConditionalMoments,
    p: ProductDensity,
    q_u: Density,
    q_cond: ConditionalDensity | None = None,
    u: SubsetIndex | None = None,
    order: int = DEFAULT_ORDER,
    method: str = "quadrature",
    n: int | None = None,
    rng: np.random.Generator | None = None,
    model: Model | None = None,
) -> VarianceReport:
    """Efficiency bound when sampling from ``q = q_u * q_cond``.

    ``method``:

    * ``"quadrature"`` evaluates the reference-measure form by nested quadrature;
    * ``"mc"`` estimates the same form by sampling ``X ~ p``;
    * ``"qform"`` samples ``X ~ q``, evaluates ``model`` and uses
      ``4 E_q[E_q[Z|X_u]^2 Z^2] - 3 E_q[E_q[Z|X_u]^4] - eta^2`` with
      ``E_q[Z | X_u] = sqrt(w_u) m_u``.  It never touches ``phi``.

    ``q_cond=None`` keeps the reference conditional.
    """
    u = _subset(moments, u)
    p_u = p.marginal(u.idx)
    p_bar = p.marginal(u.bar_idx)
    if q_cond is None and not u.is_full:
        q_cond = independent_conditional(p_bar)
    eta = eta_by_quadrature(moments, p, order)

    if method == "quadrature":
        nodes, ow, _ = _outer(moments, p, u, order)
        w_u = _ratio(p_u.pdf(nodes), q_u.pdf(nodes))
        m2 = moments.m_u(nodes) ** 2
        if u.is_full:
            inner = moments.phi_sq(u.assemble(nodes, np.empty((nodes.shape[0], 0))))
        else:
            inner = conditional_expectation(
                lambda xu, xb, x: _cond_weight(p_bar, q_cond, xu, xb) * moments.phi_sq(x), moments, p, u, nodes, order
            )
        raw = 4.0 * float(ow @ (w_u * m2 * inner)) - 3.0 * float(ow @ (w_u * m2**2)) - eta**2
        return make_report(raw, eta, "quadrature")

    if n is None or rng is None:
        raise ValueError(f"method={method!r} needs n and rng")
    if method == "mc":
        x = p.sample(rng, n)
        fw = factorized_weight(p, q_u, q_cond, u, x)
        m2 = moments.m_u(x[:, u.idx]) ** 2
        vals = 4.0 * fw.w_u * m2 * fw.w_bar_u * moments.phi_sq(x) - 3.0 * fw.w_u * m2**2
        est = mc_estimate(vals)
        return make_report(est.value - eta**2, eta, "mc", est.stderr)
    if method == "qform":
        if model is None:
            raise ValueError("method='qform' needs the model to generate outputs")
        q = joint_from_factors(q_u, q_cond, u)
        x = q.sample(rng, n)
        y = model(x, model.draw_noise(rng, n))
        fw = factorized_weight(p, q_u, q_cond, u, x)
        z = np.sqrt(fw.w_u) * fw.w_bar_u * y
        cm2 = fw.w_u * moments.m_u(x[:, u.idx]) ** 2
        est = mc_estimate(4.0 * cm2 * z**2 - 3.0 * cm2**2)
        return make_report(est.value - eta**2, eta, "mc-qform", est.stderr)
    raise ValueError(f"unknown method {method!r}")


# -- optimal densities ----------------------------------------------------------


class _RejectionConditional(ConditionalDensity):
    """Conditional ``p_bar(x_bar) * ratio(x_u, x_bar)`` sampled by rejection from ``p_bar``."""

    def __init__(self, p_bar: Density, ratio: Callable, grid_nodes: np.ndarray, u: SubsetIndex, label: str):
        self.p_bar = p_bar
        self._ratio_fn = ratio
        self._grid = grid_nodes
        self.u = u

        def pdf(xu, xbar):
            return p_bar.pdf(xbar) * ratio(xu, xbar)

        super().__init__(p_bar.box, pdf, self._sample, label)

    def _bounds(self, xu):
        return 1.5 * self._ratio_fn(xu[:, None, :], self._grid[None]).max(axis=1)

    def _sample(self, rng, xu):
        xu = np.atleast_2d(xu)
        n = xu.shape[0]
        bound = self._bounds(xu)
        for attempt in range(2):
            out = np.empty((n, self.dim))
            pending = np.arange(n)
            violated = None
            while pending.size:
                prop = self.p_bar.sample(rng, pending.size)
                r = self._ratio_fn(xu[pending], prop)
                over = r > bound[pending]
                if over.any():
                    violated = pending[over], r[over]
                    break
                ok = rng.random(pending.size) * bound[pending] < r
                out[pending[ok]] = prop[ok]
                pending = pending[~ok]
            if violated is None:
                return out
            rows, vals = violated
            if attempt:
                raise RuntimeError(f"conditional rejection envelope violated twice ({rows.size} rows)")
            log.warning("conditional rejection envelope violated on %d rows; inflating and retrying", rows.size)
            bound[rows] = 1.5 * vals
        raise AssertionError("unreachable")


class OptimalConditional(_RejectionConditional):
    """``q*(x_bar | x_u) = p_bar(x_bar) phi(x) / E_p[phi | x_u]``."""

    def __init__(self, moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex, order: int):
        self.moments = moments
        self.p_ref = p
        self.order = order
        nodes, _, p_bar = _inner(moments, p, u, order)

        def ratio(xu, xbar):
            x = u.assemble(xu, xbar)
            lead = x.shape[:-1]
            norm = self.normalizer(xu.reshape(-1, xu.shape[-1])).reshape(xu.shape[:-1])
            return moments.phi(x) / np.broadcast_to(norm, lead)

        super().__init__(p_bar, ratio, nodes, u, "q*_cond")

    def normalizer(self, xu) -> np.ndarray:
        """``E_p[phi(X) | X_u = xu]``; raises when it vanishes."""
        xu = np.atleast_2d(np.asarray(xu, dtype=float))
        key = xu.tobytes()
        cache = getattr(self, "_norm_cache", None)
        if cache is not None and cache[0] == key:
            return cache[1]
        norm = conditional_expectation(lambda a, b, x: self.moments.phi(x), self.moments, self.p_ref, self.u, xu, self.order)
        if np.any(norm <= 0):
            raise ValueError("conditional normalizer E_p[phi | x_u] vanishes")
        self._norm_cache = (key, norm)
        return norm


def optimal_conditional(moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex | None = None, order: int = DEFAULT_ORDER) -> OptimalConditional:
    u = _subset(moments, u)
    if u.is_full:
        raise ValueError("u is the full index set; there is no conditional to optimize")
    return OptimalConditional(moments, p, u, order)


def s_function(moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex | None = None, case: str = "A", order: int = DEFAULT_ORDER) -> SFunction:
    """``S_A = 4 m^2 E_p[phi^2|x_u] - 3 m^4`` or ``S_B = 4 m^2 E_p[phi|x_u]^2 - 3 m^4``."""
    u = _subset(moments, u)
    case = case.upper()
    if case not in ("A", "B"):
        raise ValueError(f"case must be 'A' or 'B', got {case!r}")
    if case == "A":
        def inner(xu):
            return conditional_expectation(lambda a, b, x: moments.phi_sq(x), moments, p, u, xu, order)
    else:
        def inner(xu):
            return conditional_expectation(lambda a, b, x: moments.phi(x), moments, p, u, xu, order) ** 2

    def func(xu):
        xu = np.asarray(xu, dtype=float)
        shape = xu.shape[:-1]
        flat = xu.reshape(-1, xu.shape[-1])
        m2 = moments.m_u(flat) ** 2
        return (4.0 * m2 * inner(flat) - 3.0 * m2**2).reshape(shape)

    eta = eta_by_quadrature(moments, p, order)
    return SFunction(case, func, eta, tuple(moments.breaks(u.idx)))


def optimal_marginal(p_u: Density, s: SFunction, order: int = DEFAULT_ORDER) -> tuple[Density, VarianceReport]:
    """``q_u* = p_u sqrt(S) / E_p[sqrt(S)]`` and its variance ``E_p[sqrt(S)]^2 - eta^2``."""
    bp = list(s.breakpoints) if s.breakpoints else None
    rule = tensor_gl(p_u.box, order, bp)
    vals = s(rule.nodes)
    if np.any(vals < 0):
        raise ValueError(f"S is negative at {int(np.sum(vals < 0))} grid nodes")
    dens = normalize_density(lambda x: p_u.pdf(x) * np.sqrt(np.maximum(s(x), 0.0)), p_u.box, order, bp, label=f"q*_u(case {s.case})")
    mean_sqrt = dens.constant
    return dens, make_report(mean_sqrt**2 - s.eta**2, s.eta, "quadrature", notes=(f"case {s.case}",))


class ZeroVarianceDensity(Density):
    """``q*(x) = p(x) f(x) m_u(x_u) / eta_u`` with its two factors exposed."""

    def __init__(self, box, pdf, sampler, q_u: Density, q_cond: ConditionalDensity, eta: float):
        super().__init__(box, pdf, sampler, "q*_zero-variance")
        self.q_u = q_u
        self.q_cond = q_cond
        self.eta = eta


def zero_variance_density(
    moments: ConditionalMoments,
    p: ProductDensity,
    u: SubsetIndex | None = None,
    eta: float | None = None,
    order: int = 32,
) -> ZeroVarianceDensity:
    """Joint density making the efficient estimator's variance vanish.

    Needs a deterministic model with ``f > 0``.  ``eta`` defaults to its
    quadrature value.
    """
    u = _subset(moments, u)
    if not moments.deterministic:
        raise ValueError("zero-variance density needs a deterministic model (no noise inputs)")
    f, m_u = moments.f, moments.m_u
    full_rule = tensor_gl(p.box, order, moments.breaks(range(u.k)))
    if np.any(f(full_rule.nodes) <= 0):
        raise ValueError("zero-variance density needs f > 0 on the whole support")
    if eta is None:
        eta = eta_by_quadrature(moments, p, max(order, DEFAULT_ORDER))
    p_u = p.marginal(u.idx)
    bp_u = moments.breaks(u.idx)
    env = normalize_density(lambda xu: p_u.pdf(xu) * m_u(xu) ** 2, p_u.box, None, bp_u)
    q_u = Density(p_u.box, lambda xu: p_u.pdf(xu) * m_u(xu) ** 2 / eta, env.sample, "q*_u")
    if u.is_full:
        q_cond = None
    else:
        nodes, _, p_bar = _inner(moments, p, u, order)

        def ratio(xu, xbar):
            return f(u.assemble(xu, xbar)) / m_u(xu)

        q_cond = _RejectionConditional(p_bar, ratio, nodes, u, "q*_cond")
    joint = joint_from_factors(q_u, q_cond, u)

    def pdf(x):
        return p.pdf(x) * f(x) * m_u(x[..., u.idx]) / eta

    return ZeroVarianceDensity(p.box, pdf, joint.sample, q_u, q_cond, float(eta))


def zero_variance_products(zv: ZeroVarianceDensity, moments: ConditionalMoments, p: ProductDensity, x) -> np.ndarray:
    """``w_u * w_bar * f * m_u`` at ``x`` with weights taken against ``zv``'s factors."""
    u = moments.u
    fw = factorized_weight(p, zv.q_u, zv.q_cond, u, x)
    x = np.asarray(x, dtype=float)
    return fw.w_u * fw.w_bar_u * moments.f(x) * moments.m_u(x[..., u.idx])


# -- curves and surfaces --------------------------------------------------------


@dataclass(frozen=True)
class CVCurve:
    t: np.ndarray
    sigma_sq: np.ndarray
    cv: np.ndarray
    eta: float
    sigma_sq_mc: np.ndarray | None = None
    stderr_mc: np.ndarray | None = None
    cv_mc: np.ndarray | None = None


def cv_curve(
    p_u: Density,
    q_star: Density,
    s: SFunction,
    eta: float,
    t_grid: Sequence[float],
    n_mc: int | None = None,
    rng: np.random.Generator | None = None,
    order: int = DEFAULT_ORDER,
) -> CVCurve:
    """Coefficient of variation along ``q_t = (1 - t) p_u + t q_star``.

    ``sigma^2(q_t) = E_p[(p_u / q_t) S] - eta^2`` by quadrature, and also by
    Monte Carlo under ``p_u`` (one shared sample) when ``n_mc`` is given.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any((t_grid < 0) | (t_grid > 1)):
        raise ValueError("t values must lie in [0, 1]")
    bp = list(s.breakpoints) if s.breakpoints else None
    rule = tensor_gl(p_u.box, order, bp)
    pn = p_u.pdf(rule.nodes)
    sn = s(rule.nodes)
    qsn = q_star.pdf(rule.nodes)
    if n_mc is not None:
        if rng is None:
            raise ValueError("Monte Carlo CV needs an rng")
        xs = p_u.sample(rng, n_mc)
        ps, ss, qss = p_u.pdf(xs), s(xs), q_star.pdf(xs)
    sig, sig_mc, se_mc = [], [], []
    for t in t_grid:
        qt = (1.0 - t) * pn + t * qsn
        sig.append(float((rule.weights * pn) @ (_ratio(pn * sn, qt))) - eta**2)
        if n_mc is not None:
            est = mc_estimate(_ratio(ps * ss, (1.0 - t) * ps + t * qss))
            sig_mc.append(est.value - eta**2)
            se_mc.append(est.stderr)
    sig = np.array(sig)
    cv = np.sqrt(np.maximum(sig, 0.0)) / eta
    if n_mc is None:
        return CVCurve(t_grid, sig, cv, eta)
    sig_mc = np.array(sig_mc)
    return CVCurve(t_grid, sig, cv, eta, sig_mc, np.array(se_mc), np.sqrt(np.maximum(sig_mc, 0.0)) / eta)


@dataclass(frozen=True)
class BetaSurface:
    alpha_grid: np.ndarray
    beta_grid: np.ndarray
    sigma_sq: np.ndarray  # (len(alpha_grid), len(beta_grid)); inf where divergent
    divergent: np.ndarray
    baseline: float
    eta: float
    argmin: tuple[float, float] = field(default=(np.nan, np.nan))
    minimum: float = np.nan

    @property
    def reduction(self) -> float:
        return 1.0 - self.minimum / self.baseline


def symmetric_beta_marginal(params: BetaParams, box: Box) -> ProductDensity:
    """Same rescaled Beta on every axis of ``box``."""
    return product_density([beta_density(params, lo, hi) for lo, hi in zip(box.lower, box.upper)])


def beta_variance_surface(
    moments: ConditionalMoments,
    p: ProductDensity,
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    u: SubsetIndex | None = None,
    order: int = DEFAULT_ORDER,
) -> BetaSurface:
    """Efficiency bound over symmetric Beta marginals on the ``u`` block.

    Each cell is ``sigma_opt_q`` with ``q_u`` a product of identical
    ``Beta(alpha, beta)`` and the reference conditional; the inner
    expectations do not depend on the cell and are computed once.  When
    ``alpha >= 2`` (``beta >= 2``) the weight ``p_u / q_u`` is not integrable at
    the lower (upper) face, so such cells are infinite unless ``p_u S``
    vanishes on that face.
    """
    u = _subset(moments, u)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    beta_grid = np.asarray(beta_grid, dtype=float)
    nodes, ow, p_u = _outer(moments, p, u, order)
    m2 = moments.m_u(nodes) ** 2
    phi2 = conditional_expectation(lambda a, b, x: moments.phi_sq(x), moments, p, u, nodes, order)
    s_nodes = 4.0 * m2 * phi2 - 3.0 * m2**2
    eta = float(ow @ m2)
    baseline = float(ow @ s_nodes) - eta**2
    lo_face = np.any(nodes == nodes.min(axis=0), axis=1)
    hi_face = np.any(nodes == nodes.max(axis=0), axis=1)
    s_lo = bool(np.any(s_nodes[lo_face] * p_u.pdf(nodes[lo_face]) > 0))
    s_hi = bool(np.any(s_nodes[hi_face] * p_u.pdf(nodes[hi_face]) > 0))
    p_nodes = p_u.pdf(nodes)
    sig = np.empty((alpha_grid.size, beta_grid.size))
    div = np.zeros_like(sig, dtype=bool)
    for i, a in enumerate(alpha_grid):
        for j, b in enumerate(beta_grid):
            if (a >= 2.0 and s_lo) or (b >= 2.0 and s_hi):
                sig[i, j] = np.inf
                div[i, j] = True
                continue
            q_u = symmetric_beta_marginal(BetaParams(a, b), p_u.box)
            w_u = _ratio(p_nodes, q_u.pdf(nodes))
            sig[i, j] = float(ow @ (w_u * s_nodes)) - eta**2
    flat = int(np.argmin(sig))
    i, j = np.unravel_index(flat, sig.shape)
    return BetaSurface(alpha_grid, beta_grid, sig, div, baseline, eta, (float(alpha_grid[i]), float(beta_grid[j])), float(sig[i, j]))


def chi2_functional(g: Callable, q: Callable, box: Box, order: int = DEFAULT_ORDER, breakpoints=None) -> float:
    """``integral of g^2 / q`` over ``box``; equals 1 iff ``q = g`` for densities ``g, q``."""
    rule = tensor_gl(box, order, breakpoints)
    gv = np.asarray(g(rule.nodes), dtype=float)
    return float(rule.weights @ _ratio(gv**2, np.asarray(q(rule.nodes), dtype=float)))


@dataclass(frozen=True)
class JensenChain:
    optimal_joint: VarianceReport  # case B marginal with the optimal conditional
    optimal_marginal: VarianceReport  # case A marginal with the reference conditional
    reference: VarianceReport

    @property
    def gaps(self) -> tuple[float, float]:
        return (
            self.optimal_marginal.sigma_sq - self.optimal_joint.sigma_sq,
            self.reference.sigma_sq - self.optimal_marginal.sigma_sq,
        )


def jensen_chain(moments: ConditionalMoments, p: ProductDensity, u: SubsetIndex | None = None, order: int = DEFAULT_ORDER) -> JensenChain:
    u = _subset(moments, u)
    p_u = p.marginal(u.idx)
    _, rep_b = optimal_marginal(p_u, s_function(moments, p, u, "B", order), order)
    _, rep_a = optimal_marginal(p_u, s_function(moments, p, u, "A", order), order)
    return JensenChain(rep_b, rep_a, sigma_opt_p(moments, p, u, order))

