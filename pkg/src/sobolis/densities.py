"""Densities on boxes, importance weights and a small density algebra.

All pdfs are vectorized over the last axis: ``pdf(x)`` takes an array of shape
``(..., d)`` and returns shape ``(...)``.  Samplers take a caller-owned
``numpy.random.Generator``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import betaln

from .quadrature import integrate, tensor_gl

log = logging.getLogger(__name__)

ENDPOINT_EPS = 1e-12
ENVELOPE_SAFETY = 1.5


class SupportError(ValueError):
    """The sampling density vanishes where the reference density does not."""


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ValueError("box bounds must be equal-length non-empty vectors")
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper on every axis, got {lo} and {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "Box":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def sub(self, idx) -> "Box":
        idx = np.asarray(idx, dtype=int)
        return Box(self.lower[idx], self.upper[idx])


@dataclass(frozen=True)
class SubsetIndex:
    """Index set ``u`` (1-based, as written in formulas) inside ``{1..k}``."""

    u: tuple[int, ...]
    k: int

    def __post_init__(self):
        u = tuple(sorted(set(int(i) for i in self.u)))
        if not u:
            raise ValueError("subset u must be non-empty")
        if u[0] < 1 or u[-1] > self.k:
            raise ValueError(f"subset {u} not contained in 1..{self.k}")
        object.__setattr__(self, "u", u)

    @classmethod
    def parse(cls, text: str, k: int) -> "SubsetIndex":
        return cls(tuple(int(t) for t in text.replace(" ", "").split(",") if t), k)

    @property
    def idx(self) -> np.ndarray:
        return np.array(self.u, dtype=int) - 1

    @property
    def bar_idx(self) -> np.ndarray:
        return np.array([j for j in range(self.k) if j + 1 not in self.u], dtype=int)

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(int(j) + 1 for j in self.bar_idx)

    @property
    def is_full(self) -> bool:
        return len(self.u) == self.k

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return x[..., self.idx], x[..., self.bar_idx]

    def assemble(self, xu: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`split`, broadcasting the leading axes."""
        xu = np.asarray(xu, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        lead = np.broadcast_shapes(xu.shape[:-1], xbar.shape[:-1])
        out = np.empty(lead + (self.k,))
        out[..., self.idx] = np.broadcast_to(xu, lead + (xu.shape[-1],))
        if self.bar_idx.size:
            out[..., self.bar_idx] = np.broadcast_to(xbar, lead + (xbar.shape[-1],))
        return out

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.u)) + "}"


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta shape parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def is_uniform(self) -> bool:
        return self.alpha == 1.0 and self.beta == 1.0


@dataclass(frozen=True)
class FactorizedWeight:
    w_u: np.ndarray
    w_bar_u: np.ndarray
    w_total: np.ndarray


class Density:
    """A probability density on a box with pdf evaluation and sampling."""

    def __init__(self, box: Box, pdf: Callable, sampler: Callable, label: str = ""):
        self.box = box
        self._pdf = pdf
        self._sampler = sampler
        self.label = label

    @property
    def dim(self) -> int:
        return self.box.dim

    def pdf(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        inside = self.box.contains(x)
        return np.where(inside, self._pdf(x), 0.0)

    __call__ = pdf

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._sampler(rng, n)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label!r}, dim={self.dim})"


class ProductDensity(Density):
    """Independent product of one-dimensional marginals."""

    def __init__(self, marginals: Sequence[Density], label: str = ""):
        marginals = list(marginals)
        if not marginals:
            raise ValueError("product_density needs at least one marginal")
        if any(m.dim != 1 for m in marginals):
            raise ValueError("product_density marginals must be one-dimensional")
        self.marginals = marginals
        box = Box([m.box.lower[0] for m in marginals], [m.box.upper[0] for m in marginals])
        label = label or " x ".join(m.label for m in marginals)
        super().__init__(box, self._prod_pdf, self._prod_sample, label)

    def _prod_pdf(self, x):
        out = np.ones(x.shape[:-1])
        for j, m in enumerate(self.marginals):
            out = out * m.pdf(x[..., j : j + 1])
        return out

    def _prod_sample(self, rng, n):
        return np.concatenate([m.sample(rng, n) for m in self.marginals], axis=1)

    def marginal(self, idx) -> "ProductDensity | None":
        """Product of the marginals at 0-based ``idx``; ``None`` when empty."""
        idx = [int(i) for i in np.atleast_1d(idx)]
        if not idx:
            return None
        return ProductDensity([self.marginals[i] for i in idx])


class MixtureDensity(Density):
    def __init__(self, p: Density, q: Density, t: float):
        self.p, self.q, self.t = p, q, float(t)
        super().__init__(p.box, self._mix_pdf, self._mix_sample, f"(1-{t:g})*{p.label} + {t:g}*{q.label}")

    def _mix_pdf(self, x):
        if self.t == 0.0:
            return self.p.pdf(x)
        if self.t == 1.0:
            return self.q.pdf(x)
        return (1.0 - self.t) * self.p.pdf(x) + self.t * self.q.pdf(x)

    def _mix_sample(self, rng, n):
        pick_q = rng.random(n) < self.t
        out = np.empty((n, self.dim))
        nq = int(pick_q.sum())
        if nq:
            out[pick_q] = self.q.sample(rng, nq)
        if n - nq:
            out[~pick_q] = self.p.sample(rng, n - nq)
        return out


class NormalizedDensity(Density):
    """Density obtained by dividing a non-negative function by its integral."""

    def __init__(self, box, pdf, sampler, label, constant: float):
        super().__init__(box, pdf, sampler, label)
        self.constant = constant


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        if dim == 1:
            return x[..., None]
        raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


def _clamp_inward(x, lo, hi):
    eps = ENDPOINT_EPS * (hi - lo)
    return np.clip(x, lo + eps, hi - eps)


def default_quad_order(dim: int) -> int:
    return 64 if dim <= 2 else 32


# -- constructors -----------------------------------------------------------


def uniform_density(box: Box) -> Density:
    inv_vol = 1.0 / box.volume

    def pdf(x):
        return np.full(x.shape[:-1], inv_vol)

    def sampler(rng, n):
        return box.lower + (box.upper - box.lower) * rng.random((n, box.dim))

    return Density(box, pdf, sampler, "U" + _box_label(box))


def beta_density(params: BetaParams, lo: float = 0.0, hi: float = 1.0) -> Density:
    """Beta(alpha, beta) rescaled to ``(lo, hi)``."""
    a, b = float(params.alpha), float(params.beta)
    width = hi - lo
    box = Box([lo], [hi])
    log_norm = betaln(a, b) + np.log(width)

    def pdf(x):
        s = _clamp_inward((x[..., 0] - lo) / width, 0.0, 1.0)
        if a == 1.0 and b == 1.0:
            return np.full(s.shape, 1.0 / width)
        return np.exp((a - 1.0) * np.log(s) + (b - 1.0) * np.log1p(-s) - log_norm)

    def sampler(rng, n):
        s = _clamp_inward(rng.beta(a, b, size=n), 0.0, 1.0)
        return (lo + width * s)[:, None]

    return Density(box, pdf, sampler, f"Beta({a:g},{b:g})")


def product_density(marginals: Sequence[Density]) -> ProductDensity:
    return ProductDensity(marginals)


def interpolate_density(p: Density, q: Density, t: float) -> MixtureDensity:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter must lie in [0, 1], got {t}")
    if not (np.array_equal(p.box.lower, q.box.lower) and np.array_equal(p.box.upper, q.box.upper)):
        raise ValueError("interpolated densities must share the same box")
    return MixtureDensity(p, q, t)


def normalize_density(
    unnormalized_pdf: Callable,
    box: Box,
    quad_order: int | None = None,
    breakpoints: Sequence[Sequence[float]] | None = None,
    label: str = "normalized",
) -> NormalizedDensity:
    """Normalize a non-negative function on ``box`` by tensor quadrature.

    The integral is attached as ``.constant``.  Sampling is inverse-CDF on a
    fine grid in 1D and uniform-envelope rejection otherwise.
    """
    order = quad_order or default_quad_order(box.dim)
    rule = tensor_gl(box, order, breakpoints)
    vals = np.asarray(unnormalized_pdf(rule.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("unnormalized pdf is non-finite on the quadrature grid")
    if np.any(vals < 0):
        raise ValueError(f"unnormalized pdf is negative at {int(np.sum(vals < 0))} grid nodes")
    const = integrate(lambda _: vals, rule)
    if not (np.isfinite(const) and const > 0):
        raise ValueError(f"normalizing constant must be positive and finite, got {const}")

    def pdf(x):
        return np.asarray(unnormalized_pdf(x), dtype=float) / const

    if box.dim == 1:
        sampler = _grid_inverse_cdf_sampler(pdf, box)
    else:
        sampler = _rejection_sampler(pdf, box, vals.max() / const)
    return NormalizedDensity(box, pdf, sampler, label, const)


def _grid_inverse_cdf_sampler(pdf, box: Box, cells: int = 1 << 14):
    lo, hi = box.lower[0], box.upper[0]
    grid = np.linspace(lo, hi, cells + 1)
    dens = pdf(grid[:, None])
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]

    def sampler(rng, n):
        x = np.interp(rng.random(n), cdf, grid)
        return _clamp_inward(x, lo, hi)[:, None]

    return sampler


def _rejection_sampler(pdf, box: Box, grid_max: float):
    state = {"bound": ENVELOPE_SAFETY * grid_max}

    def draw(rng, n, bound):
        out = np.empty((n, box.dim))
        filled = 0
        peak = 0.0
        while filled < n:
            m = max(2 * (n - filled), 64)
            x = box.lower + (box.upper - box.lower) * rng.random((m, box.dim))
            x = _clamp_inward(x, box.lower, box.upper)
            dens = pdf(x)
            peak = max(peak, float(dens.max()))
            if peak > bound:
                return None, peak
            keep = x[rng.random(m) * bound < dens][: n - filled]
            out[filled : filled + len(keep)] = keep
            filled += len(keep)
        return out, peak

    def sampler(rng, n):
        out, peak = draw(rng, n, state["bound"])
        if out is None:
            log.warning("rejection envelope %.6g violated (pdf %.6g); inflating and retrying", state["bound"], peak)
            state["bound"] = ENVELOPE_SAFETY * peak
            out, peak = draw(rng, n, state["bound"])
            if out is None:
                raise RuntimeError(f"rejection envelope violated twice (pdf {peak:.6g} > {state['bound']:.6g})")
        return out

    return sampler


def _box_label(box: Box) -> str:
    return "x".join(f"[{lo:g},{hi:g}]" for lo, hi in zip(box.lower, box.upper))


# -- conditional densities --------------------------------------------------


class ConditionalDensity:
    """Density of ``x_bar`` given ``x_u``.

    ``pdf(xu, xbar)`` broadcasts the leading axes of both arguments;
    ``sample(rng, xu)`` draws one ``x_bar`` per row of ``xu``.
    """

    def __init__(self, box: Box, pdf: Callable, sampler: Callable, label: str = ""):
        self.box = box
        self._pdf = pdf
        self._sampler = sampler
        self.label = label

    @property
    def dim(self) -> int:
        return self.box.dim

    def pdf(self, xu, xbar) -> np.ndarray:
        xbar = np.asarray(xbar, dtype=float)
        return np.where(self.box.contains(xbar), self._pdf(np.asarray(xu, dtype=float), xbar), 0.0)

    def sample(self, rng: np.random.Generator, xu) -> np.ndarray:
        return self._sampler(rng, np.asarray(xu, dtype=float))


def independent_conditional(density: Density) -> ConditionalDensity:
    """Conditional that ignores ``x_u`` (independent inputs)."""

    def pdf(xu, xbar):
        lead = np.broadcast_shapes(xu.shape[:-1], xbar.shape[:-1])
        return np.broadcast_to(density.pdf(xbar), lead)

    def sampler(rng, xu):
        return density.sample(rng, xu.shape[0])

    cond = ConditionalDensity(density.box, pdf, sampler, density.label)
    cond.base = density
    return cond


# -- weights ----------------------------------------------------------------


def _ratio(num, den) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    bad = (den <= 0) & (num > 0)
    if np.any(bad):
        raise SupportError(f"sampling density vanishes at {int(bad.sum())} points where the reference does not")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)


def weight(p: Density, q: Density, x) -> np.ndarray:
    """Likelihood ratio ``p(x) / q(x)``; zero where ``p`` vanishes."""
    return _ratio(p.pdf(x), q.pdf(x))


def factorized_weight(p: ProductDensity, q_u: Density, q_cond: ConditionalDensity | None, u: SubsetIndex, x) -> FactorizedWeight:
    """Split the likelihood ratio into its ``u`` block and its conditional part.

    ``p`` must be a product density, so ``p(x_bar | x_u) = p_bar(x_bar)``.
    ``q_cond`` is ignored (taken as 1) when ``u`` is the full index set.
    """
    x = _as_points(x, u.k)
    xu, xbar = u.split(x)
    w_u = _ratio(p.marginal(u.idx).pdf(xu), q_u.pdf(xu))
    if u.is_full:
        w_bar = np.ones_like(w_u)
    else:
        if q_cond is None:
            raise ValueError("q_cond is required when the complement of u is non-empty")
        w_bar = _ratio(p.marginal(u.bar_idx).pdf(xbar), q_cond.pdf(xu, xbar))
    return FactorizedWeight(w_u, w_bar, w_u * w_bar)


def joint_from_factors(q_u: Density, q_cond: ConditionalDensity | None, u: SubsetIndex) -> Density:
    """Joint density ``q_u(x_u) q_cond(x_bar | x_u)`` on the full box."""
    if u.is_full:
        box = q_u.box
    else:
        lower = np.empty(u.k)
        upper = np.empty(u.k)
        lower[u.idx], upper[u.idx] = q_u.box.lower, q_u.box.upper
        lower[u.bar_idx], upper[u.bar_idx] = q_cond.box.lower, q_cond.box.upper
        box = Box(lower, upper)

    def pdf(x):
        xu, xbar = u.split(x)
        out = q_u.pdf(xu)
        if not u.is_full:
            out = out * q_cond.pdf(xu, xbar)
        return out

    def sampler(rng, n):
        xu = q_u.sample(rng, n)
        xbar = np.empty((n, 0)) if u.is_full else q_cond.sample(rng, xu)
        return u.assemble(xu, xbar)

    label = q_u.label if u.is_full else f"{q_u.label} * {q_cond.label}"
    return Density(box, pdf, sampler, label)
