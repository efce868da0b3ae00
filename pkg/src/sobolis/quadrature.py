"""Tensor Gauss-Legendre rules on boxes and plain Monte Carlo integration.

Integrands built from the g-function contain ``|4x - 2|`` kinks, so the rules
accept per-axis breakpoints: each axis is split at its breakpoints and a full
Gauss-Legendre rule is placed on every piece.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

MAX_TENSOR_DIM = 4


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n: int


def gl_1d(lo: float, hi: float, order: int, breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on ``[lo, hi]``.

    Breakpoints outside the open interval are ignored.
    """
    if order < 2:
        raise ValueError(f"quadrature order must be >= 2, got {order}")
    if not hi > lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    t, w = np.polynomial.legendre.leggauss(order)
    cuts = [lo] + sorted(b for b in breakpoints if lo < b < hi) + [hi]
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (b - a)
        nodes.append(a + half * (t + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def tensor_gl(box, order: int, breakpoints: Sequence[Sequence[float]] | None = None) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule mapped onto ``box``.

    Parameters
    ----------
    box : Box
        Integration domain, dimension 1 to 4.
    order : int
        Gauss-Legendre points per axis (per piece when breakpoints are given).
    breakpoints : sequence of sequences, optional
        Interior split points for each axis.
    """
    d = box.dim
    if d > MAX_TENSOR_DIM:
        raise ValueError(f"tensor quadrature limited to dim <= {MAX_TENSOR_DIM}, got {d}; use mc_integrate")
    if breakpoints is None:
        breakpoints = [()] * d
    if len(breakpoints) != d:
        raise ValueError("need one breakpoint list per axis")
    axes = [gl_1d(box.lower[j], box.upper[j], order, breakpoints[j]) for j in range(d)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return QuadratureRule(nodes, weights)


def integrate(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """Weighted node sum of ``f`` (vectorized over rows of ``rule.nodes``)."""
    vals = np.asarray(f(rule.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = int(np.sum(~np.isfinite(vals)))
        raise FloatingPointError(f"integrand is non-finite at {bad} quadrature nodes")
    return float(np.dot(rule.weights, vals))


def mc_estimate(values: np.ndarray) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples for a standard error")
    bad = int(np.sum(~np.isfinite(values)))
    if bad:
        raise FloatingPointError(f"{bad} non-finite Monte Carlo values")
    return MCEstimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(n)), n)


def mc_integrate(f: Callable[[np.ndarray], np.ndarray], sampler, n: int, rng: np.random.Generator) -> MCEstimate:
    """Sample mean of ``f(X)`` with ``X ~ sampler`` and its standard error."""
    if n < 2:
        raise ValueError("need n >= 2")
    x = sampler.sample(rng, n)
    return mc_estimate(f(x))
