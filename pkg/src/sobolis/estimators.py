"""Sample-based estimators of ``eta_u = E[m_u^2(X_u)]`` and Sobol' indices.

The rank estimator orders the rows by ``X_u`` and averages products of
consecutive outputs.  Under a sampling density ``q`` the outputs are first
replaced by ``Z_u = sqrt(w_u) * w_bar * Y``; the square root touches the
marginal weight only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .densities import ConditionalDensity, Density, ProductDensity, SubsetIndex, factorized_weight, weight
from .models import Dataset, Model
from .quadrature import MCEstimate, mc_estimate

log = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "EstimateReport",
    "SubsetIndex",
    "double_loop_eta",
    "ess",
    "is_mean",
    "nn_rank_eta",
    "rank_eta",
    "reweighted_outputs",
    "sobol_from_eta",
]


@dataclass(frozen=True)
class EstimateReport:
    value: float
    stderr: float
    n: int
    estimator: str
    weights_ess: float | None = None
    stderr_approximate: bool = False
    bias_bound: float | None = None
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "n": self.n,
            "estimator": self.estimator,
            "weights_ess": self.weights_ess,
            "stderr_approximate": self.stderr_approximate,
            "bias_bound": self.bias_bound,
            "flags": list(self.flags),
        }


def ess(w) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(w, dtype=float)
    s2 = float(np.dot(w, w))
    if s2 == 0.0:
        return 0.0
    return float(w.sum() ** 2 / s2)


def reweighted_outputs(
    data: Dataset,
    u: SubsetIndex,
    p: ProductDensity,
    q_u: Density,
    q_cond: ConditionalDensity | None,
) -> np.ndarray:
    """``Z_u = sqrt(w_u(x_u)) * w_bar(x_bar | x_u) * y`` per row."""
    fw = factorized_weight(p, q_u, q_cond, u, data.x)
    return np.sqrt(fw.w_u) * fw.w_bar_u * data.y


def _consecutive_report(z_path: np.ndarray, tag: str, weights_ess: float | None) -> EstimateReport:
    prods = z_path[:-1] * z_path[1:]
    n = z_path.shape[0]
    value = float(prods.mean())
    stderr = float(prods.std(ddof=1) / np.sqrt(n - 1)) if prods.size > 1 else float("inf")
    return EstimateReport(value, stderr, n, tag, weights_ess, stderr_approximate=True)


def rank_eta(z, xu, weights_ess: float | None = None) -> EstimateReport:
    """Rank estimator ``(1/(n-1)) sum z_(i) z_(i+1)`` after sorting by ``xu``.

    Ties in ``xu`` keep the original row order.  The standard error treats the
    consecutive products as independent, which they are not, so it is only
    approximate.
    """
    z = np.asarray(z, dtype=float).ravel()
    xu = np.asarray(xu, dtype=float)
    if xu.ndim == 2:
        if xu.shape[1] != 1:
            raise ValueError("rank_eta orders by a single input; use nn_rank_eta for |u| >= 2")
        xu = xu[:, 0]
    if z.shape[0] != xu.shape[0]:
        raise ValueError("z and xu must have the same length")
    if z.shape[0] < 2:
        raise ValueError("rank estimator needs at least 2 rows")
    order = np.argsort(xu, kind="stable")
    return _consecutive_report(z[order], "rank", weights_ess)


def greedy_nn_path(points: np.ndarray, k_query: int = 16) -> np.ndarray:
    """Greedy nearest-neighbour tour through all rows of ``points``.

    Starts at the row with the smallest first coordinate; distance ties go to
    the lower row index.  When every queried neighbour is already visited the
    query widens; once most of the KD-tree is visited it is rebuilt over the
    remaining rows.
    """
    n = points.shape[0]
    visited = np.zeros(n, dtype=bool)
    path = np.empty(n, dtype=np.int64)
    alive = np.arange(n)
    tree = cKDTree(points)
    cur = int(np.argmin(points[:, 0]))
    for step in range(n - 1):
        path[step] = cur
        visited[cur] = True
        kk = k_query
        while True:
            kk = min(kk, alive.size)
            dist, loc = tree.query(points[cur], k=kk)
            dist = np.atleast_1d(dist)
            gid = alive[np.atleast_1d(loc)]
            free = ~visited[gid]
            if free.any():
                dist, gid = dist[free], gid[free]
                cur = int(gid[dist == dist[0]].min())
                break
            if n - step - 1 < alive.size // 2:
                alive = np.flatnonzero(~visited)
                tree = cKDTree(points[alive])
                kk = k_query
            else:
                kk *= 8
    path[n - 1] = cur
    return path


def nn_rank_eta(z, xu, weights_ess: float | None = None) -> EstimateReport:
    """Rank estimator generalized to ``|u| >= 2`` via a greedy NN path.

    Coordinates are standardized (unit sample standard deviation) before
    distances are taken.  For one column this is exactly :func:`rank_eta`.
    """
    z = np.asarray(z, dtype=float).ravel()
    xu = np.asarray(xu, dtype=float)
    if xu.ndim == 1:
        xu = xu[:, None]
    if xu.shape[1] == 1:
        return rank_eta(z, xu[:, 0], weights_ess)
    if z.shape[0] != xu.shape[0]:
        raise ValueError("z and xu must have the same number of rows")
    if z.shape[0] < 2:
        raise ValueError("rank estimator needs at least 2 rows")
    scale = xu.std(axis=0)
    scale[scale == 0] = 1.0
    path = greedy_nn_path((xu - xu.mean(axis=0)) / scale)
    rep = _consecutive_report(z[path], "nn_rank", weights_ess)
    return rep


def double_loop_eta(
    model: Model,
    p: ProductDensity,
    u: SubsetIndex,
    n_outer: int,
    n_inner: int,
    rng: np.random.Generator,
    chunk: int = 200,
) -> EstimateReport:
    """Brute-force nested Monte Carlo: average of squared inner means.

    The squared inner mean overshoots ``m_u^2`` by ``Var(Y | x_u) / n_inner``;
    the sample average of that excess is returned as ``bias_bound``.
    """
    if not isinstance(p, ProductDensity):
        raise ValueError("double_loop_eta needs a product reference density")
    if u.k != model.dim_x or p.dim != model.dim_x:
        raise ValueError("model, density and subset dimensions disagree")
    if n_outer < 2 or n_inner < 1:
        raise ValueError("need n_outer >= 2 and n_inner >= 1")
    p_u = p.marginal(u.idx)
    p_bar = p.marginal(u.bar_idx)
    xu = p_u.sample(rng, n_outer)
    sq_means = np.empty(n_outer)
    excess = np.zeros(n_outer)
    for start in range(0, n_outer, chunk):
        rows = xu[start : start + chunk]
        b = rows.shape[0]
        if p_bar is None:
            xbar = np.empty((b * n_inner, 0))
        else:
            xbar = p_bar.sample(rng, b * n_inner)
        x = u.assemble(np.repeat(rows, n_inner, axis=0), xbar)
        y = model(x, model.draw_noise(rng, b * n_inner)).reshape(b, n_inner)
        mean = y.mean(axis=1)
        sq_means[start : start + b] = mean**2
        if n_inner > 1:
            excess[start : start + b] = y.var(axis=1, ddof=1) / n_inner
    flags = []
    bias = float(excess.mean()) if n_inner > 1 else None
    if n_inner == 1:
        flags.append("biased: n_inner=1 estimates E[Y^2]-type cross term, not eta_u")
    est = mc_estimate(sq_means)
    return EstimateReport(est.value, est.stderr, n_outer, "double_loop", bias_bound=bias, flags=tuple(flags))


def is_mean(f: Callable[[np.ndarray], np.ndarray], p: Density, q: Density, n: int, rng: np.random.Generator) -> MCEstimate:
    """Importance sampling estimate of ``E_p[f(X)]`` from ``n`` draws of ``q``."""
    x = q.sample(rng, n)
    return mc_estimate(np.asarray(f(x), dtype=float) * weight(p, q, x))


def sobol_from_eta(eta_hat: float, y) -> float:
    """``S_u = (eta_u - E[Y]^2) / Var(Y)`` with sample moments of ``y``."""
    y = np.asarray(y, dtype=float)
    var = float(y.var(ddof=1))
    if var <= 0:
        raise ValueError("output variance is zero; Sobol' index undefined")
    return (eta_hat - float(y.mean()) ** 2) / var
