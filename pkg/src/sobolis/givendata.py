"""Reverse importance sampling on a fixed dataset.

A dataset drawn under the uniform product on the standardized cube is reused
to estimate ``eta_u(theta) = E_{p_theta}[m_u^2(X_u)]`` for Beta-product input
laws ``p_theta``.  Nothing here evaluates a model.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import betaln

from .densities import BetaParams, Box, SubsetIndex
from .estimators import ess, nn_rank_eta, rank_eta
from .models import Dataset

log = logging.getLogger(__name__)

STD_EPS = 1e-9
LOW_ESS_FRACTION = 0.05


class DatasetError(ValueError):
    pass


# -- I/O ------------------------------------------------------------------------


def load_dataset(path, lower: Sequence[float] | None = None, upper: Sequence[float] | None = None) -> Dataset:
    """Read a CSV with a header, ``k`` input columns then one output column.

    Without explicit bounds the box is the per-column min/max.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header, body = [c.strip() for c in rows[0]], rows[1:]
    if len(header) < 2:
        raise DatasetError(f"{path}: need at least one input column and one output column")
    k = len(header) - 1
    values = np.empty((len(body), k + 1))
    for i, r in enumerate(body, start=2):
        if len(r) != k + 1:
            raise DatasetError(f"{path}:{i}: expected {k + 1} fields, got {len(r)}")
        try:
            values[i - 2] = [float(c) for c in r]
        except ValueError as exc:
            raise DatasetError(f"{path}:{i}: non-numeric cell ({exc})") from None
    if values.shape[0] < 2:
        raise DatasetError(f"{path}: need at least 2 data rows, got {values.shape[0]}")
    x, y = values[:, :k], values[:, k]
    if (lower is None) != (upper is None):
        raise DatasetError("give both lower and upper bounds or neither")
    if lower is None:
        lo, hi = x.min(axis=0), x.max(axis=0)
        if np.any(lo >= hi):
            raise DatasetError(f"{path}: constant input column; supply explicit bounds")
        box = Box(lo, hi)
        log.warning("%s: bounds inferred from column min/max; extreme rows sit on the faces and Beta weights with alpha or beta < 1 are large there", path)
    else:
        if len(lower) != k or len(upper) != k:
            raise DatasetError(f"{path}: {k} input columns but {len(lower)}/{len(upper)} bounds declared")
        box = Box(lower, upper)
    try:
        return Dataset(x, y, box, tuple(header))
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def write_dataset(data: Dataset, path) -> None:
    names = data.column_names or tuple(f"x{j + 1}" for j in range(data.k)) + ("y",)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for xi, yi in zip(data.x, data.y):
            w.writerow([_fmt(v) for v in xi] + [_fmt(yi)])


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# -- reweighting ----------------------------------------------------------------


def standardize(data: Dataset, bounds: Box | None = None) -> Dataset:
    """Map each column affinely onto [0, 1], then clamp into ``[eps, 1 - eps]``."""
    bounds = bounds or data.box
    if bounds.dim != data.k:
        raise DatasetError(f"bounds have dimension {bounds.dim} but data has {data.k} inputs")
    outside = np.flatnonzero(~bounds.contains(data.x))
    if outside.size:
        shown = ", ".join(map(str, outside[:10]))
        raise DatasetError(f"{outside.size} rows outside the declared bounds (rows {shown}{'...' if outside.size > 10 else ''})")
    xs = (data.x - bounds.lower) / (bounds.upper - bounds.lower)
    xs = np.clip(xs, STD_EPS, 1.0 - STD_EPS)
    return Dataset(xs, data.y, Box.unit(data.k), data.column_names)


@dataclass(frozen=True)
class ThetaConfig:
    params: tuple[BetaParams, ...]

    @classmethod
    def baseline(cls, k: int) -> "ThetaConfig":
        return cls(tuple(BetaParams(1.0, 1.0) for _ in range(k)))

    @classmethod
    def uniform_all(cls, k: int, alpha: float, beta: float) -> "ThetaConfig":
        return cls(tuple(BetaParams(alpha, beta) for _ in range(k)))

    def with_input(self, j: int, alpha: float, beta: float) -> "ThetaConfig":
        """Copy with input ``j`` (1-based) set to Beta(alpha, beta)."""
        ps = list(self.params)
        ps[j - 1] = BetaParams(alpha, beta)
        return ThetaConfig(tuple(ps))

    @property
    def k(self) -> int:
        return len(self.params)

    @property
    def is_baseline(self) -> bool:
        return all(p.is_uniform for p in self.params)


def _beta_pdf_unit(x: np.ndarray, p: BetaParams) -> np.ndarray:
    if p.is_uniform:
        return np.ones_like(x)
    a, b = p.alpha, p.beta
    return np.exp((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b))


def coordinate_weights(x_std: np.ndarray, theta: ThetaConfig) -> np.ndarray:
    """Per-coordinate Beta-to-uniform ratios, shape ``(n, k)``."""
    x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
    if x_std.shape[1] != theta.k:
        raise ValueError(f"theta has {theta.k} entries but points have {x_std.shape[1]} coordinates")
    return np.stack([_beta_pdf_unit(x_std[:, j], p) for j, p in enumerate(theta.params)], axis=1)


def theta_weight(x_std, theta: ThetaConfig) -> np.ndarray:
    """``prod_j Beta_{theta_j}(x_j) / Unif[0,1](x_j)``."""
    return np.prod(coordinate_weights(x_std, theta), axis=1)


def reweighted_theta_outputs(data: Dataset, u: SubsetIndex, theta: ThetaConfig) -> np.ndarray:
    """``sqrt(w_u) * w_bar * y`` with Beta-to-uniform block weights."""
    cw = coordinate_weights(data.x, theta)
    w_u = np.prod(cw[:, u.idx], axis=1)
    w_bar = np.prod(cw[:, u.bar_idx], axis=1)
    return np.sqrt(w_u) * w_bar * data.y


# -- sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    mode: str
    u: SubsetIndex
    alpha_grid: tuple[float, ...]
    beta_grid: tuple[float, ...]
    target_input: int | None = None
    targets: tuple[int, ...] | None = None  # global mode; default every input
    paired: bool = False  # walk alpha_grid and beta_grid together instead of their product

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(v) for v in self.alpha_grid))
        object.__setattr__(self, "beta_grid", tuple(float(v) for v in self.beta_grid))
        if self.mode not in ("marginal", "global"):
            raise ValueError(f"sweep mode must be 'marginal' or 'global', got {self.mode!r}")
        if not self.alpha_grid or not self.beta_grid:
            raise ValueError("sweep grids must be non-empty")
        if self.paired and len(self.alpha_grid) != len(self.beta_grid):
            raise ValueError("paired grids must have equal length")
        if self.mode == "marginal" and not (self.target_input and 1 <= self.target_input <= self.u.k):
            raise ValueError(f"marginal sweep needs target_input in 1..{self.u.k}")

    def grid(self) -> list[tuple[float, float]]:
        if self.paired:
            return list(zip(self.alpha_grid, self.beta_grid))
        return [(a, b) for a in self.alpha_grid for b in self.beta_grid]

    def configs(self) -> list[ThetaConfig]:
        k = self.u.k
        base = ThetaConfig.baseline(k)
        out = []
        for a, b in self.grid():
            if self.mode == "marginal":
                out.append(base.with_input(self.target_input, a, b))
            else:
                theta = base
                for j in self.targets or range(1, k + 1):
                    theta = theta.with_input(j, a, b)
                out.append(theta)
        return out


@dataclass(frozen=True)
class SweepEntry:
    theta: ThetaConfig
    eta_hat: float
    stderr: float
    ess: float

    def reliable(self, n: int) -> bool:
        return self.ess >= LOW_ESS_FRACTION * n


@dataclass(frozen=True)
class SweepResult:
    entries: list[SweepEntry]
    baseline_eta: float
    baseline_stderr: float
    n: int
    k: int
    u: SubsetIndex | None = None
    meta: dict = field(default_factory=dict)


def estimate_theta(data: Dataset, u: SubsetIndex, theta: ThetaConfig):
    """Rank estimate of ``eta_u(theta)`` and the ESS of the full weights."""
    z = reweighted_theta_outputs(data, u, theta)
    w = theta_weight(data.x, theta)
    xu = data.x[:, u.idx]
    est = rank_eta(z, xu[:, 0]) if len(u.u) == 1 else nn_rank_eta(z, xu)
    return est, ess(w)


def eta_sweep(data: Dataset, spec: SweepSpec) -> SweepResult:
    """``eta_u(theta)`` for every grid configuration, all from ``data``.

    ``data`` must already be standardized to the unit cube.
    """
    if data.k != spec.u.k:
        raise ValueError(f"dataset has {data.k} inputs but the subset is over {spec.u.k}")
    if np.any(data.x <= 0) or np.any(data.x >= 1):
        raise ValueError("eta_sweep expects standardized data in the open unit cube")
    base, _ = estimate_theta(data, spec.u, ThetaConfig.baseline(data.k))
    entries = []
    for theta in spec.configs():
        est, e = estimate_theta(data, spec.u, theta)
        if e < LOW_ESS_FRACTION * data.n:
            log.warning("ESS %.1f below %.0f%% of n for %s", e, 100 * LOW_ESS_FRACTION, theta)
        entries.append(SweepEntry(theta, est.value, est.stderr, e))
    return SweepResult(entries, base.value, base.stderr, data.n, data.k, spec.u, {"mode": spec.mode})


SWEEP_TAIL = ("eta_hat", "stderr", "ess", "reliable", "baseline")


def sweep_header(k: int) -> list[str]:
    return [f"alpha_{j}" for j in range(1, k + 1)] + [f"beta_{j}" for j in range(1, k + 1)] + list(SWEEP_TAIL)


def write_sweep_rows(result: SweepResult, fh) -> None:
    """One CSV row per grid configuration, floats with 17 significant digits."""
    w = csv.writer(fh)
    w.writerow(sweep_header(result.k))
    for e in result.entries:
        w.writerow(
            [_fmt(p.alpha) for p in e.theta.params]
            + [_fmt(p.beta) for p in e.theta.params]
            + [_fmt(e.eta_hat), _fmt(e.stderr), _fmt(e.ess), int(e.reliable(result.n)), int(e.theta.is_baseline)]
        )


def write_sweep(result: SweepResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        write_sweep_rows(result, fh)


def read_sweep(path) -> list[dict]:
    """Rows of a sweep CSV as dicts of floats (flags as ints)."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            out.append({key: (int(v) if key in ("reliable", "baseline") else float(v)) for key, v in row.items()})
    return out
