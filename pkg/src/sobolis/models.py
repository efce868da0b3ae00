"""Evaluable models, the Sobol' g-function with closed-form moments, datasets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .densities import Box, Density, SubsetIndex

# Kink of |4x - 2| in every g-function coordinate.
GFUN_KINK = 0.5


@dataclass(frozen=True)
class Model:
    """``Y = f(X, W)`` with ``W`` drawn from ``noise`` (absent when ``dim_w == 0``).

    ``func(x, w)`` is vectorized over rows; ``w`` is an ``(n, 0)`` array for
    deterministic models.
    """

    dim_x: int
    dim_w: int
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: Density | None = None
    label: str = ""

    def __post_init__(self):
        if self.dim_w > 0 and self.noise is None:
            raise ValueError("a model with dim_w > 0 needs a noise density")

    @property
    def deterministic(self) -> bool:
        return self.dim_w == 0

    def __call__(self, x, w=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if w is None:
            if self.dim_w:
                raise ValueError("stochastic model called without noise values")
            w = np.empty(x.shape[:-1] + (0,))
        return np.asarray(self.func(x, np.asarray(w, dtype=float)), dtype=float)

    def draw_noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.dim_w == 0:
            return np.empty((n, 0))
        return self.noise.sample(rng, n)


@dataclass(frozen=True)
class ConditionalMoments:
    """Closed-form ``m_u(x_u) = E[Y | X_u = x_u]`` and ``phi^2(x) = E[Y^2 | X = x]``.

    ``breakpoints`` lists interior kinks per input axis so quadrature can split
    there.  ``f`` is set for deterministic models only.
    """

    u: SubsetIndex
    m_u: Callable[[np.ndarray], np.ndarray]
    phi_sq: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple[tuple[float, ...], ...]
    f: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""

    @property
    def k(self) -> int:
        return self.u.k

    @property
    def deterministic(self) -> bool:
        return self.f is not None

    def phi(self, x) -> np.ndarray:
        return np.sqrt(self.phi_sq(x))

    def breaks(self, idx) -> list[tuple[float, ...]]:
        return [self.breakpoints[int(i)] for i in np.atleast_1d(idx)]


@dataclass(frozen=True)
class GFunctionSpec:
    a: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        if not a:
            raise ValueError("g-function needs at least one coefficient")
        if any(v < 0 or not np.isfinite(v) for v in a):
            raise ValueError(f"g-function coefficients must be finite and >= 0, got {a}")
        object.__setattr__(self, "a", a)

    @property
    def k(self) -> int:
        return len(self.a)

    @classmethod
    def benchmark(cls, k: int = 3) -> "GFunctionSpec":
        """``a_i = i`` for ``i = 1..k``."""
        return cls(tuple(float(i) for i in range(1, k + 1)))


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    box: Box
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 2:
            raise ValueError("a dataset needs at least 2 rows")
        if x.shape[1] != self.box.dim:
            raise ValueError(f"x has {x.shape[1]} columns but the box has dimension {self.box.dim}")
        if not np.all(np.isfinite(y)):
            raise ValueError(f"{int(np.sum(~np.isfinite(y)))} non-finite outputs")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]


# -- g-function ---------------------------------------------------------------


def gfunction_factor(a: float, x) -> np.ndarray:
    """One coordinate factor ``(|4x - 2| + a) / (1 + a)``; unit mean on [0, 1]."""
    return (np.abs(4.0 * np.asarray(x, dtype=float) - 2.0) + a) / (1.0 + a)


def factor_second_moment(a: float) -> float:
    """``E[g_i^2]`` under U[0, 1], i.e. ``1 + 1 / (3 (1 + a)^2)``."""
    return 1.0 + 1.0 / (3.0 * (1.0 + a) ** 2)


def factor_fourth_moment(a: float) -> float:
    """``E[g_i^4]`` under U[0, 1]; ``|4x - 2|`` is U[0, 2]."""
    return (16.0 / 5.0 + 8.0 * a + 8.0 * a**2 + 4.0 * a**3 + a**4) / (1.0 + a) ** 4


def _gprod(a: Sequence[float], x: np.ndarray) -> np.ndarray:
    out = np.ones(x.shape[:-1])
    for j, aj in enumerate(a):
        out = out * gfunction_factor(aj, x[..., j])
    return out


def gfunction_eval(spec: GFunctionSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.k:
        raise ValueError(f"expected {spec.k} coordinates, got shape {x.shape}")
    if np.any((x < 0) | (x > 1)):
        raise ValueError("g-function inputs must lie in the unit cube")
    return _gprod(spec.a, x)


def gfunction_moments(
    spec: GFunctionSpec,
    u: SubsetIndex | Sequence[int],
    deterministic: bool = False,
    complement_factor: float | None = None,
) -> ConditionalMoments:
    """Conditional moments of the g-function for the index set ``u``.

    With ``deterministic=False`` the complement coordinates act as noise, so
    ``phi^2(x) = prod_{i in u} g_i^2(x_i) * prod_{j not in u} E[g_j^2]`` and
    ``complement_factor`` may override the product of complement second
    moments.  With ``deterministic=True`` every coordinate is a controllable
    input and ``phi^2 = f^2``.
    """
    if not isinstance(u, SubsetIndex):
        u = SubsetIndex(tuple(u), spec.k)
    if u.k != spec.k:
        raise ValueError(f"subset is over {u.k} inputs but the g-function has {spec.k}")
    a_u = [spec.a[i] for i in u.idx]
    a = spec.a
    u_idx = u.idx

    def m_u(xu):
        return _gprod(a_u, np.asarray(xu, dtype=float))

    def f(x):
        return _gprod(a, np.asarray(x, dtype=float))

    breakpoints = tuple((GFUN_KINK,) for _ in range(spec.k))
    if deterministic:
        if complement_factor is not None:
            raise ValueError("complement_factor only applies to the noise-complement moments")
        return ConditionalMoments(u, m_u, lambda x: f(x) ** 2, breakpoints, f=f, label="gfun-deterministic")

    c = complement_factor
    if c is None:
        c = float(np.prod([factor_second_moment(spec.a[j]) for j in u.bar_idx]))

    def phi_sq(x):
        x = np.asarray(x, dtype=float)
        return c * m_u(x[..., u_idx]) ** 2

    f_full = f if u.is_full else None
    return ConditionalMoments(u, m_u, phi_sq, breakpoints, f=f_full, label=f"gfun-noise(c={c:.6g})")


def gfunction_eta(spec: GFunctionSpec, u: SubsetIndex | Sequence[int]) -> float:
    """Exact ``eta_u = E[m_u^2]`` under the uniform reference."""
    if not isinstance(u, SubsetIndex):
        u = SubsetIndex(tuple(u), spec.k)
    return float(np.prod([factor_second_moment(spec.a[i]) for i in u.idx]))


def gfunction_eta_under(spec: GFunctionSpec, u: SubsetIndex | Sequence[int], marginals: Sequence[Density]) -> float:
    """``eta_u`` when input ``j`` follows the 1D density ``marginals[j]`` on [0, 1].

    ``E[Y | X_u]`` keeps the complement factors at their means, so
    ``eta_u = prod_{i in u} E[g_i^2] * prod_{j not in u} E[g_j]^2``.  Moments use
    adaptive quadrature, which copes with Beta endpoint singularities.
    """
    from scipy.integrate import quad

    if not isinstance(u, SubsetIndex):
        u = SubsetIndex(tuple(u), spec.k)
    out = 1.0
    for j, (a, dens) in enumerate(zip(spec.a, marginals)):
        power = 2 if j in u.idx else 1

        def integrand(t, a=a, dens=dens, power=power):
            return float(gfunction_factor(a, t)) ** power * float(dens.pdf(np.array([[t]]))[0])

        moment = sum(quad(integrand, lo, hi, limit=200)[0] for lo, hi in ((0.0, GFUN_KINK), (GFUN_KINK, 1.0)))
        out *= moment if power == 2 else moment**2
    return out


def gfunction_variance(spec: GFunctionSpec) -> float:
    """``Var(Y)`` under the uniform reference (``E[Y] = 1``)."""
    return float(np.prod([factor_second_moment(a) for a in spec.a])) - 1.0


def gfunction_model(spec: GFunctionSpec, noise_inputs: Sequence[int] = ()) -> Model:
    """The g-function as a :class:`Model`.

    ``noise_inputs`` (1-based) are moved into ``W`` with a uniform law; the
    remaining coordinates form ``X`` in their original order.
    """
    from .densities import uniform_density

    noise = sorted(set(int(j) - 1 for j in noise_inputs))
    ctrl = [j for j in range(spec.k) if j not in noise]
    if not ctrl:
        raise ValueError("at least one g-function input must remain controllable")

    def func(x, w):
        full = np.empty(x.shape[:-1] + (spec.k,))
        full[..., ctrl] = x
        if noise:
            full[..., noise] = w
        return gfunction_eval(spec, full)

    return Model(
        dim_x=len(ctrl),
        dim_w=len(noise),
        func=func,
        noise=uniform_density(Box.unit(len(noise))) if noise else None,
        label=f"gfun(a={','.join(f'{v:g}' for v in spec.a)})",
    )


def synthetic_dataset(model: Model, p: Density, n: int, rng: np.random.Generator) -> Dataset:
    """``n`` i.i.d. rows ``x ~ p``, ``y = model(x, w)``."""
    if n < 2:
        raise ValueError("synthetic_dataset needs n >= 2")
    if p.dim != model.dim_x:
        raise ValueError(f"density has dimension {p.dim} but the model takes {model.dim_x} inputs")
    x = p.sample(rng, n)
    y = model(x, model.draw_noise(rng, n))
    names = tuple(f"x{j + 1}" for j in range(model.dim_x)) + ("y",)
    return Dataset(x, y, p.box, names)
