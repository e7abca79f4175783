"""Core model: parameters, path simulation, and closed-form moments.

The observed process follows

    y[t] = s[t] * phi * |y[t-1]| + eps[t],

with hidden i.i.d. Bernoulli(p) states ``s[t]`` independent of the i.i.d.
innovations ``eps[t]``. The auxiliary pure-bubble process drops the state:

    z[0] = eps[0],   z[t] = phi * |z[t-1]| + eps[t].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import DomainError
from .innovations import InnovationFamily

DEFAULT_BURN_IN = 500


def validate_params(phi: float, p: float, sigma2: float) -> "SnarParams":
    """Validate and pack the parameter triple (phi, p, sigma2).

    Raises
    ------
    DomainError
        If any input is non-finite, ``p`` is outside [0, 1), or
        ``sigma2`` is not strictly positive.
    """
    return SnarParams(float(phi), float(p), float(sigma2))


@dataclass(frozen=True)
class SnarParams:
    """Parameter triple: AR coefficient, bubble-state probability, variance."""

    phi: float
    p: float
    sigma2: float

    def __post_init__(self) -> None:
        for name in ("phi", "p", "sigma2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise DomainError(f"{name} must be a finite number, got {v!r}")
        if not 0.0 <= self.p < 1.0:
            raise DomainError(f"p must lie in [0, 1), got {self.p}")
        if self.sigma2 <= 0.0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.p, self.sigma2])


@dataclass(frozen=True)
class SimulatedPath:
    """One simulated path: observations, hidden states, and innovations.

    ``y``, ``s`` and ``eps`` have length n+1; index 0 is the initial point,
    so ``s[0]`` and ``eps[0]`` are unused placeholders (0 and NaN).
    """

    y: np.ndarray
    s: np.ndarray
    eps: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.y) - 1


@dataclass(frozen=True)
class AuxBubblePath:
    """A path of the explosive auxiliary process, z[0] = eps[0]."""

    z: np.ndarray
    seed: int


@njit(cache=False)
def _path_recursion(phi, y0, s, eps, burn):  # pragma: no cover - compiled
    total = eps.shape[0]
    n = total - burn
    y = np.empty(n + 1)
    w = y0
    for i in range(burn):
        if s[i]:
            w = phi * abs(w) + eps[i]
        else:
            w = eps[i]
    y[0] = w
    for j in range(n):
        i = burn + j
        if s[i]:
            w = phi * abs(w) + eps[i]
        else:
            w = eps[i]
        y[j + 1] = w
    return y


@njit(cache=False)
def _aux_recursion(phi, eps):  # pragma: no cover - compiled
    z = np.empty(eps.shape[0])
    z[0] = eps[0]
    for t in range(1, eps.shape[0]):
        z[t] = phi * abs(z[t - 1]) + eps[t]
    return z


def _check_scale(params: SnarParams, family: InnovationFamily) -> None:
    if abs(family.variance - params.sigma2) > 1e-9 * max(1.0, params.sigma2):
        raise DomainError(
            f"family variance {family.variance} does not match sigma2 {params.sigma2}"
        )


def simulate(
    params: SnarParams,
    n: int,
    family: InnovationFamily,
    seed: int,
    y0: Optional[float] = None,
    burn_in: Optional[int] = None,
) -> SimulatedPath:
    """Simulate n+1 points of the observed process.

    Parameters
    ----------
    params : SnarParams
        Model parameters; ``family.scale**2`` must equal ``params.sigma2``.
    n : int
        Number of transitions; the returned arrays have length n+1.
    family : InnovationFamily
        Innovation law.
    seed : int
        Seed for the random stream; identical inputs give identical paths.
    y0 : float, optional
        Starting value. When omitted the path starts at 0 and a burn-in
        prefix is discarded to wash out the initialization.
    burn_in : int, optional
        Number of discarded leading steps. Defaults to 500 when ``y0`` is
        omitted and to 0 when it is supplied.

    Notes
    -----
    States are drawn first (one block), innovations second (one block),
    which pins the stream layout for reproducibility.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    _check_scale(params, family)
    if burn_in is None:
        burn_in = DEFAULT_BURN_IN if y0 is None else 0
    if burn_in < 0:
        raise DomainError(f"burn_in must be >= 0, got {burn_in}")
    start = 0.0 if y0 is None else float(y0)

    rng = np.random.default_rng(seed)
    total = burn_in + n
    s = rng.random(total) < params.p
    eps = family.sample(rng, total)
    y = _path_recursion(params.phi, start, s, eps, burn_in)

    s_out = np.zeros(n + 1, dtype=np.int8)
    s_out[1:] = s[burn_in:]
    eps_out = np.empty(n + 1)
    eps_out[0] = np.nan
    eps_out[1:] = eps[burn_in:]
    return SimulatedPath(y=y, s=s_out, eps=eps_out, seed=int(seed))


def simulate_aux(
    params: SnarParams, k: int, family: InnovationFamily, seed: int
) -> AuxBubblePath:
    """Simulate the auxiliary pure-bubble process z[0..k]."""
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    _check_scale(params, family)
    rng = np.random.default_rng(seed)
    eps = family.sample(rng, k + 1)
    return AuxBubblePath(z=_aux_recursion(params.phi, eps), seed=int(seed))


def second_moment(params: SnarParams) -> Optional[float]:
    """E[y^2] = sigma2 / (1 - p*phi^2) when p*phi^2 < 1, else None."""
    a = params.p * params.phi**2
    if a >= 1.0:
        return None
    return params.sigma2 / (1.0 - a)


def kurtosis(params: SnarParams, innovation_kurtosis: float) -> Optional[float]:
    """Kurtosis of the observed process for symmetric innovations.

    Valid when the innovation third moment vanishes (true for all built-in
    families). Returns None when ``p*phi^4 >= 1`` (fourth moment infinite).
    """
    a2 = params.p * params.phi**2
    a4 = params.p * params.phi**4
    if a4 >= 1.0:
        return None
    return (6.0 * a2 + innovation_kurtosis * (1.0 - a2)) * (1.0 - a2) / (1.0 - a4)
