"""Innovation distributions: zero-mean, unit-variance families with a scale.

Three families are supported, each standardized to unit variance before
scaling, so ``Var(eps) == scale**2``:

* ``normal``      standard Gaussian,
* ``laplace``     double exponential with density exp(-sqrt(2)|x|)/sqrt(2),
* ``student_t5``  Student's t with 5 degrees of freedom times sqrt(3/5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import t as _student_t

from .errors import DomainError

KINDS = ("normal", "laplace", "student_t5")

_SQRT2 = math.sqrt(2.0)
_T5_SCALE = math.sqrt(3.0 / 5.0)  # standardizes t(5) to unit variance
_T5_DIST = _student_t(df=5)
# excess-free kurtosis of each unit-variance family
_KURTOSIS = {"normal": 3.0, "laplace": 6.0, "student_t5": 9.0}


@dataclass(frozen=True)
class InnovationFamily:
    """A scaled innovation law for the autoregression.

    Parameters
    ----------
    kind : str
        One of ``"normal"``, ``"laplace"``, ``"student_t5"``.
    scale : float
        Standard deviation of the innovation; must be positive.
    """

    kind: str
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown innovation kind {self.kind!r}; expected one of {KINDS}")
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise DomainError(f"scale must be a positive finite number, got {self.scale!r}")

    @classmethod
    def with_variance(cls, kind: str, sigma2: float) -> "InnovationFamily":
        """Build a family whose variance equals ``sigma2``."""
        if not (np.isfinite(sigma2) and sigma2 > 0.0):
            raise DomainError(f"sigma2 must be positive and finite, got {sigma2!r}")
        return cls(kind, math.sqrt(sigma2))

    @property
    def variance(self) -> float:
        return self.scale * self.scale

    @property
    def kurtosis(self) -> float:
        """Kurtosis of the family (scale free): 3, 6, or 9."""
        return _KURTOSIS[self.kind]

    def density(self, x):
        """Probability density at ``x`` (scalar or array)."""
        z = np.asarray(x, dtype=float) / self.scale
        if self.kind == "normal":
            out = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        elif self.kind == "laplace":
            out = np.exp(-_SQRT2 * np.abs(z)) / _SQRT2
        else:
            out = 8.0 / (3.0 * math.pi * math.sqrt(3.0)) * (1.0 + z * z / 3.0) ** -3.0
        out = out / self.scale
        return float(out) if np.isscalar(x) else out

    def cdf(self, x):
        """Cumulative distribution function at ``x``."""
        z = np.asarray(x, dtype=float) / self.scale
        if self.kind == "normal":
            out = ndtr(z)
        elif self.kind == "laplace":
            out = np.where(z < 0.0, 0.5 * np.exp(_SQRT2 * z), 1.0 - 0.5 * np.exp(-_SQRT2 * z))
        else:
            out = _T5_DIST.cdf(z / _T5_SCALE)
        return float(out) if np.isscalar(x) else out

    def quantile(self, u):
        """Inverse CDF at ``u`` in the open interval (0, 1)."""
        uu = np.asarray(u, dtype=float)
        if np.any(uu <= 0.0) or np.any(uu >= 1.0):
            raise DomainError("quantile argument must lie strictly inside (0, 1)")
        if self.kind == "normal":
            out = ndtri(uu)
        elif self.kind == "laplace":
            out = np.where(uu < 0.5, np.log(2.0 * uu) / _SQRT2, -np.log(2.0 - 2.0 * uu) / _SQRT2)
        else:
            out = _T5_DIST.ppf(uu) * _T5_SCALE
        out = out * self.scale
        return float(out) if np.isscalar(u) else out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. variates from the family.

        Normal and Student draws use the generator's native methods;
        Laplace draws go through the inverse CDF. All are deterministic
        given the generator state.
        """
        if self.kind == "normal":
            out = rng.standard_normal(size)
        elif self.kind == "laplace":
            u = rng.random(size)
            # rng.random() can return exactly 0.0; keep log() finite
            np.clip(u, np.finfo(float).tiny, None, out=u)
            out = np.where(u < 0.5, np.log(2.0 * u) / _SQRT2, -np.log(2.0 - 2.0 * u) / _SQRT2)
        else:
            out = rng.standard_t(5, size) * _T5_SCALE
        return out * self.scale
