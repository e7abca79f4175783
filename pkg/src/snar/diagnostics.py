"""Adequacy checking via the self-weighted portmanteau statistic.

Classical residual portmanteau tests do not apply here because the hidden
states make residuals unrecoverable. Instead, the sequence

    eta[t] = (y[t] - p*phi*|y[t-1]|) * 1{|y[t-1]| <= a}

is white noise under a correct specification for any cutoff ``a > 0``
(including a = +inf), so its first M sample autocorrelations, studentized
by a covariance that accounts for estimating (phi, p), are asymptotically
chi-square with M degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import DegenerateError, DomainError, SingularMatrixError
from .model import SnarParams
from .qmle import FitResult, _per_obs_score

_COND_LIMIT = 1e12

TUNING_MODES = ("q90", "q95", "auto")


@dataclass
class DiagnosticReport:
    """Portmanteau test output for one (a, M) choice."""

    a: float
    M: int
    rho_hat: np.ndarray
    cov_rho: np.ndarray
    Q: float
    p_value: float

    @property
    def df(self) -> int:
        return self.M

    def to_dict(self) -> dict:
        return {
            "a": self.a if math.isfinite(self.a) else "inf",
            "M": int(self.M),
            "rho_hat": [float(v) for v in self.rho_hat],
            "Q": float(self.Q),
            "df": int(self.M),
            "p_value": float(self.p_value),
        }


def empirical_quantile(values: np.ndarray, q: float) -> float:
    """The ceil(q*n)-th order statistic (1-indexed), no interpolation."""
    values = np.sort(np.asarray(values, dtype=float))
    n = values.shape[0]
    if n == 0:
        raise DegenerateError("empty sample")
    k = min(max(int(math.ceil(q * n)), 1), n)
    return float(values[k - 1])


def select_tuning(y: np.ndarray, fit: FitResult = None, mode: str = "auto") -> float:
    """Choose the self-weight cutoff ``a``.

    ``"q90"`` and ``"q95"`` return the empirical quantile of |y[1:]|;
    ``"auto"`` returns +inf when ``p_hat * phi_hat**4 < 1`` (fourth moment
    finite, no weighting needed) and the 95% quantile otherwise.
    """
    if mode not in TUNING_MODES:
        raise DomainError(f"unknown tuning mode {mode!r}; expected one of {TUNING_MODES}")
    absy = np.abs(np.asarray(y, dtype=float)[1:])
    if mode == "q90":
        return empirical_quantile(absy, 0.90)
    if mode == "q95":
        return empirical_quantile(absy, 0.95)
    if fit is None:
        raise DomainError("auto tuning mode requires a fit")
    th = fit.theta_hat
    if th.p * th.phi**4 < 1.0:
        return math.inf
    return empirical_quantile(absy, 0.95)


def weighted_residuals(y: np.ndarray, theta_hat: SnarParams, a: float) -> np.ndarray:
    """The self-weighted one-step differences eta[1..n]."""
    if not a > 0.0:
        raise DomainError(f"tuning parameter a must be positive, got {a}")
    y = np.asarray(y, dtype=float)
    al = np.abs(y[:-1])
    eta = y[1:] - theta_hat.p * theta_hat.phi * al
    return np.where(al <= a, eta, 0.0)


def sample_acf(eta_hat: np.ndarray, M: int) -> np.ndarray:
    """Sample autocorrelations of eta at lags 1..M (mean-centered)."""
    eta = np.asarray(eta_hat, dtype=float)
    n = eta.shape[0]
    if M < 1 or M >= n / 4:
        raise DomainError(f"need 1 <= M < n/4, got M={M}, n={n}")
    centered = eta - eta.mean()
    denom = float(centered @ centered)
    if denom == 0.0 or np.ptp(eta) == 0.0:
        raise DegenerateError("weighted residuals have zero variance")
    return np.array([
        float(centered[k:] @ centered[:-k]) / denom for k in range(1, M + 1)
    ])


def rho_covariance(y: np.ndarray, fit: FitResult, a: float, M: int) -> np.ndarray:
    """Asymptotic covariance of sqrt(n) times the lag 1..M autocorrelations.

    Plug-in version of the limit covariance U G U': G stacks the scaled
    products eta[t]*eta[t-k] with the estimation influence -J^-1 * score_t,
    and U maps that through the derivative of the autocorrelations with
    respect to (phi, p).
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0] - 1
    if n <= 10 * M:
        raise DomainError(f"need n > 10*M, got n={n}, M={M}")
    th = fit.theta_hat
    eta = weighted_residuals(y, th, a)
    centered = eta - eta.mean()
    sigma_eta2 = float(centered @ centered) / n
    if sigma_eta2 == 0.0:
        raise DegenerateError("weighted residuals have zero variance")

    al = np.abs(y[:-1])
    w = np.where(al <= a, al, 0.0)  # |y[t-1]| * indicator
    u = np.array([-float(eta[: n - k] @ w[k:]) / n for k in range(1, M + 1)])

    scores = _per_obs_score(th, y)          # (3, n)
    infl = -np.linalg.solve(fit.J_hat, scores)  # (3, n)

    # v_t is defined for t > M; accumulate from there
    rows = [eta[M:] * eta[M - k : n - k] / sigma_eta2 for k in range(1, M + 1)]
    V = np.vstack(rows + [infl[:, M:]])     # (M+3, n-M)
    G = (V @ V.T) / n

    vartheta = np.array([th.p, th.phi, 0.0])
    U = np.hstack([np.eye(M), np.outer(u, vartheta) / sigma_eta2])
    cov = U @ G @ U.T
    cov = 0.5 * (cov + cov.T)
    if np.linalg.cond(cov) > _COND_LIMIT:
        raise SingularMatrixError("autocorrelation covariance is numerically singular")
    return cov


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail probability of the chi-square distribution."""
    if x < 0.0:
        raise DomainError(f"chi-square statistic must be >= 0, got {x}")
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    return float(gammaincc(df / 2.0, x / 2.0))


def q_statistic(y: np.ndarray, fit: FitResult, M: int, mode: str = "auto") -> DiagnosticReport:
    """Portmanteau statistic over lags 1..M with its p-value."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0] - 1
    a = select_tuning(y, fit, mode)
    eta = weighted_residuals(y, fit.theta_hat, a)
    rho = sample_acf(eta, M)
    cov = rho_covariance(y, fit, a, M)
    Q = float(n * rho @ np.linalg.solve(cov, rho))
    Q = max(Q, 0.0)
    return DiagnosticReport(
        a=float(a), M=int(M), rho_hat=rho, cov_rho=cov, Q=Q,
        p_value=chi_square_sf(Q, M),
    )
