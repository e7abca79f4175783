"""Gaussian-style quasi-likelihood estimation with sandwich inference.

The criterion, for observations y[0..n] and theta = (phi, p, sigma2), is

    L(theta) = sum_{t=1..n} { log q_t + (y[t] - p*phi*|y[t-1]|)^2 / q_t },
    q_t      = p*(1-p)*phi^2*y[t-1]^2 + sigma2,

i.e. the conditional mean p*phi*|y[t-1]| and conditional variance q_t of
the model plugged into a normal likelihood. First and second derivatives
are closed-form; see :func:`score` and :func:`hessian`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, ndtri

from .errors import BoundaryWarning, DomainError, OptimizationError, SingularMatrixError
from .model import SnarParams

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ParamSpace:
    """Box constraints for the optimizer; phi excludes zero."""

    phi_bounds: tuple = (0.05, 3.0)
    p_bounds: tuple = (0.01, 0.999)
    sigma2_bounds: tuple = (1e-6, 1e6)

    def __post_init__(self) -> None:
        for name, (lo, hi) in (
            ("phi_bounds", self.phi_bounds),
            ("p_bounds", self.p_bounds),
            ("sigma2_bounds", self.sigma2_bounds),
        ):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise DomainError(f"{name} must be a finite interval with lo < hi")
        if self.phi_bounds[0] <= 0.0 < self.phi_bounds[1] or self.phi_bounds[1] <= 0.0 < self.phi_bounds[0]:
            if self.phi_bounds[0] <= 0.0 <= self.phi_bounds[1]:
                raise DomainError("phi_bounds must not contain zero")
        if not (0.0 < self.p_bounds[0] and self.p_bounds[1] < 1.0):
            raise DomainError("p_bounds must be inside (0, 1)")
        if self.sigma2_bounds[0] <= 0.0:
            raise DomainError("sigma2_bounds must be inside (0, inf)")

    def mirrored(self) -> "ParamSpace":
        """The same box with the phi interval reflected to negative values."""
        lo, hi = self.phi_bounds
        return ParamSpace((-hi, -lo), self.p_bounds, self.sigma2_bounds)

    def contains(self, theta: SnarParams, tol: float = 0.0) -> bool:
        for v, (lo, hi) in zip(
            (theta.phi, theta.p, theta.sigma2),
            (self.phi_bounds, self.p_bounds, self.sigma2_bounds),
        ):
            if v < lo - tol or v > hi + tol:
                return False
        return True

    def boundary_flags(self, theta: SnarParams, rtol: float = 1e-6) -> list:
        flags = []
        for name, v, (lo, hi) in zip(
            ("phi", "p", "sigma2"),
            (theta.phi, theta.p, theta.sigma2),
            (self.phi_bounds, self.p_bounds, self.sigma2_bounds),
        ):
            span = hi - lo
            if abs(v - lo) <= rtol * span:
                flags.append(f"{name} at lower bound {lo}")
            elif abs(v - hi) <= rtol * span:
                flags.append(f"{name} at upper bound {hi}")
        return flags


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for :func:`fit`."""

    n_starts: int = 5
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    max_iter: int = 500
    search_negative_phi: bool = False


@dataclass
class FitResult:
    """QMLE output: estimate, convergence info, and sandwich covariance."""

    theta_hat: SnarParams
    neg_loglik: float
    converged: bool
    iterations: int
    cov: np.ndarray
    se: np.ndarray
    I_hat: np.ndarray
    J_hat: np.ndarray
    n: int
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """JSON-ready representation of the fit."""
        return {
            "theta_hat": {
                "phi": self.theta_hat.phi,
                "p": self.theta_hat.p,
                "sigma2": self.theta_hat.sigma2,
            },
            "se": [float(v) for v in self.se],
            "cov": [[float(v) for v in row] for row in self.cov],
            "neg_loglik": float(self.neg_loglik),
            "converged": bool(self.converged),
            "n": int(self.n),
            "warnings": list(self.warnings),
        }


def _prepare(theta: SnarParams, y: np.ndarray):
    """Common per-step pieces: lag squares, variances q_t, residuals."""
    if not 0.0 < theta.p < 1.0:
        raise DomainError(f"p must lie strictly inside (0, 1), got {theta.p}")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 2:
        raise DomainError("y must be a 1-d sequence with at least 2 points")
    yl = y[:-1]
    yt = y[1:]
    al = np.abs(yl)
    a2 = yl * yl
    q = theta.p * (1.0 - theta.p) * theta.phi**2 * a2 + theta.sigma2
    if np.any(q <= 0.0):
        raise DomainError("conditional variance q_t is not positive")
    e = yt - theta.p * theta.phi * al
    return yt, al, a2, q, e


def neg_quasi_loglik(theta: SnarParams, y: np.ndarray) -> float:
    """The quasi-likelihood criterion (lower is better)."""
    _, _, _, q, e = _prepare(theta, y)
    return float(np.sum(np.log(q) + e * e / q))


def _per_obs_score(theta: SnarParams, y: np.ndarray) -> np.ndarray:
    """Per-observation derivative vectors, shape (3, n)."""
    _, al, a2, q, e = _prepare(theta, y)
    phi, p = theta.phi, theta.p
    # dq/dtheta = (2p(1-p)phi*a2, (1-2p)phi^2*a2, 1)
    dq = np.empty((3, a2.shape[0]))
    dq[0] = 2.0 * p * (1.0 - p) * phi * a2
    dq[1] = (1.0 - 2.0 * p) * phi**2 * a2
    dq[2] = 1.0
    vartheta = np.array([p, phi, 0.0])
    c_mean = 2.0 * al * e / q
    c_var = 1.0 / q - (e * e) / (q * q)
    return dq * c_var - vartheta[:, None] * c_mean


def score(theta: SnarParams, y: np.ndarray) -> np.ndarray:
    """Gradient of the criterion in (phi, p, sigma2) order."""
    return _per_obs_score(theta, y).sum(axis=1)


def hessian(theta: SnarParams, y: np.ndarray) -> np.ndarray:
    """Closed-form Hessian of the criterion (3x3, symmetric)."""
    _, al, a2, q, e = _prepare(theta, y)
    phi, p = theta.phi, theta.p
    dq = np.empty((3, a2.shape[0]))
    dq[0] = 2.0 * p * (1.0 - p) * phi * a2
    dq[1] = (1.0 - 2.0 * p) * phi**2 * a2
    dq[2] = 1.0
    vartheta = np.array([p, phi, 0.0])
    e2 = e * e
    q2 = q * q

    c1 = 1.0 / q - e2 / q2             # multiplies d2q
    c2 = 2.0 * e2 / (q2 * q) - 1.0 / q2  # multiplies dq dq'
    c3 = 2.0 * al * e / q2             # multiplies dq vt' + vt dq'
    c4 = 2.0 * a2 / q                  # multiplies vt vt'
    c5 = 2.0 * al * e / q              # multiplies the (phi,p) swap matrix

    # d2q = a2 * K with constant K; only the upper-left 2x2 block is nonzero
    K = np.array([
        [2.0 * p * (1.0 - p), 2.0 * (1.0 - 2.0 * p) * phi, 0.0],
        [2.0 * (1.0 - 2.0 * p) * phi, -2.0 * phi**2, 0.0],
        [0.0, 0.0, 0.0],
    ])
    E12 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])

    H = K * float(c1 @ a2)
    H += np.einsum("it,t,jt->ij", dq, c2, dq)
    u = dq @ c3
    H += np.outer(u, vartheta) + np.outer(vartheta, u)
    H += np.outer(vartheta, vartheta) * float(np.sum(c4))
    H -= E12 * float(np.sum(c5))
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class SandwichEstimate:
    I_hat: np.ndarray
    J_hat: np.ndarray
    cov: np.ndarray


def sandwich_cov(
    theta_hat: SnarParams,
    y: np.ndarray,
    space: Optional[ParamSpace] = None,
) -> SandwichEstimate:
    """Sandwich covariance J^-1 I J^-1 / n at the estimate.

    ``I_hat`` averages outer products of per-observation scores and
    ``J_hat`` averages per-observation Hessians, both at ``theta_hat``.

    Raises
    ------
    SingularMatrixError
        If ``J_hat`` has condition number above 1e12.
    """
    space = space or ParamSpace()
    if space.boundary_flags(theta_hat):
        warnings.warn(
            "theta_hat lies on a parameter-space bound; sandwich inference "
            "assumes an interior optimum",
            BoundaryWarning,
            stacklevel=2,
        )
    G = _per_obs_score(theta_hat, y)
    n = G.shape[1]
    I_hat = (G @ G.T) / n
    J_hat = hessian(theta_hat, y) / n
    if np.linalg.cond(J_hat) > _COND_LIMIT:
        raise SingularMatrixError("average Hessian is numerically singular")
    Jinv_I = np.linalg.solve(J_hat, I_hat)
    cov = np.linalg.solve(J_hat, Jinv_I.T).T / n
    cov = 0.5 * (cov + cov.T)
    return SandwichEstimate(I_hat=I_hat, J_hat=J_hat, cov=cov)


def _moment_starts(y: np.ndarray, space: ParamSpace, n_starts: int) -> list:
    """Deterministic starting points: a moment-style seed plus perturbations."""
    yl, yt = y[:-1], y[1:]
    al = np.abs(yl)
    n = yt.shape[0]
    plo, pub = space.p_bounds
    flo, fhi = space.phi_bounds
    slo, shi = space.sigma2_bounds

    def clip(v, lo, hi):
        span = hi - lo
        return min(max(v, lo + 1e-3 * span), hi - 1e-3 * span)

    frac_pos = float(np.mean(yt > 0.0))
    p0 = clip(2.0 * frac_pos - 1.0, max(plo, 0.05), min(pub, 0.99))
    denom = float(al @ al)
    slope = float(yt @ al) / denom if denom > 0.0 else 0.0
    if (flo > 0 and slope <= 0) or (fhi < 0 and slope >= 0):
        slope = 0.5 * (flo + fhi) * p0
    f0 = clip(slope / p0, flo, fhi)
    resid = yt - slope * al
    s0 = clip(float(resid @ resid) / max(n - 1, 1), slo, shi)

    cands = [
        (f0, p0, s0),
        (f0 * 1.25, p0 * 1.05, s0 * 0.5),
        (f0 * 0.8, 0.5 * (p0 + 1.0), s0 * 1.5),
        (f0, 0.5, s0),
        (0.5 * (flo + fhi), p0, float(np.var(yt))),
    ]
    return [
        (clip(f, flo, fhi), clip(p, plo, pub), clip(s, slo, shi))
        for f, p, s in cands[: max(n_starts, 1)]
    ]


def _to_u(theta, space):
    plo, phi_ub = space.p_bounds
    w = (theta[1] - plo) / (phi_ub - plo)
    w = min(max(w, 1e-12), 1.0 - 1e-12)
    return np.array([theta[0], math.log(w / (1.0 - w)), math.log(theta[2])])


def _from_u(u, space):
    plo, phi_ub = space.p_bounds
    p = plo + (phi_ub - plo) * expit(u[1])
    return np.array([u[0], p, math.exp(u[2])])


def _chain(u, space):
    """d(theta)/d(u) for the elementwise transform."""
    plo, phi_ub = space.p_bounds
    s = expit(u[1])
    return np.array([1.0, (phi_ub - plo) * s * (1.0 - s), math.exp(u[2])])


def _projected_grad_norm(g: np.ndarray, theta: np.ndarray, space: ParamSpace) -> float:
    """Gradient norm with components pointing out of the box zeroed."""
    bounds = (space.phi_bounds, space.p_bounds, space.sigma2_bounds)
    out = 0.0
    for gi, v, (lo, hi) in zip(g, theta, bounds):
        span = hi - lo
        if abs(v - lo) <= 1e-10 * span and gi > 0:
            continue
        if abs(v - hi) <= 1e-10 * span and gi < 0:
            continue
        out += gi * gi
    return math.sqrt(out)


def _newton_polish(theta: np.ndarray, y: np.ndarray, space: ParamSpace, cfg: FitConfig):
    """A few damped Newton steps with box clipping to sharpen the optimum."""
    bounds = np.array([space.phi_bounds, space.p_bounds, space.sigma2_bounds])
    cur = SnarParams(*theta)
    f = neg_quasi_loglik(cur, y)
    steps = 0
    for _ in range(25):
        g = score(cur, y)
        if _projected_grad_norm(g, cur.as_array(), space) <= 0.1 * cfg.grad_tol * (1.0 + abs(f)):
            break
        H = hessian(cur, y)
        try:
            evals = np.linalg.eigvalsh(H)
            if evals[0] <= 0:
                H = H + (abs(evals[0]) + 1e-8 * max(1.0, evals[-1])) * np.eye(3)
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        improved = False
        for _ in range(30):
            trial = np.clip(cur.as_array() - scale * step, bounds[:, 0], bounds[:, 1])
            try:
                f_trial = neg_quasi_loglik(SnarParams(*trial), y)
            except DomainError:
                f_trial = np.inf
            if f_trial <= f:
                moved = float(np.max(np.abs(trial - cur.as_array())))
                cur = SnarParams(*trial)
                f = f_trial
                steps += 1
                improved = True
                if moved < cfg.step_tol:
                    return cur, f, steps
                break
            scale *= 0.5
        if not improved:
            break
    return cur, f, steps


def fit(
    y: np.ndarray,
    space: Optional[ParamSpace] = None,
    config: Optional[FitConfig] = None,
) -> FitResult:
    """Minimize the quasi-likelihood criterion over the box.

    Runs a small multi-start: box-constrained quasi-Newton (L-BFGS-B with
    the analytic gradient, p and sigma2 transformed to keep iterates
    interior) followed by damped Newton steps using the analytic Hessian.
    A Nelder-Mead pass backs up starts where the gradient method stalls.

    Raises
    ------
    OptimizationError
        If no start meets the convergence criteria.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 11:
        raise DomainError("fit requires a 1-d series with at least 11 points (n >= 10)")
    if not np.all(np.isfinite(y)):
        raise DomainError("series contains non-finite values")
    space = space or ParamSpace()
    config = config or FitConfig()

    spaces = [space]
    if config.search_negative_phi:
        spaces.append(space.mirrored())

    best = None
    for sp in spaces:
        flo, fhi = sp.phi_bounds
        slo, shi = sp.sigma2_bounds
        u_bounds = [(flo, fhi), (None, None), (math.log(slo), math.log(shi))]

        def f_and_g(u, sp=sp):
            th = _from_u(u, sp)
            try:
                par = SnarParams(*th)
                val = neg_quasi_loglik(par, y)
                g = score(par, y) * _chain(u, sp)
            except (DomainError, FloatingPointError, OverflowError):
                return np.inf, np.zeros(3)
            if not np.isfinite(val):
                return np.inf, np.zeros(3)
            return val, g

        for start in _moment_starts(y, sp, config.n_starts):
            u0 = _to_u(np.array(start), sp)
            attempts = [
                minimize(
                    f_and_g,
                    u0,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=u_bounds,
                    options={"maxiter": config.max_iter, "ftol": 1e-14, "gtol": 1e-12},
                )
            ]
            if not np.isfinite(attempts[0].fun):
                attempts.append(
                    minimize(
                        lambda u, sp=sp: f_and_g(u, sp)[0],
                        u0,
                        method="Nelder-Mead",
                        bounds=u_bounds,
                        options={"maxiter": 2000, "xatol": 1e-12, "fatol": 1e-14},
                    )
                )
            for res in attempts:
                if not np.isfinite(res.fun):
                    continue
                theta_pol, f_pol, polish_steps = _newton_polish(_from_u(res.x, sp), y, sp, config)
                g = score(theta_pol, y)
                pg = _projected_grad_norm(g, theta_pol.as_array(), sp)
                ok = pg < config.grad_tol * (1.0 + abs(f_pol))
                iters = int(getattr(res, "nit", 0)) + polish_steps
                # prefer converged candidates, then lower criterion value
                if best is None or (ok, -f_pol) > (best[0], -best[1]):
                    best = (ok, f_pol, theta_pol, iters, sp)

    if best is None or not best[0]:
        raise OptimizationError("no optimizer start converged")
    _, f_best, theta_best, iters, sp_best = best

    warn_list = sp_best.boundary_flags(theta_best)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        sand = sandwich_cov(theta_best, y, sp_best)
    se = np.sqrt(np.maximum(np.diag(sand.cov), 0.0))
    return FitResult(
        theta_hat=theta_best,
        neg_loglik=float(f_best),
        converged=True,
        iterations=iters,
        cov=sand.cov,
        se=se,
        I_hat=sand.I_hat,
        J_hat=sand.J_hat,
        n=y.shape[0] - 1,
        warnings=warn_list,
    )


def ci_p_delta(p_hat: float, lambda_p: float, n: int, alpha: float) -> tuple:
    """Confidence interval for p via the log-odds transform.

    ``lambda_p`` is the asymptotic standard deviation of sqrt(n)*(p_hat - p),
    i.e. sqrt(n * cov_pp). The interval always lies inside (0, 1).
    """
    if not 0.0 < p_hat < 1.0:
        raise DomainError(f"p_hat must lie in (0, 1), got {p_hat}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if lambda_p < 0.0 or n < 1:
        raise DomainError("lambda_p must be >= 0 and n >= 1")
    g = math.log((1.0 - p_hat) / p_hat)
    z = float(ndtri(1.0 - alpha / 2.0))
    half = lambda_p * z / (math.sqrt(n) * p_hat * (1.0 - p_hat))
    lo = 1.0 / (1.0 + math.exp(g + half))
    hi = 1.0 / (1.0 + math.exp(g - half))
    return (lo, hi)
