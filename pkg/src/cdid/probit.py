"""Maximum-likelihood probit for propensity scores.

The solver is Newton-Raphson on the exact Hessian, switching to Fisher
scoring (expected information) whenever the observed information is not
positive definite. Every step is halved until the log-likelihood does not
decrease.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

from ._linalg import independent_columns
from .errors import DegenerateOutcomeError, RankWarning, SeparationError, ValidationError

SCORE_EPS = 1e-12
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass
class PropensityModel:
    coefficients: np.ndarray  # intercept first; zero for dropped columns
    converged: bool
    iterations: int
    final_gradient_norm: float
    log_likelihood: float
    dropped: tuple[int, ...] = ()  # design-column indices removed as collinear
    ll_history: list[float] = field(default_factory=list)
    covariance: np.ndarray | None = None
    n_obs: int = 0

    @property
    def standard_errors(self) -> np.ndarray:
        if self.covariance is None:
            return np.full_like(self.coefficients, np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.coefficients) - 1:
            raise ValidationError(
                f"row has {X.shape[1]} covariates, model expects {len(self.coefficients) - 1}"
            )
        return self.coefficients[0] + X @ self.coefficients[1:]


def _log_pdf(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


def probit_loglik(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Log-likelihood with X already containing the intercept column."""
    z = X @ beta
    return float(np.sum(np.where(y == 1, log_ndtr(z), log_ndtr(-z))))


def probit_score(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`probit_loglik`."""
    return X.T @ _generalized_residual(X @ beta, y)


def _generalized_residual(z, y):
    q = 2.0 * y - 1.0
    return q * np.exp(_log_pdf(z) - log_ndtr(q * z))


def _observed_weights(z, y):
    lam = _generalized_residual(z, y)
    return lam * (lam + z)


def _expected_weights(z):
    logphi = _log_pdf(z)
    return np.exp(2 * logphi - log_ndtr(z) - log_ndtr(-z))


def fit_probit(
    design,
    labels,
    tol: float = 1e-8,
    max_iter: int = 100,
    separation_bound: float = 50.0,
    max_halvings: int = 40,
) -> PropensityModel:
    """Fit P(label = 1 | x) = Phi(b0 + x b).

    ``design`` excludes the intercept, which is always added. Iteration stops
    once both the Euclidean norm of the mean score vector and the largest
    Newton step component are at most ``tol``. Collinear trailing columns
    are dropped with a :class:`RankWarning` and receive coefficient 0.
    """
    X0 = np.asarray(design, dtype=float)
    if X0.ndim == 1:
        X0 = X0[:, None]
    y = np.asarray(labels, dtype=float)
    n = len(y)
    if X0.shape[0] != n:
        raise ValidationError(f"design has {X0.shape[0]} rows but {n} labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("labels must be 0/1")
    if y.min() == y.max():
        raise DegenerateOutcomeError("labels contain a single class")

    full = np.column_stack([np.ones(n), X0])
    keep = independent_columns(full)
    if keep.size == 0 or keep[0] != 0:
        keep = np.concatenate([[0], keep[keep != 0]])
    dropped = tuple(int(j) - 1 for j in range(1, full.shape[1]) if j not in set(keep.tolist()))
    if dropped:
        warnings.warn(f"dropping collinear design columns {list(dropped)}", RankWarning, stacklevel=2)
    X = full[:, keep]

    beta = np.zeros(X.shape[1])
    ll = probit_loglik(beta, X, y)
    history = [ll]
    converged = False
    it = 0
    gnorm = np.inf
    for it in range(max_iter + 1):
        z = X @ beta
        g = X.T @ _generalized_residual(z, y)
        gnorm = float(np.linalg.norm(g) / n)
        step = _newton_direction(X, z, y, g)
        # a small mean score alone can leave sizeable coefficient error where the
        # likelihood is flat, so the Newton step has to be negligible as well
        if gnorm <= tol and np.max(np.abs(step)) <= tol:
            converged = True
            break
        if it == max_iter:
            break
        t = 1.0
        for _ in range(max_halvings):
            cand = beta + t * step
            ll_new = probit_loglik(cand, X, y)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            converged = gnorm <= tol  # no ascent possible at machine precision
            break
        beta, ll = cand, ll_new
        history.append(ll)
        if np.linalg.norm(beta) > separation_bound:
            raise SeparationError(
                f"coefficient norm {np.linalg.norm(beta):.3g} exceeds {separation_bound}; "
                "labels are (quasi-)perfectly separated"
            )

    coef = np.zeros(full.shape[1])
    coef[keep] = beta
    cov = None
    try:
        info = (X * _expected_weights(X @ beta)[:, None]).T @ X
        cov_k = np.linalg.inv(info)
        cov = np.full((full.shape[1], full.shape[1]), np.nan)
        cov[np.ix_(keep, keep)] = cov_k
    except np.linalg.LinAlgError:
        pass
    return PropensityModel(
        coefficients=coef,
        converged=converged,
        iterations=it,
        final_gradient_norm=gnorm,
        log_likelihood=ll,
        dropped=dropped,
        ll_history=history,
        covariance=cov,
        n_obs=n,
    )


def _newton_direction(X, z, y, g):
    H = (X * _observed_weights(z, y)[:, None]).T @ X
    try:
        L = np.linalg.cholesky(H)
        return np.linalg.solve(L.T, np.linalg.solve(L, g))
    except np.linalg.LinAlgError:
        pass
    info = (X * _expected_weights(z)[:, None]).T @ X
    try:
        return np.linalg.solve(info, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(info, g, rcond=None)[0]


def predict_score(model: PropensityModel, x) -> np.ndarray | float:
    """Phi(x b), clipped to [1e-12, 1 - 1e-12]. Accepts a row or a matrix."""
    arr = np.asarray(x, dtype=float)
    p = np.clip(ndtr(model.linear_predictor(arr)), SCORE_EPS, 1 - SCORE_EPS)
    return float(p[0]) if arr.ndim <= 1 else p


def marginal_effects(model: PropensityModel, design, binary=None) -> np.ndarray:
    """Average marginal effect of each covariate on the score.

    Continuous columns use mean(phi(x b)) * b_k; columns flagged in ``binary``
    use the mean discrete contrast Phi(x b | x_k = 1) - Phi(x b | x_k = 0).
    """
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    k = len(model.coefficients) - 1
    if X.shape[1] != k:
        raise ValidationError(f"design has {X.shape[1]} columns, model expects {k}")
    if binary is None:
        binary = np.zeros(k, dtype=bool)
    binary = np.asarray(binary, dtype=bool)
    b = model.coefficients[1:]
    z = model.linear_predictor(X) if k else np.empty(0)
    out = np.empty(k)
    for j in range(k):
        if binary[j]:
            base = z - X[:, j] * b[j]
            out[j] = np.mean(ndtr(base + b[j]) - ndtr(base))
        else:
            out[j] = np.mean(np.exp(_log_pdf(z))) * b[j]
    return out
