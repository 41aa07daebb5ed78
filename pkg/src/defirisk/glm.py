"""Regression engine.

Logistic regression by iteratively reweighted least squares with an
elastic-net fallback for separated or rank-deficient problems, Gaussian
linear models on logit-transformed ratios, the Hosmer-Lemeshow calibration
test, and quantile residuals.

Logistic coefficients live on the standardized-covariate scale when
standardization is enabled (the default); the per-covariate (mean, sd)
pairs recorded in the fit make prediction from raw covariates exact either
way.  Standardization uses the sample standard deviation (ddof=1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .errors import (
    DegenerateResponseError,
    DomainError,
    InsufficientDataError,
    NotApplicableError,
    RankError,
)

# Linear predictors are clipped here before the inverse link, which keeps
# probabilities strictly inside (0, 1) in double precision.
_ETA_CLIP = 36.0

# Separation triggers: max |coefficient| on the standardized scale, and the
# condition number of the observed information.
_BLOWUP_LIMIT = 15.0
_COND_LIMIT = 1e10


def invlogit(eta):
    """Numerically stable inverse logit, strictly inside (0, 1)."""
    eta = np.clip(eta, -_ETA_CLIP, _ETA_CLIP)
    out = np.where(eta >= 0, 1.0 / (1.0 + np.exp(-eta)), np.exp(eta) / (1.0 + np.exp(eta)))
    if np.ndim(eta) == 0:
        return float(out)
    return out


def logit(p):
    """Log-odds of p in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("logit requires values strictly inside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PenaltySpec:
    """Elastic-net penalty: lam * (alpha_mix * L1 + (1 - alpha_mix)/2 * L2).

    Applied to the mean negative log-likelihood; the intercept is never
    penalized.
    """

    lam: float = 1e-3
    alpha_mix: float = 0.5

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError(f"penalty lam must be nonnegative, got {self.lam}")
        if not (0.0 <= self.alpha_mix <= 1.0):
            raise DomainError(f"alpha_mix must lie in [0, 1], got {self.alpha_mix}")


@dataclass(frozen=True)
class LogisticFit:
    """Fitted logistic regression (intercept first).

    ``standard_errors`` is all-NaN on the penalized path, where classical
    errors are invalid.  ``covariate_means``/``covariate_sds`` hold the
    standardization applied to the non-intercept columns (zeros/ones when
    standardization was disabled).
    """

    coefficients: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    penalty: PenaltySpec | None
    covariate_means: np.ndarray
    covariate_sds: np.ndarray
    covariance: np.ndarray | None = None
    nll_trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if len(self.coefficients) != len(self.standard_errors):
            raise DomainError("coefficients and standard_errors must have equal length")
        if np.any(np.asarray(self.covariate_sds) <= 0.0):
            raise DomainError("stored standardization sds must be positive")

    @property
    def n_coefficients(self) -> int:
        return len(self.coefficients)


def _standardized_design(design, means, sds):
    x = np.array(design, dtype=float, copy=True)
    x[:, 1:] = (x[:, 1:] - means) / sds
    return x


def _nll(x, y, beta):
    eta = np.clip(x @ beta, -_ETA_CLIP, _ETA_CLIP)
    # log(1 + e^eta) - y*eta, written stably
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def _check_design(design, response):
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2:
        raise DomainError("design must be a 2-D matrix")
    n, p = x.shape
    if len(y) != n:
        raise DomainError(f"design has {n} rows but response has {len(y)}")
    if not np.all(x[:, 0] == 1.0):
        raise DomainError("design must carry an intercept column of ones first")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DomainError("response must be binary 0/1")
    if n < p + 1:
        raise InsufficientDataError(f"need at least {p + 1} rows for {p} coefficients, got {n}")
    if np.all(y == 0.0) or np.all(y == 1.0):
        raise DegenerateResponseError("response is constant; logistic fit is undefined")
    return x, y


def _equivalent_standardized_coefs(beta, col_means, col_sds):
    # Blow-up detection must not depend on the covariate scale: rescale the
    # slopes by each column's sd and move the means into the intercept.
    out = np.empty_like(beta)
    out[0] = beta[0] + beta[1:] @ col_means
    out[1:] = beta[1:] * col_sds
    return out


def _fit_elastic_net(x, y, penalty: PenaltySpec, tol: float = 1e-8, max_iter: int = 20000):
    """FISTA proximal-gradient solver for the elastic-net logistic objective."""
    n, p = x.shape
    lam1 = penalty.lam * penalty.alpha_mix
    lam2 = penalty.lam * (1.0 - penalty.alpha_mix)

    def smooth_grad(beta):
        mu = invlogit(x @ beta)
        g = x.T @ (mu - y) / n
        g[1:] += lam2 * beta[1:]
        return g

    def smooth_val(beta):
        return _nll(x, y, beta) / n + 0.5 * lam2 * float(beta[1:] @ beta[1:])

    def prox(beta, step):
        out = beta.copy()
        out[1:] = np.sign(beta[1:]) * np.maximum(np.abs(beta[1:]) - step * lam1, 0.0)
        return out

    # Lipschitz bound for the smooth part: ||X||_2^2 / (4n) + lam2.
    lips = float(np.linalg.norm(x, 2)) ** 2 / (4.0 * n) + lam2
    step = 1.0 / max(lips, 1e-12)

    beta = np.zeros(p)
    z = beta.copy()
    t_acc = 1.0
    f_prev = smooth_val(beta)
    converged = False
    for _ in range(max_iter):
        g = smooth_grad(z)
        beta_new = prox(z - step * g, step)
        # FISTA momentum with restart on objective increase
        f_new = smooth_val(beta_new)
        if f_new + lam1 * np.sum(np.abs(beta_new[1:])) > f_prev + lam1 * np.sum(np.abs(beta[1:])):
            z = beta.copy()
            t_acc = 1.0
            g = smooth_grad(z)
            beta_new = prox(z - step * g, step)
            f_new = smooth_val(beta_new)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        z = beta_new + ((t_acc - 1.0) / t_next) * (beta_new - beta)
        mapping = np.max(np.abs(beta_new - prox(beta_new - step * smooth_grad(beta_new), step))) / step
        beta, f_prev, t_acc = beta_new, f_new, t_next
        if mapping <= tol:
            converged = True
            break
    return beta, converged


def fit_logistic(
    design,
    response,
    *,
    max_iter: int = 100,
    tol: float = 1e-8,
    standardize: bool = True,
    fallback_penalty: PenaltySpec | None = None,
    force_penalty: bool = False,
) -> LogisticFit:
    """Maximum-likelihood logistic regression with a penalized fallback.

    IRLS runs until the infinity norm of the mean-log-likelihood gradient
    drops below ``tol``; on divergence, coefficient blow-up, a singular or
    ill-conditioned information matrix, or detected separation, the fit is
    redone with the elastic-net penalty and flagged.  ``design`` carries
    the intercept column; non-intercept columns are standardized
    internally unless ``standardize=False``.
    """
    x_raw, y = _check_design(design, response)
    n, p = x_raw.shape
    penalty = fallback_penalty or PenaltySpec()

    raw_means = x_raw[:, 1:].mean(axis=0) if p > 1 else np.empty(0)
    raw_sds = x_raw[:, 1:].std(axis=0, ddof=1) if p > 1 else np.empty(0)
    if standardize:
        means = raw_means.copy()
        # A constant column cannot be scaled; keep it centred and let the
        # rank-deficiency fallback deal with it.
        sds = np.where(raw_sds > 0.0, raw_sds, 1.0)
    else:
        means = np.zeros(p - 1)
        sds = np.ones(p - 1)
    x = _standardized_design(x_raw, means, sds)
    col_means = x[:, 1:].mean(axis=0) if p > 1 else np.empty(0)
    col_sds = x[:, 1:].std(axis=0, ddof=1) if p > 1 else np.empty(0)

    needs_penalty = force_penalty
    beta = np.zeros(p)
    trace: list[float] = []
    converged = False

    if not needs_penalty:
        nll = _nll(x, y, beta)
        trace.append(nll)
        for _ in range(max_iter):
            eta = np.clip(x @ beta, -_ETA_CLIP, _ETA_CLIP)
            mu = invlogit(eta)
            grad = x.T @ (y - mu)
            # Scale-free criterion: gradient of the mean log-likelihood.
            if np.max(np.abs(grad)) / n <= tol:
                converged = True
                break
            w = np.maximum(mu * (1.0 - mu), 1e-12)
            hessian = (x * w[:, None]).T @ x
            try:
                if np.linalg.cond(hessian) > _COND_LIMIT:
                    needs_penalty = True
                    break
                step = np.linalg.solve(hessian, grad)
            except np.linalg.LinAlgError:
                needs_penalty = True
                break
            # Step halving keeps the objective monotone (up to float noise
            # in the deviance sum near the optimum).
            slack = 1e-10 * max(1.0, abs(nll))
            scale_f = 1.0
            accepted = False
            for _ in range(30):
                cand = beta + scale_f * step
                cand_nll = _nll(x, y, cand)
                if cand_nll <= nll + slack:
                    beta, nll = cand, cand_nll
                    accepted = True
                    break
                scale_f *= 0.5
            if not accepted:
                needs_penalty = True
                break
            trace.append(nll)
            if np.max(np.abs(_equivalent_standardized_coefs(beta, col_means, col_sds))) > _BLOWUP_LIMIT:
                needs_penalty = True
                break
        else:
            needs_penalty = True  # max_iter exhausted without convergence

    if needs_penalty or not converged:
        beta, converged = _fit_elastic_net(x, y, penalty, tol=tol)
        ses = np.full(p, np.nan)
        return LogisticFit(
            coefficients=beta,
            standard_errors=ses,
            converged=converged,
            penalty=penalty,
            covariate_means=means,
            covariate_sds=sds,
            covariance=None,
            nll_trace=tuple(trace),
        )

    mu = invlogit(np.clip(x @ beta, -_ETA_CLIP, _ETA_CLIP))
    w = np.maximum(mu * (1.0 - mu), 1e-12)
    info = (x * w[:, None]).T @ x
    cov = np.linalg.inv(info)
    ses = np.sqrt(np.diag(cov))
    return LogisticFit(
        coefficients=beta,
        standard_errors=ses,
        converged=True,
        penalty=None,
        covariate_means=means,
        covariate_sds=sds,
        covariance=cov,
        nll_trace=tuple(trace),
    )


def fitted_probabilities(fit: LogisticFit, design) -> np.ndarray:
    """Event probabilities for a raw design matrix (intercept included)."""
    x = np.asarray(design, dtype=float)
    if x.ndim != 2 or x.shape[1] != fit.n_coefficients:
        raise DomainError(
            f"design has {x.shape[1] if x.ndim == 2 else '?'} columns, "
            f"fit expects {fit.n_coefficients}"
        )
    xs = _standardized_design(x, fit.covariate_means, fit.covariate_sds)
    return invlogit(xs @ fit.coefficients)


def predict_logistic(fit: LogisticFit, covariates) -> float:
    """Probability for one raw covariate vector (no intercept entry)."""
    v = np.atleast_1d(np.asarray(covariates, dtype=float))
    if len(v) != fit.n_coefficients - 1:
        raise DomainError(f"expected {fit.n_coefficients - 1} covariates, got {len(v)}")
    z = (v - fit.covariate_means) / fit.covariate_sds
    eta = fit.coefficients[0] + fit.coefficients[1:] @ z
    return float(invlogit(eta))


@dataclass(frozen=True)
class LinearLogitFit:
    """OLS fit of logit(response) with its residual variance."""

    coefficients: np.ndarray
    sigma2: float
    residuals: np.ndarray
    xtx_inverse: np.ndarray | None = None

    @property
    def standard_errors(self) -> np.ndarray:
        if self.xtx_inverse is None:
            return np.full(len(self.coefficients), np.nan)
        return np.sqrt(self.sigma2 * np.diag(self.xtx_inverse))


def fit_linear_on_logit(design, response) -> LinearLogitFit:
    """Ordinary least squares of logit(response) on the design.

    Responses must lie strictly inside (0, 1); values at the endpoints
    belong to the total-loss model, not here.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2:
        raise DomainError("design must be a 2-D matrix")
    n, p = x.shape
    if len(y) != n:
        raise DomainError(f"design has {n} rows but response has {len(y)}")
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        raise DomainError("responses must lie strictly inside (0, 1)")
    if n <= p:
        raise InsufficientDataError(f"need more than {p} observations, got {n}")
    if np.linalg.matrix_rank(x) < p:
        raise RankError("design matrix is rank deficient")
    z = logit(y)
    coefs, _, _, _ = np.linalg.lstsq(x, z, rcond=None)
    resid = z - x @ coefs
    rss = float(resid @ resid)
    sigma2 = rss / (n - p)
    xtx_inv = np.linalg.inv(x.T @ x)
    return LinearLogitFit(coefficients=coefs, sigma2=sigma2, residuals=resid, xtx_inverse=xtx_inv)


@dataclass(frozen=True)
class HLResult:
    """Hosmer-Lemeshow grouped chi-square calibration test."""

    statistic: float
    df: int
    p_value: float
    groups_used: int


def _partition_sorted(p_sorted: np.ndarray, groups: int) -> list[tuple[int, int]]:
    """Near-equal groups over sorted probabilities, ties kept together."""
    n = len(p_sorted)
    bounds = []
    start = 0
    for g in range(groups):
        if start >= n:
            break
        end = round(n * (g + 1) / groups)
        end = max(end, start + 1)
        # extend so tied probabilities never straddle a boundary
        while end < n and p_sorted[end] == p_sorted[end - 1]:
            end += 1
        bounds.append((start, min(end, n)))
        start = min(end, n)
    if bounds and bounds[-1][1] < n:
        s, _ = bounds[-1]
        bounds[-1] = (s, n)
    return bounds


def hosmer_lemeshow(fit: LogisticFit, design, response, groups: int = 10) -> HLResult:
    """Grouped Pearson chi-square test of logistic calibration.

    Observations are sorted by fitted probability and split into
    near-equal groups (ties kept together); groups whose expected events
    are 0 or equal to the group size are merged into a neighbour.  The
    statistic sums (O - E)^2 / (E (1 - mean p)) over groups and is referred
    to chi-square with groups_used - 2 degrees of freedom.
    """
    if groups < 3:
        raise DomainError(f"need at least 3 groups, got {groups}")
    y = np.asarray(response, dtype=float)
    probs = fitted_probabilities(fit, design)
    order = np.argsort(probs, kind="stable")
    p_sorted = probs[order]
    y_sorted = y[order]

    cells = []
    for start, end in _partition_sorted(p_sorted, groups):
        n_g = end - start
        obs = float(y_sorted[start:end].sum())
        exp = float(p_sorted[start:end].sum())
        cells.append([n_g, obs, exp])

    # Merge groups with degenerate expectations into the next (or previous).
    merged = True
    while merged:
        merged = False
        for i, (n_g, obs, exp) in enumerate(cells):
            if exp <= 0.0 or exp >= n_g:
                j = i + 1 if i + 1 < len(cells) else i - 1
                if j < 0:
                    break
                cells[j] = [cells[j][0] + n_g, cells[j][1] + obs, cells[j][2] + exp]
                del cells[i]
                merged = True
                break

    used = len(cells)
    if used < 3:
        raise NotApplicableError(
            f"only {used} usable groups after merging; Hosmer-Lemeshow needs 3"
        )
    stat = 0.0
    for n_g, obs, exp in cells:
        mean_p = exp / n_g
        stat += (obs - exp) ** 2 / (exp * (1.0 - mean_p))
    df = used - 2
    p_value = float(chi2.sf(stat, df))
    return HLResult(statistic=float(stat), df=df, p_value=p_value, groups_used=used)


def quantile_residuals(fit: LinearLogitFit, design, response) -> np.ndarray:
    """Quantile residuals of a linear-on-logit fit.

    Mapping the fitted normal CDF through the standard normal quantile
    collapses, for Gaussian errors, to the standardized logit-scale
    residual; under a correct model these are standard normal.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        raise DomainError("responses must lie strictly inside (0, 1)")
    if fit.sigma2 <= 0.0:
        raise DomainError("quantile residuals need a positive residual variance")
    mu = x @ fit.coefficients
    return (logit(y) - mu) / np.sqrt(fit.sigma2)
