"""Ecosystem-wide two-part severity model.

The loss ratio R in (0, 1] decomposes into an atom at 1 (total loss,
logistic part over chain dummies, log TVL, and time) and a continuous
component in (0, 1) modeled as logit-normal in log TVL.  Severity
covariates are used raw, not standardized; time is measured in years of
365.25 days since the model's time origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import glm
from .datamodel import Chain, IncidentRecord, Month, derive_loss_ratio, effective_tvl
from .errors import DomainError, InsufficientDataError, NotApplicableError
from .numerics import RngStream

DEFAULT_WINDOW = (Month(2020, 1), Month(2023, 12))
DEFAULT_TIME_ORIGIN = date(2020, 1, 1)
DAYS_PER_YEAR = 365.25

# Fewer partial-loss observations than this earns a warning flag.
MIN_PARTIAL_OBS = 30


@dataclass(frozen=True)
class SeverityModel:
    """Two-part loss-ratio model.

    ``total_loss_fit`` has seven coefficients over (intercept, D_ETH,
    D_OTHER, log TVL, t, D_ETH*t, D_OTHER*t) with BSC as the reference
    chain.  ``proportional_fit`` is the logit-normal model of partial
    ratios on log TVL; it is None in total-loss-only mode (every training
    ratio was 1), in which case the predicted total-loss probability is 1.
    """

    total_loss_fit: glm.LogisticFit | None
    proportional_fit: glm.LinearLogitFit | None
    time_origin: date
    training_window: tuple[Month, Month]
    hl: glm.HLResult | None
    n_total: int
    n_partial: int
    low_partial_warning: bool
    zero_loss_skipped: int = 0

    @property
    def total_loss_only(self) -> bool:
        return self.proportional_fit is None

    @property
    def sigma2(self) -> float:
        if self.proportional_fit is None:
            raise DomainError("total-loss-only model has no proportional part")
        return self.proportional_fit.sigma2


@dataclass(frozen=True)
class RatioMoments:
    """Monte Carlo moments of the partial loss ratio."""

    mean_r: float
    second_moment_r: float
    n_samples: int
    mc_standard_error: float

    def __post_init__(self):
        ok = (
            self.mean_r**2 <= self.second_moment_r + 1e-12
            and self.second_moment_r <= self.mean_r + 1e-12
        )
        if not ok:
            raise DomainError(
                f"ratio moments violate mean^2 <= m2 <= mean: {self.mean_r}, {self.second_moment_r}"
            )


def years_since(origin: date, when: date) -> float:
    return (when - origin).days / DAYS_PER_YEAR


def _chain_dummies(chain: Chain) -> tuple[float, float]:
    return (1.0 if chain is Chain.ETH else 0.0, 1.0 if chain is Chain.OTHER else 0.0)


def total_loss_row(chain: Chain, log_tvl: float, t: float) -> list[float]:
    d_eth, d_oth = _chain_dummies(chain)
    return [1.0, d_eth, d_oth, log_tvl, t, d_eth * t, d_oth * t]


def fit_severity(
    incidents,
    window: tuple[Month, Month] = DEFAULT_WINDOW,
    time_origin: date = DEFAULT_TIME_ORIGIN,
    groups: int = 10,
) -> SeverityModel:
    """Fit both parts of the severity model from pooled ecosystem incidents.

    Zero-loss incidents are skipped (counted, not errored); incidents with
    missing or zero TVL enter as total losses with the loss standing in
    for TVL.
    """
    in_window: list[IncidentRecord] = []
    zero_loss = 0
    for rec in incidents:
        m = Month.of(rec.date)
        if not (window[0] <= m <= window[1]):
            continue
        if rec.loss_usd == 0.0:
            zero_loss += 1
            continue
        in_window.append(rec)
    if not in_window:
        raise InsufficientDataError("no usable incidents inside the training window")

    ratios = np.array([derive_loss_ratio(rec) for rec in in_window])
    log_tvls = np.array([math.log(effective_tvl(rec)) for rec in in_window])
    times = np.array([years_since(time_origin, rec.date) for rec in in_window])
    total = ratios == 1.0
    n_total = int(total.sum())
    n_partial = int((~total).sum())

    design1 = np.array(
        [
            total_loss_row(rec.chain, lt, t)
            for rec, lt, t in zip(in_window, log_tvls, times)
        ]
    )

    if n_partial == 0:
        # Every training ratio was a full loss: nothing to fit on either
        # part, and every prediction is a certain total loss.
        return SeverityModel(
            total_loss_fit=None,
            proportional_fit=None,
            time_origin=time_origin,
            training_window=window,
            hl=None,
            n_total=n_total,
            n_partial=0,
            low_partial_warning=True,
            zero_loss_skipped=zero_loss,
        )

    total_fit = glm.fit_logistic(design1, total.astype(float), standardize=False)
    try:
        hl = glm.hosmer_lemeshow(total_fit, design1, total.astype(float), groups=groups)
    except NotApplicableError:
        hl = None

    partial_design = np.column_stack([np.ones(n_partial), log_tvls[~total]])
    proportional_fit = glm.fit_linear_on_logit(partial_design, ratios[~total])

    return SeverityModel(
        total_loss_fit=total_fit,
        proportional_fit=proportional_fit,
        time_origin=time_origin,
        training_window=window,
        hl=hl,
        n_total=n_total,
        n_partial=n_partial,
        low_partial_warning=n_partial < MIN_PARTIAL_OBS,
        zero_loss_skipped=zero_loss,
    )


def predict_total_loss_prob(model: SeverityModel, chain: Chain, tvl: float, when: date) -> float:
    """Probability that an attack wipes the full TVL."""
    if not tvl > 0.0:
        raise DomainError(f"tvl must be positive, got {tvl}")
    if when < model.time_origin:
        raise DomainError(f"prediction date {when} precedes time origin {model.time_origin}")
    if model.total_loss_fit is None:
        return 1.0
    row = total_loss_row(chain, math.log(tvl), years_since(model.time_origin, when))
    return glm.predict_logistic(model.total_loss_fit, row[1:])


def _proportional_params(model: SeverityModel, tvl: float) -> tuple[float, float]:
    if model.proportional_fit is None:
        raise DomainError("total-loss-only model has no proportional part")
    coefs = model.proportional_fit.coefficients
    eta = float(coefs[0] + coefs[1] * math.log(tvl))
    return eta, math.sqrt(model.proportional_fit.sigma2)


def ratio_moments(
    model: SeverityModel,
    tvl: float,
    n_samples: int = 100_000,
    rng: RngStream | np.random.Generator = RngStream(0),
) -> RatioMoments:
    """Monte Carlo mean and second moment of the partial loss ratio."""
    if not tvl > 0.0:
        raise DomainError(f"tvl must be positive, got {tvl}")
    if n_samples < 1000:
        raise DomainError(f"need at least 1000 samples, got {n_samples}")
    eta, sigma = _proportional_params(model, tvl)
    if sigma == 0.0:
        mean = glm.invlogit(eta)
        return RatioMoments(mean, mean * mean, n_samples, 0.0)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    vals = glm.invlogit(eta + sigma * gen.standard_normal(n_samples))
    mean = float(vals.mean())
    second = float((vals * vals).mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return RatioMoments(mean, second, n_samples, se)


def sample_ratio(
    model: SeverityModel,
    chain: Chain,
    tvl: float,
    when: date,
    rng: RngStream | np.random.Generator,
    size: int | None = None,
):
    """Draw loss ratios in (0, 1]: total loss with probability pi_S, else
    a fresh logit-normal partial ratio.

    Consumes one uniform and one normal per draw regardless of the branch
    taken, so the draw count is input-independent.
    """
    pi_s = predict_total_loss_prob(model, chain, tvl, when)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    k = 1 if size is None else int(size)
    if model.total_loss_only:
        out = np.ones(k)
        return float(out[0]) if size is None else out
    eta, sigma = _proportional_params(model, tvl)
    u = gen.random(k)
    z = gen.standard_normal(k)
    out = np.where(u < pi_s, 1.0, glm.invlogit(eta + sigma * z))
    return float(out[0]) if size is None else out


def predicted_loss_percentage(
    model: SeverityModel,
    chain: Chain,
    tvl: float,
    when: date,
    n_samples: int = 100_000,
    rng: RngStream | np.random.Generator = RngStream(0),
) -> float:
    """Expected fraction of TVL lost given an attack: (1 - pi_S) E(R*) + pi_S."""
    pi_s = predict_total_loss_prob(model, chain, tvl, when)
    if model.total_loss_only:
        return 1.0
    moments = ratio_moments(model, tvl, n_samples=n_samples, rng=rng)
    return (1.0 - pi_s) * moments.mean_r + pi_s


def to_dict(model: SeverityModel) -> dict:
    """JSON-ready payload for a fitted severity model."""
    tl = model.total_loss_fit
    prop = model.proportional_fit
    return {
        "beta": None if tl is None else [float(c) for c in tl.coefficients],
        "beta_se": None
        if tl is None
        else [None if math.isnan(s) else float(s) for s in tl.standard_errors],
        "gamma": None if prop is None else [float(c) for c in prop.coefficients],
        "sigma2": None if prop is None else float(prop.sigma2),
        "time_origin": model.time_origin.isoformat(),
        "window": [str(model.training_window[0]), str(model.training_window[1])],
        "penalty": None
        if (tl is None or tl.penalty is None)
        else {"lambda": tl.penalty.lam, "alpha_mix": tl.penalty.alpha_mix},
        "hl": None
        if model.hl is None
        else {
            "stat": model.hl.statistic,
            "df": model.hl.df,
            "p": model.hl.p_value,
            "groups": model.hl.groups_used,
        },
        "n_total": model.n_total,
        "n_partial": model.n_partial,
        "low_partial_warning": model.low_partial_warning,
        "zero_loss_skipped": model.zero_loss_skipped,
        "total_loss_only": model.total_loss_only,
    }


def from_dict(doc: dict) -> SeverityModel:
    """Rebuild a severity model from its JSON payload."""
    beta = doc.get("beta")
    tl = None
    if beta is not None:
        ses = doc.get("beta_se") or [None] * len(beta)
        penalty = doc.get("penalty")
        tl = glm.LogisticFit(
            coefficients=np.asarray(beta, dtype=float),
            standard_errors=np.array([math.nan if s is None else float(s) for s in ses]),
            converged=True,
            penalty=None
            if penalty is None
            else glm.PenaltySpec(lam=float(penalty["lambda"]), alpha_mix=float(penalty["alpha_mix"])),
            covariate_means=np.zeros(len(beta) - 1),
            covariate_sds=np.ones(len(beta) - 1),
            covariance=None,
        )
    gamma = doc.get("gamma")
    prop = None
    if gamma is not None:
        prop = glm.LinearLogitFit(
            coefficients=np.asarray(gamma, dtype=float),
            sigma2=float(doc["sigma2"]),
            residuals=np.empty(0),
            xtx_inverse=None,
        )
    hl_doc = doc.get("hl")
    hl = (
        None
        if hl_doc is None
        else glm.HLResult(
            statistic=float(hl_doc["stat"]),
            df=int(hl_doc["df"]),
            p_value=float(hl_doc["p"]),
            groups_used=int(hl_doc["groups"]),
        )
    )
    return SeverityModel(
        total_loss_fit=tl,
        proportional_fit=prop,
        time_origin=date.fromisoformat(doc["time_origin"]),
        training_window=(Month.parse(doc["window"][0]), Month.parse(doc["window"][1])),
        hl=hl,
        n_total=int(doc["n_total"]),
        n_partial=int(doc["n_partial"]),
        low_partial_warning=bool(doc["low_partial_warning"]),
        zero_loss_skipped=int(doc.get("zero_loss_skipped", 0)),
    )
