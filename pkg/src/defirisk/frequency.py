"""Per-protocol monthly attack-frequency model.

A Bernoulli event-per-month model with a logit link on standardized
log-TVL, plus a pooled-peer interval path for protocols that have never
been attacked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import glm
from .datamodel import Month, MonthlyPanelRow
from .errors import DomainError, InsufficientDataError, NoEventError, NotApplicableError
from .numerics import std_normal_quantile

_Z975 = std_normal_quantile(0.975)


@dataclass(frozen=True)
class FrequencyModel:
    """Fitted attack-frequency model for one protocol.

    ``fit`` always carries two coefficients (intercept, standardized
    log-TVL slope).  When the panel's TVL never varies the slope is pinned
    to zero and ``covariate_dropped`` is set; the HL test is then not
    applicable and ``hl`` is None.
    """

    protocol_id: str
    fit: glm.LogisticFit
    training_window: tuple[Month, Month]
    hl: glm.HLResult | None
    covariate_dropped: bool = False


def _panel_arrays(panel) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([row.log_tvl for row in panel], dtype=float)
    y = np.array([row.event for row in panel], dtype=float)
    return x, y


def fit_frequency(panel, groups: int = 10) -> FrequencyModel:
    """Fit event-on-log-TVL logistic regression over one protocol's panel."""
    panel = list(panel)
    if not panel:
        raise InsufficientDataError("empty monthly panel")
    if len(panel) < 2:
        raise InsufficientDataError("a single panel month cannot identify the model")
    x, y = _panel_arrays(panel)
    if y.sum() == 0:
        raise NoEventError(
            f"protocol {panel[0].protocol_id!r} has no event months; "
            "use peer_interval for an interval approximation"
        )
    indices = [row.month.index for row in panel]
    window = (Month.from_index(min(indices)), Month.from_index(max(indices)))
    protocol_id = panel[0].protocol_id

    if np.std(x, ddof=1) == 0.0:
        # Constant TVL: standardization is undefined, so drop the covariate
        # and report an intercept-only model with a zero slope.
        base = glm.fit_logistic(np.ones((len(y), 1)), y, standardize=False)
        fit = glm.LogisticFit(
            coefficients=np.array([base.coefficients[0], 0.0]),
            standard_errors=np.array([base.standard_errors[0], math.nan]),
            converged=base.converged,
            penalty=base.penalty,
            covariate_means=np.array([float(x.mean())]),
            covariate_sds=np.array([1.0]),
            covariance=None,
            nll_trace=base.nll_trace,
        )
        return FrequencyModel(protocol_id, fit, window, hl=None, covariate_dropped=True)

    design = np.column_stack([np.ones(len(y)), x])
    fit = glm.fit_logistic(design, y, standardize=True)
    try:
        hl = glm.hosmer_lemeshow(fit, design, y, groups=groups)
    except NotApplicableError:
        hl = None
    return FrequencyModel(protocol_id, fit, window, hl=hl)


def predict_attack_probability(model: FrequencyModel, tvl_next: float) -> float:
    """Attack probability for a month with the given TVL."""
    if not tvl_next > 0.0:
        raise DomainError(f"tvl_next must be positive, got {tvl_next}")
    return glm.predict_logistic(model.fit, [math.log(tvl_next)])


def peer_interval(peer_panels, tvl_next: float) -> tuple[float, float]:
    """95% interval for the attack probability of a never-attacked protocol.

    Pools the peer panels into one logistic fit and returns the Wald
    interval of the predicted probability at ``tvl_next``, computed on the
    linear-predictor scale and mapped through the inverse logit.
    """
    if not tvl_next > 0.0:
        raise DomainError(f"tvl_next must be positive, got {tvl_next}")
    rows: list[MonthlyPanelRow] = [row for panel in peer_panels for row in panel]
    if not rows:
        raise InsufficientDataError("no peer panels supplied")
    x, y = _panel_arrays(rows)
    if y.sum() == 0:
        raise NoEventError("pooled peer panels contain no events")
    design = np.column_stack([np.ones(len(y)), x])
    fit = glm.fit_logistic(design, y, standardize=True)
    if fit.covariance is None:
        raise DomainError(
            "pooled fit fell back to the penalized path; no covariance for a Wald interval"
        )
    z = (math.log(tvl_next) - fit.covariate_means[0]) / fit.covariate_sds[0]
    v = np.array([1.0, z])
    eta = float(v @ fit.coefficients)
    se = math.sqrt(float(v @ fit.covariance @ v))
    lo = glm.invlogit(eta - _Z975 * se)
    hi = glm.invlogit(eta + _Z975 * se)
    return (lo, hi)


def to_dict(model: FrequencyModel) -> dict:
    """JSON-ready payload for a fitted frequency model."""
    fit = model.fit
    ses = [None if math.isnan(s) else float(s) for s in fit.standard_errors]
    return {
        "protocol_id": model.protocol_id,
        "alpha0": float(fit.coefficients[0]),
        "alpha1": float(fit.coefficients[1]),
        "se_alpha0": ses[0],
        "se_alpha1": ses[1],
        "cov_mean": float(fit.covariate_means[0]),
        "cov_sd": float(fit.covariate_sds[0]),
        "window": [str(model.training_window[0]), str(model.training_window[1])],
        "penalty": None
        if fit.penalty is None
        else {"lambda": fit.penalty.lam, "alpha_mix": fit.penalty.alpha_mix},
        "hl": None
        if model.hl is None
        else {
            "stat": model.hl.statistic,
            "df": model.hl.df,
            "p": model.hl.p_value,
            "groups": model.hl.groups_used,
        },
        "covariate_dropped": model.covariate_dropped,
    }


def from_dict(doc: dict) -> FrequencyModel:
    """Rebuild a frequency model from its JSON payload."""
    ses = [math.nan if doc.get(k) is None else float(doc[k]) for k in ("se_alpha0", "se_alpha1")]
    penalty = doc.get("penalty")
    fit = glm.LogisticFit(
        coefficients=np.array([float(doc["alpha0"]), float(doc["alpha1"])]),
        standard_errors=np.array(ses),
        converged=True,
        penalty=None
        if penalty is None
        else glm.PenaltySpec(lam=float(penalty["lambda"]), alpha_mix=float(penalty["alpha_mix"])),
        covariate_means=np.array([float(doc["cov_mean"])]),
        covariate_sds=np.array([float(doc["cov_sd"])]),
        covariance=None,
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
    window = (Month.parse(doc["window"][0]), Month.parse(doc["window"][1]))
    return FrequencyModel(
        protocol_id=str(doc["protocol_id"]),
        fit=fit,
        training_window=window,
        hl=hl,
        covariate_dropped=bool(doc.get("covariate_dropped", False)),
    )
