"""Per-protocol premiums under the expectation and SD principles.

Monthly coverage of the full TVL with no deductible or limit; a coverage
fraction scales both premiums proportionally when partial cover is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import severity as sev
from .datamodel import ProtocolSpec
from .errors import DomainError
from .frequency import FrequencyModel, predict_attack_probability
from .numerics import RngStream

DEFAULT_THETA = 0.5


@dataclass(frozen=True)
class McMeta:
    """Simulation metadata attached to a quote."""

    n_samples: int
    seed: int
    stream_id: int
    variance_clamped: bool = False
    sd_below_expectation: bool = False


@dataclass(frozen=True)
class PremiumQuote:
    protocol_id: str
    attack_prob: float
    loss_pct: float
    tvl: float
    theta: float
    expectation_premium_usd: float
    sd_premium_usd: float
    expectation_premium_pct: float
    sd_premium_pct: float
    mc_meta: McMeta


def _check_prob(name: str, value: float) -> float:
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def expected_loss(attack_prob: float, tvl: float, total_loss_prob: float, mean_r: float) -> float:
    """E(L) = pi_F * TVL * ((1 - pi_S) * E(R*) + pi_S)."""
    pf = _check_prob("attack_prob", attack_prob)
    ps = _check_prob("total_loss_prob", total_loss_prob)
    mr = _check_prob("mean_r", mean_r)
    if not tvl > 0.0:
        raise DomainError(f"tvl must be positive, got {tvl}")
    return pf * tvl * ((1.0 - ps) * mr + ps)


def severity_second_moment(
    model: sev.SeverityModel,
    chain,
    tvl: float,
    when: date,
    n_samples: int = 100_000,
    rng: RngStream | np.random.Generator = RngStream(0),
) -> float:
    """E(Y^2) = TVL^2 * ((1 - pi_S) * E(R*^2) + pi_S)."""
    pi_s = sev.predict_total_loss_prob(model, chain, tvl, when)
    if model.total_loss_only:
        return tvl * tvl
    moments = sev.ratio_moments(model, tvl, n_samples=n_samples, rng=rng)
    return tvl * tvl * ((1.0 - pi_s) * moments.second_moment_r + pi_s)


def price(
    protocol: ProtocolSpec,
    tvl: float,
    when: date,
    frequency_model: FrequencyModel,
    severity_model: sev.SeverityModel,
    theta: float = DEFAULT_THETA,
    n_samples: int = 100_000,
    rng: RngStream = RngStream(0),
    coverage_fraction: float = 1.0,
) -> PremiumQuote:
    """Quote one protocol under both premium principles.

    The ratio moments come from a single Monte Carlo draw set, so the mean
    and second moment of the severity are internally consistent;
    Var(L) = E(N) E(Y^2) - E(N)^2 E(Y)^2 uses E(N^2) = E(N) for the
    Bernoulli frequency.
    """
    if not theta > 0.0:
        raise DomainError(f"theta must be positive, got {theta}")
    if not 0.0 < coverage_fraction <= 1.0:
        raise DomainError(f"coverage_fraction must lie in (0, 1], got {coverage_fraction}")
    pi_f = predict_attack_probability(frequency_model, tvl)
    pi_s = sev.predict_total_loss_prob(severity_model, protocol.chain, tvl, when)

    if severity_model.total_loss_only:
        mean_r, second_r = 0.0, 0.0  # unused: pi_s == 1 makes the bracket 1
        n_used = 0
    else:
        moments = sev.ratio_moments(severity_model, tvl, n_samples=n_samples, rng=rng)
        mean_r, second_r = moments.mean_r, moments.second_moment_r
        n_used = moments.n_samples

    loss_pct = (1.0 - pi_s) * mean_r + pi_s
    e_y = tvl * loss_pct
    e_y2 = tvl * tvl * ((1.0 - pi_s) * second_r + pi_s)
    e_l = pi_f * e_y
    variance = pi_f * e_y2 - pi_f * pi_f * e_y * e_y
    clamped = False
    if variance < 0.0:
        variance = 0.0
        clamped = True
    sd_l = math.sqrt(variance)

    expectation_usd = (1.0 + theta) * e_l * coverage_fraction
    sd_usd = (e_l + theta * sd_l) * coverage_fraction
    meta = McMeta(
        n_samples=n_used,
        seed=rng.seed,
        stream_id=rng.stream_id,
        variance_clamped=clamped,
        sd_below_expectation=sd_usd < expectation_usd,
    )
    return PremiumQuote(
        protocol_id=protocol.id,
        attack_prob=pi_f,
        loss_pct=loss_pct,
        tvl=tvl,
        theta=theta,
        expectation_premium_usd=expectation_usd,
        sd_premium_usd=sd_usd,
        expectation_premium_pct=expectation_usd / tvl,
        sd_premium_pct=sd_usd / tvl,
        mc_meta=meta,
    )
