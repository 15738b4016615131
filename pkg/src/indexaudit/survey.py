"""Survey-side estimation: expenditure weights and their sampling covariance.

Expenditure weights are estimated from household micro data as a ratio of
totals: each group's share of the pooled expenditure of all responding
households. The covariance of that estimator is the standard linearization
for a ratio under simple random sampling, computed from the per-household
influence terms. Those influence terms sum to zero across households, which
forces every row of the covariance matrix to sum to zero, and the matrix is
positive semidefinite by construction since it is a scaled cross-product.

A small simulator draws synthetic household data with a known weight vector
so estimator behavior can be checked end to end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import PriceSeries, WeightVector, _frozen_array, _resolve_periods
from .errors import AuditWarning, DimensionMismatchError, ValidationError

__all__ = [
    "HouseholdRecord",
    "WeightEstimate",
    "estimate_weights",
    "simulate_households",
    "index_variance",
]


@dataclass(frozen=True)
class HouseholdRecord:
    """One household's expenditures by group, with an optional stratum tag."""

    household_id: str
    expenditures: np.ndarray
    stratum_label: str | None = None

    def __post_init__(self):
        spend = _frozen_array(self.expenditures)
        if spend.ndim != 1 or spend.size < 2:
            raise ValidationError(
                f"household {self.household_id!r}: expenditures must be a vector "
                f"over at least 2 groups"
            )
        if not np.all(np.isfinite(spend)) or np.any(spend < 0.0):
            raise ValidationError(
                f"household {self.household_id!r}: expenditures must be finite "
                f"and non-negative"
            )
        object.__setattr__(self, "expenditures", spend)

    @property
    def total(self) -> float:
        return float(np.sum(self.expenditures))


@dataclass(frozen=True)
class WeightEstimate:
    """A weight vector estimated from a sample, with its covariance matrix.

    Construction enforces what downstream algebra relies on: the covariance
    is symmetric (to 1e-12 on its own scale), positive semidefinite up to a
    -1e-10 eigenvalue slack, and every row sums to zero on the same slack
    (weights are shares, so their estimation errors must cancel along the
    all-ones direction). ``n_households`` is the number of records actually
    used; None means unknown (e.g. a file that omitted it).
    """

    point: WeightVector
    covariance: np.ndarray
    n_households: int | None = None

    def __post_init__(self):
        cov = _frozen_array(self.covariance)
        m = self.point.n_groups
        if cov.shape != (m, m):
            raise DimensionMismatchError(
                f"covariance shape {cov.shape} does not match {m} weights"
            )
        if not np.all(np.isfinite(cov)):
            raise ValidationError("covariance contains non-finite values")
        scale = max(float(np.max(np.abs(cov))), 1e-300)
        if float(np.max(np.abs(cov - cov.T))) > 1e-12 * scale:
            raise ValidationError("covariance is not symmetric")
        eigenvalues = np.linalg.eigvalsh(cov)
        if float(eigenvalues.min()) < -1e-10 * max(scale, 1e-30):
            raise ValidationError(
                f"covariance is not positive semidefinite "
                f"(min eigenvalue {eigenvalues.min():.3e})"
            )
        row_sums = np.abs(cov.sum(axis=1))
        if float(row_sums.max()) > 1e-10 * max(scale, 1e-30) * m:
            raise ValidationError(
                "covariance rows must sum to zero (weight errors cancel across groups)"
            )
        if self.n_households is not None and self.n_households < 2:
            raise ValidationError("n_households must be at least 2 when given")
        object.__setattr__(self, "covariance", cov)


def estimate_weights(records: Iterable[HouseholdRecord]) -> WeightEstimate:
    """Ratio-of-totals weights and their linearized sampling covariance.

    Households with zero total expenditure carry no information about shares;
    they are dropped and counted in an :class:`AuditWarning`. At least two
    usable households are required. With n usable households, expenditure
    matrix X (n by m), row totals s, estimated weights w = colsum(X) / sum(s),
    and mean total S, the influence of household h is
    z_h = (x_h - w * s_h) / S and the covariance is
    sum_h z_h z_h^T / (n (n - 1)).
    """
    rows = list(records)
    if not rows:
        raise ValidationError("no household records supplied")
    m = rows[0].expenditures.size
    for record in rows:
        if record.expenditures.size != m:
            raise DimensionMismatchError(
                f"household {record.household_id!r} has {record.expenditures.size} "
                f"groups, expected {m}"
            )
    x = np.stack([record.expenditures for record in rows])
    totals = x.sum(axis=1)
    usable = totals > 0.0
    dropped = int(np.sum(~usable))
    if dropped:
        warnings.warn(
            f"dropped {dropped} household(s) with zero total expenditure",
            AuditWarning,
            stacklevel=2,
        )
    x = x[usable]
    totals = totals[usable]
    n = x.shape[0]
    if n < 2:
        raise ValidationError(
            f"need at least 2 households with positive expenditure, got {n}"
        )
    pooled = float(totals.sum())
    point = x.sum(axis=0) / pooled
    mean_total = pooled / n
    influence = (x - np.outer(totals, point)) / mean_total
    influence -= influence.mean(axis=0)
    cov = influence.T @ influence / (n * (n - 1))
    cov = 0.5 * (cov + cov.T)
    return WeightEstimate(
        point=WeightVector(point, label="survey"),
        covariance=cov,
        n_households=n,
    )


def simulate_households(true_weights: WeightVector, n: int, dispersion: float,
                        seed: int, stratum_label: str | None = None) -> list[HouseholdRecord]:
    """Draw synthetic household expenditures around known true weights.

    Totals are LogNormal(0, dispersion); shares are Dirichlet with
    concentration ``true_weights / dispersion``, so the expected share vector
    equals the true weights for every dispersion and the draws collapse onto
    the true weights as dispersion approaches zero. Deterministic in ``seed``.
    """
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")
    if not dispersion > 0.0 or not np.isfinite(dispersion):
        raise ValidationError(f"dispersion must be a positive float, got {dispersion}")
    rng = np.random.Generator(np.random.PCG64(seed))
    totals = np.exp(rng.normal(0.0, dispersion, size=n))
    shares = rng.dirichlet(true_weights.w / dispersion, size=n)
    spend = totals[:, None] * shares
    width = len(str(n))
    return [
        HouseholdRecord(
            household_id=f"h{i + 1:0{width}d}",
            expenditures=spend[i],
            stratum_label=stratum_label,
        )
        for i in range(n)
    ]


def index_variance(prices: PriceSeries, estimate: WeightEstimate,
                   t: int | None = None,
                   periods: Sequence[int] | None = None) -> float:
    """Sampling variance of the weighted index from weight uncertainty.

    Evaluates the quadratic form p^T V p at period position ``t``, or at the
    mean price vector over ``periods`` when that is given instead (exactly one
    of the two must be supplied). Tiny negative results from rounding clamp to
    zero; a negative value beyond -1e-10 on the problem's own scale means the
    covariance is broken and raises.
    """
    if estimate.point.n_groups != prices.n_groups:
        raise DimensionMismatchError(
            f"weight estimate has {estimate.point.n_groups} groups, "
            f"price panel has {prices.n_groups}"
        )
    if (t is None) == (periods is None):
        raise ValidationError("index_variance takes exactly one of t or periods")
    if periods is not None:
        chosen = _resolve_periods(prices, periods)
        price_vec = prices.values[:, chosen].mean(axis=1)
    else:
        if not 0 <= t < prices.n_periods:
            raise ValidationError(
                f"period position {t} out of range [0, {prices.n_periods - 1}]"
            )
        price_vec = prices.values[:, t]
    quad = float(price_vec @ estimate.covariance @ price_vec)
    scale = float(np.max(np.abs(price_vec))) ** 2 * max(float(np.trace(estimate.covariance)), 0.0)
    if quad < -1e-10 * max(scale, 1e-30):
        raise ValidationError(
            f"index variance came out negative ({quad:.3e}); covariance is broken"
        )
    return max(quad, 0.0)
