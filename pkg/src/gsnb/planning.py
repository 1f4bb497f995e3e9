"""Design-stage planning: information targets, sample sizes, calendar curves.

The maximum information needed for a target power depends only on the level,
the power, the drift ``log(theta*/delta)``, the spending function, and the
look fractions.  Sample size then follows from the information equation under
an assumed exposure pattern; with identical follow-up the equation has a
closed form, with staggered accrual it is solved by integer search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .boundary import (
    LookSchedule,
    SpendingFunction,
    crossing_probability,
    solve_boundary,
)
from .nb_model import NbParams, ZeroInformationError, information_level

__all__ = [
    "ExposurePattern",
    "EqualFollowup",
    "AccrualCapped",
    "AccrualToEnd",
    "ExplicitExposures",
    "exposure_pattern_from_json",
    "DesignSpec",
    "SampleSizeResult",
    "CalendarCurves",
    "fixed_design_information",
    "max_information",
    "sample_size",
    "calendar_curves",
    "calendar_time_for_information",
]

POWER_TOL = 1e-6


# ---------------------------------------------------------------------------
# exposure patterns


class ExposurePattern:
    """How patients accumulate follow-up over calendar time.

    Entry times for planning are placed on the mid-quantile grid
    ``(j - 1/2)/n * accrual`` (deterministic, uniform in expectation); the
    simulator draws them uniformly instead.  Subclasses define
    ``accrual_period`` (zero when everyone enters at once).
    """

    @property
    def study_end(self) -> float:
        raise NotImplementedError

    def entry_times(self, n: int) -> np.ndarray:
        if self.accrual_period == 0.0:
            return np.zeros(n)
        return (np.arange(1, n + 1) - 0.5) / n * self.accrual_period

    def sample_entry_times(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.accrual_period == 0.0:
            return np.zeros(n)
        return rng.uniform(0.0, self.accrual_period, size=n)

    def exposure_at(self, entries: np.ndarray, tau: float) -> np.ndarray:
        raise NotImplementedError

    def final_exposures(self, entries: np.ndarray) -> np.ndarray:
        return self.exposure_at(entries, self.study_end)

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class EqualFollowup(ExposurePattern):
    """Every patient contributes the same follow-up time."""

    followup: float
    accrual_period = 0.0

    def __post_init__(self):
        if not self.followup > 0:
            raise ValueError("follow-up time must be positive")

    @property
    def study_end(self) -> float:
        return self.followup

    def exposure_at(self, entries, tau):
        return np.clip(tau - np.asarray(entries), 0.0, self.followup)

    def to_json(self):
        return {"kind": "equal_followup", "followup": self.followup}


@dataclass(frozen=True)
class AccrualCapped(ExposurePattern):
    """Uniform accrual; each patient is followed for a fixed cap after entry."""

    accrual_period: float
    followup_cap: float

    def __post_init__(self):
        if self.accrual_period < 0 or self.followup_cap <= 0:
            raise ValueError("invalid accrual pattern")

    @property
    def study_end(self) -> float:
        return self.accrual_period + self.followup_cap

    def exposure_at(self, entries, tau):
        return np.clip(tau - np.asarray(entries), 0.0, self.followup_cap)

    def to_json(self):
        return {
            "kind": "accrual_capped",
            "accrual_period": self.accrual_period,
            "followup_cap": self.followup_cap,
        }


@dataclass(frozen=True)
class AccrualToEnd(ExposurePattern):
    """Uniform accrual; every patient is followed until the study ends."""

    accrual_period: float
    study_duration: float

    def __post_init__(self):
        if self.accrual_period < 0 or self.study_duration <= self.accrual_period:
            raise ValueError("study duration must exceed the accrual period")

    @property
    def study_end(self) -> float:
        return self.study_duration

    def exposure_at(self, entries, tau):
        entries = np.asarray(entries)
        return np.clip(min(tau, self.study_duration) - entries, 0.0, None)

    def to_json(self):
        return {
            "kind": "accrual_to_end",
            "accrual_period": self.accrual_period,
            "study_duration": self.study_duration,
        }


@dataclass(frozen=True)
class ExplicitExposures(ExposurePattern):
    """Final exposures given directly; everyone enters at time zero."""

    exposures: tuple[float, ...]
    accrual_period = 0.0

    def __post_init__(self):
        object.__setattr__(self, "exposures", tuple(float(t) for t in self.exposures))
        if not self.exposures or any(t < 0 for t in self.exposures):
            raise ValueError("exposures must be non-negative")

    @property
    def study_end(self) -> float:
        return max(self.exposures)

    def entry_times(self, n: int) -> np.ndarray:
        if n != len(self.exposures):
            raise ValueError("explicit pattern fixes the number of patients")
        return np.zeros(n)

    sample_entry_times = entry_times  # entries are deterministic here

    def exposure_at(self, entries, tau):
        caps = np.asarray(self.exposures)
        if caps.shape[0] != np.asarray(entries).shape[0]:
            raise ValueError("explicit pattern fixes the number of patients")
        return np.minimum(np.clip(tau, 0.0, None), caps)

    def to_json(self):
        return {"kind": "explicit", "exposures": list(self.exposures)}


def exposure_pattern_from_json(obj: dict) -> ExposurePattern:
    kind = obj.get("kind")
    if kind == "equal_followup":
        return EqualFollowup(obj["followup"])
    if kind == "accrual_capped":
        return AccrualCapped(obj["accrual_period"], obj["followup_cap"])
    if kind == "accrual_to_end":
        return AccrualToEnd(obj["accrual_period"], obj["study_duration"])
    if kind == "explicit":
        return ExplicitExposures(tuple(obj["exposures"]))
    raise ValueError(f"unknown exposure pattern kind {kind!r}")


# ---------------------------------------------------------------------------
# design specification


@dataclass(frozen=True)
class DesignSpec:
    """Inputs of a group sequential design for the rate-ratio test.

    ``power``, ``theta_star``, ``mu2`` and ``phi`` may be omitted for
    monitoring-only use; the planning operations require them.
    """

    alpha: float
    delta: float
    fractions: tuple[float, ...]
    spending: SpendingFunction
    exposure: ExposurePattern
    power: float | None = None
    theta_star: float | None = None
    mu2: float | None = None
    phi: float | None = None
    ratio: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(w) for w in self.fractions))
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not self.delta > 0:
            raise ValueError("margin delta must be positive")
        w = self.fractions
        if not w or abs(w[-1] - 1.0) > 1e-12:
            raise ValueError("the final information fraction must be 1")
        if any(x <= 0 or x > 1 for x in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("fractions must be strictly increasing in (0, 1]")
        if abs(self.spending.alpha - self.alpha) > 1e-12:
            raise ValueError("spending function level must match the design alpha")
        if self.power is not None and not 0 < self.power < 1:
            raise ValueError("power must be in (0, 1)")
        if self.theta_star is not None and not 0 < self.theta_star < self.delta:
            raise ValueError("theta_star must lie in (0, delta)")
        if self.mu2 is not None and not self.mu2 > 0:
            raise ValueError("mu2 must be positive")
        if self.phi is not None and self.phi < 0:
            raise ValueError("phi must be non-negative")
        if not self.ratio > 0:
            raise ValueError("randomization ratio must be positive")

    @property
    def n_looks(self) -> int:
        return len(self.fractions)

    def _require_planning_fields(self):
        missing = [name for name in ("power", "theta_star", "mu2", "phi")
                   if getattr(self, name) is None]
        if missing:
            raise ValueError(f"planning requires fields: {', '.join(missing)}")

    @property
    def params(self) -> NbParams:
        """Model parameters under the planning alternative."""
        self._require_planning_fields()
        return NbParams(self.theta_star * self.mu2, self.mu2, self.phi, self.ratio)

    @property
    def drift(self) -> float:
        """Mean slope of the score process under the alternative."""
        if self.theta_star is None:
            raise ValueError("drift requires theta_star")
        return math.log(self.theta_star / self.delta)


@dataclass(frozen=True)
class SampleSizeResult:
    n1: int
    n2: int
    achieved_information: float


# ---------------------------------------------------------------------------
# information and sample size


def fixed_design_information(alpha: float, power: float, theta_star: float, delta: float = 1.0) -> float:
    """Closed-form information of the single-look design."""
    drift = math.log(theta_star / delta)
    if drift >= 0:
        raise ValueError("theta_star must lie below delta")
    return float((norm.ppf(1 - alpha) + norm.ppf(power)) ** 2 / drift**2)


def max_information(spec: DesignSpec, nodes: int | None = None) -> float:
    """Maximum information such that the boundary attains the target power.

    Monotone root-finding on the total lower-crossing probability at drift
    ``log(theta*/delta)``; depends on the rates and shape only through the
    drift.  ``K = 1`` reproduces the fixed-design information.
    """
    spec._require_planning_fields()
    if spec.power <= spec.alpha:
        raise ValueError("target power must exceed the significance level")
    kwargs = {"nodes": nodes} if nodes else {}
    bound = solve_boundary(
        spec.spending, LookSchedule(spec.fractions, 1.0), **kwargs
    )
    w = np.asarray(spec.fractions)
    drift = spec.drift

    def gap(i_max):
        sched = LookSchedule(tuple(w * i_max), i_max)
        return crossing_probability(bound.criticals, sched, drift, **kwargs).total - spec.power

    hi = 4.0 * fixed_design_information(spec.alpha, spec.power, spec.theta_star, spec.delta)
    while gap(hi) < 0:
        hi *= 2.0
    i_max = brentq(gap, 1e-9, hi, xtol=1e-10, rtol=8.9e-16)
    assert abs(gap(i_max)) < POWER_TOL
    return float(i_max)


def _final_information(spec: DesignSpec, n1: int, n2: int, params: NbParams | None = None) -> float:
    params = params or spec.params
    t1 = spec.exposure.final_exposures(spec.exposure.entry_times(n1))
    t2 = spec.exposure.final_exposures(spec.exposure.entry_times(n2))
    return information_level(t1, t2, params.mu1, params.mu2, params.phi)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_size(spec: DesignSpec, i_max: float) -> SampleSizeResult:
    """Smallest sample size whose final-look information matches ``i_max``.

    The continuous solution of the information equation is rounded to the
    nearest integer (ties up); ``n2 = ceil(ratio * n1)``.  With identical
    follow-up the continuous solution is the closed form
    ``i_max * ((mu1 + k*mu2)/(t*mu1*mu2) + (1+k)*phi)``.
    """
    spec._require_planning_fields()
    if not i_max > 0:
        raise ValueError("target information must be positive")
    params = spec.params
    k = spec.ratio

    if isinstance(spec.exposure, EqualFollowup):
        t = spec.exposure.followup
        n_cont = i_max * (
            (params.mu1 + k * params.mu2) / (t * params.mu1 * params.mu2)
            + (1.0 + k) * params.phi
        )
        n1 = max(1, _round_half_up(n_cont))
    elif isinstance(spec.exposure, ExplicitExposures):
        raise ValueError("explicit exposure pattern fixes the sample size")
    else:
        def info(n: int) -> float:
            return _final_information(spec, n, int(math.ceil(k * n)), params)

        hi = 2
        while info(hi) < i_max:
            hi *= 2
            if hi > 10**8:
                raise ValueError("information target is unreachable")
        lo = hi // 2 if info(max(hi // 2, 1)) < i_max else 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if info(mid) < i_max:
                lo = mid
            else:
                hi = mid
        # nearest integer on the interpolated continuous solution
        n1 = hi
        if hi > 1:
            i_lo, i_hi = info(hi - 1), info(hi)
            n_cont = (hi - 1) + (i_max - i_lo) / (i_hi - i_lo)
            n1 = max(1, _round_half_up(n_cont))

    n2 = int(math.ceil(k * n1))
    return SampleSizeResult(n1, n2, _final_information(spec, n1, n2, params))


# ---------------------------------------------------------------------------
# calendar-time projections


@dataclass(frozen=True)
class CalendarCurves:
    """Information, recruitment, and follow-up proportions over study time."""

    tau: np.ndarray
    info_frac: np.ndarray
    n_frac: np.ndarray
    followup_frac: np.ndarray

    def rows(self):
        return zip(self.tau, self.info_frac, self.n_frac, self.followup_frac)

    def write_csv(self, fh) -> None:
        fh.write("tau,info_frac,n_frac,followup_frac\n")
        for t, i, n, f in self.rows():
            fh.write(f"{t:.6f},{i:.6f},{n:.6f},{f:.6f}\n")


def _information_at(spec, entries1, entries2, tau, params) -> float:
    t1 = spec.exposure.exposure_at(entries1, tau)
    t2 = spec.exposure.exposure_at(entries2, tau)
    try:
        return information_level(t1, t2, params.mu1, params.mu2, params.phi)
    except ZeroInformationError:
        return 0.0


def calendar_curves(
    spec: DesignSpec,
    n1: int,
    n2: int,
    taus,
    params: NbParams | None = None,
) -> CalendarCurves:
    """Deterministic proportion curves versus calendar time.

    Exposures are ``clamp(tau - entry, 0, cap)`` on the mid-quantile entry
    grid; each curve is normalized by its value at the end of the study.
    """
    params = params or spec.params
    taus = np.asarray(taus, dtype=float)
    if (taus < 0).any():
        raise ValueError("calendar times must be non-negative")
    e1 = spec.exposure.entry_times(n1)
    e2 = spec.exposure.entry_times(n2)
    end = spec.exposure.study_end
    i_end = _information_at(spec, e1, e2, end, params)
    t_end = float(spec.exposure.exposure_at(e1, end).sum() + spec.exposure.exposure_at(e2, end).sum())

    info = np.array([_information_at(spec, e1, e2, t, params) for t in taus])
    n_at = np.array([(e1 <= t).sum() + (e2 <= t).sum() for t in taus], dtype=float)
    t_at = np.array(
        [spec.exposure.exposure_at(e1, t).sum() + spec.exposure.exposure_at(e2, t).sum() for t in taus]
    )
    return CalendarCurves(taus, info / i_end, n_at / (n1 + n2), t_at / t_end)


def calendar_time_for_information(
    spec: DesignSpec,
    n1: int,
    n2: int,
    target_fraction: float,
    i_max: float | None = None,
    params: NbParams | None = None,
) -> float:
    """Calendar time at which the information reaches ``target_fraction * i_max``.

    ``i_max`` defaults to the information at the end of the study.  Raises if
    the exposure pattern saturates below the target.
    """
    if not 0 < target_fraction <= 1:
        raise ValueError("target fraction must be in (0, 1]")
    params = params or spec.params
    e1 = spec.exposure.entry_times(n1)
    e2 = spec.exposure.entry_times(n2)
    end = spec.exposure.study_end
    i_end = _information_at(spec, e1, e2, end, params)
    base = i_max if i_max is not None else i_end
    target = target_fraction * base
    if i_end < target - 1e-12:
        raise ValueError(
            f"information saturates at {i_end:.6g} below the target {target:.6g}"
        )
    if i_end <= target:
        return end
    return float(
        brentq(
            lambda tau: _information_at(spec, e1, e2, tau, params) - target,
            0.0,
            end,
            xtol=1e-9,
        )
    )
