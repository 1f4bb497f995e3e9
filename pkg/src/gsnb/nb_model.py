"""Two-sample negative binomial model for recurrent-event count data.

Counts are gamma-mixed Poisson: each patient carries a latent event rate drawn
from a gamma distribution with shape ``1/phi``, so the count over an exposure
time ``t`` is marginally negative binomial with mean ``t*mu`` and variance
``t*mu*(1 + phi*t*mu)``.  The module provides the probability mass function,
log-likelihood, maximum-likelihood and restricted fitting via Newton-Raphson
on the log-rate/shape score equations, method-of-moments rate estimators,
Fisher information for the log-rates, the harmonic information level for the
log-rate difference, and path sampling with the correct within-patient
dependence across successive data looks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "EstimationError",
    "NonConvergenceError",
    "ZeroEventsError",
    "ZeroInformationError",
    "NbParams",
    "PatientRecord",
    "TrialData",
    "MleFit",
    "MomRates",
    "PatientRateModel",
    "nb_pmf",
    "log_likelihood",
    "fit_mle",
    "fit_restricted_mle",
    "fisher_info_beta",
    "information_level",
    "estimate_information",
    "plugin_information",
    "mom_rates",
    "sample_counts",
    "sample_trial_paths",
]

SCORE_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 100
MAX_HALVINGS = 20

# Moment-based starting value for the shape is clamped to this range.
_PHI_START_MIN = 1e-4
_PHI_START_MAX = 1e3
# Interior iterates must keep the shape strictly positive; fits that collapse
# below the trigger are compared against the Poisson boundary.
_PHI_FLOOR = 1e-12
_PHI_BOUNDARY_TRIGGER = 1e-6


class EstimationError(Exception):
    """Base class for model fitting and information estimation failures."""


class NonConvergenceError(EstimationError):
    """Newton-Raphson did not converge within the iteration budget."""


class ZeroEventsError(EstimationError):
    """An arm has no events (or no exposed patients); the rate MLE is -inf."""

    def __init__(self, arm: int, message: str | None = None):
        self.arm = arm
        super().__init__(message or f"arm {arm} has zero events; log-rate estimate is -inf")


class ZeroInformationError(EstimationError):
    """An arm contributes zero Fisher information (no positive exposure)."""


@dataclass(frozen=True)
class NbParams:
    """Model parameters: arm event rates, shared shape, randomization ratio."""

    mu1: float
    mu2: float
    phi: float
    ratio_k: float = 1.0

    def __post_init__(self):
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("rates mu1, mu2 must be positive")
        if self.phi < 0:
            raise ValueError("shape phi must be non-negative")
        if not self.ratio_k > 0:
            raise ValueError("randomization ratio must be positive")

    @property
    def theta(self) -> float:
        """Rate ratio mu1/mu2."""
        return self.mu1 / self.mu2

    @property
    def log_rates(self) -> tuple[float, float]:
        return math.log(self.mu1), math.log(self.mu2)

    def overdispersion_index(self, arm: int) -> float:
        """Index of overdispersion D = 1 + mu*phi for the given arm."""
        mu = self.mu1 if arm == 1 else self.mu2
        return 1.0 + mu * self.phi


@dataclass(frozen=True)
class PatientRecord:
    """One patient's cumulative follow-up and event count at a data look."""

    arm: int
    entry_time: float
    exposure: float
    count: int


class TrialData:
    """Per-patient cumulative exposures and event counts at a single look.

    Stored column-wise as numpy arrays for fast likelihood evaluation; use
    :meth:`records` for a row view.
    """

    __slots__ = ("arm", "entry_time", "exposure", "count")

    def __init__(self, arm, entry_time, exposure, count):
        self.arm = np.asarray(arm, dtype=np.int64)
        self.entry_time = np.asarray(entry_time, dtype=float)
        self.exposure = np.asarray(exposure, dtype=float)
        self.count = np.asarray(count, dtype=np.int64)
        self._validate()

    def _validate(self):
        n = self.arm.shape[0]
        if not (self.entry_time.shape[0] == self.exposure.shape[0] == self.count.shape[0] == n):
            raise ValueError("column lengths differ")
        if not np.isin(self.arm, (1, 2)).all():
            raise ValueError("arm must be 1 or 2")
        if (self.exposure < 0).any() or (self.entry_time < 0).any():
            raise ValueError("entry times and exposures must be non-negative")
        if (self.count < 0).any():
            raise ValueError("counts must be non-negative")
        if (self.count[self.exposure == 0] != 0).any():
            raise ValueError("records with zero exposure must have zero counts")

    @classmethod
    def from_records(cls, records: Iterable[PatientRecord]) -> "TrialData":
        recs = list(records)
        return cls(
            [r.arm for r in recs],
            [r.entry_time for r in recs],
            [r.exposure for r in recs],
            [r.count for r in recs],
        )

    @classmethod
    def from_arm_arrays(cls, exposure1, count1, exposure2, count2,
                        entry1=None, entry2=None) -> "TrialData":
        exposure1 = np.asarray(exposure1, dtype=float)
        exposure2 = np.asarray(exposure2, dtype=float)
        n1, n2 = exposure1.shape[0], exposure2.shape[0]
        if entry1 is None:
            entry1 = np.zeros(n1)
        if entry2 is None:
            entry2 = np.zeros(n2)
        return cls(
            np.concatenate([np.ones(n1, dtype=np.int64), np.full(n2, 2, dtype=np.int64)]),
            np.concatenate([entry1, entry2]),
            np.concatenate([exposure1, exposure2]),
            np.concatenate([np.asarray(count1), np.asarray(count2)]),
        )

    @classmethod
    def from_csv(cls, path) -> "TrialData":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"arm", "entry_time", "exposure", "count"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(
                    f"{path}: expected CSV header arm,entry_time,exposure,count"
                )
            rows = [(int(r["arm"]), float(r["entry_time"]), float(r["exposure"]), int(r["count"]))
                    for r in reader]
        if not rows:
            raise ValueError(f"{path}: no data rows")
        arm, entry, exp, cnt = zip(*rows)
        return cls(arm, entry, exp, cnt)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["arm", "entry_time", "exposure", "count"])
            for a, e, t, y in zip(self.arm, self.entry_time, self.exposure, self.count):
                writer.writerow([int(a), repr(float(e)), repr(float(t)), int(y)])

    def records(self) -> list[PatientRecord]:
        return [PatientRecord(int(a), float(e), float(t), int(y))
                for a, e, t, y in zip(self.arm, self.entry_time, self.exposure, self.count)]

    def arm_arrays(self, arm: int, exposed_only: bool = True):
        """Exposure and count arrays for one arm (by default only t > 0)."""
        mask = self.arm == arm
        if exposed_only:
            mask = mask & (self.exposure > 0)
        return self.exposure[mask], self.count[mask]

    @property
    def n_records(self) -> int:
        return int(self.arm.shape[0])

    def n_exposed(self) -> int:
        """Number of patients with positive follow-up, both arms."""
        return int(np.count_nonzero(self.exposure > 0))

    def __len__(self) -> int:
        return self.n_records


@dataclass(frozen=True)
class MleFit:
    """Fitted log-rates and shape with the attained log-likelihood."""

    beta1: float
    beta2: float
    phi: float
    loglik: float
    converged: bool
    iterations: int

    @property
    def mu1(self) -> float:
        return math.exp(self.beta1)

    @property
    def mu2(self) -> float:
        return math.exp(self.beta2)

    @property
    def theta(self) -> float:
        return math.exp(self.beta1 - self.beta2)

    def to_json(self) -> dict:
        return {
            "beta1": self.beta1,
            "beta2": self.beta2,
            "phi": self.phi,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class MomRates:
    """Method-of-moments rate estimates per arm.

    ``pooled`` is total events over total exposure; ``mean`` is the average of
    per-patient event rates over patients with positive exposure.  The two
    coincide when exposures within the arm are identical.
    """

    rate1_pooled: float
    rate1_mean: float
    rate2_pooled: float
    rate2_mean: float


@dataclass(frozen=True)
class PatientRateModel:
    """Gamma frailty for patient-level event rates in one arm.

    For ``phi > 0`` rates are gamma with shape ``1/phi`` and rate ``1/(phi*mu)``
    (mean ``mu``, variance ``phi*mu**2``); ``phi = 0`` degenerates to the
    constant rate ``mu``.
    """

    mu: float
    phi: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("rate must be positive")
        if self.phi < 0:
            raise ValueError("shape must be non-negative")

    def sample_rates(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.phi == 0:
            return np.full(n, self.mu)
        return rng.gamma(shape=1.0 / self.phi, scale=self.phi * self.mu, size=n)


# ---------------------------------------------------------------------------
# density and likelihood


def _log_pmf(y: np.ndarray, t: np.ndarray, mu: float, phi: float) -> np.ndarray:
    """Log pmf via log Gamma(y+1/phi) - log Gamma(1/phi) = sum log1p(l*phi).

    The finite-sum form is exact for integer counts and immune to the
    catastrophic cancellation the gamma-ratio suffers for tiny ``phi``; it
    degrades continuously to the Poisson log pmf at ``phi = 0``.
    """
    m = t * mu
    if phi < 1e-12:
        # including subnormal phi, where 1/phi overflows; the substitution
        # error is O(phi * y^2), negligible at this threshold
        return y * np.log(m) - m - gammaln(y + 1.0)
    y_int = np.asarray(y, dtype=np.int64)
    ymax = int(y_int.max()) if y_int.size else 0
    cums = np.empty(ymax + 1)
    cums[0] = 0.0
    if ymax:
        np.cumsum(np.log1p(phi * np.arange(ymax, dtype=float)), out=cums[1:])
    lg = np.log1p(phi * m)
    return cums[y_int] - gammaln(np.asarray(y, dtype=float) + 1.0) + y * np.log(m) - lg / phi - y * lg


def nb_pmf(y, t: float, mu: float, phi: float):
    """Probability of observing ``y`` events over exposure ``t``.

    Evaluated through log-gamma for overflow safety; ``phi = 0`` falls back to
    the Poisson pmf with mean ``t*mu``.  ``y`` may be an array.
    """
    y_arr = np.asarray(y)
    if np.any(y_arr < 0) or not np.issubdtype(y_arr.dtype, np.integer) and np.any(y_arr != np.floor(y_arr)):
        raise ValueError("count must be a non-negative integer")
    if t <= 0 or mu <= 0:
        raise ValueError("exposure and rate must be positive")
    if phi < 0:
        raise ValueError("shape must be non-negative")
    out = np.exp(_log_pmf(y_arr.astype(float), np.asarray(t, dtype=float), mu, phi))
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def log_likelihood(data: TrialData, beta1: float, beta2: float, phi: float) -> float:
    """Joint log-likelihood of both arms; zero-exposure records contribute 0."""
    if phi < 0:
        raise ValueError("shape must be non-negative")
    total = 0.0
    for arm, beta in ((1, beta1), (2, beta2)):
        t, y = data.arm_arrays(arm)
        if t.size:
            total += float(np.sum(_log_pmf(y.astype(float), t, math.exp(beta), phi)))
    return total


# ---------------------------------------------------------------------------
# score equations and Newton-Raphson fitting
#
# The three score equations in (beta1, beta2, phi) are, per arm i with
# m = t*exp(beta_i):
#   S_i   = sum (y - m) / (1 + phi*m)
#   S_phi = sum over both arms of
#           -sum_{l=0}^{y-1} 1/(phi + l*phi^2) + y/phi
#           + log(1 + phi*m)/phi^2 - (y*phi + 1)*m / (phi + phi^2*m)
# The finite sum in S_phi is evaluated exactly via cumulative sums.


def _phi_series(y: np.ndarray, phi: float):
    """Per-record finite sums sum_{l<y} 1/(phi+l*phi^2) and their phi-derivative."""
    ymax = int(y.max()) if y.size else 0
    if ymax == 0:
        z = np.zeros(y.shape)
        return z, z
    l = np.arange(ymax, dtype=float)
    base = 1.0 + l * phi
    cs = np.empty(ymax + 1)
    cs[0] = 0.0
    np.cumsum(1.0 / base, out=cs[1:])
    dcs = np.empty(ymax + 1)
    dcs[0] = 0.0
    np.cumsum((1.0 + 2.0 * l * phi) / (base * base), out=dcs[1:])
    return cs[y] / phi, dcs[y] / phi**2


class _ArmData:
    __slots__ = ("t", "y", "y_int", "sum_y", "sum_t")

    def __init__(self, t, y):
        self.t = t
        self.y_int = y.astype(np.int64)
        self.y = y.astype(float)
        self.sum_y = float(self.y.sum())
        self.sum_t = float(t.sum())


def _arm_terms(arm: _ArmData, beta: float, phi: float):
    """Score and Hessian contributions of one arm in a single pass."""
    y = arm.y
    m = arm.t * math.exp(beta)
    denom = 1.0 + phi * m
    inv = 1.0 / denom
    inv2 = inv * inv
    m_inv2 = m * inv2
    resid = y - m
    s_beta = (resid * inv).sum()
    h_bb = -(m_inv2 + phi * (y * m_inv2)).sum()
    h_bphi = -(m_inv2 * resid).sum()

    s_ser, ds_ser = _phi_series(arm.y_int, phi)
    lg = np.log1p(phi * m)
    inv_phi = 1.0 / phi
    s_phi = (
        -s_ser.sum()
        + inv_phi * arm.sum_y
        + inv_phi**2 * lg.sum()
        - inv_phi * ((y * phi + 1.0) * m * inv).sum()
    )
    h_pp = (
        ds_ser.sum()
        - inv_phi**2 * arm.sum_y
        + inv_phi**2 * (m * inv).sum()
        - 2.0 * inv_phi**3 * lg.sum()
        + inv_phi**2 * (m_inv2 * (y * (phi * phi) * m + 2.0 * phi * m + 1.0)).sum()
    )
    return float(s_beta), float(s_phi), float(h_bb), float(h_bphi), float(h_pp)


def _loglik_arms(arms: Sequence[_ArmData], betas: Sequence[float], phi: float) -> float:
    total = 0.0
    for arm, beta in zip(arms, betas):
        total += float(np.sum(_log_pmf(arm.y, arm.t, math.exp(beta), phi)))
    return total


def _score_and_hessian(arms, betas, phi):
    """Full 3x3 system for the free parameterization (beta1, beta2, phi)."""
    s = np.zeros(3)
    h = np.zeros((3, 3))
    for i, (arm, beta) in enumerate(zip(arms, betas)):
        s_b, s_p, h_bb, h_bp, h_pp = _arm_terms(arm, beta, phi)
        s[i] = s_b
        s[2] += s_p
        h[i, i] = h_bb
        h[i, 2] = h[2, i] = h_bp
        h[2, 2] += h_pp
    return s, h


def _score_and_hessian_restricted(arms, beta2, phi, log_delta):
    """2x2 system on (beta2, phi) with beta1 = beta2 + log(delta)."""
    s = np.zeros(2)
    h = np.zeros((2, 2))
    for arm, beta in zip(arms, (beta2 + log_delta, beta2)):
        s_b, s_p, h_bb, h_bp, h_pp = _arm_terms(arm, beta, phi)
        s[0] += s_b
        s[1] += s_p
        h[0, 0] += h_bb
        h[0, 1] += h_bp
        h[1, 1] += h_pp
    h[1, 0] = h[0, 1]
    return s, h


def _poisson_boundary_fit(arms, iterations: int) -> MleFit:
    """Closed-form fit on the phi = 0 boundary (per-arm Poisson rates)."""
    betas = [math.log(a.sum_y / a.sum_t) for a in arms]
    ll = _loglik_arms(arms, betas, 0.0)
    return MleFit(betas[0], betas[1], 0.0, ll, True, iterations)


def _newton(arms, x0, system, loglik, max_iter):
    """Damped Newton ascent; returns (x, loglik, iterations, hit_boundary)."""
    x = np.array(x0, dtype=float)
    ll = loglik(x)
    hit_boundary = False
    for it in range(1, max_iter + 1):
        s, h = system(x)
        try:
            step = np.linalg.solve(h, -s)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, -s, rcond=None)[0]
        if np.max(np.abs(s)) < SCORE_TOL and np.max(np.abs(step)) < STEP_TOL:
            return x, ll, it, hit_boundary
        if x[-1] + step[-1] <= 0:
            hit_boundary = True
        scale = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            xn = x + scale * step
            if xn[-1] > _PHI_FLOOR:
                lln = loglik(xn)
                if np.isfinite(lln) and lln >= ll - 1e-12:
                    x, ll = xn, lln
                    accepted = True
                    break
            scale *= 0.5
        if not accepted:
            # No admissible ascent step left: either the maximizer sits on the
            # phi = 0 boundary, or we are stuck.
            if hit_boundary or x[-1] < _PHI_BOUNDARY_TRIGGER:
                return x, ll, it, True
            raise NonConvergenceError(
                f"step damping exhausted after {it} iterations (|score|={np.max(np.abs(s)):.2e})"
            )
    raise NonConvergenceError(f"no convergence in {max_iter} iterations")


def _prepare_arms(data: TrialData) -> list[_ArmData]:
    arms = []
    for arm_no in (1, 2):
        t, y = data.arm_arrays(arm_no)
        if t.size == 0:
            raise ZeroEventsError(arm_no, f"arm {arm_no} has no exposed patients")
        arm = _ArmData(t, y)
        if arm.sum_y == 0:
            raise ZeroEventsError(arm_no)
        arms.append(arm)
    return arms


def _phi_moment_start(arms: Sequence[_ArmData]) -> float:
    """Pooled moment estimate of the shape, clamped to a sane range."""
    num = 0.0
    den = 0.0
    for arm in arms:
        m = arm.t * (arm.sum_y / arm.sum_t)
        num += float(np.sum((arm.y - m) ** 2 - m))
        den += float(np.sum(m**2))
    phi0 = num / den if den > 0 else 1.0
    return min(max(phi0, _PHI_START_MIN), _PHI_START_MAX)


def fit_mle(data: TrialData, max_iter: int = MAX_ITER) -> MleFit:
    """Maximum likelihood fit of (beta1, beta2, phi) by damped Newton-Raphson.

    Starting values are the pooled method-of-moments rates and a pooled moment
    match for the shape.  When the Newton iteration is drawn to ``phi <= 0``
    the closed-form Poisson boundary fit is evaluated and the higher-likelihood
    solution returned.

    Raises ``ZeroEventsError`` if an arm has no events and
    ``NonConvergenceError`` if the iteration stalls.
    """
    arms = _prepare_arms(data)
    x0 = (
        math.log(arms[0].sum_y / arms[0].sum_t),
        math.log(arms[1].sum_y / arms[1].sum_t),
        _phi_moment_start(arms),
    )

    def system(x):
        return _score_and_hessian(arms, (x[0], x[1]), x[2])

    def loglik(x):
        return _loglik_arms(arms, (x[0], x[1]), x[2])

    x, ll, it, boundary = _newton(arms, x0, system, loglik, max_iter)
    fit = MleFit(float(x[0]), float(x[1]), float(x[2]), float(ll), True, it)
    if boundary or x[2] < _PHI_BOUNDARY_TRIGGER:
        pois = _poisson_boundary_fit(arms, it)
        if pois.loglik >= fit.loglik:
            return pois
    return fit


def fit_restricted_mle(data: TrialData, delta: float, max_iter: int = MAX_ITER) -> MleFit:
    """Maximum likelihood fit restricted to the null region ``mu1 >= delta*mu2``.

    Returns the unrestricted fit when it already satisfies the constraint;
    otherwise maximizes on the boundary ``beta1 = beta2 + log(delta)``.
    """
    if not delta > 0:
        raise ValueError("margin delta must be positive")
    return _restrict_fit(data, fit_mle(data, max_iter), delta, max_iter)


def _restrict_fit(data: TrialData, fit: MleFit, delta: float, max_iter: int = MAX_ITER) -> MleFit:
    """Boundary refit given an existing unrestricted fit (shared with monitors)."""
    log_delta = math.log(delta)
    if fit.beta1 - fit.beta2 >= log_delta:
        return fit
    arms = _prepare_arms(data)
    mu2_0 = (arms[0].sum_y + arms[1].sum_y) / (delta * arms[0].sum_t + arms[1].sum_t)
    x0 = (math.log(mu2_0), max(fit.phi, _PHI_START_MIN))

    def system(x):
        return _score_and_hessian_restricted(arms, x[0], x[1], log_delta)

    def loglik(x):
        return _loglik_arms(arms, (x[0] + log_delta, x[0]), x[1])

    x, ll, it, boundary = _newton(arms, x0, system, loglik, max_iter)
    result = MleFit(float(x[0] + log_delta), float(x[0]), float(x[1]), float(ll), True, it)
    if boundary or x[1] < _PHI_BOUNDARY_TRIGGER:
        beta2 = math.log(mu2_0)
        ll0 = _loglik_arms(arms, (beta2 + log_delta, beta2), 0.0)
        if ll0 >= result.loglik:
            result = MleFit(beta2 + log_delta, beta2, 0.0, ll0, True, it)
    return result


# ---------------------------------------------------------------------------
# information


def fisher_info_beta(exposures, mu: float, phi: float) -> float:
    """Expected Fisher information for the log-rate: sum t*mu/(1+phi*t*mu)."""
    t = np.asarray(exposures, dtype=float)
    if (t < 0).any():
        raise ValueError("exposures must be non-negative")
    if mu <= 0:
        raise ValueError("rate must be positive")
    if phi < 0:
        raise ValueError("shape must be non-negative")
    m = t * mu
    return float(np.sum(m / (1.0 + phi * m)))


def information_level(exposures1, exposures2, mu1: float, mu2: float, phi: float) -> float:
    """Harmonic combination of the two arms' Fisher informations."""
    i1 = fisher_info_beta(exposures1, mu1, phi)
    i2 = fisher_info_beta(exposures2, mu2, phi)
    if i1 <= 0 or i2 <= 0:
        raise ZeroInformationError("an arm contributes zero information")
    return i1 * i2 / (i1 + i2)


def plugin_information(data: TrialData, fit: MleFit) -> float:
    """Information level at the observed exposures with fitted parameters."""
    t1, _ = data.arm_arrays(1)
    t2, _ = data.arm_arrays(2)
    return information_level(t1, t2, fit.mu1, fit.mu2, fit.phi)


def estimate_information(data: TrialData, restricted: bool = False, delta: float = 1.0) -> float:
    """Plug-in information estimate from the (possibly restricted) MLE."""
    fit = fit_restricted_mle(data, delta) if restricted else fit_mle(data)
    return plugin_information(data, fit)


def mom_rates(data: TrialData) -> MomRates:
    """Method-of-moments rate estimates, both variants, both arms."""
    out = []
    for arm_no in (1, 2):
        t, y = data.arm_arrays(arm_no)
        if t.sum() <= 0:
            raise ValueError(f"arm {arm_no} has zero total exposure")
        out.append(float(y.sum() / t.sum()))
        out.append(float(np.mean(y / t)))
    return MomRates(out[0], out[1], out[2], out[3])


# ---------------------------------------------------------------------------
# sampling


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_counts(mu: float, phi: float, t: float, size: int, rng=None) -> np.ndarray:
    """Draw marginal negative binomial counts for exposure ``t``."""
    rng = _as_rng(rng)
    lam = PatientRateModel(mu, phi).sample_rates(rng, size)
    return rng.poisson(lam * t)


def sample_trial_paths(
    model1: PatientRateModel,
    model2: PatientRateModel,
    increments1,
    increments2,
    entry1=None,
    entry2=None,
    rng=None,
) -> list[TrialData]:
    """Simulate cumulative count paths over K looks for both arms.

    ``increments*`` are ``(n_patients, K)`` arrays of per-look exposure
    increments.  Each patient's latent rate is drawn once from the gamma
    frailty and look-to-look count increments are conditionally Poisson, which
    yields the negative binomial marginal at every look together with the
    within-patient dependence across looks.  Returns one ``TrialData`` snapshot
    per look.
    """
    rng = _as_rng(rng)
    inc1 = np.atleast_2d(np.asarray(increments1, dtype=float))
    inc2 = np.atleast_2d(np.asarray(increments2, dtype=float))
    if (inc1 < 0).any() or (inc2 < 0).any():
        raise ValueError("exposure increments must be non-negative")
    if inc1.shape[1] != inc2.shape[1]:
        raise ValueError("arms must have the same number of looks")

    lam1 = model1.sample_rates(rng, inc1.shape[0])
    lam2 = model2.sample_rates(rng, inc2.shape[0])
    counts1 = rng.poisson(lam1[:, None] * inc1).cumsum(axis=1)
    counts2 = rng.poisson(lam2[:, None] * inc2).cumsum(axis=1)
    expo1 = inc1.cumsum(axis=1)
    expo2 = inc2.cumsum(axis=1)

    return [
        TrialData.from_arm_arrays(
            expo1[:, k], counts1[:, k], expo2[:, k], counts2[:, k], entry1, entry2
        )
        for k in range(inc1.shape[1])
    ]
