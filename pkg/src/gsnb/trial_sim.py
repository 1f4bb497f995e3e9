"""Monte Carlo engine for group sequential trials with count outcomes.

Each replication draws uniform entry times, generates gamma-frailty Poisson
count paths, and analyzes the cumulative data at looks scheduled at the
calendar times where the planned information levels are expected under the
generating truth.  Interim analyses recalculate the spending levels and
critical values from plug-in information estimates, freezing each look's
estimate once made; estimated information that decreases is clamped and the
look is skipped.  Replications use counter-based seed substreams, so results
are bit-identical regardless of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import planning
from .boundary import LookSchedule, PathDensity, SpendingFunction
from .nb_model import (
    EstimationError,
    MleFit,
    NbParams,
    PatientRateModel,
    TrialData,
    _restrict_fit,
    fit_mle,
    plugin_information,
)
from .planning import DesignSpec, ExposurePattern
from .small_sample import TPathDensity

__all__ = [
    "LookResult",
    "InterimAnalyzer",
    "SimConfig",
    "TrialOutcome",
    "OperatingCharacteristics",
    "run_replication",
    "operating_characteristics",
    "scenario_grid",
]

METHODS = ("standard_wald", "modified_small_sample")

# Lighter grids than the design-time defaults; plenty for per-replication
# critical values, whose Monte Carlo error dominates.
SIM_NODES = 64
SIM_OUTER_NODES = 24


@dataclass(frozen=True)
class LookResult:
    """Outcome of one interim (or final) analysis."""

    look: int
    tested: bool
    reject: bool
    info: float | None = None
    pi: float | None = None
    critical: float | None = None
    statistic: float | None = None
    fit: MleFit | None = None
    restricted_fit: MleFit | None = None
    df: int | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out = {
            "look": self.look,
            "tested": self.tested,
            "reject": self.reject,
            "info": self.info,
            "pi": self.pi,
            "critical": self.critical,
            "statistic": self.statistic,
            "df": self.df,
            "error": self.error,
        }
        if self.fit is not None:
            out["fit"] = self.fit.to_json()
        if self.restricted_fit is not None:
            out["restricted_fit"] = self.restricted_fit.to_json()
        return out


class InterimAnalyzer:
    """Sequential plug-in analysis of cumulative data snapshots.

    Call :meth:`analyze` once per look with the cumulative data.  The analyzer
    estimates the information level (restricted to the null for the
    small-sample method), recalculates the spending level and the critical
    value from the estimates frozen at their own looks, and evaluates the
    Wald-type statistic.  Failed fits leave the look untested and the trial
    continuing.
    """

    def __init__(
        self,
        *,
        spending: SpendingFunction,
        i_max: float,
        n_looks: int,
        delta: float = 1.0,
        method: str = "standard_wald",
        nodes: int = SIM_NODES,
        outer_nodes: int = SIM_OUTER_NODES,
    ):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if n_looks < 1 or i_max <= 0 or delta <= 0:
            raise ValueError("invalid analysis configuration")
        self.spending = spending
        self.i_max = i_max
        self.n_looks = n_looks
        self.delta = delta
        self.method = method
        self.nodes = nodes
        self.outer_nodes = outer_nodes
        self.df: int | None = None
        self._k = 0
        self._prev_info: float | None = None
        self._density = None

    # per-look quadrature settings: estimated information can move in
    # arbitrarily small increments, so increments narrower than the grid can
    # resolve are treated as no gain and the mass guard is relaxed to a level
    # still far below Monte Carlo resolution
    MASS_TOL = 1e-4
    KERNEL_RESOLUTION = 1.3

    def _make_density(self, data: TrialData):
        if self.method == "modified_small_sample":
            self.df = max(1, data.n_exposed())
            return TPathDensity(
                self.df, nodes=self.nodes, outer_nodes=self.outer_nodes,
                mass_tol=self.MASS_TOL, kernel_resolution=self.KERNEL_RESOLUTION,
            )
        return PathDensity(
            0.0, nodes=self.nodes,
            mass_tol=self.MASS_TOL, kernel_resolution=self.KERNEL_RESOLUTION,
        )

    def analyze(self, data: TrialData) -> LookResult:
        if self._k >= self.n_looks:
            raise ValueError("all looks have already been analyzed")
        self._k += 1
        k = self._k
        final = k == self.n_looks
        if self._density is None:
            self._density = self._make_density(data)

        restricted = self.method == "modified_small_sample"
        try:
            fit = fit_mle(data)
            rfit = _restrict_fit(data, fit, self.delta) if restricted else None
            info = plugin_information(data, rfit if restricted else fit)
        except EstimationError as err:
            return LookResult(k, tested=False, reject=False, df=self.df, error=str(err))

        prev = self._prev_info
        if prev is not None and info <= prev:
            # no information gain: clamp and skip the test at this look
            if not final:
                self._density.commit(prev, -math.inf)
            return LookResult(
                k, tested=False, reject=False, info=prev, pi=0.0,
                critical=-math.inf, fit=fit, restricted_fit=rfit, df=self.df,
            )

        f = self.spending
        spent_prev = float(f(prev / self.i_max)) if prev is not None else 0.0
        if final:
            pi = f.alpha - spent_prev
        else:
            pi = float(f(info / self.i_max)) - spent_prev
        pi = max(pi, 0.0)

        critical = self._density.solve_critical(info, pi)
        if not final:
            # the density past the last look is never used again
            self._density.commit(info, critical)
        self._prev_info = info
        statistic = float((fit.beta1 - fit.beta2 - math.log(self.delta)) * math.sqrt(info))
        tested = pi > 0.0
        reject = bool(tested and statistic <= critical)
        return LookResult(
            k, tested=tested, reject=reject, info=info, pi=pi, critical=critical,
            statistic=statistic, fit=fit, restricted_fit=rfit, df=self.df,
        )


# ---------------------------------------------------------------------------
# simulation configuration


@dataclass(frozen=True)
class SimConfig:
    """One simulation scenario: design, generating truth, and bookkeeping.

    ``i_max`` is the operating maximum information used for spending fractions
    (for powered designs, the information achieved at the planned sample
    size); when omitted it defaults to the end-of-study information under the
    truth, which is the convention for null (size) scenarios.  ``look_times``
    are resolved once per scenario from the truth; call :meth:`resolved`.
    """

    design: DesignSpec
    truth: NbParams
    n1: int
    n2: int
    reps: int
    seed: int
    method: str = "standard_wald"
    i_max: float | None = None
    look_times: tuple[float, ...] | None = None
    scenario_id: str = ""

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("sample sizes must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def resolved(self) -> "SimConfig":
        """Fill in ``i_max`` and the theoretical look calendar times."""
        if self.i_max is not None and self.look_times is not None:
            return self
        spec = self.design
        i_max = self.i_max
        if i_max is None:
            i_max = planning._final_information(spec, self.n1, self.n2, self.truth)
        times = tuple(
            planning.calendar_time_for_information(
                spec, self.n1, self.n2, w, i_max=i_max, params=self.truth
            )
            for w in spec.fractions
        )
        return replace(self, i_max=i_max, look_times=times)


@dataclass(frozen=True)
class TrialOutcome:
    """Result of a single simulated trial."""

    stop_look: int | None
    rejected: bool
    duration: float
    info_used: float
    n_recruited: int


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Monte Carlo summary over replications."""

    reps: int
    reject_prob_total: float
    reject_prob_by_look: tuple[float, ...]
    p_stop_early: float
    expected_information: float
    expected_sample_size: float
    expected_duration_years: float
    mc_standard_error: float

    CSV_HEADER = "scenario_id,power,p_stop_early,e_info,e_n,e_duration,se"

    def to_csv_row(self, scenario_id: str) -> str:
        return (
            f"{scenario_id},{self.reject_prob_total:.6f},{self.p_stop_early:.6f},"
            f"{self.expected_information:.6f},{self.expected_sample_size:.6f},"
            f"{self.expected_duration_years:.6f},{self.mc_standard_error:.6f}"
        )


def _rep_rng(root_seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=root_seed, spawn_key=(rep,)))


def run_replication(config: SimConfig, rep_seed) -> TrialOutcome:
    """Simulate and analyze one trial.

    ``rep_seed`` may be an integer, a seed sequence, or a generator; the same
    seed reproduces the same outcome bit for bit.
    """
    config = config.resolved()
    rng = rep_seed if isinstance(rep_seed, np.random.Generator) else np.random.default_rng(rep_seed)
    spec = config.design
    pattern = spec.exposure
    taus = np.asarray(config.look_times)
    n_looks = spec.n_looks

    entry1 = pattern.sample_entry_times(config.n1, rng)
    entry2 = pattern.sample_entry_times(config.n2, rng)
    expo1 = np.stack([pattern.exposure_at(entry1, t) for t in taus], axis=1)
    expo2 = np.stack([pattern.exposure_at(entry2, t) for t in taus], axis=1)
    inc1 = np.diff(expo1, axis=1, prepend=0.0)
    inc2 = np.diff(expo2, axis=1, prepend=0.0)

    lam1 = PatientRateModel(config.truth.mu1, config.truth.phi).sample_rates(rng, config.n1)
    lam2 = PatientRateModel(config.truth.mu2, config.truth.phi).sample_rates(rng, config.n2)
    counts1 = rng.poisson(lam1[:, None] * inc1).cumsum(axis=1)
    counts2 = rng.poisson(lam2[:, None] * inc2).cumsum(axis=1)

    analyzer = InterimAnalyzer(
        spending=spec.spending,
        i_max=config.i_max,
        n_looks=n_looks,
        delta=spec.delta,
        method=config.method,
    )

    stop_look = None
    last_info = None
    theory_info = config.i_max * np.asarray(spec.fractions)
    info_used = float(theory_info[-1])
    for k in range(n_looks):
        data = TrialData.from_arm_arrays(
            expo1[:, k], counts1[:, k], expo2[:, k], counts2[:, k], entry1, entry2
        )
        result = analyzer.analyze(data)
        if result.info is not None:
            last_info = result.info
        if result.reject:
            stop_look = k + 1
            break

    at_look = stop_look - 1 if stop_look is not None else n_looks - 1
    duration = float(taus[at_look])
    info_used = last_info if last_info is not None else float(theory_info[at_look])
    n_recruited = int((entry1 <= duration).sum() + (entry2 <= duration).sum())
    return TrialOutcome(stop_look, stop_look is not None, duration, info_used, n_recruited)


def _replicate_range(config: SimConfig, start: int, stop: int) -> list[TrialOutcome]:
    return [run_replication(config, _rep_rng(config.seed, rep)) for rep in range(start, stop)]


def operating_characteristics(config: SimConfig, workers: int = 1) -> OperatingCharacteristics:
    """Aggregate replications into operating characteristics.

    With ``workers > 1`` replications run in separate processes; per-
    replication seed substreams make the result independent of the split.
    """
    config = config.resolved()
    reps = config.reps
    if workers <= 1 or reps < 4 * workers:
        outcomes = _replicate_range(config, 0, reps)
    else:
        chunk = max(1, math.ceil(reps / (workers * 4)))
        ranges = [(s, min(s + chunk, reps)) for s in range(0, reps, chunk)]
        outcomes: list[TrialOutcome] = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_replicate_range, *zip(*[(config, a, b) for a, b in ranges])):
                outcomes.extend(part)

    n_looks = config.design.n_looks
    stops = np.array([o.stop_look if o.stop_look is not None else 0 for o in outcomes])
    by_look = tuple(float(np.mean(stops == k)) for k in range(1, n_looks + 1))
    total = float(sum(by_look))
    early = float(sum(by_look[:-1]))
    return OperatingCharacteristics(
        reps=reps,
        reject_prob_total=total,
        reject_prob_by_look=by_look,
        p_stop_early=early / total if total > 0 else 0.0,
        expected_information=float(np.mean([o.info_used for o in outcomes])),
        expected_sample_size=float(np.mean([o.n_recruited for o in outcomes])),
        expected_duration_years=float(np.mean([o.duration for o in outcomes])),
        mc_standard_error=math.sqrt(max(total * (1.0 - total), 0.0) / reps),
    )


# ---------------------------------------------------------------------------
# scenario grids


def _equal_fractions(n_looks: int) -> tuple[float, ...]:
    return tuple((k + 1) / n_looks for k in range(n_looks))


def scenario_grid(
    *,
    alpha: float,
    delta: float,
    exposure: ExposurePattern,
    phis: Sequence[float],
    looks: Sequence[int],
    spendings: Sequence[SpendingFunction],
    reps: int,
    seed: int,
    method: str = "standard_wald",
    rates: Sequence[float] | None = None,
    sample_sizes: Sequence[int] | None = None,
    powers: Sequence[float] | None = None,
    theta_stars: Sequence[float] | None = None,
    mu2: float | None = None,
    ratio: float = 1.0,
    include_fixed: bool = False,
    label: str = "",
) -> list[SimConfig]:
    """Expand a cross-product of scenario axes into simulation configs.

    Null (size) grids vary ``rates`` and ``sample_sizes`` with the truth on
    the null boundary ``mu1 = delta*mu2``; powered grids vary ``powers`` and
    ``theta_stars`` and derive the sample size and operating information from
    the planning pipeline.  ``include_fixed`` appends single-look designs
    (spending-independent) to a null grid.
    """
    null_mode = rates is not None
    if null_mode == (powers is not None):
        raise ValueError("specify either rates/sample_sizes or powers/theta_stars")
    configs: list[SimConfig] = []

    if null_mode:
        if sample_sizes is None:
            raise ValueError("null grids require sample_sizes")
        combos = [
            (k_looks, spending, phi, mu, n)
            for k_looks in looks
            for spending in spendings
            for phi in phis
            for mu in rates
            for n in sample_sizes
        ]
        if include_fixed:
            combos += [
                (1, spendings[0], phi, mu, n)
                for phi in phis
                for mu in rates
                for n in sample_sizes
            ]
        for k_looks, spending, phi, mu, n in combos:
            design = DesignSpec(
                alpha=alpha, delta=delta, fractions=_equal_fractions(k_looks),
                spending=spending, exposure=exposure, ratio=ratio,
            )
            truth = NbParams(delta * mu, mu, phi, ratio)
            kind = "fixed" if k_looks == 1 else spending.kind
            sid = f"{label}h0-phi{phi:g}-K{k_looks}-n{n}-mu{mu:g}-{kind}"
            configs.append(
                SimConfig(design, truth, n, int(math.ceil(ratio * n)), reps, seed,
                          method=method, scenario_id=sid)
            )
        return configs

    if theta_stars is None or mu2 is None:
        raise ValueError("powered grids require theta_stars and mu2")
    for power in powers:
        for theta in theta_stars:
            for phi in phis:
                for k_looks in looks:
                    for spending in spendings:
                        design = DesignSpec(
                            alpha=alpha, delta=delta,
                            fractions=_equal_fractions(k_looks),
                            spending=spending, exposure=exposure,
                            power=power, theta_star=theta, mu2=mu2, phi=phi,
                            ratio=ratio,
                        )
                        i_req = planning.max_information(design)
                        size = planning.sample_size(design, i_req)
                        sid = (
                            f"{label}h1-pow{power:g}-th{theta:g}-phi{phi:g}"
                            f"-K{k_looks}-{spending.kind}"
                        )
                        configs.append(
                            SimConfig(
                                design, design.params, size.n1, size.n2, reps, seed,
                                method=method, i_max=size.achieved_information,
                                scenario_id=sid,
                            )
                        )
    return configs
