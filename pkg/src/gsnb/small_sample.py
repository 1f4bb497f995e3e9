"""Small-sample adjustment: restricted information with multivariate t criticals.

The Wald-type test inflates the type I error for small trials.  Two combined
modifications limit the inflation: the information level in the statistic is
estimated by maximum likelihood restricted to the null region
``mu1 >= delta*mu2``, and critical values are taken from a multivariate
Student's t reference instead of the normal one.  The t law used here is the
classical one: the canonical normal vector divided by a single chi-based
scale shared across looks, with degrees of freedom equal to the number of
patients under follow-up at the first look.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr
from scipy.stats import chi
from scipy.stats import t as student_t

from .boundary import (
    GRID_SPAN,
    MASS_TOL,
    PROB_TOL,
    REFINE_TOL,
    Boundary,
    IntegrationError,
    LookSchedule,
    SpendingFunction,
    _clamp_info,
    _leggauss,
    _norm_pdf,
    spending_levels,
)

__all__ = ["TBoundarySpec", "TPathDensity", "solve_t_boundary", "modified_wald_test"]

DEFAULT_INNER_NODES = 256
DEFAULT_OUTER_NODES = 64
MAX_OUTER_NODES = 512


@dataclass(frozen=True)
class TBoundarySpec:
    """Boundary inputs plus the degrees of freedom of the t reference."""

    spending: SpendingFunction
    schedule: LookSchedule
    df: int
    final_is_terminal: bool = True

    def __post_init__(self):
        if not (isinstance(self.df, int) and self.df >= 1):
            raise ValueError("degrees of freedom must be a positive integer")


@lru_cache(maxsize=128)
def _scale_quadrature(df: int, outer_nodes: int):
    """Gauss-Legendre rule for E[h(S)], S = sqrt(chi2_df/df).

    Integrates h(s) * f_S(s) directly on the quantile-truncated support; the
    integrand is analytic there, so the rule converges spectrally (the
    cdf-transform alternative converges only algebraically because the
    quantile function has endpoint derivative singularities).
    """
    scale = 1.0 / math.sqrt(df)
    lo = chi.ppf(1e-14, df) * scale
    hi = chi.isf(1e-14, df) * scale
    x, w = _leggauss(outer_nodes)
    s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w * chi.pdf(s / scale, df) / scale
    weights = weights / weights.sum()   # truncation leaves ~1e-14 mass outside
    return s, weights


class TPathDensity:
    """Continuation sub-densities under the multivariate t null law.

    Conditional on the shared scale S the statistics are the canonical normal
    path with boundary ``c_k * S``; one normal recursion therefore runs per
    quadrature node of S, and exit probabilities are averaged over the scale
    distribution.  API mirrors ``boundary.PathDensity`` (drift is zero: the t
    reference is only used under the null).
    """

    def __init__(self, df: int, nodes: int = DEFAULT_INNER_NODES,
                 outer_nodes: int = DEFAULT_OUTER_NODES, span: float = GRID_SPAN,
                 mass_tol: float = MASS_TOL, kernel_resolution: float = 0.0):
        if df < 1:
            raise ValueError("degrees of freedom must be >= 1")
        self.df = int(df)
        self.nodes = nodes
        self.span = span
        self.mass_tol = mass_tol
        self.kernel_resolution = kernel_resolution
        self.scales, self.scale_weights = _scale_quadrature(self.df, outer_nodes)
        m = self.scales.shape[0]
        self.info = 0.0
        self._u = None                      # (m, nodes) grids per scale node
        self._wg = None                     # weights * density, same shape
        self._exited = np.zeros(m)

    @property
    def at_first_look(self) -> bool:
        return self._u is None

    @property
    def exited(self) -> float:
        return float(np.sum(self.scale_weights * self._exited))

    def continuation_mass(self) -> float:
        if self._u is None:
            return 1.0
        return float(np.sum(self.scale_weights * self._wg.sum(axis=1)))

    def _exit_by_scale(self, info: float, critical: float) -> np.ndarray:
        lower = critical * math.sqrt(info) * self.scales  # per-scale boundary
        delta = info - self.info
        if self._u is None:
            return ndtr(lower / math.sqrt(info))
        if delta <= 1e-12:
            return np.sum(self._wg * (self._u <= lower[:, None]), axis=1)
        z = (lower[:, None] - self._u) / math.sqrt(delta)
        return np.sum(self._wg * ndtr(z), axis=1)

    def _negligible(self, delta: float) -> bool:
        if delta <= 1e-12:
            return True
        if self._u is None or not self.kernel_resolution:
            return False
        spacing = float((self._u[:, -1] - self._u[:, 0]).max()) / self._u.shape[1]
        return math.sqrt(delta) < self.kernel_resolution * spacing

    def exit_probability(self, info: float, critical: float) -> float:
        if info < self.info:
            raise ValueError("information must be non-decreasing across looks")
        if critical == -math.inf:
            return 0.0
        return float(np.sum(self.scale_weights * self._exit_by_scale(info, critical)))

    def commit(self, info: float, critical: float) -> float:
        delta = info - self.info
        sd = math.sqrt(info)

        if self._u is not None and self._negligible(delta):
            # no resolvable information gain: cut the retained density; the
            # exit mass per scale node is the mass removed (exact bookkeeping)
            p_scale = np.zeros_like(self.scales)
            if math.isfinite(critical):
                lower = critical * sd * self.scales
                before = self._wg.sum(axis=1)
                self._wg = np.where(self._u > lower[:, None], self._wg, 0.0)
                p_scale = before - self._wg.sum(axis=1)
            self._exited += p_scale
            self.info = info
            return float(np.sum(self.scale_weights * p_scale))

        p_scale = (
            self._exit_by_scale(info, critical)
            if critical > -math.inf
            else np.zeros_like(self.scales)
        )
        lo = (
            np.maximum(critical * sd * self.scales, -self.span * sd)
            if math.isfinite(critical)
            else np.full_like(self.scales, -self.span * sd)
        )
        hi = self.span * sd
        lo = np.minimum(lo, hi - 1e-12)     # empty continuation degenerates safely

        x, w = _leggauss(self.nodes)
        u = 0.5 * (hi - lo[:, None]) * x[None, :] + 0.5 * (hi + lo[:, None])
        wq = 0.5 * (hi - lo[:, None]) * w[None, :]
        if self._u is None:
            g = _norm_pdf(u / sd) / sd
        else:
            sdelta = math.sqrt(delta)
            kernel = _norm_pdf((u[:, :, None] - self._u[:, None, :]) / sdelta) / sdelta
            g = np.einsum("mij,mj->mi", kernel, self._wg)
        self._u, self._wg = u, wq * g

        self._exited += p_scale
        self.info = info
        p = float(np.sum(self.scale_weights * p_scale))
        total = self.exited + self.continuation_mass()
        if abs(total - 1.0) > self.mass_tol:
            raise IntegrationError(f"mass balance violated: total probability {total!r}")
        return p

    def solve_critical(self, info: float, pi: float) -> float:
        """Critical value spending ``pi`` at this look; state is unchanged."""
        if pi <= 0.0:
            return -math.inf
        if self._u is None:
            # T_1 = Z/S is exactly Student t with df degrees of freedom
            return float(student_t.ppf(pi, self.df))
        if self.continuation_mass() <= pi:
            raise IntegrationError("spending level exceeds remaining continuation mass")
        c = brentq(
            lambda cc: self.exit_probability(info, cc) - pi,
            -40.0, 10.0, xtol=1e-12, rtol=8.9e-16,
        )
        if not self._negligible(info - self.info) and abs(self.exit_probability(info, c) - pi) > PROB_TOL:
            raise IntegrationError("critical value root did not reach tolerance")
        return float(c)

    def solve_and_commit(self, info: float, pi: float) -> float:
        c = self.solve_critical(info, pi)
        self.commit(info, c)
        return c


def solve_t_boundary(
    spec: TBoundarySpec,
    nodes: int = DEFAULT_INNER_NODES,
    outer_nodes: int = DEFAULT_OUTER_NODES,
) -> Boundary:
    """Critical values spending the per-look levels under the multivariate t law.

    The scale quadrature is doubled until every critical value is stable
    within ``REFINE_TOL``.
    """
    clamped, _ = _clamp_info(spec.schedule.info_levels)
    sched = LookSchedule(tuple(clamped), spec.schedule.i_max)
    pi = spending_levels(spec.spending, sched, spec.final_is_terminal)

    def solve(m):
        density = TPathDensity(spec.df, nodes=nodes, outer_nodes=m)
        return np.array(
            [density.solve_and_commit(i, p) for i, p in zip(sched.info_levels, pi)]
        )

    crit = solve(outer_nodes)
    m = outer_nodes
    while m < MAX_OUTER_NODES:
        m *= 2
        refined = solve(m)
        finite = np.isfinite(crit) & np.isfinite(refined)
        if np.array_equal(np.isfinite(crit), np.isfinite(refined)) and (
            not finite.any() or np.max(np.abs(crit[finite] - refined[finite])) < REFINE_TOL
        ):
            crit = refined
            break
        crit = refined
    else:
        raise IntegrationError("t critical values did not stabilize under refinement")

    return Boundary(
        tuple(pi), tuple(crit), sched, spec.spending.alpha, spec.spending,
        df=spec.df, method="multivariate_t",
    )


def modified_wald_test(snapshots, spending: SpendingFunction, i_max: float,
                       n_looks: int, delta: float = 1.0):
    """Run the small-sample test over cumulative per-look data snapshots.

    At each look the statistic uses the restricted-MLE information estimate and
    is compared against t-reference criticals with degrees of freedom equal to
    the number of patients under follow-up at the first look.  Returns one
    ``LookResult`` per snapshot.
    """
    from .trial_sim import InterimAnalyzer  # local import to avoid a cycle

    analyzer = InterimAnalyzer(
        spending=spending, i_max=i_max, n_looks=n_looks, delta=delta,
        method="modified_small_sample",
    )
    return [analyzer.analyze(data) for data in snapshots]
