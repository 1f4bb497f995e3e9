"""Error-spending boundaries for one-sided group sequential tests.

Critical values are computed under the canonical joint distribution of the
sequential Wald statistics (multivariate normal with covariance
``sqrt(I_k1/I_k2)``) by recursive numerical integration: the sub-density of
the cumulative score statistic restricted to the continuation region is
carried forward look by look on a Gauss-Legendre grid.  The test is lower
tailed throughout: the null is rejected at look k when ``T_k <= c_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri
from scipy.stats import norm

_SQRT_2PI = math.sqrt(2.0 * math.pi)

__all__ = [
    "IntegrationError",
    "SpendingFunction",
    "pocock_type",
    "obrien_fleming_type",
    "custom_table",
    "spend",
    "LookSchedule",
    "Boundary",
    "CrossingProbabilities",
    "PathDensity",
    "spending_levels",
    "crossing_probability",
    "solve_boundary",
]

DEFAULT_NODES = 256
GRID_SPAN = 8.0            # grid half-width in standard deviations
PROB_TOL = 1e-8            # root-finding tolerance on exit probabilities
MASS_TOL = 1e-9            # mass-balance guard
REFINE_TOL = 1e-6          # node doubling stops when criticals move less
MAX_NODES = 4096


class IntegrationError(RuntimeError):
    """The quadrature grid failed a mass-balance or stability check."""


# ---------------------------------------------------------------------------
# spending functions


@dataclass(frozen=True)
class SpendingFunction:
    """Non-decreasing map from information fraction to cumulative alpha spent.

    ``kind`` is one of ``pocock_type``, ``obrien_fleming_type`` or
    ``custom_table``; custom tables are interpolated linearly and anchored at
    (0, 0) and (1, alpha).
    """

    kind: str
    alpha: float
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.kind not in ("pocock_type", "obrien_fleming_type", "custom_table"):
            raise ValueError(f"unknown spending kind {self.kind!r}")
        if self.kind == "custom_table":
            if not self.table:
                raise ValueError("custom_table requires interpolation points")
            ts = [p[0] for p in self.table]
            vs = [p[1] for p in self.table]
            if any(t < 0 or t > 1 for t in ts) or ts != sorted(ts):
                raise ValueError("table abscissae must be sorted within [0, 1]")
            if any(v < 0 or v > self.alpha for v in vs):
                raise ValueError("table values must lie in [0, alpha]")
            if any(b < a for a, b in zip(vs, vs[1:])):
                raise ValueError("table values must be non-decreasing")
        # spec check: non-decreasing on a 1e-3 grid with f(0)=0, f(>=1)=alpha
        grid = np.linspace(0.0, 1.0, 1001)
        vals = self(grid)
        if vals[0] != 0.0 or abs(vals[-1] - self.alpha) > 1e-12 or (np.diff(vals) < -1e-15).any():
            raise ValueError("spending function must be non-decreasing with f(0)=0, f(1)=alpha")

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if (t_arr < 0).any():
            raise ValueError("information fraction must be non-negative")
        if self.kind == "pocock_type":
            out = np.minimum(self.alpha * np.log1p((math.e - 1.0) * t_arr), self.alpha)
        elif self.kind == "obrien_fleming_type":
            q = norm.ppf(1.0 - self.alpha / 2.0)
            with np.errstate(divide="ignore"):
                raw = 2.0 * norm.sf(q / np.sqrt(np.where(t_arr > 0, t_arr, np.nan)))
            out = np.where(t_arr <= 0, 0.0, np.minimum(raw, self.alpha))
        else:
            xs = np.array([0.0] + [p[0] for p in self.table] + [1.0])
            ys = np.array([0.0] + [p[1] for p in self.table] + [self.alpha])
            out = np.interp(np.minimum(t_arr, 1.0), xs, ys)
        return float(out) if t_arr.ndim == 0 else out


def pocock_type(alpha: float) -> SpendingFunction:
    """Spending function giving Pocock-like boundaries: a*log(1+(e-1)t)."""
    return SpendingFunction("pocock_type", alpha)


def obrien_fleming_type(alpha: float) -> SpendingFunction:
    """Spending function giving O'Brien-Fleming-like boundaries."""
    return SpendingFunction("obrien_fleming_type", alpha)


def custom_table(alpha: float, points: Sequence[tuple[float, float]]) -> SpendingFunction:
    return SpendingFunction("custom_table", alpha, tuple((float(a), float(b)) for a, b in points))


def spend(f: SpendingFunction, t) -> float:
    """Cumulative alpha spent at information fraction ``t``."""
    return f(t)


# ---------------------------------------------------------------------------
# schedules and boundaries


@dataclass(frozen=True)
class LookSchedule:
    """Information levels of the planned or observed looks."""

    info_levels: tuple[float, ...]
    i_max: float

    def __post_init__(self):
        object.__setattr__(self, "info_levels", tuple(float(v) for v in self.info_levels))
        if not self.info_levels:
            raise ValueError("schedule needs at least one look")
        if self.info_levels[0] <= 0:
            raise ValueError("information levels must be positive")
        if any(b < a for a, b in zip(self.info_levels, self.info_levels[1:])):
            raise ValueError("information levels must be non-decreasing")
        if not self.i_max > 0:
            raise ValueError("maximum information must be positive")

    @property
    def n_looks(self) -> int:
        return len(self.info_levels)

    @property
    def fractions(self) -> np.ndarray:
        return np.asarray(self.info_levels) / self.i_max


def _clamp_info(levels) -> tuple[np.ndarray, np.ndarray]:
    """Running-maximum clamp; returns (clamped levels, decreased-look mask)."""
    raw = np.asarray(levels, dtype=float)
    clamped = np.maximum.accumulate(raw)
    return clamped, raw < clamped


@dataclass(frozen=True)
class Boundary:
    """Spent levels and critical values for each look of a sequential test."""

    spent: tuple[float, ...]
    criticals: tuple[float, ...]
    schedule: LookSchedule
    alpha: float
    spending: SpendingFunction | None = None
    df: int | None = None
    method: str = "normal"

    def to_json(self) -> dict:
        out = {
            "alpha": self.alpha,
            "spending": self.spending.kind if self.spending else None,
            "fractions": list(self.schedule.fractions),
            "spent": list(self.spent),
            "criticals": list(self.criticals),
            "i_max": self.schedule.i_max,
        }
        if self.method != "normal":
            out["method"] = self.method
            out["df"] = self.df
        return out

    def format_table(self) -> str:
        lines = [f"{'look':>4} {'fraction':>10} {'info':>12} {'spent':>12} {'critical':>10}"]
        for k, (w, i, p, c) in enumerate(
            zip(self.schedule.fractions, self.schedule.info_levels, self.spent, self.criticals),
            start=1,
        ):
            crit = f"{c:10.4f}" if math.isfinite(c) else f"{'-inf':>10}"
            lines.append(f"{k:>4} {w:>10.4f} {i:>12.4f} {p:>12.6f} {crit}")
        return "\n".join(lines)


class CrossingProbabilities(NamedTuple):
    by_look: np.ndarray
    total: float


# ---------------------------------------------------------------------------
# recursive integration over the continuation region


@lru_cache(maxsize=32)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gauss_legendre(a: float, b: float, n: int):
    x, w = _leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _norm_pdf(z):
    return np.exp(-0.5 * z * z) / _SQRT_2PI


class PathDensity:
    """Sub-density of the cumulative score statistic on the continuation region.

    The score process ``S_k = T_k * sqrt(I_k)`` has independent normal
    increments with mean ``drift * (I_k - I_{k-1})``.  After each look the
    density is restricted to ``S_k > c_k * sqrt(I_k)`` and propagated to the
    next look with the normal increment kernel on a Gauss-Legendre grid.
    """

    def __init__(self, drift: float = 0.0, nodes: int = DEFAULT_NODES, span: float = GRID_SPAN,
                 mass_tol: float = MASS_TOL, kernel_resolution: float = 0.0):
        self.drift = drift
        self.nodes = nodes
        self.span = span
        self.mass_tol = mass_tol
        # when the increment kernel is narrower than this many grid spacings
        # the quadrature cannot resolve it; such increments are treated as no
        # information gain (used by the simulation analyzers, where the error
        # is far below Monte Carlo resolution; design-time increments resolve)
        self.kernel_resolution = kernel_resolution
        self.info = 0.0
        self.exited = 0.0
        self._u = None      # grid on the score scale
        self._w = None      # quadrature weights
        self._g = None      # sub-density values

    @property
    def at_first_look(self) -> bool:
        return self._u is None

    def continuation_mass(self) -> float:
        if self._u is None:
            return 1.0
        return float(np.sum(self._w * self._g))

    def _negligible(self, delta: float) -> bool:
        if delta <= 1e-12:
            return True
        if self._u is None or not self.kernel_resolution or self._u.size < 2:
            return False
        spacing = (self._u[-1] - self._u[0]) / self._u.size
        return math.sqrt(delta) < self.kernel_resolution * spacing

    def exit_probability(self, info: float, critical: float) -> float:
        """Probability of first falling at or below ``critical`` at this look."""
        if info < self.info:
            raise ValueError("information must be non-decreasing across looks")
        if critical == -math.inf:
            return 0.0
        lower = critical * math.sqrt(info)
        delta = info - self.info
        if self._u is None:
            return float(ndtr((lower - self.drift * info) / math.sqrt(info)))
        if delta <= 1e-12:
            return float(np.sum(self._w * self._g * (self._u <= lower)))
        z = (lower - self._u - self.drift * delta) / math.sqrt(delta)
        return float(np.sum(self._w * self._g * ndtr(z)))

    def commit(self, info: float, critical: float) -> float:
        """Advance one look at the given critical value; returns the exit mass."""
        delta = info - self.info
        mean = self.drift * info
        sd = math.sqrt(info)
        lower = critical * sd if math.isfinite(critical) else -math.inf
        lo = max(lower, mean - self.span * sd)
        hi = mean + self.span * sd

        if self._u is not None and self._negligible(delta):
            # no resolvable information gain: keep the density, apply the cut;
            # the exit mass is the mass removed, keeping the books exact
            p = 0.0
            if lower > -math.inf:
                before = self.continuation_mass()
                keep = self._u > lower
                self._u, self._w, self._g = self._u[keep], self._w[keep], self._g[keep]
                p = before - self.continuation_mass()
            self.exited += p
            self.info = info
            return p

        p = self.exit_probability(info, critical)
        if lo >= hi:
            # continuation region is empty; all remaining mass exits
            p = self.continuation_mass() if self._u is not None else 1.0
            self._u = np.zeros(0)
            self._w = np.zeros(0)
            self._g = np.zeros(0)
        else:
            u, w = _gauss_legendre(lo, hi, self.nodes)
            if self._u is None:
                g = _norm_pdf((u - mean) / sd) / sd
            else:
                sdelta = math.sqrt(delta)
                kernel = _norm_pdf((u[:, None] - self._u[None, :] - self.drift * delta) / sdelta) / sdelta
                g = kernel @ (self._w * self._g)
            self._u, self._w, self._g = u, w, g

        self.exited += p
        self.info = info
        total = self.exited + self.continuation_mass()
        if abs(total - 1.0) > self.mass_tol:
            raise IntegrationError(f"mass balance violated: total probability {total!r}")
        return p

    def solve_critical(self, info: float, pi: float) -> float:
        """Critical value whose exit probability at this look equals ``pi``.

        Does not advance the state; ``pi <= 0`` yields -inf (skipped look).
        The first look uses the closed-form normal quantile; later looks
        bracket the exit probability, which is monotone in the critical value,
        and refine with Brent's method to ``PROB_TOL``.
        """
        if pi <= 0.0:
            return -math.inf
        if self._u is None:
            return float(ndtri(pi) + self.drift * math.sqrt(info))
        if self.continuation_mass() <= pi:
            raise IntegrationError("spending level exceeds remaining continuation mass")
        c = brentq(
            lambda cc: self.exit_probability(info, cc) - pi,
            -15.0, 10.0, xtol=1e-12, rtol=8.9e-16,
        )
        # below kernel resolution the exit probability is step-like in c and
        # cannot hit pi exactly; accept the bracketing root there
        if not self._negligible(info - self.info) and abs(self.exit_probability(info, c) - pi) > PROB_TOL:
            raise IntegrationError("critical value root did not reach tolerance")
        return float(c)

    def solve_and_commit(self, info: float, pi: float) -> float:
        """Find the critical value spending exactly ``pi`` and advance."""
        c = self.solve_critical(info, pi)
        self.commit(info, c)
        return c


# ---------------------------------------------------------------------------
# public operations


def spending_levels(
    f: SpendingFunction, schedule: LookSchedule, final_is_terminal: bool = True
) -> np.ndarray:
    """Per-look significance levels from the spending function.

    Looks whose information did not increase are clamped to the previous level
    and receive a zero increment.  With ``final_is_terminal`` the last look
    spends whatever remains of the global alpha, so the levels sum to alpha.
    """
    clamped, decreased = _clamp_info(schedule.info_levels)
    w = clamped / schedule.i_max
    cum = np.atleast_1d(f(w))
    pi = np.diff(np.concatenate([[0.0], cum]))
    if final_is_terminal:
        prev = float(f(w[-2])) if len(w) > 1 else 0.0
        pi[-1] = f.alpha - prev
    pi[decreased] = 0.0
    return np.maximum(pi, 0.0)


def crossing_probability(
    criticals,
    schedule: LookSchedule,
    drift: float,
    nodes: int = DEFAULT_NODES,
) -> CrossingProbabilities:
    """Lower-crossing probabilities of a boundary under the given drift.

    ``drift`` is the mean slope of the score process per unit information; for
    the rate-ratio test it equals ``log(theta/delta)``.
    """
    criticals = tuple(float(c) for c in criticals)
    if len(criticals) != schedule.n_looks:
        raise ValueError("one critical value per look is required")
    density = PathDensity(drift, nodes)
    by_look = np.array([density.commit(i, c) for i, c in zip(schedule.info_levels, criticals)])
    return CrossingProbabilities(by_look, float(by_look.sum()))


def solve_boundary(
    f: SpendingFunction,
    schedule: LookSchedule,
    final_is_terminal: bool = True,
    nodes: int = DEFAULT_NODES,
) -> Boundary:
    """Successively solve the critical values that spend the per-look levels.

    The node count is doubled until every critical value is stable within
    ``REFINE_TOL`` (with Gauss-Legendre quadrature the first doubling already
    agrees to far better than that).
    """
    clamped, _ = _clamp_info(schedule.info_levels)
    sched = LookSchedule(tuple(clamped), schedule.i_max)
    pi = spending_levels(f, sched, final_is_terminal)

    def solve(n):
        density = PathDensity(0.0, n)
        return np.array(
            [density.solve_and_commit(i, p) for i, p in zip(sched.info_levels, pi)]
        )

    crit = solve(nodes)
    n = nodes
    while n < MAX_NODES:
        n *= 2
        refined = solve(n)
        finite = np.isfinite(crit) & np.isfinite(refined)
        if np.array_equal(np.isfinite(crit), np.isfinite(refined)) and (
            not finite.any() or np.max(np.abs(crit[finite] - refined[finite])) < REFINE_TOL
        ):
            crit = refined
            break
        crit = refined
    else:
        raise IntegrationError("critical values did not stabilize under grid refinement")

    return Boundary(tuple(pi), tuple(crit), sched, f.alpha, f)
