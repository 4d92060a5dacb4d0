"""Local gradient descent with periodic model averaging.

Every round each node pulls the current server point, runs its own
gradient descent for a fixed number of steps (or until its gradient is
small), and the server averages the node results.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DivergenceError, UnsupportedAuditError
from .objectives import Objective, smoothness_estimate

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 1_000_000
AUDIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LocalUpdatePolicy:
    """How one node descends between communications.

    Exactly one of ``steps`` (fixed-steps mode) and ``grad_tol`` (threshold
    mode) is set. Threshold mode stands in for an unbounded number of local
    steps: it always takes at least one step, then stops at the first
    iterate whose squared gradient norm is at most ``grad_tol``, or after
    ``max_steps``.
    """

    step_size: float
    steps: int | None = None
    grad_tol: float | None = None
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if (self.steps is None) == (self.grad_tol is None):
            raise ValueError("set exactly one of steps and grad_tol")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @classmethod
    def fixed(cls, steps: int, step_size: float) -> "LocalUpdatePolicy":
        return cls(step_size=step_size, steps=steps)

    @classmethod
    def threshold(cls, grad_tol: float, step_size: float, max_steps: int = DEFAULT_MAX_STEPS):
        return cls(step_size=step_size, grad_tol=grad_tol, max_steps=max_steps)

    @property
    def mode(self) -> str:
        return "fixed" if self.steps is not None else "threshold"

    def alpha(self, smoothness: float) -> float:
        """``eta * (2/L - eta)``, the per-step decrement weight."""
        return self.step_size * (2.0 / smoothness - self.step_size)


class LocalResult(NamedTuple):
    final: np.ndarray
    grad_sq: list
    capped: bool


def local_descent(oracle: Objective, x0, policy: LocalUpdatePolicy,
                  smoothness: float | None = None) -> LocalResult:
    """Run one node's gradient descent from ``x0``.

    ``grad_sq`` holds the squared gradient norm at every iterate a step was
    taken from, so its length is the number of steps used.
    """
    if smoothness is not None and not policy.alpha(smoothness) > 0:
        raise ValueError(f"step size {policy.step_size} is not below 2/L = {2 / smoothness}")
    x = np.array(x0, dtype=float)
    eta = policy.step_size
    trail = []
    limit = policy.steps if policy.steps is not None else policy.max_steps
    tol = policy.grad_tol
    capped = False
    t = 0
    while True:
        g = oracle.gradient(x)
        gsq = float(g @ g)
        if not math.isfinite(gsq):
            raise DivergenceError(f"non-finite gradient at local step {t}", step=t)
        if tol is not None and t > 0 and gsq <= tol:
            break
        if t == limit:
            capped = tol is not None
            break
        x = x - eta * g
        trail.append(gsq)
        t += 1
        if policy.steps is not None and t == limit:
            break
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite iterate after local step {t}", step=t)
    return LocalResult(x, trail, capped)


class Termination(str, Enum):
    ROUND_LIMIT = "reached-round-limit"
    CONVERGED = "global-gradient-below"
    STALLED = "stalled"


@dataclass(frozen=True)
class StopRule:
    """``max_rounds`` communications at most; stop early once ``||grad f||^2 <= epsilon``."""

    max_rounds: int = 1000
    epsilon: float | None = None
    stall_rounds: int = 10
    stall_rtol: float = 1e-16


@dataclass
class RoundRecord:
    """State at server point ``x_n`` and the local work done from it.

    The decrement fields and ``local_steps_used`` describe the round that
    maps ``x_n`` to ``x_{n+1}``; they are empty on the final record.
    """

    round_index: int
    iterate: np.ndarray
    global_gradient_sq: float
    global_loss: float
    distance_to_S: float | None = None
    decrement_lhs: float | None = None
    decrement_rhs: float | None = None
    local_steps_used: tuple = ()
    cumulative_local_steps: int = 0
    capped_nodes: tuple = ()


@dataclass
class SimulationRun:
    rounds: list
    termination: Termination
    config_digest: str = ""
    rng_seed: int | None = None
    alphas: tuple = ()
    smoothness: tuple = ()

    @property
    def grad_sq(self) -> np.ndarray:
        return np.array([r.global_gradient_sq for r in self.rounds])

    @property
    def distances(self) -> np.ndarray | None:
        if not self.rounds or self.rounds[0].distance_to_S is None:
            return None
        return np.array([r.distance_to_S for r in self.rounds])

    def rounds_to(self, epsilon: float) -> int | None:
        """First round index with ``||grad f(x_n)||^2 <= epsilon``, if any."""
        for r in self.rounds:
            if r.global_gradient_sq <= epsilon:
                return r.round_index
        return None


def pairwise_mean(points: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of ``points`` by pairwise summation in index order."""

    def total(lo, hi):
        if hi - lo == 1:
            return points[lo]
        mid = (lo + hi) // 2
        return total(lo, mid) + total(mid, hi)

    return total(0, len(points)) / len(points)


def default_policies(oracles: Sequence[Objective], steps: int | None = None,
                     grad_tol: float | None = None, max_steps: int = DEFAULT_MAX_STEPS,
                     step_sizes: Sequence[float] | float | None = None) -> list:
    """One policy per node with ``eta_i = 1/L_i`` unless overridden."""
    if step_sizes is None or np.isscalar(step_sizes):
        step_sizes = [step_sizes] * len(oracles)
    out = []
    for o, eta in zip(oracles, step_sizes):
        if eta is None:
            eta = 1.0 / smoothness_estimate(o)
        out.append(LocalUpdatePolicy(step_size=float(eta), steps=steps, grad_tol=grad_tol,
                                     max_steps=max_steps))
    return out


def run(oracles: Sequence[Objective], x0, policies: Sequence[LocalUpdatePolicy],
        stop: StopRule = StopRule(), solution_set=None, threads: int = 1,
        config_digest: str = "", seed: int | None = None) -> SimulationRun:
    """Simulate rounds of local descent and server averaging.

    ``solution_set`` is the common optimal set (anything with ``distance``);
    when given, distances and the decrement audit columns are recorded.
    """
    oracles = list(oracles)
    if not oracles:
        raise ValueError("empty node list")
    if len(policies) != len(oracles):
        raise ValueError("need one policy per node")
    dim = oracles[0].dimension
    if any(o.dimension != dim for o in oracles):
        raise ValueError("oracles do not share a dimension")
    m = len(oracles)
    Ls = [smoothness_estimate(o) for o in oracles]
    alphas = [p.alpha(L) for p, L in zip(policies, Ls)]
    for i, a in enumerate(alphas):
        if not a > 0:
            raise ValueError(f"node {i}: step size {policies[i].step_size} is not below 2/L = {2 / Ls[i]}")

    x = np.array(x0, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({dim},)")

    def descend(i, x_start, n):
        try:
            return local_descent(oracles[i], x_start, policies[i])
        except DivergenceError as exc:
            raise DivergenceError(f"node {i}, round {n}: {exc}", step=exc.step, node=i,
                                  round_index=n) from exc

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    records = []
    cumulative = 0
    stall_count = 0
    watched_prev = None
    dist = solution_set.distance(x) if solution_set is not None else None
    try:
        n = 0
        while True:
            g = pairwise_mean([o.gradient(x) for o in oracles])
            gsq = float(g @ g)
            loss = sum(o.value(x) for o in oracles) / m
            rec = RoundRecord(n, x.copy(), gsq, loss, dist, cumulative_local_steps=cumulative)
            records.append(rec)
            if not math.isfinite(gsq):
                raise DivergenceError(f"round {n}: non-finite global gradient", round_index=n)

            watched = dist if dist is not None else gsq
            if watched_prev is not None and abs(watched - watched_prev) <= stop.stall_rtol * abs(watched_prev):
                stall_count += 1
            else:
                stall_count = 0
            watched_prev = watched

            if stop.epsilon is not None and gsq <= stop.epsilon:
                termination = Termination.CONVERGED
                break
            if stall_count >= stop.stall_rounds:
                termination = Termination.STALLED
                break
            if n >= stop.max_rounds:
                termination = Termination.ROUND_LIMIT
                break

            if pool is None:
                results = [descend(i, x, n) for i in range(m)]
            else:
                results = list(pool.map(descend, range(m), [x] * m, [n] * m))
            x = pairwise_mean([r.final for r in results])

            steps = tuple(len(r.grad_sq) for r in results)
            cumulative += sum(steps)
            rec.local_steps_used = steps
            rec.cumulative_local_steps = cumulative
            rec.capped_nodes = tuple(i for i, r in enumerate(results) if r.capped)
            if rec.capped_nodes:
                log.warning("round %d: nodes %s hit the local step cap", n, rec.capped_nodes)
            rec.decrement_rhs = sum(a * math.fsum(r.grad_sq) for a, r in zip(alphas, results)) / m
            if solution_set is not None:
                dist_next = solution_set.distance(x)
                rec.decrement_lhs = dist ** 2 - dist_next ** 2
                dist = dist_next
            n += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return SimulationRun(records, termination, config_digest, seed, tuple(alphas), tuple(Ls))


class AuditRow(NamedTuple):
    round_index: int
    lhs: float
    rhs: float
    satisfied: bool


def audit_decrement(run: SimulationRun, tol: float = AUDIT_TOLERANCE) -> list:
    """Check ``d(x_n,S)^2 - d(x_{n+1},S)^2 >= rhs_n`` round by round.

    The slack is ``tol * max(1, d(x_n,S)^2)``.
    """
    rows = []
    for rec in run.rounds:
        if rec.decrement_rhs is None:
            continue
        if rec.distance_to_S is None or rec.decrement_lhs is None:
            raise UnsupportedAuditError("run has no distance-to-S telemetry")
        slack = tol * max(1.0, rec.distance_to_S ** 2)
        rows.append(AuditRow(rec.round_index, rec.decrement_lhs, rec.decrement_rhs,
                             rec.decrement_lhs >= rec.decrement_rhs - slack))
    return rows


def check_decrement(dist, rhs, tol: float = AUDIT_TOLERANCE) -> list:
    """Audit rows rebuilt from a distance column and a right-hand-side column.

    ``rhs[n]`` may be ``None`` on the final row.
    """
    rows = []
    for n in range(len(dist) - 1):
        if rhs[n] is None:
            continue
        lhs = dist[n] ** 2 - dist[n + 1] ** 2
        slack = tol * max(1.0, dist[n] ** 2)
        rows.append(AuditRow(n, lhs, rhs[n], lhs >= rhs[n] - slack))
    return rows


@dataclass(frozen=True)
class DecayReport:
    """Straight-line fits of ``log y`` against ``log n`` and against ``n``."""

    loglog_slope: float
    loglog_intercept: float
    loglog_residual: float
    semilog_slope: float
    semilog_intercept: float
    semilog_residual: float
    n_points: int
    window: tuple = field(default=())

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _line_fit(x, y):
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def fit_gradient_decay(values, window: tuple | None = None, start_index: int = 0) -> DecayReport:
    """Fit power-law and geometric decay to a positive series indexed from ``start_index``.

    ``window`` is an inclusive ``(lo, hi)`` index range. The log-log fit
    needs indices >= 1, so index 0 is dropped from the window.
    """
    if isinstance(values, SimulationRun):
        values = values.grad_sq
    y = np.asarray(values, dtype=float)
    n = np.arange(start_index, start_index + y.size)
    lo, hi = window if window is not None else (n[0], n[-1])
    sel = (n >= max(lo, 1)) & (n <= hi)
    n, y = n[sel], y[sel]
    if y.size < 10:
        raise ValueError(f"need at least 10 points in the window, got {y.size}")
    if np.any(y <= 0):
        raise ValueError("values must be positive")
    ly = np.log(y)
    ll = _line_fit(np.log(n), ly)
    sl = _line_fit(n.astype(float), ly)
    return DecayReport(*ll, *sl, int(y.size), (int(n[0]), int(n[-1])))
