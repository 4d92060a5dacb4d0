"""How many local steps to take per communication.

Local gradient norms are assumed to shrink at least like a decay profile
``h(t)`` (geometric or power law). That turns the per-round decrement into
a bound on rounds-to-tolerance and on total cost, and the cost bound can
be minimized over the local step count ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, NumericFailure

UNDERFLOW_FLOOR = 1e-300
ASYMPTOTIC_CAVEAT = (
    "leading-order small-r approximation; it drops an o(1) term that is not small "
    "unless log(1/r) is large, so use it only as a sanity check"
)


@dataclass(frozen=True)
class DecayModel:
    """``h(t) = beta**t`` (geometric) or ``h(t) = (1 + a t)**(-beta)`` (power law)."""

    kind: str
    beta: float
    a: float | None = None

    def __post_init__(self):
        if self.kind == "geometric":
            if not 0 < self.beta < 1:
                raise DomainError("geometric decay needs beta in (0, 1)")
        elif self.kind == "power_law":
            if self.a is None or not self.a > 0:
                raise DomainError("power-law decay needs a > 0")
            if not self.beta > 1:
                raise DomainError("power-law decay needs beta > 1")
        else:
            raise ValueError(f"unknown decay kind {self.kind!r}")

    @classmethod
    def geometric(cls, beta: float) -> "DecayModel":
        return cls("geometric", beta)

    @classmethod
    def power_law(cls, a: float, beta: float) -> "DecayModel":
        return cls("power_law", beta, a)

    def h(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "geometric":
            return self.beta ** t
        return (1.0 + self.a * t) ** (-self.beta)

    def integral(self, upper: float) -> float:
        """``int_0^upper h(s) ds``."""
        if self.kind == "geometric":
            return (1.0 - self.beta ** upper) / -math.log(self.beta)
        a, b = self.a, self.beta
        return (1.0 - (1.0 + a * upper) ** (1.0 - b)) / (a * (b - 1.0))


@dataclass(frozen=True)
class CostModel:
    """Per-node communication cost, per-step gradient cost, and run constants.

    ``alpha`` is the smallest per-node decrement weight, ``d0_sq`` the
    squared initial distance to the common optimal set, ``epsilon`` the
    target for ``||grad f||^2``.
    """

    comm_cost: float
    grad_cost: float
    nodes: int = 1
    alpha: float = 1.0
    d0_sq: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self):
        for name in ("comm_cost", "alpha", "d0_sq", "epsilon"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.grad_cost < 0:
            raise DomainError("grad_cost must be nonnegative")
        if self.nodes < 1:
            raise DomainError("nodes must be positive")

    @classmethod
    def from_ratio(cls, ratio: float, comm_cost: float = 1.0, **kw) -> "CostModel":
        return cls(comm_cost, ratio * comm_cost, **kw)

    @property
    def ratio(self) -> float:
        return self.grad_cost / self.comm_cost


def _check_steps(T):
    if T < 1 or int(T) != T:
        raise DomainError("T must be a positive integer")
    return int(T)


def partial_sum_h(model: DecayModel, T: int) -> float:
    """``sum_{t=0}^{T-1} h(t)``."""
    T = _check_steps(T)
    if model.kind == "geometric":
        return (1.0 - model.beta ** T) / (1.0 - model.beta)
    return math.fsum(model.h(np.arange(T)))


def partial_sum_bounds(model: DecayModel, T: int) -> tuple:
    """Integral bracket ``(int_0^T h, 1 + int_0^{T-1} h)`` around the partial sum."""
    T = _check_steps(T)
    return model.integral(T), 1.0 + model.integral(T - 1)


def n_star_bound(cost: CostModel, model: DecayModel, T: int) -> float:
    """Upper bound on rounds until ``||grad f(x_n)||^2 <= epsilon``."""
    return cost.d0_sq / (cost.alpha * cost.epsilon * partial_sum_h(model, T))


def total_cost_bound(cost: CostModel, model: DecayModel, T: int) -> float:
    """Upper bound on ``(C_c m + C_g m T) * n*``."""
    return cost.comm_cost * cost.nodes * (1.0 + cost.ratio * T) * n_star_bound(cost, model, T)


def lambert_w_minus(x: float) -> float:
    """Lower real branch of Lambert W: the ``w <= -1`` with ``w e^w = x``.

    Defined for ``x`` in ``[-1/e, 0)``. Seeds from the branch-point series
    near ``-1/e`` and from the logarithmic expansion elsewhere, then runs
    Newton on ``w + log(-w) = log(-x)`` inside a shrinking bracket.
    """
    x = float(x)
    branch = -math.exp(-1.0)
    if not (branch <= x < 0.0) or math.isnan(x):
        raise DomainError(f"lambert_w_minus needs x in [-1/e, 0), got {x!r}")
    if x == branch:
        return -1.0

    target = math.log(-x)

    def g(w):
        return w + math.log(-w) - target

    q = 2.0 * (1.0 + math.e * x)
    if q < 0.5:
        p = -math.sqrt(q)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    else:
        l1 = target
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1

    # g increases on (-inf, -1]; g(-1) = -1 - log(-x) >= 0
    hi = -1.0
    lo = min(w, -2.0)
    while g(lo) > 0:
        lo *= 2.0
        if lo < -1e308:
            raise NumericFailure("could not bracket the lower Lambert branch")
    if not lo <= w <= hi:
        w = 0.5 * (lo + hi)

    for _ in range(200):
        gw = g(w)
        if gw == 0.0:
            return w
        if gw > 0:
            hi = w
        else:
            lo = w
        slope = 1.0 + 1.0 / w
        step = gw / slope if slope != 0 else math.inf
        w_new = w - step
        if not lo < w_new < hi:
            w_new = 0.5 * (lo + hi)
        if abs(w_new - w) <= 4e-16 * abs(w) or hi - lo <= 4e-16 * abs(lo):
            return w_new
        w = w_new
    raise NumericFailure(f"lambert_w_minus did not converge for x={x!r}")


def _linear_cost_shape(beta: float, r: float):
    return lambda T: (1.0 + r * T) / -math.expm1(T * math.log(beta))


def _numeric_minimizer(fun, guess: float) -> float:
    # the cost shapes here are unimodal on T > 0: infinite at 0+, linear growth at infinity
    hi = max(2.0 * guess, 2.0)
    while fun(2.0 * hi) < fun(hi):
        hi *= 2.0
        if hi > 1e15:
            raise NumericFailure("cost curve keeps decreasing; no finite minimizer")
    res = minimize_scalar(fun, bounds=(1e-12, 2.0 * hi), method="bounded",
                          options={"xatol": 1e-10 * max(1.0, hi), "maxiter": 2000})
    return float(res.x)


def t_star_linear_numeric(beta: float, r: float) -> float:
    """Minimizer of ``(1 + r T) / (1 - beta**T)`` by bounded scalar search."""
    _check_linear(beta, r)
    return _numeric_minimizer(_linear_cost_shape(beta, r), t_star_linear_asymptotic(beta, r))


def _check_linear(beta, r):
    if not 0 < beta < 1:
        raise DomainError("beta must lie in (0, 1)")
    if not r > 0:
        raise DomainError("r must be positive")


def t_star_linear(beta: float, r: float) -> float:
    """Cost-minimizing local step count for geometric decay ``beta**t``.

    Closed form through the lower Lambert branch. When ``beta**(1/r)``
    underflows, the stationarity equation is solved numerically instead.
    """
    _check_linear(beta, r)
    log_beta = math.log(beta)
    z = math.exp(log_beta / r)
    if z < UNDERFLOW_FLOOR:
        return _linear_stationary_root(beta, r)
    w = lambert_w_minus(-z / math.e)
    return (1.0 + w) / log_beta - 1.0 / r


def _linear_stationary_root(beta: float, r: float) -> float:
    # d/dT of the cost shape has the sign of g(T); g(0) = log(beta) < 0 and g grows to r
    lb = math.log(beta)

    def g(T):
        bt = math.exp(T * lb)
        return r * -math.expm1(T * lb) + (1.0 + r * T) * bt * lb

    hi = max(1.0, t_star_linear_asymptotic(beta, r))
    while g(hi) <= 0:
        hi *= 2.0
    return float(brentq(g, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def t_star_linear_asymptotic(beta: float, r: float) -> float:
    """``log(1 + log(1/beta)/r) / log(1/beta)``. See ``ASYMPTOTIC_CAVEAT``."""
    _check_linear(beta, r)
    k = -math.log(beta)
    return math.log1p(k / r) / k


def linear_stationarity(beta: float, r: float, T: float) -> float:
    """Relative residual of ``d/dT (1 + rT)/(1 - beta**T) = 0`` at ``T``."""
    bt = beta ** T
    lb = math.log(beta)
    a = r * (1.0 - bt)
    b = (1.0 + r * T) * bt * lb
    return abs(a + b) / max(abs(a), abs(b))


def sublinear_equation(a: float, beta: float, r: float, T: float) -> float:
    """``r((1 + aT)^beta - 1) - a(beta + beta r T - 1)``; zero at the optimum."""
    return r * ((1.0 + a * T) ** beta - 1.0) - a * (beta + beta * r * T - 1.0)


def sublinear_residual(a: float, beta: float, r: float, T: float) -> float:
    """``|sublinear_equation|`` relative to the size of its terms."""
    scale = r * ((1.0 + a * T) ** beta + 1.0) + a * (beta + beta * r * T + 1.0)
    return abs(sublinear_equation(a, beta, r, T)) / scale


def _check_sublinear(a, beta, r):
    if not a > 0:
        raise DomainError("a must be positive")
    if not beta > 1:
        raise DomainError("beta must exceed 1")
    if not r > 0:
        raise DomainError("r must be positive")


def t_star_sublinear(a: float, beta: float, r: float, max_doublings: int = 2000) -> float:
    """Cost-minimizing local step count for power-law decay ``(1 + a t)^(-beta)``.

    The stationarity equation is convex in ``T`` and negative at 0, so it
    has one positive root; a bracket is grown by doubling and the root
    found with Brent's method.
    """
    _check_sublinear(a, beta, r)

    def F(T):
        return sublinear_equation(a, beta, r, T)

    hi = max(1.0, t_star_sublinear_asymptotic(a, beta, r))
    for _ in range(max_doublings):
        if F(hi) > 0:
            break
        hi *= 2.0
    else:
        raise NumericFailure("no sign change found while expanding the bracket")
    grid = np.linspace(0.0, hi, 257)
    signs = np.sign([F(t) for t in grid])
    if np.count_nonzero(np.diff(signs[signs != 0])) != 1:
        raise NumericFailure("bracket does not contain exactly one sign change")
    root = brentq(F, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if sublinear_residual(a, beta, r, root) >= 1e-10:
        raise NumericFailure("root residual above 1e-10")
    return float(root)


def t_star_sublinear_numeric(a: float, beta: float, r: float) -> float:
    """Minimizer of ``(1 + r T) / (1 - (1 + a T)^(1 - beta))`` by bounded search."""
    _check_sublinear(a, beta, r)

    def shape(T):
        return (1.0 + r * T) / -math.expm1((1.0 - beta) * math.log1p(a * T))

    return _numeric_minimizer(shape, t_star_sublinear_asymptotic(a, beta, r))


def t_star_sublinear_asymptotic(a: float, beta: float, r: float) -> float:
    """Small-``r`` form ``((a(beta - 1)/r)^(1/beta) - 1) / a``."""
    _check_sublinear(a, beta, r)
    return ((a * (beta - 1.0) / r) ** (1.0 / beta) - 1.0) / a


def round_t_star(T: float, cost: CostModel, model: DecayModel) -> int:
    """The better of ``floor(T)`` and ``ceil(T)`` under ``total_cost_bound`` (at least 1)."""
    candidates = {max(1, math.floor(T)), max(1, math.ceil(T))}
    return min(sorted(candidates), key=lambda k: total_cost_bound(cost, model, k))


@dataclass(frozen=True)
class DecayFit:
    """Both candidate decay fits on a trajectory, and the one with smaller residual.

    ``model`` is ``None`` when the better fit's parameters fall outside
    the valid decay-model domain (for instance a non-decreasing series).
    """

    kind: str
    model: DecayModel | None
    geometric_beta: float
    geometric_residual: float
    power_a: float
    power_beta: float
    power_residual: float
    n_points: int

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "model"}
        return out


def _fit_line(x, y):
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(np.sqrt(np.mean(resid ** 2)))


def fit_decay_model(trajectory, log_a_bounds: tuple = (0.0, 3.0), grid_points: int = 121,
                    floor_rtol: float = 1e-26) -> DecayFit:
    """Fit geometric and power-law decay to ``trajectory[t]``, ``t = 0, 1, ...``.

    Geometric: ``log y`` linear in ``t``. Power law: ``log y`` linear in
    ``log(1 + a t)``, with ``a`` chosen on a log grid and then refined.
    Residuals are RMS in log space.

    ``a`` is kept at or above 1 by default: as ``a -> 0`` with ``a beta``
    fixed the power law tends to ``exp(-a beta t)``, so a free ``a`` would
    let it absorb any geometric series and win on residual alone. Samples
    from the first one below ``floor_rtol * max`` onward are dropped as
    round-off floor.
    """
    y = np.asarray(trajectory, dtype=float)
    if y.size and np.all(y > 0):
        low = np.flatnonzero(y < floor_rtol * y.max())
        if low.size:
            y = y[:low[0]]
    if y.size < 10:
        raise ValueError("need at least 10 samples")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("samples must be positive and finite")
    t = np.arange(y.size, dtype=float)
    ly = np.log(y)
    (geo_slope, _), geo_res = _fit_line(t, ly)

    def power_resid(log_a):
        return _fit_line(np.log1p(10.0 ** log_a * t), ly)[1]

    grid = np.linspace(*log_a_bounds, grid_points)
    res = np.array([power_resid(v) for v in grid])
    k = int(np.argmin(res))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best = minimize_scalar(power_resid, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    log_a = float(best.x) if best.fun <= res[k] else float(grid[k])
    a = 10.0 ** log_a
    (pow_slope, _), pow_res = _fit_line(np.log1p(a * t), ly)

    geo_beta = math.exp(geo_slope)
    pow_beta = -pow_slope
    kind = "geometric" if geo_res <= pow_res else "power_law"
    try:
        model = DecayModel.geometric(geo_beta) if kind == "geometric" else DecayModel.power_law(a, pow_beta)
    except DomainError:
        model = None
    return DecayFit(kind, model, geo_beta, geo_res, a, pow_beta, pow_res, int(y.size))
