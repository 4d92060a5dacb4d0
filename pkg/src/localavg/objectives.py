"""Local loss oracles and the problem suite used by the convex experiments."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .geometry import AffineSubspace, Ball, HalfSpace, PointSet

MAX_POWER = 4


class Objective(ABC):
    """A smooth local loss ``f_i`` on ``R^d``.

    Subclasses implement ``_value`` and ``_gradient`` on validated input.
    ``optimal_set`` and ``rsc_modulus`` are ``None`` unless known in closed form.
    """

    dimension: int
    optimal_set = None
    rsc_modulus: float | None = None

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DimensionError(f"expected shape ({self.dimension},), got {x.shape}")
        return x

    def value(self, x) -> float:
        return self._value(self._check(x))

    def gradient(self, x) -> np.ndarray:
        return self._gradient(self._check(x))

    @abstractmethod
    def _value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def _gradient(self, x: np.ndarray) -> np.ndarray: ...

    def smoothness(self) -> float | None:
        """Lipschitz constant of the gradient, or ``None`` if not known in closed form."""
        return None


class LeastSquaresProblem(Objective):
    """``(1/(2N)) * sum_r (a_r . x - b_r)^(2l)`` for a design ``A`` (N x d).

    ``power`` is ``l``; 1 gives the mean-square loss, 2 the quartic one.
    For ``l > 1`` the gradient is not globally Lipschitz, so ``smoothness``
    bounds it over the residual box ``|a_r . x - b_r| <= residual_bound``.
    The default box is the residual size at the origin, ``max |b|``.
    """

    def __init__(self, design_matrix, targets, power: int = 1, residual_bound: float | None = None):
        A = np.atleast_2d(np.asarray(design_matrix, dtype=float))
        b = np.asarray(targets, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise DimensionError(f"{A.shape[0]} rows but {b.size} targets")
        if A.shape[0] == 0:
            raise ValueError("design matrix has no rows")
        if int(power) != power or not 1 <= power <= MAX_POWER:
            raise ValueError(f"power must be an integer in 1..{MAX_POWER}")
        A.setflags(write=False)
        b.setflags(write=False)
        self.design_matrix = A
        self.targets = b
        self.power = int(power)
        self.residual_bound = residual_bound
        self.dimension = A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.design_matrix.shape[0]

    def residual(self, x) -> np.ndarray:
        return self.design_matrix @ self._check(x) - self.targets

    def _value(self, x):
        r = self.design_matrix @ x - self.targets
        return float(np.sum(r ** (2 * self.power)) / (2 * self.n_rows))

    def _gradient(self, x):
        r = self.design_matrix @ x - self.targets
        return (self.power / self.n_rows) * (self.design_matrix.T @ r ** (2 * self.power - 1))

    @cached_property
    def _gram_spectrum(self) -> np.ndarray:
        # nonzero spectrum of A^T A equals that of the smaller Gram matrix
        A = self.design_matrix
        g = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
        return np.linalg.eigvalsh(g)

    def smoothness(self) -> float:
        top = float(self._gram_spectrum[-1]) / self.n_rows
        l = self.power
        if l == 1:
            return top
        bound = self.residual_bound
        if bound is None:
            bound = float(np.abs(self.targets).max())
        if bound <= 0:
            bound = 1.0
        return l * (2 * l - 1) * top * bound ** (2 * l - 2)

    @cached_property
    def optimal_set(self) -> AffineSubspace | None:
        try:
            return AffineSubspace.from_equations(self.design_matrix, self.targets)
        except ValueError:
            return None

    @cached_property
    def rsc_modulus(self) -> float | None:
        if self.power != 1 or self.optimal_set is None:
            return None
        try:
            return rsc_modulus_estimate(self)
        except ValueError:
            return None


class BeckSyntheticProblem(Objective):
    """Two-node synthetic problem in the plane.

    Node 1 is the squared distance to the unit disk centred at (0, 1); node 2
    the squared distance to the half-plane ``y <= 0``. The optimal sets meet
    only at the origin and do so tangentially.
    """

    dimension = 2
    _center = np.array([0.0, 1.0])

    def __init__(self, node_index: int):
        if node_index not in (1, 2):
            raise ValueError("node_index must be 1 or 2")
        self.node_index = node_index
        if node_index == 1:
            self.optimal_set = Ball(self._center, 1.0)
        else:
            self.optimal_set = HalfSpace(np.array([0.0, 1.0]), 0.0)
        # ||grad f|| = 2 d(x, S_i) for a squared distance
        self.rsc_modulus = 2.0

    def _value(self, x):
        if self.node_index == 1:
            return max(float(np.hypot(x[0], x[1] - 1.0)) - 1.0, 0.0) ** 2
        return max(float(x[1]), 0.0) ** 2

    def _gradient(self, x):
        if self.node_index == 1:
            v = x - self._center
            r = float(np.hypot(v[0], v[1]))
            if r <= 1.0:
                return np.zeros(2)
            return 2.0 * (r - 1.0) / r * v
        return np.array([0.0, 2.0 * max(float(x[1]), 0.0)])

    def smoothness(self) -> float:
        # gradient of a squared distance to a convex set is 2(I - P), and I - P is 1-Lipschitz
        return 2.0


class Quadratic(Objective):
    """``0.5 * (x - c)^T H (x - c)`` with symmetric PSD ``H``; mostly for tests."""

    def __init__(self, hessian, center=None):
        H = np.atleast_2d(np.asarray(hessian, dtype=float))
        self.hessian = H
        self.dimension = H.shape[0]
        self.center = np.zeros(self.dimension) if center is None else np.asarray(center, float)

    def _value(self, x):
        v = x - self.center
        return 0.5 * float(v @ self.hessian @ v)

    def _gradient(self, x):
        return self.hessian @ (x - self.center)

    def smoothness(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian)[-1])


def evaluate(oracle: Objective, x) -> float:
    return oracle.value(x)


def gradient(oracle: Objective, x) -> np.ndarray:
    return oracle.gradient(x)


def sampled_smoothness(oracle: Objective, center=None, half_width: float = 1.0, n_pairs: int = 200,
                       seed: int = 0, safety: float = 1.1) -> float:
    """Largest sampled gradient-difference ratio over a box, times ``safety``.

    The box is ``center +/- half_width`` in every coordinate. This is an
    estimate from below of the true constant; ``safety`` pads it.
    """
    rng = np.random.default_rng(seed)
    d = oracle.dimension
    c = np.zeros(d) if center is None else np.asarray(center, float)
    best = 0.0
    for _ in range(n_pairs):
        x = c + rng.uniform(-half_width, half_width, d)
        y = c + rng.uniform(-half_width, half_width, d)
        dist = np.linalg.norm(x - y)
        if dist > 0:
            best = max(best, np.linalg.norm(oracle.gradient(x) - oracle.gradient(y)) / dist)
    return safety * best


def smoothness_estimate(oracle: Objective, **box) -> float:
    """Closed-form constant when the oracle has one, else a sampled estimate.

    Keyword arguments are forwarded to ``sampled_smoothness``.
    """
    L = oracle.smoothness()
    if L is None:
        L = sampled_smoothness(oracle, **box)
    if not L > 0:
        raise ValueError("smoothness estimate must be positive")
    return float(L)


def rsc_modulus_estimate(problem: LeastSquaresProblem) -> float:
    """``sigma_min+(A^T A) / N`` for a quadratic least-squares problem."""
    if problem.power != 1:
        raise ValueError("restricted strong convexity modulus is only defined here for power 1")
    spectrum = problem._gram_spectrum
    top = spectrum[-1]
    if top <= 0:
        raise ValueError("zero design matrix: every point is optimal")
    return float(spectrum[spectrum > 1e-9 * top].min()) / problem.n_rows


@dataclass(frozen=True)
class DistributedProblem:
    """The local oracles of one instance plus, when known, the common optimal set."""

    oracles: tuple
    solution_set: object = None
    planted: np.ndarray | None = None

    def __post_init__(self):
        oracles = tuple(self.oracles)
        if not oracles:
            raise ValueError("no oracles")
        if len({o.dimension for o in oracles}) != 1:
            raise DimensionError("oracles do not share a dimension")
        object.__setattr__(self, "oracles", oracles)

    @property
    def m(self) -> int:
        return len(self.oracles)

    @property
    def dimension(self) -> int:
        return self.oracles[0].dimension

    def value(self, x) -> float:
        return sum(o.value(x) for o in self.oracles) / self.m

    def gradient(self, x) -> np.ndarray:
        return sum(o.gradient(x) for o in self.oracles) / self.m


def beck_problem() -> DistributedProblem:
    return DistributedProblem(
        (BeckSyntheticProblem(1), BeckSyntheticProblem(2)),
        solution_set=PointSet(np.zeros(2)),
        planted=np.zeros(2),
    )


def least_squares_problem(blocks: Sequence[tuple], power: int = 1, planted=None,
                          residual_bound: float | None = None) -> DistributedProblem:
    """One least-squares oracle per ``(A_i, b_i)`` block.

    The common optimal set is the solution set of the stacked system; it is
    ``None`` when the stacked system is inconsistent.
    """
    oracles = tuple(LeastSquaresProblem(A, b, power, residual_bound) for A, b in blocks)
    A = np.vstack([o.design_matrix for o in oracles])
    b = np.concatenate([o.targets for o in oracles])
    try:
        solution = AffineSubspace.from_equations(A, b)
    except ValueError:
        solution = None
    return DistributedProblem(oracles, solution, None if planted is None else np.asarray(planted, float))


def random_consistent_quadratic(m: int, d: int, rng: np.random.Generator,
                                rows: Sequence[int] | None = None) -> DistributedProblem:
    """Over-parameterized quadratic least squares with a planted common optimum.

    Node ``i`` gets ``rows[i]`` Gaussian rows (default: uniform in ``1..d-1``)
    and targets ``A_i x_true``.
    """
    if d < 2:
        raise ValueError("need d >= 2 for an over-parameterized node")
    x_true = rng.standard_normal(d)
    if rows is None:
        rows = rng.integers(1, d, size=m)
    blocks = []
    for n_i in rows:
        A = rng.standard_normal((int(n_i), d))
        blocks.append((A, A @ x_true))
    return least_squares_problem(blocks, power=1, planted=x_true)
