"""Affine subspaces, their projections, and the separation constant of a collection.

The closed-form convex sets used by the two-node synthetic problem (a disk,
a half-plane and a single point) live here too, so every optimal set
exposes the same ``project``/``distance`` surface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, ZeroMatrixError

log = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-9
ORTHONORMAL_TOLERANCE = 1e-10
MAX_EIG_DIM = 200


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _as_point(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise DimensionError(f"expected a point of shape ({dim},), got {x.shape}")
    return x


@dataclass(frozen=True)
class AffineSubspace:
    """The set ``{x : A (x - anchor) = 0}`` with orthonormal rows in ``A``.

    ``normal_basis`` spans the orthogonal complement of the direction space,
    so its row count is the codimension. A zero-row basis is the whole space.
    """

    anchor: np.ndarray
    normal_basis: np.ndarray

    def __post_init__(self):
        anchor = _frozen(self.anchor)
        if anchor.ndim != 1:
            raise DimensionError("anchor must be a vector")
        basis = _frozen(np.reshape(self.normal_basis, (-1, anchor.size)))
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(basis.shape[0]), atol=ORTHONORMAL_TOLERANCE, rtol=0):
            raise ValueError("normal_basis rows are not orthonormal")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "normal_basis", basis)

    @property
    def dimension(self) -> int:
        return self.anchor.size

    @property
    def codimension(self) -> int:
        return self.normal_basis.shape[0]

    @classmethod
    def from_normals(cls, anchor, normals) -> "AffineSubspace":
        """Build from any spanning set of normal vectors (orthonormalized here)."""
        anchor = np.asarray(anchor, dtype=float)
        normals = np.reshape(np.asarray(normals, dtype=float), (-1, anchor.size))
        return cls(anchor, _row_space_basis(normals))

    @classmethod
    def from_equations(cls, A, b, rtol: float = 1e-10) -> "AffineSubspace":
        """Solution set of the consistent linear system ``A x = b``.

        Raises ``ValueError`` when the system has no solution.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise DimensionError("A and b have different row counts")
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        keep = s > rtol * s.max() if s.size and s.max() > 0 else np.zeros(s.size, bool)
        u, s, vt = u[:, keep], s[keep], vt[keep]
        anchor = vt.T @ ((u.T @ b) / s)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if np.linalg.norm(A @ anchor - b) > 1e-8 * scale * max(1, b.size) ** 0.5:
            raise ValueError("linear system is inconsistent; solution set is empty")
        return cls(anchor, vt)

    def project(self, x) -> np.ndarray:
        x = _as_point(x, self.dimension)
        A = self.normal_basis
        return x - A.T @ (A @ (x - self.anchor))

    def distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        return float(np.linalg.norm(self.normal_basis @ (x - self.anchor)))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.distance(x) <= tol

    def normal_projector(self) -> np.ndarray:
        """``A^T A``: orthogonal projector onto the normal space."""
        return self.normal_basis.T @ self.normal_basis


def _row_space_basis(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    if M.size == 0:
        return np.zeros((0, M.shape[1]))
    _, s, vt = np.linalg.svd(M, full_matrices=False)
    if s.max() <= 0:
        return np.zeros((0, M.shape[1]))
    return vt[s > rtol * s.max()]


@dataclass(frozen=True)
class SubspaceCollection:
    """Affine subspaces sharing ``common_point``.

    ``q_matrix`` is the average of the members' normal-space projectors.
    Its kernel is the direction space of the intersection.
    """

    members: tuple
    common_point: np.ndarray
    q_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("collection needs at least one member")
        dim = members[0].dimension
        if any(s.dimension != dim for s in members):
            raise DimensionError("members do not share a dimension")
        point = _frozen(_as_point(self.common_point, dim))
        for i, s in enumerate(members):
            if not s.contains(point, tol=1e-9):
                raise ValueError(f"common_point is not in member {i}")
        q = sum(s.normal_projector() for s in members) / len(members)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "common_point", point)
        object.__setattr__(self, "q_matrix", _frozen((q + q.T) / 2))

    @property
    def dimension(self) -> int:
        return self.common_point.size

    def _range_projector(self) -> np.ndarray:
        # Q^+ Q is the orthogonal projector onto range(Q).
        w, v = np.linalg.eigh(self.q_matrix)
        top = w.max(initial=0.0)
        if top <= 0:
            return np.zeros_like(self.q_matrix)
        vr = v[:, w > RANK_TOLERANCE * top]
        return vr @ vr.T

    def project(self, x) -> np.ndarray:
        x = _as_point(x, self.dimension)
        return x - self._range_projector() @ (x - self.common_point)

    def distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        return float(np.linalg.norm(self._range_projector() @ (x - self.common_point)))

    def intersection(self) -> AffineSubspace:
        """The intersection as a single affine subspace."""
        w, v = np.linalg.eigh(self.q_matrix)
        top = w.max(initial=0.0)
        normals = v[:, w > RANK_TOLERANCE * top].T if top > 0 else np.zeros((0, self.dimension))
        return AffineSubspace(self.common_point, normals)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def dimension(self) -> int:
        return self.center.size

    def project(self, x) -> np.ndarray:
        x = _as_point(x, self.dimension)
        v = x - self.center
        r = np.linalg.norm(v)
        if r <= self.radius:
            return x.copy()
        return self.center + v * (self.radius / r)

    def distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        return max(float(np.linalg.norm(x - self.center)) - self.radius, 0.0)


@dataclass(frozen=True)
class HalfSpace:
    """``{x : normal . x <= offset}`` with a unit ``normal``."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", _frozen(n / np.linalg.norm(n)))

    @property
    def dimension(self) -> int:
        return self.normal.size

    def project(self, x) -> np.ndarray:
        x = _as_point(x, self.dimension)
        excess = float(self.normal @ x) - self.offset
        return x - max(excess, 0.0) * self.normal

    def distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        return max(float(self.normal @ x) - self.offset, 0.0)


@dataclass(frozen=True)
class PointSet:
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen(self.point))

    @property
    def dimension(self) -> int:
        return self.point.size

    def project(self, x) -> np.ndarray:
        _as_point(x, self.dimension)
        return self.point.copy()

    def distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        return float(np.linalg.norm(x - self.point))


def project(s, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto the set ``s``."""
    return s.project(x)


def distance(s, x) -> float:
    """Distance from ``x`` to the set ``s`` (a single set or a collection)."""
    return s.distance(x)


def smallest_nonzero_singular_value(M, rank_tolerance: float = RANK_TOLERANCE) -> float:
    """Smallest eigenvalue of a symmetric PSD matrix above ``rank_tolerance * max``.

    For PSD input eigenvalues and singular values coincide. Matrices larger
    than ``MAX_EIG_DIM`` are refused.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("expected a square matrix")
    if M.shape[0] > MAX_EIG_DIM:
        raise ValueError(f"matrix size {M.shape[0]} exceeds cap {MAX_EIG_DIM}")
    if not np.allclose(M, M.T, atol=1e-12, rtol=1e-10):
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh((M + M.T) / 2)
    top = w[-1] if w.size else 0.0
    if top <= 0:
        raise ZeroMatrixError("all eigenvalues are below tolerance")
    return float(w[w > rank_tolerance * top].min())


def separation_constant(coll: SubspaceCollection) -> float:
    """``1 / sigma_min+(Q)`` for the averaged normal projector ``Q``.

    Satisfies ``d(x, S) <= c/m * sum_i d(x, S_i)`` for every ``x``. A
    collection of whole-space members has ``Q = 0``; any positive constant
    works there and 1.0 is returned.
    """
    try:
        sigma = smallest_nonzero_singular_value(coll.q_matrix)
    except ZeroMatrixError:
        log.warning("degenerate collection: every member is the whole space; using c = 1")
        return 1.0
    # sigma <= 1 analytically; clip round-off so c >= 1 holds exactly
    return 1.0 / min(sigma, 1.0)


def random_collection(rng: np.random.Generator, m: int, d: int, codims: Sequence[int] | None = None,
                      common_point=None) -> SubspaceCollection:
    """Random affine subspaces all passing through one common point."""
    point = rng.standard_normal(d) if common_point is None else np.asarray(common_point, float)
    if codims is None:
        codims = rng.integers(1, d + 1, size=m)
    members = []
    for k in codims:
        normals = rng.standard_normal((int(k), d))
        members.append(AffineSubspace.from_normals(point, normals))
    return SubspaceCollection(tuple(members), point)
