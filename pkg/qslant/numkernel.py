"""Dense linear algebra and forward-mode differentiation.

Everything here is a pure function of its inputs. Maps are duck-typed: anything
with ``domain_dim`` and ``evaluate(xs) -> list`` (see ``qslant.exprmap``) can be
differentiated, with ``xs`` a list of floats or ``Dual`` numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from qslant.config import settings
from qslant.errors import ConstantRankViolation, SvdConvergenceError, NumericError

Matrix = np.ndarray


# --- Forward-mode dual numbers ---
class Dual:
    """a + b·eps with eps² = 0.

    ``value`` and ``tangent`` may themselves be Duals (nested duals give second
    derivatives); at the innermost level ``value`` is a float and ``tangent`` a
    float or a numpy vector of partial derivatives.
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent):
        self.value = value
        self.tangent = tangent

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangent!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    def __radd__(self, other):
        return Dual(other + self.value, self.tangent)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.tangent)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.tangent + self.tangent * other.value,
            )
        return Dual(self.value * other, self.tangent * other)

    def __rmul__(self, other):
        return Dual(other * self.value, other * self.tangent)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value / other.value,
                (self.tangent * other.value - self.value * other.tangent)
                / (other.value * other.value),
            )
        return Dual(self.value / other, self.tangent / other)

    def __rtruediv__(self, other):
        return Dual(other / self.value, -other * self.tangent / (self.value * self.value))

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("dual numbers support integer exponents only")
        if n == 0:
            return Dual(1.0, 0.0 * self.tangent)
        if n == 1:
            return self
        return Dual(self.value**n, n * self.value ** (n - 1) * self.tangent)


def real_part(x) -> float:
    while isinstance(x, Dual):
        x = x.value
    return float(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.value), cos(x.value) * x.tangent)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.value), -sin(x.value) * x.tangent)
    return math.cos(x)


def sqrt(x):
    if isinstance(x, Dual):
        root = sqrt(x.value)
        if real_part(root) == 0.0:
            raise ZeroDivisionError("sqrt is not differentiable at 0")
        return Dual(root, x.tangent / (2.0 * root))
    return math.sqrt(x)


def absolute(x):
    if isinstance(x, Dual):
        sign = float(np.sign(real_part(x)))
        return Dual(absolute(x.value), sign * x.tangent)
    return abs(x)


# --- Subspaces ---
@dataclass(frozen=True, eq=False)
class Subspace:
    """Span of the orthonormal columns of ``basis`` (ambient_dim x dim)."""

    basis: Matrix

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def empty(cls, ambient_dim: int) -> "Subspace":
        return cls(np.zeros((ambient_dim, 0)))

    @classmethod
    def full(cls, ambient_dim: int) -> "Subspace":
        return cls(np.eye(ambient_dim))

    def gram_residual(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(self.basis.T @ self.basis - np.eye(self.dim))))


def svd(m: Matrix) -> tuple[Matrix, np.ndarray, Matrix]:
    """Full SVD m = U diag(sigma) V^T with sigma nonincreasing."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NumericError("svd input has non-finite entries", code="non_finite")
    try:
        u, sigma, vt = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as e:
        raise SvdConvergenceError(f"SVD did not converge: {e}") from e
    return u, sigma, vt.T


def rank_threshold(sigma: np.ndarray, rank_tol: float | None = None) -> float:
    rank_tol = settings.rank_rtol if rank_tol is None else rank_tol
    sigma_max = float(sigma[0]) if len(sigma) else 0.0
    threshold = rank_tol * sigma_max
    if sigma_max < 1.0:
        threshold = max(threshold, settings.rank_floor)
    return threshold


def numerical_rank(sigma: np.ndarray, rank_tol: float | None = None) -> int:
    return int(np.sum(sigma > rank_threshold(sigma, rank_tol)))


def kernel_basis(m: Matrix, rank_tol: float | None = None) -> Subspace:
    if rank_tol is not None and rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    _, sigma, v = svd(m)
    rank = numerical_rank(sigma, rank_tol)
    return Subspace(v[:, rank:])


def range_basis(m: Matrix, rank_tol: float | None = None) -> Subspace:
    u, sigma, _ = svd(m)
    rank = numerical_rank(sigma, rank_tol)
    return Subspace(u[:, :rank])


def span(vectors: Matrix, rank_tol: float | None = None) -> Subspace:
    """Orthonormal basis for the column span of ``vectors``."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape[1] == 0:
        return Subspace.empty(vectors.shape[0])
    u, sigma, _ = svd(vectors)
    # absolute threshold: columns are expected to have unit scale
    rank = int(np.sum(sigma > (settings.rank_rtol if rank_tol is None else rank_tol)))
    return Subspace(u[:, :rank])


def orth_complement(sub: Subspace, within: Subspace | None = None) -> Subspace:
    within = Subspace.full(sub.ambient_dim) if within is None else within
    if sub.dim == 0:
        return within
    residual = within.basis - sub.basis @ (sub.basis.T @ within.basis)
    return span(residual, rank_tol=1e-8)


def projector(s: Subspace) -> Matrix:
    return s.basis @ s.basis.T


def principal_angles(a: Subspace, b: Subspace) -> list[float]:
    """Principal angles in [0, pi/2], nondecreasing, min(dim a, dim b) of them.

    Cosines come from the singular values of A^T B; angles whose cosine exceeds
    1/sqrt(2) are recomputed from sines (singular values of (I - B B^T) A),
    which stay accurate near zero.
    """
    if a.ambient_dim != b.ambient_dim:
        raise ValueError("subspaces live in different ambient spaces")
    if a.dim > b.dim:
        a, b = b, a
    if a.dim == 0:
        return []
    cosines = np.clip(np.linalg.svd(a.basis.T @ b.basis, compute_uv=False), 0.0, 1.0)
    off = a.basis - b.basis @ (b.basis.T @ a.basis)
    sines = np.clip(np.sort(np.linalg.svd(off, compute_uv=False))[: a.dim], 0.0, 1.0)
    angles = []
    for c, s in zip(cosines, sines):
        angles.append(float(np.arcsin(s)) if c * c > 0.5 else float(np.arccos(c)))
    return angles


def random_orthogonal(dim: int, rng: np.random.Generator) -> Matrix:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


# --- Derivatives of expression maps ---
def _as_point(p, dim: int) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != dim:
        raise ValueError(f"point has {p.shape[0]} coordinates, expected {dim}")
    return p


def _as_vector(x, dim: int) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(x, dtype=float), (dim,)))


def jacobian(f, p) -> Matrix:
    """Exact forward-mode Jacobian, codomain_dim x domain_dim."""
    p = _as_point(p, f.domain_dim)
    dim = p.shape[0]
    eye = np.eye(dim)
    out = f.evaluate([Dual(float(p[i]), eye[i]) for i in range(dim)])
    jac = np.zeros((len(out), dim))
    for c, r in enumerate(out):
        if isinstance(r, Dual):
            jac[c] = _as_vector(r.tangent, dim)
    return jac


def hessian(f, p) -> np.ndarray:
    """Second derivatives H[c, a, b] = d2 F^c / dx^a dx^b via nested duals.

    One pass per outer direction b; entries with a <= b are taken from pass b and
    mirrored, so the result is exactly symmetric.
    """
    p = _as_point(p, f.domain_dim)
    dim = p.shape[0]
    eye = np.eye(dim)
    zero = np.zeros(dim)
    hess = None
    for b in range(dim):
        xs = [
            Dual(Dual(float(p[i]), eye[i]), Dual(1.0 if i == b else 0.0, zero))
            for i in range(dim)
        ]
        out = f.evaluate(xs)
        if hess is None:
            hess = np.zeros((len(out), dim, dim))
        for c, r in enumerate(out):
            if not (isinstance(r, Dual) and isinstance(r.tangent, Dual)):
                continue
            column = _as_vector(r.tangent.tangent, dim)
            for a in range(b + 1):
                hess[c, a, b] = column[a]
                hess[c, b, a] = column[a]
    return hess


# --- Finite differences for projector fields ---
@dataclass(frozen=True, eq=False)
class Derivative:
    estimate: np.ndarray
    error: float


def default_step(p) -> float:
    p = np.asarray(p, dtype=float)
    return settings.fd_step_scale * (1.0 + float(np.max(np.abs(p))) if p.size else 1.0)


def directional_derivative(
    fn: Callable[[np.ndarray], np.ndarray],
    p,
    direction,
    step: float | None = None,
) -> Derivative:
    """Central differences at steps h and h/2 combined by Richardson extrapolation.

    ``error`` is max |D_h - D_{h/2}|, scaled like the estimate.
    """
    p = np.asarray(p, dtype=float)
    direction = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return Derivative(np.zeros_like(np.asarray(fn(p), dtype=float)), 0.0)
    unit = direction / norm
    h = default_step(p) if step is None else step
    d_h = (fn(p + h * unit) - fn(p - h * unit)) / (2.0 * h)
    d_half = (fn(p + 0.5 * h * unit) - fn(p - 0.5 * h * unit)) / h
    estimate = (4.0 * d_half - d_h) / 3.0
    error = float(np.max(np.abs(d_h - d_half))) if d_h.size else 0.0
    return Derivative(norm * estimate, norm * error)


def vertical_projector(f, q) -> tuple[Matrix, int]:
    """Orthogonal projector onto ker F_* at q, with the rank of F_* there."""
    _, sigma, v = svd(jacobian(f, q))
    rank = numerical_rank(sigma)
    kernel = v[:, rank:]
    return kernel @ kernel.T, rank


def projector_derivative(f, p, direction, step: float | None = None) -> Derivative:
    """Directional derivative of q -> P_ker(q) at p.

    Raises ConstantRankViolation when the rank changes anywhere on the stencil.
    """
    p = np.asarray(p, dtype=float)
    _, rank = vertical_projector(f, p)

    def field(q):
        proj, r = vertical_projector(f, q)
        if r != rank:
            raise ConstantRankViolation(
                f"rank changes from {rank} to {r} near {p.tolist()}"
            )
        return proj

    return directional_derivative(field, p, direction, step)
