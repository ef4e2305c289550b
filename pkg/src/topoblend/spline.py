"""B-spline functions on clamped knot vectors.

Univariate bases, trivariate tensor-product volumes, Boehm knot insertion and
constrained least-squares fitting by local progressive-iterative approximation
(Local-LSPIA).  A univariate spline is stored as a degenerate volume whose
``v`` and ``w`` axes carry a single degree-0 basis, so every caller deals with
one type.

Algorithms follow Piegl & Tiller, *The NURBS Book* (A2.1, A2.2, A5.1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import DomainError

# parameters this far outside the knot range are clipped instead of rejected
_PARAM_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Nondecreasing knot sequence ``U`` with polynomial degree ``p``."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).copy()
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        if self.degree < 0:
            raise DomainError(f"degree must be nonnegative, got {self.degree}")
        if knots.ndim != 1 or len(knots) < 2 * self.degree + 2:
            raise DomainError("knot vector too short for its degree")
        if np.any(np.diff(knots) < 0):
            raise DomainError("knots must be nondecreasing")
        if not knots[-1] > knots[0]:
            raise DomainError("knot vector spans an empty interval")

    @property
    def num_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[-self.degree - 1])

    def is_clamped(self) -> bool:
        p = self.degree
        return bool(np.all(self.knots[: p + 1] == self.knots[0]) and np.all(self.knots[-p - 1 :] == self.knots[-1]))

    def support(self, i: int) -> tuple[float, float]:
        """Closed hull ``[u_i, u_{i+p+1}]`` of the support of basis ``i``."""
        return float(self.knots[i]), float(self.knots[i + self.degree + 1])

    def __eq__(self, other):
        return (
            isinstance(other, KnotVector)
            and self.degree == other.degree
            and np.array_equal(self.knots, other.knots)
        )

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, num_basis={self.num_basis})"


def clamped_uniform(num_basis: int, degree: int, lo: float = 0.0, hi: float = 1.0) -> KnotVector:
    """Clamped knot vector with uniformly spaced interior knots."""
    if num_basis < degree + 1:
        raise DomainError(f"need at least {degree + 1} basis functions for degree {degree}, got {num_basis}")
    interior = np.linspace(lo, hi, num_basis - degree + 1)[1:-1]
    knots = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    return KnotVector(knots, degree)


CONSTANT_AXIS = KnotVector(np.array([0.0, 1.0]), 0)


def _check_params(kv: KnotVector, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    lo, hi = kv.domain
    if u.size and (np.nanmin(u) < lo - _PARAM_SLACK or np.nanmax(u) > hi + _PARAM_SLACK or np.isnan(u).any()):
        raise DomainError(f"parameter outside [{lo}, {hi}]")
    return np.clip(u, lo, hi)


def find_spans(kv: KnotVector, u) -> np.ndarray:
    """Index ``s`` of the nonempty span with ``U[s] <= u < U[s+1]`` (last span closed)."""
    u = _check_params(kv, u)
    spans = np.searchsorted(kv.knots, u, side="right") - 1
    return np.clip(spans, kv.degree, kv.num_basis - 1)


def basis_funs(kv: KnotVector, u) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero basis values at each parameter.

    Returns ``(spans, values)`` where ``values[n, r]`` is ``N_{spans[n]-p+r, p}(u[n])``.
    """
    u = np.atleast_1d(_check_params(kv, u)).ravel()
    p, U = kv.degree, kv.knots
    spans = find_spans(kv, u)
    n = len(u)
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = u - U[spans + 1 - j]
        right[:, j] = U[spans + j] - u
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return spans, N


def basis_matrix(kv: KnotVector, u) -> np.ndarray:
    """Dense ``(len(u), num_basis)`` matrix of all basis values."""
    spans, N = basis_funs(kv, u)
    out = np.zeros((len(spans), kv.num_basis))
    cols = spans[:, None] - kv.degree + np.arange(kv.degree + 1)
    np.put_along_axis(out, cols, N, axis=1)
    return out


def basis_eval(kv: KnotVector, i: int, u: float) -> float:
    """``N_{i,p}(u)`` by the Cox-de Boor recursion.

    Kept deliberately separate from :func:`basis_funs` so the two can check
    each other.  The right end of the knot range belongs to the last nonempty
    span, so clamped splines interpolate their last coefficient.
    """
    if not 0 <= i < kv.num_basis:
        raise DomainError(f"basis index {i} outside [0, {kv.num_basis})")
    U = kv.knots
    if not U[0] <= u <= U[-1]:
        raise DomainError(f"parameter {u} outside [{U[0]}, {U[-1]}]")
    last_span = int(np.nonzero(U[:-1] < U[1:])[0][-1])

    def rec(j, p):
        if p == 0:
            if U[j] <= u < U[j + 1]:
                return 1.0
            return 1.0 if (u == U[-1] and j == last_span) else 0.0
        value = 0.0
        if U[j + p] > U[j]:
            value += (u - U[j]) / (U[j + p] - U[j]) * rec(j, p - 1)
        if U[j + p + 1] > U[j + 1]:
            value += (U[j + p + 1] - u) / (U[j + p + 1] - U[j + 1]) * rec(j + 1, p - 1)
        return value

    return rec(i, kv.degree)


@dataclass(frozen=True, eq=False)
class SplineVolume:
    """Trivariate tensor-product B-spline ``sum C_ijk N_i(u) N_j(v) N_k(w)``."""

    knots_u: KnotVector
    knots_v: KnotVector
    knots_w: KnotVector
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=float)
        if coeffs.shape != self.shape:
            raise DomainError(f"coefficient shape {coeffs.shape} does not match knot vectors {self.shape}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def axes(self) -> tuple[KnotVector, KnotVector, KnotVector]:
        return self.knots_u, self.knots_v, self.knots_w

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(kv.num_basis for kv in self.axes)

    @property
    def degrees(self) -> tuple[int, int, int]:
        return tuple(kv.degree for kv in self.axes)

    def with_coefficients(self, coefficients) -> SplineVolume:
        return SplineVolume(self.knots_u, self.knots_v, self.knots_w, coefficients)

    def __call__(self, u, v=0.0, w=0.0):
        return volume_eval(self, u, v, w)

    def evaluate_grid(self, u, v, w) -> np.ndarray:
        """Values on the tensor grid ``u x v x w`` (three 1-D arrays)."""
        Bu, Bv, Bw = (basis_matrix(kv, t) for kv, t in zip(self.axes, (u, v, w)))
        return np.einsum("ai,bj,ck,ijk->abc", Bu, Bv, Bw, self.coefficients, optimize=True)

    def to_dict(self) -> dict:
        return {
            "degrees": list(self.degrees),
            "knots": [kv.knots.tolist() for kv in self.axes],
            "shape": list(self.shape),
            "coefficients": self.coefficients.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SplineVolume:
        kvs = [KnotVector(k, d) for k, d in zip(data["knots"], data["degrees"])]
        shape = tuple(kv.num_basis for kv in kvs)
        coeffs = np.asarray(data["coefficients"], dtype=float).reshape(shape)
        return cls(*kvs, coeffs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> SplineVolume:
        return cls.from_dict(json.loads(text))


def univariate(kv: KnotVector, coefficients) -> SplineVolume:
    """Wrap a univariate spline as a volume constant in ``v`` and ``w``."""
    coeffs = np.asarray(coefficients, dtype=float).reshape(-1, 1, 1)
    return SplineVolume(kv, CONSTANT_AXIS, CONSTANT_AXIS, coeffs)


def uniform_volume(shape, degrees, fill=0.0) -> SplineVolume:
    """Volume on clamped uniform knots over the unit cube, all coefficients ``fill``."""
    kvs = [clamped_uniform(n, p) for n, p in zip(shape, degrees)]
    return SplineVolume(*kvs, np.full(tuple(shape), float(fill)))


def _local_terms(s: SplineVolume, u, v, w):
    u, v, w = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (u, v, w)))
    terms = []
    for kv, t in zip(s.axes, (u, v, w)):
        spans, N = basis_funs(kv, t.ravel())
        terms.append((spans[:, None] - kv.degree + np.arange(kv.degree + 1), N))
    return u.shape, terms


def volume_eval(s: SplineVolume, u, v=0.0, w=0.0, chunk: int = 65536):
    """Evaluate the volume at scattered parameters (broadcast together)."""
    shape, ((iu, Nu), (iv, Nv), (iw, Nw)) = _local_terms(s, u, v, w)
    C = s.coefficients
    out = np.empty(len(Nu))
    for a in range(0, len(Nu), chunk):
        sl = slice(a, a + chunk)
        local = C[iu[sl, :, None, None], iv[sl, None, :, None], iw[sl, None, None, :]]
        out[sl] = np.einsum("na,nb,nc,nabc->n", Nu[sl], Nv[sl], Nw[sl], local, optimize=True)
    return out.reshape(shape) if shape else float(out[0])


def volume_gradient_wrt_coeff(s: SplineVolume, u: float, v: float = 0.0, w: float = 0.0) -> dict:
    """Sparse derivative ``{(i, j, k): R_ijk(u, v, w)}`` of the volume value.

    Only the ``(p_u+1)(p_v+1)(p_w+1)`` locally supported indices appear; exact
    zeros (at knots) are dropped.
    """
    _, ((iu, Nu), (iv, Nv), (iw, Nw)) = _local_terms(s, u, v, w)
    out = {}
    for a, na in zip(iu[0], Nu[0]):
        for b, nb in zip(iv[0], Nv[0]):
            for c, nc in zip(iw[0], Nw[0]):
                value = na * nb * nc
                if value != 0.0:
                    out[(int(a), int(b), int(c))] = float(value)
    return out


def collocation_matrix(s: SplineVolume, u, v, w) -> sps.csr_matrix:
    """Sparse ``(n_points, n_coeffs)`` matrix with rows ``R_ijk(point)`` (C-order columns)."""
    _, ((iu, Nu), (iv, Nv), (iw, Nw)) = _local_terms(s, u, v, w)
    n = len(Nu)
    Mu, Mv, Mw = s.shape
    cols = (iu[:, :, None, None] * Mv + iv[:, None, :, None]) * Mw + iw[:, None, None, :]
    vals = Nu[:, :, None, None] * Nv[:, None, :, None] * Nw[:, None, None, :]
    rows = np.repeat(np.arange(n), cols[0].size)
    return sps.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, Mu * Mv * Mw))


def support_index_range(kv: KnotVector, t) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive range ``[lo, hi]`` of bases whose closed support contains ``t``."""
    t = _check_params(kv, t)
    p, U = kv.degree, kv.knots
    lo = np.searchsorted(U, t, side="left") - p - 1
    hi = np.searchsorted(U, t, side="right") - 1
    return np.clip(lo, 0, kv.num_basis - 1), np.clip(hi, 0, kv.num_basis - 1)


def knot_insert(s: SplineVolume, axis: int, new_knot: float) -> SplineVolume:
    """Insert one knot along ``axis`` (Boehm); the function is unchanged."""
    kv = s.axes[axis]
    lo, hi = float(kv.knots[0]), float(kv.knots[-1])
    if not lo < new_knot < hi:
        raise DomainError(f"knot {new_knot} not strictly inside ({lo}, {hi})")
    p, U = kv.degree, kv.knots
    k = int(np.searchsorted(U, new_knot, side="right") - 1)
    P = np.moveaxis(s.coefficients, axis, 0)
    n = P.shape[0]
    Q = np.empty((n + 1,) + P.shape[1:])
    Q[: k - p + 1] = P[: k - p + 1]
    Q[k + 1 :] = P[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (new_knot - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * P[i] + (1.0 - alpha) * P[i - 1]
    new_kv = KnotVector(np.insert(U, k + 1, new_knot), p)
    axes = list(s.axes)
    axes[axis] = new_kv
    return SplineVolume(*axes, np.moveaxis(Q, 0, axis))


def as_index_mask(fixed, shape) -> np.ndarray:
    """Normalize an index set (boolean mask or iterable of ``(i, j, k)``) to a mask."""
    if isinstance(fixed, np.ndarray) and fixed.dtype == bool:
        if fixed.shape != tuple(shape):
            raise DomainError(f"index mask shape {fixed.shape} does not match {tuple(shape)}")
        return fixed.copy()
    mask = np.zeros(shape, dtype=bool)
    for idx in fixed:
        idx = tuple(int(t) for t in idx)
        if len(idx) != 3 or not all(0 <= a < m for a, m in zip(idx, shape)):
            raise DomainError(f"index {idx} outside coefficient array {tuple(shape)}")
        mask[idx] = True
    return mask


@dataclass
class FitDiagnostics:
    residuals: list[float]
    iterations: int
    step_sizes: np.ndarray | None = None
    constrained_points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    """Indices of data points whose value only fixed coefficients influence."""


def local_lspia_fit(
    params,
    values,
    s0: SplineVolume,
    fixed=(),
    max_iters: int = 500,
    tol: float = 1e-8,
) -> tuple[SplineVolume, FitDiagnostics]:
    """Least-squares fit of ``values`` at ``params`` holding ``fixed`` coefficients.

    Each free coefficient moves by its own residual-weighted correction
    ``mu_i * sum_p R_i(p) r_p`` with ``mu_i = 1 / sum_p R_i(p)``; this is the
    diagonally scaled LSPIA step, which keeps the residual nonincreasing.
    Iteration stops when the sum of squared residuals improves by less than
    ``tol`` or after ``max_iters`` sweeps.

    Parameters
    ----------
    params : (n, 3) array of parametric points inside the unit box.
    values : (n,) target values.
    fixed : boolean mask over the coefficient array, or iterable of indices.
    """
    params = np.asarray(params, dtype=float).reshape(-1, 3)
    values = np.asarray(values, dtype=float).ravel()
    fixed_mask = as_index_mask(fixed, s0.shape).ravel()
    if len(params) == 0:
        return s0, FitDiagnostics(residuals=[], iterations=0)
    if len(values) != len(params):
        raise DomainError("params and values differ in length")

    A = collocation_matrix(s0, params[:, 0], params[:, 1], params[:, 2])
    free = np.flatnonzero(~fixed_mask)
    C = s0.coefficients.ravel().copy()
    A_free = A[:, free].tocsc()
    A_free.eliminate_zeros()
    col_sums = np.asarray(A_free.sum(axis=0)).ravel()
    active = col_sums > 0
    mu = np.zeros(len(free))
    mu[active] = 1.0 / col_sums[active]
    row_free = np.asarray(A_free.sum(axis=1)).ravel()
    constrained = np.flatnonzero(row_free == 0)

    residual = values - A @ C
    history = [float(residual @ residual)]
    iterations = 0
    A_free_t = A_free.T.tocsr()
    while iterations < max_iters and free.size:
        step = mu * (A_free_t @ residual)
        C_new = C.copy()
        C_new[free] += step
        new_residual = values - A @ C_new
        sse = float(new_residual @ new_residual)
        if sse > history[-1]:
            break
        C, residual = C_new, new_residual
        iterations += 1
        history.append(sse)
        if history[-2] - sse < tol:
            break
    C[fixed_mask] = s0.coefficients.ravel()[fixed_mask]
    result = s0.with_coefficients(C.reshape(s0.shape))
    return result, FitDiagnostics(history, iterations, mu, constrained)
