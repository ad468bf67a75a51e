"""Gram maps for polynomial matrices that are PSD on [0, 1], and their adjoints.

Monomial ordering: the Gram matrix of an m x m polynomial matrix of even
degree 2h is indexed by v(t, y) = (y_1..y_m, y_1 t..y_m t, ..., y_1 t^h..y_m t^h),
so the monomial y_{i+1} t^k sits at position k*m + i.

With that ordering ``lambda_map`` is the unique symmetric Y with
y' Y(t) y = v(t, y)' Q v(t, y), i.e. Y_ij(t) = sum_{k,l} Q[km+i, lm+j] t^(k+l).
``alpha``/``beta`` split a degree-d matrix into the interval certificate

    d odd:   X = t L_{d-1}(Q1) + (1 - t) L_{d-1}(Q2)
    d even:  X = L_d(Q1) + t (1 - t) L_{d-2}(Q2)

and the adjoints turn a polynomial matrix P into the constant moment matrices
with entries integral_0^1 t^(k+l) w(t) P_ij(t) dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special

from .polynomial import Poly, SymPolyMatrix, mat_scale_by_poly

T = Poly([0.0, 1.0])
ONE_MINUS_T = Poly([1.0, -1.0])
T_ONE_MINUS_T = Poly([0.0, 1.0, -1.0])


@dataclass(frozen=True)
class MonomialIndex:
    m: int
    half_deg: int

    @property
    def size(self) -> int:
        return self.m * (self.half_deg + 1)

    def position(self, i: int, k: int) -> int:
        if not (0 <= i < self.m and 0 <= k <= self.half_deg):
            raise IndexError((i, k))
        return k * self.m + i


@dataclass(frozen=True)
class GramShape:
    """Sizes of (Q1, Q2) certifying a degree-d, m x m matrix on [0, 1]."""

    d: int
    m: int

    def __post_init__(self):
        if self.d < 0 or self.m < 1:
            raise ValueError(f"invalid Gram shape d={self.d}, m={self.m}")

    @property
    def odd(self) -> bool:
        return self.d % 2 == 1

    @property
    def half_deg_q1(self) -> int:
        return (self.d - 1) // 2 if self.odd else self.d // 2

    @property
    def half_deg_q2(self) -> int | None:
        if self.odd:
            return (self.d - 1) // 2
        return self.d // 2 - 1 if self.d >= 2 else None

    @property
    def size_q1(self) -> int:
        return self.m * (self.half_deg_q1 + 1)

    @property
    def size_q2(self) -> int:
        h = self.half_deg_q2
        return 0 if h is None else self.m * (h + 1)

    def weight_q1(self) -> Poly:
        return T if self.odd else Poly(1.0)

    def weight_q2(self) -> Poly | None:
        if self.odd:
            return ONE_MINUS_T
        return T_ONE_MINUS_T if self.d >= 2 else None


def _check_even(d_even: int):
    if d_even < 0 or d_even % 2:
        raise ValueError(f"lambda map needs an even nonnegative degree, got {d_even}")


def lambda_map(m: int, d_even: int, Q) -> SymPolyMatrix:
    _check_even(d_even)
    idx = MonomialIndex(m, d_even // 2)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (idx.size, idx.size):
        raise ValueError(f"Q must be {idx.size}x{idx.size} for m={m}, d={d_even}; got {Q.shape}")
    h = idx.half_deg
    entries = {}
    for i in range(m):
        for j in range(i, m):
            coeffs = np.zeros(d_even + 1)
            for k in range(h + 1):
                for l in range(h + 1):
                    coeffs[k + l] += Q[idx.position(i, k), idx.position(j, l)]
            entries[(i, j)] = Poly(coeffs)
    return SymPolyMatrix(m, entries)


def alpha(m: int, d: int, Q) -> SymPolyMatrix:
    shape = GramShape(d, m)
    base = lambda_map(m, 2 * shape.half_deg_q1, Q)
    return mat_scale_by_poly(base, shape.weight_q1())


def beta(m: int, d: int, Q) -> SymPolyMatrix:
    shape = GramShape(d, m)
    if shape.half_deg_q2 is None:
        raise ValueError("beta is undefined for even degree 0; a constant matrix only needs Q1")
    base = lambda_map(m, 2 * shape.half_deg_q2, Q)
    return mat_scale_by_poly(base, shape.weight_q2())


def lambda_adjoint(m: int, d_even: int, P: SymPolyMatrix) -> np.ndarray:
    """Entry ((i,k),(j,l)) = integral_0^1 t^(k+l) P_ij(t) dt."""
    _check_even(d_even)
    if P.m != m:
        raise ValueError(f"P has side {P.m}, expected {m}")
    idx = MonomialIndex(m, d_even // 2)
    h = idx.half_deg
    out = np.zeros((idx.size, idx.size))
    for i in range(m):
        for j in range(i, m):
            c = P[i, j].coeffs
            # moments[q] = integral t^q P_ij for q = 0..2h
            moments = np.array([np.sum(c / (np.arange(len(c)) + q + 1)) for q in range(2 * h + 1)])
            for k in range(h + 1):
                for l in range(h + 1):
                    r, s = idx.position(i, k), idx.position(j, l)
                    out[r, s] = out[s, r] = moments[k + l]
    return out


def alpha_adjoint(m: int, d: int, P: SymPolyMatrix) -> np.ndarray:
    shape = GramShape(d, m)
    return lambda_adjoint(m, 2 * shape.half_deg_q1, mat_scale_by_poly(P, shape.weight_q1()))


def beta_adjoint(m: int, d: int, P: SymPolyMatrix) -> np.ndarray:
    shape = GramShape(d, m)
    if shape.half_deg_q2 is None:
        return np.zeros((0, 0))
    return lambda_adjoint(m, 2 * shape.half_deg_q2, mat_scale_by_poly(P, shape.weight_q2()))


def gram_basis(half_deg: int, weight: Poly) -> np.ndarray:
    """Lower-triangular T whose row k holds the monomial coefficients of the
    degree-k polynomial orthonormal for ``weight`` on [0, 1].

    Working with T M T' instead of a monomial moment matrix M (and with
    Q = T' Q' T instead of a monomial Gram matrix Q) is a congruence, so PSD
    cones are unchanged while the Hilbert-type ill-conditioning disappears.
    Supported weights: 1, t, 1 - t, t(1 - t) (shifted Jacobi families).
    """
    w = np.trim_zeros(np.asarray(weight.coeffs, dtype=float), "b")
    params = {(1.0,): (0, 0), (0.0, 1.0): (0, 1), (1.0, -1.0): (1, 0), (0.0, 1.0, -1.0): (1, 1)}
    key = tuple(float(v) for v in w)
    if key not in params:
        raise ValueError(f"no orthogonal family for weight {weight.coeffs.tolist()}")
    a, b = params[key]
    size = half_deg + 1
    T = np.zeros((size, size))
    shift = np.polynomial.Polynomial([-1.0, 2.0])
    for k in range(size):
        # Jacobi P_k^(a,b) on [-1, 1] with weight (1-x)^a (1+x)^b; x = 2t - 1
        jac = np.polynomial.Polynomial(scipy.special.jacobi(k, a, b).coeffs[::-1])
        coeffs = np.zeros(size)
        c = jac(shift).coef
        coeffs[: len(c)] = c
        T[k] = coeffs
    # normalize with exact weighted moments
    mu = np.array([np.sum(w / (np.arange(len(w)) + q + 1)) for q in range(2 * size - 1)])
    H = np.array([mu[k : k + size] for k in range(size)])
    norms = np.sqrt(np.einsum("ki,ij,kj->k", T, H, T))
    return T / norms[:, None]


def gram_vector(m: int, half_deg: int, t: float, y) -> np.ndarray:
    """v(t, y) in the ordering documented above."""
    y = np.asarray(y, dtype=float)
    return np.concatenate([y * t**k for k in range(half_deg + 1)])
