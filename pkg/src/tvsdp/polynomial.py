"""Univariate polynomials, bivariate kernels and symmetric polynomial matrices.

Everything lives in the monomial basis on the time interval [0, 1].  Values are
immutable; arithmetic returns new objects and never rounds coefficients.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

COEFF_ATOL = 1e-9


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class Poly:
    """Real polynomial in t with ascending coefficients (``coeffs[k]`` multiplies t**k)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[float] | float = (0.0,)):
        if np.isscalar(coeffs):
            arr = np.array([coeffs], dtype=float)
        else:
            arr = np.array(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs, dtype=float).ravel()
        if arr.size == 0:
            arr = np.zeros(1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("polynomial coefficients must be finite")
        nz = np.flatnonzero(arr)
        arr = arr[: nz[-1] + 1] if nz.size else arr[:1] * 0.0
        object.__setattr__(self, "coeffs", _as_readonly(arr))

    def __setattr__(self, name, value):
        raise AttributeError("Poly is immutable")

    def __reduce__(self):
        return (Poly, (self.coeffs.copy(),))

    @classmethod
    def monomial(cls, k: int, scale: float = 1.0) -> Poly:
        c = np.zeros(k + 1)
        c[k] = scale
        return cls(c)

    @classmethod
    def zero(cls) -> Poly:
        return cls((0.0,))

    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= atol))

    def padded(self, length: int) -> np.ndarray:
        """Coefficient vector zero-padded (never truncated) to ``length``."""
        if length < len(self.coeffs):
            raise ValueError(f"cannot pad degree-{self.degree()} polynomial to {length} coefficients")
        out = np.zeros(length)
        out[: len(self.coeffs)] = self.coeffs
        return out

    def __call__(self, t):
        return eval_poly(self, t)

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_coerce(other), -1.0))

    def __rsub__(self, other):
        return add(_coerce(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, Poly):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return len(self.coeffs) == len(other.coeffs) and bool(np.all(self.coeffs == other.coeffs))

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def allclose(self, other: Poly, atol: float = COEFF_ATOL) -> bool:
        n = max(len(self.coeffs), len(other.coeffs))
        return bool(np.all(np.abs(self.padded(n) - other.padded(n)) <= atol))

    def to_json(self) -> list[float]:
        return [float(c) for c in self.coeffs]

    def __repr__(self):
        return f"Poly({self.to_json()})"


def _coerce(p) -> Poly:
    return p if isinstance(p, Poly) else Poly(float(p))


def add(p: Poly, q: Poly) -> Poly:
    n = max(len(p.coeffs), len(q.coeffs))
    return Poly(p.padded(n) + q.padded(n))


def scale(p: Poly, a: float) -> Poly:
    return Poly(p.coeffs * a)


def mul(p: Poly, q: Poly) -> Poly:
    return Poly(np.convolve(p.coeffs, q.coeffs))


def eval_poly(p: Poly, t):
    """Horner evaluation; ``t`` may be a scalar or an array."""
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    for c in p.coeffs[::-1]:
        acc = acc * t + c
    return float(acc) if acc.ndim == 0 else acc


def integral_01(p: Poly) -> float:
    k = np.arange(len(p.coeffs))
    return float(np.sum(p.coeffs / (k + 1)))


def antiderivative(p: Poly) -> Poly:
    """q(t) = integral of p from 0 to t."""
    k = np.arange(len(p.coeffs))
    return Poly(np.concatenate(([0.0], p.coeffs / (k + 1))))


def derivative(p: Poly) -> Poly:
    k = np.arange(1, len(p.coeffs))
    return Poly(p.coeffs[1:] * k)


class BiPoly:
    """Kernel polynomial D(t, s) = sum_jk c[j][k] t**j s**k."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        arr = np.atleast_2d(np.array(coeffs, dtype=float))
        if arr.ndim != 2:
            raise ValueError("BiPoly coefficients must be a 2-D grid")
        if arr.size == 0:
            arr = np.zeros((1, 1))
        if not np.all(np.isfinite(arr)):
            raise ValueError("kernel coefficients must be finite")
        object.__setattr__(self, "coeffs", _as_readonly(arr))

    def __setattr__(self, name, value):
        raise AttributeError("BiPoly is immutable")

    def __reduce__(self):
        return (BiPoly, (self.coeffs.copy(),))

    @classmethod
    def constant(cls, value: float) -> BiPoly:
        return cls([[value]])

    def transposed(self) -> BiPoly:
        """(t, s) -> D(s, t)."""
        return BiPoly(self.coeffs.T)

    def deg_t(self) -> int:
        rows = np.flatnonzero(np.any(self.coeffs != 0, axis=1))
        return int(rows[-1]) if rows.size else 0

    def deg_s(self) -> int:
        cols = np.flatnonzero(np.any(self.coeffs != 0, axis=0))
        return int(cols[-1]) if cols.size else 0

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, t, s):
        tp = np.asarray(t, dtype=float)[..., None] ** np.arange(self.coeffs.shape[0])
        sp = np.asarray(s, dtype=float)[..., None] ** np.arange(self.coeffs.shape[1])
        return np.einsum("...j,jk,...k->...", tp, self.coeffs, sp)

    def __eq__(self, other):
        if not isinstance(other, BiPoly):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and bool(np.all(self.coeffs == other.coeffs))

    def __hash__(self):
        return hash((self.coeffs.shape, self.coeffs.tobytes()))

    def to_json(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.coeffs]

    def __repr__(self):
        return f"BiPoly({self.to_json()})"


def kernel_forward(D: BiPoly, p: Poly) -> Poly:
    """Return the polynomial t -> integral_0^t D(t, s) p(s) ds."""
    c = D.coeffs
    J, K = c.shape
    out = np.zeros(J + K + len(p.coeffs))
    for j in range(J):
        for k in range(K):
            if c[j, k] == 0.0:
                continue
            for a, pa in enumerate(p.coeffs):
                out[j + k + a + 1] += c[j, k] * pa / (k + a + 1)
    return Poly(out)


def kernel_backward(D: BiPoly, P: Poly) -> Poly:
    """Return the polynomial t -> integral_t^1 D(t, s) P(s) ds."""
    c = D.coeffs
    J, K = c.shape
    out = np.zeros(J + K + len(P.coeffs))
    for j in range(J):
        for k in range(K):
            if c[j, k] == 0.0:
                continue
            for a, pa in enumerate(P.coeffs):
                w = c[j, k] * pa / (k + a + 1)
                out[j] += w
                out[j + k + a + 1] -= w
    return Poly(out)


PolyVec = tuple  # tuple[Poly, ...]; length is the variable count


def poly_vec(entries: Iterable) -> tuple[Poly, ...]:
    return tuple(_coerce(e) for e in entries)


def inner_Ln(p: Sequence[Poly], q: Sequence[Poly]) -> float:
    """Integral over [0, 1] of sum_i p_i(t) q_i(t)."""
    if len(p) != len(q):
        raise ValueError(f"dimension mismatch: {len(p)} vs {len(q)}")
    return sum(integral_01(mul(a, b)) for a, b in zip(p, q))


class SymPolyMatrix:
    """Symmetric m x m matrix of polynomials, stored by its upper triangle.

    ``entries`` maps (i, j) with i <= j to a Poly; missing entries are zero.
    Indexing with (j, i) returns the same object as (i, j).
    """

    __slots__ = ("m", "_entries")

    def __init__(self, m: int, entries: dict | None = None):
        if m < 1:
            raise ValueError("matrix side must be at least 1")
        store = {}
        for (i, j), p in (entries or {}).items():
            if not (0 <= i < m and 0 <= j < m):
                raise IndexError(f"entry ({i}, {j}) outside a {m}x{m} matrix")
            key = (i, j) if i <= j else (j, i)
            p = _coerce(p)
            if key in store and store[key] != p:
                raise ValueError(f"conflicting values for symmetric entry {key}")
            if not p.is_zero():
                store[key] = p
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "_entries", store)

    def __setattr__(self, name, value):
        raise AttributeError("SymPolyMatrix is immutable")

    def __reduce__(self):
        return (SymPolyMatrix, (self.m, dict(self._entries)))

    @classmethod
    def from_dense(cls, rows: Sequence[Sequence]) -> SymPolyMatrix:
        m = len(rows)
        entries = {}
        for i in range(m):
            for j in range(i, m):
                a, b = _coerce(rows[i][j]), _coerce(rows[j][i])
                if not a.allclose(b, 0.0):
                    raise ValueError(f"matrix is not symmetric at ({i}, {j})")
                entries[(i, j)] = a
        return cls(m, entries)

    @classmethod
    def constant(cls, M) -> SymPolyMatrix:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls.from_dense([[Poly(v) for v in row] for row in M])

    @classmethod
    def identity(cls, m: int) -> SymPolyMatrix:
        return cls(m, {(i, i): Poly(1.0) for i in range(m)})

    @classmethod
    def zeros(cls, m: int) -> SymPolyMatrix:
        return cls(m)

    def __getitem__(self, ij) -> Poly:
        i, j = ij
        if not (0 <= i < self.m and 0 <= j < self.m):
            raise IndexError(ij)
        return self._entries.get((i, j) if i <= j else (j, i), Poly.zero())

    def upper_items(self):
        """Nonzero (i, j), Poly pairs with i <= j."""
        return sorted(self._entries.items())

    def degree(self) -> int:
        return max((p.degree() for p in self._entries.values()), default=0)

    def is_zero(self) -> bool:
        return not self._entries

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.m, self.m))
        for (i, j), p in self._entries.items():
            v = eval_poly(p, t)
            out[..., i, j] = v
            out[..., j, i] = v
        return out

    def __add__(self, other):
        return mat_add(self, other)

    def __eq__(self, other):
        if not isinstance(other, SymPolyMatrix):
            return NotImplemented
        return self.m == other.m and self._entries == other._entries

    def __hash__(self):
        return hash((self.m, tuple(sorted(self._entries.items()))))

    def to_json(self) -> list[list[float]]:
        """Upper triangle, row-major, one coefficient list per entry."""
        return [self[i, j].to_json() for i in range(self.m) for j in range(i, self.m)]

    @classmethod
    def from_json(cls, m: int, data: Sequence) -> SymPolyMatrix:
        expected = m * (m + 1) // 2
        if len(data) != expected:
            raise ValueError(f"expected {expected} upper-triangular entries for side {m}, got {len(data)}")
        it = iter(data)
        return cls(m, {(i, j): Poly(next(it)) for i in range(m) for j in range(i, m)})

    def __repr__(self):
        return f"SymPolyMatrix(m={self.m}, entries={dict(self.upper_items())})"


def mat_add(P: SymPolyMatrix, Q: SymPolyMatrix) -> SymPolyMatrix:
    if P.m != Q.m:
        raise ValueError(f"dimension mismatch: {P.m} vs {Q.m}")
    keys = set(P._entries) | set(Q._entries)
    return SymPolyMatrix(P.m, {k: add(P[k], Q[k]) for k in keys})


def mat_scale(P: SymPolyMatrix, a: float) -> SymPolyMatrix:
    return SymPolyMatrix(P.m, {k: scale(p, a) for k, p in P.upper_items()})


def mat_scale_by_poly(P: SymPolyMatrix, w: Poly) -> SymPolyMatrix:
    return SymPolyMatrix(P.m, {k: mul(p, w) for k, p in P.upper_items()})


def inner_Sm(P: SymPolyMatrix, Q: SymPolyMatrix) -> float:
    """Integral over [0, 1] of Tr(P(t) Q(t))."""
    if P.m != Q.m:
        raise ValueError(f"dimension mismatch: {P.m} vs {Q.m}")
    total = 0.0
    for (i, j), p in P.upper_items():
        v = integral_01(mul(p, Q[i, j]))
        total += v if i == j else 2.0 * v
    return total


def grid(N: int) -> np.ndarray:
    if N < 2:
        raise ValueError("grid needs at least two points")
    return np.linspace(0.0, 1.0, N)


def min_eig_on_grid(P: SymPolyMatrix, N: int) -> float:
    """Smallest eigenvalue of P(t) over the uniform grid k/(N-1), k = 0..N-1."""
    vals = P(grid(N))
    return float(np.linalg.eigvalsh(vals).min())
