"""TV-SDP instances, the affine constraint operator F and its adjoint.

An instance asks for x : [0, 1] -> R^n maximizing integral_0^1 <c(t), x(t)> dt
subject to, for every block,

    Fx(t) = A0(t) + sum_i x_i(t) A_i(t) + sum_i integral_0^t x_i(s) D_i(t, s) ds  >= 0 (PSD)

and to scalar equalities e0(t) + sum_i e_i(t) x_i(t) + kernel terms = 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .polynomial import (
    BiPoly,
    Poly,
    SymPolyMatrix,
    add,
    kernel_backward,
    kernel_forward,
    mul,
    scale,
)

SCHEMA_VERSION = 1


class InstanceError(ValueError):
    """Malformed or dimensionally inconsistent instance data."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class AffineBlock:
    """One PSD constraint block.

    ``D`` maps (variable, row, col) with row <= col to the kernel entry
    D_variable(t, s)[row, col]; absent keys are zero kernels.
    """

    m: int
    A0: SymPolyMatrix
    A: tuple[SymPolyMatrix, ...]
    D: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A0.m != self.m:
            raise InstanceError("A0", f"side {self.A0.m} != block side {self.m}")
        for i, Ai in enumerate(self.A):
            if Ai.m != self.m:
                raise InstanceError(f"A[{i}]", f"side {Ai.m} != block side {self.m}")
        norm = {}
        for (v, r, c), Dk in self.D.items():
            if not 0 <= v < len(self.A):
                raise InstanceError("D", f"variable index {v} outside 0..{len(self.A) - 1}")
            if not (0 <= r < self.m and 0 <= c < self.m):
                raise InstanceError("D", f"entry ({r}, {c}) outside side {self.m}")
            if not isinstance(Dk, BiPoly):
                Dk = BiPoly(Dk)
            if not Dk.is_zero():
                norm[(v, min(r, c), max(r, c))] = Dk
        object.__setattr__(self, "D", norm)
        object.__setattr__(self, "A", tuple(self.A))

    @property
    def n(self) -> int:
        return len(self.A)

    def kernel(self, v: int, r: int, c: int) -> BiPoly | None:
        return self.D.get((v, min(r, c), max(r, c)))

    def has_kernels(self) -> bool:
        return bool(self.D)

    def entry_data(self, r: int, c: int):
        """(A0[r,c], [A_i[r,c]], {i: D_i[r,c]}) for one matrix entry."""
        kern = {v: D for (v, rr, cc), D in self.D.items() if (rr, cc) == (min(r, c), max(r, c))}
        return self.A0[r, c], [Ai[r, c] for Ai in self.A], kern

    def at(self, t: float, x) -> np.ndarray:
        """Constant matrix A0(t) + sum_i x_i A_i(t) for a frozen time, kernels excluded."""
        M = self.A0(t)
        for xi, Ai in zip(x, self.A):
            M = M + xi * Ai(t)
        return M


@dataclass(frozen=True)
class EqualityConstraint:
    """e0(t) + sum_i e_i(t) x_i(t) + sum_i integral_0^t k_i(t, s) x_i(s) ds = 0 on [0, 1]."""

    e0: Poly
    e: tuple[Poly, ...]
    k: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "e", tuple(self.e))
        norm = {}
        for v, K in self.k.items():
            if not 0 <= v < len(self.e):
                raise InstanceError("k", f"variable index {v} outside 0..{len(self.e) - 1}")
            K = K if isinstance(K, BiPoly) else BiPoly(K)
            if not K.is_zero():
                norm[int(v)] = K
        object.__setattr__(self, "k", norm)

    @property
    def n(self) -> int:
        return len(self.e)

    def apply(self, x) -> Poly:
        out = self.e0
        for v, (ev, xv) in enumerate(zip(self.e, x)):
            out = add(out, mul(ev, xv))
            if v in self.k:
                out = add(out, kernel_forward(self.k[v], xv))
        return out


@dataclass(frozen=True)
class TvSdp:
    """A full instance, always stored in maximization form.

    ``sense`` only records how the problem was posed: for "minimize" the
    objective ``c`` holds the negated cost, so reported values flip sign.
    ``box`` records the bound gamma once ``with_box`` has appended the
    corresponding blocks.
    """

    n: int
    c: tuple[Poly, ...]
    blocks: tuple[AffineBlock, ...] = ()
    equalities: tuple[EqualityConstraint, ...] = ()
    box: float | None = None
    sense: str = "maximize"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(self.c))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        if len(self.c) != self.n:
            raise InstanceError("objective", f"length {len(self.c)} != n = {self.n}")
        for b, blk in enumerate(self.blocks):
            if blk.n != self.n:
                raise InstanceError(f"blocks[{b}].A", f"length {blk.n} != n = {self.n}")
        for q, eq in enumerate(self.equalities):
            if eq.n != self.n:
                raise InstanceError(f"equalities[{q}].e", f"length {eq.n} != n = {self.n}")
        if self.box is not None and not self.box > 0:
            raise InstanceError("box", "must be positive")
        if self.sense not in ("maximize", "minimize"):
            raise InstanceError("sense", f"unknown sense {self.sense!r}")

    def has_kernels(self) -> bool:
        return any(b.has_kernels() for b in self.blocks) or any(e.k for e in self.equalities)

    def reported(self, value: float) -> float:
        """Objective value in the sense the problem was posed."""
        return value if self.sense == "maximize" else -value


# ---------------------------------------------------------------------------
# F, its coefficient maps and its adjoint


def apply_F(block: AffineBlock, x) -> SymPolyMatrix:
    if len(x) != block.n:
        raise ValueError(f"x has length {len(x)}, block expects {block.n}")
    entries = {}
    for r in range(block.m):
        for c in range(r, block.m):
            a0, ai, kern = block.entry_data(r, c)
            out = a0
            for v, (Av, xv) in enumerate(zip(ai, x)):
                if not Av.is_zero():
                    out = add(out, mul(Av, xv))
                if v in kern:
                    out = add(out, kernel_forward(kern[v], xv))
            entries[(r, c)] = out
    return SymPolyMatrix(block.m, entries)


def affine_coefficients(const: Poly, lin, kern: dict, n: int, d: int):
    """Coefficient form of const + sum_v lin[v] x_v + sum_v int_0^t kern[v](t,s) x_v(s) ds.

    The unknowns are the monomial coefficients of x in R^n_d[t], column
    v*(d+1) + a holding the coefficient of t**a in x_v.  Returns
    ``(h, L)`` with ``h`` the constant coefficient vector and ``L`` the
    (deg+1) x n(d+1) linear part, trimmed to the highest power that can be
    nonzero.
    """
    cols = []
    for v in range(n):
        lv = lin[v]
        kv = kern.get(v)
        for a in range(d + 1):
            col = None
            if lv is not None and not lv.is_zero():
                col = np.concatenate((np.zeros(a), lv.coeffs))
            if kv is not None:
                kf = kernel_forward(kv, Poly.monomial(a)).coeffs
                col = kf if col is None else _padd(col, kf)
            cols.append(col)
    deg = const.degree()
    for col in cols:
        if col is not None:
            nz = np.flatnonzero(col)
            if nz.size:
                deg = max(deg, int(nz[-1]))
    h = const.padded(max(deg + 1, len(const.coeffs)))[: deg + 1]
    L = np.zeros((deg + 1, n * (d + 1)))
    for j, col in enumerate(cols):
        if col is not None:
            k = min(len(col), deg + 1)
            L[:k, j] = col[:k]
    return h, L


def _padd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(len(a), len(b))
    out = np.zeros(n)
    out[: len(a)] += a
    out[: len(b)] += b
    return out


def block_entry_coefficients(block: AffineBlock, r: int, c: int, d: int):
    a0, ai, kern = block.entry_data(r, c)
    return affine_coefficients(a0, ai, kern, block.n, d)


def equality_coefficients(eq: EqualityConstraint, d: int):
    return affine_coefficients(eq.e0, list(eq.e), eq.k, eq.n, d)


def fx_degree(block: AffineBlock, d: int) -> int:
    """Degree of Fx for a generic x of degree d.

    Computed from the actual coefficient structure, so it never exceeds
    max(deg A0, max_i deg A_i + d, max_i deg D_i + d + 1) and is exact for
    generic x.
    """
    if d < 0:
        raise ValueError("degree must be nonnegative")
    deg = 0
    for r in range(block.m):
        for c in range(r, block.m):
            h, L = block_entry_coefficients(block, r, c, d)
            deg = max(deg, _effective_degree(h, L))
    return deg


def _effective_degree(h: np.ndarray, L: np.ndarray) -> int:
    rows = np.flatnonzero((h != 0) | np.any(L != 0, axis=1))
    return int(rows[-1]) if rows.size else 0


def equality_degree(eq: EqualityConstraint, d: int) -> int:
    h, L = equality_coefficients(eq, d)
    return _effective_degree(h, L)


def adjoint_F(block: AffineBlock, P: SymPolyMatrix) -> tuple[Poly, ...]:
    """F*P: (Tr(A0 P), Tr(A_i P) + integral_t^1 Tr(D_i(s, t) P(s)) ds for i = 1..n)."""
    if P.m != block.m:
        raise ValueError(f"P has side {P.m}, block has side {block.m}")

    def trace_with(M: SymPolyMatrix) -> Poly:
        out = Poly.zero()
        for (r, c), p in M.upper_items():
            term = mul(p, P[r, c])
            out = add(out, term if r == c else scale(term, 2.0))
        return out

    result = [trace_with(block.A0)] + [trace_with(Ai) for Ai in block.A]
    # swapping the order of integration turns D(t, s) into D(s, t)
    for (v, r, c), Dk in block.D.items():
        term = kernel_backward(Dk.transposed(), P[r, c])
        result[v + 1] = add(result[v + 1], term if r == c else scale(term, 2.0))
    return tuple(result)


def with_box(inst: TvSdp, gamma: float) -> TvSdp:
    """Append 1x1 blocks gamma - x_i >= 0 and gamma + x_i >= 0 for every variable."""
    if not gamma > 0:
        raise ValueError("box bound must be positive")
    n = inst.n
    extra = []
    for i in range(n):
        for sign in (-1.0, 1.0):
            A = [SymPolyMatrix(1) for _ in range(n)]
            A[i] = SymPolyMatrix(1, {(0, 0): Poly(sign)})
            extra.append(AffineBlock(1, SymPolyMatrix(1, {(0, 0): Poly(gamma)}), tuple(A)))
    return replace(inst, blocks=inst.blocks + tuple(extra), box=float(gamma))


def scalar_block(n: int, const, coeffs: dict, kernels: dict | None = None) -> AffineBlock:
    """1x1 block const(t) + sum_v coeffs[v](t) x_v(t) (+ kernel terms) >= 0."""
    A = [SymPolyMatrix(1) for _ in range(n)]
    for v, p in coeffs.items():
        A[v] = SymPolyMatrix(1, {(0, 0): p if isinstance(p, Poly) else Poly(p)})
    D = {(v, 0, 0): K for v, K in (kernels or {}).items()}
    const = const if isinstance(const, Poly) else Poly(const)
    return AffineBlock(1, SymPolyMatrix(1, {(0, 0): const}), tuple(A), D)


# ---------------------------------------------------------------------------
# JSON


def instance_to_dict(inst: TvSdp) -> dict:
    sign = 1.0 if inst.sense == "maximize" else -1.0
    blocks = []
    for blk in inst.blocks:
        blocks.append(
            {
                "m": blk.m,
                "A0": blk.A0.to_json(),
                "A": [Ai.to_json() for Ai in blk.A],
                "D": [
                    {"i": v, "row": r, "col": c, "coeffs": D.to_json()}
                    for (v, r, c), D in sorted(blk.D.items())
                ],
            }
        )
    equalities = [
        {
            "e0": eq.e0.to_json(),
            "e": [p.to_json() for p in eq.e],
            "k": [{"i": v, "coeffs": K.to_json()} for v, K in sorted(eq.k.items())],
        }
        for eq in inst.equalities
    ]
    out = {
        "n": inst.n,
        "objective": [scale(p, sign).to_json() for p in inst.c],
        "blocks": blocks,
        "equalities": equalities,
        "box": inst.box,
    }
    if inst.sense != "maximize":
        out["sense"] = inst.sense
    if inst.name:
        out["name"] = inst.name
    return out


def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise InstanceError(path, "expected an object")
    if key not in d:
        raise InstanceError(f"{path}.{key}" if path else key, "missing field")
    return d[key]


def _poly(data, path: str) -> Poly:
    if not isinstance(data, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in data):
        raise InstanceError(path, "expected a list of numbers")
    try:
        return Poly(data)
    except ValueError as exc:
        raise InstanceError(path, str(exc)) from None


def _bipoly(data, path: str) -> BiPoly:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise InstanceError(path, "expected a 2-D list of numbers")
    widths = {len(r) for r in data}
    if len(widths) != 1 or 0 in widths:
        raise InstanceError(path, "rows must be nonempty and of equal length")
    try:
        return BiPoly(data)
    except ValueError as exc:
        raise InstanceError(path, str(exc)) from None


def _sym(m: int, data, path: str) -> SymPolyMatrix:
    if not isinstance(data, list) or len(data) != m * (m + 1) // 2:
        raise InstanceError(path, f"expected {m * (m + 1) // 2} upper-triangular entries")
    it = iter(data)
    entries = {}
    for i in range(m):
        for j in range(i, m):
            entries[(i, j)] = _poly(next(it), f"{path}[{i},{j}]")
    return SymPolyMatrix(m, entries)


def _index(data, upper: int, path: str) -> int:
    if not isinstance(data, int) or isinstance(data, bool) or not 0 <= data < upper:
        raise InstanceError(path, f"expected an integer in 0..{upper - 1}")
    return data


def instance_from_dict(data: dict) -> TvSdp:
    n = _req(data, "n", "")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InstanceError("n", "expected a positive integer")
    sense = data.get("sense", "maximize")
    if sense not in ("maximize", "minimize"):
        raise InstanceError("sense", f"unknown sense {sense!r}")
    sign = 1.0 if sense == "maximize" else -1.0
    obj = _req(data, "objective", "")
    if not isinstance(obj, list) or len(obj) != n:
        raise InstanceError("objective", f"expected {n} polynomials")
    c = tuple(scale(_poly(p, f"objective[{i}]"), sign) for i, p in enumerate(obj))

    blocks = []
    for b, bd in enumerate(data.get("blocks", [])):
        path = f"blocks[{b}]"
        m = _req(bd, "m", path)
        if not isinstance(m, int) or isinstance(m, bool) or m < 1:
            raise InstanceError(f"{path}.m", "expected a positive integer")
        A0 = _sym(m, _req(bd, "A0", path), f"{path}.A0")
        A_raw = _req(bd, "A", path)
        if not isinstance(A_raw, list) or len(A_raw) != n:
            raise InstanceError(f"{path}.A", f"expected {n} matrices")
        A = tuple(_sym(m, a, f"{path}.A[{i}]") for i, a in enumerate(A_raw))
        D = {}
        for q, kd in enumerate(bd.get("D", [])):
            kp = f"{path}.D[{q}]"
            v = _index(_req(kd, "i", kp), n, f"{kp}.i")
            r = _index(_req(kd, "row", kp), m, f"{kp}.row")
            cc = _index(_req(kd, "col", kp), m, f"{kp}.col")
            D[(v, min(r, cc), max(r, cc))] = _bipoly(_req(kd, "coeffs", kp), f"{kp}.coeffs")
        blocks.append(AffineBlock(m, A0, A, D))

    equalities = []
    for q, ed in enumerate(data.get("equalities", [])):
        path = f"equalities[{q}]"
        e0 = _poly(_req(ed, "e0", path), f"{path}.e0")
        e_raw = _req(ed, "e", path)
        if not isinstance(e_raw, list) or len(e_raw) != n:
            raise InstanceError(f"{path}.e", f"expected {n} polynomials")
        e = tuple(_poly(p, f"{path}.e[{i}]") for i, p in enumerate(e_raw))
        k = {}
        for r, kd in enumerate(ed.get("k", [])):
            kp = f"{path}.k[{r}]"
            k[_index(_req(kd, "i", kp), n, f"{kp}.i")] = _bipoly(_req(kd, "coeffs", kp), f"{kp}.coeffs")
        equalities.append(EqualityConstraint(e0, e, k))

    box = data.get("box")
    if box is not None and (not isinstance(box, (int, float)) or isinstance(box, bool) or not box > 0):
        raise InstanceError("box", "expected a positive number or null")
    return TvSdp(
        n=n,
        c=c,
        blocks=tuple(blocks),
        equalities=tuple(equalities),
        box=None if box is None else float(box),
        sense=sense,
        name=str(data.get("name", "")),
    )


def save_instance(inst: TvSdp, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")


def load_instance(path) -> TvSdp:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(str(path), f"invalid JSON: {exc}") from None
    return instance_from_dict(data)
