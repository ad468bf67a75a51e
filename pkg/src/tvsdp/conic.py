"""Finite-dimensional conic programs, solver backends and independent checks.

A :class:`ConicProgram` is

    minimize    q' z
    subject to  G z + s = h,   s in K

where K stacks, in this order, a zero cone, a nonnegative orthant and PSD
blocks.  A PSD block of side k occupies k(k+1)/2 rows holding the
lower-triangular part of the matrix column by column, off-diagonal entries
multiplied by sqrt(2) so that the Euclidean inner product of two such vectors
equals the trace inner product of the matrices.  ``svec``/``smat`` are the
only place that convention is spelled out.
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import AffineBlock, TvSdp, apply_F, block_entry_coefficients
from .polynomial import Poly, SymPolyMatrix, add, min_eig_on_grid, scale
from .sos import GramShape, alpha, beta

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
STATUSES = ("optimal", "infeasible", "unbounded", "inaccurate", "failed")


# ---------------------------------------------------------------------------
# vectorization


def svec_len(k: int) -> int:
    return k * (k + 1) // 2


def svec_index(i: int, j: int, k: int) -> int:
    """Row of entry (i, j) of a side-k block; order is irrelevant."""
    if i < j:
        i, j = j, i
    # column j starts after columns 0..j-1, which hold k, k-1, ... entries
    return j * k - j * (j - 1) // 2 + (i - j)


def svec(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    out = np.empty(svec_len(k))
    p = 0
    for j in range(k):
        out[p] = S[j, j]
        out[p + 1 : p + k - j] = SQRT2 * S[j + 1 :, j]
        p += k - j
    return out


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    k = int(round((math.sqrt(8 * len(v) + 1) - 1) / 2))
    if svec_len(k) != len(v):
        raise ValueError(f"length {len(v)} is not triangular")
    S = np.empty((k, k))
    p = 0
    for j in range(k):
        S[j, j] = v[p]
        col = v[p + 1 : p + k - j] / SQRT2
        S[j + 1 :, j] = col
        S[j, j + 1 :] = col
        p += k - j
    return S


def congruence_svec_map(T: np.ndarray) -> np.ndarray:
    """Matrix S with svec(T M T') = S svec(M) for symmetric M."""
    n_in = svec_len(T.shape[1])
    cols = []
    for p in range(n_in):
        e = np.zeros(n_in)
        e[p] = 1.0
        cols.append(svec(T @ smat(e) @ T.T))
    return np.column_stack(cols) if cols else np.zeros((svec_len(T.shape[0]), 0))


def svec_scale(i: int, j: int) -> float:
    return 1.0 if i == j else SQRT2


# ---------------------------------------------------------------------------
# program and builder


@dataclass
class ConicProgram:
    q: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    n_zero: int = 0
    n_nonneg: int = 0
    psd: tuple[int, ...] = ()

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.G = sp.csc_matrix(self.G)
        self.psd = tuple(int(k) for k in self.psd)
        rows = self.n_zero + self.n_nonneg + sum(svec_len(k) for k in self.psd)
        if self.G.shape != (rows, len(self.q)):
            raise ValueError(f"G has shape {self.G.shape}, cones need ({rows}, {len(self.q)})")
        if len(self.h) != rows:
            raise ValueError(f"h has length {len(self.h)}, cones need {rows}")
        if any(k < 1 for k in self.psd):
            raise ValueError("PSD block sides must be at least 1")

    @property
    def num_vars(self) -> int:
        return len(self.q)

    @property
    def num_rows(self) -> int:
        return self.G.shape[0]

    def psd_offsets(self) -> list[int]:
        off = self.n_zero + self.n_nonneg
        out = []
        for k in self.psd:
            out.append(off)
            off += svec_len(k)
        return out


class ProgramBuilder:
    """Collects row groups and assembles a ConicProgram in cone order.

    Each ``add_*`` call takes a (rows x num_vars) matrix ``A`` and vector
    ``b`` meaning s = b - A z.  Returns the group id so callers can find
    their rows (and dual multipliers) afterwards.
    """

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self._zero: list = []
        self._nonneg: list = []
        self._psd: list = []

    def add_zero(self, A, b, dedupe: bool = False) -> tuple[str, int]:
        A = sp.csr_matrix(A)
        b = np.asarray(b, dtype=float)
        if dedupe:
            A, b = _drop_duplicate_rows(A, b)
        self._zero.append((A, b))
        return ("zero", len(self._zero) - 1)

    def add_nonneg(self, A, b) -> tuple[str, int]:
        self._nonneg.append((sp.csr_matrix(A), np.asarray(b, dtype=float)))
        return ("nonneg", len(self._nonneg) - 1)

    def add_psd(self, side: int, A, b) -> tuple[str, int]:
        A = sp.csr_matrix(A)
        if A.shape[0] != svec_len(side):
            raise ValueError(f"PSD block of side {side} needs {svec_len(side)} rows, got {A.shape[0]}")
        if side == 1:
            return self.add_nonneg(A, b)
        self._psd.append((side, A, np.asarray(b, dtype=float)))
        return ("psd", len(self._psd) - 1)

    def build(self, q) -> tuple[ConicProgram, dict]:
        groups = [("zero", g) for g in self._zero] + [("nonneg", g) for g in self._nonneg]
        groups += [("psd", (A, b)) for _, A, b in self._psd]
        mats = [g[1][0] for g in groups]
        vecs = [g[1][1] for g in groups]
        G = sp.vstack(mats, format="csc") if mats else sp.csc_matrix((0, self.num_vars))
        h = np.concatenate(vecs) if vecs else np.zeros(0)
        # row ranges for each group id
        ranges: dict = {}
        off = 0
        counters = {"zero": 0, "nonneg": 0, "psd": 0}
        for kind, (A, _) in groups:
            ranges[(kind, counters[kind])] = (off, off + A.shape[0])
            counters[kind] += 1
            off += A.shape[0]
        prog = ConicProgram(
            q=np.asarray(q, dtype=float),
            G=G,
            h=h,
            n_zero=sum(A.shape[0] for A, _ in self._zero),
            n_nonneg=sum(A.shape[0] for A, _ in self._nonneg),
            psd=tuple(side for side, _, _ in self._psd),
        )
        return prog, ranges


def _drop_duplicate_rows(A: sp.csr_matrix, b: np.ndarray):
    """Remove exact duplicate (row, rhs) pairs and all-zero rows with zero rhs."""
    A = A.tocsr()
    A.sort_indices()
    seen = set()
    keep = []
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        idx, val = A.indices[lo:hi], A.data[lo:hi]
        mask = val != 0
        key = (idx[mask].tobytes(), val[mask].tobytes(), float(b[r]))
        if not mask.any() and b[r] == 0.0:
            continue
        if key in seen:
            continue
        seen.add(key)
        keep.append(r)
    return A[keep], b[keep]


# ---------------------------------------------------------------------------
# solving


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 200
    backend: str | None = None
    verbose: bool = False

    def resolved_backend(self) -> str:
        name = (self.backend or os.environ.get("TVSDP_BACKEND") or "clarabel").lower()
        if name not in BACKENDS:
            raise ValueError(f"unknown backend {name!r}; available: {sorted(BACKENDS)}")
        return name


@dataclass
class SolveResult:
    status: str
    z: np.ndarray | None = None
    objective: float = math.nan
    y: np.ndarray | None = None
    s: np.ndarray | None = None
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    iterations: int = 0
    backend: str = ""
    raw_status: str = ""
    extra: dict = field(default_factory=dict)


def independent_zero_rows(prog: ConicProgram, rtol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal independent subset of the rows of [G_zero | h_zero].

    A dropped row is a combination of kept rows including its right-hand
    side, so removing it leaves the feasible set unchanged.  Inconsistent
    rows are independent in the augmented matrix and are therefore kept.
    """
    import scipy.linalg

    if prog.n_zero == 0:
        return np.zeros(0, dtype=int)
    aug = np.hstack([prog.G[: prog.n_zero].toarray(), prog.h[: prog.n_zero, None]])
    _, R, piv = scipy.linalg.qr(aug.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > rtol * diag[0]))
    return np.sort(piv[:rank])


def independent_columns(prog: ConicProgram, rtol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal set of linearly independent columns of G.

    Returns all columns when some dependent column carries cost that its
    independent representation does not reproduce (the program is then
    unbounded or infeasible and is left to the solver untouched).
    """
    import scipy.linalg

    n = prog.num_vars
    if n == 0 or prog.G.shape[0] == 0:
        return np.arange(n)
    G = prog.G.toarray()
    _, R, piv = scipy.linalg.qr(G, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.arange(n)
    rank = int(np.sum(diag > rtol * diag[0]))
    if rank == n:
        return np.arange(n)
    keep, drop = np.sort(piv[:rank]), np.sort(piv[rank:])
    coef, *_ = np.linalg.lstsq(G[:, keep], G[:, drop], rcond=None)
    if np.abs(prog.q[keep] @ coef - prog.q[drop]).max() > 1e-9 * (1.0 + np.abs(prog.q).max()):
        return np.arange(n)
    return keep


def presolve(prog: ConicProgram) -> tuple[ConicProgram, np.ndarray, np.ndarray]:
    """Drop redundant equality rows and dependent columns.

    Returns the reduced program with the kept row and column indices.
    """
    keep_rows = independent_zero_rows(prog)
    rows = np.concatenate([keep_rows, np.arange(prog.n_zero, prog.G.shape[0])]).astype(int)
    reduced = ConicProgram(
        q=prog.q,
        G=prog.G[rows, :].tocsc(),
        h=prog.h[rows],
        n_zero=keep_rows.size,
        n_nonneg=prog.n_nonneg,
        psd=prog.psd,
    )
    cols = independent_columns(reduced)
    if cols.size < prog.num_vars:
        reduced = ConicProgram(
            q=reduced.q[cols],
            G=reduced.G[:, cols].tocsc(),
            h=reduced.h,
            n_zero=reduced.n_zero,
            n_nonneg=reduced.n_nonneg,
            psd=reduced.psd,
        )
    return reduced, rows, cols


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveResult:
    """Solve with the selected backend after ``presolve``.

    Dropped variables are reported as zero and multipliers of dropped rows as
    zero; both keep the full program's residuals equal to the reduced ones.
    """
    settings = settings or SolverSettings()
    name = settings.resolved_backend()
    reduced, rows, cols = presolve(prog)
    result = BACKENDS[name](reduced, settings)
    result.backend = name
    if rows.size != prog.G.shape[0]:
        result.extra["dropped_rows"] = int(prog.G.shape[0] - rows.size)
    if cols.size != prog.num_vars:
        result.extra["dropped_columns"] = int(prog.num_vars - cols.size)
    if result.z is not None:
        z = np.zeros(prog.num_vars)
        z[cols] = result.z
        result.z = z
    for attr in ("y", "s"):
        v = getattr(result, attr)
        if v is not None:
            full = np.zeros(prog.G.shape[0])
            full[rows] = v
            setattr(result, attr, full)
    if result.z is not None and result.status in ("optimal", "inaccurate"):
        result.objective = float(prog.q @ result.z)
        result.primal_residual, result.dual_residual = residuals(prog, result.z, result.y)
        if result.status == "optimal" and result.primal_residual > 1e-5:
            result.status = "inaccurate"
    if result.status == "inaccurate":
        log.warning("solver %s returned an inaccurate solution (%s)", name, result.raw_status)
    return result


def residuals(prog: ConicProgram, z: np.ndarray, y: np.ndarray | None) -> tuple[float, float]:
    """Relative primal infeasibility (distance of h - Gz to K) and dual residual."""
    s = prog.h - prog.G @ z
    viol = np.abs(s[: prog.n_zero]).max(initial=0.0)
    lo = prog.n_zero
    viol = max(viol, (-s[lo : lo + prog.n_nonneg]).max(initial=0.0))
    for off, k in zip(prog.psd_offsets(), prog.psd):
        ev = np.linalg.eigvalsh(smat(s[off : off + svec_len(k)]))
        viol = max(viol, -ev[0])
    pres = viol / (1.0 + np.abs(prog.h).max(initial=0.0))
    dres = math.nan
    if y is not None:
        dres = float(np.abs(prog.G.T @ y + prog.q).max(initial=0.0) / (1.0 + np.abs(prog.q).max(initial=0.0)))
    return float(pres), dres


def _clarabel_perm(k: int) -> np.ndarray:
    """perm[p] = our row offset of Clarabel's p-th entry (upper triangle, column-major)."""
    perm = []
    for j in range(k):
        for i in range(j + 1):
            perm.append(svec_index(j, i, k))
    return np.array(perm, dtype=int)


# Clarabel configurations tried in order.  Degenerate programs (non-unique
# Gram matrices, rank-deficient optimal faces) sometimes stall under the
# defaults; one of the variants usually converges.
CLARABEL_LADDER = (
    (False, {}),
    (True, {}),
    (False, {"equilibrate_enable": False}),
    (False, {"max_step_fraction": 0.9}),
    (False, {"static_regularization_enable": False}),
    (False, {"static_regularization_constant": 1e-7}),
    (True, {"static_regularization_constant": 1e-7}),
    (True, {"static_regularization_constant": 1e-6}),
)
# KKT error (max of primal residual, dual residual and relative gap, all
# computed here rather than taken from the solver) below which an attempt is
# accepted immediately, and the thresholds for the final status.
CLARABEL_ACCEPT_KKT = 1e-6
KKT_OPTIMAL = 1e-6
KKT_INACCURATE = 1e-4


def kkt_error(prog: ConicProgram, z: np.ndarray, y: np.ndarray) -> float:
    pres, dres = residuals(prog, z, y)
    gap = abs(prog.q @ z + prog.h @ y) / (1.0 + abs(prog.q @ z))
    # y must lie in the dual cone (K is self-dual)
    lo = prog.n_zero
    yviol = (-y[lo : lo + prog.n_nonneg]).max(initial=0.0)
    for off, k in zip(prog.psd_offsets(), prog.psd):
        yviol = max(yviol, -np.linalg.eigvalsh(smat(y[off : off + svec_len(k)]))[0])
    yviol /= 1.0 + np.abs(y).max(initial=0.0)
    return float(max(pres, dres, gap, yviol))


def _solve_clarabel(prog: ConicProgram, settings: SolverSettings) -> SolveResult:
    best = None
    for attempt, (prescale, overrides) in enumerate(CLARABEL_LADDER):
        if prescale:
            result = _solve_prescaled(prog, settings, overrides)
        else:
            result = _solve_clarabel_once(prog, settings, overrides)
        result.extra["attempt"] = attempt
        if result.status in ("infeasible", "unbounded"):
            return result
        if result.z is None or not np.all(np.isfinite(result.z)):
            if best is None:
                best = (math.inf, result)
            continue
        err = kkt_error(prog, result.z, result.y)
        result.extra["kkt_error"] = err
        if best is None or err < best[0]:
            best = (err, result)
        if err <= CLARABEL_ACCEPT_KKT:
            break
    err, result = best
    if math.isfinite(err):
        if err <= KKT_OPTIMAL:
            result.status = "optimal"
        elif err <= KKT_INACCURATE:
            result.status = "inaccurate"
        else:
            result.status = "failed"
    return result


def row_scaling(prog: ConicProgram) -> np.ndarray:
    """Positive row weights: each zero/nonneg row and each PSD block (as a
    whole, so the cone is preserved) divided by its largest entry in [G | h]."""
    Gh = sp.hstack([prog.G, sp.csc_matrix(prog.h[:, None])]).tocsr()
    rowmax = np.zeros(Gh.shape[0])
    for r in range(Gh.shape[0]):
        lo, hi = Gh.indptr[r], Gh.indptr[r + 1]
        if hi > lo:
            rowmax[r] = np.abs(Gh.data[lo:hi]).max()
    w = np.ones(Gh.shape[0])
    lin = prog.n_zero + prog.n_nonneg
    w[:lin] = np.where(rowmax[:lin] > 0, 1.0 / np.where(rowmax[:lin] > 0, rowmax[:lin], 1.0), 1.0)
    for off, k in zip(prog.psd_offsets(), prog.psd):
        top = rowmax[off : off + svec_len(k)].max(initial=0.0)
        if top > 0:
            w[off : off + svec_len(k)] = 1.0 / top
    return w


def _solve_prescaled(prog: ConicProgram, settings: SolverSettings, overrides: dict) -> SolveResult:
    w = row_scaling(prog)
    scaled = ConicProgram(
        q=prog.q,
        G=(sp.diags(w) @ prog.G).tocsc(),
        h=w * prog.h,
        n_zero=prog.n_zero,
        n_nonneg=prog.n_nonneg,
        psd=prog.psd,
    )
    result = _solve_clarabel_once(scaled, settings, overrides)
    # scaled rows: w*(h - Gz) = s', dual G'(w y') + q = 0
    if result.y is not None:
        result.y = w * result.y
    if result.s is not None:
        result.s = result.s / w
    result.extra["prescaled"] = True
    return result


def _solve_clarabel_once(prog: ConicProgram, settings: SolverSettings, overrides: dict) -> SolveResult:
    import clarabel

    order = np.arange(prog.n_zero + prog.n_nonneg)
    parts = [order]
    for off, k in zip(prog.psd_offsets(), prog.psd):
        parts.append(off + _clarabel_perm(k))
    perm = np.concatenate(parts) if parts else np.zeros(0, dtype=int)
    A = prog.G[perm, :].tocsc()
    b = prog.h[perm]
    cones = []
    if prog.n_zero:
        cones.append(clarabel.ZeroConeT(prog.n_zero))
    if prog.n_nonneg:
        cones.append(clarabel.NonnegativeConeT(prog.n_nonneg))
    cones += [clarabel.PSDTriangleConeT(k) for k in prog.psd]

    st = clarabel.DefaultSettings()
    st.verbose = settings.verbose
    st.max_iter = settings.max_iter
    st.tol_feas = settings.tol
    st.tol_gap_abs = settings.tol
    st.tol_gap_rel = settings.tol
    st.tol_infeas_abs = settings.tol
    st.tol_infeas_rel = settings.tol
    st.max_threads = 1
    st.chordal_decomposition_enable = False
    for key, value in overrides.items():
        setattr(st, key, value)
    n = prog.num_vars
    P = sp.csc_matrix((n, n))
    sol = clarabel.DefaultSolver(P, prog.q, A, b, cones, st).solve()

    raw = str(sol.status)
    z = np.array(sol.x)
    y = np.empty(len(perm))
    y[perm] = np.array(sol.z)
    s = np.empty(len(perm))
    s[perm] = np.array(sol.s)
    result = SolveResult(status="failed", raw_status=raw, iterations=int(sol.iterations))
    if raw == "Solved":
        result.status = "optimal"
    elif raw == "AlmostSolved":
        result.status = "inaccurate"
    elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        result.status = "infeasible" if _is_infeasibility_ray(prog, y) else "failed"
    elif raw in ("DualInfeasible", "AlmostDualInfeasible"):
        result.status = "unbounded"
    if result.status == "infeasible":
        result.y = y
    elif result.status != "unbounded" and np.all(np.isfinite(z)) and np.all(np.isfinite(y)):
        # the caller grades the iterate by its KKT error
        result.z, result.y, result.s = z, y, s
    return result


def _is_infeasibility_ray(prog: ConicProgram, y: np.ndarray, tol: float = 1e-6) -> bool:
    """Check a Farkas certificate: G'y = 0, h'y < 0, y in the dual cone."""
    hy = float(prog.h @ y)
    if not hy < 0:
        return False
    y = y / abs(hy)
    if np.abs(prog.G.T @ y).max(initial=0.0) > tol:
        return False
    lo = prog.n_zero
    if (y[lo : lo + prog.n_nonneg] < -tol).any():
        return False
    for off, k in zip(prog.psd_offsets(), prog.psd):
        if np.linalg.eigvalsh(smat(y[off : off + svec_len(k)]))[0] < -tol:
            return False
    return True


def _solve_scs(prog: ConicProgram, settings: SolverSettings) -> SolveResult:
    import scs

    cone = {}
    if prog.n_zero:
        cone["z"] = prog.n_zero
    if prog.n_nonneg:
        cone["l"] = prog.n_nonneg
    if prog.psd:
        cone["s"] = list(prog.psd)
    data = {"A": prog.G.tocsc(), "b": prog.h, "c": prog.q}
    solver = scs.SCS(
        data,
        cone,
        eps_abs=settings.tol,
        eps_rel=settings.tol,
        max_iters=max(settings.max_iter, 100_000),
        verbose=settings.verbose,
    )
    sol = solver.solve()
    raw = sol["info"]["status"]
    z, y, s = np.asarray(sol["x"]), np.asarray(sol["y"]), np.asarray(sol["s"])
    result = SolveResult(status="failed", raw_status=raw, iterations=int(sol["info"]["iter"]))
    if raw == "solved":
        result.status = "optimal"
    elif raw == "solved_inaccurate":
        result.status = "inaccurate"
    elif raw.startswith("infeasible"):
        result.status = "infeasible" if _is_infeasibility_ray(prog, y, 1e-4) else "failed"
    elif raw.startswith("unbounded"):
        result.status = "unbounded"
    if result.status in ("optimal", "inaccurate"):
        result.z, result.y, result.s = z, y, s
    return result


BACKENDS = {"clarabel": _solve_clarabel, "scs": _solve_scs}


# ---------------------------------------------------------------------------
# SDPA sparse format


@dataclass
class SdpaProblem:
    """SDPA data: minimize c'x  s.t.  sum_i F_i x_i - F_0 is PSD.

    ``entries`` holds (matno, blkno, i, j, value) with 1-based indices, i <= j.
    Negative block sizes mark diagonal blocks.
    """

    c: np.ndarray
    block_sizes: list[int]
    entries: list[tuple[int, int, int, int, float]]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def conic_to_sdpa(prog: ConicProgram) -> SdpaProblem:
    """Zero-cone rows become pairs of opposite inequalities in the diagonal block."""
    if prog.num_rows == 0:
        raise ValueError("SDPA needs at least one constraint block")
    G = prog.G.tocsr()
    h = prog.h
    entries: list = []
    blocks: list[int] = []
    n_diag = 2 * prog.n_zero + prog.n_nonneg
    blk = 0

    def emit_row(r: int, blkno: int, i: int, j: int, sign: float, factor: float):
        # s_r = h_r - G_r z  ==>  F_0 = -h_r, F_k = -G_rk (scaled by sign/factor)
        if h[r] != 0.0:
            entries.append((0, blkno, i, j, -sign * h[r] / factor))
        lo, hi = G.indptr[r], G.indptr[r + 1]
        for k, g in zip(G.indices[lo:hi], G.data[lo:hi]):
            if g != 0.0:
                entries.append((int(k) + 1, blkno, i, j, -sign * g / factor))

    if n_diag:
        blk += 1
        blocks.append(-n_diag)
        pos = 1
        for r in range(prog.n_zero):
            emit_row(r, blk, pos, pos, 1.0, 1.0)
            emit_row(r, blk, pos + 1, pos + 1, -1.0, 1.0)
            pos += 2
        for r in range(prog.n_zero, prog.n_zero + prog.n_nonneg):
            emit_row(r, blk, pos, pos, 1.0, 1.0)
            pos += 1
    for off, k in zip(prog.psd_offsets(), prog.psd):
        blk += 1
        blocks.append(k)
        for j in range(k):
            for i in range(j, k):
                emit_row(off + svec_index(i, j, k), blk, j + 1, i + 1, 1.0, svec_scale(i, j))
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    return SdpaProblem(c=prog.q.copy(), block_sizes=blocks, entries=entries)


def format_sdpa(problem: SdpaProblem) -> str:
    lines = [
        str(len(problem.c)),
        str(len(problem.block_sizes)),
        " ".join(str(b) for b in problem.block_sizes),
        " ".join(_fmt(v) for v in problem.c),
    ]
    lines += [f"{m} {b} {i} {j} {_fmt(v)}" for m, b, i, j, v in problem.entries]
    return "\n".join(lines) + "\n"


def export_sdpa(prog: ConicProgram, path) -> None:
    Path(path).write_text(format_sdpa(conic_to_sdpa(prog)))


def parse_sdpa(text: str) -> SdpaProblem:
    lines = [ln.split('"')[0].split("*")[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) < 4:
        raise ValueError("SDPA file needs at least four header lines")
    tok = lambda s: [t for t in re.split(r"[\s,{}()]+", s) if t]
    m = int(tok(lines[0])[0])
    nblocks = int(tok(lines[1])[0])
    sizes = [int(v) for v in tok(lines[2])[:nblocks]]
    c = np.array([float(v) for v in tok(lines[3])[:m]])
    if len(c) != m or len(sizes) != nblocks:
        raise ValueError("inconsistent SDPA header")
    entries = []
    for ln in lines[4:]:
        p = tok(ln)
        matno, blkno, i, j = (int(v) for v in p[:4])
        entries.append((matno, blkno, min(i, j), max(i, j), float(p[4])))
    return SdpaProblem(c=c, block_sizes=sizes, entries=entries)


def read_sdpa(path) -> SdpaProblem:
    return parse_sdpa(Path(path).read_text())


def sdpa_to_conic(problem: SdpaProblem) -> ConicProgram:
    """Inverse of :func:`conic_to_sdpa` (diagonal blocks become nonnegative rows).

    Off-diagonal PSD coefficients are rescaled by sqrt(2) and therefore agree
    with the exported program to rounding, not bit for bit; the SDPA-level
    data round-trips exactly.
    """
    n = len(problem.c)
    rows, cols, vals = [], [], []
    h_parts: dict[int, float] = {}
    row_of: dict = {}
    next_row = 0
    n_nonneg = 0
    psd = []
    for b, size in enumerate(problem.block_sizes, start=1):
        if size < 0:
            for i in range(1, -size + 1):
                row_of[(b, i, i)] = (next_row, 1.0)
                next_row += 1
            n_nonneg += -size
        else:
            psd.append(size)
            for j in range(size):
                for i in range(j, size):
                    row_of[(b, j + 1, i + 1)] = (next_row + svec_index(i, j, size), svec_scale(i, j))
            next_row += svec_len(size)
    for matno, blkno, i, j, v in problem.entries:
        r, f = row_of[(blkno, i, j)]
        if matno == 0:
            h_parts[r] = h_parts.get(r, 0.0) - v * f
        else:
            rows.append(r)
            cols.append(matno - 1)
            vals.append(-v * f)
    G = sp.csc_matrix((vals, (rows, cols)), shape=(next_row, n))
    h = np.zeros(next_row)
    for r, v in h_parts.items():
        h[r] = v
    return ConicProgram(q=problem.c.copy(), G=G, h=h, n_zero=0, n_nonneg=n_nonneg, psd=tuple(psd))


# ---------------------------------------------------------------------------
# certificates and the frozen-time oracle


@dataclass
class CertificateReport:
    degree: int
    coeff_residual: float
    min_eig_Q1: float
    min_eig_Q2: float
    grid_min_eig: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "degree": self.degree,
            "coeff_residual": self.coeff_residual,
            "min_eig_Q1": self.min_eig_Q1,
            "min_eig_Q2": self.min_eig_Q2,
            "grid_min_eig": self.grid_min_eig,
            "passed": self.passed,
        }


def certificate_degree(m: int, Q1: np.ndarray, Q2: np.ndarray) -> int:
    """Recover the certified degree from the Gram matrix sizes."""
    s1, s2 = np.shape(Q1)[0], (np.shape(Q2)[0] if np.size(Q2) else 0)
    if s1 % m or s2 % m or s1 == 0:
        raise ValueError(f"Gram sizes {s1}, {s2} incompatible with side {m}")
    h1, h2 = s1 // m - 1, s2 // m - 1
    if s2 == 0:
        d = 0 if h1 == 0 else None
    elif h1 == h2:
        d = 2 * h1 + 1
    elif h2 == h1 - 1:
        d = 2 * h1
    else:
        d = None
    if d is None:
        raise ValueError(f"Gram sizes {s1}, {s2} do not match any degree for side {m}")
    return d


def verify_certificate(block: AffineBlock, x, Q1, Q2, tol: float = 1e-6, grid_points: int = 1001) -> CertificateReport:
    """Check Fx = alpha(Q1) + beta(Q2) coefficientwise and Q1, Q2 PSD."""
    Q1 = np.atleast_2d(np.asarray(Q1, dtype=float))
    Q2 = np.atleast_2d(np.asarray(Q2, dtype=float)) if np.size(Q2) else np.zeros((0, 0))
    d = certificate_degree(block.m, Q1, Q2)
    X = apply_F(block, x)
    approx = alpha(block.m, d, Q1)
    if GramShape(d, block.m).size_q2:
        approx = approx + beta(block.m, d, Q2)
    res = 0.0
    for i in range(block.m):
        for j in range(i, block.m):
            diff = add(X[i, j], scale(approx[i, j], -1.0))
            res = max(res, float(np.abs(diff.coeffs).max()))
    e1 = float(np.linalg.eigvalsh(Q1)[0])
    e2 = float(np.linalg.eigvalsh(Q2)[0]) if Q2.size else 0.0
    gmin = min_eig_on_grid(X, grid_points)
    return CertificateReport(d, res, e1, e2, gmin, passed=res <= tol and e1 >= -tol and e2 >= -tol)


def frozen_program(inst: TvSdp, t: float) -> tuple[ConicProgram, dict]:
    """Constant SDP obtained by fixing time t (kernel terms are not allowed)."""
    if inst.has_kernels():
        raise ValueError("pointwise oracle needs an instance without kernel terms")
    n = inst.n
    pb = ProgramBuilder(n)
    for eq in inst.equalities:
        row = np.array([float(p(t)) for p in eq.e])
        pb.add_zero(row[None, :], [-float(eq.e0(t))])
    for blk in inst.blocks:
        A = np.column_stack([svec(Ai(t)) for Ai in blk.A]) if n else np.zeros((svec_len(blk.m), 0))
        pb.add_psd(blk.m, -A, svec(blk.A0(t)))
    q = -np.array([float(ci(t)) for ci in inst.c])
    return pb.build(q)


def pointwise_sdp_oracle(inst: TvSdp, t: float, settings: SolverSettings | None = None) -> float:
    """Optimal value of max <c(t), x> s.t. every block frozen at time t is PSD.

    Returns -inf when the frozen problem is infeasible and +inf when it is unbounded.
    """
    prog, _ = frozen_program(inst, t)
    res = solve(prog, settings)
    if res.status in ("optimal", "inaccurate"):
        return -res.objective
    if res.status == "infeasible":
        return -math.inf
    if res.status == "unbounded":
        return math.inf
    raise RuntimeError(f"pointwise solve failed at t={t}: {res.raw_status}")


def entry_polys_at(block: AffineBlock, d: int, z_x: np.ndarray) -> SymPolyMatrix:
    """Fx for x given by its stacked coefficient vector (degree d per variable)."""
    entries = {}
    for r in range(block.m):
        for c in range(r, block.m):
            h, L = block_entry_coefficients(block, r, c, d)
            entries[(r, c)] = Poly(h + L @ z_x)
    return SymPolyMatrix(block.m, entries)
