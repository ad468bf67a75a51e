"""Primal (best degree-d polynomial) and dual (moment) SDP hierarchies.

Unknowns are always the stacked monomial coefficients of x: column
v*(deg+1) + a holds the coefficient of t**a in x_v.  The primal appends the
svec of each block's Gram pair (Q1, Q2) after them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .conic import (
    CertificateReport,
    ConicProgram,
    ProgramBuilder,
    congruence_svec_map,
    SolveResult,
    SolverSettings,
    smat,
    solve,
    svec,
    svec_index,
    svec_len,
    svec_scale,
    verify_certificate,
)
from .model import (
    TvSdp,
    apply_F,
    block_entry_coefficients,
    equality_coefficients,
    fx_degree,
)
from .polynomial import Poly, inner_Ln, min_eig_on_grid
from .sos import GramShape, gram_basis

log = logging.getLogger(__name__)

MAX_MOMENT_DEGREE = 12


class DecodeError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# coefficient-level Gram and moment maps


def _lambda_coefficient_maps(m: int, half_deg: int) -> dict:
    """(i, j) -> matrix taking svec(Q) to the coefficients of Lambda(Q)_ij."""
    side = m * (half_deg + 1)
    maps = {(i, j): np.zeros((2 * half_deg + 1, svec_len(side))) for i in range(m) for j in range(i, m)}
    for i in range(m):
        for j in range(i, m):
            M = maps[(i, j)]
            for k in range(half_deg + 1):
                for l in range(half_deg + 1):
                    r, s = k * m + i, l * m + j
                    M[k + l, svec_index(r, s, side)] += 1.0 / svec_scale(r, s)
    return maps


def gram_coefficient_maps(m: int, d: int):
    """Per entry (i, j): (M1, M2) with coeffs(alpha(Q1) + beta(Q2))_ij = M1 svec(Q1) + M2 svec(Q2).

    Both matrices have d+1 rows.  M2 has zero columns when d = 0.
    """
    shape = GramShape(d, m)
    out = {}
    lam1 = _lambda_coefficient_maps(m, shape.half_deg_q1)
    w1 = shape.weight_q1().coeffs
    lam2 = _lambda_coefficient_maps(m, shape.half_deg_q2) if shape.half_deg_q2 is not None else None
    w2 = shape.weight_q2().coeffs if lam2 is not None else None
    for key, L1 in lam1.items():
        M1 = _convolve_rows(L1, w1, d + 1)
        if lam2 is None:
            M2 = np.zeros((d + 1, 0))
        else:
            M2 = _convolve_rows(lam2[key], w2, d + 1)
        out[key] = (M1, M2)
    return out


def block_basis(m: int, half_deg: int, weight: Poly) -> np.ndarray:
    """Orthonormal-polynomial basis change for the Gram ordering k*m + i."""
    return np.kron(gram_basis(half_deg, weight), np.eye(m))


def _convolve_rows(M: np.ndarray, w: np.ndarray, rows: int) -> np.ndarray:
    out = np.zeros((rows, M.shape[1]))
    for r, wr in enumerate(w):
        if wr != 0.0:
            out[r : r + M.shape[0]] += wr * M
    return out


def weighted_moments(w: np.ndarray, count: int) -> np.ndarray:
    """mu[q] = integral_0^1 t^q w(t) dt for q = 0..count-1."""
    q = np.arange(count)[:, None]
    r = np.arange(len(w))[None, :]
    return (np.asarray(w)[None, :] / (q + r + 1)).sum(axis=1)


def moment_rows(m: int, half_deg: int, weight: np.ndarray, entries: dict):
    """svec of Lambda*(w * X) as an affine function (h, A) of the unknowns.

    ``entries[(i, j)] = (h_ij, L_ij)`` gives X_ij coefficients as h_ij + L_ij x.
    Returns (const, lin) such that svec(moment matrix) = const + lin @ x.
    """
    side = m * (half_deg + 1)
    deg = max(len(h) for h, _ in entries.values()) - 1
    mu = weighted_moments(weight, 2 * half_deg + deg + 1)
    H = np.array([mu[s : s + deg + 1] for s in range(2 * half_deg + 1)])
    ncols = next(iter(entries.values()))[1].shape[1]
    const = np.zeros(svec_len(side))
    lin = np.zeros((svec_len(side), ncols))
    # per entry, the moment sequence of w * X_ij
    seq = {}
    for key, (h, L) in entries.items():
        Hk = H[:, : len(h)]
        seq[key] = (Hk @ h, Hk @ L)
    for s in range(side):
        for r in range(s, side):
            i, k = r % m, r // m
            j, l = s % m, s // m
            key = (min(i, j), max(i, j))
            sh, sl = seq[key]
            row = svec_index(r, s, side)
            f = svec_scale(r, s)
            const[row] = f * sh[k + l]
            lin[row] = f * sl[k + l]
    return const, lin


# ---------------------------------------------------------------------------
# encodings and solutions


@dataclass
class BlockLayout:
    """Column ranges of a block's Gram pair.

    The solver variables are svec(Q1'), svec(Q2') in the orthonormal basis;
    the monomial Gram matrices are Q = T' Q' T with T = ``basis1``/``basis2``.
    """

    m: int
    degree: int
    q1: slice
    q2: slice
    shape: GramShape
    basis1: np.ndarray
    basis2: np.ndarray


@dataclass
class PrimalEncoding:
    d: int
    n: int
    nx: int
    blocks: list[BlockLayout]
    equality_rows: int
    coefficient_rows: int

    def x_slice(self) -> slice:
        return slice(0, self.nx)


@dataclass
class DualEncoding:
    d: int
    dhat: int
    n: int
    nx: int
    block_groups: list  # per block: (shape, alpha group, beta group or None, T1, T2 or None)
    ranges: dict
    equality_rows: int


@dataclass
class MomentBlock:
    alpha: np.ndarray
    beta: np.ndarray

    def min_eig(self) -> float:
        vals = [np.linalg.eigvalsh(M)[0] for M in (self.alpha, self.beta) if M.size]
        return float(min(vals))


@dataclass
class GramCertificate:
    Q1: list[np.ndarray]
    Q2: list[np.ndarray]
    residuals: list[float]

    @property
    def residual(self) -> float:
        return max(self.residuals, default=0.0)


@dataclass
class HierarchySolution:
    mode: str
    degree: int
    status: str
    objective: float
    x: tuple[Poly, ...] | None = None
    certificate: GramCertificate | None = None
    moment_blocks: list[MomentBlock] | None = None
    solver: SolveResult | None = None
    encoding: object = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "inaccurate")

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "degree": self.degree,
            "status": self.status,
            "objective": _json_float(self.objective),
            "x": [p.to_json() for p in self.x] if self.x is not None else None,
            "certificate": None,
        }
        if self.certificate is not None:
            out["certificate"] = {
                "blocks": [
                    {"Q1": Q1.tolist(), "Q2": Q2.tolist(), "residual": r}
                    for Q1, Q2, r in zip(self.certificate.Q1, self.certificate.Q2, self.certificate.residuals)
                ]
            }
        if self.moment_blocks is not None:
            out["moment_blocks"] = [{"alpha": b.alpha.tolist(), "beta": b.beta.tolist()} for b in self.moment_blocks]
        out.update(self.extra)
        return out


def _json_float(v: float):
    if v is None or math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _objective_vector(inst: TvSdp, deg: int) -> np.ndarray:
    """Coefficient vector of x -> integral <c, x> for x in R^n_deg[t]."""
    q = np.zeros(inst.n * (deg + 1))
    for v, cv in enumerate(inst.c):
        k = np.arange(len(cv.coeffs))
        for a in range(deg + 1):
            q[v * (deg + 1) + a] = float(np.sum(cv.coeffs / (k + a + 1)))
    return q


def _padded_rows(h: np.ndarray, L: np.ndarray, rows: int):
    if len(h) > rows:
        raise ValueError("coefficient vector longer than the certificate degree")
    hp = np.zeros(rows)
    hp[: len(h)] = h
    Lp = np.zeros((rows, L.shape[1]))
    Lp[: L.shape[0]] = L
    return hp, Lp


# ---------------------------------------------------------------------------
# primal


def build_primal(inst: TvSdp, d: int) -> tuple[ConicProgram, PrimalEncoding]:
    """Best polynomial solution of degree d as an SDP.

    For every block with d' = fx_degree(block, d), every upper-triangular
    entry and every power 0..d', the coefficient of Fx must equal that of
    alpha_{d'}(Q1) + beta_{d'}(Q2) with Q1, Q2 PSD.
    """
    if d < 0:
        raise ValueError("degree must be nonnegative")
    n = inst.n
    nx = n * (d + 1)
    layouts = []
    col = nx
    for blk in inst.blocks:
        dp = fx_degree(blk, d)
        shape = GramShape(dp, blk.m)
        s1, s2 = svec_len(shape.size_q1), svec_len(shape.size_q2)
        # monomial Gram basis: coefficient matching stays exact and well scaled
        T1 = np.eye(shape.size_q1)
        T2 = np.eye(shape.size_q2)
        layouts.append(BlockLayout(blk.m, dp, slice(col, col + s1), slice(col + s1, col + s1 + s2), shape, T1, T2))
        col += s1 + s2
    nz = col
    pb = ProgramBuilder(nz)

    coeff_rows = 0
    for blk, lay in zip(inst.blocks, layouts):
        maps = gram_coefficient_maps(blk.m, lay.degree)
        S1 = congruence_svec_map(lay.basis1.T)
        S2 = congruence_svec_map(lay.basis2.T) if lay.shape.size_q2 else None
        rows_A, rows_b = [], []
        for i in range(blk.m):
            for j in range(i, blk.m):
                h, L = block_entry_coefficients(blk, i, j, d)
                h, L = _padded_rows(h, L, lay.degree + 1)
                M1, M2 = maps[(i, j)]
                A = sp.lil_matrix((lay.degree + 1, nz))
                A[:, :nx] = L
                A[:, lay.q1] = -(M1 @ S1)
                if M2.shape[1]:
                    A[:, lay.q2] = -(M2 @ S2)
                rows_A.append(A.tocsr())
                rows_b.append(-h)
        A = sp.vstack(rows_A)
        coeff_rows += A.shape[0]
        pb.add_zero(A, np.concatenate(rows_b))

    eq_rows = 0
    for eq in inst.equalities:
        h, L = equality_coefficients(eq, d)
        A = sp.hstack([sp.csr_matrix(L), sp.csr_matrix((L.shape[0], nz - nx))])
        pb.add_zero(A, -h, dedupe=True)
        eq_rows += L.shape[0]

    for lay in layouts:
        for sl, size in ((lay.q1, lay.shape.size_q1), (lay.q2, lay.shape.size_q2)):
            if size == 0:
                continue
            k = sl.stop - sl.start
            A = sp.csr_matrix((-np.ones(k), (np.arange(k), np.arange(sl.start, sl.stop))), shape=(k, nz))
            pb.add_psd(size, A, np.zeros(k))

    q = np.zeros(nz)
    q[:nx] = -_objective_vector(inst, d)
    prog, _ = pb.build(q)
    enc = PrimalEncoding(d=d, n=n, nx=nx, blocks=layouts, equality_rows=eq_rows, coefficient_rows=coeff_rows)
    return prog, enc


def _x_from(z: np.ndarray, n: int, deg: int) -> tuple[Poly, ...]:
    return tuple(Poly(z[v * (deg + 1) : (v + 1) * (deg + 1)]) for v in range(n))


def _check_objective(inst: TvSdp, x, result: SolveResult) -> float:
    value = inner_Ln(inst.c, x)
    solver_value = -result.objective
    if abs(value - solver_value) > 1e-6 * (1.0 + abs(value)):
        raise DecodeError(f"objective mismatch: recomputed {value}, solver {solver_value}")
    return value


def decode_primal(result: SolveResult, enc: PrimalEncoding, inst: TvSdp) -> HierarchySolution:
    if result.status not in ("optimal", "inaccurate") or result.z is None:
        raise DecodeError(f"cannot decode a solve with status {result.status!r}")
    z = result.z
    x = _x_from(z, enc.n, enc.d)
    value = _check_objective(inst, x, result)
    Q1s, Q2s, res = [], [], []
    zx = z[: enc.nx]
    for blk, lay in zip(inst.blocks, enc.blocks):
        Q1 = lay.basis1.T @ smat(z[lay.q1]) @ lay.basis1
        Q2 = lay.basis2.T @ smat(z[lay.q2]) @ lay.basis2 if lay.shape.size_q2 else np.zeros((0, 0))
        maps = gram_coefficient_maps(blk.m, lay.degree)
        worst = 0.0
        for i in range(blk.m):
            for j in range(i, blk.m):
                h, L = _padded_rows(*block_entry_coefficients(blk, i, j, enc.d), lay.degree + 1)
                M1, M2 = maps[(i, j)]
                diff = h + L @ zx - M1 @ svec(Q1)
                if M2.shape[1]:
                    diff -= M2 @ svec(Q2)
                worst = max(worst, float(np.abs(diff).max()))
        Q1s.append(Q1)
        Q2s.append(Q2)
        res.append(worst)
    return HierarchySolution(
        mode="primal",
        degree=enc.d,
        status=result.status,
        objective=value,
        x=x,
        certificate=GramCertificate(Q1s, Q2s, res),
        solver=result,
        encoding=enc,
    )


# ---------------------------------------------------------------------------
# dual


def dual_degree(inst: TvSdp, d: int) -> int:
    """Degree of x that suffices for the level-d dual (moment matching)."""
    deg_c = max((p.degree() for p in inst.c), default=0)
    deg_a, deg_d = 0, None
    for blk in inst.blocks:
        for Ai in blk.A:
            deg_a = max(deg_a, Ai.degree())
        for D in blk.D.values():
            deg_d = max(deg_d or 0, D.deg_t() + D.deg_s())
    for eq in inst.equalities:
        for e in eq.e:
            deg_a = max(deg_a, e.degree())
        for K in eq.k.values():
            deg_d = max(deg_d or 0, K.deg_t() + K.deg_s())
    out = max(deg_c, d + deg_a)
    if deg_d is not None:
        out = max(out, d + 1 + deg_d)
    return out


def build_dual(inst: TvSdp, d: int) -> tuple[ConicProgram, DualEncoding]:
    """Level-d dual: alpha*_d(Fx) and beta*_d(Fx) PSD for every block.

    x ranges over polynomials of degree ``dual_degree(inst, d)``.  Equalities
    contribute alpha*_d(e) = beta*_d(e) = 0 as rows.  No box is added here.
    Every moment matrix M enters as T M T' with T from ``block_basis``.
    """
    if d < 0:
        raise ValueError("level must be nonnegative")
    n = inst.n
    dhat = dual_degree(inst, d)
    nx = n * (dhat + 1)
    pb = ProgramBuilder(nx)

    eq_rows = 0
    for eq in inst.equalities:
        h, L = equality_coefficients(eq, dhat)
        shape = GramShape(d, 1)
        for hd, w in ((shape.half_deg_q1, shape.weight_q1()), (shape.half_deg_q2, shape.weight_q2())):
            if hd is None:
                continue
            const, lin = moment_rows(1, hd, w.coeffs, {(0, 0): (h, L)})
            S = congruence_svec_map(block_basis(1, hd, w))
            pb.add_zero(S @ lin, -(S @ const), dedupe=True)
            eq_rows += len(const)

    groups = []
    for blk in inst.blocks:
        shape = GramShape(d, blk.m)
        entries = {(i, j): block_entry_coefficients(blk, i, j, dhat) for i in range(blk.m) for j in range(i, blk.m)}
        T1 = block_basis(blk.m, shape.half_deg_q1, shape.weight_q1())
        S = congruence_svec_map(T1)
        const, lin = moment_rows(blk.m, shape.half_deg_q1, shape.weight_q1().coeffs, entries)
        ga = pb.add_psd(shape.size_q1, -(S @ lin), S @ const)
        gb, T2 = None, None
        if shape.half_deg_q2 is not None:
            T2 = block_basis(blk.m, shape.half_deg_q2, shape.weight_q2())
            S = congruence_svec_map(T2)
            const, lin = moment_rows(blk.m, shape.half_deg_q2, shape.weight_q2().coeffs, entries)
            gb = pb.add_psd(shape.size_q2, -(S @ lin), S @ const)
        groups.append((shape, ga, gb, T1, T2))

    q = -_objective_vector(inst, dhat)
    prog, ranges = pb.build(q)
    enc = DualEncoding(d=d, dhat=dhat, n=n, nx=nx, block_groups=groups, ranges=ranges, equality_rows=eq_rows)
    return prog, enc


def decode_dual(result: SolveResult, enc: DualEncoding, inst: TvSdp) -> HierarchySolution:
    if result.status not in ("optimal", "inaccurate") or result.z is None:
        raise DecodeError(f"cannot decode a solve with status {result.status!r}")
    x = _x_from(result.z, enc.n, enc.dhat)
    value = _check_objective(inst, x, result)
    s = result.s if result.s is not None else None
    blocks = []
    for shape, ga, gb, T1, T2 in enc.block_groups:
        mats = []
        for g, size, T in ((ga, shape.size_q1, T1), (gb, shape.size_q2, T2)):
            if g is None:
                mats.append(np.zeros((0, 0)))
                continue
            lo, hi = enc.ranges[g]
            M = np.array([[s[lo]]]) if size == 1 else smat(s[lo:hi])
            # back to the monomial moment matrix
            Tinv = np.linalg.inv(T)
            mats.append(Tinv @ M @ Tinv.T)
        blocks.append(MomentBlock(*mats))
    return HierarchySolution(
        mode="dual",
        degree=enc.d,
        status=result.status,
        objective=value,
        x=x,
        moment_blocks=blocks,
        solver=result,
        encoding=enc,
        extra={"dual_degree": enc.dhat},
    )


# ---------------------------------------------------------------------------
# drivers


def _failed_solution(mode: str, d: int, result: SolveResult, enc) -> HierarchySolution:
    value = {"infeasible": -math.inf, "unbounded": math.inf}.get(result.status, math.nan)
    return HierarchySolution(mode=mode, degree=d, status=result.status, objective=value, solver=result, encoding=enc)


def solve_primal(inst: TvSdp, d: int, settings: SolverSettings | None = None) -> HierarchySolution:
    prog, enc = build_primal(inst, d)
    result = solve(prog, settings)
    if result.status not in ("optimal", "inaccurate"):
        return _failed_solution("primal", d, result, enc)
    return decode_primal(result, enc, inst)


def solve_dual(inst: TvSdp, d: int, settings: SolverSettings | None = None) -> HierarchySolution:
    prog, enc = build_dual(inst, d)
    result = solve(prog, settings)
    if result.status not in ("optimal", "inaccurate"):
        return _failed_solution("dual", d, result, enc)
    return decode_dual(result, enc, inst)


def match_moments(f_moments, d: int) -> Poly:
    """Degree-d polynomial p with integral_0^1 t^i p(t) dt = f_moments[i], i = 0..d."""
    if d < 0:
        raise ValueError("degree must be nonnegative")
    if d > MAX_MOMENT_DEGREE:
        raise ValueError(f"degree {d} exceeds {MAX_MOMENT_DEGREE}; the Hilbert matrix is too ill-conditioned")
    m = np.asarray(f_moments, dtype=float)
    if m.shape != (d + 1,):
        raise ValueError(f"need exactly {d + 1} moments, got {m.shape}")
    H = scipy.linalg.hilbert(d + 1)
    # (p_0..p_d) H = (m_0..m_d); H is symmetric so H p = m
    return Poly(scipy.linalg.solve(H, m, assume_a="gen"))


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    blocks: list[CertificateReport]
    grid_min_eigs: list[float]
    equality_residuals: list[float]
    tol: float
    grid_points: int

    @property
    def passed(self) -> bool:
        return (
            all(b.passed for b in self.blocks)
            and all(e >= -self.tol for e in self.grid_min_eigs)
            and all(r <= self.tol for r in self.equality_residuals)
        )

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "grid_points": self.grid_points,
            "blocks": [b.as_dict() for b in self.blocks],
            "grid_min_eigs": self.grid_min_eigs,
            "equality_residuals": self.equality_residuals,
        }


def verify_solution(
    inst: TvSdp,
    x,
    certificate: GramCertificate | None = None,
    tol: float = 1e-6,
    grid_points: int = 1001,
) -> VerificationReport:
    """Independent check of a trajectory: Gram identities, equalities, grid PSD.

    Without a certificate only the grid and equality checks apply.
    """
    if len(x) != inst.n:
        raise ValueError(f"expected {inst.n} trajectories, got {len(x)}")
    reports, grid_eigs = [], []
    for k, blk in enumerate(inst.blocks):
        if certificate is not None:
            rep = verify_certificate(blk, x, certificate.Q1[k], certificate.Q2[k], tol=tol, grid_points=grid_points)
            reports.append(rep)
            grid_eigs.append(rep.grid_min_eig)
        else:
            grid_eigs.append(float(min_eig_on_grid(apply_F(blk, x), grid_points)))
    eq_res = [float(np.abs(eq.apply(x).coeffs).max()) for eq in inst.equalities]
    return VerificationReport(reports, grid_eigs, eq_res, tol, grid_points)


def solution_from_json(data: dict) -> tuple[tuple[Poly, ...] | None, GramCertificate | None]:
    """Trajectory and (if present) Gram certificate from ``HierarchySolution.to_json`` output."""
    x = data.get("x")
    traj = tuple(Poly(c) for c in x) if x is not None else None
    cert = None
    if data.get("certificate"):
        blocks = data["certificate"]["blocks"]
        cert = GramCertificate(
            [np.array(b["Q1"], dtype=float).reshape(_square(b["Q1"])) for b in blocks],
            [np.array(b["Q2"], dtype=float).reshape(_square(b["Q2"])) for b in blocks],
            [float(b["residual"]) for b in blocks],
        )
    return traj, cert


def _square(rows) -> tuple[int, int]:
    return (len(rows), len(rows))
