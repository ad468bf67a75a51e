"""Builders for the worked instances: a 2-D toy problem, a step-function
counterexample, time-varying max-flow, wireless coverage and a Markowitz
Pareto curve.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .conic import SolverSettings, pointwise_sdp_oracle
from .model import AffineBlock, EqualityConstraint, TvSdp, scalar_block
from .polynomial import BiPoly, Poly, SymPolyMatrix, add, mul, scale

T = Poly([0.0, 1.0])


def _sym(m: int, entries: dict) -> SymPolyMatrix:
    return SymPolyMatrix(m, {k: (v if isinstance(v, Poly) else Poly(v)) for k, v in entries.items()})


# ---------------------------------------------------------------------------
# introductory example


def intro_instance() -> TvSdp:
    """Maximize the integral of <c(t), x(t)> over the unit disk cut by x1 <= (1 - 8t/5)^2.

    The 4x4 block is diag((1 - 8t/5)^2 - x1, [[1, x1, x2], [x1, 1, 0], [x2, 0, 1]]).
    The printed data leaves the lower 3x3 diagonal at zero, which would pin
    x = 0; an identity there gives the disk the accompanying figure shows.
    """
    a = mul(Poly([1.0, -1.6]), Poly([1.0, -1.6]))
    A0 = _sym(4, {(0, 0): a, (1, 1): 1.0, (2, 2): 1.0, (3, 3): 1.0})
    A1 = _sym(4, {(0, 0): -1.0, (1, 2): 1.0})
    A2 = _sym(4, {(1, 3): 1.0})
    c = (Poly([1.0, -9.0, 9.0]), Poly([0.0, 12.0, -34.0, 23.0]))
    return TvSdp(n=2, c=c, blocks=(AffineBlock(4, A0, (A1, A2)),), name="intro")


def example31_instance() -> TvSdp:
    """Constraints (t-1/2)x >= 0, (t-1/2)(x-1) >= 0, 0 <= x <= 1; only a step function is feasible."""
    A0 = _sym(4, {(1, 1): Poly([0.5, -1.0]), (2, 2): 1.0})
    A1 = _sym(4, {(0, 0): Poly([-0.5, 1.0]), (1, 1): Poly([-0.5, 1.0]), (2, 2): -1.0, (3, 3): 1.0})
    return TvSdp(n=1, c=(Poly.zero(),), blocks=(AffineBlock(4, A0, (A1,)),), name="example31")


# ---------------------------------------------------------------------------
# max-flow


@dataclass(frozen=True)
class FlowNetwork:
    """Directed network on nodes 1..num_nodes, source 1 and target num_nodes.

    ``E1`` lists edges whose flow derivative is bounded by ``b_deriv``;
    ``b_cum`` bounds the cumulative flow leaving the source.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    capacities: tuple[Poly, ...]
    E1: tuple[tuple[int, int], ...] = ()
    b_deriv: Poly = field(default_factory=lambda: Poly(0.5))
    b_cum: Poly = field(default_factory=lambda: Poly([0.0, 0.0, 1.0]))

    @property
    def source(self) -> int:
        return 1

    @property
    def target(self) -> int:
        return self.num_nodes


DEFAULT_EDGES = (
    (1, 2), (1, 3), (1, 4),
    (2, 5), (2, 6),
    (3, 5), (3, 6), (3, 7),
    (4, 6), (4, 7),
    (5, 8), (5, 9),
    (6, 8), (6, 9),
    (7, 9),
    (8, 9),
)  # fmt: skip


def capacity_from_coefficients(a1: float, a2: float, a3: float, a4: float) -> Poly:
    """t (a1 + a2 t)^2 + (1 - t)(a3 + a4 t)^2, nonnegative on [0, 1] by construction."""
    p = Poly([a1, a2])
    q = Poly([a3, a4])
    return add(mul(T, mul(p, p)), mul(Poly([1.0, -1.0]), mul(q, q)))


def random_capacities(edge_count: int, seed: int) -> list[Poly]:
    """Capacities for edges in lexicographic order from numpy's PCG64 stream.

    Each edge consumes four consecutive draws of ``Generator.random`` mapped
    to [-1, 1); the stream is reproducible across platforms.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = 2.0 * rng.random(4 * edge_count) - 1.0
    return [capacity_from_coefficients(*draws[4 * e : 4 * e + 4]) for e in range(edge_count)]


def default_network(seed: int = 0) -> FlowNetwork:
    edges = tuple(sorted(DEFAULT_EDGES))
    return FlowNetwork(
        num_nodes=9,
        edges=edges,
        capacities=tuple(random_capacities(len(edges), seed)),
        E1=((1, 4), (5, 9)),
        b_deriv=Poly(0.5),
        b_cum=Poly([0.0, 0.0, 1.0]),
    )


def maxflow_variables(net: FlowNetwork) -> list[str]:
    names = [f"f_{i}_{j}" for i, j in net.edges]
    names += [f"g_{i}_{j}" for i, j in net.E1]
    return names


def maxflow_instance(net: FlowNetwork) -> TvSdp:
    """Flows f_ij for every edge followed by rates g_ij for the edges in E1."""
    if net.source == net.target:
        raise ValueError("source and target must differ")
    if len(net.capacities) != len(net.edges):
        raise ValueError("one capacity per edge is required")
    graph = nx.DiGraph()
    graph.add_nodes_from(range(1, net.num_nodes + 1))
    graph.add_edges_from(net.edges)
    if not nx.has_path(graph, net.source, net.target):
        raise ValueError("target is not reachable from the source")
    for e in net.E1:
        if e not in net.edges:
            raise ValueError(f"derivative-limited edge {e} is not in the edge list")

    fidx = {e: k for k, e in enumerate(net.edges)}
    gidx = {e: len(net.edges) + k for k, e in enumerate(net.E1)}
    n = len(net.edges) + len(net.E1)

    blocks = []
    for e, b in zip(net.edges, net.capacities):
        blocks.append(scalar_block(n, 0.0, {fidx[e]: 1.0}))
        blocks.append(scalar_block(n, b, {fidx[e]: -1.0}))
    for e in net.E1:
        blocks.append(scalar_block(n, net.b_deriv, {gidx[e]: -1.0}))
        blocks.append(scalar_block(n, net.b_deriv, {gidx[e]: 1.0}))
    out_of_source = [fidx[e] for e in net.edges if e[0] == net.source]
    one = BiPoly.constant(1.0)
    blocks.append(scalar_block(n, net.b_cum, {}, {v: BiPoly.constant(-1.0) for v in out_of_source}))

    zero = Poly.zero()
    equalities = []
    for node in range(1, net.num_nodes + 1):
        if node in (net.source, net.target):
            continue
        e = [zero] * n
        touched = False
        for (i, j), k in fidx.items():
            if i == node:
                e[k] = add(e[k], Poly(1.0))
                touched = True
            elif j == node:
                e[k] = add(e[k], Poly(-1.0))
                touched = True
        if touched:
            equalities.append(EqualityConstraint(zero, tuple(e)))
    for edge in net.E1:
        e = [zero] * n
        e[fidx[edge]] = Poly(-1.0)
        equalities.append(EqualityConstraint(zero, tuple(e), {gidx[edge]: one}))

    c = [zero] * n
    for v in out_of_source:
        c[v] = Poly(1.0)
    return TvSdp(n=n, c=tuple(c), blocks=tuple(blocks), equalities=tuple(equalities), name="maxflow")


# ---------------------------------------------------------------------------
# wireless coverage

XYPoly = dict  # (power of x, power of y) -> Poly in t


def xy_mul(p: XYPoly, q: XYPoly) -> XYPoly:
    out: XYPoly = {}
    for (a, b), u in p.items():
        for (c, d), v in q.items():
            key = (a + c, b + d)
            out[key] = add(out.get(key, Poly.zero()), mul(u, v))
    return out


def xy_add(p: XYPoly, q: XYPoly, factor: float = 1.0) -> XYPoly:
    out = dict(p)
    for k, v in q.items():
        out[k] = add(out.get(k, Poly.zero()), scale(v, factor))
    return out


def xy_eval(p: XYPoly, x, y, t):
    return sum(np.asarray(x, dtype=float) ** a * np.asarray(y, dtype=float) ** b * u(t) for (a, b), u in p.items())


def disk_constraint(radius: float, cx: Poly, cy: Poly) -> XYPoly:
    """radius^2 - (x - cx(t))^2 - (y - cy(t))^2 as an XYPoly."""
    return {
        (0, 0): add(Poly(radius**2), scale(add(mul(cx, cx), mul(cy, cy)), -1.0)),
        (1, 0): scale(cx, 2.0),
        (0, 1): scale(cy, 2.0),
        (2, 0): Poly(-1.0),
        (0, 2): Poly(-1.0),
    }


class XYPolyAffine:
    """Map from (x, y)-monomial to an affine expression in the decision functions.

    Each monomial carries a constant Poly in t and Poly coefficients on
    decision variables; the whole map is required to vanish identically.
    """

    def __init__(self, n: int):
        self.n = n
        self.terms: dict = {}

    def _slot(self, mono):
        return self.terms.setdefault(mono, [Poly.zero(), {}])

    def add_constant(self, p: XYPoly, factor: float = 1.0):
        for mono, u in p.items():
            slot = self._slot(mono)
            slot[0] = add(slot[0], scale(u, factor))

    def add_variable(self, var: int, p: XYPoly, factor: float = 1.0):
        for mono, u in p.items():
            slot = self._slot(mono)
            slot[1][var] = add(slot[1].get(var, Poly.zero()), scale(u, factor))

    def equalities(self) -> list[EqualityConstraint]:
        out = []
        zero = Poly.zero()
        for mono in sorted(self.terms):
            const, lin = self.terms[mono]
            if const.is_zero() and all(p.is_zero() for p in lin.values()):
                continue
            e = [zero] * self.n
            for v, p in lin.items():
                e[v] = p
            out.append(EqualityConstraint(const, tuple(e)))
        return out

    def residual(self, x: Sequence[Poly]) -> dict:
        """Per monomial, the t-polynomial obtained by substituting x."""
        out = {}
        for mono, (const, lin) in self.terms.items():
            r = const
            for v, p in lin.items():
                r = add(r, mul(p, x[v]))
            out[mono] = r
        return out


@dataclass(frozen=True)
class WirelessConfig:
    """Transmitters at fixed points; region j is {g_jk(x, y; t) >= 0 for all k}.

    ``regions[j][0]`` must be the outer ball r^2 - x^2 - y^2.
    """

    C: float
    transmitters: tuple[tuple[float, float], ...]
    regions: tuple[tuple[XYPoly, ...], ...]
    r: float
    putinar_degree: int = 1

    @property
    def gram_side(self) -> int:
        d = self.putinar_degree
        return (d + 1) * (d + 2) // 2


def default_wireless_config() -> WirelessConfig:
    r = 10.0
    outer = disk_constraint(r, Poly(0.0), Poly(0.0))
    # unit disks centred at (3t - 3, 5t) and (0, 5t - 1)
    region1 = (outer, disk_constraint(1.0, Poly([-3.0, 3.0]), Poly([0.0, 5.0])))
    region2 = (outer, disk_constraint(1.0, Poly(0.0), Poly([-1.0, 5.0])))
    return WirelessConfig(C=1.0, transmitters=((0.0, 0.0), (5.0, 5.0)), regions=(region1, region2), r=r)


def xy_monomials(degree: int) -> list[tuple[int, int]]:
    """Monomials of total degree <= degree, graded: 1, x, y, x^2, xy, y^2, ..."""
    return [(k - b, b) for k in range(degree + 1) for b in range(k + 1)]


def _distance_sq(tx: float, ty: float) -> XYPoly:
    """(x - tx)^2 + (y - ty)^2."""
    return {k: scale(v, -1.0) for k, v in disk_constraint(0.0, Poly(tx), Poly(ty)).items()}


@dataclass
class WirelessLayout:
    n: int
    power_vars: list[int]
    gram_vars: dict  # (region, k) -> {(a, b): var} for a <= b


def wireless_layout(cfg: WirelessConfig) -> WirelessLayout:
    side = cfg.gram_side
    nT = len(cfg.transmitters)
    var = nT
    gram_vars = {}
    for j, region in enumerate(cfg.regions):
        for k in range(len(region) + 1):
            entries = {}
            for a in range(side):
                for b in range(a, side):
                    entries[(a, b)] = var
                    var += 1
            gram_vars[(j, k)] = entries
    return WirelessLayout(n=var, power_vars=list(range(nT)), gram_vars=gram_vars)


def wireless_instance(cfg: WirelessConfig) -> TvSdp:
    """Minimize total transmit power subject to Putinar certificates of coverage.

    Decision functions: powers c_i(t), then for every region j and multiplier
    k = 0..k_j the upper triangle of the Gram matrix P_jk(t).  The objective
    is stored negated (``sense="minimize"``).
    """
    if cfg.putinar_degree < 1:
        raise ValueError("Putinar multiplier degree must be at least 1")
    lay = wireless_layout(cfg)
    n = lay.n
    side = cfg.gram_side
    blocks = []
    for i in lay.power_vars:
        blocks.append(scalar_block(n, 0.0, {i: 1.0}))
    for (j, k), entries in sorted(lay.gram_vars.items()):
        A = [SymPolyMatrix(side) for _ in range(n)]
        for (a, b), v in entries.items():
            A[v] = SymPolyMatrix(side, {(a, b): Poly(1.0)})
        blocks.append(AffineBlock(side, SymPolyMatrix(side), tuple(A)))
    equalities = [eq for cert in wireless_certificates(cfg) for eq in cert.equalities()]

    c = [Poly.zero()] * n
    for i in lay.power_vars:
        c[i] = Poly(-1.0)
    return TvSdp(n=n, c=tuple(c), blocks=tuple(blocks), equalities=tuple(equalities), sense="minimize", name="wireless")


def wireless_certificates(cfg: WirelessConfig) -> list[XYPolyAffine]:
    """Per region, the identity p_t - v'P_0 v - sum_k g_k v'P_k v = 0 as an XYPolyAffine.

    p_t(x, y) = -C prod_i d_i + sum_i c_i(t) prod_{k != i} d_k, with d_i the
    squared distance to transmitter i.
    """
    lay = wireless_layout(cfg)
    n = lay.n
    monos = xy_monomials(cfg.putinar_degree)
    dists = [_distance_sq(tx, ty) for tx, ty in cfg.transmitters]
    prod_all: XYPoly = {(0, 0): Poly(1.0)}
    for dsq in dists:
        prod_all = xy_mul(prod_all, dsq)
    out = []
    for j, region in enumerate(cfg.regions):
        cert = XYPolyAffine(n)
        cert.add_constant(prod_all, -cfg.C)
        for i in lay.power_vars:
            others: XYPoly = {(0, 0): Poly(1.0)}
            for k, dsq in enumerate(dists):
                if k != i:
                    others = xy_mul(others, dsq)
            cert.add_variable(i, others)
        for k, g in enumerate([{(0, 0): Poly(1.0)}] + list(region)):
            for (a, b), v in lay.gram_vars[(j, k)].items():
                ma, mb = monos[a], monos[b]
                quad = {(ma[0] + mb[0], ma[1] + mb[1]): Poly(1.0 if a == b else 2.0)}
                cert.add_variable(v, xy_mul(quad, g), -1.0)
        out.append(cert)
    return out


def signal_strength(cfg: WirelessConfig, powers: Sequence[Poly], x, y, t):
    """Total received signal sum_i c_i(t) / |(x, y) - T_i|^2; infinite at a transmitter."""
    total = 0.0
    with np.errstate(divide="ignore"):
        for (tx, ty), c in zip(cfg.transmitters, powers):
            total = total + c(t) / ((np.asarray(x) - tx) ** 2 + (np.asarray(y) - ty) ** 2)
    return total


# ---------------------------------------------------------------------------
# Markowitz Pareto curve

DEFAULT_RETURNS = np.array([0.4170, 0.7203, 0.0001, 0.3023, 0.1468])
DEFAULT_COVARIANCE = np.array(
    [
        [6.0127, -0.7381, -0.5441, -4.9189, 1.7855],
        [-0.7381, 9.8904, -0.7946, 0.2481, -5.5214],
        [-0.5441, -0.7946, 5.1961, -3.6240, 1.5820],
        [-4.9189, 0.2481, -3.6240, 10.4637, 1.7840],
        [1.7855, -5.5214, 1.5820, 1.7840, 15.8475],
    ]
)
MAX_CONDITION = 1e12


def markowitz_instance(r, Sigma) -> TvSdp:
    """Variables (x_1..x_n, u); maximize integral r'x(t) with variance u(t) <= t.

    The variance bound is the LMI [[u, x'], [x, Sigma^-1]] >= 0.
    """
    r = np.asarray(r, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    na = len(r)
    if Sigma.shape != (na, na):
        raise ValueError(f"covariance must be {na}x{na}")
    if not np.allclose(Sigma, Sigma.T, rtol=0, atol=0):
        raise ValueError("covariance must be symmetric")
    try:
        cho = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be positive definite") from None
    cond = np.linalg.cond(Sigma)
    if cond > MAX_CONDITION:
        raise ValueError(f"covariance condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    inv_chol = np.linalg.inv(cho)
    Sigma_inv = inv_chol.T @ inv_chol
    Sigma_inv = (Sigma_inv + Sigma_inv.T) / 2

    n = na + 1
    u = na
    blocks = [scalar_block(n, 0.0, {i: 1.0}) for i in range(na)]
    blocks.append(scalar_block(n, 1.0, {i: -1.0 for i in range(na)}))
    blocks.append(scalar_block(n, T, {u: -1.0}))
    m = na + 1
    A0 = SymPolyMatrix(m, {(1 + a, 1 + b): Poly(Sigma_inv[a, b]) for a in range(na) for b in range(a, na)})
    A = [SymPolyMatrix(m, {(0, 1 + i): Poly(1.0)}) for i in range(na)]
    A.append(SymPolyMatrix(m, {(0, 0): Poly(1.0)}))
    blocks.append(AffineBlock(m, A0, tuple(A)))
    c = tuple(Poly(float(ri)) for ri in r) + (Poly.zero(),)
    return TvSdp(n=n, c=c, blocks=tuple(blocks), name="markowitz")


def default_markowitz_instance() -> TvSdp:
    return markowitz_instance(DEFAULT_RETURNS, DEFAULT_COVARIANCE)


def pareto_reference(inst: TvSdp, samples: Sequence[float], settings: SolverSettings | None = None):
    """Exact Pareto points (t, y(t)) by solving the frozen SDP at each sample time."""
    return [(float(t), pointwise_sdp_oracle(inst, float(t), settings)) for t in samples]


# ---------------------------------------------------------------------------

EXAMPLES = ("intro", "example31", "maxflow", "wireless", "markowitz")


def build_example(name: str, seed: int = 0) -> TvSdp:
    if name == "intro":
        return intro_instance()
    if name == "example31":
        return example31_instance()
    if name == "maxflow":
        return maxflow_instance(default_network(seed))
    if name == "wireless":
        return wireless_instance(default_wireless_config())
    if name == "markowitz":
        return default_markowitz_instance()
    raise ValueError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
