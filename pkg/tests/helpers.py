"""Shared hypothesis strategies and random instance generators."""

import numpy as np
from hypothesis import strategies as st

from tvsdp.model import AffineBlock, TvSdp, scalar_block, with_box
from tvsdp.polynomial import BiPoly, Poly, SymPolyMatrix

coef = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def polys(max_deg=4):
    return st.lists(coef, min_size=1, max_size=max_deg + 1).map(Poly)


def bipolys(max_deg=2):
    return st.integers(1, max_deg + 1).flatmap(
        lambda a: st.integers(1, max_deg + 1).flatmap(
            lambda b: st.lists(st.lists(coef, min_size=b, max_size=b), min_size=a, max_size=a).map(BiPoly)
        )
    )


@st.composite
def sym_matrices(draw, m, max_deg=4):
    return SymPolyMatrix(m, {(i, j): draw(polys(max_deg)) for i in range(m) for j in range(i, m)})


@st.composite
def blocks(draw, m=None, n=None, kernels=True):
    m = m if m is not None else draw(st.integers(1, 3))
    n = n if n is not None else draw(st.integers(1, 3))
    A0 = draw(sym_matrices(m, 3))
    A = tuple(draw(sym_matrices(m, 2)) for _ in range(n))
    D = {}
    if kernels:
        for v in range(n):
            if draw(st.booleans()):
                r, c = draw(st.integers(0, m - 1)), draw(st.integers(0, m - 1))
                D[(v, r, c)] = draw(bipolys())
    return AffineBlock(m, A0, A, D)


def random_poly(rng, deg, scale=1.0):
    return Poly(scale * rng.uniform(-1.0, 1.0, deg + 1))


def random_sym(rng, m, deg):
    return SymPolyMatrix(m, {(i, j): random_poly(rng, deg) for i in range(m) for j in range(i, m)})


def random_block(rng, m, n, deg=2, kernels=True):
    A0 = random_sym(rng, m, deg + 1)
    A = tuple(random_sym(rng, m, deg) for _ in range(n))
    D = {}
    if kernels:
        for v in range(n):
            r, c = sorted(rng.integers(0, m, 2))
            D[(v, int(r), int(c))] = BiPoly(rng.uniform(-1, 1, (2, 2)))
    return AffineBlock(m, A0, A, D)


def random_psd(rng, k):
    B = rng.standard_normal((k, k))
    return B @ B.T


def box_instance(n=1, gamma=1.0, c=None):
    """max sum_i int c_i x_i  s.t. gamma - x_i >= 0, gamma + x_i >= 0."""
    c = c or tuple(Poly(1.0) for _ in range(n))
    blocks_ = []
    for i in range(n):
        blocks_.append(scalar_block(n, gamma, {i: -1.0}))
        blocks_.append(scalar_block(n, gamma, {i: 1.0}))
    return TvSdp(n=n, c=tuple(c), blocks=tuple(blocks_), name="box")


def random_instance(seed, n=2, kernels=True):
    """Boxed instance with a strictly feasible point x = 0."""
    rng = np.random.default_rng(seed)
    blocks_ = []
    for _ in range(2):
        blk = random_block(rng, 2, n, deg=1, kernels=kernels)
        A0 = SymPolyMatrix(2, {k: p for k, p in blk.A0.upper_items()})
        shift = SymPolyMatrix(2, {(0, 0): Poly(6.0), (1, 1): Poly(6.0)})
        blocks_.append(AffineBlock(2, A0 + shift, blk.A, blk.D))
    c = tuple(random_poly(rng, 2) for _ in range(n))
    return with_box(TvSdp(n=n, c=c, blocks=tuple(blocks_), name=f"random{seed}"), 2.0)
