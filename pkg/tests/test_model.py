import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from helpers import blocks, box_instance, polys, random_block, random_poly, random_sym
from tvsdp.model import (
    AffineBlock,
    EqualityConstraint,
    InstanceError,
    TvSdp,
    adjoint_F,
    apply_F,
    block_entry_coefficients,
    equality_coefficients,
    fx_degree,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
    scalar_block,
    with_box,
)
from tvsdp.polynomial import BiPoly, Poly, SymPolyMatrix, inner_Ln, inner_Sm, integral_01


def _adjoint_gap(blk, x, P):
    Fx = apply_F(blk, x)
    star = adjoint_F(blk, P)
    lhs = inner_Sm(Fx, P)
    rhs = integral_01(star[0]) + inner_Ln(x, star[1:])
    return lhs, rhs


def test_adjoint_identity_200_random_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        blk = random_block(rng, m, n)
        x = tuple(random_poly(rng, int(rng.integers(0, 4))) for _ in range(n))
        P = random_sym(rng, m, int(rng.integers(0, 4)))
        lhs, rhs = _adjoint_gap(blk, x, P)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    assert worst <= 1e-8


@given(blocks(), st.data())
def test_adjoint_identity_property(blk, data):
    x = tuple(data.draw(polys(3)) for _ in range(blk.n))
    P = SymPolyMatrix(blk.m, {(i, j): data.draw(polys(3)) for i in range(blk.m) for j in range(i, blk.m)})
    lhs, rhs = _adjoint_gap(blk, x, P)
    assert lhs == pytest.approx(rhs, abs=1e-8 * max(1.0, abs(lhs)))


def test_asymmetric_kernel_adjoint():
    # D(t, s) = t: F x = int_0^t t x(s) ds; against P = 1 the adjoint is int_s^1 t dt = (1 - s^2) / 2
    blk = AffineBlock(1, SymPolyMatrix(1), (SymPolyMatrix(1),), {(0, 0, 0): BiPoly([[0.0], [1.0]])})
    star = adjoint_F(blk, SymPolyMatrix.identity(1))
    assert star[1].allclose(Poly([0.5, 0.0, -0.5]), atol=1e-14)


@given(blocks(), st.data(), st.floats(0.0, 1.0))
def test_apply_F_against_quadrature(blk, data, t):
    x = tuple(data.draw(polys(2)) for _ in range(blk.n))
    ref = blk.at(t, [xi(t) for xi in x])
    for (v, r, c), D in blk.D.items():
        val, _ = integrate.quad(lambda s: D(t, s) * x[v](s), 0.0, t, epsabs=1e-13)
        ref[r, c] += val
        if r != c:
            ref[c, r] += val
    assert np.allclose(apply_F(blk, x)(t), ref, atol=1e-8)


@given(blocks(), st.integers(0, 4), st.data())
def test_coefficient_form_matches_apply_F(blk, d, data):
    x = tuple(Poly(data.draw(st.lists(st.floats(-1, 1), min_size=d + 1, max_size=d + 1))) for _ in range(blk.n))
    z = np.concatenate([xi.padded(d + 1) for xi in x])
    Fx = apply_F(blk, x)
    for r in range(blk.m):
        for c in range(r, blk.m):
            h, L = block_entry_coefficients(blk, r, c, d)
            assert Poly(h + L @ z).allclose(Fx[r, c], atol=1e-10)
    assert Fx.degree() <= fx_degree(blk, d)


def test_fx_degree_is_exact_for_generic_x():
    rng = np.random.default_rng(3)
    for _ in range(20):
        blk = random_block(rng, 2, 2)
        d = int(rng.integers(0, 4))
        x = tuple(random_poly(rng, d) for _ in range(2))
        assert apply_F(blk, x).degree() == fx_degree(blk, d)


def test_equality_apply_and_coefficients():
    # x_0(t) + int_0^t 2 x_1(s) ds - t = 0
    eq = EqualityConstraint(Poly([0.0, -1.0]), (Poly(1.0), Poly(0.0)), {1: BiPoly([[2.0]])})
    x = (Poly([0.0, 1.0]), Poly([0.0, 1.0]))
    assert eq.apply(x).allclose(Poly([0.0, 0.0, 1.0]))
    h, L = equality_coefficients(eq, 1)
    z = np.concatenate([xi.padded(2) for xi in x])
    assert Poly(h + L @ z).allclose(eq.apply(x))


def test_block_validation_paths():
    with pytest.raises(InstanceError, match="A0"):
        AffineBlock(2, SymPolyMatrix(1), ())
    with pytest.raises(InstanceError, match=r"A\[0\]"):
        AffineBlock(1, SymPolyMatrix(1), (SymPolyMatrix(2),))
    with pytest.raises(InstanceError, match="D"):
        AffineBlock(1, SymPolyMatrix(1), (SymPolyMatrix(1),), {(3, 0, 0): BiPoly([[1.0]])})
    with pytest.raises(InstanceError, match="objective"):
        TvSdp(n=2, c=(Poly(1.0),))
    with pytest.raises(InstanceError, match="sense"):
        TvSdp(n=1, c=(Poly(1.0),), sense="sideways")


def test_zero_kernels_dropped_and_keys_normalized():
    blk = AffineBlock(2, SymPolyMatrix(2), (SymPolyMatrix(2),), {(0, 1, 0): BiPoly([[1.0]]), (0, 0, 0): BiPoly([[0.0]])})
    assert list(blk.D) == [(0, 0, 1)]
    assert blk.kernel(0, 1, 0) is blk.kernel(0, 0, 1)


@given(blocks())
def test_json_round_trip(blk):
    inst = TvSdp(n=blk.n, c=tuple(Poly(float(i)) for i in range(blk.n)), blocks=(blk,), name="r")
    again = instance_from_dict(json.loads(json.dumps(instance_to_dict(inst))))
    assert again == inst


def test_minimize_sense_round_trip(tmp_path):
    inst = TvSdp(n=1, c=(Poly(-2.0),), blocks=(scalar_block(1, 1.0, {0: -1.0}),), sense="minimize", name="m")
    data = instance_to_dict(inst)
    assert data["objective"] == [[2.0]]
    path = tmp_path / "m.json"
    save_instance(inst, path)
    assert load_instance(path) == inst
    assert inst.reported(3.0) == -3.0


@pytest.mark.parametrize(
    "mutate, where",
    [
        (lambda d: d.pop("n"), "n"),
        (lambda d: d.update(n=0), "n"),
        (lambda d: d.update(objective=[[1.0], [2.0]]), "objective"),
        (lambda d: d["blocks"][0].update(m=-1), "blocks[0].m"),
        (lambda d: d["blocks"][0].update(A0=[["x"]]), "blocks[0].A0"),
    ],
)
def test_schema_errors_name_the_path(mutate, where):
    data = instance_to_dict(box_instance(1))
    mutate(data)
    with pytest.raises(InstanceError) as exc:
        instance_from_dict(data)
    assert where in str(exc.value)


def test_with_box():
    inst = box_instance(2, gamma=3.0)
    boxed = with_box(inst, 0.5)
    assert boxed.box == 0.5
    assert len(boxed.blocks) == len(inst.blocks) + 4
    x = (Poly(0.25), Poly(-0.5))
    for blk in boxed.blocks[len(inst.blocks) :]:
        assert apply_F(blk, x)(0.3)[0, 0] >= 0.0
    with pytest.raises(ValueError):
        with_box(inst, 0.0)
