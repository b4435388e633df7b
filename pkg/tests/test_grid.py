import numpy as np
import pytest

from higgsflow import (MatrixFormField, TorusBase, contract_lambda, d_flat,
                       dbar_adjoint, dbar_flat, integrate, integrate_top_form,
                       l2_norm, pointwise_inner, pointwise_norm2, sup_norm,
                       tr_field, wedge)

E12 = np.array([[0.0, 1.0], [0.0, 0.0]], np.complex128)
E21 = E12.T.copy()


def scalar_field(base, values):
    f = MatrixFormField.zeros(base, 0, 0, 1)
    f.comps[0, 0, ..., 0, 0] = values
    return f


def test_base_invariants():
    base = TorusBase(1, 16)
    assert base.volume == pytest.approx(1.0)
    assert base.injectivity_radius == 0.5
    assert base.spacing == pytest.approx(1.0 / 16)
    with pytest.raises(ValueError):
        TorusBase(3, 16)
    with pytest.raises(ValueError):
        TorusBase(1, 15)
    with pytest.raises(ValueError):
        TorusBase(1, 4)


def test_dbar_of_constant_is_zero():
    base = TorusBase(1, 16)
    f = MatrixFormField.constant(base, np.eye(2))
    assert sup_norm(dbar_flat(f)) == 0.0
    assert sup_norm(d_flat(f)) == 0.0


def test_dbar_trig_mode_second_order():
    # d/dzbar exp(2 pi i x) = i pi exp(2 pi i x), converging at order 2
    errs = {}
    for N in (16, 32):
        base = TorusBase(1, N)
        x = base.axis_coordinate(0) * np.ones(base.shape)
        f = scalar_field(base, np.exp(2j * np.pi * x))
        df = dbar_flat(f)
        expected = 1j * np.pi * np.exp(2j * np.pi * x)
        errs[N] = np.abs(df.comps[0, 0, ..., 0, 0] - expected).max()
    assert errs[32] < errs[16] / 3.5
    assert errs[32] < 0.03


def test_dbar_linearity_exact():
    base = TorusBase(1, 16)
    rng = np.random.default_rng(0)
    f = MatrixFormField(base, 0, 0, rng.standard_normal((1, 1) + base.shape + (2, 2))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2)))
    g = MatrixFormField(base, 0, 0, rng.standard_normal((1, 1) + base.shape + (2, 2))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2)))
    lhs = dbar_flat(f + g)
    rhs = dbar_flat(f) + dbar_flat(g)
    # linear to roundoff: no truncation term, only float reassociation
    assert np.abs(lhs.comps - rhs.comps).max() < 1e-13


def test_dbar_degree_overflow_rejected():
    base = TorusBase(1, 16)
    f = MatrixFormField.zeros(base, 0, 1, 2)
    with pytest.raises(ValueError):
        dbar_flat(f)
    with pytest.raises(ValueError):
        d_flat(MatrixFormField.zeros(base, 1, 0, 2))


def test_dbar_squared_vanishes():
    # centered differences commute; the residual is pure float reassociation
    base = TorusBase(2, 8)
    rng = np.random.default_rng(1)
    f = MatrixFormField(base, 0, 0,
                        rng.standard_normal((1, 1) + base.shape + (2, 2))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2)))
    assert sup_norm(dbar_flat(dbar_flat(f))) < 1e-12
    assert sup_norm(d_flat(d_flat(f))) < 1e-12


def test_wedge_nilpotent_one_form_squares_to_zero():
    base = TorusBase(1, 16)
    phi = MatrixFormField.constant(base, E12, p=1, q=0, index=((0,), ()))
    with pytest.raises(ValueError):
        wedge(phi, phi)  # (2,0) has no slot on a one-torus
    base2 = TorusBase(2, 8)
    phi2 = MatrixFormField.constant(base2, E12, p=1, q=0, index=((0,), ()))
    assert sup_norm(wedge(phi2, phi2)) == 0.0


def test_wedge_sign_convention():
    base = TorusBase(1, 16)
    M = np.array([[1.0, 2.0], [0.0, 1.0]], np.complex128)
    K = np.array([[0.5, 0.0], [1.0, 1.0]], np.complex128)
    A = MatrixFormField.constant(base, M, p=1, q=0, index=((0,), ()))
    B = MatrixFormField.constant(base, K, p=0, q=1, index=((), (0,)))
    ab = wedge(A, B)
    ba = wedge(B, A)
    assert np.allclose(ab.comps[0, 0], M @ K)
    assert np.allclose(ba.comps[0, 0], -(K @ M))


def test_wedge_with_zero_is_zero():
    base = TorusBase(1, 16)
    A = MatrixFormField.constant(base, E12, p=1, q=0, index=((0,), ()))
    Z = MatrixFormField.zeros(base, 0, 1, 2)
    assert sup_norm(wedge(A, Z)) == 0.0


def test_contract_lambda_normalization():
    # Lambda(omega M) = n M under the fixed convention
    for n, N in ((1, 16), (2, 8)):
        base = TorusBase(n, N)
        M = np.array([[2.0, 1.0], [1.0, 3.0]], np.complex128)
        omega_m = MatrixFormField.zeros(base, 1, 1, 2)
        for i in range(n):
            omega_m.comps[i, i] = 0.5j * M
        lam = contract_lambda(omega_m)
        assert np.allclose(lam.comps[0, 0], n * M)


def test_contract_lambda_single_component():
    base = TorusBase(1, 16)
    F = MatrixFormField.constant(base, E12, p=1, q=1, index=((0,), (0,)))
    lam = contract_lambda(F)
    assert np.allclose(lam.comps[0, 0], -2j * E12)


def test_contract_lambda_off_diagonal_vanishes():
    base = TorusBase(2, 8)
    F = MatrixFormField.constant(base, E12, p=1, q=1, index=((0,), (1,)))
    assert sup_norm(contract_lambda(F)) == 0.0


def test_contract_lambda_wrong_degree_rejected():
    base = TorusBase(1, 16)
    with pytest.raises(ValueError):
        contract_lambda(MatrixFormField.zeros(base, 0, 1, 2))


def test_norm_conventions():
    base = TorusBase(1, 16)
    ident = MatrixFormField.constant(base, np.eye(2))
    assert pointwise_norm2(ident).max() == pytest.approx(2.0)
    F = MatrixFormField.constant(base, np.diag([1.0, -1.0]).astype(complex),
                                 p=1, q=1, index=((0,), (0,)))
    assert pointwise_norm2(F).max() == pytest.approx(8.0)
    assert l2_norm(MatrixFormField.zeros(base, 0, 0, 2)) == 0.0


def test_n1_contraction_preserves_norm():
    # |F|^2 = |Lambda F|^2 for (1,1)-forms on a one-torus
    base = TorusBase(1, 16)
    rng = np.random.default_rng(2)
    F = MatrixFormField(base, 1, 1,
                        rng.standard_normal((1, 1) + base.shape + (2, 2))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2)))
    H = np.eye(2) + 0.2 * np.diag([1.0, -1.0])
    Hf = np.broadcast_to(H.astype(complex), base.shape + (2, 2)).copy()
    assert np.allclose(pointwise_norm2(F, Hf),
                       pointwise_norm2(contract_lambda(F), Hf))


def test_integrate_conventions():
    base = TorusBase(1, 16)
    assert integrate(np.ones(base.shape), base) == pytest.approx(1.0)
    assert integrate(3.5, base) == pytest.approx(3.5)
    x = base.axis_coordinate(0) * np.ones(base.shape)
    assert abs(integrate(np.cos(2 * np.pi * x), base)) < 1e-14


def test_integrate_top_form_n1():
    base = TorusBase(1, 16)
    f = MatrixFormField.constant(base, np.array([[1.0]], complex),
                                 p=1, q=1, index=((0,), (0,)))
    assert integrate_top_form(f) == pytest.approx(-2j)


def test_leibniz_second_order():
    errs = {}
    for N in (16, 32):
        base = TorusBase(1, N)
        x = base.axis_coordinate(0) * np.ones(base.shape)
        y = base.axis_coordinate(1) * np.ones(base.shape)
        A = MatrixFormField.zeros(base, 0, 0, 2)
        A.comps[0, 0] = np.cos(2 * np.pi * x)[..., None, None] * np.eye(2) \
            + np.sin(2 * np.pi * y)[..., None, None] * E12
        B = MatrixFormField.zeros(base, 1, 0, 2)
        B.comps[0, 0] = np.sin(2 * np.pi * (x + y))[..., None, None] * (E12 + E21)
        lhs = dbar_flat(wedge(A, B))
        rhs = wedge(dbar_flat(A), B) + wedge(A, dbar_flat(B))
        errs[N] = sup_norm(lhs - rhs)
    assert errs[32] < errs[16] / 3.0


def test_leibniz_sign_for_odd_degree():
    # deg A = 1: dbar(A ^ B) = dbar(A) ^ B - A ^ dbar(B), at second order
    def defect(N):
        base = TorusBase(2, N)
        x = base.axis_coordinate(0) * np.ones(base.shape)
        A = MatrixFormField.zeros(base, 1, 0, 2)
        A.comps[0, 0] = np.cos(2 * np.pi * x)[..., None, None] * E12
        B = MatrixFormField.zeros(base, 0, 0, 2)
        B.comps[0, 0] = np.sin(2 * np.pi * x)[..., None, None] * (E12 + E21) \
            + np.broadcast_to(np.eye(2), base.shape + (2, 2))
        lhs = dbar_flat(wedge(A, B))
        rhs = wedge(dbar_flat(A), B) - wedge(A, dbar_flat(B))
        return sup_norm(lhs - rhs)

    coarse, fine = defect(16), defect(32)
    assert fine < coarse / 3.0
    assert fine < 0.15


def test_integration_by_parts_exact():
    # <dbar a, b> + <a, dbar_adjoint b> = 0 to roundoff for any metric
    base = TorusBase(1, 16)
    rng = np.random.default_rng(4)
    a = MatrixFormField(base, 0, 0,
                        rng.standard_normal((1, 1) + base.shape + (2, 2))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2)))
    b = MatrixFormField(base, 0, 1,
                        rng.standard_normal((1, 1) + base.shape + (2, 2))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2)))
    x = base.axis_coordinate(0) * np.ones(base.shape)
    H = np.exp(0.3 * np.cos(2 * np.pi * x))[..., None, None] * np.eye(2) \
        + 0.1 * np.broadcast_to(E12 + E21, base.shape + (2, 2))
    lhs = integrate(pointwise_inner(dbar_flat(a), b, H), base)
    rhs = integrate(pointwise_inner(a, dbar_adjoint(b, H), H), base)
    assert abs(lhs + rhs) < 1e-12 * (1 + abs(lhs))


def test_determinism_bit_identical():
    base = TorusBase(1, 16)
    rng = np.random.default_rng(5)
    comps = rng.standard_normal((1, 1) + base.shape + (2, 2)) \
        + 1j * rng.standard_normal((1, 1) + base.shape + (2, 2))
    f1 = dbar_flat(MatrixFormField(base, 0, 0, comps.copy()))
    f2 = dbar_flat(MatrixFormField(base, 0, 0, comps.copy()))
    assert np.array_equal(f1.comps, f2.comps)
    assert integrate(pointwise_norm2(f1), base) == integrate(pointwise_norm2(f2), base)


def test_tr_field():
    base = TorusBase(1, 16)
    f = MatrixFormField.constant(base, np.diag([2.0, 3.0]).astype(complex))
    assert np.allclose(tr_field(f).comps[0, 0, ..., 0, 0], 5.0)
