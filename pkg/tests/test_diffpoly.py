"""Tests for the exact differential algebra and the Lenard hierarchy."""
from fractions import Fraction

import pytest

from finitegap import diffpoly as dp
from finitegap.diffpoly import D, u, v, w


def test_constraint_is_differentially_closed():
    assert D(w() ** 2 + u() * v()).is_zero()
    # w_x computed by hand from w^2 = 1 - uv
    expected = -(D(u()) * v() + u() * D(v())) / (2 * w())
    assert D(w()) == expected


def test_canonical_form_equality():
    assert w() * w() == 1 - u() * v()
    assert 1 / w() == w() / (1 - u() * v())
    assert (u() + w()) * (u() - w()) == u() ** 2 - 1 + u() * v()


def test_lenard_zero_and_one_match_closed_forms():
    W, U, V = w(), u(), v()
    ux, vx = D(U), D(V)
    wx, wxx = D(W), D(W, 2)
    L0, L1 = dp.lenard(0), dp.lenard(1)
    assert L0.c == -vx / (2 * W)
    assert L0.b == ux / (2 * W)
    assert L0.a == (ux * V - U * vx) / (2 * W)
    assert L1.c == (D(V, 2) * W - V * wxx) / (4 * W)
    assert L1.b == (D(U, 2) * W - U * wxx) / (4 * W)
    assert L1.a == (-2 * wxx - 3 * W * (ux * vx + wx ** 2)) / (4 * W)


def test_first_flows():
    W, U, V = w(), u(), v()
    wx, wxx = D(W), D(W, 2)
    ut, vt = dp.hierarchy_rhs(0)
    assert ut == D(U) and vt == D(V)
    ut, vt = dp.hierarchy_rhs(1)
    assert ut == (D(U, 2) * W - U * wxx) / 2
    assert vt == (wxx * V - W * D(V, 2)) / 2
    ut, vt = dp.hierarchy_rhs(2)
    q = D(U) * D(V) + wx ** 2
    assert ut == D(U, 3) / 4 + Fraction(3, 8) * D(U * q)
    assert vt == D(V, 3) / 4 + Fraction(3, 8) * D(V * q)


@pytest.mark.parametrize("n", [1, 2])
def test_hamiltonian_gradients(n):
    H = dp.hamiltonian(n)
    L = dp.lenard(n)
    assert dp.variational_derivative(H, "u") == L.c
    assert dp.variational_derivative(H, "v") == L.b


def test_hamiltonian_zero_is_rejected():
    with pytest.raises(ZeroDivisionError):
        dp.hamiltonian(0)


def test_euler_operator_annihilates_total_derivatives():
    h = u() * D(v(), 2) * w()
    assert dp.variational_derivative(D(h), "u").is_zero()
    assert dp.variational_derivative(D(h), "v").is_zero()


@pytest.mark.parametrize("m", [1, 2, 3])
def test_zero_curvature(m):
    assert dp.zero_curvature_residual(m).is_zero()


def test_zero_curvature_detects_wrong_flow():
    assert not dp.zero_curvature_residual(1, u_t_perturbation=D(u())).is_zero()


def test_antiderivative_round_trip():
    f = u(2) * v() * w() + u(1) ** 2
    assert dp.antiderivative(D(f)) == f


def test_antiderivative_rejects_non_exact():
    with pytest.raises(dp.NotExactError):
        dp.antiderivative(u() * v(1))


def test_degree():
    assert dp.degree(dp.lenard(2).a) == 3
    assert dp.degree(u() * w()) == 0
    assert dp.degree(u() + u(1)) == "inhomogeneous"
    with pytest.raises(ValueError):
        dp.degree(dp.ZERO)


@pytest.mark.parametrize("j", [0, 1, 2, 3])
def test_lenard_degree_law(j):
    for part in dp.lenard(j):
        assert dp.degree(part) == j + 1


def test_casimir_is_conserved():
    alphas = [Fraction(1, 3), Fraction(-2, 7), Fraction(5, 11)]
    F, G, H = dp.assemble_FGH(2, alphas)
    assert dp.casimir_residual(F, G, H).is_zero()
    with pytest.raises(ValueError):
        dp.assemble_FGH(2, alphas[:2])


def test_lax_residual_only_in_constant_term():
    F, G, H = dp.assemble_FGH(1, [Fraction(2), Fraction(-1, 5)])
    for res in dp.lax_x_residual(F, G, H):
        assert set(res.coeffs) <= {0}


def test_homogeneous_recursion_agrees_with_lenard():
    rec = dp.homogeneous_recursion(3)
    assert rec.first_order_relations_hold
    assert rec.degree_law_holds
    assert rec.matches_lenard
    # seeds
    assert rec.at("F", -1) == u() and rec.at("H", -1) == v() and rec.at("G", -1) == w()


def test_latex_and_str():
    text = dp.lenard(0).b.latex()
    assert "u_{x}" in text
    assert "w" in str(dp.lenard(0).b)
