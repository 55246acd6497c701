"""Spectral curve: series coefficients, periods, Abel map, third-kind differentials."""
import math
from fractions import Fraction

import numpy as np
import pytest

from finitegap import curve as cv
from conftest import GENUS2_COMPLEX, GENUS2_REAL, GENUS3_COMPLEX

CURVES = [GENUS2_REAL, GENUS3_COMPLEX, GENUS2_COMPLEX]


def agm(a, b):
    for _ in range(60):
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        if abs(a - b) <= 4e-16 * a:
            break
    return 0.5 * (a + b)


def ellip_k(k):
    return math.pi / (2 * agm(1.0, math.sqrt(1 - k * k)))


# -- series ---------------------------------------------------------------

def test_series_leading_terms():
    lams = (1, 2, 3, 4)
    assert cv.series_c_exact(-1, lams) == 1 and cv.series_chat_exact(-1, lams) == 1
    assert cv.series_c_exact(0, lams) == -5 and cv.series_chat_exact(0, lams) == 5
    assert cv.series_c(0, lams) == pytest.approx(-5)
    with pytest.raises(ValueError):
        cv.series_c(-2, lams)


@pytest.mark.parametrize("lams", [
    (1, 2, 3, 4),
    (Fraction(1, 3), -2, Fraction(5, 7), 4, Fraction(-9, 2), 6),
    (Fraction(-3, 4), Fraction(2, 5), 1, 7, Fraction(11, 3), -5, Fraction(1, 9), 2),
])
def test_convolution_identity_exact(lams):
    for k in range(11):
        total = sum(cv.series_c_exact(k - l - 1, lams) * cv.series_chat_exact(l - 1, lams)
                    for l in range(k + 1))
        assert total == (1 if k == 0 else 0)


def test_convolution_identity_float():
    rng = np.random.default_rng(3)
    lams = rng.normal(size=6) + 1j * rng.normal(size=6)
    for k in range(11):
        terms = [cv.series_c(k - l - 1, lams) * cv.series_chat(l - 1, lams) for l in range(k + 1)]
        # relative to the size of the individual products, which grow like |lambda|^k
        assert abs(sum(terms) - (k == 0)) < 1e-12 * max(1.0, sum(abs(t) for t in terms))


def test_series_methods_agree():
    lams = (Fraction(1, 3), -2, Fraction(5, 7), 4, Fraction(-9, 2), 6)
    for l in range(-1, 11):
        assert cv.series_c_exact(l, lams) == cv.series_c_exact(l, lams, method="composition")
        assert cv.series_chat_exact(l, lams) == cv.series_chat_exact(l, lams, method="composition")
    z = np.array([1.3 + 0.2j, -0.7, 2.1j, 0.4 - 1j])
    for l in range(11):
        a, b = cv.series_c(l, z), cv.series_c(l, z, method="composition")
        assert abs(a - b) < 1e-12 * max(1, abs(a))


def test_series_matches_expansion_of_sqrt():
    lams = [0.3, -1.2, 2.0, 0.7]
    lam = 40.0
    y = cv.Curve(cv.CurveSpec(lams)).Y(np.array([lam]))[0]
    approx = sum(cv.series_c(l - 1, lams) * lam ** (2 - l) for l in range(12))
    assert abs(y - approx) < 1e-12 * abs(y)


# -- curve basics ---------------------------------------------------------

def test_spec_validation():
    with pytest.raises(cv.CurveError, match="branch_points"):
        cv.CurveSpec((1, 2, 3))
    with pytest.raises(cv.CurveError, match="coincide"):
        cv.CurveSpec((1, 2, 3, 3))
    with pytest.raises(cv.CurveError):
        cv.SurfacePoint(1.0, 2)


def test_sqrtR_conventions():
    spec = cv.CurveSpec((-2, -1, 1, 2))
    assert cv.sqrtR(cv.SurfacePoint(3, 1), spec) == pytest.approx(math.sqrt(40), rel=1e-14)
    p = cv.SurfacePoint(0.3 + 0.4j, 1)
    assert cv.sqrtR(p, spec) == pytest.approx(-cv.sqrtR(p.involution(), spec), rel=1e-15)
    assert cv.sqrtR(cv.SurfacePoint(-1, 1), spec) == 0
    curve = cv.Curve(spec)
    far = 1e4 * np.exp(1j * np.linspace(0, 2 * np.pi, 7))
    assert np.allclose(curve.Y(far) / far ** 2, 1, atol=1e-7)


def test_sqrt_continuous_off_cuts():
    curve = cv.Curve(cv.CurveSpec(GENUS3_COMPLEX))
    z = np.exp(1j * np.linspace(0, 2 * np.pi, 4001)) * 6.0
    y = curve.Y(z)
    assert np.max(np.abs(np.diff(y))) < 0.1 * np.max(np.abs(y))
    assert np.allclose(y ** 2, curve.R(z), rtol=1e-12)


def test_homology_counts():
    h1 = cv.build_homology(cv.CurveSpec((-2, -1, 1, 2)))
    assert len(h1["a_cycles"]) == 1 and len(h1["b_cycles"]) == 1
    assert h1["cuts"][0] == (-2, -1)
    h2 = cv.build_homology(cv.CurveSpec(GENUS2_REAL))
    assert len(h2["a_cycles"]) == 2 and len(h2["b_cycles"]) == 2


def test_crossing_cuts_rejected():
    with pytest.raises(cv.HomologyError, match="relabel"):
        # the second cut grazes an endpoint of the first one
        cv.Curve(cv.CurveSpec((-1, 1 - 5j, 1 + 5j, 1 + 1e-13 - 10j, 3, 4)))


# -- periods --------------------------------------------------------------

@pytest.mark.parametrize("k", [0.3, 0.5, 0.8])
def test_genus_one_agm_oracle(k):
    pd = cv.period_matrices(cv.CurveSpec((-1 / k, -1, 1, 1 / k)))
    kp = math.sqrt(1 - k * k)
    A = pd.A[0, 0]
    assert abs(abs(A) - 2 * k * ellip_k(kp)) < 1e-10 * abs(A)
    assert abs(pd.tau[0, 0] - 2j * ellip_k(k) / ellip_k(kp)) < 1e-10 * abs(pd.tau[0, 0])


@pytest.mark.parametrize("points", CURVES)
def test_period_matrix_invariants(points, period_cache):
    pd = period_cache(points)
    n = pd.n
    assert np.max(np.abs(pd.tau - pd.tau.T)) < 1e-10
    assert np.linalg.eigvalsh(pd.tau.imag).min() > 0
    a = pd.curve.periods(pd.normalized(), "a")
    assert np.max(np.abs(a - np.eye(n))) < 1e-10
    b = pd.curve.periods(pd.normalized(), "b")
    assert np.max(np.abs(b - pd.tau)) < 1e-10


def test_node_doubling_is_stable():
    curve = cv.Curve(cv.CurveSpec(GENUS3_COMPLEX))
    basis = cv.holomorphic_basis(3)
    for fn in (curve.a_period, curve.b_period):
        for k in range(3):
            p1, p2 = fn(basis, k, 128), fn(basis, k, 256)
            assert np.max(np.abs(p1 - p2)) < 1e-10 * np.max(np.abs(p2))


def test_period_continuity():
    pts = list(GENUS2_REAL)
    pd1 = cv.period_matrices(cv.CurveSpec(pts))
    pts[3] += 1e-9
    pd2 = cv.period_matrices(cv.CurveSpec(pts))
    diff = np.max(np.abs(pd1.A - pd2.A))
    assert 0 < diff < 1e-7


def test_period_text_round_trip(period_cache):
    pd = period_cache(GENUS3_COMPLEX)
    back = cv.PeriodData.from_text(pd.to_text())
    for name in ("A", "B", "C", "tau"):
        assert np.array_equal(getattr(back, name), getattr(pd, name))
    assert back.to_text() == pd.to_text()


def test_c_column():
    pd = cv.period_matrices(cv.CurveSpec(GENUS2_REAL))
    assert np.array_equal(pd.C_column(2), pd.C[:, 1])
    assert not np.any(pd.C_column(0))


# -- Abel map -------------------------------------------------------------

@pytest.mark.parametrize("points", CURVES)
def test_abel_map_involution_and_base(points, period_cache):
    pd = period_cache(points)
    assert np.max(np.abs(cv.abel_map(cv.SurfacePoint(pd.base_point, 1), pd))) == 0
    for lam in (0.3 + 0.7j, -2.5 - 1.1j, 3.7 + 0.05j):
        P = cv.SurfacePoint(lam, 1)
        assert pd.lattice_distance(cv.abel_map(P, pd) + cv.abel_map(P.involution(), pd)) < 1e-10


@pytest.mark.parametrize("points", CURVES)
def test_abel_map_infinity(points, period_cache):
    pd = period_cache(points)
    Ap = cv.abel_map_infinity("inf+", pd)
    Am = cv.abel_map_infinity("inf-", pd)
    assert pd.lattice_distance(Ap + Am) < 1e-8
    assert np.max(np.abs(cv.omega_zeta_leading("inf+", pd) - pd.C[:, -1])) < 1e-8
    assert np.max(np.abs(cv.omega_zeta_leading("inf-", pd) + pd.C[:, -1])) < 1e-8


def test_abel_map_infinity_genus_one_oracle():
    from scipy.integrate import quad

    pd = cv.period_matrices(cv.CurveSpec((-2, -1, 1, 2)))
    # from P0 = -2 along the real axis on sheet +1 is ambiguous; go up the imaginary axis instead
    Ap = cv.abel_map_infinity("inf-", pd)
    c = pd.C[0, 0]
    curve = pd.curve
    # int_{P0}^{0} along the lower side is recovered from the Abel map of a point near 0,
    # the rest is int_0^{i inf} on the sheet where y ~ lambda^2
    A0 = cv.abel_map(cv.SurfacePoint(0j, 1), pd)[0]

    def f(s, part):
        lam = 1j * s
        val = c * 1j / curve.Y(np.array([lam]))[0]
        return val.real if part == 0 else val.imag

    tail = quad(f, 0, np.inf, args=(0,), epsabs=1e-14)[0] + 1j * quad(f, 0, np.inf, args=(1,), epsabs=1e-14)[0]
    assert pd.lattice_distance(np.array([A0 + tail - Ap[0]])) < 1e-8


def test_abel_map_additivity(period_cache):
    pd = period_cache(GENUS2_REAL)
    pts = [cv.SurfacePoint(0.3 + 0.7j, 1), cv.SurfacePoint(-1.4 - 0.2j, -1)]
    total = sum(cv.abel_map(p, pd) for p in pts)
    # the same sum reached through a different path family: via the involution
    alt = -sum(cv.abel_map(p.involution(), pd) for p in pts)
    assert pd.lattice_distance(total - alt) < 1e-10


# -- third kind -----------------------------------------------------------

@pytest.mark.parametrize("points", [GENUS2_REAL, GENUS3_COMPLEX])
def test_third_kind(points, period_cache):
    pd = period_cache(points)
    nu, mu = cv.SurfacePoint(0.2 + 0.8j, 1), cv.SurfacePoint(-0.7 - 0.5j, -1)
    tk = cv.third_kind(nu, mu, pd)
    assert np.max(np.abs(tk.a_periods)) < 1e-9
    assert abs(tk.residues[0] - 1) < 1e-8 and abs(tk.residues[1] + 1) < 1e-8
    g = tk.gamma[-1]
    assert abs(cv.third_kind_zeta_leading(tk, "inf+", pd) - (tk.M + g)) < 1e-10
    assert abs(cv.third_kind_zeta_leading(tk, "inf-", pd) - (tk.M - g)) < 1e-10
    # reciprocity between the b-periods and the Abel map
    b = pd.curve.periods(tk.differential(), "b")[0]
    lhs = b / (2j * np.pi)
    rhs = cv.abel_map(nu, pd) - cv.abel_map(mu, pd)
    assert pd.lattice_distance(lhs - rhs) < 1e-9


def test_third_kind_rejects_bad_poles(period_cache):
    pd = period_cache(GENUS2_REAL)
    p = cv.SurfacePoint(0.3j, 1)
    with pytest.raises(cv.CurveError):
        cv.third_kind(p, p, pd)
    with pytest.raises(cv.CurveError):
        cv.third_kind(cv.SurfacePoint(-2.0, 1), p, pd)


# -- Riemann constants ----------------------------------------------------

def test_riemann_constants_genus_one():
    pd = cv.period_matrices(cv.CurveSpec((-2, -1, 1, 2)))
    assert np.allclose(cv.riemann_constants(pd), 0.5 * (1 + pd.tau[0, 0]), atol=1e-14)


@pytest.mark.parametrize("points", CURVES)
def test_riemann_constants_vanishing(points, period_cache):
    pd = period_cache(points)
    K = cv.riemann_constants(pd)
    probes = cv.default_probes(pd)
    assert cv.riemann_vanishing_residual(K, pd, probes) < 1e-8
    # a wrong half-period does not vanish
    wrong = [c for c in cv.half_periods(pd) if pd.lattice_distance(c - K) > 0.1]
    assert max(cv.riemann_vanishing_residual(c, pd, probes) for c in wrong[:4]) > 1e-4


def test_riemann_constants_probe_independent(period_cache):
    pd = period_cache(GENUS2_COMPLEX)
    other = [cv.SurfacePoint(0.4 - 0.3j, 1), cv.SurfacePoint(-0.2 + 1.1j, -1)]
    assert np.array_equal(cv.riemann_constants(pd), cv.riemann_constants(pd, probes=other))


# -- symmetric-function identities ---------------------------------------

def test_lagrange_identity_worked_instance():
    assert cv.lagrange_identity([1, 2, 3], 3) == 1


@pytest.mark.parametrize("N", range(1, 7))
def test_lagrange_identity_exact(N):
    rng = np.random.default_rng(N)
    pts = list({Fraction(int(a), int(b)) for a, b in zip(rng.integers(-20, 20, 3 * N), rng.integers(1, 9, 3 * N))})[:N]
    assert len(pts) == N
    for l in range(1, N + 4):
        expected = cv.complete_homogeneous(pts, l - N) if l >= N else 0
        assert cv.lagrange_identity(pts, l) == expected
