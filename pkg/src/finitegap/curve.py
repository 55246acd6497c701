"""Numerical geometry of the hyperelliptic curve ``y**2 = prod(lambda - lambda_j)``.

Sheet convention
----------------
Branch points are sorted by ``(Re, Im)`` and paired consecutively into
straight cuts ``[e_{2k-1}, e_{2k}]``.  On sheet ``+1`` the function

    Y(lambda) = prod_k h_k * sqrt((lambda - b_k)/h_k) * sqrt((lambda - a_k)/h_k),
    h_k = (b_k - a_k)/2,

(principal roots) is analytic off the cuts and behaves like
``lambda**(n+1)`` at infinity.  Sheet ``-1`` carries ``-Y``.  The point at
infinity on sheet ``-1`` is ``P_inf+`` (there ``y ~ -lambda**(n+1)``), the one
on sheet ``+1`` is ``P_inf-``.

Integrals from the base point ``P0`` (a branch point) to ``(lambda, s)`` run
along a polyline avoiding the cuts on sheet ``+1``; for ``s = -1`` the odd
part of the differential changes sign (the involution fixes ``P0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


class CurveError(ValueError):
    """Invalid curve data or degenerate geometry."""


class HomologyError(CurveError):
    """Cuts or cycle paths intersect; relabel the branch points."""


class QuadratureError(RuntimeError):
    """A quadrature failed to reach its tolerance."""


# ---------------------------------------------------------------------------
# series coefficients
# ---------------------------------------------------------------------------

def _binomial_half_series(sign: int, x, order: int, one):
    """Coefficients of ``(1 - x z)**(sign/2)`` up to ``z**order``."""
    out = [one]
    for j in range(1, order + 1):
        if sign > 0:
            # (2j)! / ((j!)^2 4^j (1 - 2j))
            coef = Fraction(math.comb(2 * j, j), 4 ** j * (1 - 2 * j))
        else:
            coef = Fraction(math.comb(2 * j, j), 4 ** j)
        out.append(_scale(coef, one) * x ** j)
    return out


def _scale(q: Fraction, one):
    if isinstance(one, Fraction):
        return q
    return one * (q.numerator / q.denominator)


def _convolve(a, b, order, zero):
    out = [zero] * (order + 1)
    for i, ai in enumerate(a):
        for j in range(order + 1 - i):
            out[i + j] = out[i + j] + ai * b[j]
    return out


def _multinomial_coeffs(sign: int, lams, order: int, exact: bool):
    """Expand ``prod_j (1 - lambda_j z)**(sign/2)`` factor by factor.

    This is the multinomial sum over ``j_1 + ... + j_{2n+2} = l + 1``,
    organized as successive convolutions.
    """
    one = Fraction(1) if exact else 1.0 + 0.0j
    zero = Fraction(0) if exact else 0.0j
    series = [one] + [zero] * order
    for lam in lams:
        x = Fraction(lam) if exact else complex(lam)
        series = _convolve(series, _binomial_half_series(sign, x, order, one), order, zero)
    return series


def _miller_coeffs(sign: int, lams, order: int, exact: bool):
    """``g**(sign/2)`` for ``g = prod(1 - lambda_j z)`` by Miller's recurrence."""
    one = Fraction(1) if exact else 1.0 + 0.0j
    zero = Fraction(0) if exact else 0.0j
    g = [one]
    for lam in lams:
        x = Fraction(lam) if exact else complex(lam)
        g = [a - (x * g[i - 1] if i > 0 else zero) for i, a in enumerate(g + [zero])]
    g = g + [zero] * max(0, order + 1 - len(g))
    alpha = Fraction(sign, 2) if exact else sign / 2.0
    f = [one]
    for k in range(1, order + 1):
        acc = zero
        for j in range(1, k + 1):
            acc = acc + ((alpha + 1) * j - k) * g[j] * f[k - j]
        f.append(acc / k)
    return f


def _series(l: int, lams, sign: int, exact: bool, method: str):
    if l < -1:
        raise ValueError("series index must be >= -1")
    order = l + 1
    if method == "multinomial":
        coeffs = _multinomial_coeffs(sign, lams, order, exact)
    elif method == "composition":
        coeffs = _miller_coeffs(sign, lams, order, exact)
    else:
        raise ValueError(f"unknown method {method!r}")
    return coeffs[order]


def series_c(l: int, lams: Sequence[complex], method: str = "multinomial") -> complex:
    """Coefficient ``c_l``: ``R**(1/2) = sum_l c_{l-1} lambda**(n+1-l)``."""
    return complex(_series(l, list(lams), +1, False, method))


def series_chat(l: int, lams: Sequence[complex], method: str = "multinomial") -> complex:
    """Coefficient ``c_hat_l``: ``R**(-1/2) = sum_l c_hat_{l-1} lambda**(-n-1-l)``."""
    return complex(_series(l, list(lams), -1, False, method))


def series_c_exact(l: int, lams: Sequence, method: str = "multinomial") -> Fraction:
    """Exact rational ``c_l`` for rational branch points."""
    return _series(l, [Fraction(x) for x in lams], +1, True, method)


def series_chat_exact(l: int, lams: Sequence, method: str = "multinomial") -> Fraction:
    """Exact rational ``c_hat_l`` for rational branch points."""
    return _series(l, [Fraction(x) for x in lams], -1, True, method)


# ---------------------------------------------------------------------------
# curve data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveSpec:
    """Branch points ``lambda_1 .. lambda_{2n+2}`` of a genus-``n`` curve."""

    branch_points: tuple
    eps_dist: float = 1e-8
    base_index: int | None = None

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.branch_points)
        object.__setattr__(self, "branch_points", pts)
        if len(pts) < 4 or len(pts) % 2:
            raise CurveError(
                f"branch_points: need an even number >= 4 of points, got {len(pts)}"
            )
        scale = max(abs(p) for p in pts)
        if any(abs(p) <= self.eps_dist * scale for p in pts):
            raise CurveError("branch_points: all branch points must be nonzero")
        for i in range(len(pts)):
            for j in range(i):
                if abs(pts[i] - pts[j]) <= self.eps_dist * scale:
                    raise CurveError(f"branch_points: points {j} and {i} coincide")
        if self.base_index is not None and not 0 <= self.base_index < len(pts):
            raise CurveError("base_index out of range")

    @property
    def genus(self) -> int:
        return len(self.branch_points) // 2 - 1

    @property
    def sorted_points(self) -> tuple:
        return tuple(sorted(self.branch_points, key=lambda z: (z.real, z.imag)))

    @property
    def scale(self) -> float:
        return max(abs(p) for p in self.branch_points)


@dataclass(frozen=True)
class SurfacePoint:
    """A finite point ``(lambda, sheet)``; ``sheet`` selects ``+Y`` or ``-Y``."""

    lam: complex
    sheet: int = 1

    def __post_init__(self):
        if self.sheet not in (1, -1):
            raise CurveError("sheet must be +1 or -1")
        object.__setattr__(self, "lam", complex(self.lam))

    def involution(self) -> "SurfacePoint":
        return SurfacePoint(self.lam, -self.sheet)


INF_PLUS = "inf+"
INF_MINUS = "inf-"


def infinity_sheet(sign: str) -> int:
    """Sheet label carrying ``P_inf+`` (``-1``) or ``P_inf-`` (``+1``)."""
    if sign == INF_PLUS:
        return -1
    if sign == INF_MINUS:
        return 1
    raise ValueError(f"unknown infinity {sign!r}")


# ---------------------------------------------------------------------------
# differentials
# ---------------------------------------------------------------------------

@dataclass
class Differential:
    """Vector of differentials ``num(lambda) dlambda / y + even(lambda) dlambda``.

    ``num`` is ``sum_l D[:, l-1] lambda**(l-1)`` plus simple-pole terms
    ``c / (lambda - p)``; ``even`` is a sum of simple poles whose residues
    add up to zero, so it is holomorphic at infinity.
    """

    D: np.ndarray
    odd_poles: list = field(default_factory=list)
    even_poles: list = field(default_factory=list)

    def __post_init__(self):
        self.D = np.atleast_2d(np.asarray(self.D, dtype=complex))
        self.odd_poles = [(complex(p), np.asarray(c, dtype=complex)) for p, c in self.odd_poles]
        self.even_poles = [(complex(p), np.asarray(c, dtype=complex)) for p, c in self.even_poles]
        if self.even_poles:
            total = sum(c for _, c in self.even_poles)
            if np.max(np.abs(total)) > 1e-12 * max(1.0, max(np.max(np.abs(c)) for _, c in self.even_poles)):
                raise ValueError("residues of the even part must sum to zero")

    @property
    def ncomp(self) -> int:
        return self.D.shape[0]

    @property
    def n(self) -> int:
        return self.D.shape[1]

    def poles(self) -> list:
        return [p for p, _ in self.odd_poles] + [p for p, _ in self.even_poles]

    def num(self, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        powers = lam[:, None] ** np.arange(self.n)[None, :]
        out = powers @ self.D.T
        for p, c in self.odd_poles:
            out = out + (1.0 / (lam - p))[:, None] * c[None, :]
        return out

    def even(self, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        out = np.zeros((lam.size, self.ncomp), dtype=complex)
        for p, c in self.even_poles:
            out = out + (1.0 / (lam - p))[:, None] * c[None, :]
        return out

    def num_zeta(self, z: np.ndarray) -> np.ndarray:
        """``z**(n-1) * num(1/z)``, finite at ``z = 0``."""
        z = np.asarray(z, dtype=complex)
        powers = z[:, None] ** (self.n - 1 - np.arange(self.n))[None, :]
        out = powers @ self.D.T
        for p, c in self.odd_poles:
            out = out + (z ** self.n / (1.0 - p * z))[:, None] * c[None, :]
        return out

    def even_zeta(self, z: np.ndarray) -> np.ndarray:
        """Coefficient of ``dz`` of the even part in ``z = 1/lambda``."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros((z.size, self.ncomp), dtype=complex)
        for p, c in self.even_poles:
            out = out - (p / (1.0 - p * z))[:, None] * c[None, :]
        return out


def holomorphic_basis(n: int) -> Differential:
    """The unnormalized basis ``lambda**(l-1) dlambda / y``, ``l = 1..n``."""
    return Differential(np.eye(n, dtype=complex))


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre01(k: int):
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


def _adaptive_gl(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                 tol: float, k: int = 24, max_depth: int = 40):
    """Adaptive bisection with a nested Gauss-Legendre error estimate.

    ``tol`` is an absolute tolerance for the whole interval, shared among
    subintervals in proportion to their length.
    """
    x1, w1 = _gauss_legendre01(k)
    x2, w2 = _gauss_legendre01(2 * k)
    total_len = b - a
    out = 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        h = hi - lo
        r1 = (w1[:, None] * f(lo + h * x1)).sum(axis=0) * h
        r2 = (w2[:, None] * f(lo + h * x2)).sum(axis=0) * h
        err = float(np.max(np.abs(r2 - r1)))
        floor = 8 * np.finfo(float).eps * float(np.max(np.abs(r2)))
        if err <= max(tol * h / total_len, floor):
            out = out + r2
            continue
        if depth >= max_depth:
            raise QuadratureError(f"adaptive quadrature stalled (error {err:.3e})")
        mid = 0.5 * (lo + hi)
        stack.append((mid, hi, depth + 1))
        stack.append((lo, mid, depth + 1))
    return out


def chebyshev_nodes(N: int) -> np.ndarray:
    theta = (2.0 * np.arange(1, N + 1) - 1.0) * np.pi / (2.0 * N)
    return theta


def _doubling(rule: Callable[[int], np.ndarray], start: int = 16, cap: int = 2 ** 14,
              rtol: float = 1e-12):
    """Run ``rule(N)`` with doubling ``N`` until two results agree."""
    prev = rule(start)
    N = start
    while N < cap:
        N *= 2
        cur = rule(N)
        scale = max(1.0, float(np.max(np.abs(cur))))
        if np.max(np.abs(cur - prev)) < rtol * scale:
            return cur, N
        prev = cur
    raise QuadratureError(f"Gauss-Chebyshev rule did not converge with {cap} nodes")


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _point_seg_dist(p: complex, a: complex, b: complex) -> float:
    d = b - a
    if d == 0:
        return abs(p - a)
    s = ((p - a) * d.conjugate()).real / abs(d) ** 2
    s = min(1.0, max(0.0, s))
    return abs(p - (a + s * d))


def _cross(u: complex, v: complex) -> float:
    return u.real * v.imag - u.imag * v.real


def _segments_intersect(p, q, a, b) -> bool:
    d1, d2 = q - p, b - a
    den = _cross(d1, d2)
    if den == 0:
        return False
    s = _cross(a - p, d2) / den
    r = _cross(a - p, d1) / den
    return 0.0 <= s <= 1.0 and 0.0 <= r <= 1.0


def _seg_seg_dist(p, q, a, b) -> float:
    if _segments_intersect(p, q, a, b):
        return 0.0
    return min(_point_seg_dist(p, a, b), _point_seg_dist(q, a, b),
               _point_seg_dist(a, p, q), _point_seg_dist(b, p, q))


class Curve:
    """Evaluation, cycles and integration on a fixed curve."""

    def __init__(self, spec: CurveSpec):
        self.spec = spec
        self.n = spec.genus
        pts = spec.sorted_points
        self.points = np.array(pts, dtype=complex)
        self.cuts = [(pts[2 * k], pts[2 * k + 1]) for k in range(self.n + 1)]
        self.scale = spec.scale
        self.min_sep = min(abs(pts[i] - pts[j]) for i in range(len(pts)) for j in range(i))
        base = pts[0] if spec.base_index is None else spec.branch_points[spec.base_index]
        self.base_point = complex(base)
        self._check_cuts()

    # -- sheet function ---------------------------------------------------
    def _cut_factor(self, k: int, lam: np.ndarray, anchor=None, delta=None) -> np.ndarray:
        a, b = self.cuts[k]
        h = 0.5 * (b - a)
        da = delta if anchor is not None and anchor == a else lam - a
        db = delta if anchor is not None and anchor == b else lam - b
        return h * np.sqrt(db / h) * np.sqrt(da / h)

    def Y(self, lam, anchor: complex | None = None, delta=None) -> np.ndarray:
        """Sheet ``+1`` branch of ``sqrt(R)`` (arrays accepted).

        When ``lam = anchor + delta`` with ``anchor`` a branch point, the
        offset is used directly so that points very close to the branch
        point keep full relative precision.
        """
        lam = np.asarray(lam, dtype=complex)
        out = np.ones_like(lam)
        for k in range(self.n + 1):
            out = out * self._cut_factor(k, lam, anchor, delta)
        return out

    def Q_other(self, k: int, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        out = np.ones_like(lam)
        for j in range(self.n + 1):
            if j != k:
                out = out * self._cut_factor(j, lam)
        return out

    def R(self, lam):
        lam = np.asarray(lam, dtype=complex)
        out = np.ones_like(lam)
        for e in self.points:
            out = out * (lam - e)
        return out

    def dR(self, lam):
        lam = np.asarray(lam, dtype=complex)
        coeffs = np.poly(self.points)
        return np.polyval(np.polyder(coeffs), lam)

    def sqrtR(self, p: SurfacePoint) -> complex:
        if np.min(np.abs(self.points - p.lam)) == 0:
            return 0j
        if self.on_cut(p.lam):
            raise CurveError("point lies on a cut; its sheet is ambiguous")
        return complex(p.sheet * self.Y(np.array([p.lam]))[0])

    def sheet_of(self, lam: complex, y: complex) -> int:
        """Sheet label of the point ``(lam, y)`` with ``y**2 = R(lam)``."""
        Y = complex(self.Y(np.array([lam]))[0])
        return 1 if abs(y - Y) <= abs(y + Y) else -1

    def on_cut(self, lam: complex, tol: float | None = None) -> bool:
        tol = 1e-13 * self.scale if tol is None else tol
        for a, b in self.cuts:
            if _point_seg_dist(lam, a, b) <= tol and min(abs(lam - a), abs(lam - b)) > tol:
                return True
        return False

    def _check_cuts(self):
        for i in range(self.n + 1):
            for j in range(i):
                if _seg_seg_dist(*self.cuts[i], *self.cuts[j]) <= 1e-12 * self.scale:
                    raise HomologyError(
                        f"cuts {j + 1} and {i + 1} intersect; relabel the branch points"
                    )
        for k in range(self.n):
            p, q = self.cuts[k][1], self.cuts[k + 1][0]
            for j, (a, b) in enumerate(self.cuts):
                if j in (k, k + 1):
                    continue
                if _seg_seg_dist(p, q, a, b) <= 1e-12 * self.scale:
                    raise HomologyError(
                        f"gap {k + 1} crosses cut {j + 1}; relabel the branch points"
                    )

    # -- path planning ------------------------------------------------------
    def is_branch_point(self, lam: complex) -> bool:
        return bool(np.min(np.abs(self.points - lam)) <= 1e-14 * self.scale)

    def _snap(self, lam: complex) -> complex:
        for a, b in self.cuts:
            for e in (a, b):
                if abs(e - lam) <= 1e-14 * self.scale:
                    return e
        return lam

    def _leg_clearance(self, p: complex, q: complex, avoid: Sequence[complex]) -> float:
        L = abs(q - p)
        if L == 0:
            return math.inf
        clear = math.inf
        for a, b in self.cuts:
            shared = None
            for e, other in ((a, b), (b, a)):
                for end, far in ((p, q), (q, p)):
                    if abs(end - e) <= 1e-14 * self.scale:
                        shared = (end, far, other)
            if shared is None:
                clear = min(clear, _seg_seg_dist(p, q, a, b))
                continue
            end, far, other = shared
            d_leg, d_cut = far - end, other - end
            cosang = (d_leg * d_cut.conjugate()).real / (abs(d_leg) * abs(d_cut))
            ang = math.acos(max(-1.0, min(1.0, cosang)))
            rho = 0.25 * min(abs(d_leg), abs(d_cut))
            trimmed_leg = (end + d_leg / abs(d_leg) * rho, far)
            trimmed_cut = (end + d_cut / abs(d_cut) * rho, other)
            dist = _seg_seg_dist(*trimmed_leg, *trimmed_cut)
            clear = min(clear, dist, rho * math.sin(min(ang, math.pi / 2)))
        for z in avoid:
            clear = min(clear, _point_seg_dist(z, p, q))
        return clear

    def _path_clearance(self, verts, avoid) -> float:
        return min(self._leg_clearance(verts[i], verts[i + 1], avoid) for i in range(len(verts) - 1))

    def plan_path(self, start: complex, end: complex, avoid: Sequence[complex] = ()) -> list:
        """Polyline from ``start`` to ``end`` that keeps off the cuts."""
        start, end = complex(start), complex(end)
        if abs(end - start) <= 1e-14 * self.scale:
            return [start, end]
        good = 0.05 * self.min_sep
        candidates = [[start, end]]
        # route through a nearby branch point when the target hugs one
        dist = np.abs(self.points - end)
        j = int(np.argmin(dist))
        e = complex(self.points[j])
        if 0 < dist[j] < 0.25 * self.min_sep and abs(e - start) > 1e-14 * self.scale:
            head = self.plan_path(start, e, avoid)
            candidates.insert(0, head + [end])
        L = abs(end - start)
        mid = 0.5 * (start + end)
        nrm = 1j * (end - start) / L
        for k in (0.3, 0.6, 1.2, 2.4):
            for sgn in (1, -1):
                candidates.append([start, mid + sgn * k * L * nrm, end])
        lo = min(self.points.imag) - 0.5 * self.min_sep - 0.1 * self.scale
        hi = max(self.points.imag) + 0.5 * self.min_sep + 0.1 * self.scale
        for level in (hi, lo):
            candidates.append([start, complex(start.real, level), complex(end.real, level), end])
        best, best_clear = None, -1.0
        for verts in candidates:
            c = self._path_clearance(verts, avoid)
            if c >= good:
                return verts
            if c > best_clear:
                best, best_clear = verts, c
        if best_clear <= 1e-10 * self.scale:
            raise HomologyError("could not find a path that avoids the cuts")
        return best

    # -- integration --------------------------------------------------------
    def _leg_integral(self, diff: Differential, p: complex, q: complex, tol: float):
        """Return ``(odd, even)`` integrals along the straight leg on sheet ``+1``."""
        sp, sq = self.is_branch_point(p), self.is_branch_point(q)
        if sp:
            p = self._snap(p)
        if sq:
            q = self._snap(q)
        d = q - p
        if sp and sq:
            def rule(N):
                th = chebyshev_nodes(N)
                t = np.cos(th)
                lam = 0.5 * (p + q) + 0.5 * d * t
                w = np.sqrt(1.0 - t * t)
                odd = (diff.num(lam) * (w / self.Y(lam))[:, None]).sum(axis=0)
                even = (diff.even(lam) * w[:, None]).sum(axis=0)
                return np.concatenate([odd, even]) * (0.5 * d * np.pi / N)
            both, _ = _doubling(rule)
            m = diff.ncomp
            return both[:m], both[m:]

        def f(s):
            if sp:
                off = d * s * s
                lam, jac, Y = p + off, 2.0 * d * s, self.Y(p + off, p, off)
            elif sq:
                off = -d * s * s
                lam, jac, Y = q + off, 2.0 * d * s, self.Y(q + off, q, off)
            else:
                lam, jac = p + d * s, d * np.ones_like(s)
                Y = self.Y(lam)
            odd = diff.num(lam) * (jac / Y)[:, None]
            even = diff.even(lam) * jac[:, None]
            return np.concatenate([odd, even], axis=1)

        res = _adaptive_gl(f, 0.0, 1.0, tol)
        m = diff.ncomp
        return res[:m], res[m:]

    def integrate_path(self, diff: Differential, verts: Sequence[complex], tol: float = 1e-13):
        odd = np.zeros(diff.ncomp, dtype=complex)
        even = np.zeros(diff.ncomp, dtype=complex)
        for i in range(len(verts) - 1):
            if abs(verts[i + 1] - verts[i]) <= 1e-14 * self.scale:
                continue
            o, e = self._leg_integral(diff, verts[i], verts[i + 1], tol)
            odd += o
            even += e
        return odd, even

    def far_point(self) -> complex:
        return (2.0 * self.scale + self.min_sep) * complex(math.cos(0.5), math.sin(0.5))

    def _zeta_tail(self, diff: Differential, zq: complex, sheet: int, tol: float):
        """``int_{zq}^{0}`` of the differential in ``z = 1/lambda`` on ``sheet``."""
        pts = self.points

        def f(s):
            z = zq * (1.0 - s)
            Pz = np.ones_like(z)
            for e in pts:
                Pz = Pz * np.sqrt(1.0 - e * z)
            odd = -diff.num_zeta(z) / (sheet * Pz)[:, None]
            even = diff.even_zeta(z)
            return (odd + even) * (-zq)

        return _adaptive_gl(f, 0.0, 1.0, tol)

    def integrate_from_base(self, diff: Differential, target, avoid: Sequence[complex] = (),
                            tol: float = 1e-13) -> np.ndarray:
        """``int_{P0}^{target}`` for a SurfacePoint or ``"inf+"``/``"inf-"``."""
        if isinstance(target, str):
            s = infinity_sheet(target)
            Q = self.far_point()
            verts = self.plan_path(self.base_point, Q, avoid)
            odd, even = self.integrate_path(diff, verts, tol)
            return s * odd + even + self._zeta_tail(diff, 1.0 / Q, s, tol)
        if self.on_cut(target.lam):
            raise CurveError("target lies on a cut; perturb it off the cut")
        verts = self.plan_path(self.base_point, target.lam, avoid)
        odd, even = self.integrate_path(diff, verts, tol)
        return target.sheet * odd + even

    # -- cycles ---------------------------------------------------------------
    def a_period(self, diff: Differential, k: int, N: int) -> np.ndarray:
        """``oint_{a_k}``: counter-clockwise around cut ``k`` on sheet ``+1``."""
        a, b = self.cuts[k]
        t = np.cos(chebyshev_nodes(N))
        lam = 0.5 * (a + b) + 0.5 * (b - a) * t
        vals = diff.num(lam) / self.Q_other(k, lam)[:, None]
        return 2j * np.pi / N * vals.sum(axis=0)

    def _gap_integral(self, diff: Differential, k: int, N: int) -> np.ndarray:
        p, q = self.cuts[k][1], self.cuts[k + 1][0]
        t = np.cos(chebyshev_nodes(N))
        lam = 0.5 * (p + q) + 0.5 * (q - p) * t
        w = np.sqrt(1.0 - t * t)
        vals = diff.num(lam) * (w / self.Y(lam))[:, None]
        return 0.5 * (q - p) * np.pi / N * vals.sum(axis=0)

    def b_period(self, diff: Differential, k: int, N: int) -> np.ndarray:
        """``oint_{b_k}``: from cut ``n+1`` to cut ``k`` on sheet ``+1`` and back.

        The path runs along the gaps ``k, ..., n`` and through the branch
        points of the intermediate cuts, which keeps ``tau`` symmetric.
        """
        chain = np.zeros(diff.ncomp, dtype=complex)
        for j in range(k, self.n):
            chain = chain + self._gap_integral(diff, j, N)
        return -2.0 * chain

    def periods(self, diff: Differential, which: str) -> np.ndarray:
        """Matrix ``(ncomp, n)`` of a- or b-periods with adaptive node count."""
        fn = self.a_period if which == "a" else self.b_period

        def rule(N):
            return np.stack([fn(diff, k, N) for k in range(self.n)], axis=1).ravel()

        vals, _ = _doubling(rule)
        return vals.reshape(diff.ncomp, self.n)


# ---------------------------------------------------------------------------
# period data
# ---------------------------------------------------------------------------

@dataclass
class PeriodData:
    """Period matrices of ``lambda**(l-1) dlambda / y`` and derived data."""

    spec: CurveSpec
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    tau: np.ndarray
    cond: float
    cycles: list
    base_point: complex
    _curve: Curve | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.spec.genus

    @property
    def curve(self) -> Curve:
        if self._curve is None:
            self._curve = Curve(self.spec)
        return self._curve

    def normalized(self) -> Differential:
        """``omega_j = sum_l C_{jl} lambda**(l-1) dlambda / y``."""
        return Differential(self.C)

    def C_column(self, k: int) -> np.ndarray:
        """``C_k = (C_{1k}, ..., C_{nk})``; zero for ``k < 1``."""
        if k < 1:
            return np.zeros(self.n, dtype=complex)
        return self.C[:, k - 1].copy()

    def reduce(self, z: np.ndarray) -> np.ndarray:
        """Reduce ``z`` modulo ``Z^n + tau Z^n`` to the fundamental cell."""
        z = np.asarray(z, dtype=complex)
        m = np.round(np.linalg.solve(self.tau.imag, z.imag))
        z = z - self.tau @ m
        return z - np.round(z.real)

    def lattice_distance(self, z: np.ndarray) -> float:
        """Distance of ``z`` to the nearest lattice vector."""
        r = self.reduce(z)
        best = math.inf
        n = self.n
        for a in np.ndindex(*(3,) * n):
            for b in np.ndindex(*(3,) * n):
                v = r - np.array(a) + 1 - self.tau @ (np.array(b) - 1)
                best = min(best, float(np.max(np.abs(v))))
        return best

    # -- text export --------------------------------------------------------
    def to_text(self) -> str:
        def row(vals):
            return " ".join(f"{complex(v).real:.17g} {complex(v).imag:.17g}" for v in vals)

        lines = ["# period data", f"genus {self.n}"]
        lines.append("branch_points " + row(self.spec.branch_points))
        lines.append(f"base_point {self.base_point.real:.17g} {self.base_point.imag:.17g}")
        lines.append(f"cond {self.cond:.17g}")
        for name in ("A", "B", "C", "tau"):
            mat = getattr(self, name)
            for i in range(self.n):
                lines.append(f"{name} {i} " + row(mat[i]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PeriodData":
        data: dict = {}
        mats: dict = {k: {} for k in ("A", "B", "C", "tau")}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, *rest = line.split()
            if key in mats:
                nums = [float(x) for x in rest[1:]]
                mats[key][int(rest[0])] = [complex(nums[i], nums[i + 1]) for i in range(0, len(nums), 2)]
            else:
                data[key] = rest
        pts = [float(x) for x in data["branch_points"]]
        bps = tuple(complex(pts[i], pts[i + 1]) for i in range(0, len(pts), 2))
        spec = CurveSpec(bps)
        n = int(data["genus"][0])
        arr = {k: np.array([v[i] for i in range(n)], dtype=complex) for k, v in mats.items()}
        bp = complex(float(data["base_point"][0]), float(data["base_point"][1]))
        curve = Curve(spec)
        return cls(spec, arr["A"], arr["B"], arr["C"], arr["tau"], float(data["cond"][0]),
                   list(curve.cuts), bp, curve)


def build_homology(spec: CurveSpec) -> dict:
    """Cut pairing and cycle description for the curve."""
    curve = Curve(spec)
    n = spec.genus
    return {
        "cuts": list(curve.cuts),
        "a_cycles": [{"cut": k + 1, "orientation": "counter-clockwise, sheet +1"} for k in range(n)],
        "b_cycles": [
            {"from_cut": n + 1, "to_cut": k + 1,
             "gaps": [j + 1 for j in range(k, n)]}
            for k in range(n)
        ],
        "base_point": curve.base_point,
    }


def period_matrices(spec: CurveSpec, sym_tol: float = 1e-10, cond_max: float = 1e10) -> PeriodData:
    """Compute ``A``, ``B``, ``C = A^-1`` and ``tau = A^-1 B``."""
    curve = Curve(spec)
    basis = holomorphic_basis(curve.n)
    A = curve.periods(basis, "a")
    B = curve.periods(basis, "b")
    cond = float(np.linalg.cond(A))
    if cond > cond_max:
        raise CurveError(f"a-period matrix is ill-conditioned (cond = {cond:.3e})")
    C = np.linalg.inv(A)
    tau = C @ B
    asym = float(np.max(np.abs(tau - tau.T)))
    if asym > sym_tol * max(1.0, float(np.max(np.abs(tau)))):
        raise CurveError(f"tau is not symmetric (max asymmetry {asym:.3e})")
    eig = np.linalg.eigvalsh(0.5 * (tau.imag + tau.imag.T))
    if eig.min() <= 0:
        raise CurveError("Im tau is not positive definite")
    return PeriodData(spec, A, B, C, tau, cond, list(curve.cuts), curve.base_point, curve)


# ---------------------------------------------------------------------------
# Abel map
# ---------------------------------------------------------------------------

def sqrtR(p: SurfacePoint, spec: CurveSpec) -> complex:
    return Curve(spec).sqrtR(p)


def abel_map(p: SurfacePoint, pd: PeriodData, avoid: Sequence[complex] = ()) -> np.ndarray:
    """``int_{P0}^{p} omega`` along the planned path (not lattice-reduced)."""
    return pd.curve.integrate_from_base(pd.normalized(), p, avoid)


def abel_map_infinity(sign: str, pd: PeriodData) -> np.ndarray:
    """``int_{P0}^{P_inf+-} omega`` with an exact tail in ``zeta = 1/lambda``."""
    return pd.curve.integrate_from_base(pd.normalized(), sign)


def omega_zeta_leading(sign: str, pd: PeriodData) -> np.ndarray:
    """Coefficient of ``d zeta`` of ``omega`` at ``P_inf+-``."""
    s = infinity_sheet(sign)
    diff = pd.normalized()
    return -diff.num_zeta(np.array([0.0]))[0] / s


# ---------------------------------------------------------------------------
# third-kind differential
# ---------------------------------------------------------------------------

@dataclass
class ThirdKindData:
    """Normalized third-kind differential with residue +1 at ``nu``, -1 at ``mu``.

    ``omega = 1/2 (1/(l-nu) - 1/(l-mu)) dl
              + (y_nu/(l-nu) - y_mu/(l-mu)) dl/(2y) + sum_l d_l l**(l-1) dl/y``.
    """

    nu: SurfacePoint
    mu: SurfacePoint
    y_nu: complex
    y_mu: complex
    d: np.ndarray
    gamma: np.ndarray
    omega0_inf_plus: complex
    omega0_inf_minus: complex
    a_periods: np.ndarray
    residues: tuple

    @property
    def M(self) -> complex:
        return 0.5 * (self.mu.lam - self.nu.lam)

    def differential(self) -> Differential:
        return third_kind_differential(self.nu.lam, self.mu.lam, self.y_nu, self.y_mu, self.d)


def third_kind_differential(nu, mu, y_nu, y_mu, d) -> Differential:
    return Differential(
        np.asarray(d, dtype=complex)[None, :],
        odd_poles=[(nu, [0.5 * y_nu]), (mu, [-0.5 * y_mu])],
        even_poles=[(nu, [0.5]), (mu, [-0.5])],
    )


def _contour_residue(curve: Curve, diff: Differential, p: SurfacePoint, radius: float, N: int = 256):
    th = 2 * np.pi * np.arange(N) / N
    lam = p.lam + radius * np.exp(1j * th)
    dl = 1j * radius * np.exp(1j * th)
    y = p.sheet * curve.Y(lam)
    vals = (diff.num(lam)[:, 0] / y + diff.even(lam)[:, 0]) * dl
    return complex(vals.mean() * 2 * np.pi / (2j * np.pi))


def third_kind(nu: SurfacePoint, mu: SurfacePoint, pd: PeriodData, check_tol: float = 1e-9) -> ThirdKindData:
    curve = pd.curve
    if abs(nu.lam - mu.lam) == 0 and nu.sheet == mu.sheet:
        raise CurveError("third-kind poles must differ")
    for p in (nu, mu):
        if np.min(np.abs(curve.points - p.lam)) <= 1e-10 * curve.scale:
            raise CurveError("third-kind poles must avoid branch points")
    y_nu, y_mu = curve.sqrtR(nu), curve.sqrtR(mu)
    n = pd.n
    bare = third_kind_differential(nu.lam, mu.lam, y_nu, y_mu, np.zeros(n))
    a_bare = curve.periods(bare, "a")[0]
    try:
        d = -np.linalg.solve(pd.A.T, a_bare)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - A is checked upstream
        raise CurveError("singular system for third-kind constants") from exc
    diff = third_kind_differential(nu.lam, mu.lam, y_nu, y_mu, d)
    a_per = curve.periods(diff, "a")[0]
    if np.max(np.abs(a_per)) > check_tol:
        raise CurveError(f"third-kind a-periods do not vanish ({np.max(np.abs(a_per)):.3e})")
    gamma = np.empty(n, dtype=complex)
    gamma[n - 1] = d[n - 1]
    if n > 1:
        gamma[: n - 1] = np.roots(d[::-1] / d[n - 1]) if d[n - 1] != 0 else np.nan
    # residues by small circles
    others = [z for z in curve.points] + [nu.lam, mu.lam]
    res = []
    for p in (nu, mu):
        dist = min(abs(z - p.lam) for z in others if abs(z - p.lam) > 0)
        dist = min(dist, min(_point_seg_dist(p.lam, a, b) for a, b in curve.cuts))
        res.append(_contour_residue(curve, diff, p, 0.25 * dist))
    avoid = (nu.lam, mu.lam)
    both = Differential(np.vstack([pd.C, d[None, :]]),
                        odd_poles=[(nu.lam, np.r_[np.zeros(n), 0.5 * y_nu]),
                                   (mu.lam, np.r_[np.zeros(n), -0.5 * y_mu])],
                        even_poles=[(nu.lam, np.r_[np.zeros(n), 0.5]),
                                    (mu.lam, np.r_[np.zeros(n), -0.5])])
    w_plus = curve.integrate_from_base(both, INF_PLUS, avoid)[n]
    w_minus = curve.integrate_from_base(both, INF_MINUS, avoid)[n]
    return ThirdKindData(nu, mu, y_nu, y_mu, d, gamma, complex(w_plus), complex(w_minus),
                         a_per, tuple(res))


def third_kind_zeta_leading(tk: ThirdKindData, sign: str, pd: PeriodData) -> complex:
    """Coefficient of ``d zeta`` at ``P_inf+-``; equals ``M +- gamma_n``."""
    s = infinity_sheet(sign)
    diff = tk.differential()
    z0 = np.array([0.0])
    return complex(-diff.num_zeta(z0)[0, 0] / s + diff.even_zeta(z0)[0, 0])


# ---------------------------------------------------------------------------
# Riemann constants
# ---------------------------------------------------------------------------

def half_periods(pd: PeriodData):
    n = pd.n
    for a in np.ndindex(*(2,) * n):
        for b in np.ndindex(*(2,) * n):
            yield 0.5 * (np.array(a, dtype=float) + pd.tau @ np.array(b, dtype=float))


def riemann_vanishing_residual(K: np.ndarray, pd: PeriodData, probes: Sequence[SurfacePoint]) -> float:
    """Max over probes of ``|theta(K - A(Q_k) + A(D))| / typical |theta|``, ``D = sum Q``."""
    from .theta import ThetaContext, theta

    ctx = ThetaContext(pd.tau)
    AQ = [abel_map(q, pd) for q in probes]
    AD = sum(AQ)
    typical = max(abs(theta(K - AQ[0] + AD + s, ctx)) for s in (0.3, 0.7j, 0.5 + 0.2j))
    worst = 0.0
    for Aq in AQ:
        worst = max(worst, abs(theta(K - Aq + AD, ctx)) / max(typical, 1e-300))
    return worst


def default_probes(pd: PeriodData) -> list:
    """Deterministic generic probe points off the cuts."""
    curve = pd.curve
    rng = np.random.default_rng(20240611)
    pts = []
    while len(pts) < pd.n:
        z = complex(*(rng.uniform(-1, 1, 2) * curve.scale))
        if min(_point_seg_dist(z, a, b) for a, b in curve.cuts) > 0.1 * curve.min_sep:
            pts.append(SurfacePoint(z, 1 if len(pts) % 2 == 0 else -1))
    return pts


def riemann_constants(pd: PeriodData, tol: float = 1e-8, probes: Sequence[SurfacePoint] | None = None) -> np.ndarray:
    """Riemann constants for the base point ``P0``.

    Genus 1 uses ``(1 + tau) / 2``. For higher genus ``P0`` is a branch point,
    so ``K`` is a half-period; it is the unique one for which
    ``theta(K + A(D_{n-1}))`` vanishes on generic divisors of degree ``n - 1``.
    """
    if pd.n == 1:
        return 0.5 * (1.0 + np.diag(pd.tau))
    probes = default_probes(pd) if probes is None else list(probes)
    scored = sorted((riemann_vanishing_residual(c, pd, probes), i, c)
                    for i, c in enumerate(half_periods(pd)))
    best, second = scored[0][0], scored[1][0]
    if best > tol or second < 1e3 * max(best, 1e-300) and second < 1e-4:
        raise CurveError(
            f"no unique half-period passes the vanishing probe (best {best:.3e}, next {second:.3e})"
        )
    return scored[0][2]


# ---------------------------------------------------------------------------
# helpers for symmetric functions
# ---------------------------------------------------------------------------

def lagrange_identity(points: Sequence, l: int):
    """``sum_k p_k**(l-1) / prod_{r != k} (p_k - p_r)``; exact for rationals."""
    pts = [Fraction(p) if isinstance(p, int) else p for p in points]
    total = 0
    for k, pk in enumerate(pts):
        den = 1
        for r, pr in enumerate(pts):
            if r != k:
                den = den * (pk - pr)
        total = total + pk ** (l - 1) / den
    return total


def complete_homogeneous(points: Sequence, degree: int):
    """``h_degree`` of the given values (exact for Fractions/ints)."""
    if degree < 0:
        return 0
    h = [1] + [0] * degree
    for p in points:
        for d in range(1, degree + 1):
            h[d] = h[d] + p * h[d - 1]
    return h[degree]


def elementary_symmetric(points: Sequence, k: int):
    if k < 0 or k > len(points):
        return 0
    e = [1] + [0] * len(points)
    for p in points:
        for d in range(len(points), 0, -1):
            e[d] = e[d] + p * e[d - 1]
    return e[k]


def json_complex(z) -> list:
    z = complex(z)
    return [float(f"{z.real:.17g}"), float(f"{z.imag:.17g}")]

