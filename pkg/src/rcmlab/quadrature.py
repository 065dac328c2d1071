"""Deterministic quadrature: radial integrals over R^d, two-center overlap
integrals, and covariogram reduction of double integrals over K x K.

The core integrator is an adaptive Gauss rule pair (orders 10 and 21) with
worst-interval bisection.  Indicator discontinuities destroy the convergence
order of any fixed rule, so every caller passes the cut radii of its
integrand as explicit breakpoints and the integrator subdivides there
exactly.  Integrands are evaluated vectorised (ndarray -> ndarray).

Observation regions are axis-aligned boxes with half-open membership
(lower < x <= lower + side), which keeps volumes, diameters, covariograms
and margins exact.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .connfn import ConnectionFunction, sphere_surface


class QuadratureError(RuntimeError):
    """Subdivision budget exhausted before reaching the tolerance."""


class QuadResult(NamedTuple):
    value: float
    error: float

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and budgets for all quadrature in a run."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_subdiv: int = 512
    tail_eps: float = 1e-12  # mass discarded beyond the improper-integral cutoff

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.tail_eps > 0):
            raise ValueError("tolerances must be > 0")
        if self.tail_eps > self.abs_tol:
            raise ValueError("tail epsilon must not exceed the absolute tolerance")
        if self.max_subdiv < 4:
            raise ValueError("max_subdiv too small")

    def inner(self) -> "QuadratureSpec":
        """Slightly tightened spec for nested (inner) integrals."""
        return replace(self, rel_tol=self.rel_tol * 0.1, abs_tol=self.abs_tol * 0.1)


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class Region:
    """Axis-aligned box in R^d with half-open membership lower < x <= upper."""

    lower: tuple[float, ...]
    sides: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.sides) or not self.lower:
            raise ValueError("lower and sides must have equal positive length")
        if any(not s > 0 for s in self.sides):
            raise ValueError("all side lengths must be > 0")

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(lo + s for lo, s in zip(self.lower, self.sides))

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.sides))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask for points (m, d) in the half-open box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array(self.lower)
        up = np.array(self.upper)
        return np.all((pts > lo) & (pts <= up), axis=1)

    def expand(self, margin: float) -> "Region":
        if margin < 0:
            raise ValueError("margin must be >= 0")
        return Region(
            tuple(lo - margin for lo in self.lower),
            tuple(s + 2 * margin for s in self.sides),
        )


def unit_box(d: int) -> Region:
    return Region((0.0,) * d, (1.0,) * d)


# -- adaptive integrator ------------------------------------------------------

_NODES_LO, _WEIGHTS_LO = np.polynomial.legendre.leggauss(10)
_NODES_HI, _WEIGHTS_HI = np.polynomial.legendre.leggauss(21)


def _eval_interval(f, a: float, b: float):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = np.concatenate([mid + half * _NODES_HI, mid + half * _NODES_LO])
    y = np.asarray(f(x), dtype=float)
    hi = half * float(np.dot(_WEIGHTS_HI, y[: _NODES_HI.size]))
    lo = half * float(np.dot(_WEIGHTS_LO, y[_NODES_HI.size :]))
    return hi, abs(hi - lo)


def adaptive_quad(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    breakpoints=(),
) -> QuadResult:
    """Integrate a vectorised f over [a, b] with bisection refinement.

    Interior breakpoints become initial interval endpoints, so integrands
    that are smooth between their cuts converge at full order.
    """
    if b <= a:
        return QuadResult(0.0, 0.0)
    pts = sorted({a, b, *(p for p in breakpoints if a < p < b)})
    heap = []
    counter = 0
    total = 0.0
    total_err = 0.0
    for lo, hi in zip(pts, pts[1:]):
        val, err = _eval_interval(f, lo, hi)
        total += val
        total_err += err
        heapq.heappush(heap, (-err, counter, lo, hi, val))
        counter += 1

    while True:
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        if total_err <= tol:
            return QuadResult(total, total_err)
        if len(heap) >= spec.max_subdiv:
            if total_err <= 10.0 * tol:
                return QuadResult(total, total_err)
            raise QuadratureError(
                f"no convergence within {spec.max_subdiv} subdivisions "
                f"(err {total_err:.3e}, tol {tol:.3e})"
            )
        neg_err, _, lo, hi, val = heapq.heappop(heap)
        total -= val
        total_err += neg_err  # removes err (neg_err = -err)
        mid = 0.5 * (lo + hi)
        for sub_lo, sub_hi in ((lo, mid), (mid, hi)):
            sval, serr = _eval_interval(f, sub_lo, sub_hi)
            total += sval
            total_err += serr
            heapq.heappush(heap, (-serr, counter, sub_lo, sub_hi, sval))
            counter += 1


def vectorize_scalar(fn: Callable[[float], float]) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a scalar-valued function for the vectorised integrand contract."""

    def wrapped(x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([fn(float(v)) for v in arr])

    return wrapped


# -- radial and overlap integrals ---------------------------------------------


def radial_integral(
    h: ConnectionFunction, d: int, spec: QuadratureSpec = DEFAULT_SPEC
) -> QuadResult:
    """int_{R^d} h(|y|) dy = omega_d int_0^inf r^{d-1} h(r) dr.

    The improper integral is truncated at the tail radius T(tail_eps); the
    discarded mass is folded into the reported error bound.
    """
    T = h.tail_radius(spec.tail_eps, d)
    if T <= 0.0:
        return QuadResult(0.0, spec.tail_eps)
    om = sphere_surface(d)
    val, err = adaptive_quad(
        lambda r: om * r ** (d - 1) * h.eval(r), 0.0, T, spec, h.cut_radii
    )
    return QuadResult(val, err + spec.tail_eps)


def _pair_breaks(s: float, cuts: tuple[float, ...]):
    """Radii where |r - s| or r + s crosses one of the cuts."""
    brs = []
    for c in cuts:
        brs.extend((s + c, s - c, c - s))
    return [b for b in brs if b > 0.0]


def _overlap_product(h1, h2, d, spec) -> QuadResult:
    T = min(h1.tail_radius(spec.tail_eps, d), h2.tail_radius(spec.tail_eps, d))
    if T <= 0.0:
        return QuadResult(0.0, spec.tail_eps)
    om = sphere_surface(d)
    val, err = adaptive_quad(
        lambda r: om * r ** (d - 1) * h1.eval(r) * h2.eval(r),
        0.0,
        T,
        spec,
        h1.cut_radii + h2.cut_radii,
    )
    return QuadResult(val, err + spec.tail_eps)


def overlap_integral(
    h1: ConnectionFunction,
    h2: ConnectionFunction,
    s: float,
    d: int,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> QuadResult:
    """O(s) = int_{R^d} h1(|y|) h2(|y - s e1|) dy for center separation s >= 0.

    d=1 integrates h1(r) (h2(|r-s|) + h2(r+s)) directly; d=2 uses the polar
    angle form with |y - s e1| = sqrt(r^2 + s^2 - 2 r s cos(theta)); d=3 uses
    the same reduction with cos(theta) substituted away, which leaves the
    chord integral int t h2(t) dt over [|r-s|, r+s].
    """
    if s < 0:
        raise ValueError("separation must be >= 0")
    supp1, supp2 = h1.support_radius, h2.support_radius
    if supp1 is not None and supp2 is not None and s >= supp1 + supp2:
        return QuadResult(0.0, 0.0)
    if s <= 1e-12:
        return _overlap_product(h1, h2, d, spec)

    T1 = h1.tail_radius(spec.tail_eps, d)
    lo = 0.0
    hi = T1
    if supp2 is not None:
        hi = min(hi, s + supp2)
        if d >= 2:
            lo = max(0.0, s - supp2)
    if hi <= lo:
        return QuadResult(0.0, spec.tail_eps)

    cuts1, cuts2 = h1.cut_radii, h2.cut_radii
    inner_spec = spec.inner()

    if d == 1:
        def integrand(r):
            return h1.eval(r) * (h2.eval(np.abs(r - s)) + h2.eval(r + s))

        breaks = list(cuts1) + [s] + _pair_breaks(s, cuts2)
        val, err = adaptive_quad(integrand, lo, hi, spec, breaks)
        return QuadResult(val, err + spec.tail_eps)

    if d == 2:
        def theta_mass(r: float) -> float:
            lo_d, hi_d = abs(r - s), r + s
            brs = []
            for c in cuts2:
                if lo_d < c < hi_d:
                    u = (r * r + s * s - c * c) / (2.0 * r * s)
                    brs.append(math.acos(max(-1.0, min(1.0, u))))
            val, _ = adaptive_quad(
                lambda th: h2.eval(np.sqrt(r * r + s * s - 2.0 * r * s * np.cos(th))),
                0.0,
                math.pi,
                inner_spec,
                brs,
            )
            return val

        def integrand(rarr):
            rarr = np.atleast_1d(np.asarray(rarr, dtype=float))
            base = h1.eval(rarr)
            out = np.zeros_like(base)
            for k in np.nonzero((base > 0.0) & (rarr > 0.0))[0]:
                r = float(rarr[k])
                out[k] = 2.0 * r * base[k] * theta_mass(r)
            return out

        breaks = list(cuts1) + _pair_breaks(s, cuts2)
        val, err = adaptive_quad(integrand, lo, hi, spec, breaks)
        return QuadResult(val, err + spec.tail_eps)

    if d == 3:
        def chord_mass(r: float) -> float:
            t_lo, t_hi = abs(r - s), r + s
            brs = [c for c in cuts2 if t_lo < c < t_hi]
            val, _ = adaptive_quad(
                lambda t: t * h2.eval(t), t_lo, t_hi, inner_spec, brs
            )
            return val

        def integrand(rarr):
            rarr = np.atleast_1d(np.asarray(rarr, dtype=float))
            base = h1.eval(rarr)
            out = np.zeros_like(base)
            for k in np.nonzero((base > 0.0) & (rarr > 0.0))[0]:
                r = float(rarr[k])
                out[k] = (2.0 * math.pi / s) * r * base[k] * chord_mass(r)
            return out

        breaks = list(cuts1) + _pair_breaks(s, cuts2)
        val, err = adaptive_quad(integrand, lo, hi, spec, breaks)
        return QuadResult(val, err + spec.tail_eps)

    raise ValueError("dimension must be 1, 2 or 3")


# -- covariograms and double region integrals ---------------------------------


def box_covariogram(K: Region, v) -> float:
    """c_K(v) = vol(K intersect (K - v)) = prod_i max(0, a_i - |v_i|)."""
    vv = np.asarray(v, dtype=float)
    return float(np.prod(np.maximum(0.0, np.array(K.sides) - np.abs(vv))))


def covariogram_shell_mass(
    K: Region, s: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> float:
    """A(s) = int_{S^{d-1}} c_K(s * omega) dsigma(omega).

    With this weight, int_{K x K} F(|x1-x2|) = int_0^diam F(s) s^{d-1} A(s) ds
    for any radial F (c_K itself need not be radial).
    """
    d = K.dim
    a = np.array(K.sides)
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0.0:
        return sphere_surface(d) * K.volume
    if d == 1:
        return 2.0 * max(0.0, a[0] - s)
    inner_spec = spec.inner()
    if d == 2:
        def integrand(phi):
            return np.maximum(0.0, a[0] - s * np.cos(phi)) * np.maximum(
                0.0, a[1] - s * np.sin(phi)
            )

        brs = []
        if s > a[0]:
            brs.append(math.acos(a[0] / s))
        if s > a[1]:
            brs.append(math.asin(a[1] / s))
        val, _ = adaptive_quad(integrand, 0.0, math.pi / 2.0, inner_spec, brs)
        return 4.0 * val

    def phi_mass(theta: float) -> float:
        st = math.sin(theta)
        f3 = max(0.0, a[2] - s * math.cos(theta))
        if f3 == 0.0 or st == 0.0:
            if st == 0.0:
                return f3 * a[0] * a[1] * (math.pi / 2.0) if f3 else 0.0
            return 0.0

        def integrand(phi):
            return np.maximum(0.0, a[0] - s * st * np.cos(phi)) * np.maximum(
                0.0, a[1] - s * st * np.sin(phi)
            )

        brs = []
        if s * st > a[0]:
            brs.append(math.acos(a[0] / (s * st)))
        if s * st > a[1]:
            brs.append(math.asin(a[1] / (s * st)))
        val, _ = adaptive_quad(integrand, 0.0, math.pi / 2.0, inner_spec, brs)
        return f3 * val

    def outer(tharr):
        tharr = np.atleast_1d(np.asarray(tharr, dtype=float))
        return np.array([math.sin(t) * phi_mass(float(t)) for t in tharr])

    brs = []
    if s > a[2]:
        brs.append(math.acos(a[2] / s))
    val, _ = adaptive_quad(outer, 0.0, math.pi / 2.0, inner_spec, brs)
    return 8.0 * val


def double_region_integral(
    F: Callable[[np.ndarray], np.ndarray],
    K: Region,
    d: int,
    spec: QuadratureSpec = DEFAULT_SPEC,
    breakpoints=(),
) -> QuadResult:
    """int_K int_K F(|x1 - x2|) dx2 dx1 for a radial, vectorised F.

    Reduced through the box covariogram to a single radial integral against
    the numerically isotropised covariogram shell mass.
    """
    if d != K.dim:
        raise ValueError("dimension mismatch between F and K")
    diam = K.diameter

    def integrand(sarr):
        sarr = np.atleast_1d(np.asarray(sarr, dtype=float))
        fv = np.asarray(F(sarr), dtype=float)
        shell = np.array([covariogram_shell_mass(K, float(s), spec) for s in sarr])
        return fv * sarr ** (d - 1) * shell

    breaks = sorted({*(b for b in breakpoints if 0.0 < b < diam), *K.sides})
    val, err = adaptive_quad(integrand, 0.0, diam, spec, breaks)
    return QuadResult(val, err)
