"""Radial connection functions with exact truncation/scaling transform stacks.

A connection function maps a distance x >= 0 to a probability in [0, 1], is
non-increasing, and has a finite positive integral over R^d.  Instances are
immutable: a base shape (hard disk, exponential, gaussian, or a monotone
piecewise-linear table) plus an ordered stack of symbolic transforms

    truncate_inside(R):   f -> 1{x <= R} * f(x)
    truncate_outside(R):  f -> 1{x >  R} * f(x)
    scale(n):             f -> f(n * x)

Transforms are kept symbolic so indicator cutoffs are exact at the boundary;
ties at the cut evaluate as "inside" (1{x <= R}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, special


class ConnFnError(ValueError):
    """Invalid connection-function construction or variant request."""


@dataclass(frozen=True)
class TruncateInside:
    radius: float  # keep values at x <= radius


@dataclass(frozen=True)
class TruncateOutside:
    radius: float  # keep values at x > radius


@dataclass(frozen=True)
class Scale:
    factor: float  # evaluate the previous stage at factor * x


Transform = TruncateInside | TruncateOutside | Scale

_KINDS = ("hard_disk", "exponential", "gaussian", "table")


def sphere_surface(d: int) -> float:
    """Surface area of the unit sphere in R^d (2, 2*pi, 4*pi for d=1,2,3)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class ConnectionFunction:
    """A radial [0,1]-valued non-increasing function with a transform stack."""

    kind: str
    a: float | None = None
    table: tuple[tuple[float, float], ...] | None = None
    transforms: tuple[Transform, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConnFnError(f"unknown kind {self.kind!r}")
        if self.kind == "table":
            if not self.table or len(self.table) < 2:
                raise ConnFnError("table needs at least two (radius, value) points")
            rs = [r for r, _ in self.table]
            vs = [v for _, v in self.table]
            if rs[0] != 0.0:
                raise ConnFnError("table must start at radius 0")
            if any(r2 <= r1 for r1, r2 in zip(rs, rs[1:])):
                raise ConnFnError("table radii must be strictly increasing")
            if any(not 0.0 <= v <= 1.0 for v in vs):
                raise ConnFnError("table values must lie in [0, 1]")
            if any(v2 > v1 for v1, v2 in zip(vs, vs[1:])):
                raise ConnFnError("table values must be non-increasing")
            if vs[-1] != 0.0:
                raise ConnFnError(
                    "table must end at value 0; the final radius is the "
                    "mandatory tail cutoff"
                )
        else:
            if self.a is None or not self.a > 0.0:
                raise ConnFnError(f"{self.kind} needs a positive scale parameter")
        for t in self.transforms:
            if isinstance(t, (TruncateInside, TruncateOutside)):
                if not t.radius >= 0.0:
                    raise ConnFnError("truncation radius must be >= 0")
            elif isinstance(t, Scale):
                if not t.factor > 0.0:
                    raise ConnFnError("scale factor must be > 0")
            else:
                raise ConnFnError(f"unknown transform {t!r}")

    # -- evaluation ---------------------------------------------------------

    def _base_eval(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "hard_disk":
            return (x <= self.a).astype(float)
        if self.kind == "exponential":
            return np.exp(-x / self.a)
        if self.kind == "gaussian":
            return np.exp(-((x / self.a) ** 2))
        rs = np.array([r for r, _ in self.table])
        vs = np.array([v for _, v in self.table])
        return np.interp(x, rs, vs, left=vs[0], right=0.0)

    def eval(self, x):
        """Value of the composed stack at radius x (scalar or ndarray, x >= 0)."""
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        cur = np.atleast_1d(arr).copy()
        keep = np.ones(cur.shape, dtype=bool)
        for t in reversed(self.transforms):
            if isinstance(t, Scale):
                cur *= t.factor
            elif isinstance(t, TruncateInside):
                keep &= cur <= t.radius
            else:
                keep &= cur > t.radius
        vals = np.where(keep, self._base_eval(cur), 0.0)
        return float(vals[0]) if scalar else vals

    __call__ = eval

    # -- analytic metadata --------------------------------------------------

    @property
    def support_radius(self) -> float | None:
        """Exact radius beyond which the function is 0, or None if unbounded."""
        s = None
        if self.kind == "hard_disk":
            s = self.a
        elif self.kind == "table":
            s = self.table[-1][0]
        for t in self.transforms:
            if isinstance(t, Scale):
                s = None if s is None else s / t.factor
            elif isinstance(t, TruncateInside):
                s = t.radius if s is None else min(s, t.radius)
            else:  # TruncateOutside: support unchanged unless wholly removed
                if s is not None and s <= t.radius:
                    s = 0.0
        return s

    @property
    def cut_radii(self) -> tuple[float, ...]:
        """Radii where the stack (or base) is discontinuous or kinked.

        Quadrature uses these as explicit subdivision breakpoints.
        """
        if self.kind == "hard_disk":
            cuts = [self.a]
        elif self.kind == "table":
            cuts = [r for r, _ in self.table if r > 0.0]
        else:
            cuts = []
        for t in self.transforms:
            if isinstance(t, Scale):
                cuts = [c / t.factor for c in cuts]
            else:
                cuts.append(t.radius)
        return tuple(sorted({c for c in cuts if c > 0.0 and math.isfinite(c)}))

    def tail_radius(self, eps: float, d: int) -> float:
        """Radius T with omega_d * int_T^inf r^{d-1} f(r) dr < eps.

        Exact (zero tail) for bounded-support stacks; analytic inversion for
        the unbounded builtins.  Table functions are bounded by construction,
        so a cutoff is always available.
        """
        if not eps > 0.0:
            raise ConnFnError("tail epsilon must be > 0")
        s = self.support_radius
        if s is not None:
            return s
        # Unbounded support: no inside-truncation anywhere, base unbounded.
        # Outside truncations only remove mass, scales compose multiplicatively.
        factor = 1.0
        for t in self.transforms:
            if isinstance(t, Scale):
                factor *= t.factor
        return _base_tail_radius(self.kind, self.a, eps * factor**d, d) / factor

    # -- construction helpers -----------------------------------------------

    def with_transform(self, t: Transform) -> "ConnectionFunction":
        return replace(self, transforms=self.transforms + (t,))

    def truncate_inside(self, R: float) -> "ConnectionFunction":
        return self.with_transform(TruncateInside(R))

    def truncate_outside(self, R: float) -> "ConnectionFunction":
        return self.with_transform(TruncateOutside(R))

    def scale(self, n: float) -> "ConnectionFunction":
        return self.with_transform(Scale(n))


def _base_tail_mass(kind: str, a: float, T: float, d: int) -> float:
    """omega_d * int_T^inf r^{d-1} f(r) dr for the unbounded builtins."""
    om = sphere_surface(d)
    if kind == "exponential":
        # int_T^inf r^{d-1} e^{-r/a} dr = a^d Gamma(d) Q(d, T/a)
        return om * a**d * math.gamma(d) * float(special.gammaincc(d, T / a))
    if kind == "gaussian":
        # int_T^inf r^{d-1} e^{-(r/a)^2} dr = (a^d / 2) Gamma(d/2) Q(d/2, (T/a)^2)
        return (
            om
            * a**d
            / 2.0
            * math.gamma(d / 2.0)
            * float(special.gammaincc(d / 2.0, (T / a) ** 2))
        )
    raise ConnFnError(f"no analytic tail for kind {kind!r}")


def _base_tail_radius(kind: str, a: float, eps: float, d: int) -> float:
    # solve for half the budget so the remaining mass is strictly below eps
    target = 0.5 * eps
    total = _base_tail_mass(kind, a, 0.0, d)
    if total <= target:
        return 0.0
    hi = a
    while _base_tail_mass(kind, a, hi, d) > target:
        hi *= 2.0
    return float(
        optimize.brentq(
            lambda T: _base_tail_mass(kind, a, T, d) - target, hi / 2.0, hi, xtol=1e-13
        )
    )


# -- builtins ---------------------------------------------------------------


def hard_disk(a: float) -> ConnectionFunction:
    """Indicator connection function 1{x <= a}."""
    return ConnectionFunction(kind="hard_disk", a=a)


def exponential(a: float) -> ConnectionFunction:
    """Connection function exp(-x/a)."""
    return ConnectionFunction(kind="exponential", a=a)


def gaussian(a: float) -> ConnectionFunction:
    """Connection function exp(-(x/a)^2)."""
    return ConnectionFunction(kind="gaussian", a=a)


def table_function(points) -> ConnectionFunction:
    """Monotone piecewise-linear connection function from (radius, value) pairs.

    The final point must have value 0; its radius doubles as the mandatory
    tail cutoff (monotonicity alone cannot bound tails).
    """
    return ConnectionFunction(kind="table", table=tuple((float(r), float(v)) for r, v in points))


# -- named variants ---------------------------------------------------------

VARIANTS = (
    "inside",  # 1{x <= R} f(x)
    "outside",  # 1{x >  R} f(x)
    "scaled",  # f(n x)
    "cut_then_scale",  # 1{x <= R/n} f(nx)  == (inside R) evaluated at nx
    "cut_then_scale_outside",  # 1{x >  R/n} f(nx)
    "scale_then_cut",  # 1{x <= R} f(nx)
    "scale_then_cut_outside",  # 1{x >  R} f(nx)
    "inside_scaled_radius",  # 1{x <= nR} f(x)
    "outside_scaled_radius",  # 1{x >  nR} f(x)
)


def make_variant(
    f: ConnectionFunction, variant: str, R: float | None = None, n: float | None = None
) -> ConnectionFunction:
    """Build one of the named truncation/scaling variants of f.

    The two truncate-and-scale orders do not commute: ``cut_then_scale``
    first truncates at R and then shrinks the argument (cut lands at R/n),
    while ``scale_then_cut`` shrinks first and truncates at R.
    """
    if variant not in VARIANTS:
        raise ConnFnError(f"invalid variant name {variant!r}")
    needs_R = variant != "scaled"
    needs_n = variant not in ("inside", "outside")
    if needs_R:
        if R is None or not R > 0.0:
            raise ConnFnError(f"variant {variant!r} needs R > 0")
    if needs_n:
        if n is None or not n >= 1.0:
            raise ConnFnError(f"variant {variant!r} needs n >= 1")

    if variant == "inside":
        return f.truncate_inside(R)
    if variant == "outside":
        return f.truncate_outside(R)
    if variant == "scaled":
        return f.scale(n)
    if variant == "cut_then_scale":
        return f.scale(n).truncate_inside(R / n)
    if variant == "cut_then_scale_outside":
        return f.scale(n).truncate_outside(R / n)
    if variant == "scale_then_cut":
        return f.scale(n).truncate_inside(R)
    if variant == "scale_then_cut_outside":
        return f.scale(n).truncate_outside(R)
    if variant == "inside_scaled_radius":
        return f.truncate_inside(n * R)
    return f.truncate_outside(n * R)


@dataclass(frozen=True)
class IdentityReport:
    ok: bool
    checked: int
    failures: tuple[tuple[str, float, float, float], ...]  # (identity, x, lhs, rhs)

    @property
    def first_failure(self):
        return self.failures[0] if self.failures else None


def verify_identities(f: ConnectionFunction, R: float, n: float, grid) -> IdentityReport:
    """Check the variant algebra pointwise on a radius grid.

    (i)   cut_then_scale(x)       == inside(n*x)
    (ii)  scale_then_cut(x)       == inside_scaled_radius(n*x)
    (iii) inside(x) + outside(x)  == f(x)
    (iv)  cut_then_scale(x) + cut_then_scale_outside(x) == scaled(x)

    Comparisons are exact; both sides are evaluated through the same
    indicator rules.  Reports every violated (identity, x, lhs, rhs).
    """
    grid = np.asarray(list(grid), dtype=float)
    g_in = make_variant(f, "inside", R=R)
    g_out = make_variant(f, "outside", R=R)
    g_n = make_variant(f, "scaled", n=n)
    g_cs = make_variant(f, "cut_then_scale", R=R, n=n)
    g_cs_out = make_variant(f, "cut_then_scale_outside", R=R, n=n)
    g_sc = make_variant(f, "scale_then_cut", R=R, n=n)
    k_in = make_variant(f, "inside_scaled_radius", R=R, n=n)

    checks = (
        ("cut_then_scale == inside(n*x)", g_cs.eval(grid), g_in.eval(n * grid)),
        ("scale_then_cut == inside_scaled_radius(n*x)", g_sc.eval(grid), k_in.eval(n * grid)),
        ("inside + outside == f", g_in.eval(grid) + g_out.eval(grid), f.eval(grid)),
        (
            "cut_then_scale + complement == scaled",
            g_cs.eval(grid) + g_cs_out.eval(grid),
            g_n.eval(grid),
        ),
    )
    failures = []
    for name, lhs, rhs in checks:
        bad = np.nonzero(lhs != rhs)[0]
        for idx in bad:
            failures.append((name, float(grid[idx]), float(lhs[idx]), float(rhs[idx])))
    return IdentityReport(ok=not failures, checked=4 * len(grid), failures=tuple(failures))


def is_nonincreasing_on(f: ConnectionFunction, grid, tol: float = 0.0) -> bool:
    """True if f is non-increasing along the sorted grid (within tol)."""
    vals = f.eval(np.sort(np.asarray(list(grid), dtype=float)))
    return bool(np.all(np.diff(vals) <= tol))
