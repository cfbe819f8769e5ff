"""Piecewise monotone interval/circle maps with singular sets.

The zoo implemented here:

* ``lsv_map``            -- intermittent map with a neutral fixed point at 0
                            (g0(x) = x + 2^a x^(1+a) on (0,1/2), g1(x) = 2x-1).
* ``lorenz_like_map``    -- full-branch representative with f'(x) ~ |x|^-a,
                            f(x) = sgn(x) (2^(1-a) |x|^(1-a) - 1/2) on [-1/2,1/2].
* ``singular_intermittent_map`` -- circle map of [-1,1]/~ defined implicitly by
                            x = 2^-g (1+f)^g        on 0 <= x <= 2^-g,
                            x = f + 2^-g (1-f)^g    on 2^-g <  x <= 1,
                            and f(-x) = -f(x); infinite derivative at 0, neutral
                            point at the identified endpoints.  Lebesgue measure
                            is invariant for every g > 1.
* ``skew_product_map``   -- two-dimensional skew product (x,y) -> (f_{a(y)}(x), phi(y)).
* ``piecewise_linear_map`` -- generic affine-branch constructor for tests.

Maps are immutable after construction and all evaluators are pure, so they
are safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._roots import bisect_array

#: default clearance around singular points; evaluation inside it is refused
EPS_SING = 1e-12


class SingularPoint(ValueError):
    """Evaluation was requested inside the clearance of the singular set."""


@dataclass(frozen=True)
class Branch:
    """One monotone C^1 branch of a piecewise map.

    ``value`` and ``deriv`` are numpy-vectorized callables defined on the open
    interval (lo, hi); the formulas extend continuously to whichever endpoints
    are regular.  ``deriv`` is signed; ``orientation`` is its constant sign.
    ``inverse`` (value -> preimage), when present, is used by transfer-operator
    assembly and must be exact on the closure of the image.
    """

    lo: float
    hi: float
    value: Callable
    deriv: Callable
    orientation: int = 1
    inverse: Optional[Callable] = None

    @property
    def domain(self):
        return (self.lo, self.hi)

    def image(self):
        a = float(self.value(np.float64(self.lo)))
        b = float(self.value(np.float64(self.hi)))
        return (a, b) if a <= b else (b, a)


class PiecewiseMap1D:
    """Piecewise monotone map on an interval, or on a circle given as a
    fundamental domain with identified endpoints.

    ``branches`` must be ordered with pairwise disjoint domains whose closures
    cover the phase space; the singular set is the finite complement of the
    branch domains.
    """

    def __init__(self, branches, phase_space, circle=False, name=""):
        branches = sorted(branches, key=lambda b: b.lo)
        lo, hi = float(phase_space[0]), float(phase_space[1])
        for left, right in zip(branches, branches[1:]):
            if left.hi > right.lo + 1e-15:
                raise ValueError("branch domains overlap")
        self.branches = tuple(branches)
        self.phase_space = (lo, hi)
        self.circle = bool(circle)
        self.name = name or type(self).__name__
        pts = {lo, hi}
        for b in branches:
            pts.add(b.lo)
            pts.add(b.hi)
        self.singular_set = np.array(sorted(pts))
        # contiguous branch edges for vectorized dispatch
        self._edges = np.array([b.lo for b in branches] + [branches[-1].hi])

    # -- lookup ---------------------------------------------------------

    def branch_index(self, x):
        """Index of the branch whose open domain contains x (vectorized).

        Points at branch endpoints are assigned to the adjacent branch; use
        ``singular_distance`` to guard against them.
        """
        idx = np.searchsorted(self._edges, x, side="right") - 1
        return np.clip(idx, 0, len(self.branches) - 1)

    def singular_distance(self, x):
        """Distance to the singular set (circle metric if applicable)."""
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self.singular_set, x)
        j = np.clip(j, 1, len(self.singular_set) - 1)
        d = np.minimum(np.abs(x - self.singular_set[j - 1]),
                       np.abs(self.singular_set[j] - x))
        if self.circle:
            lo, hi = self.phase_space
            wrap = np.minimum(np.abs(x - lo), np.abs(hi - x))
            # endpoints are identified: distance to the glued point
            d = np.minimum(d, wrap)
        return d

    # -- evaluation -----------------------------------------------------

    def value_array(self, x):
        """f(x) for an array of non-singular points (unguarded)."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        idx = self.branch_index(x)
        for i, b in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = b.value(x[m])
        return out

    def deriv_array(self, x):
        """Signed derivative f'(x) for an array of non-singular points."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        idx = self.branch_index(x)
        for i, b in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = b.deriv(x[m])
        return out

    def deriv_abs_array(self, x):
        return np.abs(self.deriv_array(x))

    def eval(self, x, eps_sing=EPS_SING):
        """(f(x), |f'(x)|) with a singular-set clearance guard."""
        if self.singular_distance(x) < eps_sing:
            raise SingularPoint(f"{self.name}: x={x!r} within {eps_sing} of the singular set")
        xv = np.float64(x)
        return float(self.value_array(xv)), float(self.deriv_abs_array(xv))

    def iterate_array(self, x, n):
        """f^n(x), vectorized; does not guard singular hits."""
        x = np.asarray(x, dtype=float).copy()
        for _ in range(int(n)):
            x = self.value_array(x)
        return x


class AffineIntervalMap:
    """Interval map with (possibly very many) affine pieces, array-backed.

    Same evaluation protocol as :class:`PiecewiseMap1D`; used for maps whose
    piece count makes per-branch objects impractical (tower layouts).
    """

    def __init__(self, edges, slopes, intercepts, name="affine-map"):
        edges = np.asarray(edges, dtype=float)
        if not np.all(np.diff(edges) > 0):
            raise ValueError("piece edges must be strictly increasing")
        self.piece_edges = edges
        self.slopes = np.asarray(slopes, dtype=float)
        self.intercepts = np.asarray(intercepts, dtype=float)
        if len(self.slopes) != len(edges) - 1 or len(self.intercepts) != len(edges) - 1:
            raise ValueError("need one slope/intercept per piece")
        self.phase_space = (float(edges[0]), float(edges[-1]))
        self.circle = False
        self.name = name
        self.singular_set = edges  # every piece boundary

    @property
    def piece_count(self):
        return len(self.slopes)

    def piece_index(self, x):
        idx = np.searchsorted(self.piece_edges, x, side="right") - 1
        return np.clip(idx, 0, self.piece_count - 1)

    def singular_distance(self, x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self.piece_edges, x), 1, len(self.piece_edges) - 1)
        return np.minimum(np.abs(x - self.piece_edges[j - 1]),
                          np.abs(self.piece_edges[j] - x))

    def value_array(self, x):
        x = np.asarray(x, dtype=float)
        i = self.piece_index(x)
        return self.slopes[i] * x + self.intercepts[i]

    def deriv_array(self, x):
        return self.slopes[self.piece_index(x)]

    def deriv_abs_array(self, x):
        return np.abs(self.deriv_array(x))

    def eval(self, x, eps_sing=EPS_SING):
        if self.singular_distance(x) < eps_sing:
            raise SingularPoint(f"{self.name}: x={x!r} within {eps_sing} of a piece boundary")
        xv = np.float64(x)
        return float(self.value_array(xv)), float(self.deriv_abs_array(xv))

    def iterate_array(self, x, n):
        x = np.asarray(x, dtype=float).copy()
        for _ in range(int(n)):
            x = self.value_array(x)
        return x


# ---------------------------------------------------------------------------
# zoo constructors
# ---------------------------------------------------------------------------

def piecewise_linear_map(pieces, phase_space, circle=False, name="piecewise-linear"):
    """Build a map from (lo, hi, slope, intercept) tuples (test helper)."""
    branches = []
    for lo, hi, s, q in pieces:
        s = float(s)
        q = float(q)
        branches.append(Branch(
            lo=float(lo), hi=float(hi),
            value=(lambda x, s=s, q=q: s * x + q),
            deriv=(lambda x, s=s: np.full_like(np.asarray(x, dtype=float), s)),
            orientation=1 if s > 0 else -1,
            inverse=(lambda v, s=s, q=q: (np.asarray(v, dtype=float) - q) / s),
        ))
    return PiecewiseMap1D(branches, phase_space, circle=circle, name=name)


def doubling_map():
    """2x mod 1 with branch domains (0,1/2) and (1/2,1)."""
    return piecewise_linear_map(
        [(0.0, 0.5, 2.0, 0.0), (0.5, 1.0, 2.0, -1.0)], (0.0, 1.0), name="doubling")


def lsv_map(alpha):
    """Intermittent interval map: g0(x) = x + 2^a x^(1+a) on (0,1/2), g1 = 2x-1.

    Rejects a >= 1, where the Dirac mass at the neutral fixed point is the
    physical measure and no absolutely continuous invariant measure exists.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"lsv_map requires 0 < alpha < 1, got {alpha}")
    a = float(alpha)
    c = 2.0 ** a

    def g0(x):
        x = np.asarray(x, dtype=float)
        return x + c * x ** (1.0 + a)

    def dg0(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + c * (1.0 + a) * x ** a

    def g0_inverse(v):
        v = np.asarray(v, dtype=float)
        return bisect_array(lambda t: g0(t) - v, np.zeros_like(v), np.minimum(v, 0.5),
                            iters=60, newton=(lambda t: g0(t) - v, dg0))

    left = Branch(0.0, 0.5, g0, dg0, orientation=1, inverse=g0_inverse)
    right = Branch(
        0.5, 1.0,
        value=lambda x: 2.0 * np.asarray(x, dtype=float) - 1.0,
        deriv=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        orientation=1,
        inverse=lambda v: 0.5 * (np.asarray(v, dtype=float) + 1.0),
    )
    m = PiecewiseMap1D([left, right], (0.0, 1.0), name=f"lsv(alpha={a:g})")
    m.alpha = a
    return m


def lorenz_like_map(alpha):
    """Full-branch Lorenz-like map on [-1/2, 1/2] with f'(x) ~ |x|^-a.

    f(x) = sgn(x) (2^(1-a) |x|^(1-a) - 1/2); each half maps onto the whole
    interval and f' >= 2(1-a) > 1, which requires a < 1/2.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"lorenz_like_map requires 0 < alpha < 1/2, got {alpha}")
    a = float(alpha)
    c = 2.0 ** (1.0 - a)

    def pos(x):
        x = np.asarray(x, dtype=float)
        return c * x ** (1.0 - a) - 0.5

    def dpos(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return c * (1.0 - a) * x ** (-a)

    def neg(x):
        return -pos(-np.asarray(x, dtype=float))

    def dneg(x):
        return dpos(-np.asarray(x, dtype=float))

    def pos_inverse(v):
        v = np.asarray(v, dtype=float)
        return ((v + 0.5) / c) ** (1.0 / (1.0 - a))

    def neg_inverse(v):
        return -pos_inverse(-np.asarray(v, dtype=float))

    branches = [
        Branch(-0.5, 0.0, neg, dneg, orientation=1, inverse=neg_inverse),
        Branch(0.0, 0.5, pos, dpos, orientation=1, inverse=pos_inverse),
    ]
    m = PiecewiseMap1D(branches, (-0.5, 0.5), name=f"lorenz(alpha={a:g})")
    m.alpha = a
    return m


def singular_intermittent_map(gamma, tol=1e-14):
    """Implicitly defined circle map of [-1,1]/~ with unbounded derivative.

    On the positive fundamental half the map solves

        x = 2^-g (1 + f)^g      for 0 <= x <= 2^-g   (f in [-1, 0], explicit),
        x = f + 2^-g (1 - f)^g  for 2^-g < x <= 1    (f in [0, 1], root-solved),

    extended oddly by f(-x) = -f(x).  The derivative blows up at 0 and the
    identified endpoint 1 ~ -1 is a neutral fixed point; Lebesgue measure is
    invariant.  ``tol`` is the bracket width of the implicit solve; two Newton
    polish steps follow.
    """
    if not gamma > 1.0:
        raise ValueError(f"singular_intermittent_map requires gamma > 1, got {gamma}")
    g = float(gamma)
    thr = 2.0 ** (-g)
    iters = max(20, int(np.ceil(np.log2(1.0 / tol))))

    def _solve_b(x):
        # monotone in f on [0,1]: x = f + thr (1-f)^g
        x = np.asarray(x, dtype=float)
        def rel(t):
            return t + thr * (1.0 - t) ** g - x
        def drel(t):
            return 1.0 - g * thr * (1.0 - t) ** (g - 1.0)
        return bisect_array(rel, np.zeros_like(x), np.ones_like(x),
                            iters=iters, newton=(rel, drel))

    def pos_value(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        low = x <= thr
        if np.any(low):
            out[low] = 2.0 * x[low] ** (1.0 / g) - 1.0
        if np.any(~low):
            out[~low] = _solve_b(x[~low])
        return out

    def pos_deriv(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        low = x <= thr
        if np.any(low):
            with np.errstate(divide="ignore"):
                out[low] = 2.0 / (g * x[low] ** ((g - 1.0) / g))
        if np.any(~low):
            f = _solve_b(x[~low])
            out[~low] = 1.0 / (1.0 - g * thr * (1.0 - f) ** (g - 1.0))
        return out

    def pos_inverse(v):
        # defining relation read backwards: explicit on both pieces
        v = np.asarray(v, dtype=float)
        return np.where(v <= 0.0, thr * (1.0 + v) ** g, v + thr * (1.0 - v) ** g)

    def neg_value(x):
        return -pos_value(-np.asarray(x, dtype=float))

    def neg_deriv(x):
        return pos_deriv(-np.asarray(x, dtype=float))

    def neg_inverse(v):
        return -pos_inverse(-np.asarray(v, dtype=float))

    branches = [
        Branch(-1.0, 0.0, neg_value, neg_deriv, orientation=1, inverse=neg_inverse),
        Branch(0.0, 1.0, pos_value, pos_deriv, orientation=1, inverse=pos_inverse),
    ]
    m = PiecewiseMap1D(branches, (-1.0, 1.0), circle=True,
                       name=f"singular(gamma={g:g})")
    m.gamma = g
    m.junction = thr  # C^1-but-not-C^2 interior point of each branch
    return m


class SkewProductMap:
    """Two-dimensional skew product (x, y) -> (f_{a(y)}(x), phi(y)) on [0,1]^2.

    a(y) = a0 for y <= p0 and a1 otherwise; phi maps [0,p0] and (p0,1]
    affinely onto [0,1].  Smoothness domains are the four rectangles cut by
    the lines x = 1/2 and y = p0; |det Df| = f'_{a(y)}(x) / p_{0 or 1}.
    """

    def __init__(self, alpha0, alpha1, p0):
        if not (0.0 < alpha0 < alpha1 <= 1.0):
            raise ValueError(f"need 0 < alpha0 < alpha1 <= 1, got {alpha0}, {alpha1}")
        if not 0.0 < p0 < 1.0:
            raise ValueError(f"need p0 in (0,1), got {p0}")
        self.alpha0 = float(alpha0)
        self.alpha1 = float(alpha1)
        self.p0 = float(p0)
        self.p1 = 1.0 - self.p0
        # alpha1 = 1 is allowed for the fibre maps even though the plain LSV
        # constructor rejects it: build the branch formulas directly
        self._c0 = 2.0 ** self.alpha0
        self._c1 = 2.0 ** self.alpha1
        self.name = f"skewprod(a0={self.alpha0:g},a1={self.alpha1:g},p0={self.p0:g})"
        self.singular_lines = (0.5, self.p0)  # x = 1/2 and y = p0

    def _fiber(self, x, a, c):
        x = np.asarray(x, dtype=float)
        left = x <= 0.5
        val = np.where(left, x + c * x ** (1.0 + a), 2.0 * x - 1.0)
        der = np.where(left, 1.0 + c * (1.0 + a) * x ** a, 2.0)
        return val, der

    def step_array(self, x, y):
        """One step; returns (x', y', |det Df|), vectorized."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        low = y <= self.p0
        v0, d0 = self._fiber(x, self.alpha0, self._c0)
        v1, d1 = self._fiber(x, self.alpha1, self._c1)
        xv = np.where(low, v0, v1)
        dx = np.where(low, d0, d1)
        yv = np.where(low, y / self.p0, (y - self.p0) / self.p1)
        dy = np.where(low, 1.0 / self.p0, 1.0 / self.p1)
        return xv, yv, dx * dy

    def eval(self, x, y, eps_sing=EPS_SING):
        """((x', y'), |det Df|) for a single point, guarding singular lines."""
        if min(abs(x - 0.5), abs(y - self.p0), x, 1.0 - x, y, 1.0 - y) < eps_sing:
            raise SingularPoint(f"{self.name}: ({x}, {y}) within {eps_sing} of a singular line")
        xv, yv, det = self.step_array(np.float64(x), np.float64(y))
        return (float(xv), float(yv)), float(det)

    def symbols(self, x, y):
        """Smoothness-domain index in {0,1,2,3}: bit0 = x > 1/2, bit1 = y > p0."""
        return (np.asarray(x) > 0.5).astype(np.int64) + 2 * (np.asarray(y) > self.p0).astype(np.int64)


def skew_product_map(alpha0, alpha1, p0):
    """Constructor wrapper for :class:`SkewProductMap`."""
    return SkewProductMap(alpha0, alpha1, p0)
