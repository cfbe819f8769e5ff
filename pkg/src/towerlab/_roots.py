"""Bracketed root finding: bisection to a target width, then Newton polish.

All solvers here assume a strictly monotone function on the bracket, which
is what every implicit relation in this package provides (map branches,
escape-time recursions, the entropy profile x -> -x log x on [0, 1/e]).
Bisection makes the solve unconditionally safe; the Newton steps recover
full double precision at the end.
"""

from __future__ import annotations

import numpy as np


class RootBracketError(RuntimeError):
    """The supplied bracket does not enclose a sign change."""


def bracketed_root(f, lo, hi, tol=1e-14, df=None, newton_steps=2):
    """Solve f(x) = 0 on [lo, hi] where f is monotone with a sign change.

    Bisects until the bracket width is below ``tol`` and then applies
    ``newton_steps`` Newton corrections (kept inside the original bracket).
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise RootBracketError(f"no sign change on [{lo!r}, {hi!r}]")
    a, b, fa = lo, hi, flo
    while b - a > tol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:  # bracket narrower than float spacing
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    x = 0.5 * (a + b)
    if df is not None:
        for _ in range(newton_steps):
            d = df(x)
            if d == 0.0 or not np.isfinite(d):
                break
            step = f(x) / d
            x_new = x - step
            if not (lo <= x_new <= hi):
                break
            x = x_new
    return x


def bisect_array(f, lo, hi, iters=60, newton=None, newton_steps=2):
    """Vectorized bisection for f(x) = 0 with per-element brackets.

    ``f`` maps an ndarray to an ndarray of the same shape; ``lo`` and
    ``hi`` must bracket a root elementwise (monotone f).  Optional
    ``newton=(f, df)`` polishes the midpoints afterwards.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    sgn_lo = np.sign(f(lo))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = np.sign(f(mid)) == sgn_lo
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    if newton is not None:
        fn, dfn = newton
        for _ in range(newton_steps):
            d = dfn(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(d != 0.0, fn(x) / d, 0.0)
            x_new = x - step
            ok = (x_new >= lo) & (x_new <= hi) & np.isfinite(x_new)
            x = np.where(ok, x_new, x)
    return x
