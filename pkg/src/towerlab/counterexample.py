"""The infinite-entropy counterexample: a piecewise-affine induced map whose
return-time-weighted log-Jacobian integral diverges while the log-Jacobian
integral itself stays finite.

Construction: with phi(x) = -x log x (a bijection of [0, 1/e]), set

    a_n = phi^{-1}(1 / (n^2 log n)),   n >= 2,
    b   = sum a_n  (finite),

take the base [0, b] partitioned into cells omega_n = (b_{n-1}, b_n) of
length a_n, map each cell affinely onto the base (Jacobian b / a_n), and
assign return time R = n on omega_n.  Then

    sum n a_n            < inf   (recurrence times integrable),
    sum a_n log(b/a_n)   < inf   (log-Jacobian integral finite),
    sum n a_n log(b/a_n) = inf   (entropy diverges: sum n phi(a_n) = sum 1/(n log n)).

Everything downstream carries explicit tail data: the comparison
n a_n <= 1/(n log^2 n) (valid for n >= 3) gives closed-form tail bounds, and
high-accuracy tail estimates come from midpoint-integral completion of the
slowly converging series sum n a_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from ._roots import bracketed_root
from .inducing import InducingScheme
from .maps1d import AffineIntervalMap

E_INV = float(np.exp(-1.0))


def phi(x):
    """-x log x on [0, 1/e], with phi(0) = 0 (vectorized)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = -x[pos] * np.log(x[pos])
    return out if out.ndim else float(out)


def phi_inverse(y):
    """The unique x in (0, 1/e] with -x log x = y, for y in (0, 1/e].

    Bisection runs in log x (the linear-space bracket cannot resolve the
    relative residual near y -> 0), followed by two Newton steps in x; the
    relative residual |phi(x) - y| / y stays below ~1e-14 across
    (1e-15, 1/e].
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any((y_arr <= 0) | (y_arr > E_INV * (1 + 1e-12))):
        raise ValueError("phi_inverse requires 0 < y <= 1/e")
    y_arr = np.minimum(y_arr, E_INV)
    # bracket in t = log x: x in [exp(t_lo), 1/e]; phi is increasing there
    t_lo = np.log(y_arr) - np.log(-np.log(np.minimum(y_arr, 0.1)) + 2.0) - 2.0
    t_hi = np.full_like(y_arr, -1.0)
    t = _bisect_log(y_arr, t_lo, t_hi, iters=90)
    x = np.exp(t)
    for _ in range(2):  # Newton polish in x
        fx = -x * np.log(x) - y_arr
        dfx = -np.log(x) - 1.0
        step = np.where(dfx != 0.0, fx / dfx, 0.0)
        x_new = x - step
        ok = (x_new > 0) & (x_new <= E_INV) & np.isfinite(x_new)
        x = np.where(ok, x_new, x)
    return x if np.ndim(y) else float(x[0])


def _bisect_log(y, t_lo, t_hi, iters):
    def g(t):
        return -t * np.exp(t) - y  # phi(e^t) - y, increasing in t on (-inf, -1]

    lo, hi = t_lo.copy(), t_hi.copy()
    # widen any bracket that does not yet straddle the root
    for _ in range(60):
        bad = g(lo) > 0
        if not bad.any():
            break
        lo[bad] -= 4.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = g(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# the sequence a_n and its tail calculus
# ---------------------------------------------------------------------------

@dataclass
class CounterexampleParams:
    """The sequence a_n = phi^{-1}(1/(n^2 log n)) up to n_max, with the
    partial sums b_n and a certified interval for b = lim b_n."""

    n_max: int
    a: np.ndarray           # a[k] = a_{k+2}, k = 0..n_max-2
    b_partial: np.ndarray   # b_partial[k] = b_{k+2} = sum_{i<=k} a[i]
    b_lo: float             # truncated sum b_{n_max}
    b_hi: float             # b_lo + closed-form tail bound

    @property
    def ns(self):
        return np.arange(2, self.n_max + 1)

    def a_at(self, n):
        """a_n for scalar or array n (2 <= n <= n_max)."""
        n = np.asarray(n)
        return self.a[n - 2]

    def b_at(self, n):
        """b_n = sum_{i=2..n} a_i; b_1 = 0."""
        n = np.asarray(n)
        out = np.where(n >= 2, self.b_partial[np.maximum(n, 2) - 2], 0.0)
        return out


def counterexample_params(n_max, chunk=10**6):
    """Compute a_n up to n_max (vectorized, chunked for very large n_max)."""
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    parts = []
    for start in range(2, n_max + 1, chunk):
        ns = np.arange(start, min(start + chunk, n_max + 1), dtype=float)
        parts.append(phi_inverse(1.0 / (ns ** 2 * np.log(ns))))
    a = np.concatenate(parts)
    b_partial = np.cumsum(a)
    b_lo = float(b_partial[-1])
    b_hi = b_lo + a_tail_bound(n_max)
    return CounterexampleParams(n_max=n_max, a=a, b_partial=b_partial,
                                b_lo=b_lo, b_hi=b_hi)


def _exp1(v):
    return float(special.exp1(v))


def phi_tail_bracket(N):
    """[lo, hi] for sum_{n>N} 1/(n^2 log n)  (integral test; N >= 2)."""
    v = np.log(N + 1.0)
    integral = _exp1(v)  # int_{N+1}^inf dt/(t^2 log t)
    return integral, integral + 1.0 / ((N + 1.0) ** 2 * np.log(N + 1.0))


def a_tail_bound(N):
    """Upper bound on sum_{n>N} a_n via a_n <= 1/(n^2 log^2 n) (n >= 3)."""
    if N < 2:
        raise ValueError("tail bounds require N >= 2")
    v = np.log(N + 1.0)
    integral = np.exp(-v) / v - _exp1(v)  # int_{N+1}^inf dt/(t^2 log^2 t)
    return integral + 1.0 / ((N + 1.0) ** 2 * np.log(N + 1.0) ** 2)


def na_tail_bound(N):
    """Upper bound on sum_{n>N} n a_n via n a_n <= 1/(n log^2 n) (n >= 3)."""
    if N < 2:
        raise ValueError("tail bounds require N >= 2")
    first = 1.0 / ((N + 1.0) * np.log(N + 1.0) ** 2)
    return first + 1.0 / np.log(N + 1.0)  # f(N+1) + int_{N+1}^inf dt/(t log^2 t)


def na_increment_bound(N1, N2):
    """Upper bound on sum_{N1 < n <= N2} n a_n (integral test on 1/(n log^2 n))."""
    first = 1.0 / ((N1 + 1.0) * np.log(N1 + 1.0) ** 2)
    return first + 1.0 / np.log(N1 + 1.0) - 1.0 / np.log(N2 + 1.0)


def _log_phi_inverse(log_y):
    """w = log phi^{-1}(y) from log y, stable for arbitrarily small y.

    Solves -w e^w = y as the fixed point w = log y - log(-w); the iteration
    contracts with rate 1/|w| < 1 on the relevant branch (w <= -1).
    """
    w = log_y - np.log(np.maximum(-log_y, 1.5))
    for _ in range(60):
        w = log_y - np.log(-w)
    return w


def na_tail_estimate(N):
    """Accurate (lo, hi) interval for sum_{n>N} n a_n.

    The sum converges only logarithmically, so partial summation cannot pin
    it down; instead complete it with the midpoint integral
    int_{N+1/2}^inf t a(t) dt.  In u = log t the integrand is exactly
    1/(u * (-w(u))) with w = log a(e^u), evaluated without under/overflow;
    the Euler-Maclaurin correction is ~|d(t a(t))/dt|/12, far below the
    quadrature tolerance.
    """
    def integrand(u):
        log_y = -2.0 * u - np.log(u)
        w = _log_phi_inverse(log_y)
        return 1.0 / (u * (-w))

    lo_u = np.log(N + 0.5)
    val, err = integrate.quad(integrand, lo_u, np.inf, limit=400)
    f_mid = float(phi_inverse(1.0 / ((N + 0.5) ** 2 * np.log(N + 0.5)))) * (N + 0.5)
    slack = abs(err) + (f_mid / (N + 0.5)) / 12.0
    return max(val - slack, 0.0), val + slack


def nphi_partial_minorant(N):
    """Lower bound on sum_{n=2..N} 1/(n log n): log log N - log log 2 - 1."""
    return float(np.log(np.log(N)) - np.log(np.log(2.0)) - 1.0)


def nphi_increment_minorant(N1, N2):
    """Lower bound on sum_{N1 < n <= N2} 1/(n log n) (integral test)."""
    return float(np.log(np.log(N2 + 1.0)) - np.log(np.log(N1 + 1.0)))


# ---------------------------------------------------------------------------
# the scheme and its interval-map realization
# ---------------------------------------------------------------------------

def build_counterexample_scheme(n_max, params=None):
    """Affine-onto scheme on [0, b] with R = n and J = b/a_n on omega_n.

    The truncated base uses b = b_{n_max} so Lebesgue/b is exactly invariant
    for the truncated map; the ideal b is carried as the interval
    (params.b_lo, params.b_hi) in the tail data.
    """
    p = params or counterexample_params(n_max)
    n_max = p.n_max
    b = p.b_lo
    cell_lo = np.concatenate([[0.0], p.b_partial[:-1]])
    cell_hi = p.b_partial
    returns = np.arange(2, n_max + 1)
    jac = b / p.a
    slopes = jac
    intercepts = -cell_lo * slopes
    edges_all = np.append(cell_lo, b)

    def eval_fn(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(edges_all, x, side="right") - 1, 0, n_max - 2)
        return slopes[i] * x + intercepts[i]

    def jac_fn(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(edges_all, x, side="right") - 1, 0, n_max - 2)
        return jac[i]

    def cell_preimages(edges):
        for i in range(n_max - 1):
            yield cell_lo[i] + np.asarray(edges, dtype=float) / slopes[i]

    log_b_mag = abs(np.log(b))

    def divergence_minorant(n1, n2):
        # increment of sum n a_n log(b/a_n) over (n1, n2]:
        # >= increment of sum n phi(a_n) - |log b| * (bound on sum n a_n there)
        return (nphi_increment_minorant(n1, n2)
                - log_b_mag * na_increment_bound(n1, n2))

    def logj_tail(n):
        # sum_{k>n} a_k log(b/a_k) = log b * sum a_k + sum phi(a_k) <= phi tail
        return phi_tail_bracket(n)[1]

    return InducingScheme(
        base=(0.0, b),
        cell_lo=cell_lo,
        cell_hi=cell_hi,
        returns=returns,
        eval_fn=eval_fn,
        jac_fn=jac_fn,
        truncation_tail_mass=p.b_hi - p.b_lo,
        label=f"infinite-entropy(n_max={n_max})",
        jac_per_cell=jac,
        distortion_constants=(1e-9, 0.5),
        underlying_map=None,
        first_return_base=False,
        cell_preimages_fn=cell_preimages,
        r_tail_bound=na_tail_bound,
        r_tail_estimate=na_tail_estimate,
        entropy_tail_bound=None,  # the point: this integral diverges
        logj_tail_bound=logj_tail,
        entropy_divergence_minorant=divergence_minorant,
        meta={"params": p},
    )


def counterexample_interval_map(n_max, params=None):
    """The tower of the counterexample scheme laid out as an interval map.

    Levels are contiguous: level l occupies [L_l, L_{l+1}) and is a copy of
    (b_{max(l,1)}, b] in natural order.  The map translates each level's
    non-returning part to the next level (slope exactly 1) and sends the
    returning slice (the copy of omega_{l+1}) affinely onto the base
    [0, b) = level 0 with slope b/a_{l+1}.  Total length = sum n a_n.
    """
    p = params or counterexample_params(n_max)
    n_max = p.n_max
    b = p.b_lo
    # level offsets: L_0 = 0, L_1 = b, L_{l+1} = L_l + (b - b_l)
    b_cut = np.concatenate([[0.0], [0.0], p.b_partial[:-1]])  # b_{max(l,1)} for l=0..n_max-1
    level_len = b - b_cut
    offsets = np.concatenate([[0.0], np.cumsum(level_len)])
    edges = [0.0]
    slopes = []
    intercepts = []
    # level 0: single translation piece (no cell has return time 1)
    edges.append(offsets[1])
    slopes.append(1.0)
    intercepts.append(offsets[1] - offsets[0])
    for ell in range(1, n_max - 1):
        a_ret = p.a_at(ell + 1)
        cut = offsets[ell] + a_ret
        # returning slice: copy of omega_{l+1} -> [0, b)
        s = b / a_ret
        edges.append(cut)
        slopes.append(s)
        intercepts.append(-offsets[ell] * s)
        # climbing remainder -> level l+1
        edges.append(offsets[ell + 1])
        slopes.append(1.0)
        intercepts.append(offsets[ell + 1] - cut)
    # top level: single returning slice (cell n_max)
    a_ret = p.a_at(n_max)
    s = b / a_ret
    edges.append(offsets[n_max])
    slopes.append(s)
    intercepts.append(-offsets[n_max - 1] * s)
    m = AffineIntervalMap(np.array(edges), np.array(slopes), np.array(intercepts),
                          name=f"infinite-entropy-tower(n_max={n_max})")
    m.level_offsets = offsets
    m.base_length = b
    m.params = p
    return m


def attach_interval_map(scheme, interval_map):
    """Wire the laid-out tower map in as the scheme's underlying map.

    The scheme's base [0, b] is exactly level 0 of the layout, and R = n
    counts interval-map steps, so tower projection and semiconjugacy checks
    work unchanged.
    """
    scheme.underlying_map = interval_map
    return scheme


# ---------------------------------------------------------------------------
# the four-series certification report
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    """Partial sums of sum a_n, sum n a_n, sum phi(a_n), sum n phi(a_n)
    at the requested thresholds, with per-series verdicts and evidence."""

    thresholds: list
    rows: list                       # per-threshold dict of the four sums
    verdicts: dict                   # series name -> convergent/divergent/inconclusive
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "thresholds": [int(t) for t in self.thresholds],
            "rows": self.rows,
            "verdicts": self.verdicts,
            "evidence": self.evidence,
        }

    def matches_expected(self):
        return (self.verdicts.get("a") == "convergent"
                and self.verdicts.get("na") == "convergent"
                and self.verdicts.get("phi") == "convergent"
                and self.verdicts.get("nphi") == "divergent")


def tail_series_report(n_max_list, chunk=10**6):
    """Evaluate the four partial sums at the given thresholds and certify.

    Convergence verdicts check observed increments against the closed-form
    tail bounds (and the integral-test bracket for sum phi(a_n) = sum
    1/(n^2 log n), which is exact by construction); divergence of
    sum n phi(a_n) = sum 1/(n log n) checks increments against the integral
    minorant log log(N2+1) - log log(N1+1).  Fewer than three thresholds
    yield inconclusive verdicts.
    """
    thresholds = sorted(int(n) for n in n_max_list)
    if len(thresholds) != len(set(thresholds)):
        raise ValueError("thresholds must be distinct")
    if thresholds[0] < 3:
        raise ValueError("thresholds must be >= 3")
    n_top = thresholds[-1]
    sums = {"a": 0.0, "na": 0.0, "phi": 0.0, "nphi": 0.0}
    rows = []
    ti = 0
    for start in range(2, n_top + 1, chunk):
        ns = np.arange(start, min(start + chunk, n_top + 1), dtype=float)
        phis = 1.0 / (ns ** 2 * np.log(ns))      # phi(a_n), exactly
        a = phi_inverse(phis)
        cums = {
            "a": np.cumsum(a), "na": np.cumsum(ns * a),
            "phi": np.cumsum(phis), "nphi": np.cumsum(phis * ns),
        }
        while ti < len(thresholds) and thresholds[ti] <= ns[-1]:
            k = thresholds[ti] - start
            rows.append({"N": thresholds[ti],
                         **{name: sums[name] + float(cums[name][k]) for name in sums}})
            ti += 1
        for name in sums:
            sums[name] += float(cums[name][-1])

    verdicts = {k: "inconclusive" for k in ("a", "na", "phi", "nphi")}
    evidence = {}
    if len(thresholds) >= 3:
        ok_a, ok_na, ok_nphi = True, True, True
        ev_a, ev_na, ev_nphi = [], [], []
        for r0, r1 in zip(rows, rows[1:]):
            n0, n1 = r0["N"], r1["N"]
            ev_a.append({"from": n0, "to": n1, "increment": r1["a"] - r0["a"],
                         "bound": a_tail_bound(n0)})
            ok_a &= ev_a[-1]["increment"] <= ev_a[-1]["bound"]
            ev_na.append({"from": n0, "to": n1, "increment": r1["na"] - r0["na"],
                          "bound": na_tail_bound(n0)})
            ok_na &= ev_na[-1]["increment"] <= ev_na[-1]["bound"]
            ev_nphi.append({"from": n0, "to": n1, "increment": r1["nphi"] - r0["nphi"],
                            "minorant": nphi_increment_minorant(n0, n1)})
            ok_nphi &= ev_nphi[-1]["increment"] >= ev_nphi[-1]["minorant"]
        verdicts["a"] = "convergent" if ok_a else "inconclusive"
        verdicts["na"] = "convergent" if ok_na else "inconclusive"
        # sum phi(a_n) partial sums must sit inside the integral-test bracket
        ok_phi = True
        ev_phi = []
        for r in rows:
            N = r["N"]
            v2, v3 = np.log(2.0), np.log(3.0)
            f2 = 1.0 / (4.0 * v2)
            lo = f2 + (_exp1(v3) - _exp1(np.log(N + 1.0)))
            hi = f2 + (_exp1(v2) - _exp1(np.log(N)))
            ev_phi.append({"N": N, "partial": r["phi"], "bracket": [lo, hi]})
            ok_phi &= lo <= r["phi"] <= hi
        verdicts["phi"] = "convergent" if ok_phi else "inconclusive"
        ok_nphi &= rows[-1]["nphi"] >= nphi_partial_minorant(rows[-1]["N"])
        verdicts["nphi"] = "divergent" if ok_nphi else "inconclusive"
        evidence = {"a": ev_a, "na": ev_na, "phi": ev_phi, "nphi": ev_nphi,
                    "phi_tail_bracket_at_top": list(phi_tail_bracket(n_top)),
                    "na_tail_estimate_at_top": list(na_tail_estimate(n_top))}
    return ConvergenceReport(thresholds=thresholds, rows=rows,
                             verdicts=verdicts, evidence=evidence)


def write_series_csv(path, n_max, max_rows=4096):
    """CSV of (n, a_n, n a_n, phi(a_n), n phi(a_n)), log-decimated rows."""
    if n_max <= max_rows:
        ns = np.arange(2, n_max + 1)
    else:
        ns = np.unique(np.round(np.geomspace(2, n_max, max_rows)).astype(np.int64))
    phis = 1.0 / (ns.astype(float) ** 2 * np.log(ns))
    a = phi_inverse(phis)
    with open(path, "w") as fh:
        fh.write("n,a_n,n_a_n,phi_a_n,n_phi_a_n\n")
        for n, an, ph in zip(ns, a, phis):
            fh.write(f"{n},{an!r},{n * an!r},{ph!r},{n * ph!r}\n")
