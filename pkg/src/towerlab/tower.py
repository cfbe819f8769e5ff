"""Tower extensions of induced maps and the invariant-measure machinery.

A :class:`Tower` stacks the cells of an inducing scheme into levels
``{R > l}``; the tower map translates states upward and applies the induced
map F on the top level of each column.  The invariant measure of the tower
assigns level ``l`` the mass ``nu0({R > l}) / rho`` where ``rho = int R dnu0``,
and its projection ``pi(x, l) = f^l(x)`` pushes it to the invariant measure of
the original map.

Measures come in three interchangeable representations (closed-form uniform
density, Ulam histogram, empirical orbit measure); every consumer states
which representation it needs.  Ulam matrices are assembled exactly from
monotone branch/cell inverses (interval overlaps, no quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import json
import numpy as np
from scipy import sparse

from .inducing import InducingScheme, _cell_preimage_bisect

#: power-iteration stopping rule for Ulam fixed densities
ULAM_L1_TOL = 1e-12
ULAM_MAX_ITER = 100_000


class TruncatedCell(ValueError):
    """The point lies in the truncated (dropped) part of the base."""


class NormalizerDivergence(ValueError):
    """Partial sums of the tower normalizer rho fail the Cauchy test."""


# ---------------------------------------------------------------------------
# measure representations
# ---------------------------------------------------------------------------

class _MeasureBase:
    kind = "abstract"
    rho = 1.0

    def total_mass(self):
        raise NotImplementedError

    def mass_between(self, a, b):
        raise NotImplementedError

    def integrate(self, fn, cells=None, nodes=8):
        raise NotImplementedError

    def density_range(self):
        raise NotImplementedError

    def density_sup(self):
        return self.density_range()[1]

    def to_histogram(self, edges):
        edges = np.asarray(edges, dtype=float)
        return self.mass_between(edges[:-1], edges[1:])

    def save(self, path, n_max=None, tail_mass=None, bins=512):
        """Write a CSV of (bin_left, bin_right, mass) and a JSON header."""
        lo, hi = self.domain
        edges = np.linspace(lo, hi, bins + 1)
        masses = self.to_histogram(edges)
        path = str(path)
        with open(path + ".csv", "w") as fh:
            fh.write("bin_left,bin_right,mass\n")
            for a, b, m in zip(edges[:-1], edges[1:], masses):
                fh.write(f"{a!r},{b!r},{m!r}\n")
        header = {"kind": self.kind, "rho": float(self.rho),
                  "n_max": n_max, "tail_mass": tail_mass}
        with open(path + ".json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)


class UniformDensity(_MeasureBase):
    """Normalized Lebesgue measure on an interval (exact representation)."""

    kind = "density"

    def __init__(self, lo, hi, rho=1.0):
        self.domain = (float(lo), float(hi))
        self.height = 1.0 / (hi - lo)
        self.rho = rho

    def total_mass(self):
        return 1.0

    def mass_between(self, a, b):
        lo, hi = self.domain
        a = np.clip(np.asarray(a, dtype=float), lo, hi)
        b = np.clip(np.asarray(b, dtype=float), lo, hi)
        return np.maximum(b - a, 0.0) * self.height

    def density(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.height)

    def density_range(self):
        return (self.height, self.height)

    def integrate(self, fn, cells=None, nodes=8):
        if cells is None:
            cells = (np.array([self.domain[0]]), np.array([self.domain[1]]))
        return _gl_integrate(fn, cells[0], cells[1], self.density, nodes)


class UlamMeasure(_MeasureBase):
    """Histogram measure: piecewise-constant density on a bin grid."""

    kind = "ulam"

    def __init__(self, edges, masses, rho=1.0):
        self.edges = np.asarray(edges, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        if len(self.masses) != len(self.edges) - 1:
            raise ValueError("need one mass per bin")
        if np.any(self.masses < -1e-15):
            raise ValueError("negative bin mass")
        self.domain = (float(self.edges[0]), float(self.edges[-1]))
        self.rho = rho
        self._cum = np.concatenate([[0.0], np.cumsum(self.masses)])

    def total_mass(self):
        return float(self._cum[-1])

    def mass_between(self, a, b):
        ca = np.interp(np.asarray(a, dtype=float), self.edges, self._cum)
        cb = np.interp(np.asarray(b, dtype=float), self.edges, self._cum)
        return np.maximum(cb - ca, 0.0)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1,
                    0, len(self.masses) - 1)
        return self.masses[i] / np.diff(self.edges)[i]

    def density_range(self):
        d = self.masses / np.diff(self.edges)
        return (float(d.min()), float(d.max()))

    def integrate(self, fn, cells=None, nodes=8):
        if cells is None:
            cells = (self.edges[:-1], self.edges[1:])
        return _gl_integrate(fn, cells[0], cells[1], self.density, nodes)

    def l1_distance(self, other_masses):
        return float(np.sum(np.abs(self.masses - np.asarray(other_masses))))


class OrbitMeasure(_MeasureBase):
    """Empirical measure of orbit samples (equal weights)."""

    kind = "orbit"

    def __init__(self, points, domain, rho=1.0):
        pts = np.sort(np.asarray(points, dtype=float))
        self.points = pts
        self.domain = (float(domain[0]), float(domain[1]))
        self.rho = rho

    def total_mass(self):
        return 1.0

    def mass_between(self, a, b):
        n = len(self.points)
        ia = np.searchsorted(self.points, np.asarray(a, dtype=float), side="left")
        ib = np.searchsorted(self.points, np.asarray(b, dtype=float), side="right")
        return np.maximum(ib - ia, 0) / n

    def integrate(self, fn, cells=None, nodes=None):
        if cells is None:
            return float(np.mean(fn(self.points)))
        flat = np.column_stack([cells[0], cells[1]]).ravel()
        inside = np.searchsorted(flat, self.points) % 2 == 1
        sel = self.points[inside]
        if len(sel) == 0:
            return 0.0
        return float(np.sum(fn(sel))) / len(self.points)

    def density_range(self, bins=64):
        h = np.histogram(self.points, bins=bins, range=self.domain, density=True)[0]
        return (float(h.min()), float(h.max()))

    def to_histogram(self, edges):
        return np.histogram(self.points, bins=np.asarray(edges, dtype=float))[0] / len(self.points)


def _gl_integrate(fn, cell_lo, cell_hi, density, nodes):
    """sum over cells of int fn * density dx, Gauss-Legendre per cell."""
    cell_lo = np.atleast_1d(np.asarray(cell_lo, dtype=float))
    cell_hi = np.atleast_1d(np.asarray(cell_hi, dtype=float))
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (cell_lo + cell_hi)
    half = 0.5 * (cell_hi - cell_lo)
    pts = mid[:, None] + half[:, None] * gx[None, :]
    flat = pts.ravel()
    vals = (fn(flat) * density(flat)).reshape(pts.shape)
    return float(np.sum(half * (vals @ gw)))


# ---------------------------------------------------------------------------
# Ulam (transfer-operator) matrices
# ---------------------------------------------------------------------------

def _assemble_transfer(preimage_lists, edges):
    """Sparse Ulam matrix P[i, j] = m(B_j intersect F^-1 B_i) / m(B_j).

    ``preimage_lists`` yields, per cell, the monotone array of preimages of
    every grid edge inside that cell, so (u_i, u_{i+1}) is exactly the
    intersection of the cell with F^-1(B_i).  Interval overlaps against the
    source grid are exact; there is no quadrature error.
    """
    edges = np.asarray(edges, dtype=float)
    nb = len(edges) - 1
    rows, cols, vals = [], [], []
    for u in preimage_lists:
        u = np.asarray(u, dtype=float)
        a = np.minimum(u[:-1], u[1:])
        b = np.maximum(u[:-1], u[1:])
        tgt = np.arange(nb)
        keep = b - a > 0
        a, b, tgt = a[keep], b[keep], tgt[keep]
        ja = np.clip(np.searchsorted(edges, a, side="right") - 1, 0, nb - 1)
        jb = np.clip(np.searchsorted(edges, b, side="left") - 1, 0, nb - 1)
        same = ja == jb
        rows.append(tgt[same]); cols.append(ja[same]); vals.append(b[same] - a[same])
        cross = ~same
        if cross.any():
            ac, bc, tc, j0, j1 = a[cross], b[cross], tgt[cross], ja[cross], jb[cross]
            # fragments in the first and last source bins
            rows.append(tc); cols.append(j0); vals.append(edges[j0 + 1] - ac)
            rows.append(tc); cols.append(j1); vals.append(bc - edges[j1])
            wide = j1 - j0 >= 2  # intervals fully covering interior bins (rare)
            for k in np.flatnonzero(wide):
                js = np.arange(j0[k] + 1, j1[k])
                rows.append(np.full(len(js), tc[k])); cols.append(js)
                vals.append(edges[js + 1] - edges[js])
    rows = np.concatenate(rows); cols = np.concatenate(cols); vals = np.concatenate(vals)
    P = sparse.coo_matrix((vals, (rows, cols)), shape=(nb, nb)).tocsr()
    widths = np.diff(edges)
    return P @ sparse.diags(1.0 / widths)


def map_transfer_matrix(map1d, bins=1024, edges=None):
    """Ulam matrix of a piecewise monotone map on a uniform grid."""
    if edges is None:
        lo, hi = map1d.phase_space
        edges = np.linspace(lo, hi, bins + 1)
    edges = np.asarray(edges, dtype=float)

    def preimages():
        for br in map1d.branches:
            if br.inverse is not None:
                u = np.asarray(br.inverse(edges), dtype=float)
            else:
                u = _cell_preimage_bisect(br.value, br.lo, br.hi, edges)
            yield np.clip(u, br.lo, br.hi)

    return _assemble_transfer(preimages(), edges), edges


def scheme_transfer_matrix(scheme, bins=4096, max_cells=None):
    """Ulam matrix of the induced map F on a uniform grid over the base.

    ``max_cells`` caps the number of cells consumed from the scheme's
    preimage generator (cells are yielded heaviest-first for the LSV
    construction); the dropped mass is handled by column renormalization
    during power iteration.
    """
    lo, hi = scheme.base
    edges = np.linspace(lo, hi, bins + 1)
    if scheme.cell_preimages_fn is not None:
        gen = scheme.cell_preimages_fn(edges)
    else:
        gen = (_cell_preimage_bisect(scheme.eval_fn, scheme.cell_lo[i], scheme.cell_hi[i], edges)
               for i in range(scheme.n_cells))

    def capped():
        for k, u in enumerate(gen):
            if max_cells is not None and k >= max_cells:
                break
            yield u

    return _assemble_transfer(capped(), edges), edges


def power_iterate(P, edges, tol=ULAM_L1_TOL, max_iter=ULAM_MAX_ITER, start=None):
    """Fixed probability vector of a (sub)stochastic Ulam matrix.

    Renormalizes each iterate (truncated schemes lose a little mass per
    application); stops at L1 increment ``tol``.  Returns (UlamMeasure,
    iterations, final increment).
    """
    nb = P.shape[0]
    p = np.full(nb, 1.0 / nb) if start is None else np.asarray(start, dtype=float).copy()
    p /= p.sum()
    inc = np.inf
    for it in range(1, int(max_iter) + 1):
        q = P @ p
        s = q.sum()
        if s <= 0:
            raise ValueError("transfer matrix annihilated the density")
        q /= s
        inc = float(np.sum(np.abs(q - p)))
        p = q
        if inc < tol:
            break
    return UlamMeasure(edges, p), it, inc


def invariance_residual_l1(P, masses):
    """||P m - m||_1 for a mass vector on the matrix grid."""
    m = np.asarray(masses, dtype=float)
    q = P @ m
    return float(np.sum(np.abs(q - m)))


# ---------------------------------------------------------------------------
# tower
# ---------------------------------------------------------------------------

@dataclass
class Tower:
    """Levels {R > l} of an inducing scheme, with the tower dynamics."""

    scheme: InducingScheme
    _level_lebesgue: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m_by_r = np.bincount(self.scheme.returns,
                             weights=self.scheme.cell_masses(),
                             minlength=self.scheme.max_return + 1)
        # m({R > l}) for l = 0 .. max_return - 1
        suffix = np.cumsum(m_by_r[::-1])[::-1]
        self._level_lebesgue = suffix[1:].copy()

    @property
    def n_levels(self):
        return self.scheme.max_return

    def level_lebesgue_masses(self):
        """m({R > l}) for l = 0..max_return-1 (nonincreasing)."""
        return self._level_lebesgue

    def total_mass(self):
        """m(Delta) = sum_l m({R > l})."""
        return float(np.sum(self._level_lebesgue))

    def total_mass_via_return_integral(self):
        """m(Delta) = int R dm, summed cell-wise."""
        return float(np.sum(self.scheme.returns * self.scheme.cell_masses()))

    # -- dynamics -------------------------------------------------------

    def step_array(self, x, level):
        """Vectorized tower map; returns (x', level', valid_mask)."""
        x = np.asarray(x, dtype=float)
        level = np.asarray(level, dtype=np.int64)
        idx = self.scheme.cell_index(x)
        valid = idx >= 0
        R = self.scheme.returns[np.maximum(idx, 0)]
        valid &= (level >= 0) & (level < R)
        returning = valid & (level == R - 1)
        x2 = x.copy()
        l2 = level.copy()
        l2[valid & ~returning] += 1
        if np.any(returning):
            x2[returning] = self.scheme.eval_fn(x[returning])
            l2[returning] = 0
        return x2, l2, valid

    def step(self, state):
        """Tower map on a single (x, level); raises TruncatedCell."""
        x, level = state
        x2, l2, ok = self.step_array(np.array([x]), np.array([level]))
        if not ok[0]:
            raise TruncatedCell(f"state ({x}, {level}) not in a retained cell")
        return float(x2[0]), int(l2[0])

    def jacobian_array(self, x, level):
        """J_T: 1 below the top of the column, J_F(x) on the return level."""
        x = np.asarray(x, dtype=float)
        level = np.asarray(level, dtype=np.int64)
        idx = self.scheme.cell_index(x)
        if np.any(idx < 0):
            raise TruncatedCell("jacobian requested on a truncated cell")
        R = self.scheme.returns[idx]
        out = np.ones_like(x)
        ret = level == R - 1
        if np.any(ret):
            out[ret] = self.scheme.jac_fn(x[ret])
        return out

    def jacobian(self, state):
        return float(self.jacobian_array(np.array([state[0]]), np.array([state[1]]))[0])

    # -- projection -----------------------------------------------------

    def project_array(self, x, level):
        """pi(x, l) = f^l(x) under the scheme's underlying map."""
        f = self.scheme.underlying_map
        if f is None:
            raise ValueError("scheme has no underlying map; cannot project")
        x = np.array(x, dtype=float, copy=True)
        level = np.asarray(level, dtype=np.int64)
        remaining = level.copy()
        while True:
            active = remaining > 0
            if not active.any():
                break
            x[active] = f.value_array(x[active])
            remaining[active] -= 1
        return x

    def project(self, state):
        return float(self.project_array(np.array([state[0]]), np.array([state[1]]))[0])

    def sample_states(self, rng, n, nu=None):
        """Random tower states: cell by Lebesgue (or nu) mass, level uniform."""
        weights = None
        if nu is not None:
            weights = nu.nu0.mass_between(self.scheme.cell_lo, self.scheme.cell_hi) \
                * self.scheme.returns
        else:
            weights = self.scheme.cell_masses() * self.scheme.returns
        p = weights / weights.sum()
        cells = rng.choice(self.scheme.n_cells, size=n, p=p)
        u = rng.random(n)
        x = self.scheme.cell_lo[cells] + u * (self.scheme.cell_hi[cells] - self.scheme.cell_lo[cells])
        level = (rng.random(n) * self.scheme.returns[cells]).astype(np.int64)
        return x, level


def semiconjugacy_residual(tower, n_states=100_000, seed=0):
    """max |f(pi(s)) - pi(T(s))| over random tower states."""
    rng = np.random.default_rng(seed)
    x, level = tower.sample_states(rng, n_states)
    f = tower.scheme.underlying_map
    left = f.value_array(tower.project_array(x, level))
    x2, l2, ok = tower.step_array(x, level)
    if not ok.all():
        raise TruncatedCell("sampled state left the retained cells")
    right = tower.project_array(x2, l2)
    return float(np.max(np.abs(left - right)))


# ---------------------------------------------------------------------------
# invariant measures
# ---------------------------------------------------------------------------

@dataclass
class TowerMeasure:
    """Invariant measure of the tower: level l carries nu0({R > l}) / rho."""

    tower: Tower
    nu0: _MeasureBase
    level_masses: np.ndarray      # nu-mass of each level (sums to 1)
    rho: float
    rho_interval: tuple
    kind: str = "tower"

    def cell_nu0_masses(self):
        s = self.tower.scheme
        return self.nu0.mass_between(s.cell_lo, s.cell_hi)


def base_invariant_measure(scheme, method="exact-linear", bins=4096, n=10**6,
                           seed=0, burn_in=10**4, ulam_max_cells=400,
                           tol=ULAM_L1_TOL, max_iter=ULAM_MAX_ITER):
    """Invariant probability measure nu0 of the induced map F.

    method = "exact-linear": valid when J_F is constant on every cell and the
    cells are Markov-onto; Lebesgue is then exactly invariant and nu0 is the
    normalized uniform density on the base.

    method = "ulam": assembles the transfer matrix of F on ``bins`` uniform
    bins (an exact interval-overlap Ulam matrix) and power-iterates to the
    fixed density.

    method = "orbit": empirical measure of F-orbit samples after burn-in; for
    first-return schemes the samples are the returns of the underlying map's
    orbit to the base.
    """
    if method == "exact-linear":
        if scheme.jac_per_cell is None:
            raise ValueError("exact-linear requires constant Jacobian per cell")
        return UniformDensity(*scheme.base)
    if method == "ulam":
        P, edges = scheme_transfer_matrix(scheme, bins=bins, max_cells=ulam_max_cells)
        nu0, iters, inc = power_iterate(P, edges, tol=tol, max_iter=max_iter)
        if inc > max(tol, 1e-9):
            raise ValueError(f"Ulam power iteration did not converge: increment {inc:.2e} "
                             f"after {iters} iterations")
        return nu0
    if method == "orbit":
        return _orbit_base_measure(scheme, n=n, seed=seed, burn_in=burn_in)
    raise ValueError(f"unknown method {method!r}")


def _orbit_base_measure(scheme, n, seed, burn_in, lanes=512):
    rng = np.random.default_rng(seed)
    lo, hi = scheme.base
    if scheme.first_return_base and scheme.underlying_map is not None:
        f = scheme.underlying_map
        plo, phi = f.phase_space
        x = plo + (phi - plo) * rng.random(lanes)
        for _ in range(burn_in):
            x = f.value_array(x)
        chunks = []
        total = 0
        while total < n:
            x = f.value_array(x)
            inside = (x > lo) & (x < hi)
            if inside.any():
                pts = x[inside]
                chunks.append(pts.copy())
                total += len(pts)
        pts = np.concatenate(chunks)[:n]
    else:
        x = lo + (hi - lo) * rng.random(lanes)
        for _ in range(max(1, burn_in // 10)):
            x = scheme.eval_fn(x)
        steps = int(np.ceil(n / lanes))
        buf = np.empty((steps, lanes))
        for k in range(steps):
            x = scheme.eval_fn(x)
            buf[k] = x
        pts = buf.ravel()[:n]
    return OrbitMeasure(pts, scheme.base)


def rho_normalizer(scheme, nu0):
    """rho = int R dnu0 over retained cells, with an interval for the tail.

    The Cauchy test compares the partial-sum increment over the last doubling
    of the return-time threshold against the scheme's analytic tail bound
    (converted from Lebesgue to nu0 mass by the density sup).
    """
    cell_nu0 = nu0.mass_between(scheme.cell_lo, scheme.cell_hi)
    R = scheme.returns
    rho_trunc = float(np.sum(R * cell_nu0))
    n_max = scheme.max_return
    half = max(1, n_max // 2)
    s_half = float(np.sum(R[R <= half] * cell_nu0[R <= half]))
    increment = rho_trunc - s_half
    dens_lo, dens_hi = nu0.density_range()
    if scheme.r_tail_bound is not None:
        allowed = max(1e-6, scheme.r_tail_bound(half) * dens_hi)
        if increment > allowed:
            raise NormalizerDivergence(
                f"rho partial sums fail the Cauchy test: increment {increment:.3g} "
                f"over ({half}, {n_max}] exceeds {allowed:.3g}")
    if scheme.r_tail_estimate is not None:
        t_lo, t_hi = scheme.r_tail_estimate(n_max)
        interval = (rho_trunc + t_lo * dens_lo, rho_trunc + t_hi * dens_hi)
    elif scheme.r_tail_bound is not None:
        interval = (rho_trunc, rho_trunc + scheme.r_tail_bound(n_max) * dens_hi)
    else:
        interval = (rho_trunc, rho_trunc)
    # midpoint tail completion: slowly converging sum n a_n-type normalizers
    # are only n_max-stable with the tail restored
    rho = 0.5 * (interval[0] + interval[1])
    return rho, interval


def tower_invariant_measure(tower, nu0):
    """Invariant probability measure of the tower map from nu0 on the base."""
    scheme = tower.scheme
    cell_nu0 = nu0.mass_between(scheme.cell_lo, scheme.cell_hi)
    by_r = np.bincount(scheme.returns, weights=cell_nu0,
                       minlength=scheme.max_return + 1)
    level_nu0 = np.cumsum(by_r[::-1])[::-1][1:]  # nu0({R > l}), l = 0..max-1
    rho, rho_interval = rho_normalizer(scheme, nu0)
    level_masses = level_nu0 / rho
    return TowerMeasure(tower=tower, nu0=nu0, level_masses=level_masses,
                        rho=rho, rho_interval=rho_interval)


def pushforward_measure(tower, tnu, method="ulam", bins=1024, n=10**6,
                        seed=0, burn_in=10**4, lanes=512):
    """mu = pi_* nu: the invariant measure of the original map.

    method = "ulam": computes (1/rho) sum_j f_*^j (nu0 | {R > j}) by pushing
    exact restricted histograms through the map's Ulam matrix.

    method = "orbit": empirical measure of a Lebesgue-generic ensemble orbit
    of the underlying map (independent of the tower construction).
    """
    scheme = tower.scheme
    f = scheme.underlying_map
    if f is None:
        raise ValueError("scheme has no underlying map")
    lo, hi = f.phase_space
    if method == "orbit":
        rng = np.random.default_rng(seed)
        x = lo + (hi - lo) * rng.random(lanes)
        for _ in range(burn_in):
            x = f.value_array(x)
        steps = int(np.ceil(n / lanes))
        buf = np.empty((steps, lanes))
        for k in range(steps):
            x = f.value_array(x)
            buf[k] = x
        return OrbitMeasure(buf.ravel()[:n], (lo, hi), rho=tnu.rho)
    if method != "ulam":
        raise ValueError(f"unknown method {method!r}")

    A, edges = map_transfer_matrix(f, bins=bins)
    cell_hists = _cell_histograms(scheme, tnu.nu0, edges)  # sparse cells x bins
    R = scheme.returns
    order = np.argsort(R)
    levels = np.arange(tower.n_levels)
    # restricted histograms h_j = histogram of nu0 | {R > j}
    # accumulate B = sum_j A^j h_j backwards: B <- A B + h_j
    B = np.zeros(len(edges) - 1)
    for j in range(tower.n_levels - 1, -1, -1):
        mask = R > j
        h_j = np.asarray(cell_hists[mask].sum(axis=0)).ravel() if mask.any() \
            else np.zeros_like(B)
        B = A @ B + h_j
    B /= B.sum()
    return UlamMeasure(edges, B, rho=tnu.rho)


def _cell_histograms(scheme, nu0, edges):
    """Sparse (cells x bins) matrix of nu0 masses of cell-bin intersections."""
    nb = len(edges) - 1
    rows, cols, vals = [], [], []
    for i in range(scheme.n_cells):
        a, b = scheme.cell_lo[i], scheme.cell_hi[i]
        j0 = int(np.clip(np.searchsorted(edges, a, side="right") - 1, 0, nb - 1))
        j1 = int(np.clip(np.searchsorted(edges, b, side="left") - 1, 0, nb - 1))
        js = np.arange(j0, j1 + 1)
        lo = np.maximum(a, edges[js])
        hi = np.minimum(b, edges[js + 1])
        m = nu0.mass_between(lo, hi)
        keep = m > 0
        rows.append(np.full(keep.sum(), i)); cols.append(js[keep]); vals.append(m[keep])
    rows = np.concatenate(rows); cols = np.concatenate(cols); vals = np.concatenate(vals)
    return sparse.coo_matrix((vals, (rows, cols)),
                             shape=(scheme.n_cells, nb)).tocsr()


def tower_logjac_integral_by_levels(tnu, nodes=8):
    """int log J_T dnu summed level by level (nonzero only on {R = l+1})."""
    scheme = tnu.tower.scheme
    cell_int = _cell_logjac_nu0_integrals(scheme, tnu.nu0, nodes)
    total = 0.0
    R = scheme.returns
    for ell in range(tnu.tower.n_levels):
        m = R == ell + 1
        if m.any():
            total += float(np.sum(cell_int[m])) / tnu.rho
    return total


def base_logjac_integral(scheme, nu0, nodes=8):
    """int log J_F dnu0 over the retained cells."""
    return float(np.sum(_cell_logjac_nu0_integrals(scheme, nu0, nodes)))


def _cell_logjac_nu0_integrals(scheme, nu0, nodes=8):
    if scheme.jac_per_cell is not None:
        masses = nu0.mass_between(scheme.cell_lo, scheme.cell_hi)
        return masses * np.log(scheme.jac_per_cell)
    if isinstance(nu0, OrbitMeasure):
        # point average per cell; no density function exists
        idx = scheme.cell_index(nu0.points)
        vals = np.zeros(len(nu0.points))
        inside = idx >= 0
        vals[inside] = np.log(scheme.jac_fn(nu0.points[inside]))
        out = np.bincount(np.maximum(idx, 0), weights=vals, minlength=scheme.n_cells)
        return out / len(nu0.points)
    if scheme.n_cells <= 16:
        # branch-sized cells may carry a log singularity of log J_F at a
        # cell endpoint (infinite-derivative points): integrate on panels
        # with geometric refinement toward both endpoints
        return np.array([
            _panel_logjac_integral(scheme, nu0, scheme.cell_lo[i], scheme.cell_hi[i],
                                   nodes=6)
            for i in range(scheme.n_cells)])
    # small Gibbs cells: log J_F has bounded distortion; plain Gauss-Legendre
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (scheme.cell_lo + scheme.cell_hi)
    half = 0.5 * (scheme.cell_hi - scheme.cell_lo)
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    vals = (np.log(scheme.jac_fn(pts)) * nu0.density(pts)).reshape(scheme.n_cells, nodes)
    return half * (vals @ gw)


def _panel_logjac_integral(scheme, nu0, lo, hi, nodes=6, grid=1024, ladder=44):
    """int_(lo,hi) log J_F dnu0 on bin panels + geometric endpoint ladders."""
    if isinstance(nu0, UlamMeasure):
        inner = nu0.edges[(nu0.edges > lo) & (nu0.edges < hi)]
    else:
        inner = np.linspace(lo, hi, grid + 1)[1:-1]
    width = hi - lo
    left = lo + width * 0.5 ** np.arange(ladder, 0, -1)
    right = hi - width * 0.5 ** np.arange(1, ladder + 1)
    edges = np.unique(np.concatenate([[lo], left, inner, right, [hi]]))
    a, b = edges[:-1], edges[1:]
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    vals = (np.log(scheme.jac_fn(pts)) * nu0.density(pts)).reshape(len(a), nodes)
    return float(np.sum(half * (vals @ gw)))
