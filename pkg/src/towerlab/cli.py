"""Command-line driver: build a system, run the verifications, emit reports.

Three commands:

* ``verify MAP``       -- end-to-end entropy-formula verification for one of
  the zoo maps (doubling, lorenz, lsv, singular, skewprod);
* ``counterexample``   -- the four-series certification plus the
  formula-failure reproduction for the infinite-entropy scheme;
* ``skew``             -- structural checks and the unstable-Jacobian
  integral for the two-dimensional skew extension.

Exit codes: 0 pass, 1 fail, 2 inconclusive, 64 usage error.  Reports are
JSON (sorted keys, no timestamps) with the producing configuration embedded,
so identical (command, config, seed) yield byte-identical files.  CSV side
files carry curves for external plotting.  The default output directory is
``$TOWERLAB_OUTDIR`` or the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import counterexample as cx
from . import skew2d as sk
from .entropy import (FormulaConfig, block_entropy_from_symbols,
                      entropy_formula_report, lyapunov_birkhoff)
from .inducing import build_lsv_scheme, check_gibbs_markov, trivial_scheme
from .maps1d import (doubling_map, lorenz_like_map, lsv_map,
                     singular_intermittent_map, skew_product_map)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64

MAP_NAMES = ("doubling", "lorenz", "lsv", "singular", "skewprod")


@dataclass
class RunConfig:
    """Everything that determines a run; embedded verbatim in every report."""

    command: str
    map_name: str = ""
    alpha: float = 0.5
    gamma: float = 2.0
    alpha0: float = 0.2
    alpha1: float = 0.8
    p0: float = 0.5
    lam: float = 0.5
    n_max: int = 2000
    n_max_list: tuple = (1000, 10_000, 100_000, 1_000_000)
    n_orbits: int = 64
    n_iters: int = 1_000_000
    burn_in: int = 10_000
    bins: int = 4096
    n_pairs: int = 1_000_000
    n_max_block: int = 12
    block_orbits: int = 20_000
    block_iters: int = 44
    sigma_factor: float = 3.0
    seed: int = 0
    workers: int = 0          # chunking hint only; results are order-fixed
    out_dir: str = ""

    def to_dict(self):
        d = asdict(self)
        d["n_max_list"] = [int(v) for v in self.n_max_list]
        return d


def _write_report(cfg, name, payload):
    out_dir = cfg.out_dir or os.environ.get("TOWERLAB_OUTDIR", ".")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    body = {"command": cfg.command, "config": cfg.to_dict(), **payload}
    with open(path, "w") as fh:
        json.dump(_jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_block_csv(cfg, name, rows):
    out_dir = cfg.out_dir or os.environ.get("TOWERLAB_OUTDIR", ".")
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write("n,H_n_over_n,std_error\n")
        for n, h, s in rows:
            fh.write(f"{int(n)},{h!r},{s!r}\n")
    return path


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _build_system(cfg):
    name = cfg.map_name
    if name == "doubling":
        m = doubling_map()
        return m, trivial_scheme(m)
    if name == "lorenz":
        m = lorenz_like_map(cfg.alpha)
        return m, trivial_scheme(m)
    if name == "lsv":
        m = lsv_map(cfg.alpha)
        return m, build_lsv_scheme(cfg.alpha, cfg.n_max)
    if name == "singular":
        m = singular_intermittent_map(cfg.gamma)
        return m, trivial_scheme(m)
    raise ValueError(f"unknown map {name!r}")


def cmd_verify(cfg):
    if cfg.map_name not in MAP_NAMES:
        print(f"unknown map {cfg.map_name!r}; choose from {MAP_NAMES}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.map_name == "skewprod":
        return _verify_skewprod(cfg)
    try:
        map1d, scheme = _build_system(cfg)
    except ValueError as e:
        print(f"parameter rejected: {e}", file=sys.stderr)
        return EXIT_USAGE
    fc = FormulaConfig(n_orbits=cfg.n_orbits, n_iters=cfg.n_iters,
                       burn_in=cfg.burn_in, seed=cfg.seed, bins=cfg.bins,
                       n_max_block=cfg.n_max_block, block_orbits=cfg.block_orbits,
                       block_iters=cfg.block_iters, sigma_factor=cfg.sigma_factor)
    report = entropy_formula_report(map1d, scheme, fc)
    distortion = check_gibbs_markov(scheme, n_pairs=min(cfg.n_pairs, 10_000),
                                    seed=cfg.seed)
    path = _write_report(cfg, f"verify_{cfg.map_name}_report.json", {
        "report": report.to_dict(),
        "distortion": distortion.to_dict(),
    })
    _write_block_csv(cfg, f"verify_{cfg.map_name}_blocks.csv", report.block_curve)
    print(f"{cfg.map_name}: {report.verdict} -- {report.detail}")
    print(f"report: {path}")
    if report.verdict == "pass":
        return EXIT_PASS
    if report.verdict == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_FAIL


def _verify_skewprod(cfg):
    """No inducing scheme is constructed for the two-dimensional skew
    product, so only the Birkhoff and block-entropy estimates are reported
    and the verdict is inconclusive by design."""
    try:
        m = skew_product_map(cfg.alpha0, cfg.alpha1, cfg.p0)
    except ValueError as e:
        print(f"parameter rejected: {e}", file=sys.stderr)
        return EXIT_USAGE
    bir = lyapunov_birkhoff(m, n_orbits=cfg.n_orbits, n_iters=cfg.n_iters,
                            burn_in=cfg.burn_in, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    x = rng.random(cfg.block_orbits)
    y = rng.random(cfg.block_orbits)
    symbols = np.empty((cfg.block_orbits, cfg.block_iters), dtype=np.int64)
    for j in range(cfg.block_iters):
        symbols[:, j] = m.symbols(x, y)
        x, y, _ = m.step_array(x, y)
    n_blk = min(cfg.n_max_block, 10)  # 4^n table budget
    rows, warn = block_entropy_from_symbols(symbols, 4, n_blk)
    gap = abs(rows[-1][1] - bir.value)
    payload = {
        "birkhoff": bir.to_dict(),
        "block_curve": [[int(n), float(h), float(s)] for n, h, s in rows],
        "block_warnings": warn,
        "block_vs_birkhoff_gap": gap,
        "verdict": "inconclusive",
        "detail": "no inducing scheme in scope for the skew product; "
                  "estimates only",
    }
    path = _write_report(cfg, "verify_skewprod_report.json", payload)
    _write_block_csv(cfg, "verify_skewprod_blocks.csv", rows)
    print(f"skewprod: inconclusive -- birkhoff {bir.value:.6f}, "
          f"block H_{n_blk}/{n_blk} {rows[-1][1]:.6f}")
    print(f"report: {path}")
    return EXIT_INCONCLUSIVE


# ---------------------------------------------------------------------------
# counterexample
# ---------------------------------------------------------------------------

def cmd_counterexample(cfg):
    series = cx.tail_series_report(cfg.n_max_list)
    scheme_n = min(cfg.n_max, 10_000)
    scheme = cx.build_counterexample_scheme(scheme_n)
    from .entropy import finiteness_criterion, jacobian_integral
    from .tower import UniformDensity
    nu0 = UniformDensity(*scheme.base)
    fin = finiteness_criterion(scheme, nu0)
    jac = jacobian_integral(scheme, nu0)
    # desk-scale interval-map cross-check of the finite side
    im_n = min(scheme_n, 400)
    interval_map = cx.counterexample_interval_map(im_n)
    bir = lyapunov_birkhoff(interval_map, n_orbits=min(cfg.n_orbits, 64),
                            n_iters=min(cfg.n_iters, 20_000),
                            burn_in=min(cfg.burn_in, 1000), seed=cfg.seed)
    small_scheme = cx.build_counterexample_scheme(im_n)
    small_jac = jacobian_integral(small_scheme, UniformDensity(*small_scheme.base))
    bir_gap = abs(bir.value - small_jac.extra["truncated_value"])
    bir_tol = cfg.sigma_factor * bir.std_error
    failure_reproduced = (fin.verdict == "divergent"
                          and np.isfinite(jac.value)
                          and bir_gap <= bir_tol)
    payload = {
        "series": series.to_dict(),
        "finiteness": fin.to_dict(),
        "jacobian_integral": jac.to_dict(),
        "interval_map_birkhoff": bir.to_dict(),
        "interval_map_quadrature": small_jac.extra["truncated_value"],
        "interval_map_gap": bir_gap,
        "failure_reproduced": bool(failure_reproduced),
        "verdict": "pass" if (series.matches_expected() and failure_reproduced)
        else ("inconclusive" if "inconclusive" in series.verdicts.values()
              else "fail"),
    }
    path = _write_report(cfg, "counterexample_report.json", payload)
    out_dir = cfg.out_dir or os.environ.get("TOWERLAB_OUTDIR", ".")
    cx.write_series_csv(os.path.join(out_dir, "counterexample_series.csv"),
                        int(max(cfg.n_max_list)))
    print(f"series verdicts: {series.verdicts}")
    print(f"finiteness: {fin.verdict}; jacobian integral {jac.value:.6f} "
          f"(+- {jac.truncation_bound:.2e})")
    print(f"failure reproduced: {failure_reproduced}")
    print(f"report: {path}")
    if payload["verdict"] == "pass":
        return EXIT_PASS
    if payload["verdict"] == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_FAIL


# ---------------------------------------------------------------------------
# skew
# ---------------------------------------------------------------------------

def cmd_skew(cfg):
    if not 0.0 < cfg.lam <= 0.5:
        print(f"lambda must be in (0, 1/2], got {cfg.lam}", file=sys.stderr)
        return EXIT_USAGE
    scheme = cx.build_counterexample_scheme(min(cfg.n_max, 10_000))
    system = sk.SkewSystem(scheme, cfg.lam)
    inj = sk.injectivity_check(system, n_pairs=cfg.n_pairs, seed=cfg.seed)
    mismatches = sk.quotient_conjugacy_exact(system, n_states=100_000,
                                             seed=cfg.seed + 1)
    dev_t, dev_r = sk.contraction_check(system, n_states=100_000,
                                        seed=cfg.seed + 2)
    integral = sk.unstable_integral_report(
        system, n_orbits=min(cfg.n_orbits, 64),
        n_iters=min(cfg.n_iters, 20_000),
        burn_in=min(cfg.burn_in, 1000), seed=cfg.seed + 3,
        sigma_factor=cfg.sigma_factor)
    ok = (inj.verdict == "pass" and mismatches == 0
          and integral.extra["reproduces_failure"])
    payload = {
        "injectivity": inj.to_dict(),
        "conjugacy_mismatches": mismatches,
        "contraction_deviation_translation": dev_t,
        "contraction_deviation_return": dev_r,
        "unstable_integral": integral.to_dict(),
        "verdict": "pass" if ok else "fail",
    }
    path = _write_report(cfg, "skew_report.json", payload)
    out_dir = cfg.out_dir or os.environ.get("TOWERLAB_OUTDIR", ".")
    sk.orbit_dump_csv(system, os.path.join(out_dir, "skew_orbit.csv"),
                      n_steps=1000, seed=cfg.seed + 4)
    print(f"injectivity: {inj.verdict}; conjugacy mismatches: {mismatches}")
    print(f"unstable integral {integral.value:.6f} vs quotient "
          f"{integral.extra['quotient_quadrature_truncated']:.6f}; "
          f"entropy {integral.extra['entropy_verdict']}")
    print(f"report: {path}")
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _load_config_file(path):
    """key=value lines; '#' comments; values parsed as int, float, or
    comma-separated integer list, else kept as strings."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw.rstrip()}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if "," in val:
                out[key] = tuple(int(float(v)) for v in val.split(","))
                continue
            for cast in (int, float):
                try:
                    out[key] = cast(val)
                    break
                except ValueError:
                    continue
            else:
                out[key] = val
    return out


def _add_common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="key=value file; explicit flags win")
    p.add_argument("--out-dir", type=str, default=None)
    p.add_argument("--workers", type=int, default=None,
                   help="chunking hint; never changes results")
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--n-orbits", type=int, default=None)
    p.add_argument("--n-iters", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--sigma-factor", type=float, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="towerlab",
                                 description="entropy-formula verification for "
                                             "maps with inducing schemes")
    sub = ap.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="verify the entropy formula for a zoo map")
    pv.add_argument("map_name", choices=list(MAP_NAMES))
    pv.add_argument("--alpha", type=float, default=None)
    pv.add_argument("--gamma", type=float, default=None)
    pv.add_argument("--alpha0", type=float, default=None)
    pv.add_argument("--alpha1", type=float, default=None)
    pv.add_argument("--p0", type=float, default=None)
    pv.add_argument("--n-max-block", type=int, default=None)
    pv.add_argument("--block-orbits", type=int, default=None)
    pv.add_argument("--block-iters", type=int, default=None)
    pv.add_argument("--n-pairs", type=int, default=None)
    _add_common(pv)

    pc = sub.add_parser("counterexample",
                        help="certify the infinite-entropy construction")
    pc.add_argument("--n-max-list", type=str, default=None,
                    help="comma-separated thresholds")
    _add_common(pc)

    ps = sub.add_parser("skew", help="verify the two-dimensional skew extension")
    ps.add_argument("--lambda", dest="lam", type=float, default=None)
    ps.add_argument("--n-pairs", type=int, default=None)
    _add_common(ps)
    return ap


def _merge_config(args):
    defaults = {
        "verify": {"alpha": 0.5, "n_max": 2000},
        "counterexample": {"n_max": 10_000},
        "skew": {"n_max": 2000, "n_iters": 20_000, "burn_in": 1000},
    }[args.command]
    cfg = RunConfig(command=args.command)
    for k, v in defaults.items():
        setattr(cfg, k, v)
    if args.command == "verify" and getattr(args, "map_name", "") == "singular" \
            and args.n_iters is None:
        cfg.n_iters = 50_000  # implicit-branch solves dominate each step
    if getattr(args, "config", None):
        for k, v in _load_config_file(args.config).items():
            if not hasattr(cfg, k):
                raise ValueError(f"unknown config key {k!r}")
            setattr(cfg, k, v)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        key = {"map_name": "map_name"}.get(k, k)
        if k == "n_max_list" and isinstance(v, str):
            v = tuple(int(float(s)) for s in v.split(","))
        setattr(cfg, key, v)
    if args.command == "verify" and cfg.map_name == "lorenz" and "alpha" not in _explicit(args):
        cfg.alpha = 0.25
    return cfg


def _explicit(args):
    return {k for k, v in vars(args).items() if v is not None}


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        cfg = _merge_config(args)
    except (ValueError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.command == "verify":
        return cmd_verify(cfg)
    if cfg.command == "counterexample":
        return cmd_counterexample(cfg)
    if cfg.command == "skew":
        return cmd_skew(cfg)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
