"""Command-line entry point.

Subcommands:
  kernel    write kernel CSV dumps (+ JSON sidecars) per level/time/scheme
  converge  run a convergence campaign, write its JSON and CSV report
  verify    run the built-in invariant suites, exit nonzero on failure

Configuration comes from a JSON file (--config) plus flag overrides;
flags win.  Exit codes: 0 ok, 1 verification failure, 2 configuration
error, 3 numeric failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import dyson, spectral
from .coefficients import family_names, make_family, stats
from .errors import (ConsistencyError, DiffkernelsError, EllipticityError,
                     ResourceLimitError, StabilityError)
from .generator import build_generator
from .harness import run_campaign
from .lattice import build_grid
from .propagator import (EulerStep, euler_kernel, expm_kernel, write_kernel)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_CONFIG_ERRORS = (ValueError, KeyError, TypeError, EllipticityError,
                  ResourceLimitError, json.JSONDecodeError, OSError)
_NUMERIC_ERRORS = (ConsistencyError, StabilityError)


@dataclass
class ExperimentConfig:
    family_kind: str = "trig-smooth"
    family_params: dict = dc_field(default_factory=dict)
    L: float = 1.0
    t_list: tuple = (0.25,)
    m_min: int = 4
    m_max: int = 7
    schemes: tuple = ("semidiscrete",)
    out: str = "out"
    seed: int = 0
    max_dim: int = 2048
    only: Optional[str] = None
    tolerance_scale: float = 1.0

    def build_field(self):
        params = dict(self.family_params)
        params.setdefault("L", self.L)
        return make_family(self.family_kind, **params)

    def m_range(self):
        if self.m_min > self.m_max:
            raise ValueError(f"m_min {self.m_min} exceeds m_max {self.m_max}")
        return range(self.m_min, self.m_max + 1)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        fam = raw.get("family", {})
        cfg.family_kind = fam.get("kind", cfg.family_kind)
        cfg.family_params = dict(fam.get("params", {}))
        cfg.L = float(raw.get("L", cfg.L))
        t = raw.get("t", list(cfg.t_list))
        cfg.t_list = tuple(float(x) for x in (t if isinstance(t, list) else [t]))
        cfg.m_min = int(raw.get("m_min", cfg.m_min))
        cfg.m_max = int(raw.get("m_max", cfg.m_max))
        cfg.schemes = tuple(raw.get("schemes", list(cfg.schemes)))
        cfg.out = raw.get("out", cfg.out)
        cfg.seed = int(raw.get("seed", cfg.seed))
        cfg.max_dim = int(raw.get("max_dim", cfg.max_dim))
    # flags win
    if args.family is not None:
        cfg.family_kind = args.family
        cfg.family_params = {}
    if args.out is not None:
        cfg.out = args.out
    if args.m_min is not None:
        cfg.m_min = args.m_min
    if args.m_max is not None:
        cfg.m_max = args.m_max
    if args.t:
        cfg.t_list = tuple(args.t)
    if args.schemes is not None:
        cfg.schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.max_dim is not None:
        cfg.max_dim = args.max_dim
    cfg.only = getattr(args, "only", None)
    if getattr(args, "tolerance_scale", None) is not None:
        cfg.tolerance_scale = args.tolerance_scale
    return cfg


def _tname(t: float) -> str:
    return format(t, "g").replace("-", "m").replace(".", "p")


def cmd_kernel(cfg: ExperimentConfig) -> int:
    field = cfg.build_field()
    os.makedirs(cfg.out, exist_ok=True)
    written = []
    for m in cfg.m_range():
        grid = build_grid(m, cfg.L, max_dim=cfg.max_dim)
        op = build_generator(field, grid)
        for t in cfg.t_list:
            for scheme in cfg.schemes:
                if scheme == "semidiscrete":
                    ker = expm_kernel(op, t)
                elif scheme == "euler":
                    if t == 0.0:
                        ker = expm_kernel(op, 0.0)
                    else:
                        ker = euler_kernel(op, t, EulerStep.for_time(op, t))
                elif scheme == "spectral-oracle":
                    if not cfg.family_kind == "constant":
                        raise ValueError(
                            "the spectral oracle needs the constant family")
                    sigma = math.sqrt(float(field.vol_squared(np.zeros(1))[0]))
                    mu = float(field.drift(np.zeros(1))[0])
                    ker = spectral.fourier_kernel(sigma, mu, grid, t)
                else:
                    raise ValueError(f"unknown scheme {scheme!r}")
                path = os.path.join(
                    cfg.out, f"kernel_m{m}_{scheme}_t{_tname(t)}.csv")
                write_kernel(ker, path)
                written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig) -> int:
    field = cfg.build_field()
    levels = list(cfg.m_range())
    if len(levels) < 4:
        raise ValueError(
            f"rate fit needs at least 3 pairwise differences (4 levels), "
            f"got levels {levels}")
    os.makedirs(cfg.out, exist_ok=True)
    for t in cfg.t_list:
        report = run_campaign(field, cfg.L, t, levels, schemes=cfg.schemes,
                              max_dim=cfg.max_dim)
        base = os.path.join(cfg.out, f"converge_t{_tname(t)}")
        with open(base + ".json", "w") as fh:
            fh.write(report.to_json())
        with open(base + ".csv", "w") as fh:
            fh.write(report.to_csv())
        if report.kernel_fit:
            print(f"t={t:g}: wrote {base}.json and {base}.csv "
                  f"(kernel rate {report.kernel_fit.gamma_hat:.3f})")
        else:
            print(f"t={t:g}: wrote {base}.json and {base}.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify suites

def _suite_oracle(cfg, checks):
    tol = 1e-10 * cfg.tolerance_scale
    for sigma in (0.5, 1.0, 2.0):
        for mu in (0.0, 0.5, -1.0):
            field = make_family("constant", sigma2=sigma * sigma, mu=mu, L=1.0)
            for m in (3, 4):
                grid = build_grid(m, 1.0)
                op = build_generator(field, grid)
                t = 0.1
                gap = np.abs(expm_kernel(op, t).values
                             - spectral.fourier_kernel(sigma, mu, grid, t).values).max()
                checks.append((f"oracle/expm-vs-fourier sigma={sigma} mu={mu} m={m}",
                               gap < tol, f"gap={gap:.3e}"))
                step = EulerStep.for_time(op, t)
                gap = np.abs(
                    euler_kernel(op, t, step).values
                    - spectral.fourier_kernel_discrete(
                        sigma, mu, grid, t, step.delta_t).values).max()
                checks.append((f"oracle/euler-vs-discrete sigma={sigma} mu={mu} m={m}",
                               gap < tol, f"gap={gap:.3e}"))


def _suite_markov(cfg, checks):
    mass_tol = 1e-10 * cfg.tolerance_scale
    pos_tol = -1e-12 * cfg.tolerance_scale
    semi_tol = 1e-9 * cfg.tolerance_scale
    for kind in ("constant", "trig-smooth", "hoelder-bump"):
        field = make_family(kind, L=1.0)
        grid = build_grid(5, 1.0)
        op = build_generator(field, grid)
        k1 = expm_kernel(op, 0.1)
        k2 = expm_kernel(op, 0.2)
        h = grid.spacing
        mass = np.abs(h * k1.values.sum(axis=1) - 1.0).max()
        checks.append((f"markov/mass {kind}", mass < mass_tol, f"err={mass:.3e}"))
        low = float(k1.values.min())
        checks.append((f"markov/positivity {kind}", low >= pos_tol, f"min={low:.3e}"))
        semi = np.abs(h * (k1.values @ k1.values) - k2.values).max()
        checks.append((f"markov/semigroup {kind}", semi < semi_tol, f"err={semi:.3e}"))


def _suite_dyson(cfg, checks):
    rng = np.random.default_rng(cfg.seed)
    # path counts against exhaustive enumeration on the line
    import itertools
    ok = True
    worst = ""
    for q in range(1, 9):
        reachable = {}
        for steps in itertools.product((1, -1), repeat=q):
            s = sum(steps)
            reachable[s] = reachable.get(s, 0) + 1
        for two_k, count in reachable.items():
            got = dyson.count_paths(q, two_k / 2.0)
            if got != count:
                ok = False
                worst = f"q={q} displacement={two_k}: {got} != {count}"
    checks.append(("dyson/count-paths q<=8", ok, worst or "all match"))

    field = make_family("trig-smooth", L=1.0)
    grid = build_grid(1, 1.0)   # 4 sites
    op = build_generator(field, grid)
    st = stats(field, grid)
    h = grid.spacing
    ts = np.linspace(0.0, 1.0, 17)[1:]
    envelopes = {q: dyson.conv_power(q, ts, st, h) for q in range(1, 10)}
    worst_ratio = -np.inf
    for start in range(grid.size):
        for sites, w in dyson.enumerate_weight_profiles(op, start, 9, ts):
            q = len(sites) - 1
            ratio = float((2.0 ** -q * w / envelopes[q]).max())
            worst_ratio = max(worst_ratio, ratio)
    bound_cap = 1.0 if cfg.tolerance_scale > 0 else 0.0
    checks.append(("dyson/weight-bound N=4 q<=9", worst_ratio <= bound_cap,
                   f"worst ratio={worst_ratio:.4f}"))

    # envelope closed form vs one numerical convolution step:
    # trapezoid of conv_power(q-1, s) * conv_power(1, t-s) at the endpoint
    tol = 1e-8 * cfg.tolerance_scale
    t_chk = 2.0 * h * h / st.sigma0 ** 2
    n_grid = 2 ** 14
    s = np.linspace(0.0, t_chk, n_grid + 1)
    worst_rel = 0.0
    for q in (2, 3, 4):
        closed = dyson.conv_power(q, t_chk, st, h)
        integrand = dyson.conv_power(q - 1, s, st, h) \
            * dyson.conv_power(1, t_chk - s, st, h)
        quad = (t_chk / n_grid) * (integrand.sum()
                                   - 0.5 * (integrand[0] + integrand[-1]))
        worst_rel = max(worst_rel, abs(closed - quad) / closed)
    checks.append(("dyson/conv-power-vs-quadrature", worst_rel < tol,
                   f"rel={worst_rel:.3e}"))

    # resummation against the exponential
    t = 0.05
    ker = expm_kernel(op, t)
    worst_gap = 0.0
    for xy in ((0, 0), (0, 1), (0, 2)):
        val, diag = dyson.resum_kernel(op, xy[0], xy[1], t, q_cap=16)
        worst_gap = max(worst_gap, abs(val - ker.values[xy]))
    checks.append(("dyson/resum-vs-expm N=4", worst_gap < 1e-6 * cfg.tolerance_scale,
                   f"gap={worst_gap:.3e}"))

    # exact identities on random fields and functions
    tol12 = 1e-12 * cfg.tolerance_scale
    worst_res = 0.0
    for _ in range(20):
        a = 1.5 + rng.uniform(-0.2, 0.2)
        fld = make_family("trig-smooth", sigma2_const=a,
                          sigma2_terms=((1, rng.uniform(-0.3, 0.3),
                                         rng.uniform(-0.3, 0.3)),),
                          mu_const=rng.uniform(-0.5, 0.5),
                          mu_terms=((2, rng.uniform(-0.3, 0.3), 0.0),), L=1.0)
        g5 = build_grid(5, 1.0)
        j = int(rng.integers(0, g5.size))
        worst_res = max(worst_res, dyson.lbar_decomposition_check(fld, g5, j))
        f = rng.standard_normal(g5.size)
        worst_res = max(worst_res, dyson.discrete_taylor_check(f, g5))
    checks.append(("dyson/exact-identities", worst_res < tol12,
                   f"worst rel residual={worst_res:.3e}"))


def _suite_trig(cfg, checks):
    report = spectral.trig_inequality_suite(h_max=0.5, n_random=10000, seed=cfg.seed)
    for c in report.checks:
        passed = c.violations == 0 if cfg.tolerance_scale > 0 else c.worst_margin >= 0
        checks.append((f"trig/{c.name}", passed,
                       f"violations={c.violations} worst={c.worst_margin:.3e}"))


_SUITES = {
    "oracle": _suite_oracle,
    "markov": _suite_markov,
    "dyson": _suite_dyson,
    "trig": _suite_trig,
}


def cmd_verify(cfg: ExperimentConfig) -> int:
    names = [n for n in _SUITES if cfg.only is None or cfg.only in n]
    if not names:
        raise ValueError(f"--only {cfg.only!r} matches no suite "
                         f"(available: {sorted(_SUITES)})")
    checks = []
    for name in names:
        _SUITES[name](cfg, checks)
    passed = all(bool(ok) for _, ok, _ in checks)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name} ({detail})")
    os.makedirs(cfg.out, exist_ok=True)
    payload = {
        "passed": passed,
        "suites": names,
        "checks": [{"name": n, "passed": bool(ok), "detail": d}
                   for n, ok, d in checks],
    }
    with open(os.path.join(cfg.out, "verify.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="diffkernels",
        description="Periodic diffusion kernels by explicit schemes, with "
                    "oracles and convergence campaigns")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("kernel", cmd_kernel), ("converge", cmd_converge),
                     ("verify", cmd_verify)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--m-min", type=int, dest="m_min")
        p.add_argument("--m-max", type=int, dest="m_max")
        p.add_argument("--t", type=float, action="append",
                       help="time (repeatable)")
        p.add_argument("--family", choices=family_names())
        p.add_argument("--schemes", help="comma-separated: semidiscrete,euler,"
                                         "spectral-oracle")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-dim", type=int, dest="max_dim",
                       help="resource guard on the grid size (default 2048)")
        if name == "verify":
            p.add_argument("--only", help="run only suites whose name contains this")
            p.add_argument("--tolerance-scale", type=float, dest="tolerance_scale",
                           help="scale all tolerances (0 makes every check strict)")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return args.fn(cfg)
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiffkernelsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
