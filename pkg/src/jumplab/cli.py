"""Command-line front end.

Subcommands: phi, transform, check-scaling, envelope, geometry, simulate,
lil, verify, bench.  All tables are CSV with one header row preceded by a
comment line carrying the resolved-config hash; outputs are deterministic
given the configuration.  Exit codes: 0 success, 1 verification failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import construct, envelope, fractal, montecarlo, scalefn, transform
from .backend import available_backends, benchmark
from .config import ExperimentConfig
from .errors import ConfigError, JumplabError


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


class Emitter:
    def __init__(self, out_dir: Path, digest: str):
        self.out = out_dir
        self.digest = digest
        self.out.mkdir(parents=True, exist_ok=True)

    def write_table(self, name: str, header, rows):
        path = self.out / name
        with open(path, "w") as fh:
            fh.write(f"# config={self.digest}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        return path


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        text = resources.files("jumplab.configs").joinpath("line_alpha1.ini").read_text()
        cfg = ExperimentConfig.from_ini(text, is_text=True)
    else:
        cfg = ExperimentConfig.from_ini(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _construction(cfg: ExperimentConfig):
    return construct.build_phi(cfg.F, cfg.psi, eps=cfg.eps_quad)


def _default_bounds(f: scalefn.ScalingFunction):
    """Tight global bounds at the function's own min/max power indices."""
    zp, ip = f.zero_profile, f.inf_profile
    if zp is None or ip is None:
        raise ConfigError(f"function {f.label} lacks index metadata")
    lo = min(zp[0], ip[0])
    hi = max(zp[0], ip[0])
    lower = scalefn.fit_scaling_constant(f, "lower", max(lo, 1e-6))
    upper = scalefn.fit_scaling_constant(f, "upper", max(hi, 1e-6))
    return lower, upper


def cmd_phi(cfg: ExperimentConfig, em: Emitter, args) -> int:
    rep = construct.check_integrability(cfg.F, cfg.psi)
    if not rep.converges:
        print("error: dF/psi is not integrable at zero; the scale construction is undefined", file=sys.stderr)
        return 2
    cons = _construction(cfg)
    grid = scalefn.geometric_grid(1e-3, 1e3, 16)
    rows = [(r, cons.Phi(r), cfg.psi(r), cfg.F(r)) for r in grid]
    path = em.write_table("phi.csv", ["r", "phi", "psi", "f"], rows)
    print(f"wrote {path}")
    return 0


def cmd_transform(cfg: ExperimentConfig, em: Emitter, args) -> int:
    cons = _construction(cfg)
    lower, upper = _default_bounds(cons.Phi)
    rows = []
    for t in cfg.t_grid:
        inv = cons.Phi.inverse(t)
        for m in (0.5, 1, 2, 4, 8, 16, 32):
            r = m * inv
            res = transform.sup_transform(cons.Phi, r, t, upper=upper, lower=lower)
            rows.append((t, r, res.value, res.argmax, res.tag))
    path = em.write_table("transform.csv", ["t", "r", "value", "argmax", "mode"], rows)
    print(f"wrote {path}")
    return 0


def cmd_check_scaling(cfg: ExperimentConfig, em: Emitter, args) -> int:
    rows = []
    ok = True
    for name, f in (("f", cfg.F), ("psi", cfg.psi)):
        zp, ip = f.zero_profile, f.inf_profile
        lo, hi = min(zp[0], ip[0]), max(zp[0], ip[0])
        for side, exp in (("lower", max(lo, 1e-6)), ("upper", max(hi, 1e-6))):
            bound = scalefn.fit_scaling_constant(f, side, exp)
            rep = scalefn.check_scaling(f, bound)
            ok &= rep.passed
            rows.append((name, side, exp, bound.constant, rep.worst_ratio, rep.passed))
    path = em.write_table(
        "check_scaling.csv", ["function", "side", "exponent", "constant", "worst_ratio", "passed"], rows
    )
    print(f"wrote {path}")
    return 0 if ok else 1


def _envelope_spec(cfg: ExperimentConfig, cons) -> envelope.EnvelopeSpec:
    lower, upper = _default_bounds(cons.Phi)
    return envelope.EnvelopeSpec(
        Phi=cons.Phi,
        psi=cfg.psi,
        form="HK",
        F=cfg.F,
        c=cfg.env_c,
        eta=cfg.env_eta,
        a0=cfg.env_a0,
        a_L=cfg.env_aL,
        a_U=cfg.env_aU,
        phi_upper=upper,
        phi_lower=lower,
    )


def cmd_envelope(cfg: ExperimentConfig, em: Emitter, args) -> int:
    g = cfg.build_graph()
    x0 = cfg.origin(g)
    vol = envelope.VolumeOracle.from_graph(g)
    cons = _construction(cfg)
    spec = _envelope_spec(cfg, cons)
    rows = []
    for t in cfg.t_grid:
        for r in range(0, int(cfg.r_max) + 1):
            lo, hi = envelope.hk_bounds(spec, t, x0, float(r), vol)
            rows.append((t, float(r), lo, hi))
    path = em.write_table("envelope.csv", ["t", "r", "lower", "upper"], rows)
    print(f"wrote {path}")
    return 0


def cmd_geometry(cfg: ExperimentConfig, em: Emitter, args) -> int:
    g = cfg.build_graph()
    radii = [2.0 * 2**k for k in range(6)] if cfg.space == "gasket" else [2.0 * 2**k for k in range(8)]
    radii = [r for r in radii if r <= max(4.0, g.n_vertices**0.5)] or [2.0, 4.0]
    if cfg.space == "gasket":
        centers = fractal.interior_vertices(g, 2 * max(radii))
        rng = np.random.default_rng(cfg.seed)
        centers = rng.choice(centers, size=min(12, centers.size), replace=False)
        expected = math.log(3) / math.log(2)
    else:
        centers = [cfg.origin(g)]
        expected = 1.0
    fit = fractal.fit_volume_exponent(g, radii, centers)
    pairs = [(int(a), int(b)) for a, b in zip(g.boundary[:-1], g.boundary[1:])]
    chain = fractal.chain_condition_check(g, 2.0, pairs, [1, 2, 4, 8])
    rows = [
        ("vertices", g.n_vertices),
        ("edges", g.n_edges),
        ("volume_exponent", fit.d_fit),
        ("volume_exponent_expected", expected),
        ("doubling_min", fit.doubling_min),
        ("doubling_max", fit.doubling_max),
        ("chain_worst_ratio", chain.worst_ratio),
        ("chain_passed", chain.passed),
    ]
    path = em.write_table("geometry.csv", ["quantity", "value"], rows)
    print(f"wrote {path}")
    return 0 if abs(fit.d_fit - expected) < 0.06 and chain.passed else 1


def _simulate(cfg: ExperimentConfig, threads: int):
    g = cfg.build_graph()
    x0 = cfg.origin(g)
    cons = _construction(cfg)
    kw = {}
    if cfg.sampler == "subordinate":
        t_ref = cfg.t_grid[0]
        spec = montecarlo.build_subordinator(cfg.F, cfg.psi, t_ref, float(cfg.F(cons.Phi.inverse(t_ref))))
        kw["spec"] = spec
        if cfg.space == "gasket":
            kw["step_cap"] = cfg.step_cap
            kw["method"] = "steps"
    else:
        kw["psi"] = cfg.psi
    kers = montecarlo.estimate_kernel_grid(
        g, x0, cfg.t_grid, cfg.sampler, cfg.walkers, cfg.seed, threads=threads, **kw
    )
    return g, x0, cons, kers


def cmd_simulate(cfg: ExperimentConfig, em: Emitter, args) -> int:
    g, x0, cons, kers = _simulate(cfg, args.threads)
    vol = envelope.VolumeOracle.from_graph(g)
    spec = _envelope_spec(cfg, cons)
    rows = []
    for ker in kers:
        r, cnt, mass, p, hw = ker.by_distance()
        for j in range(r.size):
            if cfg.r_max and r[j] > cfg.r_max:
                continue
            lo, hi = envelope.hk_bounds(spec, ker.t, x0, float(r[j]), vol)
            rows.append((ker.t, float(r[j]), p[j], hw[j], lo, hi))
    path = em.write_table("kernel.csv", ["t", "r", "p_hat", "halfwidth", "lower", "upper"], rows)
    print(f"wrote {path}")
    return 0


def cmd_lil(cfg: ExperimentConfig, em: Emitter, args) -> int:
    g = cfg.build_graph()
    x0 = cfg.origin(g)
    horizon = max(16.0, cfg.t_grid[-1])
    rep = montecarlo.moment_and_lil(g, x0, cfg.F, cfg.psi, "jump", horizon, cfg.walkers, cfg.seed)
    rows = [("moment@" + str(int(n)), v) for n, v in zip(rep.moment_checkpoints, rep.moment_curve)]
    rows += [(f"lil_q{int(q * 100)}", v) for q, v in rep.lil_sup_quantiles.items()]
    rows.append(("defect_fraction", rep.defect_fraction))
    path = em.write_table("lil.csv", ["quantity", "value"], rows)
    print(f"wrote {path}")
    return 0


def cmd_verify(cfg: ExperimentConfig, em: Emitter, args) -> int:
    """Config-scaled deterministic verification battery (reduced-size mirror
    of the pytest acceptance suite; see tests/test_acceptance.py for the
    full-size criteria)."""
    checks = []

    def record(name, value, threshold, passed):
        checks.append((name, value, threshold, bool(passed)))

    # closed-form transform
    worst = 0.0
    phi2 = scalefn.power(2)
    U2, L2 = scalefn.upper_bound(2.0), scalefn.lower_bound(2.0)
    for r in (0.5, 1, 2, 4, 8):
        for t in (0.25, 1, 4, 16, 64):
            res = transform.sup_transform(phi2, r, t, upper=U2, lower=L2)
            worst = max(worst, abs(res.value / (r * r / (4 * t)) - 1))
    record("transform_closed_form_rel_err", worst, 1e-6, worst < 1e-6)

    # scale construction against the closed form
    cons = _construction(cfg)
    consA = construct.build_phi(scalefn.power(2), scalefn.power(1))
    grid = scalefn.geometric_grid(1e-3, 1e3, 8)
    err = float(np.max(np.abs(consA.Phi(grid) / (0.5 * grid) - 1)))
    record("scale_construction_rel_err", err, 1e-5, err < 1e-5)

    # Laplace exponent closed form and sandwich
    errl = 0.0
    low_margin = math.inf
    for lam in np.geomspace(1e-3, 1e3, 7):
        got = construct.laplace_exponent(scalefn.power(2), scalefn.power(1), float(lam))
        errl = max(errl, abs(got / (2 * math.sqrt(math.pi) * math.sqrt(lam)) - 1))
        low_margin = min(low_margin, got * 2 * consA.Phi(math.sqrt(1 / lam)))
    record("laplace_exponent_rel_err", errl, 1e-4, errl < 1e-4)
    record("laplace_lower_sandwich_margin", low_margin, 1.0, low_margin >= 1.0)

    # gasket geometry at small level
    gg = fractal.build_gasket(5)
    record("gasket_vertex_count", gg.n_vertices, (3**6 + 3) // 2, gg.n_vertices == (3**6 + 3) // 2)
    e1 = montecarlo.mean_hitting_time(gg, gg.vertex_at((0, 0)), [gg.vertex_at((32, 0)), gg.vertex_at((0, 32))])
    g4 = fractal.build_gasket(4)
    e0 = montecarlo.mean_hitting_time(g4, g4.vertex_at((0, 0)), [g4.vertex_at((16, 0)), g4.vertex_at((0, 16))])
    ratio = e1 / e0
    record("gasket_exit_time_ratio", ratio, 5.0, abs(ratio / 5.0 - 1) < 0.02)

    # normalizer identities
    h = envelope.lil_h(scalefn.power(2), 1e4)
    exact = math.sqrt(1e4 * math.log(math.log(1e4)))
    record("lil_h_identity_rel_err", abs(h / exact - 1), 1e-12, abs(h / exact - 1) < 1e-12)

    # simulation + envelope sandwich at the configured size
    g, x0, cons2, kers = _simulate(cfg, args.threads)
    vol = envelope.VolumeOracle.from_graph(g)
    spec = _envelope_spec(cfg, cons2)
    C, _rows = montecarlo.envelope_sandwich_test(kers, spec, vol, r_max=cfg.r_max)
    record("envelope_sandwich_constant", C, cfg.c_max, C <= cfg.c_max)
    defect = max(k.defect / k.n_walkers for k in kers)
    record("max_defect_fraction", defect, 0.01, defect < 0.01)

    rows = [(name, _fmt(v), _fmt(thr), "pass" if ok else "FAIL") for name, v, thr, ok in checks]
    path = em.write_table("verify.csv", ["check", "value", "threshold", "status"], rows)

    # kernel table for byte-level determinism comparisons
    ker_rows = []
    for ker in kers:
        r, cnt, mass, p, hw = ker.by_distance()
        for j in range(r.size):
            if cfg.r_max and r[j] > cfg.r_max:
                continue
            ker_rows.append((ker.t, float(r[j]), int(cnt[j]), p[j]))
    em.write_table("verify_kernel.csv", ["t", "r", "count", "p_hat"], ker_rows)

    n_fail = sum(1 for *_x, ok in checks if not ok)
    for name, v, thr, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {_fmt(v)} (threshold {_fmt(thr)})")
    print(f"wrote {path}")
    return 0 if n_fail == 0 else 1


def cmd_bench(cfg: ExperimentConfig, em: Emitter, args) -> int:
    res = benchmark()
    rows = [(k, v) for k, v in res["steps_per_second"].items()]
    rows.append(("outputs_identical", res["outputs_identical"]))
    path = em.write_table("bench.csv", ["backend", "steps_per_second"], rows)
    print(f"available backends: {available_backends()}")
    for k, v in res["steps_per_second"].items():
        print(f"{k}: {v:.3g} walker-steps/s")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "phi": cmd_phi,
    "transform": cmd_transform,
    "check-scaling": cmd_check_scaling,
    "envelope": cmd_envelope,
    "geometry": cmd_geometry,
    "simulate": cmd_simulate,
    "lil": cmd_lil,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="jumplab", description=__doc__)
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", type=str, default=None, help="experiment INI (default: bundled line config)")
    ap.add_argument("--out", type=str, default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for simulation blocks")
    args = ap.parse_args(argv)

    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    em = Emitter(Path(args.out), cfg.digest())
    (Path(args.out) / "resolved.ini").write_text(cfg.to_ini())
    try:
        return _COMMANDS[args.command](cfg, em, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except JumplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
