"""Command-line experiment runner.

Usage: ``telapsed <subcommand> --config cfg.json [--out DIR] [--seed N]``.
Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import delay, diagnostics, extensions, mapdyn, oracle, solver
from .config import ExperimentConfig, load_config, schema
from .errors import NumericalError
from .steadystate import check_integrability, fixed_point_phi, stationary_density

OUT_ENV = "TELAPSED_OUT"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

SUBCOMMAND_MODES = {
    "steady": ("steady",),
    "simulate": ("autonomous", "linear"),
    "delay": ("delayed",),
    "map": ("map",),
    "contract": ("contract",),
    "distr": ("distr",),
    "system": ("system",),
    "oracle": ("oracle",),
}

log = logging.getLogger("telapsed")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ output
def write_csv(path: Path, header: list[str], columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="\n") as fh:
        np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ------------------------------------------------------------------ runners
class Context:
    def __init__(self, cfg: ExperimentConfig, base: Path):
        self.cfg = cfg
        self.base = base
        self.model = cfg.model.build(base)
        self.grid = cfg.grid.build(self.model)

    def n0(self, spec=None):
        return (spec or self.cfg.initial).build(self.model, self.grid, self.base)

    def steady(self):
        return fixed_point_phi(self.model, self.grid)

    def kernel(self):
        k = self.cfg.kernel
        if k is None or k.family == "uniform":
            w = 1.0 if k is None else k.width
            return extensions.BirthKernel.from_function(self.grid, lambda x: (x < w).astype(float))
        if k.family == "delta0":
            return extensions.BirthKernel.delta0(self.grid)
        if not k.path:
            raise ConfigError("kernel.path is required for family=csv")
        p = Path(k.path)
        return extensions.BirthKernel.from_csv(p if p.is_absolute() else self.base / p, self.grid)

    def need_inhibitory(self):
        if not self.model.inhibitory:
            raise ConfigError(f"mode {self.cfg.run.mode} requires an inhibitory model")


def run_steady(ctx: Context, out: Path) -> dict:
    ctx.need_inhibitory()
    ss = ctx.steady()
    write_csv(out / "steady_density.csv", ["x", "n"], [ctx.grid.nodes, ss.density.values])
    return {"I_bar": ss.I_bar, "residual": ss.residual, "tail_bound": ss.tail_bound,
            "phi_prime_at_fp": mapdyn.phi_prime(ctx.model, ss.I_bar, ctx.grid),
            "mass": ss.density.mass,
            "integrability_ok": check_integrability(ctx.model, ctx.grid).ok}


def _trace_outputs(out: Path, grid, final, tr) -> None:
    dist = tr.dist if tr.dist.size else np.full(tr.t.size, np.nan)
    write_csv(out / "trace.csv", ["t", "I", "mass", "dist_L1"], [tr.t, tr.I, tr.mass, dist])
    write_csv(out / "final_density.csv", ["x", "n"], [grid.nodes, final.values])


def _rate_summary(tr) -> dict:
    try:
        return {"decay_rate": diagnostics.decay_rate(tr.t, tr.dist)}
    except (ValueError, NumericalError) as exc:
        return {"decay_rate": None, "decay_rate_note": str(exc)}


def run_simulate(ctx: Context, out: Path) -> dict:
    run = ctx.cfg.run
    n0 = ctx.n0()
    if run.mode == "linear":
        spec = run.input
        ref = ctx.steady() if ctx.model.inhibitory else None
        if spec.constant is not None:
            J = spec.constant
        else:
            if ref is None or spec.alpha is None:
                raise ConfigError("run.input needs constant, or alpha with an inhibitory model")
            I_bar, c, a = ref.I_bar, spec.c, spec.alpha
            J = lambda t: I_bar + c * np.exp(-a * t)  # noqa: E731
        final, tr = solver.run_linear(ctx.model, n0, J, run.T, ref.density if ref else None)
        summary = {"I_bar": ref.I_bar if ref else None}
    else:
        ctx.need_inhibitory()
        ss = ctx.steady()
        final, tr = solver.run_autonomous(ctx.model, n0, run.T, ss.density, run.renormalize)
        summary = {"I_bar": ss.I_bar}
    _trace_outputs(out, ctx.grid, final, tr)
    summary.update(_rate_summary(tr) if tr.dist.size else {})
    summary.update({"final_I": tr.I[-1], "max_mass_drift": float(np.abs(tr.mass - tr.mass[0]).max())})
    return summary


def _resolve_I_ini(ctx: Context, value):
    if isinstance(value, (int, float)):
        return float(value)
    if value == "I_bar":
        return ctx.steady().I_bar
    pair = mapdyn.period2_points(ctx.model, ctx.grid)
    if pair is None:
        raise ConfigError(f"run.I_ini={value} requested but the map has no period-2 pair")
    return pair[0] if value == "I_minus" else pair[1]


def run_delay(ctx: Context, out: Path) -> dict:
    run = ctx.cfg.run
    I_ini = _resolve_I_ini(ctx, run.I_ini)
    if not 0 <= I_ini <= ctx.model.rM:
        raise ConfigError("run.I_ini must lie in [0, rM]")
    prof = delay.limit_profile(ctx.model, I_ini, run.intervals, ctx.grid)
    T = max(run.T, run.intervals * run.d)
    final, tr = delay.run_delayed(ctx.model, ctx.n0(), I_ini, run.d, T, profile=prof)
    I_inf = prof.activity(tr.tau)
    write_csv(out / "delay_trace.csv", ["tau", "I_d", "I_inf"], [tr.tau, tr.I, I_inf])
    err = delay.cesaro_error(tr, prof, run.intervals)
    summary = {"I_ini": I_ini, "d": tr.d, "iterates": prof.iterates,
               "cesaro_activity": err.activity, "cesaro_density": err.density}
    if ctx.model.r0 > 0:
        alpha = ctx.model.r0 / 2
        bI, bn = delay.cesaro_bound(ctx.model.gamma_bar, ctx.model.rM, ctx.model.r0, alpha,
                                    run.intervals, tr.d)
        wk = delay.weak_nl_check(ctx.model, tr.d)
        summary.update({"bound_activity": bI, "bound_density": bn, "omega": wk.omega,
                        "weak_nonlinearity": wk.converges, "predicted_rate": wk.rate})
    return summary


def run_map(ctx: Context, out: Path) -> dict:
    ctx.need_inhibitory()
    an = mapdyn.classify(ctx.model, ctx.grid)
    tab = mapdyn.map_table(ctx.model, ctx.cfg.run.map_points, ctx.grid)
    write_csv(out / "map.csv", ["I", "phi", "psi"], tab.T)
    fixed = [an.I_bar] + (list(an.period2) if an.period2 else [])
    return {**an.to_dict(), "psi_fixed_points": sorted(fixed)}


def run_contract(ctx: Context, out: Path) -> dict:
    ctx.need_inhibitory()
    rep = diagnostics.contraction_test(ctx.model, ctx.n0(), ctx.n0(ctx.cfg.initial_b), ctx.cfg.run.T)
    rows = rep.rows()
    write_csv(out / "contract.csv", ["t", "dist", "G", "defect"], rows.T)
    slack = 1e-6 + 2 * ctx.grid.dx
    return {"max_violation": rep.max_violation, "violations": rep.violations(slack),
            "slack": slack, "max_defect": float(rep.defects.max(initial=0.0)),
            "min_G": float(rep.G_values.min())}


def run_distr(ctx: Context, out: Path) -> dict:
    ctx.need_inhibitory()
    B = ctx.kernel()
    I_bar, ref = extensions.distributed_stationary(ctx.model, B)
    final, tr = extensions.run_distributed(ctx.model, B, ctx.n0(), ctx.cfg.run.T, ref)
    _trace_outputs(out, ctx.grid, final, tr)
    return {"I_bar": I_bar, "final_I": tr.I[-1], **_rate_summary(tr)}


def run_system(ctx: Context, out: Path) -> dict:
    ctx.need_inhibitory()
    B = ctx.kernel()
    n2 = ctx.n0(ctx.cfg.initial_b) if ctx.cfg.initial_b else ctx.n0()
    st = extensions.SystemState.start(ctx.model, ctx.model, B, B, ctx.n0(), n2)
    final, rows = extensions.run_system(st, ctx.cfg.run.T)
    write_csv(out / "system.csv", ["t", "I1", "I2", "mass1", "mass2"], rows.T)
    return {"final_I1": final.I1, "final_I2": final.I2, "final_mass_total": sum(final.masses)}


def run_oracle(ctx: Context, out: Path) -> dict:
    ctx.need_inhibitory()
    run = ctx.cfg.run
    ss = ctx.steady()
    dt = run.dt or ctx.grid.dx
    ens = oracle.ParticleEnsemble.sample(ctx.n0(), run.particles, ctx.cfg.seed)
    res = oracle.mc_run(ctx.model, ens, run.T, dt)
    write_csv(out / "oracle_trace.csv", ["t", "I"], [res.t, res.I])
    edges = np.arange(0.0, min(ctx.grid.x_max, 20.0), 0.25)
    h_mc = oracle.histogram(res.ensemble.ages, edges)
    h_pde = oracle.binned_masses(ss.density, edges)
    width = np.append(np.diff(edges), np.inf)
    write_csv(out / "histogram.csv", ["x", "density_mc", "density_pde"], [edges, h_mc / width, h_pde / width])
    sel = res.t >= min(run.burn_in, 0.5 * run.T)
    mean, se = oracle.batch_means(res.I[sel])
    return {"I_bar": ss.I_bar, "I_mc_mean": mean, "I_mc_se": se,
            "z_score": (mean - ss.I_bar) / se if se > 0 else None,
            "histogram_l1": float(np.abs(h_mc - h_pde).sum()), "particles": run.particles}


RUNNERS = {
    "steady": run_steady, "autonomous": run_simulate, "linear": run_simulate,
    "delayed": run_delay, "map": run_map, "contract": run_contract,
    "distr": run_distr, "system": run_system, "oracle": run_oracle,
}


# ------------------------------------------------------------------ driver
def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "telapsed-out"))


def run_experiment(config_path: str | Path, subcommand: str | None = None, out: str | None = None,
                   seed: int | None = None, overrides: dict | None = None) -> tuple[int, Path | None]:
    """Validate, run and write artifacts. Returns (exit status, output directory)."""
    config_path = Path(config_path)
    ov = dict(overrides or {})
    ov["seed"] = seed
    try:
        cfg = load_config(config_path, **ov)
        modes = SUBCOMMAND_MODES.get(subcommand) if subcommand else None
        if modes is not None:
            if cfg.run.mode is None:
                cfg = load_config(config_path, **ov, **{"run.mode": modes[0]})
            elif cfg.run.mode not in modes:
                raise ConfigError(f"run.mode={cfg.run.mode} does not match subcommand {subcommand}")
        if cfg.run.mode is None:
            raise ConfigError("run.mode is required")
        ctx = Context(cfg, config_path.parent)
    except ValidationError as exc:
        print(f"invalid configuration {config_path}:\n{exc}", file=sys.stderr)
        return EXIT_INVALID, None
    except (ValueError, OSError) as exc:
        print(f"invalid configuration {config_path}: {exc}", file=sys.stderr)
        return EXIT_INVALID, None

    out_dir = Path(out or cfg.out or default_out_root() / config_path.stem)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        summary = RUNNERS[cfg.run.mode](ctx, out_dir)
    except NumericalError as exc:
        print(f"numerical failure in {cfg.run.mode}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL, out_dir
    except ConfigError as exc:
        print(f"invalid configuration {config_path}: {exc}", file=sys.stderr)
        return EXIT_INVALID, out_dir
    summary = {"mode": cfg.run.mode, "seed": cfg.seed, **summary}
    write_json(out_dir / "summary.json", summary)
    files = sorted(p for p in out_dir.iterdir() if p.is_file() and p.name != "manifest.json")
    write_json(out_dir / "manifest.json", {
        "config": str(config_path), "config_sha256": cfg.digest(),
        "files": {p.name: _sha(p) for p in files},
    })
    return EXIT_OK, out_dir


def _sweep_one(args):
    path, out_root, seed = args
    code, _ = run_experiment(path, None, str(Path(out_root) / Path(path).stem), seed)
    return str(path), code


def run_sweep(paths: list[str], out_root: str | None, seed: int | None, workers: int | None) -> int:
    root = out_root or str(default_out_root())
    jobs = [(p, root, seed) for p in paths]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_sweep_one, jobs))
    for path, code in results:
        print(f"{path}: exit {code}")
    return max((c for _, c in results), default=EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="telapsed", description="Time-elapsed neuron population lab")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment JSON file")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<config stem>)")
    common.add_argument("--seed", type=int)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("steady", "simulate", "map", "contract", "distr", "system"):
        sub.add_parser(name, parents=[common])
    d = sub.add_parser("delay", parents=[common])
    d.add_argument("--delay", type=float)
    d.add_argument("--intervals", type=int)
    d.add_argument("--i-ini", help="number, or I_minus / I_plus / I_bar")
    o = sub.add_parser("oracle", parents=[common])
    o.add_argument("--particles", type=int)
    s = sub.add_parser("sweep")
    s.add_argument("--config", required=True, nargs="+")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def _i_ini(text):
    if text is None:
        return None
    try:
        return float(text)
    except ValueError:
        return text


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(schema(), indent=2))
        return EXIT_OK
    if args.command == "sweep":
        return run_sweep(args.config, args.out, args.seed, args.workers)
    overrides = {}
    if args.command == "delay":
        overrides = {"run.d": args.delay, "run.intervals": args.intervals, "run.I_ini": _i_ini(args.i_ini)}
    elif args.command == "oracle":
        overrides = {"run.particles": args.particles}
    code, out = run_experiment(args.config, args.command, args.out, args.seed, overrides)
    if code == EXIT_OK:
        print(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
