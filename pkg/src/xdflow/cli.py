"""Configuration parsing, experiment orchestration, and CSV emission.

Config files are line-oriented ``key = value`` pairs under ``[section]``
headers (sections organize, keys are globally unique; unknown keys and
sections are hard errors).  Subcommands: ``solve``, ``convergence``,
``list-models``, ``check``.  The environment variable ``XDFLOW_THREADS``
caps the number of worker processes a convergence study may use.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics, models, stepping
from .mesh import Field, build_mesh_1d, build_mesh_2d, project_initial
from .quadrature import MAX_DEGREE, gauss_lobatto_rule
from .scheme1d import FluxChoice

SECTIONS = ("run", "model", "flux", "stepping", "output")

# parameters each model accepts as config overrides
MODEL_PARAM_KEYS = {
    "heat": (),
    "skt": (),
    "tumor": ("beta", "gamma"),
    "surfactant": ("g",),
    "seawater": ("mu_ratio",),
    "skt2d_manufactured": (),
}


@dataclass
class RunConfig:
    model: str
    k: int
    t_end: float
    mu_diff: float
    domain: tuple
    bc: str
    dimension: int = 1
    n: int = 0
    nx: int = 0
    ny: int = 0
    flux: str = "lax_friedrichs"
    lf_multiplier: float = 1.0
    rk_order: object = "auto"
    limiter: bool = True
    theta_safety: float = 1.0
    pointwise_limiter: bool = False
    max_halvings: int = 40
    output_dir: str = "out"
    sample_dt: float = 0.0
    snapshot_times: tuple = ()
    seed: int = 0
    model_params: dict = dc_field(default_factory=dict)


class ConfigError(ValueError):
    pass


def _parse_bool(raw, key, line):
    low = raw.lower()
    if low in ("true", "on", "yes", "1"):
        return True
    if low in ("false", "off", "no", "0"):
        return False
    raise ConfigError(f"line {line}: key {key!r} expects a boolean, got {raw!r}")


def _parse_float(raw, key, line):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {line}: key {key!r} expects a number, got {raw!r}") from None


def _parse_int(raw, key, line):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"line {line}: key {key!r} expects an integer, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a config; unknown keys are hard errors."""
    values = {}
    lines_of = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(
                    f"line {lineno}: unknown section [{section}]; expected one of "
                    f"{', '.join(SECTIONS)}")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw
        lines_of[key] = lineno
    return _validate(values, lines_of)


def _validate(values: dict, lines_of: dict) -> RunConfig:
    def line(key):
        return lines_of.get(key, 0)

    known_scalar = {
        "model", "dimension", "k", "n", "nx", "ny", "domain", "bc", "t_end",
        "flux", "lf_multiplier", "mu_diff", "rk_order", "limiter",
        "theta_safety", "pointwise_limiter", "max_halvings", "output_dir",
        "sample_dt", "snapshot_times", "seed",
    }
    all_param_keys = {p for ps in MODEL_PARAM_KEYS.values() for p in ps}
    for key in values:
        if key not in known_scalar and key not in all_param_keys:
            raise ConfigError(f"line {line(key)}: unknown key {key!r}")

    for required in ("model", "k", "t_end", "mu_diff", "domain", "bc"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")

    model = values["model"]
    if model not in models.MODEL_FACTORIES:
        raise ConfigError(
            f"line {line('model')}: unknown model {model!r}; available: "
            f"{', '.join(models.list_models())}")

    dimension = _parse_int(values.get("dimension", "1"), "dimension", line("dimension"))
    if dimension not in (1, 2):
        raise ConfigError(f"line {line('dimension')}: dimension must be 1 or 2")

    k = _parse_int(values["k"], "k", line("k"))
    if not 1 <= k <= MAX_DEGREE:
        raise ConfigError(
            f"line {line('k')}: k={k} outside supported range 1..{MAX_DEGREE}")

    domain = tuple(_parse_float(p, "domain", line("domain"))
                   for p in values["domain"].split(","))
    if len(domain) != 2 * dimension:
        raise ConfigError(
            f"line {line('domain')}: domain needs {2 * dimension} comma-separated "
            f"numbers for dimension {dimension}, got {len(domain)}")

    n = _parse_int(values.get("n", "0"), "n", line("n"))
    nx = _parse_int(values.get("nx", "0"), "nx", line("nx"))
    ny = _parse_int(values.get("ny", "0"), "ny", line("ny"))
    if dimension == 1:
        if n < 2:
            raise ConfigError(f"line {line('n')}: 1D runs need n >= 2 cells")
    else:
        nx = nx or n
        ny = ny or n
        n = 0   # canonical 2D form carries nx/ny only
        if nx < 1 or ny < 1:
            raise ConfigError("2D runs need n (or nx and ny) >= 1")

    bc = values["bc"]
    if bc not in ("periodic", "zero_flux"):
        raise ConfigError(f"line {line('bc')}: bc must be periodic or zero_flux")

    flux = values.get("flux", "lax_friedrichs")
    if flux not in ("lax_friedrichs", "alternating"):
        raise ConfigError(
            f"line {line('flux')}: flux must be lax_friedrichs or alternating")

    lf_multiplier = _parse_float(values.get("lf_multiplier", "1.0"),
                                 "lf_multiplier", line("lf_multiplier"))
    if lf_multiplier < 0 or not np.isfinite(lf_multiplier):
        raise ConfigError(f"line {line('lf_multiplier')}: lf_multiplier must be >= 0")

    mu_diff = _parse_float(values["mu_diff"], "mu_diff", line("mu_diff"))
    if mu_diff <= 0:
        raise ConfigError(f"line {line('mu_diff')}: mu_diff must be positive")

    t_end = _parse_float(values["t_end"], "t_end", line("t_end"))
    if t_end < 0:
        raise ConfigError(f"line {line('t_end')}: t_end must be >= 0")

    rk_raw = values.get("rk_order", "auto")
    rk_order = rk_raw if rk_raw == "auto" else _parse_int(rk_raw, "rk_order", line("rk_order"))
    if rk_order not in ("auto", 1, 2, 3):
        raise ConfigError(f"line {line('rk_order')}: rk_order must be auto, 1, 2 or 3")

    theta_safety = _parse_float(values.get("theta_safety", "1.0"),
                                "theta_safety", line("theta_safety"))
    if not 0.0 < theta_safety <= 1.0:
        raise ConfigError(f"line {line('theta_safety')}: theta_safety must lie in (0, 1]")

    max_halvings = _parse_int(values.get("max_halvings", "40"),
                              "max_halvings", line("max_halvings"))
    if max_halvings < 0:
        raise ConfigError(f"line {line('max_halvings')}: max_halvings must be >= 0")

    sample_dt = _parse_float(values.get("sample_dt", "0"), "sample_dt", line("sample_dt"))
    if sample_dt < 0:
        raise ConfigError(f"line {line('sample_dt')}: sample_dt must be >= 0")

    snap_raw = values.get("snapshot_times", "").strip()
    snapshot_times = tuple(
        _parse_float(p, "snapshot_times", line("snapshot_times"))
        for p in snap_raw.split(",") if p.strip()) if snap_raw else ()

    params = {}
    for key in all_param_keys:
        if key in values:
            if key not in MODEL_PARAM_KEYS[model]:
                raise ConfigError(
                    f"line {line(key)}: parameter {key!r} not accepted by model "
                    f"{model!r}")
            params[key] = _parse_float(values[key], key, line(key))

    return RunConfig(
        model=model, dimension=dimension, k=k, n=n, nx=nx, ny=ny,
        domain=domain, bc=bc, t_end=t_end, flux=flux,
        lf_multiplier=lf_multiplier, mu_diff=mu_diff, rk_order=rk_order,
        limiter=_parse_bool(values.get("limiter", "true"), "limiter", line("limiter")),
        theta_safety=theta_safety,
        pointwise_limiter=_parse_bool(values.get("pointwise_limiter", "false"),
                                      "pointwise_limiter", line("pointwise_limiter")),
        max_halvings=max_halvings,
        output_dir=values.get("output_dir", "out"),
        sample_dt=sample_dt, snapshot_times=snapshot_times,
        seed=_parse_int(values.get("seed", "0"), "seed", line("seed")),
        model_params=params,
    )


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) == cfg."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    out = ["[run]"]
    out.append(f"model = {cfg.model}")
    out.append(f"dimension = {cfg.dimension}")
    out.append(f"k = {cfg.k}")
    if cfg.dimension == 1:
        out.append(f"n = {cfg.n}")
    else:
        out.append(f"nx = {cfg.nx}")
        out.append(f"ny = {cfg.ny}")
    out.append(f"domain = {','.join(repr(float(v)) for v in cfg.domain)}")
    out.append(f"bc = {cfg.bc}")
    out.append(f"t_end = {fmt(cfg.t_end)}")
    out.append(f"seed = {cfg.seed}")
    if cfg.model_params:
        out.append("")
        out.append("[model]")
        for key in sorted(cfg.model_params):
            out.append(f"{key} = {fmt(cfg.model_params[key])}")
    out += ["", "[flux]", f"flux = {cfg.flux}",
            f"lf_multiplier = {fmt(cfg.lf_multiplier)}"]
    out += ["", "[stepping]", f"mu_diff = {fmt(cfg.mu_diff)}",
            f"rk_order = {cfg.rk_order}",
            f"limiter = {fmt(cfg.limiter)}",
            f"theta_safety = {fmt(cfg.theta_safety)}",
            f"pointwise_limiter = {fmt(cfg.pointwise_limiter)}",
            f"max_halvings = {cfg.max_halvings}"]
    out += ["", "[output]", f"output_dir = {cfg.output_dir}",
            f"sample_dt = {fmt(cfg.sample_dt)}"]
    if cfg.snapshot_times:
        out.append(f"snapshot_times = {','.join(repr(float(t)) for t in cfg.snapshot_times)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# run assembly
# ---------------------------------------------------------------------------

@dataclass
class PreparedRun:
    rule: object
    mesh: object
    model: object
    flux: FluxChoice
    step: stepping.StepConfig
    field0: Field


def prepare(cfg: RunConfig) -> PreparedRun:
    rule = gauss_lobatto_rule(cfg.k)
    model = models.get_model(cfg.model, **cfg.model_params)
    if cfg.dimension == 1:
        mesh = build_mesh_1d(cfg.domain[0], cfg.domain[1], cfg.n, rule, cfg.bc)
    else:
        mesh = build_mesh_2d(cfg.domain, cfg.nx, cfg.ny, rule, cfg.bc)
    flux = FluxChoice(kind=cfg.flux, lf_multiplier=cfg.lf_multiplier)
    step = stepping.StepConfig(
        mu_diff=cfg.mu_diff, rk_order=cfg.rk_order, limiter_on=cfg.limiter,
        theta_safety=cfg.theta_safety, pointwise_limiter=cfg.pointwise_limiter,
        max_halvings=cfg.max_halvings, sample_dt=cfg.sample_dt,
    )
    init = model.initial.get(cfg.dimension)
    if init is None:
        raise ConfigError(
            f"model {cfg.model!r} has no built-in initial data for dimension "
            f"{cfg.dimension}")
    return PreparedRun(rule=rule, mesh=mesh, model=model, flux=flux, step=step,
                       field0=project_initial(mesh, rule, init))


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_snapshot(path, field: Field, mesh, model) -> None:
    """Nodal snapshot: cell,node,x[,y],rho_1..rho_m plus model extras."""
    vals = field.values
    m = vals.shape[0]
    extra_names, extra_cols = [], []
    if model.snapshot_extra is not None:
        extra_names, extra_cols = model.snapshot_extra(vals, mesh.node_arrays())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if mesh.dim == 1:
            header = ["cell", "node", "x"] + [f"rho_{l+1}" for l in range(m)]
            fh.write(",".join(header + extra_names) + "\n")
            for i in range(mesh.n_cells):
                for r in range(mesh.nodes.shape[1]):
                    row = [str(i), str(r), _fmt(mesh.nodes[i, r])]
                    row += [_fmt(vals[l, i, r]) for l in range(m)]
                    row += [_fmt(c[i, r]) for c in extra_cols]
                    fh.write(",".join(row) + "\n")
        else:
            header = ["cell", "node", "x", "y"] + [f"rho_{l+1}" for l in range(m)]
            fh.write(",".join(header + extra_names) + "\n")
            p = mesh.xnodes.shape[1]
            for i in range(mesh.nx):
                for j in range(mesh.ny):
                    cell = i * mesh.ny + j
                    for s in range(p):
                        for r in range(p):
                            row = [str(cell), str(s * p + r),
                                   _fmt(mesh.xnodes[i, r]), _fmt(mesh.ynodes[j, s])]
                            row += [_fmt(vals[l, i, j, s, r]) for l in range(m)]
                            row += [_fmt(c[i, j, s, r]) for c in extra_cols]
                            fh.write(",".join(row) + "\n")


def write_trace(path, report: stepping.RunReport, m: int) -> None:
    """Entropy/mass trace: t,E_h,mass_1..mass_m,halvings (cumulative)."""
    events = sorted(report.halving_events)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,E_h," + ",".join(f"mass_{l+1}" for l in range(m)) + ",halvings\n")
        done = 0
        idx = 0
        for t, e, mass in zip(report.times, report.entropy, report.mass):
            while idx < len(events) and events[idx][0] <= t:
                done += events[idx][1]
                idx += 1
            fh.write(",".join([_fmt(t), _fmt(e)] + [_fmt(v) for v in mass]
                              + [str(done)]) + "\n")


def write_error_table(path, rows) -> None:
    """Rows of (N, l1, o1, l2, o2, linf, oinf); missing orders written as nan."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("N,L1,order1,L2,order2,Linf,orderinf\n")
        for row in rows:
            n, l1, o1, l2, o2, linf, oinf = row
            fh.write(",".join([str(n)] + [_fmt(v) for v in (l1, o1, l2, o2, linf, oinf)])
                     + "\n")


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def run_solve(cfg: RunConfig, quiet: bool = False) -> int:
    """Run one experiment, writing snapshot(s) and the entropy/mass trace."""
    run = prepare(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    state = run.field0
    merged = stepping.RunReport()
    targets = [t for t in sorted(cfg.snapshot_times) if 0.0 < t <= cfg.t_end]
    if cfg.t_end > 0.0 and (not targets or targets[-1] < cfg.t_end):
        targets.append(cfg.t_end)

    write_snapshot(outdir / "snapshot_t0.csv", state, run.mesh, run.model)
    t_now = 0.0
    try:
        for t_target in targets:
            state, rep = stepping.integrate(
                state, t_target, run.step, run.mesh, run.rule, run.model,
                run.flux, t0=t_now)
            _merge_report(merged, rep)
            t_now = t_target
            write_snapshot(outdir / f"snapshot_t{t_target:g}.csv", state,
                           run.mesh, run.model)
    except stepping.SolverBreakdown as exc:
        write_trace(outdir / "trace.csv", merged, run.model.m)
        print(f"xdflow: run aborted: {exc}", file=sys.stderr)
        return 2
    if not merged.times:
        _merge_report(merged, _single_sample(state, run))
    write_trace(outdir / "trace.csv", merged, run.model.m)
    if not quiet:
        print(f"completed t={t_now:g}: {merged.accepted_steps} steps, "
              f"{merged.total_halvings} halvings, "
              f"{merged.limiter_activations} limiter activations -> {outdir}")
    return 0


def _single_sample(state: Field, run: PreparedRun) -> stepping.RunReport:
    rep = stepping.RunReport()
    rep.times.append(0.0)
    rep.entropy.append(diagnostics.discrete_entropy(state, 0.0, run.mesh, run.rule, run.model))
    rep.mass.append(diagnostics.component_mass(state, run.mesh, run.rule))
    return rep


def _merge_report(into: stepping.RunReport, rep: stepping.RunReport) -> None:
    skip = 1 if into.times and rep.times and rep.times[0] <= into.times[-1] else 0
    into.times += rep.times[skip:]
    into.entropy += rep.entropy[skip:]
    into.mass += rep.mass[skip:]
    into.halving_events += rep.halving_events
    into.accepted_steps += rep.accepted_steps
    into.total_halvings += rep.total_halvings
    into.limiter_activations += rep.limiter_activations


def _final_state(cfg: RunConfig) -> Field:
    run = prepare(cfg)
    state, _ = stepping.integrate(run.field0, cfg.t_end, run.step, run.mesh,
                                  run.rule, run.model, run.flux)
    return state


def _level_worker(cfg_text: str, n: int):
    cfg = parse_config(cfg_text)
    cfg = dataclasses.replace(cfg, n=n, nx=n, ny=n)
    return n, _final_state(cfg).values


def run_convergence(cfg: RunConfig, levels, quiet: bool = False):
    """Refinement study over ``levels`` (ascending cell counts).

    With an exact solution for the configured dimension the error is
    measured against it; otherwise the run at the next level serves as the
    reference (1D only).  Components are aggregated as one error vector
    (see aggregate_norms).  Returns the table rows and writes ``table.csv``.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels must be at least two ascending cell counts")

    run0 = prepare(dataclasses.replace(cfg, n=levels[0], nx=levels[0], ny=levels[0]))
    exact_mode = (run0.model.exact is not None
                  and run0.model.exact_dim == cfg.dimension)
    if not exact_mode and cfg.dimension != 1:
        raise ConfigError("self-convergence references are supported in 1D only")

    workers = int(os.environ.get("XDFLOW_THREADS", "1"))
    cfg_text = serialize_config(cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            solutions = dict(pool.map(_level_worker, [cfg_text] * len(levels), levels))
    else:
        solutions = dict(_level_worker(cfg_text, n) for n in levels)

    length = cfg.domain[1] - cfg.domain[0]
    err_levels = levels if exact_mode else levels[:-1]
    hs = [length / n for n in err_levels]
    l1s, l2s, linfs = [], [], []
    for idx, n in enumerate(err_levels):
        sub = dataclasses.replace(cfg, n=n, nx=n, ny=n)
        run = prepare(sub)
        field = Field(solutions[n])
        if exact_mode:
            triples = diagnostics.error_norms(field, run.model.exact, cfg.t_end,
                                              run.mesh, run.rule)
        else:
            n_fine = levels[idx + 1]
            fine_run = prepare(dataclasses.replace(cfg, n=n_fine, nx=n_fine, ny=n_fine))
            triples = diagnostics.self_convergence_errors(
                field, run.mesh, Field(solutions[n_fine]), fine_run.mesh, run.rule)
        agg = diagnostics.aggregate_norms(triples)
        l1s.append(agg.l1)
        l2s.append(agg.l2)
        linfs.append(agg.linf)

    def orders(errs):
        if len(errs) < 2:
            return [np.nan] * len(errs)
        return [np.nan] + list(diagnostics.observed_order(errs, hs))

    o1, o2, oinf = orders(l1s), orders(l2s), orders(linfs)
    rows = [(n, l1s[i], o1[i], l2s[i], o2[i], linfs[i], oinf[i])
            for i, n in enumerate(err_levels)]

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_error_table(outdir / "table.csv", rows)
    if not quiet:
        print(f"{'N':>6} {'L1':>12} {'ord':>6} {'L2':>12} {'ord':>6} "
              f"{'Linf':>12} {'ord':>6}")
        for n, l1, a, l2, b, li, c in rows:
            print(f"{n:>6} {l1:>12.4e} {a:>6.2f} {l2:>12.4e} {b:>6.2f} "
                  f"{li:>12.4e} {c:>6.2f}")
    return rows


# ---------------------------------------------------------------------------
# presets and entry point
# ---------------------------------------------------------------------------

def preset_path(name: str):
    return resources.files("xdflow.presets") / f"{name}.cfg"


def list_presets():
    root = resources.files("xdflow.presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_config(ref: str) -> RunConfig:
    """Load a config from a path, or from the shipped presets by bare name."""
    path = Path(ref)
    if path.exists():
        return parse_config(path.read_text(encoding="utf-8"))
    candidate = preset_path(ref)
    if candidate.is_file():
        return parse_config(candidate.read_text(encoding="utf-8"))
    raise ConfigError(f"no config file {ref!r} and no preset with that name; "
                      f"presets: {', '.join(list_presets())}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="xdflow",
        description="Entropy-stable positivity-preserving DG solver for "
                    "cross-diffusion gradient flows")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one experiment, write CSVs")
    p_solve.add_argument("config", help="config file path or preset name")
    p_solve.add_argument("--output", help="override output directory")

    p_conv = sub.add_parser("convergence", help="refinement study")
    p_conv.add_argument("config", help="config file path or preset name")
    p_conv.add_argument("--levels", required=True,
                        help="comma-separated ascending cell counts")
    p_conv.add_argument("--output", help="override output directory")

    sub.add_parser("list-models", help="list built-in models and presets")

    p_check = sub.add_parser("check", help="run the property suites")
    p_check.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            cfg = load_config(args.config)
            if args.output:
                cfg = dataclasses.replace(cfg, output_dir=args.output)
            return run_solve(cfg)
        if args.command == "convergence":
            cfg = load_config(args.config)
            if args.output:
                cfg = dataclasses.replace(cfg, output_dir=args.output)
            levels = [int(v) for v in args.levels.split(",") if v.strip()]
            run_convergence(cfg, levels)
            return 0
        if args.command == "list-models":
            print("models:")
            for name in models.list_models():
                params = MODEL_PARAM_KEYS[name]
                suffix = f"  (parameters: {', '.join(params)})" if params else ""
                print(f"  {name}{suffix}")
            print("presets:")
            for name in list_presets():
                print(f"  {name}")
            return 0
        if args.command == "check":
            from . import checks
            results = checks.run_all(seed=args.seed)
            failures = 0
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
                failures += 0 if ok else 1
            return 1 if failures else 0
    except (ConfigError, ValueError) as exc:
        print(f"xdflow: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
