"""Command-line entry point wiring configs to the toolkit modules.

Every command resolves its settings as flags > config file > defaults,
writes its artifacts atomically, and drops a JSON echo of the resolved
configuration next to them for provenance.  Config files are TOML (JSON
accepted by suffix) with options at the top level and an optional
``[model]`` table; the default seed can be overridden by ``REPMUT_SEED``.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import __version__
from ._io import atomic_write_text, write_csv
from .asymptotics import asymptotics_report, e_inf_surface, report_to_json, surface_to_csv
from .ensemble import VARIANTS, ensemble_to_csv, run_ensemble
from .experiments import (
    argmin_alignment,
    figure1_comparison,
    rs_heatmap,
    sweep_to_csv,
)
from .model import (
    PRESET_NAMES,
    DimensionError,
    LinearGaussianModel,
    ParameterError,
    RsPair,
    StabilityError,
    TimeGrid,
    model_from_dict,
    model_to_dict,
    preset,
)
from .pathgen import (
    brownian_increments,
    ito_observation_increments,
    reference_trajectory,
    rng_stream,
    synth_observation,
)
from .tempering import (
    TraitDistribution,
    gaussian_weights,
    quadratic_fitness,
    tempering_run,
    tempering_to_csv,
)

_REF_KEY = 37
_OBS_KEY = 31
_ENSEMBLE_KEY = 43


def _read_config(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    if not isinstance(data, dict):
        raise click.UsageError(f"config {path} must hold a table of options")
    return data


def _resolve(
    config_path: str | None,
    defaults: dict,
    flags: dict,
) -> tuple[dict, dict | None]:
    """Merge flags > config file > defaults; returns (options, model table)."""
    cfg = _read_config(config_path) if config_path else {}
    model_cfg = cfg.pop("model", None)
    if "preset" in cfg:
        model_cfg = {"preset": cfg.pop("preset"), **(model_cfg or {})}
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(cfg)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged, model_cfg


def _resolve_model(
    preset_flag: str | None, model_cfg: dict | None, default_preset: str
) -> LinearGaussianModel:
    try:
        if preset_flag is not None:
            return preset(preset_flag)
        if model_cfg:
            return model_from_dict(model_cfg)
        return preset(default_preset)
    except (ParameterError, DimensionError) as exc:
        raise click.UsageError(str(exc)) from exc


def _parse_grid(text: str) -> np.ndarray:
    """Grid spec: 'lo:hi:n' (linear), 'geom:lo:hi:n' (log), or 'a,b,c'."""
    text = text.strip()
    if "," in text:
        return np.array([float(v) for v in text.split(",")])
    parts = text.split(":")
    kind = "lin"
    if parts and parts[0] in ("lin", "geom"):
        kind, parts = parts[0], parts[1:]
    if len(parts) != 3:
        raise click.BadParameter(
            f"grid spec {text!r}; expected 'lo:hi:n', 'geom:lo:hi:n', or comma-separated values"
        )
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    return np.geomspace(lo, hi, n) if kind == "geom" else np.linspace(lo, hi, n)


def _echo_config(out: Path, command: str, model: LinearGaussianModel, options: dict) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "model": model_to_dict(model),
        "options": {
            k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in options.items()
        },
    }
    atomic_write_text(out / f"{command}_config.json", json.dumps(payload, indent=2) + "\n")


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _common_options(command):
    for option in reversed(
        [
            click.option("--preset", type=str, default=None, help=f"Model preset ({', '.join(PRESET_NAMES)})."),
            click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="TOML (or JSON) config file."),
            click.option("--out", type=click.Path(file_okay=False), default="repmut-out", show_default=True, help="Output directory."),
            click.option("--seed", type=int, default=None, envvar="REPMUT_SEED", help="RNG seed (env REPMUT_SEED)."),
        ]
    ):
        command = option(command)
    return command


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Replicator-mutator filtering experiments."""


@main.command()
@_common_options
@click.option("--dt", type=float, default=None, help="Simulation step.")
@click.option("--delta-d", type=float, default=None, help="Observation knot width.")
@click.option("--t-end", type=float, default=None, help="Snapshot time.")
@click.option("--nx", type=int, default=None, help="Spatial nodes.")
@click.option("--x0", type=float, default=None, help="Frozen true state.")
def figure1(preset, config_path, out, seed, dt, delta_d, t_end, nx, x0):
    """Replicator density vs Ito/Stratonovich Zakai solutions, shared draws."""
    defaults = dict(seed=101, dt=1e-4, delta_d=None, t_end=0.5, nx=1201, x0=5.0)
    opts, model_cfg = _resolve(
        config_path, defaults, dict(seed=seed, dt=dt, delta_d=delta_d, t_end=t_end, nx=nx, x0=x0)
    )
    model = _resolve_model(preset, model_cfg, "figure1")
    delta = opts["delta_d"] if opts["delta_d"] is not None else 500 * opts["dt"]
    factor = int(round(delta / opts["dt"]))
    result = figure1_comparison(
        dt=opts["dt"],
        t_end=opts["t_end"],
        delta_factor=factor,
        nx=opts["nx"],
        x0=opts["x0"],
        seed=opts["seed"],
        model=model,
    )
    out = _out_dir(out)
    for name, values in [
        ("ck", result.ck),
        ("zakai_ito", result.zakai_ito),
        ("zakai_strat", result.zakai_strat),
    ]:
        write_csv(out / f"figure1_{name}.csv", ["x", "density"], zip(result.x, values))
    write_csv(
        out / "figure1_gaps.csv",
        ["solver", "sup_gap_vs_strat"],
        [("ck", result.gap_ck), ("zakai_ito", result.gap_ito)],
    )
    opts["delta_d"] = result.delta_d
    _echo_config(out, "figure1", model, opts)
    click.echo(
        f"sup|ck - strat| = {result.gap_ck:.6g}, sup|ito - strat| = {result.gap_ito:.6g} "
        f"at t = {result.snapshot_time}"
    )
    if not result.gap_ck < 0.1 * result.gap_ito:
        raise click.ClickException(
            "replicator density did not land within 0.1x of the Ito gap to Stratonovich"
        )


@main.command()
@_common_options
@click.option("--ns", type=int, default=None, help="Observation realizations per cell.")
@click.option("--dt", type=float, default=None)
@click.option("--delta-d", type=float, default=None)
@click.option("--r-grid", type=str, default=None, help="r grid spec (lo:hi:n, geom:lo:hi:n, or list).")
@click.option("--s-grid", type=str, default=None, help="s grid spec.")
@click.option("--threads", type=int, default=None, help="Worker processes (default serial).")
def sweep(preset, config_path, out, seed, ns, dt, delta_d, r_grid, s_grid, threads):
    """Empirical vs analytic asymptotic MSE over an (r, s) grid."""
    defaults = dict(
        seed=0,
        ns=1000,
        dt=1e-4,
        delta_d=1e-3,
        r_grid="geom:0.05:2.0:21",
        s_grid="lin:-3.0:0.2:25",
        threads=None,
    )
    opts, model_cfg = _resolve(
        config_path,
        defaults,
        dict(seed=seed, ns=ns, dt=dt, delta_d=delta_d, r_grid=r_grid, s_grid=s_grid, threads=threads),
    )
    model = _resolve_model(preset, model_cfg, "system1")
    r_values = _parse_grid(str(opts["r_grid"]))
    s_values = _parse_grid(str(opts["s_grid"]))
    if r_values.size == 0 or s_values.size == 0:
        raise click.UsageError("empty (r, s) grid")
    result = rs_heatmap(
        model,
        r_values,
        s_values,
        n_real=opts["ns"],
        dt=opts["dt"],
        delta_d=opts["delta_d"],
        seed=opts["seed"],
        n_workers=opts["threads"],
    )
    out = _out_dir(out)
    sweep_to_csv(result, out / "sweep.csv")
    fraction, _ = argmin_alignment(result)
    opts["alignment_fraction"] = fraction
    opts["masked_fraction"] = result.masked_fraction()
    _echo_config(out, "sweep", model, opts)
    click.echo(
        f"{r_values.size}x{s_values.size} cells, masked {100 * result.masked_fraction():.1f}%, "
        f"argmin-vs-s_opt alignment {100 * fraction:.0f}%"
    )


@main.command()
@_common_options
@click.option("--r-grid", type=str, default=None, help="r grid for the E-infinity surface CSV.")
@click.option("--s-grid", type=str, default=None, help="s grid for the E-infinity surface CSV.")
def asymptotics(preset, config_path, out, seed, r_grid, s_grid):
    """Closed-form misspecification analysis: A*, matched pair, bounds."""
    defaults = dict(seed=0, r_grid=None, s_grid=None)
    opts, model_cfg = _resolve(config_path, defaults, dict(seed=seed, r_grid=r_grid, s_grid=s_grid))
    model = _resolve_model(preset, model_cfg, "system1")
    try:
        report = asymptotics_report(model)
    except (ParameterError, StabilityError) as exc:
        raise click.ClickException(str(exc)) from exc
    out = _out_dir(out)
    report_to_json(report, out / "asymptotics_report.json")
    if opts["r_grid"] and opts["s_grid"]:
        rows = e_inf_surface(model, _parse_grid(str(opts["r_grid"])), _parse_grid(str(opts["s_grid"])))
        surface_to_csv(rows, out / "e_inf_surface.csv")
    _echo_config(out, "asymptotics", model, opts)
    click.echo(
        f"A* = {report.a_star:.6g} ({report.branch}), matched (r, s) = "
        f"({report.matched_r:.6g}, {report.matched_s:.6g}), E_inf = {report.e_inf:.6g}, "
        f"s_l = {report.s_l:.6g}"
    )


@main.command()
@_common_options
@click.option("--variant", type=click.Choice(VARIANTS), default=None, help="Ensemble update variant.")
@click.option("--n-particles", type=int, default=None)
@click.option("--r", type=float, default=None)
@click.option("--s", type=float, default=None)
@click.option("--epsilon", type=float, default=None, help="Inflation strength (inflate variants).")
@click.option("--dt", type=float, default=None)
@click.option("--delta-d", type=float, default=None)
@click.option("--t-end", type=float, default=None)
def enkbf(preset, config_path, out, seed, variant, n_particles, r, s, epsilon, dt, delta_d, t_end):
    """Ensemble Kalman-Bucy run against one synthetic observation path."""
    defaults = dict(
        seed=0,
        variant="stoch",
        n_particles=256,
        r=None,
        s=None,
        epsilon=None,
        dt=1e-3,
        delta_d=1e-2,
        t_end=2.0,
    )
    opts, model_cfg = _resolve(
        config_path,
        defaults,
        dict(
            seed=seed,
            variant=variant,
            n_particles=n_particles,
            r=r,
            s=s,
            epsilon=epsilon,
            dt=dt,
            delta_d=delta_d,
            t_end=t_end,
        ),
    )
    model = _resolve_model(preset, model_cfg, "system1")
    chosen = opts["variant"]
    inflate = chosen.startswith("inflate")
    rs = None
    if not inflate:
        rs = RsPair(
            opts["r"] if opts["r"] is not None else 1.0,
            opts["s"] if opts["s"] is not None else 0.0,
        )
    elif opts["epsilon"] is None:
        raise click.UsageError(f"variant {chosen!r} needs --epsilon")
    grid = TimeGrid(dt=opts["dt"], t_end=opts["t_end"], delta_d=opts["delta_d"])
    run_seed = opts["seed"]
    ref = reference_trajectory(model, grid, rng_stream(run_seed, _REF_KEY))
    obs_noise = brownian_increments(grid, model.dim_obs, rng_stream(run_seed, _OBS_KEY))
    if chosen.endswith("_smooth"):
        drive = synth_observation(model, ref, obs_noise, grid, seed=run_seed)
    else:
        drive = ito_observation_increments(model, ref, obs_noise, grid)
    try:
        traj = run_ensemble(
            model,
            grid,
            drive,
            chosen,
            opts["n_particles"],
            rng_stream(run_seed, _ENSEMBLE_KEY),
            rs=rs,
            epsilon=opts["epsilon"],
            store_every=max(1, grid.n_steps // 500),
        )
    except (ParameterError, StabilityError) as exc:
        raise click.ClickException(str(exc)) from exc
    out = _out_dir(out)
    m = model.dim_state
    header = (
        ["t"]
        + [f"mean{i}" for i in range(m)]
        + [f"cov{i}{j}" for i in range(m) for j in range(m)]
        + [f"truth{i}" for i in range(m)]
    )
    truth_idx = np.rint(traj.times / grid.dt).astype(int)
    rows = (
        [t, *map(float, mean), *map(float, cov.ravel()), *map(float, ref.states[k])]
        for t, mean, cov, k in zip(traj.times, traj.means, traj.covs, truth_idx)
    )
    write_csv(out / "enkbf_trajectory.csv", header, rows)
    ensemble_to_csv(traj.final, out / "enkbf_final_particles.csv")
    _echo_config(out, "enkbf", model, opts)
    final_mean = ", ".join(f"{v:.6g}" for v in traj.final.mean)
    click.echo(f"{chosen} N={opts['n_particles']}: final mean [{final_mean}] at t = {traj.final.time:.6g}")


@main.command()
@_common_options
@click.option("--nx", type=int, default=None, help="Trait lattice nodes.")
@click.option("--y-obs", type=float, default=None, help="Observed value driving the fitness.")
@click.option("--dt", type=float, default=None)
@click.option("--t-end", type=float, default=None)
def temper(preset, config_path, out, seed, nx, y_obs, dt, t_end):
    """Replicator tempering toward the quadratic-fitness posterior."""
    defaults = dict(seed=0, nx=241, y_obs=None, dt=1e-4, t_end=1.0)
    opts, model_cfg = _resolve(
        config_path, defaults, dict(seed=seed, nx=nx, y_obs=y_obs, dt=dt, t_end=t_end)
    )
    model = _resolve_model(preset, model_cfg, "figure1")
    model.require_scalar("temper command")
    h, xi = model.h, model.xi
    m0, c0 = float(model.m0[0]), float(model.C0[0, 0])
    y = opts["y_obs"] if opts["y_obs"] is not None else h * 5.0
    # Lattice wide enough for the prior and the tempered posterior at t_end.
    post_prec = 1.0 / c0 + opts["t_end"] * h * h / xi
    post_mean = (m0 / c0 + opts["t_end"] * h * y / xi) / post_prec
    spread = 6.0 * max(np.sqrt(c0), np.sqrt(1.0 / post_prec))
    lo = min(m0, post_mean) - spread
    hi = max(m0, post_mean) + spread
    x = np.linspace(lo, hi, opts["nx"])
    prior = TraitDistribution(x, gaussian_weights(x, m0, c0), quadratic_fitness(x, h, y, xi))
    try:
        result = tempering_run(prior, t_end=opts["t_end"], dt=opts["dt"])
    except (ParameterError, StabilityError) as exc:
        raise click.ClickException(str(exc)) from exc
    out = _out_dir(out)
    tempering_to_csv(result, out / "temper.csv")
    write_csv(
        out / "temper_deviation.csv",
        ["t", "max_abs_deviation"],
        zip(map(float, result.times), map(float, result.deviations)),
    )
    opts["y_obs"] = y
    _echo_config(out, "temper", model, opts)
    click.echo(f"max deviation from exp(t f) p0: {result.max_deviation:.3g}")


if __name__ == "__main__":
    main()
