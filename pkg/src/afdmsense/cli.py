"""Command line entry point ``sense``."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict

import click

from .harness import load_config, run_sweep, run_trial, scenario_crb, scenario_id


@click.group()
@click.version_option(package_name="afdmsense")
def main():
    """AFDM sensing simulations: sweeps, single trials, bounds and plots."""


@main.command()
@click.option("--config", "config_path", required=True,
              help="YAML scenario file or the name of a bundled preset.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--trials", type=int, default=None, help="Override trials per grid point.")
@click.option("--seed", type=int, default=None, help="Override the root seed.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--crb-draws", type=int, default=100, show_default=True,
              help="Geometry draws averaged for the RCRB overlay (m = 1 only).")
@click.option("--no-plots", is_flag=True, help="Skip SVG output.")
def sweep(config_path, out_dir, trials, seed, jobs, crb_draws, no_plots):
    """Run every trial of every grid point and write CSV, manifest and plots."""
    from .records import emit_outputs

    grid = load_config(config_path, trials=trials, seed=seed)
    total = sum(s.trials for s in grid)
    with click.progressbar(length=total, label="trials", file=sys.stderr) as bar:
        result = run_sweep(grid, jobs=jobs, crb_draws=crb_draws, progress=bar.update)
    paths = emit_outputs(result, out_dir, argv=sys.argv, plots=not no_plots)
    for s in result.summaries:
        click.echo(f"{s.scenario_id}: SNR={s.snr_db:g} dB v={s.velocity_kmh:g} km/h "
                   f"m={s.shape_m:g} L={s.num_paths} L_est={s.est_num_paths} "
                   f"rmse_d0={s.rmse_d0:.3f} m baseline={s.rmse_d0_baseline:.3f} m "
                   f"nrmse_nu1={s.nrmse_nu1:.4f} converged={s.converged}/{s.trials}")
    click.echo(f"wrote {paths['trials']}")


@main.command()
@click.option("--config", "config_path", required=True)
@click.option("--trial-index", type=int, required=True)
@click.option("--scenario", "scenario_index", type=int, default=0, show_default=True,
              help="Grid point index when the config describes a grid.")
def trial(config_path, trial_index, scenario_index):
    """Run one trial and print its record as JSON."""
    grid = load_config(config_path)
    if not 0 <= scenario_index < len(grid):
        raise click.BadParameter(f"grid has {len(grid)} points", param_hint="--scenario")
    scn = grid[scenario_index]
    rec = run_trial(scn, trial_index, scenario_id(scn, scenario_index))
    click.echo(json.dumps(asdict(rec), indent=2))


@main.command()
@click.option("--config", "config_path", required=True)
@click.option("--draws", type=int, default=100, show_default=True)
def crb(config_path, draws):
    """Print the geometry-averaged RCRB for every m = 1 grid point."""
    grid = load_config(config_path)
    shown = 0
    for i, scn in enumerate(grid):
        if scn.shape_m != 1:
            continue
        out = scenario_crb(scn, draws)
        shown += 1
        click.echo(f"{scenario_id(scn, i)}: SNR={scn.snr_db:g} dB L={scn.num_paths} "
                   f"rcrb_d0={out['rcrb_d0']:.4f} m nrcrb_nu1={out['nrcrb_nu1']:.5f}")
    if not shown:
        raise click.ClickException("the CRB is only defined for shape_m = 1 grid points")


@main.command()
@click.option("--summary", "summary_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def plot(summary_path, out_dir):
    """Redraw SVG plots from an existing summary.csv."""
    from .plots import plot_summaries
    from .records import read_summary

    for p in plot_summaries(read_summary(summary_path), out_dir):
        click.echo(f"wrote {p}")


if __name__ == "__main__":
    main()
