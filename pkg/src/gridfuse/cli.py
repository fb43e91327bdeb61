"""Command-line entry point: one subcommand per experiment kind."""

from __future__ import annotations

import sys
from dataclasses import replace

import click

from .experiments import KINDS, ConfigError, load_config, parse_seeds, run_experiment


def _execute(kind: str, config: str | None, desk_scale: bool, seeds: str | None,
             out: str | None) -> None:
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc
    cfg.kind = kind
    if desk_scale:
        cfg = cfg.apply_desk_scale()
    if seeds:
        try:
            cfg = replace(cfg, seeds=parse_seeds(seeds))
        except ValueError as exc:
            raise click.ClickException(f"bad --seeds: {exc}") from exc
    try:
        out_dir = run_experiment(cfg, out_dir=out)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote reports to {out_dir}")


@click.group()
def main() -> None:
    """Occupancy-grid fusion benchmark runner."""


def _make_command(kind: str):
    @click.command(name=kind, help=f"Run the {kind} protocol.")
    @click.option("--config", type=click.Path(exists=True, dir_okay=False),
                  default=None, help="YAML experiment config.")
    @click.option("--desk-scale", is_flag=True,
                  help="Reduced-size preset (20x20 m, 100 steps, 5 seeds, 45 rays).")
    @click.option("--seeds", default=None, help="Seed list or inclusive range A..B.")
    @click.option("--out", type=click.Path(file_okay=False), default=None,
                  help="Output directory.")
    def _cmd(config, desk_scale, seeds, out):
        _execute(kind, config, desk_scale, seeds, out)

    return _cmd


for _kind in KINDS:
    main.add_command(_make_command(_kind))


if __name__ == "__main__":
    sys.exit(main())
