"""``deltasparse`` command line: init -> quantize -> prune -> encode -> infer -> simulate -> report.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import pipeline
from .config import PRESETS, ConfigError, RunConfig
from .container import MAGIC, Container, ContainerError, read_container, write_container
from .report import format_record, format_table

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

_CONFIG_FLAGS = [
    click.option("--gamma", type=float, help="Weight sparsity target per subcolumn."),
    click.option("--theta", type=float, help="Delta threshold (real units)."),
    click.option("--pes", "M", type=int, help="PEs per MAC array (M)."),
    click.option("--arrays", "N", type=int, help="Number of MAC arrays (N)."),
    click.option("--freq-mhz", type=float, help="Clock frequency in MHz."),
    click.option("--seed", type=int, help="Seed for every random component."),
    click.option("--weight-bits", type=int),
    click.option("--weight-frac", type=int),
    click.option("--act-bits", type=int),
    click.option("--act-frac", type=int),
    click.option("--lidx-bits", type=int),
    click.option("--overhead-cycles", type=int, help="Fixed cycles added to every timestep."),
    click.option("--dram", type=click.Choice(["ddr3", "ddr3l", "gddr6", "hbm2"])),
    click.option("--dram-bits-per-cycle", type=int, help="Memory port width; enables the memory-bound model."),
    click.option("--delta-alpha", type=float, help="Dropout probability increment per epoch."),
    click.option("--epochs", type=int, help="Pruning epochs."),
    click.option("--edge", "preset", flag_value="edge", help="4 PEs x 1 array, 125 MHz, 10-bit LIDX, DDR3L."),
    click.option("--spartus", "preset", flag_value="spartus", help="64 PEs x 8 arrays, 200 MHz, 8-bit LIDX."),
]


def config_options(f):
    """Attach the shared config flags; the command receives ``overrides`` instead."""
    names = ["gamma", "theta", "M", "N", "freq_mhz", "seed", "weight_bits", "weight_frac", "act_bits",
             "act_frac", "lidx_bits", "overhead_cycles", "dram", "dram_bits_per_cycle", "delta_alpha",
             "epochs", "preset"]

    @functools.wraps(f)
    def wrapper(*args, **kw):
        overrides = {n: kw.pop(n, None) for n in names}
        return f(*args, overrides=overrides, **kw)

    for opt in reversed(_CONFIG_FLAGS):
        wrapper = opt(wrapper)
    return wrapper


def resolve_config(base: RunConfig, overrides: dict) -> RunConfig:
    overrides = dict(overrides)
    preset = overrides.pop("preset", None)
    cfg = base
    if preset:
        # presets are applied before explicit flags so --spartus --freq-mhz 100 works
        cfg = RunConfig.from_dict({**cfg.to_dict(), **PRESETS[preset]})
    return RunConfig.from_dict({**cfg.to_dict(), **{k: v for k, v in overrides.items() if v is not None}})


def _open(path) -> tuple[Container, RunConfig]:
    c = read_container(path)
    return c, pipeline.load_config(c)


def _save(c: Container, path, output):
    write_container(output or path, c)


output_option = click.option("-o", "--output", type=click.Path(dir_okay=False),
                             help="Write here instead of updating the input container.")


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def cli(verbose):
    """Sparse DeltaLSTM engine and accelerator simulator."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--input-size", default=8, show_default=True)
@click.option("--hidden-size", default=16, show_default=True)
@click.option("--scale", type=float, help="Uniform init bound (default 1/sqrt(hidden)).")
@config_options
def init(output, input_size, hidden_size, scale, overrides):
    """Create a container holding a random real-valued LSTM layer."""
    cfg = resolve_config(RunConfig(), overrides)
    c = pipeline.init_network(input_size, hidden_size, cfg, scale)
    write_container(output, c)
    click.echo(f"wrote {output}: input {input_size}, hidden {hidden_size}")


@cli.command("quantize")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--sidecar", type=click.Path(exists=True, dir_okay=False),
              help="JSON shapes file for a flat binary SOURCE (default SOURCE with .json).")
@output_option
@config_options
def quantize_cmd(source, sidecar, output, overrides):
    """Quantize real PARAMS to the configured fixed-point formats."""
    with open(source, "rb") as f:
        is_container = f.read(4) == MAGIC
    if is_container:
        c, base = _open(source)
        params = None
    else:
        if not output:
            raise click.UsageError("a flat parameter file needs -o/--output for the new container")
        c, base = Container(), RunConfig()
        params = pipeline.params_from_flat(source, sidecar)
    cfg = resolve_config(base, overrides)
    errors = pipeline.quantize_stage(c, cfg, params)
    _save(c, source if is_container else output, output)
    q = cfg.quant_config()
    click.echo(f"weights {q.weight}, activations {q.act}, accumulator {q.acc}")
    for name, err in errors.items():
        click.echo(f"max_error {name}={err:.6g}")
    click.echo(f"max_error_overall={max(errors.values()):.6g}")


@cli.command()
@click.argument("container", type=click.Path(exists=True, dir_okay=False))
@output_option
@config_options
def prune(container, output, overrides):
    """Column-balanced targeted dropout on the stacked weights."""
    c, base = _open(container)
    cfg = resolve_config(base, overrides)
    meta = pipeline.prune_stage(c, cfg)
    _save(c, container, output)
    click.echo(f"pruned gamma={cfg.gamma} M={cfg.M}: measured weight sparsity "
               f"{meta['weight_sparsity_measured']:.4f}")


@cli.command()
@click.argument("container", type=click.Path(exists=True, dir_okay=False))
@output_option
@config_options
def encode(container, output, overrides):
    """Encode the pruned weights as CBCSC and split them into N banks."""
    c, base = _open(container)
    cfg = resolve_config(base, overrides)
    info = pipeline.encode_stage(c, cfg)
    _save(c, container, output)
    click.echo("encoded " + " ".join(f"{k}={v}" for k, v in info.items()))


@cli.command()
@click.argument("container", type=click.Path(exists=True, dir_okay=False))
@click.option("--inputs", type=click.Path(exists=True, dir_okay=False), help=".npy array of shape (T, input).")
@click.option("--steps", default=50, show_default=True, help="Length of the synthetic input when --inputs is absent.")
@click.option("--dense", is_flag=True, help="Issue every column every step (no delta skipping; theta must be 0).")
@output_option
@config_options
def infer(container, inputs, steps, dense, output, overrides):
    """Run the DeltaLSTM and record the delta trace."""
    c, base = _open(container)
    cfg = resolve_config(base, overrides)
    xs = None
    if inputs:
        try:
            xs = np.load(inputs, allow_pickle=False)
        except ValueError as e:
            raise ContainerError(f"cannot read {inputs}: {e}") from None
    meta = pipeline.infer_stage(c, cfg, xs, steps, dense)
    _save(c, container, output)
    click.echo(f"temporal sparsity dx={meta['temporal_x']:.4f} dh={meta['temporal_h']:.4f} "
               f"total={meta['temporal_total']:.4f}")


@cli.command()
@click.argument("container", type=click.Path(dir_okay=False))
@click.option("--synthetic", is_flag=True, help="Simulate a random delta trace instead of the stored one.")
@click.option("--rows", default=4096, show_default=True, help="Synthetic: stacked matrix rows H.")
@click.option("--cols", default=2048, show_default=True, help="Synthetic: stacked matrix columns Q.")
@click.option("--steps", default=200, show_default=True, help="Synthetic: timesteps.")
@click.option("--temporal-sparsity", default=0.906, show_default=True, help="Synthetic: fraction of idle columns.")
@output_option
@config_options
def simulate(container, synthetic, rows, cols, steps, temporal_sparsity, output, overrides):
    """Cycle model of the accelerator over the delta trace."""
    if synthetic and not Path(container).exists():
        c, base = Container(), RunConfig()
    else:
        c, base = _open(container)
    cfg = resolve_config(base, overrides)
    if synthetic:
        rec = pipeline.simulate_synthetic(c, cfg, rows, cols, steps, temporal_sparsity)
    else:
        rec = pipeline.simulate_stage(c, cfg)
    _save(c, container, output)
    click.echo(f"cycles={rec['cycles']} latency_us={rec['latency_us']:.6g} "
               f"balance_ratio={rec['balance_ratio']:.6g}")


@cli.command()
@click.argument("container", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["table", "record", "both"]), default="both",
              show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Also write the record lines here.")
def report(container, fmt, output):
    """Print the simulation report."""
    c = read_container(container)
    rec = pipeline.load_report(c)
    if fmt in ("table", "both"):
        click.echo(format_table(rec), nl=False)
    if fmt == "both":
        click.echo()
    if fmt in ("record", "both"):
        click.echo(format_record(rec), nl=False)
    if output:
        Path(output).write_text(format_record(rec))


@cli.command()
@click.argument("container", type=click.Path(exists=True, dir_okay=False))
def inspect(container):
    """List the sections of a container."""
    c = read_container(container)
    for name in c.names:
        click.echo(f"{name:<8} {len(c.raw(name)):>10} bytes")


DATA_ERRORS = (ValueError, OSError)


def run(argv: list[str] | None = None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="deltasparse", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_DATA
    except (ConfigError, ContainerError) + DATA_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_DATA
    return rv if isinstance(rv, int) else EXIT_OK


def main():
    sys.exit(run())
