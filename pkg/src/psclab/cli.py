"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 bad input data or file format,
3 precondition violation (existing outputs, windowless attack, ...).
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from . import rng as rngmod
from .aes import as_block
from .cpa import AttackError, compute_mtd, recover_key, repeatability
from .reports import byte_table, curve_table, key_fingerprint, summary, sweep_table, write_text
from .scenarios import PRESETS, ScenarioSpec, load_scenario, preset
from .synth import synthesize_traces
from .traces import TraceFormatError, load, save

EXIT_USAGE, EXIT_DATA, EXIT_PRECONDITION = 1, 2, 3


class DataError(Exception):
    pass


class PreconditionError(Exception):
    pass


def _scenario(ref: str) -> ScenarioSpec:
    """A scenario file path, or the name of a built-in preset."""
    if ref in PRESETS and not Path(ref).exists():
        return preset(ref)
    try:
        return load_scenario(ref)
    except FileNotFoundError:
        raise DataError(f"no scenario file or preset named {ref!r}") from None
    except ValidationError as e:
        raise DataError(f"invalid scenario {ref}: {e}") from None


def _key(text: str, seed: int) -> np.ndarray:
    if text == "random":
        return rngmod.stream(seed, "key").integers(0, 256, 16, dtype=np.uint8)
    try:
        return as_block(text)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--key") from None


def _seed(seed: int) -> int:
    try:
        return rngmod.check_seed(seed)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--seed") from None


def _fresh(paths: list[Path], force: bool) -> None:
    """Refuse up front so a failing command leaves no partial output behind."""
    taken = [str(p) for p in paths if p.exists()]
    if taken and not force:
        raise PreconditionError(f"refusing to overwrite {', '.join(taken)} (use --force)")


def _load_traces(path: str):
    try:
        return load(path)
    except TraceFormatError as e:
        raise DataError(f"{path}: {e}") from None


def _median(res) -> int | None:
    m = res.median_mtd()
    return None if math.isinf(m) else m


seed_opt = click.option("--seed", type=int, default=0, show_default=True, help="64-bit experiment seed.")
force_opt = click.option("--force", is_flag=True, help="Overwrite existing outputs.")
out_opt = click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Output directory.")
window_opt = click.option("--window/--full", "window", default=False, show_default=True,
                          help="Correlate only the tenth-round sample, or every sample.")


@click.group()
def cli():
    """Simulated TDC power side-channel lab: synthesize traces, run CPA, measure MTD."""


@cli.command()
@click.option("--scenario", default="baseline", show_default=True, help="Scenario JSON file or preset name.")
@click.option("--key", default="random", show_default=True, help="32 hex digits, or 'random' (derived from seed).")
@click.option("--traces", type=click.IntRange(min=1), default=5000, show_default=True)
@seed_opt
@out_opt
@force_opt
@click.option("--emit-key", is_flag=True, help="Record the key itself in the manifest.")
def synth(scenario, key, traces, seed, out, force, emit_key):
    """Write one trace file per sensor plus a manifest."""
    seed = _seed(seed)
    spec = _scenario(scenario)
    k = _key(key, seed)
    out = Path(out)
    files = [out / f"sensor{s}.psct" for s in range(spec.n_sensors)]
    manifest = out / "manifest.json"
    _fresh(files + [manifest], force)
    out.mkdir(parents=True, exist_ok=True)
    sets = synthesize_traces(spec, k, traces, seed)
    for ts, f in zip(sets, files):
        save(ts, f, force=force)
    doc = {
        "command": "synth",
        "scenario": json.loads(spec.canonical_json()),
        "scenario_digest": spec.digest().hex(),
        "key_source": "random" if key == "random" else "explicit",
        "key_fingerprint": key_fingerprint(k),
        "seed": seed,
        "traces": traces,
        "files": [f.name for f in files],
    }
    if emit_key:
        doc["key"] = bytes(k).hex()
    write_text(manifest, json.dumps(doc, indent=2, sort_keys=True) + "\n", force)
    click.echo(f"wrote {len(files)} trace files to {out}")


@cli.command()
@click.argument("trace_file", type=click.Path(dir_okay=False))
@out_opt
@window_opt
@force_opt
def attack(trace_file, out, window, force):
    """Recover the key from a trace file (attacker mode: no key needed)."""
    ts = _load_traces(trace_file)
    out = Path(out)
    _fresh([out / "attack.csv", out / "attack.json"], force)
    rep = recover_key(ts, use_window=window)
    write_text(out / "attack.csv", byte_table(rep), force)
    write_text(out / "attack.json", summary(rep, source=str(trace_file), scenario_digest=ts.scenario_digest.hex()),
               force)
    click.echo(bytes(rep.recovered_master_key).hex())


@cli.command()
@click.argument("trace_file", type=click.Path(dir_okay=False))
@click.option("--key", required=True, help="True key (32 hex digits); evaluation mode.")
@click.option("--step", type=click.IntRange(min=1), default=100, show_default=True)
@out_opt
@window_opt
@force_opt
def mtd(trace_file, key, step, out, window, force):
    """Minimum traces to disclosure for a trace file and known key."""
    ts = _load_traces(trace_file)
    if key == "random":
        raise click.BadParameter("mtd needs the true key", param_hint="--key")
    k = _key(key, 0)
    out = Path(out)
    targets = [out / "mtd.csv", out / "mtd.json", out / "curve.csv"]
    _fresh(targets, force)
    res = compute_mtd(ts, k, step=step, use_window=window)
    rep = res.final_report
    write_text(targets[0], byte_table(rep), force)
    write_text(targets[1], summary(rep, source=str(trace_file), step=step, key_fingerprint=key_fingerprint(k)), force)
    write_text(targets[2], curve_table(res), force)
    click.echo("not reached" if res.mtd is None else str(res.mtd))


def _repeat(spec, k, trials, budget, seed, step, window):
    return repeatability(spec, k, trials, budget, seed=seed, step=step, use_window=window)


@cli.command()
@click.option("--scenario", default="baseline", show_default=True)
@click.option("--key", default="random", show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--budget", type=click.IntRange(min=1), default=10_000, show_default=True)
@click.option("--step", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--window/--full", "window", default=True, show_default=True)
@seed_opt
@out_opt
@force_opt
def repeat(scenario, key, trials, budget, step, window, seed, out, force):
    """Independent trials of one scenario; reports success rate and the MTD of each trial."""
    seed = _seed(seed)
    spec = _scenario(scenario)
    k = _key(key, seed)
    target = Path(out) / "repeat.json"
    _fresh([target], force)
    res = _repeat(spec, k, trials, budget, seed, step, window)
    doc = {
        "scenario_digest": spec.digest().hex(),
        "key_fingerprint": key_fingerprint(k),
        "seed": seed,
        "trials": trials,
        "budget": budget,
        "step": step,
        "use_window": window,
        "success_rate": res.success_rate,
        "median_mtd": _median(res),
        "trial_mtds": res.mtds,
        "per_sensor_mtds": res.per_sensor_mtds,
        "bytes_recovered": res.bytes_recovered,
        "trial_seeds": [str(s) for s in res.trial_seeds],
    }
    write_text(target, json.dumps(doc, indent=2, sort_keys=True) + "\n", force)
    click.echo(f"success {res.success_rate:.2f}, median MTD {_median(res) or 'not reached'}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@cli.command()
@click.option("--scenario", default="baseline", show_default=True, help="Template scenario file or preset.")
@click.option("--axis", required=True, help="Dotted scenario field, e.g. layout.ros_per_slice or noise.electronic_sigma.")
@click.option("--values", required=True, help="Comma separated values for the axis.")
@click.option("--key", default="random", show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--budget", type=click.IntRange(min=1), default=10_000, show_default=True)
@click.option("--step", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--window/--full", "window", default=True, show_default=True)
@seed_opt
@out_opt
@force_opt
def sweep(scenario, axis, values, key, trials, budget, step, window, seed, out, force):
    """One row of MTD statistics per axis value."""
    seed = _seed(seed)
    spec = _scenario(scenario)
    k = _key(key, seed)
    vals = [_parse_value(v.strip()) for v in values.split(",") if v.strip()]
    if not vals:
        raise click.BadParameter("no values given", param_hint="--values")
    try:
        specs = [spec.with_field(axis, v) for v in vals]
    except KeyError as e:
        raise click.BadParameter(str(e.args[0]), param_hint="--axis") from None
    except ValidationError as e:
        raise DataError(f"invalid value for {axis}: {e}") from None
    target = Path(out) / "sweep.csv"
    _fresh([target], force)
    rows = []
    for v, s in zip(vals, specs):
        res = _repeat(s, k, trials, budget, seed, step, window)
        rows.append({"axis": axis, "value": v, "median_mtd": _median(res), "success_rate": res.success_rate,
                     "bytes_recovered": res.bytes_recovered, "trial_mtds": res.mtds,
                     "per_sensor_mtds": res.per_sensor_mtds})
        click.echo(f"{axis}={v}: median MTD {_median(res) or 'not reached'}")
    write_text(target, sweep_table(rows), force)


@cli.group(name="scenario")
def scenario_group():
    """Scenario file utilities."""


@scenario_group.command(name="validate")
@click.argument("ref")
def scenario_validate(ref):
    """Check a scenario file (or preset) and print its digest."""
    spec = _scenario(ref)
    click.echo(f"ok {spec.layout.kind} {spec.digest().hex()}")


@scenario_group.command(name="show")
@click.argument("ref")
def scenario_show(ref):
    """Print the fully expanded JSON of a scenario file or preset."""
    from .scenarios import dump_scenario

    click.echo(dump_scenario(_scenario(ref)), nl=False)


@cli.group(name="trace")
def trace_group():
    """Trace file utilities."""


@trace_group.command(name="info")
@click.argument("trace_file", type=click.Path(dir_okay=False))
def trace_info(trace_file):
    """Print a trace file's header fields as JSON."""
    ts = _load_traces(trace_file)
    doc = {
        "n_traces": ts.n_traces,
        "n_samples": ts.n_samples,
        "tap_count": ts.tap_count,
        "window": list(ts.window) if ts.window else None,
        "sensor_id": ts.sensor_id,
        "polarity": ts.polarity,
        "scenario_digest": ts.scenario_digest.hex(),
    }
    click.echo(json.dumps(doc, indent=2))


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="psclab", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except (DataError, TraceFormatError, ValidationError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_DATA
    except (PreconditionError, AttackError, FileExistsError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_PRECONDITION
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
