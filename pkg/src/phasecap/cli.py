"""Experiment runner: config files, SNR sweeps, caching, CSV, plots.

Config format is flat ``key = value`` lines under bracketed section
headers; angles are taken in degrees at this boundary and converted once.
Every per-task seed is a pure function of (master_seed, kind, snr_db), so
reruns are deterministic and rows can be computed in any order.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bounds as bounds_mod
from . import inforate
from .channel import (
    ChannelParams,
    constellation_by_name,
    load_channel_matrix,
    los_antenna_spacing,
    singular_value_bounds,
    wavelength_from_ghz,
)
from .errors import (
    ConfigurationError,
    DomainError,
    NumericUnderflowError,
    OptimizationError,
    SchemaError,
    UsageError,
)

CSV_COLUMNS = (
    "snr_db",
    "kind",
    "value_bits",
    "std_error_bits",
    "opt_alpha",
    "opt_xi",
    "n_samples",
    "seed",
    "runtime_s",
)

VALID_KINDS = bounds_mod.BOUND_KINDS


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed sweep configuration; see `canonical_text` for the layout."""

    antennas: int = 1
    sigma_delta_degrees: float = 6.0
    h_source: str = "unitary"
    start_db: float = 10.0
    stop_db: float = 30.0
    step_db: float = 2.0
    kinds: tuple = ("asymptotic",)
    n_samples: int = 100_000
    block_length: int = 2000
    n_blocks: int = 4
    q_levels: int = 200
    past_window: int = 200
    constellation: str = "qam64"
    master_seed: int = 1
    parallelism: int = 0
    csv_path: str = "results.csv"
    cache_dir: str = ".phasecap-cache"

    def snr_grid_db(self):
        if self.step_db <= 0:
            raise UsageError("step_db must be > 0")
        count = int(round((self.stop_db - self.start_db) / self.step_db)) + 1
        grid = self.start_db + self.step_db * np.arange(count)
        return [float(s) for s in grid if s <= self.stop_db + 1e-9]

    def sigma_delta_radians(self):
        return float(np.deg2rad(self.sigma_delta_degrees))


_SCHEMA = {
    "channel": {
        "antennas": int,
        "sigma_delta_degrees": float,
        "h_matrix": str,
    },
    "sweep": {
        "start_db": float,
        "stop_db": float,
        "step_db": float,
        "kinds": str,
    },
    "mc": {
        "n_samples": int,
        "block_length": int,
        "n_blocks": int,
        "q_levels": int,
        "past_window": int,
        "constellation": str,
    },
    "run": {
        "master_seed": int,
        "parallelism": int,
    },
    "output": {
        "csv": str,
        "cache_dir": str,
    },
}

_FIELD_BY_KEY = {
    ("channel", "antennas"): "antennas",
    ("channel", "sigma_delta_degrees"): "sigma_delta_degrees",
    ("channel", "h_matrix"): "h_source",
    ("sweep", "start_db"): "start_db",
    ("sweep", "stop_db"): "stop_db",
    ("sweep", "step_db"): "step_db",
    ("sweep", "kinds"): "kinds",
    ("mc", "n_samples"): "n_samples",
    ("mc", "block_length"): "block_length",
    ("mc", "n_blocks"): "n_blocks",
    ("mc", "q_levels"): "q_levels",
    ("mc", "past_window"): "past_window",
    ("mc", "constellation"): "constellation",
    ("run", "master_seed"): "master_seed",
    ("run", "parallelism"): "parallelism",
    ("output", "csv"): "csv_path",
    ("output", "cache_dir"): "cache_dir",
}


def parse_config(text):
    """Parse config text; raises UsageError with line numbers on bad input."""
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise UsageError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise UsageError(f"line {lineno}: key outside any [section]")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        if key not in _SCHEMA[section]:
            raise UsageError(f"line {lineno}: unknown key {key!r} in [{section}]")
        caster = _SCHEMA[section][key]
        try:
            parsed = caster(val)
        except ValueError as exc:
            raise UsageError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        values[_FIELD_BY_KEY[(section, key)]] = parsed

    if "kinds" in values:
        kinds = tuple(k.strip() for k in values["kinds"].split(",") if k.strip())
        for k in kinds:
            if k not in VALID_KINDS:
                raise UsageError(
                    f"unknown bound kind {k!r}; valid kinds: {', '.join(VALID_KINDS)}"
                )
        if not kinds:
            raise UsageError("kinds list is empty")
        values["kinds"] = kinds

    config = ExperimentConfig(**values)
    if config.antennas < 1:
        raise UsageError("antennas must be >= 1")
    if config.sigma_delta_degrees <= 0:
        raise UsageError("sigma_delta_degrees must be > 0")
    if config.stop_db < config.start_db:
        raise UsageError("stop_db must be >= start_db")
    needs_h = {"nonunitary_upper", "nonunitary_lower"} & set(config.kinds)
    if needs_h and config.h_source == "unitary":
        raise UsageError("nonunitary kinds require an h_matrix file in [channel]")
    return config


def parse_config_file(path):
    with open(path) as fh:
        return parse_config(fh.read())


def canonical_text(config):
    """Canonical config serialization; parse(canonical(parse(s))) == parse(s)."""
    return (
        "[channel]\n"
        f"antennas = {config.antennas}\n"
        f"sigma_delta_degrees = {config.sigma_delta_degrees!r}\n"
        f"h_matrix = {config.h_source}\n"
        "[sweep]\n"
        f"start_db = {config.start_db!r}\n"
        f"stop_db = {config.stop_db!r}\n"
        f"step_db = {config.step_db!r}\n"
        f"kinds = {', '.join(config.kinds)}\n"
        "[mc]\n"
        f"n_samples = {config.n_samples}\n"
        f"block_length = {config.block_length}\n"
        f"n_blocks = {config.n_blocks}\n"
        f"q_levels = {config.q_levels}\n"
        f"past_window = {config.past_window}\n"
        f"constellation = {config.constellation}\n"
        "[run]\n"
        f"master_seed = {config.master_seed}\n"
        f"parallelism = {config.parallelism}\n"
        "[output]\n"
        f"csv = {config.csv_path}\n"
        f"cache_dir = {config.cache_dir}\n"
    )


def derive_seed(master_seed, kind, snr_db):
    """Per-task seed: a pure function of (master_seed, kind, snr_db)."""
    digest = hashlib.sha256(f"{master_seed}|{kind}|{snr_db:.6f}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# Config fields that affect a row, per kind (beyond the common ones).
_KIND_FIELDS = {
    "asymptotic": (),
    "memoryless_plus_corr": (),
    "U": ("block_length", "n_blocks", "q_levels", "past_window"),
    "U_s": ("n_samples",),
    "qam_lower": ("block_length", "n_blocks", "q_levels", "constellation"),
    "nonunitary_upper": ("block_length", "n_blocks", "q_levels", "past_window"),
    "nonunitary_lower": ("block_length", "n_blocks", "q_levels", "constellation"),
}


def _h_fingerprint(config):
    if config.h_source == "unitary":
        return "unitary"
    with open(config.h_source, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def row_cache_key(config, kind, snr_db):
    payload = {
        "kind": kind,
        "snr_db": round(float(snr_db), 6),
        "antennas": config.antennas,
        "sigma_delta_degrees": config.sigma_delta_degrees,
        "h": _h_fingerprint(config),
        "master_seed": config.master_seed,
    }
    for name in _KIND_FIELDS[kind]:
        payload[name] = getattr(config, name)
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


def _atomic_write(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def compute_row(config_dict, kind, snr_db):
    """Compute one (kind, snr) row. Top-level so worker processes can run it."""
    config = ExperimentConfig(**config_dict)
    seed = derive_seed(config.master_seed, kind, snr_db)
    sigma = config.sigma_delta_radians()
    snr = 10.0 ** (snr_db / 10.0)
    started = time.perf_counter()

    def finish(value_bits, std_bits, opt_alpha=None, opt_xi=None, n_samples=0, row_kind=kind):
        return {
            "snr_db": float(snr_db),
            "kind": row_kind,
            "value_bits": float(value_bits),
            "std_error_bits": float(std_bits),
            "opt_alpha": opt_alpha,
            "opt_xi": opt_xi,
            "n_samples": int(n_samples),
            "seed": int(seed),
            "runtime_s": time.perf_counter() - started,
        }

    try:
        if kind in ("nonunitary_upper", "nonunitary_lower"):
            h = load_channel_matrix(config.h_source)
            lam_min, lam_max = singular_value_bounds(h)
            lam = lam_max if kind == "nonunitary_upper" else lam_min
            shifted = ChannelParams(config.antennas, sigma, lam * snr)
            if kind == "nonunitary_upper":
                rec = bounds_mod.upper_bound_U(
                    shifted,
                    q_levels=config.q_levels,
                    block_length=config.block_length,
                    n_blocks=config.n_blocks,
                    past_window=config.past_window,
                    seed=seed,
                )
                return finish(
                    rec.value_bits, rec.std_error_bits, rec.opt_alpha, rec.opt_xi,
                    rec.meta.get("n_samples", 0),
                )
            quantizer = inforate.PhaseQuantizer.build(sigma, config.q_levels)
            est = inforate.qam_rate(
                shifted,
                constellation_by_name(config.constellation),
                quantizer,
                config.block_length,
                config.n_blocks,
                seed,
            )
            return finish(
                est.rate, est.std_error, n_samples=config.block_length * config.n_blocks
            )

        params = ChannelParams(config.antennas, sigma, snr)
        if kind == "asymptotic":
            rec = bounds_mod.asymptotic_capacity(params)
            return finish(rec.value_bits, 0.0)
        if kind == "memoryless_plus_corr":
            rec = bounds_mod.memoryless_plus_correction(params)
            return finish(rec.value_bits, 0.0, rec.opt_alpha, rec.opt_xi)
        if kind == "U":
            rec = bounds_mod.upper_bound_U(
                params,
                q_levels=config.q_levels,
                block_length=config.block_length,
                n_blocks=config.n_blocks,
                past_window=config.past_window,
                seed=seed,
            )
            return finish(
                rec.value_bits, rec.std_error_bits, rec.opt_alpha, rec.opt_xi,
                rec.meta.get("n_samples", 0),
            )
        if kind == "U_s":
            rec = bounds_mod.upper_bound_Us(params, n_samples=config.n_samples, seed=seed)
            return finish(
                rec.value_bits, rec.std_error_bits, rec.opt_alpha, rec.opt_xi,
                config.n_samples,
            )
        if kind == "qam_lower":
            quantizer = inforate.PhaseQuantizer.build(sigma, config.q_levels)
            est = inforate.qam_rate(
                params,
                constellation_by_name(config.constellation),
                quantizer,
                config.block_length,
                config.n_blocks,
                seed,
            )
            return finish(
                est.rate, est.std_error, n_samples=config.block_length * config.n_blocks
            )
        raise UsageError(f"unknown kind {kind!r}")
    except (NumericUnderflowError, OptimizationError, FloatingPointError) as exc:
        row = finish(float("nan"), float("nan"), row_kind="failed")
        row["error"] = f"{kind}: {type(exc).__name__}: {exc}"
        return row


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows):
    lines = [",".join(CSV_COLUMNS)]
    for row in sorted(rows, key=lambda r: (r["kind"], r["snr_db"])):
        cells = []
        for col in CSV_COLUMNS:
            val = row.get(col)
            if col == "runtime_s" and val is not None:
                cells.append(f"{val:.3f}")
            else:
                cells.append(_format_cell(val))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def run_sweep(config, progress=None):
    """Execute all (kind, snr) work items, reusing cached rows.

    Returns (csv_path, failed_count). Rows are cached per config hash in an
    append-only directory with atomic replacement.
    """
    tasks = [(kind, snr) for kind in config.kinds for snr in config.snr_grid_db()]
    cache_dir = config.cache_dir
    os.makedirs(cache_dir, exist_ok=True)

    rows = []
    pending = []
    for kind, snr in tasks:
        key = row_cache_key(config, kind, snr)
        path = os.path.join(cache_dir, key + ".json")
        if os.path.exists(path):
            with open(path) as fh:
                rows.append(json.load(fh))
        else:
            pending.append((kind, snr, path))

    config_dict = {f: getattr(config, f) for f in config.__dataclass_fields__}
    workers = config.parallelism if config.parallelism > 0 else (os.cpu_count() or 1)
    if pending:
        if workers > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(compute_row, config_dict, kind, snr)
                    for kind, snr, _ in pending
                ]
                fresh = [f.result() for f in futures]
        else:
            fresh = [compute_row(config_dict, kind, snr) for kind, snr, _ in pending]
        for (kind, snr, path), row in zip(pending, fresh):
            _atomic_write(path, json.dumps(row, sort_keys=True))
            rows.append(row)
            if progress is not None:
                progress(kind, snr, row)

    _atomic_write(config.csv_path, rows_to_csv(rows))
    failed = sum(1 for r in rows if r["kind"] == "failed")
    return config.csv_path, failed


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot bound/rate curves from {csv_name} (figure {figure_id})."""

import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(list)
with open({csv_path!r}) as fh:
    for row in csv.DictReader(fh):
        if row["kind"] == "failed":
            continue
        series[row["kind"]].append((float(row["snr_db"]), float(row["value_bits"])))

fig, ax = plt.subplots(figsize=(7, 5))
for kind in ({kinds}):
    pts = sorted(series[kind])
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=kind)
ax.set_xlabel("SNR [dB]")
ax.set_ylabel("Rate [bits/channel use]")
ax.set_title("Figure {figure_id}")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig("figure{figure_id}.png", dpi=150)
print("wrote figure{figure_id}.png")
'''


def emit_plot_script(csv_path, figure_id, out_path=None):
    """Write a standalone matplotlib script for the given results CSV."""
    with open(csv_path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or lines[0].split(",") != list(CSV_COLUMNS):
        raise SchemaError(f"{csv_path}: missing or wrong CSV header")
    if len(lines) < 2:
        raise SchemaError(f"{csv_path}: no data rows")
    kinds = []
    for ln in lines[1:]:
        kind = ln.split(",")[1]
        if kind != "failed" and kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise SchemaError(f"{csv_path}: no successful rows")
    script = _PLOT_TEMPLATE.format(
        csv_name=os.path.basename(csv_path),
        csv_path=csv_path,
        figure_id=figure_id,
        kinds=", ".join(repr(k) for k in kinds) + ("," if len(kinds) == 1 else ""),
    )
    if out_path is None:
        out_path = os.path.splitext(csv_path)[0] + f"_fig{figure_id}.py"
    _atomic_write(out_path, script)
    return out_path


def _cmd_sweep(args):
    config = parse_config_file(args.config)
    def progress(kind, snr, row):
        status = "fail" if row["kind"] == "failed" else f"{row['value_bits']:.4f} bits"
        print(f"  {kind:>22s} @ {snr:5.1f} dB -> {status}", flush=True)
    path, failed = run_sweep(config, progress=progress if args.verbose else None)
    print(path)
    return 2 if failed else 0


def _cmd_plot(args):
    out = emit_plot_script(args.csv, args.figure)
    print(out)
    return 0


def _cmd_spacing(args):
    wavelength = wavelength_from_ghz(args.freq_ghz)
    d = los_antenna_spacing(wavelength, args.range_m, args.antennas)
    print(f"{d:.6g}")
    return 0


def _cmd_gap(args):
    nats = bounds_mod.avg_peak_gap(args.antennas)
    print(f"{nats:.6f} nats ({nats / np.log(2.0):.6f} bits)")
    return 0


def _cmd_validate(args):
    config = parse_config_file(args.config)
    sys.stdout.write(canonical_text(config))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phasecap",
        description="Capacity bounds for peak-constrained MIMO Wiener phase-noise channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a bound/rate sweep from a config file")
    p.add_argument("config")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot", help="emit a plot script for a results CSV")
    p.add_argument("csv")
    p.add_argument("--figure", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("spacing", help="LoS antenna spacing for a unitary channel")
    p.add_argument("--freq-ghz", type=float, required=True)
    p.add_argument("--range-m", type=float, required=True)
    p.add_argument("--antennas", type=int, required=True)
    p.set_defaults(func=_cmd_spacing)

    p = sub.add_parser("gap", help="high-SNR average-vs-peak capacity gap")
    p.add_argument("--antennas", type=int, required=True)
    p.set_defaults(func=_cmd_gap)

    p = sub.add_parser("validate", help="parse a config and print its canonical form")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (UsageError, SchemaError, ConfigurationError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericUnderflowError, OptimizationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
