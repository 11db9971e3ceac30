"""Command-line front end: ``specband <command> --config run.yaml [overrides]``.

Every command writes three artifacts into the output directory:

``<command>.csv``
    RFC-4180 table (LF line endings, 17 significant digits).
``<command>.json``
    Summary: schema version, code version, the config echo and the
    command result.  Deterministic: identical configs give identical bytes.
``<command>.timing.json``
    Wall time of the run, kept apart so that the summary stays deterministic.

plus ``<command>_plot.py``, a generated matplotlib script that plots the CSV.
Exit codes: 0 success, 1 config error, 2 refused precondition, 3 numerical
or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__, ebbm, experiments, floquet, transfer
from .errors import InvalidInputError, NumericalFailureError, RefusedPreconditionError, SpecbandError
from .numerics import Interval
from .potential import PotentialSpec, sample

__all__ = ["COMMANDS", "SCHEMAS", "RunConfig", "load_config", "emit_csv", "run", "main"]

COMMANDS = ("sweep", "bands", "bloch", "landauer", "thouless", "carmona", "audit", "shrink")
JSON_SCHEMA_VERSION = 1

SCHEMAS = {
    "sweep": ("L", "inv_norm_integral", "g_lb", "g_th", "lyapunov_mid"),
    "bands": ("ell", "E1", "E2", "E0", "width", "orientation"),
    "bloch": ("ell", "k", "E", "dEdk", "dEdk_disc", "multiplier_re", "multiplier_im"),
    "landauer": ("E", "density"),
    "thouless": ("L", "g_th"),
    "carmona": ("L", "probe", "oracle", "deviation", "resolved", "unresolved"),
    "audit": ("module", "name", "passed", "value", "threshold", "inputs"),
    "shrink": ("L", "overlap"),
}

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_FAILURE = 0, 1, 2, 3


class ConfigError(InvalidInputError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """All run parameters, each with a default; an empty file is a valid config.

    ``L`` is used by the single-length commands (bands, bloch, landauer,
    thouless), ``L_seq`` by sweep, carmona and shrink, ``seeds`` and
    ``L_set`` by audit.  ``threads`` and ``out`` control execution only and
    are left out of the config echo.
    """

    command: str = "audit"
    potential: dict = field(default_factory=lambda: {"kind": "zero"})
    window: list = field(default_factory=lambda: [-1.0, 1.0])
    L: int = 64
    L_seq: list = field(default_factory=lambda: [100, 200, 400, 800, 1600])
    kappa: float = 1.0
    tol: float = 1e-8
    decay_factor: float = experiments.DECAY_FACTOR
    flat_factor: float = experiments.FLAT_FACTOR
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    L_set: list = field(default_factory=lambda: [16, 64, 128])
    bump: dict = field(default_factory=lambda: {"center": 0.0, "width": 0.5, "amplitude": 1.0})
    carmona_tol: float = 1e-7
    samples: int = 4
    grid: int = 201
    threads: Optional[int] = None
    out: str = "specband_out"

    EXECUTION = ("threads", "out")

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        try:
            spec = self.potential_spec()
            self.potential = spec.to_dict()
            self.window = [float(x) for x in self.window]
            if len(self.window) != 2:
                raise ConfigError("window must have exactly two entries [lo, hi]")
            Interval(*self.window)
            self.L = _int(self.L, "L")
            self.L_seq = [_int(x, "L_seq") for x in self.L_seq]
            self.L_set = [_int(x, "L_set") for x in self.L_set]
            self.seeds = [_int(x, "seeds", minimum=0) for x in self.seeds]
            self.kappa = float(self.kappa)
            self.tol = float(self.tol)
            self.carmona_tol = float(self.carmona_tol)
            self.decay_factor = float(self.decay_factor)
            self.flat_factor = float(self.flat_factor)
            self.samples = _int(self.samples, "samples")
            self.grid = _int(self.grid, "grid")
            defaults = {"center": 0.0, "width": 0.5, "amplitude": 1.0}
            extra = set(self.bump) - set(defaults)
            if extra:
                raise ConfigError(f"unknown bump fields {sorted(extra)}")
            self.bump = {k: float(self.bump.get(k, d)) for k, d in defaults.items()}
            transfer.GaussianBump(**self.bump)
            if self.threads is not None:
                self.threads = _int(self.threads, "threads")
            self.out = str(self.out)
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc
        if not self.tol > 0 or not self.carmona_tol > 0:
            raise ConfigError("tolerances must be positive")
        if self.kappa == 0.0:
            raise ConfigError("kappa must be non-zero")

    def potential_spec(self) -> PotentialSpec:
        if not isinstance(self.potential, dict):
            raise ConfigError("potential must be a mapping with a 'kind' key")
        return PotentialSpec.from_dict(self.potential)

    @property
    def interval(self) -> Interval:
        return Interval(*self.window)

    def to_dict(self, echo: bool = False) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        if echo:
            for key in self.EXECUTION:
                out.pop(key)
        return _plain(out)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "RunConfig":
        data = dict(data or {})
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


def _int(x, name: str, minimum: int = 1) -> int:
    if isinstance(x, bool) or int(x) != x or int(x) < minimum:
        raise ConfigError(f"{name} entries must be integers >= {minimum}, got {x!r}")
    return int(x)


def _plain(obj):
    """Convert to YAML/JSON-safe builtins (tuples to lists, numpy scalars to Python)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_config(path: Optional[str]) -> RunConfig:
    """Parse a YAML config file; None gives the all-defaults config."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path!r} is not valid YAML: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if isinstance(x, (dict, list)):
        return json.dumps(_json_safe(x), sort_keys=True, separators=(",", ":"))
    return str(x)


def emit_csv(path: str, rows: Sequence[Sequence], schema: Sequence[str]) -> None:
    """Write ``rows`` under the fixed ``schema`` header; an empty list gives a header-only file."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(schema)
    for row in rows:
        if len(row) != len(schema):
            raise InvalidInputError(f"row has {len(row)} fields, schema {tuple(schema)} needs {len(schema)}")
        writer.writerow([_cell(x) for x in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _json_safe(obj):
    """Non-finite floats become null; numpy types become builtins."""
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _dump_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


_PLOT_TEMPLATE = '''"""Plot {csv} (generated by specband {version})."""

import csv
import sys

import matplotlib.pyplot as plt

with open("{csv}", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for col in {ys!r}:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
ax.set_xlabel("{x}")
{logscale}ax.legend()
fig.savefig("{stem}.png" if len(sys.argv) < 2 else sys.argv[1], dpi=150)
'''

_PLOT_AXES = {
    "sweep": ("L", ("inv_norm_integral", "g_lb", "g_th"), True),
    "bands": ("ell", ("E1", "E2"), False),
    "bloch": ("k", ("dEdk", "dEdk_disc"), False),
    "landauer": ("E", ("density",), False),
    "thouless": ("L", ("g_th",), False),
    "carmona": ("L", ("probe", "oracle"), False),
    "audit": None,
    "shrink": ("L", ("overlap",), False),
}


def _emit_plot_script(out_dir: str, command: str) -> Optional[str]:
    axes = _PLOT_AXES[command]
    if axes is None:
        return None
    x, ys, log = axes
    text = _PLOT_TEMPLATE.format(
        csv=f"{command}.csv",
        version=__version__,
        x=x,
        ys=list(ys),
        stem=command,
        logscale='ax.set_yscale("log")\nax.set_xscale("log")\n' if log else "",
    )
    path = os.path.join(out_dir, f"{command}_plot.py")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _threads(cfg: RunConfig) -> int:
    return cfg.threads if cfg.threads is not None else (os.cpu_count() or 1)


def _cmd_sweep(cfg: RunConfig):
    rep = experiments.equivalence_sweep(
        cfg.potential_spec(),
        cfg.L_seq,
        cfg.interval,
        kappa=cfg.kappa,
        tol=cfg.tol,
        decay_factor=cfg.decay_factor,
        flat_factor=cfg.flat_factor,
        threads=_threads(cfg),
    )
    rows = [(r.L, r.inv_norm_integral, r.g_lb, r.g_th, r.lyapunov_mid) for r in rep.rows]
    result = {
        "verdict": rep.verdict,
        "ratio_range": "not-applicable" if rep.ratio_range is None else list(rep.ratio_range),
        "joint_decay_consistent": experiments.joint_decay_consistent(rep),
        "note": rep.note,
        "rows": [asdict(r) for r in rep.rows],
    }
    return rows, result


def _cmd_bands(cfg: RunConfig):
    vals = sample(cfg.potential_spec(), cfg.L)
    bs = floquet.band_edges(vals, cfg.L)
    rows = [
        (i + 1, bs.lower[i], bs.upper[i], bs.zeros[i], bs.widths[i], int(bs.orientation[i])) for i in range(cfg.L)
    ]
    result = {
        "L": cfg.L,
        "measure": bs.measure(),
        "measure_in_window": bs.measure(cfg.interval),
        "g_th": floquet.thouless_conductance(vals, cfg.L, *cfg.window, bands=bs),
        "max_width_excess": float(np.max(bs.widths) - 2 * math.pi / cfg.L),
    }
    return rows, result


def _cmd_bloch(cfg: RunConfig):
    L = cfg.L
    vals = sample(cfg.potential_spec(), L)
    bs = floquet.band_edges(vals, L, full=False)
    fh = floquet.feynman_hellmann_check(vals, L, samples=cfg.samples, bands=bs)
    keep = bs.widths > 1e-5 * (1.0 + np.abs(bs.bands).max(axis=1))
    rows = []
    ks = floquet.interior_grid(0.05, 0.95, cfg.samples, margin=0.0) * math.pi / L
    for ell in np.nonzero(keep)[0] + 1:
        E = floquet.band_energy(vals, L, np.full(ks.size, ell), ks, bs)
        D, Dp = floquet.discriminant(vals, L, E)
        disc = L * np.sqrt(np.maximum(4.0 - D * D, 0.0)) / np.abs(Dp)
        for st, d in zip(floquet.bloch_states(vals, L, E, bs), disc):
            rows.append((int(st.ell), st.k, st.E, st.dEdk, d, st.multiplier.real, st.multiplier.imag))
    return rows, {"L": L, "feynman_hellmann": fh, "bands_listed": int(keep.sum())}


def _cmd_landauer(cfg: RunConfig):
    vals = sample(cfg.potential_spec(), cfg.L)
    E = np.linspace(cfg.window[0], cfg.window[1], cfg.grid)
    d = ebbm.lb_density_values(vals, cfg.L, cfg.kappa, E)
    J = ebbm.lb_current(vals, cfg.L, cfg.kappa, None, *cfg.window, tol=cfg.tol)
    result = {
        "L": cfg.L,
        "current": J,
        "conductance": J / cfg.interval.width,
        "transparent": ebbm.transparency_check(None, *cfg.window),
        "density_max": float(d.max()),
        "density_min": float(d.min()),
    }
    return list(zip(E, d)), result


def _cmd_thouless(cfg: RunConfig):
    g = floquet.thouless_conductance(cfg.potential_spec(), cfg.L, *cfg.window)
    return [(cfg.L, g)], {"L": cfg.L, "value": g, "reference": 1.0 / (2 * math.pi)}


def _cmd_carmona(cfg: RunConfig):
    bump = transfer.GaussianBump(**cfg.bump)
    table = experiments.carmona_study(cfg.potential_spec(), bump, cfg.L_seq, tol=cfg.carmona_tol, threads=_threads(cfg))
    rows = [(r.L, r.probe, r.oracle, r.deviation, r.resolved, r.unresolved) for r in table]
    return rows, {"oracle": table[0].oracle, "rows": [asdict(r) for r in table]}


def _cmd_audit(cfg: RunConfig):
    ledger = experiments.invariant_suite(cfg.seeds, cfg.L_set, threads=_threads(cfg))
    rows = [(e.module, e.name, e.passed, e.value, e.threshold, e.inputs) for e in ledger]
    failures = [e.to_dict() for e in ledger if not e.passed]
    return rows, {"checks": len(ledger), "failures": failures, "all_passed": not failures}


def _cmd_shrink(cfg: RunConfig):
    rep = experiments.band_shrink_report(cfg.potential_spec(), cfg.L_seq, cfg.interval, threads=_threads(cfg))
    d = rep.to_dict()
    d["constant_first"] = experiments.SHRINK_CONSTANT_FIRST
    return list(rep.rows), d


_DISPATCH = {
    "sweep": _cmd_sweep,
    "bands": _cmd_bands,
    "bloch": _cmd_bloch,
    "landauer": _cmd_landauer,
    "thouless": _cmd_thouless,
    "carmona": _cmd_carmona,
    "audit": _cmd_audit,
    "shrink": _cmd_shrink,
}


def run(cfg: RunConfig) -> int:
    """Dispatch ``cfg.command`` and write its artifacts; returns the exit status."""
    start = time.perf_counter()
    try:
        os.makedirs(cfg.out, exist_ok=True)
        ebbm.UNITARITY.reset()
        rows, result = _DISPATCH[cfg.command](cfg)
        stem = os.path.join(cfg.out, cfg.command)
        emit_csv(stem + ".csv", rows, SCHEMAS[cfg.command])
        summary = {
            "schema_version": JSON_SCHEMA_VERSION,
            "version": f"specband {__version__}",
            "command": cfg.command,
            "config": cfg.to_dict(echo=True),
            "result": result,
            "unitarity": ebbm.UNITARITY.as_dict() if ebbm.UNITARITY.count else None,
            "wall_time_file": f"{cfg.command}.timing.json",
        }
        _dump_json(stem + ".json", summary)
        _emit_plot_script(cfg.out, cfg.command)
        _dump_json(stem + ".timing.json", {"wall_time_s": time.perf_counter() - start})
    except RefusedPreconditionError as exc:
        print(f"specband {cfg.command}: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except InvalidInputError as exc:
        print(f"specband {cfg.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailureError, ArithmeticError) as exc:
        print(f"specband {cfg.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"specband {cfg.command}: I/O failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except SpecbandError as exc:
        print(f"specband {cfg.command}: failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_pair(text: str) -> list[float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected lo,hi")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specband", description="Spectral and transport laboratory for 1D discrete Schrödinger operators.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML run config (all keys optional)")
    p.add_argument("--L", type=_int_list, help="sample length, or a comma list for sweep/carmona/shrink")
    p.add_argument("--window", type=_float_pair, help="energy window lo,hi (use --window=-3,1 for negative lo)")
    p.add_argument("--kappa", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the potential seed (audit: run this seed only)")
    p.add_argument("--emit-config", action="store_true", help="print the resolved config as YAML and exit")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    data = cfg.to_dict()
    data["command"] = args.command
    if args.L is not None:
        if args.command in ("sweep", "carmona", "shrink"):
            data["L_seq"] = args.L
        elif args.command == "audit":
            data["L_set"] = args.L
        else:
            if len(args.L) != 1:
                raise ConfigError(f"{args.command} takes a single --L")
            data["L"] = args.L[0]
    for key in ("window", "kappa", "tol", "threads", "out"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if args.seed is not None:
        if args.command == "audit":
            data["seeds"] = [args.seed]
        else:
            data["potential"] = dict(data["potential"], seed=args.seed)
    return RunConfig.from_dict(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except InvalidInputError as exc:
        print(f"specband: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.emit_config:
        sys.stdout.write(cfg.to_yaml())
        return EXIT_OK
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
