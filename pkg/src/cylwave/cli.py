"""Command-line orchestration: config parsing, runs, CSV artifacts, manifests.

Every subcommand resolves its options from an optional YAML config file
(nested blocks: geometry / probe / sweep / solver / output) overridden by
command-line flags, validates them before any computation, runs, writes CSV
artifacts at full repr precision (so identical configs give byte-identical
outputs), and emits a YAML manifest echoing the fully resolved configuration
plus version and wall-clock timing.

Exit codes: 0 success, 1 compute error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from cylwave import __version__
from cylwave.atlas import (
    DEFAULT_GAP_THRESHOLD,
    PAPER_FREQ_STEP,
    cached_purcell_spectrum,
    detect_gaps,
    gap_map,
    gap_map_to_csv,
    point_set,
    scaling_fit,
)
from cylwave.dynamics import decay_rate, fit_stretched, survival
from cylwave.errors import CylwaveError, DomainError
from cylwave.geometry import build_array
from cylwave.mdfa import Signal, mdfa
from cylwave.modes import (
    attach_field,
    det_map,
    mode_field,
    mode_spatial_extent,
    refine_mode,
)
from cylwave.scattering import DEFAULT_LMAX, Polarization
from cylwave.spectra import PurcellSpectrum, wavenumber_from_reduced
from cylwave.tpse import purcell_spatial_map, tpse_spectrum, vertical_emitter

__all__ = ["main"]


class ConfigError(Exception):
    """Configuration is missing, malformed, or violates a precondition."""


_CONFIG_BLOCKS = ("geometry", "probe", "sweep", "solver", "output")

_POLARIZATIONS = {
    "tm": Polarization.TM,
    "te_x": Polarization.TE_X,
    "te_y": Polarization.TE_Y,
}


# ----------------------------------------------------------------- config

def _flatten_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    flat = {}
    for block, content in raw.items():
        if block not in _CONFIG_BLOCKS:
            raise ConfigError(f"unknown config block {block!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"config block {block!r} must be a mapping")
        for key, value in content.items():
            if key in flat:
                raise ConfigError(f"config key {key!r} appears in two blocks")
            flat[key] = value
    return flat


def _resolve(args: argparse.Namespace, keys: dict) -> dict:
    """Merge config-file values under explicit CLI flags; apply defaults.

    keys maps option name -> (required, default).  A missing required option
    is a configuration error.
    """
    file_cfg = _flatten_config(args.config) if args.config else {}
    for key in file_cfg:
        if key not in keys and key not in ("threads", "cache", "seed"):
            raise ConfigError(f"config key {key!r} not understood by this subcommand")
    resolved = {}
    for key, (required, default) in keys.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        elif required:
            raise ConfigError(f"missing required option {key!r}")
        else:
            resolved[key] = default
    for key in ("threads", "cache", "seed"):
        val = getattr(args, key, None)
        resolved[key] = val if val is not None else file_cfg.get(key)
    return resolved


def _polarization(cfg: dict) -> Polarization:
    name = str(cfg["polarization"]).lower()
    if name not in _POLARIZATIONS:
        raise ConfigError(f"polarization must be one of {sorted(_POLARIZATIONS)}")
    return _POLARIZATIONS[name]


def _geometry(cfg: dict):
    ps = point_set(str(cfg["kind"]), int(cfg["count"]))
    arr = build_array(
        ps,
        float(cfg["r_over_d1"]),
        float(cfg["epsilon"]),
        host_index=float(cfg["host_index"]),
        d1_um=(float(cfg["d1_um"]) if cfg.get("d1_um") is not None else None),
    )
    return ps, arr


def _position(cfg: dict):
    pos = cfg["position"]
    if isinstance(pos, str):
        pos = [float(v) for v in pos.split(",")]
    pos = [float(v) for v in pos]
    if len(pos) != 2:
        raise ConfigError("position must have exactly two coordinates")
    return (pos[0], pos[1])


# ------------------------------------------------------------------- io

def _write_csv(path, columns, rows, header_meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        if header_meta is not None:
            fh.write("# " + json.dumps(header_meta, sort_keys=True, default=float) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+.17g}j"
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def _write_manifest(out_path, command, resolved, elapsed):
    manifest = {
        "command": command,
        "version": __version__,
        "config": {k: v for k, v in resolved.items()},
        "wall_seconds": elapsed,
    }
    path = Path(str(out_path) + ".manifest.yaml")
    with open(path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)
    return path


def _read_table(path):
    """Numeric CSV reader tolerating a leading '# ...' JSON header and a column row."""
    meta = None
    rows = []
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read input file: {exc}") from exc
    with fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                try:
                    meta = json.loads(line[1:].strip())
                except json.JSONDecodeError:
                    meta = None
                continue
            cells = line.split(",")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                continue  # column-name row
    if not rows:
        raise ConfigError(f"no numeric rows found in {path}")
    return np.asarray(rows), meta


# ------------------------------------------------------------- commands

_GEOMETRY_KEYS = {
    "kind": (True, None),
    "count": (True, None),
    "r_over_d1": (False, 0.35),
    "epsilon": (False, 10.5),
    "host_index": (False, 1.0),
    "d1_um": (False, None),
}

_SOLVER_KEYS = {"lmax": (False, DEFAULT_LMAX)}
_OUT_KEYS = {"out": (True, None)}


def _cmd_generate_array(args):
    cfg = _resolve(args, {**_GEOMETRY_KEYS, **_OUT_KEYS})
    _, arr = _geometry(cfg)
    rows = [
        (x, y, r, e)
        for (x, y), r, e in zip(arr.positions, arr.radii, arr.permittivities)
    ]
    _write_csv(cfg["out"], ["x", "y", "radius", "epsilon"], rows,
               header_meta={"host_index": arr.host_index, "count": len(arr)})
    return cfg


def _spectrum_from_cfg(cfg):
    ps, arr = _geometry(cfg)
    freqs = np.arange(
        float(cfg["freq_min"]),
        float(cfg["freq_max"]) + float(cfg["freq_step"]) / 2,
        float(cfg["freq_step"]),
    )
    return cached_purcell_spectrum(
        arr, _position(cfg), freqs, _polarization(cfg), int(cfg["lmax"]),
        d1_bar=ps.d1_bar, cache_dir=cfg.get("cache"),
    )


_SPECTRUM_KEYS = {
    **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
    "position": (False, (0.0, 0.0)),
    "polarization": (False, "tm"),
    "freq_min": (True, None),
    "freq_max": (True, None),
    "freq_step": (False, PAPER_FREQ_STEP),
}


def _cmd_purcell_spectrum(args):
    cfg = _resolve(args, _SPECTRUM_KEYS)
    spec = _spectrum_from_cfg(cfg)
    _write_csv(cfg["out"], ["omega", "purcell"], zip(spec.omega, spec.values))
    return cfg


def _cmd_gap_map(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "polarization": (False, "tm"),
        "param_axis": (False, "r_over_d1"),
        "param_min": (True, None),
        "param_max": (True, None),
        "param_num": (False, 101),
        "freq_min": (True, None),
        "freq_max": (True, None),
        "freq_step": (False, PAPER_FREQ_STEP),
        "position": (False, (0.0, 0.0)),
    })
    params = np.linspace(float(cfg["param_min"]), float(cfg["param_max"]), int(cfg["param_num"]))
    freqs = np.arange(
        float(cfg["freq_min"]), float(cfg["freq_max"]) + float(cfg["freq_step"]) / 2,
        float(cfg["freq_step"]),
    )
    gm = gap_map(
        str(cfg["kind"]), int(cfg["count"]), str(cfg["param_axis"]), params, freqs,
        polarization=_polarization(cfg), position=_position(cfg),
        epsilon=float(cfg["epsilon"]), r_over_d1=float(cfg["r_over_d1"]),
        host_index=float(cfg["host_index"]), lmax=int(cfg["lmax"]),
        cache_dir=cfg.get("cache"),
    )
    gap_map_to_csv(gm, cfg["out"])
    return cfg


def _cmd_scaling(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "counts": (True, None),
        "freq_min": (True, None),
        "freq_max": (True, None),
        "freq_step": (False, PAPER_FREQ_STEP),
        "gap_index": (False, 0),
        "threshold": (False, DEFAULT_GAP_THRESHOLD),
        "polarization": (False, "tm"),
        "position": (False, (0.0, 0.0)),
    })
    counts = cfg["counts"]
    if isinstance(counts, str):
        counts = [int(c) for c in counts.split(",")]
    fit = scaling_fit(
        str(cfg["kind"]), [int(c) for c in counts],
        (float(cfg["freq_min"]), float(cfg["freq_max"])),
        gap_index=int(cfg["gap_index"]), polarization=_polarization(cfg),
        epsilon=float(cfg["epsilon"]), r_over_d1=float(cfg["r_over_d1"]),
        host_index=float(cfg["host_index"]), position=_position(cfg),
        freq_step=float(cfg["freq_step"]), threshold=float(cfg["threshold"]),
        lmax=int(cfg["lmax"]), cache_dir=cfg.get("cache"),
    )
    _write_csv(
        cfg["out"], ["size", "midgap_p"], zip(fit.sizes, fit.midgap_p),
        header_meta={
            "model": fit.model, "exponent": fit.exponent,
            "r2_exp": fit.r2_exp, "r2_pow": fit.r2_pow,
        },
    )
    return cfg


def _cmd_det_map(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "polarization": (False, "tm"),
        "re_min": (True, None),
        "re_max": (True, None),
        "re_step": (False, 3e-4),
        "im_log_min": (True, None),
        "im_log_max": (True, None),
        "im_log_step": (False, 0.07),
    })
    _, arr = _geometry(cfg)
    dm = det_map(
        arr, (float(cfg["re_min"]), float(cfg["re_max"])),
        (float(cfg["im_log_min"]), float(cfg["im_log_max"])),
        float(cfg["re_step"]), float(cfg["im_log_step"]),
        polarization=_polarization(cfg), lmax=int(cfg["lmax"]),
    )
    rows = [(a, *row) for a, row in zip(dm.im_log10_grid, dm.values)]
    _write_csv(
        cfg["out"], ["im_log10"] + [f"re_{i}" for i in range(dm.re_grid.size)], rows,
        header_meta={"re_grid": dm.re_grid.tolist(),
                     "failures": [repr(f) for f in dm.failures]},
    )
    return cfg


def _field_window(arr, margin=0.2):
    extent = float(np.max(np.hypot(*arr.positions.T)) + arr.radii.max())
    half = extent * (1.0 + margin)
    return ((-half, half), (-half, half))


def _cmd_find_modes(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "polarization": (False, "tm"),
        "seeds": (True, None),
        "mse_resolution": (False, None),
    })
    _, arr = _geometry(cfg)
    seeds, _ = _read_table(cfg["seeds"])
    pol, lmax = _polarization(cfg), int(cfg["lmax"])
    rows = []
    for seed in seeds:
        re_k, im_k = float(seed[0]), float(seed[1])
        record = refine_mode(arr, complex(re_k, im_k), pol, lmax)
        mse = np.nan
        if cfg["mse_resolution"] is not None:
            res = float(cfg["mse_resolution"])
            _, _, field = mode_field(arr, record, _field_window(arr), res, pol, lmax)
            if field.ndim == 3:
                field = field[0]
            record = attach_field(record, field, res * res)
            mse = record.mse
        rows.append((record.k_tilde.real, record.k_tilde.imag, record.q_factor, mse))
    _write_csv(cfg["out"], ["re_k", "im_k", "Q", "mse"], rows)
    return cfg


def _cmd_mode_field(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "polarization": (False, "tm"),
        "k_re": (True, None),
        "k_im": (True, None),
        "resolution": (False, 0.012),
        "window_half": (False, None),
    })
    _, arr = _geometry(cfg)
    if cfg["window_half"] is not None:
        half = float(cfg["window_half"])
        window = ((-half, half), (-half, half))
    else:
        window = _field_window(arr)
    res = float(cfg["resolution"])
    xs, ys, field = mode_field(
        arr, complex(float(cfg["k_re"]), float(cfg["k_im"])), window, res,
        _polarization(cfg), int(cfg["lmax"]),
    )
    if field.ndim == 3:
        field = field[0]
    rows = [(y, *np.abs(row)) for y, row in zip(ys, field)]
    _write_csv(
        cfg["out"], ["y"] + [f"x_{i}" for i in range(xs.size)], rows,
        header_meta={
            "window": [list(window[0]), list(window[1])],
            "resolution": res,
            "k_tilde": [float(cfg["k_re"]), float(cfg["k_im"])],
            "quantity": "abs_field",
        },
    )
    return cfg


def _cmd_mse(args):
    cfg = _resolve(args, {"input": (True, None), **_OUT_KEYS})
    table, meta = _read_table(cfg["input"])
    field = table[:, 1:]
    if meta is None or "resolution" not in meta:
        raise ConfigError("field CSV lacks the resolution header")
    res = float(meta["resolution"])
    value = mode_spatial_extent(field, res * res)
    _write_csv(cfg["out"], ["mse"], [(value,)])
    return cfg


def _cmd_mdfa(args):
    cfg = _resolve(args, {
        "input": (True, None), **_OUT_KEYS,
        "q_min": (False, -5.0),
        "q_max": (False, 5.0),
        "q_num": (False, 41),
    })
    table, _ = _read_table(cfg["input"])
    samples = table[:, -1]
    q = np.linspace(float(cfg["q_min"]), float(cfg["q_max"]), int(cfg["q_num"]))
    res = mdfa(Signal(samples, meta=str(cfg["input"])), q_grid=q)
    rows = zip(res.q_grid, res.H, res.tau, res.alpha, res.D, res.r2)
    _write_csv(cfg["out"], ["q", "H", "tau", "alpha", "D", "R2"], rows)
    return cfg


def _cmd_decay(args):
    cfg = _resolve(args, {
        "spectrum": (True, None), **_OUT_KEYS,
        "omega_if": (True, None),
        "t_max": (False, 100.0),
        "t_num": (False, 400),
    })
    table, _ = _read_table(cfg["spectrum"])
    spec = PurcellSpectrum(table[:, 0], table[:, 1])
    t = np.linspace(0.0, float(cfg["t_max"]), int(cfg["t_num"]))
    trace = survival(decay_rate(spec, float(cfg["omega_if"]), t))
    try:
        trace = fit_stretched(trace)
        fit_meta = {"beta": trace.beta_fit, "ds": trace.ds_fit,
                    "phi": trace.phi, "r2": trace.r2}
    except CylwaveError:
        fit_meta = None
    _write_csv(
        cfg["out"], ["t", "gamma", "survival"],
        zip(trace.times, trace.gamma_t, trace.survival),
        header_meta={"omega_if": float(cfg["omega_if"]), "fit": fit_meta},
    )
    return cfg


def _cmd_tpse_spectrum(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "position": (False, (0.0, 0.0)),
        "omega_if": (True, None),
        "resolution": (True, None),
    })
    _, arr = _geometry(cfg)
    emitter = vertical_emitter(float(cfg["omega_if"]))
    spec = tpse_spectrum(
        arr, _position(cfg), emitter, float(cfg["resolution"]), lmax=int(cfg["lmax"]),
    )
    _write_csv(
        cfg["out"], ["omega_over_omega_if", "ratio"],
        zip(spec.omega_over_if, spec.ratio),
        header_meta={"omega_if": emitter.omega_if},
    )
    return cfg


def _cmd_tpse_map(args):
    cfg = _resolve(args, {
        **_GEOMETRY_KEYS, **_SOLVER_KEYS, **_OUT_KEYS,
        "polarization": (False, "tm"),
        "freq": (True, None),
        "resolution": (False, 0.01),
        "window_half": (False, None),
    })
    ps, arr = _geometry(cfg)
    k0 = wavenumber_from_reduced(float(cfg["freq"]), ps.d1_bar if arr.positions.size else 1.0)
    if cfg["window_half"] is not None:
        half = float(cfg["window_half"])
        window = ((-half, half), (-half, half))
    else:
        window = _field_window(arr)
    res = float(cfg["resolution"])
    xs, ys, grid = purcell_spatial_map(
        arr, k0, _polarization(cfg), window, res, lmax=int(cfg["lmax"]),
    )
    rows = [(y, *row) for y, row in zip(ys, grid)]
    _write_csv(
        cfg["out"], ["y"] + [f"x_{i}" for i in range(xs.size)], rows,
        header_meta={
            "window": [list(window[0]), list(window[1])],
            "resolution": res,
            "reduced_frequency": float(cfg["freq"]),
        },
    )
    return cfg


_COMMANDS = {
    "generate-array": _cmd_generate_array,
    "purcell-spectrum": _cmd_purcell_spectrum,
    "gap-map": _cmd_gap_map,
    "scaling": _cmd_scaling,
    "det-map": _cmd_det_map,
    "find-modes": _cmd_find_modes,
    "mode-field": _cmd_mode_field,
    "mse": _cmd_mse,
    "mdfa": _cmd_mdfa,
    "decay": _cmd_decay,
    "tpse-spectrum": _cmd_tpse_spectrum,
    "tpse-map": _cmd_tpse_map,
}

_FLAG_TYPES = {
    "count": int, "param_num": int, "gap_index": int, "lmax": int,
    "q_num": int, "t_num": int,
}

_STRING_FLAGS = {
    "kind", "polarization", "param_axis", "position", "counts",
    "seeds", "input", "spectrum", "out",
}

_COMMAND_FLAGS = {
    "generate-array": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um", "out"],
    "purcell-spectrum": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um",
                         "lmax", "position", "polarization", "freq_min", "freq_max",
                         "freq_step", "out"],
    "gap-map": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um", "lmax",
                "polarization", "param_axis", "param_min", "param_max", "param_num",
                "freq_min", "freq_max", "freq_step", "position", "out"],
    "scaling": ["kind", "counts", "r_over_d1", "epsilon", "host_index", "d1_um", "lmax",
                "freq_min", "freq_max", "freq_step", "gap_index", "threshold",
                "polarization", "position", "out", "count"],
    "det-map": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um", "lmax",
                "polarization", "re_min", "re_max", "re_step", "im_log_min",
                "im_log_max", "im_log_step", "out"],
    "find-modes": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um",
                   "lmax", "polarization", "seeds", "mse_resolution", "out"],
    "mode-field": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um",
                   "lmax", "polarization", "k_re", "k_im", "resolution",
                   "window_half", "out"],
    "mse": ["input", "out"],
    "mdfa": ["input", "q_min", "q_max", "q_num", "out"],
    "decay": ["spectrum", "omega_if", "t_max", "t_num", "out"],
    "tpse-spectrum": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um",
                      "lmax", "position", "omega_if", "resolution", "out"],
    "tpse-map": ["kind", "count", "r_over_d1", "epsilon", "host_index", "d1_um",
                 "lmax", "polarization", "freq", "resolution", "window_half", "out"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cylwave",
        description="Multiple-scattering LDOS engine for cylinder arrays",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, flags in _COMMAND_FLAGS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--cache", default=None)
        p.add_argument("--seed", type=int, default=None)
        for flag in flags:
            kind = _FLAG_TYPES.get(flag, None if flag in _STRING_FLAGS else float)
            p.add_argument(
                "--" + flag.replace("_", "-"), dest=flag, type=kind, default=None,
            )
        p.set_defaults(func=_COMMANDS[name], command=name)
    return parser


def _apply_threads(threads):
    if threads is None:
        return
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.monotonic()
    try:
        _apply_threads(args.threads)
        cfg = args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CylwaveError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(cfg["out"], args.command, cfg, time.monotonic() - start)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
