"""Sectioned key-value configuration files.

The format is INI-like: ``[section]`` headers, ``key = value`` lines and
``#`` comments. Every key is optional; missing keys take the defaults in
:data:`DEFAULTS`, which reproduce the 8 x 8, 16-QAM, 2 kHz / 4 GHz setup.
Overrides are ``section.key=value`` strings applied after the file.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import replace
from pathlib import Path as FilePath

import numpy as np

from .comms import ModulationParams
from .dd_core import FrameParams, Path
from .errors import ConfigError
from .precoder import SolverOptions
from .sim import SCHEMES, SimConfig

DEFAULTS: dict[str, dict[str, str]] = {
    "frame": {
        "m": "8",
        "n": "8",
        "subcarrier_spacing": "2000",
        "carrier_freq": "4e9",
    },
    "modulation": {
        "order": "16",
        "equalizer": "zf",
    },
    "channel": {
        "gain": "1.0",
        "delay_tap": "1",
        "doppler_tap": "1",
        "l_max": "4",
        "k_max": "2",
        "power_budget": "64",
        "snr_db": "10",
    },
    "sensing": {
        "gain": "1.0",
        "delay_tap": "4",
        "doppler_tap": "2",
        "crb_threshold": "3e-7",
        "noise_offset_db": "70",
    },
    "solver": {
        "tol": "1e-2",
        "max_iter": "100000",
        "step": "1.0",
        "step_rule": "newton",
        "polish": "true",
        "polish_tol": "1e-11",
        "validity": "corrected",
    },
    "sweep": {
        "snr_db": "10:30:2",
        "crb_thresholds": "8.5e-9, 9e-9, 1e-8, 1.2e-8, 3e-8, 3e-7",
        "crb_snr_db": "25",
        "frames_per_point": "auto",
        "max_frames": "1000000",
        "seed": "2024",
        "schemes": ", ".join(SCHEMES),
    },
}


def _float(value: str) -> float:
    return float(value)


def _int(value: str) -> int:
    f = float(value)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(f)


def _bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _complex(value: str) -> complex:
    return complex(value.replace(" ", ""))


def _grid(value: str) -> tuple[float, ...]:
    """Comma list, or ``start:stop:step`` with an inclusive stop."""
    value = value.strip()
    if ":" in value and "," not in value:
        start, stop, step = (float(v) for v in value.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise ValueError(f"empty grid {value!r}")
        return tuple(float(x) for x in np.round(start + step * np.arange(count), 12))
    items = [v for v in (p.strip() for p in value.split(",")) if v]
    if not items:
        raise ValueError("grid must not be empty")
    return tuple(float(v) for v in items)


def _names(value: str) -> tuple[str, ...]:
    return tuple(v for v in (p.strip() for p in value.split(",")) if v)


def _read(path, overrides) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    parser.optionxform = str
    try:
        text = FilePath(path).read_text() if path is not None else ""
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    values = {section: dict(keys) for section, keys in DEFAULTS.items()}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
            values[section][key] = value
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        section, _, key = dotted.strip().partition(".")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"override names unknown key {dotted.strip()!r}")
        values[section][key] = value.strip()
    return values


def parse_config(path=None, overrides=()) -> SimConfig:
    """Build a :class:`SimConfig` from a config file and overrides.

    Raises :class:`ConfigError` naming the offending key on any malformed
    value or violated invariant.
    """
    raw = _read(path, overrides)

    def get(section, key, conv):
        value = raw[section][key]
        try:
            return conv(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}.{key} = {value!r}: {exc}") from exc

    def build(what, fn):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid {what}: {exc}") from exc

    frame = build(
        "[frame]",
        lambda: FrameParams(
            get("frame", "m", _int),
            get("frame", "n", _int),
            get("frame", "subcarrier_spacing", _float),
            get("frame", "carrier_freq", _float),
        ),
    )
    equalizer = get("modulation", "equalizer", str).strip().lower()
    if equalizer not in ("zf", "mmse"):
        raise ConfigError(f"modulation.equalizer must be 'zf' or 'mmse', got {equalizer!r}")
    modulation = build(
        "[modulation]",
        lambda: ModulationParams(get("modulation", "order", _int), 0 if equalizer == "zf" else 1, 1.0),
    )

    l_max = get("channel", "l_max", _int)
    k_max = get("channel", "k_max", _int)

    def path_for(section):
        p = build(
            f"[{section}] path",
            lambda: Path(get(section, "gain", _complex), get(section, "delay_tap", _int), get(section, "doppler_tap", _int)),
        )
        if p.delay_tap > l_max:
            raise ConfigError(f"{section}.delay_tap = {p.delay_tap} exceeds channel.l_max = {l_max}")
        if abs(p.doppler_tap) > k_max:
            raise ConfigError(f"|{section}.doppler_tap| = {abs(p.doppler_tap)} exceeds channel.k_max = {k_max}")
        return p

    comm_path = path_for("channel")
    sense_path = path_for("sensing")
    if comm_path.gain == 0:
        raise ConfigError("channel.gain must be non-zero")

    solver = build(
        "[solver]",
        lambda: SolverOptions(
            tol=get("solver", "tol", _float),
            max_iter=get("solver", "max_iter", _int),
            step=get("solver", "step", _float),
            step_rule=get("solver", "step_rule", str).strip(),
            polish=get("solver", "polish", _bool),
            polish_tol=get("solver", "polish_tol", _float),
            validity=get("solver", "validity", str).strip(),
        ),
    )
    if solver.step_rule not in ("newton", "diminishing"):
        raise ConfigError(f"solver.step_rule must be 'newton' or 'diminishing', got {solver.step_rule!r}")
    if solver.validity not in ("corrected", "printed"):
        raise ConfigError(f"solver.validity must be 'corrected' or 'printed', got {solver.validity!r}")
    if not solver.tol > 0 or solver.max_iter < 1 or not solver.step > 0:
        raise ConfigError("solver.tol, solver.max_iter and solver.step must be positive")

    fpp = raw["sweep"]["frames_per_point"].strip().lower()
    frames_per_point = None if fpp == "auto" else get("sweep", "frames_per_point", _int)
    schemes = get("sweep", "schemes", _names)
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"sweep.schemes: unknown scheme {s!r}")
    thresholds = get("sweep", "crb_thresholds", _grid)
    if any(t <= 0 for t in thresholds):
        raise ConfigError("sweep.crb_thresholds must be positive")

    return build(
        "configuration",
        lambda: SimConfig(
            frame=frame,
            modulation=modulation,
            comm_path=comm_path,
            sense_path=sense_path,
            power_budget=get("channel", "power_budget", _float),
            crb_threshold=get("sensing", "crb_threshold", _float),
            sensing_offset_db=get("sensing", "noise_offset_db", _float),
            snr_db=get("channel", "snr_db", _float),
            snr_grid_db=get("sweep", "snr_db", _grid),
            crb_threshold_grid=thresholds,
            crb_snr_db=get("sweep", "crb_snr_db", _grid),
            frames_per_point=frames_per_point,
            max_frames=get("sweep", "max_frames", _int),
            rng_seed=get("sweep", "seed", _int),
            scheme=f"proposed-{equalizer}",
            schemes=schemes,
            solver=solver,
        ),
    )


def with_seed(config: SimConfig, seed: int | None) -> SimConfig:
    return config if seed is None else replace(config, rng_seed=seed)
