"""Scenario configuration: YAML documents with explicit frequency units.

Frequencies given in ``MHz``, ``kHz`` or ``Hz`` are cyclic (f = omega/2pi)
and converted to rad/s on load; ``rad/s`` values are taken as is.  Every
mapping is checked for unknown keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from .spectra import NoiseSpec
from .synthesis import PARAM_NAMES, PlantSpec

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "UNIT_SCALE",
    "load_config",
    "parse_config",
]

UNIT_SCALE = {
    "MHz": 2 * np.pi * 1e6,
    "kHz": 2 * np.pi * 1e3,
    "Hz": 2 * np.pi,
    "rad/s": 1.0,
}

CONTROLLER_KEYWORDS = ("synthesize-passive", "synthesize-active", "h2-optimal")

_TOP_KEYS = {"units", "scheme", "plant", "noise", "controller", "optimize",
             "spectrum", "system", "system_file", "output", "name"}
_PLANT_KEYS = {"omega_m", "kappa", "gamma", "g", "include_damping"}
_NOISE_KEYS = {"squeeze_r", "thermal_nbar", "effective_mass_kg"}
_OPT_KEYS = {"grid", "kappa_K", "detuning"}
_SPECTRUM_KEYS = {"freq_points", "range"}
_SYSTEM_KEYS = {"A", "B", "C", "E", "H"}
_OUTPUT_KEYS = {"dir", "format"}
_CTRL_FORMS = (
    {"kappa_K", "detuning"},
    {"assignment"},
    {"A_K", "B_K", "C_K"},
    {"R_K", "R1", "R2"},
    {"g_B", "g_D"},
)


class ConfigError(ValueError):
    """Malformed scenario."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; every rate is in rad/s."""

    units: str
    scheme: str
    plant: Optional[PlantSpec]
    noise: NoiseSpec
    controller: Union[str, dict]
    opt_bounds: tuple
    opt_grid: tuple
    freq_points: int
    freq_range: tuple
    system: Optional[dict]
    out_dir: Optional[str]
    out_format: str
    name: str = "scenario"
    metadata: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return UNIT_SCALE[self.units]


def _check_keys(section: str, data: Any, allowed: set) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be a mapping")
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown keys in '{section}': {sorted(extra)}")
    return data


def _number(section: str, value) -> float:
    if isinstance(value, str):
        # YAML 1.1 reads exponents such as 1.0e3 as strings
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{section}' must be a number")
    return float(value)


def _pair(section: str, value) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"'{section}' must be a two-element list")
    return (_number(section, value[0]), _number(section, value[1]))


def _matrix(section: str, value, row: bool = False) -> np.ndarray:
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{section}' is not a numeric matrix") from exc
    if M.ndim == 1:
        M = M[None, :] if row else M[:, None]
    if M.ndim != 2:
        raise ConfigError(f"'{section}' must be a matrix")
    return M


def parse_grid(text: str) -> tuple:
    """``"60x60"`` or ``[60, 60]`` -> ``(60, 60)``."""
    if isinstance(text, (list, tuple)):
        text = "x".join(str(v) for v in text)
    try:
        a, b = str(text).lower().split("x")
        shape = (int(a), int(b))
    except ValueError as exc:
        raise ConfigError(f"grid must look like NxM, got {text!r}") from exc
    if min(shape) < 1:
        raise ConfigError("grid dimensions must be positive")
    return shape


def _parse_controller(raw, scale: float) -> Union[str, dict]:
    if raw is None:
        return "synthesize-passive"
    if isinstance(raw, str):
        if raw not in CONTROLLER_KEYWORDS:
            raise ConfigError(f"unknown controller keyword {raw!r}")
        return raw
    if not isinstance(raw, dict):
        raise ConfigError("'controller' must be a keyword or a mapping")
    keys = set(raw)
    form = next((f for f in _CTRL_FORMS if keys == f), None)
    if form is None:
        raise ConfigError(f"unrecognised controller keys: {sorted(keys)}")
    root = np.sqrt(scale)
    if form == {"kappa_K", "detuning"} or form == {"g_B", "g_D"}:
        return {k: _number(f"controller.{k}", v) * scale for k, v in raw.items()}
    if form == {"assignment"}:
        assign = _check_keys("controller.assignment", raw["assignment"], set(PARAM_NAMES))
        # n_ij are dimensionless, f_ij and g_ij carry sqrt(rate)
        return {"assignment": {
            k: _number(f"controller.assignment.{k}", v) * (1.0 if k.startswith("n") else root)
            for k, v in assign.items()
        }}
    if form == {"A_K", "B_K", "C_K"}:
        return {"A_K": _matrix("controller.A_K", raw["A_K"]) * scale,
                "B_K": _matrix("controller.B_K", raw["B_K"]) * root,
                "C_K": _matrix("controller.C_K", raw["C_K"]) * root}
    return {k: _matrix(f"controller.{k}", raw[k]) * scale for k in ("R_K", "R1", "R2")}


def _load_system(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("system must be a mapping")
    _check_keys("system", raw, _SYSTEM_KEYS)
    missing = {"A", "B", "C", "E", "H"} - set(raw)
    if missing:
        raise ConfigError(f"system is missing {sorted(missing)}")
    A = _matrix("system.A", raw["A"])
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError("system.A must be square")
    out = {"A": A}
    for key in ("B", "C", "E", "H"):
        M = _matrix(f"system.{key}", raw[key], row=key in ("C", "H"))
        if key in ("C", "H") and M.shape[1] != n:
            raise ConfigError(f"system.{key} must have {n} columns")
        if key in ("B", "E") and M.shape[0] != n:
            raise ConfigError(f"system.{key} must have {n} rows")
        out[key] = M
    return out


def parse_config(data: Any, base_dir: Union[str, Path] = ".") -> ScenarioConfig:
    data = _check_keys("top level", data, _TOP_KEYS)
    if "units" not in data:
        raise ConfigError("missing mandatory 'units' key")
    units = data["units"]
    if units not in UNIT_SCALE:
        raise ConfigError(f"unsupported units {units!r}; use one of {sorted(UNIT_SCALE)}")
    scale = UNIT_SCALE[units]
    scheme = data.get("scheme", "coherent")
    if scheme not in ("coherent", "direct"):
        raise ConfigError("scheme must be 'coherent' or 'direct'")

    plant = None
    if "plant" in data:
        p = _check_keys("plant", data["plant"], _PLANT_KEYS)
        missing = {"omega_m", "kappa", "gamma", "g"} - set(p)
        if missing:
            raise ConfigError(f"plant is missing {sorted(missing)}")
        try:
            plant = PlantSpec(
                omega_m=_number("plant.omega_m", p["omega_m"]) * scale,
                kappa=_number("plant.kappa", p["kappa"]) * scale,
                gamma=_number("plant.gamma", p["gamma"]) * scale,
                g=_number("plant.g", p["g"]) * scale,
                include_damping=bool(p.get("include_damping", True)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    n = _check_keys("noise", data.get("noise", {}) or {}, _NOISE_KEYS)
    metadata = {}
    if "effective_mass_kg" in n:
        metadata["effective_mass_kg"] = _number("noise.effective_mass_kg", n["effective_mass_kg"])
    try:
        noise = NoiseSpec(_number("noise.squeeze_r", n.get("squeeze_r", 0.0)),
                          _number("noise.thermal_nbar", n.get("thermal_nbar", 0.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    controller = _parse_controller(data.get("controller"), scale)

    o = _check_keys("optimize", data.get("optimize", {}) or {}, _OPT_KEYS)
    kk = _pair("optimize.kappa_K", o.get("kappa_K", [0.01 * UNIT_SCALE["MHz"] / scale,
                                                     0.5 * UNIT_SCALE["MHz"] / scale]))
    dd = _pair("optimize.detuning", o.get("detuning", [-1.0 * UNIT_SCALE["MHz"] / scale,
                                                       -0.1 * UNIT_SCALE["MHz"] / scale]))
    bounds = ((kk[0] * scale, kk[1] * scale), (dd[0] * scale, dd[1] * scale))
    if not (bounds[0][0] < bounds[0][1] and bounds[1][0] < bounds[1][1]):
        raise ConfigError("empty optimisation bounds")
    grid = parse_grid(o.get("grid", "60x60"))

    s = _check_keys("spectrum", data.get("spectrum", {}) or {}, _SPECTRUM_KEYS)
    points = s.get("freq_points", 400)
    if isinstance(points, bool) or not isinstance(points, int) or points < 2:
        raise ConfigError("spectrum.freq_points must be an integer >= 2")
    frange = _pair("spectrum.range", s.get("range", [1e-3, 1e3]))
    if not 0 < frange[0] < frange[1]:
        raise ConfigError("spectrum.range must satisfy 0 < lo < hi (multiples of omega_m)")

    system = None
    if "system" in data and "system_file" in data:
        raise ConfigError("give either 'system' or 'system_file', not both")
    if "system_file" in data:
        path = Path(base_dir) / str(data["system_file"])
        try:
            raw = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read system file: {exc}") from exc
        system = _load_system(raw)
    elif "system" in data:
        system = _load_system(data["system"])

    out = _check_keys("output", data.get("output", {}) or {}, _OUTPUT_KEYS)
    fmt = out.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError("output.format must be 'csv' or 'json'")

    return ScenarioConfig(
        units=units, scheme=scheme, plant=plant, noise=noise, controller=controller,
        opt_bounds=bounds, opt_grid=grid, freq_points=points, freq_range=frange,
        system=system, out_dir=out.get("dir"), out_format=fmt,
        name=str(data.get("name", "scenario")), metadata=metadata,
    )


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return parse_config(data, base_dir=path.parent)
