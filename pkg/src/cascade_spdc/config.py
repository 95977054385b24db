"""JSON experiment configs -> validated model objects.

Every validation failure raises :class:`ConfigError` naming the offending key
path, e.g. ``segments[1].dispersion.pump.V.b1``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

from .biphoton import CascadeConfig, FrequencyGrid, MiddleSection
from .optics import (
    DispersionProfile,
    JonesMatrix,
    Medium,
    PumpModel,
    make_unitary,
    wavelength_nm_to_omega,
)
from .spectrometer import SpectrometerModel

PHASE_MATCH_RTOL = 1e-12


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def load_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("", "top level of a config must be an object")
    return doc


def config_hash(doc: dict) -> str:
    """SHA-256 of the canonical JSON encoding (sorted keys, no whitespace)."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("ascii")).hexdigest()


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _get(obj: dict, key: str, path: str, default: Any = ...):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise ConfigError(_join(path, key), "missing required key")
        return default
    return obj[key]


def _number(obj: dict, key: str, path: str, default: Any = ...) -> float:
    if default is not ... and isinstance(obj, dict) and key not in obj:
        return default
    value = _get(obj, key, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(_join(path, key), f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise ConfigError(_join(path, key), "must be finite")
    return float(value)


def _integer(obj: dict, key: str, path: str, default: Any = ...) -> int:
    if default is not ... and isinstance(obj, dict) and key not in obj:
        return default
    value = _get(obj, key, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(_join(path, key), f"expected an integer, got {type(value).__name__}")
    return value


def _list(obj: dict, key: str, path: str, default: Any = ...) -> list:
    value = _get(obj, key, path, default)
    if not isinstance(value, list):
        raise ConfigError(_join(path, key), f"expected a list, got {type(value).__name__}")
    return value


def _taylor(obj, path: str) -> tuple[float, float, float]:
    return tuple(_number(obj, k, path) for k in ("b0", "b1", "b2"))


def _band(obj, path: str) -> tuple[tuple, tuple]:
    """(H, V) coefficient triples; a band without H/V keys is isotropic."""
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    if "H" in obj or "V" in obj:
        return _taylor(_get(obj, "H", path), _join(path, "H")), _taylor(_get(obj, "V", path), _join(path, "V"))
    iso = _taylor(obj, path)
    return iso, iso


def parse_dispersion(spec, path: str, materials: dict) -> DispersionProfile:
    if isinstance(spec, str):
        if spec not in materials:
            raise ConfigError(path, f"unknown material {spec!r}")
        return parse_dispersion(materials[spec], f"materials.{spec}", materials)
    pump_h, pump_v = _band(_get(spec, "pump", path), _join(path, "pump"))
    dc_h, dc_v = _band(_get(spec, "dc", path), _join(path, "dc"))
    try:
        return DispersionProfile(
            pump_h[0], pump_v[0], pump_h[1], pump_v[1], pump_h[2], pump_v[2],
            dc_h[0], dc_v[0], dc_h[1], dc_v[1], dc_h[2], dc_v[2],
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_pump(obj, path: str = "pump") -> PumpModel:
    if "omega_bar_p_rad_s" in obj:
        omega = _number(obj, "omega_bar_p_rad_s", path)
    elif "pump_wavelength_nm" in obj:
        wl = _number(obj, "pump_wavelength_nm", path)
        if not wl > 0:
            raise ConfigError(_join(path, "pump_wavelength_nm"), "must be > 0")
        omega = float(wavelength_nm_to_omega(wl))
    else:
        raise ConfigError(path, "needs omega_bar_p_rad_s or pump_wavelength_nm")
    try:
        return PumpModel(
            omega_bar_p=omega,
            coherence_time=_number(obj, "coherence_time_s", path),
            mean_photon_rate=_number(obj, "mean_photon_rate", path, 1.0),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _segment(obj, path: str, materials: dict) -> Medium:
    profile = parse_dispersion(_get(obj, "dispersion", path), _join(path, "dispersion"), materials)
    length = _number(obj, "length_m", path)
    if not length > 0:
        raise ConfigError(_join(path, "length_m"), f"must be > 0, got {length}")
    matched = _get(obj, "phase_matched", path, False)
    if not isinstance(matched, bool):
        raise ConfigError(_join(path, "phase_matched"), "expected true or false")
    identity_kqpm = profile.beta0_pump_V - profile.beta0_dc_H - profile.beta0_dc_V
    if "k_qpm_rad_m" in obj:
        k_qpm = _number(obj, "k_qpm_rad_m", path)
        if matched and abs(k_qpm - identity_kqpm) > PHASE_MATCH_RTOL * max(abs(profile.beta0_pump_V), 1.0):
            raise ConfigError(
                _join(path, "k_qpm_rad_m"),
                "segment is flagged phase_matched but beta0_pump_V != beta0_dc_H + beta0_dc_V + k_qpm "
                f"({profile.beta0_pump_V!r} vs {profile.beta0_dc_H + profile.beta0_dc_V + k_qpm!r})",
            )
    elif matched:
        k_qpm = identity_kqpm
    else:
        raise ConfigError(_join(path, "k_qpm_rad_m"), "missing required key (or set phase_matched: true)")
    return Medium(profile, length, "nonlinear", k_qpm)


def _middle(obj, path: str, materials: dict, default_phi_p: float) -> MiddleSection:
    profile = parse_dispersion(_get(obj, "dispersion", path), _join(path, "dispersion"), materials)
    length = _number(obj, "length_m", path)
    if not length >= 0:
        raise ConfigError(_join(path, "length_m"), f"must be >= 0, got {length}")
    jpath = _join(path, "jones_dc")
    jd = _get(obj, "jones_dc", path, None)
    if jd is None:
        jones = JonesMatrix.identity()
    else:
        jones = make_unitary(_number(jd, "theta", jpath, 0.0), _number(jd, "phi1", jpath, 0.0), _number(jd, "phi2", jpath, 0.0))
        if jones.is_identity():
            jones = JonesMatrix.identity()
    ppath = _join(path, "jones_pump")
    jp = _get(obj, "jones_pump", path, {})
    mag = _number(jp, "u4p_mag", ppath, 1.0)
    if not 0 <= mag <= 1:
        raise ConfigError(_join(ppath, "u4p_mag"), f"must lie in [0, 1], got {mag}")
    phi = _number(jp, "phi_p", ppath, default_phi_p)
    u4p = complex(mag * math.cos(phi), mag * math.sin(phi))
    return MiddleSection(Medium(profile, length, "linear", 0.0), jones, u4p)


def parse_grid(obj, path: str = "grid") -> FrequencyGrid:
    span = _number(obj, "span_rad_s", path)
    points = _integer(obj, "points", path)
    try:
        return FrequencyGrid(span, points)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_cascade(doc: dict, path: str = "", grid_points: int | None = None) -> CascadeConfig:
    """CascadeConfig from an already-loaded document (or one state of a multi-state file)."""
    materials = _get(doc, "materials", path, {})
    pump_doc = _get(doc, "pump", path)
    pump = parse_pump(pump_doc, _join(path, "pump"))
    phi_p = _number(pump_doc, "phi_p_rad", _join(path, "pump"), 0.0)
    seg_docs = _list(doc, "segments", path)
    mid_docs = _list(doc, "middles", path, [])
    if not seg_docs:
        raise ConfigError(_join(path, "segments"), "needs at least one segment")
    if len(mid_docs) != len(seg_docs) - 1:
        raise ConfigError(
            _join(path, "middles"),
            f"{len(seg_docs)} segments need {len(seg_docs) - 1} middle sections, got {len(mid_docs)}",
        )
    segments = [_segment(s, _join(_join(path, "segments"), i), materials) for i, s in enumerate(seg_docs)]
    middles = [_middle(m, _join(_join(path, "middles"), i), materials, phi_p) for i, m in enumerate(mid_docs)]
    if len(segments) != 2 and any(not m.jones_dc.is_identity() for m in middles):
        raise ConfigError(_join(path, "middles"), "polarization-transforming middles need exactly 2 segments")
    weights = None
    if any("weight" in s for s in seg_docs):
        weights = []
        for i, s in enumerate(seg_docs):
            w = _number(s, "weight", _join(_join(path, "segments"), i), 1.0)
            if not w >= 0:
                raise ConfigError(_join(_join(_join(path, "segments"), i), "weight"), "must be >= 0")
            weights.append(w)
    grid_doc = _get(doc, "grid", path)
    grid = parse_grid(grid_doc, _join(path, "grid"))
    if grid_points is not None:
        try:
            grid = FrequencyGrid(grid.span, grid_points)
        except ValueError as exc:
            raise ConfigError("--grid-points", str(exc)) from exc
    mode = _get(doc, "mode", path, "auto")
    if mode not in ("coherent", "incoherent", "auto"):
        raise ConfigError(_join(path, "mode"), f"expected coherent, incoherent or auto, got {mode!r}")
    return CascadeConfig(tuple(segments), tuple(middles), pump, grid, mode, weights)


def parse_config(path, grid_points: int | None = None) -> CascadeConfig:
    return build_cascade(load_document(path), grid_points=grid_points)


def tomography_states(doc: dict, grid_points: int | None = None) -> list[tuple[str, CascadeConfig, dict | None]]:
    """Labelled cascades from ``states``; each state inherits top-level keys it omits."""
    states = _list(doc, "states", "")
    out = []
    for i, state in enumerate(states):
        path = f"states[{i}]"
        if not isinstance(state, dict):
            raise ConfigError(path, "expected an object")
        label = _get(state, "label", path)
        if not isinstance(label, str):
            raise ConfigError(_join(path, "label"), "expected a string")
        merged = {k: v for k, v in doc.items() if k != "states"}
        merged.update(state)
        measured = state.get("measured")
        out.append((label, build_cascade(merged, path, grid_points), measured))
    return out


def parse_spectrometer(doc: dict) -> SpectrometerModel:
    section = _get(doc, "spectrometer", "")
    path = "spectrometer"
    try:
        return SpectrometerModel(
            _number(section, "dispersion_length_ps_nm", path),
            _number(section, "reference_wavelength_nm", path),
            _number(section, "coincidence_window_ps", path),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from exc


def section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(name, "expected an object")
    return value


def scaling_n_values(doc: dict) -> list[int]:
    values = _list(section(doc, "scaling"), "n_values", "scaling", [1, 2, 3, 4, 6, 8])
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"scaling.n_values[{i}]", "expected a positive integer")
    if len(values) < 2:
        raise ConfigError("scaling.n_values", "needs at least two entries")
    return values


def theta_grid(doc: dict) -> tuple[float, float, int]:
    s = section(doc, "theta_sweep")
    points = _integer(s, "points", "theta_sweep", 50)
    if points < 2:
        raise ConfigError("theta_sweep.points", "needs at least 2 points")
    return _number(s, "start", "theta_sweep", 0.0), _number(s, "stop", "theta_sweep", math.pi / 4), points


def tomography_settings(doc: dict) -> tuple[int, int]:
    s = section(doc, "tomography")
    total = _integer(s, "total_pairs", "tomography", 100_000)
    seeds = _integer(s, "seeds", "tomography", 100)
    if total <= 0:
        raise ConfigError("tomography.total_pairs", "must be positive")
    if seeds <= 0:
        raise ConfigError("tomography.seeds", "must be positive")
    return total, seeds


def polstate_detuning(doc: dict) -> float | None:
    s = section(doc, "polstate")
    if "detuning_rad_s" not in s:
        return None
    return _number(s, "detuning_rad_s", "polstate")
