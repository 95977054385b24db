"""Biphoton amplitudes, coherence-weighted spectra and the N-segment scaling study.

The pump is treated in the cw limit: for a signal detuning ``Omega`` the idler
sits at ``-Omega`` (both measured from ``omega_bar_p / 2``) and the finite pump
linewidth only enters through the pairwise coherence weights
``exp(-|delay| / coherence_time)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .optics import (
    JonesMatrix,
    Medium,
    PumpModel,
    group_delay_mismatch,
    linear_phase_mismatch,
    omega_to_wavelength_nm,
    phase_mismatch_type2,
    pump_lineshape,
    sinc,
    walkoff_phases,
)

CHANNELS = ("HH", "HV", "VH", "VV")
Mode = Literal["coherent", "incoherent", "auto"]


class UnsupportedTransformError(ValueError):
    """Polarization-transforming middles were requested for a cascade of N != 2."""


class FlatSpectrumError(ValueError):
    pass


class NumericalError(RuntimeError):
    """A numerical check (convergence, physicality) failed."""


@dataclass(frozen=True)
class MiddleSection:
    """Linear section between two nonlinear segments.

    ``u4p`` is the V->V element of the pump Jones matrix; its phase is the
    pump phase offset added to the interference term.
    """

    medium: Medium
    jones_dc: JonesMatrix = field(default_factory=JonesMatrix.identity)
    u4p: complex = 1.0 + 0j

    def __post_init__(self):
        if self.medium.kind != "linear":
            raise ValueError("middle section medium must be linear")


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of signal detunings; ``span`` is the full width in rad/s."""

    span: float
    points: int

    def __post_init__(self):
        if not self.span > 0:
            raise ValueError(f"grid span must be > 0, got {self.span!r}")
        if self.points < 16 or self.points % 2 == 0:
            raise ValueError(f"grid points must be odd and >= 16, got {self.points}")

    def detunings(self) -> np.ndarray:
        return np.linspace(-0.5 * self.span, 0.5 * self.span, self.points)

    @property
    def step(self) -> float:
        return self.span / (self.points - 1)


@dataclass(frozen=True)
class CascadeConfig:
    segments: tuple[Medium, ...]
    middles: tuple[MiddleSection, ...]
    pump: PumpModel
    grid: FrequencyGrid
    mode: Mode = "auto"
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "middles", tuple(self.middles))
        if not self.segments:
            raise ValueError("a cascade needs at least one nonlinear segment")
        for i, seg in enumerate(self.segments):
            if seg.kind != "nonlinear":
                raise ValueError(f"segments[{i}] must be a nonlinear medium")
        if len(self.middles) != len(self.segments) - 1:
            raise ValueError(
                f"expected {len(self.segments) - 1} middle sections for "
                f"{len(self.segments)} segments, got {len(self.middles)}"
            )
        if self.mode not in ("coherent", "incoherent", "auto"):
            raise ValueError(f"mode must be coherent, incoherent or auto, got {self.mode!r}")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.segments):
                raise ValueError("weights must have one entry per segment")
            if any(not x >= 0 for x in w):
                raise ValueError("segment weights must be non-negative")
            object.__setattr__(self, "weights", w)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def segment_weights(self) -> tuple[float, ...]:
        return self.weights if self.weights is not None else (1.0,) * self.n_segments

    @property
    def is_polarizing(self) -> bool:
        return any(not m.jones_dc.is_identity() for m in self.middles)

    def with_points(self, points: int) -> CascadeConfig:
        return replace(self, grid=FrequencyGrid(self.grid.span, points))


@dataclass
class SegmentAmplitude:
    """Complex polarization amplitudes from one segment (arrays over the grid)."""

    a_hh: np.ndarray
    a_hv: np.ndarray
    a_vh: np.ndarray
    a_vv: np.ndarray
    segment_index: int

    def as_array(self) -> np.ndarray:
        return np.stack([self.a_hh, self.a_hv, self.a_vh, self.a_vv])


def _conj(z):
    return np.conj(z)


def segment_amplitudes(config: CascadeConfig, omega_A, omega_B) -> list[SegmentAmplitude]:
    """Per-segment biphoton amplitudes at signal/idler detunings.

    Segment phases are referenced to the midpoint of the first segment, so
    for identical segments segment ``m`` carries the accumulated mismatch
    phase of every medium before it and the product of the intervening
    pump V->V Jones elements.
    """
    n = config.n_segments
    if config.is_polarizing and n != 2:
        raise UnsupportedTransformError(
            f"polarization-transforming middles are only modelled for 2 segments, got {n}"
        )
    dA, dB = np.broadcast_arrays(np.asarray(omega_A, float), np.asarray(omega_B, float))
    segs = config.segments
    dk = [phase_mismatch_type2(s, dA, dB) for s in segs]
    walk = [walkoff_phases(s, dA, dB) for s in segs]
    env = [
        math.sqrt(w) * s.length * sinc(k * s.length / 2.0)
        for s, k, w in zip(segs, dk, config.segment_weights)
    ]

    factors = []
    acc = np.zeros(dA.shape)
    pump = 1.0 + 0j
    ref = dk[0] * segs[0].length / 2.0
    for m in range(n):
        factors.append(pump * np.exp(1j * (acc + dk[m] * segs[m].length / 2.0 - ref)))
        acc = acc + dk[m] * segs[m].length
        if m < n - 1:
            mid = config.middles[m]
            acc = acc + linear_phase_mismatch(mid.medium, dA, dB) * mid.medium.length
            pump = pump * mid.u4p

    zero = np.zeros(dA.shape, dtype=complex)
    out = []
    if config.is_polarizing:
        U = config.middles[0].jones_dc
        lam1 = walk[0][0]
        lam2, gam_A2, gam_B2 = walk[1]
        e1 = np.exp(1j * lam1)
        a_hh = -np.exp(-1j * gam_B2) * (_conj(U.u4 * U.u3) + e1 * _conj(U.u3 * U.u4))
        a_hv = _conj(U.u4 * U.u1) + e1 * _conj(U.u3 * U.u2)
        a_vh = np.exp(2j * lam2) * (_conj(U.u2 * U.u3) + e1 * _conj(U.u1 * U.u4))
        a_vv = -np.exp(1j * gam_A2) * (_conj(U.u2 * U.u1) + e1 * _conj(U.u1 * U.u2))
        f0 = env[0] * factors[0]
        out.append(SegmentAmplitude(f0 * a_hh, f0 * a_hv, f0 * a_vh, f0 * a_vv, 0))
        f1 = env[1] * factors[1]
        out.append(SegmentAmplitude(zero, f1, f1 * np.exp(1j * lam2), zero, 1))
        return out

    # walk-off picked up by VH light crossing every later segment
    trailing = [np.zeros(dA.shape) for _ in range(n)]
    for m in range(n - 2, -1, -1):
        trailing[m] = trailing[m + 1] + 2.0 * walk[m + 1][0]
    for m in range(n):
        hv = env[m] * factors[m]
        vh = hv * np.exp(1j * (walk[m][0] + trailing[m]))
        out.append(SegmentAmplitude(zero, hv, vh, zero, m))
    return out


def emission_delays(config: CascadeConfig) -> np.ndarray:
    """Accumulated pump-vs-pair group-delay mismatch ahead of each segment, in s."""
    delays = [0.0]
    for m in range(config.n_segments - 1):
        step = group_delay_mismatch(config.segments[m]) + group_delay_mismatch(config.middles[m].medium)
        delays.append(delays[-1] + step)
    return np.array(delays)


def coherence_weight(config: CascadeConfig, m: int, n: int) -> float:
    """First-order pump coherence between the emissions of segments ``m`` and ``n``."""
    for idx in (m, n):
        if not 0 <= idx < config.n_segments:
            raise IndexError(f"segment index {idx} out of range")
    if m == n:
        return 1.0
    if config.mode == "coherent":
        return 1.0
    if config.mode == "incoherent":
        return 0.0
    delays = emission_delays(config)
    return float(math.exp(-abs(delays[n] - delays[m]) / config.pump.coherence_time))


def coherence_matrix(config: CascadeConfig) -> np.ndarray:
    n = config.n_segments
    return np.array([[coherence_weight(config, i, j) for j in range(n)] for i in range(n)])


def pump_mode_tag(config: CascadeConfig) -> str:
    if config.mode != "auto":
        return config.mode
    w = coherence_matrix(config)
    off = w[~np.eye(len(w), dtype=bool)]
    if off.size == 0 or np.all(off >= 1.0 - 1e-6):
        return "coherent"
    if np.all(off <= 1e-6):
        return "incoherent"
    return "partial"


def _amplitude_stack(config: CascadeConfig, omega_A, omega_B) -> np.ndarray:
    return np.stack([a.as_array() for a in segment_amplitudes(config, omega_A, omega_B)])


def _weighted_pairing(amps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Real part of sum_{m,n} a_m a_n^* w_mn, per channel and grid point."""
    raw = np.einsum("mcp,mn,ncp->cp", amps, weights, np.conj(amps))
    scale = np.max(np.abs(raw)) if raw.size else 0.0
    if scale > 0 and np.max(np.abs(raw.imag)) > 1e-12 * scale:
        raise NumericalError("coherence-weighted spectrum has a non-negligible imaginary part")
    real = raw.real
    if scale > 0 and real.min() < -1e-12 * scale:
        raise NumericalError("coherence-weighted spectrum is negative")
    return np.clip(real, 0.0, None)


@dataclass
class SpectrumTable:
    """Sampled spectral density per polarization channel.

    ``channels`` has shape ``(4, n)`` in (HH, HV, VH, VV) order.  Densities
    are relative (common prefactor set to 1).
    """

    detuning: np.ndarray
    wavelength_nm: np.ndarray
    channels: np.ndarray
    mode: str = "coherent"
    resolution_nm: float | None = None
    sample_widths: np.ndarray | None = None

    @property
    def total(self) -> np.ndarray:
        return self.channels.sum(axis=0)

    def integral(self) -> float:
        """Integrated total rate: bin sums for binned tables, trapezoid otherwise."""
        if self.sample_widths is not None:
            return float(np.sum(self.total * self.sample_widths))
        return float(trapezoid(self.total, self.detuning))

    def channel(self, name: str) -> np.ndarray:
        return self.channels[CHANNELS.index(name)]

    def to_csv(self, path) -> None:
        header = ["detuning_rad_s", "wavelength_nm"] + [f"S_{c}" for c in CHANNELS] + ["S_total"]
        rows = np.column_stack([self.detuning, self.wavelength_nm, self.channels.T, self.total])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([f"{v:.8e}" for v in row])

    @classmethod
    def from_csv(cls, path, mode: str = "coherent") -> SpectrumTable:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2:6].T.copy(), mode=mode)


def joint_spectrum(config: CascadeConfig) -> SpectrumTable:
    """Coherence-weighted biphoton spectrum on the config grid."""
    omega = config.grid.detunings()
    amps = _amplitude_stack(config, omega, -omega)
    dens = _weighted_pairing(amps, coherence_matrix(config)) * config.pump.mean_photon_rate
    wl = omega_to_wavelength_nm(0.5 * config.pump.omega_bar_p + omega)
    return SpectrumTable(omega, wl, dens, mode=pump_mode_tag(config))


def joint_spectral_intensity(config: CascadeConfig, omega_A, omega_B) -> np.ndarray:
    """Total JSI on a 2D (signal, idler) detuning mesh, weighted by the pump lineshape."""
    dA, dB = np.meshgrid(np.asarray(omega_A, float), np.asarray(omega_B, float), indexing="ij")
    amps = _amplitude_stack(config, dA.ravel(), dB.ravel())
    dens = _weighted_pairing(amps, coherence_matrix(config)).sum(axis=0)
    dens = dens * pump_lineshape(config.pump, (dA + dB).ravel()) * config.pump.mean_photon_rate
    return dens.reshape(dA.shape)


def brightness(table: SpectrumTable) -> float:
    """Frequency-integrated pair rate (trapezoid over the detuning grid)."""
    return table.integral()


def brightness_convergence(config: CascadeConfig, rtol: float = 1e-4) -> float:
    """Relative brightness change when the grid density is doubled.

    Raises :class:`NumericalError` when the change exceeds ``rtol``.
    """
    coarse = brightness(joint_spectrum(config))
    fine = brightness(joint_spectrum(config.with_points(2 * config.grid.points - 1)))
    change = abs(fine - coarse) / abs(fine) if fine else 0.0
    if change > rtol:
        raise NumericalError(
            f"brightness not converged: relative change {change:.3e} exceeds {rtol:.1e} "
            f"at {config.grid.points} grid points"
        )
    return change


# ---------------------------------------------------------------------------
# spectrum metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumMetrics:
    fwhm: float
    visibility: float
    mode_spacing: float | None
    peak_detuning: float


def _global_peak(x: np.ndarray, y: np.ndarray) -> int:
    top = np.flatnonzero(y == y.max())
    return int(top[np.argmin(np.abs(x[top]))])


def _fwhm(x: np.ndarray, y: np.ndarray, peak: int) -> float:
    half = 0.5 * y[peak]
    i = peak
    while i > 0 and y[i - 1] >= half:
        i -= 1
    if i == 0:
        raise ValueError("spectrum does not fall below half maximum on the low-detuning side")
    xl = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
    j = peak
    while j < len(y) - 1 and y[j + 1] >= half:
        j += 1
    if j == len(y) - 1:
        raise ValueError("spectrum does not fall below half maximum on the high-detuning side")
    xr = x[j] + (y[j] - half) * (x[j + 1] - x[j]) / (y[j] - y[j + 1])
    return float(xr - xl)


def local_extrema(y: np.ndarray, lo: int = 0, hi: int | None = None) -> list[tuple[int, str]]:
    """Interior local extrema of ``y[lo:hi+1]`` as ``(index, 'max'|'min')``.

    Plateaus count once, located at their middle sample.
    """
    hi = len(y) - 1 if hi is None else hi
    seg = y[lo : hi + 1]
    if seg.size < 3:
        return []
    change = np.flatnonzero(np.diff(seg) != 0) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [seg.size - 1]])
    vals = seg[starts]
    out = []
    for r in range(1, len(vals) - 1):
        kind = None
        if vals[r] > vals[r - 1] and vals[r] > vals[r + 1]:
            kind = "max"
        elif vals[r] < vals[r - 1] and vals[r] < vals[r + 1]:
            kind = "min"
        if kind:
            out.append((lo + (starts[r] + ends[r]) // 2, kind))
    return out


def _envelope_window(y: np.ndarray) -> tuple[int, int]:
    above = np.flatnonzero(y >= 0.5 * y.max())
    return int(above[0]), int(above[-1])


def _visibility(x, y, extrema) -> float:
    if len(extrema) < 2:
        return 0.0
    pos = np.array([x[i] for i, _ in extrema])
    k = int(np.argmin(np.abs(pos)))
    candidates = [j for j in (k - 1, k + 1) if 0 <= j < len(extrema)]
    j = min(candidates, key=lambda c: abs(pos[c] - pos[k]))
    a, b = y[extrema[k][0]], y[extrema[j][0]]
    hi_v, lo_v = max(a, b), min(a, b)
    return float((hi_v - lo_v) / (hi_v + lo_v))


def _principal(y, extrema) -> list[int]:
    # comb teeth: maxima at least half as tall as their taller neighbouring maximum
    maxima = [i for i, kind in extrema if kind == "max"]
    keep = []
    for r, i in enumerate(maxima):
        neighbours = [y[maxima[s]] for s in (r - 1, r + 1) if 0 <= s < len(maxima)]
        if not neighbours or y[i] >= 0.5 * max(neighbours):
            keep.append(i)
    return keep


def _mode_spacing(x, y, extrema) -> float | None:
    principal = _principal(y, extrema)
    if len(principal) < 3:
        return None
    return float(np.mean(np.diff(x[principal])))


def principal_maxima(table: SpectrumTable) -> np.ndarray:
    """Detunings of the comb teeth used for the mode-spacing estimate."""
    y = table.total
    lo, hi = _envelope_window(y)
    return table.detuning[_principal(y, local_extrema(y, lo, hi))]


def spectrum_metrics(table: SpectrumTable) -> SpectrumMetrics:
    """FWHM, near-degeneracy fringe visibility and comb mode spacing.

    Visibility and mode spacing only consider extrema inside the band where
    the spectrum still reaches half its maximum (outermost crossings), so the
    sinc side-lobe nulls of an unfringed spectrum are not mistaken for fringes.
    """
    x = np.asarray(table.detuning, float)
    y = np.asarray(table.total, float)
    if y.size == 0 or np.ptp(y) <= 1e-15 * max(np.max(np.abs(y)), np.finfo(float).tiny):
        raise FlatSpectrumError("spectrum is flat; visibility is undefined")
    peak = _global_peak(x, y)
    fwhm = _fwhm(x, y, peak)
    lo, hi = _envelope_window(y)
    extrema = local_extrema(y, lo, hi)
    return SpectrumMetrics(
        fwhm=fwhm,
        visibility=_visibility(x, y, extrema),
        mode_spacing=_mode_spacing(x, y, extrema),
        peak_detuning=float(x[peak]),
    )


# ---------------------------------------------------------------------------
# scaling study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    n: int
    brightness: float
    fwhm: float


@dataclass(frozen=True)
class ScalingResult:
    mode: str
    rows: tuple[ScalingRow, ...]
    brightness_slope: float
    fwhm_slope: float


def cascade_of(template: CascadeConfig, n: int, mode: Literal["coherent", "incoherent"]) -> CascadeConfig:
    """N copies of the template's first segment joined by identity-Jones middles.

    Coherent cascades splice the segments directly (zero-length middles);
    incoherent cascades reuse the template's first middle section so the
    coherence weights follow from its group-delay mismatch when the template
    mode is ``auto``.
    """
    seg = template.segments[0]
    weight = template.segment_weights[0]
    if mode == "coherent":
        spliced = Medium(seg.profile, 0.0, "linear", 0.0)
        middle = MiddleSection(spliced)
        run_mode = "coherent"
    elif mode == "incoherent":
        if template.middles:
            middle = MiddleSection(template.middles[0].medium, JonesMatrix.identity(), template.middles[0].u4p)
        else:
            middle = MiddleSection(Medium(seg.profile, 0.0, "linear", 0.0))
        run_mode = "auto" if template.mode == "auto" else "incoherent"
    else:
        raise ValueError(f"mode must be coherent or incoherent, got {mode!r}")
    return replace(
        template,
        segments=(seg,) * n,
        middles=(middle,) * (n - 1),
        mode=run_mode,
        weights=(weight,) * n,
    )


def scaling_study(template: CascadeConfig, n_values: Sequence[int], mode: Literal["coherent", "incoherent"]) -> ScalingResult:
    """Brightness and bandwidth of N identical segments, with log-log slopes vs N."""
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2:
        raise ValueError("scaling_study needs at least two N values")
    if any(n < 1 for n in n_values):
        raise ValueError("N values must be >= 1")
    rows = []
    for n in n_values:
        table = joint_spectrum(cascade_of(template, n, mode))
        rows.append(ScalingRow(n, brightness(table), spectrum_metrics(table).fwhm))
    logn = np.log([r.n for r in rows])
    b_slope = np.polyfit(logn, np.log([r.brightness for r in rows]), 1)[0]
    f_slope = np.polyfit(logn, np.log([r.fwhm for r in rows]), 1)[0]
    return ScalingResult(mode, tuple(rows), float(b_slope), float(f_slope))
