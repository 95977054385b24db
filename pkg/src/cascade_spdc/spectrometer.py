"""Dispersive-fibre time-of-flight spectrometer and loss-corrected cascade rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .biphoton import SpectrumTable
from .optics import omega_to_wavelength_nm, wavelength_nm_to_omega


@dataclass(frozen=True)
class SpectrometerModel:
    """Linear wavelength-to-delay map ``t = DL * (lambda - lambda_ref)`` with fixed bins."""

    dispersion_length_ps_nm: float
    reference_wavelength_nm: float
    coincidence_window_ps: float

    def __post_init__(self):
        for name in ("dispersion_length_ps_nm", "reference_wavelength_nm", "coincidence_window_ps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")

    @property
    def resolution_nm(self) -> float:
        return self.coincidence_window_ps / self.dispersion_length_ps_nm

    def delay_ps(self, wavelength_nm):
        return self.dispersion_length_ps_nm * (np.asarray(wavelength_nm, float) - self.reference_wavelength_nm)

    def wavelength_nm(self, delay_ps):
        return self.reference_wavelength_nm + np.asarray(delay_ps, float) / self.dispersion_length_ps_nm


@dataclass
class Histogram:
    """Arrival-time histogram; bins are ``[k*w, (k+1)*w)`` for integer ``k``.

    ``mass`` holds the per-channel pair rate collected in each bin, shape
    ``(4, n_bins)``.  ``centre_omega`` is the absolute frequency that the
    source spectrum's detunings were measured from, if known.
    """

    edges_ps: np.ndarray
    mass: np.ndarray
    centre_omega: float | None = None

    @property
    def bin_width_ps(self) -> float:
        return float(self.edges_ps[1] - self.edges_ps[0])

    @property
    def t_ps(self) -> np.ndarray:
        return 0.5 * (self.edges_ps[:-1] + self.edges_ps[1:])

    @property
    def counts_density(self) -> np.ndarray:
        """Total rate per ps of arrival time."""
        return self.mass.sum(axis=0) / self.bin_width_ps

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t_ps,counts_density\n")
            for t, d in zip(self.t_ps, self.counts_density):
                fh.write(f"{t:.8e},{d:.8e}\n")


def map_to_histogram(spectrum: SpectrumTable, model: SpectrometerModel) -> Histogram:
    """Bin a spectrum by arrival delay, conserving the integrated rate.

    Each channel's cumulative integral over the sampled delays is
    interpolated at the bin edges, so bin masses sum to the trapezoid
    integral of the input.
    """
    t = model.delay_ps(spectrum.wavelength_nm)
    order = np.argsort(t, kind="stable")
    t = t[order]
    omega = spectrum.detuning[order]
    dens = spectrum.channels[:, order]
    w = model.coincidence_window_ps
    k_lo = int(np.floor(t[0] / w))
    k_hi = int(np.ceil(t[-1] / w))
    if k_hi == k_lo:
        k_hi += 1
    edges = w * np.arange(k_lo, k_hi + 1, dtype=float)
    # delay is monotone in frequency, so |omega - omega[0]| is an increasing abscissa
    cum = cumulative_trapezoid(dens, np.abs(omega - omega[0]), axis=1, initial=0.0)
    at_edges = np.array([np.interp(edges, t, c) for c in cum])
    mass = np.diff(at_edges, axis=1)
    centre = float(wavelength_nm_to_omega(spectrum.wavelength_nm[0]) - spectrum.detuning[0])
    return Histogram(edges, mass, centre)


def recover_spectrum(histogram: Histogram, model: SpectrometerModel) -> SpectrumTable:
    """Spectral density at bin centres from the inverse delay map.

    The returned table carries ``sample_widths`` (bin widths in rad/s) so its
    integral equals the histogram's total mass.
    """
    centre = histogram.centre_omega
    if centre is None:
        centre = float(wavelength_nm_to_omega(model.reference_wavelength_nm))
    wl_edges = model.wavelength_nm(histogram.edges_ps)
    om_edges = wavelength_nm_to_omega(wl_edges)
    widths = np.abs(np.diff(om_edges))
    wl = model.wavelength_nm(histogram.t_ps)
    detuning = wavelength_nm_to_omega(wl) - centre
    dens = histogram.mass / widths
    order = np.argsort(detuning, kind="stable")
    return SpectrumTable(
        detuning[order],
        omega_to_wavelength_nm(centre + detuning[order]),
        dens[:, order],
        mode="measured",
        resolution_nm=model.resolution_nm,
        sample_widths=widths[order],
    )


def count_peaks(values, rel_threshold: float = 0.01) -> int:
    """Strict local maxima above ``rel_threshold * max``; plateaus count once."""
    y = np.asarray(values, float)
    if y.size == 0 or y.max() <= 0:
        return 0
    keep = np.concatenate([[True], np.diff(y) != 0])
    y = y[keep]
    padded = np.concatenate([[-np.inf], y, [-np.inf]])
    peaks = (padded[1:-1] > padded[:-2]) & (padded[1:-1] > padded[2:])
    return int(np.sum(peaks & (y >= rel_threshold * y.max())))


def expected_cascade_rate(eta_signal: float, eta_pump: float, r1: float, r2: float) -> float:
    """Coincidence rate of a two-segment cascade from the standalone segment rates.

    Pairs from the first segment cross the middle section twice over (signal
    and idler), pairs from the second only need the pump to survive it.
    """
    for name, eta in (("eta_signal", eta_signal), ("eta_pump", eta_pump)):
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {eta!r}")
    for name, r in (("r1", r1), ("r2", r2)):
        if not r >= 0:
            raise ValueError(f"{name} must be non-negative, got {r!r}")
    return eta_signal * (eta_signal * r1) + eta_pump * r2
