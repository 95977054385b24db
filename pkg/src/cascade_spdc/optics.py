"""Dispersion, phase-matching and Jones-calculus primitives.

All frequencies are detunings: pump-band quantities are measured from the
pump centre frequency ``omega_bar_p`` and down-conversion (dc) band
quantities from ``omega_bar_p / 2``.  Absolute optical frequencies only
appear when converting to wavelength at the I/O boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

C_LIGHT = 299_792_458.0  # m/s

Pol = Literal["H", "V"]
Band = Literal["pump", "dc"]

_SINC_SERIES_CUTOFF = 1e-4


def sinc(x):
    """Unnormalized sinc, sin(x)/x, with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SINC_SERIES_CUTOFF
    xs = x[small]
    x2 = xs * xs
    out[small] = 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    xl = x[~small]
    out[~small] = np.sin(xl) / xl
    return out if out.ndim else float(out)


def omega_to_wavelength_nm(omega):
    """Vacuum wavelength in nm for an absolute angular frequency in rad/s."""
    return 2.0 * math.pi * C_LIGHT / np.asarray(omega, dtype=float) * 1e9


def wavelength_nm_to_omega(wavelength_nm):
    return 2.0 * math.pi * C_LIGHT / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


@dataclass(frozen=True)
class DispersionProfile:
    """Second-order Taylor coefficients of k(omega) per band and polarization.

    ``beta0`` in rad/m, ``beta1`` in s/m, ``beta2`` in s^2/m.  The pump-band
    coefficients are taken at ``omega_bar_p`` and the dc-band ones at
    ``omega_bar_p / 2``.
    """

    beta0_pump_H: float
    beta0_pump_V: float
    beta1_pump_H: float
    beta1_pump_V: float
    beta2_pump_H: float
    beta2_pump_V: float
    beta0_dc_H: float
    beta0_dc_V: float
    beta1_dc_H: float
    beta1_dc_V: float
    beta2_dc_H: float
    beta2_dc_V: float

    def __post_init__(self):
        for name in ("beta1_pump_H", "beta1_pump_V", "beta1_dc_H", "beta1_dc_V"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    @classmethod
    def isotropic(cls, pump: tuple[float, float, float], dc: tuple[float, float, float]) -> DispersionProfile:
        """Profile with identical H and V coefficients, ``(beta0, beta1, beta2)`` per band."""
        p0, p1, p2 = pump
        d0, d1, d2 = dc
        return cls(p0, p0, p1, p1, p2, p2, d0, d0, d1, d1, d2, d2)

    def coefficients(self, pol: Pol, band: Band) -> tuple[float, float, float]:
        if pol not in ("H", "V"):
            raise ValueError(f"pol must be 'H' or 'V', got {pol!r}")
        if band not in ("pump", "dc"):
            raise ValueError(f"band must be 'pump' or 'dc', got {band!r}")
        return (
            getattr(self, f"beta0_{band}_{pol}"),
            getattr(self, f"beta1_{band}_{pol}"),
            getattr(self, f"beta2_{band}_{pol}"),
        )

    def averaged(self, band: Band) -> tuple[float, float, float]:
        """Polarization-averaged coefficients for ``band``."""
        h = self.coefficients("H", band)
        v = self.coefficients("V", band)
        return tuple(0.5 * (a + b) for a, b in zip(h, v))

    @property
    def is_isotropic(self) -> bool:
        return all(
            self.coefficients("H", band) == self.coefficients("V", band)
            for band in ("pump", "dc")
        )


@dataclass(frozen=True)
class Medium:
    profile: DispersionProfile
    length: float
    kind: Literal["nonlinear", "linear"] = "nonlinear"
    k_qpm: float = 0.0

    def __post_init__(self):
        if self.kind not in ("nonlinear", "linear"):
            raise ValueError(f"kind must be 'nonlinear' or 'linear', got {self.kind!r}")
        # zero-length linear sections model directly spliced segments
        if self.kind == "nonlinear" and not self.length > 0:
            raise ValueError(f"nonlinear segment length must be > 0, got {self.length!r}")
        if self.kind == "linear" and not self.length >= 0:
            raise ValueError(f"linear section length must be >= 0, got {self.length!r}")
        if self.kind == "linear" and self.k_qpm != 0:
            raise ValueError("k_qpm must be 0 for a linear medium")


@dataclass(frozen=True)
class PumpModel:
    omega_bar_p: float
    coherence_time: float
    mean_photon_rate: float = 1.0
    lineshape: Literal["lorentzian"] = "lorentzian"

    def __post_init__(self):
        if not self.omega_bar_p > 0:
            raise ValueError(f"omega_bar_p must be > 0, got {self.omega_bar_p!r}")
        if not self.coherence_time > 0:
            raise ValueError(f"coherence_time must be > 0, got {self.coherence_time!r}")
        if self.lineshape != "lorentzian":
            raise ValueError(f"unsupported pump lineshape {self.lineshape!r}")

    @property
    def wavelength_nm(self) -> float:
        return float(omega_to_wavelength_nm(self.omega_bar_p))


@dataclass(frozen=True)
class JonesMatrix:
    """Row-major 2x2 Jones matrix ``[[u1, u2], [u3, u4]]``."""

    u1: complex
    u2: complex
    u3: complex
    u4: complex

    @classmethod
    def identity(cls) -> JonesMatrix:
        return cls(1.0 + 0j, 0j, 0j, 1.0 + 0j)

    @classmethod
    def from_array(cls, m) -> JonesMatrix:
        m = np.asarray(m, dtype=complex)
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    def as_array(self) -> np.ndarray:
        return np.array([[self.u1, self.u2], [self.u3, self.u4]], dtype=complex)

    def is_identity(self, atol: float = 1e-15) -> bool:
        return bool(np.allclose(self.as_array(), np.eye(2), rtol=0, atol=atol))


def make_unitary(theta: float, phi1: float, phi2: float) -> JonesMatrix:
    """Polarization rotation by ``theta`` with birefringent phases ``phi1``, ``phi2``."""
    c, s = math.cos(theta), math.sin(theta)
    return JonesMatrix(
        u1=complex(np.exp(1j * phi1) * c),
        u2=complex(-np.exp(1j * phi2) * s),
        u3=complex(np.exp(-1j * phi2) * s),
        u4=complex(np.exp(-1j * phi1) * c),
    )


def _taylor(coeffs, detuning):
    b0, b1, b2 = coeffs
    d = np.asarray(detuning, dtype=float)
    return b0 + b1 * d + 0.5 * b2 * d * d


def wavenumber(medium: Medium, pol: Pol, band: Band, detuning):
    """k(omega) in rad/m at ``detuning`` from the centre of ``band``."""
    return _taylor(medium.profile.coefficients(pol, band), detuning)


def _require_nonlinear(segment: Medium):
    if segment.kind != "nonlinear":
        raise ValueError("operation requires a nonlinear segment, got a linear medium")


def phase_mismatch_type2(segment: Medium, omega_A, omega_B):
    """Type-II (V -> H + V) wavevector mismatch in rad/m.

    ``omega_A``/``omega_B`` are signal/idler detunings from ``omega_bar_p/2``;
    the pump detuning is their sum.  Constant, linear and quadratic terms are
    combined coefficient-wise so the large beta0 values cancel exactly first.
    """
    _require_nonlinear(segment)
    p0, p1, p2 = segment.profile.coefficients("V", "pump")
    a0, a1, a2 = segment.profile.coefficients("H", "dc")
    b0, b1, b2 = segment.profile.coefficients("V", "dc")
    dA = np.asarray(omega_A, dtype=float)
    dB = np.asarray(omega_B, dtype=float)
    dP = dA + dB
    const = (p0 - a0 - b0) - segment.k_qpm
    linear = p1 * dP - a1 * dA - b1 * dB
    quad = 0.5 * (p2 * dP * dP - a2 * dA * dA - b2 * dB * dB)
    return const + linear + quad


def linear_phase_mismatch(medium: Medium, omega_A, omega_B):
    """Pump-minus-pair wavevector mismatch of an isotropic-treated linear section, rad/m."""
    p0, p1, p2 = medium.profile.averaged("pump")
    d0, d1, d2 = medium.profile.averaged("dc")
    dA = np.asarray(omega_A, dtype=float)
    dB = np.asarray(omega_B, dtype=float)
    dP = dA + dB
    const = (p0 - 2.0 * d0) - medium.k_qpm
    linear = p1 * dP - d1 * (dA + dB)
    quad = 0.5 * (p2 * dP * dP - d2 * (dA * dA + dB * dB))
    return const + linear + quad


def walkoff_phases(segment: Medium, omega_A, omega_B):
    """Return ``(Lambda, Gamma_A, Gamma_B)`` in rad for one nonlinear segment."""
    _require_nonlinear(segment)
    prof = segment.profile
    h = prof.coefficients("H", "dc")
    v = prof.coefficients("V", "dc")
    delta = tuple(vi - hi for vi, hi in zip(v, h))
    biref_A = _taylor(delta, omega_A)
    biref_B = _taylor(delta, omega_B)
    L = segment.length
    lam = (biref_A - biref_B) * L / 2.0
    return lam, biref_A * L, biref_B * L


def group_delay_mismatch(medium: Medium) -> float:
    """Pump group delay minus the mean signal/idler group delay, in s.

    Both bands use polarization-averaged group slowness.  The sign is kept;
    callers that need a magnitude take ``abs`` of the accumulated sum.
    """
    beta1_pump = medium.profile.averaged("pump")[1]
    beta1_dc = medium.profile.averaged("dc")[1]
    return (beta1_pump - beta1_dc) * medium.length


def pump_lineshape(pump: PumpModel, omega_P):
    """Normalized Lorentzian pump spectrum (per rad/s) at pump detuning ``omega_P``.

    Half width at half maximum is ``1 / coherence_time``.
    """
    gamma = 1.0 / pump.coherence_time
    d = np.asarray(omega_P, dtype=float)
    return (gamma / math.pi) / (d * d + gamma * gamma)


def coherence_magnitude(pump: PumpModel, delay):
    """|g1(delay)| for the Lorentzian pump, exp(-|delay| / coherence_time)."""
    return np.exp(-np.abs(np.asarray(delay, dtype=float)) / pump.coherence_time)
