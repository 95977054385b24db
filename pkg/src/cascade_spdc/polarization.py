"""Two-photon polarization density matrices and entanglement metrics.

Basis order is (HH, HV, VH, VV) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .biphoton import (
    CascadeConfig,
    NumericalError,
    _amplitude_stack,
    coherence_matrix,
    pump_mode_tag,
)
from .optics import make_unitary, omega_to_wavelength_nm

PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2.0)

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-8

_SY = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(_SY, _SY)


def _check_hermitian(m: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("density matrix is not Hermitian within tolerance")


def physical(m: np.ndarray) -> np.ndarray:
    """Hermitize, normalize and, for rounding-level negativity only, clip eigenvalues."""
    m = np.asarray(m, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
    _check_hermitian(m)
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if not tr > 0:
        raise NumericalError("density matrix has non-positive trace")
    m = m / tr
    w, v = np.linalg.eigh(m)
    if w.min() < -PSD_TOL:
        raise NumericalError(f"density matrix has eigenvalue {w.min():.3e} below -{PSD_TOL:g}")
    if w.min() < 0:
        w = np.clip(w, 0.0, None)
        m = (v * w) @ v.conj().T
        m = 0.5 * (m + m.conj().T) / np.trace(m).real
    return m


@dataclass(frozen=True)
class PolDensityMatrix:
    """Normalized, Hermitian, positive semidefinite 4x4 polarization state."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", physical(self.data))

    @classmethod
    def pure(cls, psi) -> PolDensityMatrix:
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    def metrics(self) -> dict[str, float]:
        fid, pur = fidelity_purity(self, PSI_PLUS)
        return {
            "concurrence": round(concurrence(self), 6),
            "purity": round(pur, 6),
            "fidelity_to_psi_plus": round(fid, 6),
        }

    def to_json_dict(self) -> dict:
        return {
            "basis": ["HH", "HV", "VH", "VV"],
            "rho": [[[float(z.real), float(z.imag)] for z in row] for row in self.data],
            "metrics": self.metrics(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> PolDensityMatrix:
        arr = np.array(doc["rho"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1])


def _as_array(rho) -> np.ndarray:
    if isinstance(rho, PolDensityMatrix):
        return rho.data
    m = np.asarray(rho, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
    _check_hermitian(m)
    return m


def _raw_matrices(config: CascadeConfig, omega) -> np.ndarray:
    """Unnormalized sum_{m,n} a_c^m a_d^n* w_mn, shape (4, 4, len(omega))."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    amps = _amplitude_stack(config, omega, -omega)
    return np.einsum("mcp,mn,ndp->cdp", amps, coherence_matrix(config), np.conj(amps))


def density_matrix(config: CascadeConfig, omega_A: float | None = None) -> PolDensityMatrix:
    """Polarization state over the whole grid (``omega_A=None``) or at one signal detuning.

    The full-band matrix integrates the unnormalized pairing over detuning,
    which weights every frequency by its pair rate.
    """
    if omega_A is None:
        omega = config.grid.detunings()
        raw = trapezoid(_raw_matrices(config, omega), omega, axis=-1)
    else:
        raw = _raw_matrices(config, omega_A)[..., 0]
    return PolDensityMatrix(raw)


def concurrence(rho) -> float:
    """Wootters concurrence from the eigenvalues of rho * (YY rho* YY)."""
    m = _as_array(rho)
    return float(_concurrence_batch(m[None])[0])


def _concurrence_batch(rhos: np.ndarray) -> np.ndarray:
    flipped = _YY @ np.conj(rhos) @ _YY
    ev = np.linalg.eigvals(rhos @ flipped).real
    lam = np.sort(np.sqrt(np.clip(ev, 0.0, None)), axis=-1)[..., ::-1]
    c = lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3]
    return np.clip(c, 0.0, 1.0)


def fidelity_purity(rho, target) -> tuple[float, float]:
    m = _as_array(rho)
    t = np.asarray(target, dtype=complex)
    if t.shape != (4,):
        raise ValueError("target must be a 4-vector")
    if abs(np.linalg.norm(t) - 1.0) > 1e-9:
        raise ValueError("target state must be normalized")
    fid = float(np.real(t.conj() @ m @ t))
    pur = float(np.real(np.trace(m @ m)))
    return fid, pur


@dataclass
class ConcurrenceMap:
    detuning: np.ndarray
    wavelength_nm: np.ndarray
    concurrence: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("wavelength_nm,concurrence\n")
            for wl, c in zip(self.wavelength_nm, self.concurrence):
                fh.write(f"{wl:.8e},{c:.8e}\n")


def concurrence_map(config: CascadeConfig) -> ConcurrenceMap:
    """Concurrence of the point state at every grid detuning.

    Detunings with no pair emission at all (exact envelope zeros) report 0.
    """
    omega = config.grid.detunings()
    raw = np.moveaxis(_raw_matrices(config, omega), -1, 0)
    tr = np.trace(raw, axis1=1, axis2=2).real
    alive = tr > np.finfo(float).tiny * 1e3
    conc = np.zeros(omega.shape)
    if np.any(alive):
        rhos = raw[alive] / tr[alive, None, None]
        rhos = 0.5 * (rhos + np.conj(np.swapaxes(rhos, 1, 2)))
        conc[alive] = _concurrence_batch(rhos)
    wl = omega_to_wavelength_nm(0.5 * config.pump.omega_bar_p + omega)
    return ConcurrenceMap(omega, wl, conc)


def with_rotation(config: CascadeConfig, theta: float) -> CascadeConfig:
    """Copy of a two-segment config with the middle dc transform set to a pure rotation."""
    if config.n_segments != 2:
        raise ValueError("rotation sweeps need a two-segment cascade")
    mid = replace(config.middles[0], jones_dc=make_unitary(theta, 0.0, 0.0))
    return replace(config, middles=(mid,))


def concurrence_vs_rotation(config: CascadeConfig, thetas: Sequence[float]) -> list[tuple[float, float]]:
    """Full-band concurrence for each middle-section rotation angle (incoherent pumping)."""
    if pump_mode_tag(config) != "incoherent":
        raise ValueError("concurrence_vs_rotation requires an incoherent cascade")
    return [(float(t), concurrence(density_matrix(with_rotation(config, t)))) for t in thetas]
