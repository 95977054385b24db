"""Simulated two-qubit polarization tomography: counts, linear inversion, metrics."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .polarization import PSI_PLUS, PolDensityMatrix, concurrence, fidelity_purity

_S = 1.0 / np.sqrt(2.0)
SINGLE_QUBIT_STATES = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, -1j * _S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
}

STANDARD_SETTINGS = (
    "HH", "HV", "VH", "VV", "HD", "HL", "VD", "VL",
    "DH", "DV", "DD", "DL", "RH", "RV", "RD", "RL",
)

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
PAULI_BASIS = np.array([np.kron(a, b) for a, b in itertools.product(_PAULI, repeat=2)])

POISSON_INVERSION_LIMIT = 30.0


class ProjectorSet:
    """Rank-1 two-photon projectors labelled by polarization pairs such as ``"HD"``."""

    def __init__(self, labels: Sequence[str] = STANDARD_SETTINGS):
        self.labels = tuple(labels)
        if len(self.labels) != 16:
            raise ValueError("a two-qubit projector set needs 16 settings")
        try:
            self.vectors = np.array(
                [np.kron(SINGLE_QUBIT_STATES[a], SINGLE_QUBIT_STATES[b]) for a, b in self.labels]
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad projector label in {self.labels}") from exc
        self.operators = np.einsum("ia,ib->iab", self.vectors, self.vectors.conj())
        # M[i, j] = Tr(Pi_i sigma_j), real because both are Hermitian
        self.measurement_matrix = np.einsum("iab,jba->ij", self.operators, PAULI_BASIS).real
        if np.linalg.matrix_rank(self.measurement_matrix) < 16:
            raise ValueError("projector set is not informationally complete")

    def gram(self) -> np.ndarray:
        """Tr(Pi_i Pi_j); equals M M^T / 4, so its condition number is cond(M)^2."""
        return np.abs(self.vectors.conj() @ self.vectors.T) ** 2

    def condition_number(self) -> float:
        """Condition number of the linear system solved by :func:`reconstruct`."""
        return float(np.linalg.cond(self.measurement_matrix))

    def probabilities(self, rho) -> np.ndarray:
        m = rho.data if isinstance(rho, PolDensityMatrix) else np.asarray(rho, dtype=complex)
        return np.einsum("ia,ab,ib->i", self.vectors.conj(), m, self.vectors).real


@dataclass
class CountRecord:
    labels: tuple[str, ...]
    expected: np.ndarray
    counts: np.ndarray
    total_pairs: int
    seed: int | None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["setting", "expected", "count"])
            for label, e, c in zip(self.labels, self.expected, self.counts):
                writer.writerow([label, f"{e:.6f}", int(c)])

    @classmethod
    def noiseless(cls, rho, total_pairs: int, projectors: ProjectorSet | None = None) -> CountRecord:
        """Record whose counts are the exact (non-integer) expectation values."""
        projectors = projectors or ProjectorSet()
        expected = total_pairs * np.clip(projectors.probabilities(rho), 0.0, None)
        return cls(projectors.labels, expected, expected.copy(), int(total_pairs), None)


def poisson_sample(means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Poisson draw per mean from a single uniform each.

    Small means use CDF inversion; larger ones a continuity-corrected normal
    approximation, which keeps the draw a fixed function of the uniform
    stream and therefore reproducible across platforms.
    """
    u = rng.random(len(means))
    u = np.clip(u, np.nextafter(0.0, 1.0), None)
    out = np.empty(len(means), dtype=np.int64)
    for i, (mu, ui) in enumerate(zip(means, u)):
        if mu <= 0:
            out[i] = 0
        elif mu < POISSON_INVERSION_LIMIT:
            k, p = 0, np.exp(-mu)
            cdf = p
            while ui > cdf and k < 1000:
                k += 1
                p *= mu / k
                cdf += p
            out[i] = k
        else:
            out[i] = max(0, int(np.floor(mu + np.sqrt(mu) * ndtri(ui) + 0.5)))
    return out


def simulate_counts(rho, total_pairs: int, seed: int, projectors: ProjectorSet | None = None) -> CountRecord:
    """Expected and Poisson-sampled coincidence counts for every projector.

    The generator is numpy's PCG64 seeded with ``seed`` (an unsigned 64-bit
    integer).
    """
    if not isinstance(rho, PolDensityMatrix):
        rho = PolDensityMatrix(rho)
    if int(total_pairs) <= 0:
        raise ValueError("total_pairs must be positive")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    projectors = projectors or ProjectorSet()
    expected = total_pairs * np.clip(projectors.probabilities(rho), 0.0, None)
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    counts = poisson_sample(expected, rng)
    return CountRecord(projectors.labels, expected, counts, int(total_pairs), int(seed))


def reconstruct(counts: CountRecord, projectors: ProjectorSet | None = None) -> PolDensityMatrix:
    """Linear-inversion estimate projected onto physical states."""
    projectors = projectors or ProjectorSet()
    if tuple(counts.labels) != projectors.labels:
        raise ValueError("count record settings do not match the projector set")
    c = np.asarray(counts.counts, dtype=float)
    if not np.any(c > 0):
        raise ValueError("cannot reconstruct from all-zero counts")
    r = np.linalg.solve(projectors.measurement_matrix, 4.0 * c / counts.total_pairs)
    rho = np.einsum("j,jab->ab", r, PAULI_BASIS) / 4.0
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    if not w.sum() > 0:
        raise ValueError("reconstruction has no positive weight")
    rho = (v * w) @ v.conj().T
    return PolDensityMatrix(rho / np.trace(rho).real)


@dataclass(frozen=True)
class Table1Row:
    state: str
    fidelity: float
    concurrence: float
    purity: float
    model_fidelity: float
    model_concurrence: float
    model_purity: float
    fidelity_std: float
    concurrence_std: float
    purity_std: float
    measured: dict | None = None


def _metrics(rho) -> tuple[float, float, float]:
    fid, pur = fidelity_purity(rho, PSI_PLUS)
    return fid, concurrence(rho), pur


def table1_pipeline(
    states: Sequence[tuple[str, PolDensityMatrix, dict | None]],
    total_pairs: int = 100_000,
    seeds: Sequence[int] = range(100),
) -> list[Table1Row]:
    """Model vs reconstructed fidelity, concurrence and purity for each labelled state.

    Reconstructed metrics are medians over ``seeds``; the ``_std`` fields
    give the spread across seeds.
    """
    projectors = ProjectorSet()
    rows = []
    for label, rho, measured in states:
        model = _metrics(rho)
        runs = np.array(
            [_metrics(reconstruct(simulate_counts(rho, total_pairs, s, projectors), projectors)) for s in seeds]
        )
        med = np.median(runs, axis=0)
        std = runs.std(axis=0)
        rows.append(Table1Row(label, *med, *model, *std, measured=measured))
    return rows


TABLE1_COLUMNS = (
    "state", "fidelity", "concurrence", "purity",
    "model_fidelity", "model_concurrence", "model_purity",
    "fidelity_std", "concurrence_std", "purity_std",
    "measured_fidelity", "measured_concurrence", "measured_purity",
)


def write_table1(rows: Sequence[Table1Row], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE1_COLUMNS)
        for r in rows:
            meas = r.measured or {}
            values = [
                r.fidelity, r.concurrence, r.purity,
                r.model_fidelity, r.model_concurrence, r.model_purity,
                r.fidelity_std, r.concurrence_std, r.purity_std,
            ]
            extra = [meas.get(k) for k in ("fidelity", "concurrence", "purity")]
            writer.writerow(
                [r.state]
                + [f"{v:.6f}" for v in values]
                + ["" if v is None else f"{v:.6g}" for v in extra]
            )
