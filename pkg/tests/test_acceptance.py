"""End-to-end acceptance checks, one test per criterion, run at the stated tolerances."""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import sqrtm

from builders import OMEGA_P, hermitian_concurrence, line_spectrum, random_state, two_segment
from cascade_spdc.biphoton import (
    cascade_of,
    coherence_matrix,
    emission_delays,
    joint_spectrum,
    local_extrema,
    principal_maxima,
    pump_mode_tag,
    scaling_study,
    spectrum_metrics,
)
from cascade_spdc.config import load_document, parse_config, scaling_n_values, theta_grid, tomography_states
from cascade_spdc.optics import PumpModel
from cascade_spdc.polarization import concurrence, concurrence_map, concurrence_vs_rotation, density_matrix
from cascade_spdc.spectrometer import (
    SpectrometerModel,
    count_peaks,
    expected_cascade_rate,
    map_to_histogram,
    recover_spectrum,
)
from cascade_spdc.tomography import CountRecord, ProjectorSet, reconstruct, simulate_counts, table1_pipeline

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def report(number, **values):
    print(f"criterion {number}: " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items()))


def state_fidelity(a, b):
    """Uhlmann fidelity between two density matrices."""
    s = sqrtm(a)
    return float(np.real(np.trace(sqrtm(s @ b @ s))) ** 2)


def segment_band(config):
    """Half-width of the single-segment phase-matching FWHM band."""
    single = replace(config, segments=config.segments[:1], middles=(), weights=None)
    return spectrum_metrics(joint_spectrum(single)).fwhm / 2


@pytest.mark.criterion(1, "coherent scaling law")
def test_coherent_scaling():
    doc = load_document(CONFIGS / "fig3.json")
    template = parse_config(CONFIGS / "fig3.json")
    n_values = scaling_n_values(doc)
    assert n_values == [1, 2, 3, 4, 6, 8]
    assert template.grid.points == 4097
    start = time.perf_counter()
    res = scaling_study(template, n_values, "coherent")
    elapsed = time.perf_counter() - start
    assert all(m.medium.length == 0 and m.jones_dc.is_identity() for m in cascade_of(template, 8, "coherent").middles)
    ratio = res.rows[1].brightness / res.rows[0].brightness
    report(1, brightness_slope=res.brightness_slope, fwhm_slope=res.fwhm_slope, ratio_2_1=ratio, seconds=elapsed)
    assert res.brightness_slope == pytest.approx(1.5, abs=0.03)
    assert res.fwhm_slope == pytest.approx(-0.5, abs=0.03)
    assert ratio == pytest.approx(2.828, rel=0.01)
    assert elapsed < 10.0


@pytest.mark.criterion(2, "incoherent scaling")
def test_incoherent_scaling():
    template = parse_config(CONFIGS / "fig3.json")
    n_values = scaling_n_values(load_document(CONFIGS / "fig3.json"))
    for n in n_values:
        w = coherence_matrix(cascade_of(template, n, "incoherent"))
        assert np.max(w - np.diag(np.diag(w))) < 1e-15
    res = scaling_study(template, n_values, "incoherent")
    report(2, brightness_slope=res.brightness_slope, fwhm_slope=res.fwhm_slope)
    assert res.brightness_slope == pytest.approx(1.0, abs=0.01)
    assert res.fwhm_slope == pytest.approx(0.0, abs=0.01)


@pytest.mark.criterion(3, "fringe visibility vs coherence")
def test_visibility_vs_coherence():
    base = two_segment(points=8193, u4p=-1.0, mode="auto")
    delay = abs(emission_delays(base)[1])
    cases = [(1e-7, 1.0, 1e-6), (1.0, math.exp(-1), 1e-3), (25.0, None, 1e-3)]
    start = time.perf_counter()
    found = []
    for ratio, expected, tol in cases:
        cfg = replace(base, pump=PumpModel(OMEGA_P, delay / ratio))
        assert abs(emission_delays(cfg)[1]) / cfg.pump.coherence_time == pytest.approx(ratio, rel=1e-12)
        found.append((spectrum_metrics(joint_spectrum(cfg)).visibility, expected, tol))
    elapsed = time.perf_counter() - start
    report(3, v_coherent=found[0][0], v_unit=found[1][0], v_incoherent=found[2][0], seconds=elapsed)
    for vis, expected, tol in found:
        if expected is None:
            assert vis < tol
        else:
            assert vis == pytest.approx(expected, abs=tol)
    assert elapsed < 1.0


@pytest.mark.criterion(4, "fringe positions")
def test_fringe_positions():
    cfg = two_segment(points=8193)
    seg, mid = cfg.segments[0], cfg.middles[0].medium
    prof = mid.profile
    assert prof.beta1_pump_H != prof.beta1_dc_H and prof.beta0_pump_H == 2 * prof.beta0_dc_H
    # relative phase of the two segments at mirrored detunings is c * Omega^2
    c = 0.5 * (seg.profile.beta2_dc_H + seg.profile.beta2_dc_V) * seg.length + prof.beta2_dc_H * mid.length
    table = joint_spectrum(cfg)
    step = cfg.grid.step
    band = segment_band(cfg)
    minima = np.array([table.detuning[i] for i, kind in local_extrema(table.total) if kind == "min"])
    roots = [math.sqrt((2 * m + 1) * math.pi / c) for m in range(1000)]
    roots = [r for r in roots if r < band]
    worst = max(np.min(np.abs(minima - s * r)) for r in roots for s in (1, -1))
    report(4, roots=2 * len(roots), worst_offset_steps=worst / step)
    assert len(roots) >= 10
    assert worst <= step


@pytest.mark.criterion(5, "frequency-comb discretization")
def test_comb_spacing():
    cfg = parse_config(CONFIGS / "fig2c.json")
    assert cfg.n_segments == 3 and cfg.middles[0] == cfg.middles[1]
    assert pump_mode_tag(cfg) == "coherent"
    table = joint_spectrum(cfg)
    teeth = principal_maxima(table)
    mid = cfg.middles[0].medium
    c_mid = 0.5 * (mid.profile.beta2_dc_H + mid.profile.beta2_dc_V) * mid.length
    # comb teeth of one middle section sit where c_mid * Omega^2 = 2 pi k
    k = np.round(c_mid * teeth**2 / (2 * math.pi))
    analytic = np.sign(teeth) * np.sqrt(2 * math.pi * k / c_mid)
    measured, expected = np.mean(np.diff(teeth)), np.mean(np.diff(analytic))
    report(5, maxima=len(teeth), spacing=measured, analytic=expected, rel_err=measured / expected - 1)
    assert len(teeth) >= 5
    assert measured == pytest.approx(expected, rel=0.02)


@pytest.mark.criterion(6, "concurrence endpoints")
def test_concurrence_endpoints():
    doc = load_document(CONFIGS / "fig4b.json")
    cfg = parse_config(CONFIGS / "fig4b.json")
    start, stop, points = theta_grid(doc)
    assert (start, stop, points) == (0.0, pytest.approx(math.pi / 4, abs=1e-15), 50)
    curve = [c for _, c in concurrence_vs_rotation(cfg, np.linspace(start, stop, points))]
    report(6, c_0=curve[0], c_quarter=curve[-1])
    assert curve[0] >= 1 - 1e-6
    assert curve[-1] <= 1e-6
    assert all(b <= a for a, b in zip(curve, curve[1:]))


@pytest.mark.criterion(7, "concurrence stripes")
def test_concurrence_stripes():
    cfg = parse_config(CONFIGS / "fig4a.json")
    assert not cfg.middles[0].jones_dc.is_identity()
    cmap = concurrence_map(cfg)
    inside = np.abs(cmap.detuning) <= segment_band(cfg)
    values = cmap.concurrence[inside]
    report(7, band_points=int(inside.sum()), c_max=float(values.max()), c_min=float(values.min()))
    assert values.max() >= 0.99
    assert values.min() <= 0.01


@pytest.mark.criterion(8, "tomography pipeline")
def test_table1_pipeline():
    doc = load_document(CONFIGS / "table1.json")
    start = time.perf_counter()
    states = [(label, density_matrix(cfg), measured) for label, cfg, measured in tomography_states(doc)]
    rows = {r.state: r for r in table1_pipeline(states, total_pairs=100_000, seeds=range(100))}
    expected = {
        "segment_1": (1.0, 1.0, 1.0),
        "segment_2": (1.0, 1.0, 1.0),
        "cascade_theta_0": (1.0, 1.0, 1.0),
        "cascade_theta_pi_4": (0.5, 0.0, 0.5),
    }
    for label, model in expected.items():
        r = rows[label]
        assert (r.model_fidelity, r.model_concurrence, r.model_purity) == pytest.approx(model, abs=1e-6)
    projectors = ProjectorSet()
    for label, rho, _ in states:
        noiseless = state_fidelity(rho.data, reconstruct(CountRecord.noiseless(rho, 100_000), projectors).data)
        poisson = np.median(
            [state_fidelity(rho.data, reconstruct(simulate_counts(rho, 100_000, s, projectors), projectors).data) for s in range(100)]
        )
        report(8, state=label, noiseless=noiseless, poisson_median=poisson)
        assert noiseless >= 1 - 1e-9
        assert poisson >= 0.99
    elapsed = time.perf_counter() - start
    report(8, seconds=elapsed)
    assert elapsed < 30.0


@pytest.mark.criterion(9, "concurrence oracle equivalence")
def test_concurrence_oracle():
    rng = np.random.default_rng(20260601)
    worst = 0.0
    for _ in range(1000):
        rho = random_state(rng)
        worst = max(worst, abs(concurrence(rho) - hermitian_concurrence(rho)))
    report(9, worst=worst)
    assert worst <= 1e-9


@pytest.mark.criterion(10, "spectrometer resolution")
def test_spectrometer_resolution():
    model = SpectrometerModel(340.0, 1550.0, 256.0)
    centre = 1550.0 + 128.0 / 340.0
    merged = map_to_histogram(line_spectrum([centre, centre + 0.5]), model)
    resolved = map_to_histogram(line_spectrum([centre, centre + 1.5]), model)
    recovered = recover_spectrum(resolved, model)
    report(10, resolution_nm=recovered.resolution_nm, merged_peaks=count_peaks(merged.counts_density), resolved_peaks=count_peaks(resolved.counts_density))
    assert recovered.resolution_nm == 256.0 / 340.0
    assert f"{recovered.resolution_nm:.4f}" == "0.7529"
    assert count_peaks(merged.counts_density) == 1
    assert count_peaks(resolved.counts_density) == 2
    assert count_peaks(recovered.total) == 2


@pytest.mark.criterion(11, "loss-corrected cascade rate")
def test_cascade_rate():
    value = expected_cascade_rate(0.9, 0.8, 100, 50)
    report(11, rate=value)
    assert value == 121
    assert expected_cascade_rate(1.0, 1.0, 100, 100) == 200
    assert expected_cascade_rate(1.0, 1.0, 37.5, 12.25) == 37.5 + 12.25
