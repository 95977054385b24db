import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import line_spectrum, two_segment
from cascade_spdc.biphoton import SpectrumTable, joint_spectrum, spectrum_metrics
from cascade_spdc.spectrometer import (
    Histogram,
    SpectrometerModel,
    count_peaks,
    expected_cascade_rate,
    map_to_histogram,
    recover_spectrum,
)

MODEL = SpectrometerModel(340.0, 1550.0, 256.0)
BIN_CENTRE_NM = 1550.0 + 128.0 / 340.0


class TestModel:
    def test_one_nm_is_340_ps(self):
        assert MODEL.delay_ps(1551.0) - MODEL.delay_ps(1550.0) == pytest.approx(340.0, rel=1e-12)

    def test_inverse_map(self):
        assert MODEL.wavelength_nm(MODEL.delay_ps(1553.7)) == pytest.approx(1553.7, rel=1e-15)

    def test_resolution_exact(self):
        assert MODEL.resolution_nm == 256.0 / 340.0
        assert round(MODEL.resolution_nm, 4) == 0.7529

    @pytest.mark.parametrize("field", [0, 1, 2])
    def test_positive_fields(self, field):
        args = [340.0, 1550.0, 256.0]
        args[field] = 0.0
        with pytest.raises(ValueError):
            SpectrometerModel(*args)


class TestHistogram:
    def test_bins_aligned_to_window(self):
        hist = map_to_histogram(line_spectrum([BIN_CENTRE_NM]), MODEL)
        assert np.allclose(np.diff(hist.edges_ps), 256.0)
        assert np.allclose(hist.edges_ps / 256.0, np.round(hist.edges_ps / 256.0))

    def test_mass_conserved(self):
        spec = line_spectrum([1549.3, BIN_CENTRE_NM, 1552.1], width_nm=0.3)
        hist = map_to_histogram(spec, MODEL)
        assert hist.mass.sum() == pytest.approx(spec.integral(), rel=1e-9)

    def test_mass_conserved_cascade_spectrum(self):
        spec = joint_spectrum(two_segment(points=4097))
        back = recover_spectrum(map_to_histogram(spec, MODEL), MODEL)
        assert back.integral() == pytest.approx(spec.integral(), rel=1e-9)

    def test_delta_line_one_or_two_bins(self):
        for offset in (0.0, 0.1, 0.37, 0.7525):
            spec = line_spectrum([1550.0 + offset], width_nm=0.002, points=60001)
            mass = map_to_histogram(spec, MODEL).mass.sum(axis=0)
            occupied = np.flatnonzero(mass > 1e-9 * mass.sum())
            assert 1 <= occupied.size <= 2
            assert occupied[-1] - occupied[0] == occupied.size - 1

    def test_merge_at_half_nm(self):
        hist = map_to_histogram(line_spectrum([BIN_CENTRE_NM, BIN_CENTRE_NM + 0.5]), MODEL)
        assert count_peaks(hist.counts_density) == 1

    def test_resolve_at_one_and_half_nm(self):
        hist = map_to_histogram(line_spectrum([BIN_CENTRE_NM, BIN_CENTRE_NM + 1.5]), MODEL)
        assert count_peaks(hist.counts_density) == 2

    def test_csv(self, tmp_path):
        path = tmp_path / "h.csv"
        hist = map_to_histogram(line_spectrum([BIN_CENTRE_NM]), MODEL)
        hist.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t_ps,counts_density"
        assert len(lines) == hist.mass.shape[1] + 1


class TestRecover:
    def test_reports_resolution(self):
        back = recover_spectrum(map_to_histogram(line_spectrum([BIN_CENTRE_NM]), MODEL), MODEL)
        assert back.resolution_nm == 256.0 / 340.0
        assert back.mode == "measured"

    def test_bin_centres_become_wavelengths(self):
        hist = map_to_histogram(line_spectrum([BIN_CENTRE_NM]), MODEL)
        back = recover_spectrum(hist, MODEL)
        assert np.allclose(np.sort(back.wavelength_nm), 1550.0 + hist.t_ps / 340.0, rtol=1e-12)

    def test_constant_spectrum(self):
        spec = line_spectrum([])
        spec.channels[0] = 2.5
        back = recover_spectrum(map_to_histogram(spec, MODEL), MODEL)
        # partially covered end bins are excluded
        assert np.allclose(back.channel("HH")[1:-1], 2.5, rtol=1e-6)
        assert np.all(back.channel("VV") == 0)

    def test_round_trip_fwhm_within_one_bin(self):
        spec = joint_spectrum(two_segment(mode="incoherent", points=8193, span=6e13))
        before = spectrum_metrics(spec).fwhm
        back = recover_spectrum(map_to_histogram(spec, MODEL), MODEL)
        bin_rad_s = np.max(back.sample_widths)
        assert abs(spectrum_metrics(back).fwhm - before) <= bin_rad_s

    def test_histogram_without_centre_uses_reference(self):
        hist = map_to_histogram(line_spectrum([BIN_CENTRE_NM]), MODEL)
        bare = Histogram(hist.edges_ps, hist.mass)
        assert np.allclose(recover_spectrum(bare, MODEL).wavelength_nm, recover_spectrum(hist, MODEL).wavelength_nm)


class TestCountPeaks:
    def test_plateau_counts_once(self):
        assert count_peaks([0, 1, 1, 0, 2, 0]) == 2

    def test_threshold(self):
        assert count_peaks([0, 100, 0, 0.5, 0]) == 1

    def test_empty(self):
        assert count_peaks(np.zeros(4)) == 0


class TestCascadeRate:
    def test_worked_example(self):
        assert expected_cascade_rate(0.9, 0.8, 100, 50) == 121.0

    def test_lossless_additive(self):
        assert expected_cascade_rate(1, 1, 100, 100) == 200

    def test_no_signal_transmission(self):
        assert expected_cascade_rate(0.0, 0.7, 1e6, 10) == pytest.approx(7.0)

    @given(
        st.floats(0, 1), st.floats(0, 1), st.floats(0, 1e6), st.floats(0, 1e6),
        st.floats(0.1, 10), st.floats(0.1, 1),
    )
    def test_linear_in_rates_quadratic_in_signal(self, es, ep, r1, r2, k, s):
        base = expected_cascade_rate(es, ep, r1, r2)
        assert expected_cascade_rate(es, ep, k * r1, k * r2) == pytest.approx(k * base, rel=1e-12, abs=1e-9)
        lhs = expected_cascade_rate(s * es, ep, r1, 0.0)
        assert lhs == pytest.approx(s**2 * expected_cascade_rate(es, ep, r1, 0.0), rel=1e-12, abs=1e-9)

    @pytest.mark.parametrize("args", [(1.1, 0.5, 1, 1), (0.5, -0.1, 1, 1), (0.5, 0.5, -1, 1), (0.5, 0.5, 1, float("nan"))])
    def test_validation(self, args):
        with pytest.raises(ValueError):
            expected_cascade_rate(*args)


def test_recovered_table_round_trips_csv(tmp_path):
    back = recover_spectrum(map_to_histogram(line_spectrum([BIN_CENTRE_NM], width_nm=0.5), MODEL), MODEL)
    path = tmp_path / "r.csv"
    back.to_csv(path)
    again = SpectrumTable.from_csv(path)
    assert np.allclose(again.total, back.total, rtol=1e-7)
