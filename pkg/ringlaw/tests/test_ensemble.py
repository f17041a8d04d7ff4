import json
import math

import numpy as np
import pytest
from scipy import stats

from ringlaw.services.ensemble import (ZERO_TOL, EigenSample, SampleConfig, _sample_once, empirical_cdf, haar_unitary,
                                       ks_distance, ks_two_sample, quantile_g_list, sample_moduli, sample_stream,
                                       unitarity_residual, write_sample)
from ringlaw.services.errors import ConfigurationError
from ringlaw.services.measure import GSpectrum, MeasureSpec
from ringlaw.services.report import OutputDirectory, read_csv


def truncated_config(N, samples, seed=42, mu=0.5):
    return SampleConfig.from_measure(MeasureSpec.truncated(mu), N, samples, seed)


class TestHaarUnitary:
    def test_one_by_one_is_a_phase(self):
        u = haar_unitary(1, sample_stream(3, 0))
        assert u.shape == (1, 1)
        assert abs(abs(u[0, 0]) - 1.0) <= 1e-14

    def test_eigenvalues_on_unit_circle(self):
        u = haar_unitary(16, sample_stream(3, 1))
        moduli = np.abs(np.linalg.eigvals(u))
        assert np.all(np.abs(moduli - 1.0) <= 1e-10)

    @pytest.mark.parametrize('N', [2, 5, 32, 100])
    def test_unitarity_residual(self, N):
        for index in range(5):
            assert unitarity_residual(haar_unitary(N, sample_stream(N, index))) <= 1e-12

    def test_first_entry_phase_is_uniform(self):
        angles = [np.angle(haar_unitary(2, sample_stream(2024, index))[0, 0]) for index in range(2000)]
        counts, _ = np.histogram(angles, bins=20, range=(-math.pi, math.pi))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_streams_depend_only_on_seed_and_index(self):
        a = haar_unitary(4, sample_stream(5, 7))
        b = haar_unitary(4, sample_stream(5, 7))
        c = haar_unitary(4, sample_stream(5, 8))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_empty_dimension(self):
        with pytest.raises(ConfigurationError):
            haar_unitary(0, sample_stream(0, 0))


class TestSampleConfig:
    def test_quantile_g_list(self):
        assert quantile_g_list(MeasureSpec.truncated(0.5), 4) == [0.0, 0.0, 1.0, 1.0]
        assert quantile_g_list(MeasureSpec.uniform(0.0, 1.0), 2) == pytest.approx([0.25, 0.75])

    def test_from_measure(self):
        cfg = truncated_config(4, 3, seed=1)
        assert cfg.g == (0.0, 0.0, 1.0, 1.0)
        assert cfg.g_source == MeasureSpec.truncated(0.5).describe()
        assert cfg.violations() == []

    def test_violations(self):
        cfg = SampleConfig(N=2, samples=0, seed=-1, g=(0.5, 1.5, 0.2))
        errors = cfg.violations()
        assert "sample.samples: positive integer required" in errors
        assert "sample.seed: unsigned 64-bit integer required" in errors
        assert "sample.g: length 3 must equal N" in errors
        assert "sample.g: every g must be in [0,1]" in errors

    def test_invalid_config_is_rejected(self):
        with pytest.raises(ConfigurationError):
            sample_moduli(SampleConfig(N=0, samples=1, seed=0, g=()))


class TestSampleModuli:
    def test_unitary_case(self):
        es = sample_moduli(SampleConfig(N=8, samples=5, seed=1, g=(1.0,) * 8))
        assert es.count == 40
        assert np.all(np.abs(es.moduli - 1.0) <= 1e-10)
        assert es.zero_fraction == 0.0

    def test_zero_matrix(self):
        es = sample_moduli(SampleConfig(N=6, samples=3, seed=1, g=(0.0,) * 6))
        assert np.all(es.moduli == 0.0)
        assert es.zero_fraction == 1.0

    def test_rank_deficiency_is_exact(self):
        es = sample_moduli(truncated_config(64, 200))
        assert es.count == 64 * 200
        assert es.zero_fraction == pytest.approx(0.5, abs=1e-12)

    def test_zero_count_in_every_sample(self):
        cfg = SampleConfig(N=12, samples=25, seed=8, g=(0.0,) * 5 + (0.4,) * 3 + (1.0,) * 4)
        sqrt_g = np.sqrt(np.asarray(cfg.g))
        for index in range(cfg.samples):
            moduli = _sample_once(cfg, sqrt_g, index)
            assert np.count_nonzero(moduli <= ZERO_TOL) == 5

    def test_collapsed_ring_law(self, truncated_half):
        g = (1.0,) * 8
        es = sample_moduli(SampleConfig(N=8, samples=4, seed=3, g=g))
        assert ks_distance(es, GSpectrum.from_values(g)) == 0.0
        assert ks_distance(es, truncated_half) == 1.0

    def test_sorted_and_subunitary(self, uniform_spec):
        es = sample_moduli(SampleConfig.from_measure(uniform_spec, 16, 20, 9))
        assert np.all(np.diff(es.moduli) >= 0.0)
        assert es.moduli[-1] <= 1.0 + 1e-8
        assert not es.flagged

    def test_thread_count_does_not_change_output(self):
        cfg = truncated_config(12, 30, seed=77)
        serial = sample_moduli(cfg, threads=1)
        parallel = sample_moduli(cfg, threads=4)
        assert np.array_equal(serial.moduli, parallel.moduli)
        assert serial.zero_fraction == parallel.zero_fraction

    def test_seed_changes_output(self):
        a = sample_moduli(truncated_config(8, 4, seed=1))
        b = sample_moduli(truncated_config(8, 4, seed=2))
        assert not np.array_equal(a.moduli, b.moduli)


class TestEmpiricalCdf:
    @pytest.fixture
    def sample(self):
        moduli = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
        return EigenSample(moduli=moduli, zero_fraction=0.125, provenance=SampleConfig(N=4, samples=2, seed=0,
                                                                                        g=(0.0, 0.5, 0.5, 1.0)))

    def test_steps(self, sample):
        assert empirical_cdf(sample, -0.1) == 0.0
        assert empirical_cdf(sample, 0.0) == 0.125
        assert empirical_cdf(sample, 0.35) == 0.5
        assert empirical_cdf(sample, 0.7) == 1.0
        assert empirical_cdf(sample, 5.0) == 1.0

    def test_median(self):
        es = sample_moduli(truncated_config(16, 25, seed=3))
        median = float(np.median(es.moduli))
        assert abs(empirical_cdf(es, median) - 0.5) <= 1.0 / es.count

    def test_self_distance(self):
        es = sample_moduli(truncated_config(16, 10, seed=4))
        assert ks_two_sample(es, es) == 0.0


class TestWriteSample:
    def test_files(self, tmp_path):
        es = sample_moduli(truncated_config(4, 3, seed=11))
        csv_path, json_path = write_sample(es, OutputDirectory(tmp_path / 'out'), '1.0.0')

        rows = read_csv(csv_path)
        assert len(rows) == 12
        assert [float(row['modulus']) for row in rows] == es.moduli.tolist()
        assert csv_path.read_bytes().startswith(b'modulus\n')

        provenance = json.loads(json_path.read_text(encoding='utf-8'))
        assert provenance['seed'] == 11
        assert provenance['N'] == 4
        assert provenance['samples'] == 3
        assert provenance['count'] == 12
        assert provenance['version'] == '1.0.0'
        assert provenance['excluded_samples'] == []


@pytest.mark.slow
class TestConvergence:
    def test_truncated_ks(self, truncated_half):
        es = sample_moduli(truncated_config(64, 200, seed=2024), threads=0)
        assert ks_distance(es, truncated_half, threads=0) <= 0.07

    def test_two_atom_ks(self, two_atom):
        es = sample_moduli(SampleConfig.from_measure(two_atom, 64, 200, 2024), threads=0)
        assert ks_distance(es, two_atom, threads=0) <= 0.12

    def test_ks_shrinks_with_n(self, truncated_half):
        small = sample_moduli(truncated_config(16, 800, seed=2024), threads=0)
        large = sample_moduli(truncated_config(64, 200, seed=2024), threads=0)
        assert small.count == large.count
        assert ks_distance(large, truncated_half) < ks_distance(small, truncated_half)

    def test_two_atom_ks_shrinks_with_n(self, two_atom):
        small = sample_moduli(SampleConfig.from_measure(two_atom, 16, 800, 2024), threads=0)
        large = sample_moduli(SampleConfig.from_measure(two_atom, 64, 200, 2024), threads=0)
        assert ks_distance(large, two_atom) < ks_distance(small, two_atom)

    def test_permuting_g_keeps_the_law(self, two_atom):
        g = tuple(quantile_g_list(two_atom, 32))
        ordered = sample_moduli(SampleConfig(N=32, samples=200, seed=5, g=g), threads=0)
        permuted = sample_moduli(SampleConfig(N=32, samples=200, seed=6, g=g[::-1]), threads=0)
        assert ks_two_sample(ordered, permuted) <= 0.05
