"""Spectra, signed log-determinants, NCM histograms, semicircle distance."""

import numpy as np
import pytest

from bandmoments.ensemble import MatrixSample, RngStream, sample_goe
from bandmoments.kernels import semicircle_cdf
from bandmoments.spectral import (NcmHistogram, Spectrum, eigenvalues, ncm,
                                  semicircle_distance, signed_logdet)

RNG = np.random.default_rng(1)


class TestEigenvalues:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(
            eigenvalues(MatrixSample(np.zeros((3, 3)))).values, np.zeros(3))

    def test_diagonal(self):
        spec = eigenvalues(MatrixSample(np.diag([1.0, -1.0])))
        np.testing.assert_array_equal(spec.values, [-1.0, 1.0])

    def test_trace_and_frobenius_identities(self):
        g = RNG.standard_normal((8, 8))
        h = g + g.T
        spec = eigenvalues(MatrixSample(h))
        assert np.all(np.diff(spec.values) >= 0.0)
        assert abs(spec.values.sum() - np.trace(h)) < 1e-8 * 8
        assert abs((spec.values**2).sum() - (h**2).sum()) < 1e-8 * 8


class TestSignedLogdet:
    def test_sign_flip_between_eigenvalues(self):
        sld = signed_logdet(Spectrum(np.array([-1.0, 1.0])), 0.0)
        assert sld.sign == -1
        assert sld.log_magnitude == pytest.approx(0.0)

    def test_above_spectrum(self):
        sld = signed_logdet(Spectrum(np.zeros(3)), 2.0)
        assert sld.sign == 1
        assert sld.log_magnitude == pytest.approx(3.0 * np.log(2.0))

    def test_exact_hit_is_singular(self):
        sld = signed_logdet(Spectrum(np.array([0.0])), 0.0)
        assert sld.sign == 0
        assert sld.log_magnitude == -np.inf

    @pytest.mark.parametrize("n", [2, 5, 12])
    def test_matches_row_reduction_oracle(self, n):
        g = RNG.standard_normal((n, n))
        h = g + g.T
        spec = eigenvalues(MatrixSample(h))
        for lam in (-1.3, 0.2, 4.0):
            direct = np.linalg.det(lam * np.eye(n) - h)
            sld = signed_logdet(spec, lam)
            assert sld.sign * np.exp(sld.log_magnitude) == pytest.approx(
                direct, rel=1e-8)


class TestNcm:
    def test_point_mass_in_range(self):
        hist = ncm(Spectrum(np.zeros(3)), [-1.0, 1.0])
        np.testing.assert_array_equal(hist.masses, [1.0])

    def test_all_outside(self):
        hist = ncm(Spectrum(np.array([-3.0, 3.0])), [-1.0, 1.0])
        np.testing.assert_array_equal(hist.masses, [0.0])

    def test_counts_over_n(self):
        hist = ncm(Spectrum(np.array([-0.5, 0.1, 0.2, 3.0])), [-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(hist.masses, [0.25, 0.5])

    def test_rejects_unsorted_edges(self):
        with pytest.raises(ValueError):
            ncm(Spectrum(np.zeros(1)), [1.0, -1.0])


class TestSemicircleDistance:
    def test_exact_semicircle_masses_give_zero(self):
        edges = np.linspace(-2.5, 2.5, 51)
        masses = np.diff(semicircle_cdf(edges))
        hist = NcmHistogram(edges, masses, 1000)
        assert semicircle_distance(hist) == pytest.approx(0.0, abs=1e-15)

    def test_point_mass_at_zero(self):
        edges = np.linspace(-2.5, 2.5, 101)
        hist = ncm(Spectrum(np.zeros(7)), edges)
        assert semicircle_distance(hist) >= 0.5

    def test_goe_aggregate_is_close(self):
        eigs = np.sort(np.concatenate([
            np.linalg.eigvalsh(sample_goe(256, RngStream(11, k)).entries)
            for k in range(8)]))
        hist = ncm(Spectrum(eigs), np.linspace(-2.5, 2.5, 101))
        assert semicircle_distance(hist) < 0.05
