"""Transfer evaluation of F2 at equal arguments: anchors, oracles, refinement."""

import math

import numpy as np
import pytest

import bandmoments.transfer as transfer
from bandmoments.group_integrals import HcizParams, hciz_sp2
from bandmoments.kernels import rho
from bandmoments.lattice import LatticeParams
from bandmoments.transfer import (Grid2D, GridOffsetError, _contract,
                                  _site_weights, build_kernel, cross_validate,
                                  transfer_evaluate)


class TestSingleSiteAnchor:
    @pytest.mark.parametrize("lambda0,xi,w", [
        (0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (0.0, 0.7, 2.0),
        (1.0, -0.5, 4.0), (1.5, 0.5, 17.0),
    ])
    def test_matches_closed_form(self, lambda0, xi, w):
        result = transfer_evaluate(build_kernel(LatticeParams(0, w), lambda0, xi))
        lam = lambda0 + xi / rho(lambda0)
        assert result.f2 == pytest.approx(lam**2 + 2.0, rel=1e-6)
        assert result.imag_ratio < 1e-6
        assert result.prefactor_sign == -1


class TestKernelStructure:
    def test_gaussian_couplings_symmetric(self):
        k = build_kernel(LatticeParams(1, 2.0), 0.3, 0.1)
        np.testing.assert_array_equal(k.gaa, k.gaa.T)
        np.testing.assert_array_equal(k.gbb, k.gbb.T)
        np.testing.assert_array_equal(k.gba, k.gab.T)

    def test_nodes_stay_apart(self):
        k = build_kernel(LatticeParams(1, 1.0), 0.0, 0.0)
        gaps = np.abs(k.grid.nodes_a[:, None] - k.grid.nodes_b[None, :])
        assert gaps.min() >= k.grid.offset - 1e-15
        assert gaps.min() > 1e-6

    def test_offset_guard_raises(self, monkeypatch):
        monkeypatch.setattr(transfer, "_MIN_NODE_GAP", 1.0)
        with pytest.raises(GridOffsetError):
            build_kernel(LatticeParams(1, 1.0), 0.0, 0.0)

    def test_radius_covers_saddle_region(self):
        for w in (1.0, 2.0, 4.0):
            k = build_kernel(LatticeParams(2, w), 1.0, 0.0)
            assert k.grid.radius >= math.pi * rho(1.0) + 5.0 / w

    def test_site_weights_even_for_centered_band(self):
        # w(a, b) = w(-a, -b) at lambda0 = 0, xi = 0
        nodes = np.array([-1.7, -0.6, -0.25, 0.25, 0.6, 1.7])
        grid = Grid2D(nodes, np.ones(6), nodes, np.ones(6), 2.0, 0.0)
        w = _site_weights(grid, LatticeParams(1, 1.0), 0.0, 0.0)
        np.testing.assert_allclose(w, w[::-1, ::-1], rtol=1e-13, atol=1e-16)

    def test_large_w_coupling_concentrates(self):
        k = build_kernel(LatticeParams(1, 4.0), 0.0, 0.0)
        a = k.grid.nodes_a
        far = np.abs(a[:, None] - a[None, :]) > 1.0
        assert np.max(k.gaa[far]) < 1e-3


class TestDenseKernelOracle:
    def test_contraction_matches_dense_hciz_kernel(self):
        # three-site chain contracted against a dense kernel built entry by
        # entry from the independently validated Sp(2) closed form
        k = build_kernel(LatticeParams(1, 2.0), 0.5, 0.3, refine=0.125)
        w2 = k.params.W**2
        a, b = k.grid.nodes_a, k.grid.nodes_b
        ga, gb = np.meshgrid(a, b, indexing="ij")
        pairs_a = ga.ravel()
        pairs_b = gb.ravel()
        site = k.site.ravel()
        n_pairs = len(pairs_a)
        dense = np.empty((n_pairs, n_pairs), dtype=complex)
        for i in range(n_pairs):
            gauss = np.exp(-0.5 * w2 * (pairs_a[i] ** 2 + pairs_b[i] ** 2
                                        + pairs_a**2 + pairs_b**2))
            vals = np.array([hciz_sp2(HcizParams(w2, pairs_a[i], pairs_b[i],
                                                 pairs_a[q], pairs_b[q]))
                             for q in range(n_pairs)])
            dense[i] = gauss * vals
        # two bonds: site . K . diag(site) . K . site
        chain = complex(site @ (dense @ (site * (dense @ site))))
        expected = (k.prefactor_sign * chain
                    * math.exp(k.log_prefactor_magnitude))
        got = _contract(k)
        assert got == pytest.approx(expected, rel=1e-10)


class TestRefinement:
    def test_cauchy_property(self):
        params = LatticeParams(1, 1.0)
        vals = [_contract(build_kernel(params, 0.0, 0.0, refine=r))
                for r in (0.5, 1.0, 2.0)]
        d1 = abs(vals[1] - vals[0])
        d2 = abs(vals[2] - vals[1])
        assert d1 > 0
        assert d2 <= d1 / 4.0 or d1 < 1e-12 * abs(vals[2])

    def test_error_estimate_brackets_refinement_gap(self):
        k = build_kernel(LatticeParams(1, 1.0), 0.0, 0.0)
        result = transfer_evaluate(k)
        coarse = _contract(k)
        assert abs(result.value - coarse) == pytest.approx(
            result.quadrature_error_estimate)
        assert result.converged


class TestCrossValidate:
    def test_three_site_chain_agrees_with_mc(self):
        cv = cross_validate(LatticeParams(1, 1.0), 0.0, 0.0,
                            mc_samples=60_000, master_seed=17)
        assert abs(cv.z_score) <= 3.0
        assert cv.within_3_sigma
        assert cv.transfer.imag_ratio < 1e-6

    def test_nonzero_xi_agrees_with_mc(self):
        cv = cross_validate(LatticeParams(1, 1.0), 1.0, 0.8,
                            mc_samples=60_000, master_seed=18)
        assert abs(cv.z_score) <= 3.0
