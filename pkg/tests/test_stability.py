"""Positivity machinery: envelope functions, matrix split, certificates."""

import numpy as np
import pytest
from scipy.special import gamma

from fastl21.mesh import TimeMesh, graded_mesh, hybrid_mesh
from fastl21.soe import build_soe
from fastl21.stability import (BilinearMatrix, f1_f2, assemble_bilinear,
                               certify_psd, verify_Q_properties,
                               scalar_truncation_probe)
from fastl21.fracops import fast_coeffs


def _setup(alpha=0.5, r=4.0, n=40, t_end=1.0, eps=1e-12):
    mesh = graded_mesh(n, r, t_end, alpha)
    soe = build_soe(alpha, eps, mesh.sigma * mesh.tau[1], max(1.0, t_end))
    return mesh, soe


class TestEnvelopes:

    def test_frozen_midpoint(self):
        f1, f2 = f1_f2(0.5)
        np.testing.assert_allclose(f1, 0.7747753102080128, rtol=1e-14)
        np.testing.assert_allclose(f2, 0.6465597307568083, rtol=1e-14)

    def test_above_0p6_on_99_grid(self):
        alphas = np.linspace(0.01, 0.99, 99)
        f1, f2 = f1_f2(alphas)
        assert f1.min() >= 0.6
        assert f2.min() >= 0.6

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            f1_f2(0.0)
        with pytest.raises(ValueError):
            f1_f2(np.array([0.5, 1.0]))


class TestAssembly:

    def test_rows_match_coefficients(self):
        mesh, soe = _setup(n=20)
        bm = assemble_bilinear(mesh, soe, 12)
        assert bm.m.shape == (12, 12)
        assert np.allclose(np.triu(bm.m, 1), 0.0)
        fc = fast_coeffs(mesh, soe, 7)
        np.testing.assert_allclose(bm.m[6, :6], fc.d_hat, rtol=1e-15)

    def test_split_is_exact(self):
        mesh, soe = _setup(n=20)
        bm = assemble_bilinear(mesh, soe, 12)
        np.testing.assert_allclose(bm.a + np.diag(bm.bdiag), bm.m,
                                   rtol=1e-15)
        np.testing.assert_allclose(np.diag(bm.a), bm.beta, rtol=1e-15)

    def test_mesh_must_exceed_n(self):
        mesh, soe = _setup(n=10)
        with pytest.raises(ValueError):
            assemble_bilinear(mesh, soe, 10)   # beta_10 needs step 11


class TestCertificates:

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
    def test_graded_passes(self, alpha):
        mesh, soe = _setup(alpha=alpha, r=2.0 / alpha)
        cert = certify_psd(assemble_bilinear(mesh, soe, 32))
        assert cert.passed
        assert cert.s_min_eig >= -cert.eig_tol
        assert cert.bdiag_min >= 0.0
        assert cert.bound_margins.min() >= -1e-12

    def test_hybrid_passes(self):
        mesh = hybrid_mesh(40, 4.0, 1.0, 1.005, 0.2, 3.0, 0.5)
        soe = build_soe(0.5, 1e-12, mesh.sigma * mesh.tau[1], 4.0)
        cert = certify_psd(assemble_bilinear(mesh, soe, 32))
        assert cert.passed

    def test_quadratic_form_oracle(self):
        mesh, soe = _setup()
        bm = assemble_bilinear(mesh, soe, 32)
        rng = np.random.default_rng(42)
        for _ in range(200):
            psi = rng.standard_normal(32)
            quad = psi @ bm.m @ psi
            floor = bm.bdiag @ psi ** 2
            assert quad >= floor - 1e-10 * max(1.0, abs(floor))

    def test_uniform_mesh_certifies(self):
        # no grading at all: ratios are 1, still positive definite
        mesh = graded_mesh(40, 1.0, 1.0, 0.5)
        soe = build_soe(0.5, 1e-12, mesh.sigma * mesh.tau[0], 1.0)
        cert = certify_psd(assemble_bilinear(mesh, soe, 32))
        assert cert.passed


class TestQProperties:

    def test_graded_rows(self):
        mesh, soe = _setup(n=30)
        rep = verify_Q_properties(mesh, soe, 24)
        assert rep.passed
        assert rep.q1_margin >= -1e-13
        assert rep.q2_margin >= -1e-13
        assert rep.q3_margin >= -1e-13

    def test_hybrid_rows(self):
        mesh = hybrid_mesh(30, 4.0, 1.0, 1.01, 0.1, 2.0, 0.6)
        soe = build_soe(0.6, 1e-12, mesh.sigma * mesh.tau[1], 3.0)
        rep = verify_Q_properties(mesh, soe, 24)
        assert rep.passed

    def test_input_validation(self):
        mesh, soe = _setup(n=10)
        with pytest.raises(ValueError):
            verify_Q_properties(mesh, soe, 1)
        with pytest.raises(ValueError):
            verify_Q_properties(mesh, soe, 11)

    def test_sharp_ratio_violation_reported(self):
        t = np.array([0.0, 0.5, 0.6, 0.60001, 0.8, 1.0])
        mesh = TimeMesh(0.5, t)
        soe = build_soe(0.5, 1e-12, mesh.sigma * mesh.tau.min(), 1.0)
        rep = verify_Q_properties(mesh, soe, 5)
        assert not rep.cond_ratio_ok


class TestTruncationProbe:

    def test_fractional_power_probe_decays(self):
        mesh, soe = _setup(n=100)
        err = scalar_truncation_probe(mesh, soe, "talpha")
        # the opening step sees the raw interpolation defect of t^alpha
        # plus the sigma-free weight offset; by mid-mesh the error has
        # dropped by three orders
        assert err[0] < 0.3
        assert err[50:].max() < 1e-3 * err[0]

    def test_linear_probe_exact_past_opening_step(self):
        mesh, soe = _setup(n=60)
        err = scalar_truncation_probe(mesh, soe, "linear")
        # the sigma-free opening step lands on the endpoint derivative
        # t1^{1-alpha}/Gamma(2-alpha); the probe reports the gap to the
        # offset-point value, every later step is exact
        tau1 = mesh.tau[0]
        gap = (tau1 ** 0.5 - (mesh.sigma * tau1) ** 0.5) / gamma(1.5)
        np.testing.assert_allclose(err[0], gap, rtol=1e-10)
        assert err[1:].max() < 1e-10

    def test_unknown_probe_rejected(self):
        mesh, soe = _setup(n=10)
        with pytest.raises(ValueError):
            scalar_truncation_probe(mesh, soe, "cubic")
