"""Fractional-operator coefficients: oracles, identities, both routes."""

import numpy as np
import pytest
from scipy.special import gamma

from fastl21.fracops import (exp_moment, l21_coeffs, fast_coeffs,
                             local_fast_coeffs, init_history,
                             history_update, apply_fast_op,
                             apply_standard_op, local_weight)
from fastl21.fracops import _phi0, _phi1, _phi2, _xphi12
from fastl21.mesh import graded_mesh
from fastl21.soe import build_soe


# int_{t_{j-1}}^{t_j} w(s) (t_k^* - s)^(-alpha) ds on graded_mesh(12, 3, 1,
# 0.6) at k = 12, 40-digit quadrature; columns weight u^{j-1}, u^j, u^{j+1}
_COEFF_ORACLE = [
    (1, -1.0439661946552616, 1.0439650355904257, 1.1590648358801243e-06),
    (5, -1.0807055811605604, 1.0795325242040625, 0.0011730569564979648),
    (11, -2.2341648416803066, 2.1661119851060153, 0.06805285657429119),
]

# int_{tl}^{tr} s^p e^{-theta (shift - s)} ds, 40-digit quadrature
_MOMENT_ORACLE = [
    (0.0, 0.25, 0.5, 1.0, 0, 0.25),
    (1e-08, 0.25, 0.5, 1.0, 0, 0.2499999984375),
    (3.0, 0.25, 0.5, 1.0, 0, 0.03924364519552183),
    (80.0, 0.98, 1.0, 1.0, 0, 0.00997629352506681),
    (4000.0, 0.999, 1.0, 1.0, 0, 0.0002454210902778165),
    (0.0, 0.25, 0.5, 1.0, 1, 0.09375),
    (2.5, 0.1, 0.9, 2.0, 1, 0.013823775665715993),
    (500.0, 0.95, 1.0, 1.0, 1, 0.0019959999999736686),
]


class TestCoefficientOracle:

    def test_frozen_values(self):
        mesh = graded_mesh(12, 3.0, 1.0, 0.6)
        co = l21_coeffs(mesh, 12)
        scale = np.abs(co.a).max()
        for j, ra, rb, rc in _COEFF_ORACLE:
            i = j - 1
            for got, ref in ((co.a[i], ra), (co.b[i], rb), (co.c[i], rc)):
                assert abs(got - ref) <= 5e-11 * abs(ref) + 1e-12 * scale

    def test_live_mpmath_cross_check(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 30
        mesh = graded_mesh(9, 2.0, 1.0, 0.4)
        k = 9
        co = l21_coeffs(mesh, k)
        t = [mp.mpf(v) for v in mesh.t]
        alpha = mp.mpf(mesh.alpha)
        ts = t[k - 1] + (1 - alpha / 2) * (t[k] - t[k - 1])
        scale = np.abs(co.a).max()
        for j in (1, 4, 8):
            tjm1, tj, tj1 = t[j - 1], t[j], t[j + 1]
            tauj, tauj1 = tj - tjm1, tj1 - tj
            kern = lambda s: (ts - s) ** (-alpha)
            wa = lambda s: (2 * s - tj - tj1) / (tauj * (tauj + tauj1))
            wb = lambda s: (2 * s - tjm1 - tj1) / (-tauj * tauj1)
            wc = lambda s: (2 * s - tjm1 - tj) / (tauj1 * (tauj + tauj1))
            for got, w in ((co.a[j - 1], wa), (co.b[j - 1], wb),
                           (co.c[j - 1], wc)):
                ref = float(mp.quad(lambda s: w(s) * kern(s), [tjm1, tj]))
                assert abs(got - ref) <= 5e-11 * abs(ref) + 1e-12 * scale

    def test_difference_form(self):
        mesh = graded_mesh(20, 2.0, 1.0, 0.5)
        co = l21_coeffs(mesh, 15)
        np.testing.assert_allclose(co.d[0], -co.a[0], rtol=1e-15)
        np.testing.assert_allclose(co.d[1:], co.c[:-1] - co.a[1:], rtol=1e-14)

    def test_local_weight_formula(self):
        mesh = graded_mesh(10, 3.0, 2.0, 0.7)
        for k in (5, 10):
            lam = local_weight(mesh, k)
            ref = (mesh.sigma ** 0.3
                   / (gamma(1.3) * mesh.tau[k - 1] ** 0.7))
            np.testing.assert_allclose(lam, ref, rtol=1e-14)

    def test_local_weight_opening_step_drops_sigma(self):
        mesh = graded_mesh(10, 3.0, 2.0, 0.7)
        ref = 1.0 / (gamma(1.3) * mesh.tau[0] ** 0.7)
        np.testing.assert_allclose(local_weight(mesh, 1), ref, rtol=1e-14)


class TestZeroSums:
    # the three interval weights are the derivative of a quadratic
    # interpolant: they cancel pointwise, so each row sums to zero

    @pytest.mark.parametrize("alpha,r", [(0.3, 6.0), (0.5, 4.0), (0.7, 2.0)])
    def test_plain_rows(self, alpha, r):
        mesh = graded_mesh(60, r, 1.0, alpha)
        for k in (2, 17, 60):
            co = l21_coeffs(mesh, k)
            if co.a.size == 0:
                continue
            scale = np.maximum(np.abs(co.a), np.abs(co.b))
            assert np.all(np.abs(co.a + co.b + co.c) <= 1e-13 * scale)

    def test_exponential_rows(self):
        mesh = graded_mesh(40, 3.0, 1.0, 0.5)
        soe = build_soe(0.5, 1e-12, mesh.sigma * mesh.tau[1], 1.0)
        fc = fast_coeffs(mesh, soe, 40)
        scale = np.maximum(np.abs(fc.a_hat), np.abs(fc.b_hat))
        assert np.all(np.abs(fc.a_hat + fc.b_hat + fc.c_hat) <= 1e-13 * scale)


class TestExpMoment:

    def test_frozen_values(self):
        for th, tl, tr, sh, p, ref in _MOMENT_ORACLE:
            got = exp_moment(np.array([th]), tl, tr, sh, poly_degree=p)[0]
            np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_quadrature_oracle_random(self):
        from scipy.integrate import quad
        rng = np.random.default_rng(11)
        for _ in range(25):
            tl = rng.uniform(0.0, 0.5)
            tr = tl + rng.uniform(1e-4, 0.5)
            sh = tr + rng.uniform(0.0, 0.5)
            th = 10.0 ** rng.uniform(-6, 3)
            got = exp_moment(np.array([th]), tl, tr, sh)[0]
            ref, _ = quad(lambda s: np.exp(-th * (sh - s)), tl, tr,
                          epsabs=1e-16, epsrel=1e-14)
            np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            exp_moment(np.array([-1.0]), 0.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            exp_moment(np.array([1.0]), 0.5, 0.4, 2.0)
        with pytest.raises(ValueError):
            exp_moment(np.array([1.0]), 0.0, 1.0, 2.0, poly_degree=3)


class TestPhiBranches:
    # series and closed form must agree through the x = 1.5 split

    def test_continuity_at_cut(self):
        # series side at 1.5 - ulp-scale offset vs closed side at 1.5:
        # the value drift over 1e-13 is ~1e-14, so disagreement beyond
        # 1e-12 relative would expose a branch mismatch
        lo = np.array([1.5 - 1e-13])
        hi = np.array([1.5])
        for fn in (_phi1, _phi2, _xphi12):
            np.testing.assert_allclose(fn(lo), fn(hi), rtol=1e-12)

    def test_against_arbitrary_precision(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 30
        xs = np.concatenate([np.logspace(-8, np.log10(1.4), 12),
                             np.logspace(np.log10(1.6), 4, 12)])
        for x in xs:
            xm = mp.mpf(float(x))
            p0 = float(mp.quad(lambda v: mp.e ** (-xm * v), [0, 1]))
            p1 = float(mp.quad(lambda v: v * mp.e ** (-xm * v), [0, 1]))
            p2 = float(mp.quad(lambda v: v * v * mp.e ** (-xm * v), [0, 1]))
            x12 = float(xm * mp.quad(
                lambda v: v * (1 - v) * mp.e ** (-xm * v), [0, 1]))
            np.testing.assert_allclose(_phi0(np.array([x]))[0], p0,
                                       rtol=5e-14)
            np.testing.assert_allclose(_phi1(np.array([x]))[0], p1,
                                       rtol=5e-14)
            np.testing.assert_allclose(_phi2(np.array([x]))[0], p2,
                                       rtol=5e-14)
            np.testing.assert_allclose(_xphi12(np.array([x]))[0], x12,
                                       rtol=5e-14, atol=1e-300)


class TestRecurrenceVsDirect:

    def test_scalar_history_k_to_200(self):
        # recurrence-propagated exponential states against freshly
        # aggregated coefficients, smooth-plus-singular samples
        alpha = 0.5
        mesh = graded_mesh(200, 3.0, 1.0, alpha)
        soe = build_soe(alpha, 1e-12, mesh.sigma * mesh.tau[1], 1.0)
        u = mesh.t ** alpha + 0.3 * mesh.t ** 2
        hist = init_history(soe)
        worst = 0.0
        for k in range(2, 201):
            lc = local_fast_coeffs(mesh, soe, k)
            hist = history_update(hist, lc, u[k - 2], u[k - 1], u[k])
            got = apply_fast_op(mesh, soe, hist, u[k - 1], u[k])
            fc = fast_coeffs(mesh, soe, k)
            direct = (fc.a_hat @ u[:k - 1] + fc.b_hat @ u[1:k]
                      + fc.c_hat @ u[2:k + 1])
            ref = direct / gamma(1.0 - alpha) + fc.local * (u[k] - u[k - 1])
            worst = max(worst, abs(got - ref))
        assert worst <= 1e-11

    def test_vector_states_match_scalar(self):
        alpha = 0.4
        mesh = graded_mesh(30, 2.0, 1.0, alpha)
        soe = build_soe(alpha, 1e-10, mesh.sigma * mesh.tau[1], 1.0)
        rng = np.random.default_rng(3)
        u = rng.standard_normal((31, 5))
        hist_v = init_history(soe, shape=(5,))
        hists = [init_history(soe) for _ in range(5)]
        for k in range(2, 31):
            lc = local_fast_coeffs(mesh, soe, k)
            hist_v = history_update(hist_v, lc, u[k - 2], u[k - 1], u[k])
            vec = apply_fast_op(mesh, soe, hist_v, u[k - 1], u[k])
            for c in range(5):
                hists[c] = history_update(hists[c], lc, u[k - 2, c],
                                          u[k - 1, c], u[k, c])
                sca = apply_fast_op(mesh, soe, hists[c], u[k - 1, c],
                                    u[k, c])
                np.testing.assert_allclose(vec[c], sca, rtol=1e-14,
                                           atol=1e-15)

    def test_out_of_step_update_rejected(self):
        mesh = graded_mesh(10, 2.0, 1.0, 0.5)
        soe = build_soe(0.5, 1e-10, mesh.sigma * mesh.tau[1], 1.0)
        hist = init_history(soe)
        lc3 = local_fast_coeffs(mesh, soe, 3)
        with pytest.raises(ValueError):
            history_update(hist, lc3, 0.0, 0.0, 0.0)


class TestStandardOp:

    def test_power_function_exact_value(self):
        # Caputo derivative of t^1 is t^(1-alpha)/Gamma(2-alpha); the
        # scheme reproduces linear-in-time samples up to quadrature noise
        alpha = 0.5
        mesh = graded_mesh(64, 2.0, 1.0, alpha)
        u = mesh.t.copy()
        for k in (1, 5, 32, 64):
            got = apply_standard_op(mesh, u, k)
            # the opening step integrates over the whole first interval,
            # so its target is the endpoint derivative, not the offset one
            ts = mesh.t[1] if k == 1 else mesh.tstar[k - 1]
            ref = ts ** (1.0 - alpha) / gamma(2.0 - alpha)
            np.testing.assert_allclose(got, ref, rtol=1e-11)

    def test_constant_maps_to_zero(self):
        mesh = graded_mesh(25, 3.0, 1.0, 0.3)
        u = np.full(26, 7.5)
        for k in (1, 10, 25):
            assert abs(apply_standard_op(mesh, u, k)) < 1e-12

    def test_fast_matches_standard_on_singular_samples(self):
        alpha = 0.5
        mesh = graded_mesh(120, 4.0, 1.0, alpha)
        soe = build_soe(alpha, 1e-12, mesh.sigma * mesh.tau[1], 1.0)
        u = mesh.t ** alpha
        hist = init_history(soe)
        dev = 0.0
        for k in range(2, 121):
            lc = local_fast_coeffs(mesh, soe, k)
            hist = history_update(hist, lc, u[k - 2], u[k - 1], u[k])
            fast = apply_fast_op(mesh, soe, hist, u[k - 1], u[k])
            std = apply_standard_op(mesh, u, k)
            dev = max(dev, abs(fast - std))
        # epsilon-level agreement: the two routes share no code past the
        # kernel representation
        assert dev < 1e-10

    def test_rejects_short_sample_array(self):
        mesh = graded_mesh(10, 2.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            apply_standard_op(mesh, np.zeros(4), 8)
