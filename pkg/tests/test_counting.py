"""Counting statistics: windows, moments, Eq.-(7) quadrature, efficiency correction."""

import numpy as np
import pytest
from scipy.integrate import quad

from omjump import counting
from omjump.counting import (
    GridCoverageError,
    InsufficientWindowsError,
    counting_statistics,
    efficiency_correction,
    fano_curve,
    fano_from_g2,
    fano_infinity,
    measured_from_all,
    shot_noise_zero_freq,
)
from omjump.lindblad import G2Curve
from omjump.operators import SystemParams
from omjump.trajectory import TrajectoryRecord


def record(jump_times, t_total, seed=0):
    return TrajectoryRecord(jump_times=np.asarray(jump_times, dtype=float),
                            times=np.array([]), n_photon=np.array([]),
                            n_phonon=np.array([]), x_mech=np.array([]),
                            seed=seed, t_total=t_total, engine="synthetic")


def poisson_records(rate, t_total, n_records, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n_records):
        n = rng.poisson(rate * t_total)
        recs.append(record(np.sort(rng.uniform(0.0, t_total, n)), t_total, seed=i))
    return recs


class TestWindows:
    def test_handcrafted_counts(self):
        # jumps at 0.5 and 1.5 in [0, 2): windows of 1 -> one count each, F = 0
        recs = [record([0.5, 1.5], 2.0)] * 8
        with pytest.warns(UserWarning, match="windows"):
            st = counting_statistics(recs, 1.0)
        assert st.window_count == 16
        assert st.mean == pytest.approx(1.0)
        assert st.fano == pytest.approx(0.0)
        assert np.allclose(st.probabilities, [0.0, 1.0])

    def test_histogram_normalized(self):
        recs = poisson_records(0.3, 500.0, 12, seed=3)
        st = counting_statistics(recs, 5.0)
        assert st.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
        assert st.mean >= 0 and st.fano >= 0

    def test_moment_accessor(self):
        recs = [record([0.1, 0.2, 0.3], 1.0)] * 12
        st = counting_statistics(recs, 1.0)
        assert st.moment(1) == pytest.approx(3.0)
        assert st.moment(2) == pytest.approx(9.0)

    def test_refuses_few_windows(self):
        with pytest.raises(InsufficientWindowsError):
            counting_statistics([record([0.5], 2.0)], 1.0)

    def test_no_detections_rejected(self):
        recs = [record([], 100.0)] * 4
        with pytest.raises(InsufficientWindowsError):
            counting_statistics(recs, 5.0)

    def test_poisson_fano_is_one(self):
        recs = poisson_records(0.4, 2000.0, 24, seed=11)
        for t_s in (2.0, 20.0, 100.0):
            st = counting_statistics(recs, t_s)
            assert st.fano == pytest.approx(1.0, abs=3.5 * st.fano_err)
            assert st.mean == pytest.approx(0.4 * t_s, rel=0.05)

    def test_overlapping_windows(self):
        recs = poisson_records(0.5, 400.0, 12, seed=7)
        st = counting_statistics(recs, 10.0, windowing="overlapping", stride=2.5)
        assert st.window_count > 12 * 39
        assert st.fano == pytest.approx(1.0, abs=4 * st.fano_err)

    def test_windows_never_straddle_records(self):
        # a jump exactly at the end of one record must not leak anywhere
        recs = [record([999.99], 1000.0), record([0.01], 1000.0)]
        st = counting_statistics(recs * 6, 100.0)
        assert st.mean == pytest.approx(2 * 6 / (2 * 6 * 10.0))


class TestFanoCurve:
    def test_flat_for_poisson(self):
        recs = poisson_records(0.3, 3000.0, 16, seed=21)
        grid = np.geomspace(1.0, 200.0, 6)
        curve = fano_curve(recs, grid)
        assert curve.ok.all()
        assert np.all(np.abs(curve.fano - 1.0) <= 4 * curve.err)

    def test_per_point_failure_flagged(self):
        recs = [record([5.0], 10.0)] * 4
        grid = np.array([1.0, 100.0])   # second point has zero windows
        curve = fano_curve(recs, grid)
        assert curve.ok[0]
        assert not curve.ok[1]
        assert "window" in curve.messages[1]

    def test_plateau_estimator(self):
        recs = poisson_records(0.5, 5000.0, 20, seed=31)
        est = fano_infinity(recs, np.geomspace(50.0, 500.0, 4))
        assert est.value == pytest.approx(1.0, abs=3.5 * est.err)
        assert est.converged


class TestFanoFromG2:
    def test_poissonian_identity(self):
        tau = np.linspace(0.0, 50.0, 400)
        g2 = G2Curve(tau, np.ones_like(tau), nbar=0.2)
        assert fano_from_g2(g2, rate=0.37, t_s=40.0) == pytest.approx(1.0, abs=1e-12)

    def test_constant_excess(self):
        # g2 = 1 + c on [0, T]: the triangular kernel integrates to c T
        tau = np.linspace(0.0, 50.0, 500)
        c = 0.35
        g2 = G2Curve(tau, 1.0 + c * np.ones_like(tau), nbar=0.2)
        rate = 0.12
        t_s = 30.0
        assert fano_from_g2(g2, rate, t_s) == pytest.approx(1.0 + rate * c * t_s,
                                                            rel=1e-12)

    def test_exponential_against_quadrature_oracle(self):
        # g2 - 1 = c exp(-gamma tau), F from scipy.integrate.quad
        c, gamma, rate, t_s = -0.8, 0.35, 0.21, 18.0
        tau = np.linspace(0.0, 25.0, 2200)
        g2 = G2Curve(tau, 1.0 + c * np.exp(-gamma * tau), nbar=0.1)
        oracle = 1.0 + rate * 2.0 * quad(
            lambda t: c * np.exp(-gamma * t) * (1 - t / t_s), 0.0, t_s)[0]
        # residual difference is the piecewise-linear interpolation bias ~ h^2/12
        assert fano_from_g2(g2, rate, t_s) == pytest.approx(oracle, abs=5e-6)

    def test_coverage_errors(self):
        tau = np.linspace(0.0, 10.0, 50)
        g2 = G2Curve(tau, np.ones_like(tau), nbar=0.1)
        with pytest.raises(GridCoverageError):
            fano_from_g2(g2, 0.1, 20.0)
        tau2 = np.linspace(1.0, 30.0, 50)
        g2b = G2Curve(tau2, np.ones_like(tau2), nbar=0.1)
        with pytest.raises(GridCoverageError):
            fano_from_g2(g2b, 0.1, 20.0)

    def test_quadrature_tolerance_gate(self):
        # wildly oscillatory g2 on a coarse grid must trip the error estimate
        tau = np.linspace(0.0, 20.0, 12)
        g2 = G2Curve(tau, 1.0 + np.sin(5.0 * tau), nbar=0.1)
        with pytest.raises(GridCoverageError, match="refine"):
            fano_from_g2(g2, rate=1.0, t_s=18.0, tol=1e-6)

    def test_error_estimate_returned(self):
        tau = np.linspace(0.0, 20.0, 800)
        g2 = G2Curve(tau, 1.0 + 0.2 * np.exp(-tau), nbar=0.1)
        value, err = fano_from_g2(g2, 0.3, 15.0, return_error=True)
        assert err < 1e-4
        assert value > 1.0

    def test_small_window_slope_sign_matches_g2_zero(self):
        # Eq.-(7) expansion: sign of dF/dT_S at small T_S = sign of g2(0) - 1
        tau = np.linspace(0.0, 30.0, 1500)
        rate = 0.2
        for c in (-0.5, 0.7):
            g2 = G2Curve(tau, 1.0 + c * np.exp(-2.0 * tau), nbar=0.1)
            f1 = fano_from_g2(g2, rate, 0.2)
            f2 = fano_from_g2(g2, rate, 0.6)
            assert np.sign(f2 - f1) == np.sign(c)
            assert np.sign(f1 - 1.0) == np.sign(c)


class TestEfficiencyCorrection:
    def p(self, eta=0.5, kin=0.3, kout=0.2):
        return SystemParams(detuning=0.0, g0=0.1, alpha_L=0.1, kappa_in=kin,
                            kappa_out=kout, gamma_m=1e-3, eta=eta)

    def test_round_trip_identity(self):
        p = self.p(eta=0.37)
        for f in (0.2, 1.0, 3.7):
            assert efficiency_correction(measured_from_all(f, p), p) == \
                pytest.approx(f, abs=1e-12)

    def test_full_monitoring_is_identity(self):
        p = self.p(eta=1.0, kin=0.0, kout=0.5)
        assert efficiency_correction(2.3, p) == pytest.approx(2.3, abs=1e-12)

    def test_symmetric_cavity_naive_expectation(self):
        # F_all = n maps to (n + 1)/2 for kappa_I = kappa_O at unit efficiency
        p = self.p(eta=1.0, kin=0.25, kout=0.25)
        for n in (2, 3, 5):
            assert measured_from_all(float(n), p) == pytest.approx((n + 1) / 2,
                                                                   abs=1e-12)

    def test_zero_monitoring_rejected(self):
        p = self.p(eta=0.0)
        with pytest.raises(ValueError):
            efficiency_correction(1.5, p)

    def test_shot_noise(self):
        assert shot_noise_zero_freq(1.0, 0.3) == pytest.approx(0.3)
        assert shot_noise_zero_freq(2.5, 0.1) == pytest.approx(0.25)
