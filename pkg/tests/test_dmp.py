"""Movement primitive: clocks, basis, learning, certificate, rollout, files."""

import math

import numpy as np
import pytest

from switched_servo.dmp import (
    BasisSet,
    Demonstration,
    DmpGains,
    DmpModel,
    StateX,
    build_basis,
    canonical,
    dmp_accel,
    dmp_gain_certificate,
    forcing,
    learn_weights,
    load_demo_csv,
    load_model,
    minjerk_demo,
    rollout,
    save_demo_csv,
    save_model,
)
from switched_servo.errors import IllPosedLearningError
from switched_servo.geometry import Twist, pose_error


class TestCanonical:
    def test_starts_at_one(self):
        assert canonical(3.0, 3.0, 1.0, 2.5) == 1.0

    def test_one_time_constant(self):
        assert canonical(2.5, 0.0, 1.0, 2.5) == pytest.approx(math.exp(-1.0))

    def test_faster_clock_decays_faster(self):
        assert canonical(1.0, 0.0, 2.0, 2.5) < canonical(1.0, 0.0, 1.0, 2.5)


class TestBasis:
    def test_centers_follow_clock_schedule(self):
        basis = build_basis(25, 1.0)
        expected = np.exp(-1.0 * np.arange(25) / 24.0)
        assert np.allclose(basis.centers, expected)

    def test_last_width_repeated(self):
        basis = build_basis(25, 1.0)
        assert basis.widths[-1] == basis.widths[-2]

    def test_weights_normalized(self):
        basis = build_basis(25, 1.0)
        for z in (1.0, 0.5, 0.1, 1e-3):
            psi = basis.psi(z)
            assert psi.shape == (25,)
            assert np.all(psi >= 0)
            assert np.sum(psi) == pytest.approx(1.0, abs=1e-12)

    def test_no_underflow_at_tiny_phase(self):
        # raw Gaussians underflow at z -> 0; the normalization must survive it
        basis = build_basis(25, 1.0)
        psi = basis.psi(1e-30)
        assert np.all(np.isfinite(psi))
        assert np.sum(psi) == pytest.approx(1.0, abs=1e-12)

    def test_single_basis_rejected(self):
        with pytest.raises(ValueError):
            build_basis(1, 1.0)


class TestGains:
    def test_block_matrices(self, dmp_gains):
        gamma = dmp_gains.gamma()
        lam = dmp_gains.lam()
        assert np.allclose(gamma[:3, :3], 140.0 * 35.0 * np.eye(3))
        assert np.allclose(gamma[3:, 3:], 4.0 * 1.0 * np.eye(3))
        assert np.allclose(lam[:3, :3], 140.0 * np.eye(3))
        assert np.allclose(lam[3:, 3:], 4.0 * np.eye(3))

    def test_positive_gains_required(self):
        with pytest.raises(ValueError):
            DmpGains(0.0, 35.0, 4.0, 1.0, 1.0, 1.0, 2.5)


class TestMinJerk:
    def test_endpoint_boundary_conditions(self, start_pose, goal_pose):
        demo = minjerk_demo(start_pose, goal_pose, 2.5, 100.0)
        axis = pose_error(start_pose, goal_pose)
        assert np.allclose(demo.e_p[0], axis, atol=1e-12)
        assert np.allclose(demo.e_p[-1], 0.0, atol=1e-9)
        assert np.allclose(demo.xi[0], 0.0, atol=1e-12)
        assert np.allclose(demo.xi[-1], 0.0, atol=1e-9)
        assert np.allclose(demo.xi_dot[0], 0.0, atol=1e-12)
        assert np.allclose(demo.xi_dot[-1], 0.0, atol=1e-9)

    def test_midpoint_profile(self, start_pose, goal_pose):
        T = 2.0
        demo = minjerk_demo(start_pose, goal_pose, T, 100.0)
        axis = pose_error(start_pose, goal_pose)
        mid = demo.count // 2
        assert demo.t[mid] == pytest.approx(T / 2)
        # s(1/2) = 1/2 and s_dot(1/2) = 15/(8T) for the quintic profile
        assert np.allclose(demo.e_p[mid], 0.5 * axis, atol=1e-9)
        assert np.allclose(demo.xi[mid], -(15.0 / (8.0 * T)) * axis, atol=1e-9)

    def test_twist_consistent_with_position_derivative(self, start_pose, goal_pose):
        demo = minjerk_demo(start_pose, goal_pose, 2.5, 200.0)
        fd = np.gradient(demo.e_p, demo.t, axis=0)
        # e_p = (1 - s) axis and xi = -s_dot axis, so d(e_p)/dt equals xi
        assert np.allclose(fd[5:-5], demo.xi[5:-5], atol=5e-4)

    def test_strictly_increasing_time_required(self):
        with pytest.raises(ValueError):
            Demonstration(np.zeros(5), np.zeros((5, 6)), np.zeros((5, 6)), np.zeros((5, 6)))


class TestLearning:
    def test_reproduction_accuracy(self, trained_model, start_pose, goal_pose):
        demo = minjerk_demo(start_pose, goal_pose, 2.5, 100.0)
        x0 = StateX(demo.e_p[0], Twist.from_vector(demo.xi[0], "desired"))
        times, states, _ = rollout(trained_model, x0, 2.5, 0.01)
        sim_p = np.array([s.e_p[:3] for s in states])
        demo_p = demo.e_p[: len(times), :3]
        rmse = math.sqrt(float(np.mean(np.sum((sim_p - demo_p) ** 2, axis=1))))
        assert rmse < 0.02 * demo.path_length()
        assert np.linalg.norm(states[-1].as_vector()[:6]) < 1e-3

    def test_deterministic_weights(self, start_pose, goal_pose, dmp_gains):
        demo = minjerk_demo(start_pose, goal_pose, 2.5, 100.0)
        basis = build_basis(25, 1.0)
        m1 = learn_weights(demo, dmp_gains, basis, basis)
        m2 = learn_weights(demo, dmp_gains, basis, basis)
        assert np.array_equal(m1.theta_p, m2.theta_p)
        assert np.array_equal(m1.theta_o, m2.theta_o)

    def test_underdetermined_fit_rejected(self, start_pose, goal_pose, dmp_gains):
        demo = minjerk_demo(start_pose, goal_pose, 2.5, 4.0)  # 11 samples, 25 basis
        basis = build_basis(25, 1.0)
        with pytest.raises(IllPosedLearningError):
            learn_weights(demo, dmp_gains, basis, basis)

    def test_ridge_regularization_allows_it(self, start_pose, goal_pose, dmp_gains):
        demo = minjerk_demo(start_pose, goal_pose, 2.5, 4.0)
        basis = build_basis(25, 1.0)
        model = learn_weights(demo, dmp_gains, basis, basis, regularization=1e-6)
        assert np.all(np.isfinite(model.theta_p))

    def test_zero_length_demo_rejected(self, start_pose, goal_pose):
        with pytest.raises(ValueError):
            minjerk_demo(start_pose, goal_pose, 0.0, 100.0)


class TestAccel:
    def test_equilibrium_with_spent_clock(self, trained_model):
        x = StateX(np.zeros(6), Twist.zero("desired"))
        assert np.allclose(dmp_accel(x, 0.0, 0.0, trained_model), 0.0)

    def test_matches_transformation_system(self, trained_model, dmp_gains):
        rng = np.random.default_rng(5)
        e_p = rng.normal(0, 0.3, 6)
        xi = rng.normal(0, 0.2, 6)
        x = StateX(e_p, Twist.from_vector(xi, "desired"))
        z_p, z_o = 0.7, 0.6
        accel = dmp_accel(x, z_p, z_o, trained_model)
        f = forcing(trained_model, z_p, z_o)
        expected = (-dmp_gains.gamma() @ e_p - dmp_gains.tau * (dmp_gains.lam() @ xi) + f) / dmp_gains.tau**2
        assert np.allclose(accel, expected, atol=1e-12)

    def test_forcing_scales_with_clock(self, trained_model):
        f1 = forcing(trained_model, 1.0, 1.0)
        f2 = forcing(trained_model, 0.5, 0.25)
        # position block scales with z_p, orientation with z_o
        psi_same = np.allclose(
            trained_model.basis_p.psi(1.0), trained_model.basis_p.psi(0.5)
        )
        assert not psi_same  # weights move, but the z factor still dominates scale
        assert np.linalg.norm(f2) < np.linalg.norm(f1)


class TestCertificate:
    def test_paper_scale_value(self):
        cert = dmp_gain_certificate(DmpGains(140.0, 35.0, 4.0, 1.0, 1.0, 1.0, 25.0), 1.0)
        assert cert.passed and cert.critically_damped
        assert cert.lambda_d == pytest.approx(0.0016, abs=1e-6)
        assert cert.margins == (3498.5, 98.5)

    def test_desk_scale_value(self, dmp_gains):
        cert = dmp_gain_certificate(dmp_gains, 1.0)
        assert cert.passed
        assert cert.lambda_d == pytest.approx(0.16, abs=1e-9)

    def test_detuned_ratio_fails(self):
        cert = dmp_gain_certificate(DmpGains(141.0, 35.0, 4.0, 1.0, 1.0, 1.0, 25.0), 1.0)
        assert not cert.critically_damped
        assert not cert.passed

    def test_large_epsilon_breaks_margin(self, dmp_gains):
        # 4 tau beta_omega - 1.5 eps2 = 10 - 1.5 eps2 < 0 for eps2 = 8
        cert = dmp_gain_certificate(dmp_gains, 8.0)
        assert not cert.passed
        assert min(cert.margins) < 0


class TestRollout:
    def _unforced(self, dmp_gains):
        basis = build_basis(5, 1.0)
        return DmpModel(dmp_gains, basis, basis, np.zeros((5, 3)), np.zeros((5, 3)))

    def test_unforced_matches_critically_damped_closed_form(self, dmp_gains):
        """Acceleration is held across each control period, so the rollout is
        first order in dt against the continuous critically damped solution;
        check both the absolute gap and the order."""
        model = self._unforced(dmp_gains)
        p0 = np.array([0.1, -0.2, 0.3])
        x0 = StateX(np.concatenate([p0, np.zeros(3)]), Twist.zero("desired"))
        lam = dmp_gains.alpha_v / (2.0 * dmp_gains.tau)

        def max_gap(dt):
            times, states, _ = rollout(model, x0, 1.0, dt)
            expected = np.array([(1.0 + lam * t) * np.exp(-lam * t) for t in times])[:, None] * p0
            got = np.array([s.e_p[:3] for s in states])
            return np.abs(got - expected).max()

        gap = max_gap(0.001)
        assert gap < 2e-3
        ratio = max_gap(0.002) / gap
        assert 1.6 < ratio < 2.4

    def test_rotation_error_integrates_on_the_quaternion(self, dmp_gains):
        model = self._unforced(dmp_gains)
        r0 = np.array([0.0, 0.0, 0.5])
        x0 = StateX(np.concatenate([np.zeros(3), r0]), Twist.zero("desired"))
        lam = dmp_gains.alpha_omega / (2.0 * dmp_gains.tau)
        times, states, _ = rollout(model, x0, 2.0, 0.002)
        got = np.array([s.e_p[3:] for s in states])
        expected = np.array([(1.0 + lam * t) * np.exp(-lam * t) for t in times])[:, None] * r0
        # single-axis rotation: the log stays on the axis and obeys the scalar law
        assert np.allclose(got, expected, atol=2e-4)

    def test_records_one_state_per_tick(self, trained_model):
        x0 = StateX(np.zeros(6), Twist.zero("desired"))
        times, states, accels = rollout(trained_model, x0, 1.0, 0.01)
        assert len(times) == len(states) == 101
        assert len(accels) == 101  # final accel repeated so arrays align


class TestSerialization:
    def test_model_round_trip(self, trained_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained_model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.theta_p, trained_model.theta_p)
        assert np.array_equal(loaded.theta_o, trained_model.theta_o)
        assert np.array_equal(loaded.basis_p.centers, trained_model.basis_p.centers)
        assert loaded.gains == trained_model.gains

    def test_model_bytes_deterministic(self, trained_model, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_model(trained_model, a)
        save_model(trained_model, b)
        assert a.read_bytes() == b.read_bytes()

    def test_version_check(self, trained_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained_model, path)
        payload = path.read_text().replace('"version": 1', '"version": 99')
        path.write_text(payload)
        with pytest.raises(ValueError):
            load_model(path)

    def test_demo_round_trip(self, start_pose, goal_pose, tmp_path):
        demo = minjerk_demo(start_pose, goal_pose, 1.0, 50.0)
        path = tmp_path / "demo.csv"
        save_demo_csv(demo, path)
        loaded = load_demo_csv(path)
        assert np.array_equal(loaded.t, demo.t)
        assert np.array_equal(loaded.e_p, demo.e_p)
        assert np.array_equal(loaded.xi_dot, demo.xi_dot)

    def test_theta_bound_is_spectral(self, trained_model):
        expected = max(
            np.linalg.norm(trained_model.theta_p, 2), np.linalg.norm(trained_model.theta_o, 2)
        )
        assert trained_model.theta_bound() == pytest.approx(expected, rel=1e-12)


class TestScalingProperties:
    def test_doubling_tau_halves_the_clock(self, trained_model):
        """Same weights at 2*tau replay the same path at half speed: state k
        of the slow rollout (period 2*dt) matches state k of the fast one
        (period dt) with the twist halved."""
        import dataclasses

        slow = DmpModel(
            dataclasses.replace(trained_model.gains, tau=2.0 * trained_model.gains.tau),
            trained_model.basis_p,
            trained_model.basis_o,
            trained_model.theta_p,
            trained_model.theta_o,
        )
        e0 = np.array([0.4, -0.3, 0.6, 0.1, -0.2, 0.05])
        xi0 = np.array([0.2, -0.1, 0.3, 0.05, 0.1, -0.05])
        x_fast = StateX(e0, Twist.from_vector(xi0, "desired"))
        x_slow = StateX(e0, Twist.from_vector(0.5 * xi0, "desired"))
        t_f, s_f, _ = rollout(trained_model, x_fast, 2.0, 0.002)
        t_s, s_s, _ = rollout(slow, x_slow, 4.0, 0.004)
        assert len(s_f) == len(s_s)
        assert np.allclose(t_s, 2.0 * t_f, atol=1e-12)
        gap_e = max(np.abs(a.e_p - b.e_p).max() for a, b in zip(s_f, s_s))
        gap_xi = max(
            np.abs(0.5 * a.xi.as_vector() - b.xi.as_vector()).max() for a, b in zip(s_f, s_s)
        )
        assert gap_e < 1e-6
        assert gap_xi < 1e-6

    def test_forcing_vanishes_with_the_clock(self, dmp_gains):
        """Normalized activations keep ||f|| under theta_bound * z even for
        adversarial weights, so the forcing dies with the phase."""
        rng = np.random.default_rng(7)
        basis = build_basis(12, 1.0)
        model = DmpModel(
            dmp_gains, basis, basis, rng.normal(0.0, 50.0, (12, 3)), rng.normal(0.0, 50.0, (12, 3))
        )
        z = 1e-6
        f = forcing(model, z, z)
        assert np.linalg.norm(f) <= model.theta_bound() * z * (1.0 + 1e-9)
        assert np.linalg.norm(forcing(model, 0.0, 0.0)) == 0.0
