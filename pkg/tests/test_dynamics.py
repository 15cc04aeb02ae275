import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from avtlab import dynamics as dyn
from avtlab.dynamics import ChaserState, ControlCommand, PerturbationConfig, TargetState

# 50 / 113.9 * 0.1, evaluated with 30-digit decimal arithmetic
DV_FULL_THRUST = 0.0438981562774363476733977172959

finite = st.floats(-100, 100, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)


def target(pos=(0, 0, 0), vel=(0, 0, 0), att=(0, 0, 0), rate=(0, 0, 0)):
    return TargetState(np.array(pos, float), np.array(vel, float), np.array(att, float), np.array(rate, float))


class TestForceMode:
    def test_full_thrust_step(self):
        s = dyn.step_chaser_force(ChaserState(), (50, 0, 0), 0.1)
        assert s.velocity[0] == pytest.approx(DV_FULL_THRUST, rel=1e-14)
        assert s.position[0] == pytest.approx(DV_FULL_THRUST * 0.1, rel=1e-14)
        assert s.position[1] == s.position[2] == 0

    def test_free_drift(self):
        s = dyn.step_chaser_force(ChaserState(velocity=np.array([1.0, 0, 0])), (0, 0, 0), 0.1)
        assert np.allclose(s.position, (0.1, 0, 0), atol=1e-15)
        assert np.array_equal(s.velocity, (1, 0, 0))

    def test_thrust_clamped(self):
        a = dyn.step_chaser_force(ChaserState(), (100, 0, 0), 0.1)
        b = dyn.step_chaser_force(ChaserState(), (50, 0, 0), 0.1)
        assert np.array_equal(a.velocity, b.velocity)

    def test_noise_scales_then_clamps(self):
        s = dyn.step_chaser_force(ChaserState(), (10, 0, 0), 1.0, noise=1.5)
        assert s.velocity[0] == pytest.approx(15 / dyn.CHASER_MASS)

    def test_momentum_consistency(self):
        u = np.array([12.0, -7.0, 30.0])
        s = ChaserState()
        for _ in range(25):
            s = dyn.step_chaser_force(s, u, 0.1)
        assert np.allclose(s.velocity, 25 * u / dyn.CHASER_MASS * 0.1, rtol=0, atol=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            dyn.step_chaser_force(ChaserState(), (np.nan, 0, 0), 0.1)
        with pytest.raises(ValueError):
            dyn.step_chaser_force(ChaserState(), (1, 0, 0), 0.0)

    def test_mass_must_be_positive(self):
        with pytest.raises(ValueError):
            ChaserState(mass=0.0)


class TestVelocityMode:
    def test_full_speed(self):
        assert np.allclose(dyn.step_chaser_velocity(ChaserState(), (5, 0, 0), 0.1).position, (0.5, 0, 0))

    def test_clamped(self):
        s = dyn.step_chaser_velocity(ChaserState(), (10, 0, 0), 0.1)
        assert np.array_equal(s.velocity, (5, 0, 0))

    def test_zero_command(self):
        s0 = ChaserState(position=np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(dyn.step_chaser_velocity(s0, (0, 0, 0), 0.1).position, s0.position)


class TestPositionMode:
    def test_diagonal(self):
        assert np.allclose(dyn.step_chaser_position(ChaserState(), (1, -1, 0)).position, (0.5, -0.5, 0))

    def test_noop(self):
        assert np.array_equal(dyn.step_chaser_position(ChaserState(), (0, 0, 0)).position, (0, 0, 0))

    def test_noise_factor(self):
        assert np.allclose(dyn.step_chaser_position(ChaserState(), (0, 0, 1), noise=1.2).position, (0, 0, 0.6))

    def test_invalid_step(self):
        with pytest.raises(ValueError):
            dyn.step_chaser_position(ChaserState(), (2, 0, 0))
        with pytest.raises(ValueError):
            ControlCommand("position_step", (0.5, 0, 0))


class TestClamp:
    @given(vec3, st.floats(0.1, 60))
    def test_idempotent_componentwise(self, u, limit):
        once = dyn.clamp_inf(u, limit)
        assert np.array_equal(dyn.clamp_inf(once, limit), once)
        for i in range(3):
            assert once[i] == min(max(u[i], -limit), limit)


class TestTarget:
    def test_linear_drift(self):
        assert np.allclose(dyn.step_target(target(vel=(0.3, 0, 0)), 0.1).position, (0.03, 0, 0))

    def test_angle_wraps_to_start(self):
        t = target(att=(0, 0, 0.5), rate=(0, 0, 2 * math.pi / 10))
        s = t
        for _ in range(10):
            s = dyn.step_target(s, 1.0)
        assert s.attitude[2] == pytest.approx(0.5, abs=1e-12)
        assert np.all(s.attitude > -math.pi) and np.all(s.attitude <= math.pi)

    def test_time_splitting_dyadic_exact(self):
        t = target(pos=(1, 2, 3), vel=(0.25, -0.5, 0.125), rate=(0.25, 0, 0))
        a = dyn.step_target(dyn.step_target(t, 0.25), 0.25)
        b = dyn.step_target(t, 0.5)
        assert np.array_equal(a.position, b.position) and np.array_equal(a.attitude, b.attitude)

    @given(vec3, vec3, st.floats(0.001, 1.0))
    def test_time_splitting(self, pos, vel, dt):
        t = target(pos=pos, vel=vel)
        a = dyn.step_target(dyn.step_target(t, dt / 2), dt / 2)
        b = dyn.step_target(t, dt)
        assert np.allclose(a.position, b.position, rtol=1e-12, atol=1e-12)

    def test_wrap_range(self):
        w = dyn.wrap_angle([-math.pi, math.pi, 3 * math.pi, 0.0])
        assert np.allclose(w, [math.pi, math.pi, math.pi, 0.0])


class TestSampling:
    def test_noise_disabled(self, rng):
        assert dyn.sample_actuator_noise(rng, enabled=False) == 1.0

    def test_noise_distribution(self):
        r = np.random.default_rng(7)
        x = np.array([dyn.sample_actuator_noise(r) for _ in range(100_000)])
        assert 0.997 <= x.mean() <= 1.003
        assert 0.297 <= x.std() <= 0.303

    def test_noise_reproducible(self):
        a = [dyn.sample_actuator_noise(np.random.default_rng(3)) for _ in range(3)]
        b = [dyn.sample_actuator_noise(np.random.default_rng(3)) for _ in range(3)]
        assert a == b

    def test_delay(self):
        r = np.random.default_rng(11)
        assert dyn.sample_time_delay(r, enabled=False) == 0.1
        x = np.array([dyn.sample_time_delay(r) for _ in range(100_000)])
        assert x.min() >= 0.1 and x.max() <= 0.2
        assert abs(x.mean() - 0.15) <= 0.001

    def test_blur_level_range(self):
        with pytest.raises(ValueError):
            PerturbationConfig(blur_level=5)
        assert PerturbationConfig(True, True, 3).label == "noise+delay+blur3"


class TestRelative:
    def test_identity_mount(self):
        r_body, r_cam = dyn.relative_position(ChaserState(), target(pos=(0, 0, 5)), dyn.mount_matrix())
        assert np.array_equal(r_body, (0, 0, 5)) and np.array_equal(r_cam, (0, 0, 5))

    @given(vec3, vec3, vec3)
    def test_translation_invariance(self, c, p, t):
        t = np.array(t)
        a, _ = dyn.relative_position(ChaserState(position=np.array(c)), target(pos=p))
        b, _ = dyn.relative_position(ChaserState(position=np.array(c) + t), target(pos=np.array(p) + t))
        assert np.allclose(a, b, atol=1e-9)

    def test_mount_offset(self):
        r_body, r_cam = dyn.relative_position(ChaserState(), target(pos=(1, 2, 5)), dyn.mount_matrix((0, 0, 0.2)))
        assert np.allclose(r_body, r_cam + (0, 0, 0.2), atol=1e-15)

    def test_tracking_error(self):
        assert dyn.tracking_error((0, 0, 5)) == 0
        assert dyn.tracking_error((3, 0, 9)) == pytest.approx(5.0, abs=1e-15)

    @given(st.tuples(*[st.floats(-10, 10)] * 3), st.tuples(*[st.sampled_from([-1, 1])] * 3))
    def test_error_sign_symmetry(self, d, signs):
        d = np.array(d)
        base = dyn.tracking_error(np.array(dyn.R_STAR) + d)
        assert dyn.tracking_error(np.array(dyn.R_STAR) + d * signs) == pytest.approx(base, rel=1e-15, abs=0)


def test_steppers_deterministic():
    s = ChaserState()
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    a = dyn.step_chaser_force(s, (3, 4, 5), 0.1, dyn.sample_actuator_noise(r1))
    b = dyn.step_chaser_force(s, (3, 4, 5), 0.1, dyn.sample_actuator_noise(r2))
    assert np.array_equal(a.position, b.position)
