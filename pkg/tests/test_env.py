import numpy as np
import pytest
from hypothesis import given, strategies as st

from avtlab import dynamics as dyn
from avtlab.env import (
    EnvConfig,
    StepResult,
    TrackingEnv,
    downsample,
    preprocess_frame,
    read_step_log,
    reward,
    stack_frames,
    step_record,
    write_step_log,
)
from avtlab.scene import Frame, build_catalog, sphere_model

SMALL = dict(image_size=32, obs_size=16)


def small_env(seed=0, **kw):
    cfg = EnvConfig(**{**SMALL, **kw})
    return TrackingEnv(cfg, sphere_model(0.5), seed=seed)


def static_target(pos):
    z = np.zeros(3)
    return dyn.TargetState(np.array(pos, float), z, z, z)


def reward_oracle(visible, e, variant="original"):
    return {"original": (1 if visible else -5) - e, "dist_only": -e, "soft_visible": (1 if visible else -1) - e}[variant]


class TestConfig:
    def test_defaults(self):
        c = EnvConfig()
        assert c.dt == 0.1 and c.r_star == (0, 0, 5) and c.max_steps == 1000
        assert c.delayed_ending == 15 and c.z_max == 20 and c.obs_shape == (64, 64, 12)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(delayed_ending=9),
            dict(delayed_ending=21),
            dict(obs_size=48),
            dict(frame_stack=0),
            dict(control_mode="warp"),
            dict(reward_variant="x"),
            dict(channels="ir"),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EnvConfig(**kw)


class TestReward:
    def test_examples(self):
        assert reward(True, 0.0)[0] == 1
        assert reward(True, 2.0)[0] == -1
        assert reward(False, 3.0)[0] == -8

    def test_random_pairs_match_oracle(self):
        r = np.random.default_rng(99)
        for variant in ("original", "dist_only", "soft_visible"):
            for _ in range(1000):
                vis, e = bool(r.integers(2)), float(r.uniform(0, 30))
                val, br = reward(vis, e, variant)
                assert val == reward_oracle(vis, e, variant)
                assert br.r_dist == e

    def test_breakdown_identity(self):
        for vis in (True, False):
            val, br = reward(vis, 1.25)
            assert val == br.r_vis - br.r_dist
            assert br.r_vis in (1.0, -5.0)

    def test_literal_ablation_sign(self):
        assert reward(True, 2.0, "dist_only", literal_sign=True)[0] == 2.0
        assert reward(False, 2.0, "soft_visible", literal_sign=True)[0] == 1.0
        assert reward(False, 2.0, "original", literal_sign=True)[0] == -7.0


class TestReset:
    def test_initial_distribution(self):
        env = small_env(seed=3)
        states = [env.sample_initial_target() for _ in range(10_000)]
        pos = np.array([s.position for s in states])
        assert pos[:, 2].min() >= 2 and pos[:, 2].max() <= 12
        assert 0.97 <= pos[:, 0].std() <= 1.03
        vel = np.array([s.velocity for s in states])
        assert 0.29 <= vel.std() <= 0.31
        rates = np.array([s.angular_rate for s in states])
        assert np.abs(rates).max() <= 0.2
        att = np.array([s.attitude for s in states])
        assert att.min() > -np.pi and att.max() <= np.pi

    def test_same_seed_same_state(self):
        a, b = small_env(seed=5), small_env(seed=5)
        oa, ob = a.reset(), b.reset()
        assert np.array_equal(a.target.position, b.target.position)
        assert np.array_equal(oa, ob)

    def test_chaser_starts_at_rest(self):
        env = small_env()
        env.reset()
        assert np.array_equal(env.chaser.position, (0, 0, 0)) and np.array_equal(env.chaser.velocity, (0, 0, 0))

    def test_planar_drift(self):
        env = small_env(planar_drift=True)
        assert all(env.sample_initial_target().velocity[2] == 0 for _ in range(50))


class TestEpisode:
    def test_lost_target_ends_after_delayed_ending(self):
        for de in (10, 15, 20):
            env = small_env(delayed_ending=de)
            env.reset(target=static_target((0, 0, -50)))
            n = 0
            while not env.done:
                env.step(0)
                n += 1
            assert n == de
            assert env.length == de + 1

    def test_stationary_target_at_setpoint(self):
        env = small_env(max_steps=40)
        env.reset(target=static_target((0, 0, 5)))
        rewards = []
        while not env.done:
            res = env.step(0)
            rewards.append(res.reward)
        assert len(rewards) == 40 and all(r == 1.0 for r in rewards)
        assert env.length == 41
        assert res.info["truncated"] and not res.info["terminated"]

    def test_length_bounded(self):
        env = small_env(max_steps=25)
        r = np.random.default_rng(0)
        for _ in range(5):
            env.reset()
            while not env.done:
                env.step(int(r.integers(11)))
            assert env.length <= 26

    def test_step_after_done(self):
        env = small_env(delayed_ending=10)
        env.reset(target=static_target((0, 0, -50)))
        while not env.done:
            env.step(0)
        with pytest.raises(RuntimeError):
            env.step(0)

    def test_lost_counter_property(self):
        r = np.random.default_rng(1)
        for seed in range(4):
            env = small_env(seed=seed, max_steps=80, delayed_ending=10, target_speed_std=1.5)
            env.reset()
            flags = []
            while not env.done:
                res = env.step(int(r.integers(11)))
                flags.append(res.info["visible"])
                by_loss = res.info["terminated"]
                last = flags[-10:]
                assert by_loss == (len(last) == 10 and not any(last))

    def test_reward_identity_and_obs_range(self):
        env = small_env(max_steps=30)
        r = np.random.default_rng(2)
        env.reset()
        while not env.done:
            res = env.step(int(r.integers(11)))
            assert res.reward == res.breakdown.r_vis - res.breakdown.r_dist
            assert res.observation.min() >= 0 and res.observation.max() <= 1

    def test_bit_identical_runs(self):
        def run():
            env = small_env(seed=8, max_steps=30, perturbations=dict(actuator_noise=True, time_delay=True, blur_level=2))
            env.reset()
            r = np.random.default_rng(4)
            recs = []
            while not env.done:
                a = int(r.integers(11))
                recs.append(step_record(env.step(a), a))
            return recs, env.observation

        (a, oa), (b, ob) = run(), run()
        assert a == b and np.array_equal(oa, ob)

    def test_force_and_velocity_modes(self):
        for mode, vec in (("force", (10.0, 0, 0)), ("velocity", (1.0, 0, 0))):
            env = small_env(control_mode=mode)
            env.reset(target=static_target((0, 0, 5)))
            res = env.step(dyn.ControlCommand(mode, vec))
            assert res.info["chaser_position"][0] > 0
            with pytest.raises(ValueError):
                env.step(dyn.ControlCommand("position_step", (1, 0, 0)))

    def test_perturbation_streams_independent(self):
        a = small_env(seed=6)
        b = small_env(seed=6, perturbations=dict(actuator_noise=True, time_delay=True))
        a.reset()
        b.reset()
        assert np.array_equal(a.target.position, b.target.position)

    def test_ground_truth_bbox(self):
        env = small_env()
        env.reset(target=static_target((0, 0, 5)))
        bb = env.ground_truth_bbox()
        cx, cy = bb.center
        assert cx == pytest.approx(16, abs=1e-9) and cy == pytest.approx(16, abs=1e-9)
        env.reset(target=static_target((0, 0, -5)))
        assert env.ground_truth_bbox() is None


class TestPreprocess:
    def test_depth_normalization(self):
        cfg = EnvConfig(image_size=4, obs_size=4, frame_stack=1)
        depth = np.full((4, 4), 20.0)
        depth[0, 0] = 5.0
        obs = preprocess_frame(Frame(np.zeros((4, 4, 3)), depth), cfg)
        assert obs[1, 1, 3] == 1.0
        assert obs[0, 0, 3] == 0.25

    def test_area_downsample(self):
        img = np.arange(16, dtype=float).reshape(4, 4)
        assert np.allclose(downsample(img, 2), [[2.5, 4.5], [10.5, 12.5]])

    def test_initial_stack_repeats(self):
        env = small_env(frame_stack=3)
        obs = env.reset()
        assert obs.shape == (16, 16, 12)
        assert np.array_equal(obs[..., 0:4], obs[..., 4:8]) and np.array_equal(obs[..., 4:8], obs[..., 8:12])

    def test_newest_last(self):
        frames = [np.full((2, 2, 1), float(i)) for i in range(5)]
        s = stack_frames(frames, 3)
        assert list(s[0, 0]) == [2.0, 3.0, 4.0]

    def test_color_channels(self):
        env = small_env(channels="color", frame_stack=2)
        assert env.reset().shape == (16, 16, 6)

    @given(st.integers(0, 2**31 - 1))
    def test_values_in_unit_interval(self, seed):
        r = np.random.default_rng(seed)
        cfg = EnvConfig(image_size=8, obs_size=4, frame_stack=1)
        fr = Frame(r.random((8, 8, 3)), r.uniform(0.1, 40, (8, 8)))
        obs = preprocess_frame(fr, cfg)
        assert obs.min() >= 0 and obs.max() <= 1


def test_step_log_round_trip(tmp_path):
    env = small_env(max_steps=5)
    env.reset()
    recs = [step_record(env.step(1), 1) for _ in range(5)]
    write_step_log(tmp_path / "log.csv", recs)
    back = read_step_log(tmp_path / "log.csv")
    assert len(back) == 5
    assert [float(r["reward"]) for r in back] == [r["reward"] for r in recs]
    assert [float(r["r_body_z"]) for r in back] == [r["r_body_z"] for r in recs]


def test_catalog_model_renders_in_env():
    env = TrackingEnv(EnvConfig(**SMALL), build_catalog()[0], seed=0)
    env.reset(target=static_target((0, 0, 6)))
    assert (env.frame.depth < 20).any()
