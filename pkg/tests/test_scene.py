import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from avtlab.camera import intrinsics_from_fov, default_camera
from avtlab.scene import (
    CATEGORIES,
    MAX_BOUNDING_RADIUS,
    Frame,
    Primitive,
    TargetModel,
    blur_frames,
    blur_length,
    build_catalog,
    euler_to_matrix,
    generate_model,
    read_depth,
    read_ppm,
    render,
    sphere_model,
    write_depth,
    write_ppm,
)

Z_MAX = 20.0


def box_model(half=(0.5, 0.5, 0.5)):
    return TargetModel("box", "Satellite", (Primitive("box", (0.0, 0.0, 0.0), half, (0.8, 0.8, 0.8)),))


def sphere_ray_depth(intr, u, v, center, radius):
    """Closed-form depth of the first ray-sphere hit through pixel (u, v)."""
    d = np.array([(u + 0.5 - intr.cx) / intr.fx, (v + 0.5 - intr.cy) / intr.fy, 1.0])
    c = np.asarray(center, dtype=float)
    a, b, cc = d @ d, -2.0 * d @ c, c @ c - radius * radius
    disc = b * b - 4 * a * cc
    if disc < 0:
        return None
    return (-b - math.sqrt(disc)) / (2 * a)


def enclosing_oracle(p: Primitive) -> float:
    r_pos = math.sqrt(sum(x * x for x in p.position))
    if p.kind == "sphere":
        return r_pos + p.dims[0]
    if p.kind == "box":
        return r_pos + math.sqrt(sum(h * h for h in p.dims))
    r, hl = p.dims
    return r_pos + (math.sqrt(r * r + hl * hl) if p.kind == "cylinder" else hl + r)


class TestModels:
    def test_deterministic(self):
        assert generate_model("Asteroid", 0) == generate_model("Asteroid", 0)

    def test_different_seeds_differ(self):
        assert generate_model("Rocket", 1).primitives != generate_model("Rocket", 2).primitives

    def test_catalog_split(self):
        cat = build_catalog()
        assert len(cat) == 18
        assert sum(m.split == "train" for m in cat) == 12
        assert sum(m.split == "eval" for m in cat) == 6
        assert {m.category for m in cat if m.split == "eval"} == set(CATEGORIES)
        assert len({m.id for m in cat}) == 18

    def test_catalog_split_stable(self):
        a = {m.id: m.split for m in build_catalog(0)}
        b = {m.id: m.split for m in build_catalog(0)}
        assert a == b

    def test_bounding_radius_encloses_and_bounded(self):
        for m in build_catalog():
            oracle = max(enclosing_oracle(p) for p in m.primitives)
            assert m.bounding_radius >= oracle - 1e-12
            assert m.bounding_radius <= MAX_BOUNDING_RADIUS

    def test_recipes(self):
        for seed in range(5):
            kinds = [p.kind for p in generate_model("Asteroid", seed).primitives]
            assert set(kinds) == {"sphere"} and 4 <= len(kinds) <= 8
            sat = [p.kind for p in generate_model("Satellite", seed).primitives]
            assert sat.count("box") == 3
            rocket = [p.kind for p in generate_model("Rocket", seed).primitives]
            assert "cylinder" in rocket and "box" in rocket
            cap = [p.kind for p in generate_model("Capsule", seed).primitives]
            assert cap.count("capsule") == 1 and "cylinder" in cap
            station = [p.kind for p in generate_model("Station", seed).primitives]
            assert 2 <= station.count("cylinder") <= 4

    def test_primitive_validation(self):
        with pytest.raises(ValueError):
            Primitive("sphere", (0, 0, 0), (0.0,), (1, 1, 1))
        with pytest.raises(ValueError):
            Primitive("box", (0, 0, 0), (1, 1, 1), (1, 1, 1), orientation=(1, 1, 0, 0))
        with pytest.raises(ValueError):
            Primitive("torus", (0, 0, 0), (1,), (1, 1, 1))
        with pytest.raises(ValueError):
            TargetModel("x", "Asteroid", ())


class TestRender:
    def test_unit_sphere_on_axis(self):
        intr = default_camera()
        f = render(intr, sphere_model(1.0), (0, 0, 5))
        oracle = sphere_ray_depth(intr, 128, 128, (0, 0, 5), 1.0)
        assert f.depth[128, 128] == pytest.approx(oracle, abs=1e-6)
        # the ray through the pixel center is slightly off-axis
        assert f.depth[128, 128] == pytest.approx(4.0, abs=1e-4)

    def test_sphere_depth_matches_closed_form(self):
        intr = intrinsics_from_fov(math.radians(60), math.radians(60), 64, 64)
        center = (0.4, -0.3, 4.0)
        f = render(intr, sphere_model(0.8), center)
        hits = 0
        for v in range(64):
            for u in range(64):
                t = sphere_ray_depth(intr, u, v, center, 0.8)
                if t is None:
                    assert f.depth[v, u] == Z_MAX
                elif f.depth[v, u] < Z_MAX:
                    assert f.depth[v, u] == pytest.approx(t, abs=1e-6)
                    hits += 1
        assert hits > 100

    def test_box_front_face_depth(self):
        intr = intrinsics_from_fov(math.radians(60), math.radians(60), 64, 64)
        f = render(intr, box_model(), (0, 0, 5))
        hit = f.depth < Z_MAX
        assert hit.sum() > 0
        assert np.allclose(f.depth[hit], 4.5, atol=1e-6)

    def test_behind_camera_is_background(self):
        f = render(default_camera(), sphere_model(1.0), (0, 0, -5))
        assert np.all(f.depth == Z_MAX) and np.all(f.color == 0)

    def test_deterministic(self):
        m = build_catalog()[3]
        a = render(default_camera(), m, (0.3, 0.2, 6), euler_to_matrix((0.1, 0.2, 0.3)))
        b = render(default_camera(), m, (0.3, 0.2, 6), euler_to_matrix((0.1, 0.2, 0.3)))
        assert np.array_equal(a.color, b.color) and np.array_equal(a.depth, b.depth)

    def test_hit_pixels_lit_background_black(self):
        intr = intrinsics_from_fov(math.radians(60), math.radians(60), 96, 96)
        for m in build_catalog()[::3]:
            f = render(intr, m, (0, 0, 7), euler_to_matrix((0.4, -0.2, 0.9)))
            hit = f.depth < Z_MAX
            assert hit.any()
            assert np.all(f.color[hit].max(axis=1) > 0)
            assert np.all(f.color[~hit] == 0)
            assert f.color.min() >= 0 and f.color.max() <= 1
            assert f.depth.min() > 0 and f.depth.max() <= Z_MAX

    def test_nearest_primitive_wins(self):
        near = Primitive("sphere", (0, 0, -1.0), (0.3,), (1, 0, 0))
        far = Primitive("sphere", (0, 0, 0.0), (0.6,), (0, 1, 0))
        m = TargetModel("pair", "Asteroid", (far, near))
        intr = intrinsics_from_fov(math.radians(60), math.radians(60), 64, 64)
        f = render(intr, m, (0, 0, 5))
        assert f.depth[31, 31] == pytest.approx(sphere_ray_depth(intr, 31, 31, (0, 0, 4.0), 0.3), abs=1e-6)
        assert f.color[31, 31, 0] > f.color[31, 31, 1]


class TestBlur:
    def test_single_frame_identity(self, rng):
        fr = Frame(rng.random((4, 4, 3)), rng.uniform(1, 5, (4, 4)))
        out = blur_frames([fr], 1)
        assert np.array_equal(out.color, fr.color) and np.array_equal(out.depth, fr.depth)

    def test_constant_mean(self):
        a = Frame(np.full((3, 3, 3), 0.2), np.full((3, 3), 2.0))
        b = Frame(np.full((3, 3, 3), 0.4), np.full((3, 3), 3.0))
        out = blur_frames([a, b], 2)
        assert np.allclose(out.color, 0.3)
        assert np.array_equal(out.depth, a.depth)

    def test_five_frames_brute_force(self, rng):
        frames = [Frame(rng.random((5, 6, 3)), rng.uniform(1, 5, (5, 6))) for _ in range(5)]
        out = blur_frames(frames, 5)
        oracle = np.zeros((5, 6, 3))
        for v in range(5):
            for u in range(6):
                for c in range(3):
                    oracle[v, u, c] = sum(f.color[v, u, c] for f in frames) / 5
        assert np.allclose(out.color, oracle, atol=1e-12)

    def test_short_history_uses_available(self, rng):
        frames = [Frame(rng.random((2, 2, 3)), np.ones((2, 2))) for _ in range(2)]
        assert np.allclose(blur_frames(frames, 4).color, (frames[0].color + frames[1].color) / 2)

    @given(st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_convexity(self, n, seed):
        r = np.random.default_rng(seed)
        frames = [Frame(r.random((3, 3, 3)), np.ones((3, 3))) for _ in range(n)]
        out = blur_frames(frames, n).color
        stack = np.stack([f.color for f in frames])
        assert np.all(out >= stack.min(axis=0) - 1e-15) and np.all(out <= stack.max(axis=0) + 1e-15)

    def test_blur_levels(self):
        assert [blur_length(k) for k in range(5)] == [1, 2, 3, 4, 5]
        with pytest.raises(ValueError):
            blur_length(5)


class TestExport:
    def test_ppm_and_depth_round_trip(self, tmp_path):
        intr = intrinsics_from_fov(math.radians(60), math.radians(60), 40, 30)
        f = render(intr, build_catalog()[0], (0, 0, 4))
        write_ppm(tmp_path / "c.ppm", f.color)
        write_depth(tmp_path / "d.f32", f.depth)
        assert np.allclose(read_ppm(tmp_path / "c.ppm"), f.color, atol=0.5 / 255 + 1e-12)
        assert np.array_equal(read_depth(tmp_path / "d.f32", 30, 40), f.depth.astype(np.float32))
        assert (tmp_path / "d.f32").stat().st_size == 30 * 40 * 4

    def test_ppm_whitespace_valued_first_pixel(self, tmp_path):
        img = np.zeros((2, 2, 3))
        img[0, 0] = 32 / 255
        img[0, 1] = 10 / 255
        write_ppm(tmp_path / "w.ppm", img)
        assert np.allclose(read_ppm(tmp_path / "w.ppm"), np.round(img * 255) / 255)
