import numpy as np
import pytest

from oracles import brute_force_height
from quadloco import terrain
from quadloco.terrain import (
    PARAM_RANGES,
    TerrainError,
    TerrainSpec,
    flat_patch,
    friction_at,
    generate,
    height_at,
    height_query,
    normal_at,
    random_stair_scales,
    single_step_patch,
)


def test_rough_zero_amplitude_is_flat():
    patch = generate(TerrainSpec("rough", {"amplitude": 0.0}, seed=5))
    xs = np.linspace(-3.9, 3.9, 40)
    assert np.all(height_at(patch, xs, xs) == 0.0)


def test_generation_is_deterministic():
    a = generate(TerrainSpec("stairs_random", {"height": 0.15, "depth": 0.4}, seed=77))
    b = generate(TerrainSpec("stairs_random", {"height": 0.15, "depth": 0.4}, seed=77))
    assert np.array_equal(a.heightfield, b.heightfield)
    assert np.array_equal(a.boxes, b.boxes)
    c = generate(TerrainSpec("stairs_random", {"height": 0.15, "depth": 0.4}, seed=78))
    assert not np.array_equal(c.boxes, b.boxes)


def test_standard_stairs_match_tread_formula():
    h, d = 0.17, 0.29
    patch = generate(TerrainSpec("stairs_standard", {"height": h, "depth": d}, seed=3))
    rng = np.random.default_rng(0)
    # sample points on treads, away from risers
    for _ in range(200):
        k = rng.integers(1, 8)
        x_rel = k * d + rng.uniform(0.02, d - 0.02)
        x = terrain.STAIR_BASE_OFFSET + x_rel
        if x >= terrain.PATCH_HALF_EXTENT - 0.02:
            continue
        y = rng.uniform(-2.0, 2.0)
        expected = np.floor(x_rel / d) * h
        assert height_at(patch, np.array([x]), np.array([y]))[0] == pytest.approx(expected, abs=1e-12)


def test_stairs_risers_are_vertical():
    h, d = 0.2, 0.3
    patch = generate(TerrainSpec("stairs_standard", {"height": h, "depth": d}, seed=3))
    x_riser = terrain.STAIR_BASE_OFFSET + d
    before = height_at(patch, np.array([x_riser - 1e-9]), np.array([0.0]))[0]
    after = height_at(patch, np.array([x_riser + 1e-9]), np.array([0.0]))[0]
    assert after - before == pytest.approx(h, abs=1e-9)
    # the edge itself belongs to the upper tread (ties broken upward)
    on_edge = height_at(patch, np.array([x_riser]), np.array([0.0]))[0]
    assert on_edge == pytest.approx(after, abs=1e-12)


def test_large_steps_exactly_two_levels():
    patch = generate(TerrainSpec("large_steps", {"height": 0.4}, seed=11))
    rng = np.random.default_rng(1)
    xs = rng.uniform(-3.9, 3.9, 5000)
    ys = rng.uniform(-3.9, 3.9, 5000)
    levels = set(np.unique(height_at(patch, xs, ys)).tolist())
    assert levels == {0.0, 0.4}


def test_rough_discrete_level_count_bounded():
    levels = 5
    patch = generate(TerrainSpec("rough_discrete", {"amplitude": 0.25, "levels": levels}, seed=2))
    distinct = np.unique(patch.heightfield)
    assert len(distinct) <= levels


def test_random_stair_scale_statistics():
    rng = np.random.default_rng(9)
    eps = random_stair_scales(rng, 100_000)
    assert abs(eps.mean() - 1.0) < 0.02
    assert abs(eps.std() - 0.2) / 0.2 < 0.02


def test_boxes_respect_height_cap():
    patch = generate(TerrainSpec("boxes", {"height": 0.25}, seed=21))
    assert len(patch.boxes) == terrain.BOX_COUNT
    assert patch.boxes[:, 6].max() <= 0.25 + 1e-12
    rng = np.random.default_rng(2)
    xs = rng.uniform(-3.9, 3.9, 2000)
    ys = rng.uniform(-3.9, 3.9, 2000)
    assert height_at(patch, xs, ys).max() <= 0.25 + 1e-12


def test_single_box_top_height():
    patch = single_step_patch(0.25, edge_x=1.0)
    assert height_at(patch, np.array([2.0]), np.array([0.0]))[0] == pytest.approx(0.25)
    assert height_at(patch, np.array([0.5]), np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("kind,params", [
    ("rough", {"amplitude": 0.25}),
    ("rough_discrete", {"amplitude": 0.3, "levels": 7}),
    ("large_steps", {"height": 0.3}),
    ("boxes", {"height": 0.2}),
    ("grid_steps", {"height": 0.3, "width": 0.35}),
    ("step_stairs", {"height": 0.15, "depth": 0.4}),
    ("stairs_standard", {"height": 0.18, "depth": 0.3}),
    ("stairs_open", {"height": 0.12, "depth": 0.35}),
    ("stairs_ledged", {"height": 0.12, "depth": 0.35}),
    ("stairs_random", {"height": 0.1, "depth": 0.4}),
])
def test_height_matches_brute_force_oracle(kind, params):
    patch = generate(TerrainSpec(kind, params, seed=13))
    rng = np.random.default_rng(3)
    xs = rng.uniform(-4.2, 4.2, 10_000)
    ys = rng.uniform(-4.2, 4.2, 10_000)
    got = height_at(patch, xs, ys)
    for i in range(0, 10_000, 7):
        x = min(max(xs[i], patch.origin[0]), patch.origin[0] + patch.extent - 1e-9)
        y = min(max(ys[i], patch.origin[1]), patch.origin[1] + patch.extent - 1e-9)
        expected = brute_force_height(
            patch.heightfield, patch.origin, patch.resolution, patch.boxes, x, y
        )
        assert abs(got[i] - expected) <= 1e-9


def test_out_of_bounds_clamped_and_flagged():
    patch = generate(TerrainSpec("rough", {"amplitude": 0.2}, seed=4))
    q = height_query(patch, np.array([9.0, 0.0]), np.array([0.0, 0.0]))
    assert q.out_of_bounds.tolist() == [True, False]
    border = height_at(patch, np.array([patch.origin[0] + patch.extent - 1e-6]), np.array([0.0]))[0]
    assert q.heights[0] == pytest.approx(border, abs=1e-9)


def test_parameter_ranges_enforced():
    with pytest.raises(TerrainError) as err:
        generate(TerrainSpec("stairs_standard", {"height": 0.5, "depth": 0.3}))
    assert "height" in str(err.value) and "0.22" in str(err.value)
    with pytest.raises(TerrainError):
        generate(TerrainSpec("grid_steps", {"height": 0.2, "width": 1.5}))
    with pytest.raises(TerrainError):
        generate(TerrainSpec("rough", {"bogus": 1.0}))
    with pytest.raises(TerrainError):
        generate(TerrainSpec("nope", {}))


def test_friction_uniform_default():
    patch = flat_patch(friction=0.7)
    xs = np.linspace(-3, 3, 10)
    assert np.all(friction_at(patch, xs, xs) == 0.7)
    assert np.all(friction_at(patch, xs, xs, default=0.45) == 0.45)


def test_friction_slippery_region_and_boundary():
    patch = generate(TerrainSpec("rough", {"amplitude": 0.0, "slippery_regions": 1}, seed=8))
    assert len(patch.friction_regions) == 1
    x0, y0, x1, y1, mu = patch.friction_regions[0]
    assert mu == pytest.approx(0.1)
    inside = friction_at(patch, np.array([(x0 + x1) / 2]), np.array([(y0 + y1) / 2]))[0]
    assert inside == pytest.approx(0.1)
    # closed on the low edges, open on the high edges
    assert friction_at(patch, np.array([x0]), np.array([y0]))[0] == pytest.approx(0.1)
    assert friction_at(patch, np.array([x1]), np.array([y1]))[0] == pytest.approx(patch.base_friction)


def test_normals_flat_and_unit():
    patch = flat_patch()
    n = normal_at(patch, np.array([0.3]), np.array([-1.2]))
    assert np.allclose(n[0], [0.0, 0.0, 1.0])
    rough = generate(TerrainSpec("rough", {"amplitude": 0.3}, seed=6))
    rng = np.random.default_rng(5)
    pts = rng.uniform(-3, 3, (100, 2))
    ns = normal_at(rough, pts[:, 0], pts[:, 1])
    assert np.allclose(np.linalg.norm(ns, axis=1), 1.0)


def test_open_stairs_have_gaps_below_treads():
    patch = generate(TerrainSpec("stairs_open", {"height": 0.2, "depth": 0.4}, seed=3))
    # every box is a thin slab, not a full column
    thickness = patch.boxes[:, 6] - patch.boxes[:, 5]
    assert np.all(thickness <= terrain.TREAD_THICKNESS + 1e-12)


def test_ledged_stairs_have_nosing_slabs():
    patch = generate(TerrainSpec("stairs_ledged", {"height": 0.2, "depth": 0.4}, seed=3))
    thickness = patch.boxes[:, 6] - patch.boxes[:, 5]
    assert (thickness > 0.5).any()  # solid columns
    assert (thickness <= terrain.TREAD_THICKNESS + 1e-12).any()  # noses


def test_step_stairs_alternate_levels():
    h, d = 0.2, 0.5
    patch = generate(TerrainSpec("step_stairs", {"height": h, "depth": d}, seed=3))
    x0 = terrain.STAIR_BASE_OFFSET
    up = height_at(patch, np.array([x0 + 0.5 * d]), np.array([0.0]))[0]
    down = height_at(patch, np.array([x0 + 1.5 * d]), np.array([0.0]))[0]
    assert up == pytest.approx(h)
    assert down == pytest.approx(0.0)


def test_spec_serialization_roundtrip():
    spec = TerrainSpec("grid_steps", {"height": 0.22, "width": 0.4}, seed=42)
    again = TerrainSpec.from_dict(spec.to_dict())
    assert again == spec


def test_heightfield_export(tmp_path):
    patch = generate(TerrainSpec("rough", {"amplitude": 0.1}, seed=1))
    path = tmp_path / "grid.txt"
    terrain.export_heightfield(patch, path)
    loaded = np.loadtxt(path)
    assert loaded.shape == patch.heightfield.shape
    assert np.allclose(loaded, patch.heightfield, atol=1e-4)


def test_sample_spec_within_ranges():
    rng = np.random.default_rng(0)
    for kind in terrain.KINDS:
        for _ in range(20):
            spec = terrain.sample_spec(kind, rng)
            spec.validate()
            for name, value in spec.params.items():
                lo, hi, _ = PARAM_RANGES[kind][name]
                assert lo <= value <= hi
