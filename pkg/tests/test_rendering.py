"""Ray generation, stratified sampling, volume weights and full renders."""
import numpy as np
import pytest

from conftest import max_rel_err

from lumifield.field import EncodingConfig, FieldConfig, FieldNetworks
from lumifield.rendering import (Camera, Ray, RaySamples, camera_rays, composite,
                                 compute_weights, generate_ray, render_image,
                                 render_ray, render_rays, stratified_sample)
from lumifield.rng import rng_for
from lumifield.scene import literal_volume_weights
from lumifield.tensor import Tensor, precision


IDENTITY_POSE = np.hstack([np.eye(3), np.zeros((3, 1))])


def tiny_field(seed=0, **overrides) -> FieldNetworks:
    cfg = FieldConfig(
        pos_encoding=EncodingConfig(num_frequencies=4),
        dir_encoding=EncodingConfig(num_frequencies=2),
        feature_dim=8,
        density_hidden=(16, 16),
        head_hidden=(8,),
        scene_bound=6.0,
        **overrides,
    )
    return FieldNetworks.create(seed, cfg)


def make_opaque(nets: FieldNetworks, level: float = 60.0) -> None:
    """Bias the density output so softplus gives a huge constant sigma."""
    last = nets.config.density_spec().num_layers - 1
    nets.params[f"density.b{last}"].data[0, nets.config.feature_dim] = level


def make_empty(nets: FieldNetworks) -> None:
    last = nets.config.density_spec().num_layers - 1
    nets.params[f"density.b{last}"].data[0, nets.config.feature_dim] = -60.0


# ----------------------------------------------------------------------
# cameras and rays
# ----------------------------------------------------------------------

def test_center_pixel_looks_down_minus_z():
    cam = Camera(width=3, height=3, focal=10.0, pose=IDENTITY_POSE)
    ray = generate_ray(cam, 1, 1)
    assert np.allclose(ray.direction, [0, 0, -1], atol=1e-12)
    assert np.allclose(ray.origin, 0)


def test_pixel_offset_by_focal_gives_45_degrees():
    cam = Camera(width=3, height=3, focal=1.0, pose=IDENTITY_POSE)
    ray = generate_ray(cam, 2, 1)  # x + 0.5 - W/2 = 1 = focal
    expected = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
    assert np.allclose(ray.direction, expected, atol=1e-12)


def test_directions_unit_norm_under_rotation():
    angle = 0.7
    rot = np.array([[np.cos(angle), -np.sin(angle), 0],
                    [np.sin(angle), np.cos(angle), 0],
                    [0, 0, 1.0]])
    pose = np.hstack([rot, np.array([[1.0], [2.0], [3.0]])])
    cam = Camera(width=16, height=12, focal=20.0, pose=pose)
    ys, xs = np.mgrid[0:12, 0:16]
    origins, dirs = camera_rays(cam, xs.reshape(-1), ys.reshape(-1))
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    assert np.allclose(origins, [1.0, 2.0, 3.0])


def test_out_of_range_pixel_rejected():
    cam = Camera(width=4, height=4, focal=5.0, pose=IDENTITY_POSE)
    with pytest.raises(ValueError):
        generate_ray(cam, 4, 0)
    with pytest.raises(ValueError):
        generate_ray(cam, 0, -1)


def test_camera_validates_pose_and_focal():
    bad = IDENTITY_POSE.copy()
    bad[0, 0] = 2.0
    with pytest.raises(ValueError):
        Camera(width=4, height=4, focal=5.0, pose=bad)
    with pytest.raises(ValueError):
        Camera(width=4, height=4, focal=-1.0, pose=IDENTITY_POSE)


# ----------------------------------------------------------------------
# stratified sampling
# ----------------------------------------------------------------------

def test_bin_centers_without_jitter():
    ray = Ray(origin=np.zeros(3), direction=np.array([0, 0, -1.0]),
              pixel=(0, 0), near=0.0, far=1.0)
    samples = stratified_sample(ray, 4, jitter=False)
    assert np.allclose(samples.depths, [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(samples.deltas, [0.25, 0.25, 0.25, 0.125])


def test_jittered_samples_stay_in_bins():
    ray = Ray(origin=np.zeros(3), direction=np.array([0, 0, -1.0]),
              pixel=(0, 0), near=2.0, far=6.0)
    rng = rng_for(0, "jitter")
    for _ in range(20):
        samples = stratified_sample(ray, 8, jitter=True, rng=rng)
        edges = 2.0 + 0.5 * np.arange(9)
        assert np.all(samples.depths >= edges[:-1])
        assert np.all(samples.depths < edges[1:])


def test_seeded_jitter_reproducible():
    ray = Ray(origin=np.zeros(3), direction=np.array([0, 0, -1.0]), pixel=(0, 0))
    s1 = stratified_sample(ray, 16, jitter=True, rng=rng_for(5, "j"))
    s2 = stratified_sample(ray, 16, jitter=True, rng=rng_for(5, "j"))
    assert np.array_equal(s1.depths, s2.depths)


def test_ray_samples_invariants():
    with pytest.raises(ValueError):
        RaySamples(depths=np.array([1.0, 0.5]), deltas=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        RaySamples(depths=np.array([1.0]), deltas=np.array([0.5]))


# ----------------------------------------------------------------------
# volume weights
# ----------------------------------------------------------------------

def test_zero_density_gives_zero_weights():
    w = compute_weights(Tensor(np.zeros(8)), np.full(8, 0.5))
    assert np.allclose(w.data, 0.0)


def test_weights_match_hand_computed_example():
    w = compute_weights(Tensor(np.array([1.0, 2.0])), np.array([0.5, 0.5]))
    assert np.allclose(w.data, [0.393469, 0.383401], atol=1e-6)


def test_opaque_first_sample_takes_all():
    sigma = np.array([1e6, 5.0, 5.0], dtype=np.float32)
    w = compute_weights(Tensor(sigma), np.ones(3, dtype=np.float32))
    assert w.data[0] > 1 - 1e-6
    assert np.all(w.data[1:] < 1e-6)


def test_weight_identity_and_oracle_equivalence():
    rng = np.random.default_rng(123)
    with precision("float64"):
        for _ in range(200):
            n = int(rng.integers(2, 64))
            sigma = rng.uniform(0, 8, n)
            deltas = rng.uniform(1e-3, 0.3, n)
            w = compute_weights(Tensor(sigma, dtype=np.float64), deltas).data
            oracle = literal_volume_weights(sigma, deltas)
            assert np.max(np.abs(w - oracle)) < 1e-6
            total = 1.0 - np.exp(-np.sum(sigma * deltas))
            assert abs(w.sum() - total) < 1e-6
            assert np.all(w >= 0) and w.sum() <= 1 + 1e-6


def test_transmittance_non_increasing():
    rng = np.random.default_rng(7)
    sigma = rng.uniform(0, 5, (10, 32))
    deltas = rng.uniform(1e-3, 0.2, (10, 32))
    trans = np.exp(-np.cumsum(np.concatenate(
        [np.zeros((10, 1)), sigma * deltas], axis=1)[:, :-1], axis=1))
    assert np.all(np.diff(trans, axis=1) <= 1e-12)


# ----------------------------------------------------------------------
# composite
# ----------------------------------------------------------------------

def test_composite_single_sample_identity():
    out = composite(Tensor(np.array([1.0])), Tensor(np.array([[0.3, 0.5, 0.7]])))
    assert np.allclose(out.data, [0.3, 0.5, 0.7])


def test_composite_average():
    out = composite(Tensor(np.array([0.5, 0.5])), Tensor(np.array([0.0, 1.0])))
    assert np.allclose(out.data, 0.5)


def test_composite_matches_bruteforce_loop():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        w = rng.uniform(0, 1, n)
        q = rng.normal(size=(n, 3))
        expected = np.zeros(3)
        for i in range(n):
            expected += w[i] * q[i]
        got = composite(Tensor(w), Tensor(q, dtype=np.float64)).data
        assert np.allclose(got, expected, atol=1e-12)


def test_composite_length_mismatch():
    with pytest.raises(ValueError):
        composite(Tensor(np.ones(3)), Tensor(np.ones(4)))


# ----------------------------------------------------------------------
# full pipeline
# ----------------------------------------------------------------------

def _test_ray(near=2.0, far=6.0):
    return Ray(origin=np.array([0.0, 0.0, 4.0]), direction=np.array([0.0, 0.0, -1.0]),
               pixel=(0, 0), near=near, far=far)


def test_empty_field_renders_black():
    nets = tiny_field()
    make_empty(nets)
    out = render_ray(nets, _test_ray(), n_samples=16)
    assert np.all(np.abs(out.rgb) < 1e-6)
    assert np.all(np.abs(out.enhanced) < 1e-6)
    assert out.opacity < 1e-6


def test_opaque_field_with_v_equal_alpha_gives_basis():
    nets = tiny_field()
    nets.zero_weights()
    make_opaque(nets)
    nets.fixed_alpha = 0.5   # matches the zero-init v
    nets.fixed_gamma = 0.0
    out = render_ray(nets, _test_ray(), n_samples=16)
    assert np.allclose(out.enhanced, out.basis, atol=1e-5)
    assert np.allclose(out.enhanced, 0.5, atol=1e-5)


def test_pipeline_matches_independent_numpy_reimplementation():
    """Step-by-step plain-numpy recomputation of one ray's render."""
    with precision("float64"):
        nets = tiny_field(seed=21)
        ray = _test_ray()
        n = 12
        out = render_ray(nets, ray, n_samples=n)

        cfg = nets.config
        p = {k: t.data for k, t in nets.params.items()}

        def np_encode(x, L):
            parts = [x]
            for lv in range(L):
                parts.append(np.sin(2.0 ** lv * np.pi * x))
                parts.append(np.cos(2.0 ** lv * np.pi * x))
            return np.concatenate(parts, axis=1)

        def np_mlp(prefix, dims, x, out_act=None):
            h = x
            layers = len(dims) - 1
            for i in range(layers):
                h = h @ p[f"{prefix}.w{i}"] + p[f"{prefix}.b{i}"]
                if i < layers - 1:
                    h = np.maximum(h, 0)
            return h

        width = (ray.far - ray.near) / n
        t_vals = ray.near + width * (np.arange(n) + 0.5)
        deltas = np.full(n, width)
        deltas[-1] = ray.far - t_vals[-1]
        pts = ray.origin[None, :] + ray.direction[None, :] * t_vals[:, None]
        enc = np_encode(np.clip(pts / cfg.scene_bound, -1, 1),
                        cfg.pos_encoding.num_frequencies)
        raw = np_mlp("density", cfg.density_spec().layer_dims, enc)
        feat = raw[:, :cfg.feature_dim]
        sigma = np.logaddexp(0, raw[:, cfg.feature_dim])
        dir_enc = np_encode(np.tile(ray.direction, (n, 1)),
                            cfg.dir_encoding.num_frequencies)
        v = 1 / (1 + np.exp(-np_mlp("lighting", cfg.lighting_spec().layer_dims,
                                    np.concatenate([feat, dir_enc], axis=1))))
        r = 1 / (1 + np.exp(-np_mlp("basis", cfg.basis_spec().layer_dims, feat)))
        enh_raw = np_mlp("enh", cfg.enhancement_spec().layer_dims, feat)
        alpha = np.logaddexp(0, enh_raw[:, :1]) + cfg.alpha_floor
        gamma = np.tanh(enh_raw[:, 1:4]) * cfg.gamma_cap
        v_hat = (np.maximum(v, 1e-6) / alpha) ** (1.0 / (cfg.gamma0 + gamma))

        weights = literal_volume_weights(sigma, deltas)
        c_pix = weights @ (v * r)
        c_hat_pix = weights @ (v_hat * r)

        assert max_rel_err(out.rgb, c_pix) < 1e-9
        assert max_rel_err(out.enhanced, c_hat_pix) < 1e-9
        assert max_rel_err(out.weights, weights) < 1e-9
        assert abs(out.v - weights @ v[:, 0]) < 1e-12
        assert abs(out.alpha - weights @ alpha[:, 0]) < 1e-12


def test_enhancement_degenerates_to_identity():
    nets = tiny_field(seed=22, gamma0=1.0)
    nets.fixed_alpha = 1.0
    nets.fixed_gamma = 0.0
    rng = np.random.default_rng(3)
    origins = np.tile([0.0, 0.0, 4.0], (32, 1))
    dirs = rng.normal(size=(32, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    res = render_rays(nets, origins, dirs, 2.0, 6.0, 16)
    assert np.max(np.abs(res["c_hat"].data - res["c"].data)) < 1e-6


def test_render_image_row_major_matches_render_ray():
    nets = tiny_field(seed=23)
    cam = Camera(width=2, height=2, focal=3.0, pose=IDENTITY_POSE)
    bufs = render_image(nets, cam, near=2.0, far=6.0, n_samples=8)
    for y in range(2):
        for x in range(2):
            single = render_ray(nets, generate_ray(cam, x, y), n_samples=8)
            assert np.allclose(bufs["rgb"][y, x], single.rgb, atol=1e-6)
            assert np.allclose(bufs["enhanced"][y, x], single.enhanced, atol=1e-6)


def test_render_image_deterministic():
    nets = tiny_field(seed=24)
    cam = Camera(width=4, height=4, focal=6.0, pose=IDENTITY_POSE)
    a = render_image(nets, cam, n_samples=8)
    b = render_image(nets, cam, n_samples=8)
    for key in ("rgb", "enhanced", "lighting", "basis"):
        assert np.array_equal(a[key], b[key])


def test_render_image_threads_match_sequential():
    nets = tiny_field(seed=27)
    cam = Camera(width=6, height=6, focal=8.0, pose=IDENTITY_POSE)
    a = render_image(nets, cam, n_samples=8, threads=1)
    b = render_image(nets, cam, n_samples=8, threads=3, chunk_rows=2)
    for key in ("rgb", "enhanced", "lighting", "basis"):
        assert np.array_equal(a[key], b[key])


def test_zero_init_lighting_map_is_half():
    nets = tiny_field(seed=25)
    nets.zero_weights()
    cam = Camera(width=3, height=3, focal=5.0, pose=IDENTITY_POSE)
    bufs = render_image(nets, cam, n_samples=16)
    assert np.allclose(bufs["lighting"], 0.5, atol=1e-5)
    assert np.allclose(bufs["basis"], 0.5, atol=1e-5)


def test_edit_gains_leave_basis_and_weights_untouched():
    nets = tiny_field(seed=26)
    make_opaque(nets, level=5.0)
    cam = Camera(width=4, height=4, focal=6.0, pose=IDENTITY_POSE)
    plain = render_image(nets, cam, n_samples=8)
    warm = render_image(nets, cam, n_samples=8, edit_gains=np.array([1.15, 1.0, 0.85]))
    ident = render_image(nets, cam, n_samples=8, edit_gains=np.array([1.0, 1.0, 1.0]))
    assert np.array_equal(plain["basis"], warm["basis"])
    assert np.array_equal(plain["opacity"], warm["opacity"])
    assert np.array_equal(plain["enhanced"], ident["enhanced"])
    assert warm["enhanced"][..., 0].mean() > plain["enhanced"][..., 0].mean()
    assert warm["enhanced"][..., 2].mean() < plain["enhanced"][..., 2].mean()
