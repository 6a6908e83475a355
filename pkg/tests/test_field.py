"""Decomposed field: encoding, head outputs, enhancement math, differentiability."""
import numpy as np

from conftest import check_gradients

from lumifield.field import (EncodingConfig, FieldConfig, FieldNetworks,
                             enhance, point_colors, positional_encode,
                             query_decomposition, query_density, query_enh_coeffs)
from lumifield.tensor import Tensor, no_grad, precision


def small_field(seed=0, **overrides) -> FieldNetworks:
    cfg = FieldConfig(
        pos_encoding=EncodingConfig(num_frequencies=4),
        dir_encoding=EncodingConfig(num_frequencies=2),
        feature_dim=8,
        density_hidden=(16, 16),
        head_hidden=(8,),
        **overrides,
    )
    return FieldNetworks.create(seed, cfg)


# ----------------------------------------------------------------------
# positional encoding
# ----------------------------------------------------------------------

def test_encode_zero_input():
    cfg = EncodingConfig(num_frequencies=2)
    out = positional_encode(Tensor(np.zeros((1, 1))), cfg).data[0]
    assert np.allclose(out, [0.0, 0.0, 1.0, 0.0, 1.0], atol=1e-7)


def test_encode_one_l1():
    cfg = EncodingConfig(num_frequencies=1)
    out = positional_encode(Tensor(np.ones((1, 1))), cfg).data[0]
    assert np.allclose(out, [1.0, np.sin(np.pi), np.cos(np.pi)], atol=1e-6)
    assert abs(out[1]) < 1e-6 and abs(out[2] + 1.0) < 1e-6


def test_encode_matches_direct_formula():
    cfg = EncodingConfig(num_frequencies=10)
    x = np.full((1, 1), 0.3)
    out = positional_encode(Tensor(x, dtype=np.float64), cfg).data[0]
    expected = [0.3]
    for level in range(10):
        expected.append(np.sin(2.0 ** level * np.pi * 0.3))
        expected.append(np.cos(2.0 ** level * np.pi * 0.3))
    assert np.allclose(out, expected, atol=1e-12)


def test_encoded_dim():
    cfg = EncodingConfig(num_frequencies=10)
    assert cfg.encoded_dim(3) == 63
    assert EncodingConfig(num_frequencies=4).encoded_dim(3) == 27
    assert positional_encode(Tensor(np.zeros((2, 3))), cfg).shape == (2, 63)


# ----------------------------------------------------------------------
# zero-init closed forms
# ----------------------------------------------------------------------

def test_zero_init_outputs():
    nets = small_field()
    nets.zero_weights()
    pts = Tensor(np.random.default_rng(0).uniform(-1, 1, (5, 3)))
    feat, sigma = query_density(nets, pts)
    assert np.allclose(sigma.data, np.log(2.0), atol=1e-6)   # softplus(0)
    dirs = Tensor(np.tile([0.0, 0.0, -1.0], (5, 1)))
    v, r = query_decomposition(nets, feat, dirs)
    assert np.allclose(v.data, 0.5)
    assert np.allclose(r.data, 0.5)
    assert np.allclose(point_colors(v, r).data, 0.25)
    alpha, gamma = query_enh_coeffs(nets, feat)
    assert np.allclose(alpha.data, 0.05 + np.log(2.0), atol=1e-6)
    assert np.allclose(gamma.data, 0.0)


def test_query_density_deterministic_and_clamping():
    nets = small_field(scene_bound=1.0)
    pts = np.array([[0.2, 0.3, -0.1], [2.0, 0.0, 0.0]], dtype=np.float32)
    f1, s1, clamped = query_density(nets, Tensor(pts), return_clamped=True)
    f2, s2 = query_density(nets, Tensor(pts))
    assert np.array_equal(f1.data, f2.data)
    assert np.array_equal(s1.data, s2.data)
    assert clamped.tolist() == [False, True]
    # the out-of-bounds point collapses onto the bound surface
    inside_edge = np.array([[1.0, 0.0, 0.0]], dtype=np.float32)
    f_edge, s_edge = query_density(nets, Tensor(inside_edge))
    assert np.allclose(f_edge.data, f1.data[1], atol=1e-6)


def test_density_gradient_wrt_position():
    with precision("float64"):
        nets = small_field(seed=3)
        pts = Tensor(np.random.default_rng(1).uniform(-0.5, 0.5, (2, 3)),
                     requires_grad=True, dtype=np.float64)

        def fwd_t():
            _, sigma = query_density(nets, pts)
            return sigma.sum()

        def fwd_v():
            with no_grad():
                return float(fwd_t().data)

        check_gradients(fwd_t, fwd_v, [pts], tol=1e-4)


# ----------------------------------------------------------------------
# decomposition structure
# ----------------------------------------------------------------------

def test_basis_and_density_view_independent():
    nets = small_field(seed=5)
    rng = np.random.default_rng(2)
    pts = Tensor(rng.uniform(-1, 1, (100, 3)).astype(np.float32))
    d1 = rng.normal(size=(100, 3))
    d1 /= np.linalg.norm(d1, axis=1, keepdims=True)
    d2 = rng.normal(size=(100, 3))
    d2 /= np.linalg.norm(d2, axis=1, keepdims=True)
    feat, sigma = query_density(nets, pts)
    v1, r1 = query_decomposition(nets, feat, Tensor(d1.astype(np.float32)))
    feat_b, sigma_b = query_density(nets, pts)
    v2, r2 = query_decomposition(nets, feat_b, Tensor(d2.astype(np.float32)))
    assert np.array_equal(r1.data, r2.data)           # bitwise
    assert np.array_equal(sigma.data, sigma_b.data)   # bitwise
    assert not np.allclose(v1.data, v2.data)          # direction matters for v


def test_color_is_exact_product():
    nets = small_field(seed=6)
    rng = np.random.default_rng(3)
    pts = Tensor(rng.uniform(-1, 1, (50, 3)).astype(np.float32))
    dirs = rng.normal(size=(50, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    feat, _ = query_density(nets, pts)
    v, r = query_decomposition(nets, feat, Tensor(dirs.astype(np.float32)))
    c = point_colors(v, r)
    assert np.array_equal(c.data, v.data * r.data)


def test_enh_coeff_ranges():
    nets = small_field(seed=7)
    pts = Tensor(np.random.default_rng(4).uniform(-1, 1, (200, 3)).astype(np.float32))
    feat, _ = query_density(nets, pts)
    alpha, gamma = query_enh_coeffs(nets, feat)
    assert np.all(alpha.data > 0.05)
    assert np.all(np.abs(gamma.data) < 1.0)


def test_fixed_overrides():
    nets = small_field(seed=8)
    nets.fixed_alpha = 1.0
    nets.fixed_gamma = 0.0
    feat, _ = query_density(nets, Tensor(np.zeros((3, 3), dtype=np.float32)))
    alpha, gamma = query_enh_coeffs(nets, feat)
    assert np.all(alpha.data == 1.0)
    assert np.all(gamma.data == 0.0)


# ----------------------------------------------------------------------
# enhancement function
# ----------------------------------------------------------------------

def test_enhance_identity_when_v_equals_alpha():
    v = Tensor(np.full((4, 1), 0.37))
    alpha = Tensor(np.full((4, 1), 0.37))
    gamma = Tensor(np.random.default_rng(5).uniform(-0.9, 0.9, (4, 3)).astype(np.float32))
    out = enhance(v, alpha, gamma, gamma0=2.2)
    assert np.allclose(out.data, 1.0, atol=1e-6)


def test_enhance_matches_direct_evaluation():
    v = Tensor(np.array([[0.25]]))
    alpha = Tensor(np.array([[1.0]]))
    gamma = Tensor(np.zeros((1, 3)))
    out = enhance(v, alpha, gamma, gamma0=2.2)
    expected = 0.25 ** (1.0 / 2.2)
    assert np.allclose(out.data, expected, atol=1e-6)
    assert abs(expected - 0.5325) < 1e-3


def test_enhance_monotone_in_v():
    rng = np.random.default_rng(6)
    alpha = Tensor(np.full((10, 1), 0.6))
    gamma = Tensor(rng.uniform(-0.9, 0.9, (10, 3)).astype(np.float32))
    v1 = np.sort(rng.uniform(0.01, 0.98, 10)).reshape(10, 1)
    v2 = v1 + 0.01
    out1 = enhance(Tensor(v1.astype(np.float32)), alpha, gamma, 2.2)
    out2 = enhance(Tensor(v2.astype(np.float32)), alpha, gamma, 2.2)
    assert np.all(out2.data > out1.data)


def test_enhance_clamps_nonpositive_v():
    v = Tensor(np.array([[0.0], [-0.5]]))
    alpha = Tensor(np.full((2, 1), 0.5))
    gamma = Tensor(np.zeros((2, 3)))
    out = enhance(v, alpha, gamma, 2.2)
    assert np.all(np.isfinite(out.data))
    assert np.all(out.data > 0)


def test_enhanced_output_finite_over_ranges():
    rng = np.random.default_rng(7)
    v = Tensor(rng.uniform(1e-6, 1.0, (300, 1)).astype(np.float32))
    alpha = Tensor((0.05 + rng.uniform(0, 3, (300, 1))).astype(np.float32))
    gamma = Tensor(rng.uniform(-0.999, 0.999, (300, 3)).astype(np.float32))
    out = enhance(v, alpha, gamma, 2.2)
    assert np.all(np.isfinite(out.data))
    assert np.all(out.data > 0)


# ----------------------------------------------------------------------
# gradients through the full head stack
# ----------------------------------------------------------------------

def test_enh_coeff_gradients_wrt_weights():
    with precision("float64"):
        nets = small_field(seed=9)
        pts = np.random.default_rng(8).uniform(-0.5, 0.5, (3, 3))
        enh_params = {k: v for k, v in nets.params.items() if k.startswith("enh.")}
        w = np.random.default_rng(9).normal(size=(3, 4))

        def fwd_t():
            feat, _ = query_density(nets, Tensor(pts, dtype=np.float64))
            alpha, gamma = query_enh_coeffs(nets, feat)
            from lumifield.tensor import concat
            both = concat([alpha, gamma], axis=1)
            return (both * Tensor(w, dtype=np.float64)).sum()

        def fwd_v():
            with no_grad():
                return float(fwd_t().data)

        check_gradients(fwd_t, fwd_v, list(enh_params.values()), tol=1e-4)


def test_query_point_bundles_consistent_values():
    nets = small_field(seed=11)
    from lumifield.field import query_point
    direction = np.array([0.6, 0.0, -0.8])
    sample = query_point(nets, [0.1, -0.2, 0.3], direction)
    assert np.array_equal(sample.color, np.float32(sample.v) * sample.r)
    assert sample.sigma >= 0.0
    assert 0.0 < sample.v < 1.0
    assert np.all((sample.r > 0) & (sample.r < 1))
    assert sample.alpha > nets.config.alpha_floor
    assert np.all(np.abs(sample.gamma) < nets.config.gamma_cap)
    assert np.all(sample.enhanced_color > 0)
    with np.testing.assert_raises(ValueError):
        query_point(nets, [0, 0, 0], [1.0, 1.0, 0.0])


def test_enhanced_color_gradients_wrt_all_params():
    with precision("float64"):
        nets = small_field(seed=10)
        rng = np.random.default_rng(10)
        pts = rng.uniform(-0.5, 0.5, (3, 3))
        dirs = rng.normal(size=(3, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        w = rng.normal(size=(3, 3))

        def fwd_t():
            feat, _ = query_density(nets, Tensor(pts, dtype=np.float64))
            v, r = query_decomposition(nets, feat, Tensor(dirs, dtype=np.float64))
            alpha, gamma = query_enh_coeffs(nets, feat)
            c_hat = enhance(v, alpha, gamma, nets.config.gamma0) * r
            return (c_hat * Tensor(w, dtype=np.float64)).sum()

        def fwd_v():
            with no_grad():
                return float(fwd_t().data)

        check_gradients(fwd_t, fwd_v, list(nets.params.values()), tol=1e-4)
