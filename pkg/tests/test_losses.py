import numpy as np
import pytest

from vidatlas import gradcheck, losses, model, nnet
from vidatlas.errors import ConfigError

SQRT8 = 2.0 * np.sqrt(2.0)


def make_batch(pts, gt_color=None, gt_dx=None, gt_dy=None, flow_pts=None, flow_valid=None,
               mask=None, scrib=None, g_dx=None, g_dy=None, sparsity_uv=None):
    pts = np.asarray(pts, dtype=np.float64)
    b = len(pts)
    z3 = np.zeros((b, 3))
    return losses.SampleBatch(
        pts=pts,
        gt_color=z3.copy() if gt_color is None else np.asarray(gt_color, dtype=float),
        gt_dx=z3.copy() if gt_dx is None else np.asarray(gt_dx, dtype=float),
        gt_dy=z3.copy() if gt_dy is None else np.asarray(gt_dy, dtype=float),
        flow_pts=pts.copy() if flow_pts is None else np.asarray(flow_pts, dtype=float),
        flow_valid=np.ones(b) if flow_valid is None else np.asarray(flow_valid, dtype=float),
        mask=np.zeros(b) if mask is None else np.asarray(mask, dtype=float),
        scrib=np.zeros(b, dtype=np.int8) if scrib is None else np.asarray(scrib, dtype=np.int8),
        g_dx=np.full(b, 1.0) if g_dx is None else np.asarray(g_dx, dtype=float),
        g_dy=np.full(b, 1.0) if g_dy is None else np.asarray(g_dy, dtype=float),
        sparsity_uv=sparsity_uv,
    )


def tiny_model(dims=(2, 8, 8), n_foreground=1, grid=None, seed=0):
    return model.build_model(
        dims,
        n_foreground=n_foreground,
        hidden=16,
        map_bg_layers=2,
        map_fg_layers=2,
        alpha_layers=2,
        atlas_layers=2,
        atlas_skips=(1,),
        grid_resolution=grid,
        rng=np.random.default_rng(seed),
        dtype=np.float64,
    )


def grads_all_zero(grads):
    return all(np.all(g == 0) for arrs in grads.values() for g in arrs)


# ---------------------------------------------------------------------------
# rigidity energy


def test_energy_identity():
    assert abs(losses.rigidity_energy(np.eye(2)) - SQRT8) < 1e-6


def test_energy_double_scale():
    want = np.sqrt(32.0) + np.sqrt(0.125)
    assert abs(losses.rigidity_energy(2.0 * np.eye(2)) - want) < 1e-6


def test_energy_lower_bound_and_orthogonal_minimum():
    rng = np.random.default_rng(0)
    j = rng.normal(size=(1000, 2, 2))
    e = losses.rigidity_energy(j)
    assert np.all(e >= SQRT8 - 1e-9)
    # equality exactly on (rescaled) orthogonal matrices
    th = rng.uniform(0, 2 * np.pi, size=1000)
    rot = np.stack(
        [np.stack([np.cos(th), -np.sin(th)], -1), np.stack([np.sin(th), np.cos(th)], -1)], axis=-2
    )
    rot[::2, :, 0] *= -1.0  # include reflections
    e_rot = losses.rigidity_energy(rot)
    assert np.max(np.abs(e_rot - SQRT8)) < 1e-6
    # non-orthogonal J^T J stays above the bound
    off = j[np.abs(np.linalg.det(j)) > 0.1]
    s = np.einsum("bij,bik->bjk", off, off)
    not_id = np.abs(s - np.eye(2)).max(axis=(1, 2)) > 1e-3
    assert np.all(losses.rigidity_energy(off[not_id]) > SQRT8 + 1e-9)


def test_energy_rotation_invariance():
    rng = np.random.default_rng(1)
    j = rng.normal(size=(50, 2, 2))
    th = rng.uniform(0, 2 * np.pi, size=2)
    rot = lambda t: np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    e = losses.rigidity_energy(j)
    e_lr = losses.rigidity_energy(rot(th[0])[None] @ j @ rot(th[1])[None])
    assert np.max(np.abs(e - e_lr) / np.maximum(e, 1.0)) < 1e-8


def test_energy_gradient_matches_complex_step():
    # complex-step differentiation is exact for this analytic energy, so it
    # serves as the oracle in regimes where real-step FD loses validity
    # (near-singular Jacobians)
    def energy_cplx(j):
        a = j[0, 0] * j[0, 0] + j[1, 0] * j[1, 0]
        b = j[0, 0] * j[0, 1] + j[1, 0] * j[1, 1]
        c = j[0, 1] * j[0, 1] + j[1, 1] * j[1, 1]
        ns = np.sqrt(a * a + 2 * b * b + c * c)
        ar, cr = a + losses.RIGID_EPS, c + losses.RIGID_EPS
        det = ar * cr - b * b
        ma, mb, mc = cr / det, -b / det, ar / det
        return ns + np.sqrt(ma * ma + 2 * mb * mb + mc * mc)

    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(500):
        j = rng.normal(size=(2, 2))
        if trial % 3 == 0:
            j *= 1e-2  # near-degenerate
        _, dj = losses._dirichlet(j[None])
        cs = np.zeros((2, 2))
        for i in range(2):
            for k in range(2):
                jc = j.astype(complex)
                jc[i, k] += 1e-200j
                cs[i, k] = energy_cplx(jc).imag / 1e-200
        worst = max(worst, float(gradcheck.rel_err(dj[0], cs).max()))
    assert worst < 1e-9


# ---------------------------------------------------------------------------
# color


def test_color_zero_for_perfect_reconstruction():
    m = tiny_model(grid=8)
    m.grid.texels[:] = 0.5
    batch = make_batch([[3, 3, 0]], gt_color=[[0.5, 0.5, 0.5]])
    v, _ = losses.loss_color(m, batch, losses.LossWeights())
    assert v < 1e-18  # exact up to one rounding of the bilinear weights


def test_color_unit_error_is_beta_rgb():
    m = tiny_model(grid=8)
    m.grid.texels[:] = 0.0
    batch = make_batch([[3, 3, 0]], gt_color=[[1.0, 0.0, 0.0]])
    v, _ = losses.loss_color(m, batch, losses.LossWeights())
    assert abs(v - 5000.0) < 1e-9


# ---------------------------------------------------------------------------
# rigid / global rigid


def _affine_map_params(spec, rng, w):
    """All-active hidden layer; uv is tanh of an exact affine map whose
    x/y Jacobian (in normalized units) is the identity."""
    n_hidden = spec.layer_widths[1]
    w1 = rng.normal(scale=0.1, size=(n_hidden, 3))
    b1 = rng.uniform(1.0, 1.5, size=n_hidden)
    a = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    w2 = a @ np.linalg.pinv(w1)
    b2 = -w2 @ b1
    return nnet.MlpParams([w1, w2], [b1, b2])


def nominal_similarity_model(dims, seed=0):
    m = tiny_model(dims=dims, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for li in range(m.n_layers):
        m.mapping_params[li] = _affine_map_params(m.mapping_specs[li], rng, dims[2])
    return m


def test_rigid_nominal_similarity_value():
    # two layers at the rigidity optimum: 5 * (2 sqrt 2 + 2 sqrt 2) = 20 sqrt 2
    dims = (2, 2001, 2001)
    m = nominal_similarity_model(dims)
    batch = make_batch([[1000, 1000, 0]])
    v, _ = losses.loss_rigid(m, batch, losses.LossWeights())
    assert abs(v - 20.0 * np.sqrt(2.0)) < 1e-5


def test_rigid_disabled_weight_is_zero():
    m = tiny_model(seed=3)
    batch = make_batch([[3, 3, 0]])
    v, grads = losses.loss_rigid(m, batch, losses.LossWeights(rigid=0.0))
    assert v == 0.0 and grads_all_zero(grads)


def test_global_rigid_nominal_similarity_value():
    dims = (2, 20001, 20001)
    m = nominal_similarity_model(dims, seed=1)
    batch = make_batch([[10000, 10000, 0]], g_dx=[100.0], g_dy=[100.0])
    v, _ = losses.loss_global_rigid(m, batch, losses.LossWeights())
    assert abs(v - 20.0 * np.sqrt(2.0)) < 1e-4


def test_global_rigid_uses_clamped_offsets():
    m = tiny_model(seed=4)
    batch = make_batch([[6, 5, 0]], g_dx=[1.0], g_dy=[2.0])  # near border
    v, _ = losses.loss_global_rigid(m, batch, losses.LossWeights())
    assert np.isfinite(v) and v > 0


# ---------------------------------------------------------------------------
# flow


def test_flow_masked_out_is_exactly_zero():
    m = tiny_model(seed=5)
    batch = make_batch([[3, 3, 0]], flow_pts=[[5.5, 2.5, 1.0]], flow_valid=[0.0])
    v, grads = losses.loss_flow(m, batch, losses.LossWeights())
    assert v == 0.0 and grads_all_zero(grads)


def test_flow_identical_correspondence_is_zero():
    m = tiny_model(seed=6)
    batch = make_batch([[3, 3, 0]], flow_pts=[[3.0, 3.0, 0.0]])
    v, grads = losses.loss_flow(m, batch, losses.LossWeights())
    assert v == 0.0
    assert all(np.all(np.isfinite(g)) for arrs in grads.values() for g in arrs)


def test_flow_positive_when_mapping_moves():
    m = tiny_model(seed=7)
    batch = make_batch([[2, 2, 0]], flow_pts=[[5.0, 4.0, 1.0]])
    v, _ = losses.loss_flow(m, batch, losses.LossWeights())
    assert v > 0


# ---------------------------------------------------------------------------
# sparsity


def _alpha_bias_model(bias, seed=0, **kw):
    m = tiny_model(seed=seed, **kw)
    for a in m.alpha_params.arrays():
        a[:] = 0
    m.alpha_params.biases[-1][:] = bias
    return m


def test_sparsity_opaque_foreground_is_zero():
    m = _alpha_bias_model(40.0, grid=8)  # sigmoid(40) = 1 - tiny
    m.grid.texels[:] = 1.0
    batch = make_batch([[3, 3, 0]])
    v, _ = losses.loss_sparsity(m, batch, losses.LossWeights())
    assert v < 1e-9


def test_sparsity_transparent_red_foreground():
    m = _alpha_bias_model(-40.0, grid=8)
    m.grid.texels[:] = [1.0, 0.0, 0.0]
    batch = make_batch([[3, 3, 0]])
    v, _ = losses.loss_sparsity(m, batch, losses.LossWeights())
    assert abs(v - 1000.0) < 1e-6


def test_sparsity_multi_layer_l1_on_atlas():
    m = tiny_model(n_foreground=2, grid=8, seed=8)
    m.grid.texels[:] = 0.25
    uv = gradcheck._uniform_foreground_uv(np.random.default_rng(0), 2, 4)
    batch = make_batch([[3, 3, 0]] * 4, sparsity_uv=uv)
    v, grads = losses.loss_sparsity(m, batch, losses.LossWeights())
    assert abs(v - 1000.0 * 3 * 0.25) < 1e-9
    # only atlas (grid) receives gradient
    assert np.any(grads["grid"][0] != 0)
    assert all(np.all(g == 0) for name, arrs in grads.items() if name != "grid" for g in arrs)


# ---------------------------------------------------------------------------
# mask BCE


def test_mask_bce_matched_alpha_is_tiny():
    m = _alpha_bias_model(40.0)
    batch = make_batch([[3, 3, 0]], mask=[1.0])
    v, _ = losses.loss_mask_bce(m, batch, losses.LossWeights())
    assert v < 1e-5


def test_mask_bce_half_alpha_both_labels():
    m = _alpha_bias_model(0.0)  # sigmoid(0) = 0.5 exactly
    w = losses.LossWeights()
    v1, _ = losses.loss_mask_bce(m, make_batch([[3, 3, 0]], mask=[1.0]), w)
    v0, _ = losses.loss_mask_bce(m, make_batch([[3, 3, 0]], mask=[0.0]), w)
    assert abs(v1 - 2.0 * np.log(2.0)) < 1e-12
    assert v0 == v1  # BCE symmetry at alpha = 0.5


# ---------------------------------------------------------------------------
# scribble


def test_scribble_values():
    m = tiny_model(n_foreground=2, seed=9)
    for a in m.alpha_params.arrays():
        a[:] = 0
    m.alpha_params.biases[-1][:] = [0.0, np.log(2.0), 0.0]  # alphas (.25, .5, .25)
    w = losses.LossWeights()
    v_red, _ = losses.loss_scribble(m, make_batch([[3, 3, 0]], scrib=[1]), w)
    assert abs(v_red - np.log(2.0)) < 1e-12
    v_green, _ = losses.loss_scribble(m, make_batch([[3, 3, 0]], scrib=[2]), w)
    assert abs(v_green - np.log(4.0)) < 1e-12


def test_scribble_near_one_alpha_is_tiny():
    m = tiny_model(n_foreground=2, seed=10)
    for a in m.alpha_params.arrays():
        a[:] = 0
    m.alpha_params.biases[-1][:] = [0.0, 40.0, 0.0]
    v, _ = losses.loss_scribble(m, make_batch([[3, 3, 0]], scrib=[1]), losses.LossWeights())
    assert v < 1e-5


def test_scribble_requires_two_foregrounds():
    m = tiny_model(n_foreground=1, seed=11)
    with pytest.raises(ConfigError):
        losses.loss_scribble(m, make_batch([[3, 3, 0]], scrib=[1]), losses.LossWeights())


# ---------------------------------------------------------------------------
# total loss


def test_total_all_disabled_is_zero():
    m = tiny_model(seed=12)
    w = losses.LossWeights(
        enable_color=False, enable_rigid=False, enable_flow=False, enable_sparsity=False,
        enable_mask=False, enable_global_rigid=False, enable_scribble=False,
    )
    total, breakdown, grads = losses.total_loss(m, make_batch([[3, 3, 0]]), w, 0, 100)
    assert total == 0.0 and all(v == 0.0 for v in breakdown.values()) and grads_all_zero(grads)


def test_total_breakdown_sums_to_total():
    m = tiny_model(seed=13)
    batch = make_batch([[2, 3, 0], [4, 2, 1]], gt_color=[[0.2, 0.4, 0.6]] * 2,
                       flow_pts=[[3.5, 3.0, 1.0], [4.0, 2.0, 0.0]], mask=[1.0, 0.0])
    total, breakdown, _ = losses.total_loss(m, batch, losses.LossWeights(), 5, 100)
    assert abs(total - sum(breakdown.values())) < 1e-9


def test_total_only_color_reproduces_loss_color():
    m = tiny_model(seed=14)
    batch = make_batch([[2, 3, 0]], gt_color=[[0.9, 0.1, 0.3]])
    w = losses.LossWeights(enable_rigid=False, enable_flow=False, enable_sparsity=False,
                           enable_mask=False, enable_global_rigid=False, enable_scribble=False)
    total, _, _ = losses.total_loss(m, batch, w, 0, 100)
    ref, _ = losses.loss_color(m, batch, losses.LossWeights())
    assert total == ref


def test_bootstrap_terms_gated_by_iteration():
    m = tiny_model(seed=15)
    batch = make_batch([[3, 3, 0]], mask=[1.0])
    w = losses.LossWeights()
    _, bd_early, _ = losses.total_loss(m, batch, w, 0, 10)
    _, bd_late, _ = losses.total_loss(m, batch, w, 10, 10)
    assert bd_early["mask_bce"] > 0 and bd_early["global_rigid"] > 0
    assert bd_late["mask_bce"] == 0.0 and bd_late["global_rigid"] == 0.0


def test_post_bootstrap_bitwise_independent_of_labels():
    m = tiny_model(n_foreground=2, seed=16)
    base = make_batch([[2, 2, 0], [4, 3, 1]], gt_color=[[0.5, 0.2, 0.7]] * 2,
                      flow_pts=[[2.5, 2.0, 1.0], [4.0, 3.0, 0.0]],
                      sparsity_uv=np.array([[0.5, -0.5], [0.6, -0.3]]))
    flipped = make_batch(base.pts, gt_color=base.gt_color, flow_pts=base.flow_pts,
                         mask=[1.0, 1.0], scrib=[1, 2], sparsity_uv=base.sparsity_uv)
    w = losses.LossWeights()
    t0, b0, g0 = losses.total_loss(m, base, w, 50, 10)
    t1, b1, g1 = losses.total_loss(m, flipped, w, 50, 10)
    assert t0 == t1 and b0 == b1
    for name in g0:
        for a, b in zip(g0[name], g1[name]):
            assert np.array_equal(a, b)


def test_all_terms_nonnegative():
    rng = np.random.default_rng(17)
    for seed in range(5):
        m = gradcheck._random_model(rng, (2, 8, 8), 1, hidden=16, depth=2, grid_atlas=False)
        batch = gradcheck._random_batch(rng, (2, 8, 8), 1, with_scribbles=False)
        _, breakdown, _ = losses.total_loss(m, batch, losses.LossWeights(), 0, 100)
        assert all(v >= 0.0 for v in breakdown.values())


def test_gradient_spot_check_fast():
    # the full 50-config suite runs in the acceptance tests; keep a quick
    # regression here covering one config of every term
    res = gradcheck.gradient_suite(seed=1, n_configs=1, params_per_config=6)
    assert all(v < 1e-6 for v in res.values()), res
