"""Acceptance criteria, one test per criterion, one printed line each.

The end-to-end criteria train real (desk-scale) models; the whole module
takes roughly 25 minutes on one CPU core. All runs are seeded; thresholds
were pilot-calibrated once and are frozen here.
"""

import math
import sys
import time

import numpy as np
import pytest

from vidatlas import atlasops, data, evalprop, gradcheck, losses, model as model_mod, nnet, train

SQRT8 = 2.0 * math.sqrt(2.0)

ACCEPT_SPEC = data.SynthSpec(
    seed=11, frames=24, height=64, width=96,
    bg_velocity=(-0.6, 0.3), sprite_velocity=(1.6, 0.6),
    sprite_size=(34, 24), sprite_start=(10.0, 14.0), sprite_shape="box",
)

# pilot-calibrated desk-scale settings, frozen: lr 3e-4 keeps the 28k
# post-bootstrap iterations stable (1e-3 eventually orphans the foreground
# layer and the rigidity energy blows up); the bootstrap mask weight 500
# anchors the decomposition hard enough that it survives bootstrap release
ACCEPT_CFG = train.TrainConfig(
    batch_size=512, total_iters=30000, bootstrap_iters=2000, identity_pretrain_iters=100,
    learning_rate=3e-4, hidden=64, map_bg_layers=4, map_fg_layers=4, alpha_layers=4,
    atlas_layers=4, atlas_skips="", log_interval=5000, checkpoint_interval=0, dtype="float32",
    weights=losses.LossWeights(mask_bootstrap=500.0),
)

# occlusion-bearing, pilot-calibrated: a static bar hides the sprite
# mid-crossing (splitting its visible support invites duplicate foreground
# content once sparsity is removed), and a textureless patch rides the
# background (appearance pins no correspondence there, so only the flow
# term tracks it — removing flow lets the mapping go slack)
ABLATION_SPEC = data.SynthSpec(
    seed=21, frames=16, height=56, width=96,
    bg_velocity=(-1.0, 0.4), sprite_velocity=(3.0, 0.1),
    sprite_size=(20, 14), sprite_start=(6.0, 26.0), sprite_shape="box",
    occluder=(44, 6), flat_patch=(66, 2, 24, 16),
)

ABLATION_CFG = train.TrainConfig(
    batch_size=384, total_iters=8000, bootstrap_iters=1000, identity_pretrain_iters=100,
    learning_rate=1e-3, hidden=64, map_bg_layers=4, map_fg_layers=4, alpha_layers=4,
    atlas_layers=4, atlas_skips="", log_interval=5000, checkpoint_interval=0, dtype="float32",
    weights=losses.LossWeights(mask_bootstrap=500.0),
)


def _report(criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    assert ok, line


@pytest.fixture(scope="module")
def synthetic():
    return data.synth_dataset(ACCEPT_SPEC)


@pytest.fixture(scope="module")
def trained(synthetic):
    t0 = time.time()
    model, states, _ = train.fit(synthetic.video, synthetic.flow, synthetic.masks, None, ACCEPT_CFG)
    return model, states, time.time() - t0


@pytest.fixture(scope="module")
def ablation_models():
    out = {}
    for name, overrides in (
        ("full", {}),
        ("no_sparsity", {"enable_sparsity": False}),
        ("no_flow", {"enable_flow": False}),
    ):
        d = data.synth_dataset(ABLATION_SPEC)
        weights = losses.LossWeights(mask_bootstrap=500.0, **overrides)
        cfg = train.TrainConfig(**{**ABLATION_CFG.__dict__, "weights": weights})
        model, _, _ = train.fit(d.video, d.flow, d.masks, None, cfg)
        out[name] = (model, d)
    return out


# ---------------------------------------------------------------------------
# 1. gradient suite


def test_criterion1_gradient_suite():
    t0 = time.time()
    results = gradcheck.gradient_suite(seed=0, n_configs=50, params_per_config=12)
    elapsed = time.time() - t0
    worst = max(results.values())
    ok = worst < 1e-6 and elapsed < 120.0
    _report(
        "1 gradient suite",
        ok,
        f"max rel err {worst:.2e} over {len(results)} terms x 50 configs, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 2. rigidity optimum


def test_criterion2_rigidity_optimum():
    t0 = time.time()
    rng = np.random.default_rng(0)
    j = rng.normal(size=(1000, 2, 2))
    e = losses.rigidity_energy(j)
    bound_ok = bool(np.all(e >= SQRT8 - 1e-9))
    th = rng.uniform(0, 2 * np.pi, size=1000)
    rot = np.stack(
        [np.stack([np.cos(th), -np.sin(th)], -1), np.stack([np.sin(th), np.cos(th)], -1)], axis=-2
    )
    rot[::2, :, 0] *= -1.0
    eq_err = float(np.max(np.abs(losses.rigidity_energy(rot) - SQRT8)))
    elapsed = time.time() - t0
    ok = bound_ok and eq_err < 1e-6 and elapsed < 1.0
    _report(
        "2 rigidity optimum",
        ok,
        f"min {float(e.min()):.9f} >= 2*sqrt(2)-1e-9, orthogonal dev {eq_err:.2e}, {elapsed * 1000:.0f}ms",
    )


# ---------------------------------------------------------------------------
# 3. end-to-end synthetic


def test_criterion3_end_to_end(synthetic, trained):
    model, _, train_seconds = trained

    recon = atlasops.reconstruct_video(model)
    psnr_db = evalprop.psnr(synthetic.video, recon)

    iou = evalprop.alpha_iou(model, synthetic.gt_alpha)[0]

    # dot painted on the sprite's atlas footprint must reproject onto the
    # sprite-anchored location in every frame
    anchor_local = np.array([17.0, 12.0])
    p0 = ACCEPT_SPEC.sprite_start + anchor_local
    uv = model_mod.map_point(model, 1, np.array([[p0[0], p0[1], 0.0]]))[0]
    res = 256
    q = model.layout[1]
    gx, gy = atlasops.uv_to_texel(q.center, q.half_extent, res, uv[None])
    cx, cy = int(round(gx[0])), int(round(gy[0]))
    rgba = np.zeros((res, res, 4), dtype=np.float32)
    rgba[cy - 2 : cy + 3, cx - 2 : cx + 3] = [0.0, 1.0, 0.0, 1.0]
    edit = atlasops.EditLayer(rgba=rgba, kind="atlas", layer=1, center=q.center, half_extent=q.half_extent)
    edited = atlasops.apply_edit(model, synthetic.video, [edit])
    cents = evalprop.difference_centroids(edited, synthetic.video)
    gt_cents = synthetic.sprite_pos + anchor_local
    dot_err = float(np.nanmean(np.linalg.norm(cents - gt_cents, axis=1)))
    no_miss = not np.isnan(cents).any()

    ok = psnr_db >= 30.0 and iou >= 0.85 and dot_err <= 1.5 and no_miss and train_seconds <= 1800.0
    _report(
        "3 end-to-end synthetic",
        ok,
        f"PSNR {psnr_db:.2f} dB (>=30), IoU {iou:.3f} (>=0.85), "
        f"dot drift {dot_err:.2f} px (<=1.5), train {train_seconds / 60:.1f} min (<=30)",
    )


def test_criterion3_uv_consistency(synthetic, trained):
    # converged mappings send ground-truth correspondences to nearby UVs
    model, _, _ = trained
    mean_dist = evalprop.gt_uv_consistency(model, synthetic)
    ok = mean_dist < 1e-2
    _report("3b mapped-UV correspondence", ok, f"mean UV distance {mean_dist:.5f} (<1e-2)")


def test_criterion3_frame_edit_round_trip(synthetic, trained):
    # frame edit -> project to atlas -> apply reproduces the edited pixels
    model, _, _ = trained
    t = 12  # mid-video, where opacities are confident
    rgba = np.zeros((ACCEPT_SPEC.height, ACCEPT_SPEC.width, 4), dtype=np.float32)
    spot = synthetic.sprite_pos[t] + np.array([14.0, 8.0])
    y0, x0 = int(spot[1]), int(spot[0])
    rgba[y0 : y0 + 6, x0 : x0 + 6] = [0.9, 0.4, 0.1, 1.0]
    projected = atlasops.project_frame_edit(
        model, t, atlasops.EditLayer(rgba=rgba, kind="frame", frame=t), resolution=1000
    )
    out = atlasops.apply_edit(model, synthetic.video, list(projected.values()))
    sel = rgba[..., 3] > 0
    err = float(np.abs(out.frames[t][sel] - rgba[sel][:, :3]).max())
    ok = err <= 2.0 / 255.0
    _report("3c frame-edit round trip", ok, f"max per-channel error {err:.5f} (<= 2/255)")


# ---------------------------------------------------------------------------
# 4. ablation trends


def _occupied_foreground_area(model, dims, resolution=200):
    """Texels of the rendered foreground atlas that any video pixel maps to
    and that carry non-black content. The sparsity term blackens exactly the
    reached-but-unused regions, so its removal inflates this area."""
    img = atlasops.render_atlas(model, 1, resolution=resolution)
    t_len, h, w = dims
    q = model.layout[1]
    ids = []
    for t in range(t_len):
        pts = atlasops._frame_points(dims, t)
        uv = model_mod.map_point(model, 1, pts)
        gx, gy = atlasops.uv_to_texel(q.center, q.half_extent, resolution, uv)
        ids.append(
            np.clip(np.rint(gy), 0, resolution - 1).astype(int) * resolution
            + np.clip(np.rint(gx), 0, resolution - 1).astype(int)
        )
    counts = np.bincount(np.concatenate(ids), minlength=resolution * resolution)
    reached = counts.reshape(resolution, resolution) > 0
    bright = img.rgba[..., :3].mean(-1) > 0.2
    return int((reached & bright).sum())


def test_criterion4_sparsity_ablation(ablation_models):
    full_model, d_full = ablation_models["full"]
    ns_model, d_ns = ablation_models["no_sparsity"]
    area_full = _occupied_foreground_area(full_model, d_full.video.dims)
    area_ns = _occupied_foreground_area(ns_model, d_ns.video.dims)
    ratio = area_ns / max(area_full, 1)
    ok = ratio >= 1.3
    _report(
        "4a sparsity ablation",
        ok,
        f"foreground-atlas occupied area x{ratio:.2f} without sparsity (>=1.3; {area_full} -> {area_ns} texels)",
    )


def test_criterion4_flow_ablation(ablation_models):
    full_model, d_full = ablation_models["full"]
    nf_model, d_nf = ablation_models["no_flow"]
    uv_full = evalprop.gt_uv_consistency(full_model, d_full)
    uv_nf = evalprop.gt_uv_consistency(nf_model, d_nf)
    # pilot measured ~7.7x; frozen with margin at 2x
    ok = uv_nf > 2.0 * uv_full
    _report(
        "4b flow ablation",
        ok,
        f"mean UV correspondence distance {uv_full:.5f} -> {uv_nf:.5f} without flow loss (>2x increase)",
    )


# ---------------------------------------------------------------------------
# 5. exactness properties


def test_criterion5_exactness(tmp_path, synthetic, trained):
    model, _, _ = trained
    checks = {}

    # transparent-edit identity, bit-exact
    q = model.layout[1]
    empty = atlasops.EditLayer(rgba=np.zeros((32, 32, 4), dtype=np.float32), kind="atlas",
                               layer=1, center=q.center, half_extent=q.half_extent)
    out = atlasops.apply_edit(model, synthetic.video, [empty])
    checks["transparent-edit identity"] = np.array_equal(out.frames, synthetic.video.frames)

    # zero-flow baseline identity, bit-exact
    z = np.zeros((3, 8, 10, 2), dtype=np.float32)
    flow = data.FlowField.from_pair(z, z.copy())
    rgba = np.random.default_rng(0).uniform(size=(8, 10, 4)).astype(np.float32)
    frames = evalprop.flow_baseline_propagate(rgba, flow)
    checks["zero-flow baseline identity"] = all(np.array_equal(f, rgba) for f in frames)

    # .flo round trip, bit-exact
    field = np.random.default_rng(1).normal(size=(7, 5, 2)).astype(np.float32)
    path = tmp_path / "rt.flo"
    data.write_flo(path, field)
    checks[".flo round trip"] = np.array_equal(data.read_flo(path), field)

    # checkpoint save/load/resume determinism, bit-exact
    cfg = train.TrainConfig(
        batch_size=64, total_iters=8, bootstrap_iters=4, identity_pretrain_iters=4,
        hidden=16, map_bg_layers=2, map_fg_layers=2, alpha_layers=2, atlas_layers=2,
        atlas_skips="1", log_interval=100, checkpoint_interval=4,
    )
    full_dir = tmp_path / "full"
    m_full, _, _ = train.fit(synthetic.video, synthetic.flow, synthetic.masks, None, cfg, out_dir=full_dir)
    m_res, _, _ = train.fit(synthetic.video, synthetic.flow, synthetic.masks, None, cfg,
                            resume=full_dir / "checkpoint_0000004.lnat")
    same = all(
        np.array_equal(a, b)
        for (_, aa), (_, bb) in zip(m_full.param_groups(), m_res.param_groups())
        for a, b in zip(aa, bb)
    )
    p1 = tmp_path / "c1.lnat"
    p2 = tmp_path / "c2.lnat"
    state = np.random.default_rng(0).bit_generator.state
    train.save_checkpoint(p1, m_full, None, 8, state, cfg)
    train.save_checkpoint(p2, train.load_checkpoint(p1).model, None, 8, state, cfg)
    checks["checkpoint resume + rewrite"] = same and p1.read_bytes() == p2.read_bytes()

    # softmax alphas sum to one
    m3 = model_mod.build_model((2, 8, 8), n_foreground=2, hidden=16, map_bg_layers=2,
                               map_fg_layers=2, alpha_layers=2, atlas_layers=2, atlas_skips=(),
                               rng=np.random.default_rng(3), dtype=np.float64)
    for a in m3.alpha_params.arrays():
        a += np.random.default_rng(4).normal(size=a.shape)
    pts = np.random.default_rng(5).uniform(0, 7, size=(200, 3))
    w = model_mod.layer_weights(m3, pts)
    checks["softmax sums to 1"] = bool(np.max(np.abs(w.sum(-1) - 1.0)) < 1e-6)

    ok = all(checks.values())
    _report("5 exactness properties", ok, "; ".join(f"{k}: {'ok' if v else 'BROKEN'}" for k, v in checks.items()))


# ---------------------------------------------------------------------------
# 6. flow baseline correctness and drift comparison


def test_criterion6_flow_baseline(synthetic, trained):
    model, _, _ = trained
    spec = ACCEPT_SPEC
    h, w, t_len = spec.height, spec.width, spec.frames

    # exact integer-flow shift
    fwd = np.zeros((4, 8, 16, 2), dtype=np.float32)
    fwd[..., 0] = 1.0
    bwd = -fwd
    shift_flow = data.FlowField.from_pair(fwd, bwd)
    dot = np.zeros((8, 16, 4), dtype=np.float32)
    dot[3, 2] = [1, 1, 0, 1]
    frames = evalprop.flow_baseline_propagate(dot, shift_flow)
    shift_ok = all(
        np.array_equal(f[..., 3], np.roll(dot[..., 3], k, axis=1) * (np.arange(16) >= k))
        for k, f in enumerate(frames)
    )

    # behind disocclusions the baseline's drift strictly exceeds the atlas
    # pipeline's: a dot on the background that the sprite passes over
    dot0 = np.array([50.0, 26.0])
    rgba = np.zeros((h, w, 4), dtype=np.float32)
    rgba[int(dot0[1]) - 2 : int(dot0[1]) + 3, int(dot0[0]) - 2 : int(dot0[0]) + 3] = [1, 0, 1, 1]
    base_frames = evalprop.flow_baseline_propagate(rgba, synthetic.flow)
    base_alpha = np.stack([f[..., 3] for f in base_frames])

    projected = atlasops.project_frame_edit(model, 0, atlasops.EditLayer(rgba=rgba, kind="frame", frame=0),
                                            resolution=512)
    edited = atlasops.apply_edit(model, synthetic.video, list(projected.values()))
    atlas_alpha = (np.abs(edited.frames.astype(np.float64) - synthetic.video.frames).sum(-1) > 0.08).astype(float)

    gt = np.zeros((t_len, h, w))
    for t in range(t_len):
        c = dot0 + np.asarray(spec.bg_velocity) * t
        x0, y0 = int(round(c[0])) - 2, int(round(c[1])) - 2
        gt[t, max(0, y0) : y0 + 5, max(0, x0) : x0 + 5] = 1.0
        gt[t][synthetic.gt_alpha[t] > 0.5] = 0.0

    drift_base = evalprop.support_drift(base_alpha, gt)
    drift_atlas = evalprop.support_drift(atlas_alpha, gt)
    drift_ok = float(drift_base.mean()) > float(drift_atlas.mean())

    ok = shift_ok and drift_ok
    _report(
        "6 flow baseline",
        ok,
        f"integer shift exact: {shift_ok}; mean drift baseline {drift_base.mean():.2f} px "
        f"> atlas {drift_atlas.mean():.2f} px: {drift_ok}",
    )
