"""Metrics (PSNR, alpha IoU, edit drift) and the flow-chaining propagation
baseline used for comparison against atlas-based edit propagation."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import model as model_mod
from .data import VideoTensor, bilinear_sample
from .errors import ConfigError


@dataclass
class MetricReport:
    psnr_db: float = None
    alpha_iou: list = field(default_factory=list)
    edit_drift_mean: float = None
    edit_drift_max: float = None
    loss_breakdown: dict = field(default_factory=dict)

    def to_text(self):
        lines = []
        if self.psnr_db is not None:
            lines.append(f"psnr_db = {'inf' if math.isinf(self.psnr_db) else f'{self.psnr_db:.4f}'}")
        for i, v in enumerate(self.alpha_iou):
            lines.append(f"alpha_iou_layer{i + 1} = {v:.4f}")
        if self.edit_drift_mean is not None:
            lines.append(f"edit_drift_mean_px = {self.edit_drift_mean:.4f}")
        if self.edit_drift_max is not None:
            lines.append(f"edit_drift_max_px = {self.edit_drift_max:.4f}")
        for key, value in self.loss_breakdown.items():
            lines.append(f"loss_{key} = {value:.6g}")
        return "\n".join(lines) + "\n"


def psnr(a: VideoTensor, b: VideoTensor) -> float:
    """10 log10(1 / MSE) with peak 1.0, over all pixels and channels jointly;
    exact equality reports infinity."""
    if a.dims != b.dims:
        raise ConfigError(f"psnr: dimension mismatch {a.dims} vs {b.dims}")
    mse = float(np.mean((a.frames.astype(np.float64) - b.frames.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def alpha_iou(model, gt_alpha, threshold=0.5, chunk=65536):
    """IoU of thresholded model opacity against ground truth, per foreground
    layer. gt_alpha is (T, H, W) for one foreground or (n, T, H, W)."""
    gt = np.asarray(gt_alpha)
    if gt.ndim == 3:
        gt = gt[None]
    t_len, h, w = model.dims
    if gt.shape[1:] != (t_len, h, w):
        raise ConfigError(f"gt alpha shape {gt.shape} does not match video {(t_len, h, w)}")
    n_fg = model.n_foreground
    if gt.shape[0] != n_fg:
        raise ConfigError(f"{gt.shape[0]} ground-truth layers for {n_fg} foregrounds")
    pred = np.empty((t_len * h * w, n_fg), dtype=np.float64)
    row = 0
    for t in range(t_len):
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        pts = np.stack([xs.ravel(), ys.ravel(), np.full(h * w, float(t))], axis=-1)
        for i in range(0, len(pts), chunk):
            wgt = model_mod.layer_weights(model, pts[i : i + chunk])
            pred[row + i : row + i + len(wgt)] = wgt[:, 1:]
        row += len(pts)
    out = []
    for li in range(n_fg):
        p = pred[:, li] >= threshold
        g = gt[li].ravel() >= threshold
        union = np.logical_or(p, g).sum()
        inter = np.logical_and(p, g).sum()
        out.append(float(inter) / float(union) if union else 1.0)
    return out


def flow_baseline_propagate(edit_rgba, flow):
    """Propagate a frame-0 RGBA edit to every frame by composing backward
    flows (bilinear resampling frame to frame). Pixels whose chain fails the
    forward-backward consistency check anywhere get their alpha zeroed.
    Returns a list of (H, W, 4) arrays, frame 0 first (returned as given).
    """
    edit_rgba = np.asarray(edit_rgba, dtype=np.float32)
    n_steps = flow.backward.shape[0]
    h, w = flow.backward.shape[1:3]
    if edit_rgba.shape[:2] != (h, w):
        raise ConfigError(f"edit raster {edit_rgba.shape[:2]} does not match flow {(h, w)}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    pos = np.stack([xs, ys], axis=-1)  # position in frame 0 of each pixel
    valid = np.ones((h, w), dtype=np.float64)
    out = [edit_rgba.copy()]
    for t in range(1, n_steps + 1):
        b = flow.backward[t - 1].astype(np.float64)
        prev_x = xs + b[..., 0]
        prev_y = ys + b[..., 1]
        inside = (prev_x >= 0) & (prev_x <= w - 1) & (prev_y >= 0) & (prev_y <= h - 1)
        pos = bilinear_sample(pos, prev_x, prev_y)
        chain_ok = bilinear_sample(valid[..., None], prev_x, prev_y)[..., 0] >= 1.0
        valid = (flow.valid_backward[t - 1] > 0) & inside & chain_ok
        rgba = bilinear_sample(edit_rgba.astype(np.float64), pos[..., 0], pos[..., 1])
        src_inside = (
            (pos[..., 0] >= 0) & (pos[..., 0] <= w - 1) & (pos[..., 1] >= 0) & (pos[..., 1] <= h - 1)
        )
        rgba[..., 3] = np.where(valid & src_inside, rgba[..., 3], 0.0)
        out.append(rgba.astype(np.float32))
        valid = valid.astype(np.float64)
    return out


def support_drift(pred_alpha, gt_alpha, threshold=0.25):
    """Symmetric chamfer distance (pixels) between edit supports, per frame.

    Empty-vs-empty frames score 0; a missing side scores the frame diagonal
    (an edit that should be visible but vanished, or vice versa).
    """
    pred_alpha = np.asarray(pred_alpha)
    gt_alpha = np.asarray(gt_alpha)
    if pred_alpha.shape != gt_alpha.shape:
        raise ConfigError("support_drift: shape mismatch")
    t_len, h, w = pred_alpha.shape
    sentinel = math.hypot(h, w)
    drifts = []
    for t in range(t_len):
        p = pred_alpha[t] >= threshold
        g = gt_alpha[t] >= threshold
        if not p.any() and not g.any():
            drifts.append(0.0)
            continue
        if not p.any() or not g.any():
            drifts.append(sentinel)
            continue
        dist_to_p = ndimage.distance_transform_edt(~p)
        dist_to_g = ndimage.distance_transform_edt(~g)
        drifts.append(0.5 * (float(dist_to_p[g].mean()) + float(dist_to_g[p].mean())))
    return np.asarray(drifts)


def gt_uv_consistency(model, synth, n_samples=4000, seed=0, span=1):
    """Mean UV distance between ground-truth corresponding pixels `span`
    frames apart in a synthetic scene, each measured in its own layer.

    Correspondences that change layer at either end (occlusion) are
    skipped. Long spans measure whether content revisited after occlusion
    lands at the same atlas point, which is what the flow-consistency loss
    provides; span 1 is largely implied by mapping smoothness alone."""
    spec = synth.spec
    rng = np.random.default_rng(seed)
    pts = np.stack(
        [
            rng.integers(1, spec.width - 2, n_samples),
            rng.integers(1, spec.height - 2, n_samples),
            rng.integers(0, spec.frames - span, n_samples),
        ],
        axis=-1,
    ).astype(np.float64)
    t = pts[:, 2].astype(int)
    inside = synth.gt_alpha[t, pts[:, 1].astype(int), pts[:, 0].astype(int)] > 0.5
    vel = np.where(inside[:, None], np.asarray(spec.sprite_velocity), np.asarray(spec.bg_velocity))
    nxt = pts + np.concatenate([vel * span, np.full((len(pts), 1), float(span))], axis=1)
    ok = (
        (nxt[:, 0] >= 0) & (nxt[:, 0] <= spec.width - 1)
        & (nxt[:, 1] >= 0) & (nxt[:, 1] <= spec.height - 1)
    )
    nt = nxt[:, 2].astype(int)
    inside_next = (
        synth.gt_alpha[
            nt,
            np.clip(nxt[:, 1], 0, spec.height - 1).astype(int),
            np.clip(nxt[:, 0], 0, spec.width - 1).astype(int),
        ]
        > 0.5
    )
    same = ok & (inside == inside_next)
    dists = []
    for layer, sel in ((1, same & inside), (0, same & ~inside)):
        if not np.any(sel):
            continue
        uv_a = model_mod.map_point(model, layer, pts[sel])
        uv_b = model_mod.map_point(model, layer, nxt[sel])
        dists.append(np.linalg.norm(uv_a - uv_b, axis=-1))
    return float(np.concatenate(dists).mean())


def difference_centroids(edited: VideoTensor, original: VideoTensor, min_mass=1e-6):
    """Per-frame centroid (x, y) of |edited - original| mass; NaN when a
    frame shows no difference."""
    if edited.dims != original.dims:
        raise ConfigError("difference_centroids: dimension mismatch")
    t_len, h, w = original.dims
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cents = np.full((t_len, 2), np.nan)
    for t in range(t_len):
        mass = np.abs(edited.frames[t].astype(np.float64) - original.frames[t].astype(np.float64)).sum(-1)
        total = mass.sum()
        if total < min_mass:
            continue
        cents[t] = (float((xs * mass).sum() / total), float((ys * mass).sum() / total))
    return cents
