"""Atlas discretization, atlas-space editing, and frame-edit projection.

An AtlasImage is an RxR RGBA raster covering one layer's quadrant; its
affine transform maps quadrant corners to image corners exactly. Edits
are straight (non-premultiplied) RGBA rasters registered either to a
quadrant or to a source frame.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .data import VideoTensor, load_rgba, save_image
from .errors import ConfigError, UsageError


@dataclass
class AtlasImage:
    layer: int
    rgba: np.ndarray  # (R, R, 4) float32 in [0, 1]
    center: tuple
    half_extent: float

    @property
    def resolution(self):
        return self.rgba.shape[0]


@dataclass
class EditLayer:
    """RGBA edit registered to an atlas quadrant (kind='atlas') or to a
    source frame (kind='frame'); alpha is straight, not premultiplied."""

    rgba: np.ndarray
    kind: str  # atlas | frame
    layer: int = None
    frame: int = None
    center: tuple = None
    half_extent: float = None

    def __post_init__(self):
        if self.kind not in ("atlas", "frame"):
            raise ConfigError(f"unknown edit registration {self.kind!r}")
        if self.kind == "atlas" and (self.layer is None or self.center is None or self.half_extent is None):
            raise ConfigError("atlas-registered edits need layer, center and half_extent")
        if self.kind == "frame" and self.frame is None:
            raise ConfigError("frame-registered edits need a frame index")


def uv_to_texel(center, half_extent, resolution, uv):
    """Continuous texel coordinates; quadrant corners land on image corners."""
    uv = np.asarray(uv, dtype=np.float64)
    gx = (uv[..., 0] - (center[0] - half_extent)) / (2.0 * half_extent) * (resolution - 1)
    gy = (uv[..., 1] - (center[1] - half_extent)) / (2.0 * half_extent) * (resolution - 1)
    return gx, gy


def texel_center_uv(center, half_extent, resolution):
    """UV coordinates of every texel center, shape (R, R, 2)."""
    j = np.arange(resolution, dtype=np.float64)
    u = (center[0] - half_extent) + 2.0 * half_extent * j / (resolution - 1)
    v = (center[1] - half_extent) + 2.0 * half_extent * j / (resolution - 1)
    gu, gv = np.meshgrid(u, v, indexing="xy")
    return np.stack([gu, gv], axis=-1)


def _frame_points(dims, t):
    _, h, w = dims
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.stack([xs.ravel(), ys.ravel(), np.full(h * w, float(t))], axis=-1)


def _segment_reduce_median(ids, values, n_bins):
    """Median of `values` per id; bins with no entries get 0."""
    out = np.zeros(n_bins, dtype=np.float64)
    if len(ids) == 0:
        return out
    order = np.lexsort((values, ids))
    ids_sorted = ids[order]
    vals_sorted = values[order]
    boundaries = np.flatnonzero(np.diff(ids_sorted)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(ids_sorted)]])
    counts = ends - starts
    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    med = 0.5 * (vals_sorted[lo] + vals_sorted[hi])
    out[ids_sorted[starts]] = med
    return out


def _segment_reduce_max(ids, values, n_bins):
    out = np.zeros(n_bins, dtype=np.float64)
    if len(ids):
        np.maximum.at(out, ids, values)
    return out


def render_atlas(model, layer, resolution=1000, dims=None, chunk=65536) -> AtlasImage:
    """Discretize one layer: RGB from the atlas at texel centers, alpha by
    splatting every video pixel's layer weight onto its nearest mapped texel
    (median for foregrounds, max of the background weight for layer 0);
    texels that receive no splats get alpha 0."""
    if not 0 <= layer < model.n_layers:
        raise ConfigError(f"layer {layer} out of range")
    dims = model.dims if dims is None else dims
    q = model.layout[layer]
    uv_centers = texel_center_uv(q.center, q.half_extent, resolution).reshape(-1, 2)
    rgb = np.empty((resolution * resolution, 3), dtype=np.float32)
    for i in range(0, len(uv_centers), chunk):
        rgb[i : i + chunk] = model_mod.atlas_color(model, uv_centers[i : i + chunk].astype(model.dtype))
    rgb = rgb.reshape(resolution, resolution, 3)

    t_len, h, w = dims
    all_ids = []
    all_vals = []
    for t in range(t_len):
        pts = _frame_points(dims, t)
        for i in range(0, len(pts), chunk):
            sl = pts[i : i + chunk]
            weights = model_mod.layer_weights(model, sl)
            uv = model_mod.map_point(model, layer, sl)
            gx, gy = uv_to_texel(q.center, q.half_extent, resolution, uv)
            ix = np.clip(np.rint(gx), 0, resolution - 1).astype(np.int64)
            iy = np.clip(np.rint(gy), 0, resolution - 1).astype(np.int64)
            all_ids.append(iy * resolution + ix)
            all_vals.append(weights[:, layer].astype(np.float64))
    ids = np.concatenate(all_ids)
    vals = np.concatenate(all_vals)
    if layer == 0:
        alpha = _segment_reduce_max(ids, vals, resolution * resolution)
    else:
        alpha = _segment_reduce_median(ids, vals, resolution * resolution)
    rgba = np.concatenate([rgb, alpha.reshape(resolution, resolution, 1).astype(np.float32)], axis=-1)
    return AtlasImage(layer=layer, rgba=rgba, center=tuple(q.center), half_extent=q.half_extent)


def reconstruct_video(model, dims=None, chunk=65536) -> VideoTensor:
    """Dense alpha-blended reconstruction at every pixel."""
    dims = model.dims if dims is None else dims
    t_len, h, w = dims
    frames = np.empty((t_len, h, w, 3), dtype=np.float32)
    for t in range(t_len):
        pts = _frame_points(dims, t)
        out = np.empty((len(pts), 3), dtype=np.float32)
        for i in range(0, len(pts), chunk):
            out[i : i + chunk] = model_mod.reconstruct_pixel(model, pts[i : i + chunk])
        frames[t] = out.reshape(h, w, 3)
    return VideoTensor(frames)


def _sample_edit(edit: EditLayer, uv):
    """Bilinear RGBA lookup of an atlas-registered edit at mapped UVs."""
    res = edit.rgba.shape[0]
    gx, gy = uv_to_texel(edit.center, edit.half_extent, res, uv)
    gx = np.clip(gx, 0.0, res - 1.0)
    gy = np.clip(gy, 0.0, res - 1.0)
    x0 = np.minimum(gx.astype(np.int64), res - 2)
    y0 = np.minimum(gy.astype(np.int64), res - 2)
    fx = (gx - x0)[..., None]
    fy = (gy - y0)[..., None]
    t = edit.rgba
    return (
        (1 - fx) * (1 - fy) * t[y0, x0]
        + fx * (1 - fy) * t[y0, x0 + 1]
        + (1 - fx) * fy * t[y0 + 1, x0]
        + fx * fy * t[y0 + 1, x0 + 1]
    )


def apply_edit(model, video: VideoTensor, edits) -> VideoTensor:
    """Map atlas-space edits back onto the video.

    Per pixel: sample each edited layer's RGBA at that layer's mapped UV,
    blend the edit over the ORIGINAL frame color, then composite the layer
    colors with the model's opacities. Pixels hitting no edit support are
    returned bit-exactly unchanged.
    """
    by_layer = {}
    for e in edits:
        if e.kind != "atlas":
            raise UsageError("apply_edit needs atlas-registered edits; project frame edits first")
        if e.layer in by_layer:
            raise UsageError(f"two edits registered to layer {e.layer}")
        if not 0 <= e.layer < model.n_layers:
            raise UsageError(f"edit layer {e.layer} out of range")
        by_layer[e.layer] = e

    out = video.frames.copy()
    if not by_layer:
        return VideoTensor(out)
    t_len, h, w = video.dims
    for t in range(t_len):
        pts = _frame_points(video.dims, t)
        base = video.frames[t].reshape(-1, 3).astype(np.float64)
        sampled = {}
        touched = np.zeros(len(pts), dtype=bool)
        for layer, e in by_layer.items():
            uv = model_mod.map_point(model, layer, pts)
            rgba = _sample_edit(e, uv)
            sampled[layer] = rgba
            touched |= rgba[..., 3] > 0.0
        if not np.any(touched):
            continue
        idx = np.flatnonzero(touched)
        weights = model_mod.layer_weights(model, pts[idx]).astype(np.float64)
        acc = np.zeros((len(idx), 3))
        for layer in range(model.n_layers):
            if layer in sampled:
                rgba = sampled[layer][idx]
                a = rgba[..., 3:4]
                tinted = (1.0 - a) * base[idx] + a * rgba[..., :3]
            else:
                tinted = base[idx]
            acc += weights[:, layer : layer + 1] * tinted
        flat = out[t].reshape(-1, 3)
        flat[idx] = np.clip(acc, 0.0, 1.0).astype(np.float32)
    return VideoTensor(out)


def project_frame_edit(model, frame_index, edit: EditLayer, resolution=1000):
    """Forward-splat a frame-space edit into per-layer atlas edits.

    Each edited pixel goes to the layer whose opacity there exceeds 0.5
    (winner take all); its RGBA lands on the 4 bilinear texels of its UV.
    Overlaps average color with the bilinear weights and keep the maximum
    alpha. Returns {layer: EditLayer} with entries only for layers that
    received any splat.
    """
    t_len, h, w = model.dims
    if not 0 <= frame_index < t_len:
        raise UsageError(f"frame index {frame_index} out of range (T={t_len})")
    if edit.kind != "frame":
        raise UsageError("project_frame_edit needs a frame-registered edit")
    if edit.rgba.shape[:2] != (h, w):
        raise ConfigError(f"edit raster {edit.rgba.shape[:2]} does not match video {(h, w)}")

    ys, xs = np.nonzero(edit.rgba[..., 3] > 0.0)
    if len(xs) == 0:
        return {}
    pts = np.stack([xs, ys, np.full(len(xs), float(frame_index))], axis=-1).astype(np.float64)
    weights = model_mod.layer_weights(model, pts)
    assign = np.argmax(weights, axis=-1)
    confident = weights[np.arange(len(xs)), assign] > 0.5

    outputs = {}
    for layer in range(model.n_layers):
        sel = confident & (assign == layer)
        if not np.any(sel):
            continue
        q = model.layout[layer]
        uv = model_mod.map_point(model, layer, pts[sel])
        gx, gy = uv_to_texel(q.center, q.half_extent, resolution, uv)
        gx = np.clip(gx, 0.0, resolution - 1.0)
        gy = np.clip(gy, 0.0, resolution - 1.0)
        x0 = np.minimum(gx.astype(np.int64), resolution - 2)
        y0 = np.minimum(gy.astype(np.int64), resolution - 2)
        fx, fy = gx - x0, gy - y0
        rgba = edit.rgba[ys[sel], xs[sel]].astype(np.float64)
        wsum = np.zeros((resolution, resolution))
        wcol = np.zeros((resolution, resolution, 3))
        amax = np.zeros((resolution, resolution))
        for dx, dy, wgt in (
            (0, 0, (1 - fx) * (1 - fy)),
            (1, 0, fx * (1 - fy)),
            (0, 1, (1 - fx) * fy),
            (1, 1, fx * fy),
        ):
            np.add.at(wsum, (y0 + dy, x0 + dx), wgt)
            np.add.at(wcol, (y0 + dy, x0 + dx), wgt[:, None] * rgba[:, :3])
            np.maximum.at(amax, (y0 + dy, x0 + dx), np.where(wgt > 0, rgba[:, 3], 0.0))
        color = np.where(wsum[..., None] > 0, wcol / np.maximum(wsum[..., None], 1e-300), 0.0)
        out = np.concatenate([color, amax[..., None]], axis=-1).astype(np.float32)
        outputs[layer] = EditLayer(
            rgba=out, kind="atlas", layer=layer, center=tuple(q.center), half_extent=q.half_extent
        )
    return outputs


# ---------------------------------------------------------------------------
# raster + sidecar IO


def registration_path(image_path):
    return str(image_path) + ".reg"


def save_edit(edit: EditLayer, image_path):
    save_image(edit.rgba, image_path)
    with open(registration_path(image_path), "w") as f:
        f.write(f"kind = {edit.kind}\n")
        if edit.kind == "atlas":
            f.write(f"layer = {edit.layer}\n")
            f.write(f"center_u = {edit.center[0]!r}\n")
            f.write(f"center_v = {edit.center[1]!r}\n")
            f.write(f"half_extent = {edit.half_extent!r}\n")
        else:
            f.write(f"frame = {edit.frame}\n")
        f.write(f"resolution = {edit.rgba.shape[0]}\n")


def load_edit(image_path) -> EditLayer:
    rgba = load_rgba(image_path)
    reg = registration_path(image_path)
    if not os.path.exists(reg):
        raise UsageError(f"edit {image_path} has no registration sidecar ({reg})")
    kv = {}
    with open(reg) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            kv[key.strip()] = value.strip()
    kind = kv.get("kind", "atlas")
    if kind == "atlas":
        return EditLayer(
            rgba=rgba,
            kind="atlas",
            layer=int(kv["layer"]),
            center=(float(kv["center_u"]), float(kv["center_v"])),
            half_extent=float(kv["half_extent"]),
        )
    return EditLayer(rgba=rgba, kind="frame", frame=int(kv["frame"]))


def save_atlas_image(atlas: AtlasImage, image_path):
    save_image(atlas.rgba, image_path)
    with open(registration_path(image_path), "w") as f:
        f.write("kind = atlas\n")
        f.write(f"layer = {atlas.layer}\n")
        f.write(f"center_u = {atlas.center[0]!r}\n")
        f.write(f"center_v = {atlas.center[1]!r}\n")
        f.write(f"half_extent = {atlas.half_extent!r}\n")
        f.write(f"resolution = {atlas.resolution}\n")
