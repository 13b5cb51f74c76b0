"""Ingestion (frames, flow, masks, scribbles) and the synthetic oracle dataset.

Frames live in a directory of lexicographically ordered raster images.
Flow uses the Middlebury binary layout: float32 magic 202021.25, then
int32 width and height, then row-major interleaved float32 (u, v). The
synthetic generator composites a textured sprite over a translating
textured background and emits the exact scene motion as ground truth.
"""

import os
from dataclasses import dataclass, field, asdict

import numpy as np
from PIL import Image

from .errors import ConfigError, FormatError, IngestionError

FLO_MAGIC = np.float32(202021.25)

IMAGE_EXTENSIONS = (".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".ppm")


@dataclass
class VideoTensor:
    """T frames of HxW RGB with channel values in [0, 1]."""

    frames: np.ndarray  # (T, H, W, 3) float32

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise IngestionError(f"expected (T, H, W, 3) frames, got {self.frames.shape}")
        if self.frames.shape[0] < 2:
            raise IngestionError("a video needs at least two frames")

    @property
    def dims(self):
        t, h, w, _ = self.frames.shape
        return (t, h, w)

    @property
    def T(self):
        return self.frames.shape[0]

    @property
    def H(self):
        return self.frames.shape[1]

    @property
    def W(self):
        return self.frames.shape[2]


@dataclass
class FlowField:
    """Forward flow t -> t+1 and backward flow t+1 -> t for t = 0..T-2,
    plus the forward-backward validity masks."""

    forward: np.ndarray  # (T-1, H, W, 2)
    backward: np.ndarray  # (T-1, H, W, 2)
    valid_forward: np.ndarray  # (T-1, H, W) in {0, 1}
    valid_backward: np.ndarray

    @classmethod
    def from_pair(cls, forward, backward, threshold=1.0):
        forward = np.asarray(forward, dtype=np.float32)
        backward = np.asarray(backward, dtype=np.float32)
        if forward.shape != backward.shape:
            raise IngestionError("forward/backward flow dimensions differ")
        vf = np.stack([consistency_mask(f, b, threshold) for f, b in zip(forward, backward)])
        vb = np.stack([consistency_mask(b, f, threshold) for f, b in zip(forward, backward)])
        return cls(forward, backward, vf, vb)


@dataclass
class MaskSequence:
    """Per-frame integer labels: 0 background, i >= 1 a foreground layer."""

    labels: np.ndarray  # (T, H, W) uint8


@dataclass
class ScribbleSet:
    """Sparse user scribbles: rows of (x, y, t, color) with color 1=red, 2=green."""

    points: np.ndarray  # (K, 4) int

    def __len__(self):
        return len(self.points)


# ---------------------------------------------------------------------------
# image and video IO


def _load_image(path):
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise IngestionError(f"unreadable frame {path}: {exc}") from exc


def list_frames(directory):
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise IngestionError(f"cannot list frame directory {directory}: {exc}") from exc
    return [os.path.join(directory, n) for n in names if n.lower().endswith(IMAGE_EXTENSIONS)]


def load_video(directory) -> VideoTensor:
    """Load a directory of equally sized frames, lexicographic order."""
    paths = list_frames(directory)
    if len(paths) < 2:
        raise IngestionError(f"need at least 2 frames in {directory}, found {len(paths)}")
    frames = []
    for p in paths:
        img = _load_image(p)
        if frames and img.shape != frames[0].shape:
            raise IngestionError(
                f"frame {p} has size {img.shape[:2]}, expected {frames[0].shape[:2]}"
            )
        frames.append(img)
    return VideoTensor(np.stack(frames))


def save_video(video: VideoTensor, directory, prefix=""):
    os.makedirs(directory, exist_ok=True)
    for t in range(video.T):
        save_image(video.frames[t], os.path.join(directory, f"{prefix}{t:05d}.png"))


def save_image(array, path):
    """Save an (H, W, 3) or (H, W, 4) float [0,1] array as PNG."""
    arr = np.clip(np.asarray(array), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def load_rgba(path):
    with Image.open(path) as img:
        return np.asarray(img.convert("RGBA"), dtype=np.float32) / 255.0


# ---------------------------------------------------------------------------
# Middlebury .flo


def write_flo(path, flow):
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[-1] != 2:
        raise ConfigError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w, _ = flow.shape
    with open(path, "wb") as f:
        np.array([FLO_MAGIC], dtype="<f4").tofile(f)
        np.array([w, h], dtype="<i4").tofile(f)
        flow.astype("<f4").tofile(f)


def read_flo(path):
    with open(path, "rb") as f:
        magic = np.fromfile(f, dtype="<f4", count=1)
        if magic.size != 1 or magic[0] != FLO_MAGIC:
            raise FormatError(f"{path}: bad flow magic {magic}")
        dims = np.fromfile(f, dtype="<i4", count=2)
        if dims.size != 2 or np.any(dims <= 0):
            raise FormatError(f"{path}: bad flow dimensions {dims}")
        w, h = int(dims[0]), int(dims[1])
        data = np.fromfile(f, dtype="<f4", count=2 * w * h)
        if data.size != 2 * w * h:
            raise FormatError(f"{path}: truncated payload ({data.size} of {2 * w * h} floats)")
    return data.reshape(h, w, 2)


def load_flow(directory, dims, threshold=1.0) -> FlowField:
    """Read fwd_%05d.flo / bwd_%05d.flo for t = 0..T-2 and build masks."""
    t_len, h, w = dims
    fwd, bwd = [], []
    for t in range(t_len - 1):
        f = read_flo(os.path.join(directory, f"fwd_{t:05d}.flo"))
        b = read_flo(os.path.join(directory, f"bwd_{t:05d}.flo"))
        if f.shape != (h, w, 2) or b.shape != (h, w, 2):
            raise IngestionError(f"flow size mismatch at t={t}: {f.shape} vs video {(h, w)}")
        fwd.append(f)
        bwd.append(b)
    return FlowField.from_pair(np.stack(fwd), np.stack(bwd), threshold)


def save_flow(flow: FlowField, directory):
    os.makedirs(directory, exist_ok=True)
    for t in range(flow.forward.shape[0]):
        write_flo(os.path.join(directory, f"fwd_{t:05d}.flo"), flow.forward[t])
        write_flo(os.path.join(directory, f"bwd_{t:05d}.flo"), flow.backward[t])


# ---------------------------------------------------------------------------
# flow consistency


def bilinear_sample(field, x, y):
    """Sample (H, W, C) at fractional (x, y), clamping to the border."""
    h, w = field.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, h - 1)
    x0 = np.minimum(x.astype(np.int64), w - 2) if w > 1 else np.zeros_like(x, dtype=np.int64)
    y0 = np.minimum(y.astype(np.int64), h - 2) if h > 1 else np.zeros_like(y, dtype=np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return (
        (1 - fx) * (1 - fy) * field[y0, x0]
        + fx * (1 - fy) * field[y0, x1]
        + (1 - fx) * fy * field[y1, x0]
        + fx * fy * field[y1, x1]
    )


def consistency_mask(forward, backward, threshold=1.0):
    """W(p) = 1 iff ||f(p) + b(p + f(p))|| <= threshold, with b sampled
    bilinearly at the landing point; 0 when the landing point leaves the frame."""
    forward = np.asarray(forward, dtype=np.float64)
    h, w, _ = forward.shape
    ys, xs = np.mgrid[0:h, 0:w]
    lx = xs + forward[..., 0]
    ly = ys + forward[..., 1]
    inside = (lx >= 0) & (lx <= w - 1) & (ly >= 0) & (ly <= h - 1)
    b = bilinear_sample(np.asarray(backward, dtype=np.float64), lx, ly)
    err = np.sqrt((forward[..., 0] + b[..., 0]) ** 2 + (forward[..., 1] + b[..., 1]) ** 2)
    return ((err <= threshold) & inside).astype(np.float32)


# ---------------------------------------------------------------------------
# synthetic oracle dataset


@dataclass
class SynthSpec:
    """Deterministic synthetic scene: a textured sprite translating over a
    translating textured background. Velocities are per frame, in pixels,
    as apparent motion; sub-pixel values are allowed."""

    seed: int = 0
    frames: int = 24
    height: int = 64
    width: int = 96
    bg_velocity: tuple = (-0.5, 0.25)
    sprite_velocity: tuple = (1.5, 0.5)
    sprite_size: tuple = (34, 24)  # (width, height) for boxes, (diam, diam) for disks
    sprite_shape: str = "box"  # box | disk
    sprite_start: tuple = (8.0, 20.0)  # top-left (box) / bbox corner (disk) at t=0
    texture_octaves: int = 3
    texture_contrast: float = 0.85
    bg_texture: str = "noise"  # noise | periodic (period-8 gratings: ambiguous correspondence)
    mask_dilation: int = 3
    allow_exit: bool = False
    occluder: tuple = None  # (x0, width): a static vertical bar in front of everything
    flat_patch: tuple = None  # (x0, y0, w, h) at t=0: a textureless area riding the background

    def __post_init__(self):
        if self.frames < 2:
            raise ConfigError("synthetic video needs at least 2 frames")
        if self.sprite_shape not in ("box", "disk"):
            raise ConfigError(f"unknown sprite shape {self.sprite_shape!r}")
        if self.bg_texture not in ("noise", "periodic"):
            raise ConfigError(f"unknown background texture {self.bg_texture!r}")
        if self.occluder is not None and len(self.occluder) != 2:
            raise ConfigError("occluder must be (x0, width)")


@dataclass
class SynthData:
    video: VideoTensor
    flow: FlowField
    masks: MaskSequence
    gt_alpha: np.ndarray  # (T, H, W) in {0, 1}
    sprite_pos: np.ndarray  # (T, 2) sprite anchor (x, y) per frame
    bg_offset: np.ndarray  # (T, 2) canvas offset sampled at frame origin
    spec: SynthSpec


def _value_noise(rng, h, w, octaves, contrast):
    """Smooth multi-octave texture in [0, 1]."""
    out = np.zeros((h, w))
    amplitude = 1.0
    total = 0.0
    for octave in range(octaves):
        cells = 4 * 2**octave
        coarse = rng.uniform(size=(cells + 1, cells + 1))
        ys = np.linspace(0, cells, h)
        xs = np.linspace(0, cells, w)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        y0 = np.minimum(gy.astype(int), cells - 1)
        x0 = np.minimum(gx.astype(int), cells - 1)
        fy, fx = gy - y0, gx - x0
        layer = (
            (1 - fx) * (1 - fy) * coarse[y0, x0]
            + fx * (1 - fy) * coarse[y0, x0 + 1]
            + (1 - fx) * fy * coarse[y0 + 1, x0]
            + fx * fy * coarse[y0 + 1, x0 + 1]
        )
        out += amplitude * layer
        total += amplitude
        amplitude *= 0.55
    out /= total
    lo, hi = out.min(), out.max()
    out = (out - lo) / max(hi - lo, 1e-9)
    return 0.5 + contrast * (out - 0.5)


def _periodic_texture(rng, h, w, contrast, period=8.0):
    """Gratings with period `period` in x and y: appearance repeats, so
    correspondence is ambiguous without motion information."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    channels = []
    for _ in range(3):
        phase_x, phase_y = rng.uniform(0, 2 * np.pi, size=2)
        gain = rng.uniform(0.35, 0.5)
        pattern = 0.5 * np.sin(2 * np.pi * xs / period + phase_x) + 0.5 * np.sin(
            2 * np.pi * ys / period + phase_y
        )
        channels.append(0.5 + contrast * gain * pattern)
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


def _sprite_support(spec: SynthSpec, local_x, local_y):
    sw, sh = spec.sprite_size
    if spec.sprite_shape == "box":
        return (local_x >= 0) & (local_x < sw) & (local_y >= 0) & (local_y < sh)
    rx, ry = sw / 2.0, sh / 2.0
    return ((local_x - rx + 0.5) / rx) ** 2 + ((local_y - ry + 0.5) / ry) ** 2 <= 1.0


def _dilate(mask, radius):
    if radius <= 0:
        return mask.copy()
    out = mask.copy()
    h, w = mask.shape
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx * dx + dy * dy > radius * radius:
                continue
            ys = slice(max(0, dy), min(h, h + dy))
            xs = slice(max(0, dx), min(w, w + dx))
            ys_src = slice(max(0, -dy), min(h, h - dy))
            xs_src = slice(max(0, -dx), min(w, w - dx))
            out[ys, xs] |= mask[ys_src, xs_src]
    return out


def synth_dataset(spec: SynthSpec) -> SynthData:
    """Deterministic scene with exact ground-truth flow, masks and alpha."""
    rng = np.random.default_rng(spec.seed)
    t_len, h, w = spec.frames, spec.height, spec.width
    bg_v = np.asarray(spec.bg_velocity, dtype=np.float64)
    sp_v = np.asarray(spec.sprite_velocity, dtype=np.float64)

    # canvas big enough to cover all frame windows; frame t samples the
    # canvas at x + off_t where off_t = margin - t * bg_velocity
    drift = np.stack([-(bg_v) * t for t in range(t_len)])
    margin = np.ceil(np.abs(drift).max(axis=0)).astype(int) + 2
    cw, ch = w + 2 * margin[0], h + 2 * margin[1]
    if spec.bg_texture == "periodic":
        canvas = _periodic_texture(rng, ch, cw, spec.texture_contrast)
    else:
        canvas = np.stack(
            [_value_noise(rng, ch, cw, spec.texture_octaves, spec.texture_contrast) for _ in range(3)],
            axis=-1,
        )
    if spec.flat_patch is not None:
        # constant color in canvas space: appearance carries no correspondence
        # signal there, so only the flow term can pin its motion
        px, py, pw, phh = (int(round(v)) for v in spec.flat_patch)
        cx0 = px + int(margin[0])
        cy0 = py + int(margin[1])
        canvas[cy0 : cy0 + phh, cx0 : cx0 + pw] = rng.uniform(0.35, 0.75, size=3)
    sw, sh = (int(round(s)) for s in spec.sprite_size)
    sprite_tex = np.stack(
        [_value_noise(rng, sh, sw, spec.texture_octaves, spec.texture_contrast) for _ in range(3)],
        axis=-1,
    )
    # push the two textures apart so the layers are visually distinct
    canvas[..., 0] *= 0.6
    sprite_tex[..., 2] *= 0.55
    sprite_tex[..., 0] = 0.35 + 0.65 * sprite_tex[..., 0]

    sprite_pos = np.stack([np.asarray(spec.sprite_start) + sp_v * t for t in range(t_len)])
    bg_offset = margin + drift

    occluder = np.zeros((h, w), dtype=bool)
    occ_tex = None
    if spec.occluder is not None:
        x0, bar_w = (int(round(v)) for v in spec.occluder)
        occluder[:, max(0, x0) : x0 + bar_w] = True
        occ_tex = np.stack(
            [_value_noise(rng, h, w, spec.texture_octaves, spec.texture_contrast) for _ in range(3)],
            axis=-1,
        )
        occ_tex[..., 1] *= 0.45  # visually distinct from both layers

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    frames = np.empty((t_len, h, w, 3), dtype=np.float32)
    gt_alpha = np.empty((t_len, h, w), dtype=np.float32)
    for t in range(t_len):
        bg = bilinear_sample(canvas, xs + bg_offset[t, 0], ys + bg_offset[t, 1])
        local_x = xs - sprite_pos[t, 0]
        local_y = ys - sprite_pos[t, 1]
        support = _sprite_support(spec, local_x, local_y)
        if not spec.allow_exit:
            lo = sprite_pos[t]
            hi = sprite_pos[t] + np.array([sw, sh])
            if lo[0] < 0 or lo[1] < 0 or hi[0] > w or hi[1] > h:
                raise ConfigError(f"sprite leaves the frame at t={t}; set allow_exit for occlusion runs")
        spr = bilinear_sample(sprite_tex, np.clip(local_x, 0, sw - 1), np.clip(local_y, 0, sh - 1))
        support = support & ~occluder  # the bar hides the sprite
        m = support[..., None]
        frames[t] = np.where(m, spr, bg)
        if occ_tex is not None:
            frames[t] = np.where(occluder[..., None], occ_tex, frames[t])
        gt_alpha[t] = support

    # visible-surface motion: sprite pixels move with the sprite, occluder
    # pixels are static, everything else moves with the background
    fwd = np.empty((t_len - 1, h, w, 2), dtype=np.float32)
    bwd = np.empty((t_len - 1, h, w, 2), dtype=np.float32)
    for t in range(t_len - 1):
        fwd[t] = np.where(gt_alpha[t][..., None] > 0, sp_v, bg_v).astype(np.float32)
        bwd[t] = np.where(gt_alpha[t + 1][..., None] > 0, -sp_v, -bg_v).astype(np.float32)
        if occ_tex is not None:
            fwd[t][occluder] = 0.0
            bwd[t][occluder] = 0.0

    masks = np.stack([_dilate(a > 0.5, spec.mask_dilation) for a in gt_alpha]).astype(np.uint8)
    return SynthData(
        video=VideoTensor(frames),
        flow=FlowField.from_pair(fwd, bwd),
        masks=MaskSequence(masks),
        gt_alpha=gt_alpha,
        sprite_pos=sprite_pos,
        bg_offset=bg_offset,
        spec=spec,
    )


# ---------------------------------------------------------------------------
# masks and scribbles


def load_masks(directory, dims) -> MaskSequence:
    """Grayscale frames thresholded at 0.5; one image per video frame."""
    t_len, h, w = dims
    paths = list_frames(directory)
    if len(paths) != t_len:
        raise IngestionError(f"{directory}: {len(paths)} masks for {t_len} frames")
    labels = np.zeros((t_len, h, w), dtype=np.uint8)
    for t, p in enumerate(paths):
        img = _load_image(p)
        if img.shape[:2] != (h, w):
            raise IngestionError(f"mask {p} has size {img.shape[:2]}, video is {(h, w)}")
        labels[t] = (img.mean(axis=-1) >= 0.5).astype(np.uint8)
    return MaskSequence(labels)


def save_masks(masks: MaskSequence, directory):
    os.makedirs(directory, exist_ok=True)
    for t in range(masks.labels.shape[0]):
        frame = np.repeat(masks.labels[t][..., None].astype(np.float32), 3, axis=-1)
        save_image(frame, os.path.join(directory, f"{t:05d}.png"))


def load_scribbles(directory, dims) -> ScribbleSet:
    """RGB rasters where pure red marks layer 1 and pure green layer 2.

    Files are named by frame index (<t>.png or <t:05d>.png); frames without
    a file carry no scribbles.
    """
    t_len, h, w = dims
    points = []
    if not os.path.isdir(directory):
        return ScribbleSet(np.zeros((0, 4), dtype=np.int64))
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in IMAGE_EXTENSIONS or not stem.isdigit():
            continue
        t = int(stem)
        if not 0 <= t < t_len:
            raise IngestionError(f"scribble frame index {t} out of range (T={t_len})")
        img = np.asarray(Image.open(os.path.join(directory, name)).convert("RGB"))
        if img.shape[:2] != (h, w):
            raise IngestionError(f"scribble {name} has size {img.shape[:2]}, video is {(h, w)}")
        red = (img[..., 0] == 255) & (img[..., 1] == 0) & (img[..., 2] == 0)
        green = (img[..., 0] == 0) & (img[..., 1] == 255) & (img[..., 2] == 0)
        for color, where in ((1, red), (2, green)):
            ys, xs = np.nonzero(where)
            for x, y in zip(xs, ys):
                points.append((x, y, t, color))
    pts = np.asarray(points, dtype=np.int64) if points else np.zeros((0, 4), dtype=np.int64)
    return ScribbleSet(pts)


# ---------------------------------------------------------------------------
# dataset directory layout


def save_dataset(data: SynthData, directory):
    """Write the on-disk layout consumed by training and the CLI."""
    os.makedirs(directory, exist_ok=True)
    save_video(data.video, os.path.join(directory, "frames"))
    save_flow(data.flow, os.path.join(directory, "flow"))
    save_masks(data.masks, os.path.join(directory, "masks"))
    gt_dir = os.path.join(directory, "gt")
    os.makedirs(gt_dir, exist_ok=True)
    alpha_dir = os.path.join(gt_dir, "alpha")
    os.makedirs(alpha_dir, exist_ok=True)
    for t in range(data.video.T):
        save_image(np.repeat(data.gt_alpha[t][..., None], 3, axis=-1), os.path.join(alpha_dir, f"{t:05d}.png"))
    with open(os.path.join(gt_dir, "sprite_pos.txt"), "w") as f:
        f.write("# t x y\n")
        for t, (x, y) in enumerate(data.sprite_pos):
            f.write(f"{t} {float(x)!r} {float(y)!r}\n")
    with open(os.path.join(directory, "meta.txt"), "w") as f:
        for key, value in asdict(data.spec).items():
            f.write(f"{key} = {value}\n")


def load_sprite_positions(path):
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            t, x, y = line.split()
            rows.append((float(x), float(y)))
    return np.asarray(rows)


def load_dataset(directory):
    """Load frames + flow + masks (+ scribbles if present) from save_dataset layout."""
    frames_dir = os.path.join(directory, "frames")
    if not os.path.isdir(frames_dir):
        raise IngestionError(f"no frames directory in {directory}")
    video = load_video(frames_dir)
    flow = load_flow(os.path.join(directory, "flow"), video.dims)
    masks_dir = os.path.join(directory, "masks")
    masks = load_masks(masks_dir, video.dims) if os.path.isdir(masks_dir) else None
    scribbles = load_scribbles(os.path.join(directory, "scribbles"), video.dims)
    return video, flow, masks, scribbles
