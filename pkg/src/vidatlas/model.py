"""Layered atlas model: mappings into quadrants, atlas color, opacity, blending.

Layer 0 is the background; layers 1..n are foregrounds. Mapping networks
consume raw normalized (x, y, t) with no positional encoding; the alpha
and atlas networks consume positionally encoded inputs. A single atlas
network serves all layers, with each layer's mapping constrained to its
own quadrant of [-1, 1]^2. A learnable fixed-resolution texture can
replace the atlas network (grid-atlas variant).
"""

from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import ConfigError


@dataclass(frozen=True)
class Quadrant:
    center: tuple
    half_extent: float

    def contains(self, uv):
        # closed up to one ulp: float64 tanh saturates to exactly +-1,
        # putting extreme mappings exactly on the quadrant boundary
        uv = np.asarray(uv)
        c = np.asarray(self.center)
        return np.all(np.abs(uv - c) <= self.half_extent * (1.0 + 1e-12), axis=-1)


_QUADRANT_CENTERS = ((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5))


def default_layout(n_layers: int):
    """Background plus up to three foregrounds, one disjoint quadrant each."""
    if not 1 <= n_layers <= len(_QUADRANT_CENTERS):
        raise ConfigError(f"quadrant layout supports 1..4 layers, got {n_layers}")
    return [Quadrant(_QUADRANT_CENTERS[i], 0.5) for i in range(n_layers)]


@dataclass
class GridAtlas:
    """Learnable RGB texture over the full [-1, 1]^2 atlas domain."""

    texels: np.ndarray  # (R, R, 3), values kept in [0, 1]

    @property
    def resolution(self):
        return self.texels.shape[0]


@dataclass
class AtlasModel:
    mapping_specs: list
    mapping_params: list
    alpha_spec: nnet.MlpSpec
    alpha_params: nnet.MlpParams
    atlas_spec: nnet.MlpSpec
    atlas_params: nnet.MlpParams
    layout: list
    n_foreground: int
    dims: tuple  # (T, H, W)
    n_freq_alpha: int = 5
    n_freq_atlas: int = 10
    grid: GridAtlas | None = None

    @property
    def n_layers(self):
        return self.n_foreground + 1

    @property
    def dtype(self):
        return self.mapping_params[0].weights[0].dtype

    def param_groups(self):
        """Ordered (name, flat array list) pairs covering every learnable array.

        The grid-atlas variant replaces the atlas network slot with its texels.
        """
        groups = [(f"map{i}", p.arrays()) for i, p in enumerate(self.mapping_params)]
        groups.append(("alpha", self.alpha_params.arrays()))
        if self.grid is not None:
            groups.append(("grid", [self.grid.texels]))
        else:
            groups.append(("atlas", self.atlas_params.arrays()))
        return groups


def build_model(
    dims,
    n_foreground: int = 1,
    hidden: int = 256,
    map_bg_layers: int = 4,
    map_fg_layers: int = 6,
    alpha_layers: int = 8,
    atlas_layers: int = 8,
    atlas_skips="auto",
    n_freq_alpha: int = 5,
    n_freq_atlas: int = 10,
    grid_resolution=None,
    rng=None,
    dtype=np.float32,
) -> AtlasModel:
    """Construct a freshly initialized model for a video of `dims` = (T, H, W)."""
    if rng is None:
        rng = np.random.default_rng(0)
    if atlas_skips == "auto":
        atlas_skips = (4, 7) if atlas_layers >= 8 else ()

    def widths(depth, out):
        return (3,) + (hidden,) * (depth - 1) + (out,)

    n_layers = n_foreground + 1
    mapping_specs = []
    for i in range(n_layers):
        depth = map_bg_layers if i == 0 else map_fg_layers
        mapping_specs.append(nnet.MlpSpec(widths(depth, 2), output_activation="tanh"))
    alpha_out = 1 if n_foreground == 1 else n_foreground + 1
    alpha_act = "sigmoid" if n_foreground == 1 else "softmax"
    alpha_spec = nnet.MlpSpec(
        (6 * n_freq_alpha,) + (hidden,) * (alpha_layers - 1) + (alpha_out,),
        output_activation=alpha_act,
    )
    atlas_spec = nnet.MlpSpec(
        (4 * n_freq_atlas,) + (hidden,) * (atlas_layers - 1) + (3,),
        skip_input_layers=frozenset(atlas_skips),
        output_activation="tanh",
    )
    model = AtlasModel(
        mapping_specs=mapping_specs,
        mapping_params=[nnet.init_mlp_params(s, rng, dtype) for s in mapping_specs],
        alpha_spec=alpha_spec,
        alpha_params=nnet.init_mlp_params(alpha_spec, rng, dtype),
        atlas_spec=atlas_spec,
        atlas_params=nnet.init_mlp_params(atlas_spec, rng, dtype),
        layout=default_layout(n_layers),
        n_foreground=n_foreground,
        dims=tuple(int(d) for d in dims),
        n_freq_alpha=n_freq_alpha,
        n_freq_atlas=n_freq_atlas,
        grid=None,
    )
    if grid_resolution:
        model.grid = GridAtlas(np.full((grid_resolution, grid_resolution, 3), 0.5, dtype=dtype))
    check_model(model)
    return model


def check_model(model: AtlasModel):
    if len(model.mapping_specs) != model.n_layers or len(model.layout) != model.n_layers:
        raise ConfigError("layer count mismatch between mappings and layout")
    for spec in model.mapping_specs:
        if spec.in_width != 3:
            raise ConfigError("mapping networks take raw (x, y, t); input arity must be 3")
        if spec.out_width != 2 or spec.output_activation != "tanh":
            raise ConfigError("mapping networks must emit a tanh-bounded 2D point")
    if model.alpha_spec.in_width != 6 * model.n_freq_alpha:
        raise ConfigError("alpha input width must be 6 * n_freq_alpha")
    if model.atlas_spec.in_width != 4 * model.n_freq_atlas:
        raise ConfigError("atlas input width must be 4 * n_freq_atlas")
    for spec, params in zip(model.mapping_specs, model.mapping_params):
        nnet.check_params(spec, params)
    nnet.check_params(model.alpha_spec, model.alpha_params)
    nnet.check_params(model.atlas_spec, model.atlas_params)


# ---------------------------------------------------------------------------
# coordinates


def normalize_points(dims, pts):
    """Affine map of pixel (x, y, t) into [-1, 1]^3; corners land exactly on +-1.

    Uses the centered form (x - h) / h with h = (W - 1) / 2: the subtraction
    is exact on integer and half-integer pixel coordinates, so the inverse
    recovers integer indices exactly.
    """
    t_len, h, w = dims
    pts = np.asarray(pts, dtype=np.float64)
    out = np.empty_like(pts)
    for axis, extent in ((0, w), (1, h), (2, t_len)):
        half = (extent - 1) / 2.0
        out[..., axis] = (pts[..., axis] - half) / half
    return out


def denormalize_points(dims, pts_norm):
    """Inverse of normalize_points.

    The stored normalized value carries one rounding of the forward map, so
    the plain inverse lands within a few ulps of the original pixel index;
    results that close to an integer are snapped to it, which recovers
    integer indices exactly and moves genuine fractional coordinates by an
    immaterial < 4e-12 pixels.
    """
    t_len, h, w = dims
    pts_norm = np.asarray(pts_norm, dtype=np.float64)
    out = np.empty_like(pts_norm)
    for axis, extent in ((0, w), (1, h), (2, t_len)):
        half = (extent - 1) / 2.0
        x = pts_norm[..., axis] * half + half
        snapped = np.rint(x)
        window = 16.0 * np.finfo(np.float64).eps * max(1.0, half)
        out[..., axis] = np.where(np.abs(x - snapped) <= window, snapped, x)
    return out


def encode_uv(uv, n_freq):
    """Positional encoding of (u, v) pairs: (..., 2) -> (..., 4 * n_freq)."""
    uv = np.asarray(uv)
    return np.concatenate([nnet.posenc(uv[..., 0], n_freq), nnet.posenc(uv[..., 1], n_freq)], axis=-1)


def encode_point(pts_norm, n_freq):
    """Positional encoding of normalized (x, y, t): (..., 3) -> (..., 6 * n_freq)."""
    p = np.asarray(pts_norm)
    return np.concatenate(
        [nnet.posenc(p[..., 0], n_freq), nnet.posenc(p[..., 1], n_freq), nnet.posenc(p[..., 2], n_freq)],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# model evaluation (pure; safe for concurrent read-only use)


def map_point(model: AtlasModel, layer_index: int, pts):
    """Map pixel coordinates (..., 3) -> UV inside the layer's quadrant."""
    q = model.layout[layer_index]
    p = normalize_points(model.dims, pts).astype(model.dtype)
    raw = nnet.mlp_forward(model.mapping_specs[layer_index], model.mapping_params[layer_index], p)
    return np.asarray(q.center, dtype=raw.dtype) + q.half_extent * raw


def atlas_color(model: AtlasModel, uv):
    """Atlas RGB in [0, 1]^3 at continuous UV in [-1, 1]^2."""
    if model.grid is not None:
        return grid_sample(model.grid, uv)
    enc = encode_uv(np.asarray(uv, dtype=model.dtype), model.n_freq_atlas)
    y = nnet.mlp_forward(model.atlas_spec, model.atlas_params, enc)
    return (y + 1.0) / 2.0


def layer_weights(model: AtlasModel, pts):
    """Per-layer blend weights (..., n_layers); convex combination."""
    p = normalize_points(model.dims, pts).astype(model.dtype)
    enc = encode_point(p, model.n_freq_alpha)
    y = nnet.mlp_forward(model.alpha_spec, model.alpha_params, enc)
    if model.n_foreground == 1:
        a = y[..., 0]
        return np.stack([1.0 - a, a], axis=-1)
    return y


def alpha(model: AtlasModel, pts):
    """Opacity at pixel coordinates: scalar foreground alpha for one
    foreground layer, the full softmax vector (alpha_0..alpha_n) otherwise."""
    w = layer_weights(model, pts)
    if model.n_foreground == 1:
        return w[..., 1]
    return w


def reconstruct_pixel(model: AtlasModel, pts):
    """Alpha-blended reconstruction at pixel coordinates (..., 3) -> RGB."""
    pts = np.asarray(pts)
    w = layer_weights(model, pts)
    out = np.zeros(pts.shape[:-1] + (3,), dtype=np.float64)
    for layer in range(model.n_layers):
        uv = map_point(model, layer, pts)
        out += w[..., layer : layer + 1] * atlas_color(model, uv)
    return out


# ---------------------------------------------------------------------------
# grid-atlas variant


def _grid_coords(grid: GridAtlas, uv):
    r = grid.resolution
    uv = np.asarray(uv, dtype=np.float64)
    g = (uv + 1.0) * 0.5 * (r - 1)
    g = np.clip(g, 0.0, r - 1.0)
    i0 = np.minimum(g.astype(np.int64), r - 2)
    f = g - i0
    return i0[..., 0], i0[..., 1], f[..., 0], f[..., 1]


def grid_sample(grid: GridAtlas, uv):
    """Bilinear texture lookup; border handling clamps to edge texels."""
    x0, y0, fx, fy = _grid_coords(grid, uv)
    t = grid.texels
    fx = fx[..., None]
    fy = fy[..., None]
    return (
        (1 - fx) * (1 - fy) * t[y0, x0]
        + fx * (1 - fy) * t[y0, x0 + 1]
        + (1 - fx) * fy * t[y0 + 1, x0]
        + fx * fy * t[y0 + 1, x0 + 1]
    )


def grid_sample_backward(grid: GridAtlas, uv, upstream):
    """Gradients of sum(grid_sample(uv) * upstream) w.r.t. texels and uv.

    Texel gradients distribute with bilinear weights; the uv gradient is
    the piecewise-linear interpolation derivative (zero where clamped).
    """
    x0, y0, fx, fy = _grid_coords(grid, uv)
    t = grid.texels
    up = np.asarray(upstream)
    d_tex = np.zeros_like(t)
    w00 = ((1 - fx) * (1 - fy))[..., None] * up
    w10 = (fx * (1 - fy))[..., None] * up
    w01 = ((1 - fx) * fy)[..., None] * up
    w11 = (fx * fy)[..., None] * up
    np.add.at(d_tex, (y0, x0), w00)
    np.add.at(d_tex, (y0, x0 + 1), w10)
    np.add.at(d_tex, (y0 + 1, x0), w01)
    np.add.at(d_tex, (y0 + 1, x0 + 1), w11)

    r = grid.resolution
    dgx = ((1 - fy)[..., None] * (t[y0, x0 + 1] - t[y0, x0]) + fy[..., None] * (t[y0 + 1, x0 + 1] - t[y0 + 1, x0]) * 1.0)
    dgy = ((1 - fx)[..., None] * (t[y0 + 1, x0] - t[y0, x0]) + fx[..., None] * (t[y0 + 1, x0 + 1] - t[y0, x0 + 1]) * 1.0)
    uv = np.asarray(uv, dtype=np.float64)
    inside = (np.abs(uv) < 1.0).astype(d_tex.dtype)
    scale = 0.5 * (r - 1)
    du = (dgx * up).sum(axis=-1) * scale * inside[..., 0]
    dv = (dgy * up).sum(axis=-1) * scale * inside[..., 1]
    return d_tex, np.stack([du, dv], axis=-1)
