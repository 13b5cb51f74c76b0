"""Optimization loop: sampling, identity pretraining, bootstrap schedule,
checkpointing, and the plain-text config file format.

Deterministic mode is the default: a (seed, config, dataset) triple fully
determines the run, and checkpoints carry the RNG state so a resumed run
reproduces an uninterrupted one bit for bit.
"""

import configparser
import io
import json
import os
from dataclasses import dataclass, field, asdict, fields, replace

import numpy as np

from . import losses, model as model_mod, nnet
from .errors import ConfigError, FormatError, TrainingError

CHECKPOINT_MAGIC = b"LNAT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 10000
    total_iters: int = 300000
    bootstrap_iters: int = 10000
    identity_pretrain_iters: int = 100
    learning_rate: float = 1e-4
    seed: int = 0
    deterministic: bool = True
    dtype: str = "float32"
    flow_direction: str = "auto"  # auto: forward, backward on the last frame; both: random per sample
    log_interval: int = 100
    checkpoint_interval: int = 10000
    n_foreground: int = 1
    hidden: int = 256
    map_bg_layers: int = 4
    map_fg_layers: int = 6
    alpha_layers: int = 8
    atlas_layers: int = 8
    atlas_skips: str = "auto"  # "auto", "" or comma-separated indices
    n_freq_alpha: int = 5
    n_freq_atlas: int = 10
    grid_atlas: bool = False
    grid_resolution: int = 1000
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)

    def __post_init__(self):
        if self.bootstrap_iters > self.total_iters and self.total_iters > 0:
            raise ConfigError("bootstrap_iters must not exceed total_iters")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.flow_direction not in ("auto", "both"):
            raise ConfigError(f"unknown flow_direction {self.flow_direction!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def skips_tuple(self):
        if self.atlas_skips == "auto":
            return "auto"
        if not str(self.atlas_skips).strip():
            return ()
        return tuple(int(tok) for tok in str(self.atlas_skips).split(","))


_SECTIONS = {
    "train": (
        "batch_size", "total_iters", "bootstrap_iters", "identity_pretrain_iters",
        "learning_rate", "seed", "deterministic", "dtype", "flow_direction",
        "log_interval", "checkpoint_interval",
    ),
    "model": (
        "n_foreground", "hidden", "map_bg_layers", "map_fg_layers", "alpha_layers",
        "atlas_layers", "atlas_skips", "n_freq_alpha", "n_freq_atlas",
        "grid_atlas", "grid_resolution",
    ),
}


def _coerce(value, target):
    if isinstance(target, bool):
        return value.strip().lower() in ("1", "true", "yes", "on") if isinstance(value, str) else bool(value)
    if isinstance(target, int):
        return int(value)
    if isinstance(target, float):
        return float(value)
    return value


def config_from_file(path) -> TrainConfig:
    """Read a key = value config (sections [train], [model], [losses])."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return config_from_mapping(
        {section: dict(parser[section]) for section in parser.sections()}
    )


def config_from_mapping(mapping) -> TrainConfig:
    cfg = TrainConfig()
    updates = {}
    for section, keys in _SECTIONS.items():
        src = mapping.get(section, {})
        for key, value in src.items():
            if key not in keys:
                raise ConfigError(f"unknown config key [{section}] {key}")
            updates[key] = _coerce(value, getattr(cfg, key))
    lw = losses.LossWeights()
    loss_updates = {}
    valid_loss_keys = {f.name for f in fields(losses.LossWeights)}
    for key, value in mapping.get("losses", {}).items():
        if key not in valid_loss_keys:
            raise ConfigError(f"unknown config key [losses] {key}")
        loss_updates[key] = _coerce(value, getattr(lw, key))
    return replace(cfg, weights=replace(lw, **loss_updates), **updates)


def config_to_text(cfg: TrainConfig) -> str:
    out = io.StringIO()
    for section, keys in _SECTIONS.items():
        out.write(f"[{section}]\n")
        for key in keys:
            out.write(f"{key} = {getattr(cfg, key)}\n")
        out.write("\n")
    out.write("[losses]\n")
    for f in fields(losses.LossWeights):
        out.write(f"{f.name} = {getattr(cfg.weights, f.name)}\n")
    return out.getvalue()


def build_model(cfg: TrainConfig, dims, rng) -> model_mod.AtlasModel:
    return model_mod.build_model(
        dims,
        n_foreground=cfg.n_foreground,
        hidden=cfg.hidden,
        map_bg_layers=cfg.map_bg_layers,
        map_fg_layers=cfg.map_fg_layers,
        alpha_layers=cfg.alpha_layers,
        atlas_layers=cfg.atlas_layers,
        atlas_skips=cfg.skips_tuple(),
        n_freq_alpha=cfg.n_freq_alpha,
        n_freq_atlas=cfg.n_freq_atlas,
        grid_resolution=cfg.grid_resolution if cfg.grid_atlas else None,
        rng=rng,
        dtype=cfg.np_dtype,
    )


def make_optimizer_states(model, cfg: TrainConfig):
    return {
        name: nnet.AdamState.for_arrays(arrays, lr=cfg.learning_rate)
        for name, arrays in model.param_groups()
    }


# ---------------------------------------------------------------------------
# sampling


def sample_batch(rng, video, flow, masks, scribbles, cfg: TrainConfig, bootstrap_active=True):
    """Uniform interior point batch with ground truth, flow correspondents,
    mask labels and (while bootstrapping) force-included scribble points."""
    t_len, h, w = video.dims
    b = cfg.batch_size
    x = rng.integers(1, w - 1, size=b)
    y = rng.integers(1, h - 1, size=b)
    t = rng.integers(0, t_len, size=b)

    if scribbles is not None and len(scribbles) and bootstrap_active:
        pts = scribbles.points
        k = min(len(pts), b)
        x[b - k :] = np.clip(pts[:k, 0], 1, w - 2)
        y[b - k :] = np.clip(pts[:k, 1], 1, h - 2)
        t[b - k :] = pts[:k, 2]

    frames = video.frames
    gt = frames[t, y, x].astype(np.float64)
    gt_dx = frames[t, y, x + 1].astype(np.float64) - gt
    gt_dy = frames[t, y + 1, x].astype(np.float64) - gt

    use_fwd = t < t_len - 1
    if cfg.flow_direction == "both":
        coin = rng.uniform(size=b) < 0.5
        use_fwd = np.where((t > 0) & (t < t_len - 1), coin, use_fwd)
    fx = np.where(use_fwd, flow.forward[np.minimum(t, t_len - 2), y, x, 0], flow.backward[np.maximum(t, 1) - 1, y, x, 0])
    fy = np.where(use_fwd, flow.forward[np.minimum(t, t_len - 2), y, x, 1], flow.backward[np.maximum(t, 1) - 1, y, x, 1])
    ft = np.where(use_fwd, t + 1, t - 1)
    valid = np.where(
        use_fwd,
        flow.valid_forward[np.minimum(t, t_len - 2), y, x],
        flow.valid_backward[np.maximum(t, 1) - 1, y, x],
    ).astype(np.float64)
    flow_pts = np.stack([np.clip(x + fx, 0, w - 1), np.clip(y + fy, 0, h - 1), ft], axis=-1)

    if masks is not None:
        m = (masks.labels[t, y, x] > 0).astype(np.float64)
    else:
        m = np.zeros(b)

    scrib = np.zeros(b, dtype=np.int8)
    if scribbles is not None and len(scribbles) and bootstrap_active:
        pts = scribbles.points
        k = min(len(pts), b)
        scrib[b - k :] = pts[:k, 3]

    sparsity_uv = None
    if cfg.n_foreground >= 2:
        layout = model_mod.default_layout(cfg.n_foreground + 1)
        which = rng.integers(1, cfg.n_foreground + 1, size=b)
        raw = rng.uniform(-1.0, 1.0, size=(b, 2))
        centers = np.asarray([layout[i].center for i in which])
        exts = np.asarray([layout[i].half_extent for i in which])[:, None]
        sparsity_uv = centers + exts * raw

    return losses.SampleBatch(
        pts=np.stack([x, y, t], axis=-1).astype(np.float64),
        gt_color=gt,
        gt_dx=gt_dx,
        gt_dy=gt_dy,
        flow_pts=flow_pts,
        flow_valid=valid,
        mask=m,
        scrib=scrib,
        g_dx=np.minimum(100.0, (w - 1) - x).astype(np.float64),
        g_dy=np.minimum(100.0, (h - 1) - y).astype(np.float64),
        sparsity_uv=sparsity_uv,
    )


# ---------------------------------------------------------------------------
# identity pretraining


def pretrain_identity(model, cfg: TrainConfig, rng):
    """Regress each mapping toward placing normalized (x, y) at the matching
    point of its quadrant; soft calibration that keeps point order."""
    t_len, h, w = model.dims
    iters = cfg.identity_pretrain_iters
    if iters <= 0:
        return []
    states = [
        nnet.AdamState.for_arrays(p.arrays(), lr=cfg.learning_rate) for p in model.mapping_params
    ]
    trace = []
    b = min(cfg.batch_size, 4096)
    for _ in range(iters):
        pts = np.stack(
            [rng.uniform(0, w - 1, size=b), rng.uniform(0, h - 1, size=b), rng.uniform(0, t_len - 1, size=b)],
            axis=-1,
        )
        norm = model_mod.normalize_points(model.dims, pts).astype(model.dtype)
        total = 0.0
        for li in range(model.n_layers):
            q = model.layout[li]
            target = np.asarray(q.center) + q.half_extent * norm[:, :2]
            raw, cache = nnet.mlp_forward(model.mapping_specs[li], model.mapping_params[li], norm, want_cache=True)
            uv = np.asarray(q.center, dtype=raw.dtype) + q.half_extent * raw
            diff = uv - target
            total += float(np.mean(np.sum(diff * diff, axis=-1)))
            d_raw = (2.0 / b) * q.half_extent * diff
            grads, _ = nnet.mlp_backward(model.mapping_specs[li], model.mapping_params[li], cache, d_raw.astype(model.dtype))
            nnet.adam_step(states[li], model.mapping_params[li].arrays(), grads, context="identity pretrain")
        trace.append(total)
    return trace


# ---------------------------------------------------------------------------
# steps and the loop


def train_step(model, states, batch, iteration, cfg: TrainConfig):
    """One batch: total loss, gradient means, one Adam step per network."""
    total, breakdown, grads = losses.total_loss(
        model, batch, cfg.weights, iteration, cfg.bootstrap_iters
    )
    if not np.isfinite(total):
        bad = [name for name, v in breakdown.items() if not np.isfinite(v)]
        raise TrainingError(f"non-finite loss at iteration {iteration}: {bad or 'total'} ({breakdown})")
    for name, arrays in model.param_groups():
        nnet.adam_step(states[name], arrays, [g.astype(model.dtype, copy=False) for g in grads[name]], context=name)
    if model.grid is not None:
        np.clip(model.grid.texels, 0.0, 1.0, out=model.grid.texels)
    return total, breakdown


LOG_COLUMNS = ("iter", "total") + losses.TERM_NAMES


def format_log_line(iteration, total, breakdown):
    cells = [f"{iteration:d}", f"{total:.6g}"] + [f"{breakdown[k]:.6g}" for k in losses.TERM_NAMES]
    return " ".join(cells)


def fit(video, flow, masks, scribbles, cfg: TrainConfig, out_dir=None, resume=None, progress=None):
    """Full optimization: identity pretraining, bootstrap, main loop.

    Returns (model, states, log_lines). With out_dir set, writes the loss
    log, periodic checkpoints and a final checkpoint.lnat.
    """
    rng = np.random.default_rng(cfg.seed)
    if resume is not None:
        ckpt = load_checkpoint(resume)
        model = ckpt.model
        states = ckpt.states
        start = ckpt.iteration
        if ckpt.rng_state is not None:
            rng.bit_generator.state = ckpt.rng_state
        if model.dims != video.dims:
            raise ConfigError(f"checkpoint dims {model.dims} do not match video {video.dims}")
    else:
        model = build_model(cfg, video.dims, rng)
        states = make_optimizer_states(model, cfg)
        start = 0
        pretrain_identity(model, cfg, rng)

    log_lines = [" ".join(LOG_COLUMNS)]
    log_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_file = open(os.path.join(out_dir, "loss_log.txt"), "w" if start == 0 else "a")
        if start == 0:
            log_file.write(log_lines[0] + "\n")

    try:
        for it in range(start, cfg.total_iters):
            batch = sample_batch(rng, video, flow, masks, scribbles, cfg, it < cfg.bootstrap_iters)
            total, breakdown = train_step(model, states, batch, it, cfg)
            if (it + 1) % cfg.log_interval == 0 or it == 0:
                line = format_log_line(it + 1, total, breakdown)
                log_lines.append(line)
                if log_file:
                    log_file.write(line + "\n")
                    log_file.flush()
                if progress:
                    progress(it + 1, total, breakdown)
            if out_dir and cfg.checkpoint_interval > 0 and (it + 1) % cfg.checkpoint_interval == 0:
                save_checkpoint(
                    os.path.join(out_dir, f"checkpoint_{it + 1:07d}.lnat"),
                    model, states, it + 1, rng.bit_generator.state, cfg,
                )
        if out_dir:
            save_checkpoint(
                os.path.join(out_dir, "checkpoint.lnat"),
                model, states, cfg.total_iters, rng.bit_generator.state, cfg,
            )
    finally:
        if log_file:
            log_file.close()
    return model, states, log_lines


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    model: model_mod.AtlasModel
    states: dict
    iteration: int
    rng_state: dict
    config: TrainConfig


def _spec_to_json(spec: nnet.MlpSpec):
    return {
        "widths": list(spec.layer_widths),
        "skips": sorted(spec.skip_input_layers),
        "activation": spec.output_activation,
    }


def _spec_from_json(d):
    return nnet.MlpSpec(tuple(d["widths"]), frozenset(d["skips"]), d["activation"])


def save_checkpoint(path, model, states, iteration, rng_state, cfg: TrainConfig):
    """Versioned binary container: magic, version, JSON header, then raw
    little-endian weight blobs per network in declaration order, followed by
    the Adam first- and second-moment blobs in the same order."""
    groups = model.param_groups()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": str(np.dtype(model.dtype).name),
        "iteration": int(iteration),
        "dims": list(model.dims),
        "n_foreground": model.n_foreground,
        "n_freq_alpha": model.n_freq_alpha,
        "n_freq_atlas": model.n_freq_atlas,
        "layout": [{"center": list(q.center), "half_extent": q.half_extent} for q in model.layout],
        "specs": {
            "mapping": [_spec_to_json(s) for s in model.mapping_specs],
            "alpha": _spec_to_json(model.alpha_spec),
            "atlas": _spec_to_json(model.atlas_spec),
        },
        "grid_resolution": model.grid.resolution if model.grid is not None else None,
        "blobs": [
            {"group": name, "shapes": [list(a.shape) for a in arrays]} for name, arrays in groups
        ],
        "adam": {
            name: {"t": st.t, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps}
            for name, st in states.items()
        }
        if states is not None
        else None,
        "rng_state": _jsonable(rng_state),
        "config": _jsonable(asdict(cfg)) if cfg is not None else None,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    dt = "<f4" if header["dtype"] == "float32" else "<f8"
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        np.array([CHECKPOINT_VERSION], dtype="<u4").tofile(f)
        np.array([len(payload)], dtype="<u8").tofile(f)
        f.write(payload)
        for _, arrays in groups:
            for a in arrays:
                a.astype(dt, copy=False).tofile(f)
        if states is not None:
            for moment in ("m", "v"):
                for name, _ in groups:
                    for a in getattr(states[name], moment):
                        a.astype(dt, copy=False).tofile(f)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        version = np.fromfile(f, dtype="<u4", count=1)
        if version.size != 1 or version[0] != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        header_len = np.fromfile(f, dtype="<u8", count=1)
        if header_len.size != 1:
            raise FormatError(f"{path}: truncated header length")
        raw = f.read(int(header_len[0]))
        if len(raw) != int(header_len[0]):
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(raw.decode("utf-8"))
        except ValueError as exc:
            raise FormatError(f"{path}: bad header: {exc}") from exc

        np_dtype = np.float32 if header["dtype"] == "float32" else np.float64
        dt = "<f4" if header["dtype"] == "float32" else "<f8"

        def read_array(shape):
            n = int(np.prod(shape)) if shape else 1
            arr = np.fromfile(f, dtype=dt, count=n)
            if arr.size != n:
                raise FormatError(f"{path}: truncated weight blob")
            return arr.reshape(shape).astype(np_dtype)

        specs = header["specs"]
        mapping_specs = [_spec_from_json(s) for s in specs["mapping"]]
        alpha_spec = _spec_from_json(specs["alpha"])
        atlas_spec = _spec_from_json(specs["atlas"])
        layout = [
            model_mod.Quadrant(tuple(q["center"]), q["half_extent"]) for q in header["layout"]
        ]

        group_arrays = {}
        for blob in header["blobs"]:
            group_arrays[blob["group"]] = [read_array(s) for s in blob["shapes"]]

        def to_params(spec, arrays):
            return nnet.MlpParams(arrays[0::2], arrays[1::2])

        n_fg = header["n_foreground"]
        grid = None
        if header.get("grid_resolution"):
            grid = model_mod.GridAtlas(group_arrays["grid"][0])
        m = model_mod.AtlasModel(
            mapping_specs=mapping_specs,
            mapping_params=[to_params(s, group_arrays[f"map{i}"]) for i, s in enumerate(mapping_specs)],
            alpha_spec=alpha_spec,
            alpha_params=to_params(alpha_spec, group_arrays["alpha"]),
            atlas_spec=atlas_spec,
            atlas_params=to_params(atlas_spec, group_arrays["atlas"])
            if "atlas" in group_arrays
            else nnet.init_mlp_params(atlas_spec, np.random.default_rng(0), np_dtype),
            layout=layout,
            n_foreground=n_fg,
            dims=tuple(header["dims"]),
            n_freq_alpha=header["n_freq_alpha"],
            n_freq_atlas=header["n_freq_atlas"],
            grid=grid,
        )

        states = None
        if header.get("adam") is not None:
            states = {}
            moments = {"m": {}, "v": {}}
            for moment in ("m", "v"):
                for blob in header["blobs"]:
                    moments[moment][blob["group"]] = [read_array(s) for s in blob["shapes"]]
            for blob in header["blobs"]:
                name = blob["group"]
                scalars = header["adam"][name]
                states[name] = nnet.AdamState(
                    m=moments["m"][name],
                    v=moments["v"][name],
                    t=scalars["t"],
                    lr=scalars["lr"],
                    beta1=scalars["beta1"],
                    beta2=scalars["beta2"],
                    eps=scalars["eps"],
                )

    cfg = None
    if header.get("config") is not None:
        raw_cfg = dict(header["config"])
        weights = losses.LossWeights(**raw_cfg.pop("weights"))
        cfg = TrainConfig(**raw_cfg, weights=weights)

    rng_state = header.get("rng_state")
    return Checkpoint(model=m, states=states, iteration=header["iteration"], rng_state=rng_state, config=cfg)
