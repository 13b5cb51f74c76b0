"""Training objective: every loss term with value and exact analytic gradients.

Terms are evaluated over a batch (struct-of-arrays SampleBatch); each term's
reported value is the batch mean of its per-sample contribution, and the
returned gradients are gradients of that mean. A single fused evaluator
stacks all required evaluation sites per network so each network does one
forward and one backward pass per call.
"""

from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from . import nnet
from .errors import ConfigError

RIGID_EPS = 1e-8  # regularizer added to J^T J before inversion
PROB_EPS = 1e-7  # probability clamp for all log terms

TERM_NAMES = ("color", "rigid", "global_rigid", "flow", "sparsity", "mask_bce", "scribble")


@dataclass
class LossWeights:
    """Term weights and per-term enable flags.

    The source notation overloads one symbol for both the RGB-reconstruction
    weight (5000) and the rigidity weight (5); they are separate fields here.
    `tv` is reserved: no total-variation term exists in the objective.
    """

    recon_rgb: float = 5000.0
    recon_grad: float = 1000.0
    rigid: float = 5.0
    flow: float = 5.0
    flow_alpha: float = 50.0
    sparsity: float = 1000.0
    tv: float = 100.0
    mask_bootstrap: float = 2.0
    global_rigid: float = 5.0
    enable_color: bool = True
    enable_rigid: bool = True
    enable_flow: bool = True
    enable_sparsity: bool = True
    enable_mask: bool = True
    enable_global_rigid: bool = True
    enable_scribble: bool = True

    def __post_init__(self):
        for name in ("recon_rgb", "recon_grad", "rigid", "flow", "flow_alpha", "sparsity", "tv", "mask_bootstrap", "global_rigid"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    def enabled_terms(self):
        names = []
        if self.enable_color:
            names.append("color")
        if self.enable_rigid:
            names.append("rigid")
        if self.enable_global_rigid:
            names.append("global_rigid")
        if self.enable_flow:
            names.append("flow")
        if self.enable_sparsity:
            names.append("sparsity")
        if self.enable_mask:
            names.append("mask_bce")
        if self.enable_scribble:
            names.append("scribble")
        return tuple(names)


@dataclass
class SampleBatch:
    """One batch of sample points with everything the loss terms consume.

    pts are integer pixel coordinates (x, y, t) stored as float; offsets
    p + (1,0,0) and p + (0,1,0) must stay in bounds. flow_pts holds the
    (possibly fractional) flow correspondent of each point, flow_valid the
    forward-backward consistency flag W. g_dx / g_dy are the per-sample
    global-rigidity offsets (100 px, clamped near borders). sparsity_uv is
    one uniform UV draw from the foreground quadrants per point (used only
    with two or more foreground layers).
    """

    pts: np.ndarray
    gt_color: np.ndarray
    gt_dx: np.ndarray
    gt_dy: np.ndarray
    flow_pts: np.ndarray
    flow_valid: np.ndarray
    mask: np.ndarray
    scrib: np.ndarray
    g_dx: np.ndarray
    g_dy: np.ndarray
    sparsity_uv: np.ndarray = None

    def __len__(self):
        return len(self.pts)


# ---------------------------------------------------------------------------
# symmetric Dirichlet rigidity energy


def rigidity_energy(J):
    """||J^T J||_F + ||(J^T J + eps I)^-1||_F for 2x2 Jacobians (..., 2, 2).

    Minimized (value 2*sqrt(2)) exactly on orthogonal J; depends only on
    the singular values of J. The eps-regularized inverse keeps degenerate
    Jacobians large-but-finite.
    """
    e, _ = _dirichlet(np.asarray(J, dtype=np.float64), want_grad=False)
    return e


def _dirichlet(J, want_grad=True):
    # S = J^T J, symmetric PSD
    a = J[..., 0, 0] * J[..., 0, 0] + J[..., 1, 0] * J[..., 1, 0]
    b = J[..., 0, 0] * J[..., 0, 1] + J[..., 1, 0] * J[..., 1, 1]
    c = J[..., 0, 1] * J[..., 0, 1] + J[..., 1, 1] * J[..., 1, 1]
    ns = np.sqrt(a * a + 2.0 * b * b + c * c)
    ar = a + RIGID_EPS
    cr = c + RIGID_EPS
    det = ar * cr - b * b
    ma = cr / det
    mb = -b / det
    mc = ar / det
    nm = np.sqrt(ma * ma + 2.0 * mb * mb + mc * mc)
    e = ns + nm
    if not want_grad:
        return e, None
    # dE/dJ = 2 J (S / ||S|| - M^3 / ||M||), M = (S + eps I)^-1
    ns_safe = np.maximum(ns, 1e-300)
    nm_safe = np.maximum(nm, 1e-300)
    # M^2 then M^3 (all symmetric 2x2, stored as (a, b, c))
    m2a = ma * ma + mb * mb
    m2b = mb * (ma + mc)
    m2c = mb * mb + mc * mc
    m3a = ma * m2a + mb * m2b
    m3b = ma * m2b + mb * m2c
    m3c = mb * m2b + mc * m2c
    ga = a / ns_safe - m3a / nm_safe
    gb = b / ns_safe - m3b / nm_safe
    gc = c / ns_safe - m3c / nm_safe
    dJ = np.empty_like(J)
    dJ[..., 0, 0] = 2.0 * (J[..., 0, 0] * ga + J[..., 0, 1] * gb)
    dJ[..., 1, 0] = 2.0 * (J[..., 1, 0] * ga + J[..., 1, 1] * gb)
    dJ[..., 0, 1] = 2.0 * (J[..., 0, 0] * gb + J[..., 0, 1] * gc)
    dJ[..., 1, 1] = 2.0 * (J[..., 1, 0] * gb + J[..., 1, 1] * gc)
    return e, dJ


# ---------------------------------------------------------------------------
# fused evaluation context


class _Eval:
    """Forward state for one batch: stacked per-network evaluations plus
    gradient slabs that loss terms accumulate into."""

    def __init__(self, model, batch, terms):
        self.model = model
        self.batch = batch
        self.terms = set(terms)
        self.B = len(batch)
        self.dt = model.dtype
        self.multi = model.n_foreground >= 2
        if np.any(batch.scrib > 0) and not self.multi:
            raise ConfigError("scribble labels require at least two foreground layers")

        t = self.terms
        self.need_pxy = bool({"color", "rigid"} & t)
        self.need_pf = "flow" in t
        self.need_g = "global_rigid" in t
        self.alpha_sites = []
        if {"color", "flow", "sparsity", "mask_bce", "scribble"} & t:
            self.alpha_sites.append("p")
        if "color" in t:
            self.alpha_sites += ["px", "py"]
        if "flow" in t:
            self.alpha_sites.append("pf")
        if "color" in t:
            self.color_sites = ["p", "px", "py"]
        elif "sparsity" in t and not self.multi:
            self.color_sites = ["p"]
        else:
            self.color_sites = []
        self.map_sites = []
        if {"color", "rigid", "global_rigid", "flow"} & t or ("sparsity" in t and not self.multi):
            self.map_sites.append("p")
        if self.need_pxy:
            self.map_sites += ["px", "py"]
        if self.need_pf:
            self.map_sites.append("pf")
        if self.need_g:
            self.map_sites += ["pgx", "pgy"]
        self.need_sp_uv = "sparsity" in t and self.multi

        self._forward()
        # gradient slabs, filled by the terms then drained by backward()
        self.d_uv = {}
        self.d_recon = {}
        self.d_w = {}
        self.d_color = {}
        self.d_sp = None

    # -- forward ------------------------------------------------------------

    def _site_coords(self, site):
        p = self.batch.pts
        if site == "p":
            return p
        if site == "px":
            return p + np.array([1.0, 0.0, 0.0])
        if site == "py":
            return p + np.array([0.0, 1.0, 0.0])
        if site == "pf":
            return self.batch.flow_pts
        if site == "pgx":
            off = np.zeros_like(p)
            off[:, 0] = self.batch.g_dx
            return p + off
        if site == "pgy":
            off = np.zeros_like(p)
            off[:, 1] = self.batch.g_dy
            return p + off
        raise KeyError(site)

    def _forward(self):
        m = self.model
        sites = sorted(set(self.map_sites) | set(self.alpha_sites), key="p px py pf pgx pgy".split().index)
        self.norm = {
            s: model_mod.normalize_points(m.dims, self._site_coords(s)).astype(self.dt) for s in sites
        }
        B = self.B

        self.map_caches = []
        self.uv = {}  # (site, layer) -> (B, 2)
        if self.map_sites:
            x = np.concatenate([self.norm[s] for s in self.map_sites], axis=0)
            for li in range(m.n_layers):
                raw, cache = nnet.mlp_forward(m.mapping_specs[li], m.mapping_params[li], x, want_cache=True)
                self.map_caches.append(cache)
                q = m.layout[li]
                uv = np.asarray(q.center, dtype=raw.dtype) + q.half_extent * raw
                for i, s in enumerate(self.map_sites):
                    self.uv[(s, li)] = uv[i * B : (i + 1) * B]
        else:
            self.map_caches = [None] * m.n_layers

        self.alpha_cache = None
        self.w = {}  # site -> (B, n_layers)
        if self.alpha_sites:
            xa = np.concatenate(
                [model_mod.encode_point(self.norm[s], m.n_freq_alpha) for s in self.alpha_sites], axis=0
            )
            ya, self.alpha_cache = nnet.mlp_forward(m.alpha_spec, m.alpha_params, xa, want_cache=True)
            if m.n_foreground == 1:
                wa = np.concatenate([1.0 - ya, ya], axis=-1)
            else:
                wa = ya
            for i, s in enumerate(self.alpha_sites):
                self.w[s] = wa[i * B : (i + 1) * B]

        # atlas rows: color sites x layers, then the sparsity UV block
        self.atlas_rows = [(s, li) for s in self.color_sites for li in range(m.n_layers)]
        uv_blocks = [self.uv[key] for key in self.atlas_rows]
        if self.need_sp_uv:
            if self.batch.sparsity_uv is None:
                raise ConfigError("multi-layer sparsity needs sparsity_uv samples in the batch")
            uv_blocks.append(self.batch.sparsity_uv.astype(self.dt))
        self.atlas_cache = None
        self.colors = {}
        self.sp_color = None
        if uv_blocks:
            uv_all = np.concatenate(uv_blocks, axis=0)
            self.atlas_uv_rows = uv_all
            if m.grid is not None:
                col_all = model_mod.grid_sample(m.grid, uv_all).astype(self.dt)
            else:
                enc = model_mod.encode_uv(uv_all, m.n_freq_atlas)
                y, self.atlas_cache = nnet.mlp_forward(m.atlas_spec, m.atlas_params, enc, want_cache=True)
                col_all = (y + 1.0) / 2.0
            for i, key in enumerate(self.atlas_rows):
                self.colors[key] = col_all[i * B : (i + 1) * B]
            if self.need_sp_uv:
                self.sp_color = col_all[len(self.atlas_rows) * B :]

        self.recon = {}
        for s in self.color_sites:
            acc = np.zeros((B, 3), dtype=np.float64)
            for li in range(m.n_layers):
                acc += self.w[s][:, li : li + 1].astype(np.float64) * self.colors[(s, li)]
            self.recon[s] = acc

    # -- slab accessors -----------------------------------------------------

    def add_uv(self, site, layer, grad):
        key = (site, layer)
        if key not in self.d_uv:
            self.d_uv[key] = np.zeros((self.B, 2), dtype=np.float64)
        self.d_uv[key] += grad

    def add_recon(self, site, grad):
        if site not in self.d_recon:
            self.d_recon[site] = np.zeros((self.B, 3), dtype=np.float64)
        self.d_recon[site] += grad

    def add_w(self, site, grad):
        if site not in self.d_w:
            self.d_w[site] = np.zeros((self.B, self.model.n_layers), dtype=np.float64)
        self.d_w[site] += grad

    def add_color(self, site, layer, grad):
        key = (site, layer)
        if key not in self.d_color:
            self.d_color[key] = np.zeros((self.B, 3), dtype=np.float64)
        self.d_color[key] += grad

    def add_sp(self, grad):
        if self.d_sp is None:
            self.d_sp = np.zeros((self.B, 3), dtype=np.float64)
        self.d_sp += grad

    # -- backward -----------------------------------------------------------

    def backward(self):
        """Chain accumulated slab gradients into per-network parameter grads."""
        m = self.model
        B = self.B
        grads = {name: [np.zeros_like(a) for a in arrs] for name, arrs in m.param_groups()}

        # reconstruction -> blend weights and per-layer colors
        for s, dr in self.d_recon.items():
            for li in range(m.n_layers):
                self.add_w(s, _one_hot_col(dr * self.colors[(s, li)], li, m.n_layers))
                self.add_color(s, li, self.w[s][:, li : li + 1].astype(np.float64) * dr)

        # atlas (network or grid): colors -> params and uv
        if self.atlas_rows or self.sp_color is not None:
            n_rows = len(self.atlas_rows) * B + (B if self.need_sp_uv else 0)
            up = np.zeros((n_rows, 3), dtype=self.dt)
            for i, key in enumerate(self.atlas_rows):
                if key in self.d_color:
                    up[i * B : (i + 1) * B] = self.d_color[key]
            if self.need_sp_uv and self.d_sp is not None:
                up[len(self.atlas_rows) * B :] = self.d_sp
            if m.grid is not None:
                d_tex, d_uv_rows = model_mod.grid_sample_backward(m.grid, self.atlas_uv_rows, up)
                grads["grid"][0] += d_tex
            else:
                d_y = 0.5 * up
                g, d_enc = nnet.mlp_backward(m.atlas_spec, m.atlas_params, self.atlas_cache, d_y)
                for gi, acc in zip(g, grads["atlas"]):
                    acc += gi
                n = m.n_freq_atlas
                u = self.atlas_uv_rows[:, 0]
                v = self.atlas_uv_rows[:, 1]
                d_uv_rows = np.stack(
                    [
                        nnet.posenc_backward(u, n, d_enc[:, : 2 * n]),
                        nnet.posenc_backward(v, n, d_enc[:, 2 * n :]),
                    ],
                    axis=-1,
                )
            for i, key in enumerate(self.atlas_rows):
                self.add_uv(key[0], key[1], d_uv_rows[i * B : (i + 1) * B])
            # sparsity rows are exogenous UV draws; their uv gradient is dropped

        # alpha network
        if self.alpha_sites and self.d_w:
            out_w = m.alpha_spec.out_width
            up = np.zeros((len(self.alpha_sites) * B, out_w), dtype=self.dt)
            for i, s in enumerate(self.alpha_sites):
                if s not in self.d_w:
                    continue
                dw = self.d_w[s]
                if m.n_foreground == 1:
                    up[i * B : (i + 1) * B, 0] = dw[:, 1] - dw[:, 0]
                else:
                    up[i * B : (i + 1) * B] = dw
            g, _ = nnet.mlp_backward(m.alpha_spec, m.alpha_params, self.alpha_cache, up)
            for gi, acc in zip(g, grads["alpha"]):
                acc += gi

        # mapping networks
        if self.map_sites:
            for li in range(m.n_layers):
                up = np.zeros((len(self.map_sites) * B, 2), dtype=self.dt)
                touched = False
                for i, s in enumerate(self.map_sites):
                    key = (s, li)
                    if key in self.d_uv:
                        up[i * B : (i + 1) * B] = m.layout[li].half_extent * self.d_uv[key]
                        touched = True
                if not touched:
                    continue
                g, _ = nnet.mlp_backward(m.mapping_specs[li], m.mapping_params[li], self.map_caches[li], up)
                for gi, acc in zip(g, grads[f"map{li}"]):
                    acc += gi
        return grads


def _one_hot_col(values, col, n_cols):
    out = np.zeros((values.shape[0], n_cols), dtype=np.float64)
    out[:, col] = values.sum(axis=-1)
    return out


# ---------------------------------------------------------------------------
# individual terms (value = batch mean; gradients accumulate into ctx slabs)


def _term_color(ctx, w: LossWeights):
    b = ctx.batch
    inv_b = 1.0 / ctx.B
    r = ctx.recon["p"] - b.gt_color
    rx = (ctx.recon["px"] - ctx.recon["p"]) - b.gt_dx
    ry = (ctx.recon["py"] - ctx.recon["p"]) - b.gt_dy
    value = inv_b * (
        w.recon_rgb * np.sum(r * r) + w.recon_grad * (np.sum(rx * rx) + np.sum(ry * ry))
    )
    ctx.add_recon("p", inv_b * (2.0 * w.recon_rgb * r - 2.0 * w.recon_grad * (rx + ry)))
    ctx.add_recon("px", inv_b * 2.0 * w.recon_grad * rx)
    ctx.add_recon("py", inv_b * 2.0 * w.recon_grad * ry)
    return value


def _nominal_scale(model, layer):
    t_len, h, w = model.dims
    return 2.0 * model.layout[layer].half_extent / max(w - 1, h - 1)


def _term_rigidity(ctx, weight, sx_pixels, sy_pixels, site_x, site_y):
    """Shared core of the local (delta = 1) and global (delta = 100) terms."""
    m = ctx.model
    inv_b = 1.0 / ctx.B
    value = 0.0
    for li in range(m.n_layers):
        s = _nominal_scale(m, li)
        sx = (sx_pixels * s)[:, None]
        sy = (sy_pixels * s)[:, None]
        uv_p = ctx.uv[("p", li)].astype(np.float64)
        cx = (ctx.uv[(site_x, li)].astype(np.float64) - uv_p) / sx
        cy = (ctx.uv[(site_y, li)].astype(np.float64) - uv_p) / sy
        J = np.stack([cx, cy], axis=-1)
        e, dJ = _dirichlet(J)
        value += weight * inv_b * float(e.sum())
        scale = weight * inv_b
        gx = scale * dJ[..., 0] / sx
        gy = scale * dJ[..., 1] / sy
        ctx.add_uv(site_x, li, gx)
        ctx.add_uv(site_y, li, gy)
        ctx.add_uv("p", li, -(gx + gy))
    return value


def _term_rigid(ctx, w: LossWeights):
    ones = np.ones(ctx.B)
    return _term_rigidity(ctx, w.rigid, ones, ones, "px", "py")


def _term_global_rigid(ctx, w: LossWeights):
    return _term_rigidity(ctx, w.global_rigid, ctx.batch.g_dx, ctx.batch.g_dy, "pgx", "pgy")


def _term_flow(ctx, w: LossWeights):
    m = ctx.model
    b = ctx.batch
    inv_b = 1.0 / ctx.B
    active = b.flow_valid.astype(np.float64)
    wp = ctx.w["p"].astype(np.float64)
    wf = ctx.w["pf"].astype(np.float64)
    value = 0.0
    for li in range(m.n_layers):
        diff = ctx.uv[("p", li)].astype(np.float64) - ctx.uv[("pf", li)].astype(np.float64)
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        value += w.flow * inv_b * float(np.sum(active * wp[:, li] * dist))
        unit = np.where(dist[:, None] > 0, diff / np.maximum(dist[:, None], 1e-300), 0.0)
        g = (w.flow * inv_b) * (active * wp[:, li])[:, None] * unit
        ctx.add_uv("p", li, g)
        ctx.add_uv("pf", li, -g)
        ctx.add_w("p", _one_hot_col((w.flow * inv_b) * (active * dist)[:, None], li, m.n_layers))
    if m.n_foreground == 1:
        da = wp[:, 1] - wf[:, 1]
        value += w.flow_alpha * inv_b * float(np.sum(active * np.abs(da)))
        sg = (w.flow_alpha * inv_b) * active * np.sign(da)
        ctx.add_w("p", _one_hot_col(sg[:, None], 1, m.n_layers))
        ctx.add_w("pf", _one_hot_col(-sg[:, None], 1, m.n_layers))
    else:
        da = wp - wf
        value += w.flow_alpha * inv_b * float(np.sum(active[:, None] * np.abs(da)))
        sg = (w.flow_alpha * inv_b) * active[:, None] * np.sign(da)
        ctx.add_w("p", sg)
        ctx.add_w("pf", -sg)
    return value


def _term_sparsity(ctx, w: LossWeights):
    m = ctx.model
    inv_b = 1.0 / ctx.B
    if not ctx.multi:
        cf = ctx.colors[("p", 1)].astype(np.float64)
        a = ctx.w["p"][:, 1].astype(np.float64)
        sq = np.sum(cf * cf, axis=-1)
        value = w.sparsity * inv_b * float(np.sum((1.0 - a) ** 2 * sq))
        ctx.add_color("p", 1, (w.sparsity * inv_b) * 2.0 * ((1.0 - a) ** 2)[:, None] * cf)
        ctx.add_w("p", _one_hot_col((-(w.sparsity * inv_b) * 2.0 * (1.0 - a) * sq)[:, None], 1, m.n_layers))
        return value
    c = ctx.sp_color.astype(np.float64)
    value = w.sparsity * inv_b * float(np.sum(np.abs(c)))
    ctx.add_sp((w.sparsity * inv_b) * np.sign(c))
    return value


def _bce_and_grad(prob, label):
    clamped = np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)
    bce = -(label * np.log(clamped) + (1.0 - label) * np.log1p(-clamped))
    inside = (prob > PROB_EPS) & (prob < 1.0 - PROB_EPS)
    grad = np.where(inside, -label / clamped + (1.0 - label) / (1.0 - clamped), 0.0)
    return bce, grad


def _term_mask_bce(ctx, w: LossWeights):
    m = ctx.model
    inv_b = 1.0 / ctx.B
    label = ctx.batch.mask.astype(np.float64)
    wp = ctx.w["p"].astype(np.float64)
    if m.n_foreground == 1:
        afg = wp[:, 1]
    else:
        afg = wp[:, 1:].sum(axis=-1)
    bce, grad = _bce_and_grad(afg, label)
    value = w.mask_bootstrap * inv_b * float(bce.sum())
    g = (w.mask_bootstrap * inv_b) * grad
    dw = np.zeros((ctx.B, m.n_layers), dtype=np.float64)
    dw[:, 1:] = g[:, None]
    ctx.add_w("p", dw)
    return value


def _term_scribble(ctx, w: LossWeights):
    m = ctx.model
    inv_b = 1.0 / ctx.B
    scrib = ctx.batch.scrib
    if not np.any(scrib > 0):
        return 0.0
    wp = ctx.w["p"].astype(np.float64)
    value = 0.0
    dw = np.zeros((ctx.B, m.n_layers), dtype=np.float64)
    for code, layer in ((1, 1), (2, 2)):
        sel = scrib == code
        if not np.any(sel):
            continue
        a = wp[sel, layer]
        clamped = np.clip(a, PROB_EPS, 1.0 - PROB_EPS)
        value += inv_b * float(-np.log(clamped).sum())
        inside = a > PROB_EPS
        dw[sel, layer] = np.where(inside, -1.0 / clamped, 0.0) * inv_b
    ctx.add_w("p", dw)
    return value


_TERM_FNS = {
    "color": _term_color,
    "rigid": _term_rigid,
    "global_rigid": _term_global_rigid,
    "flow": _term_flow,
    "sparsity": _term_sparsity,
    "mask_bce": _term_mask_bce,
    "scribble": _term_scribble,
}


# ---------------------------------------------------------------------------
# public entry points


def evaluate_terms(model, batch, weights: LossWeights, terms, want_grads=True):
    """Evaluate the named terms; returns (total, breakdown, grads or None).

    Terms not named contribute exactly 0 to value and gradient. Gradients
    cover every parameter group of the model (zeros where a network does
    not participate).
    """
    for t in terms:
        if t not in _TERM_FNS:
            raise ConfigError(f"unknown loss term {t!r}")
    ctx = _Eval(model, batch, terms)
    breakdown = {name: 0.0 for name in TERM_NAMES}
    for t in terms:
        breakdown[t] = float(_TERM_FNS[t](ctx, weights))
    total = float(sum(breakdown.values()))
    if not want_grads:
        return total, breakdown, None
    return total, breakdown, ctx.backward()


def total_loss(model, batch, weights: LossWeights, iteration, bootstrap_iters, want_grads=True):
    """Weighted sum of enabled terms; bootstrap-only terms (mask BCE, global
    rigidity, scribbles) participate only while iteration < bootstrap_iters.

    After bootstrap the computation never touches mask or scribble labels.
    """
    terms = list(weights.enabled_terms())
    if iteration >= bootstrap_iters:
        for t in ("mask_bce", "global_rigid", "scribble"):
            if t in terms:
                terms.remove(t)
    return evaluate_terms(model, batch, weights, terms, want_grads=want_grads)


def _single_term(model, batch, weights, term):
    total, _, grads = evaluate_terms(model, batch, weights, (term,))
    return total, grads


def loss_color(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "color")


def loss_rigid(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "rigid")


def loss_global_rigid(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "global_rigid")


def loss_flow(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "flow")


def loss_sparsity(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "sparsity")


def loss_mask_bce(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "mask_bce")


def loss_scribble(model, batch, weights: LossWeights):
    return _single_term(model, batch, weights, "scribble")
