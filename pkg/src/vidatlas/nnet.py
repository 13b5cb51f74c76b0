"""Minimal dense MLP engine: forward, analytic reverse-mode gradients, Adam.

Everything the per-video optimization needs, with no external learning
framework. Hidden layers use ReLU; the output layer optionally applies
tanh, sigmoid or softmax. Skip connections concatenate the original
network input to a layer's input.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError, UsageError

OUTPUT_ACTIVATIONS = ("none", "tanh", "sigmoid", "softmax")


@dataclass(frozen=True)
class MlpSpec:
    """Topology of a dense network.

    layer_widths includes the input width, e.g. (3, 256, 256, 2) is a
    3-layer net. skip_input_layers holds indices of layers whose input is
    the concatenation of the previous hidden state and the network input.
    """

    layer_widths: tuple
    skip_input_layers: frozenset = field(default_factory=frozenset)
    output_activation: str = "none"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "skip_input_layers", frozenset(int(i) for i in self.skip_input_layers))
        if len(widths) < 2:
            raise ConfigError("layer_widths needs at least input and output width")
        if any(w <= 0 for w in widths):
            raise ConfigError(f"layer widths must be positive, got {widths}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"unknown output activation {self.output_activation!r}")
        for i in self.skip_input_layers:
            if not 1 <= i <= self.n_layers - 1:
                raise ConfigError(f"skip index {i} out of range for {self.n_layers} layers")

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def in_width(self):
        return self.layer_widths[0]

    @property
    def out_width(self):
        return self.layer_widths[-1]

    def layer_in_width(self, i):
        w = self.layer_widths[i]
        if i in self.skip_input_layers:
            w += self.in_width
        return w


@dataclass
class MlpParams:
    """Weight matrices (out, in) and bias vectors for an MlpSpec."""

    weights: list
    biases: list

    def arrays(self):
        """Flat list view [W0, b0, W1, b1, ...] aliasing the stored arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def check_params(spec: MlpSpec, params: MlpParams):
    if len(params.weights) != spec.n_layers or len(params.biases) != spec.n_layers:
        raise ConfigError("parameter count does not match spec layer count")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        want = (spec.layer_widths[i + 1], spec.layer_in_width(i))
        if w.shape != want:
            raise ConfigError(f"layer {i}: weight shape {w.shape}, expected {want}")
        if b.shape != (spec.layer_widths[i + 1],):
            raise ConfigError(f"layer {i}: bias shape {b.shape}, expected ({spec.layer_widths[i + 1]},)")
    for arr in params.arrays():
        if not np.all(np.isfinite(arr)):
            raise ConfigError("parameters contain non-finite entries")


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator, dtype=np.float32) -> MlpParams:
    """Uniform weights in [-a, a] with a = sqrt(1/fan_in); zero biases."""
    weights, biases = [], []
    for i in range(spec.n_layers):
        fan_in = spec.layer_in_width(i)
        a = np.sqrt(1.0 / fan_in)
        w = rng.uniform(-a, a, size=(spec.layer_widths[i + 1], fan_in)).astype(dtype)
        weights.append(w)
        biases.append(np.zeros(spec.layer_widths[i + 1], dtype=dtype))
    return MlpParams(weights, biases)


def zeros_like_params(params: MlpParams):
    return [np.zeros_like(a) for a in params.arrays()]


# ---------------------------------------------------------------------------
# positional encoding


def posenc(s, n_freq: int):
    """Encode scalars as [sin(2^k pi s), cos(2^k pi s)] for k = 0..n_freq-1.

    The raw scalar is not appended. Input shape (...,) maps to output
    shape (..., 2 * n_freq) with sin/cos interleaved per frequency.
    """
    if n_freq < 1:
        raise ConfigError("positional encoding needs at least one frequency")
    s = np.asarray(s)
    freqs = (2.0 ** np.arange(n_freq)) * np.pi
    ang = s[..., None] * freqs.astype(s.dtype, copy=False)
    out = np.empty(s.shape + (2 * n_freq,), dtype=s.dtype if s.dtype.kind == "f" else np.float64)
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def posenc_backward(s, n_freq: int, upstream):
    """d(posenc)/ds chained with upstream of shape (..., 2 * n_freq)."""
    s = np.asarray(s)
    freqs = (2.0 ** np.arange(n_freq)) * np.pi
    ang = s[..., None] * freqs.astype(s.dtype, copy=False)
    d_sin = np.cos(ang) * freqs
    d_cos = -np.sin(ang) * freqs
    return (upstream[..., 0::2] * d_sin + upstream[..., 1::2] * d_cos).sum(axis=-1)


# ---------------------------------------------------------------------------
# forward / backward


def _apply_output_activation(kind, z):
    if kind == "none":
        return z
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        # stable in both tails
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ConfigError(f"unknown output activation {kind!r}")


def mlp_forward(spec: MlpSpec, params: MlpParams, x, want_cache: bool = False):
    """Evaluate the network on a batch (B, in_width) or a single (in_width,).

    With want_cache=True, returns (y, cache) where cache stores the
    per-layer inputs and pre-activations needed by mlp_backward.
    """
    x = np.asarray(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[-1] != spec.in_width:
        raise ConfigError(f"input width {x.shape[-1]}, spec expects {spec.in_width}")
    x0 = x
    h = x
    layer_inputs = []
    pre_acts = []
    for i in range(spec.n_layers):
        if i in spec.skip_input_layers:
            h = np.concatenate([h, x0], axis=-1)
        layer_inputs.append(h)
        z = h @ params.weights[i].T + params.biases[i]
        pre_acts.append(z)
        if i < spec.n_layers - 1:
            h = np.maximum(z, 0.0)
        else:
            h = _apply_output_activation(spec.output_activation, z)
    y = h[0] if squeeze else h
    if not want_cache:
        return y
    cache = {"x0": x0, "inputs": layer_inputs, "pre": pre_acts, "out": h, "squeeze": squeeze}
    return y, cache


def mlp_backward(spec: MlpSpec, params: MlpParams, cache, upstream):
    """Exact gradients of sum(output * upstream) w.r.t. parameters and input.

    Requires the cache from a prior mlp_forward(..., want_cache=True).
    Returns (param_grads, input_grad) with param_grads as the flat
    [dW0, db0, dW1, db1, ...] list; gradients are summed over the batch.
    """
    if cache is None:
        raise UsageError("mlp_backward needs the cache of a preceding forward pass")
    upstream = np.asarray(upstream)
    if upstream.ndim == 1:
        upstream = upstream[None, :]
    y = cache["out"]
    kind = spec.output_activation
    if kind == "none":
        dz = upstream
    elif kind == "tanh":
        dz = upstream * (1.0 - y * y)
    elif kind == "sigmoid":
        dz = upstream * y * (1.0 - y)
    elif kind == "softmax":
        dz = y * (upstream - (upstream * y).sum(axis=-1, keepdims=True))
    else:
        raise ConfigError(f"unknown output activation {kind!r}")

    d_weights = [None] * spec.n_layers
    d_biases = [None] * spec.n_layers
    dx0 = np.zeros_like(cache["x0"])
    for i in reversed(range(spec.n_layers)):
        inp = cache["inputs"][i]
        d_weights[i] = dz.T @ inp
        d_biases[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i]
        if i in spec.skip_input_layers:
            dh, dskip = dh[..., : spec.layer_widths[i]], dh[..., spec.layer_widths[i] :]
            dx0 += dskip
        if i > 0:
            dz = dh * (cache["pre"][i - 1] > 0)
        else:
            dx0 += dh
    grads = []
    for dw, db in zip(d_weights, d_biases):
        grads.append(dw)
        grads.append(db)
    if cache["squeeze"]:
        dx0 = dx0[0]
    return grads, dx0


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """First/second moment accumulators over a flat list of parameter arrays."""

    m: list
    v: list
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            t=0,
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(state: AdamState, arrays, grads, context: str = ""):
    """One bias-corrected Adam update, applied in place to `arrays`.

    Returns (state, arrays). Deterministic: identical inputs produce
    bit-identical outputs.
    """
    if len(arrays) != len(state.m) or len(grads) != len(state.m):
        raise ConfigError("adam_step: array/gradient count does not match state")
    for g in grads:
        if not np.all(np.isfinite(g)):
            where = f" in {context}" if context else ""
            raise TrainingError(f"non-finite gradient{where}")
    state.t += 1
    b1t = 1.0 - state.beta1 ** state.t
    b2t = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
    return state, arrays
