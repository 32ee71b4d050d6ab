"""Dense network building blocks: MLP / stacked LSTM, dropout, MSE, Adam.

Two parameter views coexist:

* the *stacked* dict layout consumed by the kernels module (uniform hidden
  width, contiguous arrays): this is what training and artifacts use;
* per-layer `DenseLayer` / `LstmCell` objects for inspection and for the
  non-uniform reference MLP path used in gradient verification.

All stochastic behaviour is driven by an explicit numpy Generator so that
forward passes are deterministic given (parameters, input, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import (CacheMismatch, EmptySequence, NonFiniteGradient,
                     ShapeError)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
ADAM_LR = 0.001


# ---------------------------------------------------------------------------
# layer containers


@dataclass
class DenseLayer:
    weight: np.ndarray          # (out, in)
    bias: np.ndarray            # (out,)
    activation: str = "relu"    # "relu" | "identity"

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"dense layer shapes {self.weight.shape} / {self.bias.shape}")
        if self.activation not in ("relu", "identity"):
            raise ShapeError(f"unknown activation {self.activation!r}")


@dataclass
class OutputHead:
    weight: np.ndarray          # (hidden,)
    bias: float = 0.0


@dataclass
class LstmCell:
    """One LSTM layer; each gate block is a matrix over [input ++ hidden]."""
    w_input: np.ndarray
    w_forget: np.ndarray
    w_cand: np.ndarray
    w_output: np.ndarray
    b_input: np.ndarray
    b_forget: np.ndarray
    b_cand: np.ndarray
    b_output: np.ndarray

    def __post_init__(self):
        shp = self.w_input.shape
        h = shp[0]
        for w in (self.w_forget, self.w_cand, self.w_output):
            if w.shape != shp:
                raise ShapeError("LSTM gate blocks must share shapes")
        for b in (self.b_input, self.b_forget, self.b_cand, self.b_output):
            if b.shape != (h,):
                raise ShapeError("LSTM gate bias shape mismatch")

    @property
    def hidden_size(self):
        return self.w_input.shape[0]

    @property
    def input_size(self):
        return self.w_input.shape[1] - self.hidden_size


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray


@dataclass
class DropoutSpec:
    rate: float
    placement: str = "hidden"   # "hidden" (MLP) | "inputs" (LSTM, non-recurrent)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.rate < 1.0):
            raise ShapeError(f"dropout rate {self.rate} outside [0, 1)")


@dataclass
class Mlp:
    layers: list
    head: OutputHead


@dataclass
class Lstm:
    cells: list
    head: OutputHead


# ---------------------------------------------------------------------------
# initialization (stacked layout)


def _glorot(rng, out_dim, in_dim):
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def init_mlp_params(input_dim, width, n_layers, rng):
    """Glorot-uniform MLP parameters, zero biases."""
    if n_layers < 1 or width < 1 or input_dim < 1:
        raise ShapeError("MLP needs n_layers, width, input_dim >= 1")
    Wh = np.stack([_glorot(rng, width, width) for _ in range(n_layers - 1)]) \
        if n_layers > 1 else np.zeros((0, width, width))
    return {
        "W0": _glorot(rng, width, input_dim),
        "b0": np.zeros(width),
        "Wh": Wh,
        "bh": np.zeros((n_layers - 1, width)),
        "wo": _glorot(rng, 1, width)[0],
        "bo": np.zeros(()),
    }


def init_lstm_params(input_dim, hidden, stack, rng):
    """Stacked-LSTM parameters; forget-gate bias starts at 1.0."""
    if stack < 1 or hidden < 1 or input_dim < 1:
        raise ShapeError("LSTM needs stack, hidden, input_dim >= 1")

    def gate_w(in_dim):
        limit = np.sqrt(6.0 / (in_dim + 2 * hidden))
        return rng.uniform(-limit, limit, size=(4 * hidden, in_dim))

    B = np.zeros((stack, 4 * hidden))
    B[:, hidden:2 * hidden] = 1.0
    return {
        "Wx0": gate_w(input_dim),
        "Wh0": gate_w(hidden),
        "Wxd": np.stack([gate_w(hidden) for _ in range(stack - 1)])
        if stack > 1 else np.zeros((0, 4 * hidden, hidden)),
        "Whd": np.stack([gate_w(hidden) for _ in range(stack - 1)])
        if stack > 1 else np.zeros((0, 4 * hidden, hidden)),
        "B": B,
        "wo": _glorot(rng, 1, hidden)[0],
        "bo": np.zeros(()),
    }


# ---------------------------------------------------------------------------
# dropout masks (pre-scaled by 1/keep; all-ones when inactive)


def mlp_masks(rate, n_layers, width, rng=None):
    if rate <= 0.0 or rng is None:
        return np.ones((n_layers, width))
    keep = 1.0 - rate
    return (rng.random((n_layers, width)) >= rate).astype(np.float64) / keep


def lstm_masks(rate, n_steps, input_dim, stack, hidden, rng=None):
    """Non-recurrent LSTM dropout masks: inter-layer inputs and head input.

    The raw multi-hot term vectors are never dropped (each course appears
    in exactly one step, so input dropout would erase it outright instead
    of regularizing); recurrent connections are untouched as well.
    """
    dx = np.ones((n_steps, input_dim))
    if rate <= 0.0 or rng is None:
        return (dx,
                np.ones((n_steps, max(stack - 1, 0), hidden)),
                np.ones(hidden))
    keep = 1.0 - rate
    dh = (rng.random((n_steps, max(stack - 1, 0), hidden)) >= rate).astype(np.float64) / keep
    dtop = (rng.random(hidden) >= rate).astype(np.float64) / keep
    return dx, dh, dtop


# ---------------------------------------------------------------------------
# layer-list <-> stacked conversions


def mlp_params_to_layers(params):
    layers = [DenseLayer(params["W0"].copy(), params["b0"].copy(), "relu")]
    for i in range(params["Wh"].shape[0]):
        layers.append(DenseLayer(params["Wh"][i].copy(), params["bh"][i].copy(), "relu"))
    head = OutputHead(params["wo"].copy(), float(params["bo"]))
    return layers, head


def layers_to_mlp_params(layers, head):
    widths = {lyr.weight.shape[0] for lyr in layers}
    if len(widths) != 1:
        raise ShapeError("stacked layout requires a uniform hidden width")
    w = widths.pop()
    return {
        "W0": np.ascontiguousarray(layers[0].weight, dtype=np.float64),
        "b0": np.ascontiguousarray(layers[0].bias, dtype=np.float64),
        "Wh": np.stack([l.weight for l in layers[1:]]).astype(np.float64)
        if len(layers) > 1 else np.zeros((0, w, w)),
        "bh": np.stack([l.bias for l in layers[1:]]).astype(np.float64)
        if len(layers) > 1 else np.zeros((0, w)),
        "wo": np.ascontiguousarray(head.weight, dtype=np.float64),
        "bo": np.asarray(float(head.bias)),
    }


def lstm_params_to_cells(params):
    h = params["Wh0"].shape[1]
    cells = []
    for l in range(params["B"].shape[0]):
        if l == 0:
            wx, wh = params["Wx0"], params["Wh0"]
        else:
            wx, wh = params["Wxd"][l - 1], params["Whd"][l - 1]
        W = np.concatenate([wx, wh], axis=1)
        b = params["B"][l]
        cells.append(LstmCell(
            w_input=W[0:h].copy(), w_forget=W[h:2 * h].copy(),
            w_cand=W[2 * h:3 * h].copy(), w_output=W[3 * h:4 * h].copy(),
            b_input=b[0:h].copy(), b_forget=b[h:2 * h].copy(),
            b_cand=b[2 * h:3 * h].copy(), b_output=b[3 * h:4 * h].copy()))
    head = OutputHead(params["wo"].copy(), float(params["bo"]))
    return cells, head


def cells_to_lstm_params(cells, head):
    h = cells[0].hidden_size
    d = cells[0].input_size
    for c in cells[1:]:
        if c.hidden_size != h or c.input_size != h:
            raise ShapeError("stacked cells must share the hidden size")
    def stack_cell(c):
        W = np.concatenate([c.w_input, c.w_forget, c.w_cand, c.w_output])
        b = np.concatenate([c.b_input, c.b_forget, c.b_cand, c.b_output])
        return W[:, :c.input_size], W[:, c.input_size:], b
    Wx0, Wh0, b0 = stack_cell(cells[0])
    rest = [stack_cell(c) for c in cells[1:]]
    return {
        "Wx0": np.ascontiguousarray(Wx0, dtype=np.float64),
        "Wh0": np.ascontiguousarray(Wh0, dtype=np.float64),
        "Wxd": np.stack([r[0] for r in rest]).astype(np.float64)
        if rest else np.zeros((0, 4 * h, h)),
        "Whd": np.stack([r[1] for r in rest]).astype(np.float64)
        if rest else np.zeros((0, 4 * h, h)),
        "B": np.stack([b0] + [r[2] for r in rest]).astype(np.float64),
        "wo": np.ascontiguousarray(head.weight, dtype=np.float64),
        "bo": np.asarray(float(head.bias)),
    }


# ---------------------------------------------------------------------------
# forward passes and caches


@dataclass
class MlpCache:
    x: np.ndarray
    zs: list
    activations: list
    masks: list
    y: float
    param_shapes: tuple


@dataclass
class LstmCache:
    X: np.ndarray
    arrays: tuple            # (H, C, G, TC, XD, HD) from the kernel
    drop: tuple              # (drop_x, drop_h, drop_top)
    y: float
    param_shapes: tuple


def _mlp_shapes(layers, head):
    return tuple((l.weight.shape, l.bias.shape) for l in layers) + ((head.weight.shape,),)


def forward_mlp(layers, head, x, dropout: Optional[DropoutSpec] = None, rng=None):
    """Reference MLP forward (any layer widths). Returns (y, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layers[0].weight.shape[1],):
        raise ShapeError(f"input shape {x.shape} vs first layer {layers[0].weight.shape}")
    rate = dropout.rate if dropout is not None else 0.0
    if rate > 0.0 and rng is None:
        rng = np.random.default_rng(dropout.seed)
    keep = 1.0 - rate
    a = x
    zs, acts, masks = [], [], []
    for lyr in layers:
        if lyr.weight.shape[1] != a.shape[0]:
            raise ShapeError("layer input width mismatch")
        z = lyr.weight @ a + lyr.bias
        a = np.maximum(z, 0.0) if lyr.activation == "relu" else z
        if rate > 0.0:
            mask = (rng.random(a.shape) >= rate).astype(np.float64) / keep
        else:
            mask = np.ones_like(a)
        a = a * mask
        zs.append(z)
        acts.append(a)
        masks.append(mask)
    y = float(head.weight @ a + head.bias)
    return y, MlpCache(x, zs, acts, masks, y, _mlp_shapes(layers, head))


def _backward_mlp(layers, head, cache, dy):
    grads = {"wo": dy * cache.activations[-1], "bo": np.asarray(dy)}
    da = dy * head.weight
    for i in range(len(layers) - 1, -1, -1):
        lyr = layers[i]
        dz = da * cache.masks[i]
        if lyr.activation == "relu":
            dz = dz * (cache.zs[i] > 0.0)
        a_prev = cache.activations[i - 1] if i > 0 else cache.x
        grads[f"W{i}"] = np.outer(dz, a_prev)
        grads[f"b{i}"] = dz
        da = lyr.weight.T @ dz
    return grads


def forward_lstm(cells, head, seq, dropout: Optional[DropoutSpec] = None, rng=None):
    """Stacked-LSTM forward over a (T, d) sequence.

    Returns (y, states, cache) where states is the list of per-step
    LstmState for the top layer.
    """
    X = np.asarray(seq, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise EmptySequence("LSTM requires at least one time step")
    params = cells_to_lstm_params(cells, head)
    return _forward_lstm_stacked(params, X, dropout, rng)


def _forward_lstm_stacked(params, X, dropout=None, rng=None):
    d = params["Wx0"].shape[1]
    h = params["Wh0"].shape[1]
    S = params["B"].shape[0]
    if X.shape[1] != d:
        raise ShapeError(f"step width {X.shape[1]} vs cell input {d}")
    rate = dropout.rate if dropout is not None else 0.0
    if rate > 0.0 and rng is None:
        rng = np.random.default_rng(dropout.seed)
    drop_x, drop_h, drop_top = lstm_masks(rate, X.shape[0], d, S, h,
                                          rng if rate > 0.0 else None)
    out = kernels.lstm_fwd(params["Wx0"], params["Wh0"], params["Wxd"],
                           params["Whd"], params["B"], params["wo"],
                           float(params["bo"]), X, drop_x, drop_h, drop_top)
    y = float(out[0])
    H, C = out[1], out[2]
    states = [LstmState(H[t, S - 1].copy(), C[t, S - 1].copy())
              for t in range(X.shape[0])]
    shapes = tuple(sorted((k, v.shape) for k, v in params.items()))
    cache = LstmCache(X, out[1:], (drop_x, drop_h, drop_top), y, shapes)
    return y, states, cache


def compute_gradients(model, cache, label):
    """Exact gradients of the squared error (y - label)^2 w.r.t. parameters."""
    label = float(label)
    if isinstance(model, Mlp):
        if not isinstance(cache, MlpCache) or cache.param_shapes != _mlp_shapes(model.layers, model.head):
            raise CacheMismatch("cache does not match this MLP")
        dy = 2.0 * (cache.y - label)
        return _backward_mlp(model.layers, model.head, cache, dy)
    if isinstance(model, Lstm):
        params = cells_to_lstm_params(model.cells, model.head)
        shapes = tuple(sorted((k, v.shape) for k, v in params.items()))
        if not isinstance(cache, LstmCache) or cache.param_shapes != shapes:
            raise CacheMismatch("cache does not match this LSTM")
        dy = 2.0 * (cache.y - label)
        g = kernels.lstm_bwd(params["Wx0"], params["Wh0"], params["Wxd"],
                             params["Whd"], params["wo"], *cache.arrays,
                             *cache.drop, dy)
        return {"Wx0": g[0], "Wh0": g[1], "Wxd": g[2], "Whd": g[3],
                "B": g[4], "wo": g[5], "bo": np.asarray(g[6])}
    raise CacheMismatch(f"unknown model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS


def adam_init(params, lr=ADAM_LR):
    return AdamState(t=0,
                     m={k: np.zeros_like(v) for k, v in params.items()},
                     v={k: np.zeros_like(v) for k, v in params.items()},
                     lr=lr)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN/Inf")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def clip_global_norm(grads, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for k in grads:
            grads[k] = np.asarray(grads[k] * scale)
    return grads


# ---------------------------------------------------------------------------
# finite-difference verification


def finite_difference_check(params, loss_fn, grad_fn, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Returns {block name: max relative error}. loss_fn/grad_fn take the
    params dict; params are perturbed in place and restored.
    """
    analytic = grad_fn(params)
    report = {}
    for name in params:
        p = params[name]
        flat = p.reshape(-1)
        numeric = np.zeros(flat.shape)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn(params)
            flat[i] = orig - step
            lm = loss_fn(params)
            flat[i] = orig
            numeric[i] = (lp - lm) / (2.0 * step)
        a = np.asarray(analytic[name]).reshape(-1)
        if flat.size == 0:
            report[name] = 0.0
            continue
        denom = np.maximum(np.abs(a) + np.abs(numeric), 1e-8)
        report[name] = float(np.max(np.abs(a - numeric) / denom))
    return report


def gradient_check(kind, shape, seed=0, step=1e-5, dropout_rate=0.0):
    """Finite-difference report for one randomized small model.

    kind "mlp": shape = (input_dim, width, n_layers);
    kind "lstm": shape = (input_dim, hidden, stack, n_steps).
    Dropout masks, when active, are held fixed across perturbations so the
    loss stays differentiable in the parameters.
    """
    rng = np.random.default_rng(seed)
    if kind == "mlp":
        d, width, n_layers = shape
        params = init_mlp_params(d, width, n_layers, rng)
        x = rng.normal(size=d)
        label = float(rng.normal())
        masks = mlp_masks(dropout_rate, n_layers, width,
                          np.random.default_rng(seed + 1) if dropout_rate > 0 else None)

        def loss_fn(p):
            y, _, _ = kernels.mlp_fwd(p["W0"], p["b0"], p["Wh"], p["bh"],
                                      p["wo"], float(p["bo"]), x, masks)
            return (y - label) ** 2

        def grad_fn(p):
            y, Z, A = kernels.mlp_fwd(p["W0"], p["b0"], p["Wh"], p["bh"],
                                      p["wo"], float(p["bo"]), x, masks)
            g = kernels.mlp_bwd(p["W0"], p["Wh"], p["wo"], x, Z, A, masks,
                                2.0 * (y - label))
            return {"W0": g[0], "b0": g[1], "Wh": g[2], "bh": g[3],
                    "wo": g[4], "bo": np.asarray(g[5])}

    elif kind == "lstm":
        d, hidden, stack, n_steps = shape
        params = init_lstm_params(d, hidden, stack, rng)
        X = rng.normal(size=(n_steps, d))
        label = float(rng.normal())
        drop = lstm_masks(dropout_rate, n_steps, d, stack, hidden,
                          np.random.default_rng(seed + 1) if dropout_rate > 0 else None)

        def loss_fn(p):
            out = kernels.lstm_fwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"],
                                   p["B"], p["wo"], float(p["bo"]), X, *drop)
            return (out[0] - label) ** 2

        def grad_fn(p):
            out = kernels.lstm_fwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"],
                                   p["B"], p["wo"], float(p["bo"]), X, *drop)
            g = kernels.lstm_bwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"],
                                 p["wo"], *out[1:], *drop, 2.0 * (out[0] - label))
            return {"Wx0": g[0], "Wh0": g[1], "Wxd": g[2], "Whd": g[3],
                    "B": g[4], "wo": g[5], "bo": np.asarray(g[6])}
    else:
        raise ShapeError(f"unknown model kind {kind!r}")

    return finite_difference_check(params, loss_fn, grad_fn, step=step)
