"""Bidirectional multi-layer GRU decoder with a dense combiner and sigmoid head.

A window of ``2 * ramp_len + loss_depth`` steps (two channel observations per
step) runs through a forward and a backward GRU stack. The per-step outputs of
both directions are concatenated, the first and last ``ramp_len`` steps are
dropped, and each remaining step goes through an ELU combiner and a single
sigmoid neuron giving ``P(u_k = 1)``. The regression variant trained with MSE
uses a linear output neuron instead (``head_activation="linear"``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor_nn as nn

FORWARD, BACKWARD = 0, 1


@dataclass(frozen=True)
class DecoderConfig:
    ramp_len: int
    loss_depth: int
    gru_layers: int = 3
    gru_width: int = 256
    combiner_width: int = 16
    input_width: int = 2
    head_activation: str = "sigmoid"  # "linear" for the regression (MSE) variant

    def __post_init__(self):
        if self.ramp_len < 0:
            raise ValueError("ramp_len must be >= 0")
        if self.loss_depth < 1:
            raise ValueError("loss_depth must be >= 1")
        if self.gru_layers < 1 or self.gru_width < 1 or self.combiner_width < 1:
            raise ValueError("layer counts and widths must be positive")
        if self.head_activation not in ("sigmoid", "linear"):
            raise ValueError(f"head_activation must be 'sigmoid' or 'linear', got {self.head_activation!r}")

    @property
    def window_len(self) -> int:
        return 2 * self.ramp_len + self.loss_depth

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: DecoderConfig) -> dict[str, tuple]:
    """Parameter names and shapes. GRU tensors stack [forward, backward] on axis 0."""
    H = cfg.gru_width
    shapes = {}
    for layer in range(cfg.gru_layers):
        d = cfg.input_width if layer == 0 else H
        shapes[f"gru{layer}.W"] = (2, d, 3 * H)
        shapes[f"gru{layer}.U"] = (2, H, 3 * H)
        shapes[f"gru{layer}.b"] = (2, 3 * H)
    shapes["combiner.W"] = (2 * H, cfg.combiner_width)
    shapes["combiner.b"] = (cfg.combiner_width,)
    shapes["head.W"] = (cfg.combiner_width, 1)
    shapes["head.b"] = (1,)
    return shapes


def init_params(cfg: DecoderConfig, rng: np.random.Generator, dtype=np.float32) -> nn.Params:
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = nn.glorot_init(shape, rng, dtype)
    return params


def check_params(cfg: DecoderConfig, params: nn.Params) -> None:
    expected = param_shapes(cfg)
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ValueError(f"parameter names disagree with config (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ValueError(f"{name}: shape {params[name].shape} does not match config {shape}")


def swap_directions(params: nn.Params) -> nn.Params:
    """Exchange the forward and backward stacks, including their combiner rows."""
    out = dict(params)
    for name, p in params.items():
        if name.startswith("gru"):
            out[name] = p[::-1].copy()
    W = params["combiner.W"]
    H = W.shape[0] // 2
    out["combiner.W"] = np.concatenate([W[H:], W[:H]])
    return out


def forward(window: np.ndarray, params: nn.Params, cfg: DecoderConfig):
    """Soft outputs for a batch of windows (B, window_len, 2) -> (B, loss_depth)."""
    window = np.asarray(window)
    if window.ndim == 2:
        p_hat, cache = forward(window[None], params, cfg)
        return p_hat[0], cache
    B, T, D = window.shape
    if T != cfg.window_len or D != cfg.input_width:
        raise ValueError(f"window shape {window.shape[1:]} does not match config "
                         f"({cfg.window_len}, {cfg.input_width})")
    dtype = params["head.W"].dtype
    H = cfg.gru_width
    x = np.stack([window, window[:, ::-1]]).astype(dtype)  # (2, B, T, D)
    h0 = np.zeros((2, B, H), dtype=dtype)
    gru_caches = []
    for layer in range(cfg.gru_layers):
        p = {k: params[f"gru{layer}.{k}"] for k in "WUb"}
        x, c = nn.gru_forward(x, h0, p)
        gru_caches.append(c)
    lo, hi = cfg.ramp_len, cfg.ramp_len + cfg.loss_depth
    fwd = x[FORWARD][:, lo:hi]
    bwd = x[BACKWARD][:, ::-1][:, lo:hi]
    feats = np.concatenate([fwd, bwd], axis=-1)  # (B, loss_depth, 2H)
    comb, comb_cache = nn.dense_forward(feats, params["combiner.W"], params["combiner.b"], "elu")
    out, head_cache = nn.dense_forward(comb, params["head.W"], params["head.b"],
                                        cfg.head_activation)
    return out[..., 0], (cfg, x.shape, gru_caches, comb_cache, head_cache)


def backward(grad_p: np.ndarray, cache):
    """Parameter gradients and the gradient w.r.t. the input window."""
    cfg, xs_shape, gru_caches, comb_cache, head_cache = cache
    single = grad_p.ndim == 1
    if single:
        grad_p = grad_p[None]
    grads = {}
    g, gh = nn.dense_backward(grad_p[..., None].astype(head_cache[0].dtype), head_cache)
    grads["head.W"], grads["head.b"] = gh["W"], gh["b"]
    g, gc = nn.dense_backward(g, comb_cache)
    grads["combiner.W"], grads["combiner.b"] = gc["W"], gc["b"]
    H = cfg.gru_width
    lo, hi = cfg.ramp_len, cfg.ramp_len + cfg.loss_depth
    gx = np.zeros(xs_shape, dtype=g.dtype)
    gx[FORWARD][:, lo:hi] = g[..., :H]
    # backward-direction outputs are stored in reversed time
    T = xs_shape[2]
    gx[BACKWARD][:, T - hi:T - lo] = g[..., H:][:, ::-1]
    for layer in range(cfg.gru_layers - 1, -1, -1):
        gx, _, gg = nn.gru_backward(gx, gru_caches[layer])
        for k in "WUb":
            grads[f"gru{layer}.{k}"] = gg[k]
    grad_window = gx[FORWARD] + gx[BACKWARD][:, ::-1]
    return grads, (grad_window[0] if single else grad_window)


def hard_decide(p_hat) -> np.ndarray:
    return (np.asarray(p_hat) > 0.5).astype(np.uint8)


def stream_windows(y: np.ndarray, cfg: DecoderConfig) -> np.ndarray:
    """Cut observation streams (..., n, 2) into overlapping windows (..., W, window_len, 2).

    Each stream is zero-padded by ``ramp_len`` steps on both ends and by
    whatever is needed to complete the last window; windows advance by
    ``loss_depth``.
    """
    y = np.asarray(y)
    n = y.shape[-2]
    if n == 0:
        raise ValueError("cannot decode an empty stream")
    n_win = -(-n // cfg.loss_depth)
    total = n_win * cfg.loss_depth + 2 * cfg.ramp_len
    padded = np.zeros(y.shape[:-2] + (total, y.shape[-1]), dtype=y.dtype)
    padded[..., cfg.ramp_len:cfg.ramp_len + n, :] = y
    starts = np.arange(n_win) * cfg.loss_depth
    idx = starts[:, None] + np.arange(cfg.window_len)
    return padded[..., idx, :]


def predict_stream(y, params: nn.Params, cfg: DecoderConfig, batch_size: int = 512,
                   soft: bool = False) -> np.ndarray:
    """Decode observation streams (..., n, 2) into ``n`` bit decisions per stream.

    Windows carry no state between each other, so they are evaluated in
    arbitrary batches.
    """
    y = np.asarray(y)
    n = y.shape[-2]
    windows = stream_windows(y, cfg)
    lead = windows.shape[:-3]
    flat = windows.reshape((-1,) + windows.shape[-2:])
    outs = []
    for i in range(0, len(flat), batch_size):
        p_hat, _ = forward(flat[i:i + batch_size], params, cfg)
        outs.append(p_hat)
    p = np.concatenate(outs).reshape(lead + (-1,))[..., :n]
    return p if soft else hard_decide(p)
