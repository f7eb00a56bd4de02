"""Dense and GRU layers with hand-written gradients, losses and optimizers.

Every kernel is a pure function of numpy arrays. Layer parameters may carry
leading "stack" axes (e.g. two GRU directions evaluated in one call); inputs
then carry the same leading axes.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np

Params = Dict[str, np.ndarray]

BCE_CLAMP = 1e-7
ACTIVATIONS = ("elu", "sigmoid", "linear", "tanh")


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


def _t(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form cannot overflow
    out = np.tanh(0.5 * x)
    out *= 0.5
    out += 0.5
    return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0)))
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(z: np.ndarray, y: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return np.ones_like(z)
    if kind == "sigmoid":
        return y * (1 - y)
    if kind == "tanh":
        return 1 - y * y
    # elu with alpha = 1: derivative is exp(z) = y + 1 for z <= 0
    return np.where(z > 0, 1.0, y + 1.0).astype(z.dtype)


# --- dense -------------------------------------------------------------------

def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "linear"):
    if x.shape[-1] != W.shape[-2]:
        raise ValueError(f"dense: input width {x.shape[-1]} does not match weights {W.shape}")
    z = x @ W + b
    y = _activate(z, activation)
    return y, (x, W, z, y, activation)


def dense_backward(grad_out: np.ndarray, cache):
    """Returns ``(grad_x, {"W": dW, "b": db})``."""
    x, W, z, y, activation = cache
    if grad_out.shape != y.shape:
        raise ValueError(f"dense: gradient shape {grad_out.shape} != output shape {y.shape}")
    dz = grad_out * _activation_grad(z, y, activation)
    xf = x.reshape(-1, x.shape[-1])
    dzf = dz.reshape(-1, dz.shape[-1])
    return dz @ W.T, {"W": xf.T @ dzf, "b": dzf.sum(axis=0)}


# --- GRU ---------------------------------------------------------------------

def gru_init(input_width: int, hidden: int, rng: np.random.Generator, stack: tuple = (),
             dtype=np.float32) -> Params:
    """Gate blocks are laid out as [update z | reset r | candidate] along the last axis."""
    return {
        "W": glorot_init(stack + (input_width, 3 * hidden), rng, dtype),
        "U": glorot_init(stack + (hidden, 3 * hidden), rng, dtype),
        "b": np.zeros(stack + (3 * hidden,), dtype=dtype),
    }


def gru_forward(x: np.ndarray, h0: np.ndarray, p: Params):
    """Run a GRU over ``x`` of shape (..., B, T, D) from ``h0`` (..., B, H).

    z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br),
    c = tanh(x Wc + (r * h) Uc + bc), h' = (1 - z) * h + z * c.
    Returns the state sequence (..., B, T, H) and the cache for backward.
    """
    W, U, b = p["W"], p["U"], p["b"]
    H = U.shape[-2]
    if x.shape[-1] != W.shape[-2] or h0.shape[-1] != H or W.shape[-1] != 3 * H:
        raise ValueError(f"gru: shapes x{x.shape} h0{h0.shape} W{W.shape} U{U.shape} disagree")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("gru: non-finite input")
    T = x.shape[-2]
    a = x @ W[..., None, :, :] + b[..., None, None, :]
    Uzr, Uc = U[..., :2 * H], U[..., 2 * H:]
    out_shape = a.shape[:-1] + (H,)
    hs = np.empty(out_shape, dtype=a.dtype)
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    cs = np.empty_like(hs)
    h = h0.astype(a.dtype, copy=False)
    for t in range(T):
        at = a[..., t, :]
        zr = sigmoid(at[..., :2 * H] + h @ Uzr)
        z, r = zr[..., :H], zr[..., H:]
        c = np.tanh(at[..., 2 * H:] + (r * h) @ Uc)
        h = h + z * (c - h)
        hs[..., t, :], zs[..., t, :], rs[..., t, :], cs[..., t, :] = h, z, r, c
    return hs, (x, h0, W, U, hs, zs, rs, cs)


def gru_backward(grad_hs: np.ndarray, cache, grad_hT: np.ndarray | None = None):
    """Full BPTT. Returns ``(grad_x, grad_h0, {"W", "U", "b"})``."""
    x, h0, W, U, hs, zs, rs, cs = cache
    if grad_hs.shape != hs.shape:
        raise ValueError(f"gru: gradient shape {grad_hs.shape} != state shape {hs.shape}")
    H = U.shape[-2]
    T = hs.shape[-2]
    Uzr_t, Uc_t = _t(U[..., :2 * H]), _t(U[..., 2 * H:])
    da = np.empty(hs.shape[:-1] + (3 * H,), dtype=hs.dtype)
    dU = np.zeros_like(U)
    dh = np.zeros_like(h0, dtype=hs.dtype) if grad_hT is None else grad_hT.astype(hs.dtype)
    for t in range(T - 1, -1, -1):
        dh = dh + grad_hs[..., t, :]
        hp = hs[..., t - 1, :] if t > 0 else h0
        z, r, c = zs[..., t, :], rs[..., t, :], cs[..., t, :]
        dac = dh * z * (1 - c * c)
        drh = dac @ Uc_t
        daz = dh * (c - hp) * z * (1 - z)
        dar = drh * hp * r * (1 - r)
        dazr = np.concatenate([daz, dar], axis=-1)
        dU[..., 2 * H:] += _t(r * hp) @ dac
        dU[..., :2 * H] += _t(hp) @ dazr
        dh = dh * (1 - z) + drh * r + dazr @ Uzr_t
        da[..., t, :2 * H] = dazr
        da[..., t, 2 * H:] = dac
    lead = x.shape[:-3]
    xf = x.reshape(lead + (-1, x.shape[-1]))
    daf = da.reshape(lead + (-1, 3 * H))
    grads = {"W": _t(xf) @ daf, "b": daf.sum(axis=-2), "U": dU}
    return da @ _t(W)[..., None, :, :], dh, grads


# --- losses ------------------------------------------------------------------

def bce_loss(p_hat: np.ndarray, u: np.ndarray):
    """Binary cross-entropy summed over positions, averaged over the batch.

    ``p_hat`` and ``u`` have shape (B, L) (a 1-D input is one sample).
    """
    p_hat = np.asarray(p_hat)
    u = np.asarray(u, dtype=p_hat.dtype)
    if p_hat.shape != u.shape:
        raise ValueError(f"bce: prediction shape {p_hat.shape} != label shape {u.shape}")
    batch = p_hat.shape[0] if p_hat.ndim > 1 else 1
    p = np.clip(p_hat, BCE_CLAMP, 1 - BCE_CLAMP)
    loss = -np.sum(u * np.log(p) + (1 - u) * np.log(1 - p)) / batch
    inside = (p_hat > BCE_CLAMP) & (p_hat < 1 - BCE_CLAMP)
    grad = np.where(inside, (p - u) / (p * (1 - p)), 0.0).astype(p_hat.dtype) / batch
    return float(loss), grad


def mse_loss(p_hat: np.ndarray, u: np.ndarray):
    p_hat = np.asarray(p_hat)
    u = np.asarray(u, dtype=p_hat.dtype)
    if p_hat.shape != u.shape:
        raise ValueError(f"mse: prediction shape {p_hat.shape} != label shape {u.shape}")
    batch = p_hat.shape[0] if p_hat.ndim > 1 else 1
    diff = p_hat - u
    return float(np.sum(diff * diff) / batch), 2 * diff / batch


LOSSES: dict[str, Callable] = {"bce": bce_loss, "mse": mse_loss}


# --- optimizers --------------------------------------------------------------

class Optimizer:
    kind = ""

    def __init__(self, lr: float, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.eps = eps
        self.t = 0
        self.slots: dict[str, dict[str, np.ndarray]] = {}

    def _slot(self, name: str, key: str, like: np.ndarray) -> np.ndarray:
        slot = self.slots.setdefault(key, {})
        if name not in slot:
            slot[name] = np.zeros_like(like)
        return slot[name]

    def step(self, params: Params, grads: Params) -> None:
        """Update ``params`` in place; a non-finite gradient aborts the whole step."""
        for name, g in grads.items():
            if g.shape != params[name].shape:
                raise ValueError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {name}")
        self.t += 1
        for name, g in grads.items():
            params[name] -= self._update(name, params[name], g)

    def _update(self, name, p, g):
        raise NotImplementedError

    def state_arrays(self) -> Params:
        return {f"{key}/{name}": v for key, slot in self.slots.items() for name, v in slot.items()}


class RMSProp(Optimizer):
    kind = "rmsprop"

    def __init__(self, lr: float = 1e-4, rho: float = 0.9, eps: float = 1e-8):
        super().__init__(lr, eps)
        self.rho = rho

    def _update(self, name, p, g):
        v = self._slot(name, "v", p)
        v *= self.rho
        v += (1 - self.rho) * g * g
        return self.lr * g / (np.sqrt(v) + self.eps)


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr, eps)
        self.beta1, self.beta2 = beta1, beta2

    def _update(self, name, p, g):
        m = self._slot(name, "m", p)
        v = self._slot(name, "v", p)
        m *= self.beta1
        m += (1 - self.beta1) * g
        v *= self.beta2
        v += (1 - self.beta2) * g * g
        m_hat = m / (1 - self.beta1 ** self.t)
        v_hat = v / (1 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float) -> Optimizer:
    if kind == "rmsprop":
        return RMSProp(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


# --- init and verification ---------------------------------------------------

def glorot_init(shape: tuple, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)) over the last two axes."""
    fan_in, fan_out = (shape[-2], shape[-1]) if len(shape) >= 2 else (shape[0], shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def grad_check(fn: Callable[[Params], tuple], params: Params, epsilon: float = 1e-5,
               atol: float = 1e-6) -> float:
    """Max elementwise relative error between analytic and central-difference gradients.

    ``fn(params)`` returns ``(loss, grads)``. The denominator of the relative
    error is ``max(|analytic| + |numeric|, atol)``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, grads = fn(params)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = fn(params)[0]
            flat[i] = orig - epsilon
            fm = fn(params)[0]
            flat[i] = orig
            num = (fp - fm) / (2 * epsilon)
            err = abs(num - g[i]) / max(abs(num) + abs(g[i]), atol)
            worst = max(worst, err)
    return worst
