"""Small numerical kernel: GCN layers with hand-written gradients and Adam.

Everything runs in float64 so the finite-difference gates can be tight.
"""

import numpy as np
import scipy.sparse as sp


def spmm(sparse, dense):
    """Sparse-dense product ``sparse @ dense`` returning a dense ndarray."""
    dense = np.asarray(dense, dtype=np.float64)
    if sparse.shape[1] != dense.shape[0]:
        raise ValueError(
            f"cannot multiply {sparse.shape[0]}x{sparse.shape[1]} by "
            f"{dense.shape[0]}x{dense.shape[1] if dense.ndim > 1 else 1}"
        )
    if sp.issparse(sparse):
        return np.asarray(sparse @ dense)
    return np.asarray(sparse, dtype=np.float64) @ dense


# activations -----------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (x > 0).astype(np.float64)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def identity(x):
    return x


def identity_grad(x):
    return np.ones_like(x)


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "sigmoid": (sigmoid, sigmoid_grad),
    "identity": (identity, identity_grad),
}


# parameters ------------------------------------------------------------------

class Parameter:
    """A weight matrix and its accumulated gradient."""

    def __init__(self, value, name="param"):
        self.value = np.array(value, dtype=np.float64, order="C")
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def xavier_init(d_in, d_out, rng):
    """Glorot-uniform matrix with entries in ``[-a, a]``, ``a = sqrt(6 / (d_in + d_out))``."""
    if d_in < 1 or d_out < 1:
        raise ValueError("layer dimensions must be positive")
    bound = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


class GCNLayer:
    """Graph convolution ``act(A_norm @ H @ W)`` without bias."""

    def __init__(self, weight, activation="relu", name="gcn"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        weight = np.asarray(weight, dtype=np.float64)
        if weight.ndim != 2 or min(weight.shape) < 1:
            raise ValueError("weight must be a non-empty 2-D matrix")
        self.weight = Parameter(weight, name=f"{name}.weight")
        self.activation = activation

    @classmethod
    def init(cls, d_in, d_out, rng, activation="relu", name="gcn"):
        return cls(xavier_init(d_in, d_out, rng), activation=activation, name=name)

    @property
    def d_in(self):
        return self.weight.shape[0]

    @property
    def d_out(self):
        return self.weight.shape[1]

    def __repr__(self):
        return f"GCNLayer({self.d_in}->{self.d_out}, {self.activation})"


class GCNCache:
    __slots__ = ("layer", "norm_adj", "h_in", "pre")

    def __init__(self, layer, norm_adj, h_in, pre):
        self.layer = layer
        self.norm_adj = norm_adj
        self.h_in = h_in
        self.pre = pre


def gcn_forward(norm_adj, h_in, layer):
    """Forward pass of one GCN layer; returns ``(h_out, cache)``."""
    h_in = np.asarray(h_in, dtype=np.float64)
    if h_in.ndim != 2 or h_in.shape[1] != layer.d_in:
        raise ValueError(f"layer expects {layer.d_in} input columns, got shape {h_in.shape}")
    if norm_adj.shape != (h_in.shape[0], h_in.shape[0]):
        raise ValueError("adjacency size does not match the number of rows")
    pre = spmm(norm_adj, h_in @ layer.weight.value)
    act, _ = ACTIVATIONS[layer.activation]
    return act(pre), GCNCache(layer, norm_adj, h_in, pre)


def gcn_backward(cache, grad_out, need_input_grad=True):
    """Backward pass of one GCN layer.

    Accumulates into ``cache.layer.weight.grad`` and returns the gradient with
    respect to the layer input (``None`` when ``need_input_grad`` is false).
    The normalized adjacency is symmetric, so it is its own transpose.
    """
    if cache is None:
        raise RuntimeError("backward called before forward")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.pre.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != output shape {cache.pre.shape}")
    _, act_grad = ACTIVATIONS[cache.layer.activation]
    delta = grad_out * act_grad(cache.pre)
    prop = spmm(cache.norm_adj, delta)
    cache.layer.weight.grad += cache.h_in.T @ prop
    if not need_input_grad:
        return None
    return prop @ cache.layer.weight.value.T


def stack_forward(norm_adj, h, layers):
    caches = []
    for layer in layers:
        h, cache = gcn_forward(norm_adj, h, layer)
        caches.append(cache)
    return h, caches


def stack_backward(caches, grad, need_input_grad=True):
    for i in range(len(caches) - 1, -1, -1):
        grad = gcn_backward(caches[i], grad, need_input_grad=need_input_grad or i > 0)
    return grad


# optimizer -------------------------------------------------------------------

class AdamState:
    """Bias-corrected Adam moments for a fixed list of parameters."""

    def __init__(self, params, lr=5e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]


def adam_step(params, state):
    """Apply one Adam update in place, then zero the gradients."""
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match optimizer state")
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in {p.name}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, m, v in zip(params, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad**2
        p.value -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        p.zero_grad()


# verification ----------------------------------------------------------------

def finite_difference_check(loss_fn, params, eps=1e-5, max_coords=None, rng=None, abs_floor=1e-8):
    """Compare the gradients stored on ``params`` against central differences.

    ``loss_fn()`` must return the scalar loss for the current parameter values
    without touching ``param.grad``. When a parameter has more than
    ``max_coords`` entries a random subset of coordinates is probed.

    Returns the maximum of ``|g - g_fd| / max(|g|, |g_fd|, abs_floor)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        analytic = p.grad.reshape(-1).copy()
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_fn()
            flat[k] = orig - eps
            down = loss_fn()
            flat[k] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(analytic[k]), abs(numeric), abs_floor)
            worst = max(worst, abs(analytic[k] - numeric) / denom)
    return worst
