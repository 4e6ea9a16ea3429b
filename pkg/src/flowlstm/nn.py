"""Peephole LSTM, dense layers, softmax head, and backpropagation through time.

Cell equations (gate order i, f, c, o throughout)::

    i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + w_ci * c_{t-1} + b_i)
    f_t = sigmoid(W_xf x_t + W_hf h_{t-1} + w_cf * c_{t-1} + b_f)
    a_t = tanh(W_xc x_t + W_hc h_{t-1} + b_c)
    c_t = f_t * c_{t-1} + i_t * a_t
    o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + w_co * c_t + b_o)
    h_t = o_t * tanh(c_t)

Peephole weights ``w_c*`` are diagonal, so ``*`` above is elementwise.

All layers work on batches laid out time-major, ``(T, B, features)``.  The
single-sequence functions (:func:`lstm_cell_forward`, :func:`network_forward`,
...) are thin wrappers over the batched training path.  Prediction uses a
separate tape-free kernel that keeps only the running state; the tests check
that both agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .tensor import DTYPE, softmax

_LSTM_NAMES = (
    "W_xi", "W_hi", "W_xf", "W_hf", "W_xc", "W_hc", "W_xo", "W_ho",
    "w_ci", "w_cf", "w_co", "b_i", "b_f", "b_c", "b_o",
)


def _block(store: str, k: int):
    def get(self):
        h = self.hidden_dim
        return getattr(self, store)[k * h:(k + 1) * h]

    def set_(self, value):
        get(self)[...] = value

    return property(get, set_)


class LstmParams:
    """Weights of one LSTM layer.

    Storage is fused (``W_x`` is ``4H x input_dim`` with gate blocks i, f, c,
    o stacked by rows) so a whole step needs one matrix product.  The
    per-gate attributes ``W_xi``, ``W_hf``, ``b_o``, ``w_ci``... are writable
    views into the fused arrays.
    """

    W_xi, W_xf, W_xc, W_xo = (_block("W_x", k) for k in range(4))
    W_hi, W_hf, W_hc, W_ho = (_block("W_h", k) for k in range(4))
    b_i, b_f, b_c, b_o = (_block("b", k) for k in range(4))
    w_ci, w_cf, w_co = (_block("w_c", k) for k in range(3))

    def __init__(self, input_dim: int, hidden_dim: int):
        if input_dim < 1 or hidden_dim < 1:
            raise ValueError(f"LSTM dims must be >= 1, got input={input_dim}, hidden={hidden_dim}")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W_x = np.zeros((4 * hidden_dim, input_dim), dtype=DTYPE)
        self.W_h = np.zeros((4 * hidden_dim, hidden_dim), dtype=DTYPE)
        self.b = np.zeros(4 * hidden_dim, dtype=DTYPE)
        self.w_c = np.zeros(3 * hidden_dim, dtype=DTYPE)

    @classmethod
    def from_arrays(cls, **arrays) -> "LstmParams":
        h, d = np.shape(arrays["W_xi"])
        p = cls(d, h)
        missing = set(_LSTM_NAMES) - set(arrays)
        if missing:
            raise ValueError(f"missing LSTM parameters: {sorted(missing)}")
        for name in _LSTM_NAMES:
            target = getattr(p, name)
            value = np.asarray(arrays[name], dtype=DTYPE)
            if value.shape != target.shape:
                raise ValueError(f"{name}: expected shape {target.shape}, got {value.shape}")
            target[...] = value
        return p

    def named(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _LSTM_NAMES}


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: int | None = None) -> "CellState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape, dtype=DTYPE), np.zeros(shape, dtype=DTYPE))


@dataclass
class LstmTape:
    """Everything the backward pass needs from one LSTM layer forward.

    ``gates[t]`` holds the post-activation (i, f, a, o) blocks; ``h``/``c``
    carry the initial state at index 0, so ``h[t + 1]`` is ``h_t``.
    """

    x: np.ndarray
    h: np.ndarray
    c: np.ndarray
    gates: np.ndarray
    tanh_c: np.ndarray

    def __len__(self) -> int:
        return self.gates.shape[0]

    def gate(self, name: str) -> np.ndarray:
        k = "ifao".index(name)
        hd = self.h.shape[-1]
        return self.gates[..., k * hd:(k + 1) * hd]


def _as_batch(seq, input_dim: int) -> tuple[np.ndarray, bool]:
    """Coerce to (T, B, input_dim); report whether a batch axis was added."""
    x = np.asarray(seq, dtype=DTYPE)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    single = x.ndim == 2
    if single:
        x = x[:, None, :]
    if x.ndim != 3:
        raise ValueError(f"expected a sequence of shape (T, {input_dim}) or (T, B, {input_dim}), got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("empty sequence")
    if x.shape[2] != input_dim:
        raise ValueError(f"input feature size {x.shape[2]} does not match layer input_dim {input_dim}")
    return x, single


def lstm_forward_batch(x: np.ndarray, p: LstmParams, h0=None, c0=None) -> tuple[np.ndarray, LstmTape]:
    """Run the layer over ``x`` of shape (T, B, input_dim)."""
    T, B, _ = x.shape
    H = p.hidden_dim
    h_all = np.zeros((T + 1, B, H), dtype=DTYPE)
    c_all = np.zeros((T + 1, B, H), dtype=DTYPE)
    if h0 is not None:
        h_all[0] = h0
    if c0 is not None:
        c_all[0] = c0
    gates = np.empty((T, B, 4 * H), dtype=DTYPE)
    tanh_c = np.empty((T, B, H), dtype=DTYPE)

    zx = (x.reshape(T * B, -1) @ p.W_x.T).reshape(T, B, 4 * H)
    zx += p.b
    _k.lstm_forward(zx, np.ascontiguousarray(p.W_h.T), p.w_c, h_all, c_all, gates, tanh_c)
    return h_all[1:], LstmTape(x, h_all, c_all, gates, tanh_c)


def lstm_backward_batch(dh_out: np.ndarray, tape: LstmTape, p: LstmParams, need_dx: bool = True):
    """BPTT through one layer.

    ``dh_out`` is dL/dh_t for every step, shape (T, B, H).  Returns
    ``(dx, grads)`` where ``grads`` is an :class:`LstmParams` holding the
    parameter gradients.
    """
    T, B, H = dh_out.shape
    c_all = tape.c
    dZ = np.empty((T, B, 4 * H), dtype=DTYPE)
    _k.lstm_backward(np.ascontiguousarray(dh_out, dtype=DTYPE), tape.gates, c_all, tape.tanh_c,
                     p.w_c, p.W_h, dZ)

    grads = LstmParams(p.input_dim, H)
    flat = dZ.reshape(T * B, 4 * H)
    grads.W_x[...] = flat.T @ tape.x.reshape(T * B, -1)
    grads.W_h[...] = flat.T @ tape.h[:-1].reshape(T * B, H)
    grads.b[...] = flat.sum(axis=0)
    grads.w_ci = np.einsum("tbh,tbh->h", dZ[:, :, :H], c_all[:-1])
    grads.w_cf = np.einsum("tbh,tbh->h", dZ[:, :, H:2 * H], c_all[:-1])
    grads.w_co = np.einsum("tbh,tbh->h", dZ[:, :, 3 * H:], c_all[1:])
    dx = (flat @ p.W_x).reshape(T, B, -1) if need_dx else None
    return dx, grads


def lstm_infer(x: np.ndarray, p: LstmParams, last_only: bool = False) -> np.ndarray:
    """Forward pass without a tape; memory is O(B * H) per step."""
    T, B, _ = x.shape
    out = np.empty((1 if last_only else T, B, p.hidden_dim), dtype=DTYPE)
    _k.lstm_infer(np.ascontiguousarray(x, dtype=DTYPE), np.ascontiguousarray(p.W_x.T),
                  np.ascontiguousarray(p.W_h.T), p.b, p.w_c, out, last_only)
    return out[0] if last_only else out


def lstm_cell_forward(x, prev: CellState, p: LstmParams) -> tuple[CellState, dict[str, np.ndarray]]:
    """One step of the cell for a single input vector."""
    xv = np.asarray(x, dtype=DTYPE).reshape(-1)
    if xv.shape[0] != p.input_dim:
        raise ValueError(f"input length {xv.shape[0]} does not match input_dim {p.input_dim}")
    for name, v in (("h", prev.h), ("c", prev.c)):
        if np.shape(v) != (p.hidden_dim,):
            raise ValueError(f"state {name} has shape {np.shape(v)}, expected ({p.hidden_dim},)")
    _, tape = lstm_forward_batch(xv.reshape(1, 1, -1), p, prev.h, prev.c)
    state = CellState(tape.h[1, 0].copy(), tape.c[1, 0].copy())
    gates = {k: tape.gate(k)[0, 0].copy() for k in "ifao"}
    return state, gates


def lstm_layer_forward(seq, p: LstmParams, init: CellState | None = None):
    """Run the layer over ``seq`` (shape (T, input_dim)); returns (outputs, tape)."""
    x, single = _as_batch(seq, p.input_dim)
    h0 = c0 = None
    if init is not None:
        h0, c0 = init.h, init.c
    out, tape = lstm_forward_batch(x, p, h0, c0)
    return (out[:, 0] if single else out), tape


class DenseParams:
    """Affine layer ``y = act(W x + b)`` with ``act`` in {relu, linear}."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "relu"):
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation!r}")
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"dense dims must be >= 1, got {in_dim} -> {out_dim}")
        self.activation = activation
        self.W = np.zeros((out_dim, in_dim), dtype=DTYPE)
        self.b = np.zeros(out_dim, dtype=DTYPE)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def named(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def forward(self, x):
        pre = (x.reshape(-1, self.in_dim) @ self.W.T).reshape(x.shape[:-1] + (self.out_dim,))
        pre += self.b
        y = np.maximum(pre, 0.0) if self.activation == "relu" else pre
        return y, (x, pre)

    def backward(self, dy, cache, need_dx: bool = True):
        x, pre = cache
        dpre = dy * (pre > 0.0) if self.activation == "relu" else dy
        grads = DenseParams(self.in_dim, self.out_dim, self.activation)
        flat = dpre.reshape(-1, self.out_dim)
        grads.W[...] = flat.T @ x.reshape(-1, self.in_dim)
        grads.b[...] = flat.sum(axis=0)
        dx = (flat @ self.W).reshape(x.shape) if need_dx else None
        return dx, grads


Layer = LstmParams | DenseParams


def layer_kind(layer) -> str:
    if isinstance(layer, LstmParams):
        return f"LSTM({layer.hidden_dim})"
    return f"{'ReLU' if layer.activation == 'relu' else 'Linear'}({layer.out_dim})"


@dataclass
class Network:
    """Feature ReLU layer, LSTM/ReLU body, and a linear layer feeding softmax.

    Dense layers before the last LSTM layer act on every time step; the last
    LSTM layer's final hidden state is what the trailing layers classify.
    """

    layers: list
    class_count: int
    arch: object = field(default=None, compare=False)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        if not self.layers:
            raise ValueError("network has no layers")
        if not any(isinstance(l, LstmParams) for l in self.layers):
            raise ValueError("network needs at least one LSTM layer")
        last = self.layers[-1]
        if not isinstance(last, DenseParams) or last.activation != "linear":
            raise ValueError("final layer must be the linear softmax head")
        if last.out_dim != self.class_count:
            raise ValueError(f"head width {last.out_dim} != class_count {self.class_count}")
        width = self.input_dim
        for k, layer in enumerate(self.layers):
            d_in = layer.input_dim if isinstance(layer, LstmParams) else layer.in_dim
            if d_in != width:
                raise ValueError(f"layer {k} ({layer_kind(layer)}) expects input {d_in}, previous width is {width}")
            width = layer.hidden_dim if isinstance(layer, LstmParams) else layer.out_dim

    @property
    def input_dim(self) -> int:
        first = self.layers[0]
        return first.input_dim if isinstance(first, LstmParams) else first.in_dim

    @property
    def collapse_index(self) -> int:
        """Index of the last LSTM layer (where the time axis is dropped)."""
        return max(k for k, l in enumerate(self.layers) if isinstance(l, LstmParams))

    def parameters(self) -> dict[str, np.ndarray]:
        """Live (writable) views of every parameter, keyed ``"<layer>.<name>"``."""
        out = {}
        for k, layer in enumerate(self.layers):
            for name, arr in layer.named().items():
                out[f"{k}.{name}"] = arr
        return out

    def parameter_count(self) -> int:
        return sum(a.size for a in self.parameters().values())

    def signature(self) -> tuple:
        return tuple((k, a.shape) for k, a in self.parameters().items())

    def describe(self) -> list[str]:
        return [layer_kind(l) for l in self.layers[:-1]] + [f"Softmax({self.class_count})"]

    def copy(self) -> "Network":
        net = Network.__new__(Network)
        layers = []
        for layer in self.layers:
            if isinstance(layer, LstmParams):
                q = LstmParams(layer.input_dim, layer.hidden_dim)
                q.W_x[...], q.W_h[...], q.b[...], q.w_c[...] = layer.W_x, layer.W_h, layer.b, layer.w_c
            else:
                q = DenseParams(layer.in_dim, layer.out_dim, layer.activation)
                q.W[...], q.b[...] = layer.W, layer.b
            layers.append(q)
        net.layers, net.class_count, net.arch = layers, self.class_count, self.arch
        return net

    def load_parameters(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(values) != set(params):
            raise ValueError(f"parameter names differ: {sorted(set(values) ^ set(params))}")
        for name, target in params.items():
            v = np.asarray(values[name], dtype=DTYPE)
            if v.shape != target.shape:
                raise ValueError(f"{name}: expected shape {target.shape}, got {v.shape}")
            target[...] = v


@dataclass
class ForwardTape:
    """Per-layer caches from :func:`forward_batch` plus the output probabilities."""

    caches: list
    probs: np.ndarray
    signature: tuple
    steps: int

    def __len__(self) -> int:
        return self.steps


def forward_batch(net: Network, x) -> tuple[np.ndarray, ForwardTape]:
    """Class probabilities for a batch ``x`` of shape (B, T) or (B, T, input_dim)."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match network input_dim {net.input_dim}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError(f"empty batch or sequence: shape {x.shape}")
    y = np.ascontiguousarray(x.transpose(1, 0, 2))
    collapse = net.collapse_index
    caches = []
    for k, layer in enumerate(net.layers):
        if isinstance(layer, LstmParams):
            y, cache = lstm_forward_batch(y, layer)
            if k == collapse:
                y = y[-1]
        else:
            y, cache = layer.forward(y)
        caches.append(cache)
    probs = softmax(y, axis=-1)
    return probs, ForwardTape(caches, probs, net.signature(), x.shape[1])


def backward_batch(net: Network, tape: ForwardTape, targets) -> dict[str, np.ndarray]:
    """Gradients of the mean categorical cross-entropy over the batch."""
    if tape.signature != net.signature() or len(tape.caches) != len(net.layers):
        raise ValueError("tape was not produced by this network")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    B, C = tape.probs.shape
    if targets.shape[0] != B:
        raise ValueError(f"{targets.shape[0]} targets for a batch of {B}")
    if np.any((targets < 0) | (targets >= C)):
        raise ValueError(f"target out of range [0, {C})")
    dy = tape.probs.copy()
    dy[np.arange(B), targets] -= 1.0
    dy /= B
    collapse = net.collapse_index
    grads: dict[str, np.ndarray] = {}
    for k in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[k], tape.caches[k]
        need_dx = k > 0
        if isinstance(layer, LstmParams):
            if k == collapse:
                full = np.zeros((tape.steps,) + dy.shape, dtype=DTYPE)
                full[-1] = dy
                dy = full
            dy, g = lstm_backward_batch(dy, cache, layer, need_dx)
        else:
            dy, g = layer.backward(dy, cache, need_dx)
        for name, arr in g.named().items():
            grads[f"{k}.{name}"] = arr
    return {name: grads[name] for name in net.parameters()}


def network_forward(net: Network, seq) -> tuple[np.ndarray, ForwardTape]:
    """Probabilities for a single sequence of shape (T,) or (T, input_dim)."""
    x = np.asarray(seq, dtype=DTYPE)
    if x.ndim == 1:
        x = x[:, None]
    probs, tape = forward_batch(net, x[None])
    return probs[0], tape


def network_backward(net: Network, tape: ForwardTape, target) -> dict[str, np.ndarray]:
    return backward_batch(net, tape, target)


def argmax_label(probs) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    return int(np.argmax(np.asarray(probs)))


def predict(net: Network, seq):
    """Return ``(FlowRegime, probs)`` for one sequence."""
    from .data import FlowRegime

    probs, _ = network_forward(net, seq)
    return FlowRegime(argmax_label(probs)), probs


def infer_batch(net: Network, x) -> np.ndarray:
    """Probabilities for a batch (B, T[, input_dim]) without recording a tape."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != net.input_dim or 0 in x.shape[:2]:
        raise ValueError(f"batch shape {x.shape} does not match network input_dim {net.input_dim}")
    y = np.ascontiguousarray(x.transpose(1, 0, 2))
    collapse = net.collapse_index
    for k, layer in enumerate(net.layers):
        if isinstance(layer, LstmParams):
            y = lstm_infer(y, layer, last_only=k == collapse)
        else:
            y = layer.forward(y)[0]
    return softmax(y, axis=-1)


def predict_batch(net: Network, x, chunk: int = 128) -> np.ndarray:
    """Probabilities for many sequences, evaluated in chunks to bound memory."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] == 0:
        return np.zeros((0, net.class_count), dtype=DTYPE)
    out = [infer_batch(net, x[s:s + chunk]) for s in range(0, x.shape[0], chunk)]
    return np.concatenate(out, axis=0)
