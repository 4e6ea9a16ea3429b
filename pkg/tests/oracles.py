"""Slow, independent reference implementations used only by the tests.

Nothing here imports the library's arithmetic: the LSTM is written out one
scalar at a time with ``math`` so it can check the vectorised/compiled path.
"""

import math

import numpy as np


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_lstm_step(x, h, c, p):
    """One cell step with hidden size 1; ``p`` maps names to floats."""
    i = sigmoid(p["W_xi"] * x + p["W_hi"] * h + p["w_ci"] * c + p["b_i"])
    f = sigmoid(p["W_xf"] * x + p["W_hf"] * h + p["w_cf"] * c + p["b_f"])
    a = math.tanh(p["W_xc"] * x + p["W_hc"] * h + p["b_c"])
    c_new = f * c + i * a
    o = sigmoid(p["W_xo"] * x + p["W_ho"] * h + p["w_co"] * c_new + p["b_o"])
    h_new = o * math.tanh(c_new)
    return h_new, c_new, {"i": i, "f": f, "a": a, "o": o}


def scalar_params(lstm):
    return {k: float(np.asarray(v).reshape(-1)[0]) for k, v in lstm.named().items()}


def _lstm_seq(xs, p):
    """Loop-by-loop LSTM over a list of input vectors (lists of floats)."""
    H, D = len(p["b_i"]), len(xs[0])
    h, c = [0.0] * H, [0.0] * H
    outs = []
    for x in xs:
        def pre(W, U, b, j):
            return sum(W[j][k] * x[k] for k in range(D)) + sum(U[j][k] * h[k] for k in range(H)) + b[j]

        i = [sigmoid(pre(p["W_xi"], p["W_hi"], p["b_i"], j) + p["w_ci"][j] * c[j]) for j in range(H)]
        f = [sigmoid(pre(p["W_xf"], p["W_hf"], p["b_f"], j) + p["w_cf"][j] * c[j]) for j in range(H)]
        a = [math.tanh(pre(p["W_xc"], p["W_hc"], p["b_c"], j)) for j in range(H)]
        c = [f[j] * c[j] + i[j] * a[j] for j in range(H)]
        o = [sigmoid(pre(p["W_xo"], p["W_ho"], p["b_o"], j) + p["w_co"][j] * c[j]) for j in range(H)]
        h = [o[j] * math.tanh(c[j]) for j in range(H)]
        outs.append(h)
    return outs


def _dense(x, p, relu):
    W, b = p["W"], p["b"]
    y = [sum(W[j][k] * x[k] for k in range(len(x))) + b[j] for j in range(len(b))]
    return [max(v, 0.0) for v in y] if relu else y


def naive_network_probs(net, seq):
    """Softmax output for one sequence, re-derived from the layer list."""
    from flowlstm.nn import LstmParams

    xs = [list(np.atleast_1d(v).astype(float)) for v in np.asarray(seq, dtype=float)]
    last_lstm = max(k for k, l in enumerate(net.layers) if isinstance(l, LstmParams))
    seq_mode = True
    for k, layer in enumerate(net.layers):
        p = {n: np.asarray(a).tolist() for n, a in layer.named().items()}
        if isinstance(layer, LstmParams):
            xs = _lstm_seq(xs, p)
            if k == last_lstm:
                xs, seq_mode = xs[-1], False
        else:
            relu = layer.activation == "relu"
            xs = [_dense(x, p, relu) for x in xs] if seq_mode else _dense(xs, p, relu)
    m = max(xs)
    e = [math.exp(v - m) for v in xs]
    return [v / sum(e) for v in e]


def batch_loss(net, x, y):
    from flowlstm.nn import forward_batch

    probs, _ = forward_batch(net, x)
    return float(-np.mean(np.log(probs[np.arange(len(y)), y])))


def fd_gradients(net, x, y, eps=1e-5):
    """Central differences of the mean cross-entropy for every parameter entry."""
    out = {}
    for name, a in net.parameters().items():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + eps
            lp = batch_loss(net, x, y)
            a[idx] = orig - eps
            lm = batch_loss(net, x, y)
            a[idx] = orig
            g[idx] = (lp - lm) / (2 * eps)
        out[name] = g
    return out


def worst_relative_error(analytic, numeric):
    worst = 0.0
    for name, num in numeric.items():
        err = np.abs(analytic[name] - num) / np.maximum(1.0, np.abs(num))
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst


def scalar_adam(w0, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    w, m, v = w0, 0.0, 0.0
    path = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        w = w - lr * mhat / (math.sqrt(vhat) + eps)
        path.append(w)
    return path


def count_modes(pdf, rel_height=0.05):
    """Indices of local maxima at least ``rel_height`` of the tallest bin.

    Flat tops count once.  Used as the histogram-mode oracle.
    """
    pdf = list(pdf)
    floor = rel_height * max(pdf)
    modes = []
    k = 0
    n = len(pdf)
    while k < n:
        j = k
        while j + 1 < n and pdf[j + 1] == pdf[k]:
            j += 1
        left = pdf[k - 1] if k > 0 else -1.0
        right = pdf[j + 1] if j + 1 < n else -1.0
        if pdf[k] > left and pdf[k] > right and pdf[k] >= floor:
            modes.append((k + j) // 2)
        k = j + 1
    return modes
