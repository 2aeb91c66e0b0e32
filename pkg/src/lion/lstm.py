"""Small stacked LSTM for one-step arrival-rate forecasting, numpy only."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"LSTM"


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def windows(series, window: int):
    """Sliding (input window, next value) pairs."""
    s = np.asarray(series, dtype=np.float64)
    n = len(s) - window
    if n <= 0:
        return np.empty((0, window)), np.empty(0)
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    return s[idx], s[window:]


class LastValueForecaster:
    """Predicts that the next sample repeats the last one."""

    window = 10
    trained = True

    def predict_one(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return x[:, -1].copy()

    def forecast(self, recent, h: int):
        return np.full(h, float(np.asarray(recent, dtype=np.float64)[-1])) if h > 0 else np.empty(0)

    def train(self, history, **kw):
        return self


class LSTMForecaster:
    """``layers`` stacked LSTM cells over a scalar series plus a linear head.

    Parameters are kept in ``self.params`` (name -> array) so that training,
    gradient checking and serialization all walk the same dict.
    """

    def __init__(self, layers: int = 2, hidden: int = 20, window: int = 10,
                 seed: int = 0, init_scale: float = 0.1):
        self.layers = layers
        self.hidden = hidden
        self.window = window
        self.trained = False
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        in_dim = 1
        for li in range(layers):
            self.params[f"W{li}"] = rng.uniform(-init_scale, init_scale, (4 * hidden, in_dim + hidden))
            self.params[f"b{li}"] = rng.uniform(-init_scale, init_scale, 4 * hidden)
            in_dim = hidden
        self.params["Wy"] = rng.uniform(-init_scale, init_scale, hidden)
        self.params["by"] = rng.uniform(-init_scale, init_scale, 1)
        self._adam_state = None

    # -- forward / backward ---------------------------------------------

    def _forward(self, X, keep=False):
        N, T = X.shape
        H = self.hidden
        inp = [X[:, t:t + 1] for t in range(T)]
        caches = []
        for li in range(self.layers):
            W, b = self.params[f"W{li}"], self.params[f"b{li}"]
            h = np.zeros((N, H))
            c = np.zeros((N, H))
            outs = []
            lc = []
            for t in range(T):
                z = np.concatenate([inp[t], h], axis=1)
                a = z @ W.T + b
                i = _sigmoid(a[:, :H])
                f = _sigmoid(a[:, H:2 * H])
                o = _sigmoid(a[:, 2 * H:3 * H])
                g = np.tanh(a[:, 3 * H:])
                c_prev = c
                c = f * c_prev + i * g
                tc = np.tanh(c)
                h = o * tc
                outs.append(h)
                if keep:
                    lc.append((z, i, f, o, g, c_prev, tc))
            caches.append(lc)
            inp = outs
        y = inp[-1] @ self.params["Wy"] + self.params["by"][0]
        return y, (caches, inp[-1])

    def predict_one(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._forward(X)[0]

    def loss_and_grads(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.asarray(Y, dtype=np.float64)
        N, T = X.shape
        H = self.hidden
        y, (caches, h_top) = self._forward(X, keep=True)
        err = y - Y
        loss = float(np.mean(err ** 2))
        dy = 2.0 * err / N
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["Wy"] = h_top.T @ dy
        grads["by"] = np.array([dy.sum()])
        # gradient w.r.t. each layer's output sequence, top layer first
        dout = [np.zeros((N, H)) for _ in range(T)]
        dout[-1] = np.outer(dy, self.params["Wy"])
        for li in reversed(range(self.layers)):
            W = self.params[f"W{li}"]
            in_dim = W.shape[1] - H
            dW = grads[f"W{li}"]
            db = grads[f"b{li}"]
            dh_next = np.zeros((N, H))
            dc_next = np.zeros((N, H))
            din = [None] * T
            for t in reversed(range(T)):
                z, i, f, o, g, c_prev, tc = caches[li][t]
                dh = dout[t] + dh_next
                do = dh * tc
                dc = dh * o * (1.0 - tc ** 2) + dc_next
                di = dc * g
                df = dc * c_prev
                dg = dc * i
                dc_next = dc * f
                da = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                     do * o * (1 - o), dg * (1 - g ** 2)], axis=1)
                dW += da.T @ z
                db += da.sum(axis=0)
                dz = da @ W
                din[t] = dz[:, :in_dim]
                dh_next = dz[:, in_dim:]
            dout = din
        return loss, grads

    # -- training --------------------------------------------------------

    def train(self, history, epochs: int = 200, lr: float = 0.01, clip: float = 5.0,
              optimizer: str = "sgd"):
        """Fit one-step-ahead prediction over sliding windows of ``history``.

        ``history`` must already be scaled to [0, 1]; it may also be a list
        of such series, whose windows are pooled. Returns per-epoch losses.
        """
        series = history if isinstance(history, (list, tuple)) and history \
            and np.ndim(history[0]) == 1 else [history]
        parts = [windows(s, self.window) for s in series]
        X = np.concatenate([p[0] for p in parts]) if parts else np.empty((0, self.window))
        Y = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
        if len(Y) < 1 or max(len(s) for s in series) <= self.window + 1:
            raise ValueError(f"history must be longer than window+1={self.window + 1}")
        losses = []
        for _ in range(epochs):
            loss, grads = self.loss_and_grads(X, Y)
            losses.append(loss)
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > clip:
                for g in grads.values():
                    g *= clip / norm
            if optimizer == "adam":
                self._adam_step(grads, lr)
            elif optimizer == "sgd":
                for k, g in grads.items():
                    self.params[k] -= lr * g
            else:
                raise ValueError(f"unknown optimizer {optimizer!r}")
        if epochs > 0:
            self.trained = True
        return losses

    def _adam_step(self, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
        if self._adam_state is None:
            self._adam_state = (0, {k: np.zeros_like(v) for k, v in self.params.items()},
                                {k: np.zeros_like(v) for k, v in self.params.items()})
        step, m, v = self._adam_state
        step += 1
        for k, g in grads.items():
            m[k] = b1 * m[k] + (1 - b1) * g
            v[k] = b2 * v[k] + (1 - b2) * g * g
            mh = m[k] / (1 - b1 ** step)
            vh = v[k] / (1 - b2 ** step)
            self.params[k] -= lr * mh / (np.sqrt(vh) + eps)
        self._adam_state = (step, m, v)

    def forecast(self, recent, h: int):
        """Iterate one-step predictions ``h`` times, feeding outputs back."""
        buf = list(np.asarray(recent, dtype=np.float64)[-self.window:])
        if len(buf) < self.window:
            raise ValueError(f"need {self.window} recent samples")
        out = []
        for _ in range(h):
            nxt = float(self.predict_one(np.array(buf[-self.window:]))[0])
            out.append(nxt)
            buf.append(nxt)
        return np.array(out)

    # -- serialization -----------------------------------------------------

    def _order(self):
        return [k for li in range(self.layers) for k in (f"W{li}", f"b{li}")] + ["Wy", "by"]

    def to_bytes(self) -> bytes:
        header = MAGIC + struct.pack("<III", self.layers, self.hidden, self.window)
        flat = np.concatenate([self.params[k].ravel() for k in self._order()])
        return header + flat.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LSTMForecaster":
        if data[:4] != MAGIC:
            raise ValueError("not a forecaster weight file")
        layers, hidden, window = struct.unpack("<III", data[4:16])
        f = cls(layers, hidden, window)
        flat = np.frombuffer(data[16:], dtype="<f8")
        pos = 0
        for k in f._order():
            size = f.params[k].size
            if pos + size > len(flat):
                raise ValueError("truncated weight file")
            f.params[k] = flat[pos:pos + size].reshape(f.params[k].shape).astype(np.float64)
            pos += size
        if pos != len(flat):
            raise ValueError("trailing data in weight file")
        f.trained = True
        return f
