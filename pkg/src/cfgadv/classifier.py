"""Dense feed-forward classifier over normalized CFG features.

Hidden layers use ReLU, the output is a two-way softmax ordered
``(benign, malicious)``.  Weights are stored ``(fan_in, fan_out)`` so a batch
``X @ W + b`` evaluates a layer.  Everything is plain numpy so that input
gradients can be written out by hand for the attacks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class TrainingError(RuntimeError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Model:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0
    normalizer_ref: Optional[dict] = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match weights {W.shape}")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input dim {W.shape[0]} != previous output "
                                 f"{self.weights[i - 1].shape[1]}")
        if self.weights[-1].shape[1] != 2:
            raise ValueError("output layer must have 2 units")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @classmethod
    def init(cls, sizes: Sequence[int], seed: int = 0, rng=None) -> "Model":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed) if rng is None else rng
        Ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            Ws.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(Ws, bs, seed=seed)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} features, got {x.shape[-1]}")
        return x

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._forward(self._check(x))[0]

    def _forward(self, x):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, acts

    def _backward_input(self, acts, dz: np.ndarray) -> np.ndarray:
        """Propagate d(loss)/d(logits) back to the input."""
        g = dz
        for i in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0)
        return g

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities ``(p_benign, p_malicious)``; works on one sample or a batch."""
        return softmax(self.logits(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=-1)

    def logit_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Logits and their 2 x n_inputs Jacobian at a single sample."""
        x = self._check(x)
        z, acts = self._forward(x)
        J = np.stack([self._backward_input(acts, np.eye(2)[k]) for k in range(2)])
        return z, J

    def vjp(self, x: np.ndarray, dz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Logits at ``x`` and the input gradient of ``dz . logits``."""
        x = self._check(x)
        z, acts = self._forward(x)
        return z, self._backward_input(acts, np.asarray(dz, dtype=np.float64))

    def input_gradient(self, x: np.ndarray, target: int, kind: str = "loss") -> np.ndarray:
        """Gradient wrt ``x`` of cross-entropy against ``target`` or of logit ``target``."""
        x = self._check(x)
        z, acts = self._forward(x)
        if kind == "loss":
            dz = softmax(z)
            # p_t - 1 written as minus the other masses: no cancellation when p_t ~ 1
            others = np.delete(dz, target, axis=-1).sum(axis=-1)
            dz[..., target] = -others
        elif kind == "logit":
            dz = np.zeros_like(z)
            dz[..., target] = 1.0
        else:
            raise ValueError(f"unknown gradient kind {kind!r}")
        return self._backward_input(acts, dz)

    def loss(self, x, y, class_weights=None) -> float:
        p = self.forward(x)
        y = np.asarray(y)
        w = np.ones(len(y)) if class_weights is None else np.asarray(class_weights)[y]
        return float(-(w * np.log(p[np.arange(len(y)), y] + 1e-300)).sum() / w.sum())

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "activation": "relu",
            "output": "softmax",
            "seed": self.seed,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "normalizer": self.normalizer_ref,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Model":
        d = json.loads(text)
        return cls([np.array(W, dtype=np.float64) for W in d["weights"]],
                   [np.array(b, dtype=np.float64) for b in d["biases"]],
                   seed=d.get("seed", 0), normalizer_ref=d.get("normalizer"))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 300
    seed: int = 42
    class_weighting: bool = True
    hidden: tuple[int, ...] = (64, 32)
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainLog:
    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        rows = ["epoch,loss,train_acc"]
        rows += [f"{e},{l:.17g},{a:.17g}" for e, l, a in zip(self.epochs, self.loss, self.accuracy)]
        return "\n".join(rows) + "\n"


def class_weights(y: np.ndarray) -> np.ndarray:
    counts = np.bincount(y, minlength=2).astype(np.float64)
    return len(y) / (2.0 * counts)


def _param_grads(m: Model, X, y, w):
    z, acts = m._forward(X)
    dz = softmax(z)
    dz[np.arange(len(y)), y] -= 1.0
    dz *= (w / w.sum())[:, None]
    gW, gb = [None] * len(m.weights), [None] * len(m.weights)
    g = dz
    for i in range(len(m.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ m.weights[i].T) * (acts[i] > 0)
    return gW, gb


def train(X: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig()) -> tuple[Model, TrainLog]:
    """Mini-batch training of class-weighted cross-entropy; deterministic given ``cfg.seed``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=2)
    if len(counts) != 2 or counts.min() < 2:
        raise TrainingError(f"need at least 2 samples of each class, got {counts.tolist()}")
    rng = np.random.default_rng(cfg.seed)
    m = Model.init([X.shape[1], *cfg.hidden, 2], seed=cfg.seed, rng=rng)
    cw = class_weights(y) if cfg.class_weighting else np.ones(2)
    sample_w = cw[y]
    params = m.weights + m.biases
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    log = TrainLog()
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(y))
        for bi, start in enumerate(range(0, len(y), cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            gW, gb = _param_grads(m, X[idx], y[idx], sample_w[idx])
            grads = gW + gb
            step += 1
            for p, g, mo, ve in zip(params, grads, mom, vel):
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient at epoch {epoch}, batch {bi}")
                if cfg.optimizer == "sgd":
                    p -= cfg.learning_rate * g
                    continue
                mo *= b1
                mo += (1 - b1) * g
                ve *= b2
                ve += (1 - b2) * g * g
                mhat = mo / (1 - b1 ** step)
                vhat = ve / (1 - b2 ** step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        loss = m.loss(X, y, cw)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        log.epochs.append(epoch)
        log.loss.append(loss)
        log.accuracy.append(float((m.predict(X) == y).mean()))
    return m, log


@dataclass(frozen=True)
class Metrics:
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n

    @property
    def fnr(self) -> float:
        return self.fn / (self.fn + self.tp) if self.fn + self.tp else 0.0

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else 0.0

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "fnr": self.fnr, "fpr": self.fpr,
                "confusion": {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp}}


def confusion(y_true, y_pred) -> Metrics:
    """Confusion counts with malicious (1) as the positive class."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.size == 0:
        raise ValueError("empty test set")
    return Metrics(tp=int(((t == 1) & (p == 1)).sum()), fn=int(((t == 1) & (p == 0)).sum()),
                   tn=int(((t == 0) & (p == 0)).sum()), fp=int(((t == 0) & (p == 1)).sum()))


def evaluate(m: Model, X, y) -> Metrics:
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise ValueError("empty test set")
    return confusion(y, m.predict(X))
