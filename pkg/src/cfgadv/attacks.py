"""White-box feature-space attacks on the CFG classifier.

All attacks work on a single normalized feature vector in the ``[0, 1]``
box and try to move the model's decision off ``label`` (untargeted; with two
classes the target is simply the other class).  Only PGD and MIM take an
L-infinity budget ``epsilon``.

The perturbed vectors live in feature space only.  Nothing maps them back to
a program, so every outcome is marked ``functionality_preserving=False``.
"""
from __future__ import annotations

import enum
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .classifier import Model

CHANGE_TOL = 1e-6


class AttackError(RuntimeError):
    pass


class Method(enum.Enum):
    CW = "CW"
    DEEPFOOL = "DeepFool"
    ELASTICNET = "ElasticNet"
    JSMA = "JSMA"
    MIM = "MIM"
    PGD = "PGD"


@dataclass(frozen=True)
class AttackConfig:
    method: Method
    epsilon: float = 1.0
    step_size: float = 0.01
    max_iter: int = 100
    early_stop: bool = True
    # C&W and EAD
    initial_const: float = 1e-2
    binary_steps: int = 9
    kappa: float = 0.0
    beta: float = 0.1
    # MIM
    decay: float = 1.0
    # JSMA
    theta: float = 0.1
    gamma: float = 1.0
    # DeepFool
    overshoot: float = 0.02

    def __post_init__(self):
        if isinstance(self.method, str):
            object.__setattr__(self, "method", Method(self.method))
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.max_iter < 1 or self.binary_steps < 1:
            raise ValueError("iteration counts must be >= 1")
        knobs = (self.epsilon, self.step_size, self.initial_const, self.kappa, self.beta,
                 self.decay, self.theta, self.gamma, self.overshoot)
        if not all(np.isfinite(k) for k in knobs):
            raise ValueError("attack knobs must be finite")
        if not 0.0 <= self.gamma <= 1.0 or self.theta <= 0:
            raise ValueError("JSMA needs theta > 0 and gamma in [0, 1]")

    def with_(self, **changes) -> "AttackConfig":
        return replace(self, **changes)


DEFAULTS = {
    Method.PGD: AttackConfig(Method.PGD, epsilon=1.0, step_size=0.01, max_iter=100),
    Method.MIM: AttackConfig(Method.MIM, epsilon=1.0, step_size=0.01, max_iter=100, decay=1.0),
    Method.DEEPFOOL: AttackConfig(Method.DEEPFOOL, max_iter=50, overshoot=0.02),
    Method.JSMA: AttackConfig(Method.JSMA, theta=0.1, gamma=1.0, max_iter=1000),
    Method.CW: AttackConfig(Method.CW, step_size=0.01, max_iter=200, binary_steps=9,
                            initial_const=1e-2, kappa=0.0),
    Method.ELASTICNET: AttackConfig(Method.ELASTICNET, step_size=0.01, max_iter=200, binary_steps=9,
                                    initial_const=1e-2, kappa=0.0, beta=0.1),
}


def default_config(method) -> AttackConfig:
    return DEFAULTS[Method(method)]


@dataclass
class AttackOutcome:
    method: Method
    x: np.ndarray
    x_adv: np.ndarray
    source_label: int
    predicted_label: int
    success: bool
    features_changed: int
    ct_ms: float
    iterations: int = 0
    sample_id: Optional[str] = None
    functionality_preserving: bool = False

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "method": self.method.value,
                "source_label": self.source_label, "predicted_label": self.predicted_label,
                "success": self.success, "features_changed": self.features_changed,
                "ct_ms": self.ct_ms, "iterations": self.iterations,
                "functionality_preserving": self.functionality_preserving,
                "x": self.x.tolist(), "x_adv": self.x_adv.tolist()}


def changed_features(x, x_adv, tol: float = CHANGE_TOL) -> int:
    return int(np.sum(np.abs(np.asarray(x_adv) - np.asarray(x)) > tol))


def _pred(m: Model, x) -> int:
    return int(np.argmax(m.logits(x)))


def _outcome(m, method, x, x_adv, label, t0, iterations) -> AttackOutcome:
    x_adv = np.clip(x_adv, 0.0, 1.0)
    pred = _pred(m, x_adv)
    return AttackOutcome(method, x, x_adv, label, pred, pred != label,
                         changed_features(x, x_adv), (time.perf_counter() - t0) * 1e3, iterations)


def _prepare(m: Model, x, label):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_inputs,):
        raise ValueError(f"expected a vector of {m.n_inputs} features, got shape {x.shape}")
    return x, (_pred(m, x) if label is None else int(label))


def _sign_ascent(m: Model, x, cfg: AttackConfig, label, decay: Optional[float], t0, method):
    lo = np.maximum(x - cfg.epsilon, 0.0)
    hi = np.minimum(x + cfg.epsilon, 1.0)
    x_adv = x.copy()
    velocity = np.zeros_like(x)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if cfg.early_stop and _pred(m, x_adv) != label:
            it -= 1
            break
        g = m.input_gradient(x_adv, label, "loss")
        if decay is not None:
            l1 = np.abs(g).sum()
            # zero gradient leaves the velocity unchanged
            if l1 > 0:
                velocity = decay * velocity + g / l1
            g = velocity
        x_adv = np.clip(x_adv + cfg.step_size * np.sign(g), lo, hi)
    return _outcome(m, method, x, x_adv, label, t0, it)


def pgd(m: Model, x, cfg: AttackConfig = DEFAULTS[Method.PGD], label: Optional[int] = None) -> AttackOutcome:
    """Projected sign-gradient ascent on the cross-entropy of ``label``."""
    t0 = time.perf_counter()
    x, label = _prepare(m, x, label)
    return _sign_ascent(m, x, cfg, label, None, t0, Method.PGD)


def mim(m: Model, x, cfg: AttackConfig = DEFAULTS[Method.MIM], label: Optional[int] = None) -> AttackOutcome:
    """PGD with an accumulated velocity of L1-normalized gradients."""
    t0 = time.perf_counter()
    x, label = _prepare(m, x, label)
    return _sign_ascent(m, x, cfg, label, cfg.decay, t0, Method.MIM)


def _margin_grad(m: Model, x, label):
    """Logits and the gradient of ``z[label] - z[other]``."""
    dz = np.full(2, -1.0)
    dz[label] = 1.0
    z, g = m.vjp(x, dz)
    return z, z[label] - z[1 - label], g


def deepfool(m: Model, x, cfg: AttackConfig = DEFAULTS[Method.DEEPFOOL], label: Optional[int] = None) -> AttackOutcome:
    """Binary DeepFool: repeated projection onto the linearised decision boundary."""
    t0 = time.perf_counter()
    x, label = _prepare(m, x, label)
    r_total = np.zeros_like(x)
    x_cur = x
    it = 0
    while it < cfg.max_iter:
        z, f, w = _margin_grad(m, x_cur, label)
        if int(np.argmax(z)) != label:
            break
        wn = float(w @ w)
        if wn < 1e-24:
            return _outcome(m, Method.DEEPFOOL, x, x, label, t0, it)
        r_total = r_total - (abs(f) / wn) * w
        it += 1
        x_cur = np.clip(x + (1.0 + cfg.overshoot) * r_total, 0.0, 1.0)
    return _outcome(m, Method.DEEPFOOL, x, x_cur, label, t0, it)


def saliency(jac: np.ndarray, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature saliency and preferred direction (+1 / -1) toward ``target``.

    Raising feature i is salient when it raises the target logit and lowers
    the other one; lowering it is salient in the mirrored case.  Features
    meeting neither condition score 0.
    """
    a = jac[target]
    b = jac[1 - target]
    up = (a > 0) & (b < 0)
    down = (a < 0) & (b > 0)
    score = np.where(up | down, np.abs(a) * np.abs(b), 0.0)
    direction = np.where(down, -1.0, 1.0)
    return score, direction


def jsma(m: Model, x, cfg: AttackConfig = DEFAULTS[Method.JSMA], label: Optional[int] = None) -> AttackOutcome:
    """Greedy single-feature saliency attack with per-step change ``theta``.

    A touched feature keeps its first direction.  Features already at the box
    bound in their direction are excluded, and at most ``floor(gamma * n)``
    distinct features may be touched.
    """
    t0 = time.perf_counter()
    x, label = _prepare(m, x, label)
    target = 1 - label
    n = x.size
    limit = int(np.floor(cfg.gamma * n + 1e-9))
    x_adv = x.copy()
    locked: dict[int, float] = {}
    it = 0
    while it < cfg.max_iter:
        z, jac = m.logit_jacobian(x_adv)
        if int(np.argmax(z)) != label:
            break
        score, direction = saliency(jac, target)
        if not np.any(score > 0):
            # no feature satisfies the sign conditions: follow the logit difference alone
            diff = jac[target] - jac[label]
            score, direction = np.abs(diff), np.where(diff < 0, -1.0, 1.0)
        for i, d in locked.items():
            direction[i] = d
        at_bound = np.where(direction > 0, x_adv >= 1.0, x_adv <= 0.0)
        allowed = ~at_bound
        if len(locked) >= limit:
            mask = np.zeros(n, dtype=bool)
            mask[list(locked)] = True
            allowed &= mask
        cand = np.where(allowed, score, -np.inf)
        if not np.isfinite(cand).any() or cand.max() <= 0:
            break
        i = int(np.argmax(cand))
        locked.setdefault(i, float(direction[i]))
        x_adv[i] = np.clip(x_adv[i] + cfg.theta * direction[i], 0.0, 1.0)
        it += 1
    return _outcome(m, Method.JSMA, x, x_adv, label, t0, it)


def cw_objective(m: Model, x, x_adv, label: int, c: float, kappa: float = 0.0):
    """``||x_adv - x||^2 + c * max(z_label - z_other, -kappa)`` with its gradient in ``x_adv``."""
    z, margin, g = _margin_grad(m, x_adv, label)
    d = x_adv - x
    active = margin > -kappa
    value = float(d @ d) + c * (margin if active else -kappa)
    grad = 2.0 * d + (c * g if active else 0.0)
    return value, grad, z


def _binary_search(m, x, label, cfg, inner, method) -> tuple[Optional[np.ndarray], int]:
    """Shared outer loop over the trade-off constant ``c``; ``inner`` returns the best success or None."""
    c, lo, hi = cfg.initial_const, 0.0, np.inf
    best, best_score, iters = None, np.inf, 0
    for _ in range(cfg.binary_steps):
        found, score, n = inner(c)
        iters += n
        if found is not None:
            if score < best_score:
                best, best_score = found, score
            hi = min(hi, c)
            c = (lo + hi) / 2
        else:
            lo = max(lo, c)
            c = c * 10 if not np.isfinite(hi) else (lo + hi) / 2
    return best, iters


def carlini_wagner_l2(m: Model, x, cfg: AttackConfig = DEFAULTS[Method.CW], label: Optional[int] = None) -> AttackOutcome:
    """C&W L2 with the tanh change of variables, Adam inner loop and binary search over ``c``."""
    t0 = time.perf_counter()
    x, label = _prepare(m, x, label)
    if _pred(m, x) != label:
        return _outcome(m, Method.CW, x, x, label, t0, 0)
    v0 = np.arctanh((2.0 * x - 1.0) * (1.0 - 1e-7))
    b1, b2, eps = 0.9, 0.999, 1e-8

    def inner(c):
        v = v0.copy()
        mo = np.zeros_like(v)
        ve = np.zeros_like(v)
        best, best_l2 = None, np.inf
        it = 0
        for it in range(1, cfg.max_iter + 1):
            t = np.tanh(v)
            xa = (t + 1.0) / 2.0
            val, g, z = cw_objective(m, x, xa, label, c, cfg.kappa)
            if not np.isfinite(val):
                raise AttackError(f"C&W objective is not finite at iteration {it}")
            if int(np.argmax(z)) != label:
                l2 = float((xa - x) @ (xa - x))
                if l2 < best_l2:
                    best, best_l2 = xa, l2
            gv = g * (1.0 - t * t) / 2.0
            mo = b1 * mo + (1 - b1) * gv
            ve = b2 * ve + (1 - b2) * gv * gv
            v = v - cfg.step_size * (mo / (1 - b1 ** it)) / (np.sqrt(ve / (1 - b2 ** it)) + eps)
        return best, best_l2, it

    best, iters = _binary_search(m, x, label, cfg, inner, Method.CW)
    return _outcome(m, Method.CW, x, x if best is None else best, label, t0, iters)


def ista_step(m: Model, x, x_adv, label: int, c: float, cfg: AttackConfig):
    """One shrinkage-thresholding step: gradient step on the C&W objective, soft-threshold, box."""
    val, g, z = cw_objective(m, x, x_adv, label, c, cfg.kappa)
    if not np.isfinite(val):
        raise AttackError("elastic-net objective is not finite")
    y = x_adv - cfg.step_size * g - x
    y = np.sign(y) * np.maximum(np.abs(y) - cfg.beta * cfg.step_size, 0.0)
    return np.clip(x + y, 0.0, 1.0)


def elastic_net(m: Model, x, cfg: AttackConfig = DEFAULTS[Method.ELASTICNET], label: Optional[int] = None,
                callback: Optional[Callable[[float, int, np.ndarray], None]] = None) -> AttackOutcome:
    """Elastic-net (EAD) attack solved by ISTA; successes ranked by ``beta*L1 + L2^2``.

    ``callback(c, iteration, x_adv)`` sees every iterate, for tracing.
    """
    t0 = time.perf_counter()
    x, label = _prepare(m, x, label)
    if _pred(m, x) != label:
        return _outcome(m, Method.ELASTICNET, x, x, label, t0, 0)

    def inner(c):
        xa = x.copy()
        best, best_en = None, np.inf
        it = 0
        for it in range(1, cfg.max_iter + 1):
            xa = ista_step(m, x, xa, label, c, cfg)
            if callback is not None:
                callback(c, it, xa)
            if _pred(m, xa) != label:
                d = xa - x
                en = cfg.beta * float(np.abs(d).sum()) + float(d @ d)
                if en < best_en:
                    best, best_en = xa, en
        return best, best_en, it

    best, iters = _binary_search(m, x, label, cfg, inner, Method.ELASTICNET)
    return _outcome(m, Method.ELASTICNET, x, x if best is None else best, label, t0, iters)


ATTACKS = {
    Method.PGD: pgd,
    Method.MIM: mim,
    Method.DEEPFOOL: deepfool,
    Method.JSMA: jsma,
    Method.CW: carlini_wagner_l2,
    Method.ELASTICNET: elastic_net,
}


def run_attack(m: Model, x, cfg: AttackConfig, label: Optional[int] = None) -> AttackOutcome:
    return ATTACKS[cfg.method](m, x, cfg, label=label)


@dataclass
class SuiteRow:
    method: Method
    samples: int
    successes: int
    avg_fg: float
    mean_ct_ms: float
    avg_fg_defined: bool

    @property
    def mr(self) -> float:
        return self.successes / self.samples if self.samples else 0.0

    def csv_row(self, timing: bool = True) -> list[str]:
        row = [self.method.value, str(self.samples), f"{100 * self.mr:.2f}", f"{self.avg_fg:.2f}"]
        return row + [f"{self.mean_ct_ms:.3f}"] if timing else row


@dataclass
class SuiteResult:
    rows: list[SuiteRow] = field(default_factory=list)
    outcomes: dict[Method, list[AttackOutcome]] = field(default_factory=dict)

    def row(self, method) -> SuiteRow:
        method = Method(method)
        return next(r for r in self.rows if r.method is method)

    def to_csv(self, timing: bool = True) -> str:
        header = ["method", "samples", "MR_percent", "avg_fg"] + (["mean_ct_ms"] if timing else [])
        lines = [",".join(header)] + [",".join(r.csv_row(timing)) for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(o.to_dict()) + "\n" for outs in self.outcomes.values() for o in outs)


def run_attack_suite(m: Model, X, y, configs: Sequence[AttackConfig],
                     ids: Optional[Sequence[str]] = None, threads: int = 1) -> SuiteResult:
    """Attack every correctly classified sample with each config.

    MR is successes over attacked samples; Avg.FG averages changed features
    over successes only (reported as 0 with ``avg_fg_defined=False`` when
    nothing succeeded); CT is the mean per-sample wall-clock time.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, m.n_inputs)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty test set")
    ids = list(ids) if ids is not None else [str(i) for i in range(len(X))]
    keep = np.flatnonzero(m.predict(X) == y)
    result = SuiteResult()
    for cfg in configs:
        fn = ATTACKS[cfg.method]

        def one(i):
            out = fn(m, X[i], cfg, label=int(y[i]))
            out.sample_id = ids[i]
            return out

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(one, keep))
        else:
            outs = [one(i) for i in keep]
        wins = [o for o in outs if o.success]
        result.outcomes[cfg.method] = outs
        result.rows.append(SuiteRow(
            cfg.method, len(outs), len(wins),
            float(np.mean([o.features_changed for o in wins])) if wins else 0.0,
            float(np.mean([o.ct_ms for o in outs])) if outs else 0.0,
            bool(wins)))
    return result
