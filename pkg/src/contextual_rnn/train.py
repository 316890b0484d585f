"""Backpropagation through time, Adam, and the toy / classification training loops."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .cells import RnnParams, cell_forward, cell_backward, final_logits, init_params, one_hot

log = logging.getLogger(__name__)

LOSS_KINDS = ("mse", "bce")


class TrainingError(RuntimeError):
    """Raised on NaN losses or divergence."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    lr_decay: float = 1.0          # multiplicative, applied once per epoch
    batch_size: int = 64
    max_epochs: int = 50
    clip_norm: float = 10.0
    l2: float = 0.0
    dropout: float = 0.0           # probability of replacing an input token by pad
    seed: int = 0
    patience: int = 5
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    target_mse: float | None = None  # toy: stop once validation MSE falls below this
    state_noise: float = 0.0       # std of Gaussian noise added to the state after each training step

    def __post_init__(self):
        for name in ("learning_rate", "lr_decay", "clip_norm", "l2", "dropout", "val_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dropout >= 1:
            raise ValueError("dropout must be < 1")


def _l2_names(p: RnnParams) -> list[str]:
    return [k for k in p.arrays if k[0] in "WU" or k == "w_out"]


def loss_and_gradients(p: RnnParams, tokens, targets, loss_kind: str, l2: float = 0.0,
                       noise: np.ndarray | None = None):
    """Mean batch loss and its exact gradient for every parameter (including h0).

    ``tokens`` is ``(B, T)``; ``targets`` is ``(B, T)`` per-step values for
    ``"mse"`` or ``(B,)`` binary labels for ``"bce"`` (final-step loss).
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
    tokens = np.asarray(tokens, dtype=int)
    targets = np.asarray(targets, dtype=float)
    B, T = tokens.shape
    N = p.hidden_size
    X = one_hot(tokens, p.input_size, p.pad_id)
    h = np.broadcast_to(p.h0, (B, p.state_size)).astype(float)
    caches, hid = [], np.empty((B, T, N))
    for t in range(T):
        h, cache = cell_forward(p, h, X[:, t])
        if noise is not None:
            h = h + noise[:, t]
        caches.append(cache)
        hid[:, t] = h[:, :N]
    y = hid @ p.w + p.b
    dy = np.zeros_like(y)
    if loss_kind == "mse":
        err = y - targets
        loss = float(np.mean(err ** 2))
        dy = 2 * err / err.size
    else:
        yT = y[:, -1]
        loss = float(np.mean(np.logaddexp(0, yT) - targets * yT))
        dy[:, -1] = (0.5 * (1 + np.tanh(0.5 * yT)) - targets) / B
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")

    grads = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    grads["w_out"] = np.einsum("bt,btn->n", dy, hid)
    grads["b_out"] = np.array(dy.sum())
    dh = np.zeros((B, p.state_size))
    for t in range(T - 1, -1, -1):
        dh[:, :N] += dy[:, t, None] * p.w
        dh, _ = cell_backward(p, caches[t], dh, grads)
    grads["h0"] = dh.sum(0)
    if l2:
        for k in _l2_names(p):
            loss += l2 * float(np.sum(p.arrays[k] ** 2))
            grads[k] += 2 * l2 * p.arrays[k]
    return loss, grads


def bptt_gradients(p: RnnParams, batch, loss_kind: str, l2: float = 0.0) -> dict:
    """Gradient of the mean batch loss; ``batch`` is ``(tokens, targets)``."""
    return loss_and_gradients(p, batch[0], batch[1], loss_kind, l2)[1]


def batch_loss(p: RnnParams, tokens, targets, loss_kind: str, l2: float = 0.0) -> float:
    return loss_and_gradients(p, tokens, targets, loss_kind, l2)[0]


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place bias-corrected Adam update of the arrays in ``params``."""
    state.step += 1
    c1 = 1 - beta1 ** state.step
    c2 = 1 - beta2 ** state.step
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        params[k] = params[k] - lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
    if max_norm and norm > max_norm:
        for k in grads:
            grads[k] = grads[k] * (max_norm / norm)
    return norm


def apply_input_dropout(tokens: np.ndarray, rate: float, pad_id: int | None,
                        rng: np.random.Generator) -> np.ndarray:
    if not rate or pad_id is None:
        return tokens
    drop = rng.random(tokens.shape) < rate
    return np.where(drop, pad_id, tokens)


@dataclass
class TrainResult:
    params: RnnParams
    history: list[dict]
    metrics: dict


def _split(n: int, frac: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_val = int(round(n * frac))
    if frac > 0:
        n_val = max(1, n_val)
    return order[n_val:], order[:n_val]


def _fit(p: RnnParams, tokens: np.ndarray, targets: np.ndarray, loss_kind: str,
         cfg: TrainConfig, val_tokens: np.ndarray, val_targets: np.ndarray,
         rng: np.random.Generator, eval_fn) -> TrainResult:
    state = AdamState()
    history: list[dict] = []
    best = (np.inf, p.copy())
    bad_epochs = 0
    initial = None
    lr = cfg.learning_rate
    n = len(tokens)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        losses = []
        for k in range(0, n, cfg.batch_size):
            idx = order[k:k + cfg.batch_size]
            toks = apply_input_dropout(tokens[idx], cfg.dropout, p.pad_id, rng)
            noise = (cfg.state_noise * rng.standard_normal(toks.shape + (p.state_size,))
                     if cfg.state_noise else None)
            loss, grads = loss_and_gradients(p, toks, targets[idx], loss_kind, cfg.l2, noise)
            if initial is None:
                initial = loss
            elif loss > 10 * initial:
                raise TrainingError(f"diverged at epoch {epoch}: loss {loss:.4g} > 10x initial {initial:.4g}")
            clip_gradients(grads, cfg.clip_norm)
            adam_step(p.arrays, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
            losses.append(loss)
        val = eval_fn(p, val_tokens, val_targets)
        rec = {"epoch": epoch, "train_loss": float(np.mean(losses)), **val}
        history.append(rec)
        log.info("epoch %d train %.5f val %.5f", epoch, rec["train_loss"], val["val_loss"])
        if val["val_loss"] < best[0]:
            best = (val["val_loss"], p.copy())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
        if cfg.target_mse is not None and val.get("val_mse", np.inf) < cfg.target_mse:
            break
        lr *= cfg.lr_decay
    return TrainResult(best[1], history, {"best_val_loss": float(best[0])})


def train_toy(cell_kind: str, corpus: Sequence, cfg: TrainConfig | None = None,
              hidden_size: int = 100, vocab_size: int = 8, pad_id: int | None = 7,
              init: RnnParams | None = None) -> TrainResult:
    """Per-step least-squares training on toy examples (``.tokens``, ``.targets``)."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    p = init.copy() if init is not None else init_params(cell_kind, hidden_size, vocab_size, cfg.seed, pad_id)
    tokens = np.array([ex.tokens for ex in corpus], dtype=int)
    targets = np.array([ex.targets for ex in corpus], dtype=float)
    tr, va = _split(len(tokens), cfg.val_fraction, rng)

    def evaluate(p, vt, vy):
        mse = batch_loss(p, vt, vy, "mse")
        return {"val_loss": mse, "val_mse": mse}

    res = _fit(p, tokens[tr], targets[tr], "mse", cfg, tokens[va], targets[va], rng, evaluate)
    res.metrics["val_mse"] = batch_loss(res.params, tokens[va], targets[va], "mse")
    return res


def accuracy(p: RnnParams, sequences, labels, **kw) -> float:
    logits = final_logits(p, sequences, **kw)
    return float(np.mean((logits > 0) == (np.asarray(labels) > 0)))


def train_classifier(cell_kind: str, corpus: Sequence, cfg: TrainConfig | None = None,
                     hidden_size: int = 100, vocab_size: int = 8, pad_id: int | None = 7,
                     test: Sequence | None = None) -> TrainResult:
    """Sigmoid cross-entropy on the final logit; examples must share one length."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    p = init_params(cell_kind, hidden_size, vocab_size, cfg.seed, pad_id)
    lengths = {len(ex.tokens) for ex in corpus}
    if len(lengths) != 1:
        raise ValueError("train_classifier expects equal-length sequences; bucket ragged corpora first")
    tokens = np.array([ex.tokens for ex in corpus], dtype=int)
    labels = np.array([ex.label for ex in corpus], dtype=float)
    tr, va = _split(len(tokens), cfg.val_fraction, rng)

    def evaluate(p, vt, vy):
        logits = final_logits(p, vt)
        loss = float(np.mean(np.logaddexp(0, logits) - vy * logits))
        return {"val_loss": loss, "val_accuracy": float(np.mean((logits > 0) == (vy > 0)))}

    res = _fit(p, tokens[tr], labels[tr], "bce", cfg, tokens[va], labels[va], rng, evaluate)
    res.metrics["train_accuracy"] = accuracy(res.params, tokens[tr], labels[tr])
    res.metrics["val_accuracy"] = accuracy(res.params, tokens[va], labels[va])
    if test is not None:
        res.metrics["test_accuracy"] = accuracy(res.params, [ex.tokens for ex in test],
                                                [ex.label for ex in test])
    return res


def shuffle_tokens(sequences, seed: int) -> list[list[int]]:
    rng = np.random.default_rng(seed)
    return [list(np.asarray(s)[rng.permutation(len(s))]) for s in sequences]


def shuffle_eval(p: RnnParams, corpus: Sequence, seed: int = 0) -> float:
    """Accuracy on token-shuffled copies of each example (labels unchanged)."""
    seqs = shuffle_tokens([ex.tokens for ex in corpus], seed)
    return accuracy(p, seqs, [ex.label for ex in corpus])


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
