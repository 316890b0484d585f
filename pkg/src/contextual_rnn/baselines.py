"""Bag-of-words baselines augmented with exponentially decaying modifier effects.

Every variant computes, for a document ``x_0..x_{T-1}``::

    logit = b + sum_t ( beta[x_t]
                        + s_t * beta[x_t]                 # shared-weight modulation
                        + sum_p c_{p,t} * beta_mod_p[x_t]  # learned modifier weights
                        + c_bod_t * beta_bod[x_t] + c_eod_t * beta_eod[x_t] )

where each modulation signal is an exponential filter ``alpha * exp(-s / tau)``
convolved with a modifier indicator.  Modifier filters are causal and act on
strictly later positions; the begin-of-document pseudo-token sits just before
the first token and the end-of-document one just after the last (its filter
runs backwards).  Which terms exist depends on the variant:

=====================  =============================  =======================
variant                modulation                     parameters
=====================  =============================  =======================
bow                    none                           W + 1
comw                   modifiers -> beta              W + 1 + 2M
conv_bodeod            BOD/EOD -> beta                W + 1 + 4
comw_bmod              modifiers -> beta_mod_p        W + 1 + 2M + PW
conv_bodeod_bbodeod    BOD -> beta_bod, EOD -> beta_eod   W + 1 + 4 + 2W
comw_bmod_bbodeod      both of the above              W + 1 + 4 + 2W + 2M + PW
=====================  =============================  =======================

In the ``beta_mod`` variants each modifier drives one of the ``P`` weight
vectors, given by a fixed ``groups`` assignment (not a parameter).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

VARIANTS = ("bow", "conv_bodeod", "conv_bodeod_bbodeod", "comw", "comw_bmod", "comw_bmod_bbodeod")
VARIANT_LABELS = {
    "bow": "Bag of words",
    "conv_bodeod": "Convolution of BOD & EOD tokens",
    "conv_bodeod_bbodeod": "Conv. + BOD & EOD tokens + beta_BOD + beta_EOD",
    "comw": "Convolution of Modifier Words (CoMW)",
    "comw_bmod": "CoMW + beta_mod",
    "comw_bmod_bbodeod": "CoMW + beta_mod + beta_BOD + beta_EOD",
}

TAU_INIT = 4.0
ALPHA_INIT = 0.5


@dataclass(frozen=True)
class BaselineSpec:
    variant: str
    W: int
    modifiers: tuple[int, ...] = ()
    P: int = 3
    groups: tuple[int, ...] | None = None   # component index per modifier (beta_mod variants)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if any(not 0 <= m < self.W for m in self.modifiers):
            raise ValueError("modifier id outside the vocabulary")
        if self.groups is not None and len(self.groups) != len(self.modifiers):
            raise ValueError("groups must assign one component per modifier")

    @property
    def M(self) -> int:
        return len(self.modifiers) if self.uses_modifiers else 0

    @property
    def uses_modifiers(self) -> bool:
        return self.variant.startswith("comw")

    @property
    def uses_bodeod(self) -> bool:
        return "bodeod" in self.variant

    @property
    def shared_weights(self) -> bool:
        """Modulation scales ``beta`` itself rather than separate weight vectors."""
        return self.variant in ("comw", "conv_bodeod")

    @property
    def component_of(self) -> np.ndarray:
        if self.groups is not None:
            return np.asarray(self.groups, int)
        return np.arange(len(self.modifiers)) % max(self.P, 1)

    def expected_param_count(self) -> int:
        W, M, P = self.W, len(self.modifiers), self.P
        return {
            "bow": W + 1,
            "comw": W + 1 + 2 * M,
            "conv_bodeod": W + 1 + 4,
            "comw_bmod": W + 1 + 2 * M + P * W,
            "conv_bodeod_bbodeod": W + 1 + 4 + 2 * W,
            "comw_bmod_bbodeod": W + 1 + 4 + 2 * W + 2 * M + P * W,
        }[self.variant]


def init_weights(spec: BaselineSpec) -> dict[str, np.ndarray]:
    """Zero word weights; filters start at ``alpha=0.5``, ``tau=4`` (``tau`` stored as its log)."""
    W, M = spec.W, spec.M
    wts = {"beta": np.zeros(W), "b": np.zeros(())}
    if spec.uses_modifiers:
        wts["alpha"] = np.full(M, ALPHA_INIT)
        wts["log_tau"] = np.full(M, np.log(TAU_INIT))
        if not spec.shared_weights:
            wts["beta_mod"] = np.zeros((spec.P, W))
    if spec.uses_bodeod:
        wts["alpha_bod"] = np.full((), ALPHA_INIT)
        wts["log_tau_bod"] = np.full((), np.log(TAU_INIT))
        wts["alpha_eod"] = np.full((), ALPHA_INIT)
        wts["log_tau_eod"] = np.full((), np.log(TAU_INIT))
        if not spec.shared_weights:
            wts["beta_bod"] = np.zeros(W)
            wts["beta_eod"] = np.zeros(W)
    return wts


def param_count(weights: dict) -> int:
    return int(sum(np.size(v) for v in weights.values()))


# --------------------------------------------------------------- primitives

def modifier_indicator(tokens, m: int) -> np.ndarray:
    return (np.asarray(tokens) == m).astype(float)


def conv_modifier_signal(mu, alpha: float, tau: float, direction: str = "causal") -> np.ndarray:
    """Exponential-filter response ``sum_{s>=1} alpha e^{-s/tau} mu[t -+ s]``."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    mu = np.asarray(mu, float)
    if direction == "acausal":
        return conv_modifier_signal(mu[::-1], alpha, tau, "causal")[::-1]
    if direction != "causal":
        raise ValueError("direction must be 'causal' or 'acausal'")
    out = np.zeros_like(mu)
    decay = np.exp(-1.0 / tau)
    acc = 0.0
    for t in range(1, len(mu)):
        acc = decay * (acc + mu[t - 1])
        out[t] = alpha * acc
    return out


# ------------------------------------------------------ batched evaluation

def _pack(sequences) -> tuple[np.ndarray, np.ndarray]:
    seqs = [np.asarray(s, int) for s in sequences]
    T = max((len(s) for s in seqs), default=0)
    tok = np.zeros((len(seqs), max(T, 1)), int)
    mask = np.zeros((len(seqs), max(T, 1)))
    for i, s in enumerate(seqs):
        tok[i, : len(s)] = s
        mask[i, : len(s)] = 1
    return tok, mask


def _forward(spec: BaselineSpec, wts: dict, tok: np.ndarray, mask: np.ndarray):
    B, T = tok.shape
    beta = wts["beta"]
    bx = beta[tok] * mask
    logit = bx.sum(1) + wts["b"]
    cache = {"bx": bx}
    pos = np.arange(T)
    if spec.uses_modifiers and spec.M:
        mod_index = np.full(spec.W, -1)
        mod_index[list(spec.modifiers)] = np.arange(spec.M)
        midx = np.where(mask > 0, mod_index[tok], -1)            # (B, T)
        is_mod = midx >= 0
        alpha = np.where(is_mod, wts["alpha"][np.maximum(midx, 0)], 0.0)
        tau = np.exp(wts["log_tau"][np.maximum(midx, 0)])
        lag = pos[:, None] - pos[None, :]                        # t - u
        causal = lag > 0
        decay = np.where(causal[None] & is_mod[:, None, :],
                         np.exp(-np.maximum(lag, 0)[None] / tau[:, None, :]), 0.0)  # (B, t, u)
        E = decay * alpha[:, None, :]
        cache.update(midx=midx, decay=decay, E=E, lag=lag, tau=tau)
        if spec.shared_weights:
            s = E.sum(2)
            logit += (s * bx).sum(1)
            cache["s_mod"] = s
        else:
            comp = spec.component_of[np.maximum(midx, 0)]         # (B, u)
            C = np.stack([(E * ((comp == p) & is_mod)[:, None, :]).sum(2) for p in range(spec.P)], 1)
            bm = wts["beta_mod"][:, tok] * mask[None]             # (P, B, T)
            logit += np.einsum("bpt,pbt->b", C, bm)
            cache.update(C=C, bm=bm, comp=comp)
    if spec.uses_bodeod:
        lengths = mask.sum(1)
        d_bod = (pos[None, :] + 1.0) * mask                        # distance from BOD
        d_eod = (lengths[:, None] - pos[None, :]) * mask           # distance from EOD
        e_bod = np.exp(-d_bod / np.exp(wts["log_tau_bod"])) * mask
        e_eod = np.exp(-d_eod / np.exp(wts["log_tau_eod"])) * mask
        c_bod = wts["alpha_bod"] * e_bod
        c_eod = wts["alpha_eod"] * e_eod
        if spec.shared_weights:
            logit += ((c_bod + c_eod) * bx).sum(1)
        else:
            logit += (c_bod * wts["beta_bod"][tok] * mask).sum(1) + (c_eod * wts["beta_eod"][tok] * mask).sum(1)
        cache.update(d_bod=d_bod, d_eod=d_eod, e_bod=e_bod, e_eod=e_eod, c_bod=c_bod, c_eod=c_eod)
    return logit, cache


def predict_batch(spec: BaselineSpec, wts: dict, sequences) -> np.ndarray:
    if len(sequences) == 0:
        return np.zeros(0)
    tok, mask = _pack(sequences)
    if np.any((tok < 0) | (tok >= spec.W)):
        raise ValueError("token id outside the vocabulary")
    return _forward(spec, wts, tok, mask)[0]


def predict(spec: BaselineSpec, wts: dict, tokens) -> float:
    return float(predict_batch(spec, wts, [list(tokens)])[0])


def loss_and_gradients(spec: BaselineSpec, wts: dict, tok, mask, labels, l2: float = 0.0):
    """Mean sigmoid cross-entropy and gradients for every weight array."""
    logit, c = _forward(spec, wts, tok, mask)
    B = len(labels)
    loss = float(np.mean(np.logaddexp(0, logit) - labels * logit))
    dl = (0.5 * (1 + np.tanh(0.5 * logit)) - labels) / B          # dL/dlogit
    g = {k: np.zeros_like(v) for k, v in wts.items()}
    g["b"] = np.array(dl.sum())
    W = spec.W
    # coefficient multiplying beta[x_t] at every position
    beta_coef = np.ones_like(mask) * mask
    if spec.shared_weights:
        if "s_mod" in c:
            beta_coef = beta_coef + c["s_mod"] * mask
        if spec.uses_bodeod:
            beta_coef = beta_coef + (c["c_bod"] + c["c_eod"]) * mask
    np.add.at(g["beta"], tok, dl[:, None] * beta_coef)

    def scatter_filter(dE, key_a, key_t):
        # dE: (B, t, u) gradient wrt E entries
        dA = (dE * c["decay"]).sum(1)                                  # (B, u)
        dlt = (dE * c["E"] * np.maximum(c["lag"], 0)[None] / c["tau"][:, None, :]).sum(1)
        sel = c["midx"] >= 0
        np.add.at(g[key_a], c["midx"][sel], dA[sel])
        np.add.at(g[key_t], c["midx"][sel], dlt[sel])

    if spec.uses_modifiers and spec.M:
        if spec.shared_weights:
            ds = dl[:, None] * c["bx"]                                  # (B, t)
            scatter_filter(np.broadcast_to(ds[:, :, None], c["E"].shape), "alpha", "log_tau")
        else:
            # logit += sum_p,t C[b,p,t] bm[p,b,t]
            for p in range(spec.P):
                np.add.at(g["beta_mod"][p], tok, dl[:, None] * c["C"][:, p] * mask)
            dC = dl[:, None, None] * np.transpose(c["bm"], (1, 0, 2))   # (B, P, t)
            comp = c["comp"]
            dE = np.zeros_like(c["E"])
            for p in range(spec.P):
                dE += dC[:, p, :, None] * (comp == p)[:, None, :]
            scatter_filter(dE, "alpha", "log_tau")
    if spec.uses_bodeod:
        if spec.shared_weights:
            dcb = dl[:, None] * c["bx"]
            dce = dcb
        else:
            dcb = dl[:, None] * wts["beta_bod"][tok] * mask
            dce = dl[:, None] * wts["beta_eod"][tok] * mask
            np.add.at(g["beta_bod"], tok, dl[:, None] * c["c_bod"] * mask)
            np.add.at(g["beta_eod"], tok, dl[:, None] * c["c_eod"] * mask)
        for side, dcs in (("bod", dcb), ("eod", dce)):
            tau = np.exp(wts[f"log_tau_{side}"])
            g[f"alpha_{side}"] = np.array((dcs * c[f"e_{side}"]).sum())
            g[f"log_tau_{side}"] = np.array((dcs * c[f"c_{side}"] * c[f"d_{side}"] / tau).sum())
    if l2:
        for k in ("beta", "beta_mod", "beta_bod", "beta_eod"):
            if k in wts:
                loss += l2 * float(np.sum(wts[k] ** 2))
                g[k] += 2 * l2 * wts[k]
    return loss, g


# ------------------------------------------------------------------ training

@dataclass
class BaselineTrainConfig:
    epochs: int = 30
    batch_size: int = 64
    n_trials: int = 20
    seed: int = 0
    val_fraction: float = 0.1
    grid: dict = field(default_factory=lambda: {
        "learning_rate": [3e-3, 1e-2, 3e-2, 1e-1],
        "lr_decay": [0.9, 0.95, 1.0],
        "beta1": [0.8, 0.9, 0.95],
        "l2": [0.0, 1e-5, 1e-4, 1e-3],
        "dropout": [0.0, 0.05, 0.1, 0.2],
    })


@dataclass
class BaselineResult:
    spec: BaselineSpec
    weights: dict
    hyperparams: dict
    val_accuracy: float
    test_accuracy: float | None = None
    trials: list = field(default_factory=list)


def accuracy(spec, wts, sequences, labels) -> float:
    return float(np.mean((predict_batch(spec, wts, sequences) > 0) == (np.asarray(labels) > 0)))


def _train_once(spec, tok, mask, labels, hp, epochs, batch_size, rng, pad_id):
    from .train import AdamState, adam_step
    wts = init_weights(spec)
    state = AdamState()
    lr = hp["learning_rate"]
    n = len(tok)
    for _ in range(epochs):
        order = rng.permutation(n)
        for k in range(0, n, batch_size):
            idx = order[k:k + batch_size]
            t, m = tok[idx], mask[idx]
            if hp["dropout"] > 0:
                drop = (rng.random(t.shape) < hp["dropout"]) & (m > 0)
                if pad_id is None:
                    m = np.where(drop, 0.0, m)
                else:
                    t = np.where(drop, pad_id, t)
            _, g = loss_and_gradients(spec, wts, t, m, labels[idx], hp["l2"])
            adam_step(wts, g, state, lr, beta1=hp["beta1"])
        lr *= hp["lr_decay"]
    return wts


def train_baseline(spec: BaselineSpec, sequences, labels, cfg: BaselineTrainConfig | None = None,
                   test: tuple | None = None, pad_id: int | None = None) -> BaselineResult:
    """Random hyperparameter search; returns the model with the best validation accuracy."""
    cfg = cfg or BaselineTrainConfig()
    rng = np.random.default_rng(cfg.seed)
    tok, mask = _pack(sequences)
    labels = np.asarray(labels, float)
    order = rng.permutation(len(tok))
    n_val = max(1, int(round(len(tok) * cfg.val_fraction)))
    va, tr = order[:n_val], order[n_val:]
    keys = sorted(cfg.grid)
    best = None
    trials = []
    for trial in range(cfg.n_trials):
        hp = {k: cfg.grid[k][int(rng.integers(len(cfg.grid[k])))] for k in keys}
        wts = _train_once(spec, tok[tr], mask[tr], labels[tr], hp, cfg.epochs, cfg.batch_size,
                          np.random.default_rng([cfg.seed, trial]), pad_id)
        logit, _ = _forward(spec, wts, tok[va], mask[va])
        acc = float(np.mean((logit > 0) == (labels[va] > 0)))
        trials.append({**hp, "val_accuracy": acc})
        if best is None or acc > best[0]:
            best = (acc, wts, hp)
    res = BaselineResult(spec, best[1], best[2], best[0], trials=trials)
    if test is not None:
        res.test_accuracy = accuracy(spec, res.weights, test[0], test[1])
    return res


def extract_modifier_list(source, M: int, vocab_size: int | None = None) -> list[int]:
    """Top-``M`` words from a ``{word: score}`` mapping (ties by id), or an explicit list."""
    if isinstance(source, dict):
        if vocab_size is not None and M > vocab_size:
            raise ValueError(f"M={M} exceeds vocabulary size {vocab_size}")
        if M > len(source):
            raise ValueError(f"M={M} exceeds the {len(source)} scored words")
        return [w for w, _ in sorted(source.items(), key=lambda kv: (-kv[1], kv[0]))[:M]]
    words = [int(w) for w in source]
    if M > len(words):
        raise ValueError(f"M={M} exceeds the {len(words)} listed words")
    return words[:M]


def weights_to_dict(res: BaselineResult) -> dict:
    return {"format_version": 1, "kind": "baseline", "spec": asdict(res.spec),
            "hyperparams": res.hyperparams, "val_accuracy": res.val_accuracy,
            "test_accuracy": res.test_accuracy,
            "arrays": {k: np.asarray(v).tolist() for k, v in sorted(res.weights.items())}}


def save_baseline(res: BaselineResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(weights_to_dict(res)) + "\n")


def load_baseline(path: str | Path) -> tuple[BaselineSpec, dict]:
    d = json.loads(Path(path).read_text())
    s = d["spec"]
    spec = BaselineSpec(s["variant"], s["W"], tuple(s["modifiers"]), s["P"],
                        None if s["groups"] is None else tuple(s["groups"]))
    return spec, {k: np.array(v, float) for k, v in d["arrays"].items()}
