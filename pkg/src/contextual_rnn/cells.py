"""Recurrent cells, readout and sequence evaluation.

All cells map ``(h, x) -> h'`` with row-major batches: ``h`` is ``(B, S)``
and ``x`` is ``(B, D)``.  Update equations (``a_k = h W_k^T + x U_k^T + b_k``):

vanilla
    h' = tanh(a)
gru (Cho et al. 2014)
    z = sig(a_z), r = sig(a_r), c = tanh((r*h) W_c^T + x U_c^T + b_c)
    h' = z*h + (1-z)*c
ugrnn (Collins et al. 2016, update-gate RNN)
    g = sig(a_g), c = tanh(a_c),  h' = g*h + (1-g)*c
lstm (Hochreiter & Schmidhuber 1997)
    i, f, o = sig(a_i), sig(a_f), sig(a_o), g = tanh(a_g)
    c' = f*c + i*g,  h' = o*tanh(c')
    the state vector is [h, c] (hidden part first) and gates read h only.

The readout is ``w . h_hidden + b`` where ``h_hidden`` is the first ``N``
entries of the state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

CELL_KINDS = ("vanilla", "gru", "lstm", "ugrnn")
CHECKPOINT_VERSION = 1

_GATES = {
    "vanilla": ("",),
    "gru": ("z", "r", "c"),
    "ugrnn": ("g", "c"),
    "lstm": ("i", "f", "o", "g"),
}


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _names(kind: str) -> list[str]:
    out = []
    for g in _GATES[kind]:
        sfx = f"_{g}" if g else ""
        out += [f"W{sfx}", f"U{sfx}", f"b{sfx}"]
    return out


@dataclass
class RnnParams:
    kind: str
    hidden_size: int
    input_size: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    pad_id: int | None = None

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}; expected one of {CELL_KINDS}")

    @property
    def state_size(self) -> int:
        return 2 * self.hidden_size if self.kind == "lstm" else self.hidden_size

    @property
    def w(self) -> np.ndarray:
        return self.arrays["w_out"]

    @property
    def b(self) -> float:
        return float(self.arrays["b_out"])

    @property
    def h0(self) -> np.ndarray:
        return self.arrays["h0"]

    def copy(self) -> "RnnParams":
        return RnnParams(self.kind, self.hidden_size, self.input_size,
                         {k: v.copy() for k, v in self.arrays.items()}, self.pad_id)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        N, D, S = self.hidden_size, self.input_size, self.state_size
        shp: dict[str, tuple[int, ...]] = {}
        for name in _names(self.kind):
            shp[name] = {"W": (N, N), "U": (N, D), "b": (N,)}[name[0]]
        shp.update(w_out=(N,), b_out=(), h0=(S,))
        return shp

    def validate(self) -> None:
        expected = self.shapes()
        if set(expected) != set(self.arrays):
            raise ValueError(f"parameter names {sorted(self.arrays)} != {sorted(expected)}")
        for k, shp in expected.items():
            a = self.arrays[k]
            if a.shape != shp:
                raise ValueError(f"{k}: shape {a.shape}, expected {shp}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{k}: non-finite entries")


def init_params(kind: str, hidden_size: int, input_size: int, seed: int = 0,
                pad_id: int | None = None) -> RnnParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases and zero h0.

    The LSTM forget-gate bias starts at 1.
    """
    rng = np.random.default_rng(seed)
    p = RnnParams(kind, hidden_size, input_size, {}, pad_id)
    for name, shp in p.shapes().items():
        if name[0] in "WU" and name not in ("w_out",):
            bound = 1.0 / np.sqrt(shp[1])
            p.arrays[name] = rng.uniform(-bound, bound, size=shp)
        elif name == "w_out":
            p.arrays[name] = rng.uniform(-1, 1, size=shp) / np.sqrt(hidden_size)
        else:
            p.arrays[name] = np.zeros(shp)
    if kind == "lstm":
        p.arrays["b_f"][:] = 1.0
    return p


def one_hot(tokens, input_size: int, pad_id: int | None = None) -> np.ndarray:
    """One-hot inputs of shape ``tokens.shape + (D,)``; the pad token maps to zeros."""
    tokens = np.asarray(tokens, dtype=int)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= input_size):
        raise ValueError(f"token id out of range [0, {input_size})")
    x = np.zeros(tokens.shape + (input_size,))
    np.put_along_axis(x, tokens[..., None], 1.0, axis=-1)
    if pad_id is not None:
        x[tokens == pad_id] = 0.0
    return x


def _lin(p, g, h, x):
    sfx = f"_{g}" if g else ""
    A = p.arrays
    return h @ A["W" + sfx].T + x @ A["U" + sfx].T + A["b" + sfx]


# ---------------------------------------------------------------- forward

def cell_forward(p: RnnParams, h: np.ndarray, x: np.ndarray):
    """One batched step; returns ``(h_new, cache)``."""
    N = p.hidden_size
    A = p.arrays
    if p.kind == "vanilla":
        hn = np.tanh(_lin(p, "", h, x))
        return hn, (h, x, hn)
    if p.kind == "gru":
        z = sigmoid(_lin(p, "z", h, x))
        r = sigmoid(_lin(p, "r", h, x))
        rh = r * h
        c = np.tanh(rh @ A["W_c"].T + x @ A["U_c"].T + A["b_c"])
        hn = z * h + (1 - z) * c
        return hn, (h, x, z, r, rh, c)
    if p.kind == "ugrnn":
        g = sigmoid(_lin(p, "g", h, x))
        c = np.tanh(_lin(p, "c", h, x))
        hn = g * h + (1 - g) * c
        return hn, (h, x, g, c)
    hh, cc = h[:, :N], h[:, N:]
    i = sigmoid(_lin(p, "i", hh, x))
    f = sigmoid(_lin(p, "f", hh, x))
    o = sigmoid(_lin(p, "o", hh, x))
    g = np.tanh(_lin(p, "g", hh, x))
    cn = f * cc + i * g
    tc = np.tanh(cn)
    hn = o * tc
    return np.concatenate([hn, cn], axis=1), (hh, cc, x, i, f, o, g, cn, tc)


def _acc(grads, g, da, hin, x):
    if grads is None:
        return
    sfx = f"_{g}" if g else ""
    grads["W" + sfx] += da.T @ hin
    grads["U" + sfx] += da.T @ x
    grads["b" + sfx] += da.sum(0)


def cell_backward(p: RnnParams, cache, dhn: np.ndarray, grads: dict | None = None,
                  need_dx: bool = False):
    """Vector-Jacobian product of one step.

    Returns ``(dh, dx)`` (``dx`` is None unless requested) and accumulates
    weight gradients into ``grads`` when given.
    """
    A = p.arrays
    N = p.hidden_size
    if p.kind == "vanilla":
        h, x, hn = cache
        da = dhn * (1 - hn ** 2)
        _acc(grads, "", da, h, x)
        return da @ A["W"], (da @ A["U"] if need_dx else None)
    if p.kind == "gru":
        h, x, z, r, rh, c = cache
        dz = dhn * (h - c)
        dac = dhn * (1 - z) * (1 - c ** 2)
        dh = dhn * z
        drh = dac @ A["W_c"]
        dh += drh * r
        daz = dz * z * (1 - z)
        dar = drh * h * r * (1 - r)
        dh += daz @ A["W_z"] + dar @ A["W_r"]
        if grads is not None:
            grads["W_c"] += dac.T @ rh
            grads["U_c"] += dac.T @ x
            grads["b_c"] += dac.sum(0)
        _acc(grads, "z", daz, h, x)
        _acc(grads, "r", dar, h, x)
        dx = daz @ A["U_z"] + dar @ A["U_r"] + dac @ A["U_c"] if need_dx else None
        return dh, dx
    if p.kind == "ugrnn":
        h, x, g, c = cache
        dag = dhn * (h - c) * g * (1 - g)
        dac = dhn * (1 - g) * (1 - c ** 2)
        dh = dhn * g + dag @ A["W_g"] + dac @ A["W_c"]
        _acc(grads, "g", dag, h, x)
        _acc(grads, "c", dac, h, x)
        dx = dag @ A["U_g"] + dac @ A["U_c"] if need_dx else None
        return dh, dx
    hh, cc, x, i, f, o, g, cn, tc = cache
    dh_out, dc_out = dhn[:, :N], dhn[:, N:]
    dcn = dc_out + dh_out * o * (1 - tc ** 2)
    das = {
        "o": dh_out * tc * o * (1 - o),
        "f": dcn * cc * f * (1 - f),
        "i": dcn * g * i * (1 - i),
        "g": dcn * i * (1 - g ** 2),
    }
    dhh = np.zeros_like(hh)
    dx = np.zeros_like(x) if need_dx else None
    for k, da in das.items():
        dhh += da @ A[f"W_{k}"]
        if need_dx:
            dx += da @ A[f"U_{k}"]
        _acc(grads, k, da, hh, x)
    return np.concatenate([dhh, dcn * f], axis=1), dx


# ---------------------------------------------------------------- public API

def _as_batch(p: RnnParams, h, x):
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    single = h.ndim == 1
    h2, x2 = np.atleast_2d(h), np.atleast_2d(x)
    if h2.shape[1] != p.state_size:
        raise ValueError(f"state has dimension {h2.shape[1]}, expected {p.state_size}")
    if x2.shape[1] != p.input_size:
        raise ValueError(f"input has dimension {x2.shape[1]}, expected {p.input_size}")
    return h2, x2, single


def cell_step(p: RnnParams, h, x) -> np.ndarray:
    """``F(h, x)`` for a single state or a batch of states."""
    h2, x2, single = _as_batch(p, h, x)
    hn, _ = cell_forward(p, h2, x2)
    return hn[0] if single else hn


def hidden_part(p: RnnParams, h: np.ndarray) -> np.ndarray:
    return h[..., : p.hidden_size]


def readout(p: RnnParams, h) -> np.ndarray | float:
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != p.state_size:
        raise ValueError(f"state has dimension {h.shape[-1]}, expected {p.state_size}")
    out = hidden_part(p, h) @ p.w + p.b
    return float(out) if np.ndim(out) == 0 else out


def token_input(p: RnnParams, token: int | None) -> np.ndarray:
    """Input vector for one token id (``None`` gives the zero input)."""
    if token is None:
        return np.zeros(p.input_size)
    return one_hot([token], p.input_size, p.pad_id)[0]


def run_batch(p: RnnParams, tokens, h_init: np.ndarray | None = None,
              step_hook: Callable[[int, np.ndarray], np.ndarray] | None = None):
    """Evaluate a ``(B, T)`` token batch.

    Returns states ``(B, T, S)`` (state after each token) and logits ``(B, T)``.
    ``step_hook(t, h)`` may replace the state after every step.
    """
    tokens = np.asarray(tokens, dtype=int)
    B, T = tokens.shape
    X = one_hot(tokens, p.input_size, p.pad_id)
    h = np.broadcast_to(p.h0 if h_init is None else h_init, (B, p.state_size)).astype(float)
    states = np.empty((B, T, p.state_size))
    for t in range(T):
        h, _ = cell_forward(p, h, X[:, t])
        if step_hook is not None:
            h = step_hook(t, h)
        states[:, t] = h
    logits = hidden_part(p, states) @ p.w + p.b
    return states, logits


def run_sequence(p: RnnParams, tokens, h_init: np.ndarray | None = None,
                 step_hook=None):
    """Trajectory ``(T, S)`` and logits ``(T,)`` for one token sequence."""
    tokens = np.asarray(list(tokens), dtype=int)
    if tokens.size == 0:
        return np.zeros((0, p.state_size)), np.zeros(0)
    states, logits = run_batch(p, tokens[None, :], h_init, step_hook)
    return states[0], logits[0]


def final_logits(p: RnnParams, sequences, h_init=None, step_hook=None, batch_size: int = 256):
    """Final logit of every (possibly ragged) sequence; grouped by length."""
    sequences = [list(s) for s in sequences]
    out = np.empty(len(sequences))
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(sequences):
        by_len.setdefault(len(s), []).append(i)
    for L, idx in sorted(by_len.items()):
        for k in range(0, len(idx), batch_size):
            chunk = idx[k:k + batch_size]
            if L == 0:
                h = p.h0 if h_init is None else h_init
                out[chunk] = readout(p, h)
                continue
            toks = np.array([sequences[i] for i in chunk])
            _, logits = run_batch(p, toks, h_init, step_hook)
            out[chunk] = logits[:, -1]
    return out


# ---------------------------------------------------------------- checkpoints

def params_to_dict(p: RnnParams) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "kind": p.kind,
        "hidden_size": p.hidden_size,
        "input_size": p.input_size,
        "pad_id": p.pad_id,
        "arrays": {k: np.asarray(p.arrays[k]).tolist() for k in sorted(p.arrays)},
    }


def params_from_dict(d: dict) -> RnnParams:
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('format_version')!r}")
    p = RnnParams(d["kind"], int(d["hidden_size"]), int(d["input_size"]),
                  {k: np.array(v, dtype=float) for k, v in d["arrays"].items()}, d.get("pad_id"))
    p.validate()
    return p


def save_params(p: RnnParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(p)) + "\n")


def load_params(path: str | Path) -> RnnParams:
    return params_from_dict(json.loads(Path(path).read_text()))
