"""Modifier identification, barcodes, the modifier subspace, impulse responses
and perturbation experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cells import RnnParams, cell_step, final_logits, hidden_part, readout, run_batch, token_input
from .fixed_points import LineAttractor, distance_to_attractor, nearest_states
from .linearize import input_jacobian

DEFAULT_THRESHOLD = 0.1


def h_after(p: RnnParams, h, word: int) -> np.ndarray:
    return cell_step(p, np.asarray(h, float), token_input(p, word))


def delta_input_jacobian(p: RnnParams, word: int, h_star) -> np.ndarray:
    """``J_inp(F(h*, x_word), 0) - J_inp(h*, 0)``."""
    return input_jacobian(p, h_after(p, h_star, word)) - input_jacobian(p, h_star)


def delta_input_jacobian_at(p: RnnParams, h_context, h_star) -> np.ndarray:
    return input_jacobian(p, h_context) - input_jacobian(p, h_star)


@dataclass
class ModifierReport:
    word: int
    norm: float
    h_mod: np.ndarray = field(repr=False)
    deflection: np.ndarray = field(repr=False)
    projection: np.ndarray | None = field(default=None, repr=False)
    timescales: np.ndarray | None = None


@dataclass
class ModifierRanking:
    selected: list[ModifierReport]
    ranked: list[ModifierReport]      # every scored word, descending norm
    threshold: float

    @property
    def norms(self) -> dict[int, float]:
        return {r.word: r.norm for r in self.ranked}

    def histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        """Counts over logarithmically spaced bin edges of the (positive) norms."""
        x = np.array([r.norm for r in self.ranked])
        x = x[x > 0]
        if x.size == 0:
            return np.zeros(bins, int), np.logspace(-8, 0, bins + 1)
        lo, hi = np.log10(x.min()), np.log10(x.max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.logspace(lo, hi, bins + 1)
        counts, _ = np.histogram(x, edges)
        return counts, edges


def rank_modifiers(p: RnnParams, words: Sequence[int], h_star,
                   threshold: float = DEFAULT_THRESHOLD) -> ModifierRanking:
    """Score every word by ``||dJ_inp||_F`` and keep those above ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    h_star = np.asarray(h_star, float)
    J_star = input_jacobian(p, h_star)
    reports = []
    for word in words:
        h_mod = h_after(p, h_star, word)
        dJ = input_jacobian(p, h_mod) - J_star
        reports.append(ModifierReport(int(word), float(np.linalg.norm(dJ)), h_mod, h_mod - h_star))
    ranked = sorted(reports, key=lambda r: (-r.norm, r.word))
    return ModifierRanking([r for r in ranked if r.norm > threshold], ranked, threshold)


@dataclass
class Barcode:
    probes: list[int]
    values: np.ndarray


def barcode(p: RnnParams, h_context, probes: Sequence[int], h_star) -> Barcode:
    """``w . dJ_inp(h_context) . x`` for every probe word."""
    dJ = delta_input_jacobian_at(p, h_context, h_star)
    wd = p.w @ dJ[: p.hidden_size]
    vals = np.array([wd @ token_input(p, t) for t in probes])
    return Barcode(list(probes), vals)


def select_probe_words(bow_weights, k: int, exclude: Sequence[int] = ()) -> list[int]:
    """Top-``k`` then bottom-``k`` words by bag-of-words weight (ties by id)."""
    bw = np.asarray(bow_weights, float)
    cand = [i for i in range(len(bw)) if i not in set(exclude)]
    if 2 * k > len(cand):
        raise ValueError(f"k={k} needs {2 * k} distinct words, vocabulary has {len(cand)}")
    if k == 0:
        return []
    pos = sorted(cand, key=lambda i: (-bw[i], i))[:k]
    neg = sorted(cand, key=lambda i: (bw[i], i))[:k]
    return pos + neg


def toy_probe_words(vocab) -> list[int]:
    """All nonzero-valence toy tokens: positive block (strongest first), then negative."""
    v = vocab.valences
    ids = [t.id for t in vocab.tokens if t.kind == "valence" and t.valence != 0]
    pos = sorted([i for i in ids if v[i] > 0], key=lambda i: -v[i])
    neg = sorted([i for i in ids if v[i] < 0], key=lambda i: v[i])
    return pos + neg


# ----------------------------------------------------------------- subspace

@dataclass
class ModifierSubspace:
    components: np.ndarray            # (P, S) orthonormal rows
    variance_explained: np.ndarray    # per component, fraction of orthogonalised variance
    direction: np.ndarray             # attractor direction removed before PCA

    @property
    def P(self) -> int:
        return len(self.components)

    def project(self, v) -> np.ndarray:
        return np.asarray(v) @ self.components.T


def _sign_fix(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for i in range(len(V)):
        k = int(np.argmax(np.abs(V[i])))
        if V[i, k] < 0:
            V[i] = -V[i]
    return V


def fit_modifier_subspace(deflections, direction, P: int) -> ModifierSubspace:
    """PCA (about ``h*``) of deflections with the attractor direction projected out."""
    Dm = np.atleast_2d(np.asarray(deflections, float))
    if len(Dm) < P:
        raise ValueError(f"need at least P={P} deflections, got {len(Dm)}")
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    Do = Dm - np.outer(Dm @ d, d)
    total = float(np.sum(Do ** 2))
    if total <= 1e-24 * max(1.0, float(np.sum(Dm ** 2))):
        raise ValueError("deflections have no variance orthogonal to the attractor")
    if P == 0:
        return ModifierSubspace(np.zeros((0, Dm.shape[1])), np.zeros(0), d)
    _, s, Vt = np.linalg.svd(Do, full_matrices=False)
    V = Vt[:P]
    V = V - np.outer(V @ d, d)
    V, _ = np.linalg.qr(V.T)
    V = _sign_fix(V.T)
    return ModifierSubspace(V, s[:P] ** 2 / total, d)


def random_subspace(S: int, P: int, seed: int = 0) -> np.ndarray:
    """Orthonormal rows spanning a uniformly random ``P``-dimensional subspace."""
    if P == 0:
        return np.zeros((0, S))
    Q, R = np.linalg.qr(np.random.default_rng(seed).standard_normal((S, P)))
    return (Q * np.sign(np.diag(R))).T


# ---------------------------------------------------------------- impulses

def fit_exponential(series, floor_frac: float = 1e-4, max_step: int = 30) -> tuple[float, float]:
    """Least-squares fit of ``a * exp(-t / tau)`` on log magnitudes.

    Uses steps ``0..max_step`` whose magnitude is at least ``floor_frac`` of
    the step-0 magnitude; returns ``(a, tau)``, with ``tau = nan`` when fewer
    than two steps qualify and ``inf`` when the magnitude does not decay.
    """
    y = np.abs(np.asarray(series, float))[: max_step + 1]
    if y.size < 2 or y[0] == 0:
        return float(y[0]) if y.size else 0.0, math.nan
    keep = np.flatnonzero(y >= floor_frac * y[0])
    if keep.size < 2:
        return float(y[0]), math.nan
    t = keep.astype(float)
    slope, icpt = np.polyfit(t, np.log(y[keep]), 1)
    tau = math.inf if slope >= 0 else -1.0 / slope
    return float(np.exp(icpt)), float(tau)


@dataclass
class ImpulseResponse:
    word: int
    states: np.ndarray                # (n_pads + 1, S): after the word, then after each pad
    distance: np.ndarray              # distance to the attractor at each step
    projections: np.ndarray           # (n_pads + 1, P) onto modifier components, relative to h*
    timescales: np.ndarray            # fitted tau per component (nan when undefined)
    distance_timescale: float


def impulse_response(p: RnnParams, word: int, n_pads: int, h_star, attractor: LineAttractor,
                     subspace: ModifierSubspace | None = None, floor_frac: float = 1e-4,
                     fit_steps: int = 30) -> ImpulseResponse:
    """Feed ``word`` at ``h_star`` followed by ``n_pads`` zero inputs."""
    if n_pads < 1:
        raise ValueError("n_pads must be >= 1")
    h_star = np.asarray(h_star, float)
    x0 = np.zeros(p.input_size)
    h = h_after(p, h_star, word)
    states = [h]
    for _ in range(n_pads):
        h = cell_step(p, h, x0)
        states.append(h)
    states = np.array(states)
    dist = np.array([distance_to_attractor(attractor, s) for s in states])
    if subspace is None or subspace.P == 0:
        proj = np.zeros((len(states), 0))
    else:
        proj = (states - h_star) @ subspace.components.T
    taus = np.array([fit_exponential(proj[:, k], floor_frac, fit_steps)[1] for k in range(proj.shape[1])])
    _, dtau = fit_exponential(dist, floor_frac, fit_steps)
    return ImpulseResponse(word, states, dist, proj, taus, dtau)


def fit_decay(series, frac: float = 0.1) -> float:
    """Exponential time constant of the main decay of ``|series|``.

    The fit starts at the peak and runs over the consecutive steps that stay
    at or above ``frac`` of the peak, so a low-level tail does not dominate
    the log-magnitude regression.  Returns ``nan`` when fewer than two steps
    qualify.
    """
    y = np.abs(np.asarray(series, float))
    if y.size == 0 or y.max() == 0:
        return math.nan
    k = int(np.argmax(y))
    end = k
    while end + 1 < y.size and y[end + 1] >= frac * y[k]:
        end += 1
    if end == k:
        return math.nan
    seg = y[k:end + 1]
    slope, _ = np.polyfit(np.arange(seg.size, dtype=float), np.log(seg), 1)
    return math.inf if slope >= 0 else float(-1.0 / slope)


def persistence(series, frac: float = 0.1) -> int:
    """Number of steps before ``|series|`` first drops below ``frac`` of its peak."""
    y = np.abs(np.asarray(series, float))
    if y.size == 0 or y.max() == 0:
        return 0
    below = np.flatnonzero(y < frac * y.max())
    below = below[below > int(np.argmax(y))]
    return int(below[0]) if below.size else len(y)


# ----------------------------------------------------------- perturbations

def projection_hook(components: np.ndarray, fixed_states: np.ndarray):
    """Step hook removing the subspace component of ``h - h*_nearest`` after every step."""
    M = np.asarray(components, float)

    def hook(t, h):
        if len(M) == 0:
            return h
        hs = nearest_states(fixed_states, h)
        return h - ((h - hs) @ M.T) @ M

    return hook


@dataclass
class PerturbationResult:
    accuracy: float
    logits: np.ndarray                # final logits
    traces: np.ndarray | None = None  # per-step logits of the first few examples


def _acc(logits, labels) -> float:
    return float(np.mean((np.asarray(logits) > 0) == (np.asarray(labels) > 0)))


def project_out_subspace_eval(p: RnnParams, sequences, labels, components, attractor: LineAttractor,
                              n_traces: int = 3) -> PerturbationResult:
    """Accuracy when every state is projected out of ``components`` (about the nearest fixed point)."""
    hook = projection_hook(components, attractor.states)
    logits = final_logits(p, sequences, step_hook=hook)
    traces = None
    if n_traces:
        seqs = [list(s) for s in sequences[:n_traces]]
        traces = np.array([run_batch(p, np.array([s]), step_hook=hook)[1][0] for s in seqs], dtype=object) \
            if len({len(s) for s in seqs}) > 1 else run_batch(p, np.array(seqs), step_hook=hook)[1]
    return PerturbationResult(_acc(logits, labels), logits, traces)


@dataclass
class H0Report:
    barcode: Barcode
    projection: np.ndarray
    baseline_accuracy: float
    perturbed_accuracy: float
    random_accuracy: float


def h0_analysis(p: RnnParams, subspace: ModifierSubspace, h_star, sequences, labels,
                probes: Sequence[int], seed: int = 0) -> H0Report:
    """Barcode and subspace projection of the initial state, and the accuracy
    cost of projecting ``h0`` out of the modifier subspace (random-subspace control)."""
    h_star = np.asarray(h_star, float)
    h0 = p.h0
    M = subspace.components
    proj = M @ (h0 - h_star)
    base = _acc(final_logits(p, sequences), labels)
    h0_mod = h0 - (M.T @ proj if len(M) else 0.0)
    pert = _acc(final_logits(p, sequences, h_init=h0_mod), labels)
    R = random_subspace(p.state_size, len(M), seed)
    h0_rand = h0 - (R.T @ (R @ (h0 - h_star)) if len(R) else 0.0)
    rand = _acc(final_logits(p, sequences, h_init=h0_rand), labels)
    return H0Report(barcode(p, h0, probes, h_star), proj, base, pert, rand)


def eod_pad_eval(p: RnnParams, sequences, labels, n_pads: int, pad_id: int | None = None) -> float:
    """Accuracy change from appending ``n_pads`` pad tokens to every sequence."""
    pad_id = p.pad_id if pad_id is None else pad_id
    if n_pads == 0:
        return 0.0
    if pad_id is None:
        raise ValueError("model has no pad token")
    base = _acc(final_logits(p, sequences), labels)
    padded = [list(s) + [pad_id] * n_pads for s in sequences]
    return _acc(final_logits(p, padded), labels) - base
