"""Eigen-analysis of recurrent Jacobians: timescales, subspace angles, mode removal
and end-of-document transient modes."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .cells import RnnParams, cell_step, readout, token_input, hidden_part
from .linearize import jacobians

log = logging.getLogger(__name__)

COND_WARN = 1e8


@dataclass
class EigenSystem:
    """``J = R diag(values) L`` with ``L = R^{-1}`` (rows are left eigenvectors)."""
    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    cond: float

    def __len__(self) -> int:
        return len(self.values)

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.values) @ self.left

    def partner(self, a: int) -> int | None:
        """Index of the complex-conjugate partner of mode ``a`` (None for real modes)."""
        if self.values[a].imag == 0:
            return None
        for b in (a - 1, a + 1):
            if 0 <= b < len(self.values) and self.values[b] == np.conj(self.values[a]):
                return b
        raise RuntimeError(f"mode {a} has no adjacent conjugate partner")

    def units(self) -> list[tuple[int, ...]]:
        """Modes grouped so conjugate pairs form one unit, in eigenvalue order."""
        out, seen = [], set()
        for a in range(len(self.values)):
            if a in seen:
                continue
            b = self.partner(a)
            grp = (a,) if b is None else tuple(sorted((a, b)))
            seen.update(grp)
            out.append(grp)
        return out

    def coefficients(self, v) -> np.ndarray:
        """Mode coefficients ``l_a . v``."""
        return self.left @ np.asarray(v)


class EigenError(RuntimeError):
    pass


def _normalize_phase(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v * (np.abs(v[k]) / v[k])


def eig(J) -> EigenSystem:
    """Full eigendecomposition sorted by descending ``|lambda|``.

    Ties in modulus are broken by real part then imaginary part (both
    descending), which keeps conjugate pairs adjacent with the positive
    imaginary member first.  Right eigenvectors have unit norm with their
    largest entry real and positive; left eigenvectors come from ``R^{-1}``.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("eig expects a square matrix")
    if not np.all(np.isfinite(J)):
        raise ValueError("matrix has non-finite entries")
    try:
        vals, vecs = np.linalg.eig(J)
    except np.linalg.LinAlgError as e:
        raise EigenError(f"eigendecomposition failed (cond(J)={np.linalg.cond(J):.3g}): {e}") from e
    vals = vals.astype(complex)
    vecs = vecs.astype(complex)
    # exact conjugate symmetry for pairs
    order = np.lexsort((-vals.imag, -vals.real, -np.abs(vals)))
    vals, vecs = vals[order], vecs[:, order]
    R = np.empty_like(vecs)
    a = 0
    n = len(vals)
    while a < n:
        if vals[a].imag > 0 and a + 1 < n and np.isclose(vals[a + 1], np.conj(vals[a]), rtol=0, atol=1e-12 * max(1, abs(vals[a]))):
            R[:, a] = _normalize_phase(vecs[:, a])
            R[:, a + 1] = np.conj(R[:, a])
            vals[a + 1] = np.conj(vals[a])
            a += 2
        else:
            if vals[a].imag == 0 or abs(vals[a].imag) < 1e-300:
                vals[a] = vals[a].real
                R[:, a] = _normalize_phase(vecs[:, a].real.astype(complex)
                                           if np.allclose(vecs[:, a].imag, 0) else vecs[:, a])
            else:
                R[:, a] = _normalize_phase(vecs[:, a])
            a += 1
    cond = float(np.linalg.cond(R))
    if cond > COND_WARN:
        warnings.warn(f"eigenvector matrix is ill-conditioned (cond={cond:.3g})", RuntimeWarning)
    L = np.linalg.inv(R)
    return EigenSystem(vals, R, L, cond)


def eigen_timescale(lam) -> float:
    """Decay time in tokens, ``-1 / ln|lambda|``."""
    m = abs(lam)
    if m >= 1:
        raise ValueError(f"|lambda| = {m:.6g} >= 1: mode does not decay")
    if m == 0:
        return 0.0
    return float(-1.0 / np.log(m))


def timescales(values) -> np.ndarray:
    """Vectorised :func:`eigen_timescale`; non-decaying modes map to ``inf``."""
    m = np.abs(np.asarray(values))
    out = np.full(m.shape, np.inf)
    ok = m < 1
    with np.errstate(divide="ignore"):
        out[ok] = -1.0 / np.log(m[ok])
    return out


def subspace_angle(v, u) -> float:
    """Angle in degrees between the lines spanned by ``v`` and ``u``."""
    v = np.asarray(v)
    u = np.asarray(u)
    nv, nu = np.linalg.norm(v), np.linalg.norm(u)
    if nv == 0 or nu == 0:
        raise ValueError("subspace_angle needs nonzero vectors")
    c = abs(np.vdot(v, u)) / (nv * nu)
    return float(np.degrees(np.arccos(np.clip(c, 0.0, 1.0))))


def mode_angles(es: EigenSystem, deflection) -> np.ndarray:
    """Angle between ``deflection`` and every left eigenvector."""
    return np.array([subspace_angle(es.left[a], deflection) for a in range(len(es))])


def _check_units(es: EigenSystem, idx) -> list[int]:
    idx = sorted(set(int(i) for i in idx))
    for a in idx:
        if not 0 <= a < len(es):
            raise IndexError(f"mode index {a} out of range")
        b = es.partner(a)
        if b is not None and b not in idx:
            raise ValueError(f"mode {a} is half of a complex pair; remove {b} as well")
    return idx


def remove_modes(h, h_star, es: EigenSystem, mode_indices) -> np.ndarray:
    """Subtract the components of ``h - h_star`` along the chosen eigenmodes."""
    idx = _check_units(es, mode_indices)
    h = np.asarray(h, float)
    if not idx:
        return h.copy()
    d = h - np.asarray(h_star, float)
    coef = es.left[idx] @ d
    return h - np.real(es.right[:, idx] @ coef)


def rank_modes(es: EigenSystem, deflection) -> list[tuple[int, ...]]:
    """Mode units ordered by ``|l_a . deflection|`` (descending, stable)."""
    c = np.abs(es.coefficients(deflection))
    units = es.units()
    score = [max(c[a] for a in u) for u in units]
    order = sorted(range(len(units)), key=lambda k: -score[k])
    return [units[k] for k in order]


# ------------------------------------------------------------ EOD transients

@dataclass
class TransientReport:
    eigen: EigenSystem
    units: list[tuple[int, ...]]
    unit_timescale: np.ndarray        # per unit, tokens (inf for |lambda| >= 1)
    unit_readout_projection: np.ndarray  # |w . r_a| per unit
    instantaneous_change: np.ndarray  # (n_probes, n_units) change in prediction if the unit is removed
    selected: list[int]               # unit indices picked as transient modes
    steps: np.ndarray
    step_response: np.ndarray         # (n_probes, K+1) linearised readout change
    step_response_removed: np.ndarray  # same with the selected units removed
    nonlinear_response: np.ndarray | None = None

    def suppression_ratio(self, removed: bool = False) -> np.ndarray:
        """Steady-state over initial readout change per probe."""
        r = self.step_response_removed if removed else self.step_response
        return r[:, -1] / r[:, 0]


def transient_modes(J_rec, deflections, w, n_steps: int = 100, n_select: int = 2,
                    integration_tol: float = 0.05, min_timescale: float = 2.0) -> TransientReport:
    """Per-mode analysis of the linear response to one-step input deflections.

    ``deflections`` are ``F(h*, x) - h*`` per probe (rows), ``w`` is the readout
    over the full state (zeros outside the hidden part).  Integration modes
    (``|lambda - 1| < integration_tol``) and modes faster than
    ``min_timescale`` are excluded; the remaining units with the largest mean
    absolute instantaneous readout change are selected.
    """
    es = eig(J_rec)
    D = np.atleast_2d(np.asarray(deflections, float))
    w = np.asarray(w, float)
    units = es.units()
    C = D @ es.left.T                        # (n_probes, S) coefficients
    wr = w @ es.right                        # readout of each right eigenvector
    contrib = np.real(C * wr)                # per-mode readout contribution at k=0
    inst = np.stack([-contrib[:, list(u)].sum(1) for u in units], axis=1)
    taus = np.array([timescales(es.values[u[0]])[()] for u in units])
    proj = np.array([np.abs(wr[list(u)]).max() for u in units])
    lam = np.array([es.values[u[0]] for u in units])
    eligible = (np.abs(lam - 1) >= integration_tol) & (taus >= min_timescale)
    score = np.where(eligible, np.abs(inst).mean(0), -np.inf)
    order = [int(k) for k in np.argsort(-score, kind="stable") if np.isfinite(score[k])]
    selected = order[:n_select]
    steps = np.arange(n_steps + 1)
    powers = es.values[None, :] ** steps[:, None]            # (K+1, S)
    full = np.real((C * wr)[:, None, :] * powers[None]).sum(-1)
    sel_idx = [a for k in selected for a in units[k]]
    removed_part = np.real((C[:, sel_idx] * wr[sel_idx])[:, None, :] * powers[None][:, :, sel_idx]).sum(-1)
    return TransientReport(es, units, taus, proj, inst, selected, steps, full, full - removed_part)


def eod_transient_analysis(p: RnnParams, h_star, probe_words, n_steps: int = 100,
                           **kw) -> TransientReport:
    """Transient-mode report at fixed point ``h_star`` for the given probe tokens."""
    h_star = np.asarray(h_star, float)
    J_rec, _ = jacobians(p, h_star, np.zeros(p.input_size))
    D = np.array([cell_step(p, h_star, token_input(p, t)) - h_star for t in probe_words])
    w_full = np.zeros(p.state_size)
    w_full[: p.hidden_size] = p.w
    rep = transient_modes(J_rec, D, w_full, n_steps=n_steps, **kw)
    base = readout(p, h_star)
    resp = []
    for t in probe_words:
        h = cell_step(p, h_star, token_input(p, t))
        seq = [readout(p, h) - base]
        for _ in range(n_steps):
            h = cell_step(p, h, np.zeros(p.input_size))
            seq.append(readout(p, h) - base)
        resp.append(seq)
    rep.nonlinear_response = np.array(resp)
    return rep
