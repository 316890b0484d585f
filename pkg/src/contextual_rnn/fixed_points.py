"""Numerical fixed/slow point search and line-attractor assembly.

Slow points minimise ``q(h) = 0.5 * ||h - F(h, 0)||^2``.  Starts are optimised
jointly with Adam; near-misses can be polished with Levenberg-Marquardt.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cells import RnnParams, cell_forward, cell_backward, readout, run_batch
from .linearize import Linearization, linearize

log = logging.getLogger(__name__)

class AttractorError(RuntimeError):
    """Too few slow points to assemble a line attractor."""


SLOW_TOL = 1e-6        # strict tier, used for linearisation claims
LOOSE_TOL = 1e-4       # visualisation tier


@dataclass
class FixedPoint:
    h_star: np.ndarray
    q: float
    speed: float
    readout: float
    lin: Linearization | None = None

    @property
    def J_rec(self) -> np.ndarray:
        return self.lin.J_rec

    @property
    def J_inp(self) -> np.ndarray:
        return self.lin.J_inp


@dataclass
class FixedPointSearch:
    points: list[FixedPoint]
    n_inits: int
    n_dropped: int
    final_speeds: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    states: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))
    raw_states: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))  # before polishing
    raw_speeds: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


@dataclass
class LineAttractor:
    points: list[FixedPoint]
    tangents: np.ndarray
    readout_span: tuple[float, float]
    direction: np.ndarray          # top principal component of the point cloud
    pc1_fraction: float

    def __len__(self) -> int:
        return len(self.points)

    @property
    def states(self) -> np.ndarray:
        return np.array([fp.h_star for fp in self.points])

    @property
    def readouts(self) -> np.ndarray:
        return np.array([fp.readout for fp in self.points])


def speeds(p: RnnParams, H: np.ndarray) -> np.ndarray:
    Fh, _ = cell_forward(p, H, np.zeros((len(H), p.input_size)))
    return np.linalg.norm(H - Fh, axis=1)


def sample_initial_states(p: RnnParams, sequences, n: int, seed: int = 0) -> np.ndarray:
    """``n`` states drawn uniformly from the hidden trajectories of ``sequences``."""
    if n == 0:
        return np.zeros((0, p.state_size))
    sequences = [list(s) for s in sequences]
    if not sequences:
        raise ValueError("cannot sample states from an empty corpus")
    pool = []
    by_len: dict[int, list[list[int]]] = {}
    for s in sequences:
        by_len.setdefault(len(s), []).append(s)
    for L in sorted(by_len):
        if L == 0:
            continue
        states, _ = run_batch(p, np.array(by_len[L]))
        pool.append(states.reshape(-1, p.state_size))
    pool = np.concatenate(pool)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=n, replace=n > len(pool))
    return pool[np.sort(idx)] if n <= len(pool) else pool[idx]


def _adam_minimize(p: RnnParams, H: np.ndarray, lr: float, max_iters: int, tol: float):
    H = H.copy()
    m = np.zeros_like(H)
    v = np.zeros_like(H)
    X0 = np.zeros((len(H), p.input_size))
    b1, b2, eps = 0.9, 0.999, 1e-8
    active = np.ones(len(H), bool)
    for it in range(1, max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        h = H[idx]
        Fh, cache = cell_forward(p, h, X0[idx])
        r = h - Fh
        spd = np.linalg.norm(r, axis=1)
        done = spd < tol * 0.1
        active[idx[done]] = False
        JTr, _ = cell_backward(p, cache, r)
        g = r - JTr
        m[idx] = b1 * m[idx] + (1 - b1) * g
        v[idx] = b2 * v[idx] + (1 - b2) * g * g
        step = lr * (m[idx] / (1 - b1 ** it)) / (np.sqrt(v[idx] / (1 - b2 ** it)) + eps)
        step[done] = 0.0
        H[idx] = h - step
    return H


def _lm_polish(p: RnnParams, h: np.ndarray, max_nfev: int) -> tuple[np.ndarray, bool]:
    """Levenberg-Marquardt on ``h - F(h, 0) = 0`` with the analytic Jacobian.

    Returns the final state and whether a convergence test was met (as
    opposed to running out of function evaluations).
    """
    from scipy.optimize import least_squares
    from .linearize import jacobians
    x0 = np.zeros(p.input_size)
    I = np.eye(p.state_size)

    def resid(z):
        Fz, _ = cell_forward(p, z[None], x0[None])
        return z - Fz[0]

    res = least_squares(resid, h, jac=lambda z: I - jacobians(p, z, x0)[0], method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return res.x, bool(res.status > 0)


def find_fixed_points(p: RnnParams, inits: np.ndarray, tol: float = SLOW_TOL,
                      max_iters: int = 5000, lr: float = 1e-2, merge_radius: float = 1e-3,
                      polish_iters: int = 200, polish_from: float = 1e-2) -> FixedPointSearch:
    """Minimise ``q`` from every start; keep speed < ``tol``; deduplicate; sort by readout.

    Adam results with ``tol <= speed < polish_from`` are handed to a
    Levenberg-Marquardt polish (``polish_iters`` function evaluations).  The
    polished state replaces the Adam state only if LM converged and the
    result meets ``tol``.  A run cut off by the evaluation budget is still
    sliding along the slow manifold, and where it stops is arbitrary (a
    one-ulp change in the start can move it a long way), so it is discarded.
    """
    inits = np.atleast_2d(np.asarray(inits, float))
    if inits.shape[0] == 0:
        raise ValueError("need at least one initial state")
    H = _adam_minimize(p, inits, lr, max_iters, tol)
    spd = speeds(p, H)
    raw, raw_spd = H.copy(), spd.copy()
    if polish_iters:
        for i in np.flatnonzero((spd >= tol) & (spd < polish_from)):
            h, converged = _lm_polish(p, H[i], polish_iters)
            if converged and speeds(p, h[None])[0] < tol:
                H[i] = h
        spd = speeds(p, H)
    points = _collect(p, H, spd, tol, merge_radius)
    n_drop = int(np.sum(spd >= tol))
    log.info("fixed points: %d inits, %d converged, %d unique", len(inits), len(inits) - n_drop, len(points))
    return FixedPointSearch(points, len(inits), n_drop, spd, H, raw, raw_spd)


def _collect(p: RnnParams, H: np.ndarray, spd: np.ndarray, tol: float, merge_radius: float) -> list[FixedPoint]:
    ok = np.flatnonzero(spd < tol)
    kept: list[int] = []
    for i in ok[np.argsort(spd[ok], kind="stable")]:
        if all(np.linalg.norm(H[i] - H[j]) > merge_radius for j in kept):
            kept.append(i)
    points = [FixedPoint(H[i].copy(), 0.5 * float(spd[i]) ** 2, float(spd[i]),
                         float(readout(p, H[i])), linearize(p, H[i])) for i in kept]
    points.sort(key=lambda fp: fp.readout)
    return points


def slow_points(p: RnnParams, search: FixedPointSearch, tol: float,
                merge_radius: float = 1e-3) -> list[FixedPoint]:
    """Re-threshold the unpolished Adam end states of a finished search at a looser ``tol``.

    Polishing can slide a slow-manifold state all the way to a distant exact
    fixed point, so the looser tier is built from the states before polishing.
    """
    return _collect(p, search.raw_states, search.raw_speeds, tol, merge_radius)


def assemble_line_attractor(points: list[FixedPoint]) -> LineAttractor:
    if len(points) < 3:
        raise ValueError("a line attractor needs at least 3 points")
    pts = sorted(points, key=lambda fp: fp.readout)
    uniq = [pts[0]]
    for fp in pts[1:]:
        if fp.readout > uniq[-1].readout:
            uniq.append(fp)
    pts = uniq
    H = np.array([fp.h_star for fp in pts])
    tangents = np.empty_like(H)
    for i in range(len(H)):
        lo, hi = max(i - 1, 0), min(i + 1, len(H) - 1)
        d = H[hi] - H[lo]
        tangents[i] = d / np.linalg.norm(d)
    Hc = H - H.mean(0)
    _, s, Vt = np.linalg.svd(Hc, full_matrices=False)
    frac = float(s[0] ** 2 / np.sum(s ** 2)) if np.sum(s ** 2) > 0 else 1.0
    direction = Vt[0]
    if direction @ (H[-1] - H[0]) < 0:
        direction = -direction
    return LineAttractor(pts, tangents, (pts[0].readout, pts[-1].readout), direction, frac)


def nearest_fixed_point(att: LineAttractor | list[FixedPoint], h) -> FixedPoint:
    pts = att.points if isinstance(att, LineAttractor) else att
    if not pts:
        raise ValueError("empty attractor")
    d = np.linalg.norm(np.array([fp.h_star for fp in pts]) - np.asarray(h), axis=1)
    return pts[int(np.argmin(d))]


def nearest_states(states: np.ndarray, H: np.ndarray) -> np.ndarray:
    """For each row of ``H`` the closest row of ``states``."""
    d2 = (np.sum(H ** 2, 1)[:, None] - 2 * H @ states.T + np.sum(states ** 2, 1)[None, :])
    return states[np.argmin(d2, axis=1)]


def distance_to_attractor(att: LineAttractor, h) -> float:
    """Euclidean distance from ``h`` to the nearest attractor point."""
    return float(np.min(np.linalg.norm(att.states - np.asarray(h, float), axis=1)))


def reference_point(att: LineAttractor, value: float = 0.0) -> FixedPoint:
    """The attractor point whose readout is closest to ``value`` (neutral context by default)."""
    return att.points[int(np.argmin(np.abs(att.readouts - value)))]
