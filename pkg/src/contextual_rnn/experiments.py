"""Analysis recipes shared by the pipeline stages and the acceptance suite.

Each function takes a trained network plus already-computed pieces (reference
state, attractor, probe words) and returns plain numbers or arrays, so the
same code produces the CSV artifacts and the acceptance checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import context as ctx
from .bilinear import fit_bilinear, variance_curve
from .cells import RnnParams, cell_step, readout, token_input
from .fixed_points import (AttractorError, FixedPoint, FixedPointSearch, LineAttractor, assemble_line_attractor,
                           find_fixed_points, reference_point, sample_initial_states, slow_points)
from .linear_analysis import eig, rank_modes, remove_modes
from .linearize import input_jacobian, jacobians


@dataclass
class AttractorResult:
    search: FixedPointSearch
    strict: list[FixedPoint]          # speed < tol
    attractor: LineAttractor          # points used downstream
    tier: str                         # "strict" or "analysis"
    tier_tol: float


def locate_attractor(p: RnnParams, sequences, n_inits: int = 300, seed: int = 0, tol: float = 1e-6,
                     analysis_tol: float = 5e-3, **search_kw) -> AttractorResult:
    """Strict fixed-point search; falls back to the looser analysis tier when the
    strict tier has fewer than three points."""
    inits = sample_initial_states(p, sequences, n_inits, seed)
    search = find_fixed_points(p, inits, tol=tol, **search_kw)
    merge = search_kw.get("merge_radius", 1e-3)
    if len(search.points) >= 3:
        return AttractorResult(search, search.points, assemble_line_attractor(search.points), "strict", tol)
    pts = slow_points(p, search, analysis_tol, merge)
    if len(pts) < 3:
        raise AttractorError(f"only {len(pts)} slow points below {analysis_tol}; cannot assemble an attractor")
    return AttractorResult(search, search.points, assemble_line_attractor(pts), "analysis", analysis_tol)


def integration_eigencount(fp: FixedPoint, radius: float = 0.05) -> int:
    vals = eig(fp.lin.J_rec).values
    return int(np.sum(np.abs(vals - 1) < radius))


def fixed_point_check(points: list[FixedPoint], tol: float = 1e-6, min_points: int = 20,
                      span=(-1.5, 1.5), min_pc1: float = 0.9) -> dict:
    """Counts and shape statistics of a fixed-point set against the line-attractor target."""
    strict = [fp for fp in points if fp.speed < tol]
    out = {"n_points": len(strict), "readout_min": float("nan"), "readout_max": float("nan"),
           "pc1_fraction": float("nan"), "n_single_integration_mode": 0}
    if strict:
        ro = np.array([fp.readout for fp in strict])
        out["readout_min"], out["readout_max"] = float(ro.min()), float(ro.max())
        out["n_single_integration_mode"] = sum(integration_eigencount(fp) == 1 for fp in strict)
    if len(strict) >= 3:
        out["pc1_fraction"] = assemble_line_attractor(strict).pc1_fraction
    out["passed"] = bool(len(strict) >= min_points and out["readout_min"] <= span[0]
                         and out["readout_max"] >= span[1] and out["pc1_fraction"] > min_pc1
                         and out["n_single_integration_mode"] == len(strict))
    return out


# ------------------------------------------------------------ word effects

def word_effect(p: RnnParams, h, word: int) -> float:
    """Readout change caused by reading ``word`` rather than a pad at state ``h``."""
    x0 = np.zeros(p.input_size)
    return float(readout(p, cell_step(p, h, token_input(p, word))) - readout(p, cell_step(p, h, x0)))


def linear_word_effect(p: RnnParams, h, word: int) -> float:
    """``w . J_inp(h, 0) . x_word``: the linearised counterpart of :func:`word_effect`."""
    return float(p.w @ input_jacobian(p, h)[: p.hidden_size] @ token_input(p, word))


def modifier_effect(p: RnnParams, h_context, h_star, word: int) -> float:
    """How much a context changes the effect of ``word`` relative to the neutral state."""
    return word_effect(p, h_context, word) - word_effect(p, h_star, word)


def linear_ratios(p: RnnParams, h_star, modifiers, probes) -> list[dict]:
    """Linearised vs. full nonlinear effect of each probe word after each modifier."""
    rows = []
    for m in modifiers:
        h_mod = ctx.h_after(p, h_star, m)
        for v in probes:
            lin, full = linear_word_effect(p, h_mod, v), word_effect(p, h_mod, v)
            rows.append({"modifier": int(m), "probe": int(v), "linear": lin, "nonlinear": full,
                         "ratio": lin / full if full != 0 else float("nan")})
    return rows


def mode_removal(p: RnnParams, h_star, modifier: int, probes, n_units: int = 1) -> dict:
    """Remove the top-ranked eigenmode unit(s) of ``J_rec(h*)`` from the modifier
    deflection and measure what is left of its effect on the probes."""
    h_star = np.asarray(h_star, float)
    J_rec, _ = jacobians(p, h_star, np.zeros(p.input_size))
    es = eig(J_rec)
    h_mod = ctx.h_after(p, h_star, modifier)
    units = rank_modes(es, h_mod - h_star)[:n_units]
    idx = [a for u in units for a in u]
    h_rm = remove_modes(h_mod, h_star, es, idx)
    before = np.array([modifier_effect(p, h_mod, h_star, v) for v in probes])
    after = np.array([modifier_effect(p, h_rm, h_star, v) for v in probes])
    nb = float(np.linalg.norm(before))
    reduction = 1 - float(np.linalg.norm(after)) / nb if nb > 0 else float("nan")
    return {"modifier": int(modifier), "modes": idx,
            "eigenvalues": [complex(es.values[a]) for a in idx],
            "before": before, "after": after, "reduction": reduction}


def deflection_samples(p: RnnParams, h_star, modifiers, n_states: int) -> list[np.ndarray]:
    """States following each modifier at ``h*``: the word itself, then ``n_states - 1`` pads."""
    x0 = np.zeros(p.input_size)
    out = []
    for m in modifiers:
        h = ctx.h_after(p, h_star, m)
        for k in range(n_states):
            out.append(h)
            h = cell_step(p, h, x0)
    return out


def jacobian_samples(p: RnnParams, states) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(h, input_jacobian(p, h)) for h in states]


def bilinear_curve(p: RnnParams, h_star, states, P_max: int) -> list[float]:
    samples = jacobian_samples(p, states)
    P_max = min(P_max, np.linalg.matrix_rank(np.array(states) - h_star))
    return variance_curve(samples, input_jacobian(p, h_star), h_star, P_max)


def fit_toy_bilinear(p: RnnParams, h_star, states, P: int):
    return fit_bilinear(jacobian_samples(p, states), input_jacobian(p, h_star), h_star, P)


def attractor_direction(p: RnnParams, att: LineAttractor, kind: str = "pc1") -> np.ndarray:
    if kind == "pc1":
        return att.direction
    if kind == "readout":
        d = np.zeros(p.state_size)
        d[: p.hidden_size] = p.w
        return d / np.linalg.norm(d)
    raise ValueError(f"unknown attractor direction {kind!r}")


def barcode_pattern_ok(values, probe_valences, kind: str, rel: float = 0.1) -> bool:
    """Sign test of a barcode: ``negator`` flips signs, ``intensifier`` keeps them.

    Only probes whose magnitude exceeds ``rel`` of the barcode maximum count.
    """
    v = np.asarray(values, float)
    s = np.sign(np.asarray(probe_valences, float))
    big = np.abs(v) > rel * np.max(np.abs(v)) if v.size and np.max(np.abs(v)) > 0 else np.zeros(v.shape, bool)
    want = -s if kind == "negator" else s
    return bool(np.any(big) and np.all(np.sign(v[big]) == want[big]))


def reference_state(att: LineAttractor) -> np.ndarray:
    return reference_point(att, 0.0).h_star
