"""Bilinear model of the context-dependent input Jacobian.

``J_inp(h_mod) ~= J_base + sum_p ((h_mod - h*) . m_p) A_p``

Fitting is a reduced-rank regression of the vectorised Jacobian changes on
the deflections ``h_mod - h*``: least-squares coefficients, then truncation
of the fitted values to rank ``P`` by SVD.  The ``m_p`` are returned
orthonormal.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class BilinearModel:
    J_base: np.ndarray        # (S, D)
    components: np.ndarray    # (P, S) the m_p
    A: np.ndarray             # (P, S, D)
    h_star: np.ndarray

    @property
    def P(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {"format_version": 1, "kind": "bilinear", "P": self.P,
                "J_base": self.J_base.tolist(), "components": self.components.tolist(),
                "A": self.A.tolist(), "h_star": self.h_star.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BilinearModel":
        S, D = np.shape(d["J_base"])
        P = int(d["P"])
        return cls(np.array(d["J_base"], float), np.array(d["components"], float).reshape(P, S),
                   np.array(d["A"], float).reshape(P, S, D), np.array(d["h_star"], float))


def _design(samples, J_base, h_star):
    X = np.array([np.asarray(h, float) - h_star for h, _ in samples])
    Y = np.array([(np.asarray(J, float) - J_base).ravel() for _, J in samples])
    return X, Y


def variance_explained(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    tot = float(np.sum(Y ** 2))
    if tot == 0:
        return 1.0 if float(np.sum(Y_hat ** 2)) == 0 else 0.0
    return 1.0 - float(np.sum((Y - Y_hat) ** 2)) / tot


def fit_bilinear(samples: Sequence[tuple[np.ndarray, np.ndarray]], J_base, h_star,
                 P: int) -> tuple[BilinearModel, float]:
    """Fit from ``(h_mod, J_inp(h_mod, 0))`` pairs; returns the model and variance explained."""
    J_base = np.asarray(J_base, float)
    h_star = np.asarray(h_star, float)
    S, D = J_base.shape
    if P < 0:
        raise ValueError("P must be >= 0")
    if P > len(samples):
        raise ValueError(f"P={P} exceeds the number of samples ({len(samples)})")
    X, Y = _design(samples, J_base, h_star)
    if P == 0:
        model = BilinearModel(J_base, np.zeros((0, S)), np.zeros((0, S, D)), h_star)
        return model, variance_explained(Y, np.zeros_like(Y))
    rank = np.linalg.matrix_rank(X)
    if P > rank:
        raise ValueError(f"P={P} exceeds the rank of the deflections ({rank})")
    B = np.linalg.pinv(X) @ Y                # (S, S*D)
    _, _, Vt = np.linalg.svd(X @ B, full_matrices=False)
    Vp = Vt[:P].T                            # (S*D, P)
    Mraw = B @ Vp                            # (S, P)
    Q, R = np.linalg.qr(Mraw)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1
    Q, R = Q * signs, R * signs[:, None]
    A = (R @ Vp.T).reshape(P, S, D)
    model = BilinearModel(J_base, Q.T, A, h_star)
    Y_hat = X @ Q @ (R @ Vp.T)
    return model, variance_explained(Y, Y_hat)


def variance_curve(samples, J_base, h_star, P_max: int) -> list[float]:
    return [fit_bilinear(samples, J_base, h_star, P)[1] for P in range(P_max + 1)]


def predict_jacobian(model: BilinearModel, h_mod, h_star=None) -> np.ndarray:
    h_star = model.h_star if h_star is None else np.asarray(h_star, float)
    coef = model.components @ (np.asarray(h_mod, float) - h_star)
    return model.J_base + np.tensordot(coef, model.A, axes=1)


def modifier_word_weights(model: BilinearModel, w) -> np.ndarray:
    """``w . A_p`` for every component: the per-word modifier weights (``(P, D)``)."""
    w = np.asarray(w, float)
    return np.einsum("s,psd->pd", w, model.A[:, : len(w)])


def bilinear_readout(model: BilinearModel, w, b: float, h_mod, x, h_star=None) -> float:
    """``w . J_base . x + sum_p ((h_mod - h*) . m_p) (w . A_p . x) + b``."""
    w = np.asarray(w, float)
    J = predict_jacobian(model, h_mod, h_star)
    return float(w @ J[: len(w)] @ np.asarray(x, float) + b)


def save_model(model: BilinearModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n")


def load_model(path: str | Path) -> BilinearModel:
    return BilinearModel.from_dict(json.loads(Path(path).read_text()))
