"""Closed-form recurrent and input Jacobians and local linear models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import RnnParams, cell_step, sigmoid, _as_batch


def jacobians(p: RnnParams, h, x) -> tuple[np.ndarray, np.ndarray]:
    """``(dF/dh, dF/dx)`` at a single point ``(h, x)``."""
    h2, x2, _ = _as_batch(p, h, x)
    h, x = h2[0], x2[0]
    A = p.arrays
    N = p.hidden_size

    def lin(g, hin):
        sfx = f"_{g}" if g else ""
        return A["W" + sfx] @ hin + A["U" + sfx] @ x + A["b" + sfx]

    if p.kind == "vanilla":
        d = 1 - np.tanh(lin("", h)) ** 2
        return d[:, None] * A["W"], d[:, None] * A["U"]

    if p.kind == "gru":
        z = sigmoid(lin("z", h))
        r = sigmoid(lin("r", h))
        c = np.tanh(A["W_c"] @ (r * h) + A["U_c"] @ x + A["b_c"])
        dz = ((h - c) * z * (1 - z))[:, None]
        dc = ((1 - z) * (1 - c ** 2))[:, None]
        Wc_h_dr = A["W_c"] * (h * r * (1 - r))[None, :]
        J_rec = (np.diag(z) + dz * A["W_z"]
                 + dc * (A["W_c"] * r[None, :] + Wc_h_dr @ A["W_r"]))
        J_inp = dz * A["U_z"] + dc * (A["U_c"] + Wc_h_dr @ A["U_r"])
        return J_rec, J_inp

    if p.kind == "ugrnn":
        g = sigmoid(lin("g", h))
        c = np.tanh(lin("c", h))
        dg = ((h - c) * g * (1 - g))[:, None]
        dc = ((1 - g) * (1 - c ** 2))[:, None]
        return (np.diag(g) + dg * A["W_g"] + dc * A["W_c"],
                dg * A["U_g"] + dc * A["U_c"])

    hh, cc = h[:N], h[N:]
    i = sigmoid(lin("i", hh))
    f = sigmoid(lin("f", hh))
    o = sigmoid(lin("o", hh))
    g = np.tanh(lin("g", hh))
    cn = f * cc + i * g
    tc = np.tanh(cn)
    ci = (g * i * (1 - i))[:, None]
    cf = (cc * f * (1 - f))[:, None]
    cg = (i * (1 - g ** 2))[:, None]
    co = (tc * o * (1 - o))[:, None]
    dtc = (o * (1 - tc ** 2))[:, None]

    def block(M):
        dc_ = ci * M["i"] + cf * M["f"] + cg * M["g"]
        return co * M["o"] + dtc * dc_, dc_

    Wm = {k: A[f"W_{k}"] for k in "ifog"}
    Um = {k: A[f"U_{k}"] for k in "ifog"}
    dh_dh, dc_dh = block(Wm)
    dh_dx, dc_dx = block(Um)
    J_rec = np.zeros((2 * N, 2 * N))
    J_rec[:N, :N] = dh_dh
    J_rec[:N, N:] = np.diag(o * (1 - tc ** 2) * f)
    J_rec[N:, :N] = dc_dh
    J_rec[N:, N:] = np.diag(f)
    return J_rec, np.vstack([dh_dx, dc_dx])


def recurrent_jacobian(p: RnnParams, h, x) -> np.ndarray:
    return jacobians(p, h, x)[0]


def input_jacobian(p: RnnParams, h, x=None) -> np.ndarray:
    if x is None:
        x = np.zeros(p.input_size)
    return jacobians(p, h, x)[1]


def fd_jacobians(p: RnnParams, h, x, step: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Central finite-difference Jacobians (test oracle)."""
    h = np.asarray(h, float)
    x = np.asarray(x, float)
    S, D = h.size, x.size
    Hp = h + step * np.eye(S)
    Hm = h - step * np.eye(S)
    J_rec = (cell_step(p, Hp, np.tile(x, (S, 1))) - cell_step(p, Hm, np.tile(x, (S, 1)))).T / (2 * step)
    Xp = x + step * np.eye(D)
    Xm = x - step * np.eye(D)
    J_inp = (cell_step(p, np.tile(h, (D, 1)), Xp) - cell_step(p, np.tile(h, (D, 1)), Xm)).T / (2 * step)
    return J_rec, J_inp


@dataclass
class Linearization:
    h_e: np.ndarray
    x_e: np.ndarray
    F_e: np.ndarray
    J_rec: np.ndarray
    J_inp: np.ndarray

    def step(self, h_prev, x) -> np.ndarray:
        """First-order model ``F(h_e, x_e) + J_rec (h - h_e) + J_inp (x - x_e)``."""
        return (self.F_e + self.J_rec @ (np.asarray(h_prev) - self.h_e)
                + self.J_inp @ (np.asarray(x) - self.x_e))


def linearize(p: RnnParams, h_e, x_e=None) -> Linearization:
    h_e = np.asarray(h_e, float)
    x_e = np.zeros(p.input_size) if x_e is None else np.asarray(x_e, float)
    J_rec, J_inp = jacobians(p, h_e, x_e)
    return Linearization(h_e.copy(), x_e.copy(), cell_step(p, h_e, x_e), J_rec, J_inp)


def linear_step(lin: Linearization, h_prev, x) -> np.ndarray:
    """Linear dynamics about a fixed point: ``h* + J_rec (h - h*) + J_inp x``.

    Uses ``h_e`` as ``h*``, i.e. treats the expansion point as exactly fixed.
    """
    return lin.h_e + lin.J_rec @ (np.asarray(h_prev) - lin.h_e) + lin.J_inp @ np.asarray(x)


def modified_valence(p: RnnParams, h_mod, x) -> float:
    """Linearised readout of word ``x`` in context ``h_mod``: ``w . J_inp(h_mod, 0) x + b``."""
    J = input_jacobian(p, h_mod)
    return float(p.w @ J[: p.hidden_size] @ np.asarray(x, float) + p.b)
