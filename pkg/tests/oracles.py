"""Independent reference computations used to cross-check the library.

Nothing here imports the library's contraction or vectorization code: the
trajectory oracle propagates explicit system-environment density matrices
with its own column-major superoperators, and the shallow-pocket oracle
builds a finite environment by linear programming.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


# -- trajectory oracle ---------------------------------------------------------------

def colvec_generator(h, jumps):
    """Column-stacking Lindblad generator: vec(AXB) = (B^T ⊗ A) vec(X)."""
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for j in jumps:
        jdj = j.conj().T @ j
        gen += np.kron(j.conj(), j) - 0.5 * np.kron(eye, jdj) - 0.5 * np.kron(jdj.T, eye)
    return gen


def colvec_apply(superop, rho):
    d = rho.shape[0]
    return (superop @ rho.reshape(-1, order="F")).reshape(d, d, order="F")


def case_study_channel(xi, kappa, dt):
    h = xi * np.kron(SX, SX)
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    jumps = [np.sqrt(kappa) * np.kron(np.eye(2), lower)] if kappa > 0 else []
    return scipy.linalg.expm(colvec_generator(h, jumps) * dt)


def act_on_system(kraus, rho_se, d_s, d_e):
    out = np.zeros_like(rho_se)
    for k in kraus:
        big = np.kron(k, np.eye(d_e))
        out += big @ rho_se @ big.conj().T
    return out


def trajectory_probability(channels, env_state, prep, maps, effect, d_s=2):
    """Probability of one outcome sequence, simulated forward in time.

    ``prep`` is fed in at the first step (the initial system is discarded),
    ``maps`` holds one Kraus list per intermediate step and ``effect`` is the
    final POVM element. ``channels`` are column-major superoperators on (S, E).
    """
    d_e = env_state.shape[0]
    rho = np.kron(prep, env_state)
    for step, kraus in enumerate(maps):
        rho = colvec_apply(channels[step], rho)
        rho = act_on_system(kraus, rho, d_s, d_e)
    rho = colvec_apply(channels[len(maps)], rho)
    rho_s = np.trace(rho.reshape(d_s, d_e, d_s, d_e), axis1=1, axis2=3)
    return float(np.trace(effect @ rho_s).real)


def kraus_choi(kraus):
    """(input, output)-ordered Choi matrix built from Kraus operators."""
    d_out, d_in = kraus[0].shape
    out = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in kraus:
        v = np.zeros(d_in * d_out, dtype=complex)
        for i in range(d_in):
            v[i * d_out:(i + 1) * d_out] = k[:, i]
        out += np.outer(v, v.conj())
    return out


def random_kraus(rng, d=2, n=2):
    """A random CP trace-non-increasing map with ``n`` Kraus operators."""
    g = rng.normal(size=(n * d, d)) + 1j * rng.normal(size=(n * d, d))
    q, _ = np.linalg.qr(g)
    scale = rng.uniform(0.3, 1.0)
    return [np.sqrt(scale) * q[k * d:(k + 1) * d] for k in range(n)]


def random_state(rng, d=2):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


# -- shallow pocket finite environment ------------------------------------------------

def lorentzian_atoms(g, gamma, times, x_max=60.0, n_grid=6000):
    """Symmetric atoms ±x_k and weights matching E[cos(g x T)] = exp(-g gamma T).

    Solves a feasibility LP on a grid of positive positions, then re-solves
    the equality system on the active atoms for machine precision.
    """
    times = sorted({round(abs(float(t)), 14) for t in times if abs(t) > 0})
    xs = np.linspace(x_max / n_grid, x_max, n_grid)
    a = np.vstack([np.ones_like(xs)] + [np.cos(g * xs * t) for t in times])
    b = np.array([1.0] + [np.exp(-g * gamma * t) for t in times])
    res = linprog(np.zeros_like(xs), A_eq=a, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"no finite environment found: {res.message}")
    active = np.nonzero(res.x > 1e-12)[0]
    w, *_ = np.linalg.lstsq(a[:, active], b, rcond=None)
    if np.any(w < 0):
        raise RuntimeError("refined weights left the feasible region")
    return xs[active], w


def shallow_pocket_dilation(g, gamma, t1, tau):
    """Environment register, initial state and the two interval unitaries on (S, E)."""
    x, w = lorentzian_atoms(g, gamma, [t1, tau, t1 + tau, t1 - tau])
    positions = np.concatenate([x, -x])
    amps = np.sqrt(np.concatenate([w, w]) / 2)
    env = np.outer(amps, amps).astype(complex)
    xop = np.diag(positions)

    def unitary(t):
        return scipy.linalg.expm(-1j * (g / 2) * t * np.kron(SZ, xop))

    return env, unitary(t1), unitary(tau)
