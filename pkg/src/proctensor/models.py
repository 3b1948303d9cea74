"""Two worked models: the shallow pocket and a dissipative XX-coupled qubit pair.

The shallow pocket is given entirely by closed forms: a qubit dephased by a
continuous environment with a Lorentzian wavefunction, so every coherence
decays as exp(-g*gamma*|net time|).

The case study is a system qubit coupled to a cooled environment qubit,
    d rho/dt = -i xi [X⊗X, rho] + kappa D[|0><1|_E](rho),
whose reduced system dynamics is pure dephasing in the X basis with
coherence factor c_t.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .instruments import PAULI, Instrument, InstrumentBlock, tetrahedral_povm
from .linalg import IN, OUT, Leg, LegLayout, expm, lindbladian
from .memory import MultiTimeObservable
from .process_tensor import DilatedDynamics, ProcessTensor, build_process_tensor, non_markovianity
from .quantum_info import DensityOperator, psi_plus

SA_LAYOUT = LegLayout((Leg(2, IN, 2), Leg(0, OUT, 2)))  # final system, then ancilla


# -- shallow pocket -------------------------------------------------------------------

@dataclass(frozen=True)
class ShallowPocketParams:
    g: float = 0.8
    gamma: float = 0.3
    t1: float = 5.0
    tau: float = 0.0

    def __post_init__(self):
        if self.g <= 0 or self.gamma <= 0:
            raise ValueError("g and gamma must be positive")
        if self.t1 < 0 or self.tau < 0:
            raise ValueError("t1 and tau must be non-negative")

    def decay(self, t: float) -> float:
        return float(np.exp(-self.g * self.gamma * abs(t)))


OFFSET_P = 0.95
INTERVENTIONS = ("free", "sigmax", "offset", "measure_plus", "trash")


def sp_intervention_choi(intervention: str, p: float = OFFSET_P, sigma=None) -> np.ndarray:
    """Choi element (input, output) of each intervention applied at t1."""
    if intervention == "free":
        return psi_plus(2)
    if intervention == "sigmax":
        return _unitary_choi(PAULI["x"])
    if intervention == "offset":
        _check_p(p)
        return _unitary_choi(np.sqrt(p) * PAULI["x"] + np.sqrt(1 - p) * PAULI["z"])
    if intervention == "measure_plus":
        plus = np.full((2, 2), 0.5, dtype=complex)
        return np.kron(plus.T, plus)
    if intervention == "trash":
        sigma = np.eye(2) / 2 if sigma is None else np.asarray(sigma, dtype=complex)
        return np.kron(np.eye(2), sigma)
    raise ValueError(f"unknown intervention {intervention!r}; expected one of {INTERVENTIONS}")


def _unitary_choi(u):
    v = np.asarray(u, dtype=complex).T.reshape(-1)
    return np.outer(v, v.conj())


def _check_p(p):
    if not 0 <= p <= 1:
        raise ValueError(f"offset weight p must lie in [0, 1], got {p}")


def sp_state(params: ShallowPocketParams, intervention: str = "free", *, p: float = OFFSET_P,
             sigma=None) -> DensityOperator:
    """System-ancilla state at t1 + tau after a Bell input and one intervention at t1.

    ``measure_plus`` returns the normalized post-selected state for outcome +.
    """
    e = params.decay
    t1, tau = params.t1, params.tau
    if intervention == "free":
        a = e(t1 + tau)
        m = 0.5 * np.array([[1, 0, 0, a], [0, 0, 0, 0], [0, 0, 0, 0], [a, 0, 0, 1]])
    elif intervention == "sigmax":
        b = e(t1 - tau)
        m = 0.5 * np.array([[0, 0, 0, 0], [0, 1, b, 0], [0, b, 1, 0], [0, 0, 0, 0]])
    elif intervention == "offset":
        _check_p(p)
        q = np.sqrt(p * (1 - p))
        a1, a2, ad, asum = e(t1), e(tau), e(t1 - tau), e(t1 + tau)
        m = 0.5 * np.array([
            # the sigma_z part flips the sign of the |00><11| coherence
            [1 - p, q * a1, q * a2, -(1 - p) * asum],
            [q * a1, p, p * ad, -q * a2],
            [q * a2, p * ad, p, -q * a1],
            [-(1 - p) * asum, -q * a2, -q * a1, 1 - p],
        ])
    elif intervention == "measure_plus":
        a1, a2, ad, asum = e(t1), e(tau), e(t1 - tau), e(t1 + tau)
        m = 0.25 * np.array([
            [1, a1, a2, asum],
            [a1, 1, ad, a2],
            [a2, ad, 1, a1],
            [asum, a2, a1, 1],
        ])
    elif intervention == "trash":
        sigma = np.eye(2) / 2 if sigma is None else np.asarray(sigma, dtype=complex)
        s = sigma.astype(complex).copy()
        s[0, 1] *= e(tau)
        s[1, 0] *= e(tau)
        m = np.kron(s, np.eye(2) / 2)
    else:
        raise ValueError(f"unknown intervention {intervention!r}; expected one of {INTERVENTIONS}")
    return DensityOperator(np.asarray(m, dtype=complex), SA_LAYOUT)


def sp_layout() -> LegLayout:
    # t=0 out: system handed in at the start; t=1: intervention; t=2 in: final system
    return LegLayout((Leg(2, IN, 2), Leg(1, IN, 2), Leg(1, OUT, 2), Leg(0, OUT, 2)))


def sp_process_tensor(params: ShallowPocketParams) -> ProcessTensor:
    """Closed-form two-interval process tensor on legs (in2, in1, out1, out0).

    Index bits (a, b, c, d) of the 16x16 matrix: the pair (b, d) carries the
    first interval (length t1) and the pair (a, c) the second (length tau).
    """
    e = params.decay
    t1, tau = params.t1, params.tau
    idx = [0, 5, 10, 15]
    block = np.array([
        [1, e(t1), e(tau), e(t1 + tau)],
        [e(t1), 1, e(t1 - tau), e(tau)],
        [e(tau), e(t1 - tau), 1, e(t1)],
        [e(t1 + tau), e(tau), e(t1), 1],
    ], dtype=complex)
    m = np.zeros((16, 16), dtype=complex)
    m[np.ix_(idx, idx)] = block
    return ProcessTensor(m, sp_layout())


def sp_contract(pt: ProcessTensor, element: np.ndarray, input_state=None) -> np.ndarray:
    """Final system-ancilla operator for a Bell input and ``element`` at t1.

    Generalized link product: R[y a, y' a'] = sum Υ[x y, x' y'] M[x a, x' a'].
    """
    lay = sp_layout()
    m = pt.permuted(lay.labels).choi.reshape((2,) * 8)
    rho = psi_plus(2) / 2 if input_state is None else np.asarray(input_state)
    r = np.einsum("abcdfghi,bcgh,dein->aefn", m, element.reshape(2, 2, 2, 2),
                  rho.reshape(2, 2, 2, 2))
    return r.reshape(4, 4)


def sp_free_coherence(params: ShallowPocketParams, t) -> np.ndarray:
    return np.exp(-params.g * params.gamma * np.abs(np.asarray(t, dtype=float)))


# -- case study: coefficient and two-time diagnostics -----------------------------------

def _disc(xi: float, kappa: float) -> float:
    return kappa * kappa - 64.0 * xi * xi


def cs_coefficient_ct(xi: float, kappa: float, t):
    """Coherence factor c_t of the reduced dephasing dynamics."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    disc = _disc(xi, kappa)
    env = np.exp(-kappa * t / 4)
    if disc > 0:
        s = np.sqrt(disc)
        out = env * (kappa * np.sinh(s * t / 4) / s + np.cosh(s * t / 4))
    elif disc < 0:
        s = np.sqrt(-disc)
        out = env * (kappa * np.sin(s * t / 4) / s + np.cos(s * t / 4))
    else:
        out = env * (1 + kappa * t / 4)
    return out if out.ndim else float(out)


def cs_coefficient_derivative(xi: float, kappa: float, t):
    """Analytic time derivative of c_t, branch by branch."""
    t = np.asarray(t, dtype=float)
    disc = _disc(xi, kappa)
    env = np.exp(-kappa * t / 4)
    if disc > 0:
        s = np.sqrt(disc)
        out = -16 * xi * xi / s * env * np.sinh(s * t / 4)
    elif disc < 0:
        s = np.sqrt(-disc)
        out = -16 * xi * xi / s * env * np.sin(s * t / 4)
    else:
        out = -4 * xi * xi * t * env
    return out if out.ndim else float(out)


def cs_dephasing_rate(xi: float, kappa: float, t):
    """-dc/dt / (2 c); infinite where c_t vanishes."""
    c = np.asarray(cs_coefficient_ct(xi, kappa, t))
    dc = np.asarray(cs_coefficient_derivative(xi, kappa, t))
    with np.errstate(divide="ignore", invalid="ignore"):
        return -dc / (2 * c)


@dataclass(frozen=True)
class Divisibility:
    divisible: bool
    first_violation: float | None
    zero_crossings: tuple[float, ...]


def cs_cp_divisible(xi: float, kappa: float, t_grid=None) -> Divisibility:
    """Sign check of the dephasing rate on a time grid.

    A sign change of c_t is reported as a zero crossing (the rate diverges
    there) and counts as a violation, since the rate is negative right after.
    """
    if t_grid is None:
        t_grid = np.linspace(0.0, 5.0, 5001)
    t = np.asarray(t_grid, dtype=float)
    c = np.asarray(cs_coefficient_ct(xi, kappa, t))
    dc = np.asarray(cs_coefficient_derivative(xi, kappa, t))
    scale = 1e-14 * max(1.0, abs(xi) * abs(xi))
    bad = (dc * c > scale) | (c == 0)
    sign = np.sign(c)
    crossing_idx = np.nonzero(sign[1:] * sign[:-1] < 0)[0] + 1
    crossings = tuple(float(t[i]) for i in crossing_idx)
    bad[crossing_idx] = True
    idx = np.nonzero(bad)[0]
    first = float(t[idx[0]]) if idx.size else None
    return Divisibility(first is None, first, crossings)


def cs_n2(xi: float, kappa: float) -> float:
    """Two-time (trace-distance backflow) non-Markovianity."""
    disc = _disc(xi, kappa)
    if disc >= 0:
        return 0.0
    if kappa == 0:
        return float("inf")
    return float(1.0 / np.expm1(kappa * np.pi / np.sqrt(-disc)))


# -- case study: dilation and process tensors -------------------------------------------

@dataclass(frozen=True)
class CaseStudyParams:
    xi: float = 1.0
    kappa: float = 1.0
    dt: float = 0.3
    n_steps: int = 6

    def __post_init__(self):
        if self.xi < 0 or self.kappa < 0:
            raise ValueError("xi and kappa must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")


REGIMES = {"CP": (1.0, 10.0), "Int": (1.0, 8.0), "SNM": (1.0, 1.0)}
LOWER_E = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|: relaxes E to |0>
ENV_INITIAL = np.diag([1.0, 0.0]).astype(complex)


def cs_lindblad_superoperator(xi: float, kappa: float) -> np.ndarray:
    """Row-major generator on (S, E) for the XX coupling and environment cooling."""
    h = xi * np.kron(PAULI["x"], PAULI["x"])
    jumps = [np.sqrt(kappa) * np.kron(np.eye(2), LOWER_E)] if kappa > 0 else []
    return lindbladian(h, jumps)


def cs_dynamics(params: CaseStudyParams, system_initial=None) -> DilatedDynamics:
    gen = cs_lindblad_superoperator(params.xi, params.kappa)
    prop = expm(gen * params.dt)
    s0 = np.diag([1.0, 0.0]).astype(complex) if system_initial is None else system_initial
    return DilatedDynamics(2, 2, np.kron(s0, ENV_INITIAL), (prop,) * (params.n_steps - 1))


def cs_process_tensor(params: CaseStudyParams | None = None) -> ProcessTensor:
    """Process tensor starting on an output leg: out1, (in, out)_2..n-1, in_n."""
    params = CaseStudyParams() if params is None else params
    return build_process_tensor(cs_dynamics(params), params.n_steps, initial_output=True)


def cs_regime(name: str, dt: float = 0.3, n_steps: int = 6) -> ProcessTensor:
    try:
        xi, kappa = REGIMES[name]
    except KeyError:
        raise ValueError(f"unknown regime {name!r}; expected one of {sorted(REGIMES)}") from None
    return cs_process_tensor(CaseStudyParams(xi, kappa, dt, n_steps))


def cs_observable(layout: LegLayout) -> MultiTimeObservable:
    """Prepare |0>, do nothing in between, then read out tetrahedral outcome 1.

    ``layout`` must be chronological, starting on an out leg and ending on an
    in leg. The observable is a single element (coefficient 1) of a product
    instrument, so its norm is 1.
    """
    legs = list(layout)
    if legs[0].role != OUT or legs[-1].role != IN:
        raise ValueError("observable expects a layout starting on out and ending on in")
    blocks = [InstrumentBlock(np.diag([1.0, 0.0]).astype(complex)[None],
                              LegLayout((legs[0],)), ("0",))]
    for i in range(1, len(legs) - 1, 2):
        blocks.append(InstrumentBlock(psi_plus(legs[i].dim)[None],
                                      LegLayout((legs[i], legs[i + 1])), ("id",)))
    effects = np.stack([p.T for p in tetrahedral_povm()])
    blocks.append(InstrumentBlock(effects, LegLayout((legs[-1],)), ("1", "2", "3", "4")))
    return MultiTimeObservable(Instrument(tuple(blocks), "observable"), {0: 1.0})


def _threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PROCTENSOR_THREADS")
    return max(1, int(env)) if env else 1


def cs_grid_scan(xi_values, kappa_values, metric: str = "n2", *, dt: float = 0.3,
                 n_steps: int = 6, threads: int | None = None) -> list[tuple[float, float, float]]:
    """Metric at every (xi, kappa) point, ordered by xi then kappa."""
    if metric not in ("n2", "nm"):
        raise ValueError(f"metric must be 'n2' or 'nm', got {metric!r}")
    points = [(float(x), float(k)) for x in xi_values for k in kappa_values]
    for x, k in points:
        if x < 0 or k < 0:
            raise ValueError("grid values must be non-negative")

    def evaluate(point):
        x, k = point
        if metric == "n2":
            return cs_n2(x, k)
        return non_markovianity(cs_process_tensor(CaseStudyParams(x, k, dt, n_steps)))

    n = _threads(threads)
    if n == 1:
        values = [evaluate(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            values = list(pool.map(evaluate, points))
    return [(x, k, v) for (x, k), v in zip(points, values)]
