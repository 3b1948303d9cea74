"""Process tensors built from dilated system-environment dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    IN,
    OUT,
    Leg,
    LegLayout,
    LayoutError,
    kron,
    partial_trace,
    permute_legs,
    superop_to_choi,
    trace_norm,
)
from .quantum_info import psi_plus, von_neumann_entropy

PSD_RTOL = 1e-8
CAUSALITY_RTOL = 1e-8


@dataclass(frozen=True)
class ProcessTensor:
    """Supernormalized Choi operator of a multi-time process.

    ``choi`` is indexed by ``layout`` (leftmost leg slowest). Values are treated
    as immutable once constructed.
    """

    choi: np.ndarray
    layout: LegLayout

    def __post_init__(self):
        self.layout.check_operator(self.choi)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def trace(self) -> float:
        return float(np.trace(self.choi).real)

    def normalized(self) -> np.ndarray:
        return self.choi / self.trace

    def permuted(self, order) -> "ProcessTensor":
        m, lay = permute_legs(self.choi, self.layout, order)
        return ProcessTensor(m, lay)

    def chronological(self) -> "ProcessTensor":
        return self.permuted(self.layout.chronological().labels)

    def min_eigenvalue_ratio(self) -> float:
        evals = np.linalg.eigvalsh(0.5 * (self.choi + self.choi.conj().T))
        return float(evals[0] / max(evals[-1], 1e-300))


@dataclass(frozen=True)
class DilatedDynamics:
    """Initial system-environment state plus one CPTP map per interval.

    Operators on the joint space are ordered (system, environment). Each
    propagator is a row-major superoperator of size ``(dS dE)^2``.
    """

    sys_dim: int
    env_dim: int
    initial_state: np.ndarray
    propagators: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "propagators", tuple(np.asarray(p) for p in self.propagators))
        d = self.sys_dim * self.env_dim
        if self.initial_state.shape != (d, d):
            raise LayoutError(f"initial state must be {d}x{d}, got {self.initial_state.shape}")
        for p in self.propagators:
            if p.shape != (d * d, d * d):
                raise LayoutError(f"propagator must be {d * d}x{d * d}, got {p.shape}")

    def trace_preservation_residual(self) -> float:
        d = self.sys_dim * self.env_dim
        worst = 0.0
        for p in self.propagators:
            choi = superop_to_choi(p).reshape(d, d, d, d)
            worst = max(worst, float(np.max(np.abs(np.einsum("iaja->ij", choi) - np.eye(d)))))
        return worst


def process_layout(n_steps: int, sys_dim: int, *, initial_output: bool = False,
                   include_final_output: bool = False) -> LegLayout:
    """Chronological legs for ``n_steps`` timesteps labelled 1..n."""
    legs = []
    for t in range(1, n_steps + 1):
        if not (t == 1 and initial_output):
            legs.append(Leg(t, IN, sys_dim))
        if t < n_steps or include_final_output:
            legs.append(Leg(t, OUT, sys_dim))
    return LegLayout(tuple(legs))


def _evolve(state: np.ndarray, prop: np.ndarray, d_e: int, d_l: int, d_s: int) -> np.ndarray:
    # state is ordered (E, legs, S); prop acts on (S, E)
    t = state.reshape(d_e, d_l, d_s, d_e, d_l, d_s)
    p = prop.reshape(d_s, d_e, d_s, d_e, d_s, d_e, d_s, d_e)
    out = np.einsum("sepqtfuv,fltvmu->elsqmp", p, t, optimize=True)
    return out.reshape(state.shape)


def build_process_tensor(dyn: DilatedDynamics, n_steps: int, include_final_output: bool = False,
                         initial_output: bool = False) -> ProcessTensor:
    """Choi operator of the comb defined by ``dyn`` over ``n_steps`` timesteps.

    At every timestep the system is set aside as an ``in`` leg; where the
    experimenter acts next, half of a fresh unnormalized maximally entangled
    pair becomes the ``out`` leg and the other half re-enters the dynamics.
    With ``initial_output`` the initial system state is discarded and the
    first timestep only has an ``out`` leg.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if len(dyn.propagators) != n_steps - 1:
        raise ValueError(
            f"{n_steps} timesteps need {n_steps - 1} propagators, got {len(dyn.propagators)}")
    d_s, d_e = dyn.sys_dim, dyn.env_dim
    layout = process_layout(n_steps, d_s, initial_output=initial_output,
                            include_final_output=include_final_output)
    # reorder the joint initial state from (S, E) to (E, S)
    rho = dyn.initial_state.reshape(d_s, d_e, d_s, d_e).transpose(1, 0, 3, 2)
    rho = rho.reshape(d_s * d_e, d_s * d_e)
    d_l = 1
    if initial_output:
        rho_e = np.einsum("esfs->ef", rho.reshape(d_e, d_s, d_e, d_s))
        state = np.kron(rho_e, psi_plus(d_s))
        d_l = d_s
    else:
        state = rho
    for t in range(1, n_steps + 1):
        if t > 1:
            state = _evolve(state, dyn.propagators[t - 2], d_e, d_l, d_s)
        if t == 1 and initial_output:
            continue
        # current system becomes leg in_t
        d_l *= d_s
        if t < n_steps or include_final_output:
            state = np.kron(state, psi_plus(d_s))
            d_l *= d_s
    if include_final_output:
        # the system fed into the last out leg is discarded
        t = state.reshape(d_e, d_l, d_s, d_e, d_l, d_s)
        state = np.einsum("elsfms->elfm", t).reshape(d_e * d_l, d_e * d_l)
    # trace out environment
    t = state.reshape(d_e, layout.dim, d_e, layout.dim)
    choi = np.einsum("eaeb->ab", t)
    return ProcessTensor(0.5 * (choi + choi.conj().T), layout)


# -- causality -----------------------------------------------------------------

@dataclass
class CausalityReport:
    residuals: list[tuple[str, float]]
    trace: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for _, r in self.residuals)

    @property
    def worst(self) -> float:
        return max((r for _, r in self.residuals), default=0.0)


def comb_residuals(op: np.ndarray, layout: LegLayout, own_role: str) -> list[tuple[str, float]]:
    """Trace-norm residuals of the comb hierarchy, latest level first.

    ``own_role`` is the role of the legs the object itself emits: ``"in"`` for
    process tensors, ``"out"`` for instruments. Tracing the latest emitted leg
    must leave the identity on the preceding received leg.
    """
    order = layout.chronological()
    m, lay = permute_legs(op, layout, order.labels)
    residuals = []
    while len(lay):
        last = lay[-1]
        if last.role == own_role:
            m, lay = partial_trace(m, lay, [last.label])
            name = f"tr {last}"
            if len(lay) and lay[-1].role != own_role:
                prev = lay[-1]
                rest, rest_lay = partial_trace(m, lay, [prev.label])
                rest = rest / prev.dim
                residuals.append((name, trace_norm(m - np.kron(rest, np.eye(prev.dim)))))
                m, lay = rest, rest_lay
            else:
                residuals.append((name, 0.0))
        else:
            rest, rest_lay = partial_trace(m, lay, [last.label])
            rest = rest / last.dim
            residuals.append((f"1 on {last}", trace_norm(m - np.kron(rest, np.eye(last.dim)))))
            m, lay = rest, rest_lay
    residuals.append(("normalization", abs(complex(m.reshape(-1)[0]) - 1.0)))
    return residuals


def validate_causality(pt: ProcessTensor, rtol: float = CAUSALITY_RTOL) -> CausalityReport:
    res = comb_residuals(pt.choi, pt.layout, IN)
    return CausalityReport(res, pt.trace, rtol * max(pt.trace, 1.0))


def is_psd(m: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    evals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return bool(evals[0] >= -rtol * max(abs(evals[-1]), 1e-300))


# -- Markov product and non-Markovianity -----------------------------------------

def markov_groups(layout: LegLayout) -> list[list[tuple[int, str]]]:
    """Single-interval leg groups: each ``in`` leg with the ``out`` leg right before it."""
    chrono = layout.chronological()
    groups: list[list[tuple[int, str]]] = []
    pending = None
    for leg in chrono:
        if leg.role == OUT:
            if pending is not None:
                groups.append([pending])
            pending = leg.label
        else:
            groups.append([pending, leg.label] if pending is not None else [leg.label])
            pending = None
    if pending is not None:
        groups.append([pending])
    return groups


def interval_marginal(pt: ProcessTensor, group) -> tuple[np.ndarray, LegLayout]:
    others = [l for l in pt.layout.labels if l not in set(group)]
    m, lay = partial_trace(pt.choi, pt.layout, others)
    out_dims = int(np.prod([pt.layout[pt.layout.index(l)].dim for l in others
                            if l[1] == OUT], dtype=np.int64))
    m, lay = permute_legs(m, lay, group)
    return m / out_dims, lay


def markov_product(pt: ProcessTensor) -> ProcessTensor:
    """Tensor product of the single-interval marginals of ``pt``."""
    factors = []
    legs = []
    for group in markov_groups(pt.layout):
        m, lay = interval_marginal(pt, group)
        factors.append(m)
        legs.extend(lay.legs)
    product = kron(*factors)
    m, lay = permute_legs(product, LegLayout(tuple(legs)), pt.layout.labels)
    return ProcessTensor(m, lay)


def non_markovianity(pt: ProcessTensor) -> float:
    """Relative entropy (bits) between ``pt`` and its Markov product, both trace-normalized.

    The Markov product is built from the marginals of ``pt`` itself, so the
    relative entropy reduces to sum_k S(marginal_k) - S(pt). This needs one
    eigenvalue solve instead of two full eigendecompositions, and the support
    condition holds automatically.
    """
    joint = von_neumann_entropy(pt.normalized())
    parts = 0.0
    for group in markov_groups(pt.layout):
        m, _ = interval_marginal(pt, group)
        parts += von_neumann_entropy(m / np.trace(m).real)
    return max(parts - joint, 0.0)


def link(op: np.ndarray, layout: LegLayout, element: np.ndarray,
         element_layout: LegLayout) -> tuple[np.ndarray, LegLayout]:
    """tr_X[(element^T ⊗ 1) op] over the legs X of ``element_layout``.

    This is the Born-rule contraction restricted to a subset of legs.
    """
    element_layout.check_operator(element)
    labels = element_layout.labels
    rest = [l for l in layout.labels if l not in set(labels)]
    m, lay = permute_legs(op, layout, list(labels) + rest)
    dx = element_layout.dim
    dr = lay.dim // dx
    t = m.reshape(dx, dr, dx, dr)
    out = np.einsum("ba,bras->rs", element, t)
    return out, lay.select(rest)
