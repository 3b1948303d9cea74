"""Memory strength, recovery and bound verification for a history/memory/future split.

A process tensor's legs are split into history H, a contiguous memory block
M, and future F. Conditioning on an instrument applied during M yields one
subnormalized operator on FH per outcome. Their F:H correlations define the
memory strength; replacing each conditional by the product of its marginals
and re-expanding with dual operators gives the restricted process.

Entropies are in bits. Bound checks convert to nats before applying the
Pinsker-type square roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instruments import DualFrame, Instrument, Tester, dual_frame, random_tester, unbiased_constant
from .linalg import IN, OUT, Leg, LegLayout, LayoutError, kron, permute_legs
from .process_tensor import ProcessTensor
from .quantum_info import (
    DensityOperator,
    classical_relative_entropy,
    conditional_mutual_information,
    mutual_information,
    psi_plus,
    relative_entropy,
)

POINTER_T = -1  # timestep label used for the classical pointer register
ZERO_WEIGHT = 1e-14
LN2 = math.log(2.0)
BOUND_SLACK = 1e-8
SPAN_TOL = 1e-8


# -- partitions and conditioning ---------------------------------------------------------

@dataclass(frozen=True)
class BlockPartition:
    history: tuple
    memory: tuple
    future: tuple

    def __post_init__(self):
        for name in ("history", "memory", "future"):
            object.__setattr__(self, name, tuple((int(t), r) for t, r in getattr(self, name)))
        if not self.memory:
            raise LayoutError("memory block must contain at least one leg")

    @classmethod
    def from_memory_steps(cls, layout: LegLayout, memory_steps) -> "BlockPartition":
        """Legs before the memory steps form H, legs after form F."""
        steps = sorted(set(int(t) for t in memory_steps))
        if steps != list(range(steps[0], steps[-1] + 1)):
            raise LayoutError(f"memory timesteps {steps} are not contiguous")
        chrono = layout.chronological()
        h = [l.label for l in chrono if l.t < steps[0]]
        m = [l.label for l in chrono if steps[0] <= l.t <= steps[-1]]
        f = [l.label for l in chrono if l.t > steps[-1]]
        part = cls(tuple(h), tuple(m), tuple(f))
        part.check(layout)
        return part

    @property
    def ell(self) -> int:
        return len({t for t, _ in self.memory})

    def check(self, layout: LegLayout) -> None:
        labels = self.history + self.memory + self.future
        if sorted(labels) != sorted(layout.labels):
            raise LayoutError(f"partition {labels} does not cover layout {layout.labels}")
        steps = sorted({t for t, _ in self.memory})
        if steps != list(range(steps[0], steps[-1] + 1)):
            raise LayoutError(f"memory timesteps {steps} are not contiguous")
        if any(t >= steps[0] for t, _ in self.history) or any(t <= steps[-1] for t, _ in self.future):
            raise LayoutError("history must precede and future follow the memory block")


def _contract_blocks(op: np.ndarray, blocks) -> np.ndarray:
    """tr_M[E^T op] for every product element E, M leading in ``op``.

    Returns an array of shape ``(*outcome_shape, R, R)`` where R is the
    dimension left after the blocks.
    """
    lead: tuple[int, ...] = ()
    rest = op.shape[0]
    t = op
    for block in blocks:
        db = block.dim
        rest //= db
        t = t.reshape(lead + (db, rest, db, rest))
        t = np.einsum("kba,...bras->...krs", block.elements, t, optimize=True)
        lead = lead + (len(block),)
    return t


def _expand_blocks(parts: np.ndarray, blocks, outcome_shape) -> np.ndarray:
    """sum_x E^(x) ⊗ parts[x], with the block legs leading."""
    d_rest = parts.shape[-1]
    t = parts.reshape(tuple(outcome_shape) + (d_rest, d_rest))
    for block in reversed(blocks):
        t = np.einsum("...krs,kba->...bras", t, block.elements, optimize=True)
        d_rest *= block.dim
        t = t.reshape(t.shape[:-4] + (d_rest, d_rest))
    return t


@dataclass
class ConditionalProcessSet:
    """One subnormalized operator on H⊗F per outcome of the memory instrument."""

    operators: np.ndarray  # (n_outcomes, D_FH, D_FH)
    layout: LegLayout  # history legs then future legs
    history: tuple
    future: tuple
    outcome_shape: tuple[int, ...]
    instrument: Instrument
    _thetas: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_outcomes(self) -> int:
        return self.operators.shape[0]

    @property
    def traces(self) -> np.ndarray:
        return np.einsum("nii->n", self.operators).real

    @property
    def weights(self) -> np.ndarray:
        tr = self.traces
        w = tr / tr.sum()
        w[tr <= ZERO_WEIGHT * tr.sum()] = 0.0
        return w

    @property
    def d_history(self) -> int:
        return self.layout.select(self.history).dim

    @property
    def d_future(self) -> int:
        return self.layout.select(self.future).dim

    @property
    def d_future_out(self) -> int:
        return self.layout.select(self.future).out_dim

    def total(self) -> np.ndarray:
        return self.operators.sum(axis=0)

    def thetas(self) -> np.ndarray:
        if self._thetas is None:
            self._thetas = _batched_mutual_information(self.operators, self.d_history,
                                                       self.d_future, self.weights)
        return self._thetas


def condition(pt: ProcessTensor, part: BlockPartition, inst: Instrument) -> ConditionalProcessSet:
    """Conditional processes tr_M[O^(x)T Υ] for every outcome of ``inst`` on M."""
    part.check(pt.layout)
    if sorted(inst.layout.labels) != sorted(part.memory):
        raise LayoutError(f"instrument legs {inst.layout.labels} do not match memory {part.memory}")
    for leg in inst.layout:
        if leg.dim != pt.layout[pt.layout.index(leg.label)].dim:
            raise LayoutError(f"instrument leg {leg} has the wrong dimension")
    chrono = pt.layout.chronological().labels
    h = tuple(l for l in chrono if l in set(part.history))
    f = tuple(l for l in chrono if l in set(part.future))
    m, lay = permute_legs(pt.choi, pt.layout, list(inst.layout.labels) + list(h) + list(f))
    ys = _contract_blocks(m, inst.blocks)
    d_fh = pt.dim // inst.layout.dim
    ys = ys.reshape(inst.n_outcomes, d_fh, d_fh)
    return ConditionalProcessSet(ys, lay.select(h + f), h, f, inst.outcome_shape, inst)


def _entropies_bits(mats: np.ndarray) -> np.ndarray:
    evals = np.linalg.eigvalsh(0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2))))
    evals = np.clip(evals, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(evals > 0, -evals * np.log2(np.where(evals > 0, evals, 1.0)), 0.0)
    return terms.sum(axis=-1)


def _batched_mutual_information(ops: np.ndarray, d_h: int, d_f: int,
                                weights: np.ndarray) -> np.ndarray:
    n = ops.shape[0]
    tr = np.einsum("nii->n", ops).real
    live = weights > 0
    out = np.zeros(n)
    if not np.any(live):
        return out
    rho = ops[live] / tr[live, None, None]
    t = rho.reshape(-1, d_h, d_f, d_h, d_f)
    rho_h = np.einsum("nafbf->nab", t)
    rho_f = np.einsum("nahag->nhg", t)
    mi = _entropies_bits(rho_h) + _entropies_bits(rho_f) - _entropies_bits(rho)
    out[live] = np.clip(mi, 0.0, None)
    return out


def theta(cond: ConditionalProcessSet, x) -> float:
    """F:H mutual information (bits) of the normalized conditional for outcome ``x``."""
    if not isinstance(x, (int, np.integer)):
        x = int(np.ravel_multi_index(tuple(x), cond.outcome_shape))
    if not 0 <= x < cond.n_outcomes:
        raise IndexError(f"outcome {x} out of range")
    if cond.weights[x] == 0:
        return 0.0
    return max(mutual_information(cond.operators[x], cond.layout, (cond.future, cond.history)), 0.0)


def big_theta(cond: ConditionalProcessSet, aggregation: str = "mean") -> float:
    th = cond.thetas()
    w = cond.weights
    if aggregation == "mean":
        return float(np.dot(w, th))
    if aggregation == "max":
        return float(np.max(th[w > 0]))
    raise ValueError(f"aggregation must be 'mean' or 'max', got {aggregation!r}")


def pointer_state(cond: ConditionalProcessSet) -> DensityOperator:
    """Normalized sum_x Ỹ^(x) ⊗ |x><x| on F ⊗ m ⊗ H (pointer leg labelled t=-1)."""
    n = cond.n_outcomes
    d_h, d_f = cond.d_history, cond.d_future
    t = cond.operators.reshape(n, d_h, d_f, d_h, d_f) / cond.traces.sum()
    full = np.zeros((d_f, n, d_h, d_f, n, d_h), dtype=complex)
    idx = np.arange(n)
    full[:, idx, :, :, idx, :] = t.transpose(0, 2, 1, 4, 3)
    d = d_f * n * d_h
    legs = (tuple(cond.layout[cond.layout.index(l)] for l in cond.future)
            + (Leg(POINTER_T, OUT, n),)
            + tuple(cond.layout[cond.layout.index(l)] for l in cond.history))
    m = full.reshape(d, d)
    return DensityOperator(0.5 * (m + m.conj().T), LegLayout(legs))


def pointer_cmi(cond: ConditionalProcessSet) -> float:
    rho = pointer_state(cond)
    return conditional_mutual_information(rho.matrix, rho.layout,
                                          (cond.future, [(POINTER_T, OUT)], cond.history))


# -- recovery and restricted process ----------------------------------------------------

@dataclass
class Recovery:
    future_parts: np.ndarray  # Υ_F^(x), trace D^o_F each (zero for null outcomes)
    history_parts: np.ndarray  # Ỹ_H^(x), carrying the outcome weight
    restricted: ProcessTensor  # Λ̲ on the original layout
    hermiticity_residual: float
    cond: ConditionalProcessSet

    def recovered_pointer_state(self) -> np.ndarray:
        """sum_x Υ_F^(x) ⊗ |x><x| ⊗ Ỹ_H^(x), dense; only for small instances."""
        n = self.future_parts.shape[0]
        d_f = self.future_parts.shape[1]
        d_h = self.history_parts.shape[1]
        full = np.zeros((d_f, n, d_h, d_f, n, d_h), dtype=complex)
        idx = np.arange(n)
        full[:, idx, :, :, idx, :] = np.einsum("nab,ncd->nacbd", self.future_parts,
                                                  self.history_parts)
        d = d_f * n * d_h
        return full.reshape(d, d)


def recover(cond: ConditionalProcessSet, duals: DualFrame | None = None,
            pt_layout: LegLayout | None = None) -> Recovery:
    """Product-of-marginals recovery and the restricted process built from duals."""
    inst = cond.instrument
    duals = dual_frame(inst) if duals is None else duals
    if [b.layout for b in duals.blocks] != [b.layout for b in inst.blocks]:
        raise LayoutError("dual frame does not match the conditioning instrument")
    n = cond.n_outcomes
    d_h, d_f = cond.d_history, cond.d_future
    d_fo = cond.d_future_out
    tr = cond.traces
    live = cond.weights > 0
    t = cond.operators.reshape(n, d_h, d_f, d_h, d_f)
    rho_f = np.einsum("nahag->nhg", t)
    fut = np.zeros((n, d_f, d_f), dtype=complex)
    fut[live] = d_fo * rho_f[live] / tr[live, None, None]
    hist = np.einsum("nafbf->nab", t) / d_fo
    hist[~live] = 0.0
    parts = np.einsum("nab,ncd->nacbd", hist, fut).reshape(n, d_h * d_f, d_h * d_f)
    lam = _expand_blocks(parts, duals.blocks, cond.outcome_shape)
    full_layout = LegLayout(tuple(inst.layout.legs) + tuple(cond.layout.legs))
    if pt_layout is None:
        pt_layout = full_layout.chronological()
    lam, lay = permute_legs(lam, full_layout, pt_layout.labels)
    resid = float(np.max(np.abs(lam - lam.conj().T)))
    lam = 0.5 * (lam + lam.conj().T)
    return Recovery(fut, hist, ProcessTensor(lam, lay), resid, cond)


# -- expectation values and observables --------------------------------------------------

def expectation(op, c: np.ndarray, layout: LegLayout | None = None,
                c_layout: LegLayout | None = None) -> complex:
    """tr[C^T op]; ``op`` may be a ProcessTensor or an operator with ``layout``."""
    if isinstance(op, ProcessTensor):
        op, layout = op.choi, op.layout
    if layout is None:
        raise ValueError("layout required for a raw operator")
    if isinstance(c, MultiTimeObservable):
        c, c_layout = c.operator, c.layout
    if c_layout is not None and c_layout.labels != layout.labels:
        c, _ = permute_legs(c, c_layout, layout.labels)
    if c.shape != op.shape:
        raise LayoutError(f"observable shape {c.shape} does not match operator {op.shape}")
    return complex(np.sum(c * op))


@dataclass(frozen=True)
class MultiTimeObservable:
    """C = sum_x c_x O^(x) over outcomes of a product instrument on all legs."""

    instrument: Instrument
    coefficients: dict

    def __post_init__(self):
        n = self.instrument.n_outcomes
        for x in self.coefficients:
            if not 0 <= int(x) < n:
                raise IndexError(f"outcome {x} out of range")

    @property
    def layout(self) -> LegLayout:
        return self.instrument.layout

    @property
    def operator(self) -> np.ndarray:
        return sum(c * self.instrument.element(int(x)) for x, c in self.coefficients.items())

    @property
    def norm(self) -> float:
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.coefficients.values())))

    def unbiased_on(self, memory) -> bool:
        """Whether the instrument's deterministic element, traced over M, is ∝ 1 on FH."""
        memory = set(memory)
        rest = [b for b in self.instrument.blocks if not set(b.layout.labels) <= memory]
        for b in rest:
            if set(b.layout.labels) & memory:
                return False
        if not rest:
            return True
        return unbiased_constant(Instrument(tuple(rest))) is not None


def span_residual(c: np.ndarray, layout: LegLayout, part: BlockPartition, inst: Instrument,
                  duals: DualFrame | None = None) -> float:
    """Distance of C from the span of (anything on FH) ⊗ (elements of inst on M)."""
    duals = dual_frame(inst) if duals is None else duals
    rest = [l for l in layout.labels if l not in set(inst.layout.labels)]
    m, lay = permute_legs(c, layout, list(inst.layout.labels) + rest)
    coeffs = _contract_blocks(m, duals.blocks)
    proj = _expand_blocks(coeffs, inst.blocks, inst.outcome_shape)
    return float(np.max(np.abs(proj - m)))


# -- bounds ----------------------------------------------------------------------------

def d_fh(part: BlockPartition, layout: LegLayout) -> int:
    return layout.select(part.history + part.future).dim


def report_record(config: dict, lhs: float, rhs: float, theta_bits: float, ell: int,
                  instrument: str, regime: str | None = None, seed: int | None = None) -> dict:
    return {"config": config, "lhs": float(lhs), "rhs": float(rhs), "margin": float(rhs - lhs),
            "theta_bits": float(theta_bits), "ell": int(ell), "instrument": instrument,
            "regime": regime, "seed": seed}


def verify_thm1(pt: ProcessTensor, part: BlockPartition, inst: Instrument, c: MultiTimeObservable,
                aggregation: str = "mean", *, plotted_scale: float | None = None,
                recovery: Recovery | None = None) -> dict:
    """Compare |<C>_Υ - <C>_Λ̲| against |C| sqrt(2 D_FH Θ).

    ``plotted_scale`` replaces sqrt(D_FH) by a fixed factor (d**u in the
    case-study figures). For unbiased decompositions the tighter variant
    sqrt(sum|c|^2) sqrt(2 Θ) is reported too.
    """
    if recovery is None:
        recovery = recover(condition(pt, part, inst), pt_layout=pt.layout)
    cond = recovery.cond
    op = c.operator
    resid = span_residual(op, c.layout, part, inst)
    if resid > SPAN_TOL * max(1.0, float(np.max(np.abs(op)))):
        raise ValueError(f"observable is not in the span of the memory instrument (residual {resid:.2e})")
    lhs = abs(expectation(pt, op, c_layout=c.layout)
              - expectation(recovery.restricted, op, c_layout=c.layout))
    th_bits = big_theta(cond, aggregation)
    th_nats = max(th_bits, 0.0) * LN2
    dfh = d_fh(part, pt.layout)
    rhs = c.norm * math.sqrt(2 * dfh * th_nats)
    out = {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "theta_bits": th_bits, "ell": part.ell,
           "d_fh": dfh, "passed": rhs - lhs >= -BOUND_SLACK}
    if plotted_scale is not None:
        rp = c.norm * plotted_scale * math.sqrt(2 * th_nats)
        out.update(rhs_plotted=rp, margin_plotted=rp - lhs)
    if c.unbiased_on(part.memory):
        ru = c.norm * math.sqrt(2 * th_nats)
        out.update(rhs_unbiased=ru, margin_unbiased=ru - lhs)
    return out


def _idle_element(layout: LegLayout, t_j: int) -> np.ndarray:
    """Prepare |0>, idle before t_j, then feed noise and discard from t_j on.

    ``layout`` must be chronological and must not contain (t_j, in).
    """
    factors = []
    legs = list(layout)
    i = 0
    while i < len(legs):
        leg = legs[i]
        nxt = legs[i + 1] if i + 1 < len(legs) else None
        if leg.t < t_j and leg.role == IN and nxt is not None and nxt.t == leg.t:
            factors.append(psi_plus(leg.dim))
            i += 2
            continue
        if leg.role == IN:
            factors.append(np.eye(leg.dim))
        elif leg.t < t_j:
            prep = np.zeros((leg.dim, leg.dim))
            prep[0, 0] = 1.0
            factors.append(prep)
        else:
            factors.append(np.eye(leg.dim) / leg.dim)
        i += 1
    return kron(*factors)


def _states_at(cond: ConditionalProcessSet, t_j: int) -> np.ndarray:
    lay = cond.layout
    target = (t_j, IN)
    others = [l for l in lay.labels if l != target]
    n = cond.n_outcomes
    d = lay[lay.index(target)].dim
    rest = lay.select(others)
    el = _idle_element(rest, t_j)
    order = [lay.index(l) for l in others] + [lay.index(target)]
    k = len(lay)
    t = cond.operators.reshape((n,) + lay.dims + lay.dims)
    t = t.transpose([0] + [1 + o for o in order] + [1 + k + o for o in order])
    t = t.reshape(n, rest.dim, d, rest.dim, d)
    return np.einsum("ba,nbras->nrs", el, t)


def verify_cor2(pt: ProcessTensor, part: BlockPartition, inst: Instrument, t_j: int,
                x_m=None, *, aggregation: str = "mean", recovery: Recovery | None = None) -> dict:
    """Trace distance between true and simulated (subnormalized) states at t_j."""
    if (t_j, IN) not in set(part.future):
        raise ValueError(f"t_j={t_j} has no input leg in the future block")
    if recovery is None:
        recovery = recover(condition(pt, part, inst), pt_layout=pt.layout)
    cond = recovery.cond
    sim = condition(recovery.restricted, part, inst)
    rho = _states_at(cond, t_j)
    rho_sim = _states_at(sim, t_j)
    diff = rho - rho_sim
    dist = np.abs(np.linalg.eigvalsh(0.5 * (diff + np.conj(np.swapaxes(diff, -1, -2))))).sum(-1)
    if x_m is not None:
        if not isinstance(x_m, (int, np.integer)):
            x_m = int(np.ravel_multi_index(tuple(x_m), cond.outcome_shape))
        dist = dist[x_m:x_m + 1]
    th_bits = big_theta(cond, aggregation)
    rhs = math.sqrt(2 * d_fh(part, pt.layout) * max(th_bits, 0.0) * LN2)
    worst = float(dist.max())
    return {"trace_distance": worst, "rhs": rhs, "margin": rhs - worst, "theta_bits": th_bits,
            "t_j": t_j, "passed": rhs - worst >= -BOUND_SLACK}


def is_informationally_complete(inst: Instrument) -> bool:
    for b in inst.blocks:
        flat = b.elements.reshape(len(b), -1)
        if np.linalg.matrix_rank(flat, tol=1e-10) != b.dim ** 2:
            return False
    return True


def estimate_diamond_gap(pt: ProcessTensor, part: BlockPartition, inst_ic: Instrument,
                         n_samples: int, seed: int, *, recovery: Recovery | None = None,
                         aggregation: str = "mean", ancilla_dim: int = 2) -> dict:
    """Sampled lower bound on the generalized diamond distance between Υ and Λ̲.

    Each sample is a random sequential tester (see ``random_tester``); the
    returned ``history`` is the running maximum of the L1 distance between the
    two outcome distributions.
    """
    if not is_informationally_complete(inst_ic):
        raise ValueError("memory instrument must be informationally complete")
    if recovery is None:
        recovery = recover(condition(pt, part, inst_ic), pt_layout=pt.layout)
    chrono = pt.layout.chronological()
    ups = pt.permuted(chrono.labels).choi
    lam = recovery.restricted.permuted(chrono.labels).choi
    children = np.random.SeedSequence(seed).spawn(n_samples)
    best = 0.0
    history = []
    for child in children:
        tester = random_tester(chrono, np.random.default_rng(child), ancilla_dim)
        p = tester.probabilities(ups, chrono)
        q = tester.probabilities(lam, chrono)
        best = max(best, float(np.abs(p - q).sum()))
        history.append(best)
    th_bits = big_theta(recovery.cond, aggregation)
    rhs = math.sqrt(2 * d_fh(part, pt.layout) * max(th_bits, 0.0) * LN2)
    return {"lower_bound": best, "rhs": rhs, "margin": rhs - best, "theta_bits": th_bits,
            "history": history, "passed": rhs - best >= -BOUND_SLACK}


# -- instrument relative entropy and Appendix-style inequalities -----------------------------

def outcome_probabilities(inst, op: np.ndarray, layout: LegLayout) -> np.ndarray:
    """tr[O^(x)T op] for every outcome of an Instrument or Tester."""
    if isinstance(inst, Tester):
        return inst.probabilities(op, layout)
    m, _ = permute_legs(op, layout, inst.layout.labels)
    return np.einsum("kij,ij->k", inst.elements(), m).real


def instrument_relative_entropy(pt: ProcessTensor, gamma: ProcessTensor, family) -> float:
    """Largest classical relative entropy (bits) between outcome distributions."""
    best = 0.0
    for inst in family:
        p = outcome_probabilities(inst, pt.choi, pt.layout)
        q = outcome_probabilities(inst, gamma.choi, gamma.layout)
        best = max(best, classical_relative_entropy(np.clip(p, 0, None), np.clip(q, 0, None)))
    return best


def lemma1_check(pt: ProcessTensor, gamma: ProcessTensor, family) -> dict:
    """Both sides of the instrument-relative-entropy bound, in bits.

    ``unnormalized`` is S(Υ‖Γ) = D^o S(Υ̂‖Γ̂) for equal traces; ``normalized``
    is S(Υ̂‖Γ̂). Each is compared with S_J / D^i.
    """
    s_hat = relative_entropy(pt.normalized(), gamma.normalized())
    s_j = instrument_relative_entropy(pt, gamma, family)
    rhs = s_j / pt.layout.in_dim
    unnorm = pt.layout.out_dim * s_hat
    return {"s_normalized": s_hat, "s_unnormalized": unnorm, "s_instrument": s_j, "rhs": rhs,
            "slack_unnormalized": unnorm - rhs, "slack_normalized": s_hat - rhs}


def pinsker_check(pt: ProcessTensor, gamma: ProcessTensor, inst) -> dict:
    p = outcome_probabilities(inst, pt.choi, pt.layout)
    q = outcome_probabilities(inst, gamma.choi, gamma.layout)
    l1 = float(np.abs(p - q).sum())
    s_nats = classical_relative_entropy(np.clip(p, 0, None), np.clip(q, 0, None), base=math.e)
    return {"l1": l1, "s_nats": s_nats, "slack": s_nats - l1 * l1 / 2}
