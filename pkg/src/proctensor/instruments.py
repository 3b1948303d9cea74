"""Generalized instruments: sets of CP-map Choi elements acting on process legs.

Elements use the (input, output) leg order of the standard Choi matrix of the
CP map they describe. Born-rule transposes are applied by the consumer.

Instruments are stored as tensor products of local blocks so that multi-step
instruments with many outcomes (16**ell for the causal break) never have to be
materialized densely.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from .linalg import IN, OUT, Leg, LegLayout, LayoutError, kron, permute_legs
from .process_tensor import comb_residuals
from .quantum_info import psi_plus

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
TETRAHEDRON = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))
GRAM_COND_MAX = 1e12


class SingularFrameError(ValueError):
    """The instrument elements are linearly dependent; no dual frame exists."""


@dataclass(frozen=True)
class InstrumentBlock:
    """Local instrument on a few contiguous legs: ``elements[k]`` is outcome ``k``."""

    elements: np.ndarray
    layout: LegLayout
    labels: tuple[str, ...]

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=complex)
        if el.ndim != 3:
            raise LayoutError("block elements must be a (K, d, d) array")
        self.layout.check_operator(el[0])
        if len(self.labels) != el.shape[0]:
            raise ValueError("one label per element required")
        object.__setattr__(self, "elements", el)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def __len__(self) -> int:
        return self.elements.shape[0]


@dataclass(frozen=True)
class Instrument:
    blocks: tuple[InstrumentBlock, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        LegLayout(tuple(leg for b in self.blocks for leg in b.layout))

    @classmethod
    def from_elements(cls, elements, layout: LegLayout, labels=None, name="") -> "Instrument":
        elements = np.asarray(elements, dtype=complex)
        if labels is None:
            labels = tuple(str(i) for i in range(elements.shape[0]))
        return cls((InstrumentBlock(elements, layout, tuple(labels)),), name)

    @property
    def layout(self) -> LegLayout:
        return LegLayout(tuple(leg for b in self.blocks for leg in b.layout))

    @property
    def outcome_shape(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def n_outcomes(self) -> int:
        return int(np.prod(self.outcome_shape, dtype=np.int64))

    @property
    def labels(self) -> list[str]:
        return ["|".join(parts) for parts in itertools.product(*(b.labels for b in self.blocks))]

    def element(self, index) -> np.ndarray:
        if isinstance(index, (int, np.integer)):
            index = np.unravel_index(int(index), self.outcome_shape)
        return kron(*(b.elements[k] for b, k in zip(self.blocks, index)))

    def elements(self) -> np.ndarray:
        """All elements densely, outcome-major. Only sensible for small instruments."""
        return np.stack([self.element(i) for i in range(self.n_outcomes)])

    def deterministic(self) -> np.ndarray:
        return kron(*(b.elements.sum(axis=0) for b in self.blocks))

    @property
    def in_dim(self) -> int:
        return self.layout.in_dim

    @property
    def out_dim(self) -> int:
        return self.layout.out_dim

    def tensor(self, other: "Instrument", name: str | None = None) -> "Instrument":
        return Instrument(self.blocks + other.blocks, name or f"{self.name}*{other.name}")


@dataclass(frozen=True)
class DualFrame:
    """Operators biorthogonal to an instrument's elements, block by block."""

    blocks: tuple[InstrumentBlock, ...]

    @property
    def layout(self) -> LegLayout:
        return LegLayout(tuple(leg for b in self.blocks for leg in b.layout))

    def dual(self, index) -> np.ndarray:
        shape = tuple(len(b) for b in self.blocks)
        if isinstance(index, (int, np.integer)):
            index = np.unravel_index(int(index), shape)
        return kron(*(b.elements[k] for b, k in zip(self.blocks, index)))

    def duals(self) -> np.ndarray:
        n = int(np.prod([len(b) for b in self.blocks]))
        return np.stack([self.dual(i) for i in range(n)])


# -- built-in families ------------------------------------------------------------

def step_layout(t: int, d: int) -> LegLayout:
    return LegLayout((Leg(t, IN, d), Leg(t, OUT, d)))


def identity_instrument(ell: int, d: int = 2, *, start: int = 1) -> Instrument:
    """Single outcome: the identity map at each of ``ell`` consecutive timesteps."""
    if ell < 1:
        raise ValueError("ell must be at least 1")
    blocks = [InstrumentBlock(psi_plus(d)[None], step_layout(t, d), ("id",))
              for t in range(start, start + ell)]
    return Instrument(tuple(blocks), f"identity[{ell}]")


def noisy_instrument(ell: int, d: int = 2, *, start: int = 1) -> Instrument:
    """Single outcome: discard the system and prepare the maximally mixed state."""
    if ell < 1:
        raise ValueError("ell must be at least 1")
    el = np.eye(d * d, dtype=complex)[None] / d
    blocks = [InstrumentBlock(el, step_layout(t, d), ("noisy",)) for t in range(start, start + ell)]
    return Instrument(tuple(blocks), f"noisy[{ell}]")


def tetrahedral_povm() -> list[np.ndarray]:
    """Symmetric informationally complete qubit POVM on tetrahedron vertices."""
    povm = []
    for alpha in TETRAHEDRON:
        bloch = sum(a * PAULI[k] for a, k in zip(alpha, "xyz"))
        povm.append(0.25 * (np.eye(2) + bloch / np.sqrt(3)))
    return povm


def causal_break_states() -> list[np.ndarray]:
    plus_x = np.full((2, 2), 0.5, dtype=complex)
    plus_y = 0.5 * np.array([[1, -1j], [1j, 1]], dtype=complex)
    return [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex),
            plus_x, plus_y]


def causal_break_block(t: int) -> InstrumentBlock:
    elements, labels = [], []
    for x, effect in enumerate(tetrahedral_povm()):
        for r, state in enumerate(causal_break_states()):
            elements.append(np.kron(effect.T, state) / 4)
            labels.append(f"{x}{r}")
    return InstrumentBlock(np.stack(elements), step_layout(t, 2), tuple(labels))


def causal_break_instrument(ell: int, *, start: int = 1) -> Instrument:
    """Tetrahedral measurement then independent uniform repreparation, at each step."""
    if ell < 1:
        raise ValueError("ell must be at least 1")
    return Instrument(tuple(causal_break_block(t) for t in range(start, start + ell)),
                      f"causal-break[{ell}]")


def unitary_choi(u: np.ndarray) -> np.ndarray:
    d = u.shape[0]
    v = u.T.reshape(d * d)  # v[(k, o)] = U[o, k]
    return np.outer(v, v.conj())


def unitary_instrument(u: np.ndarray, ell: int = 1, *, start: int = 1) -> Instrument:
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    if u.shape != (d, d) or not np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10):
        raise ValueError("U must be unitary")
    el = unitary_choi(u)[None]
    return Instrument(tuple(InstrumentBlock(el, step_layout(t, d), ("U",))
                            for t in range(start, start + ell)), f"unitary[{ell}]")


def trash_and_prepare(sigma: np.ndarray, *, t: int = 1) -> Instrument:
    """Discard the input and prepare ``sigma``: element 1_in ⊗ sigma."""
    sigma = np.asarray(sigma, dtype=complex)
    evals = np.linalg.eigvalsh(sigma)
    if evals[0] < -1e-10 or abs(np.trace(sigma) - 1) > 1e-10:
        raise ValueError("sigma must be a density operator")
    d = sigma.shape[0]
    el = np.kron(np.eye(d), sigma)[None]
    return Instrument((InstrumentBlock(el, step_layout(t, d), ("trash",)),), "trash")


# -- frames and checks ----------------------------------------------------------------

def _block_duals(block: InstrumentBlock) -> InstrumentBlock:
    el = block.elements
    flat = el.reshape(len(block), -1)
    gram = flat @ flat.T  # G[x', x] = tr[O_x'^T O_x]
    if np.linalg.cond(gram) > GRAM_COND_MAX:
        raise SingularFrameError(
            f"elements of block {block.layout} are linearly dependent; prune before dualizing")
    ginv = np.linalg.inv(gram)
    duals = np.einsum("pk,pij->kij", ginv, el)  # D_x = sum_x' (G^-1)_{x' x} O_x'
    return InstrumentBlock(duals, block.layout, block.labels)


def dual_frame(inst: Instrument) -> DualFrame:
    return DualFrame(tuple(_block_duals(b) for b in inst.blocks))


def biorthogonality_residual(inst: Instrument, frame: DualFrame) -> float:
    worst = 0.0
    for b, d in zip(inst.blocks, frame.blocks):
        m = np.einsum("xij,yij->xy", d.elements, b.elements)
        worst = max(worst, float(np.max(np.abs(m - np.eye(len(b))))))
    return worst


def unbiased_constant(inst: Instrument, atol: float = 1e-8) -> float | None:
    """The constant c with sum_x O_x = c * 1, or None if no such c exists."""
    total = inst.deterministic()
    c = np.trace(total).real / total.shape[0]
    if np.max(np.abs(total - c * np.eye(total.shape[0]))) <= atol:
        return float(c)
    return None


def is_unbiased(inst: Instrument, atol: float = 1e-8) -> bool:
    return unbiased_constant(inst, atol) is not None


@dataclass
class InstrumentReport:
    min_eigenvalue: float
    comb_residuals: list[tuple[str, float]]
    trace: float
    expected_trace: int

    @property
    def passed(self) -> bool:
        return (self.min_eigenvalue >= -1e-10
                and all(r <= 1e-8 * max(1.0, self.expected_trace) for _, r in self.comb_residuals)
                and abs(self.trace - self.expected_trace) <= 1e-8 * self.expected_trace)


def validate_instrument(inst: Instrument) -> InstrumentReport:
    min_eig = min(float(np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0])
                  for b in inst.blocks for e in b.elements)
    total = inst.deterministic()
    return InstrumentReport(min_eig, comb_residuals(total, inst.layout, OUT),
                            float(np.trace(total).real), inst.in_dim)


# -- sampled rank-one testers ---------------------------------------------------------

@dataclass(frozen=True)
class Tester:
    """Instrument whose elements are rank one: element x is |w_x><w_x|."""

    vectors: np.ndarray  # (n_outcomes, layout.dim)
    layout: LegLayout

    @property
    def n_outcomes(self) -> int:
        return self.vectors.shape[0]

    def elements(self) -> np.ndarray:
        return np.einsum("ki,kj->kij", self.vectors, self.vectors.conj())

    def probabilities(self, op: np.ndarray, layout: LegLayout) -> np.ndarray:
        """tr[O_x^T op] for every outcome; ``op`` may be any operator on the same legs."""
        if layout.labels != self.layout.labels:
            op, _ = permute_legs(op, layout, self.layout.labels)
        w = self.vectors
        return np.einsum("kj,kj->k", w @ op, w.conj()).real


def _haar(d: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1), dtype=complex)


def random_tester(layout: LegLayout, rng: np.random.Generator, ancilla_dim: int = 2,
                  measure_prob: float = 0.5) -> Tester:
    """A random sequential strategy with a quantum memory carried across steps.

    The ancilla starts in a random pure state. Each ``in``/``out`` step either
    applies a Haar-random unitary on system+ancilla or first measures the
    system in a Haar-random basis. The last ``in`` leg is measured jointly with
    the ancilla in a Haar-random basis; a trailing ``out`` leg is prepared by a
    random isometry and then read out together with the ancilla.
    """
    chrono = layout.chronological()
    if chrono.labels != layout.labels:
        raise LayoutError("random_tester needs a chronologically ordered layout")
    da = ancilla_dim
    w = _haar(da, rng)[:, 0]  # axes: (outcomes..., legs..., ancilla)
    n_out_axes = 0
    legs = list(layout)
    i = 0
    while i < len(legs):
        leg = legs[i]
        nxt = legs[i + 1] if i + 1 < len(legs) else None
        if leg.role == OUT:
            ds = leg.dim
            iso = _haar(ds * da, rng)[:, :da].reshape(ds, da, da)  # [o, a', a]
            w = np.einsum("...a,oba->...ob", w, iso)
            i += 1
            continue
        ds = leg.dim
        if nxt is not None and nxt.role == OUT and nxt.t == leg.t:
            v = _haar(nxt.dim * da, rng).reshape(nxt.dim, da, ds, da)  # [o, a', i, a]
            if rng.random() < measure_prob:
                basis = _haar(ds, rng)
                proj = np.einsum("jk,ik->kji", basis, basis.conj())  # |b_k><b_k| as [k, j, i]
                kraus = np.einsum("obja,kji->kobia", v, proj)
                w = np.einsum("...a,kobia->k...iob", w, kraus)
                n_out_axes += 1
            else:
                w = np.einsum("...a,obia->...iob", w, v)
            i += 2
        else:
            basis = _haar(ds * da, rng).reshape(ds, da, ds * da)  # columns e_x
            w = np.einsum("...a,iax->x...i", w, basis.conj())
            n_out_axes += 1
            i += 1
            # the ancilla was consumed; a later leg needs a fresh one
            if i < len(legs):
                w = np.einsum("...,a->...a", w, _haar(da, rng)[:, 0])
            else:
                w = w[..., None]
    # read out the remaining ancilla in the computational basis
    w = np.moveaxis(w, -1, 0)
    n_out_axes += 1
    n_out = int(np.prod(w.shape[:n_out_axes]))
    return Tester(w.reshape(n_out, layout.dim), layout)
