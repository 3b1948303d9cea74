"""Dense complex linear algebra on multi-leg operators.

Operators are plain square ``numpy`` arrays. Their subsystem structure is
described by a :class:`LegLayout`; the leftmost leg is the slowest-varying
index (row-major Kronecker ordering) everywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

IN = "in"
OUT = "out"
ROLES = (IN, OUT)

HERMITIAN_RTOL = 1e-10


class LayoutError(ValueError):
    """Raised when a leg layout does not fit an operator or request."""


@dataclass(frozen=True, order=True)
class Leg:
    """One tensor leg: the system at timestep ``t`` entering or leaving.

    ``role`` follows the convention of the multi-time Born rule: ``"in"`` is
    the leg on which the process hands the system to the experimenter, and
    ``"out"`` is the leg on which the experimenter hands it back.
    """

    t: int
    role: str
    dim: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise LayoutError(f"leg role must be 'in' or 'out', got {self.role!r}")
        if int(self.dim) < 1:
            raise LayoutError(f"leg dimension must be positive, got {self.dim}")

    @property
    def label(self) -> tuple[int, str]:
        return (self.t, self.role)

    def __str__(self) -> str:
        return f"{self.role}{self.t}"


@dataclass(frozen=True)
class LegLayout:
    legs: tuple[Leg, ...]

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        labels = [leg.label for leg in self.legs]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate leg labels in {labels}")

    @classmethod
    def from_spec(cls, spec: Iterable[tuple[int, str, int]]) -> "LegLayout":
        return cls(tuple(Leg(int(t), role, int(d)) for t, role, d in spec))

    def __len__(self) -> int:
        return len(self.legs)

    def __iter__(self):
        return iter(self.legs)

    def __getitem__(self, i):
        return self.legs[i]

    @property
    def labels(self) -> tuple[tuple[int, str], ...]:
        return tuple(leg.label for leg in self.legs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(leg.dim for leg in self.legs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.legs else 1

    @property
    def in_dim(self) -> int:
        return int(np.prod([l.dim for l in self.legs if l.role == IN], dtype=np.int64))

    @property
    def out_dim(self) -> int:
        return int(np.prod([l.dim for l in self.legs if l.role == OUT], dtype=np.int64))

    @property
    def timesteps(self) -> tuple[int, ...]:
        return tuple(sorted({leg.t for leg in self.legs}))

    def index(self, label) -> int:
        label = _as_label(label)
        for i, leg in enumerate(self.legs):
            if leg.label == label:
                return i
        raise LayoutError(f"unknown leg {label} in layout {self.labels}")

    def select(self, labels) -> "LegLayout":
        return LegLayout(tuple(self.legs[self.index(l)] for l in labels))

    def without(self, labels) -> "LegLayout":
        drop = {_as_label(l) for l in labels}
        for l in drop:
            self.index(l)
        return LegLayout(tuple(leg for leg in self.legs if leg.label not in drop))

    def chronological(self) -> "LegLayout":
        """Legs sorted by timestep, ``in`` before ``out`` within a step."""
        return LegLayout(tuple(sorted(self.legs, key=lambda l: (l.t, ROLES.index(l.role)))))

    def check_operator(self, m: np.ndarray) -> None:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LayoutError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] != self.dim:
            raise LayoutError(
                f"layout {self.labels} has dimension {self.dim}, operator has {m.shape[0]}")

    def __str__(self) -> str:
        return "[" + ", ".join(str(l) for l in self.legs) + "]"


def _as_label(label) -> tuple[int, str]:
    if isinstance(label, Leg):
        return label.label
    t, role = label
    return (int(t), role)


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of square matrices."""
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        op = np.asarray(op)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise LayoutError(f"kron expects square matrices, got shape {op.shape}")
        out = np.kron(out, op)
    return out


def as_tensor(m: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Reshape a square matrix into ``(*dims, *dims)`` (kets then bras)."""
    return np.asarray(m).reshape(tuple(dims) + tuple(dims))


def partial_trace(m: np.ndarray, layout: LegLayout, traced) -> tuple[np.ndarray, LegLayout]:
    """Trace out the legs in ``traced``; returns the reduced operator and layout."""
    layout.check_operator(m)
    traced_idx = sorted({layout.index(l) for l in traced})
    keep = [i for i in range(len(layout)) if i not in traced_idx]
    n = len(layout)
    dims = layout.dims
    t = as_tensor(m, dims)
    letters = _letters(2 * n)
    ket = letters[:n]
    bra = list(letters[n:])
    for i in traced_idx:
        bra[i] = ket[i]
    out = "".join(ket[i] for i in keep) + "".join(bra[i] for i in keep)
    reduced = np.einsum(ket + "".join(bra) + "->" + out, t)
    new_layout = LegLayout(tuple(layout.legs[i] for i in keep))
    d = new_layout.dim
    return reduced.reshape(d, d), new_layout


def permute_legs(m: np.ndarray, layout: LegLayout, new_order) -> tuple[np.ndarray, LegLayout]:
    """Reorder subsystems; ``new_order`` lists leg labels (or indices)."""
    layout.check_operator(m)
    n = len(layout)
    perm = [o if isinstance(o, (int, np.integer)) else layout.index(o) for o in new_order]
    if sorted(perm) != list(range(n)):
        raise LayoutError(f"{list(new_order)} is not a permutation of {layout.labels}")
    t = as_tensor(m, layout.dims)
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(m.shape), LegLayout(tuple(layout.legs[p] for p in perm))


def check_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    scale = max(float(np.max(np.abs(m))), 1.0) if m.size else 1.0
    if np.max(np.abs(m - m.conj().T), initial=0.0) > rtol * scale:
        raise ValueError("matrix is not Hermitian to tolerance")


def eig_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching unitary eigenvector matrix."""
    m = np.asarray(m)
    check_hermitian(m)
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def expm(m: np.ndarray) -> np.ndarray:
    # scipy implements scaling-and-squaring with Pade order 13 (Al-Mohy & Higham)
    return scipy.linalg.expm(np.asarray(m, dtype=complex))


def trace_norm(m: np.ndarray) -> float:
    m = np.asarray(m)
    if np.allclose(m, m.conj().T, atol=1e-14):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def _letters(n: int) -> str:
    chars = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if n > len(chars):
        raise LayoutError(f"too many legs for einsum ({n // 2})")
    return chars[:n]


# -- superoperators (row-major vectorization: vec(A X B) = (A ⊗ B^T) vec(X)) --

def spre(a: np.ndarray) -> np.ndarray:
    return np.kron(a, np.eye(a.shape[0]))


def spost(b: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(b.shape[0]), b.T)


def lindbladian(h: np.ndarray, jumps: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Generator of d/dt X = -i[h, X] + sum_k (J X J† - {J†J, X}/2)."""
    h = np.asarray(h, dtype=complex)
    gen = -1j * (spre(h) - spost(h))
    for j in jumps:
        j = np.asarray(j, dtype=complex)
        jdj = j.conj().T @ j
        gen += np.kron(j, j.conj()) - 0.5 * spre(jdj) - 0.5 * spost(jdj)
    return gen


def superop_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k, np.conj(k)) for k in kraus)


def apply_superop(superop: np.ndarray, x: np.ndarray) -> np.ndarray:
    d = x.shape[0]
    return (superop @ np.asarray(x).reshape(d * d)).reshape(d, d)


def superop_to_choi(superop: np.ndarray) -> np.ndarray:
    """Choi matrix sum_ij |i><j| ⊗ S(|i><j|) with (input, output) leg order."""
    d = int(round(np.sqrt(superop.shape[0])))
    # superop[(a, b), (i, j)] = <a|S(|i><j|)|b>
    s = superop.reshape(d, d, d, d)
    return s.transpose(2, 0, 3, 1).reshape(d * d, d * d)
