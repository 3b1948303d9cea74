"""Entropies and Choi-state helpers.

All entropies are returned in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import LayoutError, LegLayout, check_hermitian, partial_trace

EIG_CLAMP = -1e-12
SUPPORT_TOL = 1e-12
# total weight of rho allowed to sit in the numerical kernel of sigma
LEAKAGE_TOL = 1e-10


@dataclass(frozen=True)
class DensityOperator:
    """A positive operator with its leg layout.

    When ``normalized`` is false the trace is kept and recorded as ``weight``.
    """

    matrix: np.ndarray
    layout: LegLayout
    normalized: bool = True

    def __post_init__(self):
        self.layout.check_operator(self.matrix)
        check_hermitian(self.matrix)
        evals = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        if evals.size and evals[0] < -1e-10 * max(1.0, evals[-1]):
            raise ValueError(f"operator is not positive (min eigenvalue {evals[0]:.3e})")
        if self.normalized and abs(np.trace(self.matrix).real - 1.0) > 1e-10:
            raise ValueError("normalized density operator must have unit trace")

    @property
    def weight(self) -> float:
        return float(np.trace(self.matrix).real)


def psi_plus(d: int) -> np.ndarray:
    """Unnormalized maximally entangled projector sum_ab |aa><bb|."""
    if d < 1:
        raise ValueError("dimension must be positive")
    v = np.eye(d, dtype=complex).reshape(d * d)
    return np.outer(v, v)


def _spectrum(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    check_hermitian(rho)
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    scale = max(1.0, float(evals[-1])) if evals.size else 1.0
    if evals.size and evals[0] < EIG_CLAMP * scale:
        raise ValueError(f"negative eigenvalue {evals[0]:.3e} below clamp threshold")
    return np.clip(evals, 0.0, None)


def shannon_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz))) + 0.0


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy -tr(rho log2 rho) with 0 log 0 = 0."""
    return max(shannon_bits(_spectrum(rho)), 0.0)


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """tr[rho (log2 rho - log2 sigma)]; ``inf`` when supp(rho) is not inside supp(sigma)."""
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    check_hermitian(rho)
    check_hermitian(sigma)
    lam, u = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    mu, w = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
    lam = np.clip(lam, 0.0, None)
    overlap = np.abs(u.conj().T @ w) ** 2  # overlap[i, j] = |<u_i|w_j>|^2
    weights = lam @ overlap  # weight of rho on each eigenvector of sigma
    kernel = mu <= SUPPORT_TOL
    if np.any(weights[kernel] > LEAKAGE_TOL):
        return float("inf")
    log_mu = np.zeros_like(mu)
    log_mu[~kernel] = np.log2(mu[~kernel])
    nz = lam > 0
    value = float(np.sum(lam[nz] * np.log2(lam[nz])) - np.sum(weights * log_mu))
    return value


def classical_relative_entropy(p: np.ndarray, q: np.ndarray, base: float = 2.0) -> float:
    """sum_x p_x (log p_x - log q_x) for nonnegative, not necessarily normalized weights."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0
    if np.any(q[nz] <= 0):
        return float("inf")
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))) / np.log(base))


def _normalized(rho: np.ndarray) -> np.ndarray:
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValueError("operator has non-positive trace")
    return rho / tr


def _check_partition(layout: LegLayout, parts) -> list[list[tuple[int, str]]]:
    resolved = [[layout[layout.index(l)].label for l in part] for part in parts]
    flat = [l for part in resolved for l in part]
    if sorted(flat) != sorted(layout.labels):
        raise LayoutError(f"partition {resolved} does not cover layout {layout.labels} exactly")
    return resolved


def _marginal_entropy(rho: np.ndarray, layout: LegLayout, keep) -> float:
    drop = [l for l in layout.labels if l not in set(keep)]
    reduced, _ = partial_trace(rho, layout, drop)
    return von_neumann_entropy(reduced)


def mutual_information(rho: np.ndarray, layout: LegLayout, partition) -> float:
    """S(A) + S(B) - S(AB) for a bipartition of the legs. Normalizes by the trace."""
    a, b = _check_partition(layout, partition)
    rho = _normalized(np.asarray(rho))
    return (_marginal_entropy(rho, layout, a) + _marginal_entropy(rho, layout, b)
            - von_neumann_entropy(rho))


def conditional_mutual_information(rho: np.ndarray, layout: LegLayout, partition) -> float:
    """I(A:C|B) = S(AB) + S(BC) - S(ABC) - S(B) for ``partition = (A, B, C)``."""
    a, m, c = _check_partition(layout, partition)
    rho = _normalized(np.asarray(rho))
    return (_marginal_entropy(rho, layout, a + m) + _marginal_entropy(rho, layout, m + c)
            - von_neumann_entropy(rho) - _marginal_entropy(rho, layout, m))


def apply_choi(choi: np.ndarray, rho: np.ndarray, d_in: int | None = None) -> np.ndarray:
    """Send ``rho`` through the map whose (input, output)-ordered Choi matrix is ``choi``.

    Computes tr_in[choi (rho^T ⊗ 1_out)].
    """
    choi = np.asarray(choi)
    rho = np.asarray(rho.matrix if isinstance(rho, DensityOperator) else rho)
    d_in = rho.shape[0] if d_in is None else d_in
    if choi.shape[0] % d_in:
        raise LayoutError(f"Choi dimension {choi.shape[0]} is not a multiple of input {d_in}")
    if rho.shape != (d_in, d_in):
        raise LayoutError(f"input state has shape {rho.shape}, expected {(d_in, d_in)}")
    d_out = choi.shape[0] // d_in
    c = choi.reshape(d_in, d_out, d_in, d_out)
    # out[o, p] = sum_ij rho[i, j] choi[(i, o), (j, p)]
    return np.einsum("ij,iojp->op", rho, c)
