"""Truncated Fock-space operators and Hamiltonians for a driven optomechanical cavity.

The system is one optical mode (photons, ``a``) dispersively coupled to one
mechanical mode (phonons, ``b``).  Everything is expressed in a frame rotating
at the laser frequency, with hbar = 1 and frequencies in units of the
mechanical frequency Omega (Omega = 1 by default).

Hamiltonian variants:

* optomechanical (the simulation frame)::

      H = -Delta a'a - g0 (b' + b) a'a + Omega b'b + alpha_L (a' + a)

* polaron-transformed (verification only; decouples photons and phonons at
  the price of a displacement-dressed drive)::

      H~ = -Delta a'a + Omega b'b - (g0^2/Omega) (a'a)^2
           + alpha_L (a' Dh' + Dh a),   Dh = exp[g0 (b' - b) / Omega]

* Kerr cavity (mechanics-free baseline with the same photon nonlinearity)::

      H_K = -Delta a'a - (g0^2/Omega) (a'a)^2 + alpha_L (a' + a)

The product space is photon-major: basis index = n_a * (n_phonon_max + 1) + n_b.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, expm

__all__ = [
    "HilbertDims",
    "SystemParams",
    "HamiltonianKind",
    "destroy",
    "build_annihilation",
    "number_operator",
    "build_hamiltonian",
    "displacement_operator",
    "closed_form_spectrum",
    "safe_level_mask",
    "spectrum_drift",
]


@dataclass(frozen=True)
class HilbertDims:
    """Fock cutoffs of the photon (x) phonon product space.

    ``n_photon_max`` / ``n_phonon_max`` are the largest retained occupation
    numbers, so each factor holds ``cutoff + 1`` states.  A cutoff of 0 keeps a
    single Fock state (useful for the mechanics-free Kerr baseline).
    """

    n_photon_max: int
    n_phonon_max: int

    def __post_init__(self) -> None:
        if self.n_photon_max < 0 or self.n_phonon_max < 0:
            raise ValueError("Fock cutoffs must be non-negative")

    @property
    def dim_photon(self) -> int:
        return self.n_photon_max + 1

    @property
    def dim_phonon(self) -> int:
        return self.n_phonon_max + 1

    @property
    def dim(self) -> int:
        return self.dim_photon * self.dim_phonon

    def index(self, n_a: int, n_b: int) -> int:
        """Basis index of the product state |n_a, n_b>."""
        if not (0 <= n_a <= self.n_photon_max and 0 <= n_b <= self.n_phonon_max):
            raise ValueError(f"state ({n_a}, {n_b}) outside truncation {self}")
        return n_a * self.dim_phonon + n_b

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Photon and phonon occupation of every basis index, as two arrays."""
        n_a = np.repeat(np.arange(self.dim_photon), self.dim_phonon)
        n_b = np.tile(np.arange(self.dim_phonon), self.dim_photon)
        return n_a, n_b

    def grown(self, extra_photon: int = 2, extra_phonon: int = 8) -> "HilbertDims":
        """Enlarged cutoffs for truncation-convergence probes."""
        return HilbertDims(self.n_photon_max + extra_photon,
                           self.n_phonon_max + extra_phonon)


@dataclass(frozen=True)
class SystemParams:
    """Physical rates of one simulation instance, in units of Omega.

    detuning  : laser detuning Delta = omega_L - omega_cav
    g0        : single-photon optomechanical coupling
    alpha_L   : laser drive amplitude
    kappa_in  : photon loss rate through the input mirror
    kappa_out : photon loss rate through the output (detected) mirror
    gamma_m   : mechanical energy decay rate
    n_th      : thermal phonon occupation of the mechanical bath,
                n_th = 1 / (exp(hbar Omega / k_B T) - 1)
    eta       : detector efficiency for output-mirror photons, in [0, 1]
    omega_m   : mechanical frequency (the unit of all other rates; keep 1)
    """

    detuning: float
    g0: float
    alpha_L: float
    kappa_in: float
    kappa_out: float
    gamma_m: float
    n_th: float = 0.0
    eta: float = 1.0
    omega_m: float = 1.0

    def __post_init__(self) -> None:
        values = [self.detuning, self.g0, self.alpha_L, self.kappa_in,
                  self.kappa_out, self.gamma_m, self.n_th, self.eta, self.omega_m]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("all parameters must be finite")
        if min(self.kappa_in, self.kappa_out, self.gamma_m, self.n_th) < 0:
            raise ValueError("rates and n_th must be non-negative")
        if self.kappa <= 0:
            raise ValueError("total cavity decay kappa_in + kappa_out must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("detector efficiency eta must lie in [0, 1]")
        if self.omega_m <= 0:
            raise ValueError("mechanical frequency must be positive")

    @property
    def kappa(self) -> float:
        return self.kappa_in + self.kappa_out

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)


class HamiltonianKind(enum.Enum):
    OPTOMECHANICAL = "optomechanical"
    POLARON_TRANSFORMED = "polaron"
    KERR_CAVITY = "kerr"


def destroy(dim: int) -> sp.csr_matrix:
    """Single-mode annihilation operator, <n-1|a|n> = sqrt(n), on `dim` states."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    data = np.sqrt(np.arange(1, dim, dtype=float))
    return sp.diags(data, offsets=1, shape=(dim, dim), dtype=complex).tocsr()


def build_annihilation(dims: HilbertDims, which: str) -> sp.csr_matrix:
    """Annihilation operator on the product space: ladder on one factor, identity on the other."""
    if which == "photon":
        op = sp.kron(destroy(dims.dim_photon), sp.identity(dims.dim_phonon, dtype=complex))
    elif which == "phonon":
        op = sp.kron(sp.identity(dims.dim_photon, dtype=complex), destroy(dims.dim_phonon))
    else:
        raise ValueError("which must be 'photon' or 'phonon'")
    return op.tocsr()


def number_operator(dims: HilbertDims, which: str) -> sp.csr_matrix:
    op = build_annihilation(dims, which)
    return (op.conj().T @ op).tocsr()


def displacement_operator(p: SystemParams, dims: HilbertDims) -> sp.csr_matrix:
    """Mechanical displacement Dh = exp[g0 (b' - b) / Omega] on the phonon factor.

    Built by dense matrix exponential of the anti-Hermitian generator; unitary
    up to truncation error near the phonon cutoff.
    """
    lam = p.g0 / p.omega_m
    b = destroy(dims.dim_phonon).toarray()
    disp = expm(lam * (b.conj().T - b))
    full = sp.kron(sp.identity(dims.dim_photon, dtype=complex), sp.csr_matrix(disp))
    return full.tocsr()


def build_hamiltonian(p: SystemParams, dims: HilbertDims,
                      kind: HamiltonianKind = HamiltonianKind.OPTOMECHANICAL) -> sp.csr_matrix:
    """Assemble the requested Hamiltonian variant on the truncated product space."""
    a = build_annihilation(dims, "photon")
    n_a = (a.conj().T @ a).tocsr()

    if kind is HamiltonianKind.OPTOMECHANICAL:
        b = build_annihilation(dims, "phonon")
        n_b = (b.conj().T @ b).tocsr()
        x_b = (b + b.conj().T).tocsr()
        h = (-p.detuning * n_a
             - p.g0 * (x_b @ n_a)
             + p.omega_m * n_b
             + p.alpha_L * (a + a.conj().T))
    elif kind is HamiltonianKind.POLARON_TRANSFORMED:
        b = build_annihilation(dims, "phonon")
        n_b = (b.conj().T @ b).tocsr()
        disp = displacement_operator(p, dims)
        drive = a.conj().T @ disp.conj().T
        h = (-p.detuning * n_a
             + p.omega_m * n_b
             - (p.g0 ** 2 / p.omega_m) * (n_a @ n_a)
             + p.alpha_L * (drive + drive.conj().T))
    elif kind is HamiltonianKind.KERR_CAVITY:
        h = (-p.detuning * n_a
             - (p.g0 ** 2 / p.omega_m) * (n_a @ n_a)
             + p.alpha_L * (a + a.conj().T))
    else:
        raise ValueError(f"unknown Hamiltonian kind {kind!r}")
    return h.tocsr()


def closed_form_spectrum(p: SystemParams, dims: HilbertDims) -> np.ndarray:
    """Undriven eigenvalues -Delta n_a - (g0^2/Omega) n_a^2 + Omega n_b per basis index."""
    n_a, n_b = dims.occupations()
    return (-p.detuning * n_a
            - (p.g0 ** 2 / p.omega_m) * n_a.astype(float) ** 2
            + p.omega_m * n_b)


def safe_level_mask(p: SystemParams, dims: HilbertDims, margin: float = 0.5) -> np.ndarray:
    """Boolean mask of levels far enough from the phonon cutoff to trust.

    Keeps states with n_b + 2 n_a g0/Omega <= margin * n_phonon_max; the
    displacement of the photon-dressed phonon ladder grows with n_a, so higher
    photon blocks need more phonon headroom.
    """
    n_a, n_b = dims.occupations()
    return n_b + 2.0 * n_a * p.g0 / p.omega_m <= margin * dims.n_phonon_max


def undriven_spectrum_by_block(p: SystemParams, dims: HilbertDims) -> np.ndarray:
    """Numerical eigenvalues of the undriven optomechanical Hamiltonian.

    With alpha_L = 0 the Hamiltonian commutes with a'a, so it is diagonalized
    block-by-block in the photon number; within a block eigenvalues are sorted
    ascending, which matches the phonon quantum number n_b.  The result is
    indexed like the product basis.
    """
    if p.alpha_L != 0.0:
        raise ValueError("block diagonalization requires alpha_L = 0")
    b = destroy(dims.dim_phonon).toarray()
    n_b = b.conj().T @ b
    x_b = b + b.conj().T
    out = np.empty(dims.dim)
    for n_a in range(dims.dim_photon):
        block = (-p.detuning * n_a * np.eye(dims.dim_phonon)
                 - p.g0 * n_a * x_b
                 + p.omega_m * n_b)
        vals = eigh(block, eigvals_only=True)
        out[n_a * dims.dim_phonon:(n_a + 1) * dims.dim_phonon] = np.sort(vals)
    return out


def spectrum_drift(p: SystemParams, dims: HilbertDims,
                   kind: HamiltonianKind = HamiltonianKind.OPTOMECHANICAL,
                   n_levels: int = 12,
                   grow: tuple[int, int] = (0, 8)) -> float:
    """Truncation probe: max shift of the lowest eigenvalues when cutoffs grow by `grow`.

    Works for the driven Hamiltonian as well (full Hermitian diagonalization,
    so intended for modest dimensions).  Growing the photon cutoff can insert
    new levels below the old ones at blue detuning, so sorted-level comparison
    is only meaningful for phonon growth at a fixed photon cutoff; pipelines
    probe truncation through steady-state tail occupations instead.
    """
    big = dims.grown(*grow)
    h_small = build_hamiltonian(p, dims, kind).toarray()
    h_big = build_hamiltonian(p, big, kind).toarray()
    e_small = np.sort(eigh(h_small, eigvals_only=True))[:n_levels]
    e_big = np.sort(eigh(h_big, eigvals_only=True))[:n_levels]
    return float(np.max(np.abs(e_small - e_big)))
