"""Liouvillian assembly, master-equation propagation, steady state, and g2(tau).

The master equation for the photon+phonon density matrix rho is

    drho/dt = i [rho, H] + kappa_I D[a] rho + kappa_O D[a] rho
              + Gamma_M (n_th + 1) D[b] rho + Gamma_M n_th D[b'] rho

with D[c] rho = c rho c' - {c'c, rho}/2.  Photon loss is kept split into the
input- and output-mirror channels because only the output channel is monitored
by the detector.

Density matrices are vectorized row-major, vec(rho) = rho.reshape(D*D), so an
operator sandwich maps as vec(A rho B) = kron(A, B.T) vec(rho).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from omjump.operators import HilbertDims, SystemParams, build_annihilation

__all__ = [
    "DensityMatrix",
    "JumpChannel",
    "Liouvillian",
    "G2Curve",
    "ConditionalG2Report",
    "DegenerateSteadyStateError",
    "SteadyStateError",
    "assemble_liouvillian",
    "propagate",
    "steady_state",
    "g2_of_tau",
    "default_g2_delays",
    "conditional_photon_number_check",
]


class SteadyStateError(RuntimeError):
    """Steady-state solve failed to reach the requested residual."""


class DegenerateSteadyStateError(SteadyStateError):
    """Null space of the Liouvillian is degenerate or nearly so."""

    def __init__(self, gap: float, message: str | None = None):
        self.gap = gap
        super().__init__(message or f"near-degenerate steady state, spectral gap ~ {gap:.3e}")


@dataclass
class DensityMatrix:
    """System state on the truncated product space, with validity diagnostics."""

    dims: HilbertDims
    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (self.dims.dim, self.dims.dim):
            raise ValueError("density matrix shape does not match dims")

    @classmethod
    def vacuum(cls, dims: HilbertDims) -> "DensityMatrix":
        m = np.zeros((dims.dim, dims.dim), dtype=complex)
        m[0, 0] = 1.0
        return cls(dims, m)

    @classmethod
    def from_vec(cls, dims: HilbertDims, v: np.ndarray) -> "DensityMatrix":
        return cls(dims, np.asarray(v, dtype=complex).reshape(dims.dim, dims.dim))

    def vec(self) -> np.ndarray:
        return self.matrix.reshape(-1)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def hermiticity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2).min())

    def expect(self, op) -> complex:
        return complex(np.asarray(op @ self.matrix).diagonal().sum())

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.dims, self.matrix / np.trace(self.matrix))

    def validate(self, trace_tol: float = 1e-9, herm_tol: float = 1e-10,
                 pos_tol: float = 1e-8) -> None:
        """Raise if the state violates trace, Hermiticity, or positivity tolerances."""
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"trace deviates from 1 by {abs(self.trace - 1.0):.3e}")
        if self.hermiticity_defect() > herm_tol:
            raise ValueError(f"Hermiticity defect {self.hermiticity_defect():.3e}")
        if self.min_eigenvalue() < -pos_tol:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue():.3e}")

    def tail_occupation(self) -> tuple[float, float]:
        """Population of the topmost photon layer and topmost phonon layer."""
        pops = np.real(np.diag(self.matrix))
        n_a, n_b = self.dims.occupations()
        top_photon = float(pops[n_a == self.dims.n_photon_max].sum())
        top_phonon = float(pops[n_b == self.dims.n_phonon_max].sum())
        return top_photon, top_phonon


@dataclass(frozen=True)
class JumpChannel:
    label: str
    rate: float
    op: sp.csr_matrix


@dataclass
class Liouvillian:
    """Sparse superoperator of the master equation plus its jump-channel list."""

    dims: HilbertDims
    params: SystemParams
    matrix: sp.csr_matrix
    channels: list[JumpChannel]
    hamiltonian: sp.csr_matrix
    _spectral_radius: float | None = field(default=None, repr=False)

    @property
    def a(self) -> sp.csr_matrix:
        return self.channels[0].op

    @property
    def n_a(self) -> sp.csr_matrix:
        a = self.a
        return (a.conj().T @ a).tocsr()

    def no_jump_matrix(self) -> sp.csr_matrix:
        """Generator conditioned on no detector click.

        Identical to the full Liouvillian except that the recycling term of
        the monitored output channel is scaled by (1 - eta); the missing
        eta kappa_O a rho a' is what the detector removes.
        """
        a = self.a
        eta_k = self.params.eta * self.params.kappa_out
        return (self.matrix - eta_k * _sandwich(a, a.conj().T)).tocsr()

    def spectral_radius(self) -> float:
        """Cheap power-iteration estimate of ||L||, cached; used for step control."""
        if self._spectral_radius is None:
            rng = np.random.default_rng(7)
            v = rng.standard_normal(self.matrix.shape[0]) \
                + 1j * rng.standard_normal(self.matrix.shape[0])
            v /= np.linalg.norm(v)
            rho = 0.0
            for _ in range(25):
                w = self.matrix @ v
                rho = np.linalg.norm(w)
                if rho == 0.0:
                    break
                v = w / rho
            self._spectral_radius = float(rho) * 1.1
        return self._spectral_radius


@dataclass
class G2Curve:
    """Normalized two-photon correlation g2 at a set of delays."""

    delays: np.ndarray
    values: np.ndarray
    nbar: float

    def __post_init__(self) -> None:
        self.delays = np.asarray(self.delays, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.delays.shape != self.values.shape:
            raise ValueError("delays and values must have equal length")
        if np.any(np.diff(self.delays) <= 0):
            raise ValueError("delays must be strictly increasing")


def _sandwich(left: sp.spmatrix, right: sp.spmatrix) -> sp.csr_matrix:
    """Superoperator of rho -> left rho right under row-major vectorization."""
    return sp.kron(left, right.T, format="csr")


def _spre(op: sp.spmatrix) -> sp.csr_matrix:
    dim = op.shape[0]
    return sp.kron(op, sp.identity(dim, dtype=complex), format="csr")


def _spost(op: sp.spmatrix) -> sp.csr_matrix:
    dim = op.shape[0]
    return sp.kron(sp.identity(dim, dtype=complex), op.T, format="csr")


def _dissipator(op: sp.spmatrix) -> sp.csr_matrix:
    nop = (op.conj().T @ op).tocsr()
    return _sandwich(op, op.conj().T) - 0.5 * (_spre(nop) + _spost(nop))


def assemble_liouvillian(p: SystemParams, h: sp.spmatrix,
                         dims: HilbertDims) -> Liouvillian:
    """Build the master-equation generator for Hamiltonian `h` and the four loss channels."""
    if h.shape != (dims.dim, dims.dim):
        raise ValueError(f"Hamiltonian shape {h.shape} does not match dims {dims}")
    h = sp.csr_matrix(h, dtype=complex)
    herm_defect = spla.norm(h - h.conj().T)
    scale = max(spla.norm(h), 1.0)
    if herm_defect > 1e-12 * scale:
        raise ValueError(f"Hamiltonian is not Hermitian (defect {herm_defect:.3e})")

    a = build_annihilation(dims, "photon")
    b = build_annihilation(dims, "phonon")
    channels = [
        JumpChannel("kappa_in", p.kappa_in, a),
        JumpChannel("kappa_out", p.kappa_out, a),
        JumpChannel("mech_down", p.gamma_m * (p.n_th + 1.0), b),
        JumpChannel("mech_up", p.gamma_m * p.n_th, b.conj().T.tocsr()),
    ]
    lmat = -1j * (_spre(h) - _spost(h))
    for ch in channels:
        if ch.rate > 0.0:
            lmat = lmat + ch.rate * _dissipator(ch.op)
    return Liouvillian(dims=dims, params=p, matrix=lmat.tocsr(),
                       channels=channels, hamiltonian=h)


def propagate(liou: Liouvillian, rho0: DensityMatrix, t: float,
              t_eval: np.ndarray | None = None,
              rtol: float = 1e-8, atol: float = 1e-11,
              generator: sp.spmatrix | None = None,
              trace_tol: float = 1e-8) -> DensityMatrix | list[DensityMatrix]:
    """Propagate a density matrix for time `t` with adaptive explicit Runge-Kutta.

    If `t_eval` is given, returns the state at each requested time instead of
    only the final one.  A trace drift beyond `trace_tol` triggers a warning
    (the state is not silently renormalized).  `generator` overrides the full
    Liouvillian matrix (used internally for no-click evolution, which is not
    trace preserving and skips the guard).
    """
    if rho0.dims.dim != liou.dims.dim:
        raise ValueError("state dimension does not match Liouvillian")
    mat = liou.matrix if generator is None else sp.csr_matrix(generator)
    guard_trace = generator is None

    if t == 0 and t_eval is None:
        return DensityMatrix(liou.dims, rho0.matrix.copy())

    def rhs(_t, y):
        return mat @ y

    times = None if t_eval is None else np.asarray(t_eval, dtype=float)
    sol = solve_ivp(rhs, (0.0, t), rho0.vec(), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")

    def wrap(v):
        state = DensityMatrix.from_vec(liou.dims, v)
        if guard_trace and abs(state.trace - 1.0) > trace_tol:
            warnings.warn(f"trace drifted to {state.trace:.12f} during propagation",
                          RuntimeWarning, stacklevel=2)
        return state

    if t_eval is None:
        return wrap(sol.y[:, -1])
    return [wrap(sol.y[:, k]) for k in range(sol.y.shape[1])]


def _direct_null_solve(liou: Liouvillian) -> tuple[np.ndarray, float]:
    """Solve L rho = 0 with the trace constraint folded into the first row."""
    lmat = liou.matrix.tocsr()
    n2 = lmat.shape[0]
    d = liou.dims.dim
    weight = float(np.mean(np.abs(lmat.data))) if lmat.nnz else 1.0
    diag_idx = np.arange(d) * d + np.arange(d)
    trace_row = sp.csr_matrix((np.full(d, weight), (np.zeros(d, dtype=int), diag_idx)),
                              shape=(n2, n2))
    aug = (lmat + trace_row).tocsc()
    rhs = np.zeros(n2, dtype=complex)
    rhs[0] = weight
    lu = spla.splu(aug)
    x = lu.solve(rhs)
    # a couple of refinement sweeps to push the null-space residual down
    for _ in range(3):
        res = rhs - aug @ x
        if np.linalg.norm(res) < 1e-14 * max(1.0, np.linalg.norm(x)):
            break
        x = x + lu.solve(res)
    residual = float(np.linalg.norm(lmat @ x) / max(np.abs(x[diag_idx].sum()), 1e-300))
    return x, residual


def _relaxation_fallback(liou: Liouvillian, tol: float) -> np.ndarray:
    """Long-time propagation from the maximally mixed state (used when LU fails)."""
    p = liou.params
    slow = min(r for r in (p.kappa, p.gamma_m * max(1.0, p.n_th)) if r > 0)
    d = liou.dims.dim
    state = DensityMatrix(liou.dims, np.eye(d, dtype=complex) / d)
    for _ in range(8):
        state = propagate(liou, state, 10.0 / slow)
        state = state.normalized()
        res = np.linalg.norm(liou.matrix @ state.vec())
        if res <= tol:
            return state.vec()
    raise SteadyStateError(f"relaxation fallback stalled at residual {res:.3e}")


def liouvillian_gap(liou: Liouvillian, sigma: float = 1e-7) -> tuple[float, float]:
    """Magnitudes of the two eigenvalues of L nearest zero (shift-invert Arnoldi).

    The first should vanish (the steady state); the second estimates the
    spectral gap that sets the slowest relaxation time.
    """
    vals = spla.eigs(liou.matrix.tocsc(), k=2, sigma=sigma, which="LM",
                     return_eigenvectors=False, maxiter=5000)
    mags = np.sort(np.abs(vals))
    return float(mags[0]), float(mags[1])


def steady_state(liou: Liouvillian, *, tol: float = 1e-10,
                 check_unique: bool = False,
                 gap_floor: float = 1e-9) -> DensityMatrix:
    """Stationary state of the Liouvillian, ||L rho_ss|| <= tol, trace one.

    Sparse LU on the trace-augmented system, with a long-time-propagation
    fallback if factorization fails.  With `check_unique` the two eigenvalues
    of L nearest zero are estimated; a second eigenvalue below `gap_floor`
    raises `DegenerateSteadyStateError` carrying the gap estimate.
    """
    try:
        x, residual = _direct_null_solve(liou)
    except (RuntimeError, MemoryError) as exc:
        warnings.warn(f"direct steady-state solve failed ({exc}); falling back to relaxation",
                      RuntimeWarning, stacklevel=2)
        x = _relaxation_fallback(liou, tol)
        residual = float(np.linalg.norm(liou.matrix @ x))

    rho = x.reshape(liou.dims.dim, liou.dims.dim)
    rho = (rho + rho.conj().T) / 2
    rho = rho / np.trace(rho).real
    state = DensityMatrix(liou.dims, rho)

    if residual > tol:
        raise SteadyStateError(f"steady-state residual {residual:.3e} exceeds {tol:.1e}")
    min_eig = state.min_eigenvalue()
    if min_eig < -1e-8:
        warnings.warn(f"steady state has negative eigenvalue {min_eig:.3e}",
                      RuntimeWarning, stacklevel=2)

    if check_unique:
        try:
            lam0, lam1 = liouvillian_gap(liou)
        except Exception as exc:  # Arnoldi convergence is best-effort
            warnings.warn(f"gap estimation failed: {exc}", RuntimeWarning, stacklevel=2)
        else:
            if lam1 < gap_floor:
                raise DegenerateSteadyStateError(lam1)
    return state


def default_g2_delays(p: SystemParams, n_points: int = 240) -> np.ndarray:
    """Log-spaced delay grid from 1e-2/Omega out to 10/Gamma_M.

    Covers both the fast cavity-scale dip and the slow mechanical relaxation.
    """
    t_max = 10.0 / p.gamma_m if p.gamma_m > 0 else 1e4 / p.omega_m
    return np.geomspace(1e-2 / p.omega_m, t_max, n_points)


def g2_of_tau(liou: Liouvillian, rho_ss: DensityMatrix, delays: np.ndarray,
              rtol: float = 1e-8, atol: float = 1e-11,
              chunk: int = 400) -> G2Curve:
    """Two-photon correlation from the quantum regression formula.

    g2(tau) = Tr[a'a e^{L tau}(a rho_ss a')] / Tr[a'a rho_ss]^2, evaluated at
    each delay.  The result is ordered by delay; the delays are processed in
    chunks so arbitrarily long grids do not hold every intermediate state in
    memory.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.ndim != 1 or np.any(delays < 0):
        raise ValueError("delays must be a 1-D array of non-negative times")
    sorted_delays = np.unique(delays)

    a = liou.a
    n_op = liou.n_a
    nbar = float(np.real(np.trace(n_op @ rho_ss.matrix)))
    if nbar < 1e-14:
        raise ValueError("steady-state photon number vanishes; g2 undefined")

    chi = (a @ rho_ss.matrix @ a.conj().T.toarray()) / nbar
    y = chi.reshape(-1)
    mat = liou.matrix
    d = liou.dims.dim
    diag_weights = np.real(n_op.diagonal())
    diag_idx = np.arange(d) * d + np.arange(d)

    values = np.empty_like(sorted_delays)
    t_now = 0.0
    pos = 0

    def rhs(_t, v):
        return mat @ v

    while pos < len(sorted_delays):
        stop = min(pos + chunk, len(sorted_delays))
        t_eval = sorted_delays[pos:stop]
        while pos < stop and t_eval[0] <= t_now:
            values[pos] = np.real(y[diag_idx] @ diag_weights)
            pos += 1
            t_eval = sorted_delays[pos:stop]
        if pos == stop:
            continue
        sol = solve_ivp(rhs, (t_now, t_eval[-1]), y, method="DOP853",
                        t_eval=t_eval, rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"regression propagation failed: {sol.message}")
        for k in range(sol.y.shape[1]):
            values[pos + k] = np.real(sol.y[diag_idx, k] @ diag_weights)
        y = sol.y[:, -1]
        t_now = t_eval[-1]
        pos = stop

    values = values / nbar
    if values.min() < -1e-6:
        warnings.warn(f"g2 dipped to {values.min():.3e}; truncation or tolerance issue",
                      RuntimeWarning, stacklevel=2)
    values = np.clip(values, 0.0, None)
    return G2Curve(delays=sorted_delays, values=values, nbar=nbar)


@dataclass
class ConditionalG2Report:
    """Comparison of regression g2(tau) with the conditional photon-number ratio."""

    tau: np.ndarray
    g2_regression: np.ndarray
    g2_conditional: np.ndarray
    conditional_err: np.ndarray
    n_segments: int
    mean_waiting_time: float
    valid_tau: np.ndarray            # tau below the mean inter-jump waiting time
    rare_jump_ok: bool
    max_abs_z: float

    def agreement_within(self, n_sigma: float = 3.0) -> bool:
        z = np.abs(self.g2_conditional - self.g2_regression) \
            / np.where(self.conditional_err > 0, self.conditional_err, np.inf)
        return bool(np.all(z[self.valid_tau] <= n_sigma))


def conditional_photon_number_check(records, liou: Liouvillian,
                                    rho_ss: DensityMatrix,
                                    tau: np.ndarray | None = None,
                                    min_segments: int = 10) -> ConditionalG2Report:
    """Compare g2(tau) from quantum regression against post-jump trajectory segments.

    In the weak-drive regime the intracavity photon number conditioned on a
    click at tau = 0, divided by its pre-click value, approximates g2(tau);
    the approximation holds for tau below the mean waiting time between
    clicks.  `records` must carry per-detection post-jump photon-number
    windows (``post_jump_nbar`` sampled on ``post_jump_tau``) as produced by
    the trajectory engines.
    """
    segs = [r.post_jump_nbar for r in records
            if getattr(r, "post_jump_nbar", None) is not None and len(r.post_jump_nbar)]
    if not segs:
        raise ValueError("records carry no post-jump photon-number windows")
    grid = records[0].post_jump_tau
    if tau is not None and not np.array_equal(np.asarray(tau), grid):
        raise ValueError("requested tau grid differs from the recorded windows")
    data = np.vstack(segs)
    m = data.shape[0]
    if m < min_segments:
        raise ValueError(f"only {m} post-jump segments; need at least {min_segments} "
                         "for the requested precision")

    pre = np.concatenate([r.prejump_nbar for r in records
                          if getattr(r, "prejump_nbar", None) is not None])
    denom = float(np.mean(pre))
    cond = data.mean(axis=0) / denom
    err = data.std(axis=0, ddof=1) / np.sqrt(m) / denom

    n_jumps = sum(len(r.jump_times) for r in records)
    t_total = sum(r.t_total for r in records)
    mean_wait = t_total / max(n_jumps, 1)

    reg = g2_of_tau(liou, rho_ss, np.asarray(grid, dtype=float))
    valid = grid < mean_wait
    z = np.abs(cond - reg.values) / np.where(err > 0, err, np.inf)
    return ConditionalG2Report(
        tau=np.asarray(grid, dtype=float),
        g2_regression=reg.values,
        g2_conditional=cond,
        conditional_err=err,
        n_segments=m,
        mean_waiting_time=float(mean_wait),
        valid_tau=valid,
        rare_jump_ok=bool(valid.all()),
        max_abs_z=float(np.max(z[valid])) if valid.any() else float("nan"),
    )
