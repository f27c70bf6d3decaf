"""Detection-conditioned quantum-jump trajectories.

Two stochastic engines sample the photodetection record of the output mirror:

``run_trajectory`` / ``run_ensemble``
    The conditional density-matrix unraveling.  Only the monitored fraction
    eta kappa_O of the output channel is resolved into clicks; the input
    mirror, the mechanical bath, and the undetected output fraction stay
    Lindbladian, so the conditional state is a (mixed) density matrix.  Per
    step of length dt a click fires with probability
    p_j = eta kappa_O <a'a> dt and applies rho -> a rho a' / Tr(a'a rho);
    otherwise rho evolves under the no-click generator (the full Liouvillian
    with the monitored recycling term scaled by 1 - eta) and is renormalized.

``sample_detection_records``
    A Monte-Carlo wave-function unraveling of *all* channels with exact
    norm-decay waiting times, keeping only the output-channel clicks (thinned
    by eta).  Marginalizing the unobserved channel records reproduces the
    conditional-density-matrix click statistics exactly, at a cost per event
    instead of per time step, which makes the long stationary records needed
    for counting statistics cheap.  The equivalence is enforced by tests.

Random streams are derived from a master seed with ``SeedSequence.spawn`` and
consumed by counter-based Philox generators, so jump times replay bit-for-bit
for equal seeds and are independent of scheduling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.optimize import brentq

from omjump.operators import HilbertDims, SystemParams, build_annihilation

__all__ = [
    "TrajectoryConfig",
    "TrajectoryRecord",
    "SamplingPathologyError",
    "JumpStepError",
    "default_dt",
    "derive_seeds",
    "run_trajectory",
    "run_ensemble",
    "sample_detection_records",
]

P_JUMP_MAX = 0.05


class SamplingPathologyError(RuntimeError):
    """A click was drawn on a state with numerically vanishing photon number."""


class JumpStepError(ValueError):
    """The per-step click probability exceeded the first-order sampling bound."""


@dataclass(frozen=True)
class TrajectoryConfig:
    """One seeded trajectory: duration, sampling resolution, and initial state.

    ``initial_state`` is ``"steady"``, ``"vacuum"``, or a density matrix; with
    ``"steady"`` the detection record is stationary from t = 0.  ``burn_in``
    simulates (and discards) a leading window, for runs started elsewhere.
    ``dt`` of None picks ``default_dt``.
    """

    seed: int
    t_total: float
    dt: float | None = None
    sample_stride: int = 10
    initial_state: object = "steady"
    burn_in: float = 0.0
    record_traces: bool = True
    post_jump_tau: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.t_total <= 0:
            raise ValueError("t_total must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")


@dataclass
class TrajectoryRecord:
    """Click timestamps plus sampled expectation traces for one seeded trajectory."""

    jump_times: np.ndarray
    times: np.ndarray
    n_photon: np.ndarray
    n_phonon: np.ndarray
    x_mech: np.ndarray
    seed: int
    t_total: float
    engine: str
    dt: float | None = None
    prejump_nbar: np.ndarray | None = None
    post_jump_tau: np.ndarray | None = None
    post_jump_nbar: np.ndarray | None = None
    tail_photon: float | None = None     # time-averaged top-photon-layer population
    tail_phonon: float | None = None
    config: dict | None = None

    def validate(self) -> None:
        if len(self.jump_times) and np.any(np.diff(self.jump_times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        for name in ("n_photon", "n_phonon"):
            arr = getattr(self, name)
            if len(arr) and (not np.all(np.isfinite(arr)) or arr.min() < -1e-10):
                raise ValueError(f"{name} trace is not finite and non-negative")
        if len(self.x_mech) and not np.all(np.isfinite(self.x_mech)):
            raise ValueError("displacement trace is not finite")

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def to_csv(self, path, provenance: str | None = None) -> None:
        """Write the sampled traces as CSV: t, n_photon, n_phonon, x, jump_flag."""
        if not len(self.times):
            raise ValueError("record holds no sampled traces")
        edges = np.concatenate([[-np.inf], self.times])
        flags = np.histogram(self.jump_times, bins=edges)[0]
        with open(path, "w") as fh:
            if provenance:
                for line in provenance.splitlines():
                    fh.write(f"# {line}\n")
            fh.write("t,n_photon,n_phonon,x,jump_flag\n")
            for k in range(len(self.times)):
                fh.write(f"{self.times[k]:.10g},{self.n_photon[k]:.10g},"
                         f"{self.n_phonon[k]:.10g},{self.x_mech[k]:.10g},{flags[k]:d}\n")


def default_dt(p: SystemParams, nbar_peak: float | None = None) -> float:
    """Step size min(0.01/Omega, 0.1/kappa, 0.05/(eta kappa_O nbar_peak))."""
    candidates = [0.01 / p.omega_m, 0.1 / p.kappa]
    if nbar_peak is not None and p.eta * p.kappa_out * nbar_peak > 0:
        candidates.append(P_JUMP_MAX / (p.eta * p.kappa_out * nbar_peak))
    return min(candidates)


def derive_seeds(master_seed: int, n: int) -> list[int]:
    """Deterministic per-trajectory seeds via SeedSequence spawning."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _resolve_initial(initial, p: SystemParams, h: sp.spmatrix, dims: HilbertDims):
    from omjump import lindblad

    if isinstance(initial, lindblad.DensityMatrix):
        return initial
    if isinstance(initial, np.ndarray):
        return lindblad.DensityMatrix(dims, initial)
    if initial == "vacuum":
        return lindblad.DensityMatrix.vacuum(dims)
    if initial == "steady":
        liou = lindblad.assemble_liouvillian(p, h, dims)
        return lindblad.steady_state(liou)
    raise ValueError(f"unknown initial state {initial!r}")


class _PendingWindows:
    """Bookkeeping for post-click photon-number windows that spill across segments."""

    def __init__(self, tau: np.ndarray):
        self.tau = np.asarray(tau, dtype=float)
        self.rows: list[np.ndarray] = []
        self.pending: list[tuple[int, int, float]] = []   # (row, column, absolute time)

    def open(self, t_click: float) -> None:
        row = len(self.rows)
        self.rows.append(np.full(len(self.tau), np.nan))
        self.pending.extend((row, k, t_click + self.tau[k]) for k in range(len(self.tau)))
        self.pending.sort(key=lambda item: item[2])

    def due(self, t_until: float):
        while self.pending and self.pending[0][2] <= t_until:
            yield self.pending.pop(0)

    def harvest(self) -> np.ndarray | None:
        done = [r for r in self.rows if not np.any(np.isnan(r))]
        return np.vstack(done) if done else None


# ---------------------------------------------------------------------------
# conditional density-matrix engine
# ---------------------------------------------------------------------------

def _rk4(mat: sp.csr_matrix, y: np.ndarray, h: float, substeps: int) -> np.ndarray:
    hs = h / substeps
    for _ in range(substeps):
        k1 = mat @ y
        k2 = mat @ (y + (0.5 * hs) * k1)
        k3 = mat @ (y + (0.5 * hs) * k2)
        k4 = mat @ (y + hs * k3)
        y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def run_trajectory(p: SystemParams, h: sp.spmatrix, cfg: TrajectoryConfig,
                   dims: HilbertDims | None = None) -> TrajectoryRecord:
    """One conditional density-matrix trajectory of the monitored output channel.

    Returns the click record together with traces of <a'a>, <b'b>, and
    <b + b'> sampled every ``sample_stride`` steps.  Replays are bit-for-bit
    deterministic in (seed, config, params).
    """
    from omjump import lindblad

    if dims is None:
        raise ValueError("dims must be provided")
    liou = lindblad.assemble_liouvillian(p, h, dims)
    rho0 = _resolve_initial(cfg.initial_state, p, h, dims)

    dt = cfg.dt
    if dt is None:
        nbar0 = float(np.real(np.trace(liou.n_a @ rho0.matrix)))
        dt = default_dt(p, nbar_peak=max(4.0 * nbar0, 1e-3))

    gen = liou.no_jump_matrix()
    substeps = max(1, int(np.ceil(dt * liou.spectral_radius() / 2.5)))
    jump_map = sp.kron(liou.a, liou.a.conj(), format="csr")

    d = dims.dim
    diag_idx = np.arange(d) * d + np.arange(d)
    n_a_diag = np.real(liou.n_a.diagonal())
    b = build_annihilation(dims, "phonon")
    n_b_diag = np.real((b.conj().T @ b).diagonal())
    x_op = (b + b.conj().T).T
    x_vec = sp.csr_matrix(x_op.reshape(1, d * d))

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    eta_k = p.eta * p.kappa_out

    y = rho0.matrix.reshape(-1).astype(complex)
    n_burn = int(np.round(cfg.burn_in / dt))
    n_steps = int(np.round(cfg.t_total / dt))

    jump_times: list[float] = []
    prejump: list[float] = []
    times, tr_na, tr_nb, tr_x = [], [], [], []
    windows = _PendingWindows(cfg.post_jump_tau) if cfg.post_jump_tau is not None else None

    def nbar_of(vec) -> float:
        return float(np.real(vec[diag_idx] @ n_a_diag))

    for k in range(-n_burn, n_steps):
        t = k * dt
        recording = k >= 0
        nbar = nbar_of(y)
        if recording and cfg.record_traces and k % cfg.sample_stride == 0:
            times.append(t)
            tr_na.append(nbar)
            tr_nb.append(float(np.real(y[diag_idx] @ n_b_diag)))
            tr_x.append(float(np.real((x_vec @ y)[0])))
        if windows is not None and recording:
            for row, col, _t_due in windows.due(t):
                windows.rows[row][col] = nbar_of(y)

        p_jump = eta_k * nbar * dt
        if p_jump > P_JUMP_MAX:
            raise JumpStepError(
                f"click probability {p_jump:.3g} per step exceeds {P_JUMP_MAX}; reduce dt")
        if rng.uniform() < p_jump:
            if nbar < 1e-14:
                raise SamplingPathologyError("click drawn on an essentially dark state")
            if recording:
                prejump.append(nbar)
                jump_times.append(t + dt)
            y = jump_map @ y
            y = y / np.real(y[diag_idx].sum())
            if windows is not None and recording:
                windows.open(t + dt)
        else:
            y = _rk4(gen, y, dt, substeps)
            y = y / np.real(y[diag_idx].sum())

    record = TrajectoryRecord(
        jump_times=np.asarray(jump_times),
        times=np.asarray(times),
        n_photon=np.asarray(tr_na),
        n_phonon=np.asarray(tr_nb),
        x_mech=np.asarray(tr_x),
        seed=cfg.seed,
        t_total=cfg.t_total,
        engine="conditional-dm",
        dt=dt,
        prejump_nbar=np.asarray(prejump) if prejump else None,
        post_jump_tau=None if windows is None else windows.tau,
        post_jump_nbar=None if windows is None else windows.harvest(),
        config={"dt": dt, "sample_stride": cfg.sample_stride,
                "burn_in": cfg.burn_in, "t_total": cfg.t_total},
    )
    record.validate()
    return record


def run_ensemble(p: SystemParams, h: sp.spmatrix, cfg: TrajectoryConfig,
                 n_traj: int, workers: int = 1,
                 dims: HilbertDims | None = None) -> list[TrajectoryRecord]:
    """Independent trajectories with per-trajectory seeds spawned from cfg.seed.

    Results are ordered by trajectory index regardless of scheduling, and a
    single-trajectory ensemble reproduces ``run_trajectory`` bit-for-bit under
    the derived seed.  Failures are collected per trajectory, not fatal to
    siblings (a run with no survivors raises).
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    seeds = derive_seeds(cfg.seed, n_traj)
    configs = [_replace_seed(cfg, s) for s in seeds]

    results: list[TrajectoryRecord | None] = [None] * n_traj
    failures: list[tuple[int, Exception]] = []

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_trajectory, p, h, c, dims): i
                       for i, c in enumerate(configs)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    failures.append((i, exc))
    else:
        for i, c in enumerate(configs):
            try:
                results[i] = run_trajectory(p, h, c, dims)
            except Exception as exc:
                failures.append((i, exc))

    if failures:
        warnings.warn(f"{len(failures)} of {n_traj} trajectories failed; "
                      f"first: {failures[0][1]}", RuntimeWarning, stacklevel=2)
    good = [r for r in results if r is not None]
    if not good:
        raise RuntimeError("every trajectory in the ensemble failed") from failures[0][1]
    return good


def _replace_seed(cfg: TrajectoryConfig, seed: int) -> TrajectoryConfig:
    return TrajectoryConfig(seed=seed, t_total=cfg.t_total, dt=cfg.dt,
                            sample_stride=cfg.sample_stride,
                            initial_state=cfg.initial_state, burn_in=cfg.burn_in,
                            record_traces=cfg.record_traces,
                            post_jump_tau=cfg.post_jump_tau)


# ---------------------------------------------------------------------------
# all-channel wave-function sampler
# ---------------------------------------------------------------------------

class _EigenPropagator:
    """Apply exp(-i H_eff t) to a state for arbitrary t at O(D^2) cost."""

    def __init__(self, h_eff: np.ndarray):
        lam, v = np.linalg.eig(h_eff)
        vinv = np.linalg.inv(v)
        cond = np.linalg.norm(v, 2) * np.linalg.norm(vinv, 2)
        if cond > 1e9:
            raise np.linalg.LinAlgError(
                f"effective Hamiltonian eigenbasis is ill-conditioned ({cond:.2e})")
        self.lam = lam
        self.v = v
        self.vinv = vinv

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        return self.vinv @ psi

    def state(self, w: np.ndarray, t: float) -> np.ndarray:
        return self.v @ (np.exp(-1j * self.lam * t) * w)

    def survival(self, w: np.ndarray, t: float) -> float:
        psi = self.state(w, t)
        return float(np.real(psi.conj() @ psi))


class _SteppedPropagator:
    """Fallback: fixed-step exp(-i H_eff h) powers plus short expm corrections."""

    def __init__(self, h_eff: np.ndarray, h: float):
        self.h_eff = h_eff
        self.h = h
        self.u = expm(-1j * h_eff * h)

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        return psi

    def state(self, w: np.ndarray, t: float) -> np.ndarray:
        n_full, frac = divmod(t, self.h)
        psi = w
        for _ in range(int(n_full)):
            psi = self.u @ psi
        if frac > 0:
            psi = expm(-1j * self.h_eff * frac) @ psi
        return psi

    def survival(self, w: np.ndarray, t: float) -> float:
        psi = self.state(w, t)
        return float(np.real(psi.conj() @ psi))


def _sample_pure_initial(initial, dims: HilbertDims, rng) -> np.ndarray:
    """Draw a pure state from the eigen-ensemble of a density matrix."""
    from omjump.lindblad import DensityMatrix

    if isinstance(initial, DensityMatrix):
        vals, vecs = np.linalg.eigh((initial.matrix + initial.matrix.conj().T) / 2)
        probs = np.clip(np.real(vals), 0.0, None)
        probs = probs / probs.sum()
        k = rng.choice(len(probs), p=probs)
        return vecs[:, k].astype(complex)
    psi = np.zeros(dims.dim, dtype=complex)
    psi[0] = 1.0
    return psi


def sample_detection_records(p: SystemParams, h: sp.spmatrix, dims: HilbertDims,
                             initial="steady", *, seed: int, t_total: float,
                             n_traj: int = 1, burn_in: float = 0.0,
                             monitor: str = "output",
                             trace_stride: float | None = None,
                             post_jump_tau: np.ndarray | None = None,
                             ) -> list[TrajectoryRecord]:
    """Stationary click records from the all-channel wave-function unraveling.

    Between jumps the unnormalized state evolves under the non-Hermitian
    H_eff = H - (i/2) sum_c r_c C_c' C_c; its squared norm is the no-jump
    survival probability, so waiting times are found by root-finding the norm
    against a uniform draw (exact, no time-step error).  Jumps collapse into a
    channel with probability proportional to r_c ||C_c psi||^2.  Output-mirror
    jumps are recorded as detections, thinned by the efficiency eta
    (``monitor="output"``); ``monitor="all"`` records both mirrors unthinned,
    which realizes the ideal all-channel Fano factor F_all.

    The click record restricted to the detector is distribution-identical to
    the conditional density-matrix unraveling of ``run_trajectory``.
    """
    if monitor not in ("output", "all"):
        raise ValueError("monitor must be 'output' or 'all'")
    if t_total <= 0:
        raise ValueError("t_total must be positive")

    a = build_annihilation(dims, "photon")
    b = build_annihilation(dims, "phonon")
    channels = [("kappa_in", p.kappa_in, a),
                ("kappa_out", p.kappa_out, a),
                ("mech_down", p.gamma_m * (p.n_th + 1.0), b),
                ("mech_up", p.gamma_m * p.n_th, b.conj().T.tocsr())]
    channels = [(lbl, r, op) for (lbl, r, op) in channels if r > 0.0]
    if not any(lbl == "kappa_out" for lbl, _, _ in channels):
        raise ValueError("the output channel has zero rate; nothing to detect")

    decay = sum(r * (op.conj().T @ op) for _, r, op in channels)
    h_eff = np.asarray(h.todense(), dtype=complex) - 0.5j * np.asarray(decay.todense())
    try:
        prop = _EigenPropagator(h_eff)
    except np.linalg.LinAlgError as exc:
        warnings.warn(f"eigen propagation unavailable ({exc}); using stepped fallback",
                      RuntimeWarning, stacklevel=2)
        prop = _SteppedPropagator(h_eff, h=min(0.05 / p.omega_m, 0.2 / p.kappa))

    if initial == "steady":
        from omjump import lindblad
        liou = lindblad.assemble_liouvillian(p, h, dims)
        initial = lindblad.steady_state(liou)

    n_a_diag = np.real((a.conj().T @ a).diagonal())
    n_b_diag = np.real((b.conj().T @ b).diagonal())

    rates = np.array([r for _, r, _ in channels])
    labels = [lbl for lbl, _, _ in channels]
    ops = [op for _, _, op in channels]

    seeds = derive_seeds(seed, n_traj)
    records = []
    for idx in range(n_traj):
        records.append(_one_mcwf_record(
            p, dims, prop, rates, labels, ops, n_a_diag, n_b_diag,
            initial, seeds[idx], t_total, burn_in, monitor,
            trace_stride, post_jump_tau))
    return records


def _one_mcwf_record(p, dims, prop, rates, labels, ops, n_a_diag, n_b_diag,
                     initial, seed, t_total, burn_in, monitor,
                     trace_stride, post_jump_tau) -> TrajectoryRecord:
    rng = np.random.Generator(np.random.Philox(seed))
    psi = _sample_pure_initial(initial, dims, rng)
    psi = psi / np.linalg.norm(psi)

    t_end = burn_in + t_total
    t_seg = 0.0
    guess = 1.0 / p.omega_m

    detections: list[float] = []
    prejump: list[float] = []
    times, tr_na, tr_nb, tr_x = [], [], [], []
    b_op = ops[labels.index("mech_down")] if "mech_down" in labels \
        else build_annihilation(dims, "phonon")
    windows = _PendingWindows(post_jump_tau) if post_jump_tau is not None else None
    next_sample = burn_in if trace_stride is not None else np.inf

    n_arr, n_b_arr = dims.occupations()
    top_photon = n_arr == dims.n_photon_max
    top_phonon = n_b_arr == dims.n_phonon_max
    tail_sums = np.zeros(2)
    tail_count = 0

    def expectations(vec: np.ndarray):
        norm2 = float(np.real(vec.conj() @ vec))
        pops = np.abs(vec) ** 2 / norm2
        x_val = 2.0 * float(np.real(vec.conj() @ (b_op @ vec))) / norm2
        return float(pops @ n_a_diag), float(pops @ n_b_diag), x_val, pops

    while t_seg < t_end:
        w = prop.coefficients(psi)
        t_rem = t_end - t_seg
        u = max(rng.uniform(), 1e-300)

        surv_rem = prop.survival(w, t_rem)
        if surv_rem > u:
            wait = None           # no jump before the record ends
        else:
            t_hi = min(guess, t_rem)
            t_lo = 0.0
            while prop.survival(w, t_hi) > u:
                t_lo = t_hi
                t_hi = min(2.0 * t_hi, t_rem)
            wait = brentq(lambda t: prop.survival(w, t) - u, t_lo, t_hi,
                          xtol=max(1e-12, 1e-10 * t_hi), rtol=8.9e-16)
            guess = 0.5 * guess + 0.5 * max(wait, 1e-6)

        horizon = t_rem if wait is None else wait

        # sampled traces and pending post-click window points in this segment
        while next_sample <= t_seg + horizon + 1e-15:
            vec = prop.state(w, next_sample - t_seg)
            na, nb, xv, pops = expectations(vec)
            times.append(next_sample - burn_in)
            tr_na.append(na)
            tr_nb.append(nb)
            tr_x.append(xv)
            tail_sums += (pops[top_photon].sum(), pops[top_phonon].sum())
            tail_count += 1
            next_sample += trace_stride
        if windows is not None:
            for row, col, t_due in windows.due(t_seg + horizon):
                vec = prop.state(w, max(t_due - t_seg, 0.0))
                windows.rows[row][col] = expectations(vec)[0]

        if wait is None:
            break

        t_jump = t_seg + wait
        psi_pre = prop.state(w, wait)
        weights = rates * np.array([np.linalg.norm(op @ psi_pre) ** 2 for op in ops])
        total = weights.sum()
        if total <= 0.0:
            raise SamplingPathologyError("jump drawn on a state no channel can act on")
        k = int(np.searchsorted(np.cumsum(weights) / total, rng.uniform(), side="right"))
        k = min(k, len(ops) - 1)

        detected = False
        if labels[k] == "kappa_out":
            if monitor == "all":
                detected = True
            elif p.eta >= 1.0 or rng.uniform() < p.eta:
                detected = True
        elif labels[k] == "kappa_in" and monitor == "all":
            detected = True

        if detected and t_jump >= burn_in:
            na_pre = expectations(psi_pre)[0]
            detections.append(t_jump - burn_in)
            prejump.append(na_pre)
            if windows is not None:
                windows.open(t_jump + 1e-12)

        psi = ops[k] @ psi_pre
        psi = psi / np.linalg.norm(psi)
        t_seg = t_jump

    record = TrajectoryRecord(
        jump_times=np.asarray(detections),
        times=np.asarray(times),
        n_photon=np.asarray(tr_na),
        n_phonon=np.asarray(tr_nb),
        x_mech=np.asarray(tr_x),
        seed=seed,
        t_total=t_total,
        engine="mcwf",
        dt=None,
        prejump_nbar=np.asarray(prejump) if prejump else None,
        post_jump_tau=None if windows is None else windows.tau,
        post_jump_nbar=None if windows is None else windows.harvest(),
        tail_photon=tail_sums[0] / tail_count if tail_count else None,
        tail_phonon=tail_sums[1] / tail_count if tail_count else None,
        config={"t_total": t_total, "burn_in": burn_in, "monitor": monitor},
    )
    record.validate()
    return record
