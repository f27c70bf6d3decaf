"""Full counting statistics of the detected photon stream.

From the click records of the trajectory engines this module builds
p(N, T_S), the probability of N detections in a sampling window T_S, and its
moments: the Fano factor F_c(T_S) = (<N^2> - <N>^2)/<N>, the normalized third
central moment, and the long-time plateau F_c(inf) whose product with the
detection rate is the zero-frequency shot noise S_II[0].

Two independent routes to the Fano factor are kept deliberately separate:
window counting over trajectory records, and the correlation-function
integral

    F_c(T_S) = 1 + Ndot int_{-T_S}^{T_S} (g2(|tau|) - 1) (1 - |tau|/T_S) dtau

evaluated from the master-equation g2(tau); their agreement is the central
cross-validation of the whole pipeline.  Finite detector efficiency is undone
with F_all = 1 + (F_c - 1) kappa / (eta kappa_O).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from omjump.lindblad import G2Curve
from omjump.operators import SystemParams

__all__ = [
    "CountingStatistics",
    "FanoCurve",
    "PlateauEstimate",
    "InsufficientWindowsError",
    "GridCoverageError",
    "counting_statistics",
    "fano_curve",
    "fano_infinity",
    "fano_from_g2",
    "efficiency_correction",
    "measured_from_all",
    "shot_noise_zero_freq",
    "mean_detection_rate",
]


class InsufficientWindowsError(ValueError):
    """Too few counting windows for meaningful statistics."""


class GridCoverageError(ValueError):
    """The g2 delay grid does not cover the requested sampling window."""


@dataclass
class CountingStatistics:
    """Histogram and moments of the detected photon number in windows of length T_S."""

    t_s: float
    probabilities: np.ndarray      # p(N) for N = 0 .. N_max
    mean: float
    fano: float
    fano_err: float
    third_central: float           # <(N - <N>)^3> / <N>
    third_err: float
    window_count: int
    windowing: str

    def moment(self, m: int) -> float:
        n = np.arange(len(self.probabilities))
        return float(np.sum(self.probabilities * n.astype(float) ** m))


@dataclass
class FanoCurve:
    """Fano factor versus sampling window, with statistical errors and per-point flags."""

    t_s: np.ndarray
    fano: np.ndarray
    err: np.ndarray
    mean: np.ndarray
    third: np.ndarray
    third_err: np.ndarray
    ok: np.ndarray
    messages: list

    def good(self) -> "FanoCurve":
        m = self.ok
        return FanoCurve(self.t_s[m], self.fano[m], self.err[m], self.mean[m],
                         self.third[m], self.third_err[m], self.ok[m],
                         [s for s, g in zip(self.messages, self.ok) if g])


@dataclass
class PlateauEstimate:
    value: float
    err: float
    drift: float
    converged: bool
    t_s_used: np.ndarray
    third: float = float("nan")
    third_err: float = float("nan")


def _window_counts(record, t_s: float, windowing: str,
                   stride: float | None) -> np.ndarray:
    """Detection counts per window for one record."""
    if windowing == "contiguous":
        n_win = int(np.floor(record.t_total / t_s + 1e-9))
        starts = np.arange(n_win) * t_s
    elif windowing == "overlapping":
        step = stride if stride is not None else t_s / 4.0
        starts = np.arange(0.0, record.t_total - t_s + 1e-9, step)
    else:
        raise ValueError("windowing must be 'contiguous' or 'overlapping'")
    if len(starts) == 0:
        return np.zeros(0, dtype=int)
    jt = record.jump_times
    lo = np.searchsorted(jt, starts, side="left")
    hi = np.searchsorted(jt, starts + t_s, side="left")
    return (hi - lo).astype(int)


def _count_sums(counts: np.ndarray) -> np.ndarray:
    """Sufficient statistics (M, sum n, sum n^2, sum n^3) of one record's windows."""
    n = counts.astype(float)
    return np.array([len(n), n.sum(), (n ** 2).sum(), (n ** 3).sum()])


def _moments_from_sums(sums: np.ndarray) -> tuple[float, float, float]:
    m, s1, s2, s3 = sums
    if m < 2 or s1 <= 0:
        raise InsufficientWindowsError("no detections in any window; moments undefined")
    mean = s1 / m
    var = (s2 / m - mean ** 2) * m / (m - 1)
    third = s3 / m - 3 * mean * s2 / m + 2 * mean ** 3
    return float(mean), float(var / mean), float(third / mean)


def _bootstrap_errors(record_sums: np.ndarray, pooled_counts: np.ndarray | None,
                      n_boot: int, seed: int) -> tuple[float, float]:
    """Bootstrap std of (fano, third), resampling whole records when possible.

    Windows within one trajectory are correlated on the mechanical relaxation
    time, so resampling independent records is the honest choice; with only a
    few records this falls back to window resampling (and warns).  Records
    enter through their window-count sufficient statistics, which keeps the
    bootstrap O(n_records) per replicate even for millions of windows.
    """
    rng = np.random.default_rng(seed)
    fanos, thirds = [], []
    n_rec = record_sums.shape[0]
    if n_rec >= 10:
        for _ in range(n_boot):
            pick = rng.integers(0, n_rec, n_rec)
            try:
                _, f, t3 = _moments_from_sums(record_sums[pick].sum(axis=0))
            except InsufficientWindowsError:
                continue
            fanos.append(f)
            thirds.append(t3)
    else:
        warnings.warn("fewer than 10 records: bootstrapping windows, which can "
                      "understate errors for correlated windows", stacklevel=3)
        if pooled_counts is None or len(pooled_counts) > 2_000_000:
            return float("nan"), float("nan")
        m = len(pooled_counts)
        for _ in range(n_boot):
            sample = pooled_counts[rng.integers(0, m, m)]
            try:
                _, f, t3 = _moments_from_sums(_count_sums(sample))
            except InsufficientWindowsError:
                continue
            fanos.append(f)
            thirds.append(t3)
    if len(fanos) < 2:
        return float("nan"), float("nan")
    return float(np.std(fanos, ddof=1)), float(np.std(thirds, ddof=1))


def counting_statistics(records, t_s: float, windowing: str = "contiguous",
                        stride: float | None = None, n_boot: int = 200,
                        boot_seed: int = 1234) -> CountingStatistics:
    """p(N, T_S) and its moments pooled over all records.

    Jump times from different trajectories are independent stationary
    realizations; windows never straddle a trajectory boundary.  Fewer than
    10 windows is refused; fewer than 100 only warns (error control degrades).
    The bootstrap error bar is trustworthy only where multi-click windows are
    populated (expected pair count across the data >> 1); for strongly
    anti-bunched light at very short windows the Fano estimator degenerates to
    1 - <N> and the resampled spread understates the pair-statistics noise.
    """
    if t_s <= 0:
        raise ValueError("t_s must be positive")
    if not records:
        raise ValueError("no records given")
    hist = np.zeros(1)
    sums = []
    total_windows = 0
    few_records = len(records) < 10
    keep_pooled = few_records and sum(r.t_total / t_s for r in records) < 2_000_000
    pooled = [] if keep_pooled else None
    for r in records:
        counts = _window_counts(r, t_s, windowing, stride)
        total_windows += len(counts)
        sums.append(_count_sums(counts))
        if len(counts):
            binc = np.bincount(counts)
            if len(binc) > len(hist):
                hist = np.concatenate([hist, np.zeros(len(binc) - len(hist))])
            hist[:len(binc)] += binc
        if pooled is not None:
            pooled.append(counts)
    if total_windows < 10:
        raise InsufficientWindowsError(
            f"{total_windows} windows of length {t_s} from total time "
            f"{sum(r.t_total for r in records):g}; need at least 10")
    if total_windows < 100:
        warnings.warn(f"only {total_windows} windows; statistical error control is weak",
                      stacklevel=2)
    record_sums = np.vstack(sums)
    mean, fano, third = _moments_from_sums(record_sums.sum(axis=0))
    fano_err, third_err = _bootstrap_errors(
        record_sums, np.concatenate(pooled) if pooled is not None else None,
        n_boot, boot_seed)
    return CountingStatistics(t_s=t_s, probabilities=hist / total_windows,
                              mean=mean, fano=fano,
                              fano_err=fano_err, third_central=third,
                              third_err=third_err, window_count=total_windows,
                              windowing=windowing)


def fano_curve(records, t_s_grid, windowing: str = "contiguous",
               stride: float | None = None, n_boot: int = 200,
               boot_seed: int = 1234) -> FanoCurve:
    """F_c(T_S) over a grid; per-point failures are flagged, the curve is still returned."""
    t_s_grid = np.asarray(t_s_grid, dtype=float)
    n = len(t_s_grid)
    fano = np.full(n, np.nan)
    err = np.full(n, np.nan)
    mean = np.full(n, np.nan)
    third = np.full(n, np.nan)
    third_err = np.full(n, np.nan)
    ok = np.zeros(n, dtype=bool)
    messages = [""] * n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, t_s in enumerate(t_s_grid):
            try:
                st = counting_statistics(records, t_s, windowing, stride,
                                         n_boot, boot_seed)
            except (InsufficientWindowsError, ValueError) as exc:
                messages[i] = str(exc)
                continue
            fano[i], err[i], mean[i] = st.fano, st.fano_err, st.mean
            third[i], third_err[i] = st.third_central, st.third_err
            ok[i] = np.isfinite(st.fano_err)
    return FanoCurve(t_s=t_s_grid, fano=fano, err=err, mean=mean, third=third,
                     third_err=third_err, ok=ok, messages=messages)


def default_t_s_grid(p: SystemParams, n_points: int = 24) -> np.ndarray:
    """Log grid spanning at least [0.1/kappa, 10/Gamma_M]."""
    hi = 10.0 / p.gamma_m if p.gamma_m > 0 else 1e4 / p.omega_m
    return np.geomspace(0.1 / p.kappa, hi, n_points)


def fano_infinity(records, t_s_grid, windowing: str = "contiguous",
                  n_boot: int = 200, boot_seed: int = 4321) -> PlateauEstimate:
    """Long-time Fano factor extrapolated from the largest sampling windows.

    The triangular kernel of the correlation integral makes F_c approach its
    limit with a 1/T_S tail, so the grid points are fitted to
    F(T_S) = F_inf - c/T_S; the reported value is F_inf and `drift` is the
    remaining tail c/T_max at the largest window.  Value and error come from a
    record-level bootstrap of the whole fit (the same records enter every
    T_S, so per-point errors are strongly correlated).  The estimate counts
    as converged when the remaining tail is within twice its uncertainty.
    The third central moment is averaged over the grid without extrapolation.
    """
    t_s_grid = np.asarray(t_s_grid, dtype=float)
    curve = fano_curve(records, t_s_grid, windowing=windowing, n_boot=50,
                       boot_seed=boot_seed)
    good = curve.ok
    if good.sum() < 2:
        raise InsufficientWindowsError("fewer than two usable plateau points")
    ts = t_s_grid[good]
    weights = 1.0 / np.where(curve.err[good] > 0, curve.err[good], np.inf) ** 2
    if not np.any(weights > 0):
        weights = np.ones_like(ts)
    design = np.vstack([np.ones_like(ts), -1.0 / ts]).T * np.sqrt(weights)[:, None]

    sums = np.stack([[_count_sums(_window_counts(r, t_s, windowing, None))
                      for r in records] for t_s in ts])   # (n_ts, n_rec, 4)

    def fit_of(indices) -> tuple[float, float, float]:
        fs, t3s = [], []
        for k in range(len(ts)):
            try:
                _, f, t3 = _moments_from_sums(sums[k, indices].sum(axis=0))
            except InsufficientWindowsError:
                return np.nan, np.nan, np.nan
            fs.append(f)
            t3s.append(t3)
        fs = np.asarray(fs)
        if len(ts) >= 3:
            coef, *_ = np.linalg.lstsq(design, fs * np.sqrt(weights), rcond=None)
            f_inf, tail = float(coef[0]), float(coef[1])
        else:
            f_inf, tail = float(fs[-1]), 0.0
        return f_inf, tail / ts[-1], float(np.mean(t3s))

    value, drift, third = fit_of(np.arange(len(records)))
    rng = np.random.default_rng(boot_seed)
    reps_f, reps_t = [], []
    for _ in range(n_boot):
        pick = rng.integers(0, len(records), len(records))
        f, _, t3 = fit_of(pick)
        if np.isfinite(f):
            reps_f.append(f)
            reps_t.append(t3)
    err = float(np.std(reps_f, ddof=1)) if len(reps_f) > 1 else float("nan")
    third_err = float(np.std(reps_t, ddof=1)) if len(reps_t) > 1 else float("nan")

    converged = bool(abs(drift) <= 2.0 * max(err, float(np.nanmedian(curve.err[good]))))
    return PlateauEstimate(value=value, err=err, drift=drift, converged=converged,
                           t_s_used=ts, third=third, third_err=third_err)


def fano_from_g2(g2: G2Curve, rate: float, t_s: float,
                 tol: float | None = None, return_error: bool = False):
    """Master-equation Fano factor from Eq.-(7)-type quadrature.

    Integrates (g2(|tau|) - 1)(1 - |tau|/T_S) over [-T_S, T_S] using the exact
    integral of the piecewise-linear interpolant of the sampled g2.  The
    quadrature error is estimated by dropping every other sample; with `tol`
    set, an estimate above it raises GridCoverageError.
    """
    delays = g2.delays
    values = g2.values
    if t_s <= 0:
        raise ValueError("t_s must be positive")
    if delays[0] > 1e-9 or delays[-1] < t_s:
        raise GridCoverageError(
            f"g2 grid [{delays[0]:g}, {delays[-1]:g}] does not cover [0, {t_s:g}]")

    def integral(d: np.ndarray, v: np.ndarray) -> float:
        # 2 * int_0^T (g2 - 1)(1 - tau/T) dtau with linear g2 between samples
        if d[-1] > t_s:
            k = np.searchsorted(d, t_s)
            frac = (t_s - d[k - 1]) / (d[k] - d[k - 1])
            v_end = v[k - 1] + frac * (v[k] - v[k - 1])
            d = np.concatenate([d[:k], [t_s]])
            v = np.concatenate([v[:k], [v_end]])
        total = 0.0
        for i in range(len(d) - 1):
            t0, t1 = d[i], d[i + 1]
            g0, g1 = v[i] - 1.0, v[i + 1] - 1.0
            h = t1 - t0
            if h <= 0:
                continue
            c1 = (g1 - g0) / h
            c0 = g0 - c1 * t0
            # int (c0 + c1 t)(1 - t/T) dt over [t0, t1]
            term = (c0 * (t1 - t0)
                    + (c1 - c0 / t_s) * (t1 ** 2 - t0 ** 2) / 2.0
                    - (c1 / t_s) * (t1 ** 3 - t0 ** 3) / 3.0)
            total += term
        return 2.0 * total

    full = integral(delays, values)
    keep = np.unique(np.concatenate([np.arange(0, len(delays), 2),
                                     [len(delays) - 1]]))
    coarse = integral(delays[keep], values[keep])
    quad_err = abs(rate * (full - coarse))
    if tol is not None and quad_err > tol:
        raise GridCoverageError(
            f"quadrature error estimate {quad_err:.3e} exceeds tolerance {tol:.1e}; "
            "refine the g2 delay grid")
    value = 1.0 + rate * full
    if return_error:
        return value, quad_err
    return value


def efficiency_correction(f_measured: float, p: SystemParams) -> float:
    """Invert the efficiency relation: the Fano factor of the all-channel ideal detector.

    F_all = 1 + (F_measured - 1) kappa / (eta kappa_O)
    """
    eff = p.eta * p.kappa_out
    if eff <= 0:
        raise ValueError("eta * kappa_out vanishes; correction undefined")
    return 1.0 + (f_measured - 1.0) * p.kappa / eff


def measured_from_all(f_all: float, p: SystemParams) -> float:
    """Forward direction: Fano factor seen by a detector of efficiency eta on the output mirror."""
    eff = p.eta * p.kappa_out
    if eff <= 0:
        raise ValueError("eta * kappa_out vanishes; correction undefined")
    return 1.0 + (f_all - 1.0) * eff / p.kappa


def shot_noise_zero_freq(f_inf: float, rate: float) -> float:
    """Zero-frequency shot noise power S_II[0] = Ndot * F_c(inf)."""
    return rate * f_inf


def mean_detection_rate(records) -> tuple[float, float]:
    """Mean click rate pooled over records, with a record-level standard error."""
    rates = np.array([len(r.jump_times) / r.t_total for r in records])
    err = rates.std(ddof=1) / np.sqrt(len(rates)) if len(rates) > 1 else float("nan")
    return float(rates.mean()), float(err)
