"""Multifractal detrended fluctuation analysis.

A real series x_t is integrated into the profile X_t = sum(x - <x>), the
profile is split into windows of size n (one pass from the head and one from
the tail so no samples are dropped), a least-squares polynomial trend is
removed per window, and the q-order moments of the per-window rms residuals
give the fluctuation function F_q(n).  Power-law scaling F_q(n) ~ n^{H(q)}
defines the generalized Hurst exponents, from which the mass exponents
tau(q) = q H(q) - 1 and the singularity spectrum D(q) = q tau'(q) - tau(q)
follow.  q = 2 is ordinary DFA.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from cylwave.errors import DomainError

__all__ = [
    "Signal",
    "MdfaResult",
    "profile",
    "fluctuation",
    "hurst",
    "mass_exponent",
    "singularity_spectrum",
    "mdfa",
    "default_window_sizes",
    "DEFAULT_Q_GRID",
]

DEFAULT_Q_GRID = np.linspace(-5.0, 5.0, 41)


@dataclass(frozen=True)
class Signal:
    """A real series on a uniform grid, at least 64 finite samples."""

    samples: np.ndarray
    meta: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if x.size < 64:
            raise DomainError(f"signal needs >= 64 samples, got {x.size}")
        if not np.all(np.isfinite(x)):
            raise DomainError("signal samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class MdfaResult:
    """Fluctuation matrix and the exponent triple derived from it.

    Fq has shape (len(q_grid), len(window_sizes)).  flagged marks q points
    whose fluctuations degenerated (non-positive / non-finite); their H is
    NaN.  alpha/D are filled by singularity_spectrum, tau by mass_exponent.
    """

    q_grid: np.ndarray
    window_sizes: np.ndarray
    Fq: np.ndarray
    H: np.ndarray | None = None
    r2: np.ndarray | None = None
    tau: np.ndarray | None = None
    alpha: np.ndarray | None = None
    D: np.ndarray | None = None
    flagged: np.ndarray | None = None
    nonconcave: np.ndarray | None = None


def profile(signal: Signal) -> np.ndarray:
    """Cumulative sum of the mean-subtracted samples; always ends at zero."""
    x = signal.samples
    return np.cumsum(x - x.mean())


def _window_variances(prof: np.ndarray, n: int, detrend_order: int) -> np.ndarray:
    """Per-window mean squared detrended residuals, head pass plus tail pass."""
    N = prof.size
    if not 4 <= n <= N // 4:
        raise DomainError(f"window size {n} outside [4, N/4] for N = {N}")
    if detrend_order < 1:
        raise DomainError("detrend_order must be >= 1")
    ns = N // n
    head = prof[: ns * n].reshape(ns, n)
    tail = prof[N - ns * n :].reshape(ns, n)
    t = np.arange(n, dtype=float)
    v = np.vander(t, detrend_order + 1)
    # one orthogonal projector serves every window (shared abscissa)
    q_mat, _ = np.linalg.qr(v)
    both = np.concatenate([head, tail])
    resid = both - (both @ q_mat) @ q_mat.T
    return np.mean(resid ** 2, axis=1)


def fluctuation(prof: np.ndarray, q: float, n: int, detrend_order: int = 1) -> float:
    """q-order fluctuation F_q(n); q = 0 by the logarithmic-average limit."""
    var = _window_variances(np.asarray(prof, dtype=float).ravel(), n, detrend_order)
    if q == 0:
        good = var > 0
        if not np.any(good):
            return 0.0
        return float(np.exp(0.5 * np.mean(np.log(var[good]))))
    return float(np.mean(var ** (q / 2.0)) ** (1.0 / q))


def default_window_sizes(n_samples: int, num: int = 20) -> np.ndarray:
    """20 log-spaced window sizes from 16 to N/4 (unique integers)."""
    hi = n_samples // 4
    if hi < 16:
        raise DomainError("series too short for the default window grid")
    return np.unique(np.round(np.geomspace(16, hi, num)).astype(int))


def hurst(
    signal: Signal,
    q_grid=None,
    window_sizes=None,
    detrend_order: int = 1,
) -> MdfaResult:
    """Generalized Hurst exponents from log-log slopes of F_q(n)."""
    q_grid = DEFAULT_Q_GRID.copy() if q_grid is None else np.asarray(q_grid, dtype=float)
    if window_sizes is None:
        window_sizes = default_window_sizes(len(signal))
    window_sizes = np.asarray(window_sizes, dtype=int)
    if window_sizes.size < 2 or window_sizes.max() < 10 * window_sizes.min():
        raise DomainError("window sizes must span at least one decade")

    prof = profile(signal)
    variances = [
        _window_variances(prof, int(n), detrend_order) for n in window_sizes
    ]
    Fq = np.empty((q_grid.size, window_sizes.size))
    for iq, q in enumerate(q_grid):
        for jn, var in enumerate(variances):
            if q == 0:
                good = var > 0
                Fq[iq, jn] = (
                    np.exp(0.5 * np.mean(np.log(var[good]))) if np.any(good) else 0.0
                )
            else:
                Fq[iq, jn] = np.mean(var ** (q / 2.0)) ** (1.0 / q)

    H = np.full(q_grid.size, np.nan)
    r2 = np.full(q_grid.size, np.nan)
    flagged = np.zeros(q_grid.size, dtype=bool)
    log_n = np.log(window_sizes.astype(float))
    for iq in range(q_grid.size):
        f = Fq[iq]
        if np.any(~np.isfinite(f)) or np.any(f <= 0):
            flagged[iq] = True
            continue
        log_f = np.log(f)
        slope, intercept = np.polyfit(log_n, log_f, 1)
        H[iq] = slope
        fit = slope * log_n + intercept
        ss_res = np.sum((log_f - fit) ** 2)
        ss_tot = np.sum((log_f - log_f.mean()) ** 2)
        r2[iq] = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return MdfaResult(
        q_grid=q_grid, window_sizes=window_sizes, Fq=Fq, H=H, r2=r2, flagged=flagged
    )


def mass_exponent(result: MdfaResult) -> MdfaResult:
    """tau(q) = q H(q) - 1, pointwise."""
    if result.H is None:
        raise DomainError("mass_exponent requires H; run hurst first")
    return replace(result, tau=result.q_grid * result.H - 1.0)


def singularity_spectrum(result: MdfaResult) -> MdfaResult:
    """Legendre transform: alpha = tau', D = q alpha - tau (centered differences).

    nonconcave marks interior q points where the discrete second difference
    of tau is positive beyond fit noise; the spectrum there is unphysical.
    """
    if result.tau is None:
        raise DomainError("singularity_spectrum requires tau; run mass_exponent first")
    q, tau = result.q_grid, result.tau
    if q.size < 3:
        raise DomainError("q grid too coarse for centered differences")
    alpha = np.gradient(tau, q)
    D = q * alpha - tau
    second = np.full(q.size, np.nan)
    second[1:-1] = tau[2:] - 2 * tau[1:-1] + tau[:-2]
    nonconcave = second > 0.02
    return replace(result, alpha=alpha, D=D, nonconcave=nonconcave)


def mdfa(signal: Signal, q_grid=None, window_sizes=None, detrend_order: int = 1) -> MdfaResult:
    """Full pipeline: Hurst exponents, mass exponents, singularity spectrum."""
    return singularity_spectrum(mass_exponent(hurst(signal, q_grid, window_sizes, detrend_order)))
