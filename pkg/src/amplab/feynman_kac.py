"""Path integral estimator dual to the direct solver.

The solution at (x, T) equals the average of exp(g * integral_0^T
S(x(tau), tau)^2 dtau) over Brownian paths pinned to x at time T.  Paths
are sampled backward: x(tau) = x + B(T - tau) with B starting at zero, so
x(T) = x exactly and x(0) spreads with variance T.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError
from .rng import substream

_LOG_OVERFLOW = 700.0


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    endpoint: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class FkEstimate:
    """Monte Carlo estimate of the pinned-path exponential average.

    When log_mode is set the linear ``mean``/``se`` may be inf; ``log_mean``
    stays finite and is the authoritative value.
    """

    mean: float
    se: float
    log_mean: float
    log_mode: bool
    n_paths: int
    n_steps: int
    g: float
    x: float
    horizon: float
    seed: int


def sample_backward_path(x: float, horizon: float, n_steps: int, seed: int = 0) -> PathSample:
    """One pinned path on a uniform grid of n_steps intervals."""
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    rng = substream(seed, 0xFB)
    dt = horizon / n_steps
    b = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n_steps) * np.sqrt(dt))])
    times = dt * np.arange(n_steps + 1)
    positions = x + b[::-1]
    return PathSample(times=times, positions=positions, endpoint=x, seed=seed)


def path_action(fld, path: PathSample) -> float:
    """Trapezoid of S(x(tau), tau)^2 along the path."""
    s = np.asarray(fld(path.positions, path.times), dtype=float)
    return float(np.trapz(s**2, path.times))


def path_actions(
    fld,
    x: float,
    horizon: float,
    n_paths: int,
    n_steps: int = 1024,
    seed: int = 0,
    chunk: int = 512,
) -> np.ndarray:
    """Actions of n_paths independent pinned paths (vectorized in chunks)."""
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    dt = horizon / n_steps
    times = dt * np.arange(n_steps + 1)
    weights = np.full(n_steps + 1, dt)
    weights[0] = weights[-1] = 0.5 * dt
    out = np.empty(n_paths)
    for ci, lo in enumerate(range(0, n_paths, chunk)):
        hi = min(lo + chunk, n_paths)
        rng = substream(seed, 0xFB, ci)
        incr = rng.standard_normal((hi - lo, n_steps)) * np.sqrt(dt)
        b = np.concatenate([np.zeros((hi - lo, 1)), np.cumsum(incr, axis=1)], axis=1)
        pos = x + b[:, ::-1]
        acc = np.zeros(hi - lo)
        for j in range(n_steps + 1):
            sj = np.asarray(fld(pos[:, j], times[j]), dtype=float)
            acc += weights[j] * sj**2
        out[lo:hi] = acc
    return out


def fk_estimate(
    fld,
    g: float,
    x: float,
    horizon: float,
    n_paths: int = 20_000,
    n_steps: int = 1024,
    seed: int = 0,
    actions: np.ndarray | None = None,
) -> FkEstimate:
    """Average exp(g * action) over pinned paths.

    Passing precomputed ``actions`` reuses one path ensemble across several
    couplings (common random numbers), which makes g-sweeps monotone by
    construction.
    """
    if actions is None:
        actions = path_actions(fld, x, horizon, n_paths, n_steps=n_steps, seed=seed)
    n = actions.size
    expo = g * actions
    log_mean = float(logsumexp(expo) - np.log(n))
    if float(expo.max(initial=-np.inf)) > _LOG_OVERFLOW:
        return FkEstimate(np.inf, np.inf, log_mean, True, n, n_steps, g, x, horizon, seed)
    vals = np.exp(expo)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return FkEstimate(mean, se, log_mean, False, n, n_steps, g, x, horizon, seed)
