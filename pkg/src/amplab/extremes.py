"""Extreme-value laws: Brownian range, field maxima, and moment bounds.

The sup of |B| over [0, T] has the exact density

    p(r) = (pi T / r^3) sum_{k>=0} (-1)^k (2k+1) exp(-(2k+1)^2 pi^2 T / (8 r^2))

whose dual form under Poisson summation,

    p(r) = 4 sqrt(2/(pi T)) sum_{m>=1} (-1)^(m+1) (m-1/2) exp(-2 r^2 (m-1/2)^2 / T),

converges fast for large r.  Both are alternating with eventually decreasing
terms, so truncation errors are bounded by the first omitted term; the
crossover r* = sqrt(pi T / 2) makes the two branches agree to near machine
precision.

The sup of S^2 over a window [-r, r] x [0, T] of a smooth unit-variance
Gaussian field obeys, for large thresholds m,

    P(sup S^2 > m) ~ sqrt(2 |L|) / pi^(3/2) * r T sqrt(m) exp(-m/2),

with |L| the determinant of the second spectral moment matrix.  Weighting
the window half-width by the Brownian range density gives the tail constant
used in the fractional moment bound.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc, gamma as gamma_fn, gammaincc

from .errors import DomainError, NumericalError, ParameterError
from .field_synthesis import centered_spec, synthesize_grid
from .rng import substream
from .spectral_model import LambdaMatrix, lambda_matrix

SERIES_TOL = 1e-14
_MAX_TERMS = 10_000_000


def crossover_radius(horizon: float) -> float:
    """Radius where the two series branches swap roles."""
    return float(np.sqrt(np.pi * horizon / 2.0))


def _check_rt(r, horizon):
    if np.any(np.asarray(r) <= 0):
        raise ParameterError("radius must be positive")
    if horizon <= 0:
        raise ParameterError("horizon must be positive")


def sup_abs_density_theta(r, horizon: float = 1.0, k_max: int | None = None):
    """Image-series density of sup |B| on [0, horizon]; best at small r.

    Terms alternate; summation stops when the next term drops below
    SERIES_TOL relative to the running scale, raising k_max as needed.
    """
    _check_rt(r, horizon)
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    a = np.pi**2 * horizon / (8.0 * r**2)
    total = np.zeros_like(r)
    scale = np.zeros_like(r)
    active = np.ones(r.shape, dtype=bool)
    k = 0
    limit = k_max if k_max is not None else _MAX_TERMS
    while np.any(active):
        if k > limit:
            if k_max is not None:
                limit = _MAX_TERMS  # auto-raise past the hint
                if k > limit:
                    raise NumericalError("theta series failed to converge")
            else:
                raise NumericalError("theta series failed to converge")
        n = 2 * k + 1
        cur = n * np.exp(-a[active] * n * n)
        term = ((-1) ** k) * cur
        total[active] += term
        scale[active] = np.maximum(scale[active], cur)
        # Terms decrease monotonically once the exponential overtakes the
        # linear factor; only then is the remainder bounded by the next term.
        # An underflowed current term counts as decreasing, else 0 < 0 spins.
        nxt = (n + 2) * np.exp(-a[active] * (n + 2) ** 2)
        decreasing = (nxt < cur) | (cur <= 1e-300)
        done = decreasing & (nxt <= SERIES_TOL * np.maximum(scale[active], 1e-300))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        k += 1
    out = (np.pi * horizon / r**3) * total
    return float(out[0]) if scalar else out


def sup_abs_density_poisson(r, horizon: float = 1.0, m_max: int | None = None):
    """Dual (Poisson-resummed) series for the same density; best at large r."""
    _check_rt(r, horizon)
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    b = 2.0 * r**2 / horizon
    total = np.zeros_like(r)
    scale = np.zeros_like(r)
    active = np.ones(r.shape, dtype=bool)
    m = 1
    limit = m_max if m_max is not None else _MAX_TERMS
    while np.any(active):
        if m > limit:
            raise NumericalError("dual series failed to converge")
        half = m - 0.5
        cur = half * np.exp(-b[active] * half * half)
        term = ((-1) ** (m + 1)) * cur
        total[active] += term
        scale[active] = np.maximum(scale[active], cur)
        nxt = (half + 1.0) * np.exp(-b[active] * (half + 1.0) ** 2)
        decreasing = (nxt < cur) | (cur <= 1e-300)
        done = decreasing & (nxt <= SERIES_TOL * np.maximum(scale[active], 1e-300))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        m += 1
    out = 4.0 * np.sqrt(2.0 / (np.pi * horizon)) * total
    return float(out[0]) if scalar else out


def sup_abs_density(r, horizon: float = 1.0):
    """Density of sup |B|, dispatching branches at the crossover radius."""
    _check_rt(r, horizon)
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    rs = crossover_radius(horizon)
    out = np.empty_like(r)
    small = r <= rs
    if np.any(small):
        out[small] = sup_abs_density_theta(r[small], horizon)
    if np.any(~small):
        out[~small] = sup_abs_density_poisson(r[~small], horizon)
    return float(out[0]) if scalar else out


def sup_abs_cdf(r, horizon: float = 1.0):
    """P(sup |B| <= r): image series at small r, erfc series at large r."""
    _check_rt(r, horizon)
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    rs = crossover_radius(horizon)
    out = np.empty_like(r)
    small = r <= rs
    if np.any(small):
        a = np.pi**2 * horizon / (8.0 * r[small] ** 2)
        tot = np.zeros(small.sum())
        k = 0
        while True:
            n = 2 * k + 1
            term = ((-1) ** k) / n * np.exp(-a * n * n)
            tot += term
            if np.all(np.abs(term) <= SERIES_TOL):
                break
            k += 1
            if k > _MAX_TERMS:
                raise NumericalError("cdf series failed to converge")
        out[small] = (4.0 / np.pi) * tot
    if np.any(~small):
        # Term-wise integral of the dual density from r to infinity.
        z = r[~small] / np.sqrt(2.0 * horizon)
        tot = np.zeros((~small).sum())
        m = 1
        while True:
            term = ((-1) ** (m + 1)) * erfc((2 * m - 1) * z)
            tot += term
            if np.all(np.abs(term) <= SERIES_TOL):
                break
            m += 1
            if m > _MAX_TERMS:
                raise NumericalError("cdf series failed to converge")
        out[~small] = 1.0 - 2.0 * tot
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def sup_abs_mean(horizon: float = 1.0) -> float:
    """E sup |B| by adaptive quadrature of r * density, split at the crossover."""
    rs = crossover_radius(horizon)
    lo, _ = integrate.quad(lambda r: r * sup_abs_density_theta(r, horizon), 0.0, rs, epsrel=1e-12, epsabs=1e-14)
    hi, _ = integrate.quad(lambda r: r * sup_abs_density_poisson(r, horizon), rs, np.inf, epsrel=1e-12, epsabs=1e-14)
    return float(lo + hi)


def brownian_sup_samples(
    n_paths: int,
    n_steps: int = 2048,
    horizon: float = 1.0,
    seed: int = 0,
    bridge: bool = True,
    chunk: int = 2048,
) -> np.ndarray:
    """Monte Carlo samples of sup |B| from discretized paths.

    With ``bridge`` set, each step's extremes are drawn from the exact
    Brownian-bridge max/min laws, removing the O(sqrt(dt)) deficit of the
    naive lattice maximum.
    """
    dt = horizon / n_steps
    out = np.empty(n_paths)
    for ci, lo in enumerate(range(0, n_paths, chunk)):
        hi = min(lo + chunk, n_paths)
        rng = substream(seed, 0xB0, ci)
        incr = rng.standard_normal((hi - lo, n_steps)) * np.sqrt(dt)
        b = np.concatenate([np.zeros((hi - lo, 1)), np.cumsum(incr, axis=1)], axis=1)
        if bridge:
            a0, a1 = b[:, :-1], b[:, 1:]
            u = rng.random((hi - lo, n_steps))
            v = rng.random((hi - lo, n_steps))
            seg_max = 0.5 * (a0 + a1 + np.sqrt((a1 - a0) ** 2 - 2.0 * dt * np.log(u)))
            seg_min = 0.5 * (a0 + a1 - np.sqrt((a1 - a0) ** 2 - 2.0 * dt * np.log(v)))
            out[lo:hi] = np.maximum(seg_max.max(axis=1), -seg_min.min(axis=1))
        else:
            out[lo:hi] = np.abs(b).max(axis=1)
    return out


# ---------------------------------------------------------------------------
# field maxima

@dataclass(frozen=True)
class TailLaw:
    """Asymptotic tail of the path-weighted field maximum.

    density(m) ~ a_const * sqrt(m) * exp(-m/2); a_const folds the horizon,
    the curvature determinant and the mean Brownian range together.
    """

    a_const: float
    horizon: float
    lam_det: float
    mean_range: float

    def density(self, m):
        m = np.asarray(m, dtype=float)
        return self.a_const * np.sqrt(m) * np.exp(-0.5 * m)


def tail_constant(horizon: float, lam: LambdaMatrix) -> TailLaw:
    """Tail amplitude (horizon / pi^(3/2)) sqrt(det/2) E sup|B|."""
    det = lam.det
    if det <= 0:
        raise DomainError(f"second-moment determinant must be positive, got {det:.3e}")
    mean_range = sup_abs_mean(horizon)
    a = horizon / np.pi**1.5 * np.sqrt(det / 2.0) * mean_range
    return TailLaw(a_const=float(a), horizon=horizon, lam_det=float(det), mean_range=mean_range)


def window_exceedance_asymptote(m, half_width: float, horizon: float, lam: LambdaMatrix):
    """P(sup over [-r, r] x [0, T] of S^2 > m), leading large-m term."""
    if lam.det <= 0:
        raise DomainError("second-moment determinant must be positive")
    m = np.asarray(m, dtype=float)
    return np.sqrt(2.0 * lam.det) / np.pi**1.5 * half_width * horizon * np.sqrt(m) * np.exp(-0.5 * m)


@dataclass(frozen=True)
class ExceedanceTable:
    m: np.ndarray
    empirical: np.ndarray
    asymptote: np.ndarray
    n_realizations: int
    half_width: float
    horizon: float

    @property
    def log_ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.empirical) - np.log(self.asymptote)


def field_max_exceedance_mc(
    density,
    half_width: float,
    horizon: float,
    m_values,
    n_realizations: int = 10_000,
    seed: int = 0,
    spacing_frac: float = 0.125,
    pad_lengths: float = 4.0,
) -> ExceedanceTable:
    """Empirical window exceedance of S^2 from lattice realizations.

    The lattice spacing is ``spacing_frac`` of a correlation length in each
    direction; the synthesis box is padded by ``pad_lengths`` correlation
    lengths on every side so the periodic wrap cannot reach the window.
    """
    lam = lambda_matrix(density)
    lx = 1.0 / np.sqrt(lam.var_x)
    lt = 1.0 / np.sqrt(lam.var_t)
    dx = spacing_frac * lx
    dt = spacing_frac * lt
    spec = centered_spec(
        2.0 * half_width + 2.0 * pad_lengths * lx,
        horizon + 2.0 * pad_lengths * lt,
        dx,
        dt,
        t0=-pad_lengths * lt,
    )
    xs = spec.x
    ts = spec.t
    in_x = np.abs(xs) <= half_width + 1e-12
    in_t = (ts >= -1e-12) & (ts <= horizon + 1e-12)
    m_values = np.sort(np.asarray(m_values, dtype=float))
    counts = np.zeros(m_values.size)
    for rindex in range(n_realizations):
        fld = synthesize_grid(density, spec, seed=(seed * 977 + rindex))
        sup2 = float((fld.values[np.ix_(in_x, in_t)] ** 2).max())
        counts += sup2 > m_values
    emp = counts / n_realizations
    asym = window_exceedance_asymptote(m_values, half_width, horizon, lam)
    return ExceedanceTable(
        m=m_values,
        empirical=emp,
        asymptote=np.asarray(asym),
        n_realizations=n_realizations,
        half_width=half_width,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# fractional moments

@dataclass(frozen=True)
class FractionalMomentBound:
    finite: bool
    value: float
    eps: float
    eps_critical: float
    split_level: float


def fractional_moment_bound(
    g: float, horizon: float, law: TailLaw, eps: float, split_level: float = 25.0
) -> FractionalMomentBound:
    """Upper bound on the eps-th moment of the amplification.

    The moment integrates exp(eps g T m) against the maximum's law; beyond
    ``split_level`` the tail density applies, below it total mass 1 is
    multiplied by the endpoint value.  Finite exactly when
    eps < 1 / (2 g horizon).
    """
    if g <= 0 or eps <= 0:
        raise ParameterError("g and eps must be positive")
    eps_c = 1.0 / (2.0 * g * horizon)
    rate = eps * g * horizon
    beta = 0.5 - rate
    if beta <= 0:
        return FractionalMomentBound(False, np.inf, eps, eps_c, split_level)
    bulk = np.exp(rate * split_level)
    tail = law.a_const * gamma_fn(1.5) * gammaincc(1.5, beta * split_level) / beta**1.5
    return FractionalMomentBound(True, float(bulk + tail), eps, eps_c, split_level)


# ---------------------------------------------------------------------------
# dual-series identity check

@dataclass(frozen=True)
class PoissonCheck:
    parameter: float
    direct_sum: complex
    dual_sum: complex
    discrepancy: float
    imag_residual: float


def _h_term(s, a):
    s = np.asarray(s, dtype=float)
    return np.exp(1j * np.pi * s) * (2.0 * s + 1.0) * np.exp(-a * (2.0 * s + 1.0) ** 2)


def _h_dual_term(q, a):
    q = np.asarray(q, dtype=float)
    return (
        0.25
        * (np.pi / a) ** 1.5
        * np.exp(1j * np.pi * (q + 1.0))
        * (q - 0.5)
        * np.exp(-np.pi**2 * (q - 0.5) ** 2 / (4.0 * a))
    )


def poisson_summation_check(a: float) -> PoissonCheck:
    """Sum both sides of the lattice identity sum h(n) = sum h_dual(m).

    Both sums run symmetrically over the integers until terms fall below
    SERIES_TOL; each is real up to pairing, so the imaginary residuals and
    the mutual discrepancy should sit at roundoff level.
    """
    if a <= 0:
        raise ParameterError("series parameter must be positive")

    def symmetric_sum(term_fn):
        total = term_fn(0, a) * 0.0
        n = 0
        while True:
            block = term_fn(np.array([n]), a) if n == 0 else term_fn(np.array([n, -n]), a)
            total = total + block.sum()
            if n > 0 and np.all(np.abs(block) <= SERIES_TOL):
                break
            n += 1
            if n > _MAX_TERMS:
                raise NumericalError("lattice sum failed to converge")
        return complex(total)

    direct = symmetric_sum(_h_term)
    dual = symmetric_sum(_h_dual_term)
    return PoissonCheck(
        parameter=a,
        direct_sum=direct,
        dual_sum=dual,
        discrepancy=abs(direct.real - dual.real),
        imag_residual=max(abs(direct.imag), abs(dual.imag)),
    )


def dual_term_by_quadrature(q: int, a: float) -> complex:
    """Fourier integral int h(s, a) e^{-2 pi i q s} ds, numerically."""
    re, _ = integrate.quad(lambda s: (_h_term(s, a) * np.exp(-2j * np.pi * q * s)).real, -np.inf, np.inf, epsabs=1e-12)
    im, _ = integrate.quad(lambda s: (_h_term(s, a) * np.exp(-2j * np.pi * q * s)).imag, -np.inf, np.inf, epsabs=1e-12)
    return complex(re, im)


def theta_series_from_lattice(r: float, horizon: float = 1.0) -> float:
    """Density reassembled from the lattice sum (pi T / 2 r^3) sum h(n, a)."""
    _check_rt(r, horizon)
    a = np.pi**2 * horizon / (8.0 * r**2)
    total = 0.0 + 0.0j
    n = 0
    while True:
        block = _h_term(np.array([n]), a) if n == 0 else _h_term(np.array([n, -n]), a)
        total += block.sum()
        if n > 0 and np.all(np.abs(block) <= SERIES_TOL):
            break
        n += 1
        if n > _MAX_TERMS:
            raise NumericalError("lattice sum failed to converge")
    return float((np.pi * horizon / (2.0 * r**3)) * total.real)
