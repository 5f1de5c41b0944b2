"""Covariance spectrum along a pinned path and the critical coupling.

Along a fixed path x(.), the Gaussian process tau -> S(x(tau), tau) has the
covariance kernel K(t, t') = C(x(t) - x(t'), t - t') on [0, T].  Its
eigenvalues mu_1 >= mu_2 >= ... >= 0 determine the exponential average over
field realizations in closed form:

    < exp(g int_0^T S(x(tau), tau)^2 dtau) > = prod_n (1 - 2 g mu_n)^(-1/2),

finite exactly when 2 g mu_1 < 1.  The kernel is discretized by the Nystrom
method on Gauss-Legendre nodes; the symmetrized matrix sqrt(w) K sqrt(w)
shares the eigenvalues of the integral operator up to quadrature error, and
its trace equals C(0,0) T = T exactly because the weights sum to T.

Maximizing mu_1 over paths pinned to x(T) = 0 yields mu_max and the critical
coupling g_c = 1 / (2 mu_max); since the search runs over a finite-dimensional
family of paths, the reported g_c is an upper bound for the true threshold.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize

from .errors import NumericalError, ParameterError
from .feynman_kac import fk_estimate
from .field_synthesis import sample_modes
from .rng import substream
from .spectral_model import CorrelationEvaluator, lambda_matrix

DEFAULT_N_QUAD = 200

# Eigenvalues may dip this far (relative to T) below zero before the
# discretized kernel is declared non-PSD.
_PSD_SLACK = 1e-10


@dataclass(frozen=True)
class PiecewisePath:
    """Piecewise-linear path on [0, T]; callable at arbitrary times."""

    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.size < 2 or self.times.size != self.values.size:
            raise ParameterError("path needs matching 1-d times/values with >= 2 nodes")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("path times must increase strictly")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def static_path(horizon: float, x: float = 0.0) -> PiecewisePath:
    return PiecewisePath(times=np.array([0.0, horizon]), values=np.array([x, x]))


def node_path(horizon: float, values) -> PiecewisePath:
    """Path through the given values at uniformly spaced node times."""
    values = np.asarray(values, dtype=float)
    return PiecewisePath(times=np.linspace(0.0, horizon, values.size), values=values)


# ---------------------------------------------------------------------------
# Nystrom discretization

@dataclass(frozen=True)
class DiscretizedOperator:
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)    # K(t_i, t_j), unit diagonal
    weighted: np.ndarray = field(repr=False)  # sqrt(w) K sqrt(w)
    horizon: float = 0.0


@dataclass(frozen=True)
class CovSpectrum:
    eigenvalues: np.ndarray = field(repr=False)  # descending, clamped at zero
    horizon: float = 0.0
    n_quad: int = 0

    @property
    def mu1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())


def gauss_legendre(horizon: float, n: int):
    """Nodes and weights on [0, horizon]; weights sum to the horizon exactly."""
    xs, ws = np.polynomial.legendre.leggauss(n)
    return 0.5 * horizon * (xs + 1.0), 0.5 * horizon * ws


def kernel_matrix(corr, path: PiecewisePath, n_quad: int = DEFAULT_N_QUAD) -> DiscretizedOperator:
    """Discretize the path covariance kernel on Gauss-Legendre nodes.

    ``corr`` is any callable C(dx, dt); typically a
    :class:`~amplab.spectral_model.CorrelationEvaluator`.
    """
    if n_quad < 2:
        raise ParameterError("n_quad must be >= 2")
    t, w = gauss_legendre(path.horizon, n_quad)
    xs = path(t)
    dxm = xs[:, None] - xs[None, :]
    dtm = t[:, None] - t[None, :]
    kmat = np.asarray(corr(dxm, dtm), dtype=float)
    sw = np.sqrt(w)
    wmat = sw[:, None] * kmat * sw[None, :]
    wmat = 0.5 * (wmat + wmat.T)
    return DiscretizedOperator(nodes=t, weights=w, kernel=kmat, weighted=wmat, horizon=path.horizon)


def eigen_spectrum(op: DiscretizedOperator) -> CovSpectrum:
    """All eigenvalues of the discretized kernel, descending, clamped at 0."""
    vals = eigh(op.weighted, eigvals_only=True)[::-1].copy()
    floor = -_PSD_SLACK * op.horizon
    if vals[-1] < floor:
        raise NumericalError(
            f"kernel discretization is not positive semidefinite: min eigenvalue {vals[-1]:.3e}"
        )
    np.clip(vals, 0.0, None, out=vals)
    return CovSpectrum(eigenvalues=vals, horizon=op.horizon, n_quad=vals.size)


def top_eigenvalue(corr, path: PiecewisePath, n_quad: int) -> float:
    """mu_1 only; cheaper objective for the path search."""
    op = kernel_matrix(corr, path, n_quad)
    n = op.weighted.shape[0]
    return float(eigh(op.weighted, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


# ---------------------------------------------------------------------------
# amplification

@dataclass(frozen=True)
class Amplification:
    value: float
    log_value: float
    diverged: bool
    truncation_bound: float  # bound on the log contribution of unresolved modes
    g: float
    mu1: float


def path_amplification(spectrum: CovSpectrum, g: float) -> Amplification:
    """prod_n (1 - 2 g mu_n)^(-1/2) with a divergence flag at 2 g mu_1 >= 1.

    The discretization resolves n_quad eigenvalues; whatever trace is missing
    (T - sum mu_n, nonnegative up to roundoff) contributes at most
    g * missing / (1 - 2 g mu_1) to log A, reported as ``truncation_bound``.
    """
    if g < 0:
        raise ParameterError("g must be >= 0")
    mu = spectrum.eigenvalues
    mu1 = spectrum.mu1
    if g > 0 and 2.0 * g * mu1 >= 1.0:
        return Amplification(np.inf, np.inf, True, np.inf, g, mu1)
    log_a = -0.5 * float(np.log1p(-2.0 * g * mu).sum())
    missing = max(spectrum.horizon - spectrum.trace, 0.0)
    trunc = g * missing / (1.0 - 2.0 * g * mu1) if g > 0 else 0.0
    return Amplification(float(np.exp(log_a)), log_a, False, trunc, g, mu1)


def amplification_upper_bound(spectrum: CovSpectrum, g: float) -> float:
    """exp(g T / (1 - 2 g mu_1)): closed-form bound on the amplification."""
    if 2.0 * g * spectrum.mu1 >= 1.0:
        return np.inf
    return float(np.exp(g * spectrum.horizon / (1.0 - 2.0 * g * spectrum.mu1)))


def mc_validate_amplification(
    density,
    path: PiecewisePath,
    g: float,
    n_realizations: int = 10_000,
    seed: int = 0,
    n_quad: int = DEFAULT_N_QUAD,
    n_steps: int = 64,
    n_modes: int = 4096,
):
    """Cross-check the eigenvalue product against a field-ensemble average.

    Independently of the spectrum route, draws mode-sum realizations,
    integrates S^2 along the fixed path by the trapezoid rule and averages
    the exponential.  Requires 2 g mu_1 <= 0.5 so the Monte Carlo variance
    exists comfortably.  Returns (mc_mean, mc_se, product_value, spectrum).
    """
    corr = CorrelationEvaluator(density)
    spectrum = eigen_spectrum(kernel_matrix(corr, path, n_quad))
    if 2.0 * g * spectrum.mu1 > 0.5:
        raise ParameterError(
            f"2 g mu_1 = {2 * g * spectrum.mu1:.3f} > 0.5; Monte Carlo tail too heavy to validate"
        )
    product = path_amplification(spectrum, g).value

    tgrid = np.linspace(0.0, path.horizon, n_steps + 1)
    xs = path(tgrid)
    wts = np.full(n_steps + 1, path.horizon / n_steps)
    wts[0] = wts[-1] = 0.5 * path.horizon / n_steps
    total = 0.0
    total_sq = 0.0
    for r in range(n_realizations):
        fld = sample_modes(density, n_modes=n_modes, seed=(seed * 1_000_003 + r))
        s = fld(xs, tgrid)
        val = float(np.exp(g * np.dot(wts, s**2)))
        total += val
        total_sq += val * val
    mean = total / n_realizations
    var = max(total_sq / n_realizations - mean**2, 0.0) * n_realizations / (n_realizations - 1)
    se = float(np.sqrt(var / n_realizations))
    return mean, se, product, spectrum


def fk_cross_check(density, path_free_x: float, g: float, horizon: float, **kw):
    """Convenience wrapper tying the estimator module into this one."""
    fld = sample_modes(density, **kw.pop("field_kw", {}))
    return fk_estimate(fld, g, path_free_x, horizon, **kw)


# ---------------------------------------------------------------------------
# path search

@dataclass(frozen=True)
class Mu1Probe:
    amplitude: float
    mu1: float
    delta: float


def mu1_continuity_probe(corr, path: PiecewisePath, amplitudes, n_quad: int = DEFAULT_N_QUAD, seed: int = 7):
    """|mu_1 shift| for smooth perturbations of decreasing amplitude.

    One random Fourier bump (vanishing at t = T, so the pinned endpoint
    stays put) is scaled by each amplitude; the table of shifts should
    decrease with the amplitude.
    """
    base = top_eigenvalue(corr, path, n_quad)
    rng = substream(seed, 0xC0)
    coeff = rng.standard_normal(4)
    coeff /= np.linalg.norm(coeff)
    t_nodes = np.linspace(0.0, path.horizon, 65)
    bump = np.zeros_like(t_nodes)
    for j, c in enumerate(coeff, start=1):
        bump += c * np.sin(np.pi * j * (1.0 - t_nodes / path.horizon))
    bump /= np.max(np.abs(bump))
    out = []
    for a in amplitudes:
        pert = PiecewisePath(times=t_nodes, values=path(t_nodes) + a * bump)
        mu1 = top_eigenvalue(corr, pert, n_quad)
        out.append(Mu1Probe(amplitude=float(a), mu1=mu1, delta=abs(mu1 - base)))
    return out


@dataclass(frozen=True)
class Mu1Maximization:
    mu_max: float
    best_path: PiecewisePath
    start_values: np.ndarray  # best mu_1 reached from each start
    n_interior: int
    n_quad: int
    lower_bound: float        # best start value before refinement
    spread: float             # spread of per-start optima (multistart agreement)


def maximize_mu1(
    corr,
    horizon: float,
    n_interior: int = 16,
    n_quad: int = DEFAULT_N_QUAD,
    n_starts: int = 8,
    seed: int = 0,
    search_n_quad: int = 128,
    maxiter: int | None = None,
) -> Mu1Maximization:
    """Maximize mu_1 over piecewise-linear paths with x(T) = 0.

    Free coordinates are the values at n_interior + 1 uniformly spaced nodes
    (x(0) included, endpoint pinned).  Nelder-Mead from the static path plus
    n_starts random starts; the best candidate is re-scored at the full
    n_quad resolution.
    """
    if n_interior < 2:
        raise ParameterError("n_interior must be >= 2")
    lam = lambda_matrix(getattr(corr, "density", None)) if hasattr(corr, "density") else None
    scale = 0.5 / np.sqrt(lam.var_x) if lam is not None else 0.5 * np.sqrt(horizon)
    dim = n_interior + 1

    def objective(free: np.ndarray) -> float:
        vals = np.concatenate([free, [0.0]])
        return -top_eigenvalue(corr, node_path(horizon, vals), search_n_quad)

    rng = substream(seed, 0xA1)
    starts = [np.zeros(dim)]
    for _ in range(n_starts):
        starts.append(rng.standard_normal(dim) * scale)

    best_per_start = []
    candidates = []
    for s0 in starts:
        res = minimize(
            objective,
            s0,
            method="Nelder-Mead",
            options={
                "maxiter": maxiter or 400 * dim,
                "xatol": 1e-5,
                "fatol": 1e-10,
                "adaptive": True,
            },
        )
        best_per_start.append(-res.fun)
        candidates.append(res.x)
    best_per_start = np.array(best_per_start)

    rescored = [
        top_eigenvalue(corr, node_path(horizon, np.concatenate([c, [0.0]])), n_quad)
        for c in candidates
    ]
    ibest = int(np.argmax(rescored))
    best_path = node_path(horizon, np.concatenate([candidates[ibest], [0.0]]))
    return Mu1Maximization(
        mu_max=float(rescored[ibest]),
        best_path=best_path,
        start_values=best_per_start,
        n_interior=n_interior,
        n_quad=n_quad,
        lower_bound=float(best_per_start.max()),
        spread=float(best_per_start.max() - best_per_start.min()),
    )


@dataclass(frozen=True)
class CriticalCoupling:
    g_c: float
    mu_max: float
    horizon: float
    upper_bound: bool  # finite path family => mu_max may be low, g_c high
    n_interior: int
    n_quad: int
    n_starts: int
    spread: float


def critical_coupling(corr, horizon: float, **kw) -> CriticalCoupling:
    """g_c = 1 / (2 mu_max) from the path search; an upper-bound estimate.

    Whatever the spectral density, mu_max <= T forces g_c >= 1 / (2 T).
    """
    opt = maximize_mu1(corr, horizon, **kw)
    return CriticalCoupling(
        g_c=1.0 / (2.0 * opt.mu_max),
        mu_max=opt.mu_max,
        horizon=horizon,
        upper_bound=True,
        n_interior=opt.n_interior,
        n_quad=opt.n_quad,
        n_starts=len(opt.start_values) - 1,
        spread=opt.spread,
    )
