"""Intermittency diagnostics on terminal amplification profiles.

For a profile E(x) = psi(x, T) the window average I_L / L over [-L/2, L/2]
either stabilizes (ergodic, below the critical coupling) or keeps growing,
carried by sparse peaks (above it).  The peak share rho and occupancy phi
quantify dominance: with a threshold f tied to the realized averages,
rho is the fraction of the integral contributed where E > f, and phi the
fraction of the window measure where E > f.  Supercritical profiles combine
rho near 1 with phi near 0.

The i.i.d. regime demonstrator reproduces the same trichotomy for sums of
Pareto variables: finite variance (fluctuations ~ N^(-1/2)), finite mean
with heavy tails (~ N^(1/alpha - 1)), and infinite mean, where the few
largest summands carry the bulk of the total.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .field_synthesis import LatticeSpec, synthesize_grid
from .heat_solver import SolverGrid, solve, terminal_profile
from .rng import substream
from .spectral_model import lambda_matrix

SQRT = np.sqrt  # default dominance map phi(u); grows, but slower than u


@dataclass(frozen=True)
class ProfileSeries:
    """Terminal profile of one realization on its spatial grid."""

    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    g: float = 0.0
    horizon: float = 1.0
    realization: int = 0


def _window(profile: ProfileSeries, window: float):
    mask = np.abs(profile.x) <= 0.5 * window + 1e-9
    if mask.sum() < 2:
        raise ParameterError(f"window {window} holds fewer than two grid nodes")
    return profile.x[mask], profile.values[mask]


def spatial_average(profile: ProfileSeries, window: float) -> float:
    """Trapezoid average of E over [-window/2, window/2] (snapped to the grid)."""
    x, v = _window(profile, window)
    return float(np.trapz(v, x) / (x[-1] - x[0]))


def window_average_curve(profile: ProfileSeries, windows) -> np.ndarray:
    return np.array([spatial_average(profile, w) for w in windows])


def dominance_threshold(windows, averages, at_window: float, phi_map=SQRT) -> float:
    """f = phi(inf of the running averages over windows >= at_window)."""
    windows = np.asarray(windows, dtype=float)
    averages = np.asarray(averages, dtype=float)
    sel = windows >= at_window - 1e-9
    if not np.any(sel):
        raise ParameterError("no window of at least the requested size")
    return float(phi_map(averages[sel].min()))


def truncated_stats(profile: ProfileSeries, window: float, threshold: float):
    """(peak share, occupancy) of the region where E exceeds the threshold.

    Share: fraction of the window integral of E contributed above the
    threshold; occupancy: fraction of window measure above it.  Any
    threshold below min(E) gives (1, 1), above max(E) gives (0, 0).
    """
    x, v = _window(profile, window)
    above = (v > threshold).astype(float)
    total = np.trapz(v, x)
    peak = np.trapz(v * above, x)
    occ = np.trapz(above, x) / (x[-1] - x[0])
    share = peak / total if total > 0 else 0.0
    return float(share), float(occ)


def fractional_moment_average(profile: ProfileSeries, window: float, eps: float) -> float:
    """Window average of E^eps; by Jensen at most (window average of E)^eps."""
    if not 0 < eps <= 1:
        raise ParameterError("eps must lie in (0, 1]")
    x, v = _window(profile, window)
    return float(np.trapz(v**eps, x) / (x[-1] - x[0]))


# ---------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class ScanThresholds:
    """Finite-size stand-ins for the asymptotic trichotomy (all tunable)."""

    stable_tol: float = 0.1    # top-octave relative change below this = stabilized
    peak_share: float = 0.5    # rho above this = peaks carry the average
    occupancy: float = 0.1     # phi below this = peaks are sparse
    growth: float = 2.0        # top average / smallest running average


@dataclass(frozen=True)
class RealizationDiagnostics:
    realization: int
    windows: np.ndarray = field(repr=False)
    averages: np.ndarray = field(repr=False)
    thresholds_f: np.ndarray = field(repr=False)
    peak_shares: np.ndarray = field(repr=False)
    occupancies: np.ndarray = field(repr=False)
    eps_probe: float = 0.5
    eps_average: float = 0.0
    label: str = "inconclusive"
    octave_change: float = 0.0
    growth: float = 0.0


def diagnose_profile(
    profile: ProfileSeries,
    windows,
    thresholds: ScanThresholds = ScanThresholds(),
    phi_map=SQRT,
    eps_probe: float = 0.5,
    realization: int = 0,
) -> RealizationDiagnostics:
    """Full window-statistics curve plus a regime label for one profile."""
    windows = np.sort(np.asarray(windows, dtype=float))
    if windows.size < 2:
        raise ParameterError("need at least two window sizes")
    averages = window_average_curve(profile, windows)
    fs = np.array([dominance_threshold(windows, averages, w, phi_map) for w in windows])
    shares = np.empty(windows.size)
    occs = np.empty(windows.size)
    for i, w in enumerate(windows):
        shares[i], occs[i] = truncated_stats(profile, w, fs[i])

    top, half = averages[-1], averages[-2]
    octave_change = abs(top - half) / half if half > 0 else np.inf
    growth = top / averages.min() if averages.min() > 0 else np.inf
    stable = octave_change <= thresholds.stable_tol
    peak_dominated = shares[-1] > thresholds.peak_share and occs[-1] < thresholds.occupancy
    grows = growth >= thresholds.growth
    if peak_dominated and grows:
        label = "supercritical-like"
    elif stable and not peak_dominated and not grows:
        label = "subcritical-like"
    else:
        label = "inconclusive"
    return RealizationDiagnostics(
        realization=realization,
        windows=windows,
        averages=averages,
        thresholds_f=fs,
        peak_shares=shares,
        occupancies=occs,
        eps_probe=eps_probe,
        eps_average=fractional_moment_average(profile, windows[-1], eps_probe),
        label=label,
        octave_change=float(octave_change),
        growth=float(growth),
    )


@dataclass(frozen=True)
class CouplingCase:
    g: float
    realizations: list
    counts: dict
    median_share: float
    median_occupancy: float
    median_average: float

    @property
    def majority_label(self) -> str:
        return max(self.counts, key=self.counts.get)


@dataclass(frozen=True)
class ScanReport:
    horizon: float
    windows: np.ndarray
    cases: list
    n_realizations: int
    seed: int
    thresholds: ScanThresholds


def default_windows(window_max: float, n_octaves: int = 7) -> np.ndarray:
    """Dyadic window ladder ending at window_max."""
    return np.array([window_max / 2**j for j in range(n_octaves)][::-1])


def intermittency_scan(
    density,
    horizon: float,
    g_list,
    window_max: float,
    n_realizations: int = 32,
    seed: int = 0,
    n_octaves: int = 7,
    spacing_frac: float = 0.125,
    n_t: int = 512,
    pad_lengths: float = 4.0,
    field_dt_frac: float = 0.125,
    thresholds: ScanThresholds = ScanThresholds(),
    eps_probe: float = 0.5,
    scheme: str = "strang-splitting",
) -> ScanReport:
    """Solve an ensemble per coupling and classify every realization.

    The solver interval is the analysis window plus ``pad_lengths``
    correlation lengths of margin on each side; field and solver share the
    same periodic box, and the synthesis is padded in time so the periodic
    wrap is uncorrelated.  Fields are reused across couplings (common
    random numbers), so differences between couplings are not masked by
    ensemble noise.
    """
    lam = lambda_matrix(density)
    lx = 1.0 / np.sqrt(lam.var_x)
    lt = 1.0 / np.sqrt(lam.var_t)
    dx = spacing_frac * lx
    l_dom = window_max + 2.0 * pad_lengths * lx
    n_x = int(np.ceil(l_dom / dx))
    n_x += n_x % 2
    n_x = max(n_x, 16)
    grid = SolverGrid(L_dom=n_x * dx, n_x=n_x, T=horizon, n_t=n_t, scheme=scheme)

    t_pad = 8.0 * lt
    dt_f = field_dt_frac * lt
    n_tf = int(np.ceil((horizon + t_pad) / dt_f)) + 1
    spec = LatticeSpec(x0=-0.5 * grid.L_dom, dx=dx, n_x=n_x, t0=0.0, dt=dt_f, n_t=n_tf)

    windows = default_windows(window_max, n_octaves)
    g_list = [float(g) for g in g_list]
    cases = []
    diags_per_g = {g: [] for g in g_list}
    for r in range(n_realizations):
        fld = synthesize_grid(density, spec, seed=(seed * 7919 + r))
        for g in g_list:
            sol = solve(fld, g, grid)
            x, e = terminal_profile(sol)
            prof = ProfileSeries(x=x, values=e, g=g, horizon=horizon, realization=r)
            diags_per_g[g].append(
                diagnose_profile(prof, windows, thresholds, eps_probe=eps_probe, realization=r)
            )
    for g in g_list:
        diags = diags_per_g[g]
        counts = {"subcritical-like": 0, "supercritical-like": 0, "inconclusive": 0}
        for d in diags:
            counts[d.label] += 1
        cases.append(
            CouplingCase(
                g=g,
                realizations=diags,
                counts=counts,
                median_share=float(np.median([d.peak_shares[-1] for d in diags])),
                median_occupancy=float(np.median([d.occupancies[-1] for d in diags])),
                median_average=float(np.median([d.averages[-1] for d in diags])),
            )
        )
    return ScanReport(
        horizon=horizon,
        windows=windows,
        cases=cases,
        n_realizations=n_realizations,
        seed=seed,
        thresholds=thresholds,
    )


# ---------------------------------------------------------------------------
# i.i.d. regime demonstrator

def max_to_sum(samples, p: float = 1.0) -> float:
    """max |x|^p / sum |x|^p; near zero iff the p-th moment behaves."""
    a = np.abs(np.asarray(samples, dtype=float)) ** p
    s = a.sum()
    return float(a.max() / s) if s > 0 else 0.0


@dataclass(frozen=True)
class RegimeResult:
    alpha: float
    n_values: np.ndarray
    mean_of_means: np.ndarray
    fluctuation_scale: np.ndarray  # interquartile range of the sample mean
    fitted_exponent: float
    theoretical_exponent: float
    theoretical_mean: float        # inf when alpha <= 1
    top_share_majority: float      # fraction of reps where top ln ln N terms carry > 1/2
    top_count: int


@dataclass(frozen=True)
class IidReport:
    results: list
    repetitions: int
    seed: int


def pareto_samples(rng, alpha: float, size) -> np.ndarray:
    # Pareto with unit scale: density alpha / x^(alpha+1) on x >= 1.
    return rng.pareto(alpha, size) + 1.0


def iid_regime_demo(
    alphas=(2.5, 1.5, 0.5),
    n_values=(1_000, 3_162, 10_000, 31_623, 100_000, 316_228, 1_000_000),
    repetitions: int = 200,
    seed: int = 0,
) -> IidReport:
    """Sample-mean scaling and top-order-statistic dominance for Pareto sums."""
    n_values = np.asarray(sorted(int(n) for n in n_values))
    results = []
    for ai, alpha in enumerate(alphas):
        if alpha <= 0:
            raise ParameterError("alpha must be positive")
        means = np.empty((n_values.size, repetitions))
        top_share = np.empty(repetitions)
        top_count = max(1, int(np.ceil(np.log(np.log(n_values[-1])))))
        for rep in range(repetitions):
            rng = substream(seed, 0x11D, ai, rep)
            draws = pareto_samples(rng, alpha, n_values[-1])
            csum = np.cumsum(draws)
            for i, n in enumerate(n_values):
                means[i, rep] = csum[n - 1] / n
            top = np.partition(draws, -top_count)[-top_count:]
            top_share[rep] = top.sum() / csum[-1]
        iqr = np.percentile(means, 75, axis=1) - np.percentile(means, 25, axis=1)
        slope = np.polyfit(np.log(n_values), np.log(iqr), 1)[0]
        theo = -0.5 if alpha > 2 else (1.0 / alpha - 1.0 if alpha > 1 else np.nan)
        results.append(
            RegimeResult(
                alpha=float(alpha),
                n_values=n_values,
                mean_of_means=means.mean(axis=1),
                fluctuation_scale=iqr,
                fitted_exponent=float(slope),
                theoretical_exponent=theo,
                theoretical_mean=alpha / (alpha - 1.0) if alpha > 1 else np.inf,
                top_share_majority=float(np.mean(top_share > 0.5)),
                top_count=top_count,
            )
        )
    return IidReport(results=results, repetitions=repetitions, seed=seed)
