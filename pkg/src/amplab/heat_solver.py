"""Direct solver for d_t psi = (1/2) d_xx psi + g S(x, t)^2 psi, psi(., 0) = 1.

Periodic interval of length L_dom.  The default scheme is Strang splitting:
exact multiplicative half steps for the potential (sampled at the step
midpoint) around one exact spectral diffusion step, second order in dt and
positivity preserving.  A Crank-Nicolson variant replaces the spectral
diffusion with the periodic three-point stencil, solved by circulant
diagonalization, and serves as an independent cross-check.

Since the potential g S^2 is nonnegative, psi >= 1 everywhere; runs whose
exponents would overflow are redone accumulating log psi, with the diffusion
step applied to exp(log psi - max) so the transform never sees large numbers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StabilityError
from .field_synthesis import LatticeField

SCHEMES = ("strang-splitting", "crank-nicolson-imex")

# Per-step bound on g * max(S^2) * dt; larger steps would let single
# multiplicative factors exceed e^10 and destroy splitting accuracy.
MAX_STEP_EXPONENT = 10.0

# Predicted total exponent beyond which the solve starts directly in log mode.
_LOG_MODE_EXPONENT = 600.0
_OVERFLOW_LIMIT = 1e290


@dataclass(frozen=True)
class SolverGrid:
    """Discretization: n_x periodic nodes on [-L_dom/2, L_dom/2), n_t steps to T."""

    L_dom: float
    n_x: int
    T: float
    n_t: int
    scheme: str = "strang-splitting"

    def __post_init__(self):
        if self.n_x < 16 or self.n_x % 2 != 0:
            raise ParameterError(f"n_x must be even and >= 16, got {self.n_x}")
        if self.n_t < 1:
            raise ParameterError(f"n_t must be >= 1, got {self.n_t}")
        if not (self.L_dom > 0 and self.T > 0):
            raise ParameterError("L_dom and T must be positive")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme {self.scheme!r} not in {SCHEMES}")

    @property
    def dx(self) -> float:
        return self.L_dom / self.n_x

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def x(self) -> np.ndarray:
        return -0.5 * self.L_dom + self.dx * np.arange(self.n_x)


@dataclass(frozen=True)
class SolutionField:
    """Solution values on stored time slices; log_psi is always finite."""

    x: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)      # (n_x, n_stored), +inf where overflowed
    log_psi: np.ndarray = field(repr=False)  # (n_x, n_stored)
    g: float = 0.0
    scheme: str = "strang-splitting"
    log_mode: bool = False
    field_seed: int = 0


def suggested_time_steps(grid_like, g: float, s2_max: float) -> int:
    """Default step count: dt = min(dx^2/2, T/1024, 0.1/(g s2_max))."""
    dx = grid_like.L_dom / grid_like.n_x
    dt = min(0.5 * dx * dx, grid_like.T / 1024.0)
    if g > 0 and s2_max > 0:
        dt = min(dt, 0.1 / (g * s2_max))
    return max(1, int(np.ceil(grid_like.T / dt)))


def solve(fld, g: float, grid: SolverGrid, store: str = "terminal", log_space=None) -> SolutionField:
    """March the splitting scheme from psi = 1 to time T.

    ``fld`` is any callable S(x, t) accepting an array of positions; lattice
    fields whose x nodes match the solver grid are sliced directly.
    ``store`` is "terminal" (initial + final slice) or "all".
    ``log_space`` forces log accumulation; None lets the solver decide and
    restart automatically if the linear run overflows.
    """
    if g < 0:
        raise ParameterError(f"coupling g must be >= 0, got {g}")
    if store not in ("terminal", "all"):
        raise ParameterError(f"store must be 'terminal' or 'all', got {store!r}")

    sample = _field_sampler(fld, grid)
    if log_space is None:
        log_space = _predict_log_mode(fld, g, grid)
    try:
        return _march(sample, g, grid, store, bool(log_space), _seed_of(fld))
    except OverflowError:
        # Linear accumulation overflowed mid-run: redo in log space.
        return _march(sample, g, grid, store, True, _seed_of(fld))


def terminal_profile(sol: SolutionField):
    """(x, psi(., T)) of a solve."""
    return sol.x, sol.psi[:, -1]


def _seed_of(fld) -> int:
    return int(getattr(fld, "seed", 0))


def _predict_log_mode(fld, g, grid) -> bool:
    if isinstance(fld, LatticeField):
        return g * fld.max_square() * grid.T > _LOG_MODE_EXPONENT
    return False


def _field_sampler(fld, grid: SolverGrid):
    x = grid.x
    if isinstance(fld, LatticeField):
        sp = fld.spec
        on_grid = (
            sp.n_x >= grid.n_x
            and abs(sp.dx - grid.dx) <= 1e-12 * grid.dx
            and np.isclose((x[0] - sp.x0) / sp.dx, round((x[0] - sp.x0) / sp.dx), atol=1e-9)
            and sp.x0 <= x[0]
            and sp.x0 + (sp.n_x - 1) * sp.dx >= x[-1] - 1e-12
        )
        if on_grid:
            # Same spatial nodes: only interpolate in time.
            off = int(round((x[0] - sp.x0) / sp.dx))
            cols = fld.values[off : off + grid.n_x]

            def sample(t: float) -> np.ndarray:
                gt = (t - sp.t0) / sp.dt
                it = min(max(int(np.floor(gt)), 0), sp.n_t - 2)
                frac = min(max(gt - it, 0.0), 1.0)
                return cols[:, it] * (1.0 - frac) + cols[:, it + 1] * frac

            return sample

    def sample(t: float) -> np.ndarray:
        return np.asarray(fld(x, t), dtype=float)

    return sample


def _march(sample, g, grid, store, log_space, field_seed) -> SolutionField:
    n_x, n_t, dt = grid.n_x, grid.n_t, grid.dt
    diffuse = _diffusion_operator(grid)
    kept_idx = range(n_t + 1) if store == "all" else (0, n_t)
    kept = {i: None for i in kept_idx}

    if log_space:
        w = np.zeros(n_x)
    else:
        psi = np.ones(n_x)
    if 0 in kept:
        kept[0] = np.zeros(n_x) if log_space else np.ones(n_x)

    for n in range(n_t):
        t_mid = (n + 0.5) * dt
        v = g * sample(t_mid) ** 2
        vmax = float(v.max()) if v.size else 0.0
        if vmax * dt > MAX_STEP_EXPONENT:
            raise StabilityError(
                f"g * max(S^2) * dt = {vmax * dt:.3g} exceeds {MAX_STEP_EXPONENT}; reduce dt"
            )
        half = 0.5 * dt * v
        if log_space:
            w = w + half
            m = float(w.max())
            u = diffuse(np.exp(w - m))
            # The exact solution stays >= 1 (w >= 0); underflowed nodes are
            # restored to that bound instead of -inf.
            w = np.maximum(m + np.log(np.maximum(u, 1e-300)), 0.0)
            w = w + half
            if n + 1 in kept:
                kept[n + 1] = w.copy()
        else:
            psi = psi * np.exp(half)
            # Band-limited diffusion of a sharp peak can undershoot (Gibbs);
            # the exact solution never drops below 1 for a nonnegative
            # potential, so restore that floor.
            psi = np.maximum(diffuse(psi), 1.0)
            psi = psi * np.exp(half)
            if not np.all(np.isfinite(psi)) or psi.max() > _OVERFLOW_LIMIT:
                raise OverflowError
            if n + 1 in kept:
                kept[n + 1] = psi.copy()

    times = np.array([i * dt for i in kept_idx])
    stack = np.stack([kept[i] for i in kept_idx], axis=1)
    if log_space:
        log_psi = stack
        with np.errstate(over="ignore"):
            psi_out = np.exp(stack)
    else:
        psi_out = stack
        log_psi = np.log(np.maximum(stack, 1e-300))
    return SolutionField(
        x=grid.x,
        times=times,
        psi=psi_out,
        log_psi=log_psi,
        g=g,
        scheme=grid.scheme,
        log_mode=log_space,
        field_seed=field_seed,
    )


def _diffusion_operator(grid: SolverGrid):
    """One exact (spectral) or Crank-Nicolson diffusion step over dt."""
    n_x, dx, dt = grid.n_x, grid.dx, grid.dt
    kappa = 2.0 * np.pi * np.fft.rfftfreq(n_x, dx)
    if grid.scheme == "strang-splitting":
        mult = np.exp(-0.5 * kappa**2 * dt)
    else:
        # Three-point periodic Laplacian is circulant; its eigenvalues under
        # rfft give the Crank-Nicolson update directly.
        lap = (2.0 * np.cos(kappa * dx) - 2.0) / dx**2
        mult = (1.0 + 0.25 * dt * lap) / (1.0 - 0.25 * dt * lap)

    def diffuse(u: np.ndarray) -> np.ndarray:
        return np.fft.irfft(np.fft.rfft(u) * mult, n=n_x)

    return diffuse
