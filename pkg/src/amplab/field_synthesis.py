"""Realizations of the homogeneous Gaussian field S(x, t).

Two interchangeable representations:

* mode sum      S = sqrt(2/M) sum_m cos(k_m x + w_m t + phi_m) with
                (k_m, w_m) drawn from the spectral density and phases
                uniform.  The ensemble covariance equals C exactly for
                every M; one-point statistics are Gaussian only as
                M -> infinity.
* lattice       exact Gaussian synthesis on a periodic space-time box via
                Hermitian-symmetric spectral coefficients and a 2-d FFT.

Both evaluate pointwise through :func:`evaluate`; lattice fields
interpolate bilinearly and refuse points outside their slab.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ParameterError
from .rng import substream
from .spectral_model import CorrelationEvaluator, SpectralDensity, effective_support

DEFAULT_N_MODES = 4096

# Largest chunk (in scalars) processed at once when evaluating mode sums.
_CHUNK_SCALARS = 4_000_000


@dataclass(frozen=True)
class ModeField:
    """Mode-sum field realization; callable as S(x, t)."""

    k: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def n_modes(self) -> int:
        return self.k.size

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        shape = x.shape
        xf, tf = x.ravel(), t.ravel()
        m = self.n_modes
        amp = np.sqrt(2.0 / m)
        out = np.empty(xf.size)
        step = max(1, _CHUNK_SCALARS // m)
        for lo in range(0, xf.size, step):
            hi = min(lo + step, xf.size)
            ph = np.outer(xf[lo:hi], self.k) + np.outer(tf[lo:hi], self.omega) + self.phase
            out[lo:hi] = amp * np.cos(ph).sum(axis=1)
        out = out.reshape(shape)
        return out if shape else float(out)


def sample_modes(density: SpectralDensity, n_modes: int = DEFAULT_N_MODES, seed: int = 0) -> ModeField:
    """Draw (k, w) pairs from the density plus uniform phases."""
    if n_modes < 1:
        raise ParameterError(f"n_modes must be >= 1, got {n_modes}")
    rng = substream(seed, 0x51)
    if density.is_gaussian:
        k = rng.normal(0.0, density.sigma_k, n_modes)
        w = rng.normal(0.0, density.sigma_omega, n_modes)
    else:
        # Inverse CDF on the lattice: pick a cell by its mass, jitter inside.
        p = (density.values * density.dk * density.domega).ravel()
        p = p / p.sum()
        idx = rng.choice(p.size, size=n_modes, p=p)
        ik, iw = np.unravel_index(idx, density.values.shape)
        k = density.k[ik] + rng.uniform(-0.5, 0.5, n_modes) * density.dk
        w = density.omega[iw] + rng.uniform(-0.5, 0.5, n_modes) * density.domega
    phase = rng.uniform(0.0, 2.0 * np.pi, n_modes)
    return ModeField(k=_ro(k), omega=_ro(w), phase=_ro(phase), seed=seed)


def _ro(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# lattice synthesis

@dataclass(frozen=True)
class LatticeSpec:
    """Space-time sampling box: node (i, j) sits at (x0 + i dx, t0 + j dt)."""

    x0: float
    dx: float
    n_x: int
    t0: float
    dt: float
    n_t: int

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n_x)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_t)


def centered_spec(length: float, width: float, dx: float, dt: float, t0: float = 0.0) -> LatticeSpec:
    """Box [-length/2, length/2] x [t0, t0 + width] at the given spacings."""
    n_x = int(np.ceil(length / dx)) + 1
    n_t = int(np.ceil(width / dt)) + 1
    return LatticeSpec(x0=-0.5 * length, dx=dx, n_x=n_x, t0=t0, dt=dt, n_t=n_t)


@dataclass(frozen=True)
class LatticeField:
    """Gaussian field sampled on a periodic lattice; callable as S(x, t)."""

    spec: LatticeSpec
    values: np.ndarray = field(repr=False)  # (n_x, n_t)
    seed: int = 0

    def __call__(self, x, t):
        return _bilinear(self, x, t)

    def max_square(self) -> float:
        return float(np.max(self.values**2))


def synthesize_grid(density: SpectralDensity, spec: LatticeSpec, seed: int = 0) -> LatticeField:
    """Exact Gaussian synthesis on the periodic box of ``spec``.

    Spectral coefficients are complex Gaussians with variance
    D(k, w) dk dw on the discrete frequency set, made Hermitian so the
    inverse FFT is real up to roundoff.  Spacings must satisfy the
    resolution rule dx <= pi / k_eff (and likewise in t), where k_eff
    carries all but 1e-6 of the spectral mass.
    """
    k_eff, w_eff = effective_support(density)
    if spec.dx > np.pi / k_eff:
        raise ParameterError(
            f"dx = {spec.dx:.4g} exceeds pi / k_eff = {np.pi / k_eff:.4g}; refine the lattice"
        )
    if spec.dt > np.pi / w_eff:
        raise ParameterError(
            f"dt = {spec.dt:.4g} exceeds pi / w_eff = {np.pi / w_eff:.4g}; refine the lattice"
        )
    n_x, n_t = spec.n_x, spec.n_t
    lx = n_x * spec.dx
    lt = n_t * spec.dt
    kk = 2.0 * np.pi * np.fft.fftfreq(n_x, spec.dx)
    ww = 2.0 * np.pi * np.fft.fftfreq(n_t, spec.dt)
    amp = np.sqrt(density(kk[:, None], ww[None, :]) * (2.0 * np.pi / lx) * (2.0 * np.pi / lt))

    rng = substream(seed, 0x5F)
    xi = (rng.standard_normal((n_x, n_t)) + 1j * rng.standard_normal((n_x, n_t))) / np.sqrt(2.0)
    rev_x = (-np.arange(n_x)) % n_x
    rev_t = (-np.arange(n_t)) % n_t
    coeff = (xi + np.conj(xi[np.ix_(rev_x, rev_t)])) / np.sqrt(2.0)

    s = n_x * n_t * np.fft.ifft2(coeff * amp)
    resid = np.max(np.abs(s.imag)) / max(np.max(np.abs(s.real)), 1.0)
    if resid > 1e-12:
        raise NumericalError(f"Hermitian symmetry broken: imaginary residue {resid:.3e}")
    return LatticeField(spec=spec, values=_ro(s.real), seed=seed)


def _bilinear(fld: LatticeField, x, t):
    sp = fld.spec
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    shape = x.shape
    gx = (x.ravel() - sp.x0) / sp.dx
    gt = (t.ravel() - sp.t0) / sp.dt
    eps = 1e-9
    if np.any(gx < -eps) or np.any(gx > sp.n_x - 1 + eps) or np.any(gt < -eps) or np.any(gt > sp.n_t - 1 + eps):
        raise DomainError("evaluation point outside the synthesized slab")
    ix = np.clip(np.floor(gx).astype(int), 0, sp.n_x - 2)
    it = np.clip(np.floor(gt).astype(int), 0, sp.n_t - 2)
    fx = np.clip(gx - ix, 0.0, 1.0)
    ft = np.clip(gt - it, 0.0, 1.0)
    v = fld.values
    out = (
        v[ix, it] * (1 - fx) * (1 - ft)
        + v[ix + 1, it] * fx * (1 - ft)
        + v[ix, it + 1] * (1 - fx) * ft
        + v[ix + 1, it + 1] * fx * ft
    )
    out = out.reshape(shape)
    return out if shape else float(out)


FieldRealization = ModeField | LatticeField


def evaluate(fld, x, t):
    """Field value(s) at (x, t) for either representation."""
    return fld(x, t)


# ---------------------------------------------------------------------------
# ensemble validation

@dataclass(frozen=True)
class CovarianceCheck:
    lag: tuple
    target: float
    estimate: float
    se: float

    @property
    def z(self) -> float:
        return (self.estimate - self.target) / self.se if self.se > 0 else np.inf


def empirical_covariance(
    density: SpectralDensity,
    lags,
    n_realizations: int = 10_000,
    seed: int = 0,
    n_modes: int = 512,
    base_point=(0.0, 0.0),
):
    """Monte Carlo covariance estimates at the given (dx, dt) lags.

    Each realization contributes the product of the field at two points
    straddling ``base_point`` symmetrically, so the estimate at (a, b) and
    at (-a, -b) comes from literally the same products.
    """
    if n_realizations < 100:
        raise ParameterError("ensemble size must be >= 100 for a usable standard error")
    lags = [(float(a), float(b)) for a, b in lags]
    corr = CorrelationEvaluator(density)
    x0, t0 = base_point
    pts = []
    for a, b in lags:
        pts.append((x0 - 0.5 * a, t0 - 0.5 * b))
        pts.append((x0 + 0.5 * a, t0 + 0.5 * b))
    px = np.array([p[0] for p in pts])
    pt = np.array([p[1] for p in pts])

    sums = np.zeros(len(lags))
    sq_sums = np.zeros(len(lags))
    chunk = 256
    for lo in range(0, n_realizations, chunk):
        hi = min(lo + chunk, n_realizations)
        prods = np.empty((hi - lo, len(lags)))
        for r in range(lo, hi):
            fld = sample_modes(density, n_modes=n_modes, seed=(seed * 100_003 + r))
            vals = fld(px, pt)
            prods[r - lo] = vals[0::2] * vals[1::2]
        sums += prods.sum(axis=0)
        sq_sums += (prods**2).sum(axis=0)

    n = n_realizations
    mean = sums / n
    var = np.maximum(sq_sums / n - mean**2, 0.0) * n / (n - 1)
    se = np.sqrt(var / n)
    out = []
    for i, (a, b) in enumerate(lags):
        out.append(CovarianceCheck(lag=(a, b), target=float(corr(a, b)), estimate=float(mean[i]), se=float(se[i])))
    return out
