"""Privacy-loss random variables and their numerical composition.

A PRV encodes a privacy curve: delta(eps) = E[(1 - e^{eps - Y})_+] for the
random variable Y whose law is stored here as probability masses on a uniform
lattice {j * mesh}. Composition of mechanisms is convolution of PRVs, done by
FFT. Two constructors are provided: the Gaussian mechanism
(Y ~ N(mu^2/2, mu^2)) and the symmetrized subsampled Gaussian mechanism,
whose CDF is

    F(t) = p Phi(e+/mu - mu/2) + (1-p) Phi(e+/mu + mu/2),   t > 0
    F(t) = Phi(-e-/mu - mu/2),                              t <= 0

with e+ = log((p - 1 + e^t)/p) and e- = log((p - 1 + e^{-t})/p). The CDF
jumps at 0 for p < 1 (the curve's slope -1 segment); the jump lands in the
lattice cell centered at 0, which the grids always align to.

Truncated probability is tracked per grid and added to delta queries as
one-sided slack; there are no rigorous error certificates, but mesh-halving
gives an empirical accuracy diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from . import normal
from .errors import AccuracyError, ConfigurationError, DomainError

DEFAULT_MESH = 1e-3
DEFAULT_STD_SPAN = 12.0
DEFAULT_TAIL_BOUND = 1e-9
DEFAULT_TAIL_BUDGET = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Discretization parameters for PRV construction and composition."""

    mesh: float = DEFAULT_MESH
    std_span: float = DEFAULT_STD_SPAN    # composed range: mean +- span * std
    tail_bound: float = DEFAULT_TAIL_BOUND  # truncation target per factor
    tail_budget: float = DEFAULT_TAIL_BUDGET  # accumulated-truncation error cap

    def __post_init__(self):
        if self.mesh <= 0 or self.std_span <= 0:
            raise ConfigurationError("mesh and std_span must be > 0")
        if not 0 < self.tail_bound < 1 or not 0 < self.tail_budget <= 1:
            raise ConfigurationError("tail parameters must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class PrvGrid:
    """Probability masses of a PRV on the lattice {(offset + i) * mesh}."""

    offset: int          # lattice index of the first mass
    mesh: float
    pmf: np.ndarray
    tail_mass: float     # truncated probability (diagnostic, one-sided slack)

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        if pmf.ndim != 1 or pmf.size == 0:
            raise DomainError("pmf must be a nonempty 1-d array")
        if self.mesh <= 0:
            raise DomainError("mesh must be > 0")
        if np.any(pmf < -1e-12):
            raise DomainError("pmf entries must be >= 0")
        total = float(pmf.sum()) + self.tail_mass
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"pmf + tail must sum to 1, got {total}")
        pmf.flags.writeable = False

    @property
    def lo(self) -> float:
        return self.offset * self.mesh

    @property
    def hi(self) -> float:
        return (self.offset + self.pmf.size - 1) * self.mesh

    def grid(self) -> np.ndarray:
        return (self.offset + np.arange(self.pmf.size)) * self.mesh

    def mean(self) -> float:
        return float(np.dot(self.grid(), self.pmf))

    def var(self) -> float:
        g = self.grid()
        m = float(np.dot(g, self.pmf))
        return float(np.dot((g - m) ** 2, self.pmf))

    def symmetry_residual(self, floor: float = 1e-300) -> float:
        """Max relative deviation of pmf(t) from e^t pmf(-t) over mirrored
        lattice pairs with both masses above `floor`. Zero-ish for PRVs of
        symmetric tradeoff functions."""
        n = self.pmf.size
        i = np.arange(n)
        j = -(self.offset + i) - self.offset  # index of the mirrored point
        ok = (j >= 0) & (j < n)
        a = self.pmf[i[ok]]
        b = self.pmf[j[ok]]
        t = (self.offset + i[ok]) * self.mesh
        mask = (a > floor) & (b > floor)
        if not np.any(mask):
            return 0.0
        ratio = a[mask] / (np.exp(t[mask]) * b[mask])
        return float(np.max(np.abs(ratio - 1.0)))


def point_mass() -> PrvGrid:
    """The PRV of a perfectly private mechanism: all mass at 0."""
    return PrvGrid(offset=0, mesh=DEFAULT_MESH, pmf=np.ones(1), tail_mass=0.0)


def _aligned_range(lo: float, hi: float, mesh: float):
    """Snap [lo, hi] outward to lattice indices, always covering 0."""
    i_lo = min(math.floor(lo / mesh), -1)
    i_hi = max(math.ceil(hi / mesh), 1)
    return i_lo, i_hi


def _masses_from_cdf(cdf, sf, i_lo: int, i_hi: int, mesh: float):
    """Cell masses from CDF differences at cell edges (i +- 1/2) * mesh.

    Uses the survival function on the right half to avoid cancellation in
    1 - F; the crossing cell mixes both, which is safe since the values there
    are moderate.
    """
    edges = (np.arange(i_lo, i_hi + 2) - 0.5) * mesh
    F = cdf(edges)
    S = sf(edges)
    use_sf = F[1:] > 0.5
    pmf = np.where(use_sf, S[:-1] - S[1:], F[1:] - F[:-1])
    np.clip(pmf, 0.0, None, out=pmf)
    tail = float(F[0] + S[-1])
    return pmf, tail


def prv_of_gdp(mu: float, grid_spec: GridSpec | None = None) -> PrvGrid:
    """PRV of the Gaussian mechanism: Y ~ N(mu^2 / 2, mu^2), discretized."""
    spec = grid_spec or GridSpec()
    if mu < 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    if mu == 0:
        return PrvGrid(offset=0, mesh=spec.mesh, pmf=np.ones(1), tail_mass=0.0)
    if spec.mesh > mu / 10.0:
        raise ConfigurationError(
            f"mesh {spec.mesh} too coarse for mu={mu}; need mesh <= mu/10")
    mean, sd = 0.5 * mu * mu, mu
    z = -float(normal.inv_cdf(min(spec.tail_bound / 2.0, 0.25)))
    half = max(spec.std_span, z) * sd
    i_lo, i_hi = _aligned_range(mean - half, mean + half, spec.mesh)
    pmf, tail = _masses_from_cdf(lambda x: normal.cdf((x - mean) / sd),
                                 lambda x: normal.sf((x - mean) / sd),
                                 i_lo, i_hi, spec.mesh)
    return PrvGrid(offset=i_lo, mesh=spec.mesh, pmf=pmf, tail_mass=tail)


def _subsampled_cdf_factory(mu: float, p: float):
    """CDF and survival function of the symmetrized subsampled-Gaussian PRV."""

    def cdf(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        neg = t <= 0
        with np.errstate(over="ignore"):
            eps_neg = np.log1p(np.expm1(-t[neg]) / p)
        out[neg] = normal.cdf(-eps_neg / mu - mu / 2.0)
        pos = ~neg
        eps_pos = np.log1p(np.expm1(t[pos]) / p)
        out[pos] = (p * normal.cdf(eps_pos / mu - mu / 2.0)
                    + (1.0 - p) * normal.cdf(eps_pos / mu + mu / 2.0))
        return out

    def sf(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        neg = t <= 0
        with np.errstate(over="ignore"):
            eps_neg = np.log1p(np.expm1(-t[neg]) / p)
        out[neg] = normal.sf(-eps_neg / mu - mu / 2.0)
        pos = ~neg
        eps_pos = np.log1p(np.expm1(t[pos]) / p)
        out[pos] = (p * normal.sf(eps_pos / mu - mu / 2.0)
                    + (1.0 - p) * normal.sf(eps_pos / mu + mu / 2.0))
        return out

    return cdf, sf


def prv_of_subsampled_gdp(mu: float, p: float,
                          grid_spec: GridSpec | None = None) -> PrvGrid:
    """PRV of the symmetrized subsampled Gaussian mechanism C_p(G(mu))."""
    spec = grid_spec or GridSpec()
    if mu < 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"sampling rate must lie in [0, 1], got {p}")
    if mu == 0 or p == 0:
        return PrvGrid(offset=0, mesh=spec.mesh, pmf=np.ones(1), tail_mass=0.0)
    if spec.mesh > mu / 10.0:
        raise ConfigurationError(
            f"mesh {spec.mesh} too coarse for mu={mu}; need mesh <= mu/10")
    cdf, sf = _subsampled_cdf_factory(mu, p)
    beta = spec.tail_bound / 2.0
    # Conservative quantile cuts: F(t_lo) <= beta and S(t_hi) <= beta.
    t_lo = _increasing_root(lambda t: float(cdf(t)) - beta, -1.0)[0]
    t_hi = _increasing_root(lambda t: beta - float(sf(t)), 1.0)[1]
    i_lo, i_hi = _aligned_range(t_lo, t_hi, spec.mesh)
    pmf, tail = _masses_from_cdf(cdf, sf, i_lo, i_hi, spec.mesh)
    return PrvGrid(offset=i_lo, mesh=spec.mesh, pmf=pmf, tail_mass=tail)


def _increasing_root(g, x0: float, max_expand: int = 80):
    """Bracket [lo, hi] with g(lo) <= 0 < g(hi) for an increasing g, expanding
    geometrically from x0 and bisecting. Used for quantile cuts of CDFs."""
    lo = hi = x0
    step = max(1.0, abs(x0))
    for _ in range(max_expand):
        if g(lo) <= 0:
            break
        lo -= step
        step *= 2.0
    else:
        raise ConfigurationError("failed to bracket a CDF quantile (low side)")
    step = max(1.0, abs(x0))
    for _ in range(max_expand):
        if g(hi) > 0:
            break
        hi += step
        step *= 2.0
    else:
        raise ConfigurationError("failed to bracket a CDF quantile (high side)")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


# -- composition ---------------------------------------------------------------


def rebin(prv: PrvGrid, new_mesh: float) -> PrvGrid:
    """Coarsen a PRV to an integer-multiple mesh by snapping masses to the
    nearest coarse lattice point (moves each atom by at most new_mesh / 2)."""
    ratio = new_mesh / prv.mesh
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9:
        raise DomainError("rebin target must be an integer multiple of the mesh")
    if k == 1:
        return prv
    idx = np.round((prv.offset + np.arange(prv.pmf.size)) / k).astype(int)
    lo, hi = int(idx[0]), int(idx[-1])
    out = np.zeros(hi - lo + 1)
    np.add.at(out, idx - lo, prv.pmf)
    return PrvGrid(offset=lo, mesh=new_mesh, pmf=out, tail_mass=prv.tail_mass)


def convolve(a: PrvGrid, b: PrvGrid) -> PrvGrid:
    """Distribution of the sum of two independent PRVs (linear convolution).

    Meshes related by an integer factor are aligned by rebinning the finer
    grid; anything else is rejected.
    """
    if a.mesh != b.mesh:
        coarse = max(a.mesh, b.mesh)
        a = rebin(a, coarse)
        b = rebin(b, coarse)
    n = a.pmf.size + b.pmf.size - 1
    nfft = sfft.next_fast_len(n)
    fa = sfft.rfft(a.pmf, nfft)
    fb = sfft.rfft(b.pmf, nfft)
    out = sfft.irfft(fa * fb, nfft)[:n]
    np.clip(out, 0.0, None, out=out)
    tail = a.tail_mass + b.tail_mass
    # Absorb the (tiny) mass defect from clipping FFT noise into the slack.
    tail += max(0.0, (1.0 - a.tail_mass) * (1.0 - b.tail_mass) - float(out.sum()))
    return PrvGrid(offset=a.offset + b.offset, mesh=a.mesh, pmf=out,
                   tail_mass=min(tail, 1.0))


def self_compose(prv: PrvGrid, k: int,
                 grid_spec: GridSpec | None = None) -> PrvGrid:
    """k-fold self-composition by cyclic FFT exponentiation.

    The working window is the union of the single-factor support and the
    composed moment range mean*k +- std_span*sqrt(k)*std, so the composed law
    (whose tails beyond that window are negligible by construction) wraps onto
    itself consistently; truncated mass is accounted k-fold.
    """
    spec = grid_spec or GridSpec(mesh=prv.mesh)
    if k < 1:
        raise DomainError(f"composition count must be >= 1, got {k}")
    if k == 1 or prv.pmf.size == 1:
        out_tail = min(prv.tail_mass * k, 1.0)
        if out_tail > spec.tail_budget:
            raise AccuracyError(
                f"accumulated truncated mass {out_tail:g} exceeds budget "
                f"{spec.tail_budget:g}")
        return PrvGrid(prv.offset, prv.mesh, prv.pmf, out_tail)
    mesh = prv.mesh
    m1, v1 = prv.mean(), prv.var()
    half = spec.std_span * math.sqrt(k * v1)
    lo = min(prv.lo, k * m1 - half)
    hi = max(prv.hi, k * m1 + half)
    i_lo, i_hi = _aligned_range(lo, hi, mesh)
    n = i_hi - i_lo + 1
    buf = np.zeros(n)
    buf[prv.offset - i_lo: prv.offset - i_lo + prv.pmf.size] = prv.pmf
    fa = sfft.rfft(buf)
    out = sfft.irfft(fa ** k, n)
    # Cyclic indices live at k*offset + j (mod n); roll back onto offset + i.
    out = np.roll(out, ((k - 1) * i_lo) % n)
    np.clip(out, 0.0, None, out=out)
    tail = min(prv.tail_mass * k, 1.0)
    tail += max(0.0, (1.0 - prv.tail_mass) ** k - float(out.sum()))
    if tail > spec.tail_budget:
        raise AccuracyError(
            f"accumulated truncated mass {tail:g} exceeds budget "
            f"{spec.tail_budget:g}")
    return PrvGrid(offset=i_lo, mesh=mesh, pmf=out, tail_mass=min(tail, 1.0))


def prv_delta(prv: PrvGrid, eps: float) -> float:
    """delta(eps) = sum_{t > eps} (1 - e^{eps - t}) pmf(t), in [0, 1].

    The truncated tail_mass is available as one-sided upper slack on top of
    the returned value.
    """
    t = prv.grid()
    mask = t > eps
    if not np.any(mask):
        return 0.0
    val = float(np.dot(-np.expm1(eps - t[mask]), prv.pmf[mask]))
    return min(max(val, 0.0), 1.0)


def discretization_estimate(prv: PrvGrid) -> float:
    """Heuristic discretization error scale for delta queries (midpoint-rule
    second-order bound); mesh halving should move delta by at most about 4x
    this value."""
    return 0.5 * prv.mesh ** 2


def evaluate_composite(composite, eps_list, grid_spec: GridSpec | None = None):
    """Evaluate a symbolic product of Gdp / SubsampledGdp factors.

    `composite` is anything with a `.factors` iterable whose members carry
    `mu` (and `p`, `multiplicity` for subsampled factors). Builds each
    factor's PRV on a shared mesh with the truncation target split across the
    total factor count, composes by FFT and returns [(eps, delta)] pairs.
    An empty product is perfectly private: delta(eps) = max(0, 1 - e^eps).
    """
    spec = grid_spec or GridSpec()
    factors = list(composite.factors)
    eps_list = [float(e) for e in eps_list]
    total = sum(getattr(f, "multiplicity", 1) for f in factors)
    if total == 0:
        return [(e, max(0.0, -math.expm1(e))) for e in eps_list]
    per_factor = GridSpec(mesh=spec.mesh, std_span=spec.std_span,
                          tail_bound=spec.tail_bound / total,
                          tail_budget=spec.tail_budget)
    composed = None
    for f in factors:
        mult = getattr(f, "multiplicity", 1)
        if hasattr(f, "p"):
            prv = prv_of_subsampled_gdp(f.mu, f.p, per_factor)
        else:
            prv = prv_of_gdp(f.mu, per_factor)
        if mult > 1:
            prv = self_compose(prv, mult, per_factor)
        composed = prv if composed is None else convolve(composed, prv)
    if composed.tail_mass > spec.tail_budget:
        raise AccuracyError(
            f"accumulated truncated mass {composed.tail_mass:g} exceeds "
            f"budget {spec.tail_budget:g}")
    return [(e, prv_delta(composed, e)) for e in eps_list]


def delta_table_rows(composite, eps_list, grid_spec: GridSpec | None = None):
    """(eps, delta, uncertainty) rows for CSV export; uncertainty combines the
    truncated mass with the discretization heuristic."""
    spec = grid_spec or GridSpec()
    pairs = evaluate_composite(composite, eps_list, spec)
    unc = spec.tail_bound + 0.5 * spec.mesh ** 2
    return [(e, d, unc) for e, d in pairs]
