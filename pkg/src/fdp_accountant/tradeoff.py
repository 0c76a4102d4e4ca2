"""Tradeoff-curve arithmetic for f-DP accounting.

A tradeoff curve maps a type-I error budget alpha to the smallest achievable
type-II error when distinguishing two distributions; it is decreasing, convex
and bounded by 1 - alpha. Curves are stored as piecewise-linear interpolants
on a fixed alpha grid and are immutable: every operation returns a new curve
that is validated against those invariants on construction.

The Gaussian curve G(mu)(alpha) = Phi(Phi^{-1}(1 - alpha) - mu) is the basic
building block; the subsampling operator symmetrizes and convexifies the
mixture curve p*f + (1-p)*Id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import normal
from .errors import DomainError, InvalidCurveError

DEFAULT_GRID_SIZE = 10_001
# Geometric tail refinement: Phi^{-1} blows up at alpha in {0, 1} and the
# (eps, delta) conversions are driven by exactly those regions.
TAIL_FLOOR = 1e-12
TAIL_POINTS_PER_DECADE = 16

CONVEXITY_TOL = 1e-12
UPPER_BOUND_TOL = 1e-12
MONOTONE_TOL = 1e-12
DEFAULT_ORDER_TOL = 1e-9

CSV_HEADER = "alpha,f"


def alpha_grid(grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Uniform alpha grid plus geometric refinement near both endpoints."""
    if grid_size < 3:
        raise DomainError(f"grid_size must be >= 3, got {grid_size}")
    base = np.linspace(0.0, 1.0, grid_size)
    mesh = 1.0 / (grid_size - 1)
    if mesh <= TAIL_FLOOR:
        return base
    decades = math.log10(mesh / TAIL_FLOOR)
    n_tail = max(2, int(math.ceil(decades * TAIL_POINTS_PER_DECADE)))
    tail = np.geomspace(TAIL_FLOOR, mesh, n_tail)
    grid = np.unique(np.concatenate([base, tail, 1.0 - tail]))
    grid[0], grid[-1] = 0.0, 1.0
    return grid


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    """Discretized tradeoff function on a sorted alpha grid."""

    alphas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "values", values)
        self.validate()
        alphas.flags.writeable = False
        values.flags.writeable = False

    @property
    def grid_size(self) -> int:
        return self.alphas.size

    @property
    def mesh(self) -> float:
        """Largest alpha spacing of the grid."""
        return float(np.max(np.diff(self.alphas)))

    def validate(self) -> None:
        a, v = self.alphas, self.values
        if a.ndim != 1 or a.shape != v.shape or a.size < 2:
            raise InvalidCurveError("curve needs matching 1-d grids of size >= 2")
        if a[0] != 0.0 or a[-1] != 1.0:
            raise InvalidCurveError("alpha grid must span [0, 1] exactly")
        if np.any(np.diff(a) <= 0):
            raise InvalidCurveError("alpha grid must be strictly increasing")
        if np.any(np.diff(v) > MONOTONE_TOL):
            raise InvalidCurveError("values must be non-increasing")
        if np.any(v < -MONOTONE_TOL) or np.any(v > 1.0 + MONOTONE_TOL):
            raise InvalidCurveError("values must lie in [0, 1]")
        if np.any(v > 1.0 - a + UPPER_BOUND_TOL):
            raise InvalidCurveError("values must satisfy f(alpha) <= 1 - alpha")
        # Discrete convexity: each interior point lies on or below the chord of
        # its neighbours, with an absolute slack for round-off.
        span = a[2:] - a[:-2]
        chord = v[:-2] * (a[2:] - a[1:-1]) + v[2:] * (a[1:-1] - a[:-2])
        if np.any(v[1:-1] * span > chord + CONVEXITY_TOL * span + CONVEXITY_TOL):
            raise InvalidCurveError("piecewise-linear interpolant is not convex")

    def __call__(self, alpha):
        """Evaluate the piecewise-linear interpolant."""
        return np.interp(alpha, self.alphas, self.values)

    # -- serialization ------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for a, v in zip(self.alphas, self.values):
                fh.write(f"{a:.17g},{v:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "TradeoffCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def to_json(self) -> str:
        return json.dumps({"alphas": self.alphas.tolist(), "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "TradeoffCurve":
        doc = json.loads(text)
        return cls(np.asarray(doc["alphas"]), np.asarray(doc["values"]))


def identity_curve(alphas=None) -> TradeoffCurve:
    """Id(alpha) = 1 - alpha, the fully private curve."""
    a = alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    return TradeoffCurve(a, 1.0 - a)


# -- Gaussian tradeoff ------------------------------------------------------


def gdp_eval(mu: float, alpha):
    """G(mu)(alpha) = Phi(Phi^{-1}(1 - alpha) - mu).

    Endpoints are exact: alpha = 0 gives 1, alpha = 1 gives 0, and mu = 0
    gives the identity curve.
    """
    if not mu >= 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    arr = np.asarray(alpha, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("alpha must lie in [0, 1]")
    if mu == 0:
        out = 1.0 - arr
    else:
        with np.errstate(invalid="ignore"):
            out = normal.cdf(normal.inv_upper(arr) - mu)
        out = np.where(arr == 0.0, 1.0, np.where(arr == 1.0, 0.0, out))
    return float(out) if np.isscalar(alpha) else out


def compose_gdp(mu1: float, mu2: float) -> float:
    """GDP parameters add in quadrature under composition."""
    if mu1 < 0 or mu2 < 0:
        raise DomainError("GDP parameters must be >= 0")
    return math.hypot(mu1, mu2)


def compose_gdp_n(mu: float, n: int) -> float:
    """n-fold self-composition of G(mu)."""
    if mu < 0:
        raise DomainError("GDP parameter must be >= 0")
    if n < 1:
        raise DomainError("n must be >= 1")
    return mu * math.sqrt(n)


def curve_of_gdp(mu: float, grid_size: int | None = None, alphas=None) -> TradeoffCurve:
    """Discretize G(mu) on the standard (or a supplied) alpha grid."""
    if alphas is None:
        alphas = alpha_grid(DEFAULT_GRID_SIZE if grid_size is None else grid_size)
    else:
        alphas = np.asarray(alphas, dtype=float)
    return TradeoffCurve(alphas, gdp_eval(mu, alphas))


# -- inversion and convexification ------------------------------------------


def _inverse_values(alphas: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Left-continuous inverse f^{-1}(q) = inf{x : f(x) <= q} of a decreasing
    piecewise-linear curve, evaluated at `query`.

    Plateaus map to the left endpoint of the plateau; below the smallest value
    the set is empty and the inverse is 1, above the largest it is 0.
    """
    xs = values[::-1]
    ys = alphas[::-1]
    ux, starts = np.unique(xs, return_index=True)
    uy = np.minimum.reduceat(ys, starts)
    return np.interp(query, ux, uy, left=1.0, right=0.0)


def invert_curve(f: TradeoffCurve) -> TradeoffCurve:
    """f^{-1} on the same grid; equals f on the grid for symmetric curves."""
    vals = _inverse_values(f.alphas, f.values, f.alphas)
    vals = np.minimum.accumulate(vals)
    np.clip(vals, 0.0, 1.0 - f.alphas, out=vals)
    return TradeoffCurve(f.alphas, vals)


def _lower_hull(x: np.ndarray, y: np.ndarray):
    """Monotone-chain lower convex hull of points sorted by x."""
    hx, hy = [], []
    for px, py in zip(x, y):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (py - hy[-2]) - (hy[-1] - hy[-2]) * (px - hx[-2])
            if cross <= 0.0:
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(px)
        hy.append(py)
    return np.asarray(hx), np.asarray(hy)


def convexify(points) -> TradeoffCurve:
    """Greatest convex non-increasing minorant of a point cloud covering [0, 1],
    clipped to [0, 1 - alpha]."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise DomainError("convexify needs a nonempty point cloud")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("points must be (alpha, value) pairs")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    x, y = pts[order, 0], pts[order, 1]
    if x[0] != 0.0 or x[-1] != 1.0:
        raise DomainError("point cloud must cover alpha in [0, 1]")
    # Ties on alpha keep the lower value: first occurrence after the lexsort.
    ux, starts = np.unique(x, return_index=True)
    uy = y[starts]
    hx, hy = _lower_hull(ux, uy)
    vals = np.interp(ux, hx, hy)
    vals = np.minimum.accumulate(vals)
    np.clip(vals, 0.0, 1.0 - ux, out=vals)
    return TradeoffCurve(ux, vals)


# -- subsampling operator ----------------------------------------------------


def subsample(f: TradeoffCurve, p: float) -> TradeoffCurve:
    """Subsampling operator: convexified symmetrization of p*f + (1-p)*Id.

    The result is the largest tradeoff function below both the mixture curve
    f_p and its inverse; it is symmetric (equal to its own inverse) up to grid
    error. p = 0 returns Id exactly, p = 1 the symmetrization of f.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"subsampling rate must lie in [0, 1], got {p}")
    if p == 0.0:
        return identity_curve(f.alphas)
    fp = p * f.values + (1.0 - p) * (1.0 - f.alphas)
    fp_inv = _inverse_values(f.alphas, fp, f.alphas)
    m = np.minimum(fp, fp_inv)
    return convexify(np.column_stack([f.alphas, m]))


def mixture_gaussian_tradeoff(p: float, mu: float, grid_size: int | None = None,
                              alphas=None) -> TradeoffCurve:
    """Exact curve of N(0,1) versus the mixture p*N(mu,1) + (1-p)*N(0,1).

    The likelihood ratio of the mixture against N(0,1) is increasing in the
    observation, so optimal tests reject above a threshold z. Scanning z with
    type-I error alpha(z) = 1 - Phi(z) gives type-II error
    (1-p)*Phi(z) + p*Phi(z - mu); the grid parametrizes z = Phi^{-1}(1-alpha).
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"mixture weight must lie in [0, 1], got {p}")
    if mu < 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    if alphas is None:
        alphas = alpha_grid(DEFAULT_GRID_SIZE if grid_size is None else grid_size)
    else:
        alphas = np.asarray(alphas, dtype=float)
    if p == 0.0 or mu == 0.0:
        return identity_curve(alphas)
    z = normal.inv_upper(alphas)
    with np.errstate(invalid="ignore"):
        vals = (1.0 - p) * (1.0 - alphas) + p * normal.cdf(z - mu)
    vals = np.where(alphas == 0.0, 1.0, np.where(alphas == 1.0, 0.0, vals))
    return TradeoffCurve(alphas, vals)


def two_sided_mixture_tradeoff(p: float, mu: float, grid_size: int | None = None,
                               n_thresholds: int = 40_001) -> TradeoffCurve:
    """Experimental oracle: curve of p*N(-mu,1) + (1-p)*N(0,1) against
    p*N(mu,1) + (1-p)*N(0,1), by threshold scan.

    Not used in any bound; exposed for numerical exploration of how far the
    subsampled operator might be improvable.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"mixture weight must lie in [0, 1], got {p}")
    if mu < 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    alphas = alpha_grid(DEFAULT_GRID_SIZE if grid_size is None else grid_size)
    if p == 0.0 or mu == 0.0:
        return identity_curve(alphas)
    zmax = 10.0 + mu
    z = np.linspace(-zmax, zmax, n_thresholds)
    # Reject for large observations; both families have monotone likelihood
    # ratio in the observation.
    a = p * normal.sf(z + mu) + (1.0 - p) * normal.sf(z)
    b = p * normal.cdf(z - mu) + (1.0 - p) * normal.cdf(z)
    a, b = a[::-1], b[::-1]
    vals = np.interp(alphas, a, b)
    vals[alphas == 0.0] = 1.0
    vals[alphas == 1.0] = 0.0
    vals = np.minimum.accumulate(vals)
    np.clip(vals, 0.0, 1.0 - alphas, out=vals)
    return TradeoffCurve(alphas, vals)


# -- comparison --------------------------------------------------------------


def curve_geq(f: TradeoffCurve, g: TradeoffCurve, tol: float | None = None):
    """Pointwise f >= g - tol on the common grid; returns (holds, max violation).

    The default tolerance is 1e-9 plus one mesh width of interpolation slack.
    """
    if not np.array_equal(f.alphas, g.alphas):
        raise DomainError("curves must share the same alpha grid")
    if tol is None:
        tol = DEFAULT_ORDER_TOL + f.mesh
    violation = float(np.max(g.values - f.values))
    return violation <= tol, violation
