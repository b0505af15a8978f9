"""Analytic state constructors: Fock states, squeezed cats, combs, f/g references.

Every constructor renormalizes numerically (analytic prefactors are only
asymptotically valid) and builds even/odd states from |x| so that parity is
exact to the last bit.

Cat conventions
---------------
``squeezed_cat`` returns the cat in its localized ("peak") representation:
two Gaussian lobes at x = +-sqrt(2)*alpha/s' with squeezed width
exp(-s'^2 (x -+ mu)^2 / 2).  ``squeezed_cat_shifted`` returns the pi/2
phase-shifted partner, a cos/sin-modulated Gaussian
exp(-s'^2 x^2/2) * cos(s' sqrt(2) alpha x), which is the form consumed by
comb breeding.  The two families are Fourier images of each other with the
width parameter inverted: shifted(alpha, s') == FT[peak(alpha, 1/s')].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridError, TailError
from .qgrid import QuadratureGrid, WaveFunction

ENVELOPE_CUTOFF = 1e-12  # comb k-sum truncation relative to the envelope peak
CONDITION_MARGIN = 3.0   # reporting margin for the comb-state condition


@dataclass(frozen=True)
class CatParams:
    parity: str       # "even" or "odd"
    alpha: float
    s_prime: float

    def __post_init__(self):
        if self.parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if not (self.alpha > 0 and self.s_prime > 0):
            raise ValueError("alpha and s_prime must be positive")


@dataclass(frozen=True)
class CombParams:
    logical_bit: int  # 0 or 1
    a: float          # peak spacing
    s: float          # peak width
    s_prime: float    # envelope parameter (envelope std is 1/s_prime)

    def __post_init__(self):
        if self.logical_bit not in (0, 1):
            raise ValueError("logical_bit must be 0 or 1")
        if min(self.a, self.s, self.s_prime) <= 0:
            raise ValueError("a, s, s_prime must be positive")

    @property
    def condition_ok(self) -> bool:
        """s << a << 1/s' evaluated with margin 3."""
        return self.s < self.a / CONDITION_MARGIN and self.a < 1.0 / (CONDITION_MARGIN * self.s_prime)


@dataclass(frozen=True)
class FGParams:
    a_bar: float
    s_bar: float
    s_prime: float

    def __post_init__(self):
        if min(self.a_bar, self.s_bar, self.s_prime) <= 0:
            raise ValueError("a_bar, s_bar, s_prime must be positive")

    @classmethod
    def from_comb(cls, comb: CombParams) -> "FGParams":
        """The modulation-stage image of a comb: a_bar = sqrt(2) a, s_bar = sqrt(2) s."""
        return cls(math.sqrt(2.0) * comb.a, math.sqrt(2.0) * comb.s, comb.s_prime)


def _normalized(grid: QuadratureGrid, values: np.ndarray) -> WaveFunction:
    psi = WaveFunction(grid, values).normalize()
    if not psi.tails_ok():
        raise TailError("constructed state does not fit the grid")
    return psi


def fock(n: int, grid: QuadratureGrid) -> WaveFunction:
    """Normalized Hermite function of order n (vacuum variance 1/2)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if grid.dx >= 1.0 / (2.0 * math.sqrt(2.0 * n + 1.0)):
        raise GridError(f"grid too coarse for fock({n}): dx = {grid.dx:.4g}")
    x = grid.x
    h_prev = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n == 0:
        return _normalized(grid, h_prev)
    h = math.sqrt(2.0) * x * h_prev
    for k in range(2, n + 1):
        h, h_prev = math.sqrt(2.0 / k) * x * h - math.sqrt((k - 1.0) / k) * h_prev, h
    return _normalized(grid, h)


def squeezed_cat(params: CatParams, grid: QuadratureGrid) -> WaveFunction:
    """Squeezed Schroedinger cat in the peak representation.

    S(s')(|alpha> +- |-alpha>): Gaussian lobes at +-sqrt(2) alpha / s' with
    exponent s'^2 (x -+ mu)^2 / 2.  Exactly even (+) or odd (-) by
    construction; always renormalized.
    """
    mu = math.sqrt(2.0) * params.alpha / params.s_prime
    s2 = params.s_prime ** 2
    u = np.abs(grid.x)
    right = np.exp(-0.5 * s2 * (u - mu) ** 2)
    left = np.exp(-0.5 * s2 * (u + mu) ** 2)
    if params.parity == "even":
        vals = right + left
    else:
        vals = np.sign(grid.x) * (right - left)
    return _normalized(grid, vals)


def squeezed_cat_shifted(params: CatParams, grid: QuadratureGrid) -> WaveFunction:
    """pi/2 phase-shifted squeezed cat: envelope exp(-s'^2 x^2/2) modulated by
    cos (even) or sin (odd) of s' sqrt(2) alpha x.  Input form for comb breeding."""
    freq = params.s_prime * math.sqrt(2.0) * params.alpha
    period = 2.0 * np.pi / freq
    if grid.dx > period / 6.0:
        raise GridError("grid too coarse to resolve the cat modulation")
    u = np.abs(grid.x)
    env = np.exp(-0.5 * (params.s_prime * u) ** 2)
    if params.parity == "even":
        vals = env * np.cos(freq * u)
    else:
        vals = np.sign(grid.x) * env * np.sin(freq * u)
    return _normalized(grid, vals)


def _gauss_train(u: np.ndarray, centers: np.ndarray, s: float) -> np.ndarray:
    out = np.zeros_like(u)
    for c in centers:
        out += np.exp(-0.5 * ((u - c) / s) ** 2)
    return out


def _comb_centers(spacing: float, offset: float, s_prime: float, x_max: float) -> np.ndarray:
    """All peak centers k*spacing + offset whose envelope weight exceeds the cutoff."""
    reach = math.sqrt(-2.0 * math.log(ENVELOPE_CUTOFF)) / s_prime
    reach = min(reach, x_max)
    kmax = int(math.floor((reach - offset) / spacing)) + 1
    kmin = int(math.ceil((-reach - offset) / spacing)) - 1
    c = offset + spacing * np.arange(kmin, kmax + 1)
    return c[np.abs(c) <= reach + spacing]


def comb(params: CombParams, grid: QuadratureGrid) -> WaveFunction:
    """Comb state: Gaussian envelope (std 1/s') times a train of G_s peaks.

    Logical 0 has peaks at k*a, logical 1 at (k + 1/2)*a.
    """
    if grid.dx > params.s / 4.0:
        raise GridError(f"grid cannot resolve comb peaks: dx = {grid.dx:.4g} > s/4")
    offset = 0.0 if params.logical_bit == 0 else 0.5 * params.a
    centers = _comb_centers(params.a, offset, params.s_prime, grid.x_max)
    u = np.abs(grid.x)
    env = np.exp(-0.5 * (params.s_prime * u) ** 2)
    vals = env * _gauss_train(u, centers, params.s)
    return _normalized(grid, vals)


def fg_reference(params: FGParams, kind: str, grid: QuadratureGrid) -> WaveFunction:
    """Reference states for sign binning: half-integer comb at spacing a_bar,
    peak width s_bar, times cos[pi x / (2 a_bar)] (f, even) or sin (g, odd)."""
    if kind not in ("f", "g"):
        raise ValueError("kind must be 'f' or 'g'")
    if grid.dx > params.s_bar / 4.0:
        raise GridError("grid cannot resolve f/g peaks")
    centers = _comb_centers(params.a_bar, 0.5 * params.a_bar, params.s_prime, grid.x_max)
    u = np.abs(grid.x)
    env = np.exp(-0.5 * (params.s_prime * u) ** 2)
    train = _gauss_train(u, centers, params.s_bar)
    w = 0.5 * np.pi * u / params.a_bar
    if kind == "f":
        vals = env * train * np.cos(w)
    else:
        vals = np.sign(grid.x) * env * train * np.sin(w)
    return _normalized(grid, vals)
