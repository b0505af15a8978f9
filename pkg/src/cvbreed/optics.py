"""Physical primitives: heralded beamsplitter mixing, squeezing, photon
annihilation, and the loss channel acting on homodyne statistics.

The elementary operation mixes two states on a symmetric beamsplitter and
conditions on a quadrature measurement of one output port.  For a measured
value x_m the surviving mode is

    psi_out(u)  ~  psi_1((u + x_m)/sqrt(2)) * psi_2((u - x_m)/sqrt(2))

(kernels transform with the same substitution on both indices).  Finite
acceptance windows produce a probability-weighted mixture over Gauss-Legendre
samples of x_m inside the window set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import GridError, GuardError, TailError
from .qgrid import (
    DensityKernel,
    QuadratureGrid,
    State,
    WaveFunction,
    fidelity,
    interp_matrix,
    interp_values,
    to_momentum,
    to_position,
)
from .states import CombParams, comb

GL_NODES = 5          # default Gauss-Legendre nodes per accepted interval
SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Heralding windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeraldWindow:
    """Acceptance set for the heralding quadrature measurement.

    kind "single": one interval of the given width around ``center``.
    kind "periodic": intervals of the given width around every lattice point
    k * spacing + offset.
    """

    kind: str
    width: float
    center: float = 0.0
    spacing: Optional[float] = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("single", "periodic"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError("window width must be positive")
        if self.kind == "periodic":
            if self.spacing is None or self.spacing <= 0:
                raise ValueError("periodic window needs a positive spacing")
            if not self.width < self.spacing:
                raise ValueError("periodic windows must be disjoint (width < spacing)")

    @classmethod
    def single(cls, width: float, center: float = 0.0) -> "HeraldWindow":
        return cls("single", width, center=center)

    @classmethod
    def periodic(cls, spacing: float, width: float, offset: float = 0.0) -> "HeraldWindow":
        return cls("periodic", width, spacing=spacing, offset=offset)

    @classmethod
    def point(cls, grid: QuadratureGrid, center: float = 0.0) -> "HeraldWindow":
        """Degenerate window of one grid cell: the operational Delta-x -> 0."""
        return cls("single", grid.dx, center=center)

    def intervals(self, x_limit: float) -> list[tuple[float, float]]:
        h = 0.5 * self.width
        if self.kind == "single":
            lo, hi = self.center - h, self.center + h
            lo, hi = max(lo, -x_limit), min(hi, x_limit)
            return [(lo, hi)] if hi > lo else []
        out = []
        kmax = int(math.floor((x_limit - self.offset) / self.spacing))
        kmin = int(math.ceil((-x_limit - self.offset) / self.spacing))
        for k in range(kmin, kmax + 1):
            c = k * self.spacing + self.offset
            lo, hi = max(c - h, -x_limit), min(c + h, x_limit)
            if hi > lo:
                out.append((lo, hi))
        return out


@dataclass(frozen=True)
class HeraldOutcome:
    state: DensityKernel
    probability: float
    window_samples: list  # [(x_m, weight)], weights sum to probability
    pure_samples: Optional[list] = None  # [WaveFunction], aligned, pure-input path

    def central_state(self) -> WaveFunction:
        """Pure state of the dominant sample (exact for point windows)."""
        if self.pure_samples:
            i = int(np.argmax([w for _, w in self.window_samples]))
            return self.pure_samples[i]
        return self.state.dominant_state()


def _gl_samples(intervals: Sequence[tuple[float, float]], nodes: int):
    """Gauss-Legendre nodes and weights over a union of intervals."""
    base_x, base_w = np.polynomial.legendre.leggauss(nodes)
    xs, ws = [], []
    for lo, hi in intervals:
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        xs.append(mid + half * base_x)
        ws.append(half * base_w)
    return np.concatenate(xs), np.concatenate(ws)


def herald_mix(in1: State, in2: State, window: HeraldWindow,
               nodes: int = GL_NODES) -> HeraldOutcome:
    """Mix two states on a symmetric beamsplitter and herald on the window.

    Returns the (generally mixed) conditional output state, the heralding
    probability, and the quadrature samples used.
    """
    g = in1.grid
    if g != in2.grid:
        raise GridError("herald_mix requires a common grid")
    margin = 4.0 * g.dx
    intervals = window.intervals(g.x_max - margin)
    if not intervals:
        raise GridError("herald window is empty on this grid")
    xm, glw = _gl_samples(intervals, nodes)

    pure = isinstance(in1, WaveFunction) and isinstance(in2, WaveFunction)
    u = g.x
    if pure:
        a1 = in1.normalize()
        a2 = in2.normalize()
        states, weights = [], []
        for x in xm:
            v1 = interp_values(a1, (u + x) / SQRT2)
            v2 = interp_values(a2, (u - x) / SQRT2)
            phi = v1 * v2
            dens = float(np.sum(np.abs(phi) ** 2) * g.dx)
            weights.append(dens)
            states.append(phi)
        weights = np.asarray(weights) * glw
        prob = float(np.sum(weights))
        if prob <= 0:
            raise GuardError("heralding probability vanished on the window")
        kern = np.zeros((g.n_points, g.n_points), dtype=complex)
        pure_list = []
        for phi, w in zip(states, weights):
            psi = WaveFunction(g, phi).normalize()
            pure_list.append(psi)
            kern += (w / prob) * np.outer(psi.amplitudes, psi.amplitudes.conj())
        out = DensityKernel(g, kern)
        return HeraldOutcome(out, prob, list(zip(xm.tolist(), weights.tolist())), pure_list)

    r1 = in1 if isinstance(in1, DensityKernel) else DensityKernel.from_pure(in1)
    r2 = in2 if isinstance(in2, DensityKernel) else DensityKernel.from_pure(in2)
    kern = np.zeros((g.n_points, g.n_points), dtype=complex)
    weights = []
    for x, w in zip(xm, glw):
        ap = interp_matrix(g, (u + x) / SQRT2)
        am = interp_matrix(g, (u - x) / SQRT2)
        k1 = ap @ r1.kernel @ ap.T
        k2 = am @ r2.kernel @ am.T
        km = k1 * k2
        dens = float(np.real(np.trace(km)) * g.dx)
        weights.append(w * dens)
        kern += w * km
    prob = float(np.sum(weights))
    if prob <= 0:
        raise GuardError("heralding probability vanished on the window")
    tr = float(np.real(np.trace(kern)) * g.dx)
    out = DensityKernel(g, 0.5 * (kern + kern.conj().T) / tr)
    return HeraldOutcome(out, prob, list(zip(xm.tolist(), weights)))


def herald_pure_sample(in1: WaveFunction, in2: WaveFunction, x_m: float) -> tuple[WaveFunction, float]:
    """Conditional output and probability density for a single measured value."""
    g = in1.grid
    if g != in2.grid:
        raise GridError("herald requires a common grid")
    u = g.x
    phi = interp_values(in1.normalize(), (u + x_m) / SQRT2) * \
        interp_values(in2.normalize(), (u - x_m) / SQRT2)
    dens = float(np.sum(np.abs(phi) ** 2) * g.dx)
    if dens <= 0:
        raise GuardError("vanishing heralding density at the requested value")
    return WaveFunction(g, phi).normalize(), dens


# ---------------------------------------------------------------------------
# Comb Bell-state identity (beamsplitter action on two combs)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CombIdentityReport:
    condition_ok: bool
    spacing_out: float
    fidelity_zero: float   # herald at x_m = 0 vs comb 0 at spacing a*sqrt(2)
    fidelity_half: float   # herald at x_m = a*sqrt(2)/2 vs comb 1
    margins: tuple

    @property
    def ok(self) -> bool:
        return self.condition_ok and self.fidelity_zero > 0.99 and self.fidelity_half > 0.99


def herald_comb_identity_check(params: CombParams, grid: QuadratureGrid) -> CombIdentityReport:
    """Verify that mixing two logical-0 combs and heralding on the lattice
    produces the logical-0 / logical-1 combs at spacing a*sqrt(2)."""
    margins = (params.a / params.s, 1.0 / (params.s_prime * params.a))
    a_out = params.a * SQRT2
    if not params.condition_ok:
        return CombIdentityReport(False, a_out, float("nan"), float("nan"), margins)
    c0 = comb(params, grid)
    t0 = comb(CombParams(0, a_out, params.s, params.s_prime), grid)
    t1 = comb(CombParams(1, a_out, params.s, params.s_prime), grid)
    out0, _ = herald_pure_sample(c0, c0, 0.0)
    out1, _ = herald_pure_sample(c0, c0, 0.5 * a_out)
    return CombIdentityReport(
        True, a_out,
        fidelity(out0, t0),
        fidelity(out1, t1),
        margins,
    )


# ---------------------------------------------------------------------------
# Squeezing and photon annihilation
# ---------------------------------------------------------------------------

def squeeze(state: State, s: float) -> State:
    """x -> s x rescaling: psi(x) -> sqrt(s) psi(s x).

    Position variance divides by s^2, momentum variance multiplies by s^2.
    """
    if not s > 0:
        raise ValueError("squeeze factor must be positive")
    if s == 1.0:
        return state
    g = state.grid
    y = s * g.x
    if isinstance(state, WaveFunction):
        vals = math.sqrt(s) * interp_values(state, y)
        out = WaveFunction(g, vals).normalize()
        if not out.tails_ok():
            raise TailError("squeezed state spills over the grid edge")
        return out
    m = interp_matrix(g, y)
    k = s * (m @ state.kernel @ m.T)
    out = DensityKernel(g, 0.5 * (k + k.conj().T)).normalize()
    if not out.tails_ok():
        raise TailError("squeezed kernel spills over the grid edge")
    return out


def _derivative(psi: WaveFunction) -> np.ndarray:
    """Spectral d/dx via the momentum representation."""
    phi = to_momentum(psi, check_tails=False)
    pg = phi.grid
    dphi = WaveFunction(pg, 1j * pg.x * phi.amplitudes)
    return to_position(dphi, psi.grid, check_tails=False).amplitudes


def annihilate(state: State) -> tuple[State, float]:
    """Apply a = (x + d/dx)/sqrt(2); return (renormalized state, weight <n>).

    The pre-normalization weight equals the mean photon number of the input.
    Vacuum input (weight below 1e-10) is a zero-probability event and raises.
    """
    if isinstance(state, WaveFunction):
        psi = state.normalize()
        vals = (psi.grid.x * psi.amplitudes + _derivative(psi)) / SQRT2
        weight = float(np.sum(np.abs(vals) ** 2) * psi.grid.dx)
        if weight < 1e-10:
            raise GuardError("annihilation weight vanishes (vacuum input)")
        return WaveFunction(psi.grid, vals / math.sqrt(weight)), weight

    rho = state.normalize()
    g = rho.grid

    def a_axis0(mat: np.ndarray) -> np.ndarray:
        x = g.x[:, None]
        _, pre, post = _fourier_phase_cache(g)
        phi = post[:, None] * np.fft.fft(pre[:, None] * mat, axis=0)
        pgrid = g.momentum_grid()
        dphi = 1j * pgrid.x[:, None] * phi
        back = np.fft.ifft(dphi / post[:, None], axis=0) / pre[:, None]
        return (x * mat + back) / SQRT2

    b = a_axis0(rho.kernel)
    k = np.conj(a_axis0(np.conj(b).T)).T
    weight = float(np.real(np.trace(k)) * g.dx)
    if weight < 1e-10:
        raise GuardError("annihilation weight vanishes (vacuum input)")
    out = DensityKernel(g, 0.5 * (k + k.conj().T) / weight)
    return out, weight


@lru_cache(maxsize=8)
def _fourier_phase_cache(grid: QuadratureGrid):
    from .qgrid import _phases
    return _phases(grid)


# ---------------------------------------------------------------------------
# Loss channel on homodyne statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossChannel:
    """Energy transmission T per mode; acts on measured-quadrature statistics
    as x -> sqrt(T) x convolved with vacuum noise of variance (1 - T)/2."""

    transmission: float

    def __post_init__(self):
        if not (0.0 < self.transmission <= 1.0):
            raise ValueError(f"transmission must be in (0, 1], got {self.transmission}")


def loss_matrix(grid: QuadratureGrid, transmission: float,
                noise_variance: Optional[float] = None) -> np.ndarray:
    """Markov matrix L with (L f)(x_i) = Int g(x_i - sqrt(T) y) f(y) dy.

    ``noise_variance`` overrides the vacuum value (1 - T)/2; the override is
    what a pre-loss squeeze looks like from the unsqueezed frame.
    """
    if not (0.0 < transmission <= 1.0):
        raise ValueError("transmission must be in (0, 1]")
    var = 0.5 * (1.0 - transmission) if noise_variance is None else noise_variance
    n = grid.n_points
    if var <= 0:
        if transmission == 1.0:
            return np.eye(n)
        var = 1e-300
    x = grid.x
    mu = math.sqrt(transmission) * x
    sigma = math.sqrt(var)
    diff = x[:, None] - mu[None, :]
    if sigma >= 1.5 * grid.dx:
        ker = np.exp(-0.5 * (diff / sigma) ** 2) * (grid.dx / (sigma * math.sqrt(2.0 * math.pi)))
    else:
        # sub-grid noise width: integrate the Gaussian over each cell
        h = 0.5 * grid.dx
        ker = 0.5 * (erf((diff + h) / (sigma * SQRT2)) - erf((diff - h) / (sigma * SQRT2)))
    return ker


def lossy_marginal(density: np.ndarray, grid: QuadratureGrid, channel: LossChannel,
                   noise_variance: Optional[float] = None) -> np.ndarray:
    out = loss_matrix(grid, channel.transmission, noise_variance) @ np.asarray(density)
    s = float(np.sum(np.real(out)) * grid.dx)
    return out / s if s > 0 else out


def lossy_joint_distribution(joint: np.ndarray, grid: QuadratureGrid,
                             channel_a: LossChannel,
                             channel_b: Optional[LossChannel] = None) -> np.ndarray:
    """Apply the per-mode loss map to a joint 2-D quadrature distribution."""
    if channel_b is None:
        channel_b = channel_a
    p = np.asarray(joint, dtype=float)
    if p.shape != (grid.n_points, grid.n_points):
        raise GridError("joint distribution shape does not match the grid")
    la = loss_matrix(grid, channel_a.transmission)
    lb = loss_matrix(grid, channel_b.transmission)
    out = la @ p @ lb.T
    total = float(np.sum(out) * grid.dx ** 2)
    if total <= 0:
        raise GuardError("loss map produced an empty distribution")
    return out / total
