"""Uniform quadrature grid, wavefunctions, density kernels and the x <-> p transform.

Conventions used everywhere in this package:

* vacuum wavefunction is proportional to exp(-x^2/2), i.e. the vacuum
  quadrature variance is 1/2;
* the momentum representation is psi~(p) = (2*pi)^(-1/2) * Int psi(x) exp(-i p x) dx,
  so Hermite functions are eigenfunctions of the transform with eigenvalue (-i)^n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import sparse

from .errors import GridError, TailError

NORM_TOL = 1e-8
HERM_TOL = 1e-10
TAIL_FRACTION = 1e-6


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class QuadratureGrid:
    """Symmetric uniform grid x_i = (i - n/2) * dx, i = 0 .. n-1.

    The point grid contains 0 and -x_max but not +x_max; reflection x -> -x
    maps grid points onto grid points for every index except the leftmost.
    """

    x_max: float
    n_points: int
    dx: float = field(init=False)

    def __post_init__(self):
        if not _is_power_of_two(self.n_points) or self.n_points < 64:
            raise GridError(f"n_points must be a power of two >= 64, got {self.n_points}")
        if not self.x_max > 0:
            raise GridError(f"x_max must be positive, got {self.x_max}")
        object.__setattr__(self, "dx", 2.0 * self.x_max / self.n_points)

    @property
    def x(self) -> np.ndarray:
        # (i - n/2) * dx keeps the +x / -x pairs exact float negations of
        # each other, which the parity checks rely on.
        return (np.arange(self.n_points) - self.n_points // 2) * self.dx

    @property
    def dp(self) -> float:
        return 2.0 * np.pi / (self.n_points * self.dx)

    def momentum_grid(self) -> "QuadratureGrid":
        """Conjugate grid: same point count, p_max = pi / dx."""
        return QuadratureGrid(np.pi / self.dx, self.n_points)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QuadratureGrid)
            and self.n_points == other.n_points
            and self.x_max == other.x_max
        )

    def __hash__(self):
        return hash((self.x_max, self.n_points))


def make_grid(x_max: float, n_points: int) -> QuadratureGrid:
    return QuadratureGrid(float(x_max), int(n_points))


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes psi(x_i) on a quadrature grid."""

    grid: QuadratureGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.n_points,):
            raise GridError("amplitude array does not match the grid")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    def normalize(self) -> "WaveFunction":
        n2 = self.norm_squared()
        if n2 <= 0:
            raise GridError("cannot normalize a zero wavefunction")
        return WaveFunction(self.grid, self.amplitudes / np.sqrt(n2))

    def tails_ok(self, fraction: float = TAIL_FRACTION) -> bool:
        peak = float(np.max(np.abs(self.amplitudes)))
        if peak == 0.0:
            return False
        edge = max(abs(self.amplitudes[0]), abs(self.amplitudes[1]),
                   abs(self.amplitudes[-1]), abs(self.amplitudes[-2]))
        return bool(edge < fraction * peak)

    def require_tails(self):
        if not self.tails_ok():
            raise TailError("wavefunction does not vanish at the grid edge")

    def reflected(self) -> "WaveFunction":
        """Parity image psi(-x); the leftmost (tail) point is self-paired."""
        return WaveFunction(self.grid, np.roll(self.amplitudes[::-1], 1))

    def probability_density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class DensityKernel:
    """rho(x_i, x_j) on a quadrature grid; unit trace means dx * sum(diag) = 1."""

    grid: QuadratureGrid
    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=complex)
        n = self.grid.n_points
        if k.shape != (n, n):
            raise GridError("kernel shape does not match the grid")
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @classmethod
    def from_pure(cls, psi: WaveFunction) -> "DensityKernel":
        a = psi.normalize().amplitudes
        return cls(psi.grid, np.outer(a, a.conj()))

    def trace(self) -> float:
        return float(np.real(np.sum(np.diagonal(self.kernel))) * self.grid.dx)

    def normalize(self) -> "DensityKernel":
        t = self.trace()
        if t <= 0:
            raise GridError("cannot normalize a kernel with non-positive trace")
        return DensityKernel(self.grid, self.kernel / t)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.kernel - self.kernel.conj().T)))

    def purity(self) -> float:
        # Tr rho^2 = sum_ij rho_ij rho_ji dx^2; for Hermitian rho this is
        # the squared Frobenius norm times dx^2.
        return float(np.real(np.vdot(self.kernel, self.kernel)) * self.grid.dx ** 2)

    def diagonal_density(self) -> np.ndarray:
        return np.real(np.diagonal(self.kernel)).copy()

    def dominant_state(self, iterations: int = 60) -> WaveFunction:
        """Leading eigenvector by power iteration (kernels here are near pure)."""
        d = np.abs(np.diagonal(self.kernel))
        v = np.sqrt(d + 1e-300).astype(complex)
        v /= np.linalg.norm(v)
        for _ in range(iterations):
            v = self.kernel @ v
            nv = np.linalg.norm(v)
            if nv == 0:
                raise GridError("power iteration collapsed to zero")
            v /= nv
        # fix the global phase: largest-magnitude component made real positive
        i = int(np.argmax(np.abs(v)))
        v = v * np.exp(-1j * np.angle(v[i]))
        return WaveFunction(self.grid, v / np.sqrt(self.grid.dx)).normalize()

    def tails_ok(self, fraction: float = TAIL_FRACTION) -> bool:
        d = np.abs(np.diagonal(self.kernel))
        peak = float(np.max(d))
        if peak == 0:
            return False
        edge = max(d[0], d[1], d[-1], d[-2])
        return bool(edge < fraction ** 2 * peak * 1e6)  # density ~ |psi|^2


State = Union[WaveFunction, DensityKernel]


def inner(a: WaveFunction, b: WaveFunction) -> complex:
    """<a|b> = Int conj(a) b dx."""
    if a.grid != b.grid:
        raise GridError("inner product requires a common grid")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dx)


def fidelity(state: State, target: WaveFunction) -> float:
    """|<target|state>|^2 for pure states, <target|rho|target> for kernels."""
    t = target.normalize()
    if isinstance(state, WaveFunction):
        return float(abs(inner(t, state.normalize())) ** 2)
    if state.grid != t.grid:
        raise GridError("fidelity requires a common grid")
    rho = state.normalize()
    a = t.amplitudes
    return float(np.real(np.vdot(a, rho.kernel @ a)) * rho.grid.dx ** 2)


# ---------------------------------------------------------------------------
# Fourier transform between the x and p representations
# ---------------------------------------------------------------------------

def _phases(grid: QuadratureGrid):
    n = grid.n_points
    x = grid.x
    pg = grid.momentum_grid()
    p = pg.x
    x0 = x[0]
    p0 = p[0]
    pre = np.exp(-1j * p0 * (x - x0))
    post = np.exp(-1j * x0 * p) * grid.dx / np.sqrt(2.0 * np.pi)
    return pg, pre, post


def to_momentum(psi: WaveFunction, check_tails: bool = True) -> WaveFunction:
    """psi~(p) = (2 pi)^(-1/2) Int psi(x) exp(-i p x) dx on the conjugate grid."""
    if check_tails:
        psi.require_tails()
    pg, pre, post = _phases(psi.grid)
    u = np.fft.fft(psi.amplitudes * pre)
    return WaveFunction(pg, post * u)


def to_position(phi: WaveFunction, grid: QuadratureGrid | None = None,
                check_tails: bool = True) -> WaveFunction:
    """Inverse of :func:`to_momentum`."""
    if check_tails:
        phi.require_tails()
    if grid is None:
        grid = phi.grid.momentum_grid()
    if phi.grid != grid.momentum_grid():
        raise GridError("momentum grid is not conjugate to the requested grid")
    pg, pre, post = _phases(grid)
    u = phi.amplitudes / post
    a = np.fft.ifft(u) / pre
    return WaveFunction(grid, a)


def _momentum_transform_columns(mat: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    _, pre, post = _phases(grid)
    return post[:, None] * np.fft.fft(pre[:, None] * mat, axis=0)


def kernel_to_momentum(rho: DensityKernel) -> DensityKernel:
    """rho~(p,p') = A rho A^dagger with A the unitary x->p transform."""
    g = rho.grid
    y = _momentum_transform_columns(rho.kernel, g)
    z = np.conj(_momentum_transform_columns(np.conj(y).T, g)).T
    return DensityKernel(g.momentum_grid(), z)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def second_moment_x(state: State) -> float:
    if isinstance(state, WaveFunction):
        g = state.grid
        return float(np.sum(g.x ** 2 * state.probability_density()) * g.dx)
    g = state.grid
    return float(np.real(np.sum(g.x ** 2 * np.diagonal(state.kernel))) * g.dx)


def second_moment_p(state: State) -> float:
    if isinstance(state, WaveFunction):
        return second_moment_x(to_momentum(state, check_tails=False))
    return second_moment_x(kernel_to_momentum(state))


def mean_photon(state: State) -> float:
    """<n> = (<x^2> + <p^2> - 1) / 2 under the variance-1/2 convention."""
    return 0.5 * (second_moment_x(state) + second_moment_p(state) - 1.0)


# ---------------------------------------------------------------------------
# Cubic interpolation onto shifted / rescaled coordinates
# ---------------------------------------------------------------------------

def interp_matrix(grid: QuadratureGrid, y: np.ndarray) -> sparse.csr_matrix:
    """Sparse operator M with (M v)[i] ~= v(y_i) by 4-point Lagrange interpolation.

    Coordinates outside the grid map to zero (states must satisfy the tail
    condition, so nothing of substance lives there).
    """
    n = grid.n_points
    dx = grid.dx
    x0 = -grid.x_max
    t = (np.asarray(y, dtype=float) - x0) / dx
    j = np.floor(t).astype(int)
    f = t - j
    inside = (j >= 1) & (j <= n - 3)
    rows_list = []
    cols_list = []
    vals_list = []
    # cubic Lagrange weights on the 4-point stencil j-1 .. j+2
    w = [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
    idx = np.nonzero(inside)[0]
    for k in range(4):
        rows_list.append(idx)
        cols_list.append(j[idx] + k - 1)
        vals_list.append(w[k][idx])
    # linear fallback on the two edge cells
    edge = (~inside) & (j >= 0) & (j <= n - 2)
    idx_e = np.nonzero(edge)[0]
    if idx_e.size:
        rows_list += [idx_e, idx_e]
        cols_list += [j[idx_e], j[idx_e] + 1]
        vals_list += [1.0 - f[idx_e], f[idx_e]]
    rows = np.concatenate(rows_list)
    cols = np.concatenate(cols_list)
    vals = np.concatenate(vals_list)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def interp_values(psi: WaveFunction, y: np.ndarray) -> np.ndarray:
    """psi evaluated at arbitrary coordinates y (vectorized, cubic)."""
    return interp_matrix(psi.grid, y) @ psi.amplitudes


def resample_kernel(rho: DensityKernel, grid: QuadratureGrid) -> DensityKernel:
    """Interpolate a kernel onto another grid of the same point count.

    Valid when the state is compact enough to fit the target grid (anything
    outside the source grid reads as zero)."""
    if grid.n_points != rho.grid.n_points:
        raise GridError("resampling requires equal point counts")
    a = interp_matrix(rho.grid, grid.x)
    k = a @ rho.kernel @ a.T
    return DensityKernel(grid, 0.5 * (k + k.conj().T)).normalize()
