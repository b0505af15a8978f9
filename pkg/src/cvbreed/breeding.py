"""Iterative breeding protocols, fidelity fits, window schedules and the
resource ledger.

Cat breeding mixes identical copies on the heralded beamsplitter p times;
with single-photon inputs and tight windows the output converges to
N * psi^(2^p)(x / 2^(p/2)), a squeezed Schroedinger cat of amplitude
sqrt(n) with 3 dB of squeezing.  Comb breeding iterates the same primitive
on phase-shifted cats with periodic heralding windows, multiplying the comb
spacing by sqrt(2) per stage.

The resource ledger follows the memory-assisted retry model: both inputs of
a failed stage are discarded and re-prepared, so a stage mixing states that
cost C_A and C_B resources on average and succeeds with probability P costs
(C_A + C_B) / P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import GuardError
from .qgrid import (
    DensityKernel,
    QuadratureGrid,
    State,
    WaveFunction,
    fidelity,
    interp_values,
    second_moment_x,
)
from .optics import GL_NODES, HeraldWindow, herald_mix, herald_pure_sample
from .states import CatParams, CombParams, comb, fock, squeezed_cat

MIN_STAGE_PROBABILITY = 1e-9
SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Schedules and plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Per-stage heralding widths.  Either the geometric dx1 * ratio^(l-1)
    rule or an explicit width list; width None means the tight (one grid
    cell) window."""

    dx1: Optional[float] = None
    ratio: float = 1.3
    explicit: Optional[tuple] = None

    @classmethod
    def tight(cls) -> "Schedule":
        return cls(dx1=None)

    @classmethod
    def geometric(cls, dx1: float, ratio: float = 1.3) -> "Schedule":
        return cls(dx1=float(dx1), ratio=float(ratio))

    @classmethod
    def from_widths(cls, widths: Sequence[float]) -> "Schedule":
        return cls(explicit=tuple(float(w) for w in widths))

    def width(self, stage: int, grid: QuadratureGrid) -> float:
        """Width for stage l = 1, 2, ..."""
        if self.explicit is not None:
            if stage > len(self.explicit):
                raise ValueError(f"schedule has no width for stage {stage}")
            return max(self.explicit[stage - 1], grid.dx)
        if self.dx1 is None:
            return grid.dx
        return max(self.dx1 * self.ratio ** (stage - 1), grid.dx)


@dataclass(frozen=True)
class BreedingPlan:
    kind: str                      # "cat" or "comb"
    stages: tuple                  # HeraldWindow per stage
    target_n: Optional[int] = None
    p_prime: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("cat", "comb"):
            raise ValueError("plan kind must be 'cat' or 'comb'")


def cat_plan(p: int, schedule: Schedule, grid: QuadratureGrid) -> BreedingPlan:
    windows = tuple(
        HeraldWindow.single(schedule.width(l, grid)) for l in range(1, p + 1)
    )
    return BreedingPlan("cat", windows, target_n=2 ** p)


@dataclass(frozen=True)
class ResourceLedger:
    """Per-stage heralding probabilities plus the resource accounting."""

    stage_probabilities: tuple
    expected_resources: float
    minimal_resources: float

    @property
    def p_succ(self) -> float:
        return self.minimal_resources / self.expected_resources

    @classmethod
    def unit(cls) -> "ResourceLedger":
        return cls((), 1.0, 1.0)

    @classmethod
    def merge(cls, a: "ResourceLedger", b: "ResourceLedger", probability: float) -> "ResourceLedger":
        if probability <= 0:
            raise GuardError("cannot merge ledgers at zero probability")
        return cls(
            a.stage_probabilities + b.stage_probabilities + (probability,),
            (a.expected_resources + b.expected_resources) / probability,
            a.minimal_resources + b.minimal_resources,
        )


# ---------------------------------------------------------------------------
# Stage evaluation
# ---------------------------------------------------------------------------

def _point_window(window: HeraldWindow, grid: QuadratureGrid) -> bool:
    return window.width <= grid.dx * (1.0 + 1e-9)


def _diag_density(state: State) -> np.ndarray:
    if isinstance(state, WaveFunction):
        return state.normalize().probability_density()
    return state.normalize().diagonal_density()


def _herald_density(d1: np.ndarray, d2: np.ndarray, grid: QuadratureGrid, x_m: float) -> float:
    """Probability density of measuring x_m on the heralding port."""
    u = grid.x
    w1 = WaveFunction(grid, d1.astype(complex))
    w2 = WaveFunction(grid, d2.astype(complex))
    v1 = np.maximum(np.real(interp_values(w1, (u + x_m) / SQRT2)), 0.0)
    v2 = np.maximum(np.real(interp_values(w2, (u - x_m) / SQRT2)), 0.0)
    return float(np.sum(v1 * v2) * grid.dx)


def breeding_stage(in1: State, in2: State, window: HeraldWindow,
                   nodes: int = GL_NODES) -> tuple[State, float]:
    """One heralded mixing stage.

    Tight (one-cell) windows keep the pure fast path: the mixture degenerates
    to the central sample and the probability is density * width summed over
    the accepted lattice.
    """
    grid = in1.grid
    if _point_window(window, grid):
        d1 = _diag_density(in1)
        d2 = _diag_density(in2)
        centers = [c for c in _window_centers(window, grid)]
        dens = sum(_herald_density(d1, d2, grid, c) for c in centers)
        prob = dens * window.width
        if prob < MIN_STAGE_PROBABILITY:
            raise GuardError(f"stage probability {prob:.3e} below the feasibility floor")
        if isinstance(in1, WaveFunction) and isinstance(in2, WaveFunction):
            out, _ = herald_pure_sample(in1, in2, window.center if window.kind == "single" else 0.0)
            return out, prob
        res = herald_mix(in1, in2, HeraldWindow.single(grid.dx, center=centers[0]), nodes=1)
        return res.state, prob
    res = herald_mix(in1, in2, window, nodes=nodes)
    if res.probability < MIN_STAGE_PROBABILITY:
        raise GuardError(f"stage probability {res.probability:.3e} below the feasibility floor")
    return res.state, res.probability


def _window_centers(window: HeraldWindow, grid: QuadratureGrid) -> list[float]:
    if window.kind == "single":
        return [window.center]
    return [0.5 * (lo + hi) for lo, hi in window.intervals(grid.x_max - 4 * grid.dx)]


# ---------------------------------------------------------------------------
# Cat breeding
# ---------------------------------------------------------------------------

def breed_cat(plan: BreedingPlan, grid: QuadratureGrid,
              nodes: int = GL_NODES) -> tuple[DensityKernel, ResourceLedger]:
    """Iterate the heralded mixing of identical states, seeded by fock(1)."""
    if plan.kind != "cat":
        raise ValueError("breed_cat needs a cat plan")
    state: State = fock(1, grid)
    ledger = ResourceLedger.unit()
    for window in plan.stages:
        state, prob = breeding_stage(state, state, window, nodes=nodes)
        ledger = ResourceLedger.merge(ledger, ledger, prob)
    if isinstance(state, WaveFunction):
        state = DensityKernel.from_pure(state)
    return state, ledger


def breed_n(n: int, schedule: Schedule, grid: QuadratureGrid,
            nodes: int = GL_NODES) -> tuple[DensityKernel, ResourceLedger]:
    """Breed an arbitrary photon number by its binary expansion.

    Power-of-two components are bred first; components are then merged in
    ascending order, so e.g. n = 7 = 111_2 mixes the single photon with the
    one-stage cat and then with the two-stage cat.  The output parity equals
    the parity of n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bits = [b for b in range(n.bit_length()) if n >> b & 1]
    photon = fock(1, grid)

    def window(round_index: int) -> HeraldWindow:
        return HeraldWindow.single(schedule.width(round_index, grid))

    # power-of-two components, sharing the per-round schedule
    components: dict[int, tuple[State, ResourceLedger]] = {}
    max_bit = bits[-1]
    cur: State = photon
    cur_ledger = ResourceLedger.unit()
    components[0] = (cur, cur_ledger)
    for level in range(1, max_bit + 1):
        cur, prob = breeding_stage(cur, cur, window(level), nodes=nodes)
        cur_ledger = ResourceLedger.merge(cur_ledger, cur_ledger, prob)
        components[level] = (cur, cur_ledger)

    acc, acc_ledger = components[bits[0]]
    for b in bits[1:]:
        comp, comp_ledger = components[b]
        acc, prob = breeding_stage(acc, comp, window(b + 1), nodes=nodes)
        acc_ledger = ResourceLedger.merge(acc_ledger, comp_ledger, prob)
    if isinstance(acc, WaveFunction):
        acc = DensityKernel.from_pure(acc)
    return acc, acc_ledger


# ---------------------------------------------------------------------------
# Comb breeding
# ---------------------------------------------------------------------------

def breed_comb(p_prime: int, input_cat: State, spacing_a0: float,
               schedule: Schedule, grid: QuadratureGrid,
               input_ledger: Optional[ResourceLedger] = None,
               nodes: int = GL_NODES) -> tuple[DensityKernel, ResourceLedger]:
    """Iterate comb breeding on a phase-shifted cat.

    Stage l accepts the periodic window lattice at the output spacing
    a_{l-1} * sqrt(2); the comb spacing doubles every two stages
    (a = 2^(p'/2) a0).
    """
    if p_prime < 0:
        raise ValueError("p_prime must be >= 0")
    state: State = input_cat
    ledger = input_ledger if input_ledger is not None else ResourceLedger.unit()
    a = spacing_a0
    for l in range(1, p_prime + 1):
        out_spacing = a * SQRT2
        width = schedule.width(l, grid)
        if width >= out_spacing:
            raise ValueError("periodic heralding windows overlap (width >= spacing)")
        win = HeraldWindow.periodic(out_spacing, width)
        state, prob = breeding_stage(state, state, win, nodes=nodes)
        ledger = ResourceLedger.merge(ledger, ledger, prob)
        a = out_spacing
    if isinstance(state, WaveFunction):
        state = DensityKernel.from_pure(state)
    return state, ledger


# ---------------------------------------------------------------------------
# Fidelity fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FidelityFit:
    fidelity: float
    params: dict
    converged: bool
    note: str = ""


def _state_parity(state: State) -> str:
    if isinstance(state, WaveFunction):
        psi = state.normalize()
        ov = np.vdot(psi.amplitudes, psi.reflected().amplitudes) * psi.grid.dx
        return "even" if np.real(ov) >= 0 else "odd"
    rho = state.normalize()
    refl = np.roll(rho.kernel[::-1, :], 1, axis=0)
    tr = np.real(np.trace(refl)) * rho.grid.dx
    return "even" if tr >= 0 else "odd"


def fit_nearest_scs(state: State, seed: Optional[tuple[float, float]] = None,
                    max_iter: int = 400) -> FidelityFit:
    """Maximize <SCS(alpha, s')| rho |SCS(alpha, s')> by Nelder-Mead in
    log-parameter space.  Seeded at (sqrt(<x^2>), sqrt(2)) unless given."""
    grid = state.grid
    parity = _state_parity(state)
    if seed is None:
        alpha0 = math.sqrt(max(second_moment_x(state) - 0.25, 0.05))
        seed = (alpha0, SQRT2)

    def objective(z):
        alpha, sp = math.exp(z[0]), math.exp(z[1])
        try:
            target = squeezed_cat(CatParams(parity, alpha, sp), grid)
        except Exception:
            return 1.0
        return -fidelity(state, target)

    res = optimize.minimize(objective, np.log(np.asarray(seed)), method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": max_iter})
    alpha, sp = math.exp(res.x[0]), math.exp(res.x[1])
    return FidelityFit(
        -float(res.fun),
        {"parity": parity, "alpha": alpha, "s_prime": sp},
        bool(res.success),
        "" if res.success else "optimizer hit the iteration bound",
    )


def fit_nearest_comb(state: State, seed: tuple[float, float, float],
                     logical_bit: int = 0, max_iter: int = 600) -> FidelityFit:
    """Fit (a, s, s') of the nearest comb state, seeded from the plan."""
    grid = state.grid

    def objective(z):
        a, s, sp = (math.exp(v) for v in z)
        try:
            target = comb(CombParams(logical_bit, a, s, sp), grid)
        except Exception:
            return 1.0
        return -fidelity(state, target)

    res = optimize.minimize(objective, np.log(np.asarray(seed)), method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": max_iter})
    a, s, sp = (math.exp(v) for v in res.x)
    fit_params = CombParams(logical_bit, a, s, sp)
    note = "" if res.success else "optimizer hit the iteration bound"
    if not fit_params.condition_ok:
        note = (note + "; " if note else "") + "comb condition violated at the fitted point"
    return FidelityFit(
        -float(res.fun),
        {"a": a, "s": s, "s_prime": sp, "condition_ok": fit_params.condition_ok},
        bool(res.success),
        note,
    )


# ---------------------------------------------------------------------------
# Schedule optimization
# ---------------------------------------------------------------------------

def _cat_quality(widths: Sequence[float], grid: QuadratureGrid,
                 nodes: int = GL_NODES) -> tuple[float, float]:
    plan = BreedingPlan("cat", tuple(HeraldWindow.single(w) for w in widths),
                        target_n=2 ** len(widths))
    state, ledger = breed_cat(plan, grid, nodes=nodes)
    n = plan.target_n
    fit = fit_nearest_scs(state, seed=(math.sqrt(n), SQRT2))
    return fit.fidelity, ledger.p_succ


def geometric_dx1_for_fidelity(p: int, target_fidelity: float, grid: QuadratureGrid,
                               ratio: float = 1.3, dx1_hi: float = 1.5,
                               tol: float = 1e-3, nodes: int = GL_NODES) -> tuple[float, float, float]:
    """Bisection for the dx1 of the geometric schedule that lands on the
    requested fidelity.  Returns (dx1, fidelity, p_succ)."""
    lo = grid.dx
    f_lo, _ = _cat_quality([lo * ratio ** (l - 1) for l in range(1, p + 1)], grid, nodes)
    if f_lo < target_fidelity:
        raise GuardError(
            f"target fidelity {target_fidelity} unreachable; best achievable {f_lo:.6f}")
    hi = dx1_hi
    f_hi, _ = _cat_quality([hi * ratio ** (l - 1) for l in range(1, p + 1)], grid, nodes)
    if f_hi > target_fidelity:
        widths = [hi * ratio ** (l - 1) for l in range(1, p + 1)]
        f, ps = _cat_quality(widths, grid, nodes)
        return hi, f, ps
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        f_mid, ps_mid = _cat_quality([mid * ratio ** (l - 1) for l in range(1, p + 1)], grid, nodes)
        if f_mid >= target_fidelity:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < tol * max(lo, grid.dx):
            break
    f, ps = _cat_quality([lo * ratio ** (l - 1) for l in range(1, p + 1)], grid, nodes)
    return lo, f, ps


def optimize_schedule(kind: str, p: int, target_fidelity: float,
                      grid: QuadratureGrid, ratio: float = 1.3,
                      sweeps: int = 3, nodes: int = GL_NODES) -> tuple[BreedingPlan, float, float]:
    """Coordinate descent over per-stage widths maximizing p_succ at
    fidelity >= target.  Starts from the geometric-rule plan at the target,
    so the result weakly dominates it by construction.

    Returns (plan, fidelity, p_succ).
    """
    if kind != "cat":
        raise ValueError("schedule optimization is implemented for cat plans")
    if not 1 <= p <= 6:
        raise ValueError("p must be in 1..6")
    dx1, f0, ps0 = geometric_dx1_for_fidelity(p, target_fidelity, grid, ratio, nodes=nodes)
    widths = [dx1 * ratio ** (l - 1) for l in range(1, p + 1)]

    for _ in range(sweeps):
        for stage in range(p):
            # p_succ grows with every width, so the constrained optimum for
            # this coordinate sits on the fidelity boundary: bisect it.
            lo = widths[stage]
            hi = max(4.0 * lo, 0.5)
            trial = widths.copy()
            trial[stage] = hi
            f_hi, _ = _cat_quality(trial, grid, nodes)
            if f_hi >= target_fidelity:
                widths = trial
                continue
            for _ in range(12):
                mid = 0.5 * (lo + hi)
                trial[stage] = mid
                f_mid, _ = _cat_quality(trial, grid, nodes)
                if f_mid >= target_fidelity:
                    lo = mid
                else:
                    hi = mid
            trial[stage] = lo
            widths = trial
    f, ps = _cat_quality(widths, grid, nodes)
    plan = BreedingPlan("cat", tuple(HeraldWindow.single(w) for w in widths),
                        target_n=2 ** p)
    return plan, f, ps
