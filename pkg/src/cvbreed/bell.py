"""Two-mode resource assembly and the CHSH evaluation.

The pipeline prepares an entangled pair of phase-shifted cats by delocalized
photon subtraction, runs each mode through a modulation stage (heralded
mixing with a comb ancilla), and evaluates the CHSH combination

    S = |<e_p e_p> - <e_x e_x>| + |<e_p e_x> + <e_x e_p>|

with the dichotomic sign binning built from the configuration's ideal f/g
states (the exact tight-herald modulation images).  Two-mode states are
short sums of product terms, so every heavy integral stays one-dimensional;
an explicit 2-D joint-distribution route is kept as a consistency oracle.

Parity wiring: subtracting a delocalized photon from an (even, odd) cat pair
yields  sqrt(nA) |odd,odd> + e^(i theta) sqrt(nB) |even,even>,  whose
modulation image is the parity-correlated superposition of |g,g> and |f,f>.
That combination violates the CHSH bound at theta near -pi/4; the
anticorrelated |f,g> + e^(i theta) |g,f> ordering provably cannot under this
binning (its Bell operator vanishes on that span), so the pipeline feeds the
subtraction with opposite-parity cats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GridError, GuardError
from .qgrid import (
    DensityKernel,
    QuadratureGrid,
    WaveFunction,
    inner,
    interp_values,
    mean_photon,
    to_momentum,
)
from .optics import GL_NODES, HeraldWindow, LossChannel, _gl_samples, loss_matrix
from .states import (
    CatParams,
    CombParams,
    FGParams,
    comb,
    fg_reference,
    squeezed_cat,
    squeezed_cat_shifted,
)
from .breeding import ResourceLedger

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2
TERM_CAP = 16


# ---------------------------------------------------------------------------
# Two-mode product-sum states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductSumState:
    """Sum of coefficient * (mode-A wavefunction x mode-B wavefunction)."""

    terms: tuple  # ((coeff, psi_a, psi_b), ...)

    def __post_init__(self):
        if not self.terms:
            raise ValueError("ProductSumState needs at least one term")
        g = self.terms[0][1].grid
        for _, a, b in self.terms:
            if a.grid != g or b.grid != g:
                raise GridError("all terms must share one grid")
        if len(self.terms) > TERM_CAP:
            raise GuardError(f"term count {len(self.terms)} exceeds the cap {TERM_CAP}")

    @property
    def grid(self) -> QuadratureGrid:
        return self.terms[0][1].grid

    def norm_squared(self) -> float:
        total = 0.0 + 0.0j
        for ct, at, bt in self.terms:
            for cu, au, bu in self.terms:
                total += ct * np.conj(cu) * inner(au, at) * inner(bu, bt)
        return float(np.real(total))

    def normalize(self) -> "ProductSumState":
        n2 = self.norm_squared()
        if n2 <= 0:
            raise GuardError("cannot normalize a vanishing two-mode state")
        f = 1.0 / math.sqrt(n2)
        return ProductSumState(tuple((c * f, a, b) for c, a, b in self.terms))

    def prune(self, cap: int = TERM_CAP, tol: float = 1e-12) -> "ProductSumState":
        scored = sorted(self.terms, key=lambda t: -abs(t[0]) ** 2
                        * t[1].norm_squared() * t[2].norm_squared())
        peak = abs(scored[0][0]) ** 2 * scored[0][1].norm_squared() * scored[0][2].norm_squared()
        kept = [t for t in scored[:cap]
                if abs(t[0]) ** 2 * t[1].norm_squared() * t[2].norm_squared() > tol * peak]
        return ProductSumState(tuple(kept)).normalize()

    def reduced_kernel(self, mode: str) -> DensityKernel:
        """Partial trace over the other mode, as a position kernel."""
        if mode not in ("A", "B"):
            raise ValueError("mode must be 'A' or 'B'")
        g = self.grid
        n = g.n_points
        out = np.zeros((n, n), dtype=complex)
        for ct, at, bt in self.terms:
            for cu, au, bu in self.terms:
                if mode == "A":
                    w = ct * np.conj(cu) * inner(bu, bt)
                    out += w * np.outer(at.amplitudes, au.amplitudes.conj())
                else:
                    w = ct * np.conj(cu) * inner(au, at)
                    out += w * np.outer(bt.amplitudes, bu.amplitudes.conj())
        k = DensityKernel(g, 0.5 * (out + out.conj().T))
        return k.normalize()


@dataclass(frozen=True)
class HeraldedEnsemble:
    """Probability-weighted mixture of heralded two-mode states."""

    samples: tuple  # ((weight, ProductSumState), ...), weights sum to 1
    probability: float

    def mode_mean_photon(self, mode: str) -> float:
        return sum(w * mean_photon(s.reduced_kernel(mode)) for w, s in self.samples)


TwoModeState = Union[ProductSumState, HeraldedEnsemble]


# ---------------------------------------------------------------------------
# Delocalized photon subtraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubtractionConfig:
    reflectivity: float = 0.001
    eta_apd: float = 0.06
    theta: float = -math.pi / 4.0

    def __post_init__(self):
        if not (0.0 < self.reflectivity < 0.5):
            raise ValueError("tap-off reflectivity must satisfy 0 < R << 1")
        if not (0.0 < self.eta_apd <= 1.0):
            raise ValueError("APD efficiency must be in (0, 1]")


def delocalized_subtract(cat_a: WaveFunction, cat_b: WaveFunction,
                         cfg: SubtractionConfig) -> tuple[ProductSumState, float]:
    """Lowest-order delocalized subtraction: (a_A + e^(i theta) a_B) |A, B>.

    Inputs are expected unsqueezed (s' = 1) so annihilation flips the cat
    parity at the same amplitude.  R and the APD efficiency enter only the
    success probability eta * R * (nbar_A + nbar_B).
    """
    from .optics import annihilate

    sub_a, n_a = annihilate(cat_a)
    sub_b, n_b = annihilate(cat_b)
    phase = np.exp(1j * cfg.theta)
    state = ProductSumState((
        (math.sqrt(n_a), sub_a, cat_b.normalize()),
        (phase * math.sqrt(n_b), cat_a.normalize(), sub_b),
    )).normalize()
    probability = min(1.0, cfg.eta_apd * cfg.reflectivity * (n_a + n_b))
    return state, probability


# ---------------------------------------------------------------------------
# Modulation stage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModulationParams:
    """Declared bookkeeping for the modulation stage."""

    alpha_prime: float
    s_prime: float
    a: float
    alpha_anc: Optional[float] = None
    p_prime: Optional[int] = None

    def validate(self, tol: float = 0.05):
        lhs = self.s_prime * self.alpha_prime * self.a
        rhs = math.pi / (2.0 * SQRT2)
        if abs(lhs - rhs) > tol * rhs:
            raise GuardError(
                f"modulation bookkeeping violated: s'*alpha'*a = {lhs:.6f} "
                f"!= pi/(2 sqrt(2)) = {rhs:.6f}")
        if self.alpha_anc is not None and self.p_prime is not None:
            ratio = math.sqrt(2.0 ** (2 + self.p_prime))
            if abs(self.alpha_anc - ratio * self.alpha_prime) > tol * self.alpha_anc:
                raise GuardError(
                    f"modulation bookkeeping violated: alpha = {self.alpha_anc:.6f} "
                    f"!= sqrt(2^(2+p')) alpha' = {ratio * self.alpha_prime:.6f}")


def _kraus_apply(psi: WaveFunction, ancilla: WaveFunction, x_m: float) -> WaveFunction:
    """Unnormalized heralded-mixing Kraus map for one measured value."""
    g = psi.grid
    u = g.x
    vals = interp_values(psi, (u + x_m) / SQRT2) * interp_values(ancilla, (u - x_m) / SQRT2)
    return WaveFunction(g, vals)


def modulation_stage(state: ProductSumState, ancilla: WaveFunction,
                     windows: tuple[HeraldWindow, HeraldWindow],
                     params: Optional[ModulationParams] = None,
                     nodes: int = GL_NODES) -> tuple[TwoModeState, float]:
    """Mix each mode with a fresh ancilla copy and double-herald.

    Linearity carries the superposition through: each (x_mA, x_mB) sample
    maps term (c, psi_A, psi_B) to (c, K_A psi_A, K_B psi_B).  Finite windows
    return a weighted ensemble; the returned probability is the double
    heralding probability.
    """
    if params is not None:
        params.validate()
    g = state.grid
    if ancilla.grid != g:
        raise GridError("ancilla grid mismatch")
    anc = ancilla.normalize()
    margin = 4.0 * g.dx
    ia = windows[0].intervals(g.x_max - margin)
    ib = windows[1].intervals(g.x_max - margin)
    if not ia or not ib:
        raise GridError("modulation window empty on this grid")
    xa, wa = _gl_samples(ia, nodes)
    xb, wb = _gl_samples(ib, nodes)

    st = state.normalize()
    samples = []
    prob = 0.0
    for x1, w1 in zip(xa, wa):
        mapped_a = {id(t[1]): _kraus_apply(t[1], anc, x1) for t in st.terms}
        for x2, w2 in zip(xb, wb):
            terms = tuple(
                (c, mapped_a[id(a)], _kraus_apply(b, anc, x2)) for c, a, b in st.terms
            )
            raw = ProductSumState(terms)
            dens = raw.norm_squared()
            weight = w1 * w2 * dens
            prob += weight
            if dens > 0:
                samples.append((weight, raw.normalize()))
    if prob <= 0 or not samples:
        raise GuardError("modulation heralding probability vanished")
    total = sum(w for w, _ in samples)
    norm_samples = tuple((w / total, s) for w, s in samples)
    if len(norm_samples) == 1:
        return norm_samples[0][1], prob
    return HeraldedEnsemble(norm_samples, prob), prob


# ---------------------------------------------------------------------------
# Sign binning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Binning:
    grid: QuadratureGrid
    eps_x: np.ndarray  # +-1 on the x grid
    eps_p: np.ndarray  # +-1 on the conjugate grid
    # integration weights: +-1 away from sign flips, fractional in the one
    # grid cell containing each flip (sub-cell quadrature of the step)
    weights_x: np.ndarray = None
    weights_p: np.ndarray = None

    def __post_init__(self):
        if self.weights_x is None:
            object.__setattr__(self, "weights_x", self.eps_x.astype(float))
        if self.weights_p is None:
            object.__setattr__(self, "weights_p", self.eps_p.astype(float))
        for arr in (self.eps_x, self.eps_p, self.weights_x, self.weights_p):
            arr.setflags(write=False)


def _sign_plus(values: np.ndarray) -> np.ndarray:
    s = np.sign(values)
    s[s == 0] = 1.0
    return s


def _edge_weights(values: np.ndarray, dx: float) -> np.ndarray:
    """Sign array with fractional values in the cells where the underlying
    product changes sign.

    The integration grid assigns each sample the cell [x_j - dx/2, x_j + dx/2];
    a zero crossing inside a cell makes the exact integral of sign(v) * h over
    that cell a signed fraction of h_j * dx.  The crossing position comes from
    linear interpolation of the product between samples.
    """
    eps = _sign_plus(values)
    w = eps.astype(float)
    flips = np.nonzero(eps[:-1] * eps[1:] < 0)[0]
    for j in flips:
        vl, vr = abs(values[j]), abs(values[j + 1])
        if vl + vr == 0:
            continue
        frac = vl / (vl + vr)  # crossing at x_j + frac * dx
        if frac <= 0.5:
            # crossing inside cell j: left part keeps eps[j], right flips
            w[j] = eps[j] * (frac + 0.5) + eps[j + 1] * (0.5 - frac)
        else:
            w[j + 1] = eps[j] * (frac - 0.5) + eps[j + 1] * (1.5 - frac)
    return w


def sign_binning(f_ref: WaveFunction, g_ref: WaveFunction,
                 imag_tol: float = 1e-6) -> Binning:
    """Dichotomic binning functions from the reference states.

    eps_x = sign(f(x) g(x)); eps_p = sign(f~(p) g~(p) / i).  Zeros of the
    products map to +1.  The references must be real in the position
    representation (their product fixes the sign pattern) and must not vanish
    identically on any window wider than ten grid cells inside the envelope.
    """
    g = f_ref.grid
    if g_ref.grid != g:
        raise GridError("binning references must share one grid")
    fa = f_ref.normalize().amplitudes
    ga = g_ref.normalize().amplitudes
    if max(np.max(np.abs(fa.imag)), np.max(np.abs(ga.imag))) > imag_tol * max(
            np.max(np.abs(fa)), np.max(np.abs(ga))):
        raise ValueError("binning references must be real in x")
    prod_x = fa.real * ga.real
    _check_zero_runs(prod_x, g)
    eps_x = _sign_plus(prod_x)

    ft = to_momentum(f_ref.normalize())
    gt = to_momentum(g_ref.normalize())
    prod_p = ft.amplitudes * gt.amplitudes / 1j
    scale = float(np.max(np.abs(prod_p)))
    if scale > 0 and float(np.max(np.abs(prod_p.imag))) > imag_tol * scale:
        raise GuardError("eps_p product is not real: check the Fourier convention")
    eps_p = _sign_plus(prod_p.real)
    return Binning(g, eps_x, eps_p,
                   _edge_weights(prod_x, g.dx),
                   _edge_weights(prod_p.real, g.momentum_grid().dx))


def _check_zero_runs(product: np.ndarray, grid: QuadratureGrid, max_cells: int = 10):
    mag = np.abs(product)
    peak = float(np.max(mag))
    if peak <= 0:
        raise GuardError("binning reference product vanishes identically")
    live = np.nonzero(mag > 1e-9 * peak)[0]
    lo, hi = live[0], live[-1]
    inside = mag[lo:hi + 1] > 1e-12 * peak
    run, worst = 0, 0
    for ok in inside:
        run = 0 if ok else run + 1
        worst = max(worst, run)
    if worst > max_cells:
        raise GuardError(
            f"binning ill-defined: reference product vanishes on {worst} cells")


# ---------------------------------------------------------------------------
# CHSH
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CHSHResult:
    corr_xx: float
    corr_xp: float
    corr_px: float
    corr_pp: float
    s_value: float
    theta: float
    transmission: float
    presqueeze: float = 1.0

    def correlators(self) -> dict:
        return {"xx": self.corr_xx, "xp": self.corr_xp,
                "px": self.corr_px, "pp": self.corr_pp}


def _chsh_from_correlators(e: dict) -> float:
    return abs(e["pp"] - e["xx"]) + abs(e["px"] + e["xp"])


def _term_momenta(state: ProductSumState) -> tuple[list[WaveFunction], list[WaveFunction]]:
    return ([to_momentum(a, check_tails=False) for _, a, _ in state.terms],
            [to_momentum(b, check_tails=False) for _, _, b in state.terms])


def _correlators_product_sum(state: ProductSumState, binning: Binning,
                             transmission: float,
                             noise_x: Optional[float], noise_p: Optional[float]) -> dict:
    """Four correlators via the separable term structure (all 1-D integrals).

    Loss is evaluated in the calibrated frame: the receiver rescales every
    homodyne outcome by 1/sqrt(T) (classical post-processing), so the channel
    acts as additive Gaussian noise of variance (1 - T) / (2 T) per
    quadrature and the binning cells stay aligned with the state.
    """
    g = state.grid
    pg = g.momentum_grid()
    if transmission >= 1.0 and noise_x is None and noise_p is None:
        wx = binning.weights_x * g.dx
        wp = binning.weights_p * pg.dx
    else:
        nx = 0.5 * (1.0 - transmission) / transmission if noise_x is None else noise_x
        np_ = 0.5 * (1.0 - transmission) / transmission if noise_p is None else noise_p
        lx = loss_matrix(g, 1.0, nx)
        lp = loss_matrix(pg, 1.0, np_)
        wx = (lx.T @ binning.weights_x) * g.dx
        wp = (lp.T @ binning.weights_p) * pg.dx

    terms = state.normalize().terms
    amps_a = [a.amplitudes for _, a, _ in terms]
    amps_b = [b.amplitudes for _, _, b in terms]
    ma, mb = _term_momenta(state.normalize())
    amps_pa = [w.amplitudes for w in ma]
    amps_pb = [w.amplitudes for w in mb]
    coeffs = [c for c, _, _ in terms]

    n = len(terms)
    exa = np.empty((n, n), dtype=complex)
    epa = np.empty((n, n), dtype=complex)
    exb = np.empty((n, n), dtype=complex)
    epb = np.empty((n, n), dtype=complex)
    oxa = np.empty((n, n), dtype=complex)
    opa = np.empty((n, n), dtype=complex)
    oxb = np.empty((n, n), dtype=complex)
    opb = np.empty((n, n), dtype=complex)
    for t in range(n):
        for u in range(n):
            pa = amps_a[t] * np.conj(amps_a[u])
            pb = amps_b[t] * np.conj(amps_b[u])
            qa = amps_pa[t] * np.conj(amps_pa[u])
            qb = amps_pb[t] * np.conj(amps_pb[u])
            exa[t, u] = np.sum(wx * pa)
            exb[t, u] = np.sum(wx * pb)
            epa[t, u] = np.sum(wp * qa)
            epb[t, u] = np.sum(wp * qb)
            oxa[t, u] = np.sum(pa) * g.dx
            oxb[t, u] = np.sum(pb) * g.dx
            opa[t, u] = np.sum(qa) * pg.dx
            opb[t, u] = np.sum(qb) * pg.dx

    c = np.asarray(coeffs)
    w2 = np.outer(c, np.conj(c))

    def combine(ma_, mb_):
        return float(np.real(np.sum(w2 * ma_ * mb_)))

    return {
        "xx": combine(exa, exb),
        "xp": combine(exa, epb),
        "px": combine(epa, exb),
        "pp": combine(epa, epb),
        "norm_x": combine(oxa, oxb),
        "norm_p": combine(opa, opb),
    }


def chsh(state: TwoModeState, binning: Binning,
         channel: Optional[LossChannel] = None,
         theta: float = float("nan"),
         noise_x: Optional[float] = None,
         noise_p: Optional[float] = None,
         presqueeze: float = 1.0) -> CHSHResult:
    """Correlators and S for a two-mode state or heralded ensemble.

    ``theta`` only labels the result (the phase lives in the state's
    coefficients; rebuild the state to change it).  Ensemble correlators are
    the probability-weighted averages of the per-sample correlators; the
    absolute values are taken only afterwards.
    """
    t = 1.0 if channel is None else channel.transmission
    if isinstance(state, HeraldedEnsemble):
        acc = {"xx": 0.0, "xp": 0.0, "px": 0.0, "pp": 0.0}
        for w, s in state.samples:
            e = _correlators_product_sum(s, binning, t, noise_x, noise_p)
            for k in acc:
                acc[k] += w * e[k]
        e = acc
    else:
        e = _correlators_product_sum(state, binning, t, noise_x, noise_p)
        for key in ("norm_x", "norm_p"):
            if abs(e[key] - 1.0) > 1e-6:
                raise GuardError(f"joint distribution not normalized: {key} = {e[key]:.8f}")
    for k in ("xx", "xp", "px", "pp"):
        if abs(e[k]) > 1.0 + 1e-9:
            raise GuardError(f"correlator {k} = {e[k]} outside [-1, 1]")
    s = _chsh_from_correlators(e)
    if s > TSIRELSON + 1e-6:
        raise GuardError(f"S = {s} exceeds the Tsirelson bound")
    return CHSHResult(e["xx"], e["xp"], e["px"], e["pp"], s, theta, t, presqueeze)


def joint_distribution(state: ProductSumState, which: str) -> np.ndarray:
    """Explicit 2-D joint quadrature distribution ('xx', 'xp', 'px', 'pp')."""
    st = state.normalize()
    if which not in ("xx", "xp", "px", "pp"):
        raise ValueError("which must be one of xx, xp, px, pp")
    fa = []
    fb = []
    for c, a, b in st.terms:
        va = to_momentum(a, check_tails=False).amplitudes if which[0] == "p" else a.amplitudes
        vb = to_momentum(b, check_tails=False).amplitudes if which[1] == "p" else b.amplitudes
        fa.append(c * va)
        fb.append(vb)
    amp = sum(np.outer(va, vb) for va, vb in zip(fa, fb))
    return np.abs(amp) ** 2


def chsh_via_joint(state: ProductSumState, binning: Binning,
                   channel: Optional[LossChannel] = None) -> CHSHResult:
    """Reference evaluation through explicit 2-D distributions (slow path).

    Works in the same calibrated frame as :func:`chsh`: rescaling the
    measured outcomes by 1/sqrt(T) turns the loss map into a pure Gaussian
    convolution of the joint distribution.
    """
    g = state.grid
    pg = g.momentum_grid()
    t = 1.0 if channel is None else channel.transmission
    e = {}
    for which in ("xx", "xp", "px", "pp"):
        p = joint_distribution(state, which)
        ga = pg if which[0] == "p" else g
        gb = pg if which[1] == "p" else g
        da, db = ga.dx, gb.dx
        p = p / (np.sum(p) * da * db)
        if t < 1.0:
            var = 0.5 * (1.0 - t) / t
            la = loss_matrix(ga, 1.0, var)
            lb = loss_matrix(gb, 1.0, var)
            p = la @ p @ lb.T
            p = p / (np.sum(p) * da * db)
        ea = binning.weights_x if which[0] == "x" else binning.weights_p
        eb = binning.weights_x if which[1] == "x" else binning.weights_p
        e[which] = float(ea @ p @ eb * da * db)
    s = _chsh_from_correlators(e)
    return CHSHResult(e["xx"], e["xp"], e["px"], e["pp"], s, float("nan"), t)


# ---------------------------------------------------------------------------
# Loss sweep with optional pre-loss squeeze optimization
# ---------------------------------------------------------------------------

def _noise_pair(transmission: float, lam: float) -> tuple[float, float]:
    """Calibrated-frame loss noise for a state pre-squeezed by lam."""
    base = 0.5 * (1.0 - transmission) / transmission
    return base * lam ** 2, base / lam ** 2


def _optimize_presqueeze(state: TwoModeState, binning: Binning, transmission: float,
                         theta: float, lam_bounds=(0.25, 4.0), iters: int = 40) -> CHSHResult:
    gr = (math.sqrt(5.0) - 1.0) / 2.0

    def s_of(lam: float) -> CHSHResult:
        nx, np_ = _noise_pair(transmission, lam)
        return chsh(state, binning, LossChannel(transmission), theta,
                    noise_x=nx, noise_p=np_, presqueeze=lam)

    a, b = math.log(lam_bounds[0]), math.log(lam_bounds[1])
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc = s_of(math.exp(c))
    fd = s_of(math.exp(d))
    for _ in range(iters):
        if fc.s_value >= fd.s_value:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = s_of(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = s_of(math.exp(d))
    best = fc if fc.s_value >= fd.s_value else fd
    return best


def loss_sweep(state: TwoModeState, binning: Binning, t_list: Sequence[float],
               optimize_presqueeze: bool = False,
               theta: float = float("nan")) -> list[CHSHResult]:
    out = []
    for t in t_list:
        if not (0.0 < t <= 1.0):
            raise ValueError("transmissions must lie in (0, 1]")
        if optimize_presqueeze and t < 1.0:
            out.append(_optimize_presqueeze(state, binning, t, theta))
        else:
            out.append(chsh(state, binning, LossChannel(t), theta))
    return out


def find_crossing(state: TwoModeState, binning: Binning,
                  optimize_presqueeze: bool = False, theta: float = float("nan"),
                  t_lo: float = 0.5, t_hi: float = 1.0,
                  resolution: float = 1e-3) -> float:
    """Transmission where S crosses 2, located by bisection."""

    def s_at(t: float) -> float:
        if optimize_presqueeze and t < 1.0:
            return _optimize_presqueeze(state, binning, t, theta).s_value
        return chsh(state, binning, LossChannel(t), theta).s_value

    if s_at(t_hi) <= 2.0:
        return float("nan")
    if s_at(t_lo) > 2.0:
        return t_lo
    lo, hi = t_lo, t_hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if s_at(mid) > 2.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Pipeline configurations (the two benchmark resources)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BellConfig:
    """One benchmark configuration of the full preparation pipeline.

    p cat-breeding stages feed the ancilla; p' comb-breeding stages follow.
    p' = 0 uses the odd cat itself as the ancilla.  The modulated cats have
    amplitude alpha' = alpha / sqrt(2^(2+p')).
    """

    label: str
    n_ancilla: int
    p: int
    p_prime: int
    s_prime: float
    theta: float = -math.pi / 4.0
    reflectivity: float = 0.001
    eta_apd: float = 0.06

    @property
    def alpha_ancilla(self) -> float:
        return math.sqrt(float(self.n_ancilla))

    @property
    def alpha_prime(self) -> float:
        return self.alpha_ancilla / math.sqrt(2.0 ** (2 + self.p_prime))

    @property
    def a0(self) -> float:
        return math.pi / (SQRT2 * self.s_prime * self.alpha_ancilla)

    @property
    def a(self) -> float:
        return 2.0 ** (self.p_prime / 2.0) * self.a0

    @property
    def s(self) -> float:
        return self.a0 / math.pi

    @property
    def fg_params(self) -> FGParams:
        return FGParams(SQRT2 * self.a, SQRT2 * self.s, self.s_prime)

    def modulation_params(self) -> ModulationParams:
        return ModulationParams(self.alpha_prime, self.s_prime, self.a,
                                self.alpha_ancilla, self.p_prime)


# s' values calibrated so the modulation outputs carry the quoted mean photon
# numbers (about 10 for the strong comb, about 4 for the weak one); S itself
# is invariant under a common rescale of s', so only nbar pins these.
CONFIG_62 = BellConfig("6,2", n_ancilla=64, p=6, p_prime=2, s_prime=0.74)
CONFIG_30 = BellConfig("3,0", n_ancilla=7, p=3, p_prime=0, s_prime=0.95)

CONFIGS = {"6,2": CONFIG_62, "3,0": CONFIG_30}


def standard_config(label: str, theta: Optional[float] = None,
                    s_prime: Optional[float] = None) -> BellConfig:
    if label not in CONFIGS:
        raise ValueError(f"unknown configuration {label!r}; expected one of {sorted(CONFIGS)}")
    cfg = CONFIGS[label]
    kwargs = {}
    if theta is not None:
        kwargs["theta"] = theta
    if s_prime is not None:
        kwargs["s_prime"] = s_prime
    if kwargs:
        from dataclasses import replace
        cfg = replace(cfg, **kwargs)
    return cfg


def build_entangled_pair(cfg: BellConfig, grid: QuadratureGrid) -> tuple[ProductSumState, float]:
    """Post-subtraction two-mode state in the phase-shifted representation.

    The subtraction acts on unsqueezed (s' = 1) peak cats of opposite parity;
    each mode is then re-squeezed and pi/2 phase shifted, which multiplies
    odd terms by -i.  Coefficient magnitudes come from the annihilation
    weights of the s' = 1 cats.
    """
    even_peak = squeezed_cat(CatParams("even", cfg.alpha_prime, 1.0), grid)
    odd_peak = squeezed_cat(CatParams("odd", cfg.alpha_prime, 1.0), grid)
    n_even = mean_photon(even_peak)
    n_odd = mean_photon(odd_peak)
    wave_even = squeezed_cat_shifted(CatParams("even", cfg.alpha_prime, cfg.s_prime), grid)
    wave_odd = squeezed_cat_shifted(CatParams("odd", cfg.alpha_prime, cfg.s_prime), grid)
    phase = np.exp(1j * cfg.theta)
    state = ProductSumState((
        ((-1.0) * math.sqrt(n_even), wave_odd, wave_odd),   # (-i)^2 from two odd shifts
        (phase * math.sqrt(n_odd), wave_even, wave_even),
    )).normalize()
    p_sub = min(1.0, cfg.eta_apd * cfg.reflectivity * (n_even + n_odd))
    return state, p_sub


def build_ancilla(cfg: BellConfig, grid: QuadratureGrid) -> WaveFunction:
    """Comb ancilla for the modulation stage; for p' = 0 it is the odd cat."""
    if cfg.p_prime == 0:
        return squeezed_cat_shifted(CatParams("odd", cfg.alpha_ancilla, cfg.s_prime), grid)
    return comb(CombParams(1, cfg.a, cfg.s, cfg.s_prime), grid)


def ideal_images(cfg: BellConfig, grid: QuadratureGrid) -> tuple[WaveFunction, WaveFunction]:
    """The exact tight-herald modulation images of the two cat parities.

    These are the states the sign binning is defined from.  For a comb
    ancilla they coincide with the half-integer-comb references to about
    10^-3; for the p' = 0 cat ancilla they are trig-modulated Gaussians and
    differ substantially, and only the exact images keep the p-quadrature
    sign cells aligned with the state.
    """
    anc = build_ancilla(cfg, grid).normalize()
    out = []
    for parity in ("even", "odd"):
        cat = squeezed_cat_shifted(CatParams(parity, cfg.alpha_prime, cfg.s_prime), grid)
        img = _kraus_apply(cat, anc, 0.0).normalize()
        peak = np.max(np.abs(img.amplitudes))
        if np.max(np.abs(img.amplitudes.imag)) > 1e-9 * peak:
            raise GuardError("ideal modulation image is not real")
        out.append(WaveFunction(grid, img.amplitudes.real).normalize())
    return out[0], out[1]


def build_binning(cfg: BellConfig, grid: QuadratureGrid,
                  style: str = "ideal_image") -> Binning:
    """Sign binning for a configuration.

    style "ideal_image" (default) uses the exact modulation images of the
    analytic cats; style "reference" uses the half-integer-comb f/g forms.
    """
    if style == "reference":
        f = fg_reference(cfg.fg_params, "f", grid)
        g = fg_reference(cfg.fg_params, "g", grid)
    elif style == "ideal_image":
        f, g = ideal_images(cfg, grid)
    else:
        raise ValueError("binning style must be 'ideal_image' or 'reference'")
    return sign_binning(f, g)


@dataclass(frozen=True)
class PipelineResult:
    config: BellConfig
    state: TwoModeState
    binning: Binning
    p_subtract: float
    p_modulation: float

    def mode_mean_photon(self, mode: str = "A") -> float:
        if isinstance(self.state, HeraldedEnsemble):
            return self.state.mode_mean_photon(mode)
        return mean_photon(self.state.reduced_kernel(mode))


def run_pipeline(cfg: BellConfig, grid: QuadratureGrid,
                 modulation_width: Optional[float] = None,
                 nodes: int = GL_NODES) -> PipelineResult:
    """Assemble the two-mode resource for one configuration.

    ``modulation_width`` None means the tight (one grid cell) double herald,
    which keeps the state a pure two-term superposition.
    """
    pair, p_sub = build_entangled_pair(cfg, grid)
    anc = build_ancilla(cfg, grid)
    width = grid.dx if modulation_width is None else modulation_width
    win = HeraldWindow.single(width)
    n = 1 if width <= grid.dx * (1 + 1e-9) else nodes
    state, p_mod = modulation_stage(pair, anc, (win, win),
                                    params=cfg.modulation_params(), nodes=n)
    return PipelineResult(cfg, state, build_binning(cfg, grid), p_sub, p_mod)


def theta_scan(cfg: BellConfig, grid: QuadratureGrid, thetas: Sequence[float],
               modulation_width: Optional[float] = None) -> list[CHSHResult]:
    """S over preparation phases; the pipeline is rebuilt at every theta
    (the phase enters the subtraction superposition, not the measurement)."""
    from dataclasses import replace
    out = []
    for th in thetas:
        pr = run_pipeline(replace(cfg, theta=float(th)), grid,
                          modulation_width=modulation_width)
        out.append(chsh(pr.state, pr.binning, theta=float(th)))
    return out


# ---------------------------------------------------------------------------
# Whole-setup resource accounting
# ---------------------------------------------------------------------------

def compose_pipeline_ledger(parts: Sequence[ResourceLedger], p_subtract: float,
                            p_modulation: float) -> ResourceLedger:
    """Full-discard retry model: one attempt of the final double herald
    consumes a fresh copy of every input chain, and a failed APD or
    modulation herald discards all of them.  (A memory-sparing variant would
    divide only the modulated parts by p_modulation; swap here if wanted.)"""
    p_att = p_subtract * p_modulation
    if p_att <= 0:
        raise GuardError("pipeline attempt probability vanished")
    probs: tuple = ()
    for part in parts:
        probs = probs + part.stage_probabilities
    expected = sum(part.expected_resources for part in parts) / p_att
    minimal = sum(part.minimal_resources for part in parts)
    return ResourceLedger(probs + (p_subtract, p_modulation), expected, minimal)


def pipeline_resource_parts(cfg: BellConfig, grid: QuadratureGrid,
                            breed_schedule, nodes: int = GL_NODES) -> list[ResourceLedger]:
    """Breeding ledgers for every single-photon chain one attempt consumes:
    the two subtraction cats and one comb ancilla per mode.

    The odd subtraction cat is accounted as the nearest smaller odd photon
    number (amplitudes enter the engine analytically; the ledger tracks the
    single-photon cost of the matching binary-bred cat).
    """
    from .breeding import Schedule, breed_cat, breed_comb, breed_n, cat_plan

    n_even = 2 ** max(cfg.p - cfg.p_prime - 2, 0)
    p_even = max(cfg.p - cfg.p_prime - 2, 0)
    _, led_even = breed_cat(cat_plan(p_even, breed_schedule, grid), grid, nodes=nodes) \
        if p_even > 0 else (None, ResourceLedger.unit())
    n_odd = n_even - 1 if n_even > 2 else 1
    if n_odd > 1:
        _, led_odd = breed_n(n_odd, breed_schedule, grid, nodes=nodes)
    else:
        led_odd = ResourceLedger.unit()

    if cfg.p_prime == 0:
        _, led_anc = breed_n(cfg.n_ancilla, breed_schedule, grid, nodes=nodes)
    else:
        _, led_cat = breed_cat(cat_plan(cfg.p, breed_schedule, grid), grid, nodes=nodes)
        cat = squeezed_cat_shifted(CatParams("even", cfg.alpha_ancilla, cfg.s_prime), grid)
        _, led_anc = breed_comb(cfg.p_prime, cat, cfg.a0, breed_schedule, grid,
                                input_ledger=led_cat, nodes=nodes)
    return [led_even, led_odd, led_anc, led_anc]


def pipeline_success(cfg: BellConfig, grid: QuadratureGrid,
                     widths: Sequence[float], breed_schedule=None,
                     common_sweep: bool = True,
                     nodes: int = GL_NODES,
                     ledger_nodes: int = 3) -> list[dict]:
    """(S, total success probability) locus over the heralding width.

    ``common_sweep`` scales every heralding interval together (breeding
    schedules start at the same width as the modulation window); otherwise
    the breeding ledger is fixed at ``breed_schedule`` and only the
    modulation window sweeps.
    """
    from .breeding import Schedule

    pair, p_sub = build_entangled_pair(cfg, grid)
    anc = build_ancilla(cfg, grid)
    binning = build_binning(cfg, grid)
    parts = None
    if not common_sweep:
        if breed_schedule is None:
            raise ValueError("fixed-breeding sweep needs a breed_schedule")
        parts = pipeline_resource_parts(cfg, grid, breed_schedule, nodes=ledger_nodes)
    rows = []
    for width in widths:
        if common_sweep:
            parts = pipeline_resource_parts(cfg, grid, Schedule.geometric(width),
                                            nodes=ledger_nodes)
        win = HeraldWindow.single(width)
        n = 1 if width <= grid.dx * (1 + 1e-9) else nodes
        state, p_mod = modulation_stage(pair, anc, (win, win),
                                        params=cfg.modulation_params(), nodes=n)
        ledger = compose_pipeline_ledger(parts, p_sub, p_mod)
        res = chsh(state, binning, theta=cfg.theta)
        rows.append({
            "config": cfg.label,
            "mod_width": width,
            "s_value": res.s_value,
            "p_succ": ledger.p_succ,
            "p_modulation": p_mod,
            "p_subtract": p_sub,
            "expected_resources": ledger.expected_resources,
            "minimal_resources": ledger.minimal_resources,
        })
    return rows
