"""Built-in oracle-equivalence checks, runnable from the CLI.

Each check recomputes its expected value from an independent construction
(direct exponentiation, analytic algebra, bound statements), so a regression
anywhere in the engine shows up as a failed line.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SimulationError
from .qgrid import WaveFunction, make_grid, to_momentum


def _check_grid_adequacy(n_points: int, x_max: float) -> tuple[bool, str]:
    """Default protocol states need the single-photon breeding limit to hold
    on this grid; coarse grids (e.g. 64 points) degrade it visibly."""
    try:
        grid = make_grid(x_max, n_points)
        from .breeding import Schedule, breed_cat, cat_plan
        state, _ = breed_cat(cat_plan(1, Schedule.tight(), grid), grid)
        psi = state.dominant_state()
        x = grid.x
        oracle = WaveFunction(grid, (x ** 2 * np.exp(-0.5 * x * x)).astype(complex)).normalize()
        ov = np.vdot(oracle.amplitudes, psi.amplitudes) * grid.dx
        l2 = math.sqrt(max(np.sum(np.abs(psi.amplitudes * np.exp(-1j * np.angle(ov))
                                         - oracle.amplitudes) ** 2) * grid.dx, 0.0))
        return l2 < 1e-4, f"breeding limit L2 = {l2:.2e} (need < 1e-4)"
    except SimulationError as exc:
        return False, f"grid rejected: {exc}"


def _check_breeding_oracle(grid) -> tuple[bool, str]:
    from .breeding import Schedule, breed_cat, cat_plan
    state, _ = breed_cat(cat_plan(2, Schedule.tight(), grid), grid)
    psi = state.dominant_state()
    x = grid.x
    oracle = WaveFunction(grid, ((x / 2.0) ** 4 * np.exp(-0.5 * x * x)).astype(complex)).normalize()
    ov = np.vdot(oracle.amplitudes, psi.amplitudes) * grid.dx
    l2 = math.sqrt(max(np.sum(np.abs(psi.amplitudes * np.exp(-1j * np.angle(ov))
                                     - oracle.amplitudes) ** 2) * grid.dx, 0.0))
    return l2 < 1e-4, f"p = 2 exponentiation oracle: L2 = {l2:.2e}"


def _check_comb_identity(grid) -> tuple[bool, str]:
    from .optics import herald_comb_identity_check
    from .states import CombParams
    rep = herald_comb_identity_check(CombParams(0, 0.7, 0.2, 0.46), grid)
    ok = rep.condition_ok and rep.fidelity_zero > 0.99 and rep.fidelity_half > 0.99
    return ok, (f"comb Bell identity: F0 = {rep.fidelity_zero:.4f}, "
                f"F1 = {rep.fidelity_half:.4f}")


def _check_parseval(grid) -> tuple[bool, str]:
    from .states import CatParams, squeezed_cat
    psi = squeezed_cat(CatParams("even", 2.0, math.sqrt(2.0)), grid)
    dn = abs(to_momentum(psi).norm_squared() - psi.norm_squared())
    return dn < 1e-8, f"Parseval defect = {dn:.2e}"


def _check_tsirelson(grid) -> tuple[bool, str]:
    from .bell import standard_config, theta_scan
    cfg = standard_config("3,0")
    results = theta_scan(cfg, grid, np.linspace(-math.pi, math.pi, 9))
    worst = max(r.s_value for r in results)
    spread = worst - min(r.s_value for r in results)
    bound = 2.0 * math.sqrt(2.0) + 1e-6
    # the scan must actually move S (guards against a frozen phase)
    return worst <= bound and spread > 0.1, \
        f"max S over theta = {worst:.4f} (bound {bound:.4f}), spread = {spread:.3f}"


def _check_eps_p_reality(grid, fourier_sign: float) -> tuple[bool, str]:
    """f~ g~ / i must be real; a flipped transform sign breaks the parity."""
    from .bell import ideal_images, standard_config
    cfg = standard_config("3,0")
    f, g = ideal_images(cfg, grid)
    pg = grid.momentum_grid()
    p = pg.x
    x = grid.x
    kern = np.exp(-1j * fourier_sign * np.outer(p, x)) * grid.dx / math.sqrt(2.0 * math.pi)
    ft = kern @ f.amplitudes
    gt = kern @ g.amplitudes
    prod = ft * gt / 1j
    resid = float(np.max(np.abs(prod.imag)) / max(np.max(np.abs(prod)), 1e-300))
    # the product must be real AND anchored to the engine's own convention
    engine = to_momentum(f).amplitudes * to_momentum(g).amplitudes / 1j
    anchor = float(np.max(np.abs(engine.real * prod.real)) > 0
                   and np.sign(np.sum(engine.real * prod.real)))
    ok = resid < 1e-6 and anchor > 0
    return ok, f"eps_p imaginary residue = {resid:.2e}, convention match = {anchor:+.0f}"


def run_selftest(n_points: int = 1024, x_max: float = 12.0,
                 fourier_sign: float = 1.0) -> bool:
    checks = [("grid adequacy", lambda: _check_grid_adequacy(n_points, x_max))]
    grid = None
    try:
        grid = make_grid(x_max, n_points)
    except SimulationError:
        pass
    if grid is not None:
        checks += [
            ("breeding exponentiation limit", lambda: _check_breeding_oracle(grid)),
            ("comb Bell identity", lambda: _check_comb_identity(grid)),
            ("Parseval", lambda: _check_parseval(grid)),
            ("Tsirelson bound", lambda: _check_tsirelson(grid)),
            ("eps_p parity", lambda: _check_eps_p_reality(grid, fourier_sign)),
        ]
    all_ok = True
    for name, fn in checks:
        try:
            ok, detail = fn()
        except SimulationError as exc:
            ok, detail = False, f"raised: {exc}"
        all_ok = all_ok and ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print("selftest:", "all checks passed" if all_ok else "FAILURES present")
    return all_ok
