import math

import numpy as np
import pytest

from cvbreed.errors import GridError, TailError
from cvbreed.qgrid import (
    DensityKernel,
    WaveFunction,
    fidelity,
    inner,
    kernel_to_momentum,
    make_grid,
    mean_photon,
    to_momentum,
    to_position,
)
from cvbreed.states import CatParams, fock, squeezed_cat

NORM_TOL = 1e-8
ROUNDTRIP_TOL = 1e-10


class TestMakeGrid:
    def test_spacing(self):
        g = make_grid(8.0, 512)
        assert g.dx == pytest.approx(0.03125, abs=0)
        assert g.dx * g.n_points == pytest.approx(2 * g.x_max, rel=1e-15)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(GridError):
            make_grid(8.0, 100)

    def test_large_grid_spacing(self):
        g = make_grid(20.0, 2048)
        assert g.dx == pytest.approx(0.01953125)

    def test_nonpositive_xmax_rejected(self):
        with pytest.raises(GridError):
            make_grid(-1.0, 512)

    def test_symmetric_points(self):
        g = make_grid(12.0, 1024)
        x = g.x
        assert x[g.n_points // 2] == 0.0
        # exact negation pairs, index 0 unpaired
        assert np.all(x[1:] == -x[1:][::-1])


class TestInner:
    def test_vacuum_normalized(self, grid):
        v = fock(0, grid)
        assert inner(v, v) == pytest.approx(1.0, abs=NORM_TOL)

    def test_fock_orthogonality(self, grid):
        assert abs(inner(fock(1, grid), fock(0, grid))) < 1e-12
        assert abs(inner(fock(3, grid), fock(5, grid))) < 1e-12

    def test_opposite_parity_cats(self, grid):
        ce = squeezed_cat(CatParams("even", 2.0, 1.0), grid)
        co = squeezed_cat(CatParams("odd", 2.0, 1.0), grid)
        assert abs(inner(ce, co)) < 1e-12

    def test_grid_mismatch(self, grid, small_grid):
        with pytest.raises(GridError):
            inner(fock(0, grid), fock(0, small_grid))


class TestFourier:
    def test_vacuum_fixed_point(self, grid):
        v = fock(0, grid)
        vt = to_momentum(v)
        assert fidelity(vt, fock(0, vt.grid)) == pytest.approx(1.0, abs=1e-10)

    def test_single_photon_eigenstate(self, grid):
        ft = to_momentum(fock(1, grid))
        ov = inner(fock(1, ft.grid), ft)
        # (-i)^1 eigenvalue; amplitude proportional to i*p*exp(-p^2/2)
        assert ov == pytest.approx(-1j, abs=1e-9)
        assert ft.norm_squared() == pytest.approx(1.0, abs=NORM_TOL)

    def test_round_trip(self, grid):
        psi = fock(7, grid)
        back = to_position(to_momentum(psi), grid)
        assert np.max(np.abs(back.amplitudes - psi.amplitudes)) < ROUNDTRIP_TOL

    def test_parseval_every_family(self, grid):
        for psi in (fock(0, grid), fock(3, grid),
                    squeezed_cat(CatParams("even", 2.0, 1.3), grid),
                    squeezed_cat(CatParams("odd", 1.5, 0.8), grid)):
            assert abs(to_momentum(psi).norm_squared() - psi.norm_squared()) < NORM_TOL

    def test_tail_guard(self, grid):
        flat = WaveFunction(grid, np.ones(grid.n_points, dtype=complex)).normalize()
        with pytest.raises(TailError):
            to_momentum(flat)


class TestMeanPhoton:
    def test_vacuum(self, grid):
        assert mean_photon(fock(0, grid)) == pytest.approx(0.0, abs=1e-10)

    def test_fock7(self, grid):
        assert mean_photon(fock(7, grid)) == pytest.approx(7.0, abs=1e-8)

    def test_kernel_agrees_with_pure(self, grid):
        psi = squeezed_cat(CatParams("even", 2.0, 1.2), grid)
        rho = DensityKernel.from_pure(psi)
        assert mean_photon(rho) == pytest.approx(mean_photon(psi), abs=1e-8)


class TestDensityKernel:
    def test_pure_state_purity(self, grid):
        rho = DensityKernel.from_pure(fock(2, grid))
        assert rho.purity() == pytest.approx(1.0, abs=NORM_TOL)
        assert rho.trace() == pytest.approx(1.0, abs=NORM_TOL)
        assert rho.hermiticity_defect() < 1e-12

    def test_eigenvalues_nonnegative(self, small_grid):
        from cvbreed.breeding import Schedule, breed_cat, cat_plan
        rho, _ = breed_cat(cat_plan(2, Schedule.geometric(0.4), small_grid), small_grid)
        w = np.linalg.eigvalsh(rho.kernel * small_grid.dx)
        assert w.min() > -1e-8
        assert w.sum() == pytest.approx(1.0, abs=1e-8)

    def test_dominant_state(self, grid):
        psi = squeezed_cat(CatParams("even", 1.5, 1.0), grid)
        rho = DensityKernel.from_pure(psi)
        assert fidelity(rho.dominant_state(), psi) == pytest.approx(1.0, abs=1e-9)

    def test_kernel_momentum_transform(self, grid):
        psi = squeezed_cat(CatParams("odd", 1.5, 1.1), grid)
        rho_p = kernel_to_momentum(DensityKernel.from_pure(psi))
        psi_p = to_momentum(psi)
        assert fidelity(rho_p, psi_p) == pytest.approx(1.0, abs=1e-9)


class TestGridIndependence:
    def test_doubling_changes_fidelity_below_tolerance(self):
        from cvbreed.breeding import Schedule, breed_cat, cat_plan, fit_nearest_scs
        vals = []
        for n in (1024, 2048):
            g = make_grid(12.0, n)
            state, _ = breed_cat(cat_plan(2, Schedule.geometric(0.3), g), g)
            vals.append(fit_nearest_scs(state, seed=(2.0, math.sqrt(2.0))).fidelity)
        assert abs(vals[0] - vals[1]) < 1e-4
