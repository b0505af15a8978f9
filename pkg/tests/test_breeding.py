import math

import numpy as np
import pytest

from cvbreed.breeding import (
    ResourceLedger,
    Schedule,
    breed_cat,
    breed_comb,
    breed_n,
    cat_plan,
    fit_nearest_comb,
    fit_nearest_scs,
    geometric_dx1_for_fidelity,
    optimize_schedule,
)
from cvbreed.errors import GuardError
from cvbreed.qgrid import fidelity
from cvbreed.states import CatParams, CombParams, fock, squeezed_cat, squeezed_cat_shifted

from oracles import bred_cat_oracle, comb_fit_grid_scan, scs_fit_grid_scan

SQRT2 = math.sqrt(2.0)


def l2_distance(psi, target):
    ov = np.vdot(target.amplitudes, psi.amplitudes) * psi.grid.dx
    aligned = psi.amplitudes * np.exp(-1j * np.angle(ov))
    return math.sqrt(float(np.sum(np.abs(aligned - target.amplitudes) ** 2) * psi.grid.dx))


class TestBreedCat:
    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_tight_limit_matches_exponentiation_oracle(self, grid, p):
        state, _ = breed_cat(cat_plan(p, Schedule.tight(), grid), grid)
        psi = state.dominant_state()
        assert l2_distance(psi, bred_cat_oracle(2 ** p, grid)) < 1e-4

    def test_even_parity(self, grid):
        state, _ = breed_cat(cat_plan(2, Schedule.tight(), grid), grid)
        psi = state.dominant_state()
        ov = np.real(np.vdot(psi.amplitudes, psi.reflected().amplitudes) * grid.dx)
        assert ov == pytest.approx(1.0, abs=1e-6)

    def test_ledger_counts(self, grid):
        _, ledger = breed_cat(cat_plan(3, Schedule.geometric(0.3), grid), grid)
        assert ledger.minimal_resources == 8
        assert len(ledger.stage_probabilities) == 7  # full binary tree merges
        assert 0 < ledger.p_succ < 1

    def test_mixedness_from_finite_windows(self, small_grid):
        state, _ = breed_cat(cat_plan(2, Schedule.geometric(0.5), small_grid), small_grid)
        assert state.purity() < 1.0 - 1e-4
        assert state.trace() == pytest.approx(1.0, abs=1e-8)

    def test_infeasible_plan_rejected(self, grid):
        from cvbreed.optics import HeraldWindow
        from cvbreed.breeding import BreedingPlan
        plan = BreedingPlan("cat", (HeraldWindow.single(grid.dx, center=9.0),), target_n=2)
        with pytest.raises(GuardError):
            breed_cat(plan, grid)


class TestBreedN:
    def test_n1_is_single_photon(self, grid):
        state, ledger = breed_n(1, Schedule.tight(), grid)
        assert ledger.p_succ == 1.0
        assert fidelity(state, fock(1, grid)) == pytest.approx(1.0, abs=1e-10)

    def test_n7_parity_odd(self, grid):
        state, _ = breed_n(7, Schedule.tight(), grid)
        psi = state.dominant_state()
        ov = np.real(np.vdot(psi.amplitudes, psi.reflected().amplitudes) * grid.dx)
        assert ov == pytest.approx(-1.0, abs=1e-6)

    def test_n7_matches_oracle(self, grid):
        state, _ = breed_n(7, Schedule.tight(), grid)
        psi = state.dominant_state()
        assert fidelity(psi, bred_cat_oracle(7, grid)) > 0.9999

    def test_parity_rule_across_n(self, grid):
        for n in (2, 3, 5):
            state, _ = breed_n(n, Schedule.tight(), grid)
            psi = state.dominant_state()
            ov = np.real(np.vdot(psi.amplitudes, psi.reflected().amplitudes) * grid.dx)
            assert ov == pytest.approx(1.0 if n % 2 == 0 else -1.0, abs=1e-6)

    def test_minimal_resources(self, grid):
        _, ledger = breed_n(7, Schedule.tight(), grid)
        assert ledger.minimal_resources == 7


class TestLedger:
    def test_unit_probability_recursion(self):
        led = ResourceLedger.unit()
        for _ in range(3):
            led = ResourceLedger.merge(led, led, 1.0)
        assert led.expected_resources == 8
        assert led.minimal_resources == 8
        assert led.p_succ == 1.0

    def test_p_succ_is_product_of_stage_probabilities(self):
        led = ResourceLedger.unit()
        for p in (0.5, 0.25):
            led = ResourceLedger.merge(led, led, p)
        assert led.p_succ == pytest.approx(0.5 * 0.25)


class TestBreedComb:
    def test_single_stage_on_analytic_cat(self, grid):
        sp, alpha = 0.5, 8.0
        a0 = math.pi / (SQRT2 * sp * alpha)
        cat = squeezed_cat_shifted(CatParams("even", alpha, sp), grid)
        state, _ = breed_comb(1, cat, a0, Schedule.tight(), grid)
        fit = fit_nearest_comb(state, seed=(a0 * SQRT2, a0 / math.pi, sp))
        assert fit.fidelity > 0.99
        assert fit.params["a"] == pytest.approx(a0 * SQRT2, rel=0.02)

    def test_two_stage_spacing_doubles(self, grid):
        sp, alpha = 0.5, 8.0
        a0 = math.pi / (SQRT2 * sp * alpha)
        cat = squeezed_cat_shifted(CatParams("even", alpha, sp), grid)
        state, _ = breed_comb(2, cat, a0, Schedule.tight(), grid)
        fit = fit_nearest_comb(state, seed=(2 * a0, a0 / math.pi, sp))
        assert fit.params["a"] == pytest.approx(2.0 * a0, rel=0.02)

    def test_periodic_beats_single_window(self, grid):
        from cvbreed.optics import HeraldWindow, herald_mix
        sp, alpha = 0.5, 8.0
        a0 = math.pi / (SQRT2 * sp * alpha)
        cat = squeezed_cat_shifted(CatParams("even", alpha, sp), grid)
        w = 0.1
        p_per = herald_mix(cat, cat, HeraldWindow.periodic(a0 * SQRT2, w)).probability
        p_sin = herald_mix(cat, cat, HeraldWindow.single(w)).probability
        assert p_per >= p_sin

    def test_overlapping_windows_rejected(self, grid):
        sp, alpha = 0.5, 8.0
        a0 = math.pi / (SQRT2 * sp * alpha)
        cat = squeezed_cat_shifted(CatParams("even", alpha, sp), grid)
        with pytest.raises(ValueError):
            breed_comb(1, cat, a0, Schedule.geometric(2.0 * a0), grid)


class TestFits:
    def test_scs_self_fit(self, grid):
        target = squeezed_cat(CatParams("even", 2.0, 1.2), grid)
        fit = fit_nearest_scs(target, seed=(1.8, 1.4))
        assert fit.fidelity == pytest.approx(1.0, abs=1e-6)
        assert fit.params["alpha"] == pytest.approx(2.0, abs=1e-4)
        assert fit.params["s_prime"] == pytest.approx(1.2, abs=1e-4)

    def test_bred_p2_parameters(self, grid):
        state, _ = breed_cat(cat_plan(2, Schedule.tight(), grid), grid)
        fit = fit_nearest_scs(state, seed=(2.0, SQRT2))
        assert abs(fit.params["alpha"] - 2.0) / 2.0 < 0.10
        assert abs(fit.params["s_prime"] - SQRT2) / SQRT2 < 0.15

    def test_vacuum_fit_matches_grid_scan(self, small_grid):
        vac = fock(0, small_grid)
        fit = fit_nearest_scs(vac, seed=(0.5, 1.0))
        oracle = scs_fit_grid_scan(vac, small_grid, (0.05, 1.2), (0.6, 1.6))
        assert fit.fidelity >= oracle - 1e-3

    def test_comb_self_fit(self, grid):
        params = CombParams(0, 0.6, 0.12, 0.5)
        target = comb_state = __import__("cvbreed.states", fromlist=["comb"]).comb(params, grid)
        fit = fit_nearest_comb(target, seed=(0.55, 0.1, 0.45))
        assert fit.fidelity == pytest.approx(1.0, abs=1e-6)
        assert fit.params["a"] == pytest.approx(0.6, abs=1e-3)
        assert fit.params["s"] == pytest.approx(0.12, abs=1e-3)

    def test_comb_fit_against_grid_scan(self, small_grid):
        sp, alpha = 0.56, 4.0
        a0 = math.pi / (SQRT2 * sp * alpha)
        cat = squeezed_cat_shifted(CatParams("even", alpha, sp), small_grid)
        state, _ = breed_comb(1, cat, a0, Schedule.tight(), small_grid)
        fit = fit_nearest_comb(state, seed=(a0 * SQRT2, a0 / math.pi, sp))
        oracle = comb_fit_grid_scan(state, small_grid,
                                    (a0 * SQRT2 * 0.9, a0 * SQRT2 * 1.1),
                                    (a0 / math.pi * 0.7, a0 / math.pi * 1.3),
                                    (sp * 0.8, sp * 1.2), n_pts=10)
        assert fit.fidelity >= oracle - 1e-3

    def test_condition_violation_flagged(self, grid):
        state = squeezed_cat_shifted(CatParams("even", 2.0, 0.9), grid)
        fit = fit_nearest_comb(state, seed=(1.2, 0.5, 0.9))
        if not fit.params["condition_ok"]:
            assert "condition" in fit.note


class TestMonotonicity:
    def test_fidelity_up_and_success_down_as_windows_shrink(self, small_grid):
        quality = []
        for dx1 in (0.6, 0.3, 0.15):
            state, ledger = breed_cat(cat_plan(2, Schedule.geometric(dx1), small_grid),
                                      small_grid)
            fit = fit_nearest_scs(state, seed=(2.0, SQRT2))
            quality.append((fit.fidelity, ledger.p_succ))
        fids = [q[0] for q in quality]
        probs = [q[1] for q in quality]
        assert fids == sorted(fids)
        assert probs == sorted(probs, reverse=True)


class TestOptimizeSchedule:
    def test_p1_matches_scan_oracle(self, small_grid):
        target = 0.985
        plan, fid, ps = optimize_schedule("cat", 1, target, small_grid, sweeps=2)
        # 1-D scan oracle: largest width with fidelity above the target
        best = 0.0
        for w in np.linspace(small_grid.dx, 1.2, 40):
            state, ledger = breed_cat(
                cat_plan(1, Schedule.from_widths([w]), small_grid), small_grid)
            f = fit_nearest_scs(state, seed=(SQRT2, SQRT2)).fidelity
            if f >= target:
                best = max(best, ledger.p_succ)
        assert ps >= best * 0.98

    def test_p3_dominates_geometric_rule_at_097(self, small_grid):
        target = 0.97
        _, _, ps_geo = geometric_dx1_for_fidelity(3, target, small_grid)
        _, fid, ps_opt = optimize_schedule("cat", 3, target, small_grid, sweeps=1)
        assert fid >= target
        assert ps_opt >= ps_geo - 1e-6

    def test_unreachable_target(self, small_grid):
        with pytest.raises(GuardError):
            geometric_dx1_for_fidelity(2, 0.999999, small_grid)
