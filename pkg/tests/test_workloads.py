import math
import random

import pytest

from crowdcoord.errors import InvalidInput
from crowdcoord.workloads import (
    MonteCarloWorkload,
    TileMapWorkload,
    get_workload,
    mc_estimate,
    mc_fold,
    mc_run_slice,
    tile_run_slice,
)


class TestMonteCarlo:
    def test_no_remaining_work_is_identity(self):
        wl = MonteCarloWorkload()
        state = mc_run_slice(wl.new_state(5, 100), 100)
        assert state.trials_done == 100
        assert mc_run_slice(state, 50) == state

    def test_split_run_equals_straight_run(self):
        wl = MonteCarloWorkload()
        straight = mc_run_slice(wl.new_state(9, 1000), 1000)
        split = mc_run_slice(wl.new_state(9, 1000), 500)
        split = mc_run_slice(split, 500)
        assert split == straight

    def test_split_with_serialize_round_trip(self):
        wl = MonteCarloWorkload()
        rng = random.Random(31)
        straight = mc_run_slice(wl.new_state(123, 2000), 2000)
        for _ in range(20):
            cut = rng.randint(1, 1999)
            part = mc_run_slice(wl.new_state(123, 2000), cut)
            part = wl.deserialize(wl.serialize(part))
            assert part.trials_done == cut
            resumed = mc_run_slice(part, 2000 - cut)
            assert resumed == straight

    def test_estimator_converges_to_e(self):
        wl = MonteCarloWorkload()
        state = mc_run_slice(wl.new_state(1, 1_000_000), 1_000_000)
        e_hat = state.draw_count_sum / state.trials_done
        assert abs(e_hat - math.e) < 0.01

    def test_draw_count_at_least_two_per_trial(self):
        wl = MonteCarloWorkload()
        state = mc_run_slice(wl.new_state(2, 5000), 5000)
        assert state.draw_count_sum >= 2 * state.trials_done

    def test_different_seeds_differ(self):
        wl = MonteCarloWorkload()
        a = mc_run_slice(wl.new_state(1, 1000), 1000)
        b = mc_run_slice(wl.new_state(2, 1000), 1000)
        assert a.draw_count_sum != b.draw_count_sum

    def test_budget_below_one_rejected(self):
        wl = MonteCarloWorkload()
        with pytest.raises(InvalidInput):
            mc_run_slice(wl.new_state(1, 10), 0)


class TestMcFold:
    def test_weighted_mean(self):
        wl = MonteCarloWorkload()
        results = [b'{"draws":272,"trials":100}', b'{"draws":271,"trials":100}']
        assert mc_fold(results) == pytest.approx(2.715)
        folded = wl.fold(results)
        assert folded == b'{"draws":543,"trials":200}'

    def test_single_slice(self):
        assert mc_fold([b'{"draws":27,"trials":10}']) == pytest.approx(2.7)

    def test_permutation_invariant(self):
        a = [b'{"draws":272,"trials":100}', b'{"draws":280,"trials":90}']
        assert mc_fold(a) == mc_fold(list(reversed(a)))

    def test_zero_trials_rejected(self):
        with pytest.raises(InvalidInput):
            mc_fold([])

    def test_estimate_round_trip(self):
        wl = MonteCarloWorkload()
        state = mc_run_slice(wl.new_state(4, 500), 500)
        folded = wl.fold([wl.finalize(state)])
        assert mc_estimate(folded) == state.draw_count_sum / 500


class TestTileMap:
    def test_zero_remaining_unchanged(self):
        wl = TileMapWorkload()
        state = tile_run_slice(wl.new_state(3, 10), 10)
        assert tile_run_slice(state, 4) == state

    def test_split_equivalence(self):
        wl = TileMapWorkload()
        straight = tile_run_slice(wl.new_state(8, 120), 120)
        for cut in (1, 7, 60, 119):
            part = tile_run_slice(wl.new_state(8, 120), cut)
            part = wl.deserialize(wl.serialize(part))
            assert tile_run_slice(part, 120 - cut) == straight

    def test_digest_depends_on_seed(self):
        wl = TileMapWorkload()
        a = tile_run_slice(wl.new_state(1, 50), 50)
        b = tile_run_slice(wl.new_state(2, 50), 50)
        assert a.digest != b.digest

    def test_fold_preserves_slice_order(self):
        wl = TileMapWorkload()
        r1 = wl.finalize(tile_run_slice(wl.new_state(1, 5), 5))
        r2 = wl.finalize(tile_run_slice(wl.new_state(2, 5), 5))
        assert wl.fold([r1, r2]) != wl.fold([r2, r1])

    def test_unit_cost_validation(self):
        with pytest.raises(InvalidInput):
            TileMapWorkload(unit_cost=0.0)


class TestRegistry:
    def test_lookup_with_params(self):
        wl = get_workload("tile_map", {"unit_cost": 0.25})
        assert wl.units_per_step == 0.25

    def test_unknown_name(self):
        with pytest.raises(InvalidInput):
            get_workload("sentiment")

    def test_monte_carlo_default(self):
        assert get_workload("monte_carlo").name == "monte_carlo"
