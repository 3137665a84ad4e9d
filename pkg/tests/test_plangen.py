import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corpus import random_plan_case
from evplan.evmodel import EvModel, SocSignal
from evplan.plangen import (
    ChargingSlot,
    DemandPlan,
    FlexibilityWindow,
    PlanGenerationError,
    charge_time,
    compute_slots,
    compute_windows,
    demand_from_soc,
    discomfort,
    generate_plans,
    place_intervals,
    plan_discomfort,
    rank_slots,
    slot_counts,
)

# ct(0.6) = 0.4 * 1 / 8 h = 3 minutes
THREE_STEP = EvModel("three", 100, 100, battery_capacity=1.0, charge_rate=8.0)
# ct(0.6) = 0.4 * 5 / 24 h = 5 minutes
FIVE_STEP = EvModel("five", 100, 100, battery_capacity=5.0, charge_rate=24.0)


def signal(*values):
    return SocSignal(np.array(values, dtype=float))


def parked(model, soc0, minutes, lead=3):
    """Drive down to ``soc0``, then stand still for ``minutes`` with control charging."""
    gain = model.charge_rate / 60 / model.battery_capacity
    fall = np.linspace(1.0, soc0, lead + 1)
    rise = np.minimum(1.0, soc0 + gain * np.arange(1, minutes + 1))
    return SocSignal(np.concatenate([fall, rise]))


class TestChargeTime:
    def test_full_battery(self, leaf):
        assert charge_time(leaf, 1.0) == 0

    def test_leaf_empty(self, leaf):
        assert charge_time(leaf, 0.0) == 219

    def test_leaf_half(self, leaf):
        assert charge_time(leaf, 0.5) == 110

    def test_exact_minutes_not_overshot(self):
        assert charge_time(THREE_STEP, 0.6) == 3
        assert charge_time(FIVE_STEP, 0.6) == 5

    def test_coarser_resolution(self, leaf):
        assert charge_time(leaf, 0.0, resolution=15) == math.ceil(218.1818 / 15)

    def test_rejects_out_of_range(self, leaf):
        with pytest.raises(ValueError):
            charge_time(leaf, 1.5)


class TestWindows:
    def test_monotone_decreasing_has_none(self):
        assert compute_windows(signal(1.0, 0.9, 0.7, 0.4, 0.1), THREE_STEP) == []

    def test_constant_has_none(self):
        assert compute_windows(signal(*[0.5] * 10), THREE_STEP) == []

    def test_hand_traced_window(self):
        sig = signal(1.0, 0.8, 0.6, 0.7, 0.8, 0.9, 1.0, 1.0, 0.9)
        assert compute_windows(sig, THREE_STEP) == [FlexibilityWindow(2, 7, 0.6, 0)]

    def test_short_rise_excluded(self):
        sig = signal(1.0, 0.8, 0.6, 0.7, 0.8, 0.7, 0.6)
        assert compute_windows(sig, FIVE_STEP) == []
        # two steps are too short for the three-step model as well; three are enough
        assert [w.start for w in compute_windows(sig, THREE_STEP)] == []
        longer = signal(1.0, 0.8, 0.6, 0.7, 0.8, 0.9, 0.7)
        assert compute_windows(longer, THREE_STEP) == [FlexibilityWindow(2, 5, 0.6, 0)]

    def test_excluded_window_does_not_take_an_index(self):
        sig = signal(1.0, 0.6, 0.7, 0.5, 0.6, 0.7, 0.8, 0.9, 0.9, 0.8)
        wins = compute_windows(sig, THREE_STEP)
        assert [(w.start, w.end, w.index) for w in wins] == [(3, 8, 0)]

    def test_flat_after_fall_does_not_open(self):
        # 0.6 repeats, so neither sample is a strict minimum
        sig = signal(1.0, 0.6, 0.6, 0.7, 0.8, 0.9, 1.0, 0.9)
        assert compute_windows(sig, THREE_STEP) == []

    def test_plateau_inside_rise_continues(self):
        sig = signal(1.0, 0.6, 0.7, 0.7, 0.8, 0.9, 1.0, 0.8)
        assert compute_windows(sig, THREE_STEP) == [FlexibilityWindow(1, 6, 0.6, 0)]

    def test_no_window_at_edges(self):
        assert compute_windows(signal(0.2, 0.5, 0.8, 1.0), THREE_STEP) == []

    def test_two_windows_are_disjoint_and_ordered(self, quick_model):
        sig = signal(1.0, 0.5, 0.7, 0.9, 1.0, 1.0, 0.4, 0.6, 0.8, 1.0, 0.9)
        wins = compute_windows(sig, quick_model)
        assert [(w.start, w.end, w.index) for w in wins] == [(1, 5, 0), (6, 9, 1)]


class TestSlots:
    def _window(self, start, size, soc=0.0):
        return FlexibilityWindow(start, start + size, soc)

    def test_exact_fit_is_one_slot(self, leaf):
        assert slot_counts([self._window(0, 219)], leaf, 4) == [(1, 219)]

    def test_cap_branch(self, leaf):
        assert slot_counts([self._window(0, 2190)], leaf, 4) == [(4, 547)]

    def test_below_cap(self, leaf):
        assert slot_counts([self._window(0, 3 * 219)], leaf, 4) == [(3, 219)]

    def test_cap_exactly_reached(self, leaf):
        assert slot_counts([self._window(0, 4 * 219 + 10)], leaf, 4) == [(4, 221)]

    def test_single_slot(self):
        assert compute_slots(FlexibilityWindow(5, 50, 0.3), 1, 45) == [ChargingSlot(0, 1, 5, 50)]

    def test_index_arithmetic(self):
        slots = compute_slots(FlexibilityWindow(100, 340, 0.3), 3, 80)
        assert [(s.start, s.end) for s in slots] == [(100, 180), (180, 260), (260, 340)]
        assert [s.ordinal for s in slots] == [1, 2, 3]

    def test_remainder_goes_to_last(self):
        slots = compute_slots(FlexibilityWindow(0, 10, 0.3), 3, 3)
        assert [(s.start, s.end) for s in slots] == [(0, 3), (3, 6), (6, 10)]

    @given(st.integers(1, 2000), st.integers(0, 99), st.integers(1, 6))
    def test_slots_tile_the_window(self, size, soc_pct, v_max):
        model = EvModel("m", 100, 100, battery_capacity=10.0, charge_rate=7.0)
        soc = soc_pct / 100
        need = charge_time(model, soc)
        if size < need:
            return
        w = FlexibilityWindow(7, 7 + size, soc)
        [(count, slot_size)] = slot_counts([w], model, v_max)
        assert 1 <= count <= v_max
        slots = compute_slots(w, count, slot_size)
        assert slots[0].start == w.start and slots[-1].end == w.end
        assert all(a.end == b.start for a, b in zip(slots, slots[1:]))
        assert all(s.size >= need for s in slots)


class TestRanking:
    def _slots(self):
        return compute_slots(FlexibilityWindow(0, 30, 0.2), 3, 10)

    def test_uniform_keeps_order(self):
        ranked = rank_slots(self._slots(), np.full(30, 0.3))
        assert [s.ordinal for s in ranked] == [1, 2, 3]
        assert [s.rank for s in ranked] == [0, 1, 2]

    def test_busy_first_slot_goes_last(self):
        lam = np.zeros(30)
        lam[:10] = 0.9
        assert [s.ordinal for s in rank_slots(self._slots(), lam)] == [2, 3, 1]

    def test_two_quiet_slots_ahead_of_busy_one(self):
        # morning rush fills slot 3; slot 2 is quieter than slot 1
        lam = np.concatenate([np.full(10, 0.2), np.full(10, 0.05), np.full(10, 0.8)])
        assert [s.ordinal for s in rank_slots(self._slots(), lam)] == [2, 1, 3]


class TestDiscomfort:
    def test_zero_likelihood(self):
        assert discomfort(np.array([0.1, 0.5, 0.2]), np.zeros(3)) == 0

    def test_full_battery(self):
        assert discomfort(np.ones(5), np.full(5, 0.7)) == 0

    def test_hand_example(self):
        assert discomfort(np.array([1, 0.5, 0.5, 1]), np.array([0, 1, 1, 0])) == pytest.approx(0.25)

    def test_boundary_signal_drops_initial_sample(self):
        sig = signal(0.0, 1, 0.5, 0.5, 1)
        assert discomfort(sig, np.array([0, 1, 1, 0])) == pytest.approx(0.25)

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            discomfort(np.ones(3), np.ones(5))

    def test_plan_without_trajectory(self):
        with pytest.raises(ValueError):
            plan_discomfort(DemandPlan(np.zeros(3), 0, 0.0), np.zeros(3))


class TestDemandFromSoc:
    def test_strict_increase_only(self):
        d = demand_from_soc(np.array([0.5, 0.6, 0.6, 0.55, 0.7, 1.0, 1.0]), 6.6)
        np.testing.assert_array_equal(d, [6.6, 0, 0, 6.6, 6.6, 0])


class TestPlaceIntervals:
    def test_draws_within_slots(self):
        slots = [ChargingSlot(0, 1, 0, 60), ChargingSlot(0, 2, 100, 160)]
        steps = place_intervals(slots, 4, 15, 60, np.random.default_rng(3))
        assert steps.size == 60
        assert all((0 <= s < 60) or (100 <= s < 160) for s in steps)

    def test_partial_cells_used_when_grid_is_short(self):
        # one 10-step slot with m = 4: two full cells and a 2-step tail
        steps = place_intervals([ChargingSlot(0, 1, 0, 10)], 3, 4, 10, np.random.default_rng(0))
        np.testing.assert_array_equal(steps, np.arange(10))

    def test_too_little_room(self):
        with pytest.raises(PlanGenerationError):
            place_intervals([ChargingSlot(0, 1, 0, 5)], 2, 4, 6, np.random.default_rng(0))


class TestGeneratePlans:
    def test_single_slot_window_gives_identical_contiguous_plans(self, leaf):
        sig = parked(leaf, 0.5, 110)
        lam = np.zeros(sig.horizon)
        ps = generate_plans(sig, leaf, lam, interval=10, v_max=4, seed=1)
        assert ps.v == 1
        charged = np.nonzero(ps.plans[0].values)[0]
        np.testing.assert_array_equal(charged, np.arange(3, 113))
        np.testing.assert_array_equal(ps.plans[0].values, demand_from_soc(sig.values, leaf.charge_power))

    def test_all_plans_identical_with_one_slot(self, leaf):
        sig = parked(leaf, 0.5, 110)
        ps = generate_plans(sig, leaf, np.zeros(sig.horizon), interval=1, v_max=1, seed=9)
        assert ps.v == 1

    def test_leaf_thirty_minute_intervals(self, leaf):
        sig = parked(leaf, 0.0, 900)
        lam = np.zeros(sig.horizon)
        ps = generate_plans(sig, leaf, lam, interval=30, v_max=4, seed=5)
        assert ps.v == 4  # 900 // 219 = 4 slots
        quantum = 30 * leaf.charge_power / 60
        for plan in ps.plans:
            charged = np.count_nonzero(plan.values)
            # 8 intervals cover 240 steps; the battery is full after 219
            assert charged == 219
            energy = charged * leaf.charge_power / 60
            assert abs(energy - 24.0) <= quantum
            assert plan.planned_soc[-1] == 1.0
        assert 8 * 0.5 * 6.6 == pytest.approx(26.4)

    def test_last_plan_uses_every_slot(self, leaf):
        sig = parked(leaf, 0.5, 4 * 110)
        lam = np.zeros(sig.horizon)
        ps = generate_plans(sig, leaf, lam, interval=10, v_max=4, seed=2)
        slots = compute_slots(FlexibilityWindow(3, 443, 0.5), 4, 110)
        last = np.nonzero(ps.plans[-1].values)[0]
        touched = {s.ordinal for s in slots for t in last if s.start <= t < s.end}
        assert len(touched) >= 2
        first = np.nonzero(ps.plans[0].values)[0]
        assert first.min() >= 3 and first.max() < 113  # lowest-ranked slot on ties is the earliest

    def test_vehicle_without_windows(self, leaf):
        sig = signal(1.0, 0.9, 0.8, 0.7)
        ps = generate_plans(sig, leaf, np.zeros(3), interval=5, v_max=4, seed=0, agent_id="x")
        assert ps.v == 1 and ps.agent_id == "x"
        assert not ps.plans[0].values.any()

    def test_likelihood_length_checked(self, leaf):
        with pytest.raises(ValueError):
            generate_plans(parked(leaf, 0.5, 110), leaf, np.zeros(5), 10, 4, 0)

    def test_discomfort_uses_plan_trajectory(self, leaf):
        sig = parked(leaf, 0.5, 4 * 110)
        lam = np.linspace(0, 1, sig.horizon)
        ps = generate_plans(sig, leaf, lam, interval=10, v_max=4, seed=2)
        for plan in ps.plans:
            assert plan.discomfort == pytest.approx(discomfort(plan.planned_soc, lam))


def _window_sets(sig, model, lam, v_max):
    wins = compute_windows(sig, model)
    ranked = [
        rank_slots(compute_slots(w, c, s), lam)
        for w, (c, s) in zip(wins, slot_counts(wins, model, v_max))
    ]
    return wins, ranked


class TestPlanProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_plan_invariants(self, case_seed):
        sig, model, lam, m, v_max, seed = random_plan_case(np.random.default_rng(case_seed))
        ps = generate_plans(sig, model, lam, m, v_max, seed)
        wins, ranked = _window_sets(sig, model, lam, v_max)
        phi, h = model.charge_power, sig.step_hours
        assert ps.v == max((len(r) for r in ranked), default=1) <= max(v_max, 1)

        inside = np.zeros(sig.horizon, dtype=bool)
        for w in wins:
            inside[w.start:w.end] = True

        for j, plan in enumerate(ps.plans):
            d, x = plan.values, plan.planned_soc.values
            # values are 0 or phi, nonzero exactly where the planned SoC rises
            assert set(np.unique(d)) <= {0.0, phi}
            np.testing.assert_array_equal(d != 0, x[1:] > x[:-1])
            assert not d[~inside].any()
            for w, slots in zip(wins, ranked):
                delivered = np.count_nonzero(d[w.start:w.end]) * phi * h
                deficit = (1 - w.soc_at_start) * model.battery_capacity
                assert abs(delivered - deficit) <= m * phi * h + 1e-9
                allowed = np.zeros(sig.horizon, dtype=bool)
                for s in slots[: min(j + 1, len(slots))]:
                    allowed[s.start:s.end] = True
                assert not d[inside & ~allowed & (np.arange(sig.horizon) >= w.start)
                             & (np.arange(sig.horizon) < w.end)].any()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_deterministic(self, case_seed):
        sig, model, lam, m, v_max, seed = random_plan_case(np.random.default_rng(case_seed))
        a = generate_plans(sig, model, lam, m, v_max, seed)
        b = generate_plans(sig, model, lam, m, v_max, seed)
        np.testing.assert_array_equal(a.matrix(), b.matrix())

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_planned_soc_never_above_seed(self, case_seed):
        sig, model, lam, m, v_max, seed = random_plan_case(np.random.default_rng(case_seed))
        x = sig.values
        # a zero-energy trip leaves a plateau below full inside a window; plans may charge there
        if any(np.any((np.diff(x[w.start:w.end + 1]) == 0) & (x[w.start:w.end] < 1))
               for w in compute_windows(sig, model)):
            return
        for plan in generate_plans(sig, model, lam, m, v_max, seed).plans:
            assert np.all(plan.planned_soc.values <= sig.values + 1e-12)
