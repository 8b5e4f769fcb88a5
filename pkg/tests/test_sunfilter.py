"""Hottest-pixel statistics, reference selection, and reflection dropping."""

import numpy as np
import pytest

from irpv.sunfilter import (
    PatchThermalStats,
    build_reference,
    filter_reflections,
    find_reference_span,
    patch_stats,
    select_reference,
)


def _stat(ordinal, T, x, y):
    return PatchThermalStats(ordinal, float(T), float(x), float(y), float(np.hypot(x, y)))


# ---------------------------------------------------------------------------
# patch_stats

def test_patch_stats_location_and_norm():
    patch = np.full((8, 12), 30.0)
    patch[5, 7] = 44.0
    s = patch_stats(3, patch)
    assert s.ordinal == 3
    assert s.T == 44.0
    assert (s.x, s.y) == (7.5, 5.5)
    assert s.p == pytest.approx(np.hypot(7.5, 5.5))


def test_patch_stats_plateau_takes_first_row_major():
    patch = np.array([[5.0, 9.0], [9.0, 1.0]])
    s = patch_stats(0, patch)
    assert (s.x, s.y) == (1.5, 0.5)


def test_patch_stats_rejects_bad_arrays():
    with pytest.raises(ValueError):
        patch_stats(0, np.zeros((0, 4)))
    with pytest.raises(ValueError):
        patch_stats(0, np.zeros(9))


# ---------------------------------------------------------------------------
# reference span selection

def test_constant_sequence_uses_full_range():
    stats = [_stat(i, 33.0, 20, 10) for i in range(20)]
    assert find_reference_span(stats) == (0, 19)
    ref = select_reference(stats)
    assert ref.T == 33.0
    assert (ref.x, ref.y) == (20.0, 10.0)
    assert ref.source_range == (0, 19)


def test_runs_of_thirteen_and_six_keep_the_long_one():
    # stable [0,12], isolated jump at 13, stable [14,19]: only the
    # 13-entry run clears the 0.3 * 20 = 6 span requirement
    p_levels = [5.0] * 13 + [50.0] + [5.0] * 6
    stats = [_stat(i, 33.0, p, 0.0) for i, p in enumerate(p_levels)]
    assert find_reference_span(stats) == (0, 12)


def test_lowest_temperature_variance_wins_between_qualifying_runs():
    temps_a = [30.0, 35.0] * 5
    temps_b = [33.0] * 10
    stats = [_stat(i, t, 5.0, 0.0) for i, t in enumerate(temps_a)]
    stats += [_stat(10 + i, t, 50.0, 0.0) for i, t in enumerate(temps_b)]
    assert find_reference_span(stats) == (10, 19)
    assert select_reference(stats).T == 33.0


def test_equal_variance_prefers_earliest_run():
    stats = [_stat(i, 33.0, 5.0, 0.0) for i in range(8)]
    stats += [_stat(8 + i, 40.0, 50.0, 0.0) for i in range(8)]
    assert find_reference_span(stats) == (0, 7)


def test_no_qualifying_run_falls_back_to_longest():
    p_levels = [0.0] * 3 + [50.0] * 3 + [100.0] * 3 + [150.0]
    stats = [_stat(i, 30.0 + i, p, 0.0) for i, p in enumerate(p_levels)]
    assert find_reference_span(stats) == (0, 2)


def test_single_entry_sequence():
    stats = [_stat(7, 41.0, 3.0, 4.0)]
    assert find_reference_span(stats) == (0, 0)
    ref = select_reference(stats)
    assert (ref.T, ref.x, ref.y) == (41.0, 3.0, 4.0)
    assert ref.source_range == (7, 7)


def test_empty_stats_raise():
    with pytest.raises(ValueError):
        find_reference_span([])


def test_build_reference_takes_medians_and_ordinals():
    stats = [
        _stat(10, 30.0, 1.0, 2.0),
        _stat(11, 36.0, 3.0, 8.0),
        _stat(12, 32.0, 5.0, 4.0),
    ]
    ref = build_reference(stats, (0, 2))
    assert ref.T == 32.0
    assert (ref.x, ref.y) == (3.0, 4.0)
    assert ref.source_range == (10, 12)


# ---------------------------------------------------------------------------
# drop decision

def _stable_run(n=12, T=33.0, x=20.0, y=10.0, start=0):
    return [_stat(start + i, T, x, y) for i in range(n)]


def test_drop_needs_both_thresholds():
    stats = _stable_run(12)
    stats.append(_stat(12, 41.0, 35.0, 10.0))  # +8 K and 15 px: out
    stats.append(_stat(13, 41.0, 22.0, 10.0))  # +8 K but 2 px: stays
    stats.append(_stat(14, 36.0, 35.0, 10.0))  # 15 px but +3 K: stays
    kept, dropped, ref = filter_reflections(stats)
    assert ref.T == 33.0 and (ref.x, ref.y) == (20.0, 10.0)
    assert dropped == [12]
    assert kept == [i for i in range(15) if i != 12]


def test_thresholds_are_strict_inequalities():
    stats = _stable_run(12)
    stats.append(_stat(12, 38.0, 30.0, 10.0))  # exactly +5 K and 10 px
    kept, dropped, _ = filter_reflections(stats)
    assert dropped == []
    assert 12 in kept


def test_injected_reflection_block_is_fully_dropped():
    # 8 stable, 5 reflected, 7 stable: the K = 5 block is under 0.7 N
    stats = _stable_run(8)
    stats += [_stat(8 + i, 41.0, 35.0, 10.0) for i in range(5)]
    stats += _stable_run(7, start=13)
    kept, dropped, ref = filter_reflections(stats)
    assert ref.source_range == (0, 7)
    assert dropped == [8, 9, 10, 11, 12]
    assert kept == list(range(8)) + list(range(13, 20))


def test_reference_members_are_never_dropped():
    rng = np.random.default_rng(6)
    stats = [
        _stat(i, 33.0 + rng.uniform(-1, 1), 20.0 + rng.uniform(-2, 2), 10.0)
        for i in range(16)
    ]
    kept, dropped, ref = filter_reflections(stats)
    lo, hi = ref.source_range
    assert all(lo <= s <= hi for s in range(lo, hi + 1))
    assert not [d for d in dropped if lo <= d <= hi]


def test_global_temperature_offset_is_invisible():
    stats = _stable_run(10) + [_stat(10, 41.0, 35.0, 10.0)]
    shifted = [_stat(s.ordinal, s.T + 100.0, s.x, s.y) for s in stats]
    kept_a, dropped_a, ref_a = filter_reflections(stats)
    kept_b, dropped_b, ref_b = filter_reflections(shifted)
    assert (kept_a, dropped_a) == (kept_b, dropped_b)
    assert ref_b.T == ref_a.T + 100.0


def test_decisions_are_deterministic():
    stats = _stable_run(9) + [_stat(9, 44.0, 40.0, 25.0)]
    first = filter_reflections(stats)
    second = filter_reflections(stats)
    assert first[0] == second[0]
    assert first[1] == second[1]


def test_external_reference_is_honored():
    stats = [_stat(0, 50.0, 50.0, 50.0)]
    ref = select_reference(_stable_run(10))
    kept, dropped, out = filter_reflections(stats, ref=ref)
    assert out is ref
    assert dropped == [0]
