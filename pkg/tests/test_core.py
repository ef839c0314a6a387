import numpy as np
import pytest

from hirelabel.core import (
    HighAction,
    HighActionKind,
    RelabeledSample,
    SeededRng,
    Transition,
    normalized_score,
    split_episodes,
    validate_trajectory,
)
from hirelabel.errors import (
    DimMismatch,
    InvalidHighAction,
    NonConsecutiveTime,
    NonFiniteValue,
    ZeroReference,
)
from hirelabel.learn import shifted_score


def tr(t, dim=2, ep=0, **kw):
    return Transition(episode=ep, t=t, s=np.arange(dim) + t, s_next=np.arange(dim) + t + 1, **kw)


def test_consistent_trajectory_is_accepted():
    data = [tr(0), tr(1), tr(2)]
    assert validate_trajectory(data) == data


def test_dimension_change_is_reported_at_its_index():
    with pytest.raises(DimMismatch) as info:
        validate_trajectory([tr(0, dim=2), tr(1, dim=3)])
    assert info.value.index == 1


def test_action_dimension_change_is_reported():
    with pytest.raises(DimMismatch) as info:
        validate_trajectory([tr(0, a=[1.0]), tr(1, a=[1.0, 2.0])])
    assert info.value.index == 1


def test_non_finite_entries_are_rejected():
    with pytest.raises(NonFiniteValue):
        Transition(episode=0, t=0, s=[0.0, np.nan], s_next=[0.0, 0.0])
    with pytest.raises(NonFiniteValue):
        Transition(episode=0, t=0, s=[0.0], s_next=[0.0], r=np.inf)


def test_time_gap_is_reported():
    with pytest.raises(NonConsecutiveTime) as info:
        validate_trajectory([tr(0), tr(1), tr(3)])
    assert info.value.index == 2


def test_interleaved_episodes_are_fine():
    data = [tr(0, ep=0), tr(0, ep=1), tr(1, ep=0), tr(1, ep=1)]
    validate_trajectory(data)
    eps = split_episodes(data)
    assert sorted(eps) == [0, 1]
    assert [x.t for x in eps[1]] == [0, 1]


def test_empty_trajectory_is_rejected():
    with pytest.raises(ValueError):
        validate_trajectory([])


@pytest.mark.parametrize("score, ref, expected", [(45, 50, 90), (50, 50, 100), (-10, 50, -20)])
def test_normalized_score(score, ref, expected):
    assert normalized_score(score, ref) == pytest.approx(expected)


def test_zero_reference():
    with pytest.raises(ZeroReference):
        normalized_score(1.0, 0.0)


def test_floor_shift_maps_floor_to_zero_and_reference_to_hundred():
    assert shifted_score(-300.0, -100.0, -500.0) == pytest.approx(50.0)
    assert shifted_score(-500.0, -100.0, -500.0) == pytest.approx(0.0)
    assert shifted_score(-100.0, -100.0, -500.0) == pytest.approx(100.0)
    assert shifted_score(45.0, 50.0) == pytest.approx(90.0)


def test_seeded_rng_matches_pcg64_stream():
    draws = SeededRng(42).normal(size=5)
    ref = np.random.Generator(np.random.PCG64(42)).normal(size=5)
    np.testing.assert_array_equal(draws, ref)


def test_child_streams_are_deterministic_and_distinct():
    a = SeededRng(3).child(1).uniform(size=4)
    b = SeededRng(3).child(1).uniform(size=4)
    c = SeededRng(3).child(2).uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_distribution_is_renormalized_within_tolerance():
    u = HighAction([0.5, 0.5 + 5e-7], HighActionKind.DISTRIBUTION)
    assert u.values.sum() == pytest.approx(1.0, abs=1e-15)


def test_distribution_far_from_simplex_is_rejected():
    with pytest.raises(InvalidHighAction):
        HighAction([0.5, 0.6], HighActionKind.DISTRIBUTION)
    with pytest.raises(InvalidHighAction):
        HighAction([1.1, -0.1], HighActionKind.DISTRIBUTION)


def test_negative_orders_are_rejected():
    with pytest.raises(InvalidHighAction):
        HighAction([1.0, -2.0], HighActionKind.MIXED)


def test_high_action_is_immutable():
    u = HighAction([1.0, 2.0])
    with pytest.raises(ValueError):
        u.values[0] = 5.0


def test_relabeled_sample_rejects_negative_loss():
    with pytest.raises(NonFiniteValue):
        RelabeledSample(s=[0.0], u=HighAction([0.0]), r=0.0, s_next=[0.0], inv_loss=-1.0)
