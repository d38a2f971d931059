from fractions import Fraction

import pytest
from hypothesis import given

from care.care_no import band, partition_buckets, run_care_no, sample_bucket
from care.oracle import check_individual_rationality, check_requester_budgets
from care.pea import run_pea

from conftest import make_instance, small_instances

F = Fraction


def test_bucket_example():
    inst = make_instance([1] * 5, [10], [[5]], reps=[1, 5, 10, 11, 100])
    part = partition_buckets(inst)
    assert part.gamma == 2
    assert part.buckets == ((1, 2, 3), (4, 5))


def test_equal_reputations_give_one_bucket():
    part = partition_buckets(make_instance([1, 2], [10], [[2]], reps=[3, 3]))
    assert part.gamma == 1 and part.buckets == ((1, 2),)


def test_upper_boundary_is_closed():
    inst = make_instance([1, 1], [10], [[2]], reps=[1, 100])
    part = partition_buckets(inst)
    assert part.gamma == 2 and part.bucket_of(2) == 2


def test_buckets_use_normalised_reputation():
    # v_min = 2: rho = (1, 5, 50); with eps = 10 worker 3 sits in band 2, not band 3
    inst = make_instance([1] * 3, [10], [[3]], reps=[2, 10, 100])
    assert partition_buckets(inst).buckets == ((1, 2), (3,))


@pytest.mark.parametrize("rho,eps,h", [(F(1), F(10), 1), (F(10), F(10), 1), (F(101, 10), F(10), 2),
                                       (F(9, 4), F(3, 2), 2), (F(27, 8), F(3, 2), 3)])
def test_band(rho, eps, h):
    assert band(rho, eps) == h


def test_gamma_one_matches_plain_pea():
    inst = make_instance([1, 1, 3], [4, 4], [[1, 1]])
    out = run_care_no(inst, mode="sampled", seed=5)
    ref = run_pea(inst.workers, inst.requesters, inst.tau)
    assert out.assignment == ref.assignment and out.payments == ref.payments


def test_expectation_is_mean_of_buckets():
    inst = make_instance([1, 1, 2, 2], [6, 6], [[2, 2]], reps=[1, 1, 20, 20])
    dist = run_care_no(inst, mode="expectation")
    assert dist.gamma == 2
    values = [o.total_reputation for o in dist.per_bucket]
    assert dist.expected_reputation == sum(values) / 2
    assert values[1] > values[0] > 0


def test_sampled_mode_is_seeded():
    inst = make_instance([1, 1, 2, 2], [6, 6], [[2, 2]], reps=[1, 1, 20, 20])
    a = run_care_no(inst, mode="sampled", seed=42)
    b = run_care_no(inst, mode="sampled", seed=42)
    assert a.to_dict() == b.to_dict()
    assert a.diagnostics["bucket"] == sample_bucket(42, 2)
    # the bucket draw is uniform
    draws = [sample_bucket(s, 3) for s in range(600)]
    assert {draws.count(h) for h in (1, 2, 3)} <= set(range(150, 251))


def test_sampled_equals_the_matching_bucket_of_the_expectation():
    inst = make_instance([1, 1, 2, 2, 3], [6, 6], [[3, 3]], reps=[1, 1, 20, 20, 300])
    dist = run_care_no(inst, mode="expectation")
    for seed in range(5):
        out = run_care_no(inst, mode="sampled", seed=seed)
        assert out.payments == dist.per_bucket[out.diagnostics["bucket"] - 1].payments


def test_unknown_mode():
    with pytest.raises(ValueError):
        run_care_no(make_instance([1], [4], [[1]]), mode="bogus")


@given(small_instances(max_n=8, max_m=4))
def test_bucket_outcomes_are_feasible(inst):
    dist = run_care_no(inst, mode="expectation")
    assert sorted(i for b in dist.partition.buckets for i in b) == sorted(w.id for w in inst.workers)
    for out in dist.per_bucket:
        assert check_individual_rationality(inst, out) == []
        assert check_requester_budgets(inst, out) == []
        assert out.assignment.problems(inst) == []
