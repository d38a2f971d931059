import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from care.harness import GeneratorParams, generate_instance
from care.model import (
    Assignment,
    InstanceError,
    Outcome,
    dumps,
    parse_instance,
    parse_money,
    serialize_instance,
    validate,
)

from conftest import make_instance

MINIMAL = {
    "workers": [{"id": 1, "group": 1, "cost": "2.5", "bid": "2.5", "reputation": "1.0"}],
    "requesters": [{"id": 1, "budget": "40"}],
    "tau": [[2]],
    "epsilon": "10",
    "seed": 42,
}


def test_minimal_document_round_trips():
    inst = parse_instance(json.dumps(MINIMAL))
    assert (inst.n, inst.m, inst.n_groups) == (1, 1, 1)
    assert parse_instance(serialize_instance(inst)) == inst


def test_decimal_bid_is_exact():
    doc = dict(MINIMAL, workers=[{"id": 1, "group": 1, "bid": "4.5", "reputation": "1"}])
    assert parse_instance(json.dumps(doc)).workers[0].bid == Fraction(9, 2)


def test_unknown_group_reports_json_path():
    doc = dict(MINIMAL, tau=[[1], [1], [1]],
               workers=[{"id": 1, "group": 1, "bid": "1", "reputation": "1"},
                        {"id": 2, "group": 99, "bid": "1", "reputation": "1"}])
    with pytest.raises(InstanceError) as err:
        parse_instance(json.dumps(doc))
    assert err.value.path == "$.workers[1].group"


@pytest.mark.parametrize("bad", [2.5, True, "-1", "abc", "1/0", None])
def test_parse_money_rejects(bad):
    with pytest.raises(InstanceError):
        parse_money(bad)


@pytest.mark.parametrize("text,value", [("4.5", Fraction(9, 2)), ("7/3", Fraction(7, 3)), (3, Fraction(3)),
                                        ("0.10", Fraction(1, 10))])
def test_parse_money_accepts(text, value):
    assert parse_money(text) == value


def test_malformed_json_and_duplicates():
    with pytest.raises(InstanceError):
        parse_instance("{not json")
    doc = dict(MINIMAL, workers=MINIMAL["workers"] * 2)
    with pytest.raises(InstanceError, match="duplicate worker"):
        parse_instance(json.dumps(doc))


def test_tau_above_group_size_is_clamped_on_load():
    doc = dict(MINIMAL, tau=[[5]])
    assert parse_instance(json.dumps(doc)).tau == ((1,),)
    assert parse_instance(json.dumps(doc), clamp_tau=False).tau == ((5,),)


def test_defaults_for_epsilon_and_seed():
    doc = {k: v for k, v in MINIMAL.items() if k not in ("epsilon", "seed")}
    inst = parse_instance(json.dumps(doc))
    assert inst.epsilon == 10 and inst.seed == 0


def test_generated_instance_validates_clean():
    assert validate(generate_instance(GeneratorParams(), 3)) == []


def test_bid_exceeding_all_budgets_is_flagged():
    inst = make_instance([100], [40, 80], [[1, 1]])
    assert [v.code for v in validate(inst)] == ["BidExceedsAllBudgets"]
    assert validate(inst)[0].detail == (1,)


def test_tau_above_group_size_is_a_warning():
    inst = make_instance([1, 1, 1], [10], [[5]])
    (v,) = validate(inst)
    assert (v.code, v.detail, v.severity) == ("TauClamped", (1, 1), "warning")


def test_validate_catches_structural_problems():
    inst = make_instance([1, 1], [0, 5], [[1, 1]], groups=[1, 2], reps=[0, 1], epsilon=1)
    codes = {v.code for v in validate(inst)}
    assert {"NonPositiveBudget", "UnknownGroup", "NonPositiveReputation", "EpsilonNotAboveOne"} <= codes


def test_assignment_problems():
    inst = make_instance([1, 1, 1], [10, 10], [[1, 2]])
    assert Assignment.from_pairs([(1, 1), (2, 2), (3, 2)]).problems(inst) == []
    assert Assignment.from_pairs([(1, 1), (2, 1)]).problems(inst)
    assert Assignment.from_pairs([(1, 1), (2, 2)]).problems(inst, caps={1: 1, 2: 0})


def test_outcome_accounting():
    inst = make_instance([1, 2], [10, 10], [[1, 1]], costs=[1, 3])
    out = Outcome(Assignment.from_pairs([(1, 1), (2, 2)]), {1: (1, Fraction(2)), 2: (2, Fraction(5, 2))}, Fraction(2))
    assert out.total_paid() == Fraction(9, 2)
    assert out.spend_by_requester() == {1: 2, 2: Fraction(5, 2)}
    assert out.utility(inst.by_id[1]) == 1
    assert out.utility(inst.by_id[2]) == Fraction(-1, 2)
    doc = json.loads(dumps(out.to_dict()))
    assert doc["payments"]["2"] == {"requester": 2, "amount": "5/2"}


@given(st.fractions(min_value=0, max_value=10 ** 6))
def test_money_text_round_trip(x):
    assert parse_money(str(x)) == x
