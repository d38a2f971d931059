"""Cooperative-budget mechanism: requesters pool their budgets into B = sum B_j.

Workers are ranked by bid per unit reputation. The key worker k is the last
one whose ratio times the best achievable reputation of the first k workers
still fits into B; winners come from that optimal assignment and are paid a
uniform price per unit of reputation.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .flow import max_reputation
from .model import Assignment, Instance, Outcome, Worker


def cost_effectiveness_order(workers: Sequence[Worker]) -> List[Worker]:
    return sorted(workers, key=lambda w: (w.ratio, w.id))


class _Prefixes:
    """Memoised optimal-reputation values of bid-ratio prefixes."""

    def __init__(self, inst: Instance, order: Sequence[Worker], method: str = "greedy"):
        self.inst = inst
        self.order = list(order)
        self.method = method
        self._cache: Dict[int, Tuple[Fraction, Assignment]] = {}

    def __call__(self, i: int) -> Tuple[Fraction, Assignment]:
        if i not in self._cache:
            if i == 0:
                self._cache[i] = (Fraction(0), Assignment())
            else:
                res = max_reputation(self.order[:i], self.inst.requester_ids, self.inst.tau, self.method)
                self._cache[i] = (Fraction(res.objective), res.assignment)
        return self._cache[i]

    def fits(self, i: int) -> bool:
        return self.order[i - 1].ratio * self(i)[0] <= self.inst.total_budget


def orp(prefix_size: int, inst: Instance, order: Optional[Sequence[Worker]] = None,
        method: str = "greedy") -> Tuple[Fraction, Assignment]:
    """Optimal overall reputation of the first ``prefix_size`` workers in ratio order."""
    order = cost_effectiveness_order(inst.workers) if order is None else order
    if not 0 <= prefix_size <= len(order):
        raise ValueError("prefix size out of range")
    return _Prefixes(inst, order, method)(prefix_size)


def find_key_worker(inst: Instance, order: Optional[Sequence[Worker]] = None,
                    prefixes: Optional[_Prefixes] = None) -> int:
    """Largest k whose prefixes 1..k all pass the budget test.

    ratio_i and M(S_i) are both non-decreasing in i, so their product is too;
    the first failing prefix is found by bisection.
    """
    order = cost_effectiveness_order(inst.workers) if order is None else order
    prefixes = prefixes or _Prefixes(inst, order)
    lo, hi = 0, len(order)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if prefixes.fits(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def scan_key_worker(inst: Instance, order: Optional[Sequence[Worker]] = None) -> int:
    """Sequential scan that stops at the first failing prefix (reference replay)."""
    order = cost_effectiveness_order(inst.workers) if order is None else order
    prefixes = _Prefixes(inst, order)
    i = 1
    while i <= len(order) and prefixes.fits(i):
        i += 1
    return i - 1


def run_care_co(inst: Instance) -> Outcome:
    order = cost_effectiveness_order(inst.workers)
    prefixes = _Prefixes(inst, order)
    k = find_key_worker(inst, order, prefixes)
    budget = inst.total_budget
    if k == 0:
        return Outcome(diagnostics={"status": "no_affordable_worker", "key_worker": None, "unit_price": None})
    value_k, assignment = prefixes(k)
    if k < len(order):
        nxt = order[k]
        value_next = prefixes(k + 1)[0]
        assert value_next - value_k <= nxt.reputation, "prefix reputation jumped by more than one worker"
    if value_k == 0:
        return Outcome(diagnostics={"status": "nothing_assignable", "key_worker": order[k - 1].id,
                                    "k": k, "unit_price": None})
    unit = budget / value_k
    if k < len(order):
        unit = min(unit, order[k].ratio)

    by_id = inst.by_id
    payments = {i: (j, by_id[i].reputation * unit) for i, j in assignment.sorted_pairs()}
    out = Outcome(assignment=assignment, payments=payments, total_reputation=value_k)
    spend = out.spend_by_requester()
    assert out.total_paid() <= budget
    out.diagnostics = {
        "status": "ok",
        "k": k,
        "key_worker": order[k - 1].id,
        "unit_price": unit,
        "orp_value": value_k,
        "per_requester_spend": {j: spend.get(j, Fraction(0)) for j in inst.requester_ids},
    }
    return out
