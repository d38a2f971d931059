"""Pricing-based allocation for workers of (treated as) equal reputation.

The mechanism scans the virtual prices ``B_j / t``, finds the smallest price
at which every affordable slot can be filled under the compatibility
constraints (the critical price), picks the unique minimum ``sum 2^position``
winner set at that price and pays each winner the largest bid at which it
would still have been selected, capped at the critical price.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .flow import GroupNetwork, group_max_flow, min_weight_at_cardinality
from .model import Assignment, Outcome, Requester, Worker

INF = None  # sentinel for b_{n+1}; kept as None so it never mixes with Fractions


class NotAWinner(ValueError):
    pass


def virtual_prices(budgets: Sequence[Fraction], n: int) -> List[Fraction]:
    """``{B_j / t : t <= n}`` deduplicated, largest first."""
    if n < 1:
        return []
    return sorted({Fraction(b) / t for b in budgets for t in range(1, n + 1)}, reverse=True)


def employability(r: Fraction, budgets: Sequence[Fraction]) -> int:
    return sum(int(b // r) for b in budgets)


def caps_at(r: Fraction, budgets: Sequence[Fraction]) -> List[int]:
    return [int(b // r) for b in budgets]


def _group_counts(workers: Sequence[Worker], r: Fraction) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    for w in workers:
        if w.bid <= r:
            counts[w.group] = counts.get(w.group, 0) + 1
    return counts


def osp(r: Fraction, workers: Sequence[Worker], budgets: Sequence[Fraction], tau) -> int:
    """Max number of workers bidding at most ``r`` that fit under tau and caps floor(B_j / r)."""
    return group_max_flow(_group_counts(workers, r), tau, caps_at(r, budgets))


def _qualifies(r, workers, budgets, tau) -> bool:
    e = employability(r, budgets)
    if e > sum(1 for w in workers if w.bid <= r):
        return False
    return osp(r, workers, budgets, tau) == e


@dataclass
class PriceRecord:
    price: Fraction
    employability: int
    max_selected: int


def price_table(workers, budgets, tau, n_prices: Optional[int] = None) -> List[PriceRecord]:
    n = len(workers) if n_prices is None else n_prices
    return [
        PriceRecord(r, employability(r, budgets), osp(r, workers, budgets, tau))
        for r in virtual_prices(budgets, n)
    ]


def critical_price(workers: Sequence[Worker], budgets: Sequence[Fraction], tau,
                   n_prices: Optional[int] = None) -> Optional[Fraction]:
    """Smallest virtual price with employability equal to the OSP optimum, or None.

    Qualifying prices are upward closed (shrinking the caps of a saturated
    assignment keeps it saturated), so a binary search is exact.
    """
    n = len(workers) if n_prices is None else n_prices
    prices = virtual_prices(budgets, n)[::-1]
    lo, hi = 0, len(prices)
    while lo < hi:
        mid = (lo + hi) // 2
        if _qualifies(prices[mid], workers, budgets, tau):
            hi = mid
        else:
            lo = mid + 1
    return prices[lo] if lo < len(prices) else None


@dataclass
class PeaAllocation:
    order: Tuple[Worker, ...]
    r_star: Optional[Fraction]
    k: int = 0
    winners: Tuple[Worker, ...] = ()
    assignment: Assignment = field(default_factory=Assignment)
    caps: Tuple[int, ...] = ()

    def is_winner(self, worker_id: int) -> bool:
        return any(w.id == worker_id for w in self.winners)


def select_winners(r_star: Fraction, order: Sequence[Worker], requester_ids, budgets, tau) -> Assignment:
    """Unique minimum-weight winner set of size M_f(r*) among workers bidding at most r*."""
    available = [w for w in order if w.bid <= r_star]
    k = employability(r_star, budgets)
    return min_weight_at_cardinality(available, k, requester_ids, tau, caps_at(r_star, budgets)).assignment


def allocate(order: Sequence[Worker], requester_ids: Sequence[int], budgets: Sequence[Fraction], tau,
             n_prices: Optional[int] = None) -> PeaAllocation:
    """Winner determination only; ``order`` fixes the 2^position weights."""
    order = tuple(order)
    r_star = critical_price(order, budgets, tau, n_prices)
    if r_star is None:
        return PeaAllocation(order, None)
    assignment = select_winners(r_star, order, requester_ids, budgets, tau)
    chosen = assignment.workers
    winners = tuple(w for w in order if w.id in chosen)
    k = sum(1 for w in order if w.bid <= r_star)
    return PeaAllocation(order, r_star, k, winners, assignment, tuple(caps_at(r_star, budgets)))


def bid_order(workers: Sequence[Worker]) -> Tuple[Worker, ...]:
    return tuple(sorted(workers, key=lambda w: (w.bid, w.id)))


def _counterfactual(order: Sequence[Worker], pos: int, l: int) -> List[Worker]:
    """Move the worker at 1-based ``pos`` to position ``l`` >= pos, bidding ``b_l``."""
    if l == pos:
        return list(order)
    me = order[pos - 1]
    others = [w for k, w in enumerate(order) if k != pos - 1]
    moved = Worker(me.id, me.group, order[l - 1].bid, me.reputation, me.cost)
    return others[: l - 1] + [moved] + others[l - 1:]


def _next_bid(order: Sequence[Worker], l: int):
    return order[l].bid if l < len(order) else INF


def payment_set(worker_id: int, alloc: PeaAllocation, requester_ids, budgets, tau) -> List:
    """The candidate set P_i from re-running winner determination at every higher bid position.

    ``INF`` (None) stands for the bid after the last worker.
    """
    order = alloc.order
    pos = next((p for p, w in enumerate(order, start=1) if w.id == worker_id), None)
    if pos is None or not alloc.is_winner(worker_id):
        raise NotAWinner(f"worker {worker_id} is not a winner")
    n = len(order)
    out = []
    for l in range(pos, n + 1):
        cf = _counterfactual(order, pos, l)
        if allocate(cf, requester_ids, budgets, tau, n_prices=n).is_winner(worker_id):
            out.append(_next_bid(order, l))
    return out


def _cap(r_star: Fraction, candidates: Sequence) -> Fraction:
    if any(c is INF for c in candidates):
        return r_star
    return min(r_star, max(candidates))


def compute_payment_literal(worker_id: int, alloc: PeaAllocation, requester_ids, budgets, tau) -> Fraction:
    return _cap(alloc.r_star, payment_set(worker_id, alloc, requester_ids, budgets, tau))


def compute_payment(worker_id: int, alloc: PeaAllocation, requester_ids, budgets, tau) -> Fraction:
    """Same value as :func:`compute_payment_literal` without re-running every position.

    For positions up to k (bids <= r*) the critical price cannot move, and
    the winner survives at position l exactly when it is still independent of
    the greedy picks among the l-1 workers ahead of it; that is monotone in
    l, so one sweep finds the last winning position. Positions past k are
    only re-run when the critical price could actually change.
    """
    order = alloc.order
    pos = next((p for p, w in enumerate(order, start=1) if w.id == worker_id), None)
    if pos is None or not alloc.is_winner(worker_id):
        raise NotAWinner(f"worker {worker_id} is not a winner")
    me = order[pos - 1]
    r_star, k, quota = alloc.r_star, alloc.k, len(alloc.winners)
    others = [w for p, w in enumerate(order, start=1) if p != pos]

    net = GroupNetwork(tau, alloc.caps)
    picked = 0
    for w in others[: pos - 1]:
        if picked < quota and net.add(w.group):
            picked += 1
    last_win = None
    for l in range(pos, k + 1):
        if l > pos:
            w = others[l - 2]
            if picked < quota and net.add(w.group):
                picked += 1
        if picked < quota and net.can_add(me.group):
            last_win = l
        else:
            break
    assert last_win is not None, "winner lost at its own position"
    if last_win == k:
        return r_star
    candidate = order[last_win].bid
    if _wins_above_critical(pos, alloc, others, requester_ids, budgets, tau):
        return r_star
    return min(r_star, candidate)


def _wins_above_critical(pos, alloc: PeaAllocation, others, requester_ids, budgets, tau) -> bool:
    order, r_star, k = alloc.order, alloc.r_star, alloc.k
    n = len(order)
    worker_id = order[pos - 1].id
    if k >= n:
        return False
    # r* still qualifies without this worker: the critical price stays put and it is priced out
    if osp(r_star, others, budgets, tau) == employability(r_star, budgets):
        return False
    r0 = critical_price(others, budgets, tau, n_prices=n)
    for l in range(k + 1, n + 1):
        bid = order[l - 1].bid
        if r0 is not None and r0 < bid:
            return False
        cf = _counterfactual(order, pos, l)
        if allocate(cf, requester_ids, budgets, tau, n_prices=n).is_winner(worker_id):
            return True
    return False


def run_pea(workers: Sequence[Worker], requesters: Sequence[Requester], tau,
            payment_mode: str = "fast", reputations: Optional[Dict[int, Fraction]] = None) -> Outcome:
    """Full mechanism on one worker set. Every worker counts as one unit internally;
    ``total_reputation`` reports the true reputations of the winners."""
    requester_ids = [r.id for r in requesters]
    budgets = [r.budget for r in requesters]
    if not workers:
        return Outcome(diagnostics={"status": "no_workers"})
    order = bid_order(workers)
    alloc = allocate(order, requester_ids, budgets, tau)
    if alloc.r_star is None:
        return Outcome(diagnostics={"status": "no_critical_price", "critical_price": None})
    pay = compute_payment if payment_mode == "fast" else compute_payment_literal
    if payment_mode not in ("fast", "literal"):
        raise ValueError(f"unknown payment mode {payment_mode!r}")
    requester_of = alloc.assignment.requester_of
    payments = {}
    for w in alloc.winners:
        payments[w.id] = (requester_of[w.id], pay(w.id, alloc, requester_ids, budgets, tau))

    spend: Dict[int, Fraction] = {j: Fraction(0) for j in requester_ids}
    for j, p in payments.values():
        spend[j] += p
    for j, b in zip(requester_ids, budgets):
        assert spend[j] <= b, f"requester {j} overspends: {spend[j]} > {b}"

    rep = reputations or {w.id: w.reputation for w in workers}
    total = sum((rep[w.id] for w in alloc.winners), Fraction(0))
    return Outcome(
        assignment=alloc.assignment,
        payments=payments,
        total_reputation=total,
        diagnostics={
            "status": "ok",
            "critical_price": alloc.r_star,
            "available": alloc.k,
            "selected": len(alloc.winners),
            "per_requester_spend": spend,
        },
    )


@dataclass
class PeaTrace:
    records: List[PriceRecord]
    r_star: Optional[Fraction]
    r_below: Optional[Fraction]
    r_above: Optional[Fraction]
    k: int
    payment_sets: Dict[int, List]

    def to_dict(self) -> dict:
        return {
            "records": [
                {"price": r.price, "employability": r.employability, "max_selected": r.max_selected}
                for r in self.records
            ],
            "critical_price": self.r_star,
            "adjacent_prices": {"below": self.r_below, "above": self.r_above},
            "available": self.k,
            "payment_sets": {
                str(i): ["inf" if b is INF else b for b in bids] for i, bids in sorted(self.payment_sets.items())
            },
        }


def pea_trace(workers: Sequence[Worker], requesters: Sequence[Requester], tau) -> PeaTrace:
    requester_ids = [r.id for r in requesters]
    budgets = [r.budget for r in requesters]
    order = bid_order(workers)
    records = price_table(order, budgets, tau)
    alloc = allocate(order, requester_ids, budgets, tau)
    below = above = None
    sets: Dict[int, List] = {}
    if alloc.r_star is not None:
        prices = [rec.price for rec in records]  # descending
        idx = prices.index(alloc.r_star)
        above = prices[idx - 1] if idx > 0 else None
        below = prices[idx + 1] if idx + 1 < len(prices) else None
        for w in alloc.winners:
            sets[w.id] = payment_set(w.id, alloc, requester_ids, budgets, tau)
    return PeaTrace(records, alloc.r_star, below, above, alloc.k, sets)
