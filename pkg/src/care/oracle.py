"""Exhaustive ground truth for desk-sized instances.

Nothing here touches the flow solvers: optima come from enumerating worker
subsets in objective order and searching for a feasible assignment by
backtracking, so the results can be used to check the flow module and the
mechanisms independently.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .care_co import run_care_co
from .care_no import partition_buckets
from .model import Assignment, Instance, Outcome, Worker
from .pea import run_pea, virtual_prices

DEFAULT_MAX_WORKERS = 10
DEFAULT_MAX_REQUESTERS = 4


class EnumerationBoundExceeded(ValueError):
    pass


@dataclass
class OptResult:
    value: Fraction
    assignment: Assignment = field(default_factory=Assignment)
    cost_paid: Fraction = Fraction(0)
    feasible: bool = True


def _check_bounds(n: int, m: int, max_n: int, max_m: int) -> None:
    if n > max_n or m > max_m:
        raise EnumerationBoundExceeded(f"n={n}, m={m} exceeds enumeration bound n<={max_n}, m<={max_m}")


def find_assignment(
    workers: Sequence[Worker],
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    caps: Optional[Sequence[int]] = None,
    budgets: Optional[Sequence[Fraction]] = None,
) -> Optional[Assignment]:
    """Backtracking search for an assignment of *all* given workers.

    ``caps`` bounds head counts per requester and ``budgets`` bounds the true
    cost assigned to each requester. Requesters are tried in ascending
    position, so the first assignment found is the lexicographically smallest.
    """
    m = len(requester_ids)
    used: Dict[Tuple[int, int], int] = {}
    load = [0] * m
    spend = [Fraction(0)] * m
    picks: List[int] = [0] * len(workers)

    def place(t: int) -> bool:
        if t == len(workers):
            return True
        w = workers[t]
        for j in range(m):
            key = (w.group, j)
            if used.get(key, 0) >= tau[w.group - 1][j]:
                continue
            if caps is not None and load[j] >= caps[j]:
                continue
            if budgets is not None and spend[j] + w.true_cost > budgets[j]:
                continue
            used[key] = used.get(key, 0) + 1
            load[j] += 1
            if budgets is not None:
                spend[j] += w.true_cost
            picks[t] = j
            if place(t + 1):
                return True
            used[key] -= 1
            load[j] -= 1
            if budgets is not None:
                spend[j] -= w.true_cost
        return False

    if not place(0):
        return None
    return Assignment.from_pairs((w.id, requester_ids[picks[t]]) for t, w in enumerate(workers))


def _subsets(workers: Sequence[Worker]) -> Iterable[Tuple[Worker, ...]]:
    for size in range(len(workers), -1, -1):
        yield from itertools.combinations(workers, size)


def _best(candidates, key, feasible) -> Optional[Tuple[tuple, Assignment]]:
    for subset in sorted(candidates, key=key):
        a = feasible(subset)
        if a is not None:
            return subset, a
    return None


def _value(subset) -> Fraction:
    return sum((w.reputation for w in subset), Fraction(0))


def _cost(subset) -> Fraction:
    return sum((w.true_cost for w in subset), Fraction(0))


def _rep_key(subset):
    return (-_value(subset), tuple(sorted(w.id for w in subset)))


def opt_cooperative(inst: Instance, max_n: int = DEFAULT_MAX_WORKERS, max_m: int = DEFAULT_MAX_REQUESTERS) -> OptResult:
    """Best reputation when true costs are known and only the pooled budget binds."""
    _check_bounds(inst.n, inst.m, max_n, max_m)
    workers = sorted(inst.workers, key=lambda w: w.id)
    budget = inst.total_budget
    cands = [s for s in _subsets(workers) if _cost(s) <= budget]
    found = _best(cands, _rep_key, lambda s: find_assignment(s, inst.requester_ids, inst.tau))
    subset, a = found  # the empty set is always feasible
    return OptResult(_value(subset), a, _cost(subset))


def opt_noncooperative(inst: Instance, max_n: int = DEFAULT_MAX_WORKERS,
                       max_m: int = DEFAULT_MAX_REQUESTERS) -> OptResult:
    """Best reputation when true costs are known and each requester pays from its own budget."""
    _check_bounds(inst.n, inst.m, max_n, max_m)
    workers = sorted(inst.workers, key=lambda w: w.id)
    budget = inst.total_budget
    cands = [s for s in _subsets(workers) if _cost(s) <= budget]
    found = _best(cands, _rep_key,
                  lambda s: find_assignment(s, inst.requester_ids, inst.tau, budgets=inst.budgets))
    subset, a = found
    return OptResult(_value(subset), a, _cost(subset))


def _product_assignments(workers, requester_ids, tau, caps):
    m = len(requester_ids)
    for choice in itertools.product(range(m + 1), repeat=len(workers)):
        used: Dict[Tuple[int, int], int] = {}
        load = [0] * m
        ok = True
        for w, c in zip(workers, choice):
            if c == m:
                continue
            used[(w.group, c)] = used.get((w.group, c), 0) + 1
            load[c] += 1
            if used[(w.group, c)] > tau[w.group - 1][c] or (caps is not None and load[c] > caps[c]):
                ok = False
                break
        if ok:
            yield [(w, requester_ids[c]) for w, c in zip(workers, choice) if c < m]


def ip_enumerate(
    objective: str,
    workers: Sequence[Worker],
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    caps: Optional[Sequence[int]] = None,
    k: Optional[int] = None,
    strategy: str = "subsets",
    max_n: int = 8,
    max_m: int = 3,
) -> OptResult:
    """Exact optimum of one of the assignment integer programs.

    ``objective`` is ``max-cardinality``, ``max-reputation`` or ``min-weight``
    (exactly ``k`` workers, weight 2^position in the given order). With
    ``strategy="product"`` all (m+1)^n assignment vectors are scanned;
    ``subsets`` walks worker subsets in objective order and stops at the first
    feasible one. Infeasible ``min-weight`` requests return ``feasible=False``.
    """
    _check_bounds(len(workers), len(requester_ids), max_n, max_m)
    position = {w.id: p for p, w in enumerate(workers, start=1)}

    def weight(ids) -> int:
        return sum(1 << position[i] for i in ids)

    if objective == "max-cardinality":
        key = lambda ids: (-len(ids), sorted(ids))
        score = lambda ids: Fraction(len(ids))
    elif objective == "max-reputation":
        rep = {w.id: w.reputation for w in workers}
        key = lambda ids: (-sum((rep[i] for i in ids), Fraction(0)), sorted(ids))
        score = lambda ids: sum((rep[i] for i in ids), Fraction(0))
    elif objective == "min-weight":
        if k is None:
            raise ValueError("min-weight needs k")
        key = lambda ids: (len(ids) != k, weight(ids))
        score = lambda ids: Fraction(weight(ids))
    else:
        raise ValueError(f"unknown objective {objective!r}")

    if strategy == "product":
        best = None
        for pairs in _product_assignments(list(workers), requester_ids, tau, caps):
            ids = [w.id for w, _ in pairs]
            if objective == "min-weight" and len(ids) != k:
                continue
            cand = (key(ids), sorted((w.id, j) for w, j in pairs))
            if best is None or cand < best:
                best = cand
        if best is None:
            return OptResult(Fraction(0), feasible=False)
        ids = [i for i, _ in best[1]]
        return OptResult(score(ids), Assignment.from_pairs(best[1]))
    if strategy != "subsets":
        raise ValueError(f"unknown strategy {strategy!r}")

    pool = sorted(workers, key=lambda w: w.id)
    if objective == "min-weight":
        cands = list(itertools.combinations(pool, k)) if 0 <= k <= len(pool) else []
    else:
        cands = list(_subsets(pool))
    found = _best(cands, lambda s: key([w.id for w in s]),
                  lambda s: find_assignment(s, requester_ids, tau, caps=caps))
    if found is None:
        return OptResult(Fraction(0), feasible=False)
    subset, a = found
    return OptResult(score([w.id for w in subset]), a)


# -- strategic probing ----------------------------------------------------------

Mechanism = Union[str, Callable[[Instance], Outcome]]


def _utility_fn(mechanism: Mechanism, payment_mode: str = "literal") -> Callable[[Instance, Worker], Fraction]:
    if callable(mechanism):
        return lambda inst, w: mechanism(inst).utility(w)
    if mechanism == "co":
        return lambda inst, w: run_care_co(inst).utility(w)
    if mechanism == "pea":
        return lambda inst, w: run_pea(inst.workers, inst.requesters, inst.tau, payment_mode).utility(w)
    if mechanism in ("no", "no-expectation"):
        def expected(inst: Instance, w: Worker) -> Fraction:
            part = partition_buckets(inst)
            h = part.bucket_of(w.id)
            members = set(part.buckets[h - 1])
            bucket = [x for x in inst.workers if x.id in members]
            out = run_pea(bucket, inst.requesters, inst.tau, payment_mode)
            # the other bands never pay this worker; only its own band carries weight 1/gamma
            return out.utility(w) / part.gamma
        return expected
    raise ValueError(f"unknown mechanism {mechanism!r}")


def deviation_grid(inst: Instance, worker_id: int, delta: Fraction = Fraction(1, 10)) -> List[Fraction]:
    """Other bids (and their ratio-equivalents), +-delta around the cost, virtual prices, and midpoints."""
    me = inst.by_id[worker_id]
    cost = me.true_cost
    points = {Fraction(0), cost, cost * (1 + delta), cost * (1 - delta)}
    for w in inst.workers:
        if w.id == worker_id:
            continue
        points.add(w.bid)
        points.add(w.ratio * me.reputation)
    points.update(virtual_prices(inst.budgets, inst.n))
    ordered = sorted(p for p in points if p >= 0)
    mids = [(a + b) / 2 for a, b in zip(ordered, ordered[1:])]
    return sorted(set(ordered) | set(mids) | {ordered[-1] + 1})


def truthfulness_probe(inst: Instance, mechanism: Mechanism, worker_id: int,
                       grid: Optional[Sequence[Fraction]] = None, payment_mode: str = "literal") -> Fraction:
    """max over the grid of u(deviation) - u(truthful bid); <= 0 means no profitable misreport."""
    me = inst.by_id[worker_id]
    truthful_bid = me.true_cost
    base = inst.with_workers(
        Worker(w.id, w.group, w.true_cost if w.id == worker_id else w.bid, w.reputation, w.true_cost)
        for w in inst.workers
    )
    me = base.by_id[worker_id]
    utility = _utility_fn(mechanism, payment_mode)
    truthful = utility(base, me)
    grid = deviation_grid(base, worker_id) if grid is None else grid
    gain = Fraction(0)
    for b in grid:
        if b == truthful_bid:
            continue
        gain = max(gain, utility(base.with_bid(worker_id, b), me) - truthful)
    return gain


def probe_all(inst: Instance, mechanism: Mechanism, payment_mode: str = "literal") -> Dict[int, Fraction]:
    return {w.id: truthfulness_probe(inst, mechanism, w.id, payment_mode=payment_mode) for w in inst.workers}


# -- property checks --------------------------------------------------------------
# Each returns a list of human-readable violations; empty means the property held.

def check_individual_rationality(inst: Instance, outcome: Outcome) -> List[str]:
    return [
        f"worker {i} paid {p} < bid {inst.by_id[i].bid}"
        for i, (_, p) in sorted(outcome.payments.items())
        if p < inst.by_id[i].bid
    ]


def check_pooled_budget(inst: Instance, outcome: Outcome) -> List[str]:
    paid = outcome.total_paid()
    return [] if paid <= inst.total_budget else [f"paid {paid} > pooled budget {inst.total_budget}"]


def check_requester_budgets(inst: Instance, outcome: Outcome) -> List[str]:
    spend = outcome.spend_by_requester()
    return [
        f"requester {r.id} spends {spend[r.id]} > {r.budget}"
        for r in inst.requesters
        if spend.get(r.id, 0) > r.budget
    ]


def check_outcome_shape(inst: Instance, outcome: Outcome) -> List[str]:
    out = list(outcome.assignment.problems(inst))
    if set(outcome.payments) != set(outcome.assignment.workers):
        out.append("payments do not match assigned workers")
    for i, (j, _) in outcome.payments.items():
        if outcome.assignment.requester_of.get(i) != j:
            out.append(f"worker {i} paid by {j} but assigned elsewhere")
    rep = sum((inst.by_id[i].reputation for i in outcome.assignment.workers), Fraction(0))
    if rep != outcome.total_reputation:
        out.append(f"total_reputation {outcome.total_reputation} != {rep}")
    return out


def alpha(inst: Instance, worker_ids: Optional[Iterable[int]] = None) -> Fraction:
    """min{m, max ceil(|G_l| / tau_lj)}; tau = 0 on a non-empty group counts as infinite."""
    ids = set(worker_ids) if worker_ids is not None else set(inst.by_id)
    worst = 0
    for l, members in inst.groups.items():
        size = sum(1 for i in members if i in ids)
        for t in inst.tau[l - 1]:
            if size:
                worst = max(worst, inst.m if t == 0 else -(-size // t))
    return Fraction(min(inst.m, worst))


def approximation_co(inst: Instance, opt: Optional[OptResult] = None) -> Tuple[Fraction, Fraction, Fraction]:
    """(OPT, ALG, bound 2 + v_max / v_min) for the cooperative mechanism."""
    opt = opt or opt_cooperative(inst)
    alg = run_care_co(inst).total_reputation
    return opt.value, alg, 2 + inst.v_max / inst.v_min


def approximation_no(inst: Instance, opt: Optional[OptResult] = None,
                     payment_mode: str = "fast") -> Tuple[Fraction, Fraction, Fraction]:
    """(OPT, E[ALG], bound (2 alpha + 1) eps gamma) for the non-cooperative mechanism."""
    from .care_no import run_care_no

    opt = opt or opt_noncooperative(inst)
    dist = run_care_no(inst, mode="expectation", payment_mode=payment_mode)
    return opt.value, dist.expected_reputation, (2 * alpha(inst) + 1) * inst.epsilon * dist.gamma


def ratio_ok(opt: Fraction, alg: Fraction, bound: Fraction) -> bool:
    if opt == 0:
        return True
    return alg > 0 and opt <= bound * alg


def check_lemma_winner_persistence(workers: Sequence[Worker], requesters, tau) -> List[str]:
    """A winner that lowers its bid stays a winner whenever the critical price is unchanged."""
    from .pea import allocate, bid_order

    requester_ids = [r.id for r in requesters]
    budgets = [r.budget for r in requesters]
    base = allocate(bid_order(workers), requester_ids, budgets, tau)
    if base.r_star is None:
        return []
    out = []
    bids = sorted({w.bid for w in workers} | {Fraction(0)})
    for win in base.winners:
        lower = {b for b in bids if b < win.bid}
        lower |= {(a + b) / 2 for a, b in zip(bids, bids[1:]) if b <= win.bid}
        for b in sorted(lower):
            moved = [Worker(w.id, w.group, b, w.reputation, w.cost) if w.id == win.id else w for w in workers]
            alloc = allocate(bid_order(moved), requester_ids, budgets, tau)
            if alloc.r_star == base.r_star and not alloc.is_winner(win.id):
                out.append(f"worker {win.id} lost after lowering bid to {b}")
    return out


def check_lemma_strict_decrease(workers: Sequence[Worker], requesters, tau) -> List[str]:
    """Every virtual price at or above r* qualifies, and M_f strictly decreases over them."""
    from .pea import critical_price, employability, osp

    budgets = [r.budget for r in requesters]
    r_star = critical_price(workers, budgets, tau)
    if r_star is None:
        return []
    out = []
    prices = [r for r in virtual_prices(budgets, len(workers)) if r >= r_star][::-1]
    values = []
    for r in prices:
        mf, e = osp(r, workers, budgets, tau), employability(r, budgets)
        if mf != e:
            out.append(f"price {r} >= r* does not qualify: M_f={mf}, E={e}")
        values.append(mf)
    for (r1, a), (r2, b) in zip(zip(prices, values), zip(prices[1:], values[1:])):
        if not a > b:
            out.append(f"M_f({r1})={a} not > M_f({r2})={b}")
    return out


def check_lemma_removal(workers: Sequence[Worker], requesters, tau) -> List[str]:
    """Dropping one available worker lowers M_f(r) by at most one, at every virtual price."""
    from .pea import osp

    budgets = [r.budget for r in requesters]
    out = []
    for r in virtual_prices(budgets, len(workers)):
        base = osp(r, workers, budgets, tau)
        for w in workers:
            if w.bid > r:
                continue
            rest = [x for x in workers if x.id != w.id]
            after = osp(r, rest, budgets, tau)
            if after < base - 1:
                out.append(f"removing worker {w.id} at price {r}: {base} -> {after}")
    return out


def check_padding(inst: Instance) -> List[str]:
    """M(S_{i+1}) - M(S_i) <= v_{i+1} along the ratio order (in particular at the key worker)."""
    from .care_co import cost_effectiveness_order, orp

    order = cost_effectiveness_order(inst.workers)
    out = []
    prev = Fraction(0)
    for i in range(1, len(order) + 1):
        cur = orp(i, inst, order)[0]
        if cur - prev > order[i - 1].reputation:
            out.append(f"prefix {i}: jump {cur - prev} > v={order[i - 1].reputation}")
        prev = cur
    return out


# -- property dispatch (used by `care verify` and the acceptance suite) --------------

PROPERTIES = ("ir", "budget", "truthful", "approx", "lemmas")


def check_property(name: str, inst: Instance, payment_mode: str = "fast") -> List[str]:
    from .care_no import run_care_no

    if name == "ir":
        out = [f"co: {p}" for p in check_individual_rationality(inst, run_care_co(inst))]
        dist = run_care_no(inst, mode="expectation", payment_mode=payment_mode)
        for h, o in enumerate(dist.per_bucket, start=1):
            out += [f"no bucket {h}: {p}" for p in check_individual_rationality(inst, o)]
        return out
    if name == "budget":
        co = run_care_co(inst)
        out = [f"co: {p}" for p in check_pooled_budget(inst, co) + check_outcome_shape(inst, co)]
        dist = run_care_no(inst, mode="expectation", payment_mode=payment_mode)
        for h, o in enumerate(dist.per_bucket, start=1):
            out += [f"no bucket {h}: {p}" for p in check_requester_budgets(inst, o) + check_outcome_shape(inst, o)]
        return out
    if name == "truthful":
        out = []
        for mech in ("co", "no"):
            for wid, gain in sorted(probe_all(inst, mech, payment_mode).items()):
                if gain > 0:
                    out.append(f"{mech}: worker {wid} gains {gain} by misreporting")
        return out
    if name == "approx":
        out = []
        opt, alg, bound = approximation_co(inst)
        if not ratio_ok(opt, alg, bound):
            out.append(f"co: OPT={opt} ALG={alg} bound={bound}")
        opt, alg, bound = approximation_no(inst, payment_mode=payment_mode)
        if not ratio_ok(opt, alg, bound):
            out.append(f"no: OPT={opt} E[ALG]={alg} bound={bound}")
        return out
    if name == "lemmas":
        args = (inst.workers, inst.requesters, inst.tau)
        return ([f"lemma 1: {p}" for p in check_lemma_winner_persistence(*args)]
                + [f"lemma 2: {p}" for p in check_lemma_strict_decrease(*args)]
                + [f"lemma 3: {p}" for p in check_lemma_removal(*args)]
                + [f"padding: {p}" for p in check_padding(inst)])
    raise ValueError(f"unknown property {name!r}")
