"""Synthetic scenarios, baseline mechanisms and batch experiments.

Generated workers fall into one of three data-accuracy tiers, each with its
own bid range. Reputation is a proxy: the tier's accuracy midpoint plus a
small seeded jitter (the mechanisms only ever consume v_i, so any positive
proxy keeps every property intact).
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from . import rng
from .care_co import cost_effectiveness_order, run_care_co
from .care_no import run_care_no
from .model import (
    DEFAULT_EPSILON,
    Assignment,
    Instance,
    Outcome,
    Requester,
    Worker,
    dumps,
    parse_money,
    reputation_of,
)

log = logging.getLogger(__name__)

REPUTATION_PROXY = "tier accuracy midpoint + uniform jitter in [-jitter, +jitter], 2 decimals"


@dataclass(frozen=True)
class Tier:
    accuracy: Tuple[Fraction, Fraction]
    bids: Tuple[Fraction, Fraction]

    @property
    def midpoint(self) -> Fraction:
        return (self.accuracy[0] + self.accuracy[1]) / 2


TABLE_I = (
    Tier((Fraction(2, 5), Fraction(3, 5)), (Fraction(2), Fraction(4))),
    Tier((Fraction(3, 5), Fraction(4, 5)), (Fraction(3), Fraction(5))),
    Tier((Fraction(4, 5), Fraction(1)), (Fraction(4), Fraction(6))),
)


@dataclass(frozen=True)
class GeneratorParams:
    n_workers: int = 120
    n_requesters: int = 5
    n_groups: int = 10
    budget_range: Tuple[Fraction, Fraction] = (Fraction(40), Fraction(80))
    accuracy_tiers: Tuple[Tier, ...] = TABLE_I
    epsilon: Fraction = DEFAULT_EPSILON
    jitter: Fraction = Fraction(1, 20)

    def __post_init__(self):
        if self.n_workers < 1 or self.n_requesters < 1 or self.n_groups < 1:
            raise ValueError("counts must be positive")
        lo, hi = self.budget_range
        if not 0 < lo <= hi:
            raise ValueError("budget range must be non-empty and positive")
        if not self.accuracy_tiers:
            raise ValueError("at least one accuracy tier is required")
        spans = sorted(t.accuracy for t in self.accuracy_tiers)
        for (a_lo, a_hi), (b_lo, _) in zip(spans, spans[1:]):
            if a_hi > b_lo:
                raise ValueError("accuracy tiers overlap")
        for t in self.accuracy_tiers:
            if t.accuracy[0] > t.accuracy[1] or t.bids[0] > t.bids[1] or t.bids[0] < 0:
                raise ValueError("empty tier range")
            if t.midpoint - self.jitter <= 0:
                raise ValueError("jitter would make a reputation non-positive")
        if self.epsilon <= 1:
            raise ValueError("epsilon must exceed 1")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_workers": self.n_workers,
            "n_requesters": self.n_requesters,
            "n_groups": self.n_groups,
            "budget_range": list(self.budget_range),
            "accuracy_tiers": [
                {"accuracy": list(t.accuracy), "bids": list(t.bids)} for t in self.accuracy_tiers
            ],
            "epsilon": self.epsilon,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "GeneratorParams":
        kw: Dict[str, Any] = {}
        for key in ("n_workers", "n_requesters", "n_groups"):
            if key in doc:
                kw[key] = int(doc[key])
        if "budget_range" in doc:
            lo, hi = doc["budget_range"]
            kw["budget_range"] = (parse_money(lo, "$.budget_range[0]"), parse_money(hi, "$.budget_range[1]"))
        if "accuracy_tiers" in doc:
            tiers = []
            for k, t in enumerate(doc["accuracy_tiers"]):
                p = f"$.accuracy_tiers[{k}]"
                acc = tuple(parse_money(x, p + ".accuracy") for x in t["accuracy"])
                bids = tuple(parse_money(x, p + ".bids") for x in t["bids"])
                tiers.append(Tier(acc, bids))
            kw["accuracy_tiers"] = tuple(tiers)
        for key in ("epsilon", "jitter"):
            if key in doc:
                kw[key] = parse_money(doc[key], f"$.{key}")
        return cls(**kw)


@dataclass(frozen=True)
class Scenario:
    instance: Instance
    params: GeneratorParams
    price_ranges: Mapping[int, Tuple[Fraction, Fraction]]


def generate_scenario(params: GeneratorParams, seed: int) -> Scenario:
    """Independent streams per attribute, so e.g. changing the group count leaves bids untouched."""
    tiers_gen = rng.stream(seed, "gen", "tier")
    bid_gen = rng.stream(seed, "gen", "bid")
    rep_gen = rng.stream(seed, "gen", "reputation")
    group_gen = rng.stream(seed, "gen", "group", params.n_groups)
    budget_gen = rng.stream(seed, "gen", "budget", params.n_requesters)
    tau_gen = rng.stream(seed, "gen", "tau", params.n_groups, params.n_requesters)

    workers: List[Worker] = []
    ranges: Dict[int, Tuple[Fraction, Fraction]] = {}
    for i in range(1, params.n_workers + 1):
        tier = params.accuracy_tiers[int(tiers_gen.integers(len(params.accuracy_tiers)))]
        bid = rng.uniform_money(bid_gen, *tier.bids)
        rep = tier.midpoint + rng.uniform_money(rep_gen, -params.jitter, params.jitter)
        group = int(group_gen.integers(1, params.n_groups + 1))
        workers.append(Worker(i, group, bid, rep))
        ranges[i] = tier.bids

    requesters = [
        Requester(j, rng.uniform_money(budget_gen, *params.budget_range))
        for j in range(1, params.n_requesters + 1)
    ]
    sizes = {l: 0 for l in range(1, params.n_groups + 1)}
    for w in workers:
        sizes[w.group] += 1
    tau = [
        [int(tau_gen.integers(1, sizes[l] + 1)) if sizes[l] else 0 for _ in requesters]
        for l in range(1, params.n_groups + 1)
    ]
    inst = Instance(tuple(workers), tuple(requesters), tau, params.epsilon, seed)
    return Scenario(inst, params, ranges)


def generate_instance(params: GeneratorParams, seed: int) -> Instance:
    return generate_scenario(params, seed).instance


def generate_small_instance(seed: int, max_n: int = 6, max_m: int = 3, max_groups: int = 3,
                            costs_differ: bool = False, min_tau: int = 0) -> Instance:
    """Tie-heavy desk-sized instance for property checks.

    Bids, budgets and reputations come from small grids so that equal bids,
    equal ratios and prices landing exactly on bids all occur often.
    """
    g = rng.stream(seed, "small")
    n = int(g.integers(1, max_n + 1))
    m = int(g.integers(1, max_m + 1))
    n_groups = int(g.integers(1, max_groups + 1))
    budgets = [Fraction(int(g.integers(1, 13))) for _ in range(m)]
    top = max(budgets)
    rep_grid = [Fraction(1), Fraction(2), Fraction(3), Fraction(1, 2), Fraction(5, 2), Fraction(12)]
    eps = [Fraction(10), Fraction(2), Fraction(3, 2)][int(g.integers(3))]
    workers = []
    for i in range(1, n + 1):
        bid = Fraction(int(g.integers(0, 2 * int(top) + 1)), 2)
        bid = min(bid, top)
        rep = rep_grid[int(g.integers(len(rep_grid)))]
        cost = None
        if costs_differ:
            cost = Fraction(int(g.integers(0, 2 * int(top) + 1)), 2)
        workers.append(Worker(i, int(g.integers(1, n_groups + 1)), bid, rep, cost))
    sizes = {l: 0 for l in range(1, n_groups + 1)}
    for w in workers:
        sizes[w.group] += 1
    tau = [
        [int(g.integers(min(min_tau, sizes[l]), sizes[l] + 1)) for _ in range(m)]
        for l in range(1, n_groups + 1)
    ]
    requesters = [Requester(j, b) for j, b in enumerate(budgets, start=1)]
    return Instance(tuple(workers), tuple(requesters), tau, eps, seed)


# -- baselines -----------------------------------------------------------------------

def _bid_span(inst: Instance) -> Tuple[Fraction, Fraction]:
    bids = [w.bid for w in inst.workers]
    return (min(bids), max(bids)) if bids else (Fraction(0), Fraction(0))


def _assign_randomly(gen, winners: Sequence[Tuple[Worker, Fraction]], inst: Instance,
                     check_budget: bool) -> Outcome:
    remaining = {r.id: r.budget for r in inst.requesters}
    used: Dict[Tuple[int, int], int] = {}
    pairs, payments = [], {}
    for w, price in winners:
        options = [
            j for pos, j in enumerate(inst.requester_ids)
            if used.get((w.group, j), 0) < inst.tau_of(w.group, pos)
            and (not check_budget or remaining[j] >= price)
        ]
        if not options:
            continue
        j = options[int(gen.integers(len(options)))]
        used[(w.group, j)] = used.get((w.group, j), 0) + 1
        remaining[j] -= price
        pairs.append((w.id, j))
        payments[w.id] = (j, price)
    a = Assignment.from_pairs(pairs)
    return Outcome(a, payments, reputation_of(inst, a.workers))


def run_ranpri(inst: Instance, seed: int,
               price_ranges: Optional[Mapping[int, Tuple[Fraction, Fraction]]] = None) -> Outcome:
    """Random posted price per worker within its cost range; winners go to random compatible requesters."""
    gen = rng.stream(seed, "ranpri")
    span = _bid_span(inst)
    winners = []
    for w in sorted(inst.workers, key=lambda w: w.id):
        lo, hi = price_ranges[w.id] if price_ranges and w.id in price_ranges else span
        price = rng.uniform_money(gen, lo, hi)
        if price >= w.bid:
            winners.append((w, price))
    out = _assign_randomly(gen, winners, inst, check_budget=True)
    out.diagnostics = {"status": "ok"}
    return out


def run_rrafl_ext(inst: Instance, seed: int) -> Outcome:
    """Proportional share on the pooled budget ignoring compatibility, then random compatible placement."""
    order = cost_effectiveness_order(inst.workers)
    budget = inst.total_budget
    k, total = 0, Fraction(0)
    for i, w in enumerate(order, start=1):
        if w.ratio * (total + w.reputation) > budget:
            break
        total += w.reputation
        k = i
    if k == 0 or total == 0:
        return Outcome(diagnostics={"status": "no_affordable_worker"})
    unit = budget / total
    if k < len(order):
        unit = min(unit, order[k].ratio)
    gen = rng.stream(seed, "rrafl-ext")
    out = _assign_randomly(gen, [(w, w.reputation * unit) for w in order[:k]], inst, check_budget=False)
    out.diagnostics = {"status": "ok", "k": k, "unit_price": unit}
    return out


# -- experiments --------------------------------------------------------------------

MECHANISMS = ("co", "no", "ranpri", "rrafl-ext")

SWEEPS = {
    "requesters": {"values": tuple(range(2, 13, 2)), "fixed": {"n_groups": 10}},
    "groups": {"values": tuple(range(4, 25, 4)), "fixed": {"n_requesters": 5}},
}

CSV_COLUMNS = ("axis", "value", "seed", "mechanism", "reputation", "total_paid",
               "max_requester_spend", "runtime_ms")


@dataclass
class ReportRow:
    axis: str
    value: int
    seed: int
    mechanism: str
    reputation: Fraction
    total_paid: Fraction
    max_requester_spend: Fraction
    runtime_ms: Optional[float] = None
    problems: List[str] = field(default_factory=list)


@dataclass
class ExperimentReport:
    axis: str
    values: Tuple[int, ...]
    seeds: Tuple[int, ...]
    mechanisms: Tuple[str, ...]
    params: GeneratorParams
    rows: List[ReportRow] = field(default_factory=list)
    errors: List[Dict[str, Any]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            runtime = "" if r.runtime_ms is None else f"{r.runtime_ms:.3f}"
            writer.writerow([r.axis, r.value, r.seed, r.mechanism, r.reputation, r.total_paid,
                             r.max_requester_spend, runtime])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "axis": self.axis,
            "values": list(self.values),
            "seeds": list(self.seeds),
            "mechanisms": list(self.mechanisms),
            "params": self.params.to_dict(),
            "reputation_proxy": REPUTATION_PROXY,
            "rows": [asdict(r) for r in self.rows],
            "errors": self.errors,
        }
        return dumps(doc)

    def mean(self, value: int, mechanism: str) -> Fraction:
        vals = [r.reputation for r in self.rows if r.value == value and r.mechanism == mechanism]
        return sum(vals, Fraction(0)) / len(vals) if vals else Fraction(0)

    def problems(self) -> List[str]:
        return [f"{r.axis}={r.value} seed={r.seed} {r.mechanism}: {p}" for r in self.rows for p in r.problems]


def _row_from_outcomes(inst: Instance, outcomes: Sequence[Outcome], pooled: bool) -> Tuple[Fraction, Fraction, Fraction, List[str]]:
    """Mean recomputed reputation and paid amount over equally likely outcomes, plus budget checks."""
    problems: List[str] = []
    reps, paid, worst = [], [], Fraction(0)
    for out in outcomes:
        problems += out.assignment.problems(inst)
        reps.append(reputation_of(inst, out.assignment.workers))
        paid.append(out.total_paid())
        spend = out.spend_by_requester()
        worst = max([worst, *spend.values()])
        if pooled:
            if out.total_paid() > inst.total_budget:
                problems.append(f"pooled budget exceeded: {out.total_paid()}")
        else:
            for r in inst.requesters:
                if spend.get(r.id, 0) > r.budget:
                    problems.append(f"requester {r.id} over budget: {spend[r.id]}")
    n = len(outcomes)
    return sum(reps, Fraction(0)) / n, sum(paid, Fraction(0)) / n, worst, problems


def run_mechanism(name: str, scenario: Scenario, seed: int) -> Tuple[Fraction, Fraction, Fraction, List[str]]:
    inst = scenario.instance
    if name == "co":
        return _row_from_outcomes(inst, [run_care_co(inst)], pooled=True)
    if name == "no":
        dist = run_care_no(inst, mode="expectation")
        return _row_from_outcomes(inst, dist.per_bucket, pooled=False)
    if name == "ranpri":
        return _row_from_outcomes(inst, [run_ranpri(inst, seed, scenario.price_ranges)], pooled=False)
    if name == "rrafl-ext":
        return _row_from_outcomes(inst, [run_rrafl_ext(inst, seed)], pooled=True)
    raise ValueError(f"unknown mechanism {name!r}")


def _point_params(params: GeneratorParams, axis: str, value: int) -> GeneratorParams:
    fixed = dict(SWEEPS[axis]["fixed"])
    fixed["n_requesters" if axis == "requesters" else "n_groups"] = value
    return replace(params, **fixed)


def _run_point(job) -> Tuple[List[ReportRow], List[Dict[str, Any]]]:
    axis, value, seed, mechanisms, params, timing = job
    rows, errors = [], []
    try:
        scenario = generate_scenario(_point_params(params, axis, value), seed)
    except Exception as exc:  # per-point failures are recorded, the sweep goes on
        return [], [{"axis": axis, "value": value, "seed": seed, "mechanism": None, "error": repr(exc)}]
    for name in mechanisms:
        start = time.perf_counter()
        try:
            rep, paid, worst, problems = run_mechanism(name, scenario, seed)
        except Exception as exc:
            errors.append({"axis": axis, "value": value, "seed": seed, "mechanism": name, "error": repr(exc)})
            continue
        elapsed = (time.perf_counter() - start) * 1000 if timing else None
        rows.append(ReportRow(axis, value, seed, name, rep, paid, worst, elapsed, problems))
    return rows, errors


def run_experiment(axis: str, params: Optional[GeneratorParams] = None,
                   mechanisms: Sequence[str] = MECHANISMS, seeds: Sequence[int] = tuple(range(1, 11)),
                   values: Optional[Sequence[int]] = None, jobs: int = 1, timing: bool = False) -> ExperimentReport:
    """Every mechanism runs on the same instance per (sweep value, seed).

    Rows come back ordered by (value, seed, mechanism order) whatever ``jobs`` is.
    Runtimes are only recorded with ``timing=True`` so reports stay reproducible by default.
    """
    if axis not in SWEEPS:
        raise ValueError(f"unknown sweep axis {axis!r}")
    for name in mechanisms:
        if name not in MECHANISMS:
            raise ValueError(f"unknown mechanism {name!r}")
    params = params or GeneratorParams()
    values = tuple(SWEEPS[axis]["values"] if values is None else values)
    work = [(axis, v, s, tuple(mechanisms), params, timing) for v in values for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, work))
    else:
        results = [_run_point(job) for job in work]
    report = ExperimentReport(axis, values, tuple(seeds), tuple(mechanisms), params)
    for rows, errors in results:
        report.rows.extend(rows)
        report.errors.extend(errors)
    for e in report.errors:
        log.warning("sweep point failed: %s", json.dumps(e, sort_keys=True))
    return report


# -- property corpora ----------------------------------------------------------------

CORPORA = {
    "ir": {"max_n": 30, "max_m": 6, "max_groups": 8},
    "budget": {"max_n": 30, "max_m": 6, "max_groups": 8},
    "truthful": {"max_n": 6, "max_m": 3, "max_groups": 3},
    "approx": {"max_n": 10, "max_m": 3, "max_groups": 3},
    "lemmas": {"max_n": 8, "max_m": 3, "max_groups": 3},
    "flow": {"max_n": 8, "max_m": 3, "max_groups": 3},
}

# budget feasibility is checked on the same instances as individual rationality
_CORPUS_LABEL = {"budget": "ir"}


def corpus_instance(prop: str, seed: int, trial: int) -> Instance:
    """Trial ``trial`` of the corpus for ``prop``; a pure function of (prop, seed, trial)."""
    label = _CORPUS_LABEL.get(prop, prop)
    sub = int(rng.stream(seed, "corpus", label, trial).integers(2 ** 63))
    return generate_small_instance(sub, **CORPORA[label])
