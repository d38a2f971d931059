"""Domain types, JSON (de)serialization and validation shared by all mechanisms.

All monetary quantities are :class:`fractions.Fraction` values. Floats never
enter the money path: decimal strings such as ``"3.25"`` are parsed exactly.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

log = logging.getLogger(__name__)

Money = Fraction

DEFAULT_EPSILON = Fraction(10)


class InstanceError(ValueError):
    """Raised when an instance document cannot be turned into an Instance."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def parse_money(value: Any, path: str = "$") -> Fraction:
    """Parse a decimal string, ``"p/q"`` string or integer into an exact rational."""
    if isinstance(value, bool) or isinstance(value, float):
        # floats would silently round; demand strings
        raise InstanceError(path, f"money must be a decimal or rational string, got {value!r}")
    if isinstance(value, int):
        out = Fraction(value)
    elif isinstance(value, str):
        try:
            out = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise InstanceError(path, f"not a number: {value!r}") from None
    else:
        raise InstanceError(path, f"money must be a string, got {type(value).__name__}")
    if out < 0:
        raise InstanceError(path, f"money must be non-negative, got {value!r}")
    return out


def format_money(value: Fraction) -> str:
    return str(Fraction(value))


@dataclass(frozen=True)
class Worker:
    id: int
    group: int
    bid: Fraction
    reputation: Fraction
    cost: Optional[Fraction] = None

    @property
    def true_cost(self) -> Fraction:
        return self.bid if self.cost is None else self.cost

    @property
    def ratio(self) -> Fraction:
        """Bid per unit of reputation."""
        return self.bid / self.reputation


@dataclass(frozen=True)
class Requester:
    id: int
    budget: Fraction


@dataclass(frozen=True)
class Instance:
    workers: Tuple[Worker, ...]
    requesters: Tuple[Requester, ...]
    tau: Tuple[Tuple[int, ...], ...]
    epsilon: Fraction = DEFAULT_EPSILON
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        object.__setattr__(self, "requesters", tuple(self.requesters))
        object.__setattr__(self, "tau", tuple(tuple(int(t) for t in row) for row in self.tau))
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))

    @property
    def n(self) -> int:
        return len(self.workers)

    @property
    def m(self) -> int:
        return len(self.requesters)

    @property
    def n_groups(self) -> int:
        return len(self.tau)

    @cached_property
    def groups(self) -> Dict[int, Tuple[int, ...]]:
        """Group index (1-based) -> worker ids, ascending."""
        out: Dict[int, List[int]] = {g: [] for g in range(1, self.n_groups + 1)}
        for w in sorted(self.workers, key=lambda w: w.id):
            out.setdefault(w.group, []).append(w.id)
        return {g: tuple(ids) for g, ids in out.items()}

    @cached_property
    def by_id(self) -> Dict[int, Worker]:
        return {w.id: w for w in self.workers}

    @cached_property
    def requester_ids(self) -> Tuple[int, ...]:
        return tuple(r.id for r in self.requesters)

    @cached_property
    def budgets(self) -> Tuple[Fraction, ...]:
        return tuple(r.budget for r in self.requesters)

    @property
    def total_budget(self) -> Fraction:
        return sum(self.budgets, Fraction(0))

    @cached_property
    def v_min(self) -> Fraction:
        return min(w.reputation for w in self.workers)

    @cached_property
    def v_max(self) -> Fraction:
        return max(w.reputation for w in self.workers)

    @cached_property
    def rho_max(self) -> Fraction:
        return self.v_max / self.v_min

    def tau_of(self, group: int, requester_pos: int) -> int:
        """tau for a 1-based group and a 0-based requester position."""
        return self.tau[group - 1][requester_pos]

    def with_bid(self, worker_id: int, bid: Fraction) -> "Instance":
        workers = tuple(replace(w, bid=Fraction(bid)) if w.id == worker_id else w for w in self.workers)
        return replace(self, workers=workers)

    def with_workers(self, workers: Iterable[Worker]) -> "Instance":
        return replace(self, workers=tuple(workers))

    def subset(self, worker_ids: Iterable[int]) -> "Instance":
        keep = set(worker_ids)
        return self.with_workers(w for w in self.workers if w.id in keep)


@dataclass(frozen=True)
class Assignment:
    """Sparse x_ij: the set of (worker_id, requester_id) pairs with x_ij = 1."""

    entries: frozenset = frozenset()

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]]) -> "Assignment":
        return cls(frozenset((int(i), int(j)) for i, j in pairs))

    @cached_property
    def requester_of(self) -> Dict[int, int]:
        return {i: j for i, j in self.entries}

    @property
    def workers(self) -> frozenset:
        return frozenset(i for i, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def sorted_pairs(self) -> List[Tuple[int, int]]:
        return sorted(self.entries)

    def problems(self, inst: Instance, caps: Optional[Mapping[int, int]] = None) -> List[str]:
        """Assignment invariant violations (empty when feasible)."""
        out = []
        seen: Dict[int, int] = {}
        for i, j in self.entries:
            if i in seen:
                out.append(f"worker {i} assigned twice")
            seen[i] = j
            if i not in inst.by_id:
                out.append(f"unknown worker {i}")
            if j not in inst.requester_ids:
                out.append(f"unknown requester {j}")
        if out:
            return out
        pos = {rid: k for k, rid in enumerate(inst.requester_ids)}
        counts: Dict[Tuple[int, int], int] = {}
        per_req: Dict[int, int] = {}
        for i, j in self.entries:
            key = (inst.by_id[i].group, j)
            counts[key] = counts.get(key, 0) + 1
            per_req[j] = per_req.get(j, 0) + 1
        for (g, j), c in counts.items():
            if c > inst.tau_of(g, pos[j]):
                out.append(f"group {g} exceeds tau at requester {j}: {c} > {inst.tau_of(g, pos[j])}")
        if caps is not None:
            for j, c in per_req.items():
                if c > caps.get(j, 0):
                    out.append(f"requester {j} exceeds cap {caps.get(j, 0)}: {c}")
        return out


@dataclass
class Outcome:
    assignment: Assignment = field(default_factory=Assignment)
    payments: Dict[int, Tuple[int, Fraction]] = field(default_factory=dict)
    total_reputation: Fraction = Fraction(0)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def winners(self) -> List[int]:
        return sorted(self.assignment.workers)

    def payment(self, worker_id: int) -> Fraction:
        entry = self.payments.get(worker_id)
        return entry[1] if entry else Fraction(0)

    def total_paid(self) -> Fraction:
        return sum((p for _, p in self.payments.values()), Fraction(0))

    def spend_by_requester(self) -> Dict[int, Fraction]:
        out: Dict[int, Fraction] = {}
        for j, p in self.payments.values():
            out[j] = out.get(j, Fraction(0)) + p
        return out

    def utility(self, worker: Worker) -> Fraction:
        if worker.id in self.assignment.workers:
            return self.payment(worker.id) - worker.true_cost
        return Fraction(0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "winners": self.winners,
            "assignment": [[i, j] for i, j in self.assignment.sorted_pairs()],
            "payments": {
                str(i): {"requester": j, "amount": format_money(p)}
                for i, (j, p) in sorted(self.payments.items())
            },
            "total_reputation": format_money(self.total_reputation),
            "diagnostics": _jsonable(self.diagnostics),
        }


def empty_outcome(**diagnostics) -> Outcome:
    return Outcome(diagnostics=dict(diagnostics))


def reputation_of(inst: Instance, worker_ids: Iterable[int]) -> Fraction:
    return sum((inst.by_id[i].reputation for i in worker_ids), Fraction(0))


def _jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return format_money(value)
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return [_jsonable(v) for v in sorted(value)]
    return value


def dumps(obj: Any) -> str:
    """Canonical JSON text used for every artifact the package writes."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


# -- serialization ------------------------------------------------------------

def _require(doc: Mapping, key: str, path: str) -> Any:
    if not isinstance(doc, Mapping):
        raise InstanceError(path, "expected an object")
    if key not in doc:
        raise InstanceError(f"{path}.{key}", "missing field")
    return doc[key]


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceError(path, f"expected an integer, got {value!r}")
    return value


def instance_from_dict(doc: Mapping, clamp_tau: bool = True) -> Instance:
    workers_doc = _require(doc, "workers", "$")
    requesters_doc = _require(doc, "requesters", "$")
    tau_doc = _require(doc, "tau", "$")
    if not isinstance(workers_doc, list):
        raise InstanceError("$.workers", "expected an array")
    if not isinstance(requesters_doc, list):
        raise InstanceError("$.requesters", "expected an array")
    if not isinstance(tau_doc, list) or not all(isinstance(r, list) for r in tau_doc):
        raise InstanceError("$.tau", "expected an array of arrays")

    requesters = []
    seen_r = set()
    for k, rd in enumerate(requesters_doc):
        path = f"$.requesters[{k}]"
        rid = _int(_require(rd, "id", path), f"{path}.id")
        if rid in seen_r:
            raise InstanceError(f"{path}.id", f"duplicate requester id {rid}")
        seen_r.add(rid)
        requesters.append(Requester(rid, parse_money(_require(rd, "budget", path), f"{path}.budget")))

    n_groups = len(tau_doc)
    tau = []
    for l, row in enumerate(tau_doc):
        if len(row) != len(requesters):
            raise InstanceError(f"$.tau[{l}]", f"expected {len(requesters)} entries, got {len(row)}")
        vals = []
        for j, t in enumerate(row):
            t = _int(t, f"$.tau[{l}][{j}]")
            if t < 0:
                raise InstanceError(f"$.tau[{l}][{j}]", "tau must be non-negative")
            vals.append(t)
        tau.append(vals)

    workers = []
    seen_w = set()
    for k, wd in enumerate(workers_doc):
        path = f"$.workers[{k}]"
        wid = _int(_require(wd, "id", path), f"{path}.id")
        if wid in seen_w:
            raise InstanceError(f"{path}.id", f"duplicate worker id {wid}")
        seen_w.add(wid)
        group = _int(_require(wd, "group", path), f"{path}.group")
        if not 1 <= group <= n_groups:
            raise InstanceError(f"{path}.group", f"unknown group {group} (have {n_groups})")
        bid = parse_money(_require(wd, "bid", path), f"{path}.bid")
        cost = parse_money(wd["cost"], f"{path}.cost") if "cost" in wd else None
        rep = parse_money(_require(wd, "reputation", path), f"{path}.reputation")
        workers.append(Worker(wid, group, bid, rep, cost))

    if clamp_tau:
        sizes = [0] * n_groups
        for w in workers:
            sizes[w.group - 1] += 1
        for l in range(n_groups):
            for j in range(len(requesters)):
                if tau[l][j] > sizes[l]:
                    log.warning("tau[%d][%d]=%d exceeds group size %d; clamped", l, j, tau[l][j], sizes[l])
                    tau[l][j] = sizes[l]

    epsilon = parse_money(doc["epsilon"], "$.epsilon") if "epsilon" in doc else DEFAULT_EPSILON
    seed = _int(doc.get("seed", 0), "$.seed")
    if not 0 <= seed < 2 ** 64:
        raise InstanceError("$.seed", "seed must be a 64-bit unsigned integer")
    return Instance(tuple(workers), tuple(requesters), tuple(tuple(r) for r in tau), epsilon, seed)


def parse_instance(text: str, clamp_tau: bool = True) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError("$", f"malformed JSON: {exc}") from None
    return instance_from_dict(doc, clamp_tau=clamp_tau)


def instance_to_dict(inst: Instance) -> Dict[str, Any]:
    workers = []
    for w in inst.workers:
        d = {"id": w.id, "group": w.group, "bid": format_money(w.bid), "reputation": format_money(w.reputation)}
        if w.cost is not None:
            d["cost"] = format_money(w.cost)
        workers.append(d)
    return {
        "workers": workers,
        "requesters": [{"id": r.id, "budget": format_money(r.budget)} for r in inst.requesters],
        "tau": [list(row) for row in inst.tau],
        "epsilon": format_money(inst.epsilon),
        "seed": inst.seed,
    }


def serialize_instance(inst: Instance) -> str:
    return dumps(instance_to_dict(inst))


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    detail: Tuple = ()
    severity: str = "error"

    def __str__(self) -> str:
        args = ", ".join(str(d) for d in self.detail)
        return f"{self.code}({args})"


def validate(inst: Instance) -> List[Violation]:
    """Check every domain invariant; violations are returned, never raised."""
    out: List[Violation] = []
    if inst.n < 1:
        out.append(Violation("NoWorkers"))
    if inst.m < 1:
        out.append(Violation("NoRequesters"))
    if inst.n_groups < 1:
        out.append(Violation("NoGroups"))
    if inst.epsilon <= 1:
        out.append(Violation("EpsilonNotAboveOne", (str(inst.epsilon),)))

    ids = [w.id for w in inst.workers]
    for wid in sorted({i for i in ids if ids.count(i) > 1}):
        out.append(Violation("DuplicateWorkerId", (wid,)))
    rids = [r.id for r in inst.requesters]
    for rid in sorted({j for j in rids if rids.count(j) > 1}):
        out.append(Violation("DuplicateRequesterId", (rid,)))

    for r in inst.requesters:
        if r.budget <= 0:
            out.append(Violation("NonPositiveBudget", (r.id,)))
    for row_idx, row in enumerate(inst.tau):
        if len(row) != inst.m:
            out.append(Violation("TauShape", (row_idx + 1,)))

    max_budget = max(inst.budgets, default=Fraction(0))
    for w in inst.workers:
        if not 1 <= w.group <= inst.n_groups:
            out.append(Violation("UnknownGroup", (w.id, w.group)))
        if w.reputation <= 0:
            out.append(Violation("NonPositiveReputation", (w.id,)))
        if w.bid < 0 or (w.cost is not None and w.cost < 0):
            out.append(Violation("NegativeMoney", (w.id,)))
        if w.bid > max_budget:
            out.append(Violation("BidExceedsAllBudgets", (w.id,)))

    sizes = {g: len(ids_) for g, ids_ in inst.groups.items()}
    for l, row in enumerate(inst.tau, start=1):
        for j, t in enumerate(row, start=1):
            if t < 0:
                out.append(Violation("NegativeTau", (l, j)))
            elif t > sizes.get(l, 0):
                out.append(Violation("TauClamped", (l, j), severity="warning"))
    return out
