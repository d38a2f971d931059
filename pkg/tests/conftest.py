from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from care.model import Instance, Requester, Worker

settings.register_profile(
    "care",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("care")

F = Fraction


def make_instance(bids, budgets, tau, groups=None, reps=None, costs=None, epsilon=10, seed=0):
    """Workers get ids 1..n; ``groups`` defaults to all in group 1, ``reps`` to 1."""
    n = len(bids)
    groups = groups or [1] * n
    reps = reps or [1] * n
    costs = costs or [None] * n
    workers = [
        Worker(i + 1, groups[i], F(bids[i]), F(reps[i]), None if costs[i] is None else F(costs[i]))
        for i in range(n)
    ]
    requesters = [Requester(j + 1, F(b)) for j, b in enumerate(budgets)]
    return Instance(workers, requesters, tau, F(epsilon), seed)


@pytest.fixture
def pea_example():
    """bids (1,1,3), one group, tau 1 per requester, budgets (4,4)."""
    return make_instance([1, 1, 3], [4, 4], [[1, 1]])


@pytest.fixture
def co_example():
    """bids (1,2,6), unit reputations, one group with tau 2, one requester with B = 10."""
    return make_instance([1, 2, 6], [10], [[2]])


from hypothesis import strategies as st  # noqa: E402


@st.composite
def small_instances(draw, max_n=6, max_m=3, max_groups=3, min_tau=0, reps=(1, 2, 3, F(1, 2), F(5, 2), 12)):
    """Tie-heavy instances: half-unit bids, integer budgets, reputations from a short list."""
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    n_groups = draw(st.integers(1, max_groups))
    budgets = draw(st.lists(st.integers(1, 12), min_size=m, max_size=m))
    top = max(budgets)
    bids = draw(st.lists(st.integers(0, 2 * top).map(lambda x: F(x, 2)), min_size=n, max_size=n))
    groups = draw(st.lists(st.integers(1, n_groups), min_size=n, max_size=n))
    rep = draw(st.lists(st.sampled_from(reps), min_size=n, max_size=n))
    sizes = [groups.count(l) for l in range(1, n_groups + 1)]
    tau = [[draw(st.integers(min(min_tau, s), s)) for _ in range(m)] for s in sizes]
    eps = draw(st.sampled_from([F(10), F(2), F(3, 2)]))
    return make_instance(bids, budgets, tau, groups=groups, reps=rep, epsilon=eps)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
