import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psca.errors import InvalidArgumentError
from psca.scheduler import CyclicSchedule, RandomizedSchedule, make_partition, select_blocks
from psca.stepsize import StepKind, StepSchedule, check_step_gate, gamma_bar, step_at


@pytest.mark.parametrize("n,size,expect", [
    (6, 2, [[0, 1], [2, 3], [4, 5]]),
    (5, 2, [[0, 1], [2, 3], [4]]),
    (4, 4, [[0, 1, 2, 3]]),
])
def test_make_partition(n, size, expect):
    sched = make_partition(n, size)
    assert [g.tolist() for g in sched.partition] == expect
    assert sched.m == len(expect) and sched.n == n


def test_make_partition_rejects():
    for n, size in ((5, 0), (3, 4)):
        with pytest.raises(InvalidArgumentError):
            make_partition(n, size)
    with pytest.raises(InvalidArgumentError):
        CyclicSchedule(([0, 1], [1, 2]))
    with pytest.raises(InvalidArgumentError):
        CyclicSchedule(([0], []))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(0, 2**32))
def test_shuffled_partition_covers(n, size, seed):
    size = min(size, n)
    sched = make_partition(n, size, shuffle_seed=seed)
    allb = np.concatenate(sched.partition)
    assert np.array_equal(np.sort(allb), np.arange(n))


def test_cyclic_selection():
    sched = make_partition(5, 2)
    assert [select_blocks(sched, r).tolist() for r in range(4)] == [[0, 1], [2, 3], [4], [0, 1]]


def test_randomized_reproducible_and_nonempty():
    a = RandomizedSchedule.uniform(50, 0.02, seed=11)
    b = RandomizedSchedule.uniform(50, 0.02, seed=11)
    for r in (0, 5, 1000, 10**9):
        s = select_blocks(a, r)
        assert s.size >= 1
        assert np.array_equal(s, select_blocks(b, r))
        assert np.all(np.diff(s) > 0)
    # out-of-order queries give the same answer
    assert np.array_equal(select_blocks(a, 5), select_blocks(RandomizedSchedule.uniform(50, 0.02, 11), 5))
    assert not all(np.array_equal(select_blocks(a, r), select_blocks(a, r + 1)) for r in range(20))


def test_randomized_inclusion_frequency():
    probs = np.linspace(0.1, 0.9, 9)
    sched = RandomizedSchedule(probs, seed=2)
    counts = np.zeros(9)
    trials = 20000
    for r in range(trials):
        counts[select_blocks(sched, r)] += 1
    # empty draws are redrawn, which barely moves these probabilities
    np.testing.assert_allclose(counts / trials, probs, atol=0.015)
    assert sched.p_min == pytest.approx(0.1)


def test_randomized_rejects_bad_probs():
    for p in ([0.0, 0.5], [1.2], []):
        with pytest.raises(InvalidArgumentError):
            RandomizedSchedule(np.array(p))
    with pytest.raises(InvalidArgumentError):
        select_blocks(RandomizedSchedule.uniform(3, 0.5), -1)


def test_step_kinds():
    c = StepSchedule.constant(0.3)
    assert step_at(c, 0) == step_at(c, 10**6) == 0.3 and c.limit == 0.3
    d = StepSchedule(StepKind.DIMINISHING, 1.0, 0.5)
    assert step_at(d, 2) == 0.5 and d.limit == 0.0
    h = StepSchedule("decrease-then-hold", 1.0, 1.0, 0.2)
    assert [step_at(h, r) for r in (0, 1, 3, 100)] == [1.0, 0.5, 0.25, 0.2]
    assert h.limit == 0.2
    seq = [step_at(h, r) for r in range(200)]
    assert all(b <= a for a, b in zip(seq, seq[1:]))


def test_step_validation():
    bad = [dict(gamma0=0.0), dict(gamma0=1.5), dict(kind="diminishing", eta=0.0),
           dict(kind="decrease-then-hold", eta=1.0, floor=0.0),
           dict(kind="decrease-then-hold", gamma0=0.5, eta=1.0, floor=0.6), dict(eta=-1.0)]
    for kw in bad:
        with pytest.raises(InvalidArgumentError):
            StepSchedule(**kw)


def test_gamma_bar():
    assert gamma_bar(1.0, 4.0, 1.0, 4) == pytest.approx(min(0.25, 1 / 3))
    assert gamma_bar(2.0, 1.0, 1.0, 1) == pytest.approx(2 / 3)
    with pytest.raises(InvalidArgumentError):
        gamma_bar(0.0, 1.0, 1.0, 1)


def test_step_gate(caplog):
    check_step_gate(StepSchedule.constant(0.1), 0.2)
    with pytest.raises(InvalidArgumentError):
        check_step_gate(StepSchedule.constant(0.2), 0.2)
    # a decreasing schedule is judged by its limit
    check_step_gate(StepSchedule("decrease-then-hold", 1.0, 1e-3, 0.1), 0.2)
    check_step_gate(StepSchedule.constant(0.9), None)
    assert "skipping" in caplog.text
