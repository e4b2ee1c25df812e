import math

import pytest
from hypothesis import given, strategies as st

from ppmsim.faults import HARD, SOFT, FaultEngine, FaultModel


def _draws(model, P=1, n=1000):
    e = FaultEngine(model, P)
    return [e.maybe_fault(i % P) for i in range(n)]


def test_zero_rate_never_faults():
    assert set(_draws(FaultModel(f=0.0, seed=3), P=3, n=5000)) == {None}


@given(st.integers(0, 2 ** 32), st.floats(0.0, 0.5), st.floats(0.0, 1.0))
def test_same_seed_same_sequence(seed, f, hard):
    m = lambda: FaultModel(f=f, seed=seed, hard_fraction=hard)  # noqa: E731
    assert _draws(m(), P=3, n=300) == _draws(m(), P=3, n=300)


def test_empirical_rate_inside_binomial_interval():
    n, f = 100_000, 0.1
    hits = sum(d is not None for d in _draws(FaultModel(f=f, seed=11), n=n))
    # normal approximation of the 99% two-sided binomial interval
    half = 2.5758 * math.sqrt(n * f * (1 - f))
    assert abs(hits - n * f) <= half
    assert 0.094 <= hits / n <= 0.106


def test_hard_fraction_split():
    n = 50_000
    d = _draws(FaultModel(f=0.5, hard_fraction=0.25, seed=2, exempt=-1), P=1, n=n)
    # a hard fault kills the only processor's engine entry but draws continue on the RNG
    hard = d.count(HARD)
    soft = d.count(SOFT)
    assert hard + soft > 0
    assert abs(hard / (hard + soft) - 0.25) < 0.02


def test_live_until_scripted_hard_fault():
    e = FaultEngine(FaultModel(script=[(2, 3, HARD)]), 4)
    assert all(e.isLive(p) for p in range(4))
    for _ in range(3):
        assert e.maybe_fault(2) is None
    assert e.maybe_fault(2) == HARD
    assert not e.isLive(2)
    for _ in range(10):
        e.maybe_fault(1)
    assert not e.isLive(2) and e.isLive(1)


def test_script_replaces_random_draws():
    d = _draws(FaultModel(f=0.5, script=[(0, 4, SOFT)]), n=10)
    assert d == [None] * 4 + [SOFT] + [None] * 5


def test_exempt_processor_never_hard_faults():
    e = FaultEngine(FaultModel(f=0.5, hard_fraction=1.0, seed=0), 2)
    kinds = {e.maybe_fault(0) for _ in range(200)}
    assert HARD not in kinds and e.isLive(0)
    with pytest.raises(ValueError):
        FaultModel(script=[(0, 1, HARD)])


@pytest.mark.parametrize("kw", [dict(f=0.6), dict(f=-0.1), dict(hard_fraction=1.5),
                                dict(script=[(0, 1, "melt")])])
def test_model_validation(kw):
    with pytest.raises(ValueError):
        FaultModel(**kw)


def test_script_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('[{"proc": 1, "ordinal": 2, "kind": "hard"}]')
    m = FaultModel.from_script_file(p)
    assert m.script == [(1, 2, HARD)]


def test_overlay_adds_script_to_random_draws():
    plain = FaultEngine(FaultModel(f=0.2, seed=5), P=2)
    mixed = FaultEngine(FaultModel(f=0.2, seed=5, script=[(1, 3, "hard")], overlay=True), P=2)
    a = [plain.maybe_fault(0) for _ in range(200)]
    b = [mixed.maybe_fault(0) for _ in range(200)]
    assert a == b and any(a)
    hits = [mixed.maybe_fault(1) for _ in range(4)]
    assert hits[3] == "hard" and not mixed.isLive(1)
