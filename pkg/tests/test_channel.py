import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcost.channel import (Dmc, NType, bsc, compositions, density_matrix, divergences,
                            load_channel, mutual_information, quantize_to_type,
                            sample_constant_composition, validate_channel)
from mvcost.errors import InfeasibleError, InputError


def raw_bsc(p=0.3):
    return {"input_symbols": [0, 1], "output_symbols": [0, 1],
            "transition": [[1 - p, p], [p, 1 - p]], "cost": [0, 1]}


def test_validate_roundtrip(tmp_path):
    path = tmp_path / "ch.json"
    path.write_text(json.dumps(raw_bsc()))
    dmc = load_channel(path)
    assert dmc.J == 2 and dmc.K == 2
    assert validate_channel(dmc.to_dict()).transition.tolist() == dmc.transition.tolist()


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d.update(transition=[[0.7, 0.4], [0.3, 0.7]]), "row 0"),
    (lambda d: d.update(cost=[0, -1]), "nonnegative"),
    (lambda d: d.update(cost=[1, 1]), "equal"),
    (lambda d: d.update(transition=[[0.7, 0.3]]), "shape"),
    (lambda d: d.pop("cost"), "missing"),
])
def test_validation_errors(mutate, msg):
    d = raw_bsc()
    mutate(d)
    with pytest.raises(InputError, match=msg):
        validate_channel(d)


def test_not_json():
    with pytest.raises(InputError):
        validate_channel("{nope")


def test_vacuous_constraint_rejected():
    # both inputs give identical outputs, so the cheapest one already achieves capacity
    d = {"input_symbols": [0, 1], "output_symbols": [0, 1],
         "transition": [[0.5, 0.5], [0.5, 0.5]], "cost": [0, 1]}
    with pytest.raises(InputError, match="vacuous"):
        validate_channel(d)


def test_saturation_cost_bsc():
    assert bsc(0.3).gamma_star == pytest.approx(0.5, abs=1e-6)


def test_mutual_information_bsc():
    p = 0.3
    q = 0.2 * 0.4 + 0.3
    h = lambda x: -x * math.log(x) - (1 - x) * math.log(1 - x)
    assert mutual_information([0.8, 0.2], bsc(p)) == pytest.approx(h(q) - h(p), abs=1e-14)


def test_density_matrix_zero_entries():
    dmc = Dmc((0, 1), (0, 1, 2), np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]), np.array([0, 1.0]))
    Q = np.array([0.25, 0.5, 0.25])
    I = density_matrix(dmc, Q)
    assert I[0, 2] == 0 and I[0, 0] == pytest.approx(math.log(2))
    assert divergences(dmc, Q) == pytest.approx([math.log(2) / 2] * 2)


def test_compositions_count():
    assert len(compositions(6, 3)) == math.comb(8, 2)
    assert all(row.sum() == 6 for row in compositions(6, 3))


def test_quantize_bsc():
    t = quantize_to_type([0.8, 0.2], 12, 0.2, np.array([0.0, 1.0]))
    assert t.counts == (10, 2)


def test_quantize_tie_goes_lexicographic():
    # P = (0.5, 0.5) at n = 3: (2,1) and (1,2) are equidistant; (1,2) is lexicographically smaller
    t = quantize_to_type([0.5, 0.5], 3, 1.0, np.array([0.0, 1.0]))
    assert t.counts == (1, 2)


def test_quantize_respects_cost():
    t = quantize_to_type([0.5, 0.5], 3, 0.34, np.array([0.0, 1.0]))
    assert t.counts == (2, 1)


def test_quantize_infeasible():
    with pytest.raises(InfeasibleError):
        quantize_to_type([0.5, 0.5], 4, -0.1, np.array([0.0, 1.0]))


def test_ntype_checks():
    with pytest.raises(InputError):
        NType(3, (1, 1))
    t = NType(4, (3, 1))
    assert t.cost(np.array([0.0, 1.0])) == 0.25
    assert t.support() == (0, 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=2, max_size=4).filter(lambda c: sum(c) > 0),
       st.integers(0, 2 ** 32 - 1))
def test_sampling_preserves_type(counts, seed):
    t = NType(sum(counts), tuple(counts))
    x = sample_constant_composition(t, np.random.default_rng(seed))
    assert tuple(np.bincount(x, minlength=len(counts))) == t.counts


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.integers(3, 40),
       st.floats(0.05, 2.0))
def test_quantize_is_feasible_and_no_worse_than_rounding(w, n, gamma):
    P = np.array(w) / sum(w)
    cost = np.array([0.0, 1.0, 2.0])
    t = quantize_to_type(P, n, gamma, cost)
    assert t.cost(cost) <= gamma + 1e-12
    # exhaustive search agrees with the returned distance
    best = min(np.abs(c / n - P).sum() for c in compositions(n, 3) if c @ cost <= n * gamma + 1e-9)
    assert t.l1(P) == pytest.approx(best, abs=1e-12)


def test_quantize_large_alphabet_falls_back_feasibly():
    # 8 symbols at n = 40 is beyond exhaustive search
    P = np.arange(1, 9) / 36
    cost = np.arange(8, dtype=float)
    t = quantize_to_type(P, 40, 3.0, cost)
    assert sum(t.counts) == 40 and t.cost(cost) <= 3.0 + 1e-12
    assert t.l1(P) < 8 * 8 / 40


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4), st.integers(2, 4))
def test_mutual_information_range_and_density_identity(seed, J, K):
    g = np.random.default_rng(seed)
    W = g.dirichlet(np.ones(K), size=J)
    dmc = Dmc(tuple(range(J)), tuple(range(K)), W, np.arange(J, dtype=float))
    P = g.dirichlet(np.ones(J))
    I = mutual_information(P, dmc)
    assert -1e-15 <= I <= math.log(min(J, K)) + 1e-12
    Q = P @ W
    dens = density_matrix(dmc, Q)
    D = (W * dens).sum(axis=1)
    assert D == pytest.approx(divergences(dmc, Q), abs=1e-12)
    assert float(P @ D) == pytest.approx(I, abs=1e-12)
