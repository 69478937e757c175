import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as ref
from memefuse import nn
from memefuse import tensor as T
from memefuse.cap import cap_direction, cap_pair, declare_cap
from memefuse.errors import ConfigError, ContractError
from memefuse.tensor import Tensor


def randomize(store, rng, scale=0.3):
    # non-trivial LN gains/biases so the oracle exercises every parameter
    for name, t in store.items():
        t.data = t.data + scale * rng.standard_normal(t.shape)


def params(store):
    return {n: t.data for n, t in store.items()}


@pytest.fixture
def cap_store(rng):
    s = nn.ParamStore(3)
    declare_cap(s.scope("c"), 8, 2, 12)
    declare_cap(s.scope("r"), 8, 2, 12)
    randomize(s, rng)
    return s


@pytest.mark.parametrize("n_a,n_b", [(1, 1), (5, 2), (3, 7)])
def test_cap_direction_matches_reference(cap_store, rng, n_a, n_b):
    a, b = rng.standard_normal((n_a, 8)), rng.standard_normal((n_b, 8))
    got = cap_direction(Tensor(a), Tensor(b), cap_store.scope("c"), 2).data
    want = ref.cap(a, b, params(cap_store), "c", 2)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_cap_pair_directions_use_original_inputs(cap_store, rng):
    a, b = rng.standard_normal((4, 8)), rng.standard_normal((2, 8))
    ab, ba = cap_pair(Tensor(a), Tensor(b), cap_store.scope("c"), cap_store.scope("r"), 2)
    p = params(cap_store)
    np.testing.assert_allclose(ab.data, ref.cap(a, b, p, "c", 2), atol=1e-12)
    np.testing.assert_allclose(ba.data, ref.cap(b, a, p, "r", 2), atol=1e-12)


def test_cap_batched_matches_per_sample_with_padding(cap_store, rng):
    lens_a, lens_b = [3, 5], [2, 1]
    a = np.zeros((2, 5, 8))
    b = np.zeros((2, 2, 8))
    ma, mb = np.zeros((2, 5), bool), np.zeros((2, 2), bool)
    for i in range(2):
        a[i, :lens_a[i]] = rng.standard_normal((lens_a[i], 8))
        b[i, :lens_b[i]] = rng.standard_normal((lens_b[i], 8))
        ma[i, :lens_a[i]] = True
        mb[i, :lens_b[i]] = True
    out = cap_direction(Tensor(a), Tensor(b), cap_store.scope("c"), 2, ma, mb).data
    for i in range(2):
        single = cap_direction(Tensor(a[i, :lens_a[i]]), Tensor(b[i, :lens_b[i]]), cap_store.scope("c"), 2).data
        np.testing.assert_allclose(out[i, :lens_a[i]], single, atol=1e-10)


def test_cap_zero_projections_is_identity(rng):
    s = nn.ParamStore(0)
    declare_cap(s.scope("c"), 8, 2, 12)
    for name in ("mca.wo", "mca.bo", "msa.wo", "msa.bo", "ff.w2", "ff.b2"):
        s[f"c.{name}"].data[...] = 0.0
    a = rng.standard_normal((4, 8))
    out = cap_direction(Tensor(a), Tensor(rng.standard_normal((3, 8))), s.scope("c"), 2).data
    np.testing.assert_array_equal(out, a)


def test_cap_rejects_width_mismatch(cap_store):
    with pytest.raises(ContractError):
        cap_direction(Tensor(np.zeros((2, 8))), Tensor(np.zeros((2, 4))), cap_store.scope("c"), 2)


def test_heads_must_divide_width():
    with pytest.raises(ConfigError):
        nn.declare_attention(nn.ParamStore().scope("a"), 10, 4)


def test_padded_keys_get_zero_weight(rng):
    s = nn.ParamStore(0)
    nn.declare_attention(s.scope("a"), 4, 2)
    q, kv = Tensor(rng.standard_normal((1, 3, 4))), Tensor(rng.standard_normal((1, 5, 4)))
    mask = np.array([[True, True, False, True, False]])
    _, w = nn.multi_head_attention(q, kv, s.scope("a"), 2, mask)
    assert np.all(w[..., ~mask[0]] == 0.0)


def test_counter_counts_entries_and_calls(cap_store, rng):
    with nn.count_attention() as c:
        cap_direction(Tensor(rng.standard_normal((5, 8))), Tensor(rng.standard_normal((3, 8))),
                      cap_store.scope("c"), 2)
    assert c.counts == {"cross": 2 * 5 * 3, "self": 2 * 5 * 5}
    assert c.calls == {"cross": 1, "self": 1}


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1),
       st.floats(0.1, 20.0))
def test_attention_rows_sum_to_one(heads, n_q, n_kv, seed, scale):
    rng = np.random.default_rng(seed)
    d = 4 * heads
    s = nn.ParamStore(seed)
    nn.declare_attention(s.scope("a"), d, heads)
    mask = rng.random((1, n_kv)) < 0.7
    mask[0, rng.integers(n_kv)] = True
    q = Tensor(scale * rng.standard_normal((1, n_q, d)))
    kv = Tensor(scale * rng.standard_normal((1, n_kv, d)))
    with T.no_grad():
        _, w = nn.multi_head_attention(q, kv, s.scope("a"), heads, mask)
    assert w.shape == (1, heads, n_q, n_kv)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(w[..., ~mask[0]] == 0.0)
