import numpy as np
import pytest

import reference as ref
from memefuse import nn
from memefuse import tensor as T
from memefuse.config import tiny_model
from memefuse.errors import ContractError
from memefuse.fusion import (attention_entries, build_global_context, combine_predictions, declare_gl_layer,
                             declare_heads, declare_ll_layer, fusion_head, gl_stack, local_local_stack,
                             masked_mean, predict_class, unimodal_head)
from memefuse.model import Model
from memefuse.tensor import Tensor

from conftest import CLASSES, make_config

CFG = tiny_model(d=8, heads=2, d_ff=12, layers=2)


@pytest.fixture
def store(rng):
    s = nn.ParamStore(5)
    for i in range(CFG.layers):
        declare_gl_layer(s, i, CFG)
        declare_ll_layer(s, i, CFG)
    declare_heads(s, CFG, CLASSES, unimodal=True)
    for _, t in s.items():
        t.data = t.data + 0.3 * rng.standard_normal(t.shape)
    return s


def params(store):
    return {n: t.data for n, t in store.items()}


def test_gl_stack_matches_reference(store, rng):
    ht, hi = rng.standard_normal((6, 8)), rng.standard_normal((3, 8))
    st = gl_stack(Tensor(ht), Tensor(hi), store, CFG)
    rt, ri, rg = ref.gl_stack(ht, hi, params(store), CFG.layers, CFG.heads)
    np.testing.assert_allclose(st.h_text.data, rt, atol=1e-12)
    np.testing.assert_allclose(st.h_image.data, ri, atol=1e-12)
    np.testing.assert_allclose(st.context.data, rg, atol=1e-12)
    assert st.context.shape == (2, 8)


def test_local_local_matches_reference(store, rng):
    ht, hi = rng.standard_normal((4, 8)), rng.standard_normal((5, 8))
    t, i = local_local_stack(Tensor(ht), Tensor(hi), store, CFG)
    rt, ri = ref.ll_stack(ht, hi, params(store), CFG.layers, CFG.heads)
    np.testing.assert_allclose(t.data, rt, atol=1e-12)
    np.testing.assert_allclose(i.data, ri, atol=1e-12)


def test_stacks_agree_in_shape(store, rng):
    ht, hi = Tensor(rng.standard_normal((2, 5, 8))), Tensor(rng.standard_normal((2, 3, 8)))
    st = gl_stack(ht, hi, store, CFG)
    t, i = local_local_stack(ht, hi, store, CFG)
    assert st.h_text.shape == t.shape == ht.shape
    assert st.h_image.shape == i.shape == hi.shape


def test_context_concat_mode(rng):
    ht, hi = Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((2, 4)))
    g, m = build_global_context(ht, hi, mode="concat")
    assert g.shape == (5, 4) and m is None
    g, _ = build_global_context(ht, hi, mode="pooled")
    np.testing.assert_allclose(g.data, [ht.data.mean(0), hi.data.mean(0)])


def zero_outputs(store):
    for name, t in store.items():
        if name.endswith((".wo", ".bo", ".ff.w2", ".ff.b2")):
            t.data[...] = 0.0


def test_residual_identity_and_uniform_head(store, rng):
    zero_outputs(store)
    for name, t in store.items():
        if name.startswith("head."):
            t.data[...] = 0.0
    ht, hi = rng.standard_normal((5, 8)), rng.standard_normal((2, 8))
    st = gl_stack(Tensor(ht), Tensor(hi), store, CFG)
    np.testing.assert_array_equal(st.h_text.data, ht)
    np.testing.assert_array_equal(st.h_image.data, hi)
    for task, k in CLASSES.items():
        y = fusion_head(st.h_text, st.h_image, st.context, store, CFG, task).data
        assert np.all(y == 1.0 / k)


def test_fusion_depends_only_on_heads_when_projections_zeroed(store, rng):
    zero_outputs(store)
    a = fusion_head(Tensor(rng.standard_normal((4, 8))), Tensor(rng.standard_normal((2, 8))), None,
                    store, CFG, "sa").data
    b = fusion_head(Tensor(rng.standard_normal((3, 8))), Tensor(rng.standard_normal((5, 8))), None,
                    store, CFG, "sa").data
    np.testing.assert_array_equal(a, b)


def test_unimodal_head_permutation_invariant(store, rng):
    h = rng.standard_normal((5, 8))
    a = unimodal_head(Tensor(h), store, "id", "text").data
    b = unimodal_head(Tensor(h[::-1].copy()), store, "id", "text").data
    np.testing.assert_allclose(a, b, atol=1e-15)
    single = unimodal_head(Tensor(h[:1]), store, "id", "text").data
    np.testing.assert_allclose(single, T.softmax(Tensor(h[0] @ store["head.id.text.w"].data
                                                       + store["head.id.text.b"].data)).data, atol=1e-15)


def test_combine_predictions_sums():
    y = combine_predictions(Tensor([0.2, 0.8]), Tensor([0.5, 0.5]), Tensor([1.0, 0.0]))
    np.testing.assert_allclose(y.data, [1.7, 1.3])
    assert y.data.sum() == pytest.approx(3.0)
    with pytest.raises(ContractError):
        combine_predictions(Tensor([0.5, 0.5]), Tensor([1.0, 0.0, 0.0]))


def test_predict_class_ties_lowest_index():
    assert predict_class(np.array([[0.5, 0.5], [0.2, 0.8]])).tolist() == [0, 1]


def test_masked_mean_ignores_padding():
    x = Tensor(np.array([[[1.0], [3.0], [100.0]]]))
    assert masked_mean(x, np.array([[True, True, False]])).data.item() == 2.0
    with pytest.raises(ContractError):
        masked_mean(x, np.array([[False, False, False]]))


@pytest.mark.parametrize("n_t,n_i", [(4, 3), (7, 1), (16, 16)])
def test_attention_counts_match_closed_form(store, rng, n_t, n_i):
    ht, hi = Tensor(rng.standard_normal((n_t, 8))), Tensor(rng.standard_normal((n_i, 8)))
    for variant, fn in (("global_local", lambda: gl_stack(ht, hi, store, CFG)),
                        ("local_local", lambda: local_local_stack(ht, hi, store, CFG))):
        with T.no_grad(), nn.count_attention() as c:
            fn()
        want = attention_entries(n_t, n_i, CFG.layers, CFG.heads, variant)
        assert c.counts["cross"] == want["cross"]
        assert c.counts["self"] == want["self"]
    with T.no_grad(), nn.count_attention() as c:
        gl_stack(ht, hi, store, CFG)
    assert c.calls["cross"] == 4 * CFG.layers


@pytest.mark.parametrize("gl", [True, False])
def test_model_batched_matches_single(synth_samples, gl):
    cfg = make_config(ablation={"gl": gl})
    model = Model(cfg)
    samples = synth_samples[0][:4]
    with T.no_grad():
        batched = model.forward(model.builder.build(samples))
        for i, s in enumerate(samples):
            single = model.forward(model.builder.build([s]))
            for task in CLASSES:
                np.testing.assert_allclose(batched.predictions.combined[task].data[i],
                                           single.predictions.combined[task].data[0], atol=1e-10)


def test_ablation_flags_keep_shared_init():
    full = Model(make_config())
    for drop in ("om", "up", "gl", "dg"):
        other = Model(make_config(ablation={drop: False}))
        shared = set(full.store) & set(other.store)
        assert shared
        for name in shared:
            np.testing.assert_array_equal(full.store[name].data, other.store[name].data)


def test_without_up_distribution_sums_to_one(synth_samples):
    model = Model(make_config(ablation={"up": False}))
    with T.no_grad():
        out = model.forward(model.builder.build(synth_samples[0][:3]))
    for task in CLASSES:
        np.testing.assert_allclose(out.predictions.combined[task].data.sum(-1), 1.0, atol=1e-6)
        assert out.predictions.n_branches(task) == 1


def test_without_om_image_length_one(synth_samples):
    model = Model(make_config(ablation={"om": False}))
    with T.no_grad():
        out = model.forward(model.builder.build(synth_samples[0]))
    assert out.h_image.shape[1] == 1
