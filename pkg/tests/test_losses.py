import math

import numpy as np
import pytest

from memefuse import tensor as T
from memefuse.errors import ContractError, TrainingError
from memefuse.gradcheck import check_tensors
from memefuse.losses import dual_semantic_loss, task_ce_loss, total_loss
from memefuse.tensor import Tensor


def cos_matrix(a, b):
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = b / np.linalg.norm(b, axis=1, keepdims=True)
    return a @ b.T


def symmetric_oracle(t, v, tau):
    s = cos_matrix(t, v) / tau
    n = len(t)
    row = [-s[i, i] + math.log(sum(math.exp(s[i, j]) for j in range(n))) for i in range(n)]
    col = [-s[i, i] + math.log(sum(math.exp(s[j, i]) for j in range(n))) for i in range(n)]
    return 0.5 * (sum(row) / n + sum(col) / n)


def literal_oracle(t, v, tau):
    n = len(t)
    paired = np.array([cos_matrix(t[i:i + 1], v[i:i + 1])[0, 0] / tau for i in range(n)])
    s = np.concatenate([paired, paired])
    total = 0.0
    for k in range(2 * n):
        total += -s[k] + math.log(sum(math.exp(s[j]) for j in range(2 * n) if j != k))
    return total / (2 * n)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_literal_equal_vectors_give_log_2n_minus_1(n):
    x = np.tile(np.array([[0.3, -1.2, 0.5]]), (n, 1))
    val = dual_semantic_loss(Tensor(x), Tensor(x.copy()), tau=0.07, mode="literal").item()
    assert abs(val - math.log(2 * n - 1)) <= 1e-9


@pytest.mark.parametrize("n", [2, 5])
def test_symmetric_equal_vectors_give_log_n(n):
    x = np.ones((n, 4))
    assert dual_semantic_loss(Tensor(x), Tensor(x), 0.5).item() == pytest.approx(math.log(n), abs=1e-12)


@pytest.mark.parametrize("mode,oracle", [("symmetric", symmetric_oracle), ("literal", literal_oracle)])
@pytest.mark.parametrize("tau", [0.07, 1.0])
def test_contrastive_matches_oracle(rng, mode, oracle, tau):
    t, v = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
    got = dual_semantic_loss(Tensor(t), Tensor(v), tau, mode).item()
    assert got == pytest.approx(oracle(t, v, tau), rel=1e-12, abs=1e-12)


def test_contrastive_scale_invariant(rng):
    t, v = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    a = dual_semantic_loss(Tensor(t), Tensor(v), 0.2).item()
    b = dual_semantic_loss(Tensor(3.0 * t), Tensor(0.5 * v), 0.2).item()
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("mode", ["symmetric", "literal"])
def test_contrastive_gradients(rng, mode):
    t = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    v = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    errs = check_tensors(lambda: dual_semantic_loss(t, v, 0.3, mode), {"t": t, "v": v})
    assert max(errs.values()) < 1e-5


def test_contrastive_errors():
    with pytest.raises(ContractError, match="at least 2"):
        dual_semantic_loss(Tensor(np.ones((1, 3))), Tensor(np.ones((1, 3))))
    with pytest.raises(ContractError, match="zero vector"):
        dual_semantic_loss(Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ContractError):
        dual_semantic_loss(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))))


def test_ce_matches_hand_value():
    scores = Tensor(np.array([[1.5, 1.5], [0.3, 2.7]]))
    w = Tensor(np.array([[1.0, -2.0]]))
    got = task_ce_loss(scores, np.array([0, 1]), n_branches=3, head_params=[w], l2=0.1).item()
    want = -(math.log(0.5) + math.log(0.9)) / 2 + 0.1 * 5.0
    assert got == pytest.approx(want, abs=1e-14)


def test_ce_single_branch_uniform():
    k = 4
    scores = Tensor(np.full((3, k), 1.0 / k))
    assert task_ce_loss(scores, np.array([0, 1, 3]), n_branches=1).item() == pytest.approx(math.log(k))


def test_ce_rejects_bad_labels():
    with pytest.raises(ContractError):
        task_ce_loss(Tensor(np.ones((2, 2))), np.array([0, 2]))
    with pytest.raises(ContractError):
        task_ce_loss(Tensor(np.ones((2, 2))), np.array([0]))


def test_total_loss_is_plain_sum(rng):
    parts = {k: Tensor(rng.random()) for k in ("mr", "sa", "id", "od", "dg")}
    want = sum(p.item() for p in parts.values())
    assert total_loss(parts).item() == pytest.approx(want, abs=1e-12)
    od = parts.pop("od").item()
    assert total_loss(parts).item() == pytest.approx(want - od, abs=1e-12)


def test_total_loss_excludes_disabled_exactly():
    parts = {"mr": Tensor(1.25), "sa": Tensor(0.5), "dg": None}
    assert total_loss(parts).item() == 1.75
    assert total_loss({"mr": None}).item() == 0.0


def test_total_loss_nan_names_component():
    with pytest.raises(TrainingError, match="'dg'"):
        total_loss({"mr": Tensor(1.0), "dg": Tensor(float("nan"))})
