import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dib.errors import DegenerateDataError, InvalidInputError
from dib.gram_kernel import gram_of, resolve_sigma
from dib.losses import (LossWeights, SigmaPolicy, balance_term, cluster_consistency, compression,
                        contrastive, cosine_similarity, feature_consistency, feature_constant,
                        joint_consistency, overall)
from dib.neural import softmax
from dib.renyi import entropy_alpha, joint_entropy, mutual_information

from oracles import central_diff, infonce_loop, mi_direct, rel_err


def test_cosine_examples():
    u = np.array([1.0, 2.0, -0.5])
    assert cosine_similarity(u, u) == pytest.approx(1.0)
    assert cosine_similarity([1.0, 0.0], [0.0, 3.0]) == 0.0
    assert cosine_similarity(u, -u) == pytest.approx(-1.0)
    with pytest.raises(InvalidInputError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_feature_orthogonal_negatives_only():
    H = [np.eye(2), np.eye(2)]
    value, _ = feature_consistency(H, 1.0, "paper")
    # two ordered view pairs, each averaging the per-anchor term 1 - ln 2
    assert value == pytest.approx(2 * (1 - math.log(2)), abs=1e-12)
    assert 1 - math.log(2) == pytest.approx(0.3069, abs=1e-4)


def test_feature_orthogonal_standard_form():
    value, _ = feature_consistency([np.eye(2), np.eye(2)], 1.0, "standard")
    assert value == pytest.approx(2 * (1 - math.log(math.e + 2)), abs=1e-12)


@pytest.mark.parametrize("V,n", [(2, 3), (3, 5)])
def test_feature_all_identical(V, n):
    H = [np.ones((n, 4)) for _ in range(V)]
    value, grads = feature_consistency(H, 1.0, "paper")
    assert value == pytest.approx(V * (V - 1) * -math.log(V * (n - 1)), abs=1e-12)
    assert all(np.max(np.abs(g)) < 1e-12 for g in grads)


@pytest.mark.parametrize("denominator", ["standard", "paper"])
@pytest.mark.parametrize("tau", [0.5, 1.0])
def test_contrastive_matches_loop_oracle(denominator, tau):
    rng = np.random.default_rng(3)
    H = [rng.standard_normal((5, 3)) for _ in range(3)]
    value, _ = contrastive(H, tau, denominator)
    assert value == pytest.approx(infonce_loop(H, tau, paper=denominator == "paper"), abs=1e-12)


@pytest.mark.parametrize("denominator", ["standard", "paper"])
def test_feature_gradient(denominator):
    rng = np.random.default_rng(4)
    H = [rng.standard_normal((3, 4)) for _ in range(2)]
    _, grads = feature_consistency(H, 1.0, denominator)
    for v in range(2):
        def f(x, v=v):
            vs = list(H)
            vs[v] = x
            return feature_consistency(vs, 1.0, denominator)[0]
        assert rel_err(grads[v], central_diff(f, H[v])) < 1e-5


def test_feature_needs_two_views():
    with pytest.raises(InvalidInputError):
        feature_consistency([np.ones((3, 2))])
    with pytest.raises(InvalidInputError):
        feature_consistency([np.ones((3, 2)), np.ones((4, 2))])
    with pytest.raises(InvalidInputError):
        feature_consistency([np.ones((3, 2))] * 2, denominator="other")


def test_feature_constant():
    assert feature_constant(2, 8) == pytest.approx(2 * math.log(8))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.01, 100), V=st.integers(2, 3))
def test_feature_permutation_and_scale_invariant(seed, c, V):
    rng = np.random.default_rng(seed)
    H = [rng.standard_normal((6, 3)) for _ in range(V)]
    base = feature_consistency(H)[0]
    perm = rng.permutation(6)
    assert feature_consistency([h[perm] for h in H])[0] == pytest.approx(base, abs=1e-10)
    assert feature_consistency([c * h for h in H])[0] == pytest.approx(base, abs=1e-10)


def test_cluster_one_hot_closed_form():
    S = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    value, _ = cluster_consistency([S, S], 1.0, "paper")
    assert value == pytest.approx(2 * (1 - math.log(2)), abs=1e-12)
    value, _ = cluster_consistency([S, S], 1.0, "standard")
    assert value == pytest.approx(2 * (1 - math.log(math.e + 2)), abs=1e-12)


def test_balance_uniform():
    S = [np.full((6, 3), 1 / 3), np.full((6, 3), 1 / 3)]
    value, _ = balance_term(S)
    assert value == pytest.approx(-2 * math.log(3), abs=1e-12)


@pytest.mark.parametrize("balance", [0.0, 0.5])
@pytest.mark.parametrize("denominator", ["standard", "paper"])
def test_cluster_gradient(balance, denominator):
    rng = np.random.default_rng(5)
    S = [softmax(2 * rng.standard_normal((5, 3))) for _ in range(2)]
    _, grads = cluster_consistency(S, 1.0, denominator, balance)
    for v in range(2):
        def f(x, v=v):
            vs = list(S)
            vs[v] = x
            return cluster_consistency(vs, 1.0, denominator, balance, validate=False)[0]
        assert rel_err(grads[v], central_diff(f, S[v])) < 1e-5


def test_cluster_balance_rewards_uniform_usage():
    rng = np.random.default_rng(6)
    S = [softmax(rng.standard_normal((8, 3))) for _ in range(2)]
    plain = cluster_consistency(S)[0]
    bal = cluster_consistency(S, balance=1.0)[0]
    assert bal - plain == pytest.approx(-balance_term(S)[0])
    assert bal > plain


def test_cluster_rejects_off_simplex():
    S = np.array([[0.7, 0.7], [0.5, 0.5]])
    with pytest.raises(InvalidInputError):
        cluster_consistency([S, S])
    with pytest.raises(InvalidInputError):
        cluster_consistency([np.ones((3, 1))] * 2)


def test_cluster_permutation_invariant():
    rng = np.random.default_rng(7)
    S = [softmax(rng.standard_normal((7, 3))) for _ in range(3)]
    perm = rng.permutation(7)
    assert cluster_consistency([s[perm] for s in S])[0] == pytest.approx(cluster_consistency(S)[0],
                                                                        abs=1e-12)


def test_joint_constant_labels_is_zero():
    rng = np.random.default_rng(8)
    H = rng.standard_normal((6, 4))
    S = np.tile([0.2, 0.3, 0.5], (6, 1))
    mi, _, gS = joint_consistency(H, S, 2.0, SigmaPolicy(fixed=1.0))
    assert abs(mi) < 1e-8


def test_joint_self_compositional():
    rng = np.random.default_rng(9)
    H = rng.standard_normal((7, 3))
    A, _ = gram_of(H)
    expected = 2 * entropy_alpha(A, 2.0) - joint_entropy(A, A, 2.0)
    mi, _, _ = joint_consistency(H, H, 2.0)
    assert mi == pytest.approx(expected, abs=1e-10)
    assert mi == pytest.approx(mi_direct(A.matrix, A.matrix, 2.0), abs=1e-9)


def test_joint_gradient():
    rng = np.random.default_rng(10)
    H = rng.standard_normal((4, 3))
    S = softmax(rng.standard_normal((4, 3)))
    sig = (resolve_sigma(H), resolve_sigma(S))
    _, gH, gS = joint_consistency(H, S, 1.01, sigmas=sig)
    assert rel_err(gH, central_diff(lambda x: joint_consistency(x, S, 1.01, sigmas=sig)[0], H)) < 1e-4
    assert rel_err(gS, central_diff(lambda x: joint_consistency(H, x, 1.01, sigmas=sig)[0], S)) < 1e-4


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([0.5, 1.01, 2.0]))
def test_joint_symmetric_in_arguments(seed, alpha):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((6, 3))
    S = softmax(rng.standard_normal((6, 3)))
    assert joint_consistency(H, S, alpha)[0] == pytest.approx(joint_consistency(S, H, alpha)[0], abs=1e-12)


def test_joint_mismatched_rows():
    with pytest.raises(InvalidInputError):
        joint_consistency(np.ones((3, 2)), np.ones((4, 2)))


def test_compression_collapse_rejected():
    Ax, _ = gram_of(np.random.default_rng(0).standard_normal((5, 3)))
    with pytest.raises(DegenerateDataError):
        compression(Ax, np.zeros((5, 2)))


def test_compression_isometric_copy():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((8, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    Ax, _ = gram_of(X)
    mi, _ = compression(Ax, X @ Q + 2.0, 2.0)
    assert mi == pytest.approx(mutual_information(Ax, Ax, 2.0), abs=1e-9)


def test_compression_gradient():
    rng = np.random.default_rng(12)
    Ax, _ = gram_of(rng.standard_normal((5, 4)))
    Z = rng.standard_normal((5, 3))
    pol = SigmaPolicy(fixed=resolve_sigma(Z))
    mi, g = compression(Ax, Z, 1.01, pol)
    assert rel_err(g, central_diff(lambda z: compression(Ax, z, 1.01, pol)[0], Z)) < 1e-4
    Az, _ = gram_of(Z, pol.fixed)
    assert mi == pytest.approx(mutual_information(Az, Ax, 1.01), abs=1e-12)


def test_weights_validation():
    with pytest.raises(InvalidInputError):
        LossWeights(gamma=-1)
    with pytest.raises(InvalidInputError):
        LossWeights(tau=0)
    with pytest.raises(InvalidInputError):
        LossWeights(terms={"fea", "bogus"})
    assert LossWeights().coefficients() == {"fea": -1, "clu": -1, "joint": -0.01, "comp": 0.01}
    assert LossWeights(terms={"clu"}).coefficients()["fea"] == 0.0


def _random_terms(rng, scale=1.0):
    def g():
        return [scale * rng.standard_normal((4, 3)) for _ in range(2)]
    return {
        "fea": (float(rng.standard_normal()), {"H": g()}),
        "clu": (float(rng.standard_normal()), {"S": g()}),
        "joint": (float(rng.standard_normal()), {"H": g(), "S": g()}),
        "comp": (float(rng.standard_normal()), {"Z": g()}),
    }


def test_overall_without_mi_weights():
    terms = _random_terms(np.random.default_rng(13))
    rep, _ = overall(terms, LossWeights(gamma=0, beta=0))
    assert rep.overall == -(terms["fea"][0] + terms["clu"][0])


def test_overall_zero_gradients():
    terms = _random_terms(np.random.default_rng(14), scale=0.0)
    _, grads = overall(terms, LossWeights())
    assert all(np.all(g == 0) for gl in grads.values() for g in gl)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0, 5), beta=st.floats(0, 5))
def test_overall_recomposition(seed, gamma, beta):
    terms = _random_terms(np.random.default_rng(seed))
    w = LossWeights(gamma=gamma, beta=beta)
    rep, grads = overall(terms, w)
    assert rep.overall == -rep.fea - rep.clu - gamma * rep.joint + beta * rep.comp
    c = w.coefficients()
    for target in ("H", "S", "Z"):
        for v in range(2):
            want = sum(c[name] * tg[target][v] for name, (_, tg) in terms.items() if target in tg)
            assert np.max(np.abs(grads[target][v] - want)) <= 1e-12


def test_report_dict_keys():
    rep, _ = overall(_random_terms(np.random.default_rng(15)), LossWeights())
    assert list(rep.as_dict()) == ["fea", "clu", "joint", "comp", "overall"]
