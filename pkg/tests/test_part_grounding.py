import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from articulate.action_program import JointKind
from articulate.part_grounding import (
    DimensionMismatch, EmptyMask, EmptyStore, FeatureMap, FeatureStore, GAPartClass, knn_ground,
    max_pool, synthetic_feature, synthetic_store,
)

DOOR, BUTTON, DRAWER = GAPartClass.HINGE_DOOR, GAPartClass.SLIDER_BUTTON, GAPartClass.SLIDER_DRAWER


def test_max_pool_single_cell():
    values = np.zeros((2, 2, 3))
    values[1, 0] = [4, -1, 2]
    mask = np.zeros((2, 2), bool)
    mask[1, 0] = True
    np.testing.assert_array_equal(max_pool(FeatureMap(values, mask)), [4, -1, 2])


def test_max_pool_is_channelwise():
    values = np.array([[[1, 5], [3, 2]]], dtype=float)
    assert max_pool(FeatureMap(values, np.ones((1, 2), bool))).tolist() == [3, 5]


def test_max_pool_ignores_unmasked_cells():
    values = np.array([[[1, 5], [30, 20]]], dtype=float)
    assert max_pool(FeatureMap(values, np.array([[True, False]]))).tolist() == [1, 5]


def test_max_pool_empty_mask():
    with pytest.raises(EmptyMask):
        max_pool(FeatureMap(np.ones((2, 2, 3)), np.zeros((2, 2), bool)))


def test_feature_map_shape_check():
    with pytest.raises(DimensionMismatch):
        FeatureMap(np.ones((2, 2, 3)), np.ones((3, 2), bool))


def test_identity_retrieval():
    store = FeatureStore([[0.3, 0.4, 0.5]], [DOOR])
    assert knn_ground(store, [0.3, 0.4, 0.5], 1)[0] is DOOR


def test_three_entry_vote():
    store = FeatureStore([[1, 0], [0.9, 0.1], [0, 1]], [DOOR, DOOR, BUTTON])
    label, votes = knn_ground(store, [1, 0.05], 3)
    assert label is DOOR
    assert votes == {DOOR: 2, BUTTON: 1}


def test_split_vote_goes_to_nearest():
    store = FeatureStore([[1, 0], [0, 1]], [BUTTON, DOOR])
    assert knn_ground(store, [1, 0.2], 2)[0] is BUTTON
    assert knn_ground(store, [0.2, 1], 2)[0] is DOOR


def test_errors():
    with pytest.raises(EmptyStore):
        knn_ground(FeatureStore(np.zeros((0, 2)), []), [1, 0], 1)
    store = FeatureStore([[1, 0]], [DOOR])
    with pytest.raises(DimensionMismatch):
        knn_ground(store, [1, 0, 0], 1)
    with pytest.raises(ValueError):
        knn_ground(store, [1, 0], 2)


def test_jsonl_roundtrip(tmp_path):
    store, _ = synthetic_store(dim=8, per_class=2, seed=3)
    path = tmp_path / "store.jsonl"
    store.dump_jsonl(path)
    back = FeatureStore.load_jsonl(path)
    assert back.labels == store.labels
    np.testing.assert_allclose(back.vectors, store.vectors)


def test_class_tokens_parse():
    assert GAPartClass.parse("hinge-door") is DOOR
    assert GAPartClass.parse("SliderButton") is BUTTON
    assert GAPartClass.parse("line fixed handle") is GAPartClass.LINE_FIXED_HANDLE
    with pytest.raises(ValueError):
        GAPartClass.parse("wheel")
    assert DOOR.joint_kind is JointKind.REVOLUTE
    assert GAPartClass.ROUND_FIXED_HANDLE.joint_kind is None
    assert GAPartClass.ROUND_FIXED_HANDLE.is_handle


def test_synthetic_features_are_retrievable():
    store, means = synthetic_store(dim=32, per_class=10, sigma=0.3, seed=0)
    rng = np.random.default_rng(99)
    hits = sum(knn_ground(store, synthetic_feature(c, means, 0.3, rng))[0] is c for c in GAPartClass for _ in range(5))
    assert hits >= 0.95 * 5 * len(GAPartClass)


_store, _means = synthetic_store(dim=16, per_class=4, sigma=0.8, seed=5)


@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_scale_invariance(seed, c):
    q = np.random.default_rng(seed).normal(size=16)
    assert knn_ground(_store, c * q)[0] is knn_ground(_store, q)[0]


@given(st.integers(0, 10_000), st.permutations(range(len(_store))))
def test_permutation_invariance(seed, perm):
    q = np.random.default_rng(seed).normal(size=16)
    shuffled = FeatureStore(_store.vectors[list(perm)], [_store.labels[i] for i in perm])
    assert knn_ground(shuffled, q)[0] is knn_ground(_store, q)[0]


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_full_store_majority(seed, minority):
    rng = np.random.default_rng(seed)
    labels = [DRAWER] * 5 + [DOOR] * minority
    store = FeatureStore(rng.normal(size=(len(labels), 6)), labels)
    assert knn_ground(store, rng.normal(size=6), len(store))[0] is DRAWER
