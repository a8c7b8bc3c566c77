import numpy as np
import pytest

from fgseg.data import generate_class_dataset
from fgseg.errors import ContractError
from fgseg.net import build_network, toy_config
from fgseg.postprocess import BBox
from fgseg.retrieval import (MODES, RetrievalIndex, build_index,
                             evaluate_retrieval, extract_features, load_index,
                             rank, rank_scored, represent, save_index)


@pytest.fixture(scope="module")
def toy_net():
    return build_network(toy_config(), seed=21)


@pytest.fixture(scope="module")
def zero_net():
    net = build_network(toy_config(), seed=0)
    for i in net.conv_layers():
        net.weights[i][:] = 0.0
        net.biases[i][:] = 0.0
    return net


def rand_image(seed, h=40, w=40):
    return np.random.default_rng(seed).uniform(-0.5, 0.5, (3, h, w)).astype(np.float32)


def test_extract_deterministic_and_unit_norm(toy_net):
    img = rand_image(0)
    a = extract_features(toy_net, img)
    b = extract_features(toy_net, img)
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-6)


def test_extract_length_is_feature_channel_count(toy_net):
    v = extract_features(toy_net, rand_image(1))
    tap = toy_net.config.feature_tap
    assert v.shape == (toy_net.config.layers[tap].channels,)


def test_extract_region_crop_changes_features(toy_net):
    img = rand_image(2, 50, 50)
    whole = extract_features(toy_net, img)
    crop = extract_features(toy_net, img, BBox(5, 5, 20, 20))
    assert not np.allclose(whole, crop)


def test_extract_rejects_bad_region(toy_net):
    with pytest.raises(ContractError):
        extract_features(toy_net, rand_image(3), BBox(0, 0, 60, 60))


def test_represent_modes_and_ff_length(toy_net):
    img = rand_image(4)
    full, _ = represent(toy_net, img, "FULL")
    ff, _ = represent(toy_net, img, "FF")
    assert ff.shape[0] == 2 * full.shape[0]
    assert np.linalg.norm(ff) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ContractError):
        represent(toy_net, img, "fg")


def test_fg_falls_back_to_full_when_nothing_survives(zero_net):
    # zero net -> uniform 0.5 probabilities -> empty mask -> fallback
    img = rand_image(5)
    full, _ = represent(zero_net, img, "FULL")
    fg, fallback = represent(zero_net, img, "FG")
    assert fallback
    assert np.array_equal(full, fg)


def _hand_index():
    vecs = np.array([
        [1.0, 0.0],
        [0.0, 1.0],
        [np.sqrt(0.5), np.sqrt(0.5)],
        [0.8, 0.6],
        [-1.0, 0.0],
    ], dtype=np.float32)
    ids = ["a", "b", "c", "d", "e"]
    classes = ["x", "y", "x", "x", "y"]
    return RetrievalIndex("FULL", ids, classes, vecs)


def test_rank_hand_dot_products():
    idx = _hand_index()
    q = np.array([1.0, 0.0], dtype=np.float32)
    # sims: a=1, b=0, c=.7071, d=.8, e=-1
    assert rank(q, idx) == ["a", "d", "c", "b", "e"]


def test_rank_excludes_query_and_breaks_ties_by_id():
    vecs = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]], dtype=np.float32)
    idx = RetrievalIndex("FULL", ["q", "m", "k"], ["-", "-", "-"], vecs)
    assert rank(np.array([1.0, 0.0], np.float32), idx, exclude="q") == ["k", "m"]


def test_rank_self_entry_first():
    idx = _hand_index()
    out = rank_scored(idx.vectors[3], idx)
    assert out[0][0] == "d"
    assert out[0][1] == pytest.approx(1.0, abs=1e-6)


def test_rank_dim_mismatch():
    idx = _hand_index()
    with pytest.raises(ContractError):
        rank(np.zeros(3, dtype=np.float32), idx)


def test_orthogonal_entries_tie_rule():
    vecs = np.eye(3, dtype=np.float32)
    idx = RetrievalIndex("FULL", ["c", "a", "b"], ["-", "-", "-"], vecs)
    q = np.array([0.0, 0.0, 1.0], dtype=np.float32)
    assert rank(q, idx) == ["b", "a", "c"]


def test_index_round_trip(tmp_path, toy_net):
    samples, classes = generate_class_dataset(num_classes=2, per_class=2,
                                              size=33, seed=3)
    idx = build_index(toy_net, samples, classes, "FULL")
    save_index(idx, tmp_path / "idx")
    back = load_index(tmp_path / "idx")
    assert back.mode == idx.mode
    assert back.ids == idx.ids and back.classes == idx.classes
    assert np.array_equal(back.vectors, idx.vectors)


def test_evaluate_identical_copies_per_class(zero_net, toy_net):
    # identical images within a class -> identical descriptors -> mAP 1
    rng = np.random.default_rng(6)
    samples = []
    classes = []
    from fgseg.data import LabeledSample
    for c in range(2):
        img = rng.uniform(-0.5, 0.5, (3, 33, 33)).astype(np.float32)
        for j in range(3):
            samples.append(LabeledSample(image=img.copy(),
                                         label=np.zeros((33, 33), np.uint8),
                                         name=f"c{c}-{j}"))
            classes.append(f"class{c}")
    result = evaluate_retrieval(toy_net, samples, classes, "FULL")
    assert result.map_score == pytest.approx(1.0, abs=1e-6)
    assert result.skipped == 0


def test_evaluate_skips_singleton_classes(toy_net):
    samples, classes = generate_class_dataset(num_classes=2, per_class=3,
                                              size=33, seed=9)
    classes = list(classes)
    classes[5] = "lonely"   # leaves class01 with two members
    result = evaluate_retrieval(toy_net, samples, classes, "FULL")
    assert result.skipped == 1
    assert len(result.query_aps) == 5


def test_evaluate_reports_fallback_rate(zero_net):
    samples, classes = generate_class_dataset(num_classes=2, per_class=2,
                                              size=33, seed=10)
    result = evaluate_retrieval(zero_net, samples, classes, "FG")
    assert result.fallback_rate == 1.0  # zero net never finds foreground


def test_rank_is_permutation_minus_excluded():
    rng = np.random.default_rng(11)
    vecs = rng.standard_normal((7, 4)).astype(np.float32)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    ids = [f"i{k}" for k in range(7)]
    idx = RetrievalIndex("FULL", ids, ["-"] * 7, vecs)
    out = rank(vecs[2], idx, exclude="i2")
    assert sorted(out) == sorted(set(ids) - {"i2"})


def test_map_invariant_to_id_relabeling(toy_net):
    samples, classes = generate_class_dataset(num_classes=3, per_class=3,
                                              size=33, seed=12)
    a = evaluate_retrieval(toy_net, samples, classes, "FULL").map_score
    for i, s in enumerate(samples):
        s.name = f"renamed-{i:03d}"
    b = evaluate_retrieval(toy_net, samples, classes, "FULL").map_score
    assert a == pytest.approx(b, abs=1e-12)


def test_modes_constant():
    assert MODES == ("FULL", "FG", "FF")
