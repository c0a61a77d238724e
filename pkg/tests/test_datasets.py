import numpy as np
import pytest

from snas.datasets import LabeledSet, class_angle, generate


def estimate_angle(img, pad=256):
    x = img[0] - img[0].mean()
    spec = np.abs(np.fft.fft2(x, (pad, pad)))
    spec[0, 0] = 0
    i, j = np.unravel_index(spec.argmax(), spec.shape)
    fy = i if i < pad // 2 else i - pad
    fx = j if j < pad // 2 else j - pad
    return np.arctan2(fy, fx) % np.pi


def nearest_template(img, num_classes):
    a = estimate_angle(img)
    dist = [abs((a - class_angle(k, num_classes) + np.pi / 2) % np.pi - np.pi / 2)
            for k in range(num_classes)]
    return int(np.argmin(dist))


def test_same_seed_bitwise_identical():
    a, b = generate(3), generate(3)
    for x, y in zip(a, b):
        assert x.images.tobytes() == y.images.tobytes()
        assert np.array_equal(x.labels, y.labels)


def test_different_seed_differs():
    assert generate(1)[0].images.tobytes() != generate(2)[0].images.tobytes()


def test_split_sizes_and_balance():
    train, val = generate(0, num_classes=4, per_class=100)
    assert len(train) == 320 and len(val) == 80
    assert np.bincount(train.labels).tolist() == [80] * 4
    assert np.bincount(val.labels).tolist() == [20] * 4
    assert train.split == "train" and val.split == "val"


@pytest.mark.parametrize("seed", range(3))
def test_value_range(seed):
    for part in generate(seed, per_class=20):
        assert part.images.dtype == np.float32
        assert part.images.min() >= 0.0 and part.images.max() <= 1.0


@pytest.mark.parametrize("seed", range(3))
def test_noise_free_classes_are_separable(seed):
    _, val = generate(seed, noise=0.0)
    preds = [nearest_template(img, 4) for img in val.images]
    assert np.mean(np.array(preds) == val.labels) == 1.0


def test_every_class_in_both_splits_small():
    train, val = generate(5, num_classes=6, per_class=2)
    assert set(train.labels) == set(val.labels) == set(range(6))


def test_rejects_single_class():
    with pytest.raises(ValueError):
        generate(0, num_classes=1)


def test_container_round_trip(tmp_path):
    _, val = generate(0, per_class=10)
    val.save(tmp_path / "val.snas")
    again = LabeledSet.load(tmp_path / "val.snas")
    assert again.images.tobytes() == val.images.tobytes()
    assert np.array_equal(again.labels, val.labels)
