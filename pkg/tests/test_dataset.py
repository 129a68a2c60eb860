import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protosel.dataset import (
    Dataset,
    SplitSpec,
    generate_blobs,
    load_any,
    load_binary,
    load_csv,
    save_binary,
    save_csv,
    split,
    split_indices,
)
from protosel.errors import DatasetFormatError, SplitError


def test_load_small_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y,label\n1,2,a\n3,4,a\n5,6.5,b\n")
    ds = load_csv(path, "label")
    assert (ds.n, ds.q) == (3, 2)
    assert len(ds.classes) == 2
    np.testing.assert_array_equal(ds.objects, [[1, 2], [3, 4], [5, 6.5]])
    assert ds.feature_names == ("x", "y")


def test_label_column_anywhere(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("cls,x\nu,1\nv,2\n")
    ds = load_csv(path, "cls")
    np.testing.assert_array_equal(ds.labels, ["u", "v"])


@pytest.mark.parametrize(
    "body, row",
    [
        ("x,y,label\n1,2,a\n3,b\n", 3),
        ("x,y,label\n1,2,a\n1,zz,b\n", 3),
        ("x,y,label\n1,2,\n", 2),
    ],
)
def test_malformed_rows_are_named(tmp_path, body, row):
    path = tmp_path / "d.csv"
    path.write_text(body)
    with pytest.raises(DatasetFormatError, match=f"row {row}"):
        load_csv(path)


def test_missing_label_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(DatasetFormatError, match="label column"):
        load_csv(path, "label")


def test_csv_round_trip_is_bit_exact(tmp_path):
    ds = generate_blobs(4, 2500, 3, 1.3, 5)
    assert ds.n == 10_000
    path = tmp_path / "blobs.csv"
    save_csv(ds, path)
    back = load_csv(path)
    assert back.objects.tobytes() == ds.objects.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_binary_round_trip(tmp_path):
    ds = generate_blobs(3, 7, 4, 0.5, 2)
    path = tmp_path / "d.bin"
    save_binary(ds, path)
    raw = path.read_bytes()
    assert raw[:8] == b"PROTOSEL"
    assert int.from_bytes(raw[8:16], "little") == 21
    assert int.from_bytes(raw[16:24], "little") == 4
    back = load_binary(path)
    np.testing.assert_array_equal(back.objects, ds.objects.astype(np.float32))
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert load_any(path).n == 21


def test_binary_truncated(tmp_path):
    ds = generate_blobs(2, 3, 2, 0.5, 2)
    path = tmp_path / "d.bin"
    save_binary(ds, path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DatasetFormatError):
        load_binary(path)


def test_split_stratified_arithmetic():
    ds = generate_blobs(2, 50, 2, 0.3, 1)
    val, train, test = split(ds, SplitSpec(0.8, 0.1, 0.1, seed=7))
    assert (val.n, train.n, test.n) == (80, 10, 10)
    for part, per_class in ((val, 40), (train, 5), (test, 5)):
        _, counts = np.unique(part.labels, return_counts=True)
        assert counts.tolist() == [per_class, per_class]


def test_split_identity():
    ds = generate_blobs(3, 5, 2, 0.3, 1)
    val, train, test = split(ds, SplitSpec(1.0, 0.0, 0.0, seed=3))
    assert val.n == ds.n and train is None and test is None
    np.testing.assert_array_equal(val.ids, np.arange(ds.n))


def test_split_is_deterministic():
    labels = generate_blobs(5, 40, 2, 0.3, 1).labels
    spec = SplitSpec(0.6, 0.2, 0.2, seed=99)
    a = split_indices(labels, spec)
    b = split_indices(labels, spec)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


def test_split_too_small_class():
    labels = np.array(["a"] * 10 + ["b"] * 2)
    with pytest.raises(SplitError, match="'b'"):
        split_indices(labels, SplitSpec(0.5, 0.25, 0.25))


@pytest.mark.parametrize("fractions", [(0.5, 0.5, 0.1), (0.0, 0.5, 0.5), (1.0, -0.1, 0.1)])
def test_bad_fractions(fractions):
    with pytest.raises(SplitError):
        SplitSpec(*fractions)


@settings(max_examples=60, deadline=None)
@given(
    sizes=st.lists(st.integers(3, 40), min_size=1, max_size=5),
    fv=st.floats(0.2, 0.9),
    ft_share=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_split_partition_properties(sizes, fv, ft_share, seed):
    ft = (1 - fv) * ft_share
    fs = 1 - fv - ft
    spec = SplitSpec(fv, ft, fs, seed=seed)
    labels = np.repeat(np.arange(len(sizes)), sizes).astype(str)
    parts = split_indices(labels, spec)
    joined = np.concatenate(parts)
    # partition: disjoint and exhaustive
    assert np.array_equal(np.sort(joined), np.arange(labels.size))
    for cls, m in zip(np.unique(labels), sizes):
        # a split whose share is below one object still gets one member,
        # which can push another split past the +-1 band
        if any(0 < f * m < 1 for f in spec.fractions):
            continue
        for part, f in zip(parts, spec.fractions):
            count = int(np.sum(labels[part] == cls))
            assert abs(count - f * m) < 1 + 1e-9


def test_blobs_separated_1nn_error():
    ds = generate_blobs(2, 50, 2, 0.1, 1)
    # leave-one-out 1-NN on raw features, brute force
    errors = 0
    for i in range(ds.n):
        d = np.sqrt(((ds.objects - ds.objects[i]) ** 2).sum(axis=1))
        d[i] = np.inf
        errors += ds.labels[np.argmin(d)] != ds.labels[i]
    assert errors / ds.n <= 0.02


def test_blobs_deterministic():
    a = generate_blobs(10, 500, 5, 0.5, 3)
    b = generate_blobs(10, 500, 5, 0.5, 3)
    assert a.objects.tobytes() == b.objects.tobytes()
    assert a.revision == b.revision


def test_dataset_is_immutable():
    ds = generate_blobs(1, 10, 3, 1.0, 1)
    with pytest.raises(ValueError):
        ds.objects[0, 0] = 1.0


def test_dataset_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), ["a", "b"])
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), [])
