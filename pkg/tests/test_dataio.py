import numpy as np
import pytest

from radar_openspace import dataio


def random_records(n, rng):
    records = []
    for i in range(n):
        payloads = {
            dataio.KIND_RAD: rng.random((16, 12, 8)).astype(np.float32),
            dataio.KIND_RA: rng.random((16, 12)).astype(np.float32),
            dataio.KIND_DOA: rng.random((16, 16)).astype(np.float32),
            dataio.KIND_MASK_POLAR: rng.integers(0, 2, (16, 12)).astype(np.uint8),
            dataio.KIND_MASK_CART: rng.integers(0, 2, (16, 16)).astype(np.uint8),
        }
        records.append(dataio.FrameRecord(frame_id=i, sequence_id=3, payloads=payloads))
    return records


# ---------------------------------------------------------------------------
# container round trip


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    records = random_records(10, rng)
    path = tmp_path / "x.rseg"
    dataio.write_container(records, path)
    back = dataio.read_container(path)
    assert len(back) == 10
    for a, b in zip(records, back):
        assert (a.frame_id, a.sequence_id) == (b.frame_id, b.sequence_id)
        assert sorted(a.payloads) == sorted(b.payloads)
        for kind in a.payloads:
            assert a.payloads[kind].dtype == b.payloads[kind].dtype
            assert np.array_equal(a.payloads[kind], b.payloads[kind])


def test_rewrite_is_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    records = random_records(4, rng)
    p1, p2 = tmp_path / "a.rseg", tmp_path / "b.rseg"
    dataio.write_container(records, p1)
    dataio.write_container(dataio.read_container(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_record_list(tmp_path):
    path = tmp_path / "empty.rseg"
    dataio.write_container([], path)
    assert dataio.read_container(path) == []


def test_bad_magic_raises(tmp_path):
    path = tmp_path / "x.rseg"
    dataio.write_container(random_records(2, np.random.default_rng(2)), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(dataio.BadMagicError):
        dataio.read_container(path)


def test_version_mismatch_raises(tmp_path):
    path = tmp_path / "x.rseg"
    dataio.write_container(random_records(1, np.random.default_rng(3)), path)
    data = bytearray(path.read_bytes())
    data[4:6] = (99).to_bytes(2, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(dataio.VersionMismatchError):
        dataio.read_container(path)


def test_truncation_raises(tmp_path):
    path = tmp_path / "x.rseg"
    dataio.write_container(random_records(2, np.random.default_rng(4)), path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 7])
    with pytest.raises(dataio.TruncatedPayloadError):
        dataio.read_container(path)


def test_errors_are_distinct_types():
    assert issubclass(dataio.BadMagicError, dataio.ContainerError)
    assert issubclass(dataio.VersionMismatchError, dataio.ContainerError)
    assert issubclass(dataio.TruncatedPayloadError, dataio.ContainerError)
    assert dataio.BadMagicError is not dataio.VersionMismatchError


def test_record_needs_mask():
    rec = dataio.FrameRecord(
        frame_id=0, sequence_id=0,
        payloads={dataio.KIND_RA: np.zeros((4, 4), dtype=np.float32)},
    )
    with pytest.raises(ValueError):
        rec.validate()


# ---------------------------------------------------------------------------
# manifest


def test_manifest_round_trip(tmp_path):
    m = dataio.DatasetManifest(
        seed=5,
        sequences=[
            dataio.SequenceInfo(0, 8, "train", "seq_000.rseg"),
            dataio.SequenceInfo(1, 8, "eval", "seq_001.rseg"),
        ],
        stats={"ra": (1.25, 0.5), "rad": (-0.125, 2.0)},
    )
    back = dataio.DatasetManifest.parse(m.render())
    assert back.seed == m.seed
    assert back.stats == m.stats
    assert [s.split for s in back.sequences] == ["train", "eval"]


# ---------------------------------------------------------------------------
# synthetic dataset (small instance)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    manifest = dataio.build_synthetic_dataset(
        seed=123, out_dir=out, n_sequences=3, frames_per_seq=4
    )
    return manifest


def test_split_sizes(small_dataset):
    train = small_dataset.split_sequences("train")
    ev = small_dataset.split_sequences("eval")
    assert len(train) == 1 and len(ev) == 2
    assert sum(s.n_frames for s in train) == 4


def test_split_is_by_sequence(small_dataset):
    train_ids = {s.sequence_id for s in small_dataset.split_sequences("train")}
    eval_ids = {s.sequence_id for s in small_dataset.split_sequences("eval")}
    assert not train_ids & eval_ids
    for seq in small_dataset.sequences:
        for rec in dataio.read_container(small_dataset.root / seq.filename):
            assert rec.sequence_id == seq.sequence_id


def test_too_few_sequences_rejected(tmp_path):
    with pytest.raises(ValueError):
        dataio.build_synthetic_dataset(seed=0, out_dir=tmp_path, n_sequences=2)


def test_dataset_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    dataio.build_synthetic_dataset(seed=9, out_dir=a, n_sequences=3, frames_per_seq=2)
    dataio.build_synthetic_dataset(seed=9, out_dir=b, n_sequences=3, frames_per_seq=2)
    for name in sorted(p.name for p in a.iterdir()):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_train_statistics_normalize_train_split(small_dataset):
    x, _ = dataio.load_split(small_dataset, "train", "ra", "polar")
    assert abs(float(x.mean())) < 1e-3
    assert abs(float(x.std()) - 1.0) < 1e-3


def test_load_split_shapes(small_dataset):
    x, y = dataio.load_split(small_dataset, "eval", "ra", "cartesian")
    # cross-domain pairing: polar input with Cartesian labels
    assert x.shape == (8, 128, 48, 1)
    assert y.shape == (8, 128, 128)
    x2, y2 = dataio.load_split(small_dataset, "eval", "rad", "polar")
    assert x2.shape == (8, 128, 48, 64)
    assert y2.shape == (8, 128, 48)
    x3, _ = dataio.load_split(small_dataset, "eval", "doa", "cartesian")
    assert x3.shape == (8, 128, 128, 1)


def test_batch_iter_sizes_and_determinism(small_dataset):
    batches = list(dataio.batch_iter(small_dataset, "eval", "ra", "polar", 3, shuffle_seed=4))
    assert [len(b[0]) for b in batches] == [3, 3, 2]
    again = list(dataio.batch_iter(small_dataset, "eval", "ra", "polar", 3, shuffle_seed=4))
    for (xa, ya), (xb, yb) in zip(batches, again):
        assert np.array_equal(xa, xb)
        assert np.array_equal(ya, yb)


def test_batch_iter_different_seed_changes_order(small_dataset):
    a = np.concatenate([b[1] for b in dataio.batch_iter(small_dataset, "eval", "ra", "polar", 8, shuffle_seed=1)])
    b = np.concatenate([b[1] for b in dataio.batch_iter(small_dataset, "eval", "ra", "polar", 8, shuffle_seed=2)])
    # same multiset of frames, typically different order
    assert sorted(m.tobytes() for m in a) == sorted(m.tobytes() for m in b)
