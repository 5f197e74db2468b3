import pytest
import torch

from multirobust.data import (
    batch_indices,
    load_raw,
    make_blobs,
    make_moons,
    read_tensor,
    save_raw,
    write_tensor,
)


class TestSynthetic:
    def test_blobs_deterministic_by_seed(self):
        a = make_blobs(32, 16, 1, 8, 8, classes=4, seed=5)
        b = make_blobs(32, 16, 1, 8, 8, classes=4, seed=5)
        assert torch.equal(a.train_x, b.train_x)
        assert torch.equal(a.train_y, b.train_y)
        c = make_blobs(32, 16, 1, 8, 8, classes=4, seed=6)
        assert not torch.equal(a.train_x, c.train_x)

    def test_blobs_range_and_shapes(self):
        ds = make_blobs(40, 20, 3, 16, 16, classes=10, seed=0)
        assert ds.train_x.shape == (40, 3, 16, 16)
        assert ds.test_x.shape == (20, 3, 16, 16)
        assert ds.train_x.min() >= 0 and ds.train_x.max() <= 1
        assert ds.classes == 10 and ds.input_dim == 3 * 16 * 16
        assert set(ds.train_y.tolist()) == set(range(10))

    def test_moons_two_classes(self):
        ds = make_moons(64, 32, 1, 16, 16, seed=1)
        assert ds.classes == 2
        assert set(ds.train_y.tolist()) == {0, 1}
        assert ds.train_x.min() >= 0 and ds.train_x.max() <= 1


class TestBatchIndices:
    def test_covers_every_example_once(self):
        batches = batch_indices(512, 64, seed=3, epoch=0)
        seen = torch.cat(batches)
        assert len(batches) == 8
        assert sorted(seen.tolist()) == list(range(512))

    def test_partial_final_batch(self):
        batches = batch_indices(70, 32, seed=0, epoch=0)
        assert [len(b) for b in batches] == [32, 32, 6]

    def test_epoch_changes_order(self):
        a = batch_indices(64, 64, seed=0, epoch=0)[0]
        b = batch_indices(64, 64, seed=0, epoch=1)[0]
        assert not torch.equal(a, b)

    def test_deterministic(self):
        a = batch_indices(64, 16, seed=9, epoch=2)
        b = batch_indices(64, 16, seed=9, epoch=2)
        assert all(torch.equal(x, y) for x, y in zip(a, b))

    def test_invalid_batch_size(self):
        with pytest.raises(ValueError):
            batch_indices(10, 0, seed=0, epoch=0)


class TestRawFormat:
    def test_round_trip(self, tmp_path):
        t = torch.rand(5, 3, 4, 4)
        write_tensor(tmp_path / "t.mngt", t)
        back = read_tensor(tmp_path / "t.mngt")
        assert torch.equal(t, back)

    def test_int64_round_trip(self, tmp_path):
        t = torch.tensor([1, 5, 9], dtype=torch.int64)
        write_tensor(tmp_path / "y.mngt", t)
        assert torch.equal(read_tensor(tmp_path / "y.mngt"), t)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.mngt"
        write_tensor(path, torch.rand(4, 3, 2, 2))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="payload"):
            read_tensor(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "t.mngt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            read_tensor(path)

    def test_dataset_round_trip(self, tmp_path):
        ds = make_blobs(16, 8, 1, 8, 8, classes=3, seed=0)
        save_raw(tmp_path / "ds", ds)
        back = load_raw(tmp_path / "ds")
        assert torch.equal(back.train_x, ds.train_x)
        assert torch.equal(back.test_y, ds.test_y)
        assert back.classes == 3

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_raw(tmp_path / "nowhere")
