import pytest
import torch
from PIL import Image

from covertsem._data import (
    LabeledImages,
    SplitSpec,
    load_dataset,
    make_synthetic_dataset,
    read_image_folder,
    split_dataset,
    write_image_folder,
)
from covertsem._errors import EmptyDataset, MissingLabels


class TestSyntheticDataset:
    def test_shapes_labels_and_range(self, tiny_dataset):
        assert tiny_dataset.images.shape == (24, 3, 16, 16)
        assert tiny_dataset.labels.tolist() == [0] * 8 + [1] * 8 + [2] * 8
        assert tiny_dataset.identities == ["id_000", "id_001", "id_002"]
        assert tiny_dataset.images.min() >= 0 and tiny_dataset.images.max() <= 1

    def test_is_deterministic(self):
        a = make_synthetic_dataset(2, 3, (1, 8, 8), torch.Generator().manual_seed(9))
        b = make_synthetic_dataset(2, 3, (1, 8, 8), torch.Generator().manual_seed(9))
        assert torch.equal(a.images, b.images)

    def test_identities_are_separable(self, tiny_dataset):
        x = tiny_dataset.images.flatten(1)
        centroids = torch.stack([x[tiny_dataset.labels == i].mean(0) for i in range(3)])
        nearest = torch.cdist(x, centroids).argmin(dim=1)
        assert torch.equal(nearest, tiny_dataset.labels)


class TestSplit:
    @pytest.mark.parametrize("n,expected", [(15, 1), (30, 2), (150, 10), (7, 0)])
    def test_default_ratio(self, n, expected):
        assert SplitSpec().test_size(n) == expected

    def test_split_is_disjoint_and_deterministic(self, tiny_dataset):
        split = SplitSpec(train_parts=3, test_parts=1)
        train, test = split_dataset(tiny_dataset, split, torch.Generator().manual_seed(2))
        again, _ = split_dataset(tiny_dataset, split, torch.Generator().manual_seed(2))
        assert len(train) == 18 and len(test) == 6
        assert torch.equal(train.images, again.images)
        train_rows = {tuple(row.tolist()) for row in train.images.flatten(1)}
        assert not any(tuple(row.tolist()) in train_rows for row in test.images.flatten(1))

    def test_subset_keeps_identities(self, tiny_dataset):
        subset = tiny_dataset.subset(torch.tensor([0, 9]))
        assert isinstance(subset, LabeledImages)
        assert subset.labels.tolist() == [0, 1]
        assert subset.identities is tiny_dataset.identities


class TestImageFolder:
    def test_write_then_read(self, tmp_path, tiny_dataset):
        root = write_image_folder(tiny_dataset, tmp_path / "faces")
        loaded = read_image_folder(root, (3, 16, 16))
        assert loaded.identities == tiny_dataset.identities
        assert torch.equal(loaded.labels, tiny_dataset.labels)
        # PNG quantises to 8 bits
        assert (loaded.images - tiny_dataset.images).abs().max() <= 1 / 255 + 1e-6

    def test_resizes_and_converts(self, tmp_path):
        folder = tmp_path / "alice"
        folder.mkdir()
        Image.new("RGB", (40, 30), color=(255, 0, 0)).save(folder / "a.jpg")
        loaded = read_image_folder(tmp_path, (1, 8, 8))
        assert loaded.images.shape == (1, 1, 8, 8)

    def test_loose_images_raise(self, tmp_path):
        Image.new("RGB", (8, 8)).save(tmp_path / "unlabelled.png")
        with pytest.raises(MissingLabels):
            read_image_folder(tmp_path, (3, 8, 8))

    def test_missing_directory_raises(self, tmp_path):
        with pytest.raises(EmptyDataset):
            read_image_folder(tmp_path / "nope", (3, 8, 8))

    def test_no_images_raise(self, tmp_path):
        (tmp_path / "bob").mkdir()
        (tmp_path / "bob" / "notes.txt").write_text("hello")
        with pytest.raises(EmptyDataset):
            read_image_folder(tmp_path, (3, 8, 8))

    def test_load_dataset(self, tmp_path, tiny_dataset):
        write_image_folder(tiny_dataset, tmp_path)
        train, test, identities = load_dataset(
            tmp_path, (3, 16, 16), SplitSpec(5, 1), torch.Generator().manual_seed(0)
        )
        assert identities == tiny_dataset.identities
        assert len(train) + len(test) == len(tiny_dataset)
        assert len(test) == 4
