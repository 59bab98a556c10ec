"""Image datasets with identity labels: folder ingestion, splitting and synthetic faces."""

import logging
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from PIL import Image
from torchvision import transforms
from torchvision.utils import save_image

from ._errors import EmptyDataset, MissingLabels

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


@dataclass
class LabeledImages:
    """Images ``(M, C, H, W)`` in [0, 1] with integer identity labels ``(M,)``."""

    images: torch.Tensor
    labels: torch.Tensor
    identities: list[str]

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, index: torch.Tensor) -> "LabeledImages":
        return LabeledImages(self.images[index], self.labels[index], self.identities)


@dataclass(frozen=True)
class SplitSpec:
    """Train:test ratio, 14:1 by default."""

    train_parts: int = 14
    test_parts: int = 1

    def test_size(self, n: int) -> int:
        return round(n * self.test_parts / (self.train_parts + self.test_parts))


def _is_image(path: Path) -> bool:
    return path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES


def read_image_folder(
    path: Path, shape: tuple[int, int, int]
) -> LabeledImages:
    """Reads a subfolder-per-identity directory into a :class:`LabeledImages`.

    Raises:
        MissingLabels: If images sit directly in ``path`` instead of identity folders.
        EmptyDataset: If no images are found.
    """
    path = Path(path)
    if not path.is_dir():
        raise EmptyDataset(f"Dataset directory {path} does not exist")
    loose = [p.name for p in path.iterdir() if _is_image(p)]
    if loose:
        raise MissingLabels(
            f"{len(loose)} images in {path} are not inside an identity folder, "
            f"e.g. {sorted(loose)[0]}"
        )

    c, h, w = shape
    mode = "L" if c == 1 else "RGB"
    to_tensor = transforms.Compose([transforms.Resize((h, w)), transforms.ToTensor()])
    images, labels, identities = [], [], []
    for folder in sorted(p for p in path.iterdir() if p.is_dir()):
        files = sorted(p for p in folder.iterdir() if _is_image(p))
        if not files:
            continue
        label = len(identities)
        identities.append(folder.name)
        for file in files:
            with Image.open(file) as img:
                images.append(to_tensor(img.convert(mode)))
            labels.append(label)
    if not images:
        raise EmptyDataset(f"No images found under {path}")
    logger.info("Loaded %d images of %d identities from %s", len(images), len(identities), path)
    return LabeledImages(torch.stack(images), torch.tensor(labels), identities)


def split_dataset(
    dataset: LabeledImages, split: SplitSpec, generator: torch.Generator
) -> tuple[LabeledImages, LabeledImages]:
    order = torch.randperm(len(dataset), generator=generator)
    n_test = split.test_size(len(dataset))
    test_idx = order[:n_test].sort().values
    train_idx = order[n_test:].sort().values
    return dataset.subset(train_idx), dataset.subset(test_idx)


def load_dataset(
    path: Path,
    shape: tuple[int, int, int],
    split: SplitSpec,
    generator: torch.Generator,
) -> tuple[LabeledImages, LabeledImages, list[str]]:
    """Loads, resizes and deterministically splits a labelled image folder.

    Returns:
        tuple: ``(train, test, identities)``.
    """
    dataset = read_image_folder(path, shape)
    train, test = split_dataset(dataset, split, generator)
    return train, test, dataset.identities


def make_synthetic_dataset(
    n_identities: int,
    per_identity: int,
    shape: tuple[int, int, int],
    generator: torch.Generator,
    noise: float = 0.03,
) -> LabeledImages:
    """Deterministic multi-identity images for tests and demos.

    Every identity is a smooth random prototype (a 4x4 pattern upsampled bilinearly);
    its images are small shifts of the prototype with brightness jitter and pixel noise.
    """
    c, h, w = shape
    coarse = 0.15 + 0.7 * torch.rand(n_identities, c, 4, 4, generator=generator)
    prototypes = F.interpolate(coarse, size=(h, w), mode="bilinear", align_corners=False)

    images, labels = [], []
    for label in range(n_identities):
        for _ in range(per_identity):
            dy, dx = torch.randint(-2, 3, (2,), generator=generator).tolist()
            img = torch.roll(prototypes[label], shifts=(dy, dx), dims=(1, 2))
            img = img * (0.9 + 0.2 * torch.rand((), generator=generator))
            img = img + noise * torch.randn(img.shape, generator=generator)
            images.append(img.clamp(0, 1))
            labels.append(label)
    return LabeledImages(
        torch.stack(images),
        torch.tensor(labels),
        [f"id_{i:03d}" for i in range(n_identities)],
    )


def write_image_folder(dataset: LabeledImages, root: Path) -> Path:
    """Writes ``dataset`` as ``root/<identity>/<index>.png``."""
    root = Path(root)
    for i, (img, label) in enumerate(zip(dataset.images, dataset.labels.tolist())):
        folder = root / dataset.identities[label]
        folder.mkdir(parents=True, exist_ok=True)
        save_image(img, folder / f"{i:05d}.png")
    return root
