import numpy as np
import pytest
import torch
import torchvision
from PIL import Image


def _fresh_model(classes=27):
    torch.manual_seed(1234)
    model = torchvision.models.resnet50(weights=None)
    model.fc = torch.nn.Linear(model.fc.in_features, classes)
    return model


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A randomly initialized but fully saved 27-way state dict; stands in
    for a user-supplied fine-tuned checkpoint."""
    path = tmp_path_factory.mktemp("ckpt") / "resnet50_27way.pt"
    torch.save(_fresh_model().state_dict(), path)
    return path


@pytest.fixture(scope="session")
def images_dir(tmp_path_factory):
    """Ten decodable images (mixed sizes/formats, one nested), one corrupt
    .png, and one non-image file."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(99)
    sizes = [(64, 48), (128, 96), (200, 200), (320, 240), (90, 150),
             (224, 224), (45, 45), (300, 100), (77, 133)]
    for i, size in enumerate(sizes):
        pixels = rng.integers(0, 256, (size[1], size[0], 3), dtype=np.uint8)
        suffix = "jpg" if i in (3, 6) else "png"
        Image.fromarray(pixels).save(root / f"img{i}.{suffix}")
    (root / "nested").mkdir()
    pixels = rng.integers(0, 256, (60, 80, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(root / "nested" / "img9.png")

    (root / "broken.png").write_bytes(b"this is not an image")
    (root / "notes.txt").write_text("not scanned at all")
    return root


@pytest.fixture(scope="session")
def expected_ids(images_dir):
    return tuple(sorted(
        p.relative_to(images_dir).as_posix()
        for p in images_dir.rglob("img*")))
