"""Image-to-embedding extraction for the oodbench container format."""

from .errors import ExtractError
from .extract import (
    IMAGE_SUFFIXES,
    ExtractionJob,
    ExtractionResult,
    find_images,
    run_extraction,
)
from .model import DEFAULT_CLASSES, EMBEDDING_DIM, build_model, embed_batch
from .preprocess import BGR_CHANNEL_MEANS, INPUT_SIZE, image_tensor

__version__ = "0.1.0"
