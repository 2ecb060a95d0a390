"""Image decoding and network input preparation.

Inputs are resized to 224x224, converted from RGB to BGR, and each color
channel is zero-centered at the standard ImageNet channel means (BGR order,
0..255 pixel scale, no rescaling). The means are a configuration default for
pretrained backbones, not a learned quantity.
"""

import numpy as np
from PIL import Image

INPUT_SIZE = 224

# ImageNet channel means in BGR order ("caffe"-style preprocessing)
BGR_CHANNEL_MEANS = np.array([103.939, 116.779, 123.68], dtype=np.float32)


def image_tensor(path):
    """Decode one image into a (3, 224, 224) float32 array, BGR, zero-centered.

    Raises OSError (including PIL.UnidentifiedImageError) or ValueError when
    the file cannot be decoded; callers decide whether to skip.
    """
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((INPUT_SIZE, INPUT_SIZE),
                                        Image.Resampling.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32)
    bgr = arr[:, :, ::-1] - BGR_CHANNEL_MEANS
    return np.ascontiguousarray(bgr.transpose(2, 0, 1))
