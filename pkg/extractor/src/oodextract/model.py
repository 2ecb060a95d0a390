"""ResNet50 with a replaced classification head, split at the penultimate layer.

The embedding is the 2048-d global-average-pooled feature vector feeding the
final linear layer; the logits are that layer's output before softmax.
Inference always runs in evaluation mode on CPU with gradients off, so
repeated extraction of the same image is bit-identical.
"""

import torch
import torchvision

from .errors import ExtractError

EMBEDDING_DIM = 2048
DEFAULT_CLASSES = 27


def build_model(checkpoint=None, classes=DEFAULT_CLASSES):
    """A ResNet50 with a `classes`-way head, in eval mode.

    With a checkpoint path, the state dict must fit the architecture exactly
    (that is how head/dimension mismatches surface). Without one, ImageNet
    backbone weights are fetched through torchvision and the head is seeded
    deterministically; useful only for smoke runs, since an untrained head
    emits arbitrary logits.
    """
    torch.manual_seed(0)
    if checkpoint is not None:
        model = torchvision.models.resnet50(weights=None)
        model.fc = torch.nn.Linear(model.fc.in_features, classes)
        state = torch.load(checkpoint, map_location="cpu", weights_only=True)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        try:
            model.load_state_dict(state)
        except RuntimeError as err:
            raise ExtractError(
                f"checkpoint {checkpoint} does not fit a {classes}-way "
                f"ResNet50: {err}") from err
    else:
        try:
            model = torchvision.models.resnet50(
                weights=torchvision.models.ResNet50_Weights.IMAGENET1K_V2)
        except Exception as err:
            raise ExtractError(
                "no checkpoint given and pretrained backbone weights are "
                f"unavailable ({err}); pass --checkpoint") from err
        model.fc = torch.nn.Linear(model.fc.in_features, classes)
    model.eval()
    return model


@torch.no_grad()
def embed_batch(model, batch):
    """Embeddings and logits for one preprocessed batch.

    Mirrors torchvision's forward pass but taps the flattened pooled features
    before the final linear layer. Returns two float32 numpy arrays of shape
    (n, 2048) and (n, classes).
    """
    x = torch.from_numpy(batch)
    x = model.conv1(x)
    x = model.bn1(x)
    x = model.relu(x)
    x = model.maxpool(x)
    x = model.layer1(x)
    x = model.layer2(x)
    x = model.layer3(x)
    x = model.layer4(x)
    x = model.avgpool(x)
    features = torch.flatten(x, 1)
    logits = model.fc(features)
    return features.numpy(), logits.numpy()
