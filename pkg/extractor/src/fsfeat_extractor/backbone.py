"""Frozen convolutional backbones and their checkpoints.

A backbone maps a batch of RGB images to penultimate-layer embeddings
(pre-classifier, pre-normalization). Weights always come from an explicit
checkpoint file; `create_checkpoint` writes a deterministically seeded one
for workflows without a trained model at hand.
"""

from __future__ import annotations

import torch
import torch.nn as nn
from torchvision.models import resnet18


class SmallConv(nn.Module):
    """Three strided conv blocks with global average pooling; width 64."""

    feature_width = 64

    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )

    def forward(self, x):
        return self.features(x).flatten(1)


class ResNet18Features(nn.Module):
    """torchvision resnet18 with the classifier head removed; width 512."""

    feature_width = 512

    def __init__(self):
        super().__init__()
        net = resnet18(weights=None)
        net.fc = nn.Identity()
        self.net = net

    def forward(self, x):
        return self.net(x)


BACKBONES = {
    "smallconv": SmallConv,
    "resnet18": ResNet18Features,
}


def feature_width(name: str) -> int:
    return _backbone_class(name).feature_width


def _backbone_class(name: str):
    try:
        return BACKBONES[name]
    except KeyError:
        raise ValueError(
            f"unknown backbone {name!r}; available: {sorted(BACKBONES)}"
        ) from None


def create_checkpoint(name: str, path, seed: int = 0) -> None:
    """Write a checkpoint with seeded random weights for `name`."""
    torch.manual_seed(seed)
    model = _backbone_class(name)()
    torch.save({"backbone": name, "state_dict": model.state_dict()}, path)


def load_backbone(name: str, weights_path) -> nn.Module:
    """Instantiate `name` and load its weights; the model comes back frozen
    (eval mode, gradients off). A missing or mismatched checkpoint is fatal."""
    model = _backbone_class(name)()
    payload = torch.load(weights_path, map_location="cpu", weights_only=True)
    if payload.get("backbone") != name:
        raise ValueError(
            f"checkpoint {weights_path} was written for backbone "
            f"{payload.get('backbone')!r}, not {name!r}"
        )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
