"""NumPy CNN engine for 5-class brain MRI classification.

ResNet-50 and MobileNetV2 backbones topped with a dense head, trained with
Adam on sparse categorical cross-entropy, plus the data pipeline around them.
"""
from .architectures import build_mobilenet_v2, build_model, build_resnet50, import_weights, model_summary
from .data import CLASS_NAMES
from .graph import NetworkGraph, forward

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "NetworkGraph",
    "build_mobilenet_v2",
    "build_model",
    "build_resnet50",
    "forward",
    "import_weights",
    "model_summary",
]
