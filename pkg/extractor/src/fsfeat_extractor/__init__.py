"""Export frozen convolutional embeddings of image folders into FSFEAT01
feature stores consumable by the episodic engine."""

from .backbone import BACKBONES, create_checkpoint, feature_width, load_backbone
from .extract import ExtractionConfig, ExtractionSummary, extract

__version__ = "0.1.0"
