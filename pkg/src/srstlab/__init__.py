"""srstlab: a desk-scale laboratory for semi-supervised adversarial
training.

The pieces compose bottom-up: diffcore (numpy reverse-mode autodiff and
small dense score networks), losses (the training risks), attacks
(bounded perturbation search), oracle (exact risk accounting on finite
instances), teacher (semi-supervised teachers and frozen soft labels),
trainer (the shared student loop), harness (datasets, evaluation,
presets, CLI).
"""

from . import attacks, diffcore, losses, oracle, streams, teacher, trainer
from .attacks import AttackConfig
from .losses import AWRConfig, TeacherOutputs
from .trainer import TrainConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "attacks", "diffcore", "losses", "oracle", "streams", "teacher", "trainer",
    "AttackConfig", "AWRConfig", "TeacherOutputs", "TrainConfig", "run_training",
    "__version__",
]
