"""Length-of-stay prediction: a small deep-learning engine plus the
data tooling and experiment harness around it."""

from . import data, evaluation, nn, studies, tensor, train, zoo

__version__ = "0.1.0"

__all__ = ["data", "evaluation", "nn", "studies", "tensor", "train", "zoo", "__version__"]
