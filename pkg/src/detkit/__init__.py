"""Object-detection pipeline toolkit: augmentation, datasets, metrics, topology, optimizer math."""

__version__ = "0.1.0"
