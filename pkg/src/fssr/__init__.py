"""Frequency-separated training for real-world single-image super-resolution.

The package provides the full desk-scale pipeline: frequency separation
kernels, bicubic downscaling, corruption simulators, the downsampling
domain-translation GAN, the frequency-separated SR trainer, dataset
builders with persistent manifests, evaluation metrics, and a CLI.
"""

__version__ = "0.1.0"
