import numpy as np
from scipy.ndimage import gaussian_filter


def smooth_corpus(n, size, seed):
    """Small clean test images: smooth fields with mild structure."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
        base = 0.35 + 0.25 * rng.random() + 0.2 * (rng.random() - 0.5) * (yy + xx)
        img = np.stack([base + 0.05 * rng.standard_normal() for _ in range(3)], axis=-1)
        field = gaussian_filter(rng.standard_normal((size, size, 3)), (size / 24, size / 24, 0))
        img = img + 0.35 * field
        images.append(np.clip(img, 0.05, 0.95))
    return images
