"""Synthetic navigation task: blob images with centroid-offset targets.

Stands in for the flight simulator: each sample is three 50x50 frames
concatenated to one 50x150 grayscale image containing a handful of bright
Gaussian blobs over low background noise.  The target action is the
intensity-weighted centroid offset from the image center, per axis,
normalized to [-1, 1].  Deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SyntheticTask:
    seed: int = 0
    frame_hw: tuple = (50, 50)
    frames: int = 3
    blobs_per_frame: int = 2
    noise: float = 0.05

    @property
    def image_hw(self):
        h, w = self.frame_hw
        return (h, w * self.frames)

    def sample(self, count, offset=0):
        """Deterministic batch ``offset`` sequencing: images, targets."""
        h, w = self.frame_hw
        rng = np.random.default_rng((self.seed, offset))
        images = np.zeros((count, h, w * self.frames), dtype=np.float64)
        ys, xs = np.mgrid[0:h, 0:w]
        for i in range(count):
            for f in range(self.frames):
                frame = rng.uniform(0, self.noise, size=(h, w))
                for _ in range(self.blobs_per_frame):
                    cy, cx = rng.uniform(5, h - 5), rng.uniform(5, w - 5)
                    amp = rng.uniform(0.6, 1.0)
                    sig = rng.uniform(2.0, 5.0)
                    frame += amp * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sig**2))
                images[i, :, f * w : (f + 1) * w] = frame
        return images, self.targets(images)

    def targets(self, images):
        """Normalized intensity centroid offsets of the full image."""
        images = np.asarray(images, dtype=np.float64)
        h, w = images.shape[-2:]
        ys = np.arange(h)[:, None]
        xs = np.arange(w)[None, :]
        mass = images.sum(axis=(-2, -1))
        cy = (images * ys).sum(axis=(-2, -1)) / mass
        cx = (images * xs).sum(axis=(-2, -1)) / mass
        # offset from center, normalized so targets stay in [-1, 1]
        ty = (cy - (h - 1) / 2) / ((h - 1) / 2)
        tx = (cx - (w - 1) / 2) / ((w - 1) / 2)
        return np.stack([ty, tx], axis=-1)
