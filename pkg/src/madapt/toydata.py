"""Procedural toy corpus: smooth "photo-like" contents and textured styles."""

import os

import numpy as np

from .image_io import ImageBuffer, save_image


def _grid(size):
    y, x = np.mgrid[0:size, 0:size] / (size - 1)
    return y, x


def content_image(index, size=96, rng=None):
    """Gradient background with a few flat-colored shapes."""
    rng = rng if rng is not None else np.random.default_rng(index)
    y, x = _grid(size)
    c0, c1 = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 3)
    t = (x + y) / 2 if index % 2 else y
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]
    for _ in range(3):
        color = rng.uniform(0, 1, 3)
        cy, cx = rng.uniform(0.2, 0.8, 2)
        r = rng.uniform(0.1, 0.25)
        if rng.random() < 0.5:
            mask = (y - cy) ** 2 + (x - cx) ** 2 < r * r
        else:
            mask = (abs(y - cy) < r) & (abs(x - cx) < r * 0.7)
        img[mask] = color
    return ImageBuffer(np.round(img * 255))


def style_image(index, size=96, rng=None):
    """Periodic textures (stripes, checks, rings, waves) in two colors."""
    rng = rng if rng is not None else np.random.default_rng(1000 + index)
    y, x = _grid(size)
    freq = rng.uniform(4, 9)
    kind = index % 4
    if kind == 0:
        t = np.sin(2 * np.pi * freq * (x * 0.8 + y * 0.6))
    elif kind == 1:
        t = np.sign(np.sin(2 * np.pi * freq * x) * np.sin(2 * np.pi * freq * y))
    elif kind == 2:
        t = np.sin(2 * np.pi * freq * np.hypot(x - 0.5, y - 0.5))
    else:
        t = np.sin(2 * np.pi * freq * x + 3 * np.sin(2 * np.pi * 2 * y))
    t = (t + 1) / 2
    a, b = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    img = a * t[..., None] + b * (1 - t[..., None])
    img += rng.normal(0, 0.03, img.shape)
    return ImageBuffer(np.round(np.clip(img, 0, 1) * 255))


def write_toy_corpus(root, n_content=4, n_style=4, size=96, seed=0):
    """Write ``root/content/*.ppm`` and ``root/style/*.ppm``; returns both dirs."""
    rng = np.random.default_rng(seed)
    content_dir = os.path.join(root, "content")
    style_dir = os.path.join(root, "style")
    os.makedirs(content_dir, exist_ok=True)
    os.makedirs(style_dir, exist_ok=True)
    for i in range(n_content):
        save_image(content_image(i, size, rng), os.path.join(content_dir, f"content_{i}.ppm"))
    for i in range(n_style):
        save_image(style_image(i, size, rng), os.path.join(style_dir, f"style_{i}.ppm"))
    return content_dir, style_dir
