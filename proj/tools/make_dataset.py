#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Builds the desk-scale natural-image data set used by the tests.

Sources are the sample photographs bundled with scikit-image and
scikit-learn. Every photo is box-downscaled by 2 to suppress sensor noise and
compression artifacts. Color photos contribute one held-out 128x128 test
image taken from their right edge; corpus tiles come only from columns left
of that region (with a gap), so test pixels never appear in the corpus.

Usage: make_dataset.py OUT_DIR   (writes OUT_DIR/corpus/*.ppm, OUT_DIR/test/*.ppm)
"""

import sys
from pathlib import Path

import numpy as np
import skimage.data as skd
from sklearn.datasets import load_sample_images

TILE = 80
MAX_TILES = 20  # per source photo, evenly spaced
TEST = 128
GAP = 8


def downscale2(img):
    img = img.astype(np.float64)
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2]) / 4.0


def to_u8(img):
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def write_pnm(path, img):
    img = to_u8(img)
    if img.ndim == 2:
        header = b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    else:
        header = b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    path.write_bytes(header + img.tobytes())


def tiles(img, limit_cols):
    h = img.shape[0]
    out = []
    for top in range(0, h - TILE + 1, TILE):
        for left in range(0, limit_cols - TILE + 1, TILE):
            out.append(img[top:top + TILE, left:left + TILE])
    if len(out) > MAX_TILES:
        keep = np.linspace(0, len(out) - 1, MAX_TILES).round().astype(int)
        out = [out[i] for i in keep]
    return out


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    (out / "corpus").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(parents=True, exist_ok=True)

    sk_samples = load_sample_images().images
    held_out = {
        "astronaut": skd.astronaut(),
        "coffee": skd.coffee(),
        "chelsea": skd.chelsea(),
        "rocket": skd.rocket(),
        "china": sk_samples[0],
        "flower": sk_samples[1],
    }
    corpus_only = {
        "hubble": skd.hubble_deep_field(),
        "immuno": skd.immunohistochemistry(),
        "retina": skd.retina(),
        "camera": skd.camera(),
        "brick": skd.brick(),
        "grass": skd.grass(),
        "gravel": skd.gravel(),
        "moon": skd.moon(),
        "coins": skd.coins(),
        "clock": skd.clock(),
    }

    count = 0
    for name, photo in held_out.items():
        img = downscale2(photo)
        h, w = img.shape[:2]
        top = (h - TEST) // 2
        write_pnm(out / "test" / f"{name}.ppm", img[top:top + TEST, w - TEST:])
        for k, tile in enumerate(tiles(img, w - TEST - GAP)):
            write_pnm(out / "corpus" / f"{name}_{k:03d}.ppm", tile)
            count += 1
    for name, photo in corpus_only.items():
        img = downscale2(photo)
        ext = "ppm" if img.ndim == 3 else "pgm"
        for k, tile in enumerate(tiles(img, img.shape[1])):
            write_pnm(out / "corpus" / f"{name}_{k:03d}.{ext}", tile)
            count += 1
    print(f"{count} corpus tiles, {len(held_out)} test images -> {out}")


if __name__ == "__main__":
    main()
