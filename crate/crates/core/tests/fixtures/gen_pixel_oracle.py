"""Reference values for resizing, LAB conversion and SSIM.

Usage: python gen_pixel_oracle.py OUT_DIR
Writes pixel_a.png, pixel_b.png and pixel_oracle.json into OUT_DIR.
"""
import json
import math
import sys
from pathlib import Path

import numpy as np
from PIL import Image
from skimage.color import rgb2lab
from skimage.metrics import structural_similarity

W, H = 100, 80


def make(phase):
    y, x = np.mgrid[0:H, 0:W]
    r = 127.5 + 127.5 * np.sin(0.11 * x + phase) * np.cos(0.07 * y)
    g = 255.0 * ((x + 2 * y + int(phase * 10)) % 37) / 36.0
    b = 255.0 * (((x // 9) + (y // 7)) % 2) * 0.8 + 20.0
    return np.clip(np.stack([r, g, b], -1), 0, 255).round().astype(np.uint8)


def lin(v):
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def luma(img):
    f = lin(img.astype(np.float64) / 255.0)
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


def resize_float(img, size):
    chans = []
    for c in range(3):
        ch = Image.fromarray(img[..., c].astype(np.float32) / 255.0, mode="F")
        chans.append(np.asarray(ch.resize((size, size), Image.BILINEAR)))
    return np.stack(chans, -1)


def main():
    out = Path(sys.argv[1])
    a, b = make(0.0), make(1.3)
    Image.fromarray(a).save(out / "pixel_a.png")
    Image.fromarray(b).save(out / "pixel_b.png")
    ra = resize_float(a, 64)
    lab = rgb2lab(a.astype(np.float64) / 255.0)
    ga, gb = luma(a), luma(b)
    ssim = structural_similarity(ga, gb, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0)
    idx = [(k * 977) % (64 * 64 * 3) for k in range(64)]
    lab_idx = [(k * 1231) % (W * H * 3) for k in range(64)]
    res = {
        "resize64_index": idx,
        "resize64_value": [float(ra.reshape(-1)[i]) for i in idx],
        "lab_index": lab_idx,
        "lab_value": [float(lab.reshape(-1)[i]) for i in lab_idx],
        "ssim_luma": float(ssim),
        "mse_srgb": float(np.mean((a / 255.0 - b / 255.0) ** 2)),
        "mse_lab": float(np.mean((lab - rgb2lab(b / 255.0)) ** 2)),
    }
    (out / "pixel_oracle.json").write_text(json.dumps(res, indent=1) + "\n")


if __name__ == "__main__":
    main()
