"""Regenerate conformance_vectors.json from the documented mock algorithms.

Independent of the Rust code: hashing, the mock edit and the mock embedding
are re-derived here from their written descriptions.

    python3 gen_conformance.py > conformance_vectors.json
"""
import hashlib
import json
import struct

import numpy as np

M64 = (1 << 64) - 1


def mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def fnv(data, state=0xCBF29CE484222325):
    for b in data:
        state = ((state ^ b) * 0x100000001B3) & M64
    return state


def stable_hash(instruction, seed):
    raw = instruction.encode()
    data = struct.pack("<Q", len(raw)) + raw + struct.pack("<Q", seed)
    return mix(fnv(data))


class SplitMix64:
    def __init__(self, seed):
        self.s = seed

    def next(self):
        self.s = (self.s + 0x9E3779B97F4A7C15) & M64
        return mix(self.s)

    def unit(self):
        return (self.next() >> 11) * (1.0 / (1 << 53))


def pattern(w, h, a, b, k):
    y, x, c = np.meshgrid(np.arange(h), np.arange(w), np.arange(3), indexing="ij")
    return ((x * a + y * b + c * k) % 256).astype(np.uint8)


def mock_edit(rgb8, instruction, seed):
    g = SplitMix64(stable_hash(instruction, seed))
    scale, offset = [], []
    for _ in range(3):
        scale.append((6 + g.next() % 9) / 10.0)
        offset.append(((g.next() % 9) - 4.0) / 20.0)
    v = rgb8.astype(np.float64) / 255.0
    out = np.clip(v * np.array(scale) + np.array(offset), 0.0, 1.0)
    return np.round(out * 255.0).astype(np.uint8), scale, offset


def mock_embed(rgb8):
    h, w, _ = rgb8.shape
    v = rgb8.astype(np.float64) / 255.0
    sums = np.zeros((8, 8, 3))
    counts = np.zeros((8, 8))
    for y in range(h):
        for x in range(w):
            cy, cx = y * 8 // h, x * 8 // w
            sums[cy, cx] += v[y, x]
            counts[cy, cx] += 1
    feats = []
    for cy in range(8):
        for cx in range(8):
            for c in range(3):
                n = counts[cy, cx]
                feats.append(sums[cy, cx, c] / n - 0.5 if n else 0.0)
    feats.append(1.0)
    g = SplitMix64(0x6A09E667F3BCC908)
    proj = np.array([2.0 * g.unit() - 1.0 for _ in range(384 * 193)]).reshape(384, 193)
    out = proj @ np.array(feats)
    return out / np.linalg.norm(out)


CASES = [
    (4, 4, 17, 29, 5, "A transformed version of image into sunset", 0),
    (4, 4, 17, 29, 5, "A transformed version of image into sunset", 1),
    (8, 6, 31, 7, 11, "A transformed version of image into autumn", 42),
    (16, 16, 3, 5, 101, "A transformed version of image into snowy", 7),
    (5, 9, 53, 19, 2, "A transformed version of image into watercolor art", 123456789),
    (32, 24, 9, 13, 77, "A transformed version of image into mosaic", 2**63),
    (1, 1, 0, 0, 128, "A transformed version of image into rainbow", 3),
    (12, 3, 21, 85, 40, "A transformed version of image into cartoon style", 99),
    (7, 7, 255, 1, 1, "A transformed version of image into graffiti", 18446744073709551615),
    (64, 64, 4, 4, 64, "A transformed version of image into aurora", 2024),
]

vectors = []
for w, h, a, b, k, instruction, seed in CASES:
    src = pattern(w, h, a, b, k)
    out, scale, offset = mock_edit(src, instruction, seed)
    emb = mock_embed(src)
    vectors.append(
        {
            "width": w,
            "height": h,
            "pattern": [a, b, k],
            "instruction": instruction,
            "seed": seed,
            "scale": scale,
            "offset": offset,
            "edited_rgb8_sha256": hashlib.sha256(out.tobytes()).hexdigest(),
            "embed_head": [float(x) for x in emb[:8]],
        }
    )
print(json.dumps({"pattern": "((x * a + y * b + c * k) mod 256) / 255", "vectors": vectors}, indent=2))
