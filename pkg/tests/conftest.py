import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from segsynth.bundle_io import write_image, write_tensor


def write_manifest(bundle_dir, manifest):
    (Path(bundle_dir) / "manifest.json").write_text(json.dumps(manifest, indent=1))


def make_bundle(bundle_dir, image_id="img0000", prompt="a photo of a dog",
                layers=((16, 2, 8), (32, 2, 8)), image_size=(96, 96),
                tokens=(("dog", 12),), rng=None, image=None, cross_maps=None):
    """Write a small synthetic bundle: (res, heads, dim) layer specs,
    random features/maps unless given explicitly."""
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)
    rng = rng or np.random.default_rng(0)

    if image is None:
        image = rng.integers(0, 256, size=(image_size[1], image_size[0], 3), dtype=np.uint8)
    write_image(bundle_dir / "image.png", image)

    layer_entries = []
    for i, (res, heads, dim) in enumerate(layers):
        name = f"up_{res}_{i}"
        fname = f"self_{name}.atsb"
        feats = rng.standard_normal((heads, res * res, dim)).astype(np.float32)
        write_tensor(bundle_dir / fname, feats.shape, feats)
        layer_entries.append({
            "name": name, "resolution": res, "heads": heads,
            "feature_dim": dim, "tensor_file": fname,
        })

    token_entries = [{"token_text": "<sot>", "class_id": "sot"}]
    token_entries += [{"token_text": t, "class_id": cid} for t, cid in tokens]
    n_tokens = len(token_entries)
    if cross_maps is None:
        cross_maps = rng.random((n_tokens, 64, 64)).astype(np.float32)
    write_tensor(bundle_dir / "cross.atsb", cross_maps.shape, cross_maps)

    write_manifest(bundle_dir, {
        "image_id": image_id,
        "prompt": prompt,
        "image_file": "image.png",
        "image_size": list(image_size),
        "latent_resolution": 64,
        "self_attention_layers": layer_entries,
        "cross_attention": {
            "tokens": token_entries,
            "resolution": 64,
            "tensor_file": "cross.atsb",
        },
    })
    return bundle_dir


def square_mask_64(y0=16, y1=48, x0=16, x1=48):
    m = np.zeros((64, 64), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def make_square_bundle(bundle_dir, image_id="sq0000", image_px=128, noise=0.0):
    """Bundle whose heads cleanly separate a centered square "object".

    Two layers (16 and 32); in every head, pixels inside the square share
    one feature vector and the rest another. Cross-attention: "dog" matches
    the square, SoT the complement. Image: white square on dark gray.
    """
    rng = np.random.default_rng(7)
    square64 = square_mask_64()

    layer_specs = ((16, 2, 8), (32, 2, 8))
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)

    layer_entries = []
    for i, (res, heads, dim) in enumerate(layer_specs):
        scale = 64 // res
        sq = square64[::scale, ::scale]  # square is grid-aligned at 16/32/64
        feats = np.empty((heads, res * res, dim), dtype=np.float32)
        for h in range(heads):
            a = rng.standard_normal(dim)
            b = rng.standard_normal(dim)
            f = np.where(sq.reshape(-1, 1), a, b)
            if noise:
                f = f + noise * rng.standard_normal(f.shape)
            feats[h] = f
        name = f"up_{res}_{i}"
        fname = f"self_{name}.atsb"
        write_tensor(bundle_dir / fname, feats.shape, feats)
        layer_entries.append({
            "name": name, "resolution": res, "heads": heads,
            "feature_dim": dim, "tensor_file": fname,
        })

    cross = np.zeros((2, 64, 64), dtype=np.float32)
    cross[0][~square64] = 1.0   # SoT lights up the background
    cross[1][square64] = 1.0    # "dog" lights up the square
    write_tensor(bundle_dir / "cross.atsb", cross.shape, cross)

    scale = image_px // 64
    image = np.full((image_px, image_px, 3), 40, dtype=np.uint8)
    sq_img = np.kron(square64, np.ones((scale, scale), dtype=bool))
    image[sq_img] = 230
    write_image(bundle_dir / "image.png", image)

    write_manifest(bundle_dir, {
        "image_id": image_id,
        "prompt": "a dog in an empty room",
        "image_file": "image.png",
        "image_size": [image_px, image_px],
        "latent_resolution": 64,
        "self_attention_layers": layer_entries,
        "cross_attention": {
            "tokens": [
                {"token_text": "<sot>", "class_id": "sot"},
                {"token_text": "dog", "class_id": 12},
            ],
            "resolution": 64,
            "tensor_file": "cross.atsb",
        },
    })
    return bundle_dir


@pytest.fixture
def bundle_dir(tmp_path):
    return make_bundle(tmp_path / "bundle")


@pytest.fixture
def square_bundle_dir(tmp_path):
    return make_square_bundle(tmp_path / "square")
