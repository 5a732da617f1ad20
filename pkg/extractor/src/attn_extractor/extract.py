"""Batch extraction: one attention bundle directory per prompt."""

import json
from pathlib import Path

from PIL import Image

from .atsb import write_tensor
from .catalog import VOC_CLASSES, classes_in_prompt, ovam_token
from .config import ExtractorConfig
from .errors import ExtractorError, PromptFileMissing
from .synthetic import SyntheticBackend


def _make_backend(cfg: ExtractorConfig):
    if cfg.backend == "synthetic":
        return SyntheticBackend(cfg)
    if cfg.backend == "sd21":
        from .sd21 import StableDiffusionBackend
        return StableDiffusionBackend(cfg)
    raise ExtractorError(f"unknown backend {cfg.backend!r}")


def read_prompts(path):
    path = Path(path)
    if not path.is_file():
        raise PromptFileMissing(str(path))
    prompts = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not prompts:
        raise ExtractorError(f"{path} contains no prompts")
    return prompts


def extract(cfg: ExtractorConfig) -> list:
    """Generate every prompt and write its bundle; returns the bundle dirs."""
    prompts = read_prompts(cfg.prompts_file)
    backend = _make_backend(cfg)
    out_root = Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    bundle_dirs = []
    for index, prompt in enumerate(prompts):
        image_id = f"{index:05d}"
        class_ids = classes_in_prompt(prompt)
        result = backend.generate(prompt, index, class_ids)
        bundle_dirs.append(
            write_bundle(out_root / image_id, image_id, prompt, class_ids, result))
    return bundle_dirs


def write_bundle(bundle_dir, image_id, prompt, class_ids, result):
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)

    Image.fromarray(result.image, mode="RGB").save(bundle_dir / "image.png", format="PNG")

    layer_entries = []
    for name, res, feats in result.layers:
        fname = f"self_{name.replace('.', '_')}.atsb"
        write_tensor(bundle_dir / fname, feats)
        heads, n_px, dim = feats.shape
        assert n_px == res * res
        layer_entries.append({
            "name": name, "resolution": res, "heads": heads,
            "feature_dim": dim, "tensor_file": fname,
        })

    # row 0 of cross_maps is the SoT map, then one row per class id
    tokens = [{"token_text": "<sot>", "class_id": "sot"}]
    tokens += [{"token_text": ovam_token(VOC_CLASSES[c]), "class_id": c}
               for c in class_ids]
    assert result.cross_maps.shape[0] == len(tokens)
    write_tensor(bundle_dir / "cross.atsb", result.cross_maps)

    manifest = {
        "image_id": image_id,
        "prompt": prompt,
        "image_file": "image.png",
        "image_size": [result.image.shape[1], result.image.shape[0]],
        "latent_resolution": 64,
        "self_attention_layers": layer_entries,
        "cross_attention": {
            "tokens": tokens,
            "resolution": int(result.cross_maps.shape[1]),
            "tensor_file": "cross.atsb",
        },
    }
    (bundle_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True))
    return bundle_dir
