"""Reading and writing attention bundles.

A bundle directory holds:
  manifest.json            per-image metadata (schema below)
  *.atsb                   float32 tensors in the ATSB container
  <image_file>.png         the generated RGB image

ATSB container layout (all little-endian):
  bytes 0-3   magic "ATSB"
  bytes 4-5   version, uint16 (only 1)
  byte  6     dtype code, uint8 (only 0 = float32)
  byte  7     ndim, uint8, 1..4
  next 4*ndim shape, uint32 each
  rest        row-major float32 payload, 4 * prod(shape) bytes
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .catalog import ClassCatalog, DEFAULT_CATALOG
from .errors import (
    BadMagic,
    InvalidLabel,
    IoFailure,
    MissingManifest,
    MissingSotToken,
    SchemaViolation,
    ShapeMismatch,
    ShapeMismatchWithManifest,
    TensorFormatError,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"ATSB"
FORMAT_VERSION = 1
DTYPE_F32 = 0

ALLOWED_RESOLUTIONS = (16, 32, 64)


# --- tensor container ---

def read_tensor(path):
    """Read an ATSB file, returning (shape tuple, float32 ndarray)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e

    if len(raw) < 8:
        raise TruncatedPayload(f"{path}: file shorter than fixed header")
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {raw[:4]!r}, expected {MAGIC!r}")
    version, dtype, ndim = struct.unpack_from("<HBB", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: version {version}")
    if dtype != DTYPE_F32:
        raise UnsupportedDtype(f"{path}: dtype code {dtype}")
    if not 1 <= ndim <= 4:
        raise TensorFormatError(f"{path}: ndim {ndim} outside 1..4")
    if len(raw) < 8 + 4 * ndim:
        raise TruncatedPayload(f"{path}: header cut short")
    shape = struct.unpack_from(f"<{ndim}I", raw, 8)
    n = int(np.prod(shape, dtype=np.int64))
    payload = raw[8 + 4 * ndim:]
    if len(payload) != 4 * n:
        raise TruncatedPayload(
            f"{path}: payload {len(payload)} bytes, expected {4 * n}")
    values = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return shape, values


def write_tensor(path, shape, values):
    """Write float values as an ATSB file. Bit-exact round-trip with read_tensor."""
    shape = tuple(int(s) for s in shape)
    if not 1 <= len(shape) <= 4:
        raise TensorFormatError(f"ndim {len(shape)} outside 1..4")
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.size != int(np.prod(shape, dtype=np.int64)):
        raise ShapeMismatch(
            f"{arr.size} values do not fill shape {shape}")
    header = MAGIC + struct.pack("<HBB", FORMAT_VERSION, DTYPE_F32, len(shape))
    header += struct.pack(f"<{len(shape)}I", *shape)
    try:
        Path(path).write_bytes(header + arr.tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


# --- images and masks ---

def read_image(path):
    """Load an RGB image as a (h, w, 3) uint8 array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError as e:
        raise IoFailure(f"cannot read image {path}: {e}") from e


def write_image(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    try:
        Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
    except OSError as e:
        raise IoFailure(f"cannot write image {path}: {e}") from e


def write_mask_png(path, mask, catalog: ClassCatalog = DEFAULT_CATALOG):
    """Write a label mask as an 8-bit palette-indexed PNG.

    Pixel value = class id; labels must be 0..20 or the ignore id.
    """
    mask = np.asarray(mask)
    valid = ((mask >= 0) & (mask <= len(catalog.names) - 1)) | (mask == catalog.ignore_id)
    if not valid.all():
        bad = np.unique(mask[~valid])
        raise InvalidLabel(f"labels {bad.tolist()} outside 0..20/255")
    im = Image.fromarray(mask.astype(np.uint8), mode="P")
    im.putpalette(catalog.flat_palette())
    try:
        im.save(path, format="PNG")
    except OSError as e:
        raise IoFailure(f"cannot write mask {path}: {e}") from e


def read_mask_png(path):
    """Read a palette PNG back into a uint8 label array."""
    try:
        with Image.open(path) as im:
            if im.mode != "P":
                raise InvalidLabel(f"{path}: not palette-indexed ({im.mode})")
            return np.asarray(im, dtype=np.uint8)
    except OSError as e:
        raise IoFailure(f"cannot read mask {path}: {e}") from e


# --- bundle manifest ---

@dataclass
class SelfAttentionLayer:
    name: str
    resolution: int
    heads: int
    feature_dim: int
    features: np.ndarray  # (heads, resolution**2, feature_dim)


@dataclass
class CrossAttention:
    tokens: list          # [(token_text, class_id int or "sot"), ...]
    resolution: int
    maps: np.ndarray      # (n_tokens, resolution, resolution)

    def sot_index(self) -> int:
        return next(i for i, (_, cid) in enumerate(self.tokens) if cid == "sot")


@dataclass
class AttentionBundle:
    image_id: str
    prompt: str
    image: np.ndarray     # (h, w, 3) uint8
    image_file: str       # manifest-relative path
    image_size: tuple     # (width, height)
    latent_resolution: int
    layers: list          # [SelfAttentionLayer, ...] in manifest order
    cross_attention: CrossAttention


def _require(manifest, key, kind):
    if key not in manifest:
        raise SchemaViolation(f"manifest missing '{key}'")
    value = manifest[key]
    if not isinstance(value, kind):
        raise SchemaViolation(f"manifest '{key}' has type {type(value).__name__}")
    return value


def read_bundle(bundle_dir) -> AttentionBundle:
    """Load and fully validate one bundle directory."""
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(f"no manifest.json under {bundle_dir}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaViolation(f"{manifest_path}: {e}") from e
    if not isinstance(manifest, dict):
        raise SchemaViolation("manifest root must be an object")

    image_id = _require(manifest, "image_id", str)
    prompt = _require(manifest, "prompt", str)
    image_file = _require(manifest, "image_file", str)
    image_size = _require(manifest, "image_size", (list, tuple))
    if len(image_size) != 2 or not all(isinstance(v, int) and v > 0 for v in image_size):
        raise SchemaViolation(f"image_size {image_size} is not (width, height)")
    image_size = tuple(image_size)
    latent_resolution = manifest.get("latent_resolution", 64)
    if latent_resolution not in ALLOWED_RESOLUTIONS:
        raise SchemaViolation(f"latent_resolution {latent_resolution} not in {ALLOWED_RESOLUTIONS}")

    image_path = bundle_dir / image_file
    if not image_path.is_file():
        raise SchemaViolation(f"image file {image_file} missing")
    image = read_image(image_path)
    if (image.shape[1], image.shape[0]) != image_size:
        raise SchemaViolation(
            f"image is {image.shape[1]}x{image.shape[0]}, manifest says {image_size}")

    layers = []
    for entry in _require(manifest, "self_attention_layers", list):
        if not isinstance(entry, dict):
            raise SchemaViolation("self_attention_layers entries must be objects")
        name = _require(entry, "name", str)
        res = _require(entry, "resolution", int)
        heads = _require(entry, "heads", int)
        feature_dim = _require(entry, "feature_dim", int)
        tensor_file = _require(entry, "tensor_file", str)
        if res not in ALLOWED_RESOLUTIONS:
            raise SchemaViolation(f"layer {name}: resolution {res} not in {ALLOWED_RESOLUTIONS}")
        tensor_path = bundle_dir / tensor_file
        if not tensor_path.is_file():
            raise SchemaViolation(f"layer {name}: tensor file {tensor_file} missing")
        shape, values = read_tensor(tensor_path)
        expected = (heads, res * res, feature_dim)
        if shape != expected:
            raise ShapeMismatchWithManifest(
                f"layer {name}: tensor shape {shape}, manifest implies {expected}")
        layers.append(SelfAttentionLayer(name, res, heads, feature_dim, values))

    cross = _require(manifest, "cross_attention", dict)
    token_entries = _require(cross, "tokens", list)
    cross_res = _require(cross, "resolution", int)
    cross_file = _require(cross, "tensor_file", str)
    if cross_res not in ALLOWED_RESOLUTIONS:
        raise SchemaViolation(f"cross-attention resolution {cross_res} not in {ALLOWED_RESOLUTIONS}")

    tokens = []
    seen_ids = set()
    sot_count = 0
    for entry in token_entries:
        if not isinstance(entry, dict):
            raise SchemaViolation("cross_attention tokens must be objects")
        text = _require(entry, "token_text", str)
        cid = entry.get("class_id")
        if cid == "sot":
            sot_count += 1
        elif isinstance(cid, int) and 0 <= cid <= 20:
            if cid in seen_ids:
                raise SchemaViolation(f"duplicate class_id {cid} in tokens")
            seen_ids.add(cid)
        else:
            raise SchemaViolation(f"token {text!r}: class_id {cid!r} not 0..20 or 'sot'")
        tokens.append((text, cid))
    if sot_count == 0:
        raise MissingSotToken("cross_attention has no 'sot' token")
    if sot_count > 1:
        raise SchemaViolation(f"{sot_count} 'sot' tokens, expected exactly one")

    cross_path = bundle_dir / cross_file
    if not cross_path.is_file():
        raise SchemaViolation(f"cross-attention tensor {cross_file} missing")
    shape, maps = read_tensor(cross_path)
    expected = (len(tokens), cross_res, cross_res)
    if shape != expected:
        raise ShapeMismatchWithManifest(
            f"cross-attention tensor shape {shape}, manifest implies {expected}")

    return AttentionBundle(
        image_id=image_id,
        prompt=prompt,
        image=image,
        image_file=image_file,
        image_size=image_size,
        latent_resolution=latent_resolution,
        layers=layers,
        cross_attention=CrossAttention(tokens, cross_res, maps),
    )
