"""Batch orchestration: bundle -> condense -> features -> cluster ->
classify -> refine, per image, plus per-stage entry points for the CLI."""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bundle_io import (
    FORMAT_VERSION,
    read_bundle,
    read_image,
    read_mask_png,
    read_tensor,
    write_mask_png,
    write_tensor,
)
from .catalog import DEFAULT_CATALOG, IGNORE_ID
from .classify import (
    VoteStack,
    aggregate_votes,
    build_attention_set,
    classify_clusters,
)
from .cluster import kmeans_fit, split_components
from .condense import condense_bundle
from .errors import MissingInput, NoBundles, UnknownStage, UnwritableOutput
from .features import assemble_features
from .metrics import ConfusionMatrix, accumulate, evaluation_report
from .refine import RefineConfig, refine_mask

STAGES = ("condense", "features", "cluster", "classify", "refine")


@dataclass
class PipelineConfig:
    k_set: tuple = (4, 7, 10)
    t_set: tuple = (0.3, 0.5, 0.8)
    background_boost: float = 1.2
    w_pos: float = 1.0
    seed: int = 0
    workers: int = 0              # 0 = available parallelism
    attention_normalization: str = "per_map"
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-6
    kmeans_restarts: int = 1      # single run per K by default
    refine: RefineConfig = field(default_factory=RefineConfig)
    bundle_dir: str = ""
    out_dir: str = ""
    keep_intermediates: bool = False

    def __post_init__(self):
        if not self.k_set or not self.t_set:
            raise ValueError("k_set and t_set must be non-empty")
        if any(not 0 < t < 1 for t in self.t_set):
            raise ValueError(f"thresholds {self.t_set} must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        io = d.pop("io", {})
        refine_cfg = RefineConfig(**{
            k: v for k, v in d.pop("refine", {}).items()
            if k in RefineConfig.__dataclass_fields__})
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        known.pop("refine", None)
        for k in ("bundle_dir", "out_dir", "keep_intermediates"):
            if k in io:
                known[k] = io[k]
        cfg = cls(refine=refine_cfg, **known)
        cfg.k_set = tuple(cfg.k_set)
        cfg.t_set = tuple(cfg.t_set)
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def snapshot(self) -> dict:
        """Result-affecting settings only: worker count never changes any
        output, so manifests from different pool sizes stay byte-identical."""
        d = asdict(self)
        d["k_set"] = list(self.k_set)
        d["t_set"] = list(self.t_set)
        d.pop("workers")
        return d


def stable_hash64(s: str) -> int:
    """FNV-1a 64-bit over the UTF-8 bytes; stable across runs and platforms."""
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def image_seed(cfg_seed: int, image_id: str) -> int:
    return (cfg_seed ^ stable_hash64(image_id)) & 0xFFFFFFFFFFFFFFFF


def compute_low_mask(bundle, cfg: PipelineConfig, seed: int,
                     collect=None) -> np.ndarray:
    """Stages 2.1-2.2 for one bundle: the 64x64 vote-aggregated mask."""
    pc_maps = condense_bundle(bundle)
    fm = assemble_features(pc_maps, cfg.w_pos)
    attn = build_attention_set(bundle, cfg.attention_normalization)

    votes = []
    for k in cfg.k_set:
        labeling, _ = kmeans_fit(fm.values, k, seed, grid=(64, 64),
                                 max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol,
                                 restarts=cfg.kmeans_restarts)
        sub = split_components(labeling)
        if collect is not None:
            collect.setdefault("clusters", {})[k] = sub
        for t in cfg.t_set:
            votes.append(classify_clusters(sub, attn, t, cfg.background_boost))
    stack = VoteStack(votes=np.stack(votes), k_set=cfg.k_set, t_set=cfg.t_set)
    if collect is not None:
        collect["pc_maps"] = pc_maps
        collect["features"] = fm
    return aggregate_votes(stack)


def process_bundle(bundle_dir, cfg: PipelineConfig, out_dir: Path) -> dict:
    """Run the full stage chain for one bundle and write its mask PNG."""
    bundle = read_bundle(bundle_dir)
    seed = image_seed(cfg.seed, bundle.image_id)

    collect = {} if cfg.keep_intermediates else None
    low = compute_low_mask(bundle, cfg, seed, collect)
    refine_cfg = replace(cfg.refine, seed=seed ^ cfg.refine.seed)
    mask = refine_mask(bundle.image, low, refine_cfg)

    mask_file = f"{bundle.image_id}.png"
    write_mask_png(out_dir / mask_file, mask, DEFAULT_CATALOG)

    if collect is not None:
        inter = out_dir / "intermediates" / bundle.image_id
        inter.mkdir(parents=True, exist_ok=True)
        _write_condense_stage(collect["pc_maps"], inter)
        write_tensor(inter / "features.atsb",
                     collect["features"].values.shape, collect["features"].values)
        for k, sub in collect["clusters"].items():
            write_tensor(inter / f"clusters_k{k}.atsb", (64, 64),
                         sub.labels.astype(np.float32))
        write_mask_png(inter / "low_mask.png", low, DEFAULT_CATALOG)

    labels, counts = np.unique(mask, return_counts=True)
    return {
        "image_id": bundle.image_id,
        "prompt": bundle.prompt,
        "image_file": str(Path(bundle_dir) / bundle.image_file),
        "mask_file": mask_file,
        "uncertain_fraction": float((mask == IGNORE_ID).mean()),
        "per_class_pixel_counts": {
            str(int(l)): int(c) for l, c in zip(labels, counts) if l != IGNORE_ID},
    }


def discover_bundles(bundle_dir):
    root = Path(bundle_dir)
    if not root.is_dir():
        raise NoBundles(f"{bundle_dir} is not a directory")
    found = sorted(p.parent for p in root.glob("*/manifest.json"))
    if (root / "manifest.json").is_file():
        found.insert(0, root)
    if not found:
        raise NoBundles(f"no bundles under {bundle_dir}")
    return found


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Process every bundle under cfg.bundle_dir; skip-and-record failures.

    Per-image seeds derive from the image id, and manifest entries are
    sorted by it, so results never depend on worker count or on the order
    bundles are discovered.
    """
    started = time.time()
    bundles = discover_bundles(cfg.bundle_dir)
    out_dir = Path(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as e:
        raise UnwritableOutput(f"{cfg.out_dir}: {e}") from e

    def work(bdir):
        try:
            return process_bundle(bdir, cfg, out_dir), None
        except Exception as e:
            return None, {"bundle": str(bdir), "error": f"{type(e).__name__}: {e}"}

    workers = cfg.workers or os.cpu_count() or 1
    if workers > 1 and len(bundles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, bundles))
    else:
        results = [work(b) for b in bundles]

    images = sorted((r for r, _ in results if r), key=lambda r: r["image_id"])
    failures = sorted((f for _, f in results if f), key=lambda f: f["bundle"])

    manifest = {
        "images": images,
        "failures": failures,
        "config": cfg.snapshot(),
        "engine_version": __version__,
        "format_version": FORMAT_VERSION,
        "wall_time_s": round(time.time() - started, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def _write_condense_stage(pc_maps, out_dir: Path):
    """One (n_maps, r, r, 3) tensor per resolution plus a JSON index."""
    by_res = {}
    for m in pc_maps:
        by_res.setdefault(m.resolution, []).append(m)
    index = {}
    for r, maps in sorted(by_res.items()):
        fname = f"pc_{r}.atsb"
        stacked = np.stack([m.values for m in maps]).astype(np.float32)
        write_tensor(out_dir / fname, stacked.shape, stacked)
        index[str(r)] = {
            "file": fname,
            "maps": [{"layer": m.layer_name, "head": m.head_id} for m in maps],
        }
    (out_dir / "pc_index.json").write_text(json.dumps(index, indent=1))
    return index


def run_stage(stage_name: str, stage_inputs: dict, cfg: PipelineConfig):
    """Run one named stage on explicit inputs, writing its artifact.

    Inputs per stage: condense/features/cluster need "bundle"; classify
    needs "bundle" + "clusters" (dir of clusters_k*.atsb); refine needs
    "image" + "low_mask". All write under "out".
    """
    if stage_name not in STAGES:
        raise UnknownStage(f"{stage_name!r} not one of {STAGES}")

    def need(key):
        if key not in stage_inputs or stage_inputs[key] is None:
            raise MissingInput(f"stage {stage_name} needs {key!r}")
        path = Path(stage_inputs[key])
        if not path.exists():
            raise MissingInput(f"stage {stage_name}: {path} does not exist")
        return path

    out = Path(stage_inputs.get("out") or ".")

    if stage_name == "refine":
        image = read_image(need("image"))
        low = read_mask_png(need("low_mask"))
        mask = refine_mask(image, low, cfg.refine)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_mask_png(out, mask, DEFAULT_CATALOG)
        return out

    bundle = read_bundle(need("bundle"))
    seed = image_seed(cfg.seed, bundle.image_id)

    if stage_name == "condense":
        out.mkdir(parents=True, exist_ok=True)
        return _write_condense_stage(condense_bundle(bundle), out)

    if stage_name == "features":
        fm = assemble_features(condense_bundle(bundle), cfg.w_pos)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "features.atsb"
        write_tensor(path, fm.values.shape, fm.values)
        return path

    if stage_name == "cluster":
        fm = assemble_features(condense_bundle(bundle), cfg.w_pos)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in cfg.k_set:
            labeling, _ = kmeans_fit(fm.values, k, seed, grid=(64, 64),
                                     max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol,
                                     restarts=cfg.kmeans_restarts)
            sub = split_components(labeling)
            path = out / f"clusters_k{k}.atsb"
            write_tensor(path, (64, 64), sub.labels.astype(np.float32))
            paths.append(path)
        return paths

    # classify: consume precomputed cluster tensors + the bundle's attention
    from .cluster import ClusterLabeling

    clusters_dir = need("clusters")
    attn = build_attention_set(bundle, cfg.attention_normalization)
    votes = []
    for k in cfg.k_set:
        path = clusters_dir / f"clusters_k{k}.atsb"
        if not path.is_file():
            raise MissingInput(f"stage classify: {path} does not exist")
        _, values = read_tensor(path)
        labels = values.astype(np.int64).ravel()
        sub = ClusterLabeling(grid=(64, 64), labels=labels, k_requested=k,
                              n_clusters=int(labels.max()) + 1, inertia=0.0)
        for t in cfg.t_set:
            votes.append(classify_clusters(sub, attn, t, cfg.background_boost))
    stack = VoteStack(votes=np.stack(votes), k_set=cfg.k_set, t_set=cfg.t_set)
    low = aggregate_votes(stack)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mask_png(out, low, DEFAULT_CATALOG)
    return out


def evaluate_directories(pred_dir, gt_dir) -> dict:
    """Pair same-named mask PNGs from two directories and report metrics."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if not pred_dir.is_dir():
        raise MissingInput(f"{pred_dir} is not a directory")
    if not gt_dir.is_dir():
        raise MissingInput(f"{gt_dir} is not a directory")
    names = sorted(p.name for p in gt_dir.glob("*.png"))
    if not names:
        raise MissingInput(f"no ground-truth masks under {gt_dir}")
    conf = ConfusionMatrix()
    compared = 0
    for name in names:
        pred_path = pred_dir / name
        if not pred_path.is_file():
            continue
        accumulate(conf, read_mask_png(pred_path), read_mask_png(gt_dir / name))
        compared += 1
    if compared == 0:
        raise MissingInput("no prediction matches any ground-truth mask name")
    report = evaluation_report(conf)
    report["images"] = compared
    return report
