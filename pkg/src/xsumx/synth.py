"""Seeded synthetic corpora with planted ground truth.

Each generated video plants one influential fragment: its frames carry much
larger feature norms than any other fragment, so a feature-energy oracle
(SmoothedNormScorer or the wire-protocol reference adapter) ranks it first,
and masking it reorders the score sequence far more than masking anything
else.  A small per-frame ramp keeps baseline scores free of ties.

Frames and segmentation maps plant an object analogue: a 2x3 grid of blocks
where one block is bright and varies per frame (the planted object) and one
carries a per-frame brightness ramp (the tie-breaker), so pixel-space
oracles can be exercised with known answers.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .formats import save_features, save_fragments, save_frames, save_segmentation
from .types import Fragment, Fragmentation, FrameFeatures, SegmentationMaps, ValidationError

PLANTED_LEVEL = 1.0
LEVEL_RANGE = (0.2, 0.55)  # feature-norm levels of the non-planted fragments
SEG_GRID = (2, 3)  # rows x cols of block objects, IDs 1..6


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 20
    n_fragments: int = 12
    frames_per_fragment: int = 8
    feature_dim: int = 16
    frame_height: int = 64
    frame_width: int = 64
    seed: int = 0
    with_frames: bool = True

    def __post_init__(self):
        if self.n_videos < 1 or self.n_fragments < 2 or self.frames_per_fragment < 1:
            raise ValidationError("synth: need >= 1 video, >= 2 fragments, >= 1 frame each")
        if self.feature_dim < 1:
            raise ValidationError("synth: feature_dim must be >= 1")


def _block_labels(height: int, width: int) -> np.ndarray:
    labels = np.zeros((height, width), dtype=np.uint16)
    rows = np.array_split(np.arange(height), SEG_GRID[0])
    cols = np.array_split(np.arange(width), SEG_GRID[1])
    next_id = 1
    for r in rows:
        for c in cols:
            labels[r[0] : r[-1] + 1, c[0] : c[-1] + 1] = next_id
            next_id += 1
    return labels


def _video_frames(cfg: SynthConfig, n: int, labels: np.ndarray, planted_object: int,
                  ramp_object: int) -> np.ndarray:
    n_objects = SEG_GRID[0] * SEG_GRID[1]
    frames = np.empty((n, cfg.frame_height, cfg.frame_width, 3), dtype=np.uint8)
    for i in range(n):
        value = np.zeros(n_objects + 1, dtype=np.uint8)
        for obj in range(1, n_objects + 1):
            value[obj] = 20 + 12 * obj
        # the planted object is bright and varies per frame in a non-monotone
        # pattern, so masking it scrambles the within-fragment score order
        value[planted_object] = 140 + int(80 * ((i * 37) % n) / n)
        value[ramp_object] = min(40 + i, 255)
        frames[i] = value[labels][:, :, None]
    return frames


def generate_video(cfg: SynthConfig, index: int) -> dict:
    """Build one bundle's arrays plus its ground-truth entry."""
    rng = np.random.default_rng([cfg.seed, index])
    n = cfg.n_fragments * cfg.frames_per_fragment
    planted = int(rng.integers(0, cfg.n_fragments))

    levels = np.full(cfg.n_fragments, PLANTED_LEVEL)
    others = np.linspace(*LEVEL_RANGE, cfg.n_fragments - 1)
    rng.shuffle(others)
    levels[[k for k in range(cfg.n_fragments) if k != planted]] = others

    frag = Fragmentation(
        tuple(
            Fragment(k * cfg.frames_per_fragment, (k + 1) * cfg.frames_per_fragment - 1)
            for k in range(cfg.n_fragments)
        )
    )
    frame_levels = np.repeat(levels, cfg.frames_per_fragment)
    norms = frame_levels + 0.02 * np.arange(n) / n + rng.uniform(0.0, 0.002, n)

    directions = rng.normal(size=(n, cfg.feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    features = FrameFeatures((directions * norms[:, None]).astype(np.float32))

    labels = _block_labels(cfg.frame_height, cfg.frame_width)
    n_objects = SEG_GRID[0] * SEG_GRID[1]
    planted_object = int(rng.integers(1, n_objects + 1))
    ramp_object = int(rng.choice([o for o in range(1, n_objects + 1) if o != planted_object]))
    segmentation = SegmentationMaps(np.broadcast_to(labels, (n,) + labels.shape).copy())
    frames = (
        _video_frames(cfg, n, labels, planted_object, ramp_object) if cfg.with_frames else None
    )

    return {
        "video_id": f"v{index:02d}",
        "features": features,
        "fragmentation": frag,
        "segmentation": segmentation,
        "frames": frames,
        "ground_truth": {
            "planted_fragment": planted,
            "planted_object": planted_object,
            "ramp_object": ramp_object,
        },
    }


def generate_corpus(cfg: SynthConfig, out_dir) -> dict:
    """Write a corpus directory loadable by every command; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"videos": []}
    ground_truth = {}
    for index in range(cfg.n_videos):
        video = generate_video(cfg, index)
        vid = video["video_id"]
        entry = {
            "video_id": vid,
            "features": f"{vid}.features.bin",
            "fragments": f"{vid}.fragments.json",
            "segmentation": f"{vid}.segmentation.bin",
            "frames": f"{vid}.frames.bin" if video["frames"] is not None else None,
        }
        save_features(video["features"], out / entry["features"])
        save_fragments(video["fragmentation"], out / entry["fragments"])
        save_segmentation(video["segmentation"], out / entry["segmentation"])
        if video["frames"] is not None:
            save_frames(video["frames"], out / entry["frames"])
        manifest["videos"].append(entry)
        ground_truth[vid] = video["ground_truth"]

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (out / "ground_truth.json").write_text(
        json.dumps({"config": asdict(cfg), "videos": ground_truth}, indent=2) + "\n",
        encoding="utf-8",
    )
    return manifest
