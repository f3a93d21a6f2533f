"""Command-line entry point.

Subcommands: `synth` generates a seeded corpus, `explain-fragments` and
`explain-objects` write explanation JSON (and overlay PNGs), `evaluate`
writes report.json/report.txt.  Exit codes: 0 success, 2 input or validation
problem, 3 oracle failure.  All outputs are deterministic for a fixed seed
regardless of worker count.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from PIL import Image

from .evaluation import evaluate_corpus, render_report_text, report_to_json
from .formats import (
    FormatError,
    load_features,
    load_fragments,
    load_frames,
    load_segmentation,
)
from .fragment_explainer import (
    attention_fragment_explain,
    explanation_from_json,
    explanation_to_json,
    lime_fragment_explain,
)
from .object_explainer import (
    ExplanationSkipped,
    lime_object_explain,
    object_explanation_from_json,
    object_explanation_to_json,
    render_overlay,
    select_fragments_by_summarizer,
)
from .oracle import (
    CapabilityError,
    LinearMaskOracle,
    MeanFeatureScorer,
    OracleError,
    PixelOracle,
    SmoothedNormScorer,
    ToyAttentionScorer,
)
from .remote import ExternalOracle
from .surrogate import OBJECT_PERTURBATIONS, TOP_K, LimeConfig
from .synth import SynthConfig, generate_corpus
from .types import ValidationError, VideoBundle, validate_bundle

ORACLE_ENV_VAR = "XSUMX_ORACLE"
DEFAULT_ORACLE = "toy-attention"


def load_corpus(corpus_dir, with_frames=False, with_segmentation=False):
    """Bundles plus per-video file paths from a manifest.json directory."""
    corpus = Path(corpus_dir)
    manifest_path = corpus / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"no manifest.json in {corpus}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    bundles, paths = [], {}
    for entry in manifest.get("videos", []):
        vid = entry["video_id"]
        feat_path = corpus / entry["features"]
        frag_path = corpus / entry["fragments"]
        frames_path = corpus / entry["frames"] if entry.get("frames") else None
        seg_path = corpus / entry["segmentation"] if entry.get("segmentation") else None
        bundle = VideoBundle(
            video_id=vid,
            features=load_features(feat_path),
            fragmentation=load_fragments(frag_path),
            frames=load_frames(frames_path) if with_frames and frames_path else None,
            segmentation=(
                load_segmentation(seg_path) if with_segmentation and seg_path else None
            ),
        )
        findings = validate_bundle(bundle)
        if findings:
            raise ValidationError(f"{vid}: " + "; ".join(findings))
        bundles.append(bundle)
        paths[vid] = {
            "features": str(feat_path),
            "frames": str(frames_path) if frames_path else None,
            "segmentation": str(seg_path) if seg_path else None,
        }
    if not bundles:
        raise ValidationError(f"manifest in {corpus} lists no videos")
    return bundles, paths


def make_oracle(selector: str, video_paths=None):
    """Build an oracle from a selector string.

    Selectors: toy-attention | norm | pixel | linear:<base>:<w1,w2,...> |
    exec:<command> | tcp:<host:port>.
    """
    if selector == "toy-attention":
        return ToyAttentionScorer()
    if selector == "norm":
        return SmoothedNormScorer()
    if selector == "pixel":
        return PixelOracle()
    if selector == "mean-feature":
        return MeanFeatureScorer()
    if selector.startswith("linear:"):
        try:
            base_s, weights_s = selector[len("linear:") :].split(":", 1)
            weights = [float(w) for w in weights_s.split(",") if w]
            return LinearMaskOracle(float(base_s), weights)
        except (ValueError, IndexError):
            raise ValidationError(
                f"bad linear oracle selector {selector!r}, expected linear:<base>:<w1,w2,...>"
            ) from None
    if selector.startswith("exec:") or selector.startswith("tcp:"):
        if selector.startswith("exec:"):
            oracle = ExternalOracle.spawn(selector[len("exec:") :])
        else:
            oracle = ExternalOracle.connect(selector[len("tcp:") :])
        for vid, p in (video_paths or {}).items():
            oracle.register_video(vid, p["features"], p["frames"], p["segmentation"])
        return oracle
    raise ValidationError(f"unknown oracle selector {selector!r}")


def _lime_config(args) -> LimeConfig:
    return LimeConfig(
        num_perturbations=args.perturbations,
        mask_probability=args.mask_probability,
        ridge_lambda=args.ridge_lambda,
        kernel=args.kernel,
        kernel_width=args.kernel_width,
        rng_seed=args.seed,
        exhaustive_when_possible=not args.no_exhaustive,
    )


def _run_pool(workers: int, tasks, worker):
    """Deterministic map: results keyed by task, gathered before any output."""
    results = {}
    if workers <= 1:
        for task in tasks:
            results[task[0]] = worker(task)
            print(f"done {task[0]}", file=sys.stderr)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for key, value in zip([t[0] for t in tasks], pool.map(worker, tasks)):
                results[key] = value
                print(f"done {key}", file=sys.stderr)
    return results


def cmd_explain_fragments(args) -> int:
    bundles, paths = load_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    oracle = make_oracle(args.oracle, paths)
    cfg = _lime_config(args)

    def worker(task):
        _, bundle = task
        if args.method == "lime":
            return lime_fragment_explain(oracle, bundle, cfg)
        return attention_fragment_explain(oracle, bundle)

    try:
        results = _run_pool(args.workers, [(b.video_id, b) for b in bundles], worker)
        for vid in sorted(results):
            (out / f"{vid}.fragments.json").write_text(
                explanation_to_json(results[vid]), encoding="utf-8"
            )
    finally:
        oracle.close()
    return 0


def _selected_fragments(args, bundle, oracle, explanations_dir) -> list[int]:
    if args.fragments_source == "summarizer":
        baseline = oracle.score(bundle)
        return list(
            select_fragments_by_summarizer(baseline, bundle.fragmentation, args.top_k)
            .fragment_indices
        )
    prior = Path(explanations_dir) / f"{bundle.video_id}.fragments.json"
    if not prior.exists():
        raise ValidationError(
            f"{bundle.video_id}: --fragments-source explanation needs {prior}"
        )
    expl = explanation_from_json(prior.read_text(encoding="utf-8"))
    return list(expl.top[: args.top_k])


def cmd_explain_objects(args) -> int:
    bundles, paths = load_corpus(args.corpus, with_frames=True, with_segmentation=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    explanations_dir = args.explanations or args.out
    oracle = make_oracle(args.oracle, paths)
    cfg = LimeConfig(
        num_perturbations=args.perturbations,
        mask_probability=args.mask_probability,
        ridge_lambda=args.ridge_lambda,
        kernel=args.kernel,
        kernel_width=args.kernel_width,
        rng_seed=args.seed,
        exhaustive_when_possible=not args.no_exhaustive,
    )

    def worker(task):
        _, bundle = task
        findings: list[str] = []
        produced = []
        if bundle.segmentation is None:
            findings.append(f"{bundle.video_id}: no segmentation maps, objects skipped")
            return produced, findings
        for frag_index in _selected_fragments(args, bundle, oracle, explanations_dir):
            try:
                expl = lime_object_explain(
                    oracle, bundle, frag_index, cfg, min_area_fraction=args.min_area
                )
            except ExplanationSkipped as skip:
                findings.append(skip.finding)
                continue
            overlay = None
            if bundle.frames is not None:
                overlay = render_overlay(
                    bundle.frames[expl.keyframe_index],
                    bundle.segmentation.labels[expl.keyframe_index],
                    expl.top,
                    expl.bottom,
                    findings,
                )
            produced.append((expl, overlay))
        return produced, findings

    all_findings: list[str] = []
    try:
        results = _run_pool(args.workers, [(b.video_id, b) for b in bundles], worker)
        for vid in sorted(results):
            produced, findings = results[vid]
            all_findings.extend(findings)
            for expl, overlay in produced:
                stem = f"{vid}.objects.{expl.fragment_index}"
                (out / f"{stem}.json").write_text(
                    object_explanation_to_json(expl), encoding="utf-8"
                )
                if overlay is not None:
                    Image.fromarray(overlay, "RGB").save(out / f"{stem}.png", format="PNG")
    finally:
        oracle.close()
    (out / "findings.json").write_text(
        json.dumps(all_findings, indent=2) + "\n", encoding="utf-8"
    )
    return 0


def cmd_evaluate(args) -> int:
    with_pixels = args.level == "objects"
    bundles, paths = load_corpus(
        args.corpus, with_frames=with_pixels, with_segmentation=with_pixels
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    explanations_dir = Path(args.explanations)

    explanations = []
    if args.level == "fragments":
        for bundle in bundles:
            path = explanations_dir / f"{bundle.video_id}.fragments.json"
            if not path.exists():
                raise ValidationError(f"missing explanation {path}")
            explanations.append(explanation_from_json(path.read_text(encoding="utf-8")))
    else:
        for bundle in bundles:
            for path in sorted(explanations_dir.glob(f"{bundle.video_id}.objects.*.json")):
                explanations.append(
                    object_explanation_from_json(path.read_text(encoding="utf-8"))
                )
        if not explanations:
            raise ValidationError(f"no object explanations found in {explanations_dir}")

    oracle = make_oracle(args.oracle, paths)
    try:
        report = evaluate_corpus(oracle, bundles, explanations, workers=args.workers)
    finally:
        oracle.close()
    (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out / "report.txt").write_text(render_report_text(report), encoding="utf-8")
    print(render_report_text(report))
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_videos=args.videos,
        n_fragments=args.fragments,
        frames_per_fragment=args.frames_per_fragment,
        feature_dim=args.dim,
        frame_height=args.height,
        frame_width=args.width,
        seed=args.seed,
        with_frames=not args.no_frames,
    )
    generate_corpus(cfg, args.out)
    print(f"wrote {cfg.n_videos} videos to {args.out}", file=sys.stderr)
    return 0


def _add_oracle_flag(p):
    p.add_argument(
        "--oracle",
        default=os.environ.get(ORACLE_ENV_VAR, DEFAULT_ORACLE),
        help="oracle selector: toy-attention | norm | pixel | mean-feature | "
        "linear:<base>:<w,..> | exec:<command> | tcp:<host:port> "
        f"(default from ${ORACLE_ENV_VAR})",
    )


def _add_lime_flags(p, default_m):
    p.add_argument("--perturbations", type=int, default=default_m)
    p.add_argument("--mask-probability", type=float, default=0.5)
    p.add_argument("--ridge-lambda", type=float, default=1e-8)
    p.add_argument("--kernel", choices=["uniform", "exponential"], default="uniform")
    p.add_argument("--kernel-width", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--no-exhaustive",
        action="store_true",
        help="always sample masks, even when the full space fits the budget",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xsumx", description="Explain and evaluate black-box video summarizers."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain-fragments", help="fragment-level explanations")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["lime", "attention"], default="lime")
    p.add_argument("--workers", type=int, default=1)
    _add_oracle_flag(p)
    _add_lime_flags(p, 20000)
    p.set_defaults(func=cmd_explain_fragments)

    p = sub.add_parser("explain-objects", help="object-level explanations and overlays")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--fragments-source",
        choices=["explanation", "summarizer"],
        default="summarizer",
        help="which fragments to explain: the fragment explainer's top picks "
        "or the summarizer's top-scoring ones",
    )
    p.add_argument(
        "--explanations",
        default=None,
        help="directory holding <video>.fragments.json (default: --out)",
    )
    p.add_argument("--top-k", type=int, default=TOP_K)
    p.add_argument("--min-area", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    _add_oracle_flag(p)
    _add_lime_flags(p, OBJECT_PERTURBATIONS)
    p.set_defaults(func=cmd_explain_objects)

    p = sub.add_parser("evaluate", help="discoverability / sanity-violation report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--explanations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", choices=["fragments", "objects"], default="fragments")
    p.add_argument("--workers", type=int, default=1)
    _add_oracle_flag(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=20)
    p.add_argument("--fragments", type=int, default=12)
    p.add_argument("--frames-per-fragment", type=int, default=8)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-frames", action="store_true")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FormatError, FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OracleError, CapabilityError) as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
