"""``ripeline`` command-line interface.

Every subcommand accepts ``--config FILE`` (TOML); explicit flags win over
the file. Seeds default to ``$RIPELINE_SEED`` when set. The effective
configuration is logged to stderr at startup, results go to stdout as JSON.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .maturity import MaturityClass

log = logging.getLogger("ripeline")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_USAGE = 2


def _emit(obj, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, sort_keys=True) + "\n")
    stream.flush()


def _env_seed():
    value = os.environ.get("RIPELINE_SEED")
    if value is None or value == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"RIPELINE_SEED must be an integer, got {value!r}")


def _load_config(args):
    from .pipeline import PipelineConfig

    cfg = PipelineConfig.from_toml(args.config) if getattr(args, "config", None) else PipelineConfig()
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = _env_seed()
    if seed is not None:
        cfg = cfg.override("run", seed=seed).override("classifier", seed=seed).override("detector", seed=seed)
    return cfg


def _log_effective(args, cfg=None):
    record = {"command": args.command}
    if cfg is not None:
        record["config"] = cfg.to_dict()
    extras = {k: v for k, v in vars(args).items() if k not in ("func", "command") and not callable(v)}
    record["arguments"] = {k: (str(v) if isinstance(v, Path) else v) for k, v in extras.items()}
    log.info("effective configuration: %s", json.dumps(record, sort_keys=True, default=str))


# ---------------------------------------------------------------- subcommands

def cmd_segment(args):
    from .imaging import read_image, rgb_to_lab, write_label_png
    from .superpixels import slic_segment

    cfg = _load_config(args).override(
        "slic", k_target=args.k, compactness=args.compactness, max_iters=args.max_iters,
        residual_threshold=args.threshold,
    )
    _log_effective(args, cfg)
    labels = slic_segment(rgb_to_lab(read_image(args.image)), cfg.slic)
    out = Path(args.out)
    write_label_png(labels.labels, out)
    sidecar = {"k": labels.k, "iterations_run": labels.iterations_run, "final_residual": labels.final_residual}
    out.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8")
    _emit({"labels": str(out), **sidecar})
    return EXIT_OK


def cmd_grow(args):
    from .imaging import read_image, read_label_png, rgb_to_lab, write_png
    from .regions import build_graph, grow_regions, region_to_thumbnail
    from .superpixels import SuperpixelLabels

    cfg = _load_config(args).override(
        "growth", similarity_threshold=args.threshold, min_region_pixels=args.min_pixels,
        seed_order=args.seed_order, max_region_fraction=args.max_fraction,
    )
    _log_effective(args, cfg)
    img = read_image(args.image)
    lab_map = read_label_png(args.labels)
    labels = SuperpixelLabels(lab_map, int(lab_map.max()) + 1)
    lab = rgb_to_lab(img)
    regions = grow_regions(build_graph(labels, lab), cfg.growth, image_pixels=img.width * img.height)
    payload = [r.to_dict(i) for i, r in enumerate(regions)]
    if args.thumbs_dir:
        d = Path(args.thumbs_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(regions):
            write_png(region_to_thumbnail(img, r, cfg.run.thumbnail_size), d / f"region_{i}.png")
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ingest(args):
    from .data import ingest

    _log_effective(args)
    manifest = ingest(args.root)
    manifest.save(args.out)
    _emit(manifest.summary())
    return EXIT_OK


def cmd_split(args):
    from .data import DatasetManifest, split

    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    args.seed = seed
    _log_effective(args)
    manifest = split(DatasetManifest.load(args.manifest), args.val_fraction, seed)
    manifest.save(args.out or args.manifest)
    _emit(manifest.summary())
    return EXIT_OK


def cmd_augment(args):
    from .data import DatasetManifest, augment_dataset

    cfg = _load_config(args)
    seed = cfg.run.seed
    _log_effective(args, cfg)
    manifest = augment_dataset(
        DatasetManifest.load(args.manifest), args.count, seed, cfg.augment, out_dir=args.images_dir
    )
    manifest.save(args.out or args.manifest)
    _emit(manifest.summary())
    return EXIT_OK


def _detection_samples(root: Path):
    from .detector import DetectionLabel

    samples = []
    for name, flag in (("tomato", True), ("not_tomato", False)):
        d = root / name
        if not d.is_dir():
            raise SystemExit(f"{root} must contain 'tomato' and 'not_tomato' directories")
        samples.extend(DetectionLabel(str(p), flag) for p in sorted(d.iterdir()) if p.is_file())
    return samples


def cmd_detect_train(args):
    from .detector import train_detector

    cfg = _load_config(args).override(
        "detector", epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size
    )
    _log_effective(args, cfg)
    d = cfg.detector
    model = train_detector(_detection_samples(Path(args.data)), d.epochs, d.learning_rate, d.seed, d.batch_size)
    model.save(args.out)
    _emit({"model": str(args.out), "final_loss": model.metadata["final_loss"], "epochs": d.epochs, "seed": d.seed})
    return EXIT_OK


def cmd_detect(args):
    from .detector import DetectorModel, validate_regions
    from .imaging import read_image

    _log_effective(args)
    model = DetectorModel.load(args.model)
    for p in args.images:
        try:
            verdict = validate_regions(model, [read_image(p)], args.threshold)[0]
            _emit({"path": str(p), "score": verdict.score, "accepted": verdict.accepted})
        except Exception as exc:  # noqa: BLE001
            _emit({"path": str(p), "error": f"{type(exc).__name__}: {exc}"})
    return EXIT_OK


def cmd_train(args):
    from .classifier import train_classifier
    from .data import DatasetManifest, records_to_dataset

    cfg = _load_config(args).override(
        "classifier", d=args.d, layers=args.layers, epochs=args.epochs, learning_rate=args.lr,
        batch_size=args.batch_size, fine_tune_epochs=args.fine_tune,
    )
    _log_effective(args, cfg)
    manifest = DatasetManifest.load(args.manifest)
    train = records_to_dataset(manifest.in_split(args.split))
    val = records_to_dataset(manifest.in_split(args.val_split)) if args.val_split else None
    model, curve = train_classifier(train, cfg.classifier, val_data=val)
    model.save(args.out)
    if args.curve:
        Path(args.curve).write_text(json.dumps(curve, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _emit({"model": str(args.out), "seed": cfg.classifier.seed, "final": curve[-1]})
    return EXIT_OK


def cmd_classify(args):
    from .classifier import ShaRnnModel, classify
    from .imaging import read_image

    _log_effective(args)
    model = ShaRnnModel.load(args.model)
    for p in args.images:
        try:
            probs = classify(model, read_image(p))
            _emit({
                "path": str(p),
                "probs": [float(x) for x in probs],
                "argmax_class": MaturityClass(int(np.argmax(probs))).label,
            })
        except Exception as exc:  # noqa: BLE001
            _emit({"path": str(p), "error": f"{type(exc).__name__}: {exc}"})
    return EXIT_OK


def cmd_evaluate(args):
    from .classifier import ShaRnnModel
    from .data import DatasetManifest
    from .evaluation import emit_report, evaluate

    _log_effective(args)
    model = ShaRnnModel.load(args.model)
    records = DatasetManifest.load(args.manifest).in_split(args.split)
    result = evaluate(model, records)
    if args.out:
        emit_report(result, args.format, args.out)
    summary = {"evaluated": int(result.counts.matrix.sum()), "failures": len(result.failures)}
    if result.report:
        summary["accuracy_pct"] = result.report.overall.accuracy_pct
    summary["macro_f1"] = result.macro["macro_f1"]
    _emit(summary)
    return EXIT_OK


def cmd_pipeline(args):
    from .classifier import ShaRnnModel
    from .detector import DetectorModel
    from .pipeline import PipelineError, run_pipeline

    cfg = _load_config(args).override(
        "run", jobs=args.jobs, detection_threshold=args.threshold
    )
    _log_effective(args, cfg)
    try:
        detector = DetectorModel.load(args.detector)
        classifier = ShaRnnModel.load(args.classifier)
    except OSError as exc:
        raise PipelineError(f"cannot load model: {exc}") from exc
    out = open(args.out, "w", encoding="utf-8") if args.out else None
    n = failed = 0
    try:
        for result in run_pipeline(args.inputs, cfg, detector, classifier):
            n += 1
            failed += "error" in result
            _emit(result)
            if out:
                _emit(result, out)
    finally:
        if out:
            out.close()
    _emit({"summary": {"images": n, "succeeded": n - failed, "failed": failed}})
    return EXIT_OK


def cmd_synth(args):
    from .imaging import write_png
    from .synthetic import scene_corpus, solid_hue_dataset, tomato_thumbnail, detector_dataset

    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    args.seed = seed
    _log_effective(args)
    root = Path(args.out)
    if args.kind == "hue":
        images, labels = solid_hue_dataset(args.count, seed=seed)
        for i, (img, lab) in enumerate(zip(images, labels)):
            d = root / MaturityClass(lab).label
            d.mkdir(parents=True, exist_ok=True)
            write_png(img, d / f"{i:05d}.png")
    elif args.kind == "thumbs":
        rng = np.random.default_rng(seed)
        for i in range(args.count):
            for cls in MaturityClass:
                d = root / cls.label
                d.mkdir(parents=True, exist_ok=True)
                write_png(tomato_thumbnail(cls, rng), d / f"{i:05d}.png")
    elif args.kind == "detection":
        images, labels = detector_dataset(args.count, args.count, seed=seed)
        for i, (img, lab) in enumerate(zip(images, labels)):
            d = root / ("tomato" if lab else "not_tomato")
            d.mkdir(parents=True, exist_ok=True)
            write_png(img, d / f"{i:05d}.png")
    else:
        root.mkdir(parents=True, exist_ok=True)
        truth = []
        for i, scene in enumerate(scene_corpus(args.count, seed=seed)):
            path = root / f"scene_{i:04d}.png"
            write_png(scene.image, path)
            truth.append({"image": str(path), "tomatoes": [
                {"bbox": list(t.bbox), "class": t.cls.label} for t in scene.tomatoes]})
        (root / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _emit({"kind": args.kind, "out": str(root), "seed": seed})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=None, help="global seed (default: $RIPELINE_SEED or 0)")

    parser = argparse.ArgumentParser(prog="ripeline", description="Tomato detection and maturity classification.")
    parser.add_argument("--version", action="version", version=f"ripeline {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("segment", parents=[common, seeded], help="superpixel segmentation")
    p.add_argument("image")
    p.add_argument("--k", type=int)
    p.add_argument("--compactness", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True, help="16-bit label PNG; a .json sidecar is written next to it")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("grow", parents=[common, seeded], help="region growing over a label map")
    p.add_argument("--labels", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float, help="similarity threshold (delta E)")
    p.add_argument("--min-pixels", type=int)
    p.add_argument("--seed-order", choices=["redness", "size", "raster"])
    p.add_argument("--max-fraction", type=float)
    p.add_argument("--out")
    p.add_argument("--thumbs-dir")
    p.set_defaults(func=cmd_grow)

    p = sub.add_parser("ingest", help="build a manifest from class directories")
    p.add_argument("root")
    p.add_argument("--out", default="manifest.jsonl")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", parents=[seeded], help="stratified train/val split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--val-fraction", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[common, seeded], help="add affine-augmented records")
    p.add_argument("--manifest", required=True)
    p.add_argument("--count", type=int, required=True, help="augmented images per original")
    p.add_argument("--images-dir", help="write augmented PNGs here (otherwise records are virtual)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("detect-train", parents=[common, seeded], help="train the region validator")
    p.add_argument("--data", required=True, help="directory with tomato/ and not_tomato/ thumbnails")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect_train)

    p = sub.add_parser("detect", help="score thumbnails with a trained validator")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("train", parents=[common, seeded], help="train the maturity classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--val-split", default=None)
    p.add_argument("--d", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--fine-tune", type=int, metavar="EPOCHS",
                   help="second phase at one tenth of the learning rate")
    p.add_argument("--curve", help="write the per-epoch loss/accuracy curve as JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify thumbnails")
    p.add_argument("--model", required=True)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="evaluate a classifier on a manifest split")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--format", choices=["json", "csv", "svg"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common, seeded], help="end-to-end detection and classification")
    p.add_argument("inputs", nargs="+", help="images or directories")
    p.add_argument("--detector", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--jobs", type=int)
    p.add_argument("--threshold", type=float, help="tomato score threshold")
    p.add_argument("--out", help="also write JSON lines here")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("synth", parents=[seeded], help="write synthetic datasets")
    p.add_argument("kind", choices=["hue", "thumbs", "detection", "scenes"])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging():
    # own handler on the current stderr; repeated main() calls replace it
    for h in [h for h in log.handlers if getattr(h, "_ripeline", False)]:
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler._ripeline = True
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    _setup_logging()
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - top-level fatal error
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FATAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
