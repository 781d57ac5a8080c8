"""Command-line front end for the screening pipeline.

Exit codes: 0 success, 1 classification-pipeline failure, 2 I/O error,
3 validation error, 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import baselines, evaluation, features, ingest, netcore, synth, widedeep

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_USAGE = 64

GRID_SPACING = 100  # px; heatmap cells snap to the nearest grid cell


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_dataset_args(sub, jobs=True):
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--manifest", type=Path, help="manifest CSV of slides")
    group.add_argument("--features", type=Path, help="precomputed feature CSV")
    if jobs:
        sub.add_argument("--jobs", type=int, default=1,
                         help="parallel workers (default 1)")


def _add_train_args(sub):
    sub.add_argument("--seed", type=int, required=True,
                     help="master seed; all randomness derives from it")
    sub.add_argument("--epochs", type=int, default=10000)
    sub.add_argument("--lr", type=float, default=1e-3)


def build_parser() -> _Parser:
    parser = _Parser(prog="slidescreen",
                     description="slide-level cancer screening pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", parents=[], help="generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--slides-per-label", type=int, default=100)
    p.add_argument("--grid", type=int, default=20, help="patches per side")
    p.add_argument("--blobs", type=int, nargs=2, default=[1, 3],
                   metavar=("MIN", "MAX"))
    p.add_argument("--blob-radius", type=float, nargs=2, default=[2.0, 5.0],
                   metavar=("MIN", "MAX"))
    p.add_argument("--noise-rate", type=float, default=0.02)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("extract", help="compute per-slide feature vectors")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="feature CSV path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = subs.add_parser("cv", help="stratified K-fold cross-validation")
    _add_dataset_args(p)
    p.add_argument("--model", choices=baselines.CLASSIFIER_KINDS,
                   default="widedeep")
    p.add_argument("--k", type=int, default=5)
    _add_train_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_cv)

    p = subs.add_parser("compare", help="cross-validate all classifiers")
    _add_dataset_args(p)
    p.add_argument("--models", nargs="+", choices=baselines.CLASSIFIER_KINDS,
                   default=list(baselines.CLASSIFIER_KINDS))
    p.add_argument("--k", type=int, default=5)
    _add_train_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("train", help="train the wide-and-deep model")
    _add_dataset_args(p)
    _add_train_args(p)
    p.add_argument("--out", type=Path, required=True, help="model file path")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("predict", help="classify one slide with a trained model")
    p.add_argument("--model", type=Path, required=True, help="model file")
    p.add_argument("--slide", type=Path, required=True, help="patch CSV")
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("heatmap", help="export a probability grid for a slide")
    p.add_argument("--slide", type=Path, required=True, help="patch CSV")
    p.add_argument("--out", type=Path, required=True, help="grid CSV path")
    p.set_defaults(func=cmd_heatmap)

    return parser


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        n_slides_per_label=args.slides_per_label,
        grid_extent=args.grid,
        blob_count_range=(args.blobs[0], args.blobs[1]),
        blob_radius_range=(args.blob_radius[0], args.blob_radius[1]),
        noise_rate=args.noise_rate,
        seed=args.seed,
    )
    try:
        cfg.validate()
    except synth.InvalidConfig as exc:
        raise UsageError(str(exc)) from None
    manifest_path = synth.write_dataset(synth.generate_dataset(cfg), args.out)
    print(f"wrote {2 * cfg.n_slides_per_label} slides to {manifest_path}")
    return EXIT_OK


def _extract_entry(entry: ingest.ManifestEntry):
    slide = ingest.load_slide(entry)
    return slide.slide_id, slide.label, features.extract_features(slide)


def _extract_all(manifest: ingest.DatasetManifest, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_extract_entry, manifest.entries))
    return [_extract_entry(entry) for entry in manifest.entries]


def cmd_extract(args) -> int:
    _check_jobs(args)
    manifest = ingest.load_manifest(args.manifest)
    rows = _extract_all(manifest, args.jobs)
    features.write_features_csv(rows, args.out)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return EXIT_OK


def _load_examples(args) -> list[evaluation.LabeledExample]:
    if args.features is not None:
        rows = features.read_features_csv(args.features)
    else:
        manifest = ingest.load_manifest(args.manifest)
        rows = _extract_all(manifest, getattr(args, "jobs", 1))
    return [evaluation.LabeledExample(slide_id, fv, label)
            for slide_id, label, fv in rows]


def _check_jobs(args) -> None:
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be >= 1")


def _check_k(args) -> None:
    if args.k < 2:
        raise UsageError("--k must be >= 2")


def _train_config(args) -> netcore.TrainConfig:
    try:
        return netcore.TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                                   seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_cv(args) -> int:
    _check_jobs(args)
    _check_k(args)
    config = _train_config(args)
    examples = _load_examples(args)
    factory = baselines.classifier_factory(args.model, config)
    report = evaluation.cross_validate(examples, factory, args.k, args.seed,
                                       jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_csv(report, args.out / "report.csv")
    evaluation.write_report_json(report, args.out / "report.json")
    print(f"wrote {args.out / 'report.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    _check_jobs(args)
    _check_k(args)
    config = _train_config(args)
    examples = _load_examples(args)
    reports = baselines.run_comparison(examples, args.k, args.seed, config,
                                       kinds=args.models, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    baselines.write_comparison_csv(reports, args.out / "comparison.csv")
    baselines.write_comparison_json(reports, args.out / "comparison.json")
    print(f"wrote {args.out / 'comparison.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    _check_jobs(args)
    config = _train_config(args)
    examples = _load_examples(args)
    net = widedeep.train_widedeep([e.features for e in examples],
                                  [e.label for e in examples], config)
    meta = {"seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr,
            "n_training_slides": len(examples)}
    netcore.save_model(net, args.out, widedeep.WIDEDEEP_TAG, meta)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    net, topology, _ = netcore.load_model(args.model)
    if topology != widedeep.WIDEDEEP_TAG:
        raise netcore.ModelFormatError(
            f"{args.model}: topology {topology!r} is not {widedeep.WIDEDEEP_TAG!r}"
        )
    patches = ingest.load_patches(args.slide)
    slide = ingest.SlideRecord(args.slide.stem, ingest.NORMAL, patches)
    label, p = widedeep.predict_slide(net, features.extract_features(slide))
    print(f"{ingest.LABEL_NAMES[label]} {p:.9f}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    patches = ingest.load_patches(args.slide)
    lines = []
    if patches:
        # snap each patch center to its nearest grid cell; on collision the
        # highest probability wins
        cells: dict[tuple[int, int], float] = {}
        for p in patches:
            row = (p.y + GRID_SPACING // 2) // GRID_SPACING
            col = (p.x + GRID_SPACING // 2) // GRID_SPACING
            key = (row, col)
            if key not in cells or p.prob_malignant > cells[key]:
                cells[key] = p.prob_malignant
        rows = [r for r, _ in cells]
        cols = [c for _, c in cells]
        for r in range(min(rows), max(rows) + 1):
            line = []
            for c in range(min(cols), max(cols) + 1):
                value = cells.get((r, c))
                line.append("" if value is None else repr(value))
            lines.append(",".join(line))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        for line in lines:
            fh.write(line + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"slidescreen: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ingest.MissingFile as exc:
        print(f"slidescreen: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ingest.MalformedRow, ingest.ProbabilityOutOfRange,
            ingest.DuplicateSlideId, synth.InvalidConfig) as exc:
        print(f"slidescreen: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            netcore.ModelFormatError) as exc:
        print(f"slidescreen: {exc}", file=sys.stderr)
        return EXIT_IO
    except (netcore.SingleClassDataset, netcore.EmptyDataset,
            evaluation.TooFewExamples, evaluation.SingleClassScores,
            evaluation.EmptyEvaluation, baselines.NotFitted, ValueError) as exc:
        print(f"slidescreen: pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
