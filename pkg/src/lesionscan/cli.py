"""Command-line entry points for the full pipeline.

Subcommands: train, eval, crossval, scan, synth, serve. Machine-readable
output (one ``name=path`` line per artifact) goes to stdout; human
messages go to stderr. Exit codes: 0 success, 2 bad arguments or
configuration, 3 data or model-file errors, 4 training divergence.

The delimited artifacts (CSV, JSON) are the normative outputs; train,
eval, and crossval additionally render PNG figures of the same data next
to them unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dataset as dataset_mod
from . import metrics as metrics_mod
from . import network as network_mod
from . import scanner as scanner_mod
from . import training as training_mod
from .errors import ConfigError, DatasetError, DivergenceError, ModelFormatError
from .scanner import Roi, ScanConfig
from .training import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _emit(name: str, path) -> None:
    print(f"{name}={path}")


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        dropout_rate=args.dropout,
        seed=args.seed,
        threshold=args.threshold,
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=100, help="training epochs (default 100)")
    parser.add_argument("--batch-size", type=int, default=32, help="mini-batch size (default 32)")
    parser.add_argument("--lr", type=float, default=0.001, help="learning rate (default 0.001)")
    parser.add_argument("--momentum", type=float, default=0.9, help="SGD momentum (default 0.9)")
    parser.add_argument("--dropout", type=float, default=0.5, help="dropout rate (default 0.5)")
    parser.add_argument("--seed", type=int, default=0, help="seed for init, shuffle, and splits")
    parser.add_argument("--threshold", type=float, default=0.5,
                        help="decision threshold (default 0.5)")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip rendering PNG figures next to the CSV/JSON outputs")


def _parse_roi(text: str) -> Roi:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--roi must be x,y,width,height, got {text!r}")
    try:
        x, y, w, h = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--roi components must be integers, got {text!r}") from exc
    return Roi(x=x, y=y, width=w, height=h)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    ds = dataset_mod.load_dataset(args.data)
    train_set, val_set, test_set = dataset_mod.split(
        ds, dataset_mod.SplitSpec(seed=cfg.seed)
    )
    net = network_mod.build_disordernet(seed=cfg.seed, dropout_rate=cfg.dropout_rate)
    print(
        f"training on {len(train_set)} patches "
        f"(val {len(val_set)}, test {len(test_set)}), {cfg.epochs} epochs",
        file=sys.stderr,
    )
    history = training_mod.train(net, train_set, val_set, cfg)

    out_model = Path(args.out)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    network_mod.save_model(net, out_model)
    _emit("model", out_model)

    stem = out_model.parent / out_model.stem
    history_path = Path(f"{stem}.history.csv")
    training_mod.export_history(history, history_path)
    _emit("history", history_path)

    scores = network_mod.score_patches(net, test_set.images())
    scored = list(zip(scores.tolist(), [int(v) for v in test_set.labels()]))
    counts = metrics_mod.confusion(scored, threshold=cfg.threshold)
    report_path = Path(f"{stem}.report.json")
    metrics_mod.export_report(metrics_mod.report(counts), report_path, counts=counts)
    _emit("report", report_path)

    if not args.no_figures:
        from . import figures

        loss_path, acc_path = Path(f"{stem}.loss.png"), Path(f"{stem}.accuracy.png")
        figures.render_history(history, loss_path, acc_path)
        _emit("figure_loss", loss_path)
        _emit("figure_accuracy", acc_path)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    net = network_mod.load_model(args.model)
    ds = dataset_mod.load_dataset(args.data)
    scores = network_mod.score_patches(net, ds.images())
    scored = list(zip(scores.tolist(), [int(v) for v in ds.labels()]))
    counts = metrics_mod.confusion(scored, threshold=args.threshold)
    curve = metrics_mod.roc(scored)

    prefix = Path(args.out_prefix) if args.out_prefix else Path(args.model).with_suffix("")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    report_path = Path(f"{prefix}.report.json")
    metrics_mod.export_report(metrics_mod.report(counts), report_path, counts=counts)
    _emit("report", report_path)
    roc_path = Path(f"{prefix}.roc.csv")
    metrics_mod.export_roc(curve, roc_path)
    _emit("roc", roc_path)

    if not args.no_figures:
        from . import figures

        roc_png = Path(f"{prefix}.roc.png")
        figures.render_roc(curve, roc_png)
        _emit("figure_roc", roc_png)
    return EXIT_OK


def cmd_crossval(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    if args.k < 2:
        raise ConfigError(f"--k must be >= 2, got {args.k}")
    ds = dataset_mod.load_dataset(args.data)
    report, curves = metrics_mod.cross_validate_detailed(ds, args.k, cfg)

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    report_path = Path(f"{prefix}.crossval.json")
    metrics_mod.export_crossval(report, report_path)
    _emit("crossval", report_path)
    for round_no, curve in enumerate(curves, start=1):
        roc_path = Path(f"{prefix}.round{round_no}.roc.csv")
        metrics_mod.export_roc(curve, roc_path)
        _emit(f"roc_round{round_no}", roc_path)
        if not args.no_figures:
            from . import figures

            roc_png = Path(f"{prefix}.round{round_no}.roc.png")
            figures.render_roc(curve, roc_png, title=f"ROC, round {round_no}")
            _emit(f"figure_round{round_no}", roc_png)
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    net = network_mod.load_model(args.model)
    image = dataset_mod.load_image_rgb(args.image)
    if args.roi:
        roi = _parse_roi(args.roi)
    else:
        roi = Roi(x=0, y=0, width=image.shape[1], height=image.shape[0])
    cfg = ScanConfig(stride=args.stride, threshold=args.threshold, merge=args.merge)
    result, marked = scanner_mod.scan(image, roi, net, cfg)
    print(
        f"scanned {result.windows_scanned} windows, {len(result.detections)} detections",
        file=sys.stderr,
    )

    image_path = Path(args.image)
    if args.out:
        marked_path = Path(args.out)
        sidecar_path = marked_path.with_suffix(".detections.json")
    else:
        marked_path = image_path.with_suffix(".marked.png")
        sidecar_path = image_path.with_suffix(".detections.json")
    marked_path.parent.mkdir(parents=True, exist_ok=True)
    dataset_mod.save_image_rgb(marked_path, marked)
    scanner_mod.export_detections(
        scanner_mod.ScanResult(result.detections, result.windows_scanned, str(marked_path)),
        sidecar_path,
    )
    _emit("marked", marked_path)
    _emit("detections", sidecar_path)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    ds = dataset_mod.synth_patches(args.n, class_balance=args.balance, seed=args.seed)
    manifest_path = dataset_mod.write_dataset(ds, args.out)
    _emit("manifest", manifest_path)
    if args.face:
        face, centers = dataset_mod.synth_face(
            seed=args.seed, size=(args.face_size, args.face_size), lesions=args.face_lesions
        )
        face_path = Path(args.face)
        face_path.parent.mkdir(parents=True, exist_ok=True)
        dataset_mod.save_patch_png(face_path, face)
        print(f"planted lesion centers: {centers}", file=sys.stderr)
        _emit("face", face_path)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from . import service

    app = service.create_app(args.images, args.patches, ui_dir=args.ui)
    import uvicorn

    print(f"serving on http://{args.host}:{args.port}", file=sys.stderr)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionscan",
        description="Facial skin-lesion patch classifier: train, evaluate, scan, annotate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier on a patch manifest")
    p.add_argument("--data", required=True, help="manifest CSV of labeled patches")
    p.add_argument("--out", required=True, help="output model file")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a patch manifest")
    p.add_argument("--data", required=True, help="manifest CSV of labeled patches")
    p.add_argument("--model", required=True, help="model file to evaluate")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out-prefix", default="", help="artifact prefix (default: model path stem)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossval", help="k-fold cross-validation on a patch manifest")
    p.add_argument("--data", required=True, help="manifest CSV of labeled patches")
    p.add_argument("--k", type=int, required=True, help="number of folds (>= 2)")
    p.add_argument("--out-prefix", default="crossval", help="artifact prefix")
    _add_train_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("scan", help="slide a window over a face region and mark lesions")
    p.add_argument("--image", required=True, help="face image (8-bit RGB PNG)")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--roi", default="", help="region x,y,width,height (default: whole image)")
    p.add_argument("--stride", type=int, default=25)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--merge", choices=("none", "union"), default="none")
    p.add_argument("--out", default="", help="marked image path (default: <image>.marked.png)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("synth", help="generate a synthetic labeled patch set")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n", type=int, default=2000, help="number of patches (default 2000)")
    p.add_argument("--balance", type=float, default=0.5, help="lesion fraction (default 0.5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--face", default="", help="also write a synthetic face image here")
    p.add_argument("--face-size", type=int, default=300)
    p.add_argument("--face-lesions", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the annotation backend")
    p.add_argument("--images", required=True, help="directory of source face PNGs")
    p.add_argument("--patches", required=True, help="directory for cropped patches + manifest")
    p.add_argument("--ui", default=None, help="built UI bundle to serve at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
