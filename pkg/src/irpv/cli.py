"""Command line front end: extract, simulate, evaluate, serve."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .pipeline import RunConfig, run_plant
from .plantgraph import PlantId
from .segmentation import Box, evaluate_frames
from .server import PortInUse, serve
from .simulate import simulate_scene
from .voting import (
    AnomalyClass,
    classification_report,
    pool_predictions,
    read_predictions_csv,
)

_BOX_HEADER = ("frame_index", "x_min", "y_min", "x_max", "y_max")
_PRED_HEADER = ("plant_id", "ordinal", "label", "confidence")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irpv",
        description="Per-plant rectified patch extraction from aerial IR scans of PV plants",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run the extraction pipeline from a run config")
    p.add_argument("--config", required=True, help="run config JSON path")
    p.add_argument("--workers", type=int, default=None, help="override config workers")

    p = sub.add_parser("simulate", help="render a synthetic scene with ground truth")
    p.add_argument("--scene", required=True, help="scene config JSON path")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser(
        "evaluate",
        help="score predictions against truth: detection boxes, or patch "
        "class predictions pooled per module by majority vote",
    )
    p.add_argument("--pred", required=True, help="predictions CSV (kind sniffed from header)")
    p.add_argument("--truth", required=True, help="ground truth CSV")
    p.add_argument("--mode", choices=("pooled", "per_frame"), default="pooled")
    p.add_argument("--out", default=None, help="also write the report JSON here")

    p = sub.add_parser("serve", help="serve the run inspection and row grouping API")
    p.add_argument("--config", required=True, help="run config JSON path")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", default=None, help="static UI directory")
    p.add_argument("--host", default="127.0.0.1")
    return parser


def _read_boxes(path: str) -> dict[int, list[Box]]:
    """Boxes CSV (frame_index,x_min,y_min,x_max,y_max) grouped by frame."""
    out: dict[int, list[Box]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != _BOX_HEADER:
            raise ValueError(f"{path}: expected header {','.join(_BOX_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{path}: expected 5 fields, got {len(row)}")
            frame = int(row[0])
            box = (float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            out.setdefault(frame, []).append(box)
    return out


def _cmd_extract(args) -> int:
    config = RunConfig.from_json(args.config)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    run = run_plant(config)
    for row in run.summary["rows"]:
        if row["status"] == "ok":
            print(
                f"{row['row_id']}: ok, {row['modules_extracted']} modules, "
                f"{row['patches_extracted']} patches "
                f"({row['patches_dropped_sun']} dropped as reflections)"
            )
        else:
            print(f"{row['row_id']}: failed [{row['reason']}] {row['detail']}")
    totals = run.summary["totals"]
    print(
        f"done: {totals['rows_ok']} rows ok, {totals['rows_failed']} failed, "
        f"{totals['patches_extracted']} patches -> {run.out_dir}"
    )
    return 0


def _cmd_simulate(args) -> int:
    scene = json.loads(Path(args.scene).read_text(encoding="utf-8"))
    truth = simulate_scene(scene, args.out)
    print(f"{len(truth.homographies)} frames, {len(truth.row_specs)} rows -> {truth.out_dir}")
    return 0


def _sniff_header(path: str) -> tuple[str, ...]:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ValueError(f"{path}: empty file")
    return tuple(h.strip() for h in header)


def _read_truth_labels(path: str) -> dict[PlantId, AnomalyClass]:
    """Truth CSV with header plant_id,label."""
    out: dict[PlantId, AnomalyClass] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("plant_id", "label"):
            raise ValueError(f"{path}: expected header plant_id,label")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected 2 fields, got {len(row)}")
            out[PlantId.parse(row[0])] = AnomalyClass(row[1])
    return out


def _cmd_evaluate(args) -> int:
    if _sniff_header(args.pred) == _PRED_HEADER:
        voted = pool_predictions(read_predictions_csv(args.pred))
        truth = _read_truth_labels(args.truth)
        report = classification_report(truth, voted).to_dict()
        text = json.dumps(report, indent=2, sort_keys=True)
        print(text)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        return 0
    pred = _read_boxes(args.pred)
    truth = _read_boxes(args.truth)
    frames = sorted(set(pred) | set(truth))
    if not frames:
        raise ValueError("no frames in either boxes file")
    per_frame = [(pred.get(f, []), truth.get(f, [])) for f in frames]
    ev = evaluate_frames(per_frame, mode=args.mode)
    print("iou_threshold precision recall f1")
    for k, tau in enumerate(ev.iou_thresholds):
        print(f"{tau:.2f} {ev.precision[k]:.4f} {ev.recall[k]:.4f} {ev.f1[k]:.4f}")
    print(f"ap {ev.ap:.4f}")
    if args.out:
        doc = {
            "iou_thresholds": list(ev.iou_thresholds),
            "precision": list(ev.precision),
            "recall": list(ev.recall),
            "f1": list(ev.f1),
            "ap": ev.ap,
        }
        Path(args.out).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_serve(args) -> int:
    config = RunConfig.from_json(args.config)
    print(f"serving on http://{args.host}:{args.port}")
    try:
        serve(config, args.port, args.static, args.host)
    except KeyboardInterrupt:
        pass
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "extract": _cmd_extract,
        "simulate": _cmd_simulate,
        "evaluate": _cmd_evaluate,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except PortInUse as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
