"""Command line interface.

Each subcommand reads and writes the JSON documents of :mod:`linegrid.io`.
Exit status is 0 on success, 2 for bad input and 3 when an internal
consistency check fails; errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import io
from .bench import bench_nms, format_report
from .discretize import discretize
from .evaluation import EvalConfig, evaluate_many, format_table
from .extract import ExtractConfig, extract
from .geometry import GridSpec, ImageSegment, Representation
from .loss import LossWeights, grid_to_batch, total_loss
from .nms import PRESETS, NmsConfig, preset, suppress
from .oracle import OracleConfig, lane_scene, synth_oracle
from .pipeline import PipelineConfig, aggregate, run_pipeline
from .render import render_svg

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3


class InvariantError(RuntimeError):
    """An output failed a consistency check."""


def _emit(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _config(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _nms_config(args) -> NmsConfig:
    return preset(args.preset).with_overrides(
        tau_c=args.tau_c, epsilon=args.epsilon,
        lambda_m=args.lambda_m, lambda_l=args.lambda_l, lambda_d=args.lambda_d,
    )


def _eval_config(args) -> EvalConfig:
    kw = {}
    if args.tau_xy is not None:
        kw["tau_xy"] = args.tau_xy
    if args.tau_alpha is not None:
        kw["tau_alpha"] = args.tau_alpha
    if getattr(args, "undirected", False):
        kw["directed"] = False
    return EvalConfig(**kw)


def _extract_config(args) -> ExtractConfig:
    return ExtractConfig() if args.tau_s is None else ExtractConfig(min_segments=args.tau_s)


def _check_segments(segs: Sequence[ImageSegment], width: float, height: float) -> None:
    for s in segs:
        vals = (*s.start, *s.end, s.confidence)
        if not all(math.isfinite(v) for v in vals):
            raise InvariantError("non-finite segment coordinates")
        if not (0 <= s.start[0] <= width and 0 <= s.end[0] <= width
                and 0 <= s.start[1] <= height and 0 <= s.end[1] <= height):
            raise InvariantError("segment outside the image")
        if not 0.0 <= s.confidence <= 1.0:
            raise InvariantError("confidence outside [0, 1]")


# --- subcommands ------------------------------------------------------------


def cmd_discretize(args) -> int:
    doc = io.read(args.gt, io.PolylineFile.SCHEMA)
    spec = GridSpec(doc.width, doc.height, args.cell_px)
    cells = discretize(doc.polylines, spec, args.representation)
    _emit(args.out, io.render_doc(io.CellGroundTruthFile(spec, Representation(args.representation), cells,
                                                         io.make_meta(_config(args)))))
    return EXIT_OK


def cmd_loss(args) -> int:
    gt = io.read(args.gt, io.CellGroundTruthFile.SCHEMA)
    pred = io.read(args.pred, io.PredictorGridFile.SCHEMA)
    if gt.spec != pred.grid.spec or gt.representation is not pred.grid.representation:
        raise io.FormatError("ground truth and predictions use different grids or representations")
    w = LossWeights(args.w_loc, args.w_resp, args.w_noresp, args.w_cls)
    bd = total_loss(gt.cells, pred.grid, w)
    if not math.isfinite(bd.total) or bd.total < 0:
        raise InvariantError(f"invalid loss value {bd.total}")
    report = {"meta": io.make_meta(_config(args)), "loss": asdict(bd)}
    _emit(args.out, io.dumps(report))
    return EXIT_OK


def _scene_or_file(args):
    if args.gt:
        doc = io.read(args.gt, io.PolylineFile.SCHEMA)
        return doc
    spec = GridSpec(args.width, args.height, args.cell_px)
    lanes = lane_scene(spec, np.random.default_rng(args.seed))
    return io.PolylineFile(args.width, args.height, lanes, meta=io.make_meta(_config(args)))


def cmd_synth(args) -> int:
    doc = _scene_or_file(args)
    spec = GridSpec(doc.width, doc.height, args.cell_px)
    cells = discretize(doc.polylines, spec, args.representation)
    cfg = OracleConfig(args.jitter, args.duplicates, args.spurious,
                       (0.0, args.spurious_max), (args.matched_min, 1.0), seed=args.seed)
    rep = synth_oracle(cells, spec, args.representation, args.predictors, args.classes, cfg)
    meta = io.make_meta({**_config(args), "overflow": rep.overflow, "emitted": rep.emitted})
    _emit(args.out, io.render_doc(io.PredictorGridFile(rep.grid, meta)))
    if args.gt_out:
        doc.meta = io.make_meta(_config(args))
        io.write(args.gt_out, doc)
    return EXIT_OK


def cmd_nms(args) -> int:
    doc = io.read(args.pred, (io.PredictorGridFile.SCHEMA, io.SegmentFile.SCHEMA))
    cfg = _nms_config(args)
    if isinstance(doc, io.PredictorGridFile):
        spec = doc.grid.spec
        segments = grid_to_batch(doc.grid)
        kappa = spec.kappa
        size = (spec.image_width, spec.image_height)
    else:
        kappa = args.cell_px / 32.0
        size = (doc.width, doc.height)
        segments = doc.segments
    res = suppress(segments, cfg, kappa, size)
    _check_segments(res.segments, *size)
    meta = io.make_meta({**_config(args), "nms": asdict(cfg), "clusters": len(res.segments),
                         "noise": res.noise_count, "kept": res.kept_count})
    _emit(args.out, io.render_doc(io.SegmentFile(size[0], size[1], res.segments, meta)))
    return EXIT_OK


def cmd_extract(args) -> int:
    doc = io.read(args.segments, io.SegmentFile.SCHEMA)
    spec = GridSpec(doc.width, doc.height, args.cell_px)
    cfg = _extract_config(args)
    lanes = extract(doc.segments, cfg, spec)
    meta = io.make_meta({**_config(args), "extract": asdict(cfg)})
    polys = [p.to_polyline() for p in lanes]
    _emit(args.out, io.render_doc(io.PolylineFile(doc.width, doc.height, polys, meta=meta)))
    return EXIT_OK


def _prediction_items(doc) -> List:
    if isinstance(doc, io.SegmentFile):
        return doc.segments
    return doc.polylines


def cmd_eval(args) -> int:
    if len(args.gt) != len(args.pred):
        raise io.FormatError("--gt and --pred need the same number of files")
    cfg = _eval_config(args)
    pairs = []
    for g, p in zip(args.gt, args.pred):
        gdoc = io.read(g, io.PolylineFile.SCHEMA)
        pdoc = io.read(p, (io.PolylineFile.SCHEMA, io.SegmentFile.SCHEMA))
        pairs.append((gdoc.polylines, _prediction_items(pdoc)))
    agg, per_image = evaluate_many(pairs, cfg)
    report = {
        "meta": io.make_meta({**_config(args), "eval": asdict(cfg)}),
        "aggregate": agg.as_dict(),
        "per_image": [{"gt": g, "pred": p, **r.as_dict()} for g, p, r in zip(args.gt, args.pred, per_image)],
    }
    _emit(args.out, io.dumps(report))
    if args.table:
        sys.stderr.write(format_table(agg, cfg) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench_nms(((args.rows, args.cols),), (args.predictors,), args.repetitions,
                     _nms_config(args), args.cell_px, args.seed)
    report = {"meta": io.make_meta(_config(args)), "results": [r.as_dict() for r in rows]}
    _emit(args.out, io.dumps(report))
    sys.stderr.write(format_report(rows) + "\n")
    return EXIT_OK


def cmd_render(args) -> int:
    width = height = None
    gt = segs = polys = ()
    if args.gt:
        d = io.read(args.gt, io.PolylineFile.SCHEMA)
        gt, width, height = d.polylines, d.width, d.height
    if args.segments:
        d = io.read(args.segments, io.SegmentFile.SCHEMA)
        segs, width, height = d.segments, d.width, d.height
    if args.polylines:
        d = io.read(args.polylines, io.PolylineFile.SCHEMA)
        polys, width, height = d.polylines, d.width, d.height
    if width is None:
        raise io.FormatError("render needs at least one of --gt, --segments, --polylines")
    _emit(args.out, render_svg(width, height, args.cell_px, segs, polys, gt))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig(
        width=args.width, height=args.height, cell_px=args.cell_px,
        representation=args.representation, predictors=args.predictors,
        jitter_sigma=args.jitter, duplicates=args.duplicates, spurious_rate=args.spurious,
        nms=_nms_config(args), extract=_extract_config(args),
        eval=EvalConfig(tau_xy=5.0 if args.tau_xy is None else args.tau_xy,
                        tau_alpha=0.2 if args.tau_alpha is None else args.tau_alpha),
    )
    results = run_pipeline(cfg, args.seed, args.scenes, args.jobs)
    out = Path(args.out or "pipeline_out")
    out.mkdir(parents=True, exist_ok=True)
    meta = io.make_meta({**_config(args), "pipeline": cfg.as_dict()})
    w, h = cfg.width, cfg.height
    for r in results:
        _check_segments(r.clusters.segments, w, h)
        stem = out / f"scene_{r.index:03d}"
        io.write(f"{stem}_gt.json", io.PolylineFile(w, h, r.ground_truth, meta=meta))
        io.write(f"{stem}_pred.json", io.PredictorGridFile(r.grid, meta))
        io.write(f"{stem}_nms.json", io.SegmentFile(w, h, r.clusters.segments, meta))
        io.write(f"{stem}_lanes.json", io.PolylineFile(w, h, [p.to_polyline() for p in r.lanes], meta=meta))
        svg = render_svg(w, h, cfg.cell_px, r.clusters.segments, r.lanes, r.ground_truth,
                         title=f"scene {r.index}")
        Path(f"{stem}.svg").write_text(svg, encoding="utf-8")
    report = {"meta": meta, "aggregate": aggregate(results),
              "per_scene": [{"scene": r.index, "seed": r.seed, **r.metrics} for r in results]}
    (out / "metrics.json").write_text(io.dumps(report), encoding="utf-8")
    sys.stdout.write(io.dumps(report["aggregate"]))
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _add_nms_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default="tusimple")
    p.add_argument("--tau-c", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lambda-m", type=float)
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--lambda-d", type=float)


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-xy", type=float, help="position radius in px (max-norm)")
    p.add_argument("--tau-alpha", type=float, help="orientation radius in rad")


def _add_grid_flags(p: argparse.ArgumentParser, representation: bool = True) -> None:
    p.add_argument("--cell-px", type=int, choices=(32, 16, 8), default=32)
    if representation:
        p.add_argument("--representation", choices=[r.value for r in Representation], default="cartesian")


def _add_oracle_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--predictors", type=int, default=8)
    p.add_argument("--jitter", type=float, default=2.0, help="endpoint jitter sigma in px")
    p.add_argument("--duplicates", type=int, default=4)
    p.add_argument("--spurious", type=float, default=0.1, help="spurious rate for free slots")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linegrid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discretize", help="polylines -> per-cell chords")
    p.add_argument("--gt", required=True)
    _add_grid_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("loss", help="training loss of a predictor grid against cell ground truth")
    p.add_argument("--gt", required=True, help="cellgt/1 file")
    p.add_argument("--pred", required=True, help="predgrid/1 file")
    for name in ("loc", "resp", "noresp", "cls"):
        p.add_argument(f"--w-{name}", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("synth", help="noisy predictor grid from ground truth or a random lane scene")
    p.add_argument("--gt", help="polylines/1 file; a random scene is generated when omitted")
    p.add_argument("--gt-out", help="write the (generated) ground truth here")
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=640)
    _add_grid_flags(p)
    _add_oracle_flags(p)
    p.add_argument("--classes", type=int, default=0)
    p.add_argument("--spurious-max", type=float, default=0.3)
    p.add_argument("--matched-min", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("nms", help="suppress duplicate segments")
    p.add_argument("--pred", required=True, help="predgrid/1 or segments/1 file")
    _add_nms_flags(p)
    _add_grid_flags(p, representation=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("extract", help="lane polylines from suppressed segments")
    p.add_argument("--segments", required=True)
    _add_grid_flags(p, representation=False)
    p.add_argument("--tau-s", type=int, help="minimum number of levels per lane")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="sampled-point precision / recall")
    p.add_argument("--gt", required=True, nargs="+")
    p.add_argument("--pred", required=True, nargs="+")
    _add_eval_flags(p)
    p.add_argument("--undirected", action="store_true")
    p.add_argument("--table", action="store_true", help="also print a text table on stderr")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time suppression on synthetic frames")
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=20)
    p.add_argument("--predictors", type=int, default=8)
    p.add_argument("--repetitions", type=int, default=100)
    _add_nms_flags(p)
    _add_grid_flags(p, representation=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="SVG of ground truth, segments and polylines")
    p.add_argument("--gt")
    p.add_argument("--segments")
    p.add_argument("--polylines")
    p.add_argument("--cell-px", type=int, choices=(32, 16, 8), default=32)
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="synth -> nms -> extract -> eval on random lane scenes")
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=640)
    _add_grid_flags(p)
    _add_oracle_flags(p)
    _add_nms_flags(p)
    _add_eval_flags(p)
    p.add_argument("--tau-s", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_pipeline)
    return ap


def _fail(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": str(exc), "kind": kind, "type": type(exc).__name__}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantError as exc:
        return _fail(EXIT_INTERNAL, "invariant", exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except Exception as exc:  # noqa: BLE001 - last-resort report
        return _fail(EXIT_INTERNAL, "internal", exc)


if __name__ == "__main__":
    sys.exit(main())
