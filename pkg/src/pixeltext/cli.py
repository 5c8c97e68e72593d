"""Command line entry point: ``pixeltext <subcommand> ...``.

Exit codes: 0 success, 1 validation error (bad input, failed check, bad
flags), 2 I/O error.  The worker count for batch commands defaults to
``$PIXELTEXT_WORKERS`` (1 when unset).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import smap
from .annotations import (
    AnnotationError,
    format_detections,
    parse_detections,
    read_annotation,
)
from .decoder import EIGHT, DecodeConfig, PredictionMaps, decode
from .evaluation import match, report
from .geometry import GeometryError
from .labelgen import LabelConfig, LabelSet, generate_labels
from .losses import LAMBDA, GRAD_CHANNELS, gradients, mined_selection, total_loss
from .synth import SynthConfig, synth_corpus, write_corpus

WORKERS_ENV = "PIXELTEXT_WORKERS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _workers(value) -> int:
    if value is not None:
        return max(1, int(value))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _decode_cfg(args) -> DecodeConfig:
    return DecodeConfig(
        gamma=args.gamma,
        t_tr=args.t_tr,
        t_dpr=args.t_dpr,
        ts_binarize=args.ts_binarize,
        min_component_px=args.min_component_px,
        simplify_eps=args.simplify_eps,
        use_confidence=not args.no_confidence,
    )


def _add_decode_flags(p):
    p.add_argument("--gamma", type=float, default=0.54, help="mean skeleton score threshold")
    p.add_argument("--t-tr", type=float, default=0.2, help="text region pixel threshold")
    p.add_argument("--t-dpr", type=float, default=0.1, help="directional map pixel threshold")
    p.add_argument("--ts-binarize", type=float, default=0.2)
    p.add_argument("--min-component-px", type=int, default=5)
    p.add_argument("--simplify-eps", type=float, default=1.0)
    p.add_argument("--no-confidence", action="store_true", help="keep every skeleton candidate")


def labels_to_maps(labels: LabelSet) -> PredictionMaps:
    return PredictionMaps.from_labels(labels)


def maps_to_labels(maps: PredictionMaps) -> LabelSet:
    """Rebuild a LabelSet from a map file; instance ids are the 8-connected TR components."""
    ids, _ = ndimage.label(maps.tr > 0.5, structure=EIGHT)
    return LabelSet(
        ts=maps.ts,
        tr=maps.tr,
        dpr_up=maps.dpr_up,
        dpr_down=maps.dpr_down,
        dpr_left=maps.dpr_left,
        dpr_right=maps.dpr_right,
        instance_ids=ids.astype(np.int32),
    )


def cmd_gen_labels(args) -> int:
    ann = read_annotation(args.annotation, image_size=(args.width, args.height) if args.width else None)
    labels = generate_labels(ann.instances, ann.width, ann.height, LabelConfig(args.dots, args.r_frac))
    maps = labels_to_maps(labels)
    smap.save_maps(args.output, maps)
    if args.pgm_dir:
        out = Path(args.pgm_dir)
        for name in ("ts", "tr", "dpr_up", "dpr_down", "dpr_left", "dpr_right"):
            smap.atomic_write(out / f"{ann.image_id}_{name}.pgm", smap.to_pgm(getattr(maps, name)))
    print(f"{ann.image_id}: {len(ann.instances)} instances -> {args.output}")
    return 0


def cmd_decode(args) -> int:
    maps = smap.load_maps(args.maps)
    dets = decode(maps, _decode_cfg(args))
    text = format_detections(dets)
    if args.output:
        smap.atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    print(f"{len(dets)} detections", file=sys.stderr)
    return 0


def _load_dets(path: Path):
    return parse_detections(path.read_text())


def _pairs(dets: Path, gts: Path):
    if gts.is_dir():
        out = []
        for g in sorted(gts.glob("*.txt")):
            if g.name.endswith(".dets.txt"):
                continue
            d = dets / (g.stem + ".dets.txt") if dets.is_dir() else None
            if d is None or not d.exists():
                d2 = dets / g.name if dets.is_dir() else None
                d = d2 if d2 is not None and d2.exists() else None
            out.append((d, g))
        return out
    return [(dets, gts)]


def cmd_eval(args) -> int:
    results = []
    for d, g in _pairs(Path(args.dets), Path(args.gts)):
        ann = read_annotation(g)
        dets = _load_dets(d) if d is not None else []
        results.append(match(dets, ann.instances, args.iou, ignore=ann.ignore))
    rep = report(results)
    print(rep.summary())
    if args.json:
        smap.atomic_write(args.json, json.dumps(rep.as_dict(), indent=2))
    return 0


def _roundtrip_one(job):
    path, dcfg, lcfg, iou = job
    ann = read_annotation(path)
    labels = generate_labels(ann.instances, ann.width, ann.height, lcfg)
    dets = decode(labels_to_maps(labels), dcfg)
    return ann.image_id, len(ann.instances), len(dets), match(dets, ann.instances, iou, ignore=ann.ignore)


def cmd_roundtrip(args) -> int:
    files = sorted(p for p in Path(args.ann_dir).glob("*.txt") if not p.name.endswith(".dets.txt"))
    if not files:
        raise FileNotFoundError(f"no annotation files in {args.ann_dir}")
    dcfg = _decode_cfg(args)
    lcfg = LabelConfig(args.dots, args.r_frac)
    jobs = [(p, dcfg, lcfg, args.iou) for p in files]
    workers = _workers(args.workers)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_roundtrip_one, jobs))
    else:
        rows = [_roundtrip_one(j) for j in jobs]
    all_ious = []
    count_ok = 0
    for image_id, n_gt, n_det, m in rows:
        count_ok += n_gt == n_det
        all_ious.extend(m.ious)
        ious = " ".join(f"{v:.4f}" for v in m.ious)
        print(f"{image_id}: gt={n_gt} det={n_det} iou=[{ious}]")
    rep = report([r[3] for r in rows])
    mean_iou = float(np.mean(all_ious)) if all_ious else 1.0
    frac = float(np.mean(np.array(all_ious) >= 0.9)) if all_ious else 1.0
    print(f"images={len(rows)} count_match={count_ok} mean_iou={mean_iou:.4f} iou>=0.90: {frac:.4f}")
    print(rep.summary())
    return 0 if mean_iou >= 0.9 else 1


def loss_gradient_check(preds, labels, lam=LAMBDA, n_probe=200, h=1e-5, margin=1e-3, seed=0):
    """Max relative error of analytic vs central-difference gradients on probed entries.

    Probes skip entries within ``margin`` of the clamp range and the Smooth L1
    kink, and entries whose perturbation changes a hard-negative selection
    (the loss has a kink there).  Returns ``(max_rel_err, n_checked)``.
    """
    rng = np.random.default_rng(seed)
    grads = gradients(preds, labels, lam)
    base_sel = mined_selection(preds, labels)
    worst = 0.0
    checked = 0
    for _ in range(n_probe):
        name = GRAD_CHANNELS[rng.integers(len(GRAD_CHANNELS))]
        arr = getattr(preds, name)
        r, c = rng.integers(arr.shape[0]), rng.integers(arr.shape[1])
        v = float(arr[r, c])
        if v < margin or v > 1 - margin:
            continue
        probe = {k: np.array(getattr(preds, k), dtype=np.float64) for k in GRAD_CHANNELS}
        totals = []
        moved = False
        for step in (h, -h):
            probe[name][r, c] = v + step
            ns = _NS(probe)
            if name in base_sel and not np.array_equal(mined_selection(ns, labels)[name], base_sel[name]):
                moved = True
                break
            totals.append(total_loss(ns, labels, lam).total)
        if moved:
            continue
        num = (totals[0] - totals[1]) / (2 * h)
        ana = float(grads.channel(name)[r, c])
        denom = max(abs(num), abs(ana), 1e-8)
        worst = max(worst, abs(num - ana) / denom)
        checked += 1
    return worst, checked


class _NS:
    def __init__(self, d):
        self.__dict__.update(d)


def cmd_loss_check(args) -> int:
    pred = smap.load_maps(args.pred)
    gt = maps_to_labels(smap.load_maps(args.gt))
    if pred.shape != gt.tr.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.tr.shape}")
    lam = args.lam
    b = total_loss(pred, gt, lam)
    recomputed = lam * b.l_ts + b.l_dpr + b.l_tf + b.l_tr
    identity_ok = abs(b.total - recomputed) <= 1e-12 * max(1.0, abs(recomputed))
    err, checked = loss_gradient_check(pred, gt, lam, n_probe=args.probes)
    print(f"l_ts={b.l_ts:.10g} l_dpr={b.l_dpr:.10g} l_tf={b.l_tf:.10g} l_tr={b.l_tr:.10g}")
    print(f"total={b.total:.10g} lambda={lam} identity={'ok' if identity_ok else 'FAIL'}")
    print(f"gradient max_rel_err={err:.3e} over {checked} probes {'ok' if err < 1e-4 else 'FAIL'}")
    return 0 if identity_ok and err < 1e-4 else 1


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        count=args.count,
        size=(args.width, args.height),
        instances_per_image=(args.min_instances, args.max_instances),
        curvature=(args.min_curvature, args.max_curvature),
    )
    written = write_corpus(synth_corpus(cfg), args.out_dir)
    print(f"wrote {len(written)} annotation files to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pixeltext", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-labels", help="annotation -> label maps (SMAP)")
    g.add_argument("annotation")
    g.add_argument("output")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--dots", type=int, default=15)
    g.add_argument("--r-frac", type=float, default=0.2)
    g.add_argument("--pgm-dir", help="also export PGM previews here")
    g.set_defaults(func=cmd_gen_labels)

    d = sub.add_parser("decode", help="score maps -> polygon records")
    d.add_argument("maps")
    d.add_argument("-o", "--output")
    _add_decode_flags(d)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="precision / recall / F-measure")
    e.add_argument("dets", help="detection file or directory of <id>.dets.txt")
    e.add_argument("gts", help="annotation file or directory")
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--json", help="write the report as JSON here")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("roundtrip", help="labels -> decode -> eval on an annotation directory")
    r.add_argument("ann_dir")
    r.add_argument("--iou", type=float, default=0.5)
    r.add_argument("--dots", type=int, default=15)
    r.add_argument("--r-frac", type=float, default=0.2)
    r.add_argument("--workers", type=int)
    _add_decode_flags(r)
    r.set_defaults(func=cmd_roundtrip)

    lc = sub.add_parser("loss-check", help="loss breakdown + gradient check")
    lc.add_argument("pred")
    lc.add_argument("gt")
    lc.add_argument("--lambda", dest="lam", type=float, default=LAMBDA)
    lc.add_argument("--probes", type=int, default=200)
    lc.set_defaults(func=cmd_loss_check)

    s = sub.add_parser("synth", help="write a synthetic curved-text corpus")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--width", type=int, default=512)
    s.add_argument("--height", type=int, default=512)
    s.add_argument("--min-instances", type=int, default=1)
    s.add_argument("--max-instances", type=int, default=4)
    s.add_argument("--min-curvature", type=float, default=0.0)
    s.add_argument("--max-curvature", type=float, default=0.006)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (smap.MapFormatError, AnnotationError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
