"""Command-line interface.

Subcommands: train-student, loss, segment, probe-train, eval-miou,
map-build, map-query, map-classify, convert, info, serve. Numeric output
is printed as plain decimal text, one record per line.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .closedset import evaluate_miou, probe_predict, train_linear_probe
from .core import SuppressionConfig, TeacherVolume, assemble_teacher_volume, refine_records
from .distill import TrainConfig, cosine_distill_loss, init_student_params, train_student
from .errors import BadSchema, DveError
from .map3d import MapBuilder, backproject, map_classify, map_insert, map_freeze
from .service import (
    EmbedderConfig,
    SessionState,
    classify_with_bank,
    embed_prompt,
    map_query_multi,
    session_load,
)
from .storage import (
    file_info,
    load_embedding_bank,
    load_json_manifest,
    load_probe,
    load_scan_manifest,
    read_label_map,
    read_map3d,
    read_mask_map,
    read_segment_records,
    read_volume,
    save_probe,
    save_student_params,
    write_label_map,
    write_map3d,
    write_volume,
)


def _load_teacher_sample(entry: dict, alpha: float):
    features = read_volume(entry["features"])
    mask = read_mask_map(entry["mask"])
    records = read_segment_records(entry["segments"])
    refined = refine_records(records, SuppressionConfig(alpha=alpha))
    dim = next(iter(records.values())).raw_embedding.shape[0]
    teacher = assemble_teacher_volume(mask, refined, dim)
    return features, teacher


def cmd_train_student(args) -> int:
    manifest = load_json_manifest(args.manifest)
    alpha = float(manifest.get("alpha", SuppressionConfig().alpha))
    samples = [_load_teacher_sample(entry, alpha) for entry in manifest["samples"]]
    if not samples:
        raise BadSchema(f"{args.manifest}: no samples")
    feature_dim = samples[0][0].shape[2]
    embed_dim = samples[0][1].dim
    hidden = [int(h) for h in args.hidden.split(",") if h] if args.hidden else []
    init = init_student_params([feature_dim, *hidden, embed_dim], seed=args.seed)
    cfg = TrainConfig(
        learning_rate=args.lr, iterations=args.iters,
        optimizer=args.optimizer, seed=args.seed,
    )
    params, history = train_student(samples, cfg, init)
    for i, loss in enumerate(history):
        print(f"iter {i} loss {loss}")
    save_student_params(params, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_loss(args) -> int:
    pred = read_volume(args.pred)
    teacher_map = read_volume(args.teacher)
    mask = read_mask_map(args.mask)
    teacher = TeacherVolume.from_map_and_mask(teacher_map, mask)
    report = cosine_distill_loss(pred, teacher)
    print(f"{report.loss} {report.covered_pixels}")
    return 0


def cmd_segment(args) -> int:
    volume = read_volume(args.map)
    if args.mode in ("text", "mean"):
        if not args.refs:
            raise BadSchema("--refs is required for text/mean mode")
        bank = load_embedding_bank(args.refs)
        labels, legend = classify_with_bank(volume, bank)
    elif args.mode == "probe":
        if not args.probe:
            raise BadSchema("--probe is required for probe mode")
        probe = load_probe(args.probe)
        labels = probe_predict(volume, probe)
        legend = probe.class_names or [f"class_{i}" for i in range(probe.num_classes)]
    else:
        raise BadSchema(f"unknown mode {args.mode!r}")
    write_label_map(labels, args.out)
    for i, name in enumerate(legend):
        print(f"{i} {name}")
    print(f"wrote {args.out}")
    return 0


def cmd_probe_train(args) -> int:
    manifest = load_json_manifest(args.manifest)
    samples = [
        (read_volume(entry["embeddings"]), read_label_map(entry["labels"]))
        for entry in manifest["samples"]
    ]
    names = args.names.split(",") if args.names else None
    cfg = TrainConfig(learning_rate=args.lr, iterations=args.iters, optimizer=args.optimizer)
    probe = train_linear_probe(samples, args.classes, cfg, class_names=names)
    save_probe(probe, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_eval_miou(args) -> int:
    pred = read_label_map(args.pred)
    gt = read_label_map(args.gt)
    excluded = [int(c) for c in args.exclude.split(",") if c] if args.exclude else []
    report = evaluate_miou(pred, gt, args.classes, excluded)
    for class_id, iou in report.per_class_iou:
        print(f"{class_id} {'undefined' if iou is None else iou}")
    for class_id in report.excluded_classes:
        print(f"{class_id} excluded")
    print(f"mean {report.mean_iou}")
    return 0


def cmd_map_build(args) -> int:
    scans = load_scan_manifest(args.manifest)
    if not scans:
        raise BadSchema(f"{args.manifest}: no scans")
    builder = None
    for scan in scans:
        volume = read_volume(scan.embedding_map)
        depth = np.load(scan.depth)
        if depth.shape != volume.shape[:2]:
            raise BadSchema(
                f"{scan.depth}: depth {depth.shape} vs volume {volume.shape[:2]}"
            )
        if builder is None:
            builder = MapBuilder(cell_size=args.cell_size, dim=volume.shape[2])
        points, pixel_idx = backproject(depth, scan.intrinsics, scan.pose)
        embeddings = volume.reshape(-1, volume.shape[2])[pixel_idx]
        map_insert(builder, points, embeddings)
    frozen, dropped = map_freeze(builder)
    write_map3d(frozen, args.out)
    print(f"cells {frozen.num_cells} skipped {builder.skipped} dropped {len(dropped)}")
    print(f"wrote {args.out}")
    return 0


def cmd_map_query(args) -> int:
    map3d = read_map3d(args.map)
    bank = load_embedding_bank(args.bank)
    vectors = embed_prompt(args.query_name, EmbedderConfig(), bank)
    for key, sim in map_query_multi(map3d, vectors, args.top):
        print(f"{key[0]} {key[1]} {key[2]} {sim}")
    return 0


def cmd_map_classify(args) -> int:
    map3d = read_map3d(args.map)
    probe = load_probe(args.probe)
    rows = map_classify(map3d, probe)
    with open(args.out, "w", encoding="utf-8") as fh:
        for key, class_id in rows:
            fh.write(f"{key[0]} {key[1]} {key[2]} {class_id}\n")
    print(f"wrote {args.out}")
    return 0


def cmd_convert(args) -> int:
    volume = read_volume(args.infile)
    write_volume(volume, args.out, dtype=args.dtype)
    print(f"wrote {args.out}")
    return 0


def cmd_info(args) -> int:
    info = file_info(args.file)
    for key, value in info.items():
        print(f"{key} {value}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app
    from .service import embedder_from_env

    session = SessionState(bank=load_embedding_bank(args.bank), embedder=embedder_from_env())
    if args.probe:
        session = session_load(session, "probe", args.probe)
    if args.map:
        session = session_load(session, "map", args.map)
    if args.mean_refs:
        session = session_load(session, "mean-refs", args.mean_refs)
    if args.manifest:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            entries = json.load(fh)
        if not isinstance(entries, list):
            raise BadSchema(f"{args.manifest}: serve manifest must be a JSON array")
        for entry in entries:
            session = session_load(session, "volume", entry["embedding_map"], entry["id"])
            if entry.get("display_image"):
                session = session_load(session, "image", entry["display_image"], entry["id"])
    uvicorn.run(create_app(session), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dve", description="dense visual embedding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-student", help="distill a per-pixel student from teacher volumes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", default="", help="comma-separated hidden layer widths")
    p.add_argument("--optimizer", choices=["gd", "adam"], default="adam")
    p.set_defaults(func=cmd_train_student)

    p = sub.add_parser("loss", help="distillation loss of a prediction against a teacher")
    p.add_argument("--pred", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--mask", required=True)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("segment", help="closed-set segmentation of an embedding volume")
    p.add_argument("--map", required=True)
    p.add_argument("--mode", choices=["text", "mean", "probe"], required=True)
    p.add_argument("--refs")
    p.add_argument("--probe")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("probe-train", help="train the linear probe on labeled volumes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--names", default="", help="comma-separated class names")
    p.add_argument("--optimizer", choices=["gd", "adam"], default="gd")
    p.set_defaults(func=cmd_probe_train)

    p = sub.add_parser("eval-miou", help="mean IoU between two label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--exclude", default="", help="comma-separated class ids to exclude")
    p.set_defaults(func=cmd_eval_miou)

    p = sub.add_parser("map-build", help="fuse posed scans into a 3D embedding map")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cell-size", type=float, default=0.10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map_build)

    p = sub.add_parser("map-query", help="rank map cells against a bank entry")
    p.add_argument("--map", required=True)
    p.add_argument("--query-name", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--top", type=int, default=100)
    p.set_defaults(func=cmd_map_query)

    p = sub.add_parser("map-classify", help="classify map cells with probe weights")
    p.add_argument("--map", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map_classify)

    p = sub.add_parser("convert", help="rewrite a volume at another storage precision")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dtype", choices=["f32", "f16"], default="f32")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("info", help="print the parsed header of a binary artifact")
    p.add_argument("file")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("serve", help="run the HTTP query service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--bank", required=True)
    p.add_argument("--probe")
    p.add_argument("--map")
    p.add_argument("--mean-refs")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
