#!/usr/bin/env python3
"""Write a self-contained demo session to disk: an embedding volume with
a display image, a prompt bank, probe weights, and a 3D map, plus the
serve manifest. Point `dve serve` (and the browser console) at it.
"""

import argparse
import json
import pathlib

import numpy as np

from dve.closedset import train_linear_probe
from dve.core import l2_normalize
from dve.distill import TrainConfig
from dve.map3d import CameraIntrinsics, MapBuilder, Pose, backproject, map_freeze, map_insert
from dve.storage import (
    EmbeddingBank,
    save_embedding_bank,
    save_probe,
    similarity_to_pgm,
    write_map3d,
    write_volume,
)
from dve.synth import segment_layout, unit_vector_with_cosine


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_session")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=48)
    parser.add_argument("--dim", type=int, default=32)
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    names = ["chair", "table", "plant", "floor"]
    centers = np.stack([l2_normalize(rng.standard_normal(args.dim)) for _ in names])

    mask = segment_layout(args.size, args.size, len(names) * 2, rng)
    class_of_segment = np.array([0] + [(sid - 1) % len(names) for sid in range(1, len(names) * 2 + 1)])
    labels = class_of_segment[mask.astype(np.int64)].astype(np.uint16)
    volume = centers[labels.astype(np.int64)] + 0.15 * rng.standard_normal(
        (args.size, args.size, args.dim)
    )
    write_volume(volume, out / "img1.dvem")

    # grayscale display asset: similarity of each pixel to its own class center
    own = np.einsum("ijk,ijk->ij", volume, centers[labels.astype(np.int64)])
    own /= np.linalg.norm(volume, axis=2) + 1e-12
    (out / "img1.pgm").write_bytes(similarity_to_pgm(np.clip(own, -1, 1)))

    bank = EmbeddingBank(
        dim=args.dim,
        entries=[(name, unit_vector_with_cosine(center, 0.95, rng))
                 for name, center in zip(names, centers)],
    )
    save_embedding_bank(bank, out / "bank.json")
    save_embedding_bank(
        EmbeddingBank(dim=args.dim, entries=list(zip(names, centers))),
        out / "mean_refs.json",
    )

    probe = train_linear_probe(
        [(volume, labels)], len(names),
        TrainConfig(learning_rate=1e-3, iterations=200), class_names=names,
    )
    save_probe(probe, out / "probe.json")

    intr = CameraIntrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, depth_scale=0.001)
    depth = np.full((args.size, args.size), 1000, dtype=np.uint16)
    points, idx = backproject(depth, intr, Pose.identity())
    builder = MapBuilder(cell_size=2.0, dim=args.dim)
    map_insert(builder, points, volume.reshape(-1, args.dim)[idx])
    frozen, _ = map_freeze(builder)
    write_map3d(frozen, out / "scene.dve3")

    manifest = [{"id": "img1", "embedding_map": str(out / "img1.dvem"),
                 "display_image": str(out / "img1.pgm")}]
    (out / "session.json").write_text(json.dumps(manifest, indent=2))

    print(f"wrote demo session to {out}/")
    print("serve it with:")
    print(f"  dve serve --port 8000 --bank {out}/bank.json --probe {out}/probe.json"
          f" --map {out}/scene.dve3 --mean-refs {out}/mean_refs.json"
          f" --manifest {out}/session.json")


if __name__ == "__main__":
    main()
