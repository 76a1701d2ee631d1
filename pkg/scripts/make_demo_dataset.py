#!/usr/bin/env python3
"""Generate a synthetic two-phase Fe/H demo dataset plus a ready-to-run config.

Creates <outdir>/data.xyz (dense "solid" frames and expanded "gas" frames,
with duplicates sprinkled in), a manifest, a reference frame, and run.ini.
Afterwards try:

    dvlae fingerprint --config <outdir>/run.ini
    dvlae screen      --config <outdir>/run.ini --fingerprints <outdir>/out/fingerprints.txt
    dvlae embed       --config <outdir>/run.ini --input <outdir>/out/fingerprints.txt
    dvlae plot        --embedding <outdir>/out/embedding.csv --out <outdir>/map.svg
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from dvlae import Structure, to_extxyz

CONFIG = """\
[run]
format = 1
seed = 0
output = out

[data]
manifests = manifest.txt
elements = Fe H

[descriptors]
cutoff = 5.0

[fingerprint]
bins = 50
reference = path:ref.xyz

[screening]
mode = exact

[embedding]
method = tsne
perplexity = 8
iterations = 800
"""


def random_frame(rng, ident, tag, scale):
    n = int(rng.integers(3, 7))
    cell = np.diag(rng.uniform(2.8, 4.2, 3)) * scale
    cell[1, 0] = rng.uniform(-0.4, 0.4)
    cell[2, 1] = rng.uniform(-0.4, 0.4)
    frac = rng.uniform(0, 1, (n, 3))
    species = tuple(("Fe", "H")[i] for i in rng.integers(0, 2, n))
    if "Fe" not in species or "H" not in species:
        species = ("Fe", "H") + species[2:]
    return Structure(cell=cell, species=species, positions=frac @ cell,
                     periodic=(True,) * 3, id=ident, tag=tag)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--frames", type=int, default=40, help="frames per phase")
    ap.add_argument("--duplicates", type=int, default=15, help="exact duplicates to add")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    frames = []
    for i in range(args.frames):
        frames.append(random_frame(rng, f"solid{i}", "solid", scale=1.0))
    for i in range(args.frames):
        frames.append(random_frame(rng, f"gas{i}", "gas", scale=2.2))
    for i in range(args.duplicates):
        src = frames[int(rng.integers(0, len(frames)))]
        frames.append(dataclasses.replace(src, id=f"{src.id}-dup{i}"))

    args.outdir.mkdir(parents=True, exist_ok=True)
    (args.outdir / "data.xyz").write_text(to_extxyz(frames))
    (args.outdir / "manifest.txt").write_text("data.xyz\n")
    (args.outdir / "ref.xyz").write_text(to_extxyz([frames[0]]))
    (args.outdir / "run.ini").write_text(CONFIG)
    print(f"wrote {len(frames)} frames to {args.outdir}/data.xyz "
          f"({args.duplicates} duplicates), config at {args.outdir}/run.ini")


if __name__ == "__main__":
    main()
