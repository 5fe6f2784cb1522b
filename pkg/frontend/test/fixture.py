"""Builds the integration fixtures: a tiny checkpoint, a two-design corpus,
an all-solid field, and a problem spec. Usage: python3 fixture.py OUTDIR"""

import sys
from pathlib import Path

import numpy as np

from topoforge.core import (
    DensityField,
    LoadPoint,
    ProblemSpec,
    SupportPoint,
    field_to_pgm,
    save_json,
)
from topoforge.corpus import CorpusItem, save_corpus
from topoforge.diffusion import Denoiser, make_schedule, save_checkpoint
from topoforge.fem import optimize
from topoforge.metrics import compliance


def cantilever(n: int) -> ProblemSpec:
    supports = tuple(
        SupportPoint(x=0.0, y=j / n, fix_x=True, fix_y=True) for j in range(n + 1)
    )
    return ProblemSpec(
        supports=supports,
        loads=(LoadPoint(x=1.0, y=0.5, fx=0.0, fy=-1.0),),
        volume_fraction=0.4,
        aspect=(1.0, 1.0),
        cell_size=1.0 / n,
    )


def main() -> None:
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    n = 16
    spec = cantilever(n)

    model = Denoiser(widths=(4, 8, 8, 8), resolution=n, seed=0).eval()
    save_checkpoint(out / "model.ckpt", model, make_schedule(100))

    items = []
    for i, iters in enumerate((5, 8)):
        field = optimize(spec, iters).field
        items.append(
            CorpusItem(f"d{i:03d}", i, spec, field, compliance(field, spec), 0.01)
        )
    save_corpus(items, out / "corpus", seed=0, iterations=8)

    solid = DensityField.from_array(np.ones((n, n)))
    (out / "solid.pgm").write_bytes(field_to_pgm(solid))
    save_json(spec.to_doc(), out / "spec.json")
    print("fixtures ready")


if __name__ == "__main__":
    main()
