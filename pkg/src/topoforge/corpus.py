"""Design corpus generation: randomized specs optimized to near-convergence.

Each item records the attempt index that produced it, so a (base seed, attempt)
pair regenerates the exact field. Rejected attempts (solver failures, loose
convergence, volume drift) burn their attempt index and move on, which keeps
generation deterministic regardless of how many rejects occur.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .core import (
    DensityField,
    LoadPoint,
    ParseError,
    ProblemSpec,
    SupportPoint,
    field_from_pgm,
    field_to_pgm,
    load_json,
    save_json,
)
from .fem import FemError, optimize, snap_node

SCHEMA = 1
MIN_ITERATIONS = 60
VF_RANGE = (0.3, 0.6)
# minimum clamped span of a partial edge, as a fraction of the edge length
MIN_SEGMENT = 0.3
CONVERGENCE_CHANGE = 0.08
VF_TOLERANCE = 0.01

_U64 = (1 << 64) - 1


def attempt_rng(seed: int, attempt: int) -> np.random.Generator:
    key = np.array([seed & _U64, attempt & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def support_key(spec: ProblemSpec) -> str:
    rows = sorted(
        (round(s.x, 6), round(s.y, 6), s.fix_x, s.fix_y) for s in spec.supports
    )
    blob = json.dumps(rows, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def field_hash(field: DensityField) -> str:
    return hashlib.sha256(field_to_pgm(field)).hexdigest()[:16]


def _edge_segment(edge: str, lo: float, hi: float, n: int) -> tuple[SupportPoint, ...]:
    """Clamp every lattice node whose edge coordinate falls in [lo, hi]."""
    ks = [k for k in range(n + 1) if lo <= k / n <= hi]
    if edge == "left":
        pts = [(0.0, k / n) for k in ks]
    elif edge == "right":
        pts = [(1.0, k / n) for k in ks]
    elif edge == "bottom":
        pts = [(k / n, 0.0) for k in ks]
    else:
        pts = [(k / n, 1.0) for k in ks]
    return tuple(SupportPoint(x, y, True, True) for x, y in pts)


_CORNERS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))


def _corner_patch(cx: float, cy: float, n: int) -> tuple[SupportPoint, ...]:
    # an L of three nodes, so one corner alone still blocks rotation
    step = 1.0 / n
    dx = step if cx == 0.0 else -step
    dy = step if cy == 0.0 else -step
    return (
        SupportPoint(cx, cy, True, True),
        SupportPoint(cx + dx, cy, True, True),
        SupportPoint(cx, cy + dy, True, True),
    )


def sample_spec(rng: np.random.Generator, resolution: int) -> ProblemSpec:
    """One random well-posed problem: 1-2 clamped edge segments or 2-4 corner
    patches, 1-3 unit point loads at random angles, volume fraction in
    [0.3, 0.6]."""
    n = resolution
    supports: list[SupportPoint] = []
    if rng.random() < 0.5:
        edges = ["left", "right", "bottom", "top"]
        count = int(rng.integers(1, 3))
        picked = rng.choice(4, size=count, replace=False)
        for e in sorted(picked):
            span = float(rng.uniform(MIN_SEGMENT, 1.0))
            lo = float(rng.uniform(0.0, 1.0 - span))
            supports.extend(_edge_segment(edges[e], lo, lo + span, n))
    else:
        count = int(rng.integers(2, 5))
        picked = rng.choice(4, size=count, replace=False)
        for c in sorted(picked):
            supports.extend(_corner_patch(*_CORNERS[c], n))

    fixed_nodes = {
        (snap_node(s.x, n), snap_node(s.y, n)) for s in supports
    }
    loads: list[LoadPoint] = []
    for _ in range(int(rng.integers(1, 4))):
        for _ in range(32):
            x = float(rng.uniform(0.0, 1.0))
            y = float(rng.uniform(0.0, 1.0))
            if (snap_node(x, n), snap_node(y, n)) not in fixed_nodes:
                break
        theta = float(rng.uniform(0.0, 2.0 * math.pi))
        loads.append(LoadPoint(x, y, math.cos(theta), math.sin(theta)))

    vf = float(rng.uniform(*VF_RANGE))
    return ProblemSpec(
        supports=tuple(supports),
        loads=tuple(loads),
        volume_fraction=vf,
        aspect=(1.0, 1.0),
        cell_size=1.0 / n,
    )


@dataclass(frozen=True)
class CorpusItem:
    name: str
    attempt: int
    spec: ProblemSpec
    field: DensityField
    compliance: float
    change: float

    @property
    def support_key(self) -> str:
        return support_key(self.spec)


def generate_corpus(
    n: int,
    seed: int,
    resolution: int = 64,
    spec_sampler: Callable[[np.random.Generator, int], ProblemSpec] = sample_spec,
    iterations: int = MIN_ITERATIONS,
    max_change: float = CONVERGENCE_CHANGE,
    attempt_cap: int = 20,
    on_item: Callable[[CorpusItem], None] | None = None,
) -> list[CorpusItem]:
    if n < 1:
        raise ValueError("corpus size must be at least 1")
    if iterations < MIN_ITERATIONS:
        raise ValueError(f"corpus designs need at least {MIN_ITERATIONS} iterations")
    items: list[CorpusItem] = []
    attempt = 0
    budget = n * attempt_cap
    while len(items) < n:
        if attempt >= budget:
            raise RuntimeError(
                f"corpus generation exhausted {budget} attempts for {n} designs; "
                f"got {len(items)}"
            )
        rng = attempt_rng(seed, attempt)
        spec = spec_sampler(rng, resolution)
        this_attempt = attempt
        attempt += 1
        try:
            result = optimize(spec, iterations)
        except FemError:
            continue
        stat = result.history[-1]
        vf_err = abs(float(result.field.values.mean()) - spec.volume_fraction)
        if not math.isfinite(stat.compliance):
            continue
        if stat.change > max_change or vf_err > VF_TOLERANCE:
            continue
        item = CorpusItem(
            name=f"design_{len(items):04d}",
            attempt=this_attempt,
            spec=spec,
            field=result.field,
            compliance=stat.compliance,
            change=stat.change,
        )
        items.append(item)
        if on_item is not None:
            on_item(item)
    return items


def pairs(items: Iterable[CorpusItem]) -> list[tuple[DensityField, ProblemSpec]]:
    return [(it.field, it.spec) for it in items]


def save_corpus(
    items: list[CorpusItem], out_dir: str | Path, seed: int, iterations: int = MIN_ITERATIONS
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for it in items:
        (out / f"{it.name}.pgm").write_bytes(field_to_pgm(it.field))
        save_json(it.spec.to_doc(), out / f"{it.name}.json")
        rows.append(
            {
                "name": it.name,
                "attempt": it.attempt,
                "support_key": it.support_key,
                "field_hash": field_hash(it.field),
                "volume_fraction": it.spec.volume_fraction,
                "mean_density": float(it.field.values.mean()),
                "compliance": it.compliance,
                "change": it.change,
            }
        )
    save_json(
        {
            "schema": SCHEMA,
            "base_seed": seed,
            "iterations": iterations,
            "count": len(items),
            "distinct_supports": len({r["support_key"] for r in rows}),
            "items": rows,
        },
        out / "manifest.json",
    )


def load_item(in_dir: str | Path, name: str) -> tuple[DensityField, ProblemSpec]:
    """One design by name, without reading the rest of the corpus."""
    src = Path(in_dir)
    pgm = src / f"{name}.pgm"
    if not pgm.exists():
        raise ParseError(str(pgm), "no such corpus item")
    field = field_from_pgm(pgm.read_bytes(), path=f"{name}.pgm")
    spec = ProblemSpec.from_doc(load_json(src / f"{name}.json"), path=f"{name}.json")
    return field, spec


def load_corpus(in_dir: str | Path, verify: bool = True) -> list[CorpusItem]:
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(str(manifest_path), "corpus manifest not found")
    manifest = load_json(manifest_path)
    if not isinstance(manifest, dict) or manifest.get("schema") != SCHEMA:
        raise ParseError(str(manifest_path), f"unsupported corpus schema, want {SCHEMA}")
    items: list[CorpusItem] = []
    for row in manifest["items"]:
        name = row["name"]
        field = field_from_pgm((src / f"{name}.pgm").read_bytes(), path=f"{name}.pgm")
        if verify and field_hash(field) != row["field_hash"]:
            raise ParseError(f"{name}.pgm", "stored field does not match its manifest hash")
        spec = ProblemSpec.from_doc(load_json(src / f"{name}.json"), path=f"{name}.json")
        items.append(
            CorpusItem(
                name=name,
                attempt=row["attempt"],
                spec=spec,
                field=field,
                compliance=row["compliance"],
                change=row["change"],
            )
        )
    return items
