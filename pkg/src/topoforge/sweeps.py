"""Sweep experiments: batch edits over a corpus with direct/latent pipelines.

A sweep walks its corpus in a fixed order (design, joint, direction,
candidate), so results are deterministic and the aggregate tables are pure
functions of the persisted EditRecords: every number in a table or point
cloud can be recomputed from a saved report.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import DensityField, EditRecord, ParseError, ProblemSpec, load_json, save_json
from .corpus import CorpusItem
from .engine import (
    EditConfig,
    EditEngine,
    select_index,
)
from .fem import refine
from .metrics import (
    classify_failure,
    compliance,
    distance_error,
    iou,
    joint_locations,
    percent_change,
    violation_ratio,
    volume_fraction_error,
)
from .morphology import (
    LatticeSpec,
    apply_hole,
    compose_lattice,
    hole_mask,
    infill_mask,
    max_member_thickness,
)
from .warp import WarpSpec, warp_field, warp_problem

SCHEMA = 1

# distinct per-edit noise streams while keeping one base seed per sweep
_SEED_STRIDE = 1 << 20


@dataclass(frozen=True)
class WarpSweepConfig:
    drag: float = 0.12
    sigma: float = 0.10
    directions: int = 8
    num_samples: int = 8
    seed: int = 0
    refine_steps: tuple[int, ...] = (0, 10)
    max_thickness: float = 10.0
    max_joints: int | None = 2
    total_steps: int = 100
    partial_steps: int = 20
    guidance_scale: float = 1000.0
    stride: int = 1

    def __post_init__(self):
        if self.drag <= 0 or self.sigma <= 0:
            raise ValueError("drag and sigma must be positive")
        if self.directions < 1:
            raise ValueError("need at least one direction")
        if not self.refine_steps:
            raise ValueError("need at least one refinement step count")
        # the closed-form invertibility bound must admit every direction
        if self.drag >= self.sigma * math.sqrt(math.e):
            raise ValueError("drag exceeds the invertibility bound for sigma")

    def to_doc(self) -> dict:
        doc = self.__dict__.copy()
        doc["refine_steps"] = list(self.refine_steps)
        return doc


@dataclass(frozen=True)
class LatticeSweepConfig:
    pattern: str = "grid"
    pitch: int = 8
    member: int = 2
    shell: float = 2.0
    min_thickness: float = 20.0
    num_samples: int = 8
    seed: int = 0
    total_steps: int = 200
    partial_steps: int = 20
    guidance_scale: float = 1000.0
    stride: int = 1

    def to_doc(self) -> dict:
        return self.__dict__.copy()


@dataclass(frozen=True)
class NodesignSweepConfig:
    radius: float = 0.1
    bc_margin: float = 0.04
    max_joints: int | None = 2
    num_samples: int = 8
    seed: int = 0
    total_steps: int = 100
    partial_steps: int = 25
    guidance_scale: float = 1000.0
    stride: int = 1

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("hole radius must be positive")
        if self.bc_margin < 0:
            raise ValueError("bc margin must be nonnegative")

    def to_doc(self) -> dict:
        return self.__dict__.copy()


@dataclass(frozen=True)
class SweepEdit:
    """One edit task: its direct result(s) and the latent candidate records."""

    design: str
    info: dict
    direct: dict[int, EditRecord]
    latent: dict[int, tuple[EditRecord, ...]]

    def to_doc(self) -> dict:
        return {
            "design": self.design,
            "info": self.info,
            "direct": {str(k): r.to_doc() for k, r in sorted(self.direct.items())},
            "latent": {
                str(k): [r.to_doc() for r in rs] for k, rs in sorted(self.latent.items())
            },
        }

    @classmethod
    def from_doc(cls, doc: dict, path: str = "edit") -> "SweepEdit":
        try:
            direct = {
                int(k): EditRecord.from_doc(v, f"{path}.direct[{k}]")
                for k, v in doc["direct"].items()
            }
            latent = {
                int(k): tuple(
                    EditRecord.from_doc(v, f"{path}.latent[{k}][{i}]")
                    for i, v in enumerate(vs)
                )
                for k, vs in doc["latent"].items()
            }
            return cls(design=doc["design"], info=doc["info"], direct=direct, latent=latent)
        except (KeyError, TypeError) as e:
            raise ParseError(path, f"malformed sweep edit: {e}") from e


@dataclass(frozen=True)
class SweepReport:
    kind: str
    config: dict
    designs: tuple[str, ...]
    skipped: tuple[str, ...]
    edits: tuple[SweepEdit, ...]

    def to_doc(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": self.kind,
            "config": self.config,
            "designs": list(self.designs),
            "skipped": list(self.skipped),
            "edits": [e.to_doc() for e in self.edits],
        }

    @classmethod
    def from_doc(cls, doc: dict, path: str = "report") -> "SweepReport":
        if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
            raise ParseError(path, f"unsupported report schema, want {SCHEMA}")
        return cls(
            kind=doc["kind"],
            config=doc["config"],
            designs=tuple(doc["designs"]),
            skipped=tuple(doc["skipped"]),
            edits=tuple(
                SweepEdit.from_doc(e, f"{path}.edits[{i}]")
                for i, e in enumerate(doc["edits"])
            ),
        )


def save_report(report: SweepReport, path: str | Path) -> None:
    save_json(report.to_doc(), path)


def load_report(path: str | Path) -> SweepReport:
    return SweepReport.from_doc(load_json(path), str(path))


# ---------------------------------------------------------------------------
# Shared assessment helpers (the same recipes the engine applies per sample).

def _now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat()


def _warp_metrics(
    cand: DensityField,
    p_prime: ProblemSpec,
    handles,
    c_original: float,
) -> tuple[dict, bool]:
    c_e = compliance(cand, p_prime)
    ce = percent_change(c_e, c_original)
    des = []
    for h in handles:
        drag = math.hypot(h.dx, h.dy)
        if drag > 0:
            des.append(distance_error(cand, (h.x + h.dx, h.y + h.dy), drag))
    de = float(np.mean(des)) if des else 0.0
    metrics = {
        "compliance": c_e,
        "ce": ce,
        "de": de,
        "vf": float(cand.values.mean()),
    }
    return metrics, classify_failure("warp", ce=ce)


def _direct_record(kind: str, params: dict, seed: int, fn) -> EditRecord:
    """Run one direct-pipeline assessment with the same containment rule the
    engine applies per candidate: an exception becomes a failed record."""
    started = _now()
    try:
        metrics, failed = fn()
        reason = ""
    except Exception as exc:
        metrics, failed, reason = {}, True, f"{type(exc).__name__}: {exc}"
    return EditRecord(
        kind="direct",
        params={"edit": kind, **params},
        seed=seed,
        candidate_index=0,
        metrics=metrics,
        failed=failed,
        failure_reason=reason,
        started_at=started,
        finished_at=_now(),
    )


def _failed_records(kind: str, n: int, seed: int, reason: str) -> tuple[EditRecord, ...]:
    stamp = _now()
    return tuple(
        EditRecord(
            kind=kind,
            params={},
            seed=seed,
            candidate_index=i,
            metrics={},
            failed=True,
            failure_reason=reason,
            started_at=stamp,
            finished_at=stamp,
        )
        for i in range(n)
    )


def _edit_seed(base: int, index: int) -> int:
    return base * _SEED_STRIDE + index


def sweep_warp(items: Iterable[CorpusItem], model, cfg: WarpSweepConfig) -> SweepReport:
    engine = EditEngine(model)
    edits: list[SweepEdit] = []
    designs: list[str] = []
    skipped: list[str] = []
    edit_index = 0
    for item in items:
        field, spec = item.field, item.spec
        if max_member_thickness(field) > cfg.max_thickness:
            skipped.append(item.name)
            continue
        joints = joint_locations(field)
        if cfg.max_joints is not None:
            joints = joints[: cfg.max_joints]
        if not joints:
            skipped.append(item.name)
            continue
        try:
            c_o = compliance(field, spec)
        except Exception:
            skipped.append(item.name)
            continue
        designs.append(item.name)
        for jx, jy in joints:
            for k in range(cfg.directions):
                theta = 2.0 * math.pi * k / cfg.directions
                dx = cfg.drag * math.cos(theta)
                dy = cfg.drag * math.sin(theta)
                w = WarpSpec.single(jx, jy, dx, dy, cfg.sigma)
                p_prime = warp_problem(spec, w)
                warped = warp_field(field, w)
                seed = _edit_seed(cfg.seed, edit_index)
                edit_index += 1
                direct: dict[int, EditRecord] = {}
                latent: dict[int, tuple[EditRecord, ...]] = {}
                for step in cfg.refine_steps:
                    direct[step] = _direct_record(
                        "warp",
                        {"handle": [jx, jy], "delta": [dx, dy], "sigma": cfg.sigma,
                         "step": step},
                        seed,
                        lambda step=step: _warp_metrics(
                            refine(warped, p_prime, step).field, p_prime, w.handles, c_o
                        ),
                    )
                    ecfg = EditConfig(
                        total_steps=cfg.total_steps,
                        partial_steps=cfg.partial_steps,
                        guidance_scale=cfg.guidance_scale,
                        num_samples=cfg.num_samples,
                        seed=seed,
                        refine_steps=step,
                        stride=cfg.stride,
                    )
                    try:
                        latent[step] = engine.edit_warp(field, spec, w, ecfg).records
                    except Exception as exc:
                        latent[step] = _failed_records(
                            "warp", cfg.num_samples, seed, f"{type(exc).__name__}: {exc}"
                        )
                edits.append(
                    SweepEdit(
                        design=item.name,
                        info={"joint": [jx, jy], "direction": k, "delta": [dx, dy],
                              "sigma": cfg.sigma, "seed": seed},
                        direct=direct,
                        latent=latent,
                    )
                )
    return SweepReport(
        kind="warp",
        config=cfg.to_doc(),
        designs=tuple(designs),
        skipped=tuple(skipped),
        edits=tuple(edits),
    )


def sweep_lattice(items: Iterable[CorpusItem], model, cfg: LatticeSweepConfig) -> SweepReport:
    engine = EditEngine(model)
    lat = LatticeSpec(cfg.pattern, cfg.pitch, cfg.member)
    edits: list[SweepEdit] = []
    designs: list[str] = []
    skipped: list[str] = []
    for idx, item in enumerate(items):
        field, spec = item.field, item.spec
        if max_member_thickness(field) <= cfg.min_thickness:
            skipped.append(item.name)
            continue
        region = infill_mask(field, cfg.shell)
        if not region.values.any():
            skipped.append(item.name)
            continue
        try:
            c_o = compliance(field, spec)
            t_lat, vf_lat = compose_lattice(field, region, lat)
        except Exception:
            skipped.append(item.name)
            continue
        designs.append(item.name)
        seed = _edit_seed(cfg.seed, idx)

        def direct_metrics():
            c_d = compliance(t_lat, spec)
            ratio = c_d / c_o
            vf = float(t_lat.values.mean())
            return {
                "compliance": c_d,
                "ratio": ratio,
                "vf": vf,
                "vf_target": vf_lat,
                "vfe": volume_fraction_error(vf, vf_lat),
                "iou": iou(t_lat, t_lat),
            }, classify_failure("lattice", ratio=ratio)

        direct = _direct_record(
            "lattice",
            {"pattern": cfg.pattern, "pitch": cfg.pitch, "member": cfg.member,
             "shell": cfg.shell},
            seed,
            direct_metrics,
        )
        ecfg = EditConfig(
            total_steps=cfg.total_steps,
            partial_steps=cfg.partial_steps,
            guidance_scale=cfg.guidance_scale,
            num_samples=cfg.num_samples,
            seed=seed,
            refine_steps=0,
            stride=cfg.stride,
        )
        try:
            records = engine.edit_lattice(field, spec, lat, cfg.shell, ecfg).records
        except Exception as exc:
            records = _failed_records(
                "lattice", cfg.num_samples, seed, f"{type(exc).__name__}: {exc}"
            )
        edits.append(
            SweepEdit(
                design=item.name,
                info={"vf_target": vf_lat, "seed": seed},
                direct={0: direct},
                latent={0: records},
            )
        )
    return SweepReport(
        kind="lattice",
        config=cfg.to_doc(),
        designs=tuple(designs),
        skipped=tuple(skipped),
        edits=tuple(edits),
    )


def sweep_nodesign(items: Iterable[CorpusItem], model, cfg: NodesignSweepConfig) -> SweepReport:
    engine = EditEngine(model)
    edits: list[SweepEdit] = []
    designs: list[str] = []
    skipped: list[str] = []
    edit_index = 0
    for item in items:
        field, spec = item.field, item.spec
        bc_points = [(p.x, p.y) for p in spec.supports] + [(p.x, p.y) for p in spec.loads]
        joints = [
            (jx, jy)
            for jx, jy in joint_locations(field)
            if all(math.hypot(jx - bx, jy - by) > cfg.bc_margin for bx, by in bc_points)
        ]
        if cfg.max_joints is not None:
            joints = joints[: cfg.max_joints]
        if not joints:
            skipped.append(item.name)
            continue
        try:
            c_o = compliance(field, spec)
        except Exception:
            skipped.append(item.name)
            continue
        designs.append(item.name)
        for jx, jy in joints:
            center = (jx, jy)
            hole = hole_mask(center, cfg.radius, field.width, field.height)
            t_hole = apply_hole(field, hole)
            seed = _edit_seed(cfg.seed, edit_index)
            edit_index += 1

            def direct_metrics(t_hole=t_hole, hole=hole):
                c_d = compliance(t_hole, spec)
                ratio = c_d / c_o
                return {
                    "compliance": c_d,
                    "ratio": ratio,
                    "vf": float(t_hole.values.mean()),
                    "violation": violation_ratio(t_hole, hole),
                    "iou": iou(t_hole, t_hole),
                }, classify_failure("nodesign", ratio=ratio)

            direct = _direct_record(
                "nodesign",
                {"center": [jx, jy], "radius": cfg.radius},
                seed,
                direct_metrics,
            )
            ecfg = EditConfig(
                total_steps=cfg.total_steps,
                partial_steps=cfg.partial_steps,
                guidance_scale=cfg.guidance_scale,
                num_samples=cfg.num_samples,
                seed=seed,
                refine_steps=0,
                stride=cfg.stride,
            )
            try:
                records = engine.edit_nodesign(field, spec, center, cfg.radius, ecfg).records
            except Exception as exc:
                records = _failed_records(
                    "nodesign", cfg.num_samples, seed, f"{type(exc).__name__}: {exc}"
                )
            edits.append(
                SweepEdit(
                    design=item.name,
                    info={"center": [jx, jy], "radius": cfg.radius, "seed": seed},
                    direct={0: direct},
                    latent={0: records},
                )
            )
    return SweepReport(
        kind="nodesign",
        config=cfg.to_doc(),
        designs=tuple(designs),
        skipped=tuple(skipped),
        edits=tuple(edits),
    )


# ---------------------------------------------------------------------------
# Aggregate tables: pure views over the report's records.

def best_of_levels(n: int) -> list[int]:
    """1, 2, 4, ... capped at n, always ending with n itself."""
    levels = []
    k = 1
    while k < n:
        levels.append(k)
        k *= 2
    levels.append(n)
    return levels


def _metric(rec: EditRecord, name: str) -> float:
    v = rec.metrics.get(name)
    if v is None or not math.isfinite(v):
        return math.inf
    return float(v)


def _mean_over(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.nan


def _rate(flags: list[bool]) -> float:
    return float(100.0 * np.mean(flags)) if flags else math.nan


def warp_tables(report: SweepReport) -> dict:
    if report.kind != "warp":
        raise ValueError("not a warp report")
    steps = sorted({s for e in report.edits for s in e.direct})
    out: dict = {}
    for step in steps:
        direct_rows = [e.direct[step] for e in report.edits if step in e.direct]
        table = {
            "direct": {
                "ce": _mean_over([_metric(r, "ce") for r in direct_rows]),
                "de": _mean_over([_metric(r, "de") for r in direct_rows]),
                "failure": _rate([r.failed for r in direct_rows]),
                "edits": len(direct_rows),
            },
            "latent": {},
        }
        n_max = max(len(e.latent.get(step, ())) for e in report.edits)
        for n in best_of_levels(n_max):
            ces, des, fails = [], [], []
            for e in report.edits:
                recs = e.latent.get(step, ())
                if len(recs) < n:
                    continue
                i = select_index("warp", recs, prefix=n)
                ces.append(_metric(recs[i], "ce"))
                des.append(_metric(recs[i], "de"))
                fails.append(recs[i].failed)
            table["latent"][n] = {
                "ce": _mean_over(ces),
                "de": _mean_over(des),
                "failure": _rate(fails),
                "edits": len(fails),
            }
        out[step] = table
    return out


def _beat_tables(report: SweepReport, kind: str, extra: tuple[str, ...]) -> dict:
    direct_rows = [e.direct[0] for e in report.edits]
    table = {
        "direct": {
            **{m: _mean_over([_metric(r, m) for r in direct_rows]) for m in extra},
            "compliance": _mean_over([_metric(r, "compliance") for r in direct_rows]),
            "failure": _rate([r.failed for r in direct_rows]),
            "edits": len(direct_rows),
        },
        "latent": {},
    }
    n_max = max(len(e.latent[0]) for e in report.edits)
    for n in best_of_levels(n_max):
        cols: dict[str, list[float]] = {m: [] for m in extra}
        comps, beats, fails = [], [], []
        for e in report.edits:
            recs = e.latent[0]
            if len(recs) < n:
                continue
            i = select_index(kind, recs, prefix=n)
            sel = recs[i]
            for m in extra:
                cols[m].append(_metric(sel, m))
            comps.append(_metric(sel, "compliance"))
            beats.append(_metric(sel, "compliance") < _metric(e.direct[0], "compliance"))
            fails.append(sel.failed)
        table["latent"][n] = {
            **{m: _mean_over(cols[m]) for m in extra},
            "compliance": _mean_over(comps),
            "beat": _rate(beats),
            "failure": _rate(fails),
            "edits": len(fails),
        }
    return table


def lattice_tables(report: SweepReport) -> dict:
    if report.kind != "lattice":
        raise ValueError("not a lattice report")
    return _beat_tables(report, "lattice", ("vfe", "iou"))


def nodesign_tables(report: SweepReport) -> dict:
    if report.kind != "nodesign":
        raise ValueError("not a nodesign report")
    return _beat_tables(report, "nodesign", ("violation",))


def warp_points(report: SweepReport) -> list[tuple[float, float, int, str]]:
    """(ce, de, step, pipeline) rows for contour plotting; failed records with
    no metrics are dropped."""
    if report.kind != "warp":
        raise ValueError("not a warp report")
    rows: list[tuple[float, float, int, str]] = []
    for e in report.edits:
        for step, rec in sorted(e.direct.items()):
            ce, de = _metric(rec, "ce"), _metric(rec, "de")
            if math.isfinite(ce) and math.isfinite(de):
                rows.append((ce, de, step, "direct"))
        for step, recs in sorted(e.latent.items()):
            i = select_index("warp", recs)
            ce, de = _metric(recs[i], "ce"), _metric(recs[i], "de")
            if math.isfinite(ce) and math.isfinite(de):
                rows.append((ce, de, step, "latent"))
    return rows


def write_tables_csv(report: SweepReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if report.kind == "warp":
            w.writerow(["step", "pipeline", "n", "ce", "de", "failure", "edits"])
            for step, table in sorted(warp_tables(report).items()):
                d = table["direct"]
                w.writerow([step, "direct", 1, d["ce"], d["de"], d["failure"], d["edits"]])
                for n, row in sorted(table["latent"].items()):
                    w.writerow([step, "latent", n, row["ce"], row["de"],
                                row["failure"], row["edits"]])
            return
        extra = ("vfe", "iou") if report.kind == "lattice" else ("violation",)
        table = lattice_tables(report) if report.kind == "lattice" else nodesign_tables(report)
        w.writerow(["pipeline", "n", *extra, "compliance", "beat", "failure", "edits"])
        d = table["direct"]
        w.writerow(["direct", 1, *(d[m] for m in extra), d["compliance"], "",
                    d["failure"], d["edits"]])
        for n, row in sorted(table["latent"].items()):
            w.writerow(["latent", n, *(row[m] for m in extra), row["compliance"],
                        row["beat"], row["failure"], row["edits"]])


def write_points_csv(report: SweepReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ce", "de", "step", "pipeline"])
        for row in warp_points(report):
            w.writerow(row)
