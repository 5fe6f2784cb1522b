"""Edit operators: latent-space editing with best-of-N sampling.

Each edit builds a reference latent and an initialized partially-noised
latent, then denoises with reference guidance. Candidates differ only through
their per-index noise draw, so a (seed, index) pair pins a candidate exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from .core import (
    DensityField,
    EditRecord,
    ParseError,
    ProblemSpec,
    coord_grids,
    decode_field,
    encode_field,
    resample_field,
)
from .diffusion import Denoiser, NoiseSchedule, denoise, make_schedule, noise
from .fem import refine
from .metrics import (
    classify_failure,
    compliance,
    distance_error,
    iou,
    percent_change,
    violation_ratio,
    volume_fraction_error,
)
from .morphology import LatticeSpec, apply_hole, compose_lattice, hole_mask, infill_mask
from .warp import WarpSpec, achieved_handle, warp_field, warp_grid, warp_problem

LATTICE_VF_TOLERANCE = 0.05
NODESIGN_VIOLATION_LIMIT = 10.0

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class EditConfig:
    """Sampling configuration; per-kind constructors carry the task defaults."""

    total_steps: int
    partial_steps: int
    guidance_scale: float = 1000.0
    num_samples: int = 1
    seed: int = 0
    refine_steps: int = 0
    stride: int = 1
    weight_radius_factor: float = 1.5
    weight_softness: float = 0.05

    def __post_init__(self):
        if self.total_steps < 2:
            raise ValueError("total_steps must be at least 2")
        # partial_steps = 0 degenerates to the pure latent operation, no denoising
        if not 0 <= self.partial_steps <= self.total_steps:
            raise ValueError("partial_steps must lie in [0, total_steps]")
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be nonnegative")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.weight_softness <= 0 or self.weight_radius_factor <= 0:
            raise ValueError("weight map parameters must be positive")

    @classmethod
    def for_warp(cls, **kw) -> "EditConfig":
        kw.setdefault("total_steps", 100)
        kw.setdefault("partial_steps", 20)
        kw.setdefault("refine_steps", 10)
        return cls(**kw)

    @classmethod
    def for_lattice(cls, **kw) -> "EditConfig":
        kw.setdefault("total_steps", 200)
        kw.setdefault("partial_steps", 20)
        return cls(**kw)

    @classmethod
    def for_nodesign(cls, **kw) -> "EditConfig":
        kw.setdefault("total_steps", 100)
        kw.setdefault("partial_steps", 25)
        return cls(**kw)

    def to_doc(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_doc(cls, doc: dict, path: str = "config") -> "EditConfig":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ParseError(f"{path}.{sorted(unknown)[0]}", "unknown field")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as e:
            raise ParseError(path, str(e)) from e


@dataclass(frozen=True)
class EditRequest:
    """Tagged union of the three edit kinds plus sampling configuration."""

    kind: str  # "warp" | "lattice" | "nodesign"
    config: EditConfig
    warp: WarpSpec | None = None
    lattice: LatticeSpec | None = None
    shell: float | None = None
    center: tuple[float, float] | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind == "warp":
            if self.warp is None:
                raise ValueError("warp edit needs a warp spec")
        elif self.kind == "lattice":
            if self.lattice is None or self.shell is None:
                raise ValueError("lattice edit needs a lattice spec and shell thickness")
        elif self.kind == "nodesign":
            if self.center is None or self.radius is None:
                raise ValueError("no-design edit needs a center and radius")
        else:
            raise ValueError(f"unknown edit kind {self.kind!r}")

    def to_doc(self) -> dict:
        doc: dict = {"kind": self.kind, "config": self.config.to_doc()}
        if self.kind == "warp":
            doc["warp"] = self.warp.to_doc()
        elif self.kind == "lattice":
            doc["lattice"] = self.lattice.to_doc()
            doc["shell"] = self.shell
        else:
            doc["center"] = list(self.center)
            doc["radius"] = self.radius
        return doc

    @classmethod
    def from_doc(cls, doc: dict, path: str = "request") -> "EditRequest":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected an object")
        kind = doc.get("kind")
        if kind not in ("warp", "lattice", "nodesign"):
            raise ParseError(f"{path}.kind", "expected one of warp, lattice, nodesign")
        defaults = {
            "warp": EditConfig.for_warp,
            "lattice": EditConfig.for_lattice,
            "nodesign": EditConfig.for_nodesign,
        }[kind]
        cfg_doc = doc.get("config", {})
        if not isinstance(cfg_doc, dict):
            raise ParseError(f"{path}.config", "expected an object")
        try:
            config = defaults(**cfg_doc)
        except ParseError:
            raise
        except (TypeError, ValueError) as e:
            raise ParseError(f"{path}.config", str(e)) from e
        try:
            if kind == "warp":
                return cls(kind=kind, config=config, warp=WarpSpec.from_doc(doc.get("warp"), f"{path}.warp"))
            if kind == "lattice":
                shell = doc.get("shell")
                if not isinstance(shell, (int, float)) or isinstance(shell, bool):
                    raise ParseError(f"{path}.shell", "expected a number")
                return cls(
                    kind=kind,
                    config=config,
                    lattice=LatticeSpec.from_doc(doc.get("lattice"), f"{path}.lattice"),
                    shell=float(shell),
                )
            center = doc.get("center")
            if (
                not isinstance(center, (list, tuple))
                or len(center) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in center)
            ):
                raise ParseError(f"{path}.center", "expected [x, y]")
            radius = doc.get("radius")
            if not isinstance(radius, (int, float)) or isinstance(radius, bool):
                raise ParseError(f"{path}.radius", "expected a number")
            return cls(
                kind=kind,
                config=config,
                center=(float(center[0]), float(center[1])),
                radius=float(radius),
            )
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(path, str(e)) from e


@dataclass(frozen=True)
class CandidateSet:
    kind: str
    original: DensityField
    reference: DensityField
    spec: ProblemSpec
    updated_spec: ProblemSpec
    candidates: tuple[DensityField, ...]
    records: tuple[EditRecord, ...]

    def __post_init__(self):
        if len(self.candidates) != len(self.records):
            raise ValueError("one record per candidate required")
        if not self.candidates:
            raise ValueError("candidate set is empty")
        shape = self.candidates[0].shape
        if any(c.shape != shape for c in self.candidates):
            raise ValueError("candidates must share one shape")

    def best(self) -> int:
        return select_best(self)


def candidate_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, candidate index)."""
    key = np.array([seed & _U64, index & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def weight_map(
    anchors: tuple[tuple[float, float], ...],
    sigmas: tuple[float, ...],
    height: int,
    width: int,
    radius_factor: float = 1.5,
    softness: float = 0.05,
) -> np.ndarray:
    """Guidance weight: near 0 inside each handle's influence disk, rising to 1
    outside, so guidance holds the far field to the reference and releases the
    edit region."""
    xs, ys = coord_grids(height, width)
    m = np.ones((height, width))
    for (ax, ay), sigma in zip(anchors, sigmas):
        d = np.hypot(xs - ax, ys - ay)
        m = np.minimum(m, 1.0 / (1.0 + np.exp(-(d - radius_factor * sigma) / softness)))
    return m


def calibrate_z_void(encode: Callable[[DensityField], np.ndarray] = encode_field) -> float:
    """Latent value of all-void material under the codec; -1 for the identity
    codec. Raises if the codec does not map void to a constant."""
    z = encode(DensityField.uniform(16, 16, 0.0))
    lo, hi = float(z.min()), float(z.max())
    if hi - lo > 1e-12:
        raise ValueError("codec does not encode void as a constant latent")
    return lo


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class EditEngine:
    """Runs the three edit pipelines against one trained denoiser."""

    def __init__(self, model: Denoiser):
        self.model = model
        self._schedules: dict[int, NoiseSchedule] = {}

    def schedule(self, total_steps: int) -> NoiseSchedule:
        if total_steps not in self._schedules:
            self._schedules[total_steps] = make_schedule(total_steps)
        return self._schedules[total_steps]

    def _to_latent(self, field: DensityField) -> np.ndarray:
        res = self.model.resolution
        f = field if field.shape == (res, res) else resample_field(field, res, res)
        return encode_field(f)

    def _to_field(self, z: np.ndarray, like: DensityField) -> DensityField:
        f = decode_field(z)
        if f.shape != like.shape:
            f = resample_field(f, like.height, like.width)
        return f

    def _sample(
        self,
        kind: str,
        field: DensityField,
        spec: ProblemSpec,
        updated_spec: ProblemSpec,
        reference: DensityField,
        params: dict,
        cfg: EditConfig,
        make_latent: Callable[[np.ndarray, NoiseSchedule], np.ndarray],
        z_ref: np.ndarray | None,
        weight: np.ndarray | None,
        assess: Callable[[DensityField], tuple[dict, bool, str]],
    ) -> CandidateSet:
        sched = self.schedule(cfg.total_steps)
        cond = self.model.embed(updated_spec).vector
        res = self.model.resolution
        guide = z_ref if cfg.guidance_scale > 0 else None

        candidates: list[DensityField] = []
        records: list[EditRecord] = []
        for i in range(cfg.num_samples):
            started = _now()
            cand: DensityField | None = None
            metrics: dict = {}
            failed, reason = False, ""
            try:
                eps = candidate_rng(cfg.seed, i).standard_normal((res, res))
                z = make_latent(eps, sched)
                if cfg.partial_steps >= 1:
                    z = denoise(
                        self.model,
                        sched,
                        z,
                        cfg.partial_steps,
                        cond,
                        z_ref=guide,
                        weight=weight,
                        scale=cfg.guidance_scale,
                        stride=cfg.stride,
                    )
                cand = self._to_field(z, like=field)
                if cfg.refine_steps > 0:
                    cand = refine(cand, updated_spec, cfg.refine_steps).field
                metrics, failed, reason = assess(cand)
            except Exception as exc:  # containment: one bad sample never aborts the set
                failed = True
                reason = f"{type(exc).__name__}: {exc}"
                if cand is None:
                    cand = DensityField.uniform(field.width, field.height, 0.0)
            candidates.append(cand)
            records.append(
                EditRecord(
                    kind=kind,
                    params=params,
                    seed=cfg.seed,
                    candidate_index=i,
                    metrics=metrics,
                    failed=failed,
                    failure_reason=reason,
                    started_at=started,
                    finished_at=_now(),
                )
            )
        return CandidateSet(
            kind=kind,
            original=field,
            reference=reference,
            spec=spec,
            updated_spec=updated_spec,
            candidates=tuple(candidates),
            records=tuple(records),
        )

    # ------------------------------------------------------------------
    # Warp

    def edit_warp(
        self,
        field: DensityField,
        spec: ProblemSpec,
        w: WarpSpec,
        cfg: EditConfig | None = None,
        extra_hole: tuple[tuple[float, float], float] | None = None,
    ) -> CandidateSet:
        """Drag edit: noise to tau, warp the noised latent, denoise with masked
        guidance toward the original latent; the problem follows the warp.

        `extra_hole` composes a no-design overwrite into the same pass."""
        cfg = cfg if cfg is not None else EditConfig.for_warp()
        z0 = self._to_latent(field)
        p_prime = warp_problem(spec, w)
        reference = warp_field(field, w)
        anchors = achieved_handle(w)
        sigmas = tuple(h.sigma for h in w.handles)
        res = self.model.resolution
        wmap = weight_map(
            anchors, sigmas, res, res, cfg.weight_radius_factor, cfg.weight_softness
        )

        guide_ref = z0
        hole_src = None
        hole_lat = None
        params = {"warp": w.to_doc(), "config": cfg.to_doc()}
        if extra_hole is not None:
            center, radius = extra_hole
            hole_src = hole_mask(center, radius, field.width, field.height)
            hole_lat = hole_mask(center, radius, res, res).values
            # reference carries the cleared hole so unmasked far-field guidance
            # holds it void; the warp region stays released by the weight map
            guide_ref = self._to_latent(apply_hole(field, hole_src))
            reference = apply_hole(reference, hole_src)
            params["hole"] = {"center": list(center), "radius": radius}
        z_void = calibrate_z_void()

        def make_latent(eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
            z = warp_grid(noise(z0, cfg.partial_steps, eps, sched), w)
            if hole_lat is not None:
                z = z * (1.0 - hole_lat) + z_void * hole_lat
            return z

        c_o = compliance(field, spec)
        targets = [(h.x + h.dx, h.y + h.dy) for h in w.handles]
        drags = [math.hypot(h.dx, h.dy) for h in w.handles]

        def assess(cand: DensityField) -> tuple[dict, bool, str]:
            c_e = compliance(cand, p_prime)
            ce = percent_change(c_e, c_o)
            des = [
                distance_error(cand, t, d) for t, d in zip(targets, drags) if d > 0
            ]
            metrics = {
                "compliance": c_e,
                "ce": ce,
                "de": float(np.mean(des)) if des else 0.0,
                "vf": cand.volume_fraction(),
            }
            if hole_src is not None:
                metrics["violation"] = violation_ratio(cand, hole_src)
            failed = classify_failure("warp", ce=ce)
            return metrics, failed, "compliance error above 100%" if failed else ""

        return self._sample(
            "warp", field, spec, p_prime, reference, params, cfg,
            make_latent, guide_ref, wmap, assess,
        )

    # ------------------------------------------------------------------
    # Lattice infill

    def edit_lattice(
        self,
        field: DensityField,
        spec: ProblemSpec,
        lat: LatticeSpec,
        shell: float,
        cfg: EditConfig | None = None,
    ) -> CandidateSet:
        """Replace the interior with a lattice: re-noise the composed target
        and denoise with unmasked guidance toward it. No latent-space operator
        beyond the re-noising is applied."""
        cfg = cfg if cfg is not None else EditConfig.for_lattice()
        region = infill_mask(field, shell)
        t_lat, vf_lat = compose_lattice(field, region, lat)
        if not 0.0 < vf_lat < 1.0:
            raise ValueError(
                f"lattice composition yields degenerate volume fraction {vf_lat}"
            )
        p_prime = dataclasses.replace(spec, volume_fraction=vf_lat)
        z_ref = self._to_latent(t_lat)
        params = {
            "lattice": lat.to_doc(),
            "shell": shell,
            "vf_target": vf_lat,
            "config": cfg.to_doc(),
        }

        def make_latent(eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
            return noise(z_ref, cfg.partial_steps, eps, sched)

        c_o = compliance(field, spec)

        def assess(cand: DensityField) -> tuple[dict, bool, str]:
            c_e = compliance(cand, spec)
            ratio = c_e / c_o
            vf = cand.volume_fraction()
            metrics = {
                "compliance": c_e,
                "ratio": ratio,
                "vf": vf,
                "vf_target": vf_lat,
                "vfe": volume_fraction_error(vf, vf_lat),
                "iou": iou(cand, t_lat),
            }
            failed = classify_failure("lattice", ratio=ratio)
            return metrics, failed, "compliance above 1000x original" if failed else ""

        return self._sample(
            "lattice", field, spec, p_prime, t_lat, params, cfg,
            make_latent, z_ref, None, assess,
        )

    # ------------------------------------------------------------------
    # No-design region

    def edit_nodesign(
        self,
        field: DensityField,
        spec: ProblemSpec,
        center: tuple[float, float],
        radius: float,
        cfg: EditConfig | None = None,
    ) -> CandidateSet:
        """Carve a keep-out disk: noise the original latent, overwrite the hole
        with the void value once, denoise with unmasked guidance toward the
        hole-cleared reference. The problem spec is unchanged."""
        cfg = cfg if cfg is not None else EditConfig.for_nodesign()
        hole_src = hole_mask(center, radius, field.width, field.height)
        t_hole = apply_hole(field, hole_src)
        z0 = self._to_latent(field)
        z_ref = self._to_latent(t_hole)
        res = self.model.resolution
        hole_lat = hole_mask(center, radius, res, res).values
        z_void = calibrate_z_void()
        params = {
            "center": list(center),
            "radius": radius,
            "z_void": z_void,
            "config": cfg.to_doc(),
        }

        def make_latent(eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
            z = noise(z0, cfg.partial_steps, eps, sched)
            return z * (1.0 - hole_lat) + z_void * hole_lat

        c_o = compliance(field, spec)

        def assess(cand: DensityField) -> tuple[dict, bool, str]:
            c_e = compliance(cand, spec)
            ratio = c_e / c_o
            metrics = {
                "compliance": c_e,
                "ratio": ratio,
                "vf": cand.volume_fraction(),
                "violation": violation_ratio(cand, hole_src),
                "iou": iou(cand, t_hole),
            }
            failed = classify_failure("nodesign", ratio=ratio)
            return metrics, failed, "compliance above 1000x original" if failed else ""

        return self._sample(
            "nodesign", field, spec, spec, t_hole, params, cfg,
            make_latent, z_ref, None, assess,
        )

    def run(self, field: DensityField, spec: ProblemSpec, request: EditRequest) -> CandidateSet:
        if request.kind == "warp":
            return self.edit_warp(field, spec, request.warp, request.config)
        if request.kind == "lattice":
            return self.edit_lattice(field, spec, request.lattice, request.shell, request.config)
        return self.edit_nodesign(field, spec, request.center, request.radius, request.config)


def direct_edit(
    field: DensityField, spec: ProblemSpec, request: EditRequest
) -> DensityField:
    """Density-space baseline: the same edit applied directly, no sampling."""
    if request.kind == "warp":
        return warp_field(field, request.warp)
    if request.kind == "lattice":
        region = infill_mask(field, request.shell)
        return compose_lattice(field, region, request.lattice)[0]
    hole = hole_mask(request.center, request.radius, field.width, field.height)
    return apply_hole(field, hole)


def _metric(rec: EditRecord, name: str) -> float:
    v = rec.metrics.get(name)
    if v is None or not math.isfinite(v):
        return math.inf
    return float(v)


def selection_key(kind: str, rec: EditRecord) -> tuple:
    """Total order used by select_best; lower is better. Failed candidates and
    constraint violators sort last within their group."""
    if kind == "warp":
        return (_metric(rec, "ce") + _metric(rec, "de"), rec.candidate_index)
    if kind == "lattice":
        vf, target = _metric(rec, "vf"), _metric(rec, "vf_target")
        meets = abs(vf - target) <= LATTICE_VF_TOLERANCE
        return (0 if meets else 1, _metric(rec, "compliance"), rec.candidate_index)
    if kind == "nodesign":
        meets = _metric(rec, "violation") <= NODESIGN_VIOLATION_LIMIT
        return (0 if meets else 1, _metric(rec, "compliance"), rec.candidate_index)
    raise ValueError(f"unknown edit kind {kind!r}")


def select_index(kind: str, records: tuple[EditRecord, ...], prefix: int | None = None) -> int:
    """Index of the best record; `prefix` restricts to the first N (the
    best-of-N analysis walks prefixes of one sampled set)."""
    n = len(records) if prefix is None else prefix
    if not 1 <= n <= len(records):
        raise ValueError("prefix must select at least one candidate")
    return min(range(n), key=lambda i: selection_key(kind, records[i]))


def select_best(cands: CandidateSet, prefix: int | None = None) -> int:
    return select_index(cands.kind, cands.records, prefix)
