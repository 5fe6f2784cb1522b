"""Scalar quality measures for edited designs.

Conventions: compliance error and violation are percentages; distance error is
normalized by the drag magnitude so 100% means the edit was fully reverted;
IoU is computed on fields binarized at 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DensityField, Mask, ProblemSpec
from .fem import solve
from .morphology import binarize, detect_joints, medial_axis

DE_FALLBACK_CAP = 1000.0
WARP_FAILURE_CE = 100.0
COMPLIANCE_FAILURE_RATIO = 1000.0
# no-design disk in normalized coordinates spans at most the unit square
DOMAIN_DIAGONAL = math.sqrt(2.0)


@dataclass(frozen=True)
class MetricReport:
    """Per-candidate scores; fields not applicable to an edit kind stay None."""

    ce: float | None = None
    de: float | None = None
    vfe: float | None = None
    iou: float | None = None
    violation: float | None = None
    failed: bool = False

    def __post_init__(self):
        if self.iou is not None and not 0.0 <= self.iou <= 1.0:
            raise ValueError(f"iou {self.iou} outside [0, 1]")
        if self.violation is not None and not 0.0 <= self.violation <= 100.0:
            raise ValueError(f"violation {self.violation} outside [0, 100]")
        if self.ce is not None and math.isfinite(self.ce) and self.ce < -100.0:
            raise ValueError(f"compliance error {self.ce} below -100")

    def to_doc(self) -> dict:
        return {
            "ce": self.ce,
            "de": self.de,
            "vfe": self.vfe,
            "iou": self.iou,
            "violation": self.violation,
            "failed": self.failed,
        }


def compliance(field: DensityField, spec: ProblemSpec) -> float:
    return solve(field, spec).compliance


def percent_change(c_edited: float, c_original: float) -> float:
    return 100.0 * (c_edited - c_original) / c_original


def compliance_error(
    edited: DensityField,
    original: DensityField,
    spec: ProblemSpec,
    edited_spec: ProblemSpec | None = None,
) -> float:
    """Percent compliance change. A warp moves the loads with the geometry, so
    the edited field is solved under `edited_spec` when given."""
    c_o = compliance(original, spec)
    c_e = compliance(edited, edited_spec if edited_spec is not None else spec)
    return percent_change(c_e, c_o)


def joint_locations(field: DensityField) -> tuple[tuple[float, float], ...]:
    return detect_joints(medial_axis(binarize(field)))


def distance_error(
    edited: DensityField, target: tuple[float, float], drag: float
) -> float:
    """100 * (distance from target to the nearest joint) / drag magnitude.

    No detectable joints falls back to the domain diagonal, capped at 1000%.
    """
    if drag <= 0.0:
        raise ValueError("drag magnitude must be positive")
    joints = joint_locations(edited)
    if not joints:
        return min(100.0 * DOMAIN_DIAGONAL / drag, DE_FALLBACK_CAP)
    tx, ty = target
    d = min(math.hypot(jx - tx, jy - ty) for jx, jy in joints)
    return 100.0 * d / drag


def iou(a: DensityField, b: DensityField) -> float:
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    sa = a.values >= 0.5
    sb = b.values >= 0.5
    union = np.logical_or(sa, sb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(sa, sb).sum() / union)


def violation_ratio(edited: DensityField, hole: Mask) -> float:
    """Percent of the no-design area occupied by material. Empty masks have
    nothing to violate and score 0."""
    if hole.shape != edited.shape:
        raise ValueError("hole mask shape does not match field")
    area = hole.values.sum()
    if area == 0:
        return 0.0
    solid = (edited.values >= 0.5).astype(float)
    return float(100.0 * (solid * hole.values).sum() / area)


def volume_fraction_error(vf: float, target: float) -> float:
    """Signed percent deviation from the target volume fraction."""
    if target <= 0.0:
        raise ValueError("target volume fraction must be positive")
    return 100.0 * (vf - target) / target


def classify_failure(task: str, ce: float | None = None, ratio: float | None = None) -> bool:
    """Task-specific failure cutoffs: warp fails past 100% compliance error,
    lattice and no-design past a 1000x compliance ratio."""
    if task == "warp":
        if ce is None:
            raise ValueError("warp failure needs a compliance error")
        return ce > WARP_FAILURE_CE
    if task in ("lattice", "nodesign"):
        if ratio is None:
            raise ValueError(f"{task} failure needs a compliance ratio")
        return ratio > COMPLIANCE_FAILURE_RATIO
    raise ValueError(f"unknown task {task!r}")
