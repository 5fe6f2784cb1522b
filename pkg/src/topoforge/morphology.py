"""Binary shape analysis: medial axis, joints, member thickness, infill and
hole masks, lattice patterns.

Convention: the domain exterior counts as void. Every distance transform pads
the image with a one-pixel void ring, so a solid pixel on the domain edge has
distance 1 and a fully solid W x W grid has center distance W/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    DensityField,
    Mask,
    ParseError,
    _expect_int,
    _expect_mapping,
    _expect_str,
)

EIGHT = np.ones((3, 3), dtype=int)  # 8-connectivity structuring element
SPUR_MIN_LEN = 3
JOINT_MERGE_RADIUS = 2.0


def binarize(field: DensityField, threshold: float = 0.5) -> Mask:
    """Solid mask: density >= threshold."""
    return Mask(field.width, field.height, (field.values >= threshold).astype(float))


def distance_to_void(solid: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each solid pixel to the nearest void pixel,
    with the domain exterior treated as void. Void pixels get 0."""
    padded = np.pad(solid.astype(bool), 1, constant_values=False)
    d = ndimage.distance_transform_edt(padded)
    return d[1:-1, 1:-1]


# ---------------------------------------------------------------------------
# Thinning. Classic two-subiteration scheme; neighbor ring order
# p2..p9 = N, NE, E, SE, S, SW, W, NW (clockwise from north).

def _neighbors(img: np.ndarray) -> list[np.ndarray]:
    p = np.pad(img, 1, constant_values=0)
    n = p[:-2, 1:-1]
    ne = p[:-2, 2:]
    e = p[1:-1, 2:]
    se = p[2:, 2:]
    s = p[2:, 1:-1]
    sw = p[2:, :-2]
    w = p[1:-1, :-2]
    nw = p[:-2, :-2]
    return [n, ne, e, se, s, sw, w, nw]


def _ring_transitions(nb: list[np.ndarray]) -> np.ndarray:
    """Count 0->1 transitions around the 8-neighbor ring."""
    a = np.zeros(nb[0].shape, dtype=int)
    for i in range(8):
        a += (nb[i] == 0) & (nb[(i + 1) % 8] == 1)
    return a


def thin(solid: np.ndarray) -> np.ndarray:
    """Iterative thinning to a one-pixel-wide 8-connected skeleton."""
    img = solid.astype(np.uint8).copy()
    while True:
        removed_any = False
        for phase in (0, 1):
            nb = _neighbors(img)
            n, ne, e, se, s, sw, w, nw = nb
            b = sum(nb)
            a = _ring_transitions(nb)
            cond = (img == 1) & (b >= 2) & (b <= 6) & (a == 1)
            if phase == 0:
                cond &= (n * e * s == 0) & (e * s * w == 0)
            else:
                cond &= (n * e * w == 0) & (n * s * w == 0)
            if cond.any():
                img[cond] = 0
                removed_any = True
        if not removed_any:
            return img.astype(bool)


def _branch_count(skel: np.ndarray) -> np.ndarray:
    """Per-pixel count of distinct branches leaving a skeleton pixel."""
    nb = _neighbors(skel.astype(np.uint8))
    a = _ring_transitions(nb)
    # isolated pixel: ring all zero -> 0 branches
    return np.where(skel, a, 0)


def prune_spurs(skel: np.ndarray, min_len: int = SPUR_MIN_LEN) -> np.ndarray:
    """Remove terminal branches shorter than min_len pixels.

    Walks from each endpoint toward the first junction; the walked pixels
    (junction excluded) form the spur. Isolated segments with two endpoints
    are kept whatever their length.
    """
    img = skel.copy()
    changed = True
    while changed:
        changed = False
        branches = _branch_count(img)
        endpoints = np.argwhere(img & (branches <= 1))
        junctions = img & (branches >= 3)
        for r0, c0 in endpoints:
            if not img[r0, c0]:
                continue
            path = [(int(r0), int(c0))]
            prev = None
            cur = (int(r0), int(c0))
            hit_junction = False
            while len(path) < min_len:
                nxt = None
                r, c = cur
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        if dr == 0 and dc == 0:
                            continue
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < img.shape[0] and 0 <= cc < img.shape[1]:
                            if img[rr, cc] and (rr, cc) != prev and (rr, cc) not in path:
                                if junctions[rr, cc]:
                                    hit_junction = True
                                    nxt = None
                                    break
                                if nxt is None:
                                    nxt = (rr, cc)
                    if hit_junction:
                        break
                if hit_junction or nxt is None:
                    break
                prev = cur
                cur = nxt
                path.append(cur)
            if hit_junction and len(path) < min_len:
                for rr, cc in path:
                    img[rr, cc] = False
                changed = True
    return img


@dataclass(frozen=True)
class Skeleton:
    mask: np.ndarray  # bool (H, W)
    distance: np.ndarray  # EDT of the source solid, float64 (H, W)
    joints: tuple[tuple[float, float], ...]  # normalized (x, y), each on a skeleton pixel

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        d = np.asarray(self.distance, dtype=np.float64)
        d.setflags(write=False)
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "joints", tuple((float(x), float(y)) for x, y in self.joints))


def _joint_pixels(skel: np.ndarray) -> list[tuple[int, int]]:
    pruned = prune_spurs(skel)
    branches = _branch_count(pruned)
    raw = [(int(r), int(c)) for r, c in np.argwhere(pruned & (branches >= 3))]
    if not raw:
        return []
    # merge clusters within JOINT_MERGE_RADIUS, union-find over pairs
    parent = list(range(len(raw)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(raw)):
        for j in range(i + 1, len(raw)):
            if math.hypot(raw[i][0] - raw[j][0], raw[i][1] - raw[j][1]) <= JOINT_MERGE_RADIUS:
                parent[find(i)] = find(j)
    clusters: dict[int, list[tuple[int, int]]] = {}
    for i, p in enumerate(raw):
        clusters.setdefault(find(i), []).append(p)
    out = []
    for pts in clusters.values():
        cr = sum(p[0] for p in pts) / len(pts)
        cc = sum(p[1] for p in pts) / len(pts)
        # snap the centroid back onto the cluster so the joint lies on the skeleton
        best = min(pts, key=lambda p: (math.hypot(p[0] - cr, p[1] - cc), p))
        out.append(best)
    out.sort()
    return out


def _to_norm(r: int, c: int, height: int, width: int) -> tuple[float, float]:
    return (c / (width - 1), r / (height - 1))


def medial_axis(solid: Mask) -> Skeleton:
    """Thin the solid to a skeleton; carries the EDT and detected joints."""
    if not solid.is_binary():
        raise ValueError("medial_axis requires a binary mask")
    if solid.width < 2 or solid.height < 2:
        raise ValueError("grid too small for skeleton analysis")
    s = solid.values.astype(bool)
    sk = thin(s)
    dist = distance_to_void(s)
    joints = tuple(
        _to_norm(r, c, solid.height, solid.width) for r, c in _joint_pixels(sk)
    )
    return Skeleton(mask=sk, distance=dist, joints=joints)


def detect_joints(sk: Skeleton) -> tuple[tuple[float, float], ...]:
    """Joints of an existing skeleton: pixels where >= 3 branches meet, spur
    branches under 3 px pruned first, clusters within 2 px merged."""
    h, w = sk.mask.shape
    return tuple(_to_norm(r, c, h, w) for r, c in _joint_pixels(sk.mask))


def max_member_thickness(field: DensityField, threshold: float = 0.5) -> float:
    """Twice the largest inscribed-circle radius along the medial axis; 0 for
    an empty design."""
    solid = binarize(field, threshold)
    if not solid.values.any():
        return 0.0
    sk = medial_axis(solid)
    if not sk.mask.any():
        # degenerate: solid exists but thins to nothing; fall back to the EDT peak
        return float(2.0 * sk.distance.max())
    return float(2.0 * sk.distance[sk.mask].max())


# ---------------------------------------------------------------------------
# Infill regions and lattice patterns.

def infill_mask(field: DensityField, shell: float, threshold: float = 0.5) -> Mask:
    """Interior region deeper than `shell` pixels from any void (or the domain
    boundary). Binary mask."""
    if shell < 0:
        raise ValueError("shell thickness must be nonnegative")
    solid = field.values >= threshold
    d = distance_to_void(solid)
    return Mask(field.width, field.height, (d > shell).astype(float))


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic lattice: members of `member` px width repeating every `pitch` px,
    anchored at pixel (0, 0). Patterns: axis-aligned "grid", diagonal "cross"."""

    pattern: str
    pitch: int
    member: int

    def __post_init__(self):
        if self.pattern not in ("grid", "cross"):
            raise ValueError(f"unknown lattice pattern {self.pattern!r}")
        if self.pitch < 2:
            raise ValueError("pitch must be at least 2 px")
        if not (1 <= self.member < self.pitch):
            raise ValueError("member width must be in [1, pitch)")

    def render(self, width: int, height: int) -> np.ndarray:
        r, c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        if self.pattern == "grid":
            on = (r % self.pitch < self.member) | (c % self.pitch < self.member)
        else:
            on = ((r + c) % self.pitch < self.member) | ((r - c) % self.pitch < self.member)
        return on.astype(float)

    def to_doc(self) -> dict:
        return {"pattern": self.pattern, "pitch": self.pitch, "member": self.member}

    @classmethod
    def from_doc(cls, doc, path: str = "lattice") -> "LatticeSpec":
        _expect_mapping(doc, path)
        pattern = _expect_str(doc, "pattern", path)
        pitch = _expect_int(doc, "pitch", path)
        member = _expect_int(doc, "member", path)
        try:
            return cls(pattern=pattern, pitch=pitch, member=member)
        except ValueError as e:
            raise ParseError(path, str(e)) from e


def compose_lattice(
    field: DensityField, region: Mask, lattice: LatticeSpec
) -> tuple[DensityField, float]:
    """Replace the masked interior with the lattice; returns the composed field
    and its volume fraction."""
    if region.shape != field.shape:
        raise ValueError("region mask shape does not match field")
    lat = lattice.render(field.width, field.height)
    m = region.values
    vals = np.clip(field.values * (1.0 - m) + lat * m, 0.0, 1.0)
    out = DensityField(field.width, field.height, vals)
    return out, out.volume_fraction()


# ---------------------------------------------------------------------------
# No-design (hole) regions.

def hole_mask(center: tuple[float, float], radius: float, width: int, height: int) -> Mask:
    """Disk of `radius` around `center`, both in normalized coordinates.

    Radius is measured in units of the longer grid side so the region is a
    true circle in pixels on any aspect ratio. radius <= 0 gives an empty mask.
    """
    cx, cy = center
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise ValueError("hole center must lie in [0, 1]^2")
    if radius <= 0.0:
        return Mask(width, height, np.zeros((height, width)))
    scale = float(max(width - 1, height - 1))
    c = np.arange(width)
    r = np.arange(height)
    dx = (c / (width - 1) - cx) * (width - 1) / scale
    dy = (r / (height - 1) - cy) * (height - 1) / scale
    d2 = dy[:, None] ** 2 + dx[None, :] ** 2
    return Mask(width, height, (d2 <= radius * radius).astype(float))


def apply_hole(field: DensityField, hole: Mask) -> DensityField:
    """Clear material inside the hole mask."""
    if hole.shape != field.shape:
        raise ValueError("hole mask shape does not match field")
    vals = np.clip(field.values * (1.0 - hole.values), 0.0, 1.0)
    return DensityField(field.width, field.height, vals)
