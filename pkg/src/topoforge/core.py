"""Core value types: density grids, boundary-condition specs, masks, edit records.

Everything here is an immutable value. Grids are float64 arrays of shape
(height, width), row-major, with values in [0, 1]. Normalized coordinates use
the align-corners convention: pixel (row r, col c) sits at
(x, y) = (c / (W - 1), r / (H - 1)), so x runs left to right and y top to bottom.
"""

from __future__ import annotations

import base64
import contextlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

MIN_RESOLUTION = 4


class ParseError(ValueError):
    """Raised when a serialized document fails validation.

    Carries the dotted path of the offending field so callers (CLI, service)
    can surface it without string-scraping.
    """

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _check_grid(values: Any, width: int, height: int, what: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 1:
        if a.size != width * height:
            raise ValueError(
                f"{what}: expected {width * height} values for {width}x{height}, got {a.size}"
            )
        a = a.reshape(height, width)
    if a.shape != (height, width):
        raise ValueError(f"{what}: shape {a.shape} does not match (height={height}, width={width})")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what}: values must be finite")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(f"{what}: values must lie in [0, 1], got range [{a.min()}, {a.max()}]")
    return _freeze(a)


@dataclass(frozen=True)
class DensityField:
    """A material-density grid with values in [0, 1]."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if self.width < MIN_RESOLUTION or self.height < MIN_RESOLUTION:
            raise ValueError(
                f"resolution {self.width}x{self.height} below minimum {MIN_RESOLUTION}"
            )
        object.__setattr__(self, "values", _check_grid(self.values, self.width, self.height, "density"))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "DensityField":
        a = np.asarray(a, dtype=np.float64)
        return cls(width=a.shape[1], height=a.shape[0], values=a)

    @classmethod
    def uniform(cls, width: int, height: int, value: float) -> "DensityField":
        return cls(width, height, np.full((height, width), float(value)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def volume_fraction(self) -> float:
        return float(self.values.mean())

    def to_doc(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "values": [float(v) for v in self.values.ravel()],
        }

    @classmethod
    def from_doc(cls, doc: Any, path: str = "field") -> "DensityField":
        _expect_mapping(doc, path)
        w = _expect_int(doc, "width", path, minimum=MIN_RESOLUTION)
        h = _expect_int(doc, "height", path, minimum=MIN_RESOLUTION)
        vals = _expect_number_list(doc, "values", path)
        try:
            return cls(w, h, np.array(vals, dtype=np.float64))
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(f"{path}.values", str(e)) from e


@dataclass(frozen=True)
class Mask:
    """A spatial weight grid, same layout as DensityField, values in [0, 1]."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("mask must be non-empty")
        object.__setattr__(self, "values", _check_grid(self.values, self.width, self.height, "mask"))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "Mask":
        a = np.asarray(a, dtype=np.float64)
        return cls(width=a.shape[1], height=a.shape[0], values=a)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def coverage(self) -> float:
        return float(self.values.mean())

    def to_doc(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "values": [float(v) for v in self.values.ravel()],
        }

    @classmethod
    def from_doc(cls, doc: Any, path: str = "mask") -> "Mask":
        _expect_mapping(doc, path)
        w = _expect_int(doc, "width", path, minimum=1)
        h = _expect_int(doc, "height", path, minimum=1)
        vals = _expect_number_list(doc, "values", path)
        try:
            return cls(w, h, np.array(vals, dtype=np.float64))
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(f"{path}.values", str(e)) from e


@dataclass(frozen=True)
class SupportPoint:
    """A point constraint in normalized coordinates; either axis may be fixed."""

    x: float
    y: float
    fix_x: bool
    fix_y: bool

    def __post_init__(self):
        _check_coord(self.x, "support.x")
        _check_coord(self.y, "support.y")
        if not (self.fix_x or self.fix_y):
            raise ValueError("support fixes neither axis")


@dataclass(frozen=True)
class LoadPoint:
    """A point load in normalized coordinates with force components (fx, fy)."""

    x: float
    y: float
    fx: float
    fy: float

    def __post_init__(self):
        _check_coord(self.x, "load.x")
        _check_coord(self.y, "load.y")
        if not (math.isfinite(self.fx) and math.isfinite(self.fy)):
            raise ValueError("load components must be finite")
        if self.fx == 0.0 and self.fy == 0.0:
            raise ValueError("load has zero magnitude")


def _check_coord(v: float, name: str) -> None:
    if not (math.isfinite(v) and 0.0 <= v <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class ProblemSpec:
    """Boundary conditions and targets for one design problem.

    aspect is the physical (width, height) extent ratio; cell_size is the
    element edge length in the same units, so the solver grid resolution is
    round(aspect / cell_size) per axis.
    """

    supports: tuple[SupportPoint, ...]
    loads: tuple[LoadPoint, ...]
    volume_fraction: float
    aspect: tuple[float, float]
    cell_size: float

    def __post_init__(self):
        object.__setattr__(self, "supports", tuple(self.supports))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "aspect", (float(self.aspect[0]), float(self.aspect[1])))
        if not self.supports:
            raise ValueError("at least one support required")
        if not self.loads:
            raise ValueError("at least one load required")
        if not (0.0 < self.volume_fraction < 1.0):
            raise ValueError(f"volume_fraction must be in (0, 1), got {self.volume_fraction}")
        if self.aspect[0] <= 0 or self.aspect[1] <= 0:
            raise ValueError("aspect components must be positive")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError("cell_size must be positive")
        nelx, nely = self.resolution()
        if nelx < MIN_RESOLUTION or nely < MIN_RESOLUTION:
            raise ValueError(
                f"resolution {nelx}x{nely} below minimum {MIN_RESOLUTION}; "
                "decrease cell_size or increase aspect"
            )

    def resolution(self) -> tuple[int, int]:
        """Solver grid (nelx, nely) implied by aspect and cell size."""
        return (
            int(round(self.aspect[0] / self.cell_size)),
            int(round(self.aspect[1] / self.cell_size)),
        )

    def to_doc(self) -> dict:
        return {
            "supports": [
                {"x": s.x, "y": s.y, "fix_x": s.fix_x, "fix_y": s.fix_y} for s in self.supports
            ],
            "loads": [{"x": l.x, "y": l.y, "fx": l.fx, "fy": l.fy} for l in self.loads],
            "volume_fraction": self.volume_fraction,
            "aspect": [self.aspect[0], self.aspect[1]],
            "cell_size": self.cell_size,
        }

    @classmethod
    def from_doc(cls, doc: Any, path: str = "spec") -> "ProblemSpec":
        _expect_mapping(doc, path)
        raw_sup = _expect_list(doc, "supports", path)
        raw_load = _expect_list(doc, "loads", path)
        supports = []
        for i, s in enumerate(raw_sup):
            p = f"{path}.supports[{i}]"
            _expect_mapping(s, p)
            try:
                supports.append(
                    SupportPoint(
                        x=_expect_num(s, "x", p),
                        y=_expect_num(s, "y", p),
                        fix_x=_expect_bool(s, "fix_x", p),
                        fix_y=_expect_bool(s, "fix_y", p),
                    )
                )
            except ParseError:
                raise
            except ValueError as e:
                raise ParseError(p, str(e)) from e
        loads = []
        for i, l in enumerate(raw_load):
            p = f"{path}.loads[{i}]"
            _expect_mapping(l, p)
            try:
                loads.append(
                    LoadPoint(
                        x=_expect_num(l, "x", p),
                        y=_expect_num(l, "y", p),
                        fx=_expect_num(l, "fx", p),
                        fy=_expect_num(l, "fy", p),
                    )
                )
            except ParseError:
                raise
            except ValueError as e:
                raise ParseError(p, str(e)) from e
        vf = _expect_num(doc, "volume_fraction", path)
        aspect = _expect_number_list(doc, "aspect", path, length=2)
        cell = _expect_num(doc, "cell_size", path)
        try:
            return cls(
                supports=tuple(supports),
                loads=tuple(loads),
                volume_fraction=vf,
                aspect=(aspect[0], aspect[1]),
                cell_size=cell,
            )
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(path, str(e)) from e


@dataclass(frozen=True)
class EditRecord:
    """Provenance for one generated candidate: how it was made and how it scored."""

    kind: str  # "warp" | "lattice" | "nodesign" | "direct"
    params: dict
    seed: int
    candidate_index: int
    metrics: dict
    failed: bool = False
    failure_reason: str = ""
    started_at: str = ""
    finished_at: str = ""

    def __post_init__(self):
        if self.kind not in ("warp", "lattice", "nodesign", "direct"):
            raise ValueError(f"unknown edit kind {self.kind!r}")

    def to_doc(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "candidate_index": self.candidate_index,
            "metrics": self.metrics,
            "failed": self.failed,
            "failure_reason": self.failure_reason,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_doc(cls, doc: Any, path: str = "record") -> "EditRecord":
        _expect_mapping(doc, path)
        kind = _expect_str(doc, "kind", path)
        params = doc.get("params")
        if not isinstance(params, dict):
            raise ParseError(f"{path}.params", "expected an object")
        metrics = doc.get("metrics")
        if not isinstance(metrics, dict):
            raise ParseError(f"{path}.metrics", "expected an object")
        try:
            return cls(
                kind=kind,
                params=params,
                seed=_expect_int(doc, "seed", path),
                candidate_index=_expect_int(doc, "candidate_index", path),
                metrics=metrics,
                failed=bool(doc.get("failed", False)),
                failure_reason=str(doc.get("failure_reason", "")),
                started_at=str(doc.get("started_at", "")),
                finished_at=str(doc.get("finished_at", "")),
            )
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(path, str(e)) from e


# ---------------------------------------------------------------------------
# Latent codec: z = 2t - 1 maps [0,1] densities onto [-1,1] exactly.

def encode_field(f: DensityField) -> np.ndarray:
    """Density grid -> latent grid in [-1, 1]. Exact affine map."""
    return f.values * 2.0 - 1.0


def decode_field(z: np.ndarray) -> DensityField:
    """Latent grid -> density grid; clamps to [0, 1], rejects non-finite input."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"latent must be 2-d, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent contains non-finite values")
    t = np.clip((z + 1.0) * 0.5, 0.0, 1.0)
    return DensityField(width=z.shape[1], height=z.shape[0], values=t)


# ---------------------------------------------------------------------------
# Resampling between grid resolutions.

def _axis_resample(a: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    """Resample one axis: align-corners linear when enlarging, box average when
    shrinking. Identity when sizes match."""
    n = a.shape[axis]
    if out_n == n:
        return a
    a = np.moveaxis(a, axis, 0)
    if out_n > n:
        pos = np.linspace(0.0, n - 1.0, out_n)
        i0 = np.clip(np.floor(pos).astype(int), 0, n - 1)
        i1 = np.minimum(i0 + 1, n - 1)
        frac = (pos - i0).reshape((-1,) + (1,) * (a.ndim - 1))
        out = a[i0] * (1.0 - frac) + a[i1] * frac
    else:
        # Treat input samples as unit cells covering [0, n); integrate the
        # piecewise-constant function over each output cell of width n/out_n.
        edges = np.linspace(0.0, n, out_n + 1)
        cum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])

        def integral(p: np.ndarray) -> np.ndarray:
            i = np.clip(np.floor(p).astype(int), 0, n - 1)
            frac = (p - i).reshape((-1,) + (1,) * (a.ndim - 1))
            return cum[i] + a[i] * frac

        out = (integral(edges[1:]) - integral(edges[:-1])) / (n / out_n)
    return np.moveaxis(out, 0, axis)


def resample_grid(a: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Resample a 2-d grid to a new resolution, per-axis."""
    a = np.asarray(a, dtype=np.float64)
    out = _axis_resample(a, out_height, 0)
    out = _axis_resample(out, out_width, 1)
    return out


def resample_field(f: DensityField, out_height: int, out_width: int) -> DensityField:
    out = np.clip(resample_grid(f.values, out_height, out_width), 0.0, 1.0)
    return DensityField(width=out_width, height=out_height, values=out)


# ---------------------------------------------------------------------------
# JSON + PGM serialization.

def save_bytes(data: bytes, path: str | Path) -> None:
    # write-then-rename so a concurrent reader never sees a partial file
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def save_json(obj: Any, path: str | Path) -> None:
    doc = obj.to_doc() if hasattr(obj, "to_doc") else obj
    save_bytes((json.dumps(doc, indent=2) + "\n").encode(), path)


def load_json(path: str | Path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError("document", f"invalid JSON: {e}") from e


def field_to_pgm(f: DensityField | Mask) -> bytes:
    """8-bit binary PGM (P5). Quantizes to 1/255 steps."""
    q = np.round(f.values * 255.0).astype(np.uint8)
    header = f"P5\n{f.width} {f.height}\n255\n".encode("ascii")
    return header + q.tobytes()


def field_from_pgm(data: bytes, path: str = "pgm") -> DensityField:
    vals, w, h = _parse_pgm(data, path)
    return DensityField(width=w, height=h, values=vals)


def _parse_pgm(data: bytes, path: str) -> tuple[np.ndarray, int, int]:
    # Minimal P5 reader: magic, then 3 whitespace-separated ints with optional
    # '#' comment lines, then a single whitespace byte before raster data.
    if not data.startswith(b"P5"):
        raise ParseError(path, "not a binary PGM (missing P5 magic)")
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise ParseError(path, f"bad header token {tok!r}")
        tokens.append(int(tok))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise ParseError(path, f"unsupported maxval {maxval}, expected 255")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise ParseError(path, f"raster truncated: expected {w * h} bytes, got {len(raster)}")
    vals = np.frombuffer(raster, dtype=np.uint8).astype(np.float64).reshape(h, w) / 255.0
    return vals, w, h


def pgm_to_base64(f: DensityField | Mask) -> str:
    return base64.b64encode(field_to_pgm(f)).decode("ascii")


# ---------------------------------------------------------------------------
# Document validation helpers. Every failure names the offending field.

def _expect_mapping(doc: Any, path: str) -> None:
    if not isinstance(doc, dict):
        raise ParseError(path, f"expected an object, got {type(doc).__name__}")


def _expect_key(doc: dict, key: str, path: str) -> Any:
    if key not in doc:
        raise ParseError(f"{path}.{key}", "missing required field")
    return doc[key]


def _expect_int(doc: dict, key: str, path: str, minimum: int | None = None) -> int:
    v = _expect_key(doc, key, path)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{path}.{key}", f"expected an integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        raise ParseError(f"{path}.{key}", f"must be >= {minimum}, got {v}")
    return v


def _expect_num(doc: dict, key: str, path: str) -> float:
    v = _expect_key(doc, key, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _expect_bool(doc: dict, key: str, path: str) -> bool:
    v = _expect_key(doc, key, path)
    if not isinstance(v, bool):
        raise ParseError(f"{path}.{key}", f"expected a boolean, got {type(v).__name__}")
    return v


def _expect_str(doc: dict, key: str, path: str) -> str:
    v = _expect_key(doc, key, path)
    if not isinstance(v, str):
        raise ParseError(f"{path}.{key}", f"expected a string, got {type(v).__name__}")
    return v


def _expect_list(doc: dict, key: str, path: str) -> list:
    v = _expect_key(doc, key, path)
    if not isinstance(v, list):
        raise ParseError(f"{path}.{key}", f"expected a list, got {type(v).__name__}")
    return v


def _expect_number_list(doc: dict, key: str, path: str, length: int | None = None) -> list[float]:
    v = _expect_list(doc, key, path)
    if length is not None and len(v) != length:
        raise ParseError(f"{path}.{key}", f"expected {length} entries, got {len(v)}")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"{path}.{key}[{i}]", f"expected a number, got {type(x).__name__}")
        out.append(float(x))
    return out


def coord_grids(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (X, Y) coordinate grids for pixel centers, align-corners."""
    x = np.linspace(0.0, 1.0, width)
    y = np.linspace(0.0, 1.0, height)
    return np.meshgrid(x, y)
