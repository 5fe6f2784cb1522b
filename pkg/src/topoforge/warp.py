"""Gaussian drag warps: smooth displacement fields, grid warping by inverse
mapping, and forward point tracking.

A handle at h with offset delta and radius sigma contributes
u(x) = delta * exp(-|x - h|^2 / (2 sigma^2)). The warp stays invertible while
sup |grad u| < 1; for one handle that is exactly |delta| < sigma * sqrt(e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DensityField,
    LoadPoint,
    ParseError,
    ProblemSpec,
    SupportPoint,
    _expect_list,
    _expect_mapping,
    _expect_num,
    coord_grids,
)

PROBE_RESOLUTION = 128
POINT_RELAXATION = 0.8
POINT_TOL = 1e-8
POINT_MAX_ITER = 200


class WarpError(RuntimeError):
    pass


@dataclass(frozen=True)
class Handle:
    x: float
    y: float
    dx: float
    dy: float
    sigma: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError("handle anchor must lie in [0, 1]^2")
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError("sigma must be positive")
        mag = math.hypot(self.dx, self.dy)
        limit = self.sigma * math.sqrt(math.e)
        if mag >= limit:
            raise ValueError(
                f"offset magnitude {mag:.9g} reaches the invertibility bound "
                f"sigma*sqrt(e) = {limit:.9g}; shorten the drag or widen sigma"
            )

    def to_doc(self) -> dict:
        return {"x": self.x, "y": self.y, "dx": self.dx, "dy": self.dy, "sigma": self.sigma}

    @classmethod
    def from_doc(cls, doc, path: str = "handle") -> "Handle":
        _expect_mapping(doc, path)
        vals = {k: _expect_num(doc, k, path) for k in ("x", "y", "dx", "dy", "sigma")}
        try:
            return cls(**vals)
        except ValueError as e:
            raise ParseError(path, str(e)) from e


@dataclass(frozen=True)
class WarpSpec:
    handles: tuple[Handle, ...]

    def __post_init__(self):
        object.__setattr__(self, "handles", tuple(self.handles))
        if not self.handles:
            raise ValueError("warp needs at least one handle")
        if len(self.handles) > 1:
            peak = _probe_gradient_peak(self)
            if peak >= 1.0:
                raise ValueError(
                    f"combined handles break invertibility: max |grad u| = {peak:.4f} >= 1"
                )

    @classmethod
    def single(cls, x: float, y: float, dx: float, dy: float, sigma: float) -> "WarpSpec":
        return cls(handles=(Handle(x, y, dx, dy, sigma),))

    def to_doc(self) -> dict:
        return {"handles": [h.to_doc() for h in self.handles]}

    @classmethod
    def from_doc(cls, doc, path: str = "warp") -> "WarpSpec":
        _expect_mapping(doc, path)
        handles = _expect_list(doc, "handles", path)
        parsed = tuple(
            Handle.from_doc(h, f"{path}.handles[{i}]") for i, h in enumerate(handles)
        )
        try:
            return cls(handles=parsed)
        except ValueError as e:
            raise ParseError(f"{path}.handles", str(e)) from e


def displacement(spec: WarpSpec, pts: np.ndarray) -> np.ndarray:
    """Summed handle displacements at pts (..., 2) in normalized coords."""
    pts = np.asarray(pts, dtype=np.float64)
    out = np.zeros_like(pts)
    for h in spec.handles:
        d2 = (pts[..., 0] - h.x) ** 2 + (pts[..., 1] - h.y) ** 2
        w = np.exp(-d2 / (2.0 * h.sigma**2))
        out[..., 0] += h.dx * w
        out[..., 1] += h.dy * w
    return out


def _probe_gradient_peak(spec: WarpSpec) -> float:
    """Numeric sup of the displacement Jacobian spectral norm on a dense grid.
    Exact per-handle bounds do not compose, so multi-handle specs are probed."""
    n = PROBE_RESOLUTION
    xs = np.linspace(0.0, 1.0, n)
    gx, gy = np.meshgrid(xs, xs)
    pts = np.stack([gx, gy], axis=-1)
    u = displacement(spec, pts)
    h = xs[1] - xs[0]
    dux_dy, dux_dx = np.gradient(u[..., 0], h, h)
    duy_dy, duy_dx = np.gradient(u[..., 1], h, h)
    q = dux_dx**2 + dux_dy**2 + duy_dx**2 + duy_dy**2
    det = dux_dx * duy_dy - dux_dy * duy_dx
    lam = 0.5 * (q + np.sqrt(np.maximum(0.0, q**2 - 4.0 * det**2)))
    return float(np.sqrt(lam.max()))


def _bilinear(grid: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample grid at fractional (row, col) with border clamp."""
    h, w = grid.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    top = grid[r0, c0] * (1 - fc) + grid[r0, c1] * fc
    bot = grid[r1, c0] * (1 - fc) + grid[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def warp_grid(grid: np.ndarray, spec: WarpSpec) -> np.ndarray:
    """Warp a grid by inverse mapping: out(p) = in(p - u(p)).

    The zero warp reproduces the input bit for bit (integer source coords,
    no interpolation error).
    """
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    gx, gy = coord_grids(h, w)
    pts = np.stack([gx, gy], axis=-1)
    u = displacement(spec, pts)
    cols = np.arange(w)[None, :] - u[..., 0] * (w - 1)
    rows = np.arange(h)[:, None] - u[..., 1] * (h - 1)
    return _bilinear(grid, rows, cols)


def warp_point(
    p: tuple[float, float],
    spec: WarpSpec,
    relaxation: float = POINT_RELAXATION,
    tol: float = POINT_TOL,
    max_iter: int = POINT_MAX_ITER,
) -> tuple[float, float]:
    """Forward image of a point: the fixed point p* = p + u(p*).

    Solved by relaxed iteration; raises WarpError if the residual
    |p_k - u(p_k) - p| does not reach tol.
    """
    src = np.asarray(p, dtype=np.float64)
    cur = src.copy()
    for _ in range(max_iter):
        u = displacement(spec, cur)
        resid = float(np.hypot(*(cur - u - src)))
        if resid <= tol:
            return (float(cur[0]), float(cur[1]))
        cur = (1.0 - relaxation) * cur + relaxation * (src + u)
    raise WarpError(
        f"point warp did not converge in {max_iter} iterations (residual {resid:.3e})"
    )


def warp_problem(problem: ProblemSpec, spec: WarpSpec) -> ProblemSpec:
    """Carry boundary conditions along with the warp.

    Support and load anchor points move to their forward images, clamped into
    the domain (a boundary point can be pushed slightly outside); magnitudes,
    fix flags, and scalar targets are unchanged.
    """

    def moved(x: float, y: float) -> tuple[float, float]:
        wx, wy = warp_point((x, y), spec)
        return (min(max(wx, 0.0), 1.0), min(max(wy, 0.0), 1.0))

    supports = []
    for s in problem.supports:
        x, y = moved(s.x, s.y)
        supports.append(SupportPoint(x=x, y=y, fix_x=s.fix_x, fix_y=s.fix_y))
    loads = []
    for l in problem.loads:
        x, y = moved(l.x, l.y)
        loads.append(LoadPoint(x=x, y=y, fx=l.fx, fy=l.fy))
    return ProblemSpec(
        supports=tuple(supports),
        loads=tuple(loads),
        volume_fraction=problem.volume_fraction,
        aspect=problem.aspect,
        cell_size=problem.cell_size,
    )


def achieved_handle(spec: WarpSpec) -> tuple[tuple[float, float], ...]:
    """Where each handle anchor actually lands under the composed warp."""
    return tuple(warp_point((h.x, h.y), spec) for h in spec.handles)


def warp_field(field: DensityField, spec: WarpSpec) -> DensityField:
    """Direct warp of a density grid (no latent machinery)."""
    out = np.clip(warp_grid(field.values, spec), 0.0, 1.0)
    return DensityField(field.width, field.height, out)
