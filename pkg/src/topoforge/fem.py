"""Plane-stress FEM and penalized-density optimization on a regular quad grid.

One bilinear square element per density pixel. Element (ex, ey) covers pixel
(row ey, col ex); node (ix, iy) has id (nely + 1) * ix + iy, dofs (2*id, 2*id+1)
for (x, y) displacement. y points down, consistent with grid row order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import MatrixRankWarning, cg, spsolve

from .core import DensityField, ProblemSpec, resample_grid

RESIDUAL_RTOL = 1e-8
DENSITY_FLOOR = 1e-3
BISECTION_VTOL = 1e-4


class FemError(RuntimeError):
    pass


def element_stiffness(young: float = 1.0, poisson: float = 0.3) -> np.ndarray:
    """8x8 stiffness of a unit square bilinear element, plane stress.

    Closed form; dof order (ULx, ULy, URx, URy, LRx, LRy, LLx, LLy). Verified
    against Gauss quadrature in the test suite.
    """
    e, nu = young, poisson
    k = np.array(
        [
            1 / 2 - nu / 6,
            1 / 8 + nu / 8,
            -1 / 4 - nu / 12,
            -1 / 8 + 3 * nu / 8,
            -1 / 4 + nu / 12,
            -1 / 8 - nu / 8,
            nu / 6,
            1 / 8 - 3 * nu / 8,
        ]
    )
    idx = np.array(
        [
            [0, 1, 2, 3, 4, 5, 6, 7],
            [1, 0, 7, 6, 5, 4, 3, 2],
            [2, 7, 0, 5, 6, 3, 4, 1],
            [3, 6, 5, 0, 7, 2, 1, 4],
            [4, 5, 6, 7, 0, 1, 2, 3],
            [5, 4, 3, 2, 1, 0, 7, 6],
            [6, 3, 4, 1, 2, 7, 0, 5],
            [7, 2, 1, 4, 3, 6, 5, 0],
        ]
    )
    return e / (1 - nu**2) * k[idx]


@dataclass(frozen=True)
class FemModel:
    """Discretization and material constants for one problem resolution."""

    nelx: int
    nely: int
    young: float = 1.0
    young_min: float = 1e-9
    poisson: float = 0.3
    penal: float = 3.0
    solver: str = "direct"  # "direct" | "cg"

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ValueError("grid must be at least 1x1 elements")
        if self.solver not in ("direct", "cg"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not (0 < self.young_min < self.young):
            raise ValueError("need 0 < young_min < young")

    @classmethod
    def for_spec(cls, spec: ProblemSpec, **kw) -> "FemModel":
        nelx, nely = spec.resolution()
        return cls(nelx=nelx, nely=nely, **kw)

    @property
    def ndof(self) -> int:
        return 2 * (self.nelx + 1) * (self.nely + 1)

    def ke(self) -> np.ndarray:
        return element_stiffness(1.0, self.poisson)

    def node_id(self, ix: int, iy: int) -> int:
        return (self.nely + 1) * ix + iy

    def element_dofs(self) -> np.ndarray:
        """(nely*nelx, 8) dof indices, element order row-major over (ey, ex)."""
        ex, ey = np.meshgrid(np.arange(self.nelx), np.arange(self.nely))
        n1 = (self.nely + 1) * ex + ey  # upper-left node
        n2 = n1 + (self.nely + 1)  # upper-right node
        edof = np.stack(
            [2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1, 2 * n2 + 2, 2 * n2 + 3, 2 * n1 + 2, 2 * n1 + 3],
            axis=-1,
        )
        return edof.reshape(-1, 8)

    def young_of(self, x: np.ndarray) -> np.ndarray:
        """Penalized modulus: E(t) = Emin + t^p (E0 - Emin)."""
        return self.young_min + x**self.penal * (self.young - self.young_min)


def snap_node(coord: float, n_elements: int) -> int:
    """Nearest node index for a normalized coordinate; node k sits at k/n."""
    return int(np.clip(math.floor(coord * n_elements + 0.5), 0, n_elements))


def snapped_supports(spec: ProblemSpec, model: FemModel) -> np.ndarray:
    """Sorted unique fixed dof indices."""
    dofs = set()
    for s in spec.supports:
        n = model.node_id(snap_node(s.x, model.nelx), snap_node(s.y, model.nely))
        if s.fix_x:
            dofs.add(2 * n)
        if s.fix_y:
            dofs.add(2 * n + 1)
    return np.array(sorted(dofs), dtype=int)


def _check_rigid_modes(fixed: np.ndarray, model: FemModel) -> None:
    """The fixed dofs must pin all three in-plane rigid modes (tx, ty, rot).

    Restricting the rigid-mode basis to the fixed dofs and checking its rank
    is exact for a connected mesh, and catches consistent singular systems
    that a residual test would miss (load orthogonal to the free mode).
    """
    if fixed.size == 0:
        raise FemError("no supports: all rigid-body modes are free")
    rows = []
    for dof in fixed:
        node, axis = divmod(int(dof), 2)
        ix, iy = divmod(node, model.nely + 1)
        if axis == 0:
            rows.append([1.0, 0.0, -float(iy)])
        else:
            rows.append([0.0, 1.0, float(ix)])
    if np.linalg.matrix_rank(np.array(rows)) < 3:
        raise FemError("supports do not remove all rigid-body modes")


def load_vector(spec: ProblemSpec, model: FemModel) -> np.ndarray:
    f = np.zeros(model.ndof)
    for l in spec.loads:
        n = model.node_id(snap_node(l.x, model.nelx), snap_node(l.y, model.nely))
        f[2 * n] += l.fx
        f[2 * n + 1] += l.fy
    return f


@dataclass(frozen=True)
class SolveResult:
    displacements: np.ndarray  # (ndof,)
    compliance: float
    element_energy: np.ndarray  # (nely, nelx), E(t) * u_e^T KE u_e

    def unit_energy(self, model: FemModel, x: np.ndarray) -> np.ndarray:
        """u_e^T KE u_e with unit modulus, recovered for sensitivity use."""
        return self.element_energy / model.young_of(x)


def _grid_for(field: DensityField, model: FemModel) -> np.ndarray:
    x = field.values
    if x.shape != (model.nely, model.nelx):
        x = np.clip(resample_grid(x, model.nely, model.nelx), 0.0, 1.0)
    return x


def solve(field: DensityField, spec: ProblemSpec, model: FemModel | None = None) -> SolveResult:
    """Assemble and solve K u = f; returns displacements and compliance.

    The density grid is resampled to the model resolution if it differs.
    Raises FemError when the constrained system is singular (rigid-body modes
    survive the supports) or the residual check fails.
    """
    if model is None:
        model = FemModel.for_spec(spec)
    x = _grid_for(field, model)
    return solve_grid(x, spec, model)


def solve_grid(x: np.ndarray, spec: ProblemSpec, model: FemModel) -> SolveResult:
    ke = model.ke()
    edof = model.element_dofs()
    e_all = model.young_of(x).ravel()

    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    vals = (e_all[:, None] * ke.ravel()[None, :]).ravel()
    k_full = coo_matrix((vals, (rows, cols)), shape=(model.ndof, model.ndof)).tocsc()

    f = load_vector(spec, model)
    fixed = snapped_supports(spec, model)
    _check_rigid_modes(fixed, model)
    free = np.setdiff1d(np.arange(model.ndof), fixed, assume_unique=True)
    if free.size == 0:
        raise FemError("no free degrees of freedom")

    u = np.zeros(model.ndof)
    if np.all(f == 0.0):
        # No net load after snapping: equilibrium is the zero field.
        return SolveResult(u, 0.0, np.zeros_like(x))

    kff = k_full[free][:, free]
    ff = f[free]
    if model.solver == "direct":
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                uf = spsolve(kff, ff)
            except MatrixRankWarning as e:
                raise FemError(
                    "singular stiffness matrix: supports do not remove all rigid-body modes"
                ) from e
    else:
        precond = diags(1.0 / kff.diagonal())
        uf, info = cg(kff, ff, rtol=1e-10, atol=0.0, M=precond, maxiter=20000)
        if info != 0:
            raise FemError(f"cg failed to converge (info={info})")

    if not np.all(np.isfinite(uf)):
        raise FemError("solver returned non-finite displacements; system is singular")
    resid = np.linalg.norm(kff @ uf - ff) / np.linalg.norm(ff)
    if resid > RESIDUAL_RTOL:
        raise FemError(f"solve residual {resid:.3e} exceeds {RESIDUAL_RTOL:.0e}")

    u[free] = uf
    ue = u[edof]  # (n_el, 8)
    unit = np.einsum("ei,ij,ej->e", ue, ke, ue)
    energy = (e_all * unit).reshape(x.shape)
    compliance = float(f @ u)
    return SolveResult(u, compliance, energy)


# ---------------------------------------------------------------------------
# Filters. Cone kernel: weight max(0, r - dist) over the integer offsets within
# floor(r); normalization uses the in-domain (truncated) weight sum per pixel.

def _cone_kernel(radius: float) -> np.ndarray:
    if radius <= 0:
        raise ValueError("filter radius must be positive")
    b = int(math.floor(radius))
    off = np.arange(-b, b + 1)
    dy, dx = np.meshgrid(off, off, indexing="ij")
    return np.maximum(0.0, radius - np.hypot(dx, dy))


def density_filter(values: np.ndarray, radius: float) -> np.ndarray:
    """Cone-weighted local average, weights renormalized at the boundary."""
    kern = _cone_kernel(radius)
    num = signal.convolve2d(values, kern, mode="same", boundary="fill")
    den = signal.convolve2d(np.ones_like(values), kern, mode="same", boundary="fill")
    return num / den


def filter_sensitivities(x: np.ndarray, dc: np.ndarray, radius: float) -> np.ndarray:
    """Sensitivity smoothing: dcn_e = sum_i w_i x_i dc_i / (x_e sum_i w_i)."""
    kern = _cone_kernel(radius)
    num = signal.convolve2d(x * dc, kern, mode="same", boundary="fill")
    den = signal.convolve2d(np.ones_like(x), kern, mode="same", boundary="fill")
    return num / (den * np.maximum(x, DENSITY_FLOOR))


def oc_step(
    x: np.ndarray,
    dc: np.ndarray,
    vf_target: float,
    move: float = 0.2,
    floor: float = DENSITY_FLOOR,
) -> tuple[np.ndarray, float]:
    """One optimality-criteria update with bisected volume multiplier.

    dc must be the (filtered) compliance sensitivity, nonpositive. Returns the
    updated densities and the converged multiplier. Bisection runs until the
    updated mean volume is within BISECTION_VTOL of the target.
    """
    if np.any(dc > 1e-12):
        raise FemError("compliance sensitivities must be nonpositive")
    dc = np.minimum(dc, 0.0)

    def updated(lmid: float) -> np.ndarray:
        b = np.sqrt(np.maximum(-dc, 0.0) / lmid)
        xb = x * b
        return np.clip(xb, np.maximum(x - move, floor), np.minimum(x + move, 1.0))

    lo, hi = 1e-30, 1e30
    # Volume is monotone decreasing in the multiplier; check the bracket.
    if updated(lo).mean() < vf_target or updated(hi).mean() > vf_target:
        raise FemError(
            f"volume multiplier not bracketed in [{lo:g}, {hi:g}]: "
            f"target {vf_target}, range "
            f"[{updated(hi).mean():.4f}, {updated(lo).mean():.4f}]"
        )
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        xn = updated(mid)
        vol = xn.mean()
        if abs(vol - vf_target) <= BISECTION_VTOL:
            return xn, mid
        if vol > vf_target:
            lo = mid
        else:
            hi = mid
    raise FemError("volume bisection did not converge in 200 iterations")


@dataclass(frozen=True)
class IterationStat:
    iteration: int
    compliance: float
    volume: float
    change: float

    def line(self) -> str:
        return (
            f"iter={self.iteration} compliance={self.compliance:.6e} "
            f"volume={self.volume:.4f} change={self.change:.4f}"
        )


@dataclass(frozen=True)
class OptimizeResult:
    field: DensityField
    history: tuple[IterationStat, ...]


def _oc_loop(
    x: np.ndarray,
    spec: ProblemSpec,
    model: FemModel,
    iterations: int,
    move: float,
    filter_radius: float,
    on_iter: Callable[[IterationStat], None] | None,
) -> OptimizeResult:
    history = []
    for it in range(1, iterations + 1):
        sol = solve_grid(x, spec, model)
        unit = sol.unit_energy(model, x)
        dc = -model.penal * x ** (model.penal - 1) * (model.young - model.young_min) * unit
        dc = filter_sensitivities(x, dc, filter_radius)
        xnew, _ = oc_step(x, dc, spec.volume_fraction, move=move)
        change = float(np.abs(xnew - x).max())
        x = xnew
        stat = IterationStat(it, sol.compliance, float(x.mean()), change)
        history.append(stat)
        if on_iter is not None:
            on_iter(stat)
    f = DensityField(width=model.nelx, height=model.nely, values=np.clip(x, 0.0, 1.0))
    return OptimizeResult(f, tuple(history))


def optimize(
    spec: ProblemSpec,
    iterations: int,
    model: FemModel | None = None,
    move: float = 0.2,
    filter_radius: float = 1.5,
    on_iter: Callable[[IterationStat], None] | None = None,
) -> OptimizeResult:
    """Run the density optimization from a uniform start at the target volume."""
    if model is None:
        model = FemModel.for_spec(spec)
    x = np.full((model.nely, model.nelx), spec.volume_fraction)
    return _oc_loop(x, spec, model, iterations, move, filter_radius, on_iter)


def refine(
    start: DensityField,
    spec: ProblemSpec,
    steps: int,
    model: FemModel | None = None,
    move: float = 0.2,
    filter_radius: float = 1.5,
    on_iter: Callable[[IterationStat], None] | None = None,
) -> OptimizeResult:
    """Continue the optimization loop from an existing design. steps=0 is a no-op."""
    if steps == 0:
        return OptimizeResult(start, ())
    if model is None:
        model = FemModel.for_spec(spec)
    x = _grid_for(start, model)
    return _oc_loop(x, spec, model, steps, move, filter_radius, on_iter)
