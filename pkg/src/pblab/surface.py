"""Discretized closed surfaces with an area form, and the calculus on them.

Two chart types are supported:

* ``torus`` — periods (Lx, Ly), chart coordinates (x, y) both periodic,
  area form dx ∧ dy (density 1);
* ``sphere_cylindrical`` — the equal-area cylindrical chart (z, θ) with
  z ∈ [-R, R], θ ∈ [0, 2π), area form R dz ∧ dθ (density R).  Nodes are
  cell-centred in z so no node sits on a pole; the two pole-adjacent rows
  are special (fields must be constant there, see ``poisson_bracket``).

Nodes are uniform, node (i, j) owns one cell of identical area, so
integration is a plain weighted sum.  The Poisson bracket is computed with
central second-order differences in chart coordinates divided by the
area-form density; it is antisymmetric bit-for-bit by construction.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, InvalidGrid, PoleSingularity

_FMT_VERSION = 1


@dataclass(frozen=True)
class SurfaceGrid:
    """Uniform node grid on a closed surface with per-cell area weights."""

    topology: str        # "torus" | "sphere_cylindrical"
    nx: int              # nodes along x (torus) / z (sphere)
    ny: int              # nodes along y (torus) / theta (sphere)
    extent_x: float      # Lx, resp. 2R (chart length of axis 0)
    extent_y: float      # Ly, resp. 2*pi
    hx: float
    hy: float
    density: float       # area-form density in chart coordinates
    cell_area: float
    total_area: float
    wrap_x: bool
    wrap_y: bool
    radius: float = 0.0  # sphere only

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def pole_rows(self) -> tuple[int, ...]:
        return (0, self.nx - 1) if self.topology == "sphere_cylindrical" else ()

    def node_x(self) -> np.ndarray:
        if self.topology == "torus":
            return np.arange(self.nx) * self.hx
        return -self.radius + (np.arange(self.nx) + 0.5) * self.hx

    def node_y(self) -> np.ndarray:
        return np.arange(self.ny) * self.hy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Chart coordinates of every node as two (nx, ny) arrays."""
        return np.meshgrid(self.node_x(), self.node_y(), indexing="ij")

    def descriptor(self) -> dict:
        d = {"topology": self.topology, "nx": self.nx, "ny": self.ny}
        if self.topology == "torus":
            d["Lx"] = self.extent_x
            d["Ly"] = self.extent_y
        else:
            d["R"] = self.radius
        return d


@dataclass
class ScalarField:
    """Node values of a smooth-function surrogate on a SurfaceGrid."""

    grid: SurfaceGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise InvalidGrid(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidGrid("field contains non-finite values")


def make_torus(nx: int, ny: int, Lx: float, Ly: float) -> SurfaceGrid:
    """Flat torus with periods (Lx, Ly) and nx*ny nodes."""
    if nx < 8 or ny < 8:
        raise InvalidGrid(f"torus needs nx, ny >= 8, got ({nx}, {ny})")
    if Lx <= 0 or Ly <= 0:
        raise InvalidGrid(f"torus needs positive periods, got ({Lx}, {Ly})")
    hx, hy = Lx / nx, Ly / ny
    return SurfaceGrid(
        topology="torus", nx=int(nx), ny=int(ny),
        extent_x=float(Lx), extent_y=float(Ly), hx=hx, hy=hy,
        density=1.0, cell_area=hx * hy, total_area=float(Lx) * float(Ly),
        wrap_x=True, wrap_y=True,
    )


def make_sphere(nz: int, ntheta: int, R: float) -> SurfaceGrid:
    """Round sphere of radius R in the equal-area cylindrical chart."""
    if nz < 8 or ntheta < 8:
        raise InvalidGrid(f"sphere needs nz, ntheta >= 8, got ({nz}, {ntheta})")
    if R <= 0:
        raise InvalidGrid(f"sphere needs positive radius, got {R}")
    hz = 2.0 * R / nz
    ht = 2.0 * math.pi / ntheta
    return SurfaceGrid(
        topology="sphere_cylindrical", nx=int(nz), ny=int(ntheta),
        extent_x=2.0 * R, extent_y=2.0 * math.pi, hx=hz, hy=ht,
        density=R, cell_area=R * hz * ht, total_area=4.0 * math.pi * R * R,
        wrap_x=False, wrap_y=True, radius=float(R),
    )


def field_from_function(grid: SurfaceGrid, fn) -> ScalarField:
    """Sample a closed-form expression fn(x, y) at the nodes."""
    X, Y = grid.coords()
    return ScalarField(grid, np.asarray(fn(X, Y), dtype=np.float64))


def constant_field(grid: SurfaceGrid, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def _require_same_grid(f: ScalarField, g: ScalarField):
    if f.grid != g.grid:
        raise GridMismatch("fields live on different grids")


def check_pole_regular(f: ScalarField, tol: float = 1e-12):
    """On the sphere chart, fields must be constant on pole-adjacent rows."""
    for row in f.grid.pole_rows:
        r = f.values[row]
        scale = 1.0 + float(np.max(np.abs(r)))
        if float(np.max(r) - np.min(r)) > tol * scale:
            raise PoleSingularity(f"field varies on pole-adjacent row {row}")


def chart_derivatives(values: np.ndarray, grid: SurfaceGrid):
    """Central-difference chart derivatives (f_x, f_y) of a value array.

    On the non-periodic sphere axis the two boundary rows get one-sided
    differences; for pole-regular fields the bracket vanishes there anyway
    because the theta derivative is exactly zero.
    """
    inv2hx = 0.5 / grid.hx
    inv2hy = 0.5 / grid.hy
    if grid.wrap_x:
        fx = (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) * inv2hx
    else:
        fx = np.empty_like(values)
        fx[1:-1] = (values[2:] - values[:-2]) * inv2hx
        fx[0] = (values[1] - values[0]) / grid.hx
        fx[-1] = (values[-1] - values[-2]) / grid.hx
    fy = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) * inv2hy
    return fx, fy


def poisson_bracket(f: ScalarField, g: ScalarField) -> ScalarField:
    """{f, g} = (f_x g_y - f_y g_x) / density, antisymmetric bit-for-bit."""
    _require_same_grid(f, g)
    if f.grid.topology == "sphere_cylindrical":
        check_pole_regular(f)
        check_pole_regular(g)
    fx, fy = chart_derivatives(f.values, f.grid)
    gx, gy = chart_derivatives(g.values, g.grid)
    vals = (fx * gy - fy * gx) * (1.0 / f.grid.density)
    return ScalarField(f.grid, vals)


def integrate(f: ScalarField) -> float:
    """Integral against the area form: sum of value * cell_area."""
    return float(np.sum(f.values) * f.grid.cell_area)


def sup_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def l1_norm(f: ScalarField) -> float:
    return float(np.sum(np.abs(f.values)) * f.grid.cell_area)


# ---------------------------------------------------------------------------
# serialization: flat binary or CSV, node-major (index = i*ny + j),
# with the grid descriptor embedded as a JSON header
# ---------------------------------------------------------------------------


def grid_from_descriptor(d: dict) -> SurfaceGrid:
    if d["topology"] == "torus":
        return make_torus(d["nx"], d["ny"], d["Lx"], d["Ly"])
    if d["topology"] == "sphere_cylindrical":
        return make_sphere(d["nx"], d["ny"], d["R"])
    raise InvalidGrid(f"unknown topology {d['topology']!r}")


def save_field(f: ScalarField, path: str):
    """Write a field; '.csv' suffix selects CSV, anything else flat binary."""
    header = {
        "format": "pblab-field",
        "version": _FMT_VERSION,
        "grid": f.grid.descriptor(),
        "shape": list(f.grid.shape),
        "order": "node-major, row index i (axis x/z) outer, column j (axis y/theta) inner",
    }
    if str(path).endswith(".csv"):
        buf = io.StringIO()
        np.savetxt(buf, f.values, delimiter=",", fmt="%.17g")
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write(buf.getvalue())
    else:
        header["dtype"] = "<f8"
        with open(path, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
            fh.write(np.ascontiguousarray(f.values, "<f8").tobytes())


def load_field(path: str) -> ScalarField:
    if str(path).endswith(".csv"):
        with open(path) as fh:
            header = json.loads(fh.readline().lstrip("# "))
            vals = np.loadtxt(fh, delimiter=",")
    else:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            vals = np.frombuffer(fh.read(), dtype="<f8")
    if header.get("format") != "pblab-field":
        raise InvalidGrid(f"{path} is not a pblab field file")
    grid = grid_from_descriptor(header["grid"])
    return ScalarField(grid, vals.reshape(grid.shape))
