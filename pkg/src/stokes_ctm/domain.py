"""Geometry of the centered square, the boundary collar and discrete norms.

Velocity fields live on a MAC grid and are stored as one flat vector
``[u.ravel(), v.ravel()]`` holding interior face values only:

* ``u`` has shape ``(ny, nx - 1)``, sitting on vertical faces ``x_i``
  (``i = 1..nx-1``) at cell-center heights;
* ``v`` has shape ``(ny - 1, nx)``, sitting on horizontal faces ``y_j``
  (``j = 1..ny-1``) at cell-center abscissae.

Wall faces carry the homogeneous Dirichlet value and are not stored.
Scalars (pressure, masks) live at cell centers with shape ``(ny, nx)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError


@dataclass(frozen=True)
class DomainSpec:
    half_width: float
    collar_width: float
    nx: int
    ny: int

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.half_width / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return (2.0 * self.half_width) ** 2

    @property
    def n_u(self) -> int:
        return self.ny * (self.nx - 1)

    @property
    def n_v(self) -> int:
        return (self.ny - 1) * self.nx

    @property
    def n_faces(self) -> int:
        return self.n_u + self.n_v

    @property
    def gamma(self) -> float:
        """Lower bound of x·nu on the boundary (attained at edge midpoints)."""
        return self.half_width

    @property
    def R0(self) -> float:
        """max |x| over the closed square."""
        return math.sqrt(2.0) * self.half_width

    @cached_property
    def R0_grid(self) -> float:
        xc, yc = self.cell_centers
        return float(np.sqrt(xc**2 + yc**2).max())

    @property
    def omega_area_fraction(self) -> float:
        """Continuum |omega| / |Omega| for the collar."""
        return 1.0 - (1.0 - self.collar_width / self.half_width) ** 2

    # -- coordinates -------------------------------------------------------
    @cached_property
    def x_centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.nx) + 0.5) * self.dx

    @cached_property
    def y_centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.ny) + 0.5) * self.dy

    @cached_property
    def x_faces(self) -> np.ndarray:
        return -self.half_width + np.arange(1, self.nx) * self.dx

    @cached_property
    def y_faces(self) -> np.ndarray:
        return -self.half_width + np.arange(1, self.ny) * self.dy

    @cached_property
    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x_centers, self.y_centers))

    @cached_property
    def u_points(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x_faces, self.y_centers))

    @cached_property
    def v_points(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x_centers, self.y_faces))

    @cached_property
    def face_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat coordinates of every stored face value, in field order."""
        ux, uy = self.u_points
        vx, vy = self.v_points
        return np.concatenate([ux.ravel(), vx.ravel()]), np.concatenate([uy.ravel(), vy.ravel()])

    # -- layout ------------------------------------------------------------
    def split(self, field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        field = np.asarray(field)
        if field.shape[0] != self.n_faces:
            raise GridError(f"field has {field.shape[0]} entries, grid expects {self.n_faces}")
        rest = field.shape[1:]
        u = field[: self.n_u].reshape((self.ny, self.nx - 1) + rest)
        v = field[self.n_u :].reshape((self.ny - 1, self.nx) + rest)
        return u, v

    def join(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.concatenate([np.reshape(u, (self.n_u,) + u.shape[2:]),
                               np.reshape(v, (self.n_v,) + v.shape[2:])])

    def wall_distance(self, x, y):
        return self.half_width - np.maximum(np.abs(x), np.abs(y))

    # -- control region ----------------------------------------------------
    @cached_property
    def mask(self) -> "ControlMask":
        return control_mask(self)


@dataclass(frozen=True)
class ControlMask:
    """Indicator of omega sampled on cells and on velocity faces."""

    cells: np.ndarray
    faces: np.ndarray
    smoothing: float = 0.0

    def apply(self, field: np.ndarray) -> np.ndarray:
        field = np.asarray(field)
        w = self.faces.reshape((-1,) + (1,) * (field.ndim - 1))
        return w * field


def _collar_weight(dist, collar, smoothing):
    if smoothing <= 0.0:
        return (dist <= collar + 1e-12).astype(float)
    # C1 smoothstep from 1 (dist <= collar - smoothing) to 0 (dist >= collar)
    s = np.clip((collar - dist) / smoothing, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def control_mask(domain: DomainSpec, smoothing: float = 0.0) -> ControlMask:
    xc, yc = domain.cell_centers
    fx, fy = domain.face_points
    cells = _collar_weight(domain.wall_distance(xc, yc), domain.collar_width, smoothing)
    faces = _collar_weight(domain.wall_distance(fx, fy), domain.collar_width, smoothing)
    return ControlMask(cells=cells, faces=faces, smoothing=smoothing)


def full_mask(domain: DomainSpec) -> ControlMask:
    """Observation on the whole square."""
    return ControlMask(cells=np.ones((domain.ny, domain.nx)), faces=np.ones(domain.n_faces))


def build_domain(half_width: float = 0.5, collar_width: float = 0.15,
                 nx: int = 32, ny: int | None = None) -> DomainSpec:
    ny = nx if ny is None else ny
    if nx < 8 or ny < 8:
        raise GridError("need at least 8 cells per direction")
    if not 0.0 < collar_width < half_width:
        raise GridError("collar width must lie in (0, half_width)")
    dom = DomainSpec(float(half_width), float(collar_width), int(nx), int(ny))
    if collar_width < 2.0 * max(dom.dx, dom.dy):
        raise GridError(f"collar {collar_width} is thinner than two cells at this resolution")
    return dom


# -- norms -----------------------------------------------------------------
def _edge_energy(a: np.ndarray, axis: int, h: float, kind: str) -> float:
    """Sum of squared difference quotients along one axis.

    ``kind='face'``: the wall nodes are omitted grid points at distance ``h``.
    ``kind='cell'``: the wall sits half a cell away; its term gets half weight.
    """
    a = np.moveaxis(a, axis, 0)
    if kind == "face":
        pad = np.zeros((1,) + a.shape[1:])
        d = np.diff(np.concatenate([pad, a, pad]), axis=0) / h
        return float(np.sum(d**2))
    d = np.diff(a, axis=0) / h
    wall = (a[0] ** 2 + a[-1] ** 2) * 2.0 / h**2
    return float(np.sum(d**2) + np.sum(wall))


def h_norm(domain: DomainSpec, field: np.ndarray) -> float:
    field = np.asarray(field, dtype=float)
    if field.shape not in ((domain.n_faces,), (domain.ny, domain.nx)):
        raise GridError(f"shape {field.shape} does not live on this grid")
    return math.sqrt(float(np.sum(field**2)) * domain.cell_area)


def v_norm(domain: DomainSpec, field: np.ndarray) -> float:
    """Discrete Dirichlet seminorm of the gradient.

    For velocity fields this equals ``sqrt(-(L u, u)_H)`` with ``L`` the MAC
    Laplacian of :mod:`stokes_ctm.stokesop`.
    """
    field = np.asarray(field, dtype=float)
    if field.shape == (domain.ny, domain.nx):
        e = _edge_energy(field, 1, domain.dx, "cell") + _edge_energy(field, 0, domain.dy, "cell")
    elif field.shape == (domain.n_faces,):
        u, v = domain.split(field)
        e = (_edge_energy(u, 1, domain.dx, "face") + _edge_energy(u, 0, domain.dy, "cell")
             + _edge_energy(v, 1, domain.dx, "cell") + _edge_energy(v, 0, domain.dy, "face"))
    else:
        raise GridError(f"shape {field.shape} does not live on this grid")
    return math.sqrt(e * domain.cell_area)


def inner_h(domain: DomainSpec, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(np.ravel(a), np.ravel(b))) * domain.cell_area
