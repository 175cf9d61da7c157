"""MAC discretization of the Stokes operator A = P(Laplacian) and its modes.

The velocity Laplacian uses the five-point stencil with a linear ghost
closure for tangential components (wall half a cell away), so ``-L`` is
symmetric positive definite in the uniformly weighted H inner product.
Divergence and gradient are exact negative transposes of each other, which
makes the Leray projector a true orthogonal projector.

Divergence-free fields with zero normal flux are exactly the discrete curls
of node stream functions vanishing on the wall.  The Stokes eigenproblem is
solved in that basis as the generalized symmetric problem
``C^T (-L) C z = lam C^T C z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import DomainSpec, ControlMask
from .errors import GridError, ConvergenceError


def _lap1d_face(n: int, h: float) -> sp.csr_matrix:
    """n-1 interior nodes, Dirichlet nodes at both ends."""
    m = n - 1
    return sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h**2


def _lap1d_cell(n: int, h: float) -> sp.csr_matrix:
    """n cell values, wall half a cell outside each end (ghost = -value)."""
    d = -2.0 * np.ones(n)
    d[0] = d[-1] = -3.0
    return sp.diags([np.ones(n - 1), d, np.ones(n - 1)], [-1, 0, 1]) / h**2


def _diff1d(n: int) -> sp.csr_matrix:
    """(n, n-1): cell value = right face minus left face, walls zero."""
    return sp.diags([np.ones(n - 1), -np.ones(n - 1)], [0, -1], shape=(n, n - 1))


class MacOperators:
    """Sparse operators of one grid; build through :func:`operators`."""

    def __init__(self, domain: DomainSpec):
        nx, ny, dx, dy = domain.nx, domain.ny, domain.dx, domain.dy
        self.domain = domain
        Ix, Iy = sp.identity(nx), sp.identity(ny)
        Ixf, Iyf = sp.identity(nx - 1), sp.identity(ny - 1)
        lap_u = sp.kron(_lap1d_cell(ny, dy), Ixf) + sp.kron(Iy, _lap1d_face(nx, dx))
        lap_v = sp.kron(_lap1d_face(ny, dy), Ix) + sp.kron(Iyf, _lap1d_cell(nx, dx))
        self.lap = sp.block_diag([lap_u, lap_v]).tocsr()
        Dx1, Dy1 = _diff1d(nx), _diff1d(ny)
        self.div = sp.hstack([sp.kron(Iy, Dx1) / dx, sp.kron(Dy1, Ix) / dy]).tocsr()
        self.grad = (-self.div.T).tocsr()
        self.curl = sp.vstack([sp.kron(Dy1, Ixf) / dy, -sp.kron(Iyf, Dx1) / dx]).tocsr()
        n_cells = nx * ny
        poisson = (self.div @ self.grad).tocsc()
        # pin cell 0; compatible right-hand sides make the dropped row redundant
        self._poisson = spla.splu(poisson[1:, 1:].tocsc())
        self.n_cells = n_cells
        self._stream = None

    def solve_pressure(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean p with div grad p = rhs (rhs must sum to zero)."""
        p = np.zeros(self.n_cells)
        p[1:] = self._poisson.solve(np.asarray(rhs, dtype=float)[1:])
        resid = self.div @ (self.grad @ p) - rhs
        scale = max(np.abs(rhs).max(), 1.0)
        if not np.all(np.isfinite(p)) or np.abs(resid).max() > 1e-8 * scale:
            raise ConvergenceError("pressure Poisson solve failed", float(np.abs(resid).max()))
        return p - p.mean()

    @property
    def stream_matrices(self):
        """(K, M) with K = C^T(-L)C and M = C^T C on interior nodes."""
        if self._stream is None:
            C = self.curl
            self._stream = ((C.T @ (-self.lap) @ C).tocsc(), (C.T @ C).tocsc())
        return self._stream


@lru_cache(maxsize=16)
def operators(domain: DomainSpec) -> MacOperators:
    return MacOperators(domain)


def divergence(domain: DomainSpec, u: np.ndarray) -> np.ndarray:
    return operators(domain).div @ u


def laplacian(domain: DomainSpec, u: np.ndarray) -> np.ndarray:
    return operators(domain).lap @ u


def gradient(domain: DomainSpec, p: np.ndarray) -> np.ndarray:
    return operators(domain).grad @ np.ravel(p)


def pressure_from_gradient_part(domain: DomainSpec, raw: np.ndarray) -> np.ndarray:
    """Zero-mean p such that raw - grad p is divergence-free."""
    ops = operators(domain)
    return ops.solve_pressure(ops.div @ raw)


def leray_project(domain: DomainSpec, raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.shape[0] != domain.n_faces:
        raise GridError("field does not match grid")
    ops = operators(domain)
    if raw.ndim == 1:
        return raw - ops.grad @ ops.solve_pressure(ops.div @ raw)
    return np.column_stack([leray_project(domain, raw[:, k]) for k in range(raw.shape[1])])


def apply_A(domain: DomainSpec, u: np.ndarray) -> np.ndarray:
    return leray_project(domain, operators(domain).lap @ u)


# -- boundary traces ---------------------------------------------------------
@dataclass(frozen=True)
class BoundaryTrace:
    """Rows of one-sided second-order normal derivatives at the wall.

    ``matrix @ field`` gives d(component)/d(nu) at ``points``; the flux
    integral of a field is ``sum(weights * (matrix @ field)**2)``.
    """

    matrix: sp.csr_matrix
    weights: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    component: np.ndarray


def boundary_trace(domain: DomainSpec) -> BoundaryTrace:
    nx, ny, dx, dy, hw = domain.nx, domain.ny, domain.dx, domain.dy, domain.half_width
    nu_ = domain.n_u

    def uidx(j, i):
        return j * (nx - 1) + i

    def vidx(j, i):
        return nu_ + j * nx + i

    rows, cols, vals = [], [], []
    weights, points, normals, comp = [], [], [], []

    def add(ia, ib, h, kind, w, pt, nrm, c):
        r = len(weights)
        # f(d) = c1 d + c2 d^2 through the wall zero; outward derivative is -c1
        if kind == "face":      # samples at d = h, 2h
            ca, cb = 4.0 / (2 * h), -1.0 / (2 * h)
        else:                   # samples at d = h/2, 3h/2
            ca, cb = 9.0 / (3 * h), -1.0 / (3 * h)
        rows.extend([r, r])
        cols.extend([ia, ib])
        vals.extend([-ca, -cb])
        weights.append(w)
        points.append(pt)
        normals.append(nrm)
        comp.append(c)

    yc, yf, xc, xf = domain.y_centers, domain.y_faces, domain.x_centers, domain.x_faces
    for j in range(ny):          # west / east, normal component u
        add(uidx(j, 0), uidx(j, 1), dx, "face", dy, (-hw, yc[j]), (-1.0, 0.0), 0)
        add(uidx(j, nx - 2), uidx(j, nx - 3), dx, "face", dy, (hw, yc[j]), (1.0, 0.0), 0)
    for j in range(ny - 1):      # west / east, tangential v
        add(vidx(j, 0), vidx(j, 1), dx, "cell", dy, (-hw, yf[j]), (-1.0, 0.0), 1)
        add(vidx(j, nx - 1), vidx(j, nx - 2), dx, "cell", dy, (hw, yf[j]), (1.0, 0.0), 1)
    for i in range(nx):          # south / north, normal component v
        add(vidx(0, i), vidx(1, i), dy, "face", dx, (xc[i], -hw), (0.0, -1.0), 1)
        add(vidx(ny - 2, i), vidx(ny - 3, i), dy, "face", dx, (xc[i], hw), (0.0, 1.0), 1)
    for i in range(nx - 1):      # south / north, tangential u
        add(uidx(0, i), uidx(1, i), dy, "cell", dx, (xf[i], -hw), (0.0, -1.0), 0)
        add(uidx(ny - 1, i), uidx(ny - 2, i), dy, "cell", dx, (xf[i], hw), (0.0, 1.0), 0)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(weights), domain.n_faces))
    return BoundaryTrace(mat, np.array(weights), np.array(points), np.array(normals), np.array(comp))


# -- modes -----------------------------------------------------------------
@dataclass(frozen=True)
class StokesModes:
    """Eigenpairs of -A: ``A e_j = -lam_j e_j``, fields orthonormal in H."""

    domain: DomainSpec
    lam: np.ndarray
    fields: np.ndarray
    traces: np.ndarray
    trace_weights: np.ndarray
    trace_normals: np.ndarray = dc_field(repr=False)
    trace_points: np.ndarray = dc_field(repr=False)

    @property
    def count(self) -> int:
        return self.lam.size

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.lam)

    def coefficients(self, field: np.ndarray) -> np.ndarray:
        return self.fields.T @ field * self.domain.cell_area

    def synthesize(self, coef: np.ndarray) -> np.ndarray:
        return self.fields @ coef

    def filtered(self, m: int) -> "StokesModes":
        if m > self.count:
            raise GridError(f"asked for {m} modes, only {self.count} retained")
        return StokesModes(self.domain, self.lam[:m], self.fields[:, :m], self.traces[:, :m],
                           self.trace_weights, self.trace_normals, self.trace_points)

    def mask_matrix(self, mask: ControlMask) -> np.ndarray:
        """(chi e_j, e_k)_H."""
        E = self.fields
        return E.T @ (mask.faces[:, None] * E) * self.domain.cell_area

    def flux_matrix(self) -> np.ndarray:
        """Boundary flux form: int_dOmega d_nu e_j . d_nu e_k."""
        B = self.traces
        return B.T @ (self.trace_weights[:, None] * B)


def eig_modes(domain: DomainSpec, M: int, method: str = "auto") -> StokesModes:
    ops = operators(domain)
    K, Mpsi = ops.stream_matrices
    dim = K.shape[0]
    if M < 1 or M > dim:
        raise GridError(f"M={M} outside [1, {dim}] (divergence-free subspace dimension)")
    if method == "auto":
        method = "dense" if dim <= 2500 else "sparse"
    if method == "dense":
        lam, Z = sla.eigh(K.toarray(), Mpsi.toarray(), subset_by_index=[0, M - 1])
    else:
        lam, Z = spla.eigsh(K, k=M, M=Mpsi, sigma=0.0, which="LM")
        order = np.argsort(lam)
        lam, Z = lam[order], Z[:, order]
    if not np.all(np.isfinite(lam)) or lam.min() <= 0.0:
        raise ConvergenceError("Stokes eigensolve produced non-positive eigenvalues")
    E = ops.curl @ Z
    # Z^T Mpsi Z = I means E^T E = I; rescale to H-orthonormality
    E /= math.sqrt(domain.cell_area)
    # deterministic sign: largest-magnitude entry positive
    piv = np.argmax(np.abs(E), axis=0)
    E *= np.sign(E[piv, np.arange(M)])
    tr = boundary_trace(domain)
    return StokesModes(domain, lam, E, np.asarray(tr.matrix @ E), tr.weights, tr.normals, tr.points)


def vprime_norm(modes: StokesModes, f: np.ndarray) -> float:
    """||f||_{V'} from the retained modes: sum |f_j|^2 / lam_j."""
    c = modes.coefficients(f)
    return math.sqrt(float(np.sum(c**2 / modes.lam)))


def vprime_norm_iterative(domain: DomainSpec, f: np.ndarray, tol: float = 1e-13) -> float:
    """||f||_{V'} = (f, psi)_H with -A psi = f, solved by CG on stream functions."""
    ops = operators(domain)
    K, _ = ops.stream_matrices
    rhs = ops.curl.T @ f
    z, info = spla.cg(K, rhs, rtol=tol, atol=0.0, maxiter=20 * K.shape[0])
    if info != 0:
        raise ConvergenceError("CG for the inverse Stokes solve did not converge")
    psi = ops.curl @ z
    return math.sqrt(max(float(f @ psi) * domain.cell_area, 0.0))


def random_divfree(domain: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Projection of a random Dirichlet field; a generic element of H."""
    return leray_project(domain, rng.standard_normal(domain.n_faces))
