"""Steady 2D heat conduction with circular inclusions, P1 finite elements.

    div(kappa grad u) = 0            in [0, 1] x [0, 0.6]
    u = 0                            on x1 = 0 and x1 = 1
    u = T                            on x2 = 0.6
    -kappa0 du/dx2 = q               on x2 = 0

The mesh is a structured grid of ``resolution x ceil(0.6 resolution)`` cells,
each split into two triangles (diagonals mirrored about x1 = 0.5). Vertices
close to an inclusion boundary are moved radially onto the circle so the
polygonal interface follows it; triangles are then labelled by centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AssemblyError, ContractError, LocationError, RefinementError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

WIDTH = 1.0
HEIGHT = 0.6
SNAP_FRACTION = 0.3


@dataclass(frozen=True)
class Inclusion:
    center: tuple
    radius: float
    index: int


@dataclass(frozen=True)
class HeatGeometry:
    background_conductivity: float = 15.0
    inclusions: tuple = ()
    top_temperature: float = 200.0
    bottom_flux: float = 2000.0
    width: float = WIDTH
    height: float = HEIGHT

    def __post_init__(self):
        if self.background_conductivity <= 0:
            raise ContractError("background conductivity must be positive")
        incs = tuple(
            inc if isinstance(inc, Inclusion) else Inclusion(tuple(inc["center"]), float(inc["radius"]), int(inc["index"]))
            for inc in self.inclusions
        )
        object.__setattr__(self, "inclusions", incs)
        if sorted(i.index for i in incs) != list(range(1, len(incs) + 1)):
            raise ContractError("inclusion indices must be exactly 1..K")
        for inc in incs:
            (x, y), r = inc.center, inc.radius
            if r <= 0 or x - r <= 0 or x + r >= self.width or y - r <= 0 or y + r >= self.height:
                raise ContractError(f"inclusion {inc.index} is not strictly inside the domain")
        for a in incs:
            for b in incs:
                if a.index < b.index and math.dist(a.center, b.center) <= a.radius + b.radius:
                    raise ContractError(f"inclusions {a.index} and {b.index} overlap")

    @property
    def n_inclusions(self) -> int:
        return len(self.inclusions)


def load_geometry(name: str):
    """Shipped geometry presets ("heat2", "heat6"): (HeatGeometry, sensor points)."""
    text = resources.files("homotopy_bayes").joinpath("data/geometries.toml").read_text()
    table = tomllib.loads(text)
    if name not in table:
        raise ContractError(f"unknown geometry preset {name!r}; known: {sorted(k for k in table if k != 'version')}")
    g = table[name]
    geom = HeatGeometry(
        background_conductivity=g.get("background_conductivity", 15.0),
        inclusions=tuple(g["inclusions"]),
        top_temperature=g.get("top_temperature", 200.0),
        bottom_flux=g.get("bottom_flux", 2000.0),
    )
    return geom, np.asarray(g["sensors"], dtype=float)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (n_vertices, 2)
    triangles: np.ndarray  # (n_triangles, 3), counter-clockwise
    labels: np.ndarray  # 0 = background, i = inclusion index
    nx: int
    ny: int

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(geometry: HeatGeometry, resolution: int) -> Mesh:
    if resolution < 8:
        raise ContractError("resolution must be >= 8")
    nx, ny = resolution, math.ceil(0.6 * resolution - 1e-9)
    hx, hy = geometry.width / nx, geometry.height / ny
    h = min(hx, hy)
    for inc in geometry.inclusions:
        # two triangles per cell: triangles spanned by a diameter
        if 2 * (2 * inc.radius / h) < 8:
            raise RefinementError(
                f"inclusion {inc.index} (radius {inc.radius}) needs resolution > {resolution} "
                "for 8 triangles across its diameter"
            )

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    verts = np.column_stack([ii.ravel() * hx, jj.ravel() * hy])
    verts[ii.ravel() == nx, 0] = geometry.width
    verts[jj.ravel() == ny, 1] = geometry.height

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        left = (i + 0.5) * hx < 0.5 * geometry.width
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if left:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris, dtype=np.int64)

    interior = (ii.ravel() > 0) & (ii.ravel() < nx) & (jj.ravel() > 0) & (jj.ravel() < ny)
    for inc in geometry.inclusions:
        c = np.asarray(inc.center)
        rel = verts - c
        dist = np.hypot(rel[:, 0], rel[:, 1])
        near = interior & (np.abs(dist - inc.radius) < SNAP_FRACTION * h)
        verts[near] = c + rel[near] * (inc.radius / dist[near])[:, None]

    mesh = Mesh(verts, tris, np.zeros(len(tris), dtype=np.int64), nx, ny)
    areas = mesh.areas()
    if np.any(areas <= 1e-3 * hx * hy):
        raise AssemblyError("vertex snapping produced degenerate triangles")
    centroids = verts[tris].mean(axis=1)
    labels = np.zeros(len(tris), dtype=np.int64)
    for inc in geometry.inclusions:
        inside = np.hypot(*(centroids - np.asarray(inc.center)).T) < inc.radius
        labels[inside] = inc.index
    return Mesh(verts, tris, labels, nx, ny)


def element_stiffness(mesh: Mesh) -> np.ndarray:
    """Unit-conductivity P1 stiffness matrices, shape (n_triangles, 3, 3)."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.areas()
    # gradients of barycentric coordinates: rotate opposite edges
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grad = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])
    return area[:, None, None] * np.einsum("tik,tjk->tij", grad, grad)


class HeatSolver:
    """Assembled FEM system; each solve only rescales region blocks.

    Instances hold no scratch that is mutated by ``solve``, so concurrent
    solves with different conductivities are safe.
    """

    def __init__(self, mesh: Mesh, geometry: HeatGeometry):
        self.mesh, self.geometry = mesh, geometry
        n = len(mesh.vertices)
        x, y = mesh.vertices.T
        tol = 1e-12
        side = (np.abs(x) < tol) | (np.abs(x - geometry.width) < tol)
        top = np.abs(y - geometry.height) < tol
        dirichlet = side | top
        self.u_dirichlet = np.where(top & ~side, geometry.top_temperature, 0.0)
        self.dirichlet = np.flatnonzero(dirichlet)
        self.free = np.flatnonzero(~dirichlet)

        Ke = element_stiffness(mesh)
        rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
        cols = np.tile(mesh.triangles, (1, 3)).ravel()
        self.n_regions = geometry.n_inclusions + 1
        vals = Ke.reshape(-1)
        region_of_entry = np.repeat(mesh.labels, 9)
        self.region_full = [
            sp.csc_matrix((np.where(region_of_entry == r, vals, 0.0), (rows, cols)), shape=(n, n))
            for r in range(self.n_regions)
        ]

        # free-free block on one fixed CSC pattern: data(kappa) = kappa_regions @ _ff_data
        local = np.full(n, -1)
        local[self.free] = np.arange(self.free.size)
        keep = (local[rows] >= 0) & (local[cols] >= 0)
        nf = self.free.size
        keys = local[cols[keep]] * nf + local[rows[keep]]  # column-major order
        ukeys, inverse = np.unique(keys, return_inverse=True)
        self._ff_indices = (ukeys % nf).astype(np.int32)
        self._ff_indptr = np.searchsorted(ukeys // nf, np.arange(nf + 1)).astype(np.int32)
        self._ff_data = np.stack([
            np.bincount(inverse, weights=np.where(region_of_entry[keep] == r, vals[keep], 0.0), minlength=ukeys.size)
            for r in range(self.n_regions)
        ])
        uD = self.u_dirichlet[self.dirichlet]
        self._lift = np.stack([(A.tocsr()[self.free][:, self.dirichlet]) @ uD for A in self.region_full])

        load = np.zeros(n)
        bottom = np.flatnonzero(np.abs(y) < tol)
        bottom = bottom[np.argsort(x[bottom])]
        for a, b in zip(bottom[:-1], bottom[1:]):
            length = x[b] - x[a]
            load[[a, b]] += 0.5 * geometry.bottom_flux * length
        self.load = load

    def region_conductivities(self, conductivities) -> np.ndarray:
        k = np.asarray(conductivities, dtype=float)
        if k.shape != (self.geometry.n_inclusions,):
            raise ContractError(f"expected {self.geometry.n_inclusions} conductivities, got {k.shape}")
        if np.any(~(k > 0)):
            raise ContractError(f"conductivities must be positive, got {k.tolist()}")
        return np.concatenate([[self.geometry.background_conductivity], k])

    def stiffness(self, conductivities) -> sp.csc_matrix:
        kr = self.region_conductivities(conductivities)
        A = self.region_full[0] * kr[0]
        for r in range(1, self.n_regions):
            A = A + self.region_full[r] * kr[r]
        return A.tocsc()

    def solve(self, conductivities) -> np.ndarray:
        kr = self.region_conductivities(conductivities)
        data = kr @ self._ff_data
        A = sp.csc_matrix((data, self._ff_indices, self._ff_indptr), shape=(self.free.size,) * 2)
        rhs = self.load[self.free] - kr @ self._lift
        try:
            uf = splu(A).solve(rhs)
        except RuntimeError as exc:
            raise AssemblyError(f"singular FEM system: {exc}") from exc
        u = self.u_dirichlet.copy()
        u[self.free] = uf
        return u

    def boundary_fluxes(self, u, conductivities) -> tuple:
        """(inflow through the Neumann edge, outflow through Dirichlet edges).

        Outflow uses the consistent nodal reactions ``A u - f`` at Dirichlet
        vertices, which stay finite at the singular top corners.
        """
        residual = self.stiffness(conductivities) @ np.asarray(u, dtype=float) - self.load
        return float(self.load.sum()), float(-residual[self.dirichlet].sum())

    def energy(self, u, conductivities) -> float:
        return float(u @ (self.stiffness(conductivities) @ u))


def solve_heat(mesh: Mesh, geometry: HeatGeometry, conductivities) -> np.ndarray:
    return HeatSolver(mesh, geometry).solve(conductivities)


def observation_matrix(mesh: Mesh, points) -> sp.csr_matrix:
    """Sparse barycentric interpolation operator, shape (n_points, n_vertices)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = mesh.vertices[mesh.triangles]
    v0, v1, v2 = p[:, 0], p[:, 1], p[:, 2]
    det = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v1[:, 1] - v0[:, 1]) * (v2[:, 0] - v0[:, 0])
    rows, cols, vals = [], [], []
    for k, x in enumerate(pts):
        l1 = ((x[0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (x[1] - v0[:, 1]) * (v2[:, 0] - v0[:, 0])) / det
        l2 = ((v1[:, 0] - v0[:, 0]) * (x[1] - v0[:, 1]) - (v1[:, 1] - v0[:, 1]) * (x[0] - v0[:, 0])) / det
        lam = np.stack([1 - l1 - l2, l1, l2], axis=1)
        inside = np.flatnonzero(np.all(lam >= -1e-12, axis=1))
        if inside.size == 0:
            raise LocationError(f"point {x.tolist()} is outside the mesh")
        t = inside[0]
        rows += [k] * 3
        cols += mesh.triangles[t].tolist()
        vals += lam[t].tolist()
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), len(mesh.vertices)))


def observe(mesh: Mesh, nodal, points) -> np.ndarray:
    return observation_matrix(mesh, points) @ np.asarray(nodal, dtype=float)


def lognormal_hyperparams(mean: float, sd: float):
    """(lambda0, zeta0) of the underlying normal for a lognormal with given mean/sd."""
    if mean <= 0 or sd < 0:
        raise ContractError("lognormal mean must be positive and sd nonnegative")
    zeta_sq = math.log1p((sd / mean) ** 2)
    return math.log(mean) - 0.5 * zeta_sq, math.sqrt(zeta_sq)


def xi_to_kappa(xi, lambda0: float, zeta0: float) -> np.ndarray:
    z = lambda0 + zeta0 * np.asarray(xi, dtype=float)
    if np.any(z > 700):
        raise OverflowError(f"conductivity exponent {np.max(z):.1f} overflows")
    return np.exp(z)


class HeatForwardModel:
    """Conductivities -> sensor temperatures.

    Only the inclusion blocks of the stiffness matrix depend on the unknown
    conductivities, so the background unknowns are eliminated once (static
    condensation). Each evaluation is then a small dense solve on the vertices
    of inclusion triangles; the result equals the full sparse solve up to
    rounding.
    """

    chunk = 256

    def __init__(self, geometry: HeatGeometry, sensors, resolution: int = 32):
        self.geometry = geometry
        self.mesh = build_mesh(geometry, resolution)
        self.solver = HeatSolver(self.mesh, geometry)
        self.sensors = np.atleast_2d(np.asarray(sensors, dtype=float))
        self.H = observation_matrix(self.mesh, self.sensors)
        self._condense()

    def _condense(self):
        S, mesh = self.solver, self.mesh
        n_free = S.free.size
        A_parts = [
            sp.csc_matrix((S._ff_data[r], S._ff_indices, S._ff_indptr), shape=(n_free, n_free))
            for r in range(S.n_regions)
        ]
        local = np.full(len(mesh.vertices), -1)
        local[S.free] = np.arange(n_free)
        inc_vertices = np.unique(mesh.triangles[mesh.labels > 0])
        I = np.unique(local[inc_vertices])
        I = I[I >= 0]
        E = np.setdiff1d(np.arange(n_free), I)
        if np.any(S._lift[1:] != 0):
            raise AssemblyError("inclusions must not touch Dirichlet vertices")
        k0 = self.geometry.background_conductivity
        A0 = (A_parts[0] * k0).tocsr()
        rhs = S.load[S.free] - k0 * S._lift[0]
        A_EE = A0[E][:, E].tocsc()
        A_EI = A0[E][:, I].toarray()
        A_IE = A0[I][:, E].toarray()
        lu = splu(A_EE)
        X = lu.solve(A_EI)
        z = lu.solve(rhs[E])
        self._S0 = A0[I][:, I].toarray() - A_IE @ X
        self._r = rhs[I] - A_IE @ z
        self._blocks = np.stack([A.tocsr()[I][:, I].toarray() for A in A_parts[1:]]) if len(A_parts) > 1 else np.zeros((0, I.size, I.size))
        H_free = self.H.tocsc()[:, S.free]
        H_I, H_E = H_free[:, I].toarray(), H_free[:, E].toarray()
        self._y0 = self.H.tocsc()[:, S.dirichlet] @ S.u_dirichlet[S.dirichlet] + H_E @ z
        self._G = H_I - H_E @ X

    def __call__(self, conductivities) -> np.ndarray:
        return self.batch(np.asarray(conductivities, dtype=float)[None, :])[0]

    def batch(self, K) -> np.ndarray:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape[1] != self.geometry.n_inclusions:
            raise ContractError(f"expected {self.geometry.n_inclusions} conductivities per row")
        if np.any(~(K > 0)):
            raise ContractError("conductivities must be positive")
        out = np.empty((K.shape[0], self._G.shape[0]))
        for s in range(0, K.shape[0], self.chunk):
            k = K[s : s + self.chunk]
            S = self._S0 + np.einsum("nr,rij->nij", k, self._blocks)
            u_I = np.linalg.solve(S, np.broadcast_to(self._r, (k.shape[0], self._r.size))[..., None])[..., 0]
            out[s : s + self.chunk] = self._y0 + u_I @ self._G.T
        return out

    def nodal(self, conductivities) -> np.ndarray:
        return self.solver.solve(conductivities)


class StandardizedHeatModel:
    """Standardised variables xi -> sensor temperatures via kappa = exp(lambda0 + zeta0 xi)."""

    def __init__(self, base: HeatForwardModel, lambda0: float, zeta0: float):
        self.base, self.lambda0, self.zeta0 = base, lambda0, zeta0

    def __call__(self, xi) -> np.ndarray:
        return self.base(xi_to_kappa(xi, self.lambda0, self.zeta0))

    def batch(self, XI) -> np.ndarray:
        return self.base.batch(xi_to_kappa(XI, self.lambda0, self.zeta0))


def series_solution(geometry: HeatGeometry, points, n_terms: int = 4000) -> np.ndarray:
    """Separation-of-variables solution for homogeneous conductivity kappa0.

    u = sum_n sin(n pi x) [T c_n cosh(n pi y)/cosh(n pi H) - b_n sinh(n pi (H - y))/cosh(n pi H)]
    with c_n the sine coefficients of 1 and b_n n pi = -(q/kappa0) c_n.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0:1] / geometry.width, pts[:, 1:2]
    H = geometry.height
    n = np.arange(1, n_terms + 1, 2, dtype=float)[None, :]  # even terms vanish
    a = n * np.pi / geometry.width
    c = 4.0 / (n * np.pi)
    b = -(geometry.bottom_flux / geometry.background_conductivity) * c / a
    denom = 1.0 + np.exp(-2 * a * H)
    cosh_ratio = np.exp(a * (y - H)) * (1.0 + np.exp(-2 * a * y)) / denom
    sinh_ratio = np.exp(-a * y) * (1.0 - np.exp(-2 * a * (H - y))) / denom
    terms = np.sin(n * np.pi * x) * (geometry.top_temperature * c * cosh_ratio - b * sinh_ratio)
    return terms.sum(axis=1)
