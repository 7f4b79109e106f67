"""Structured geometry: square subdomain partitions of the unit square,
per-subdomain right-triangle meshes and interface bookkeeping.

All objects are plain immutable containers built once; construction per
subdomain / interface is independent, so reads are safe from any number of
concurrent contexts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

#: side markers in the fixed local traversal order
SIDES = ("S", "E", "N", "W")

#: outward unit normal per side of an axis-aligned square
SIDE_NORMALS = {
    "S": np.array([0.0, -1.0]),
    "E": np.array([1.0, 0.0]),
    "N": np.array([0.0, 1.0]),
    "W": np.array([-1.0, 0.0]),
}


@dataclass(frozen=True)
class Subdomain:
    """One square subdomain with integer grid coordinates."""

    id: int
    gx: int
    gy: int
    x0: float
    y0: float
    H: float


@dataclass(frozen=True)
class DomainPartition:
    """Partition of (0,1)^2 into nx-by-ny square subdomains."""

    nx: int
    ny: int
    H: float
    subdomains: tuple

    def subdomain_at(self, gx: int, gy: int) -> Subdomain:
        return self.subdomains[gy * self.nx + gx]

    def outer_sides(self, sub: Subdomain) -> tuple:
        """Side markers of `sub` lying on the outer boundary of the domain."""
        out = []
        if sub.gy == 0:
            out.append("S")
        if sub.gx == self.nx - 1:
            out.append("E")
        if sub.gy == self.ny - 1:
            out.append("N")
        if sub.gx == 0:
            out.append("W")
        return tuple(out)


def build_partition(nx: int, ny: int) -> DomainPartition:
    """Tile the unit square with nx*ny square subdomains (requires nx == ny)."""
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"subdomain counts must be >= 1, got {nx}x{ny}")
    if nx != ny:
        raise ConfigurationError(
            f"only square subdomains are supported (nx == ny), got {nx}x{ny}"
        )
    H = 1.0 / nx
    subs = tuple(
        Subdomain(id=gy * nx + gx, gx=gx, gy=gy, x0=gx * H, y0=gy * H, H=H)
        for gy in range(ny)
        for gx in range(nx)
    )
    return DomainPartition(nx=nx, ny=ny, H=H, subdomains=subs)


@dataclass(frozen=True)
class SubdomainMesh:
    """Structured triangulation of one subdomain.

    The (n+1)^2 lattice vertices are numbered row-major (y-major, x fastest);
    each cell is split along the bottom-left -> top-right diagonal into a lower
    triangle (bl, br, tr) and an upper triangle (bl, tr, tl), both
    counterclockwise.  Triangle 2*c and 2*c+1 belong to cell c = iy*n + ix.
    """

    sub: Subdomain
    n: int
    h: float
    vertices: np.ndarray          # ((n+1)^2, 2) float
    triangles: np.ndarray         # (2 n^2, 3) int
    boundary_nodes: dict          # side -> (n+1,) node ids, ascending arc length
    side_tris: dict               # side -> (n,) triangle id adjacent to interval k

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def triangulate_subdomain(sub: Subdomain, n: int) -> SubdomainMesh:
    """Mesh one subdomain with n segments per side (2 n^2 triangles)."""
    if n < 2:
        raise ConfigurationError(
            f"subdomain {sub.id}: need at least 2 segments per side, got {n}"
        )
    h = sub.H / n
    ii = np.arange(n + 1)
    X, Y = np.meshgrid(sub.x0 + ii * h, sub.y0 + ii * h)   # row-major: Y varies by row
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n))
    ix, iy = ix.ravel(), iy.ravel()
    bl = iy * (n + 1) + ix
    br = bl + 1
    tl = bl + (n + 1)
    tr = tl + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([bl, br, tr])        # lower
    triangles[1::2] = np.column_stack([bl, tr, tl])        # upper

    k = np.arange(n + 1)
    boundary_nodes = {
        "S": k.copy(),
        "E": k * (n + 1) + n,
        "N": n * (n + 1) + k,
        "W": k * (n + 1),
    }
    c = np.arange(n)
    side_tris = {
        "S": 2 * c,                        # lower triangle of cell (k, 0)
        "E": 2 * (c * n + n - 1),          # lower triangle of cell (n-1, k)
        "N": 2 * ((n - 1) * n + c) + 1,    # upper triangle of cell (k, n-1)
        "W": 2 * (c * n) + 1,              # upper triangle of cell (0, k)
    }
    return SubdomainMesh(
        sub=sub, n=n, h=h, vertices=vertices, triangles=triangles,
        boundary_nodes=boundary_nodes, side_tris=side_tris,
    )


@dataclass(frozen=True)
class EdgeInterface:
    """A shared edge between two subdomains, carrying both side meshes.

    Subdomain `i` is the left (vertical edge) or lower (horizontal edge)
    neighbour; the edge parameter t in [0, H] increases with y resp. x, the
    same direction in which both sides' boundary node lists ascend.
    """

    index: int
    i: int
    j: int
    side_i: str                   # 'E' or 'N' on subdomain i
    side_j: str                   # 'W' or 'S' on subdomain j
    orientation: str              # 'v' or 'h'
    start: tuple                  # (x, y) of the t = 0 endpoint
    corner_lo: tuple              # partition lattice coords of t = 0 endpoint
    corner_hi: tuple              # lattice coords of t = H endpoint
    n_i: int
    n_j: int
    h_i: float
    h_j: float
    length: float

    def side_of(self, sub_id: int) -> str:
        if sub_id == self.i:
            return self.side_i
        if sub_id == self.j:
            return self.side_j
        raise KeyError(f"subdomain {sub_id} not on interface {self.index}")

    def other(self, sub_id: int) -> int:
        return self.j if sub_id == self.i else self.i


def discover_interfaces(partition: DomainPartition, meshes: dict) -> list:
    """Enumerate interior interfaces, east then north per subdomain id."""
    interfaces = []
    H = partition.H
    for sub in partition.subdomains:
        if sub.gx + 1 < partition.nx:                      # east neighbour
            nbr = partition.subdomain_at(sub.gx + 1, sub.gy)
            interfaces.append(_make_interface(
                len(interfaces), sub, nbr, "E", "W", "v",
                start=(sub.x0 + H, sub.y0),
                corner_lo=(sub.gx + 1, sub.gy), corner_hi=(sub.gx + 1, sub.gy + 1),
                meshes=meshes, H=H,
            ))
        if sub.gy + 1 < partition.ny:                      # north neighbour
            nbr = partition.subdomain_at(sub.gx, sub.gy + 1)
            interfaces.append(_make_interface(
                len(interfaces), sub, nbr, "N", "S", "h",
                start=(sub.x0, sub.y0 + H),
                corner_lo=(sub.gx, sub.gy + 1), corner_hi=(sub.gx + 1, sub.gy + 1),
                meshes=meshes, H=H,
            ))
    return interfaces


def _make_interface(index, sub, nbr, side_i, side_j, orientation, start,
                    corner_lo, corner_hi, meshes, H):
    mi, mj = meshes[sub.id], meshes[nbr.id]
    return EdgeInterface(
        index=index, i=sub.id, j=nbr.id, side_i=side_i, side_j=side_j,
        orientation=orientation, start=start,
        corner_lo=corner_lo, corner_hi=corner_hi,
        n_i=mi.n, n_j=mj.n, h_i=mi.h, h_j=mj.h, length=H,
    )


def subdomain_interfaces(interfaces: list, sub_id: int) -> list:
    """Interfaces touching `sub_id`, ordered by its local side (S, E, N, W)."""
    mine = [ifc for ifc in interfaces if sub_id in (ifc.i, ifc.j)]
    mine.sort(key=lambda ifc: SIDES.index(ifc.side_of(sub_id)))
    return mine


@dataclass(frozen=True)
class MergedEdgeMesh:
    """Union of both sides' edge grids; every segment sits inside exactly one
    fine interval of each side."""

    iface: EdgeInterface
    t: np.ndarray                 # (m+1,) breakpoints, offsets in [0, H]
    lengths: np.ndarray           # (m,) segment lengths
    iv_i: np.ndarray              # (m,) covering i-side interval index
    iv_j: np.ndarray              # (m,) covering j-side interval index
    tri_i: np.ndarray             # (m,) adjacent i-side triangle id
    tri_j: np.ndarray             # (m,) adjacent j-side triangle id

    @property
    def n_segments(self) -> int:
        return self.lengths.shape[0]


def merge_edge_meshes(iface: EdgeInterface, meshes: dict) -> MergedEdgeMesh:
    """Merge the two side grids of an interface into one segment list.

    Breakpoints are computed on the integer lattice of lcm(n_i, n_j), so
    coincident nodes merge exactly; the 1e-12*H coalescing tolerance of the
    contract can never be exercised by integer side counts.
    """
    ni, nj = iface.n_i, iface.n_j
    L = math.lcm(ni, nj)
    si, sj = L // ni, L // nj
    ticks = np.union1d(np.arange(ni + 1) * si, np.arange(nj + 1) * sj)
    t = ticks * (iface.length / L)
    lengths = np.diff(t)
    if np.any(lengths <= 1e-12 * iface.length):
        raise ConfigurationError(
            f"interface {iface.index}: degenerate merged segment"
        )
    lo = ticks[:-1]
    iv_i = lo // si
    iv_j = lo // sj
    mi, mj = meshes[iface.i], meshes[iface.j]
    tri_i = mi.side_tris[iface.side_i][iv_i]
    tri_j = mj.side_tris[iface.side_j][iv_j]
    return MergedEdgeMesh(iface=iface, t=t, lengths=lengths,
                          iv_i=iv_i, iv_j=iv_j, tri_i=tri_i, tri_j=tri_j)


def dump_mesh(mesh: SubdomainMesh, stream) -> None:
    """Plain-text debug dump: one `id x y` line per node, then `id v0 v1 v2`
    per triangle."""
    for vid, (x, y) in enumerate(mesh.vertices):
        stream.write(f"{vid} {x:.17g} {y:.17g}\n")
    for tid, (a, b, c) in enumerate(mesh.triangles):
        stream.write(f"{tid} {a} {b} {c}\n")
