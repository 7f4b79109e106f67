"""Assembly of the local systems on the augmented subdomain spaces.

Every local bilinear form is the sum of a volume energy term, an interface
consistency term, and an interface penalty term.  Gradients are constant per
triangle and traces piecewise linear, so all integrals are evaluated in closed
form on triangles and merged edge segments; no quadrature error enters.

The low-level triple emitters are shared with the monolithic oracle assembly,
which wires the same integrals to a different dof bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coeffield import CoefficientField
from .errors import ConfigurationError
from .geometry import SIDE_NORMALS, MergedEdgeMesh, SubdomainMesh


def p1_gradients(mesh: SubdomainMesh):
    """Constant P1 basis gradients per triangle: (ntri, 3, 2) plus areas."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    areas = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                   - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    grads = np.empty_like(p)
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        grads[:, k, 0] = (y[:, a] - y[:, b]) / (2.0 * areas)
        grads[:, k, 1] = (x[:, b] - x[:, a]) / (2.0 * areas)
    return grads, areas


def volume_triples(mesh: SubdomainMesh, tri_alpha: np.ndarray):
    """COO triples of the per-triangle-constant-coefficient stiffness form."""
    grads, areas = p1_gradients(mesh)
    elem = np.einsum("tkd,tld->tkl", grads, grads) * (tri_alpha * areas)[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return rows, cols, elem.ravel()


def assemble_volume(mesh: SubdomainMesh, field: CoefficientField,
                    ndof: int | None = None) -> sp.csr_matrix:
    """P1 stiffness matrix with per-triangle coefficients (exact integration)."""
    rows, cols, vals = volume_triples(mesh, field.triangle_values(mesh))
    n = mesh.n_vertices if ndof is None else ndof
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@dataclass(frozen=True)
class SideSegments:
    """One subdomain's view of the segments along one of its edges."""

    t: np.ndarray                 # (m+1,) breakpoints (offsets along the edge)
    lengths: np.ndarray           # (m,)
    iv: np.ndarray                # (m,) this side's covering interval
    tri: np.ndarray               # (m,) this side's adjacent triangle
    h: float                      # this side's grid spacing
    o_iv: np.ndarray | None       # other side's covering interval (None: outer)
    o_h: float | None


def interface_side_segments(merged: MergedEdgeMesh, sub_id: int) -> SideSegments:
    ifc = merged.iface
    if sub_id == ifc.i:
        return SideSegments(t=merged.t, lengths=merged.lengths, iv=merged.iv_i,
                            tri=merged.tri_i, h=ifc.h_i, o_iv=merged.iv_j, o_h=ifc.h_j)
    return SideSegments(t=merged.t, lengths=merged.lengths, iv=merged.iv_j,
                        tri=merged.tri_j, h=ifc.h_j, o_iv=merged.iv_i, o_h=ifc.h_i)


def outer_side_segments(mesh: SubdomainMesh, side: str) -> SideSegments:
    """Fine intervals of an outer-boundary side, one segment per interval."""
    n = mesh.n
    t = np.arange(n + 1) * mesh.h
    return SideSegments(t=t, lengths=np.diff(t), iv=np.arange(n),
                        tri=mesh.side_tris[side], h=mesh.h, o_iv=None, o_h=None)


def _trace_endpoint_values(segs: SideSegments, n_other_side: bool):
    """Signed P1 trace values of the jump dofs at each segment's endpoints.

    Returns (cols_idx, Va, Vb): cols_idx[m, k] indexes the side node lists
    (native entries first, negative sign; other-side entries follow, positive
    sign).  Dirichlet outer sides only carry the native pair.
    """
    ta, tb = segs.t[:-1], segs.t[1:]
    xa = segs.iv * segs.h
    na0 = (xa + segs.h - ta) / segs.h        # native left hat at t_a
    na1 = (ta - xa) / segs.h
    nb0 = (xa + segs.h - tb) / segs.h
    nb1 = (tb - xa) / segs.h
    if not n_other_side:
        idx = np.stack([segs.iv, segs.iv + 1], axis=1)
        Va = -np.stack([na0, na1], axis=1)
        Vb = -np.stack([nb0, nb1], axis=1)
        return idx, Va, Vb
    xo = segs.o_iv * segs.o_h
    oa0 = (xo + segs.o_h - ta) / segs.o_h
    oa1 = (ta - xo) / segs.o_h
    ob0 = (xo + segs.o_h - tb) / segs.o_h
    ob1 = (tb - xo) / segs.o_h
    idx = np.stack([segs.iv, segs.iv + 1, segs.o_iv, segs.o_iv + 1], axis=1)
    Va = np.stack([-na0, -na1, oa0, oa1], axis=1)
    Vb = np.stack([-nb0, -nb1, ob0, ob1], axis=1)
    return idx, Va, Vb


def edge_side_triples(mesh: SubdomainMesh, grads: np.ndarray, segs: SideSegments,
                      alpha_e: np.ndarray, normal: np.ndarray, l_factor: float,
                      delta: float, h_pen: float, native_cols: np.ndarray,
                      other_cols: np.ndarray | None):
    """COO triples of one side's consistency and penalty contributions.

    `native_cols` maps this side's trace node index (0..n) to matrix columns
    and doubles as the map for the adjacent triangles' vertices via
    `native_cols[mesh.triangles]`; `other_cols` maps the opposite side's node
    index (ghost dofs locally, the neighbour's natives monolithically).
    """
    if delta <= 0.0:
        raise ConfigurationError(f"penalty parameter must be positive, got {delta}")
    has_other = other_cols is not None
    idx, Va, Vb = _trace_endpoint_values(segs, has_other)
    m, K = idx.shape

    jump_cols = np.empty((m, K), dtype=np.int64)
    jump_cols[:, :2] = native_cols[idx[:, :2]]
    if has_other:
        jump_cols[:, 2:] = other_cols[idx[:, 2:]]

    # penalty: (1/l)(delta/h_pen) int alpha (jump u)(jump v)
    cp = (delta / (l_factor * h_pen)) * alpha_e * segs.lengths / 6.0
    block = (2.0 * np.einsum("mk,ml->mkl", Va, Va)
             + np.einsum("mk,ml->mkl", Va, Vb)
             + np.einsum("mk,ml->mkl", Vb, Va)
             + 2.0 * np.einsum("mk,ml->mkl", Vb, Vb)) * cp[:, None, None]
    p_rows = np.repeat(jump_cols, K, axis=1).ravel()
    p_cols = np.tile(jump_cols, (1, K)).ravel()
    p_vals = block.ravel()

    # consistency: (1/l) int alpha dU/dn (jump v), plus its transpose
    g = grads[segs.tri] @ normal                       # (m, 3)
    verts = native_cols[mesh.triangles[segs.tri]]      # (m, 3)
    w = (Va + Vb) * (segs.lengths / 2.0)[:, None]      # signed int of trace hats
    C = np.einsum("mk,mq->mkq", w, g) * (alpha_e / l_factor)[:, None, None]
    r1 = np.repeat(jump_cols, 3, axis=1).ravel()
    c1 = np.tile(verts, (1, K)).ravel()
    v1 = C.ravel()
    s_rows = np.concatenate([r1, c1])
    s_cols = np.concatenate([c1, r1])
    s_vals = np.concatenate([v1, v1])
    return (s_rows, s_cols, s_vals), (p_rows, p_cols, p_vals)


def load_values(mesh: SubdomainMesh, f=None) -> np.ndarray:
    """P1 load by the vertex rule (exact for f linear per triangle)."""
    _, areas = p1_gradients(mesh)
    verts = mesh.vertices
    if f is None:
        fv = np.ones(verts.shape[0])
    else:
        fv = np.asarray(f(verts[:, 0], verts[:, 1]), dtype=float)
        fv = np.broadcast_to(fv, verts.shape[:1]).copy()
    out = np.zeros(verts.shape[0])
    contrib = (areas / 3.0)[:, None] * fv[mesh.triangles]
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    return out


def assemble_load(mesh: SubdomainMesh, f=None, ndof: int | None = None) -> np.ndarray:
    """Load vector on the augmented space; ghost dofs receive zero load."""
    out = np.zeros(mesh.n_vertices if ndof is None else ndof)
    out[:mesh.n_vertices] = load_values(mesh, f)
    return out


@dataclass(frozen=True)
class LocalSystem:
    """Assembled matrices of one subdomain on its augmented space."""

    sub_id: int
    ndof: int
    A: sp.csr_matrix              # volume + consistency + penalty
    A_vol: sp.csr_matrix
    A_s: sp.csr_matrix
    A_p: sp.csr_matrix
    D: sp.csr_matrix              # volume + penalty
    load: np.ndarray


def assemble_consistency(space, merged: MergedEdgeMesh, coeffs, meshes: dict,
                         l_factor: float = 2.0) -> sp.csr_matrix:
    """Consistency contribution of one interface to one subdomain's system."""
    mesh = meshes[space.sub_id]
    grads, _ = p1_gradients(mesh)
    ifc = merged.iface
    segs = interface_side_segments(merged, space.sub_id)
    native_cols = np.arange(mesh.n_vertices)
    (sr, sc, sv), _ = edge_side_triples(
        mesh, grads, segs, coeffs.alpha_e, SIDE_NORMALS[ifc.side_of(space.sub_id)],
        l_factor, 1.0, 1.0, native_cols, space.ghost_dofs[ifc.index],
    )
    return sp.coo_matrix((sv, (sr, sc)), shape=(space.ndof, space.ndof)).tocsr()


def assemble_penalty(space, merged: MergedEdgeMesh, coeffs, meshes: dict,
                     delta: float, l_factor: float = 2.0) -> sp.csr_matrix:
    """Penalty contribution of one interface to one subdomain's system."""
    mesh = meshes[space.sub_id]
    grads, _ = p1_gradients(mesh)
    ifc = merged.iface
    segs = interface_side_segments(merged, space.sub_id)
    native_cols = np.arange(mesh.n_vertices)
    _, (pr, pc, pv) = edge_side_triples(
        mesh, grads, segs, coeffs.alpha_e, SIDE_NORMALS[ifc.side_of(space.sub_id)],
        l_factor, delta, coeffs.h_ij, native_cols, space.ghost_dofs[ifc.index],
    )
    return sp.coo_matrix((pv, (pr, pc)), shape=(space.ndof, space.ndof)).tocsr()


def assemble_local(sub, space, meshes: dict, merged_by_iface: dict, coeffs_by_iface: dict,
                   field: CoefficientField, outer_sides: tuple, delta: float,
                   f=None, include_consistency: bool = True,
                   include_outer: bool = True) -> LocalSystem:
    """Assemble A' = volume + consistency + penalty and D = volume + penalty.

    `include_consistency` / `include_outer` exist for diagnostics only (norm
    equivalence and kernel checks); production assembly keeps both on.
    """
    mesh = meshes[sub.id]
    ndof = space.ndof
    tri_alpha = field.triangle_values(mesh)
    grads, _ = p1_gradients(mesh)
    native_cols = np.arange(mesh.n_vertices)

    vr, vc, vv = volume_triples(mesh, tri_alpha)
    s_parts, p_parts = [], []

    for ifc in space.ifaces:
        merged = merged_by_iface[ifc.index]
        coeffs = coeffs_by_iface[ifc.index]
        segs = interface_side_segments(merged, sub.id)
        s_tr, p_tr = edge_side_triples(
            mesh, grads, segs, coeffs.alpha_e, SIDE_NORMALS[ifc.side_of(sub.id)],
            2.0, delta, coeffs.h_ij, native_cols, space.ghost_dofs[ifc.index],
        )
        s_parts.append(s_tr)
        p_parts.append(p_tr)

    if include_outer:
        for side in outer_sides:
            segs = outer_side_segments(mesh, side)
            alpha_e = tri_alpha[segs.tri]
            s_tr, p_tr = edge_side_triples(
                mesh, grads, segs, alpha_e, SIDE_NORMALS[side],
                1.0, delta, mesh.h, native_cols, None,
            )
            s_parts.append(s_tr)
            p_parts.append(p_tr)

    def acc(parts):
        if not parts:
            return sp.csr_matrix((ndof, ndof))
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        vals = np.concatenate([p[2] for p in parts])
        return sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsr()

    A_vol = sp.coo_matrix((vv, (vr, vc)), shape=(ndof, ndof)).tocsr()
    A_s = acc(s_parts)
    A_p = acc(p_parts)
    A = A_vol + A_s + A_p if include_consistency else A_vol + A_p
    return LocalSystem(sub_id=sub.id, ndof=ndof, A=A, A_vol=A_vol, A_s=A_s,
                       A_p=A_p, D=A_vol + A_p,
                       load=assemble_load(mesh, f, ndof))


def dump_matrix_market(A: sp.spmatrix, target, symmetric: bool = True) -> None:
    """MatrixMarket coordinate dump (1-based indices)."""
    from scipy.io import mmwrite

    mmwrite(target, sp.coo_matrix(A), symmetry="symmetric" if symmetric else "general")
