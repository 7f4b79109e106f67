"""Independent verification path: monolithic assembly on the product space
(native dofs only, no ghosts), direct solves, and dense spectral analysis.

Everything here is desk-scale and guarded by dimension limits; it exists to
cross-check the substructured solver, not to compete with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .errors import ConfigurationError
from .fetidp import dense_operator
from .geometry import SIDE_NORMALS


@dataclass(frozen=True)
class MonolithicSystem:
    """DG system over the product of the native subdomain spaces."""

    ndof: int
    offsets: dict                 # sub_id -> first global dof
    A: sp.csr_matrix
    load: np.ndarray


def assemble_monolithic(disc, include_consistency: bool = True,
                        include_outer: bool = True) -> MonolithicSystem:
    """Assemble the global DG matrix coupling neighbouring subdomains' native
    dofs directly through the merged-edge integrals (no ghost unknowns)."""
    offsets = disc.native_offsets
    ndof = disc.n_native_total
    rows, cols, vals = [], [], []

    def push(tr):
        rows.append(tr[0])
        cols.append(tr[1])
        vals.append(tr[2])

    grads = {}
    for sid in sorted(disc.meshes):
        mesh = disc.meshes[sid]
        grads[sid] = assembly.p1_gradients(mesh)[0]
        tri_alpha = disc.field.triangle_values(mesh)
        base = offsets[sid]
        vr, vc, vv = assembly.volume_triples(mesh, tri_alpha)
        push((vr + base, vc + base, vv))
        if include_outer:
            for side in disc.partition.outer_sides(disc.partition.subdomains[sid]):
                segs = assembly.outer_side_segments(mesh, side)
                s_tr, p_tr = assembly.edge_side_triples(
                    mesh, grads[sid], segs, tri_alpha[segs.tri], SIDE_NORMALS[side],
                    1.0, disc.delta, mesh.h, base + np.arange(mesh.n_vertices), None,
                )
                if include_consistency:
                    push(s_tr)
                push(p_tr)

    for ifc in disc.interfaces:
        merged = disc.merged[ifc.index]
        coeffs = disc.iface_coeffs[ifc.index]
        for sid in (ifc.i, ifc.j):
            other = ifc.other(sid)
            mesh = disc.meshes[sid]
            segs = assembly.interface_side_segments(merged, sid)
            other_cols = offsets[other] + disc.meshes[other].boundary_nodes[
                ifc.side_of(other)]
            s_tr, p_tr = assembly.edge_side_triples(
                mesh, grads[sid], segs, coeffs.alpha_e,
                SIDE_NORMALS[ifc.side_of(sid)], 2.0, disc.delta, coeffs.h_ij,
                offsets[sid] + np.arange(mesh.n_vertices), other_cols,
            )
            if include_consistency:
                push(s_tr)
            push(p_tr)

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    ).tocsr()
    load = np.concatenate([assembly.load_values(disc.meshes[sid], disc.f)
                           for sid in sorted(disc.meshes)])
    return MonolithicSystem(ndof=ndof, offsets=offsets, A=A, load=load)


def fold_local_systems(disc) -> sp.csr_matrix:
    """Scatter-add every local A' with ghost dofs folded onto the partner
    natives; must reproduce the monolithic matrix entrywise."""
    offsets = disc.native_offsets
    ndof = disc.n_native_total
    parts = []
    for sid in sorted(disc.systems):
        space = disc.spaces[sid]
        to_global = np.empty(space.ndof, dtype=np.int64)
        to_global[:space.n_native] = offsets[sid] + np.arange(space.n_native)
        for ifc in space.ifaces:
            other = ifc.other(sid)
            donors = disc.spaces[other].native_trace[ifc.index]
            to_global[space.ghost_dofs[ifc.index]] = offsets[other] + donors
        A = disc.systems[sid].A.tocoo()
        parts.append((to_global[A.row], to_global[A.col], A.data))
    return sp.coo_matrix(
        (np.concatenate([p[2] for p in parts]),
         (np.concatenate([p[0] for p in parts]),
          np.concatenate([p[1] for p in parts]))),
        shape=(ndof, ndof),
    ).tocsr()


def direct_solve(mono: MonolithicSystem) -> np.ndarray:
    """Reference solution by sparse direct factorization."""
    try:
        lu = spla.splu(mono.A.tocsc())
    except RuntimeError as exc:
        raise ConfigurationError(f"monolithic factorization failed: {exc}") from exc
    u = lu.solve(mono.load)
    res = np.linalg.norm(mono.A @ u - mono.load)
    ref = np.linalg.norm(mono.load)
    if ref > 0 and res > 1e-12 * ref * max(1.0, np.abs(mono.A).max()):
        raise ConfigurationError(f"direct solve residual too large: {res:.3e}")
    return u


def dense_spectrum(ops, guard: int = 2000) -> np.ndarray:
    """Eigenvalues of the preconditioned dual operator, via dense assembly of
    both implicit operators (generalized problem F lambda = theta M lambda)."""
    dim = ops.n_lm
    if dim > guard:
        raise ConfigurationError(
            f"constraint space too large for dense analysis ({dim} > {guard})"
        )
    F = dense_operator(ops.apply_F, dim)
    Minv = dense_operator(ops.apply_preconditioner, dim)
    L = np.linalg.cholesky(Minv)
    return np.sort(la.eigvalsh(L.T @ F @ L))


def generalized_eig_check(disc, guard: int = 3000):
    """Extreme generalized eigenvalues of the full DG form against the
    norm-inducing form (volume + penalty)."""
    mono_a = assemble_monolithic(disc, include_consistency=True)
    if mono_a.ndof > guard:
        raise ConfigurationError(
            f"monolithic space too large for dense analysis ({mono_a.ndof} > {guard})"
        )
    mono_d = assemble_monolithic(disc, include_consistency=False)
    vals = la.eigh(mono_a.A.toarray(), mono_d.A.toarray(), eigvals_only=True)
    return float(vals[0]), float(vals[-1])


def dump_eigenvalues(values, stream) -> None:
    """CSV eigenvalue list: index,value."""
    stream.write("index,value\n")
    for k, v in enumerate(values):
        stream.write(f"{k},{v:.17g}\n")
