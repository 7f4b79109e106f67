"""Degree-of-freedom bookkeeping for the augmented local spaces.

Each subdomain's space holds its native mesh vertices plus ghost copies of
every neighbour's interface trace (on the neighbour's grid).  Dofs split into
interior I and interface Gamma', and Gamma' further into primal corner dofs
(edge endpoints, native and ghost) and the remaining dual dofs.

Corner copies are identified per trace owner: the native endpoint value of
subdomain s and all ghost copies of s's trace at that corner share one global
primal id.  Copies owned by different subdomains stay distinct, which keeps
the continuous-at-corners space a superspace of the fully coupled one and
makes the dual-primal solve reproduce the broken DG solution exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .geometry import subdomain_interfaces


@dataclass(frozen=True)
class LocalSpace:
    """Dof numbering and index sets of one subdomain's augmented space.

    Natives come first in mesh lattice order, then one ghost block per
    interface in local side order (S, E, N, W), each ascending along the edge.
    """

    sub_id: int
    n_native: int
    ndof: int
    ifaces: tuple                 # EdgeInterface objects in local side order
    native_trace: dict            # iface.index -> (n_side+1,) native dof ids
    ghost_dofs: dict              # iface.index -> (n_other+1,) ghost dof ids
    I: np.ndarray                 # interior + outer-boundary natives off Gamma'
    Gamma: np.ndarray             # natives on Gamma plus all ghosts
    Pi: np.ndarray                # corner dofs (subset of Gamma)
    Delta: np.ndarray             # Gamma \ Pi
    primal_keys: tuple            # (ky, kx, owner_sub) per Pi entry
    delta_nbr: np.ndarray         # neighbouring subdomain id per Delta entry


def build_local_space(sub, meshes: dict, interfaces: list) -> LocalSpace:
    """Number W_i's dofs and classify them into I / Gamma' and Pi / Delta."""
    mesh = meshes[sub.id]
    mine = subdomain_interfaces(interfaces, sub.id)
    n_native = mesh.n_vertices

    native_trace = {}
    ghost_dofs = {}
    offset = n_native
    for ifc in mine:
        native_trace[ifc.index] = mesh.boundary_nodes[ifc.side_of(sub.id)]
        count = meshes[ifc.other(sub.id)].n + 1
        ghost_dofs[ifc.index] = np.arange(offset, offset + count)
        offset += count
    ndof = offset

    on_gamma = np.zeros(ndof, dtype=bool)
    for ifc in mine:
        on_gamma[native_trace[ifc.index]] = True
        on_gamma[ghost_dofs[ifc.index]] = True
    I = np.flatnonzero(~on_gamma[:n_native])
    Gamma = np.flatnonzero(on_gamma)

    corner_key = {}                          # dof -> (ky, kx, owner)
    for ifc in mine:
        other = ifc.other(sub.id)
        nat = native_trace[ifc.index]
        gho = ghost_dofs[ifc.index]
        for dof, (kx, ky) in ((nat[0], ifc.corner_lo), (nat[-1], ifc.corner_hi)):
            corner_key[int(dof)] = (ky, kx, sub.id)
        for dof, (kx, ky) in ((gho[0], ifc.corner_lo), (gho[-1], ifc.corner_hi)):
            corner_key[int(dof)] = (ky, kx, other)

    Pi = np.array(sorted(corner_key), dtype=np.int64)
    primal_keys = tuple(corner_key[int(d)] for d in Pi)

    is_pi = np.zeros(ndof, dtype=bool)
    is_pi[Pi] = True
    Delta = Gamma[~is_pi[Gamma]]

    nbr_of = np.full(ndof, -1, dtype=np.int64)
    for ifc in mine:
        other = ifc.other(sub.id)
        nbr_of[native_trace[ifc.index][1:-1]] = other
        nbr_of[ghost_dofs[ifc.index][1:-1]] = other
    delta_nbr = nbr_of[Delta]
    if np.any(delta_nbr < 0):
        raise ConfigurationError(
            f"subdomain {sub.id}: dual dof without an interface neighbour"
        )

    return LocalSpace(
        sub_id=sub.id, n_native=n_native, ndof=ndof, ifaces=tuple(mine),
        native_trace=native_trace, ghost_dofs=ghost_dofs,
        I=I, Gamma=Gamma, Pi=Pi, Delta=Delta,
        primal_keys=primal_keys, delta_nbr=delta_nbr,
    )


@dataclass(frozen=True)
class GlobalPrimalMap:
    """Merges all local copies of one (corner point, trace owner) class."""

    n_primal: int
    keys: tuple                   # sorted (ky, kx, owner) triples
    local_to_global: dict         # sub_id -> global id per local Pi entry


def classify_primal_dual(spaces: dict) -> GlobalPrimalMap:
    all_keys = sorted({k for s in spaces.values() for k in s.primal_keys})
    gid = {k: g for g, k in enumerate(all_keys)}
    local_to_global = {
        sid: np.array([gid[k] for k in s.primal_keys], dtype=np.int64)
        for sid, s in spaces.items()
    }
    return GlobalPrimalMap(n_primal=len(all_keys), keys=tuple(all_keys),
                           local_to_global=local_to_global)


@dataclass(frozen=True)
class DeltaLayout:
    """Concatenation of all subdomains' Delta dofs into one global vector."""

    n_delta: int
    offsets: dict                 # sub_id -> start of its Delta block
    gidx: dict                    # sub_id -> (ndof,) local dof -> global Delta index or -1

    def scatter(self, sub_id: int, local_dofs: np.ndarray) -> np.ndarray:
        out = self.gidx[sub_id][local_dofs]
        if np.any(out < 0):
            raise ConfigurationError("dof is not a dual dof")
        return out


def build_delta_layout(spaces: dict) -> DeltaLayout:
    offsets, gidx, pos = {}, {}, 0
    for sid in sorted(spaces):
        s = spaces[sid]
        offsets[sid] = pos
        m = np.full(s.ndof, -1, dtype=np.int64)
        m[s.Delta] = pos + np.arange(s.Delta.shape[0])
        gidx[sid] = m
        pos += s.Delta.shape[0]
    return DeltaLayout(n_delta=pos, offsets=offsets, gidx=gidx)


@dataclass(frozen=True)
class JumpMatrix:
    """Signed pairing of native trace dofs with their neighbour ghost copies."""

    B: sp.csr_matrix              # one +1 and one -1 per row, columns = Delta dofs
    n_rows: int
    layout: DeltaLayout

    def block(self, sub_id: int, n_local_delta: int) -> sp.csr_matrix:
        off = self.layout.offsets[sub_id]
        return self.B[:, off:off + n_local_delta]


def build_jump_matrix(spaces: dict, interfaces: list,
                      layout: DeltaLayout | None = None) -> JumpMatrix:
    """One constraint row per non-endpoint node of each side of each interface."""
    if layout is None:
        layout = build_delta_layout(spaces)
    rows, cols, vals = [], [], []
    row = 0
    for ifc in interfaces:
        for owner, holder in ((ifc.i, ifc.j), (ifc.j, ifc.i)):
            nat = spaces[owner].native_trace[ifc.index][1:-1]
            gho = spaces[holder].ghost_dofs[ifc.index][1:-1]
            if nat.shape != gho.shape:
                raise ConfigurationError(
                    f"interface {ifc.index}: ghost block does not match its "
                    f"geometric partner ({gho.shape[0]} vs {nat.shape[0]} nodes)"
                )
            r = row + np.arange(nat.shape[0])
            rows.extend([r, r])
            cols.extend([layout.scatter(owner, nat), layout.scatter(holder, gho)])
            vals.extend([np.ones(nat.shape[0]), -np.ones(gho.shape[0])])
            row += nat.shape[0]
    if rows:
        B = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(row, layout.n_delta),
        ).tocsr()
    else:
        B = sp.csr_matrix((0, layout.n_delta))
    return JumpMatrix(B=B, n_rows=row, layout=layout)


def build_scaling(spaces: dict, layer_stats: dict,
                  layout: DeltaLayout | None = None) -> np.ndarray:
    """Diagonal of D_Delta: each dual dof of subdomain s at the interface with
    neighbour t gets the weight max-layer(t) / (max-layer(t) + max-layer(s))."""
    if layout is None:
        layout = build_delta_layout(spaces)
    D = np.zeros(layout.n_delta)
    for sid in sorted(spaces):
        s = spaces[sid]
        a_self = layer_stats[sid].alpha_hi
        a_nbr = np.array([layer_stats[int(t)].alpha_hi for t in s.delta_nbr])
        D[layout.gidx[sid][s.Delta]] = a_nbr / (a_nbr + a_self)
    return D


def apply_jump_projection(B: sp.csr_matrix, D: np.ndarray,
                          w: np.ndarray) -> np.ndarray:
    """P_Delta w with P_Delta built from the scaled jump operator."""
    return D * (B.T @ (B @ w))


def dump_primal_map(spaces: dict, primal: GlobalPrimalMap, stream) -> None:
    """Text triples `subdomain local_dof global_primal_id`."""
    for sid in sorted(spaces):
        for dof, gid in zip(spaces[sid].Pi, primal.local_to_global[sid]):
            stream.write(f"{sid} {dof} {gid}\n")
