"""End-to-end discretization pipeline: partition -> meshes -> interfaces ->
coefficients -> local systems -> dof spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assembly, coeffield, dofspace, geometry
from .errors import ConfigurationError


@dataclass(frozen=True)
class Discretization:
    """Everything the solvers need, immutable after construction."""

    partition: geometry.DomainPartition
    meshes: dict                  # sub_id -> SubdomainMesh
    interfaces: list
    merged: dict                  # iface.index -> MergedEdgeMesh
    field: coeffield.CoefficientField
    layer_stats: dict             # sub_id -> LayerStats
    iface_coeffs: dict            # iface.index -> InterfaceCoefficients
    delta: float
    f: object                     # source callable (None: f = 1)
    spaces: dict                  # sub_id -> LocalSpace
    systems: dict                 # sub_id -> LocalSystem

    @property
    def native_offsets(self) -> dict:
        off, pos = {}, 0
        for sid in sorted(self.meshes):
            off[sid] = pos
            pos += self.meshes[sid].n_vertices
        return off

    @property
    def n_native_total(self) -> int:
        return sum(m.n_vertices for m in self.meshes.values())

    def max_ratio(self) -> float:
        """max over subdomains of H / h_i."""
        return max(m.n for m in self.meshes.values())


def resolve_side_counts(partition, n) -> dict:
    """Per-subdomain segment counts from an int, list, or dict."""
    subs = partition.subdomains
    if isinstance(n, (int, np.integer)):
        return {s.id: int(n) for s in subs}
    if isinstance(n, dict):
        counts = {s.id: int(n[s.id]) for s in subs}
    else:
        n = list(n)
        if len(n) != len(subs):
            raise ConfigurationError(
                f"need one segment count per subdomain ({len(subs)}), got {len(n)}"
            )
        counts = {s.id: int(v) for s, v in zip(subs, n)}
    return counts


def discretize(nx: int, ny: int, n, field: coeffield.CoefficientField,
               delta: float = 5.0, f=None, include_consistency: bool = True,
               include_outer: bool = True) -> Discretization:
    """Build the full composite FE/DG discretization of the unit square."""
    if delta <= 0.0:
        raise ConfigurationError(f"penalty parameter must be positive, got {delta}")
    partition = geometry.build_partition(nx, ny)
    counts = resolve_side_counts(partition, n)
    meshes = {s.id: geometry.triangulate_subdomain(s, counts[s.id])
              for s in partition.subdomains}
    interfaces = geometry.discover_interfaces(partition, meshes)
    merged = {ifc.index: geometry.merge_edge_meshes(ifc, meshes) for ifc in interfaces}
    layer_stats = {sid: coeffield.boundary_layer_stats(m, field)
                   for sid, m in meshes.items()}
    iface_coeffs = {ifc.index: coeffield.harmonic_averages(ifc, merged[ifc.index],
                                                           field, meshes)
                    for ifc in interfaces}
    spaces = {s.id: dofspace.build_local_space(s, meshes, interfaces)
              for s in partition.subdomains}
    systems = {
        s.id: assembly.assemble_local(
            s, spaces[s.id], meshes, merged, iface_coeffs, field,
            partition.outer_sides(s), delta, f=f,
            include_consistency=include_consistency, include_outer=include_outer,
        )
        for s in partition.subdomains
    }
    return Discretization(
        partition=partition, meshes=meshes, interfaces=interfaces, merged=merged,
        field=field, layer_stats=layer_stats, iface_coeffs=iface_coeffs,
        delta=delta, f=f, spaces=spaces, systems=systems,
    )


@dataclass(frozen=True)
class SpaceSet:
    """Global dual/primal wiring shared by the solver operators."""

    primal: dofspace.GlobalPrimalMap
    layout: dofspace.DeltaLayout
    jump: dofspace.JumpMatrix
    scaling: np.ndarray


def build_spaces(disc: Discretization) -> SpaceSet:
    primal = dofspace.classify_primal_dual(disc.spaces)
    layout = dofspace.build_delta_layout(disc.spaces)
    jump = dofspace.build_jump_matrix(disc.spaces, disc.interfaces, layout)
    scaling = dofspace.build_scaling(disc.spaces, disc.layer_stats, layout)
    return SpaceSet(primal=primal, layout=layout, jump=jump, scaling=scaling)
