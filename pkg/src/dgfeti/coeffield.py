"""Piecewise-constant-per-triangle coefficient fields.

A field is a background value plus axis-aligned rectangular inclusions; the
value on a triangle is sampled at its centroid (strict-interior test, the
last listed inclusion wins on overlap).  All values are normalized to >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import EdgeInterface, MergedEdgeMesh, SubdomainMesh


@dataclass(frozen=True)
class Inclusion:
    """Axis-aligned rectangle with a coefficient value."""

    x0: float
    y0: float
    x1: float
    y1: float
    value: float


@dataclass(frozen=True)
class CoefficientField:
    background: float
    inclusions: tuple = ()

    def __post_init__(self):
        if self.background < 1.0:
            raise ConfigurationError(
                f"background coefficient must be >= 1, got {self.background}"
            )
        object.__setattr__(self, "inclusions", tuple(
            inc if isinstance(inc, Inclusion) else Inclusion(*inc)
            for inc in self.inclusions
        ))
        for inc in self.inclusions:
            if inc.value < 1.0:
                raise ConfigurationError(
                    f"inclusion value must be >= 1 after normalization, got {inc.value}"
                )
            if not (inc.x0 < inc.x1 and inc.y0 < inc.y1):
                raise ConfigurationError(f"empty inclusion rectangle {inc}")

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Field value at each point (strict interior, last inclusion wins)."""
        pts = np.atleast_2d(points)
        vals = np.full(pts.shape[0], float(self.background))
        for inc in self.inclusions:
            inside = ((pts[:, 0] > inc.x0) & (pts[:, 0] < inc.x1)
                      & (pts[:, 1] > inc.y0) & (pts[:, 1] < inc.y1))
            vals[inside] = inc.value
        return vals

    def triangle_values(self, mesh: SubdomainMesh) -> np.ndarray:
        """Per-triangle coefficients via the centroid rule."""
        return self.values_at(mesh.centroids())

    def triangle_value(self, coords: np.ndarray) -> float:
        """Coefficient of a single triangle given its (3, 2) vertex coords."""
        centroid = np.asarray(coords, dtype=float).mean(axis=0)
        return float(self.values_at(centroid[None, :])[0])


eval_triangle_alpha = CoefficientField.triangle_value


@dataclass(frozen=True)
class LayerStats:
    """Coefficient extrema over the boundary layer of one subdomain."""

    alpha_lo: float
    alpha_hi: float


def boundary_layer_triangles(mesh: SubdomainMesh) -> np.ndarray:
    """Mask of triangles with at least one vertex on the subdomain boundary."""
    n = mesh.n
    ii = np.arange(mesh.n_vertices)
    ix = ii % (n + 1)
    iy = ii // (n + 1)
    on_bnd = (ix == 0) | (ix == n) | (iy == 0) | (iy == n)
    return on_bnd[mesh.triangles].any(axis=1)


def boundary_layer_stats(mesh: SubdomainMesh, field: CoefficientField) -> LayerStats:
    vals = field.triangle_values(mesh)[boundary_layer_triangles(mesh)]
    return LayerStats(alpha_lo=float(vals.min()), alpha_hi=float(vals.max()))


@dataclass(frozen=True)
class InterfaceCoefficients:
    """Harmonic averages on the merged mesh of one interface."""

    iface_index: int
    alpha_i: np.ndarray           # (m,) i-side adjacent triangle values
    alpha_j: np.ndarray           # (m,) j-side values
    alpha_e: np.ndarray           # (m,) harmonic averages per segment
    h_ij: float


def harmonic_averages(iface: EdgeInterface, merged: MergedEdgeMesh,
                      field: CoefficientField, meshes: dict) -> InterfaceCoefficients:
    """Segment-wise 2ab/(a+b) coefficient averages and the interface h_ij."""
    ai = field.triangle_values(meshes[iface.i])[merged.tri_i]
    aj = field.triangle_values(meshes[iface.j])[merged.tri_j]
    alpha_e = 2.0 * ai * aj / (ai + aj)
    h_ij = 2.0 * iface.h_i * iface.h_j / (iface.h_i + iface.h_j)
    return InterfaceCoefficients(iface_index=iface.index, alpha_i=ai,
                                 alpha_j=aj, alpha_e=alpha_e, h_ij=h_ij)
