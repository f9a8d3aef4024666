"""Structured quadrilateral / hexahedral meshes with Q2-Q1 (Taylor-Hood) numbering.

Q2 nodes live on a lexicographic grid of ``2 n_k + 1`` points per axis (first
axis fastest).  Q1 vertices are the even-indexed subset and get their own
compact numbering for the pressure space.  The reference-to-physical map of
each element is multilinear in its corner vertices, which is exact for every
supported geometry.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .elements import face_points, local_multi_indices, tensor_basis, volume_rule


class ConfigError(ValueError):
    pass


class Geometry(str, enum.Enum):
    UNIT_SQUARE = "UnitSquare"
    COOKS_MEMBRANE = "CooksMembrane"
    COLUMN = "Column"


class Tag(str, enum.Enum):
    FIXED = "Fixed"
    TRACTION = "TractionLoaded"
    FREE = "Free"


# Cook's membrane corners (cm), counter-clockwise from the clamped bottom-left.
COOK_CORNERS = np.array([[0.0, 0.0], [48.0, 44.0], [48.0, 60.0], [0.0, 44.0]])


@dataclass(frozen=True)
class Facet:
    element: int
    face: int  # 2 * axis + side, side 0 at the reference coordinate -1
    tag: Tag


@dataclass
class MixedMesh:
    dim: int
    shape: tuple[int, ...]
    nodes: np.ndarray  # (n_q2, dim) reference coordinates of every Q2 node
    elements_q2: np.ndarray  # (n_el, 3**dim) Q2 node ids
    elements_q1: np.ndarray  # (n_el, 2**dim) pressure (Q1) ids
    vertex_nodes: np.ndarray  # (n_q1,) Q2 node id of every Q1 vertex
    facets: list[Facet]
    h_min: float
    geometry: Geometry | None = None
    _boundary: set = field(default_factory=set, repr=False)

    @property
    def n_elements(self) -> int:
        return self.elements_q2.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertex_nodes.shape[0]

    @property
    def vertices(self) -> np.ndarray:
        return self.nodes[self.vertex_nodes]

    def corner_coords(self) -> np.ndarray:
        """(n_el, 2**dim, dim) corner coordinates in Q1 local order."""
        return self.vertices[self.elements_q1]

    def facets_with(self, tag: Tag) -> list[Facet]:
        return [f for f in self.facets if f.tag == Tag(tag)]

    def is_boundary(self, element: int, face: int) -> bool:
        return (element, face) in self._boundary


def _grid_ids(counts: Sequence[int]) -> np.ndarray:
    """Integer grid of ids with the first axis fastest; indexed [i, j(, k)]."""
    n = int(np.prod(counts))
    return np.arange(n).reshape(tuple(reversed(counts))).transpose()


def _structured(
    shape: tuple[int, ...],
    mapping,
    face_tags: Mapping[int, Tag],
    geometry: Geometry | None,
) -> MixedMesh:
    dim = len(shape)
    q2_counts = [2 * n + 1 for n in shape]
    q1_counts = [n + 1 for n in shape]
    q2_ids = _grid_ids(q2_counts)
    q1_ids = _grid_ids(q1_counts)

    axes = [np.linspace(0.0, 1.0, c) for c in q2_counts]
    param = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)  # [i, j(, k), dim]
    flat_param = np.empty((q2_ids.size, dim))
    flat_param[q2_ids.ravel()] = param.reshape(-1, dim)
    nodes = mapping(flat_param)

    vertex_nodes = np.empty(q1_ids.size, dtype=np.int64)
    vertex_nodes[q1_ids.ravel()] = q2_ids[tuple(slice(None, None, 2) for _ in range(dim))].ravel()

    elem_index = np.stack(np.meshgrid(*[np.arange(n) for n in shape], indexing="ij"), axis=-1)
    elem_index = elem_index.reshape(-1, dim)
    # element numbering with the first axis fastest
    order = np.lexsort(tuple(elem_index[:, k] for k in range(dim)))
    elem_index = elem_index[order]

    loc2 = np.array(local_multi_indices(2, dim))
    loc1 = np.array(local_multi_indices(1, dim))
    q2_idx = 2 * elem_index[:, None, :] + loc2[None]
    q1_idx = elem_index[:, None, :] + loc1[None]
    elements_q2 = q2_ids[tuple(q2_idx[..., k] for k in range(dim))]
    elements_q1 = q1_ids[tuple(q1_idx[..., k] for k in range(dim))]

    facets: list[Facet] = []
    boundary = set()
    for e, idx in enumerate(elem_index):
        for axis in range(dim):
            for side in (0, 1):
                on_bdry = idx[axis] == 0 if side == 0 else idx[axis] == shape[axis] - 1
                if on_bdry:
                    face = 2 * axis + side
                    facets.append(Facet(e, face, face_tags.get(face, Tag.FREE)))
                    boundary.add((e, face))

    mesh = MixedMesh(
        dim=dim,
        shape=tuple(shape),
        nodes=nodes,
        elements_q2=elements_q2,
        elements_q1=elements_q1,
        vertex_nodes=vertex_nodes,
        facets=facets,
        h_min=0.0,
        geometry=geometry,
        _boundary=boundary,
    )
    mesh.h_min = _min_edge_length(mesh)
    return mesh


def _min_edge_length(mesh: MixedMesh) -> float:
    corners = mesh.corner_coords()
    dim = mesh.dim
    h = np.inf
    for a in range(2**dim):
        for axis in range(dim):
            if not (a >> axis) & 1:
                b = a | (1 << axis)
                lengths = np.linalg.norm(corners[:, b] - corners[:, a], axis=-1)
                h = min(h, float(lengths.min()))
    return h


def _check_counts(refinement, dim):
    counts = tuple(int(n) for n in refinement)
    if len(counts) != dim:
        raise ConfigError(f"expected {dim} element counts, got {refinement!r}")
    if any(n < 1 for n in counts):
        raise ConfigError(f"element counts must be >= 1, got {refinement!r}")
    return counts


def generate_mesh(geometry, refinement, loaded_top: bool = False) -> MixedMesh:
    """Build one of the benchmark meshes.

    ``refinement`` gives the number of elements along each axis.  For the unit
    square, ``loaded_top`` tags the top edge as traction-loaded instead of free.
    """
    geometry = Geometry(geometry)
    if geometry is Geometry.UNIT_SQUARE:
        counts = _check_counts(refinement, 2)
        tags = {2: Tag.FIXED}
        if loaded_top:
            tags[3] = Tag.TRACTION
        return _structured(counts, lambda s: s.copy(), tags, geometry)

    if geometry is Geometry.COOKS_MEMBRANE:
        counts = _check_counts(refinement, 2)
        c = COOK_CORNERS

        def cook(s):
            u, v = s[:, :1], s[:, 1:]
            return (1 - u) * (1 - v) * c[0] + u * (1 - v) * c[1] + u * v * c[2] + (1 - u) * v * c[3]

        return _structured(counts, cook, {0: Tag.FIXED, 1: Tag.TRACTION}, geometry)

    counts = _check_counts(refinement, 3)

    def column(s):
        return np.column_stack([2 * s[:, 0] - 1, 2 * s[:, 1] - 1, 12 * s[:, 2]])

    return _structured(counts, column, {4: Tag.FIXED}, geometry)


@dataclass
class DofMap:
    dim: int
    n_nodes: int
    n_velocity_dofs: int
    n_pressure_dofs: int
    velocity_gather: np.ndarray  # (n_el, dim, 3**dim): dof = comp * n_nodes + node
    pressure_gather: np.ndarray  # (n_el, 2**dim)
    constrained_dofs: np.ndarray
    constrained_values: np.ndarray

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_velocity_dofs, dtype=bool)
        mask[self.constrained_dofs] = False
        return mask

    def nodal(self, vec: np.ndarray) -> np.ndarray:
        """View a velocity-space vector as (n_nodes, dim)."""
        return vec.reshape(self.dim, self.n_nodes).T

    def flatten(self, nodal: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.asarray(nodal, dtype=float).T).ravel()


def face_local_nodes(dim: int, order: int, face: int) -> np.ndarray:
    """Local node numbers lying on a reference face."""
    axis, side = divmod(face, 2)
    target = 0 if side == 0 else order
    idx = local_multi_indices(order, dim)
    return np.array([a for a, mi in enumerate(idx) if mi[axis] == target])


def taylor_hood_dofmap(mesh: MixedMesh, fixed_tag_values: Mapping | None = None) -> DofMap:
    """Velocity (vector Q2) and pressure (Q1) numbering with Dirichlet data.

    ``fixed_tag_values`` maps facet tags to the prescribed velocity vector on
    them; by default every ``Fixed`` facet is clamped to zero.
    """
    dim, n = mesh.dim, mesh.n_nodes
    if fixed_tag_values is None:
        fixed_tag_values = {Tag.FIXED: np.zeros(dim)}
    prescribed: dict[int, float] = {}
    for tag, value in fixed_tag_values.items():
        try:
            tag = Tag(tag)
        except ValueError:
            raise ConfigError(f"unknown facet tag {tag!r}") from None
        value = np.broadcast_to(np.asarray(value, dtype=float), (dim,))
        for f in mesh.facets_with(tag):
            for a in face_local_nodes(dim, 2, f.face):
                node = mesh.elements_q2[f.element, a]
                for c in range(dim):
                    prescribed[c * n + node] = value[c]
    dofs = np.array(sorted(prescribed), dtype=np.int64)
    values = np.array([prescribed[i] for i in dofs], dtype=float)
    comps = np.arange(dim)[None, :, None] * n
    return DofMap(
        dim=dim,
        n_nodes=n,
        n_velocity_dofs=dim * n,
        n_pressure_dofs=mesh.n_vertices,
        velocity_gather=mesh.elements_q2[:, None, :] + comps,
        pressure_gather=mesh.elements_q1.copy(),
        constrained_dofs=dofs,
        constrained_values=values,
    )


@dataclass
class FacetQuadrature:
    """Quadrature data on a set of boundary facets."""

    elements: np.ndarray  # (nf,)
    points: np.ndarray  # (nf, nq, dim) physical coordinates
    weights: np.ndarray  # (nf, nq) weight times surface measure
    normals: np.ndarray  # (nf, nq, dim) unit outward reference normals
    values_q2: np.ndarray  # (nf, nq, 3**dim) Q2 basis at the points
    values_q1: np.ndarray  # (nf, nq, 2**dim)


def facet_quadrature(mesh: MixedMesh, facets: Sequence[Facet], n: int = 3) -> FacetQuadrature:
    dim = mesh.dim
    lower, wl = volume_rule(dim - 1, n)
    corners = mesh.corner_coords()
    nf = len(facets)
    nq = len(wl)
    pts = np.zeros((nf, nq, dim))
    wts = np.zeros((nf, nq))
    nrm = np.zeros((nf, nq, dim))
    v2 = np.zeros((nf, nq, 3**dim))
    v1 = np.zeros((nf, nq, 2**dim))
    for i, f in enumerate(facets):
        xi = face_points(dim, f.face, lower)
        N1, dN1 = tensor_basis(1, xi)
        N2, _ = tensor_basis(2, xi)
        X = corners[f.element]
        Jac = np.einsum("ak,qam->qkm", X, dN1)  # dx_k / dxi_m
        axis, side = divmod(f.face, 2)
        # outward area vector = +-cofactor column of the face-normal axis
        cof = np.linalg.det(Jac)[:, None, None] * np.linalg.inv(Jac).transpose(0, 2, 1)
        area_vec = (1.0 if side == 1 else -1.0) * cof[:, :, axis]
        dA = np.linalg.norm(area_vec, axis=-1)
        pts[i] = N1 @ X
        wts[i] = wl * dA
        nrm[i] = area_vec / dA[:, None]
        v2[i], v1[i] = N2, N1
    return FacetQuadrature(
        elements=np.array([f.element for f in facets], dtype=np.int64),
        points=pts,
        weights=wts,
        normals=nrm,
        values_q2=v2,
        values_q1=v1,
    )


def facet_area_and_normal(mesh: MixedMesh, facet: Facet) -> tuple[float, np.ndarray]:
    """Reference measure and unit outward normal (at the facet centre)."""
    if not mesh.is_boundary(facet.element, facet.face):
        raise ValueError(f"facet {facet} is not on the boundary")
    fq = facet_quadrature(mesh, [facet])
    centre = fq.normals[0].mean(axis=0)
    return float(fq.weights[0].sum()), centre / np.linalg.norm(centre)


def element_geometry(mesh: MixedMesh, n: int = 3):
    """Volume quadrature on every element.

    Returns ``(points, JxW, inv_jac, detJ)`` with shapes (n_el, nq, dim),
    (n_el, nq), (n_el, nq, dim, dim) and (n_el, nq).  ``inv_jac[e, q]`` maps
    reference gradients to physical ones: grad_x = grad_xi @ inv_jac.
    """
    xi, w = volume_rule(mesh.dim, n)
    N1, dN1 = tensor_basis(1, xi)
    corners = mesh.corner_coords()
    Jac = np.einsum("eak,qam->eqkm", corners, dN1)
    detJ = np.linalg.det(Jac)
    if np.any(detJ <= 0):
        raise ConfigError("mesh has a non-positive element Jacobian")
    inv = np.linalg.inv(Jac)
    pts = np.einsum("qa,eak->eqk", N1, corners)
    return pts, detJ * w[None, :], inv, detJ
