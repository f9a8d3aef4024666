import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imexsolid.elements import face_points, tensor_basis, volume_rule
from imexsolid.mesh import (
    COOK_CORNERS,
    ConfigError,
    Facet,
    Geometry,
    Tag,
    element_geometry,
    facet_area_and_normal,
    facet_quadrature,
    generate_mesh,
    taylor_hood_dofmap,
)


class TestReferenceElements:
    @pytest.mark.parametrize("order", [1, 2])
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_partition_of_unity(self, order, dim):
        rng = np.random.default_rng(order + 10 * dim)
        pts = rng.uniform(-1, 1, (50, dim))
        N, dN = tensor_basis(order, pts)
        np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-12)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_q2_interpolates_quadratics(self, dim):
        # nodes at -1, 0, 1 along each axis
        from imexsolid.elements import local_multi_indices

        nodes = np.array([[(-1.0, 0.0, 1.0)[i] for i in mi] for mi in local_multi_indices(2, dim)])
        f = lambda x: 1 + x[:, 0] ** 2 - 0.5 * x[:, 0] * x[:, -1] + x[:, -1]  # noqa: E731
        pts = np.random.default_rng(0).uniform(-1, 1, (20, dim))
        N, _ = tensor_basis(2, pts)
        np.testing.assert_allclose(N @ f(nodes), f(pts), atol=1e-12)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_volume_rule_exact_for_degree5(self, dim):
        pts, w = volume_rule(dim)
        assert w.sum() == pytest.approx(2.0**dim)
        # x^4 y^2 (z^0) integrates to (2/5)(2/3)(2)^(dim-2) on [-1,1]^dim
        vals = pts[:, 0] ** 4 * (pts[:, 1] ** 2 if dim > 1 else 1.0)
        expect = 2 / 5 * (2 / 3 if dim > 1 else 1.0) * 2.0 ** max(dim - 2, 0)
        assert vals @ w == pytest.approx(expect)

    def test_face_points(self):
        p = face_points(2, 3, np.array([[0.25]]))
        np.testing.assert_array_equal(p, [[0.25, 1.0]])


class TestGenerateMesh:
    def test_unit_square_2x2(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (2, 2))
        assert (m.n_elements, m.n_nodes, m.n_vertices) == (4, 25, 9)
        assert m.h_min == pytest.approx(0.5)

    def test_unit_square_1x1(self):
        m = generate_mesh("UnitSquare", (1, 1))
        assert m.n_elements == 1 and m.h_min == pytest.approx(1.0)

    def test_column_2x2x12(self):
        m = generate_mesh(Geometry.COLUMN, (2, 2, 12))
        assert m.n_elements == 48
        assert m.h_min == pytest.approx(1.0)
        lo, hi = m.nodes.min(axis=0), m.nodes.max(axis=0)
        np.testing.assert_allclose(lo, [-1, -1, 0])
        np.testing.assert_allclose(hi, [1, 1, 12])

    @pytest.mark.parametrize("counts", [(0, 2), (2, -1), (2,), (1, 1, 1)])
    def test_bad_counts(self, counts):
        with pytest.raises(ConfigError):
            generate_mesh(Geometry.UNIT_SQUARE, counts)

    def test_unit_square_tags(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (3, 2), loaded_top=True)
        assert len(m.facets_with(Tag.FIXED)) == 3
        assert len(m.facets_with(Tag.TRACTION)) == 3
        assert len(m.facets_with(Tag.FREE)) == 4
        m2 = generate_mesh(Geometry.UNIT_SQUARE, (3, 2))
        assert len(m2.facets_with(Tag.TRACTION)) == 0
        assert len(m2.facets_with(Tag.FREE)) == 7

    def test_cook_geometry(self):
        m = generate_mesh(Geometry.COOKS_MEMBRANE, (4, 4))
        _, JxW, _, _ = element_geometry(m)
        x, y = COOK_CORNERS[:, 0], COOK_CORNERS[:, 1]
        shoelace = 0.5 * abs(x @ np.roll(y, -1) - y @ np.roll(x, -1))
        assert JxW.sum() == pytest.approx(shoelace, rel=1e-12)
        assert shoelace == pytest.approx(0.5 * (44.0 + 16.0) * 48.0)
        fixed = np.concatenate([facet_quadrature(m, [f]).points[0] for f in m.facets_with(Tag.FIXED)])
        np.testing.assert_allclose(fixed[:, 0], 0.0, atol=1e-12)
        loaded = np.concatenate([facet_quadrature(m, [f]).points[0] for f in m.facets_with(Tag.TRACTION)])
        np.testing.assert_allclose(loaded[:, 0], 48.0)
        assert loaded[:, 1].min() >= 44.0 and loaded[:, 1].max() <= 60.0

    def test_q2_nodes_unique(self):
        m = generate_mesh(Geometry.COLUMN, (1, 2, 3))
        assert len(np.unique(np.round(m.nodes, 12), axis=0)) == m.n_nodes
        assert m.n_nodes == 3 * 5 * 7

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6))
    def test_node_counts_property(self, nx, ny):
        m = generate_mesh(Geometry.UNIT_SQUARE, (nx, ny))
        assert m.n_nodes == (2 * nx + 1) * (2 * ny + 1)
        assert m.n_vertices == (nx + 1) * (ny + 1)
        _, JxW, _, _ = element_geometry(m)
        assert JxW.sum() == pytest.approx(1.0, rel=1e-12)
        assert m.h_min == pytest.approx(1.0 / max(nx, ny))


class TestDofMap:
    def test_unit_square_2x2(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (2, 2))
        dm = taylor_hood_dofmap(m)
        assert dm.n_velocity_dofs == 50 and dm.n_pressure_dofs == 9
        assert len(dm.constrained_dofs) == 10
        nodes = dm.constrained_dofs % m.n_nodes
        np.testing.assert_allclose(m.nodes[nodes, 1], 0.0)
        np.testing.assert_array_equal(dm.constrained_values, 0.0)

    def test_no_fixed_facets(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (2, 2))
        dm = taylor_hood_dofmap(m, {})
        assert dm.constrained_dofs.size == 0
        assert dm.free_mask.all()

    def test_column_1x1x6(self):
        dm = taylor_hood_dofmap(generate_mesh(Geometry.COLUMN, (1, 1, 6)))
        assert dm.n_velocity_dofs == 3 * (3 * 3 * 13)
        assert len(dm.constrained_dofs) == 3 * 9

    def test_unknown_tag(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (1, 1))
        with pytest.raises(ConfigError):
            taylor_hood_dofmap(m, {"Glued": 0.0})

    def test_prescribed_value(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (1, 1))
        dm = taylor_hood_dofmap(m, {Tag.FIXED: [1.0, -2.0]})
        comp = dm.constrained_dofs // m.n_nodes
        np.testing.assert_array_equal(dm.constrained_values, np.where(comp == 0, 1.0, -2.0))

    def test_nodal_roundtrip(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (2, 1))
        dm = taylor_hood_dofmap(m)
        v = np.arange(dm.n_velocity_dofs, dtype=float)
        np.testing.assert_array_equal(dm.flatten(dm.nodal(v)), v)
        assert dm.nodal(v)[3, 1] == m.n_nodes + 3  # component-major numbering


class TestFacets:
    def test_top_of_unit_element(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (1, 1))
        area, n = facet_area_and_normal(m, Facet(0, 3, Tag.FREE))
        assert area == pytest.approx(1.0)
        np.testing.assert_allclose(n, [0.0, 1.0], atol=1e-14)

    @pytest.mark.parametrize("face,normal", [(0, [-1, 0]), (1, [1, 0]), (2, [0, -1])])
    def test_outward_normals(self, face, normal):
        m = generate_mesh(Geometry.UNIT_SQUARE, (1, 1))
        _, n = facet_area_and_normal(m, Facet(0, face, Tag.FREE))
        np.testing.assert_allclose(n, normal, atol=1e-14)

    def test_interior_facet_rejected(self):
        m = generate_mesh(Geometry.UNIT_SQUARE, (2, 1))
        with pytest.raises(ValueError):
            facet_area_and_normal(m, Facet(0, 1, Tag.FREE))

    def test_cook_loaded_edge_length(self):
        m = generate_mesh(Geometry.COOKS_MEMBRANE, (3, 5))
        fq = facet_quadrature(m, m.facets_with(Tag.TRACTION))
        assert fq.weights.sum() == pytest.approx(16.0)
        np.testing.assert_allclose(fq.normals, np.broadcast_to([1.0, 0.0], fq.normals.shape), atol=1e-14)

    def test_column_top_area(self):
        m = generate_mesh(Geometry.COLUMN, (2, 2, 3))
        fq = facet_quadrature(m, m.facets_with(Tag.FIXED))
        assert fq.weights.sum() == pytest.approx(4.0)
        np.testing.assert_allclose(fq.normals[..., 2], -1.0)
