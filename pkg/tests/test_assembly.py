import numpy as np
import pytest
import scipy.linalg

import romkit
from romkit.assembly import (DofMap, _local_stiffness, assemble_inner_product,
                             assemble_thermal_block_operators, build_dofmap,
                             build_mesh)
from romkit.errors import ConfigurationError


def _all_free_dofmap(mesh):
    """Pre-elimination dofmap (for kernel checks only)."""
    free = np.arange(mesh.n_nodes)
    return DofMap(free=free, n_free=free.size, full_to_free=free.copy())


def test_smallest_mesh_counts():
    mesh = build_mesh(1, 1)
    assert mesh.n_nodes == 4
    assert mesh.triangles.shape == (2, 3)


def test_n2_b2_counts():
    mesh = build_mesh(2, 2)
    assert mesh.n_nodes == 9
    assert mesh.triangles.shape == (8, 3)
    counts = np.bincount(mesh.triangle_block)[1:]
    assert list(counts) == [2, 2, 2, 2]


def test_block_must_divide_n():
    with pytest.raises(ConfigurationError, match="divide"):
        build_mesh(3, 2)


def test_triangles_counterclockwise():
    mesh = build_mesh(4, 2)
    for tri in mesh.triangles:
        x, y = mesh.nodes[tri, 0], mesh.nodes[tri, 1]
        signed = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
        assert signed > 0


def test_node_and_dof_counts():
    for n in (2, 4, 8):
        mesh = build_mesh(n, 1)
        dofmap = build_dofmap(mesh)
        assert mesh.n_nodes == (n + 1) ** 2
        assert dofmap.n_free == (n + 1) ** 2 - (n + 1)
        top = set(mesh.boundary_tags["top"])
        assert not top.intersection(dofmap.free)


def test_local_stiffness_right_triangle():
    for h in (1.0, 0.25):
        K = _local_stiffness(np.array([[0, 0], [h, 0], [0, h]], dtype=float))
        expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
        np.testing.assert_allclose(K, expected, atol=1e-14)


def test_base_load_n1():
    mesh = build_mesh(1, 1)
    dofmap = build_dofmap(mesh)
    _, (f,) = assemble_thermal_block_operators(mesh, dofmap)
    np.testing.assert_allclose(f, [0.5, 0.5])


def test_stiffness_exactly_symmetric():
    mesh = build_mesh(8, 2)
    dofmap = build_dofmap(mesh)
    A_list, _ = assemble_thermal_block_operators(mesh, dofmap)
    for A in A_list:
        diff = A - A.T
        assert diff.nnz == 0 or abs(diff).max() == 0.0


def test_constants_in_stiffness_kernel():
    mesh = build_mesh(4, 1)
    A_list, _ = assemble_thermal_block_operators(mesh, _all_free_dofmap(mesh))
    total = sum(A_list)
    row_sums = np.asarray(total.sum(axis=1)).ravel()
    assert np.abs(row_sums).max() <= 1e-14


def test_partition_identity():
    mesh1 = build_mesh(4, 1)
    mesh2 = build_mesh(4, 2)
    dof1 = build_dofmap(mesh1)
    dof2 = build_dofmap(mesh2)
    A_one, _ = assemble_thermal_block_operators(mesh1, dof1)
    A_blocks, _ = assemble_thermal_block_operators(mesh2, dof2)
    total = sum(A_blocks)
    diff = abs(total - A_one[0]).max()
    assert diff <= 1e-14 * abs(A_one[0]).max()


def test_inner_product_all_ones_is_laplacian():
    mesh = build_mesh(4, 2)
    dofmap = build_dofmap(mesh)
    A_list, _ = assemble_thermal_block_operators(mesh, dofmap)
    X = assemble_inner_product(A_list, np.ones(4))
    np.testing.assert_array_equal(X.toarray(), sum(A_list).toarray())


def test_inner_product_linearity():
    mesh = build_mesh(4, 2)
    dofmap = build_dofmap(mesh)
    A_list, _ = assemble_thermal_block_operators(mesh, dofmap)
    X1 = assemble_inner_product(A_list, np.ones(4))
    X2 = assemble_inner_product(A_list, 2.0 * np.ones(4))
    np.testing.assert_array_equal(X2.toarray(), 2.0 * X1.toarray())


def test_inner_product_rejects_nonpositive_theta():
    mesh = build_mesh(2, 1)
    dofmap = build_dofmap(mesh)
    A_list, _ = assemble_thermal_block_operators(mesh, dofmap)
    with pytest.raises(ConfigurationError, match="reference parameter"):
        assemble_inner_product(A_list, [0.0])


def test_inner_product_spd():
    mesh = build_mesh(8, 1)
    dofmap = build_dofmap(mesh)
    A_list, _ = assemble_thermal_block_operators(mesh, dofmap)
    X = assemble_inner_product(A_list, np.ones(1))
    eigenvalues = scipy.linalg.eigh(X.toarray(), eigvals_only=True)
    assert eigenvalues[0] > 0


def test_refinement_leaves_exact_output_unchanged():
    # u = 1 - y lies in the P1 space, so s_delta is mesh independent
    values = []
    for n in (2, 4, 8):
        problem = romkit.make_thermal_block(n, 1, 0.1, 10.0)
        values.append(romkit.solve_fom(problem, [1.0]).s)
    assert max(abs(v - values[0]) for v in values) <= 1e-10
