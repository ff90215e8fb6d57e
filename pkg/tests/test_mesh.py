import itertools

import numpy as np
import pytest

from kryrom.mesh import MAX_LEVEL, MeshError, build_mesh, read_mesh_text, write_mesh_text


@pytest.mark.parametrize("dim, level, nv, nc, nb", [
    (2, 0, 4, 2, 4),
    (2, 1, 9, 8, 8),
    (2, 3, 81, 128, 32),
    (3, 1, 27, 48, 26),
])
def test_counts(dim, level, nv, nc, nb):
    mesh = build_mesh(dim, level)
    assert (mesh.n_vertices, mesh.n_cells) == (nv, nc)
    assert mesh.boundary_mask.sum() == nb


@pytest.mark.parametrize("dim, level", [(2, 0), (2, 2), (3, 0), (3, 2)])
def test_volumes_tile_the_domain(dim, level):
    mesh = build_mesh(dim, level)
    vols = mesh.signed_volumes()
    assert np.all(vols > 0)
    assert vols.sum() == pytest.approx(1.0, abs=1e-14)
    expected = 2.0 ** (-dim * level) / (2 if dim == 2 else 6)
    assert np.allclose(vols, expected, rtol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_h_is_max_diameter(dim):
    mesh = build_mesh(dim, 2)
    assert mesh.cell_diameters().max() == pytest.approx(mesh.h, rel=1e-14)
    assert mesh.spacing == 0.25


def test_vertex_order_is_x_fastest():
    mesh = build_mesh(2, 1)
    assert np.array_equal(mesh.vertices[:3], [[0, 0], [0.5, 0], [1, 0]])
    assert np.array_equal(mesh.vertices[3], [0, 0.5])


def test_conforming_faces_3d():
    # every interior face is shared by exactly two tets, boundary faces by one
    mesh = build_mesh(3, 2)
    faces = np.sort(np.concatenate([mesh.cells[:, list(c)] for c in itertools.combinations(range(4), 3)]), axis=1)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    n_boundary_faces = 6 * 2 * 4**2
    assert (counts == 1).sum() == n_boundary_faces


@pytest.mark.parametrize("dim, level", [(1, 2), (4, 1), (2, -1), (2, 1.5), (2, MAX_LEVEL[2] + 1), (3, MAX_LEVEL[3] + 1)])
def test_rejects_bad_input(dim, level):
    with pytest.raises(MeshError):
        build_mesh(dim, level)


def test_arrays_are_read_only():
    mesh = build_mesh(2, 1)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 1.0


def test_text_round_trip(tmp_path):
    mesh = build_mesh(3, 1)
    path = tmp_path / "mesh.txt"
    write_mesh_text(mesh, path)
    vertices, cells = read_mesh_text(path)
    assert np.array_equal(vertices, mesh.vertices)
    assert np.array_equal(cells, mesh.cells)
    assert path.read_text().splitlines()[0] == "3 27 48"
