import numpy as np
import pytest

from fisherdg.mesh import MeshSpec, build_mesh, locate_cell


def test_mesh_spec_validation():
    with pytest.raises(ValueError):
        MeshSpec(3, 4)
    with pytest.raises(ValueError):
        MeshSpec(1, 0)


def test_periodic_neighbors_1d():
    mesh = build_mesh(MeshSpec(1, 4))
    assert mesh.neighbor(0, 0, 0) == 3
    assert mesh.neighbor(0, 0, 1) == 1
    assert mesh.neighbor(3, 0, 1) == 0


def test_interface_count():
    assert build_mesh(MeshSpec(1, 4)).n_interfaces == 4
    assert build_mesh(MeshSpec(2, 2)).n_interfaces == 8
    assert len(build_mesh(MeshSpec(2, 2)).interfaces) == 8


def test_uniform_width():
    mesh = build_mesh(MeshSpec(1, 256))
    assert mesh.h == pytest.approx(1.0 / 256, abs=0)


def test_every_cell_has_2dim_faces_each_on_one_interface():
    mesh = build_mesh(MeshSpec(2, 3))
    seen = {}
    for iface in mesh.interfaces:
        # a face is identified by (cell, axis, side)
        for cell, side in ((iface.cell_minus, 1), (iface.cell_plus, 0)):
            key = (cell, iface.axis, side)
            assert key not in seen
            seen[key] = iface.index
    assert len(seen) == mesh.n_cells * 2 * mesh.dim


def test_interface_normals_are_signed_unit_axis_vectors():
    mesh = build_mesh(MeshSpec(2, 3))
    for iface in mesh.interfaces:
        normal = np.array(iface.normal)
        assert np.sum(np.abs(normal)) == 1.0
        assert abs(normal[iface.axis]) == 1.0


def test_cell_volumes_sum_to_one():
    for spec in (MeshSpec(1, 7), MeshSpec(2, 5)):
        mesh = build_mesh(spec)
        total = sum(mesh.cell_volume(c) for c in range(mesh.n_cells))
        assert abs(total - 1.0) <= 1e-14


def test_locate_cell_interior():
    mesh = build_mesh(MeshSpec(1, 4))
    cell, local = locate_cell(mesh, 0.3)
    assert cell == 1
    assert local[0] == pytest.approx(0.2, abs=1e-14)


def test_locate_cell_face_point_goes_to_owning_cell():
    mesh = build_mesh(MeshSpec(1, 4))
    cell, local = locate_cell(mesh, 0.25)
    assert cell == 1
    assert local[0] == 0.0


def test_locate_cell_2d():
    mesh = build_mesh(MeshSpec(2, 2))
    cell, local = locate_cell(mesh, (0.9, 0.1))
    assert tuple(mesh.cell_multi[cell]) == (1, 0)


def test_locate_cell_domain_end():
    mesh = build_mesh(MeshSpec(1, 4))
    cell, local = locate_cell(mesh, 1.0)
    assert cell == 3
    assert local[0] == pytest.approx(1.0, abs=0)


def test_locate_cell_rejects_outside():
    mesh = build_mesh(MeshSpec(1, 4))
    with pytest.raises(ValueError):
        locate_cell(mesh, 1.2)
    with pytest.raises(ValueError):
        locate_cell(mesh, -0.01)


def test_locate_roundtrip(rng):
    for spec in (MeshSpec(1, 13), MeshSpec(2, 6)):
        mesh = build_mesh(spec)
        for _ in range(50):
            x = rng.random(spec.dim)
            cell, local = locate_cell(mesh, x)
            back = mesh.cell_origin[cell] + mesh.h * local
            assert np.max(np.abs(back - x)) <= 1e-14
