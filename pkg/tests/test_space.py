import math

import numpy as np
import pytest

from dgflow.errors import SpaceError
from dgflow.mesh import distort, generate_cartesian, refine_and_coarsen
from dgflow.space import (Field, QuadratureRule, build_space, cell_geometry,
                          evaluate, face_geometry, gauss_legendre,
                          gauss_lobatto, interpolate, mean_value,
                          subtract_mean, tensor_points, tensor_tabulate)


def test_gauss_lobatto_nodes():
    assert np.allclose(gauss_lobatto(1), [0.0, 1.0])
    assert np.allclose(gauss_lobatto(2), [0.0, 0.5, 1.0])
    nodes = gauss_lobatto(4)
    assert np.allclose(nodes, 1.0 - nodes[::-1])
    with pytest.raises(SpaceError):
        gauss_lobatto(0)


def test_gauss_legendre_integrates_degree_2n_minus_1():
    x, w = gauss_legendre(3)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, x ** 5) == pytest.approx(1.0 / 6.0)


def test_quadrature_rule():
    quad = QuadratureRule(3, 2)
    x, y = quad.points[:, 0], quad.points[:, 1]
    assert np.dot(quad.weights, x ** 5 * y ** 4) == pytest.approx(1.0 / 30.0)
    face = quad.face_points(3)
    assert np.allclose(face[:, 1], 1.0)
    sub = quad.face_points(0, subface=1)
    assert np.all(sub[:, 1] >= 0.5)
    assert quad.face_weights.sum() == pytest.approx(1.0)
    with pytest.raises(SpaceError):
        QuadratureRule(0, 2)


def test_tensor_points_first_coordinate_fastest():
    points = tensor_points([0.0, 1.0], 2)
    assert np.array_equal(points, [[0, 0], [1, 0], [0, 1], [1, 1]])


@pytest.mark.parametrize('degree', [1, 2, 3])
@pytest.mark.parametrize('dim', [2, 3])
def test_partition_of_unity(degree, dim):
    rng = np.random.default_rng(0)
    values, grads = tensor_tabulate(gauss_lobatto(degree),
                                    rng.uniform(size=(7, dim)))
    assert np.allclose(values.sum(axis=-1), 1.0)
    assert np.allclose(grads.sum(axis=-2), 0.0)


def test_basis_is_nodal():
    nodes = gauss_lobatto(3)
    values, _ = tensor_tabulate(nodes, tensor_points(nodes, 2))
    assert np.allclose(values, np.eye(16), atol=1e-13)


@pytest.mark.parametrize('bad', [(0, 1), (2, 0)])
def test_space_rejects_bad_arguments(square, bad):
    with pytest.raises(SpaceError):
        build_space(square, *bad)


def test_space_sizes(square):
    space = build_space(square, 2, 2)
    assert space.n_basis == 9
    assert space.n_dofs == 4 * 2 * 9
    assert space.local(space.zeros()).shape == (4, 2, 9)
    assert space.same_as(build_space(square, 2, 2))
    assert not space.same_as(build_space(square, 2, 1))


def test_field_rejects_wrong_length(square):
    space = build_space(square, 1, 1)
    with pytest.raises(SpaceError):
        Field(space, np.zeros(space.n_dofs + 1))
    field = Field(space)
    assert field.is_finite()
    field.values[3] = np.nan
    assert not field.is_finite()
    assert field.copy().values is not field.values


def test_interpolate_constant_vector():
    space = build_space(distort(generate_cartesian(2, 3), 0.05), 2, 2)
    field = interpolate(space, lambda x, t: np.array([1.5, -2.0]))
    local = field.local()
    assert np.allclose(local[:, 0], 1.5)
    assert np.allclose(local[:, 1], -2.0)


def test_interpolate_passes_time(square):
    space = build_space(square, 1, 1)
    field = interpolate(space, lambda x, t: t + 0.0 * x[..., 0], time=0.25)
    assert np.allclose(field.values, 0.25)


def test_mean_value(square):
    space = build_space(square, 2, 1)
    field = interpolate(space, lambda x, t: np.ones(x.shape[:-1]))
    field.local()[1] = 2.0
    assert mean_value(field) == pytest.approx(1.25)
    assert mean_value(subtract_mean(field)) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(SpaceError):
        mean_value(interpolate(build_space(square, 2, 2),
                               lambda x, t: x))


def test_mean_of_taylor_green_pressure():
    mesh = generate_cartesian(2, 4, box=[(0.0, 2.0 * math.pi)] * 2)
    space = build_space(mesh, 3, 1)
    field = interpolate(space, lambda x, t: -0.25 * (
        np.cos(2.0 * x[..., 0]) + np.cos(2.0 * x[..., 1])))
    assert abs(mean_value(field)) < 1e-3


def test_evaluate_polynomial():
    mesh = distort(generate_cartesian(2, 3), 0.05)
    space = build_space(mesh, 2, 1)
    field = interpolate(space, lambda x, t: x[..., 0] ** 2 +
                        x[..., 0] * x[..., 1])
    pos, xi = mesh.locate((0.4, 0.7))
    value, gradient = evaluate(field, pos, xi)
    assert value.shape == (1,)
    assert gradient.shape == (1, 2)
    assert value[0] == pytest.approx(0.16 + 0.28)
    assert np.allclose(gradient[0], [0.8 + 0.7, 0.4])


def test_evaluate_rejects_outside_point(square):
    field = Field(build_space(square, 1, 1))
    with pytest.raises(SpaceError):
        evaluate(field, 0, (1.2, 0.5))


def test_cell_integrator_round_trip():
    mesh = distort(generate_cartesian(2, 3), 0.05)
    space = build_space(mesh, 2, 2)
    field = interpolate(space, lambda x, t: np.stack(
        [x[..., 1], 2.0 * x[..., 0]], axis=-1))
    integrator = space.cell_integrator(3)
    grads = integrator.gradients(field.local())
    assert np.allclose(grads[:, 0, :, :], [0.0, 1.0])
    assert np.allclose(grads[:, 1, :, :], [2.0, 0.0])
    ones = np.ones_like(integrator.values(field.local()))
    tested = integrator.integrate(values=ones)
    assert tested.sum() == pytest.approx(2.0 * mesh.total_measure())


def test_geometry_measures_agree():
    mesh = distort(generate_cartesian(2, 4), 0.05)
    cells = cell_geometry(mesh, 3)
    faces = face_geometry(mesh, 3)
    assert cells.jxw.sum() == pytest.approx(1.0)
    assert faces.boundary_jxw.sum() == pytest.approx(4.0)
    assert np.allclose(np.linalg.norm(faces.normal, axis=-1), 1.0)


def test_hanging_traces_match(square):
    mesh = refine_and_coarsen(square, [0])
    space = build_space(mesh, 2, 1)
    field = interpolate(space, lambda x, t: 1.0 + 2.0 * x[..., 0] -
                        3.0 * x[..., 1] + x[..., 0] * x[..., 1])
    integrator = space.face_integrator(3)
    geo = integrator.geometry
    own = integrator.values(field.local(), geo.owner)
    other = integrator.values(field.local(), geo.neighbor)
    assert geo.faces.n_hanging() == 4
    assert np.allclose(own, other, atol=1e-13)
    x = geo.points
    exact = 1.0 + 2.0 * x[..., 0] - 3.0 * x[..., 1] + x[..., 0] * x[..., 1]
    assert np.allclose(own[:, 0], exact)


def _interpolation_error(n_el, degree):
    mesh = generate_cartesian(2, n_el)
    space = build_space(mesh, degree, 1)

    def f(x, t):
        return np.sin(2.0 * x[..., 0]) * np.cos(3.0 * x[..., 1])

    field = interpolate(space, f)
    integrator = space.cell_integrator(degree + 3)
    at_q = integrator.values(field.local())[:, 0]
    exact = f(integrator.geometry.points, 0.0)
    return math.sqrt(np.sum((at_q - exact) ** 2 * integrator.geometry.jxw))


@pytest.mark.parametrize('degree', [1, 2, 3])
def test_interpolation_rate(degree):
    coarse = _interpolation_error(4, degree)
    fine = _interpolation_error(8, degree)
    assert math.log2(coarse / fine) == pytest.approx(degree + 1, abs=0.4)
