"""Tensor-product DG spaces, quadrature, geometry caches and fields.

The reference cell is [0, 1]^d. Vertices and nodal basis functions are
numbered lexicographically with the first coordinate running fastest, and
local face ``2 * r + s`` is the face where reference coordinate ``r`` equals
``s``.
"""

import functools
import logging

import numpy as np
from numpy.polynomial import legendre

from .errors import MeshError, SpaceError

logger = logging.getLogger(__name__)


@functools.lru_cache(maxsize=None)
def gauss_legendre(n_points):
    """
    Get the Gauss-Legendre rule on [0, 1].

    n_points -- number of points

    Returns a (points, weights) tuple of read-only arrays.
    """
    x, w = legendre.leggauss(n_points)
    points = 0.5 * (x + 1.0)
    weights = 0.5 * w
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


@functools.lru_cache(maxsize=None)
def gauss_lobatto(degree):
    """
    Get the Gauss-Lobatto nodes of a degree-k nodal basis on [0, 1].

    degree -- polynomial degree, at least 1

    Returns a read-only array of degree + 1 increasing nodes.
    """
    if degree < 1:
        raise SpaceError('Gauss-Lobatto nodes need degree >= 1')

    roots = legendre.Legendre.basis(degree).deriv().roots()
    interior = np.sort(np.real(roots))
    nodes = 0.5 * (np.concatenate(([-1.0], interior, [1.0])) + 1.0)
    nodes.setflags(write=False)
    return nodes


def lagrange_1d(nodes, x):
    """
    Evaluate the 1D Lagrange basis on the given nodes.

    nodes -- interpolation nodes
    x -- evaluation points, any shape

    Returns (values, derivatives), each of shape x.shape + (len(nodes),).
    """
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    diff = x[..., None] - np.asarray(nodes)
    values = np.ones(x.shape + (n,))
    derivatives = np.zeros(x.shape + (n,))
    for i in range(n):
        for j in range(n):
            if j == i:
                continue

            denom = nodes[i] - nodes[j]
            derivatives[..., i] = (derivatives[..., i] * diff[..., j] +
                                   values[..., i]) / denom
            values[..., i] = values[..., i] * diff[..., j] / denom

    return values, derivatives


def tensor_tabulate(nodes, points):
    """
    Tabulate the tensor-product Lagrange basis at reference points.

    nodes -- 1D nodes
    points -- array of shape (..., d)

    Returns values (..., nb) and reference gradients (..., nb, d).
    """
    points = np.asarray(points, dtype=float)
    dim = points.shape[-1]
    lead = points.shape[:-1]
    factors = [lagrange_1d(nodes, points[..., r]) for r in range(dim)]

    def combine(arrays):
        out = arrays[0]
        for a in arrays[1:]:
            out = (a[..., :, None] * out[..., None, :]).reshape(lead + (-1,))
        return out

    values = combine([f[0] for f in factors])
    gradients = np.stack(
        [combine([factors[s][1] if s == r else factors[s][0]
                  for s in range(dim)])
         for r in range(dim)],
        axis=-1)
    return values, gradients


def tensor_points(points_1d, dim):
    """Tensorize 1D points with the first coordinate running fastest."""
    grids = np.meshgrid(*([np.asarray(points_1d)] * dim), indexing='ij')
    return np.stack([g.ravel() for g in grids[::-1]], axis=-1)


def map_points(corners, ref_points):
    """
    Apply the multilinear reference-to-physical map.

    corners -- cell vertex coordinates, shape (n, 2^d, d)
    ref_points -- reference points, shape (m, d) or (n, m, d)

    Returns physical points (n, m, d) and Jacobians (n, m, d, d) with
    J[..., i, r] = dx_i / dxi_r.
    """
    values, grads = tensor_tabulate((0.0, 1.0), ref_points)
    if values.ndim == 2:
        x = np.einsum('mv,nvi->nmi', values, corners)
        jac = np.einsum('mvr,nvi->nmir', grads, corners)
    else:
        x = np.einsum('nmv,nvi->nmi', values, corners)
        jac = np.einsum('nmvr,nvi->nmir', grads, corners)
    return x, jac


def local_face_vertices(dim, local_face):
    """Get the reference vertex numbers lying on a local face."""
    r, side = divmod(local_face, 2)
    return [v for v in range(2 ** dim) if (v >> r) & 1 == side]


class QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference cell and its faces."""

    def __init__(self, n_points, dim):
        """
        Initialize the object.

        n_points -- points per direction
        dim -- dimension of the reference cell
        """
        if n_points < 1:
            raise SpaceError('Quadrature needs at least one point')

        self.n_points = n_points
        self.dim = dim
        x, w = gauss_legendre(n_points)
        self.points_1d = x
        self.weights_1d = w
        self.points = tensor_points(x, dim)
        self.weights = np.prod(tensor_points(w, dim), axis=-1)
        if dim > 1:
            self.face_weights = np.prod(tensor_points(w, dim - 1), axis=-1)
            self._face_points = tensor_points(x, dim - 1)
        else:
            self.face_weights = np.ones(1)
            self._face_points = np.zeros((1, 0))

    def face_points(self, local_face, subface=-1):
        """
        Embed the face rule into the reference cell.

        local_face -- local face number 2 * r + side
        subface -- child face index for hanging faces, -1 for the full face

        Returns an array (n_face_points, dim).
        """
        r, side = divmod(local_face, 2)
        tangential = [s for s in range(self.dim) if s != r]
        t = np.array(self._face_points, dtype=float)
        if subface >= 0:
            for j in range(self.dim - 1):
                t[:, j] = 0.5 * (t[:, j] + ((subface >> j) & 1))

        out = np.empty((t.shape[0], self.dim))
        out[:, r] = float(side)
        for j, s in enumerate(tangential):
            out[:, s] = t[:, j]
        return out


def _inverse_and_det(jac):
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    return inv, det


class CellGeometry:
    """Per-cell quadrature data: points, inverse Jacobians and JxW."""

    def __init__(self, mesh, n_points):
        """
        Initialize the object.

        mesh -- Mesh
        n_points -- quadrature points per direction
        """
        self.quadrature = QuadratureRule(n_points, mesh.dim)
        corners = mesh.cell_corners()
        self.points, jac = map_points(corners, self.quadrature.points)
        self.inverse_jacobian, det = _inverse_and_det(jac)
        if np.any(det <= 0.0):
            bad = np.unique(np.nonzero(det <= 0.0)[0])
            raise MeshError('Nonpositive Jacobian in cells {}'.format(
                bad.tolist()), cells=bad)

        self.jxw = det * self.quadrature.weights


class FaceSide:
    """One side of a batch of faces, with its canonical point ordering."""

    def __init__(self, cells, local_faces, subfaces, perm, inverse_jacobian,
                 quadrature):
        """
        Initialize the object.

        cells -- active cell positions, one per face
        local_faces -- local face numbers
        subfaces -- subface index per face, -1 for full faces
        perm -- perm[f, q] is the side's own point matching canonical point q
        inverse_jacobian -- inverse Jacobians at canonical points
        quadrature -- the QuadratureRule used
        """
        self.cells = np.asarray(cells, dtype=int)
        self.local_faces = np.asarray(local_faces, dtype=int)
        self.subfaces = np.asarray(subfaces, dtype=int)
        self.perm = np.asarray(perm, dtype=int)
        self.inverse_perm = np.argsort(self.perm, axis=1)
        self.inverse_jacobian = inverse_jacobian
        self.identity = bool(np.all(
            self.perm == np.arange(self.perm.shape[1])[None, :]))
        self.groups = []
        keys = sorted(set(zip(self.local_faces.tolist(),
                              self.subfaces.tolist())))
        for lf, sub in keys:
            index = np.flatnonzero((self.local_faces == lf) &
                                   (self.subfaces == sub))
            if len(np.unique(self.cells[index])) != len(index):
                raise MeshError('Face batch visits a cell twice')
            self.groups.append(((lf, sub), index,
                                quadrature.face_points(lf, sub)))


def _face_frame(inverse_jacobian, local_faces):
    """Return outward normals and area factors from inverse Jacobians."""
    nf, nq = inverse_jacobian.shape[:2]
    r = local_faces // 2
    side = local_faces % 2
    rows = inverse_jacobian[np.arange(nf)[:, None], np.arange(nq)[None, :],
                            r[:, None], :]
    length = np.linalg.norm(rows, axis=-1)
    sign = (2.0 * side - 1.0)[:, None, None]
    return sign * rows / length[..., None], length


class FaceGeometry:
    """Quadrature data for interior and boundary faces of a mesh."""

    def __init__(self, mesh, n_points):
        """
        Initialize the object.

        mesh -- Mesh
        n_points -- quadrature points per direction
        """
        self.quadrature = quad = QuadratureRule(n_points, mesh.dim)
        faces = mesh.get_faces()
        corners = mesh.cell_corners()
        self.faces = faces

        owner_points = np.stack([quad.face_points(lf)
                                 for lf in faces.owner_face]) \
            if faces.n_interior else np.zeros((0, len(quad.face_weights),
                                               mesh.dim))
        x_own, jac_own = map_points(corners[faces.owner], owner_points)
        inv_own, det_own = _inverse_and_det(jac_own)
        normal, length = _face_frame(inv_own, faces.owner_face)
        self.points = x_own
        self.normal = normal
        self.jxw = np.abs(det_own) * length * quad.face_weights
        n_face_q = len(quad.face_weights)
        self.owner = FaceSide(
            faces.owner, faces.owner_face, -np.ones(faces.n_interior, int),
            np.tile(np.arange(n_face_q), (faces.n_interior, 1)), inv_own,
            quad)

        subfaces, perm = self._match_neighbors(mesh, corners, x_own)
        nb_points = np.stack([
            quad.face_points(lf, sub)
            for lf, sub in zip(faces.neighbor_face, subfaces)]) \
            if faces.n_interior else owner_points
        _, jac_nb = map_points(corners[faces.neighbor], nb_points)
        inv_nb = np.linalg.inv(jac_nb)
        inv_nb = np.take_along_axis(inv_nb, perm[:, :, None, None], axis=1)
        self.neighbor = FaceSide(faces.neighbor, faces.neighbor_face,
                                 subfaces, perm, inv_nb, quad)

        bpoints = np.stack([quad.face_points(lf)
                            for lf in faces.boundary_face]) \
            if faces.n_boundary else np.zeros((0, n_face_q, mesh.dim))
        xb, jac_b = map_points(corners[faces.boundary_cell], bpoints)
        inv_b, det_b = _inverse_and_det(jac_b)
        nb_normal, b_length = _face_frame(inv_b, faces.boundary_face)
        self.boundary_points = xb
        self.boundary_normal = nb_normal
        self.boundary_jxw = np.abs(det_b) * b_length * quad.face_weights
        self.boundary = FaceSide(
            faces.boundary_cell, faces.boundary_face,
            -np.ones(faces.n_boundary, int),
            np.tile(np.arange(n_face_q), (faces.n_boundary, 1)), inv_b, quad)
        self.boundary_id = faces.boundary_id

    def _match_neighbors(self, mesh, corners, x_own):
        faces = self.faces
        quad = self.quadrature
        n_face_q = len(quad.face_weights)
        subfaces = -np.ones(faces.n_interior, dtype=int)
        perm = np.zeros((faces.n_interior, n_face_q), dtype=int)
        scale = 1e-9 * (1.0 + np.abs(mesh.vertices).max())
        n_sub = 2 ** (mesh.dim - 1)
        for lf in range(2 * mesh.dim):
            for hanging in (False, True):
                index = np.flatnonzero((faces.neighbor_face == lf) &
                                       (faces.hanging == hanging))
                if len(index) == 0:
                    continue

                candidates = range(n_sub) if hanging else [-1]
                best = None
                for sub in candidates:
                    x_nb, _ = map_points(corners[faces.neighbor[index]],
                                         quad.face_points(lf, sub))
                    dist = np.linalg.norm(
                        x_own[index][:, :, None, :] - x_nb[:, None, :, :],
                        axis=-1)
                    score = dist.min(axis=2).max(axis=1)
                    match = dist.argmin(axis=2)
                    if best is None:
                        best = (score, match, np.full(len(index), sub))
                    else:
                        better = score < best[0]
                        best[0][better] = score[better]
                        best[1][better] = match[better]
                        best[2][better] = sub

                score, match, sub = best
                if np.any(score > scale):
                    bad = faces.owner[index[score > scale]]
                    raise MeshError(
                        'Face quadrature points do not match across faces of '
                        'cells {}'.format(bad.tolist()), cells=bad)

                perm[index] = match
                subfaces[index] = sub

        return subfaces, perm


def cell_geometry(mesh, n_points):
    """Get the cached CellGeometry of a mesh."""
    key = ('cell', n_points)
    if key not in mesh.cache:
        mesh.cache[key] = CellGeometry(mesh, n_points)
    return mesh.cache[key]


def face_geometry(mesh, n_points):
    """Get the cached FaceGeometry of a mesh."""
    key = ('face', n_points)
    if key not in mesh.cache:
        mesh.cache[key] = FaceGeometry(mesh, n_points)
    return mesh.cache[key]


class FunctionSpace:
    """A DG space of tensor-product polynomials of degree k per component."""

    def __init__(self, mesh, degree, components):
        """
        Initialize the object.

        mesh -- Mesh the space lives on
        degree -- polynomial degree in each coordinate direction
        components -- number of field components
        """
        if degree < 1:
            raise SpaceError('Degree must be at least 1, got {}'.format(
                degree))

        if components < 1:
            raise SpaceError('A space needs at least one component')

        self.mesh = mesh
        self.degree = degree
        self.components = components
        self.dim = mesh.dim
        self.nodes = gauss_lobatto(degree)
        self.n_basis = (degree + 1) ** mesh.dim
        self.dofs_per_cell = components * self.n_basis
        self.n_cells = mesh.n_active
        self.n_dofs = self.n_cells * self.dofs_per_cell
        self.offsets = np.arange(self.n_cells + 1) * self.dofs_per_cell
        self._tabulations = {}
        self._integrators = {}
        self.cache = {}

    def __repr__(self):
        """Describe the space."""
        return 'FunctionSpace(Q{}, {} comps, {} dofs)'.format(
            self.degree, self.components, self.n_dofs)

    def tabulate(self, points):
        """
        Tabulate the basis at reference points, with caching.

        points -- array (m, d) of reference points

        Returns values (m, nb) and reference gradients (m, nb, d).
        """
        points = np.asarray(points, dtype=float)
        key = points.tobytes()
        if key not in self._tabulations:
            self._tabulations[key] = tensor_tabulate(self.nodes, points)
        return self._tabulations[key]

    def node_points(self):
        """Get the physical basis node coordinates, shape (nc, nb, d)."""
        ref = tensor_points(self.nodes, self.dim)
        x, _ = map_points(self.mesh.cell_corners(), ref)
        return x

    def local(self, values):
        """View a coefficient vector as an (ncells, components, nb) array."""
        return np.asarray(values).reshape(self.n_cells, self.components,
                                          self.n_basis)

    def zeros(self):
        """Get a zero coefficient vector."""
        return np.zeros(self.n_dofs)

    def cell_integrator(self, n_points):
        """Get the cached CellIntegrator for n_points per direction."""
        key = ('cell', n_points)
        if key not in self._integrators:
            self._integrators[key] = CellIntegrator(self, n_points)
        return self._integrators[key]

    def face_integrator(self, n_points):
        """Get the cached FaceIntegrator for n_points per direction."""
        key = ('face', n_points)
        if key not in self._integrators:
            self._integrators[key] = FaceIntegrator(self, n_points)
        return self._integrators[key]

    def same_as(self, other):
        """Check whether two spaces share mesh, degree and components."""
        return (other.mesh is self.mesh and other.degree == self.degree and
                other.components == self.components)


def build_space(mesh, degree, components):
    """
    Build a DG space.

    mesh -- Mesh
    degree -- polynomial degree k >= 1
    components -- 1 for scalars, dim for velocities

    Returns a FunctionSpace.
    """
    return FunctionSpace(mesh, degree, components)


class Field:
    """Coefficients of a function in a FunctionSpace."""

    def __init__(self, space, values=None):
        """
        Initialize the object.

        space -- FunctionSpace
        values -- coefficient vector, zeros if omitted
        """
        self.space = space
        if values is None:
            values = np.zeros(space.n_dofs)

        values = np.asarray(values, dtype=float)
        if values.shape != (space.n_dofs,):
            raise SpaceError('Field of length {} does not match {}'.format(
                values.size, space))

        self.values = values

    def __repr__(self):
        """Describe the field."""
        return 'Field({})'.format(self.space)

    def local(self):
        """Get the (ncells, components, nb) view of the coefficients."""
        return self.space.local(self.values)

    def copy(self):
        """Get an independent copy."""
        return Field(self.space, self.values.copy())

    def is_finite(self):
        """Check that no coefficient is NaN or Inf."""
        return bool(np.all(np.isfinite(self.values)))


def interpolate(space, function, time=0.0):
    """
    Interpolate a function at the basis nodes.

    space -- FunctionSpace
    function -- callable f(x, t) taking points (..., d) and returning
                (..., components), or (...) for scalar spaces
    time -- time passed to the function

    Returns a Field.
    """
    x = space.node_points()
    values = np.asarray(function(x, time), dtype=float)
    if values.ndim == x.ndim - 1:
        values = values[..., None]

    values = np.broadcast_to(values, x.shape[:-1] + (space.components,))
    return Field(space, np.ascontiguousarray(
        values.transpose(0, 2, 1)).ravel())


def _measure_weights(space):
    geo = cell_geometry(space.mesh, space.degree + 1)
    values, _ = space.tabulate(geo.quadrature.points)
    return geo, values


def mean_value(field):
    """
    Get the domain mean of a scalar field.

    Returns the mean computed by quadrature.
    """
    space = field.space
    if space.components != 1:
        raise SpaceError('mean_value expects a scalar field')

    geo, values = _measure_weights(space)
    at_q = np.einsum('qb,nb->nq', values, field.local()[:, 0, :])
    return float(np.sum(at_q * geo.jxw) / np.sum(geo.jxw))


def subtract_mean(field):
    """Return a copy of a scalar field with zero domain mean."""
    mean = mean_value(field)
    # Constants are reproduced exactly by a nodal basis.
    return Field(field.space, field.values - mean)


def evaluate(field, cell, reference_point):
    """
    Evaluate a field and its gradient at a point of one cell.

    field -- Field
    cell -- active cell position
    reference_point -- point in [0, 1]^d

    Returns (values, gradients) with shapes (components,) and
    (components, d).
    """
    space = field.space
    point = np.asarray(reference_point, dtype=float).reshape(1, space.dim)
    if np.any(point < -1e-12) or np.any(point > 1.0 + 1e-12):
        raise SpaceError('Point {} lies outside the reference cell'.format(
            point[0].tolist()))

    values, grads = tensor_tabulate(space.nodes, point)
    _, jac = map_points(space.mesh.cell_corners()[cell:cell + 1], point)
    inv = np.linalg.inv(jac[0, 0])
    coeff = field.local()[cell]
    value = coeff @ values[0]
    gradient = (coeff @ grads[0]) @ inv
    return value, gradient


class CellIntegrator:
    """Evaluate and integrate against a space on cell quadrature points."""

    def __init__(self, space, n_points):
        """
        Initialize the object.

        space -- FunctionSpace
        n_points -- quadrature points per direction
        """
        self.space = space
        self.geometry = cell_geometry(space.mesh, n_points)
        self.values_table, self.gradients_table = space.tabulate(
            self.geometry.quadrature.points)

    def values(self, local):
        """Values at quadrature points, shape (nc, comps, nq)."""
        return np.einsum('qb,ncb->ncq', self.values_table, local)

    def gradients(self, local, cells=slice(None)):
        """
        Physical gradients at quadrature points, (nc, comps, nq, d).

        local -- coefficients of the cells selected by cells
        cells -- slice of active cells the coefficients belong to
        """
        ref = np.einsum('qbr,ncb->ncqr', self.gradients_table, local)
        return np.einsum('ncqr,nqri->ncqi', ref,
                         self.geometry.inverse_jacobian[cells])

    def integrate(self, values=None, gradients=None, cells=slice(None)):
        """
        Test quadrature-point data against the basis.

        values -- (nc, comps, nq) data tested against basis values
        gradients -- (nc, comps, nq, d) data tested against basis gradients
        cells -- slice of active cells the data belongs to

        Returns (nc, comps, nb); JxW is applied here.
        """
        jxw = self.geometry.jxw[cells]
        out = 0.0
        if values is not None:
            out = np.einsum('qb,ncq->ncb', self.values_table,
                            values * jxw[:, None, :])
        if gradients is not None:
            ref = np.einsum('nqri,ncqi->ncqr',
                            self.geometry.inverse_jacobian[cells],
                            gradients * jxw[:, None, :, None])
            out = out + np.einsum('qbr,ncqr->ncb', self.gradients_table, ref)
        return out


class FaceIntegrator:
    """Evaluate and integrate against a space on face quadrature points."""

    def __init__(self, space, n_points):
        """
        Initialize the object.

        space -- FunctionSpace
        n_points -- quadrature points per direction
        """
        self.space = space
        self.geometry = face_geometry(space.mesh, n_points)

    def _table(self, points):
        return self.space.tabulate(points)

    def values(self, local, side):
        """Canonical-order values on one FaceSide, (nf, comps, nqf)."""
        nf = len(side.cells)
        nq = side.perm.shape[1]
        out = np.empty((nf, local.shape[1], nq))
        for _, index, points in side.groups:
            table, _ = self._table(points)
            out[index] = np.einsum('qb,fcb->fcq', table,
                                   local[side.cells[index]])
        if not side.identity:
            out = np.take_along_axis(out, side.perm[:, None, :], axis=2)
        return out

    def gradients(self, local, side):
        """Canonical-order physical gradients, (nf, comps, nqf, d)."""
        nf = len(side.cells)
        nq = side.perm.shape[1]
        dim = self.space.dim
        ref = np.empty((nf, local.shape[1], nq, dim))
        for _, index, points in side.groups:
            _, table = self._table(points)
            ref[index] = np.einsum('qbr,fcb->fcqr', table,
                                   local[side.cells[index]])
        if not side.identity:
            ref = np.take_along_axis(ref, side.perm[:, None, :, None],
                                     axis=2)
        return np.einsum('fcqr,fqri->fcqi', ref, side.inverse_jacobian)

    def integrate(self, out, side, values=None, gradients=None):
        """
        Accumulate face contributions into a local residual.

        out -- (nc, comps, nb) array, updated in place
        side -- FaceSide whose cells receive the contributions
        values -- canonical (nf, comps, nqf) data, already weighted by JxW
        gradients -- canonical (nf, comps, nqf, d) data, already weighted
        """
        ref = None
        if gradients is not None:
            ref = np.einsum('fqri,fcqi->fcqr', side.inverse_jacobian,
                            gradients)
            if not side.identity:
                ref = np.take_along_axis(
                    ref, side.inverse_perm[:, None, :, None], axis=2)
        if values is not None and not side.identity:
            values = np.take_along_axis(values, side.inverse_perm[:, None, :],
                                        axis=2)
        for _, index, points in side.groups:
            table, grad_table = self._table(points)
            contribution = 0.0
            if values is not None:
                contribution = np.einsum('qb,fcq->fcb', table, values[index])
            if ref is not None:
                contribution = contribution + np.einsum(
                    'qbr,fcqr->fcb', grad_table, ref[index])
            out[side.cells[index]] += contribution
        return out
