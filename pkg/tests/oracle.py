"""Dense assembly of the DG forms on axis-aligned meshes.

Every cell is a box, so basis functions are evaluated directly at physical
points and face integrals use plain Gauss rules on the owner's face. Hanging
faces need no special treatment: the owner is the fine cell and the coarse
basis is evaluated at the same physical points.
"""

import numpy as np

from dgflow.space import gauss_legendre, tensor_points, tensor_tabulate


def cell_box(mesh, pos):
    corners = mesh.cell_corners()[pos]
    low = corners.min(axis=0)
    return low, corners.max(axis=0) - low


def basis(space, pos, x):
    low, size = cell_box(space.mesh, pos)
    values, grads = tensor_tabulate(space.nodes, (np.asarray(x) - low) / size)
    return values, grads / size


def dofs(space, pos, c=0):
    start = (pos * space.components + c) * space.n_basis
    return np.arange(start, start + space.n_basis)


def scalar_dofs(space, pos):
    return np.arange(pos * space.n_basis, (pos + 1) * space.n_basis)


def cell_rule(mesh, pos, n):
    low, size = cell_box(mesh, pos)
    x, w = gauss_legendre(n)
    ref = tensor_points(x, mesh.dim)
    weights = np.prod(tensor_points(w, mesh.dim), axis=-1) * np.prod(size)
    return low + ref * size, weights


def face_rule(mesh, pos, local_face, n):
    low, size = cell_box(mesh, pos)
    r, side = divmod(local_face, 2)
    dim = mesh.dim
    x, w = gauss_legendre(n)
    tangential = [s for s in range(dim) if s != r]
    t = tensor_points(x, dim - 1)
    ref = np.empty((len(t), dim))
    ref[:, r] = side
    for j, s in enumerate(tangential):
        ref[:, s] = t[:, j]
    weights = np.prod(tensor_points(w, dim - 1), axis=-1) * \
        np.prod(size[tangential])
    normal = np.zeros(dim)
    normal[r] = 2.0 * side - 1.0
    return low + ref * size, weights, normal


def expand(space, scalar):
    """Repeat a scalar-indexed matrix on every component of a space."""
    nb = space.n_basis
    comps = space.components
    pos = np.arange(space.n_cells)[:, None]
    b = np.arange(nb)[None, :]
    full = np.zeros((space.n_dofs, space.n_dofs))
    for c in range(comps):
        index = ((pos * comps + c) * nb + b).ravel()
        full[np.ix_(index, index)] = scalar
    return full


def _scalar_size(space):
    return space.n_cells * space.n_basis


def dense_mass(space, n=None):
    n = n or space.degree + 2
    mesh = space.mesh
    out = np.zeros((_scalar_size(space),) * 2)
    for pos in range(mesh.n_active):
        x, w = cell_rule(mesh, pos, n)
        phi, _ = basis(space, pos, x)
        index = scalar_dofs(space, pos)
        out[np.ix_(index, index)] += phi.T @ (w[:, None] * phi)
    return expand(space, out)


def dense_sip(space, interior_tau, boundary_tau, dirichlet, n=None):
    """
    Assemble the SIP form.

    interior_tau, boundary_tau -- penalties per face of mesh.get_faces()
    dirichlet -- mask of the boundary faces carrying penalty rows
    """
    n = n or space.degree + 2
    mesh = space.mesh
    faces = mesh.get_faces()
    out = np.zeros((_scalar_size(space),) * 2)
    for pos in range(mesh.n_active):
        x, w = cell_rule(mesh, pos, n)
        _, g = basis(space, pos, x)
        index = scalar_dofs(space, pos)
        out[np.ix_(index, index)] += np.einsum('qid,qjd,q->ij', g, g, w)

    for f in range(faces.n_interior):
        a = faces.owner[f]
        b = faces.neighbor[f]
        x, w, normal = face_rule(mesh, a, faces.owner_face[f], n)
        sides = []
        for pos, sign in ((a, 1.0), (b, -1.0)):
            phi, g = basis(space, pos, x)
            sides.append((scalar_dofs(space, pos), phi, g @ normal, sign))
        tau = interior_tau[f]
        for iv, pv, dv, sv in sides:
            for iu, pu, du, su in sides:
                block = tau * sv * su * pv.T @ (w[:, None] * pu) - \
                    0.5 * sv * pv.T @ (w[:, None] * du) - \
                    0.5 * su * dv.T @ (w[:, None] * pu)
                out[np.ix_(iv, iu)] += block

    for f in range(faces.n_boundary):
        if not dirichlet[f]:
            continue
        pos = faces.boundary_cell[f]
        x, w, normal = face_rule(mesh, pos, faces.boundary_face[f], n)
        phi, g = basis(space, pos, x)
        dn = g @ normal
        index = scalar_dofs(space, pos)
        out[np.ix_(index, index)] += \
            boundary_tau[f] * phi.T @ (w[:, None] * phi) - \
            phi.T @ (w[:, None] * dn) - dn.T @ (w[:, None] * phi)
    return expand(space, out)


def _field_at(field, pos, x):
    phi, _ = basis(field.space, pos, x)
    return phi @ field.local()[pos].T


def _divergence_at(field, pos, x):
    _, g = basis(field.space, pos, x)
    return np.einsum('qbc,cb->q', g, field.local()[pos])


def dense_advection(space, advecting, dirichlet, n=None, skew=False):
    """
    Assemble the Lax-Friedrichs advection form for a fixed velocity.

    skew -- add -(div w) u . v / 2 on cells and [w . n] {u . v} / 2 on
            interior faces
    """
    n = n or space.degree + 2
    mesh = space.mesh
    faces = mesh.get_faces()
    out = np.zeros((_scalar_size(space),) * 2)
    for pos in range(mesh.n_active):
        x, w = cell_rule(mesh, pos, n)
        phi, g = basis(space, pos, x)
        wg = np.einsum('qd,qid->qi', _field_at(advecting, pos, x), g)
        index = scalar_dofs(space, pos)
        out[np.ix_(index, index)] -= wg.T @ (w[:, None] * phi)
        if skew:
            div = _divergence_at(advecting, pos, x)
            out[np.ix_(index, index)] -= 0.5 * phi.T @ (
                (w * div)[:, None] * phi)

    for f in range(faces.n_interior):
        a = faces.owner[f]
        b = faces.neighbor[f]
        x, w, normal = face_rule(mesh, a, faces.owner_face[f], n)
        wn_a = _field_at(advecting, a, x) @ normal
        wn_b = _field_at(advecting, b, x) @ normal
        lam = np.maximum(np.abs(wn_a), np.abs(wn_b))
        phi_a, _ = basis(space, a, x)
        phi_b, _ = basis(space, b, x)
        ia = scalar_dofs(space, a)
        ib = scalar_dofs(space, b)
        for iv, pv, sv in ((ia, phi_a, 1.0), (ib, phi_b, -1.0)):
            out[np.ix_(iv, ia)] += sv * pv.T @ (
                (w * 0.5 * (wn_a + lam))[:, None] * phi_a)
            out[np.ix_(iv, ib)] += sv * pv.T @ (
                (w * 0.5 * (wn_b - lam))[:, None] * phi_b)
        if skew:
            jump = w * 0.25 * (wn_a - wn_b)
            for iv, pv in ((ia, phi_a), (ib, phi_b)):
                out[np.ix_(iv, iv)] += pv.T @ (jump[:, None] * pv)

    for f in range(faces.n_boundary):
        pos = faces.boundary_cell[f]
        x, w, normal = face_rule(mesh, pos, faces.boundary_face[f], n)
        wn = _field_at(advecting, pos, x) @ normal
        speed = np.abs(wn) if dirichlet[f] else np.maximum(wn, 0.0)
        phi, _ = basis(space, pos, x)
        index = scalar_dofs(space, pos)
        out[np.ix_(index, index)] += phi.T @ ((w * speed)[:, None] * phi)
    return expand(space, out)


def dense_upwind_jumps(space, advecting, n=None):
    """Assemble the Lax-Friedrichs dissipation lambda / 2 [u] . [v]."""
    n = n or space.degree + 2
    mesh = space.mesh
    faces = mesh.get_faces()
    out = np.zeros((_scalar_size(space),) * 2)
    for f in range(faces.n_interior):
        a = faces.owner[f]
        b = faces.neighbor[f]
        x, w, normal = face_rule(mesh, a, faces.owner_face[f], n)
        lam = np.maximum(np.abs(_field_at(advecting, a, x) @ normal),
                         np.abs(_field_at(advecting, b, x) @ normal))
        phi_a, _ = basis(space, a, x)
        phi_b, _ = basis(space, b, x)
        ia = scalar_dofs(space, a)
        ib = scalar_dofs(space, b)
        weight = (w * 0.5 * lam)[:, None]
        for iv, pv, sv in ((ia, phi_a, 1.0), (ib, phi_b, -1.0)):
            out[np.ix_(iv, ia)] += sv * pv.T @ (weight * phi_a)
            out[np.ix_(iv, ib)] -= sv * pv.T @ (weight * phi_b)
    return expand(space, out)


def dense_divergence(vspace, pspace, boundary=True, n=None):
    """
    Assemble B with (B u)_q = D(u)(q), the trace used on every boundary.

    boundary -- include the boundary face terms
    """
    n = n or vspace.degree + 2
    mesh = vspace.mesh
    dim = mesh.dim
    faces = mesh.get_faces()
    out = np.zeros((_scalar_size(pspace), vspace.n_dofs))
    for pos in range(mesh.n_active):
        x, w = cell_rule(mesh, pos, n)
        phi_u, _ = basis(vspace, pos, x)
        _, g_q = basis(pspace, pos, x)
        iq = scalar_dofs(pspace, pos)
        for c in range(dim):
            out[np.ix_(iq, dofs(vspace, pos, c))] -= \
                g_q[:, :, c].T @ (w[:, None] * phi_u)

    for f in range(faces.n_interior):
        a = faces.owner[f]
        b = faces.neighbor[f]
        x, w, normal = face_rule(mesh, a, faces.owner_face[f], n)
        for pos_q, sq in ((a, 1.0), (b, -1.0)):
            phi_q, _ = basis(pspace, pos_q, x)
            iq = scalar_dofs(pspace, pos_q)
            for pos_u in (a, b):
                phi_u, _ = basis(vspace, pos_u, x)
                for c in range(dim):
                    out[np.ix_(iq, dofs(vspace, pos_u, c))] += \
                        0.5 * sq * normal[c] * phi_q.T @ (w[:, None] * phi_u)

    if boundary:
        for f in range(faces.n_boundary):
            pos = faces.boundary_cell[f]
            x, w, normal = face_rule(mesh, pos, faces.boundary_face[f], n)
            phi_q, _ = basis(pspace, pos, x)
            phi_u, _ = basis(vspace, pos, x)
            iq = scalar_dofs(pspace, pos)
            for c in range(dim):
                out[np.ix_(iq, dofs(vspace, pos, c))] += \
                    normal[c] * phi_q.T @ (w[:, None] * phi_u)
    return out
