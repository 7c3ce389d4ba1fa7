"""Quadrilateral and hexahedral meshes with a 1-irregular refinement tree."""

import itertools
import logging

import numpy as np

from .errors import MeshError
from .space import (QuadratureRule, cell_geometry, face_geometry,
                    local_face_vertices, map_points)

logger = logging.getLogger(__name__)

# Boundary ids of the cylinder channel.
WALL = 0
INLET = 1
OUTLET = 2
CYLINDER = 3

CHANNEL_LENGTH = 2.2
CHANNEL_HEIGHT = 0.41
CYLINDER_CENTER = (0.2, 0.2)
CYLINDER_RADIUS = 0.05


class FaceList:
    """Interior and boundary faces of the active cells of a mesh."""

    def __init__(self, interior, boundary, interior_diam, boundary_diam):
        """
        Initialize the object.

        interior -- list of (owner, owner_face, neighbor, neighbor_face,
                    hanging) tuples over active cell positions; on a hanging
                    face the owner is the fine cell
        boundary -- list of (cell, local_face, boundary_id) tuples
        interior_diam -- diam of each interior face (the fine side's face)
        boundary_diam -- diam of each boundary face
        """
        interior = np.array(interior, dtype=int).reshape(-1, 5)
        boundary = np.array(boundary, dtype=int).reshape(-1, 3)
        self.owner = interior[:, 0]
        self.owner_face = interior[:, 1]
        self.neighbor = interior[:, 2]
        self.neighbor_face = interior[:, 3]
        self.hanging = interior[:, 4].astype(bool)
        self.boundary_cell = boundary[:, 0]
        self.boundary_face = boundary[:, 1]
        self.boundary_id = boundary[:, 2]
        self.interior_diam = np.asarray(interior_diam, dtype=float)
        self.boundary_diam = np.asarray(boundary_diam, dtype=float)
        self.n_interior = len(self.owner)
        self.n_boundary = len(self.boundary_cell)

    def get_boundary_ids(self):
        """Get the sorted list of boundary ids present."""
        return sorted(set(self.boundary_id.tolist()))

    def n_hanging(self):
        """Get the number of hanging (subface) interior faces."""
        return int(np.count_nonzero(self.hanging))

    def cell_neighbors(self, n_cells):
        """Get the face neighbors of every active cell as a list of sets."""
        neighbors = [set() for _ in range(n_cells)]
        for a, b in zip(self.owner.tolist(), self.neighbor.tolist()):
            neighbors[a].add(b)
            neighbors[b].add(a)
        return neighbors


class Mesh:
    """
    A mesh of quadrilaterals or hexahedra.

    Cells are never deleted: refinement appends children and switches the
    parent inactive, so cell ids are stable across a refinement history.
    Solver arrays are indexed by active position, i.e. the rank of a cell in
    ``active_cells``.
    """

    def __init__(self, dim, vertices, cell_vertices, boundary_ids,
                 levels=None, parents=None, children=None, active=None,
                 vertex_keys=None):
        """
        Initialize the object.

        dim -- 2 or 3
        vertices -- (nv, dim) coordinates
        cell_vertices -- (nc, 2^dim) vertex indices, lexicographic order
        boundary_ids -- dict {(cell, local_face): boundary id}
        levels -- refinement level per cell
        parents -- parent cell per cell, -1 for roots
        children -- (nc, 2^dim) child cells, -1 when never refined
        active -- active flag per cell
        vertex_keys -- dict mapping refinement midpoint keys to vertices
        """
        if dim not in (2, 3):
            raise MeshError('Only 2D and 3D meshes are supported')

        n_corners = 2 ** dim
        self.dim = dim
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, dim)
        self.cell_vertices = np.asarray(cell_vertices, dtype=int).reshape(
            -1, n_corners)
        n_cells = len(self.cell_vertices)
        self.levels = np.zeros(n_cells, dtype=int) if levels is None \
            else np.asarray(levels, dtype=int)
        self.parents = -np.ones(n_cells, dtype=int) if parents is None \
            else np.asarray(parents, dtype=int)
        self.children = -np.ones((n_cells, n_corners), dtype=int) \
            if children is None else np.asarray(children, dtype=int)
        self.active = np.ones(n_cells, dtype=bool) if active is None \
            else np.asarray(active, dtype=bool)
        self.boundary_ids = dict(boundary_ids)
        self.vertex_keys = dict(vertex_keys) if vertex_keys else {}
        self.active_cells = np.flatnonzero(self.active)
        self.n_active = len(self.active_cells)
        self.position = -np.ones(n_cells, dtype=int)
        self.position[self.active_cells] = np.arange(self.n_active)
        self.cache = {}
        self.n_refined = 0
        self.n_coarsened = 0
        self.n_closure = 0
        if self.n_active == 0:
            raise MeshError('Mesh has no active cells')

        self._check_jacobians()

    def __repr__(self):
        """Describe the mesh."""
        return 'Mesh(dim={}, {} active cells, {} vertices)'.format(
            self.dim, self.n_active, len(self.vertices))

    def _check_jacobians(self):
        quad = QuadratureRule(3, self.dim)
        corners_ref = np.array(
            [[(v >> r) & 1 for r in range(self.dim)]
             for v in range(2 ** self.dim)], dtype=float)
        points = np.concatenate([corners_ref, quad.points])
        _, jac = map_points(self.cell_corners(), points)
        det = np.linalg.det(jac)
        bad = np.flatnonzero(np.any(det <= 0.0, axis=1))
        if len(bad):
            raise MeshError(
                'Nonpositive Jacobian in active cells {}'.format(
                    bad.tolist()), cells=bad)

    def cell_corners(self):
        """Get active cell vertex coordinates, shape (n_active, 2^d, d)."""
        if 'corners' not in self.cache:
            self.cache['corners'] = \
                self.vertices[self.cell_vertices[self.active_cells]]
        return self.cache['corners']

    def face_key(self, cell, local_face):
        """Get the sorted vertex tuple identifying a cell face."""
        verts = self.cell_vertices[cell, local_face_vertices(self.dim,
                                                             local_face)]
        return tuple(sorted(verts.tolist()))

    def get_faces(self):
        """Get the cached FaceList of the active cells."""
        if 'faces' not in self.cache:
            self.cache['faces'] = self._build_faces()
        return self.cache['faces']

    def _build_faces(self):
        keys = {}
        for pos, cell in enumerate(self.active_cells.tolist()):
            for lf in range(2 * self.dim):
                keys.setdefault(self.face_key(cell, lf), []).append((pos, lf))

        interior = []
        boundary = []
        interior_diam = []
        boundary_diam = []
        for pos, cell in enumerate(self.active_cells.tolist()):
            for lf in range(2 * self.dim):
                bid = self.boundary_ids.get((cell, lf))
                if bid is not None:
                    boundary.append((pos, lf, bid))
                    boundary_diam.append(self._face_diam(cell, lf))
                    continue

                entries = keys[self.face_key(cell, lf)]
                if len(entries) == 2:
                    other = entries[1] if entries[0] == (pos, lf) \
                        else entries[0]
                    if pos < other[0]:
                        interior.append((pos, lf, other[0], other[1], 0))
                        interior_diam.append(self._face_diam(cell, lf))
                elif len(entries) == 1:
                    coarse = self._coarse_neighbor(cell, lf, keys)
                    if coarse is not None:
                        interior.append((pos, lf, coarse[0], coarse[1], 1))
                        interior_diam.append(self._face_diam(cell, lf))
                else:
                    raise MeshError('Face of cell {} is shared by {} cells'
                                    .format(cell, len(entries)), cells=[cell])

        return FaceList(interior, boundary, interior_diam, boundary_diam)

    def _coarse_neighbor(self, cell, local_face, keys):
        r, side = divmod(local_face, 2)
        current = cell
        while self.parents[current] >= 0:
            parent = self.parents[current]
            index = self.children[parent].tolist().index(current)
            if (index >> r) & 1 != side:
                return None

            current = parent
            entries = keys.get(self.face_key(current, local_face))
            if entries:
                return entries[0]

        return None

    def _face_diam(self, cell, local_face):
        points = self.vertices[
            self.cell_vertices[cell, local_face_vertices(self.dim,
                                                         local_face)]]
        return _max_distance(points)

    def cell_diameters(self):
        """Get diam(K), the largest vertex distance, per active cell."""
        if 'diam' not in self.cache:
            self.cache['diam'] = np.array(
                [_max_distance(c) for c in self.cell_corners()])
        return self.cache['diam']

    def min_edge_length(self):
        """Get the shortest cell edge over all active cells."""
        corners = self.cell_corners()
        lengths = []
        for v in range(2 ** self.dim):
            for r in range(self.dim):
                if (v >> r) & 1 == 0:
                    w = v | (1 << r)
                    lengths.append(np.linalg.norm(
                        corners[:, w] - corners[:, v], axis=1))
        return float(np.min(lengths))

    def cell_measures(self):
        """Get the measure of every active cell by quadrature."""
        return cell_geometry(self, 2).jxw.sum(axis=1)

    def surface_to_volume(self):
        """Get |dK| / |K| for every active cell."""
        if 'surface' not in self.cache:
            quad = QuadratureRule(2, self.dim)
            corners = self.cell_corners()
            surface = np.zeros(self.n_active)
            for lf in range(2 * self.dim):
                _, jac = map_points(corners, quad.face_points(lf))
                rows = np.linalg.inv(jac)[:, :, lf // 2, :]
                surface += (np.abs(np.linalg.det(jac)) *
                            np.linalg.norm(rows, axis=-1) *
                            quad.face_weights).sum(axis=1)
            self.cache['surface'] = surface / self.cell_measures()
        return self.cache['surface']

    def total_measure(self):
        """Get the measure of the meshed domain."""
        return float(np.sum(self.cell_measures()))

    def geometry_of(self, cell):
        """
        Get geometric data of one active cell.

        cell -- active cell position

        Returns a dict with diam, measure, center and the Jacobian at the
        reference center.
        """
        corners = self.cell_corners()[cell:cell + 1]
        center = np.full((1, self.dim), 0.5)
        x, jac = map_points(corners, center)
        return {
            'diam': float(self.cell_diameters()[cell]),
            'measure': float(self.cell_measures()[cell]),
            'center': x[0, 0],
            'jacobian': jac[0, 0],
        }

    def face_geometry_of(self, face, boundary=False):
        """
        Get geometric data of one face.

        face -- face index in the FaceList
        boundary -- whether the index refers to a boundary face

        Returns a dict with diam, measure and the mean unit normal.
        """
        faces = self.get_faces()
        geo = face_geometry(self, 2)
        if boundary:
            jxw = geo.boundary_jxw[face]
            normal = geo.boundary_normal[face]
            diam = faces.boundary_diam[face]
        else:
            jxw = geo.jxw[face]
            normal = geo.normal[face]
            diam = faces.interior_diam[face]
        mean = (normal * jxw[:, None]).sum(axis=0)
        return {
            'diam': float(diam),
            'measure': float(jxw.sum()),
            'normal': mean / np.linalg.norm(mean),
        }

    def cell_coloring(self):
        """
        Color active cells so that face neighbors never share a color.

        Returns an int array of colors per active position.
        """
        if 'coloring' not in self.cache:
            neighbors = self.get_faces().cell_neighbors(self.n_active)
            colors = -np.ones(self.n_active, dtype=int)
            for pos in range(self.n_active):
                taken = {colors[n] for n in neighbors[pos]}
                color = 0
                while color in taken:
                    color += 1
                colors[pos] = color
            self.cache['coloring'] = colors
        return self.cache['coloring']

    def locate(self, point, tolerance=1e-10):
        """
        Find the active cell containing a physical point.

        point -- physical coordinates
        tolerance -- slack on the reference cell bounds

        Returns (active position, reference point); points on shared faces
        go to the lowest active position.
        """
        p = np.asarray(point, dtype=float)
        corners = self.cell_corners()
        lo = corners.min(axis=1) - tolerance
        hi = corners.max(axis=1) + tolerance
        candidates = np.flatnonzero(np.all((p >= lo) & (p <= hi), axis=1))
        for pos in candidates:
            xi = _invert_map(corners[pos], p)
            if np.all(xi >= -tolerance) and np.all(xi <= 1.0 + tolerance):
                return int(pos), np.clip(xi, 0.0, 1.0)

        raise MeshError('Point {} lies outside the mesh'.format(p.tolist()))

    def is_conforming(self):
        """Check whether the mesh has no hanging faces."""
        return self.get_faces().n_hanging() == 0

    def flatten(self):
        """
        Get a hierarchy-free copy holding only the active cells.

        Used vertices keep their relative order.
        """
        cells = self.cell_vertices[self.active_cells]
        used, inverse = np.unique(cells.ravel(), return_inverse=True)
        bids = {(int(self.position[cell]), lf): bid
                for (cell, lf), bid in self.boundary_ids.items()
                if self.position[cell] >= 0}
        return Mesh(self.dim, self.vertices[used],
                    inverse.reshape(cells.shape), bids)

    def export(self, path):
        """
        Write the mesh in the plain-text format.

        path -- destination file

        Hanging faces cannot be represented and are rejected.
        """
        if not self.is_conforming():
            raise MeshError('Cannot export a mesh with hanging faces')

        flat = self.flatten()
        with open(path, 'w') as f:
            f.write('{} {} {}\n'.format(flat.dim, len(flat.vertices),
                                        len(flat.cell_vertices)))
            for x in flat.vertices:
                f.write(' '.join(repr(float(c)) for c in x) + '\n')
            for cell in flat.cell_vertices:
                f.write(' '.join(str(int(v)) for v in cell) + '\n')
            for (cell, lf), bid in sorted(flat.boundary_ids.items()):
                f.write('{} {} {}\n'.format(cell, lf, bid))
        logger.debug('Wrote mesh with %d cells to %s', flat.n_active, path)


def load_mesh(path):
    """
    Read a mesh written by Mesh.export.

    path -- source file

    Returns a Mesh.
    """
    with open(path) as f:
        lines = [line.split() for line in f if line.strip()]

    try:
        dim, nv, nc = (int(v) for v in lines[0])
        vertices = [[float(c) for c in line] for line in lines[1:1 + nv]]
        cells = [[int(v) for v in line] for line in lines[1 + nv:1 + nv + nc]]
        bids = {}
        for line in lines[1 + nv + nc:]:
            cell, lf, bid = (int(v) for v in line)
            bids[(cell, lf)] = bid
    except (ValueError, IndexError) as e:
        raise MeshError('Malformed mesh file {}: {}'.format(path, e))

    if len(vertices) != nv or len(cells) != nc:
        raise MeshError('Mesh file {} is truncated'.format(path))

    return Mesh(dim, vertices, cells, bids)


def _max_distance(points):
    points = np.asarray(points)
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def _invert_map(corners, point, iterations=50):
    dim = len(point)
    xi = np.full(dim, 0.5)
    for _ in range(iterations):
        x, jac = map_points(corners[None], xi[None])
        delta = np.linalg.solve(jac[0, 0], point - x[0, 0])
        xi = xi + delta
        if np.linalg.norm(delta) < 1e-15:
            break
    return xi


def _boundary_faces(dim, cell_vertices):
    """Get the (cell, local_face) pairs that no other cell shares."""
    counts = {}
    for cell, verts in enumerate(cell_vertices):
        for lf in range(2 * dim):
            key = tuple(sorted(np.asarray(verts)[
                local_face_vertices(dim, lf)].tolist()))
            counts.setdefault(key, []).append((cell, lf))
    return sorted(v[0] for v in counts.values() if len(v) == 1)


def generate_cartesian(dim, n_el, box=None):
    """
    Generate a uniform Cartesian mesh of a box.

    dim -- 2 or 3
    n_el -- cells per direction, an int or one int per direction
    box -- sequence of (low, high) per direction, [0, 1]^dim by default

    Returns a Mesh with boundary id 2 * r + side on the face where
    coordinate r is at its low (side 0) or high (side 1) end.
    """
    if dim not in (2, 3):
        raise MeshError('Only 2D and 3D meshes are supported')

    counts = [n_el] * dim if np.isscalar(n_el) else list(n_el)
    if box is None:
        box = [(0.0, 1.0)] * dim

    if len(counts) != dim or len(box) != dim:
        raise MeshError('Need one cell count and one extent per direction')

    if any(n < 1 for n in counts):
        raise MeshError('Cell counts must be at least 1, got {}'.format(
            counts))

    if any(hi <= lo for lo, hi in box):
        raise MeshError('Box extents must be positive, got {}'.format(box))

    axes = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(box, counts)]
    vertices = np.stack([g.ravel() for g in np.meshgrid(
        *axes[::-1], indexing='ij')[::-1]], axis=-1)

    strides = np.cumprod([1] + [n + 1 for n in counts[:-1]])
    cells = []
    bids = {}
    for index in itertools.product(*[range(n) for n in reversed(counts)]):
        index = index[::-1]
        cell = len(cells)
        cells.append([
            sum((index[r] + ((v >> r) & 1)) * strides[r] for r in range(dim))
            for v in range(2 ** dim)])
        for r in range(dim):
            if index[r] == 0:
                bids[(cell, 2 * r)] = 2 * r
            if index[r] == counts[r] - 1:
                bids[(cell, 2 * r + 1)] = 2 * r + 1

    mesh = Mesh(dim, vertices, cells, bids)
    logger.debug('Generated %r', mesh)
    return mesh


def distort(mesh, amplitude, seed=42):
    """
    Randomly displace the interior vertices of an unrefined mesh.

    mesh -- Mesh without refinement history
    amplitude -- maximal displacement per coordinate, below half the
                 shortest edge
    seed -- seed of the numpy random generator

    Returns a new Mesh; boundary vertices keep their coordinates.
    """
    if not np.all(mesh.active) or np.any(mesh.levels != 0):
        raise MeshError('Only unrefined meshes can be distorted')

    h = mesh.min_edge_length()
    if amplitude < 0.0 or amplitude >= 0.5 * h:
        raise MeshError('Amplitude {} must lie in [0, {})'.format(
            amplitude, 0.5 * h))

    on_boundary = np.zeros(len(mesh.vertices), dtype=bool)
    for cell, lf in mesh.boundary_ids:
        on_boundary[mesh.cell_vertices[cell,
                                       local_face_vertices(mesh.dim, lf)]] = \
            True

    rng = np.random.default_rng(seed)
    displacement = amplitude * rng.uniform(-1.0, 1.0, mesh.vertices.shape)
    displacement[on_boundary] = 0.0
    return Mesh(mesh.dim, mesh.vertices + displacement, mesh.cell_vertices,
                mesh.boundary_ids)


def _channel_level0():
    xs = [i / 10.0 for i in range(23)]
    ys = [0.0, 0.1, 0.2, 0.3, CHANNEL_HEIGHT]
    nx = len(xs)
    vertices = [[x, y] for y in ys for x in xs]

    def grid(i, j):
        return i + nx * j

    cells = []
    for j in range(len(ys) - 1):
        for i in range(nx - 1):
            if i in (1, 2) and j in (1, 2):
                continue
            cells.append([grid(i, j), grid(i + 1, j), grid(i, j + 1),
                          grid(i + 1, j + 1)])

    square = [grid(3, 2), grid(3, 3), grid(2, 3), grid(1, 3), grid(1, 2),
              grid(1, 1), grid(2, 1), grid(3, 1)]
    circle = []
    for m in range(8):
        angle = m * np.pi / 4.0
        circle.append(len(vertices))
        vertices.append([CYLINDER_CENTER[0] + CYLINDER_RADIUS * np.cos(angle),
                         CYLINDER_CENTER[1] + CYLINDER_RADIUS * np.sin(angle)])
    for m in range(8):
        n = (m + 1) % 8
        cells.append([circle[m], square[m], circle[n], square[n]])

    vertices = np.array(vertices)
    bids = {}
    for cell, lf in _boundary_faces(2, cells):
        points = vertices[[cells[cell][v] for v in local_face_vertices(2, lf)]]
        mid = points.mean(axis=0)
        if np.hypot(*(mid - CYLINDER_CENTER)) < 1.5 * CYLINDER_RADIUS:
            bids[(cell, lf)] = CYLINDER
        elif mid[0] < 1e-12:
            bids[(cell, lf)] = INLET
        elif mid[0] > CHANNEL_LENGTH - 1e-12:
            bids[(cell, lf)] = OUTLET
        else:
            bids[(cell, lf)] = WALL

    return Mesh(2, vertices, cells, bids).flatten()


def _snap_to_cylinder(mesh):
    vertices = mesh.vertices.copy()
    center = np.asarray(CYLINDER_CENTER)
    for (cell, lf), bid in mesh.boundary_ids.items():
        if bid != CYLINDER:
            continue
        ids = mesh.cell_vertices[cell, local_face_vertices(mesh.dim, lf)]
        offset = vertices[ids] - center
        vertices[ids] = center + CYLINDER_RADIUS * offset / np.linalg.norm(
            offset, axis=1)[:, None]
    return Mesh(mesh.dim, vertices, mesh.cell_vertices, mesh.boundary_ids)


def generate_cylinder_channel(resolution_level=0):
    """
    Generate the 2.2 x 0.41 channel around a cylinder of diameter 0.1.

    resolution_level -- number of uniform refinements; level 4 has 23552
                        cells

    Returns a Mesh with boundary ids WALL, INLET, OUTLET and CYLINDER;
    cylinder vertices lie on the circle.
    """
    if resolution_level < 0:
        raise MeshError('Resolution level must be nonnegative')

    mesh = _channel_level0()
    for _ in range(resolution_level):
        refined = refine_and_coarsen(mesh, range(mesh.n_active), ())
        mesh = _snap_to_cylinder(refined.flatten())
    logger.debug('Generated cylinder channel %r', mesh)
    return mesh


def _parent_averaged_vertex(parent_vertices, coords, dim):
    """List the parent corners averaged into a point with coords in halves."""
    corners = []
    for v in range(2 ** dim):
        if all(coords[r] == 1 or coords[r] == 2 * ((v >> r) & 1)
               for r in range(dim)):
            corners.append(int(parent_vertices[v]))
    return corners


def refine_and_coarsen(mesh, refine_set=(), coarsen_set=()):
    """
    Refine and coarsen cells, keeping the mesh 1-irregular.

    mesh -- Mesh
    refine_set -- active positions to refine
    coarsen_set -- active positions to coarsen; a parent is restored only
                   when all of its children are flagged and the result stays
                   1-irregular

    Returns a new Mesh. Its n_refined, n_coarsened and n_closure attributes
    report what happened; n_closure counts cells added to keep neighbors
    within one level.
    """
    active = mesh.active_cells
    refine = {int(active[p]) for p in refine_set}
    coarsen = {int(active[p]) for p in coarsen_set}
    overlap = refine & coarsen
    if overlap:
        raise MeshError('Cells flagged for both refinement and coarsening',
                        cells=sorted(mesh.position[c] for c in overlap))

    neighbors = mesh.get_faces().cell_neighbors(mesh.n_active)
    levels = mesh.levels
    queue = sorted(refine)
    n_closure = 0
    while queue:
        cell = queue.pop()
        for pos in neighbors[mesh.position[cell]]:
            other = int(active[pos])
            if levels[other] < levels[cell] and other not in refine:
                refine.add(other)
                coarsen.discard(other)
                queue.append(other)
                n_closure += 1

    groups = {}
    for cell in coarsen:
        parent = int(mesh.parents[cell])
        if parent >= 0:
            groups.setdefault(parent, set()).add(cell)

    restored = []
    for parent, flagged in sorted(groups.items()):
        siblings = set(mesh.children[parent].tolist())
        if flagged != siblings:
            continue

        allowed = True
        for child in siblings:
            for pos in neighbors[mesh.position[child]]:
                other = int(active[pos])
                if mesh.parents[other] == parent:
                    continue
                if levels[other] > levels[child] or (
                        levels[other] == levels[child] and other in refine):
                    allowed = False
        if allowed:
            restored.append(parent)

    vertices = [v for v in mesh.vertices]
    vertex_keys = dict(mesh.vertex_keys)
    cell_vertices = mesh.cell_vertices.tolist()
    new_levels = levels.tolist()
    parents = mesh.parents.tolist()
    children = mesh.children.tolist()
    flags = mesh.active.tolist()
    bids = dict(mesh.boundary_ids)
    dim = mesh.dim

    def vertex_at(parent_vertices, coords):
        corners = _parent_averaged_vertex(parent_vertices, coords, dim)
        if len(corners) == 1:
            return corners[0]
        key = tuple(sorted(corners))
        if key not in vertex_keys:
            vertex_keys[key] = len(vertices)
            vertices.append(np.mean([vertices[c] for c in corners], axis=0))
        return vertex_keys[key]

    for cell in sorted(refine):
        flags[cell] = False
        if children[cell][0] >= 0:
            for child in children[cell]:
                flags[child] = True
            continue

        parent_vertices = cell_vertices[cell]
        for i in range(2 ** dim):
            bits = [(i >> r) & 1 for r in range(dim)]
            child = len(cell_vertices)
            cell_vertices.append([
                vertex_at(parent_vertices,
                          [bits[r] + ((j >> r) & 1) for r in range(dim)])
                for j in range(2 ** dim)])
            new_levels.append(new_levels[cell] + 1)
            parents.append(cell)
            children.append([-1] * 2 ** dim)
            flags.append(True)
            children[cell][i] = child
            for r in range(dim):
                lf = 2 * r + bits[r]
                if (cell, lf) in bids:
                    bids[(child, lf)] = bids[(cell, lf)]

    for parent in restored:
        flags[parent] = True
        for child in children[parent]:
            flags[child] = False

    new_mesh = Mesh(dim, np.array(vertices), cell_vertices, bids,
                    levels=new_levels, parents=parents, children=children,
                    active=flags, vertex_keys=vertex_keys)
    new_mesh.n_refined = len(refine)
    new_mesh.n_coarsened = len(restored)
    new_mesh.n_closure = n_closure
    if n_closure:
        logger.debug('Refinement closure added %d cells', n_closure)
    return new_mesh
