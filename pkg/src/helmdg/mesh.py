"""Conforming triangular meshes with face connectivity and boundary tags.

A mesh stores, besides vertices and (counterclockwise) triangles, the
deduplicated list of faces, the one or two (element, local face) owners of
each face, per-(element, face) unit outward normals, and a boundary
condition tag (Dirichlet / Neumann / Robin) for every boundary face.

Face identity is the sorted pair of global vertex indices and the
canonical face parametrization runs from the lower to the higher global
vertex index, so the two owners of a shared face see the same 1D
coordinate.  Meshes are immutable after construction (all arrays are
marked read-only) and safe for concurrent read access.

File I/O uses a restricted subset of the MSH 2.2 ASCII layout: nodes and,
among elements, only 2-node boundary lines (physical tag 1=Dirichlet,
2=Neumann, 3=Robin) and 3-node triangles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

_NORMAL_TOL = 1e-14


class BoundaryTag(IntEnum):
    """Boundary condition tag; values match the MSH physical tags."""

    DIRICHLET = 1
    NEUMANN = 2
    ROBIN = 3


#: Tag value stored for interior faces.
INTERIOR = 0

#: Sides of a generated rectangle, for per-side tag assignment.
SIDES = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    """Raised for inconsistent mesh definitions."""


class MeshFileError(MeshError):
    """Raised for malformed mesh files; message carries line context."""


@dataclass
class TriangleMesh:
    """Conforming simplicial mesh of a planar domain.

    Attributes
    ----------
    vertices : ndarray, shape (n_vertices, 2)
    triangles : ndarray, shape (n_triangles, 3)
        Vertex indices, counterclockwise.
    faces : ndarray, shape (n_faces, 2)
        Sorted vertex index pairs, deduplicated.
    elem_face : ndarray, shape (n_triangles, 3)
        Global face id of each local face; local face l of a triangle
        joins its local vertices (l, l+1 mod 3).
    face_owners : ndarray, shape (n_faces, 2, 2)
        Up to two (element, local face) owners; unused slots are -1.
    face_tags : ndarray, shape (n_faces,)
        BoundaryTag value for boundary faces, 0 for interior faces.
    normals : ndarray, shape (n_triangles, 3, 2)
        Unit outward normal per (element, local face).
    face_lengths : ndarray, shape (n_faces,)
    h_char : float
        Characteristic mesh size (maximum edge length).
    structured : dict or None
        Grid metadata set by the structured generators, used for O(1)
        point location.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    faces: np.ndarray
    elem_face: np.ndarray
    face_owners: np.ndarray
    face_tags: np.ndarray
    normals: np.ndarray
    face_lengths: np.ndarray
    h_char: float
    structured: dict | None = field(default=None, repr=False)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def is_boundary_face(self) -> np.ndarray:
        return self.face_owners[:, 1, 0] < 0

    @property
    def n_boundary_faces(self) -> int:
        return int(np.count_nonzero(self.is_boundary_face))

    @property
    def n_interior_faces(self) -> int:
        return self.n_faces - self.n_boundary_faces

    def signed_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass
class MeshDiagnostics:
    """Result of :func:`validate`: pass flag and first violated invariant."""

    passed: bool
    message: str = ""


def _freeze(mesh: TriangleMesh) -> TriangleMesh:
    for arr in (
        mesh.vertices,
        mesh.triangles,
        mesh.faces,
        mesh.elem_face,
        mesh.face_owners,
        mesh.face_tags,
        mesh.normals,
        mesh.face_lengths,
    ):
        arr.flags.writeable = False
    return mesh


def build_triangle_mesh(
    vertices: np.ndarray,
    triangles: np.ndarray,
    edge_tags: dict[tuple[int, int], int] | int | BoundaryTag | None = None,
    structured: dict | None = None,
) -> TriangleMesh:
    """Assemble full connectivity for the given vertices and triangles.

    Parameters
    ----------
    vertices, triangles : array_like
        Geometry; triangles must be counterclockwise.
    edge_tags
        Either a single BoundaryTag applied to the whole boundary, or a
        mapping from sorted vertex pairs to tags covering every boundary
        face.

    Raises
    ------
    MeshError
        On non-conforming connectivity (a face shared by more than two
        triangles, out-of-range vertex indices, non-positive areas) or on
        missing boundary tags.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must have shape (n, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must have shape (n, 3)")
    if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise MeshError("vertex index out of range in triangle list")

    n_tri = triangles.shape[0]
    face_index: dict[tuple[int, int], int] = {}
    faces: list[tuple[int, int]] = []
    owners: list[list[tuple[int, int]]] = []
    elem_face = np.empty((n_tri, 3), dtype=np.int64)
    for e in range(n_tri):
        tri = triangles[e]
        for loc in range(3):
            a, b = int(tri[loc]), int(tri[(loc + 1) % 3])
            if a == b:
                raise MeshError(f"degenerate edge in triangle {e}")
            key = (a, b) if a < b else (b, a)
            fid = face_index.get(key)
            if fid is None:
                fid = len(faces)
                face_index[key] = fid
                faces.append(key)
                owners.append([])
            if len(owners[fid]) >= 2:
                raise MeshError(
                    f"face {key} shared by more than two triangles (non-conforming mesh)"
                )
            owners[fid].append((e, loc))
            elem_face[e, loc] = fid

    faces_arr = np.array(faces, dtype=np.int64).reshape(-1, 2)
    face_owners = np.full((len(faces), 2, 2), -1, dtype=np.int64)
    for fid, own in enumerate(owners):
        for slot, (e, loc) in enumerate(own):
            face_owners[fid, slot] = (e, loc)

    # Outward normals for counterclockwise triangles: rotate the edge
    # direction by -90 degrees.
    v = vertices[triangles]
    normals = np.empty((n_tri, 3, 2))
    for loc in range(3):
        edge = v[:, (loc + 1) % 3] - v[:, loc]
        length = np.hypot(edge[:, 0], edge[:, 1])
        if np.any(length <= 0.0):
            raise MeshError("zero-length edge")
        normals[:, loc, 0] = edge[:, 1] / length
        normals[:, loc, 1] = -edge[:, 0] / length

    dv = vertices[faces_arr[:, 1]] - vertices[faces_arr[:, 0]]
    face_lengths = np.hypot(dv[:, 0], dv[:, 1])

    is_boundary = face_owners[:, 1, 0] < 0
    face_tags = np.zeros(len(faces), dtype=np.int64)
    if isinstance(edge_tags, (int, BoundaryTag)) or edge_tags is None:
        uniform = BoundaryTag.ROBIN if edge_tags is None else BoundaryTag(edge_tags)
        face_tags[is_boundary] = int(uniform)
    else:
        missing = []
        for fid in np.flatnonzero(is_boundary):
            key = (int(faces_arr[fid, 0]), int(faces_arr[fid, 1]))
            tag = edge_tags.get(key)
            if tag is None:
                missing.append(key)
            else:
                face_tags[fid] = int(BoundaryTag(tag))
        if missing:
            raise MeshError(f"untagged boundary face(s): {missing[:5]}")
        extra = set(edge_tags) - {
            (int(a), int(b)) for a, b in faces_arr[is_boundary]
        }
        if extra:
            raise MeshError(
                f"boundary segment not an element edge: {sorted(extra)[:5]}"
            )

    h_char = float(face_lengths.max()) if len(faces) else 0.0
    mesh = TriangleMesh(
        vertices=vertices,
        triangles=triangles,
        faces=faces_arr,
        elem_face=elem_face,
        face_owners=face_owners,
        face_tags=face_tags,
        normals=normals,
        face_lengths=face_lengths,
        h_char=h_char,
        structured=structured,
    )
    return _freeze(mesh)


def _resolve_side_tags(tags) -> dict[str, BoundaryTag]:
    if tags is None:
        tags = BoundaryTag.ROBIN
    if isinstance(tags, (int, BoundaryTag)):
        return {side: BoundaryTag(tags) for side in SIDES}
    out = {}
    for side in SIDES:
        if side not in tags:
            raise MeshError(f"missing boundary tag for side '{side}'")
        out[side] = BoundaryTag(tags[side])
    return out


def generate_rectangle(
    lx: float,
    ly: float,
    nx: int,
    ny: int,
    tags=None,
    jitter: float = 0.0,
    jitter_seed: int = 0,
) -> TriangleMesh:
    """Structured triangulation of the rectangle ]0, lx[ x ]0, ly[.

    Each cell of the nx-by-ny grid is split along the diagonal from its
    lower-left to its upper-right corner, giving 2*nx*ny triangles.  The
    generator is deterministic: identical inputs give identical meshes.

    Parameters
    ----------
    tags
        A single BoundaryTag for the whole boundary or a mapping with
        keys "left", "right", "bottom", "top".
    jitter
        Relative amplitude (fraction of the grid spacing, at most 0.3)
        of a seeded random displacement of the interior vertices.
        Perfectly regular grids have highly degenerate discrete spectra
        that are not representative of general meshes; a small jitter
        breaks the symmetry while keeping the connectivity, counts and
        boundary geometry identical.
    """
    if not (lx > 0.0 and ly > 0.0):
        raise MeshError("degenerate rectangle dimensions")
    if nx < 1 or ny < 1:
        raise MeshError("subdivision counts must be >= 1")
    if not 0.0 <= jitter <= 0.3:
        raise MeshError("jitter must be in [0, 0.3]")
    side_tags = _resolve_side_tags(tags)

    xs = np.arange(nx + 1) * (lx / nx)
    ys = np.arange(ny + 1) * (ly / ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    if jitter > 0.0:
        rng = np.random.default_rng(jitter_seed)
        shift = rng.uniform(-jitter, jitter, size=vertices.shape)
        shift[:, 0] *= lx / nx
        shift[:, 1] *= ly / ny
        interior = (
            (vertices[:, 0] > 0.0)
            & (vertices[:, 0] < lx)
            & (vertices[:, 1] > 0.0)
            & (vertices[:, 1] < ly)
        )
        vertices = vertices + shift * interior[:, None]

    def vid(i, j):
        return i * (ny + 1) + j

    triangles = []
    for i in range(nx):
        for j in range(ny):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    triangles = np.array(triangles, dtype=np.int64)

    edge_tags: dict[tuple[int, int], int] = {}
    for j in range(ny):
        edge_tags[tuple(sorted((vid(0, j), vid(0, j + 1))))] = side_tags["left"]
        edge_tags[tuple(sorted((vid(nx, j), vid(nx, j + 1))))] = side_tags["right"]
    for i in range(nx):
        edge_tags[tuple(sorted((vid(i, 0), vid(i + 1, 0))))] = side_tags["bottom"]
        edge_tags[tuple(sorted((vid(i, ny), vid(i + 1, ny))))] = side_tags["top"]

    structured = {
        "x0": 0.0,
        "y0": 0.0,
        "dx": lx / nx,
        "dy": ly / ny,
        "nx": nx,
        "ny": ny,
        "jitter": jitter,
    }
    return build_triangle_mesh(vertices, triangles, edge_tags, structured=structured)


def generate_structured_unit_square(
    n: int, tags=None, jitter: float = 0.0, jitter_seed: int = 0
) -> TriangleMesh:
    """Structured mesh of the unit square with n subdivisions per side."""
    if n < 1:
        raise MeshError("n must be >= 1")
    return generate_rectangle(1.0, 1.0, n, n, tags=tags, jitter=jitter, jitter_seed=jitter_seed)


def validate(mesh: TriangleMesh) -> MeshDiagnostics:
    """Check all mesh invariants; report the first violated one.

    Checks, in order: positive signed areas, face owner counts, the face
    counting identities 3*N_tri = N_bnd + 2*N_int and N_fce = N_bnd +
    N_int, boundary tagging, unit outward normals, and normal
    antisymmetry across interior faces.
    """
    areas = mesh.signed_areas()
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        return MeshDiagnostics(False, f"negative area: triangle {bad}")

    owners = mesh.face_owners
    n_owner = np.sum(owners[:, :, 0] >= 0, axis=1)
    if np.any((n_owner < 1) | (n_owner > 2)):
        return MeshDiagnostics(False, "face owner count: not in {1, 2}")
    counted = np.zeros(mesh.n_faces, dtype=np.int64)
    for loc in range(3):
        np.add.at(counted, mesh.elem_face[:, loc], 1)
    if not np.array_equal(counted, n_owner):
        return MeshDiagnostics(False, "face owner count: incidence mismatch")

    n_bnd = mesh.n_boundary_faces
    n_int = mesh.n_interior_faces
    if 3 * mesh.n_triangles != n_bnd + 2 * n_int:
        return MeshDiagnostics(False, "face counting identity: 3*N_tri")
    if mesh.n_faces != n_bnd + n_int:
        return MeshDiagnostics(False, "face counting identity: N_fce")

    bnd = mesh.is_boundary_face
    if np.any(mesh.face_tags[bnd] == INTERIOR):
        return MeshDiagnostics(False, "untagged boundary face")
    if np.any(mesh.face_tags[~bnd] != INTERIOR):
        return MeshDiagnostics(False, "interior face carries a boundary tag")

    norms = np.hypot(mesh.normals[:, :, 0], mesh.normals[:, :, 1])
    if np.any(np.abs(norms - 1.0) > 1e-12):
        return MeshDiagnostics(False, "normal not unit")
    # Outwardness: normal points from the triangle centroid towards the face.
    v = mesh.vertices[mesh.triangles]
    centroids = v.mean(axis=1)
    for loc in range(3):
        mid = 0.5 * (v[:, loc] + v[:, (loc + 1) % 3])
        dots = np.sum((mid - centroids) * mesh.normals[:, loc], axis=1)
        if np.any(dots <= 0.0):
            return MeshDiagnostics(False, "normal not outward")

    interior = np.flatnonzero(~bnd)
    if interior.size:
        e1, l1 = owners[interior, 0, 0], owners[interior, 0, 1]
        e2, l2 = owners[interior, 1, 0], owners[interior, 1, 1]
        s = mesh.normals[e1, l1] + mesh.normals[e2, l2]
        if np.any(np.abs(s) > _NORMAL_TOL):
            return MeshDiagnostics(False, "normal antisymmetry")

    return MeshDiagnostics(True, "ok")


def _barycentric_inside(mesh: TriangleMesh, elems: np.ndarray, pts: np.ndarray, tol: float):
    v = mesh.vertices[mesh.triangles[elems]]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = pts - v[:, 0]
    s = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    t = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    return (s >= -tol) & (t >= -tol) & (s + t <= 1.0 + tol)


def locate_points(mesh: TriangleMesh, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Element index containing each query point.

    Structured meshes use O(1) grid lookup; with vertex jitter the
    lookup cell is used as a seed for a 3x3 cell neighbourhood search
    (jitter is bounded by 0.3 of the spacing, so the containing triangle
    belongs to that neighbourhood).  Other meshes fall back to a
    barycentric scan.  Raises MeshError for points outside the mesh.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.structured is not None:
        info = mesh.structured
        nx, ny = info["nx"], info["ny"]
        pad = 10 * tol + info.get("jitter", 0.0)
        fx = (pts[:, 0] - info["x0"]) / info["dx"]
        fy = (pts[:, 1] - info["y0"]) / info["dy"]
        if np.any(fx < -pad) or np.any(fx > nx + pad):
            raise MeshError("point outside mesh")
        if np.any(fy < -pad) or np.any(fy > ny + pad):
            raise MeshError("point outside mesh")
        i = np.clip(np.floor(fx).astype(np.int64), 0, nx - 1)
        j = np.clip(np.floor(fy).astype(np.int64), 0, ny - 1)
        if not info.get("jitter", 0.0):
            xi = fx - i
            eta = fy - j
            lower = eta <= xi  # below the lower-left to upper-right diagonal
            return 2 * (i * ny + j) + np.where(lower, 0, 1)
        found = np.full(pts.shape[0], -1, dtype=np.int64)
        bary_tol = tol
        for _ in range(2):  # second pass with a relaxed tolerance
            for di in (0, -1, 1):
                for dj in (0, -1, 1):
                    for tri in (0, 1):
                        missing = found < 0
                        if not np.any(missing):
                            break
                        ii = np.clip(i[missing] + di, 0, nx - 1)
                        jj = np.clip(j[missing] + dj, 0, ny - 1)
                        cand = 2 * (ii * ny + jj) + tri
                        ok = _barycentric_inside(mesh, cand, pts[missing], bary_tol)
                        idx = np.flatnonzero(missing)
                        found[idx[ok]] = cand[ok]
            if np.all(found >= 0):
                return found
            bary_tol = 1e-9
        missing = np.flatnonzero(found < 0)
        raise MeshError(f"point outside mesh: {pts[missing[0]]}")

    out = np.full(pts.shape[0], -1, dtype=np.int64)
    v = mesh.vertices[mesh.triangles]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    for k, pt in enumerate(pts):
        d = pt[None, :] - v[:, 0]
        s = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        t = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        inside = (s >= -tol) & (t >= -tol) & (s + t <= 1.0 + tol)
        hits = np.flatnonzero(inside)
        if hits.size == 0:
            raise MeshError(f"point outside mesh: {pt}")
        out[k] = hits[0]
    return out


# ---------------------------------------------------------------------------
# MSH 2.2 subset I/O
# ---------------------------------------------------------------------------

_LINE_TYPE = 1
_TRIANGLE_TYPE = 2


def write_mesh_file(mesh: TriangleMesh, path) -> None:
    """Write the mesh in the restricted MSH 2.2 ASCII subset."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    lines.append("$Nodes")
    lines.append(str(len(mesh.vertices)))
    for i, (x, y) in enumerate(mesh.vertices, start=1):
        lines.append(f"{i} {x:.17g} {y:.17g} 0")
    lines.append("$EndNodes")
    lines.append("$Elements")
    bnd_ids = np.flatnonzero(mesh.is_boundary_face)
    lines.append(str(len(bnd_ids) + mesh.n_triangles))
    eid = 1
    for fid in bnd_ids:
        a, b = mesh.faces[fid] + 1
        tag = int(mesh.face_tags[fid])
        lines.append(f"{eid} 1 2 {tag} {tag} {a} {b}")
        eid += 1
    for tri in mesh.triangles + 1:
        lines.append(f"{eid} 2 2 0 0 {tri[0]} {tri[1]} {tri[2]}")
        eid += 1
    lines.append("$EndElements")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh_file(path) -> TriangleMesh:
    """Read a mesh from the restricted MSH 2.2 ASCII subset.

    Only 2-node boundary lines (physical tag 1=Dirichlet, 2=Neumann,
    3=Robin) and 3-node triangles are accepted; malformed content raises
    MeshFileError with the offending line number.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()

    def fail(lineno, msg):
        raise MeshFileError(f"{path}:{lineno}: {msg}")

    node_ids: dict[int, int] = {}
    coords: list[tuple[float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    tri_lines: list[int] = []
    edge_tags: dict[tuple[int, int], int] = {}

    i = 0
    n = len(raw)
    seen_nodes = seen_elements = False
    while i < n:
        line = raw[i].strip()
        if line == "$Nodes":
            seen_nodes = True
            i += 1
            if i >= n:
                fail(i, "truncated $Nodes section")
            try:
                count = int(raw[i].split()[0])
            except (ValueError, IndexError):
                fail(i + 1, "malformed node count")
            for k in range(count):
                i += 1
                if i >= n:
                    fail(i, "truncated $Nodes section")
                parts = raw[i].split()
                if len(parts) < 4:
                    fail(i + 1, "malformed node line")
                try:
                    nid = int(parts[0])
                    x, y = float(parts[1]), float(parts[2])
                except ValueError:
                    fail(i + 1, "malformed node line")
                node_ids[nid] = len(coords)
                coords.append((x, y))
            i += 1
            if i >= n or raw[i].strip() != "$EndNodes":
                fail(i + 1, "missing $EndNodes")
        elif line == "$Elements":
            seen_elements = True
            i += 1
            if i >= n:
                fail(i, "truncated $Elements section")
            try:
                count = int(raw[i].split()[0])
            except (ValueError, IndexError):
                fail(i + 1, "malformed element count")
            for k in range(count):
                i += 1
                if i >= n:
                    fail(i, "truncated $Elements section")
                parts = raw[i].split()
                if len(parts) < 4:
                    fail(i + 1, "malformed element line")
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    tags = [int(t) for t in parts[3 : 3 + ntags]]
                    nodes = [int(t) for t in parts[3 + ntags :]]
                except ValueError:
                    fail(i + 1, "malformed element line")
                if etype == _LINE_TYPE:
                    if len(nodes) != 2:
                        fail(i + 1, "boundary line needs exactly 2 nodes")
                    try:
                        a, b = node_ids[nodes[0]], node_ids[nodes[1]]
                    except KeyError:
                        fail(i + 1, "vertex index out of range")
                    if not tags or tags[0] not in (1, 2, 3):
                        fail(i + 1, "boundary line needs a physical tag in {1, 2, 3}")
                    edge_tags[tuple(sorted((a, b)))] = tags[0]
                elif etype == _TRIANGLE_TYPE:
                    if len(nodes) != 3:
                        fail(i + 1, "triangle needs exactly 3 nodes")
                    try:
                        tri = tuple(node_ids[v] for v in nodes)
                    except KeyError:
                        fail(i + 1, "vertex index out of range")
                    triangles.append(tri)
                    tri_lines.append(i + 1)
                else:
                    fail(i + 1, f"unsupported cell type {etype}")
            i += 1
            if i >= n or raw[i].strip() != "$EndElements":
                fail(i + 1, "missing $EndElements")
        i += 1

    if not seen_nodes:
        fail(0, "missing $Nodes section")
    if not seen_elements:
        fail(0, "missing $Elements section")
    if not triangles:
        fail(0, "no triangles in file")

    vertices = np.array(coords, dtype=float)
    tri_arr = np.array(triangles, dtype=np.int64)
    v = vertices[tri_arr]
    areas = 0.5 * (
        (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
        - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    )
    bad = np.flatnonzero(areas <= 0.0)
    if bad.size:
        fail(tri_lines[bad[0]], "non-conforming connectivity: non-positive triangle area")

    try:
        return build_triangle_mesh(vertices, tri_arr, edge_tags)
    except MeshError as exc:
        raise MeshFileError(f"{path}: {exc}") from exc
