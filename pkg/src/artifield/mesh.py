"""Triangle meshes: storage, derived topology, OBJ I/O, midpoint subdivision."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, TopologyError


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh.

    ``vertices`` is a (V, 3) float64 array in meters, ``faces`` a (F, 3)
    int array of vertex indices.  Edges are always derived from the faces,
    never stored, so topology queries cannot go stale.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidArgumentError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidArgumentError(f"faces must be (F, 3), got {f.shape}")
        if not np.isfinite(v).all():
            raise InvalidArgumentError("non-finite vertex coordinates")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise InvalidArgumentError("face index out of range")
            degenerate = (
                (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            )
            if degenerate.any():
                raise InvalidArgumentError(
                    f"{int(degenerate.sum())} degenerate faces (repeated indices)"
                )
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) int array."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    @property
    def num_edges(self) -> int:
        return len(self.edges())

    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_faces

    def edge_face_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges and the number of faces incident to each."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def require_edge_manifold(self):
        _, counts = self.edge_face_counts()
        if (counts > 2).any():
            raise TopologyError(
                f"{int((counts > 2).sum())} edges shared by more than two faces"
            )

    def vertex_neighbors(self) -> list[np.ndarray]:
        """Adjacency list from the edge set."""
        adj: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for a, b in self.edges():
            adj[a].append(b)
            adj[b].append(a)
        return [np.array(sorted(n), dtype=np.int64) for n in adj]

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        c = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(c, axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit face normals by winding; zero-area faces yield zero vectors."""
        v = self.vertices
        f = self.faces
        c = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return np.divide(c, n, out=np.zeros_like(c), where=n > 0)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        return TriMesh(vertices, self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def subdivide_midpoint(
    mesh: TriMesh, weights: np.ndarray | None = None
) -> tuple[TriMesh, np.ndarray | None]:
    """One level of midpoint subdivision.

    Every edge gains a midpoint vertex and each face splits into four.
    New skinning-weight rows are the mean of the edge endpoints' rows,
    renormalized to guard against float drift.  Counts obey
    V' = V + E, F' = 4F, E' = 2E + 3F.
    """
    mesh.require_edge_manifold()
    v = mesh.vertices
    f = mesh.faces
    edges = mesh.edges()
    edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}

    midpoints = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    new_vertices = np.concatenate([v, midpoints])

    nv = len(v)

    def mid(a: int, b: int) -> int:
        return nv + edge_index[(a, b) if a < b else (b, a)]

    new_faces = np.empty((4 * len(f), 3), dtype=np.int64)
    for i, (a, b, c) in enumerate(f):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        new_faces[4 * i + 0] = (a, mab, mca)
        new_faces[4 * i + 1] = (mab, b, mbc)
        new_faces[4 * i + 2] = (mca, mbc, c)
        new_faces[4 * i + 3] = (mab, mbc, mca)

    out_mesh = TriMesh(new_vertices, new_faces)

    if weights is None:
        return out_mesh, None
    w = np.asarray(weights, dtype=np.float64)
    if w.shape[0] != nv:
        raise InvalidArgumentError(
            f"weight rows ({w.shape[0]}) must match vertex count ({nv})"
        )
    new_rows = 0.5 * (w[edges[:, 0]] + w[edges[:, 1]])
    new_rows /= new_rows.sum(axis=1, keepdims=True)
    return out_mesh, np.concatenate([w, new_rows])


def subdivision_counts(v: int, e: int, f: int, levels: int = 1) -> tuple[int, int, int]:
    """Closed-form (V, E, F) after ``levels`` midpoint subdivisions."""
    for _ in range(levels):
        v, e, f = v + e, 2 * e + 3 * f, 4 * f
    return v, e, f


def synthetic_open_mesh(n_vertices: int, n_faces: int) -> TriMesh:
    """Disk-topology triangle mesh with exact vertex/face counts.

    Builds a triangle strip (one new vertex per face) and then closes
    ears along the boundary (one new face, no new vertex) until the face
    budget is met.  Usable for topology-level tests that need specific
    counts, e.g. a stand-in with MANO-like V=778, F=1538.
    """
    if n_vertices < 3 or n_faces < n_vertices - 2:
        raise InvalidArgumentError("infeasible vertex/face combination for a strip")
    # Strip: vertices 0..n-1, faces (i, i+1, i+2).
    strip_faces = n_vertices - 2
    faces = [(i, i + 1, i + 2) for i in range(strip_faces)]
    remaining = n_faces - strip_faces

    # The two long strip boundaries carry the even and the odd vertices.
    # Closing an ear over two consecutive boundary edges adds one face and
    # no vertex; each halving pass consumes pairs of edges left to right.
    for side in (0, 1):
        chain = list(range(side, n_vertices, 2))
        while remaining > 0 and len(chain) >= 3:
            nxt = []
            i = 0
            while i + 2 < len(chain) and remaining > 0:
                a, b, c = chain[i], chain[i + 1], chain[i + 2]
                faces.append((a, b, c) if side == 0 else (c, b, a))
                nxt.append(a)
                remaining -= 1
                i += 2
            nxt.extend(chain[i:])
            if len(nxt) == len(chain):
                break
            chain = nxt
    if remaining:
        raise InvalidArgumentError(
            f"could not reach {n_faces} faces ({remaining} short); counts too skewed"
        )
    t = np.arange(n_vertices, dtype=np.float64)
    vertices = np.stack([np.cos(0.05 * t), np.sin(0.05 * t), 0.01 * t], axis=1)
    return TriMesh(vertices, np.array(faces, dtype=np.int64))


def save_obj(path, mesh: TriMesh):
    with open(path, "w") as fh:
        fh.write("# artifield OBJ export\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def load_obj(path) -> TriMesh:
    vertices = []
    faces = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(idx) != 3:
                    raise InvalidArgumentError("only triangular faces are supported")
                faces.append(idx)
    return TriMesh(np.array(vertices), np.array(faces, dtype=np.int64))
