"""Conforming triangular meshes of polygonal domains.

A :class:`Mesh` stores node coordinates and counterclockwise triangles and
derives the edge structure (canonical orientation from the lower to the
higher node index), element adjacency and per-element geometry on
construction.  Meshes are never mutated afterwards.

Local edge ``i`` of a triangle joins its vertices ``i`` and ``(i + 1) % 3``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .errors import CapacityError, MeshError, MeshFormatError

__all__ = [
    "Mesh",
    "build_uniform_grid",
    "build_perturbed_grid",
    "validate",
    "read_mesh",
    "write_mesh",
    "LCG64",
    "DEFAULT_REGULARITY_BOUND",
]

DEFAULT_REGULARITY_BOUND = 10.0
MAX_NODES = np.iinfo(np.int32).max
MESH_HEADER = "wgmesh 2d v1"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh with derived edge and geometry data.

    Parameters
    ----------
    nodes : array_like, shape (N, 2)
    triangles : array_like, shape (M, 3)
        Zero-based node indices, expected counterclockwise.

    Attributes
    ----------
    edges : ndarray, shape (E, 2)
        Node pairs with ``edges[:, 0] < edges[:, 1]``, sorted lexicographically.
    edge_elements : ndarray, shape (E, 2)
        Adjacent triangles in increasing order, ``-1`` where absent.
    boundary : ndarray of bool, shape (E,)
    element_edges : ndarray, shape (M, 3)
        Global edge of each local edge.
    areas, diameters, inradii : ndarray, shape (M,)
    normals : ndarray, shape (M, 3, 2)
        Outward unit normal of each local edge.
    element_edge_lengths : ndarray, shape (M, 3)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(init=False, repr=False)
    edge_elements: np.ndarray = field(init=False, repr=False)
    boundary: np.ndarray = field(init=False, repr=False)
    element_edges: np.ndarray = field(init=False, repr=False)
    edge_multiplicity: np.ndarray = field(init=False, repr=False)
    signed_areas: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)
    diameters: np.ndarray = field(init=False, repr=False)
    inradii: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    element_edge_lengths: np.ndarray = field(init=False, repr=False)
    edge_lengths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise MeshError("triangle references a node index out of range")
        nodes.setflags(write=False)
        tris.setflags(write=False)
        put = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        put("nodes", nodes)
        put("triangles", tris)

        m = len(tris)
        local = np.stack([tris, np.roll(tris, -1, axis=1)], axis=-1)  # (M, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        element_edges = inverse.reshape(m, 3)

        owner = np.repeat(np.arange(m), 3)
        order = np.argsort(inverse, kind="stable")
        edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first = owner[order[starts]]
        edge_elements[:, 0] = first
        two = counts >= 2
        edge_elements[two, 1] = owner[order[starts[two] + 1]]

        v = nodes[tris]  # (M, 3, 2)
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        tangents = np.roll(v, -1, axis=1) - v  # local edge i: v_i -> v_{i+1}
        lengths = np.linalg.norm(tangents, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.stack([tangents[..., 1], -tangents[..., 0]], axis=-1)
            n = n / lengths[..., None]
        # orient by geometry so that reversed triangles still get outward normals
        centroid = v.mean(axis=1)
        mid = 0.5 * (v + np.roll(v, -1, axis=1))
        flip = np.einsum("mij,mij->mi", n, mid - centroid[:, None, :]) < 0
        n[flip] *= -1.0
        perimeter = lengths.sum(axis=1)
        area = np.abs(signed)
        with np.errstate(invalid="ignore", divide="ignore"):
            inradius = 2.0 * area / perimeter

        edge_lengths = np.linalg.norm(nodes[edges[:, 1]] - nodes[edges[:, 0]], axis=1)

        for name, value in [
            ("edges", edges.astype(np.int64)),
            ("edge_elements", edge_elements),
            ("boundary", counts == 1),
            ("element_edges", element_edges.astype(np.int64)),
            ("edge_multiplicity", counts),
            ("signed_areas", signed),
            ("areas", area),
            ("diameters", lengths.max(axis=1)),
            ("inradii", inradius),
            ("normals", n),
            ("element_edge_lengths", lengths),
            ("edge_lengths", edge_lengths),
        ]:
            value.setflags(write=False)
            put(name, value)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        """Mesh size, the largest element diameter."""
        return float(self.diameters.max())

    @property
    def vertices(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (M, 3, 2)."""
        return self.nodes[self.triangles]

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def regularity(self) -> np.ndarray:
        """Diameter over inradius per triangle."""
        return self.diameters / self.inradii

    def edge_flips(self) -> np.ndarray:
        """True where local edge ``i`` runs against the canonical direction."""
        tris = self.triangles
        return tris > np.roll(tris, -1, axis=1)

    def same_as(self, other: "Mesh") -> bool:
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.triangles, other.triangles)
        )


def _grid_connectivity(m: int):
    # exact dyadic coordinates: i / m with m a power of two
    xs = np.arange(m + 1) / m
    X, Y = np.meshgrid(xs, xs)  # row j = y index
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    bl = (j * (m + 1) + i).ravel()
    br = bl + 1
    tl = bl + (m + 1)
    tr = tl + 1
    # diagonal from the top-left to the bottom-right corner of each square
    lower = np.column_stack([bl, br, tl])
    upper = np.column_stack([br, tr, tl])
    tris = np.empty((2 * m * m, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    return nodes, tris


def build_uniform_grid(level: int) -> Mesh:
    """Uniform triangular grid of the unit square.

    Level ``l`` has ``2**(l-1)`` squares per side, each cut by its
    top-left to bottom-right diagonal.
    """
    level = int(level)
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    m = 2 ** (level - 1)
    if (m + 1) ** 2 > MAX_NODES or 2 * m * m > MAX_NODES:
        raise CapacityError(f"level {level} exceeds the int32 index range")
    nodes, tris = _grid_connectivity(m)
    mesh = Mesh(nodes, tris)
    _raise_if_invalid(mesh)
    return mesh


class LCG64:
    """64-bit linear congruential generator.

    ``state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64``
    (Knuth's MMIX constants).  :meth:`uniform` returns the top 53 bits of the
    new state scaled to [0, 1).
    """

    MULTIPLIER = 6364136223846793005
    INCREMENT = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self.MASK

    def next(self) -> int:
        self.state = (self.MULTIPLIER * self.state + self.INCREMENT) & self.MASK
        return self.state

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))


def build_perturbed_grid(
    level: int,
    seed: int,
    magnitude: float,
    regularity_bound: float = DEFAULT_REGULARITY_BOUND,
) -> Mesh:
    """Uniform grid with interior nodes moved by a seeded random offset.

    Interior nodes are visited in index order; each draws a radius fraction
    ``r`` and an angle fraction ``t`` from :class:`LCG64` and moves by
    ``magnitude * r / m`` in direction ``2 pi t``, ``1 / m`` being the grid
    spacing.  If the result violates a mesh invariant the magnitude is halved
    and the process restarts from the same seed, at most three attempts.
    """
    if not 0.0 <= magnitude < 0.3:
        raise ValueError(f"magnitude must lie in [0, 0.3), got {magnitude}")
    base = build_uniform_grid(level)
    m = 2 ** (level - 1)
    on_boundary = np.zeros(base.num_nodes, dtype=bool)
    on_boundary[base.edges[base.boundary].ravel()] = True
    interior = np.flatnonzero(~on_boundary)

    mag = float(magnitude)
    report: list[str] = []
    for _ in range(3):
        rng = LCG64(seed)
        offsets = np.empty((len(interior), 2))
        for row in range(len(interior)):
            r = rng.uniform()
            t = rng.uniform()
            rho = mag * r / m
            offsets[row] = rho * math.cos(2.0 * math.pi * t), rho * math.sin(2.0 * math.pi * t)
        nodes = base.nodes.copy()
        nodes[interior] += offsets
        mesh = Mesh(nodes, base.triangles)
        report = validate(mesh, regularity_bound)
        if not report:
            return mesh
        mag *= 0.5
    raise MeshError("perturbed grid violates mesh invariants after 3 attempts", report)


def validate(
    mesh: Mesh, regularity_bound: float = DEFAULT_REGULARITY_BOUND
) -> list[str]:
    """List every invariant violation of ``mesh``; empty iff valid."""
    out: list[str] = []
    for t in np.flatnonzero(~(mesh.signed_areas > 0)):
        out.append(
            f"orientation: triangle {t} has signed area {mesh.signed_areas[t]:.3e}"
        )
    for e in np.flatnonzero(mesh.edge_multiplicity > 2):
        a, b = mesh.edges[e]
        out.append(
            f"conformity: edge ({a}, {b}) shared by {mesh.edge_multiplicity[e]} triangles"
        )
    degree = np.bincount(mesh.edges[mesh.boundary].ravel(), minlength=mesh.num_nodes)
    for node in np.flatnonzero((degree != 0) & (degree != 2)):
        out.append(
            f"conformity: node {node} touches {degree[node]} boundary edges "
            "(hanging node or non-manifold boundary)"
        )
    used = np.zeros(mesh.num_nodes, dtype=bool)
    used[mesh.triangles.ravel()] = True
    for node in np.flatnonzero(~used):
        out.append(f"conformity: node {node} belongs to no triangle")
    euler = mesh.num_nodes - mesh.num_edges + mesh.num_triangles
    if euler != 1:
        out.append(
            f"euler: nodes - edges + triangles = {euler}, expected 1"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = mesh.regularity
    for t in np.flatnonzero(~(ratio <= regularity_bound)):
        out.append(
            f"regularity: triangle {t} has diameter/inradius {ratio[t]:.3f} "
            f"> {regularity_bound}"
        )
    return out


def _raise_if_invalid(mesh: Mesh, regularity_bound: float = DEFAULT_REGULARITY_BOUND):
    report = validate(mesh, regularity_bound)
    if report:
        raise MeshError("mesh failed validation:\n  " + "\n  ".join(report), report)


def write_mesh(mesh: Mesh, stream: TextIO | None = None) -> str | None:
    """Write ``mesh`` in the ``wgmesh 2d v1`` text format.

    Coordinates use ``repr`` so that reading back is exact.  With no stream
    the text is returned.
    """
    buf = io.StringIO() if stream is None else stream
    buf.write(MESH_HEADER + "\n")
    buf.write(f"nodes {mesh.num_nodes}\n")
    for x, y in mesh.nodes:
        buf.write(f"{float(x)!r} {float(y)!r}\n")
    buf.write(f"triangles {mesh.num_triangles}\n")
    for i, j, k in mesh.triangles:
        buf.write(f"{i} {j} {k}\n")
    if stream is None:
        return buf.getvalue()
    return None


def _content_lines(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        yield lineno, text


def read_mesh(
    stream: TextIO | str,
    regularity_bound: float = DEFAULT_REGULARITY_BOUND,
    check: bool = True,
) -> Mesh:
    """Parse the ``wgmesh 2d v1`` format.

    ``stream`` may be a file object or the text itself.  The mesh is
    validated unless ``check`` is false.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = _content_lines(stream)

    def take(what):
        try:
            return next(lines)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file while reading {what}") from None

    def count(keyword):
        lineno, text = take(f"'{keyword}' header")
        parts = text.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshFormatError(f"expected '{keyword} <count>', got {text!r}", lineno)
        try:
            n = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"invalid count {parts[1]!r}", lineno) from None
        if n < 0:
            raise MeshFormatError(f"negative count {n}", lineno)
        return n

    lineno, text = take("header")
    if " ".join(text.split()) != MESH_HEADER:
        raise MeshFormatError(f"expected header {MESH_HEADER!r}, got {text!r}", lineno)

    n_nodes = count("nodes")
    nodes = np.empty((n_nodes, 2))
    for row in range(n_nodes):
        lineno, text = take("node coordinates")
        parts = text.split()
        if len(parts) != 2:
            raise MeshFormatError(f"expected 2 coordinates, got {len(parts)}", lineno)
        try:
            nodes[row] = float(parts[0]), float(parts[1])
        except ValueError:
            raise MeshFormatError(f"invalid coordinate in {text!r}", lineno) from None
        if not np.all(np.isfinite(nodes[row])):
            raise MeshFormatError("non-finite coordinate", lineno)

    n_tris = count("triangles")
    tris = np.empty((n_tris, 3), dtype=np.int64)
    for row in range(n_tris):
        lineno, text = take("triangle")
        parts = text.split()
        if len(parts) != 3:
            raise MeshFormatError(f"expected 3 node indices, got {len(parts)}", lineno)
        try:
            idx = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"invalid node index in {text!r}", lineno) from None
        for i in idx:
            if not 0 <= i < n_nodes:
                raise MeshFormatError(
                    f"node index {i} out of range [0, {n_nodes})", lineno
                )
        tris[row] = idx

    extra = next(lines, None)
    if extra is not None:
        raise MeshFormatError(f"trailing content {extra[1]!r}", extra[0])

    mesh = Mesh(nodes, tris)
    if check:
        _raise_if_invalid(mesh, regularity_bound)
    return mesh
