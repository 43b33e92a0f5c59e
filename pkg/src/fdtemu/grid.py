"""Icosahedral spherical meshes and bilinear resampling of lat-lon fields.

The mesh is built by repeated edge-midpoint subdivision of the canonical
icosahedron, giving 10*4**level + 2 vertices on the unit sphere.  Rectilinear
fields are moved onto the mesh with bilinear interpolation in (lat, lon)
degrees, wrapping longitude on periodic grids and clamping latitudes poleward
of the first/last grid row to nearest-row interpolation.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

MAX_LEVEL = 8

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

# canonical icosahedron: 12 vertices from the three golden-ratio rectangles
_BASE_VERTICES = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=np.float64,
)

_BASE_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def vertex_count(level: int) -> int:
    """Number of vertices of the level-`level` subdivided icosahedron."""
    return 10 * 4**level + 2


def _latlon_from_xyz(vertices):
    lat = np.degrees(np.arcsin(np.clip(vertices[:, 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(vertices[:, 1], vertices[:, 0])) % 360.0
    return lat, lon


@dataclass(frozen=True)
class IcoMesh:
    """Subdivided icosahedral mesh on the unit sphere.

    Vertices are unit 3-vectors in deterministic construction order; `edges`
    are the unique undirected vertex pairs of the subdivided triangulation.
    """

    level: int
    vertices: np.ndarray        # (N, 3) float64, unit norm
    lat: np.ndarray             # (N,) degrees in [-90, 90]
    lon: np.ndarray             # (N,) degrees in [0, 360)
    edges: np.ndarray           # (E, 2) int, each row sorted, rows sorted

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


def build_icosphere(level: int) -> IcoMesh:
    """Subdivide the canonical icosahedron `level` times and project to the sphere."""
    if not isinstance(level, (int, np.integer)) or level < 0:
        raise ValidationError(f"level must be a non-negative integer, got {level!r}")
    if level > MAX_LEVEL:
        raise ValidationError(
            f"level {level} exceeds the supported maximum of {MAX_LEVEL} "
            f"(a level-{MAX_LEVEL} mesh already has {vertex_count(MAX_LEVEL)} vertices)"
        )

    verts = [v / np.linalg.norm(v) for v in _BASE_VERTICES]
    faces = list(_BASE_FACES)

    for _ in range(level):
        midpoint_index: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            idx = midpoint_index.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                idx = len(verts)
                verts.append(m)
                midpoint_index[key] = idx
            return idx

        next_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            next_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = next_faces

    vertices = np.array(verts, dtype=np.float64)
    vertices /= np.linalg.norm(vertices, axis=1, keepdims=True)

    edge_set = set()
    for a, b, c in faces:
        edge_set.add((a, b) if a < b else (b, a))
        edge_set.add((b, c) if b < c else (c, b))
        edge_set.add((c, a) if c < a else (a, c))
    edges = np.array(sorted(edge_set), dtype=np.int64)

    lat, lon = _latlon_from_xyz(vertices)
    mesh = IcoMesh(level=int(level), vertices=vertices, lat=lat, lon=lon, edges=edges)
    if mesh.n_vertices != vertex_count(level):
        raise ValidationError(
            f"subdivision produced {mesh.n_vertices} vertices, "
            f"expected {vertex_count(level)}"
        )
    return mesh


def mesh_coords(mesh: IcoMesh) -> np.ndarray:
    """Per-vertex (lat, lon) pairs in degrees, shape (N, 2)."""
    return np.column_stack([mesh.lat, mesh.lon])


@dataclass
class GeoGrid:
    """Rectilinear latitude-longitude grid.

    Longitudes are canonicalized into [0, 360); `periodic_lon` marks grids
    spanning the full circle, enabling wrapped interpolation across 360/0.
    """

    lats: np.ndarray
    lons: np.ndarray
    periodic_lon: bool = field(default=False)

    def __post_init__(self):
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.lons = np.asarray(self.lons, dtype=np.float64) % 360.0
        if self.lats.ndim != 1 or self.lats.size == 0:
            raise ValidationError("grid latitudes must be a non-empty 1-D sequence")
        if self.lons.ndim != 1 or self.lons.size == 0:
            raise ValidationError("grid longitudes must be a non-empty 1-D sequence")
        if np.any(self.lats < -90.0) or np.any(self.lats > 90.0):
            raise ValidationError("grid latitudes must lie within [-90, 90]")
        if self.lats.size > 1 and not np.all(np.diff(self.lats) > 0):
            raise ValidationError("grid latitudes must be strictly increasing")
        if self.lons.size > 1 and not np.all(np.diff(self.lons) > 0):
            raise ValidationError(
                "grid longitudes must be strictly increasing after reduction into [0, 360)"
            )
        if self.periodic_lon:
            if self.lons.size < 2:
                raise ValidationError("a periodic grid needs at least two longitudes")
            wrap_gap = 360.0 - (self.lons[-1] - self.lons[0])
            if wrap_gap <= 0 or wrap_gap > 2.0 * np.max(np.diff(self.lons)):
                raise ValidationError(
                    "periodic_lon grid does not span the full circle: "
                    f"wrap gap {wrap_gap:.3f} degrees"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.lats.size, self.lons.size


def resample_to_mesh(field_values, grid: GeoGrid, mesh: IcoMesh) -> np.ndarray:
    """Bilinearly interpolate a (nlat, nlon) field onto the mesh vertices.

    Uses the difference form F00 + t*dF_lat + u*dF_lon + t*u*dF_cross so a
    constant field is reproduced exactly at every vertex.
    """
    f = np.asarray(field_values, dtype=np.float64)
    if f.shape != grid.shape:
        raise ValidationError(
            f"field shape {f.shape} does not match grid shape {grid.shape}"
        )
    if not np.all(np.isfinite(f)):
        raise ValidationError("field contains non-finite values")

    lats, lons = grid.lats, grid.lons
    nlat, nlon = grid.shape

    # latitude: clamp poleward of the outermost rows (nearest-row in lat)
    if nlat == 1:
        i0 = np.zeros(mesh.n_vertices, dtype=np.intp)
        i1 = i0
        t = np.zeros(mesh.n_vertices)
    else:
        i0 = np.clip(np.searchsorted(lats, mesh.lat, side="right") - 1, 0, nlat - 2)
        i1 = i0 + 1
        t = np.clip((mesh.lat - lats[i0]) / (lats[i1] - lats[i0]), 0.0, 1.0)

    lon_v = mesh.lon % 360.0
    if nlon == 1:
        j0 = np.zeros(mesh.n_vertices, dtype=np.intp)
        j1 = j0
        u = np.zeros(mesh.n_vertices)
    elif grid.periodic_lon:
        j = np.searchsorted(lons, lon_v, side="right") - 1
        j0 = np.where(j < 0, nlon - 1, j)
        j1 = (j0 + 1) % nlon
        span = (lons[j1] - lons[j0]) % 360.0
        u = ((lon_v - lons[j0]) % 360.0) / span
    else:
        j0 = np.clip(np.searchsorted(lons, lon_v, side="right") - 1, 0, nlon - 2)
        j1 = j0 + 1
        u = np.clip((lon_v - lons[j0]) / (lons[j1] - lons[j0]), 0.0, 1.0)

    f00 = f[i0, j0]
    f01 = f[i0, j1]
    f10 = f[i1, j0]
    f11 = f[i1, j1]
    return f00 + t * (f10 - f00) + u * (f01 - f00) + t * u * (f11 - f10 - f01 + f00)


MESH_MANIFEST = "mesh.json"
MESH_VERTICES = "vertices.f64"


def save_mesh(mesh: IcoMesh, outdir: str) -> str:
    """Write the text manifest plus the binary unit-vector sidecar; returns manifest path."""
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "level": mesh.level,
        "vertex_count": mesh.n_vertices,
        "coordinates_latlon": [[float(a), float(b)] for a, b in mesh_coords(mesh)],
        "vertices_file": MESH_VERTICES,
    }
    path = os.path.join(outdir, MESH_MANIFEST)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    mesh.vertices.astype("<f8").tofile(os.path.join(outdir, MESH_VERTICES))
    return path


def load_mesh(path: str) -> IcoMesh:
    """Load a mesh manifest, validating the sidecar against a fresh rebuild."""
    if os.path.isdir(path):
        path = os.path.join(path, MESH_MANIFEST)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read mesh manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"mesh manifest is not valid JSON: {exc}") from exc
    for key in ("level", "vertex_count", "vertices_file"):
        if key not in manifest:
            raise FormatError(f"mesh manifest missing key {key!r}")
    level = int(manifest["level"])
    sidecar = os.path.join(os.path.dirname(path), manifest["vertices_file"])
    raw = np.fromfile(sidecar, dtype="<f8")
    n = int(manifest["vertex_count"])
    if raw.size != 3 * n:
        raise FormatError(
            f"vertex sidecar holds {raw.size} floats, expected {3 * n} "
            f"for {n} vertices"
        )
    vertices = raw.reshape(n, 3)
    if n != vertex_count(level):
        raise FormatError(
            f"manifest claims level {level} with {n} vertices; "
            f"expected {vertex_count(level)}"
        )
    mesh = build_icosphere(level)
    if not np.array_equal(mesh.vertices, vertices):
        raise FormatError("vertex sidecar disagrees with deterministic reconstruction")
    return mesh
