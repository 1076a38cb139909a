"""Parametric axisymmetric GIL cross-section and its triangulation.

Coordinates are ``(r, z)`` in metres. The cross-section in the r-z half plane
is the rectangle ``[r_inner, r_outer] x [0, domain_axial_length]``; the cone
spacer is the band between two straight interface lines inclined at
``cone_angle`` to the radial direction.

Meshing is a mapped (structured) triangulation of the three blocks
(gas / spacer / gas) followed by newest-vertex bisection towards the four
electrode-gas-spacer junctions. Bisection keeps every interface edge on its
straight interface line and bounds the angle degradation, and it is fully
deterministic.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import InvalidGeometry, MeshFailure, NotFound

MAX_CONE_ANGLE = 89.0
MIN_ANGLE_DEG = 10.0


class Region(IntEnum):
    GAS = 0
    SPACER = 1


class Boundary(IntEnum):
    CONDUCTOR = 0
    ENCLOSURE = 1
    SYMMETRY_CUTS = 2


@dataclass(frozen=True)
class GeometryParams:
    """Dimensions of the GIL section. Defaults are illustrative, not measured."""

    r_inner: float = 0.05
    r_outer: float = 0.125
    spacer_axial_center: float = 0.245
    spacer_thickness_axial: float = 0.04
    cone_angle: float = 30.0
    domain_axial_length: float = 0.54
    # axial thickness at r_outer; None keeps both interfaces parallel
    spacer_thickness_outer: float | None = 0.02
    with_spacer: bool = True
    mirror: bool = False


@dataclass(frozen=True)
class GeometryDescription:
    params: GeometryParams
    # interface lines as ((r_inner, z), (r_outer, z)) before any mirroring
    front_interface: tuple | None
    back_interface: tuple | None
    # junction name -> (r, z), mirrored if requested
    junctions: dict
    region_areas: dict

    @property
    def has_spacer(self) -> bool:
        return self.front_interface is not None

    def z_front(self, r):
        (r0, z0), (r1, z1) = self.front_interface
        return z0 + (z1 - z0) * (np.asarray(r) - r0) / (r1 - r0)

    def z_back(self, r):
        (r0, z0), (r1, z1) = self.back_interface
        return z0 + (z1 - z0) * (np.asarray(r) - r0) / (r1 - r0)


def build_geometry(params: GeometryParams) -> GeometryDescription:
    p = params
    dims = (p.r_inner, p.r_outer, p.domain_axial_length)
    if not all(math.isfinite(v) and v > 0 for v in dims):
        raise InvalidGeometry(f"radii and axial length must be positive and finite, got {dims}")
    if p.r_inner >= p.r_outer:
        raise InvalidGeometry(f"r_inner={p.r_inner} must be below r_outer={p.r_outer}")
    L = p.domain_axial_length
    gap = p.r_outer - p.r_inner
    if not p.with_spacer:
        areas = {Region.GAS: gap * L, Region.SPACER: 0.0}
        return GeometryDescription(p, None, None, {}, areas)

    if not (0.0 < p.cone_angle <= MAX_CONE_ANGLE):
        raise InvalidGeometry(
            f"cone_angle={p.cone_angle} deg outside (0, {MAX_CONE_ANGLE}]"
        )
    t_in = p.spacer_thickness_axial
    t_out = t_in if p.spacer_thickness_outer is None else p.spacer_thickness_outer
    if not (t_in > 0 and t_out > 0):
        raise InvalidGeometry("spacer interfaces intersect: axial thickness must be positive")
    rise = gap * math.tan(math.radians(p.cone_angle))
    z_f0 = p.spacer_axial_center - 0.5 * t_in
    z_b0 = p.spacer_axial_center + 0.5 * t_in
    front = ((p.r_inner, z_f0), (p.r_outer, z_f0 + rise))
    back = ((p.r_inner, z_b0), (p.r_outer, z_b0 + rise + (t_out - t_in)))
    if front[0][1] <= 0.0 or back[1][1] >= L or front[1][1] <= 0.0 or back[0][1] >= L:
        raise InvalidGeometry("spacer does not lie strictly inside the axial domain")

    def m(z):
        return L - z if p.mirror else z

    junctions = {
        "conductor_front": (p.r_inner, m(front[0][1])),
        "enclosure_front": (p.r_outer, m(front[1][1])),
        "conductor_back": (p.r_inner, m(back[0][1])),
        "enclosure_back": (p.r_outer, m(back[1][1])),
    }
    spacer_area = 0.5 * (t_in + t_out) * gap
    areas = {Region.GAS: gap * L - spacer_area, Region.SPACER: spacer_area}
    return GeometryDescription(p, front, back, junctions, areas)


@dataclass(frozen=True)
class MeshControls:
    h_max: float = 0.005
    triple_point_h: float = 0.0005
    # growth of the target element size per unit distance from a junction is
    # (grading_ratio - 1)
    grading_ratio: float = 1.3

    def scaled(self, factor: float) -> "MeshControls":
        return replace(self, h_max=self.h_max / factor, triple_point_h=self.triple_point_h / factor)


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray  # (n, 2) r, z
    triangles: np.ndarray  # (m, 3) counter-clockwise
    regions: np.ndarray  # (m,) Region values
    boundary_edges: np.ndarray  # (k, 2)
    boundary_tags: np.ndarray  # (k,) Boundary values
    junctions: dict = field(default_factory=dict)  # name -> node index
    geometry: GeometryDescription | None = None
    triple_point_A: int | None = None
    triple_point_B: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("nodes", "triangles", "regions", "boundary_edges", "boundary_tags"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.nodes[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def centroids(self) -> np.ndarray:
        if "centroids" not in self._cache:
            self._cache["centroids"] = self.nodes[self.triangles].mean(axis=1)
        return self._cache["centroids"]

    def boundary_nodes(self, tag: Boundary) -> np.ndarray:
        return np.unique(self.boundary_edges[self.boundary_tags == tag])

    def interface_edges(self) -> np.ndarray:
        """Edges shared by one GAS and one SPACER triangle, sorted."""
        owners = _edge_owners(self.triangles)
        out = [e for e, ts in owners.items()
               if len(ts) == 2 and self.regions[ts[0]] != self.regions[ts[1]]]
        return np.array(sorted(out), dtype=np.int64).reshape(-1, 2)

    def node_elements(self) -> list:
        if "node_elements" not in self._cache:
            adj = [[] for _ in range(self.n_nodes)]
            for t, tri in enumerate(self.triangles):
                for v in tri:
                    adj[v].append(t)
            self._cache["node_elements"] = adj
        return self._cache["node_elements"]

    def angles_deg(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        out = np.empty((len(p), 3))
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out[:, i] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        return out

    def stats(self) -> dict:
        return {
            "nodes": self.n_nodes,
            "elements": self.n_triangles,
            "min_angle_deg": float(self.angles_deg().min()),
        }


def _edge_owners(triangles) -> dict:
    owners = defaultdict(list)
    for t, (a, b, c) in enumerate(np.asarray(triangles).tolist()):
        for u, v in ((a, b), (b, c), (c, a)):
            owners[(u, v) if u < v else (v, u)].append(t)
    return owners


# -- mapped initial mesh --------------------------------------------------------------

def _mapped_mesh(geom: GeometryDescription, h: float):
    p = geom.params
    L = p.domain_axial_length
    nr = max(2, math.ceil((p.r_outer - p.r_inner) / h))
    r = np.linspace(p.r_inner, p.r_outer, nr + 1)
    if geom.has_spacer:
        zf, zb = geom.z_front(r), geom.z_back(r)
        bounds = [np.zeros_like(r), zf, zb, np.full_like(r, L)]
        block_regions = [Region.GAS, Region.SPACER, Region.GAS]
    else:
        bounds = [np.zeros_like(r), np.full_like(r, L)]
        block_regions = [Region.GAS]
    counts = [max(2, math.ceil(float(np.max(hi - lo)) / h))
              for lo, hi in zip(bounds[:-1], bounds[1:])]

    cols = []
    for j in range(nr + 1):
        zs = [bounds[0][j]]
        for b, n in enumerate(counts):
            lo, hi = bounds[b][j], bounds[b + 1][j]
            zs.extend(lo + (hi - lo) * k / n for k in range(1, n))
            zs.append(hi)
        cols.append(zs)
    nz = len(cols[0])
    nodes = np.array([(r[j], z) for j in range(nr + 1) for z in cols[j]])

    def idx(j, k):
        return j * nz + k

    row_region = []
    for b, n in enumerate(counts):
        row_region.extend([block_regions[b]] * n)

    tris, regs = [], []
    for j in range(nr):
        for k in range(nz - 1):
            a, b, c, d = idx(j, k), idx(j + 1, k), idx(j + 1, k + 1), idx(j, k + 1)
            pa, pb, pc, pd = nodes[a], nodes[b], nodes[c], nodes[d]
            if np.linalg.norm(pc - pa) <= np.linalg.norm(pd - pb):
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
            regs += [row_region[k]] * 2

    junction_nodes = {}
    if geom.has_spacer:
        kf, kb = counts[0], counts[0] + counts[1]
        junction_nodes = {
            "conductor_front": idx(0, kf),
            "enclosure_front": idx(nr, kf),
            "conductor_back": idx(0, kb),
            "enclosure_back": idx(nr, kb),
        }
    return nodes, tris, regs, junction_nodes


# -- newest vertex bisection ----------------------------------------------------------

class _Bisector:
    def __init__(self, nodes, tris, regions):
        self.nodes = [tuple(p) for p in nodes.tolist()]
        self.tris = []
        self.regions = []
        self.alive = []
        self.edge_tris = defaultdict(list)
        self.mid = {}
        for tri, reg in zip(tris, regions):
            self._add(self._longest_edge_last(tri), reg)

    def _longest_edge_last(self, tri):
        # rotate so that the longest edge is (tri[1], tri[2]); ties -> first found
        best, best_len = 0, -1.0
        for i in range(3):
            p, q = self.nodes[tri[(i + 1) % 3]], self.nodes[tri[(i + 2) % 3]]
            ln = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
            if ln > best_len * (1.0 + 1e-12):
                best, best_len = i, ln
        return (tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3])

    @staticmethod
    def _key(u, v):
        return (u, v) if u < v else (v, u)

    def _add(self, tri, region):
        tid = len(self.tris)
        self.tris.append(tri)
        self.regions.append(region)
        self.alive.append(True)
        a, b, c = tri
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_tris[self._key(u, v)].append(tid)
        return tid

    def _remove(self, tid):
        self.alive[tid] = False
        a, b, c = self.tris[tid]
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_tris[self._key(u, v)].remove(tid)

    def _midpoint(self, key):
        if key not in self.mid:
            p, q = self.nodes[key[0]], self.nodes[key[1]]
            self.nodes.append((0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])))
            self.mid[key] = len(self.nodes) - 1
        return self.mid[key]

    def _neighbour(self, tid, key):
        others = [t for t in self.edge_tris[key] if t != tid]
        return others[0] if others else None

    def bisect(self, tid):
        a, b, c = self.tris[tid]
        key = self._key(b, c)
        n = self._neighbour(tid, key)
        if n is not None:
            _, nb, nc = self.tris[n]
            if self._key(nb, nc) != key:
                self.bisect(n)
                n = self._neighbour(tid, key)
        m = self._midpoint(key)
        reg = self.regions[tid]
        self._remove(tid)
        self._add((m, a, b), reg)
        self._add((m, c, a), reg)
        if n is not None:
            na, nb, nc = self.tris[n]
            reg = self.regions[n]
            self._remove(n)
            self._add((m, na, nb), reg)
            self._add((m, nc, na), reg)

    def longest_edge(self, tid):
        # the refinement edge (b, c) need not be the longest after a few bisections
        tri = self.tris[tid]
        return max(math.hypot(self.nodes[tri[i]][0] - self.nodes[tri[i - 1]][0],
                              self.nodes[tri[i]][1] - self.nodes[tri[i - 1]][1]) for i in range(3))

    def refine_to(self, target):
        """Bisect until every triangle's longest edge is <= target(vertices)."""
        while True:
            marked = []
            for tid, tri in enumerate(self.tris):
                if self.alive[tid] and self.longest_edge(tid) > target([self.nodes[v] for v in tri]):
                    marked.append(tid)
            if not marked:
                return
            for tid in marked:
                if self.alive[tid]:
                    self.bisect(tid)

    def arrays(self):
        live = [t for t in range(len(self.tris)) if self.alive[t]]
        tris = np.array([self.tris[t] for t in live], dtype=np.int64)
        regs = np.array([self.regions[t] for t in live], dtype=np.int8)
        return np.array(self.nodes, dtype=float), tris, regs


def _boundary(nodes, triangles, r_inner, r_outer):
    owners = _edge_owners(triangles)
    edges = sorted(e for e, ts in owners.items() if len(ts) == 1)
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    tol = 1e-12 * max(1.0, r_outer)
    r = nodes[:, 0]
    on_in = np.abs(r - r_inner) <= tol
    on_out = np.abs(r - r_outer) <= tol
    tags = np.full(len(edges), Boundary.SYMMETRY_CUTS, dtype=np.int8)
    tags[on_in[edges[:, 0]] & on_in[edges[:, 1]]] = Boundary.CONDUCTOR
    tags[on_out[edges[:, 0]] & on_out[edges[:, 1]]] = Boundary.ENCLOSURE
    return edges, tags


def _assemble_mesh(geom, nodes, tris, regs, junction_nodes):
    p = geom.params
    if p.mirror:
        nodes = nodes.copy()
        nodes[:, 1] = p.domain_axial_length - nodes[:, 1]
        tris = tris[:, [0, 2, 1]]
    edges, tags = _boundary(nodes, tris, p.r_inner, p.r_outer)
    mesh = Mesh(nodes, tris, regs, edges, tags, dict(junction_nodes), geom)
    if geom.has_spacer:
        mesh.triple_point_A, mesh.triple_point_B = locate_triple_points(mesh)
    return mesh


def generate_mesh(geom: GeometryDescription, controls: MeshControls = MeshControls()) -> Mesh:
    c = controls
    if not (c.h_max > 0 and c.triple_point_h > 0):
        raise MeshFailure("mesh sizes must be positive")
    if c.triple_point_h > c.h_max:
        raise MeshFailure(f"triple_point_h={c.triple_point_h} exceeds h_max={c.h_max}")
    if c.grading_ratio <= 1.0:
        raise MeshFailure("grading_ratio must exceed 1")

    nodes, tris, regs, jn = _mapped_mesh(geom, c.h_max)
    bis = _Bisector(nodes, tris, regs)
    if jn:
        pts = np.array([bis.nodes[v] for v in jn.values()])
        slope = c.grading_ratio - 1.0

        def target(verts):
            v = np.asarray(verts)
            d = np.sqrt(((v[:, None, :] - pts[None, :, :]) ** 2).sum(-1)).min()
            return min(c.h_max, c.triple_point_h + slope * d)

        bis.refine_to(target)
    nodes, tris, regs = bis.arrays()
    mesh = _assemble_mesh(geom, nodes, tris, regs, jn)
    _check_quality(mesh)
    return mesh


def _check_quality(mesh: Mesh):
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        raise MeshFailure(f"{int(np.sum(areas <= 0))} triangles with non-positive area")
    amin = float(mesh.angles_deg().min())
    if amin < MIN_ANGLE_DEG:
        raise MeshFailure(f"minimum triangle angle {amin:.2f} deg below {MIN_ANGLE_DEG} deg")


def refine_uniform(mesh: Mesh, levels: int = 1) -> Mesh:
    """Split every triangle into four similar ones ``levels`` times."""
    for _ in range(levels):
        mesh = _red_refine(mesh)
    return mesh


def _red_refine(mesh: Mesh) -> Mesh:
    nodes = [tuple(p) for p in mesh.nodes.tolist()]
    mid = {}

    def midpoint(u, v):
        key = (u, v) if u < v else (v, u)
        if key not in mid:
            p, q = nodes[key[0]], nodes[key[1]]
            nodes.append((0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])))
            mid[key] = len(nodes) - 1
        return mid[key]

    tris = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    regs = np.repeat(mesh.regions, 4)
    edges, tags = [], []
    for (u, v), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist()):
        m = midpoint(u, v)
        edges += [(min(u, m), max(u, m)), (min(m, v), max(m, v))]
        tags += [tag, tag]
    order = sorted(range(len(edges)), key=lambda i: edges[i])
    out = Mesh(
        np.array(nodes, dtype=float),
        np.array(tris, dtype=np.int64),
        regs.astype(np.int8),
        np.array([edges[i] for i in order], dtype=np.int64).reshape(-1, 2),
        np.array([tags[i] for i in order], dtype=np.int8),
        dict(mesh.junctions),
        mesh.geometry,
        mesh.triple_point_A,
        mesh.triple_point_B,
    )
    return out


def layered_annulus_mesh(radii, length: float, n_radial, n_axial: int, regions=None) -> Mesh:
    """Structured mesh of concentric radial layers ``radii[i]..radii[i+1]``.

    ``n_radial`` is an int (per layer) or one count per layer. Layer ``i``
    is tagged ``regions[i]`` (default alternating SPACER, GAS, ...).
    Used for one-dimensional radial reference problems.
    """
    radii = [float(x) for x in radii]
    nl = len(radii) - 1
    if nl < 1 or any(b <= a for a, b in zip(radii[:-1], radii[1:])) or radii[0] <= 0:
        raise InvalidGeometry(f"radii must be positive and increasing, got {radii}")
    if isinstance(n_radial, int):
        n_radial = [n_radial] * nl
    if regions is None:
        regions = [Region.SPACER if i % 2 == 0 else Region.GAS for i in range(nl)]
    r = [radii[0]]
    col_region = []
    for i in range(nl):
        n = n_radial[i]
        r.extend(radii[i] + (radii[i + 1] - radii[i]) * k / n for k in range(1, n))
        r.append(radii[i + 1])
        col_region.extend([regions[i]] * n)
    z = np.linspace(0.0, length, n_axial + 1)
    nz = len(z)
    nodes = np.array([(rj, zk) for rj in r for zk in z])
    tris, regs = [], []
    for j in range(len(r) - 1):
        for k in range(nz - 1):
            a, b = j * nz + k, (j + 1) * nz + k
            tris += [(a, b, b + 1), (a, b + 1, a + 1)]
            regs += [col_region[j]] * 2
    tris = np.array(tris, dtype=np.int64)
    edges, tags = _boundary(nodes, tris, radii[0], radii[-1])
    return Mesh(nodes, tris, np.array(regs, dtype=np.int8), edges, tags)


def _wedge_angle(mesh: Mesh, node: int, region: Region) -> float:
    """Interior angle (deg) of ``region`` at ``node``."""
    total = 0.0
    for t in mesh.node_elements()[node]:
        if mesh.regions[t] != region:
            continue
        tri = list(mesh.triangles[t])
        i = tri.index(node)
        p0 = mesh.nodes[node]
        u = mesh.nodes[tri[(i + 1) % 3]] - p0
        v = mesh.nodes[tri[(i + 2) % 3]] - p0
        total += math.degrees(math.acos(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1, 1)))
    return total


def junction_nodes(mesh: Mesh):
    """Nodes shared by an electrode edge and a gas-spacer interface edge.

    Returns ``(conductor_nodes, enclosure_nodes)`` sorted by node index.
    """
    iface = np.unique(mesh.interface_edges())
    cond = np.intersect1d(iface, mesh.boundary_nodes(Boundary.CONDUCTOR))
    encl = np.intersect1d(iface, mesh.boundary_nodes(Boundary.ENCLOSURE))
    return cond, encl


def locate_triple_points(mesh: Mesh):
    """Return ``(node_A, node_B)``.

    A is the conductor-gas-spacer junction and B the enclosure-gas-spacer
    junction. A cone spacer touches each electrode twice; at each electrode the
    junction where the spacer forms the obtuse wedge is taken, which for an
    inclined cone is the pair lying on opposite interfaces.
    """
    if not np.any(mesh.regions == Region.SPACER) or not np.any(mesh.regions == Region.GAS):
        raise NotFound("mesh has no gas-spacer interface")
    cond, encl = junction_nodes(mesh)
    if len(cond) == 0 or len(encl) == 0:
        raise NotFound("no junction between an electrode and the gas-spacer interface")

    def pick(cands):
        # largest spacer wedge, ties broken by node index
        return int(max(cands, key=lambda v: (round(_wedge_angle(mesh, v, Region.SPACER), 9), -v)))

    return pick(cond), pick(encl)
