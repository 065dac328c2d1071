"""Sampling of random connection model realizations and counting statistics.

Randomness is split into two independent streams per replication:

* point positions come from a generator seeded by the replication's seed
  sequence;
* per-pair edge coin flips come from a counter-based hash of the unordered
  point-index pair, keyed by a 64-bit replication key.

Because the pair uniforms depend only on (key, i, j), two graphs built from
the same sampled points and key but different connection functions share
their randomness edge for edge.  Truncating the connection function then
removes exactly the edges whose probability dropped to zero, which turns the
truncation/scaling coupling identities into bit-exact statements instead of
statistical ones.

Pairs farther apart than the search reach are never examined; the discarded
connection mass is bounded and recorded on the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .connfn import ConnectionFunction
from .quadrature import Region


class SimulationError(RuntimeError):
    """Violated simulation precondition (margin, reach, or support)."""


_ALL_PAIRS_LIMIT = 2000  # below this, brute-force all pairs beats tree queries


@dataclass(frozen=True)
class SimPolicy:
    """Bias budgets for window margin and pair-search reach.

    eps_margin bounds lam_n * vol(K) * (connection mass beyond the margin);
    eps_edges bounds the expected number of pair edges lost to the finite
    search reach in one realization.
    """

    eps_margin: float = 1e-4
    eps_edges: float = 1e-2

    def __post_init__(self):
        if not (self.eps_margin > 0 and self.eps_edges > 0):
            raise ValueError("bias budgets must be > 0")


DEFAULT_POLICY = SimPolicy()


@dataclass(frozen=True)
class SimWindow:
    """Observation region K plus a sampling margin around it."""

    K: Region
    margin: float
    bias_bound: float = 0.0  # bound on lam_n * vol(K) * tail mass beyond margin

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")

    @property
    def box(self) -> Region:
        return self.K.expand(self.margin) if self.margin > 0 else self.K


def margin_policy(
    conn: ConnectionFunction,
    d: int,
    lam_n: float,
    K: Region,
    eps: float,
) -> SimWindow:
    """Smallest margin t with lam_n * vol(K) * tail(t) <= eps.

    Exact (zero bias) for bounded-support connection functions.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    supp = conn.support_radius
    if supp is not None:
        return SimWindow(K=K, margin=supp, bias_bound=0.0)
    t = conn.tail_radius(eps / (lam_n * K.volume), d)
    return SimWindow(K=K, margin=t, bias_bound=eps)


# -- pair-indexed uniforms ----------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def pair_uniform(key: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Deterministic uniforms indexed by unordered point pairs.

    Uses the splitmix64 finaliser on key + golden * (triangular pair code).
    Independent of pair enumeration order and of worker layout.
    """
    lo = np.minimum(i, j).astype(np.uint64)
    hi = np.maximum(i, j).astype(np.uint64)
    with np.errstate(over="ignore"):
        code = hi * (hi - np.uint64(1)) // np.uint64(2) + lo
        z = np.uint64(key) + (code + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


# -- graphs --------------------------------------------------------------------


@dataclass
class PointGraph:
    """Sampled points plus Bernoulli edges with cached lengths."""

    points: np.ndarray  # (N, d)
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_dist: np.ndarray
    window: SimWindow
    reach: float
    conn: ConnectionFunction
    lam_n: float
    pair_key: int
    edge_bias: float = 0.0  # bound on expected edges lost beyond the reach

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_points, dtype=np.int64)
        if self.edge_i.size:
            np.add.at(deg, self.edge_i, 1)
            np.add.at(deg, self.edge_j, 1)
        return deg

    def endpoint_mask(self, edge_mask: np.ndarray) -> np.ndarray:
        """Vertices incident to at least one edge in the masked set."""
        out = np.zeros(self.n_points, dtype=bool)
        out[self.edge_i[edge_mask]] = True
        out[self.edge_j[edge_mask]] = True
        return out


def sample_points(lam_n: float, box: Region, rng: np.random.Generator) -> np.ndarray:
    """Poisson(lam_n * vol) points placed i.i.d. uniformly in the box."""
    if not lam_n > 0:
        raise SimulationError("lam_n must be > 0")
    count = rng.poisson(lam_n * box.volume)
    pts = rng.random((count, box.dim))
    return np.array(box.lower) + pts * np.array(box.sides)


def _candidate_pairs(points: np.ndarray, reach: float):
    n = points.shape[0]
    if n < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    if n <= _ALL_PAIRS_LIMIT:
        i, j = np.triu_indices(n, k=1)
        dist = np.linalg.norm(points[i] - points[j], axis=1)
        keep = dist <= reach
        return i[keep].astype(np.int64), j[keep].astype(np.int64), dist[keep]
    pairs = cKDTree(points).query_pairs(reach, output_type="ndarray")
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    i = pairs[:, 0].astype(np.int64)
    j = pairs[:, 1].astype(np.int64)
    dist = np.linalg.norm(points[i] - points[j], axis=1)
    return i, j, dist


def connect(
    points: np.ndarray,
    conn: ConnectionFunction,
    window: SimWindow,
    reach: float,
    pair_key: int,
    lam_n: float,
    edge_bias: float = 0.0,
) -> PointGraph:
    """Bernoulli(conn(distance)) edges on all pairs within the search reach."""
    i, j, dist = _candidate_pairs(points, reach)
    if i.size:
        prob = conn.eval(dist)
        u = pair_uniform(pair_key, i, j)
        keep = u < prob
        i, j, dist = i[keep], j[keep], dist[keep]
    return PointGraph(
        points=points,
        edge_i=i,
        edge_j=j,
        edge_dist=dist,
        window=window,
        reach=reach,
        conn=conn,
        lam_n=lam_n,
        pair_key=pair_key,
        edge_bias=edge_bias,
    )


def regraph(graph: PointGraph, conn: ConnectionFunction) -> PointGraph:
    """Rebuild the edge set under a different connection function.

    Same points, same reach, same pair key: per-pair uniforms are shared, so
    the result is coupled realization-by-realization with the source graph.
    """
    return connect(
        graph.points,
        conn,
        graph.window,
        graph.reach,
        graph.pair_key,
        graph.lam_n,
        graph.edge_bias,
    )


def simulate_graph(
    conn: ConnectionFunction,
    lam_n: float,
    d: int,
    K: Region,
    seed_seq: np.random.SeedSequence,
    policy: SimPolicy = DEFAULT_POLICY,
    min_reach: float = 0.0,
    min_margin: float = 0.0,
) -> PointGraph:
    """Sample points in K plus margin and connect them under conn."""
    window = margin_policy(conn, d, lam_n, K, policy.eps_margin)
    if min_margin > window.margin:
        window = SimWindow(K=K, margin=min_margin, bias_bound=window.bias_bound)
    supp = conn.support_radius
    if supp is not None:
        reach = supp
        edge_bias = 0.0
    else:
        vol = window.box.volume
        reach = conn.tail_radius(2.0 * policy.eps_edges / (lam_n**2 * vol), d)
        edge_bias = policy.eps_edges
    reach = max(reach, min_reach)

    ss_points, ss_pairs = seed_seq.spawn(2)
    rng = np.random.default_rng(ss_points)
    key = int(ss_pairs.generate_state(1, np.uint64)[0])
    points = sample_points(lam_n, window.box, rng)
    return connect(points, conn, window, reach, key, lam_n, edge_bias)


# -- counting statistics --------------------------------------------------------


def count_isolated(graph: PointGraph, K: Region) -> int:
    """Vertices in K with no edge at all."""
    in_k = K.contains(graph.points) if graph.n_points else np.zeros(0, dtype=bool)
    return int(np.count_nonzero(in_k & (graph.degrees() == 0)))


def count_truncation_family(graph: PointGraph, K: Region, r0: float) -> tuple[int, int]:
    """(J, L) from one graph: J = vertices in K with no neighbor within r0;
    L = those among them with at least one neighbor beyond r0.

    J equals the isolated count of the coupled graph whose connection
    function is cut inside r0, and J = I + L holds exactly per realization.
    """
    if r0 < 0:
        raise SimulationError("r0 must be >= 0")
    if r0 > graph.reach * (1.0 + 1e-12):
        raise SimulationError(
            f"r0 = {r0:.6g} exceeds the graph search reach {graph.reach:.6g}"
        )
    if graph.n_points == 0:
        return 0, 0
    near = graph.edge_dist <= r0
    has_near = graph.endpoint_mask(near)
    has_far = graph.endpoint_mask(~near)
    in_k = K.contains(graph.points)
    j_mask = in_k & ~has_near
    l_mask = j_mask & has_far
    return int(np.count_nonzero(j_mask)), int(np.count_nonzero(l_mask))


def _component_sizes(graph: PointGraph) -> np.ndarray:
    n = graph.n_points
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = sparse.coo_matrix(
        (np.ones(graph.edge_i.size), (graph.edge_i, graph.edge_j)), shape=(n, n)
    )
    _, labels = csgraph.connected_components(adj, directed=False)
    sizes = np.bincount(labels)
    return sizes[labels]


def _require_component_window(graph: PointGraph, B: Region, r: int):
    supp = graph.conn.support_radius
    if supp is None:
        raise SimulationError("component statistics need a bounded-support connection function")
    if r < 1:
        raise SimulationError("component size must be >= 1")
    need = B.expand(r * supp)
    box = graph.window.box
    if any(nl < bl - 1e-12 or nu > bu + 1e-12 for nl, bl, nu, bu in zip(
        need.lower, box.lower, need.upper, box.upper
    )):
        raise SimulationError(
            f"window margin too small: components of size {r} need {r * supp:.6g} "
            "beyond the target region"
        )


def count_components(graph: PointGraph, B: Region, r: int) -> float:
    """1/r times the number of vertices in B lying in components of size r.

    The window must extend r * (support radius) beyond B: any in-window
    component of size <= r touching B then stays clear of the window
    boundary, so its size is exact and classification is bias-free.
    """
    _require_component_window(graph, B, r)
    if graph.n_points == 0:
        return 0.0
    sizes = _component_sizes(graph)
    mask = B.contains(graph.points) & (sizes == r)
    return float(np.count_nonzero(mask)) / r


@dataclass(frozen=True)
class LatticeRegion:
    """Axis-aligned box of integer lattice sites; cell z covers z + (0,1]^d."""

    origin: tuple[int, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        if len(self.origin) != len(self.shape) or not self.shape:
            raise ValueError("origin and shape must have equal positive length")
        if any(s < 1 for s in self.shape):
            raise ValueError("shape entries must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def boundary_size(self) -> int:
        inner = np.prod([max(0, s - 2) for s in self.shape])
        return self.size - int(inner)

    @property
    def bounding_region(self) -> Region:
        return Region(tuple(float(o) for o in self.origin), tuple(float(s) for s in self.shape))

    def cell(self, site: tuple[int, ...]) -> Region:
        return Region(tuple(float(z) for z in site), (1.0,) * self.dim)


def component_cell_counts(graph: PointGraph, lattice: LatticeRegion, r: int) -> np.ndarray:
    """Per-cell component statistic over the lattice, shaped like the lattice.

    Entry at site z is 1/r times the number of vertices in z + (0,1]^d whose
    component has exactly r vertices.
    """
    _require_component_window(graph, lattice.bounding_region, r)
    counts = np.zeros(lattice.shape, dtype=float)
    if graph.n_points == 0:
        return counts
    sizes = _component_sizes(graph)
    sel = sizes == r
    pts = graph.points[sel]
    if pts.shape[0] == 0:
        return counts
    cells = np.ceil(pts).astype(np.int64) - 1  # x in (z, z+1]
    rel = cells - np.array(lattice.origin)
    ok = np.all((rel >= 0) & (rel < np.array(lattice.shape)), axis=1)
    rel = rel[ok]
    if rel.shape[0]:
        flat = np.ravel_multi_index(tuple(rel.T), lattice.shape)
        counts.reshape(-1)[:] = np.bincount(flat, minlength=lattice.size) / r
    return counts


def dump_realization(graph: PointGraph, path: str):
    """Line-oriented text dump of one realization (points, then edges)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# points {graph.n_points} dim {graph.dim}\n")
        for row in graph.points:
            fh.write("point " + " ".join(repr(float(x)) for x in row) + "\n")
        fh.write(f"# edges {graph.edge_i.size}\n")
        for i, j, dist in zip(graph.edge_i, graph.edge_j, graph.edge_dist):
            fh.write(f"edge {int(i)} {int(j)} {float(dist)!r}\n")
