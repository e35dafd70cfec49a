"""Random unit-disk networks, interface-conflict graphs, link rates and bias fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

from .rng import stream

DEFAULT_DENSITY = 8.0 / math.pi


class TopologyError(RuntimeError):
    pass


@dataclass(eq=False)
class NetworkGraph:
    """Directed connectivity graph over points in a square.

    ``links`` holds directed (src, dst) pairs sorted lexicographically, so the
    outgoing links of node ``i`` occupy the contiguous index range
    ``out_start[i]:out_start[i + 1]``.
    """

    positions: np.ndarray
    links: np.ndarray
    area_side: float
    radius: float = 1.0

    @classmethod
    def from_positions(cls, positions, area_side: float, radius: float = 1.0) -> "NetworkGraph":
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        pairs = cKDTree(positions).query_pairs(radius, output_type="ndarray")
        if len(pairs):
            links = np.concatenate([pairs, pairs[:, ::-1]]).astype(np.int64)
            links = links[np.lexsort((links[:, 1], links[:, 0]))]
        else:
            links = np.zeros((0, 2), dtype=np.int64)
        return cls(positions=positions, links=links, area_side=float(area_side), radius=radius)

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @cached_property
    def src(self) -> np.ndarray:
        return self.links[:, 0].copy()

    @cached_property
    def dst(self) -> np.ndarray:
        return self.links[:, 1].copy()

    @cached_property
    def out_start(self) -> np.ndarray:
        return np.searchsorted(self.src, np.arange(self.n_nodes + 1)).astype(np.int64)

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.out_start)

    @cached_property
    def link_index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): e for e, (a, b) in enumerate(self.links)}

    @cached_property
    def reverse(self) -> np.ndarray:
        idx = self.link_index
        return np.array([idx[(int(b), int(a))] for a, b in self.links], dtype=np.int64)

    @cached_property
    def in_links(self) -> list[np.ndarray]:
        order = np.argsort(self.dst, kind="stable")
        bounds = np.searchsorted(self.dst[order], np.arange(self.n_nodes + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.n_nodes)]

    def out_links(self, i: int) -> np.ndarray:
        return np.arange(self.out_start[i], self.out_start[i + 1])

    def neighbors(self, i: int) -> np.ndarray:
        return self.dst[self.out_start[i]:self.out_start[i + 1]]

    def adjacency(self) -> csr_matrix:
        n = self.n_nodes
        data = np.ones(self.n_links)
        return csr_matrix((data, (self.src, self.dst)), shape=(n, n))

    def is_connected(self) -> bool:
        if self.n_nodes <= 1:
            return True
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def undirected_edges(self) -> np.ndarray:
        return self.links[self.src < self.dst]

    def to_networkx(self) -> nx.Graph:
        h = nx.Graph()
        h.add_nodes_from(range(self.n_nodes))
        h.add_edges_from(map(tuple, self.undirected_edges().tolist()))
        return h


def generate_topology(n_nodes: int, density: float = DEFAULT_DENSITY, seed: int = 0,
                      max_retries: int = 1000, radius: float = 1.0) -> NetworkGraph:
    """Sample a connected unit-disk graph with ``n_nodes`` uniform points.

    The square has area ``n_nodes / density``. Whole point sets are redrawn
    until the graph is connected.
    """
    if n_nodes < 2:
        raise ValueError("n_nodes must be at least 2")
    if density <= 0:
        raise ValueError("density must be positive")
    side = math.sqrt(n_nodes / density)
    rng = stream(seed, "topology")
    for _ in range(max_retries):
        pts = rng.uniform(0.0, side, size=(n_nodes, 2))
        g = NetworkGraph.from_positions(pts, side, radius)
        if g.is_connected():
            return g
    raise TopologyError(f"no connected instance within {max_retries} draws")


@dataclass(eq=False)
class ConflictGraph:
    """Conflict graph whose vertices are directed links.

    ``nbr`` is a padded neighbor table (sentinel value ``n_links``) used by
    the vectorized schedulers.
    """

    n_links: int
    edges: np.ndarray
    nbr: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n_links: int, edges) -> "ConflictGraph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            edges = np.sort(edges, axis=1)
            edges = edges[edges[:, 0] != edges[:, 1]]
            edges = np.unique(edges, axis=0)
        adj: list[list[int]] = [[] for _ in range(n_links)]
        for a, b in edges.tolist():
            adj[a].append(b)
            adj[b].append(a)
        width = max((len(a) for a in adj), default=0)
        nbr = np.full((n_links, max(width, 1)), n_links, dtype=np.int64)
        for e, a in enumerate(adj):
            nbr[e, :len(a)] = sorted(a)
        return cls(n_links=n_links, edges=edges, nbr=nbr)

    def neighbors(self, e: int) -> np.ndarray:
        row = self.nbr[e]
        return row[row < self.n_links]

    def degree(self) -> np.ndarray:
        return (self.nbr < self.n_links).sum(axis=1)

    def mean_degree(self) -> float:
        return float(self.degree().mean()) if self.n_links else 0.0

    def edge_set(self) -> set[tuple[int, int]]:
        return set(map(tuple, self.edges.tolist()))

    def mean_link_degree(self, g: NetworkGraph) -> float:
        """Mean conflict degree counted over physical (undirected) links.

        A directed link and its reverse share one radio pair, so both
        directions collapse to a single conflict vertex here.
        """
        und = np.sort(g.links, axis=1)
        key = und[:, 0] * g.n_nodes + und[:, 1]
        degs = []
        for e in np.flatnonzero(g.src < g.dst):
            nb = self.neighbors(e)
            keys = set(key[nb].tolist())
            keys.discard(int(key[e]))
            degs.append(len(keys))
        return float(np.mean(degs)) if degs else 0.0


def build_conflict_graph(g: NetworkGraph, interference_radius: float | None = None) -> ConflictGraph:
    """Interface-conflict graph: two directed links conflict iff they share a node.

    With ``interference_radius`` set, links whose closest endpoints lie within
    that distance also conflict.
    """
    incident: list[list[int]] = [[] for _ in range(g.n_nodes)]
    for e, (a, b) in enumerate(g.links.tolist()):
        incident[a].append(e)
        incident[b].append(e)
    pairs = []
    for inc in incident:
        inc = np.asarray(inc, dtype=np.int64)
        if len(inc) > 1:
            a, b = np.triu_indices(len(inc), k=1)
            pairs.append(np.stack([inc[a], inc[b]], axis=1))
    if interference_radius is not None and g.n_links:
        close = cKDTree(g.positions).query_pairs(interference_radius, output_type="ndarray")
        for u, v in close.tolist():
            for x, y in ((u, v), (v, u)):
                ex = np.asarray(incident[x], dtype=np.int64)
                ey = np.asarray(incident[y], dtype=np.int64)
                if len(ex) and len(ey):
                    pairs.append(np.stack(np.meshgrid(ex, ey, indexing="ij"), axis=-1).reshape(-1, 2))
    edges = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    return ConflictGraph.from_edges(g.n_links, edges)


@dataclass(eq=False)
class LinkRateModel:
    """Long-term link rates and the per-slot realized-rate sampler.

    Realized rates follow N(r_e, noise_std^2) truncated to r_e +/- halfwidth,
    rounded to the nearest nonnegative integer.
    """

    long_term: np.ndarray
    noise_std: float = 3.0
    halfwidth: float = 9.0
    low: float = 10.0
    high: float = 42.0

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        r = self.long_term
        x = rng.normal(r, self.noise_std)
        bad = np.abs(x - r) > self.halfwidth
        while bad.any():
            x[bad] = rng.normal(r[bad], self.noise_std)
            bad = np.abs(x - r) > self.halfwidth
        return np.maximum(np.rint(x), 0).astype(np.int64)


def sample_link_rates(g: NetworkGraph, rng: np.random.Generator, low: float = 10.0,
                      high: float = 42.0, noise_std: float = 3.0, halfwidth: float = 9.0) -> LinkRateModel:
    r = rng.uniform(low, high, size=g.n_links)
    return LinkRateModel(r, noise_std=noise_std, halfwidth=halfwidth, low=low, high=high)


@dataclass(eq=False)
class BiasField:
    """Shortest weighted distance ``bias[i, c]`` from node i to destination c."""

    bias: np.ndarray
    edge_weights: np.ndarray

    def gradient(self, g: NetworkGraph) -> np.ndarray:
        """``B_i^(c) - B_j^(c)`` for every link (i, j), shape (links, commodities)."""
        return self.bias[g.src] - self.bias[g.dst]


def compute_bias_field(g: NetworkGraph, rates: LinkRateModel) -> BiasField:
    r = np.asarray(rates.long_term, dtype=float)
    if np.any(r <= 0):
        raise ValueError("link rates must be positive")
    delta = r.mean() * r.max() / r
    n = g.n_nodes
    w = csr_matrix((delta, (g.src, g.dst)), shape=(n, n))
    dist = shortest_path(w, method="D", directed=True)
    if not np.all(np.isfinite(dist)):
        raise TopologyError("bias field undefined on a disconnected graph")
    return BiasField(bias=dist, edge_weights=delta)


def edge_betweenness_ranking(g: NetworkGraph) -> np.ndarray:
    """Directed link indices ordered by undirected edge betweenness, highest first."""
    bc = nx.edge_betweenness_centrality(g.to_networkx(), normalized=False)
    score = np.array([bc[(a, b)] if (a, b) in bc else bc[(b, a)] for a, b in g.links.tolist()])
    score = np.round(score, 9)
    return np.lexsort((np.arange(g.n_links), -score))


def save_topology(path, g: NetworkGraph, rates: LinkRateModel | None = None) -> None:
    r = rates.long_term if rates is not None else np.ones(g.n_links)
    lines = [f"nodes {g.n_nodes} side {g.area_side!r}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(g.positions.tolist())]
    lines += [f"{a} {b} {float(re)!r}" for (a, b), re in zip(g.links.tolist(), r.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path) -> tuple[NetworkGraph, np.ndarray]:
    """Read a topology file; returns the graph and the per-link long-term rates."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = rows[0]
    if len(head) != 4 or head[0] != "nodes" or head[2] != "side":
        raise ValueError(f"{path}: bad header line")
    n, side = int(head[1]), float(head[3])
    pos = np.array([[float(x), float(y)] for _, x, y in rows[1:n + 1]]).reshape(-1, 2)
    link_rows = rows[n + 1:]
    links = np.array([[int(a), int(b)] for a, b, _ in link_rows], dtype=np.int64).reshape(-1, 2)
    rates = np.array([float(r) for *_, r in link_rows])
    order = np.lexsort((links[:, 1], links[:, 0])) if len(links) else np.zeros(0, dtype=np.int64)
    g = NetworkGraph(positions=pos, links=links[order], area_side=side)
    return g, rates[order]
