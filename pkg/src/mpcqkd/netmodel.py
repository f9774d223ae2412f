"""Optical network model: C2C links, CSC structures, demands, instances.

A CSC ("client-server-client") edge is a pair of adjacent links ``u-p``
and ``p-v`` on which a two-protocol device can be installed with ``p`` as
the (weakly trusted or untrusted) middle node.  CSC edges are stored once
per unordered endpoint pair, canonically with ``u < v``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, ParseError, SchemaVersionError

SCHEMA_VERSION = 1


@dataclass(frozen=True, order=True)
class CscEdge:
    u: int
    p: int
    v: int
    len_up_km: float = field(compare=False)
    len_pv_km: float = field(compare=False)

    @property
    def key(self):
        return (self.u, self.p, self.v)

    def oriented(self):
        """Both traversal orientations ``(u,p,v)`` and ``(v,p,u)``."""
        return ((self.u, self.p, self.v), (self.v, self.p, self.u))


def _canon_edge(u, v, length):
    if u > v:
        u, v = v, u
    return (int(u), int(v), float(length))


def enumerate_csc(n_nodes, c2c_edges):
    """All canonical CSC edges derivable from ``c2c_edges``.

    For every middle node ``p`` and every unordered pair of distinct
    neighbours ``{u, v}`` of ``p`` one edge ``(min, p, max)`` is produced.
    Result is sorted by ``(u, p, v)``.
    """
    adj = [dict() for _ in range(n_nodes)]
    for u, v, length in c2c_edges:
        adj[u][v] = length
        adj[v][u] = length
    out = []
    for p in range(n_nodes):
        nbrs = sorted(adj[p])
        for i, u in enumerate(nbrs):
            for v in nbrs[i + 1:]:
                out.append(CscEdge(u, p, v, adj[p][u], adj[p][v]))
    out.sort()
    return out


@dataclass(frozen=True)
class Network:
    """Undirected weighted graph plus its CSC edge set.

    ``c2c_edges`` holds ``(u, v, length_km)`` with ``u < v``, sorted.
    """

    n_nodes: int
    c2c_edges: tuple
    csc_edges: tuple = ()

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidInput("network needs at least one node")
        edges = tuple(sorted(_canon_edge(*e) for e in self.c2c_edges))
        seen = set()
        for u, v, length in edges:
            if u == v:
                raise InvalidInput(f"self-loop at node {u}")
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise InvalidInput(f"edge ({u},{v}) references unknown node")
            if (u, v) in seen:
                raise InvalidInput(f"duplicate edge ({u},{v})")
            if not length > 0 or not math.isfinite(length):
                raise InvalidInput(f"edge ({u},{v}) length must be positive, got {length}")
            seen.add((u, v))
        object.__setattr__(self, "c2c_edges", edges)
        object.__setattr__(self, "csc_edges", tuple(enumerate_csc(self.n_nodes, edges)))

    @property
    def nodes(self):
        return list(range(self.n_nodes))

    def length(self, u, v):
        return self._lengths[(min(u, v), max(u, v))]

    @property
    def _lengths(self):
        cache = self.__dict__.get("_len_cache")
        if cache is None:
            cache = {(u, v): length for u, v, length in self.c2c_edges}
            object.__setattr__(self, "_len_cache", cache)
        return cache

    def neighbours(self, u):
        return sorted({b if a == u else a for a, b, _ in self.c2c_edges if u in (a, b)})

    def degree(self, u):
        return sum(1 for a, b, _ in self.c2c_edges if u in (a, b))

    def is_connected(self):
        adj = {i: [] for i in range(self.n_nodes)}
        for u, v, _ in self.c2c_edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return len(seen) == self.n_nodes


@dataclass(frozen=True)
class DemandSet:
    """Directed demands ``(s, t) -> kbps``."""

    entries: dict

    def __post_init__(self):
        clean = {}
        for (s, t), kbps in sorted(self.entries.items()):
            s, t = int(s), int(t)
            if s == t:
                raise InvalidInput(f"demand from node {s} to itself")
            if not kbps > 0:
                raise InvalidInput(f"demand ({s},{t}) must be positive, got {kbps}")
            clean[(s, t)] = float(kbps)
        object.__setattr__(self, "entries", clean)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def pairs(self):
        return list(self.entries)

    def scaled(self, factor):
        return DemandSet({k: v * factor for k, v in self.entries.items()})


@dataclass(frozen=True)
class InstanceSpec:
    n_nodes: int
    edge_factor: float = 1.5
    length_range_km: tuple = (10.0, 250.0)
    demand_range_kbps: tuple = (100.0, 300.0)
    demand_src_fraction: float = 1 / 3
    demand_dst_fraction: float = 1 / 5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.length_range_km
        if not 0 < lo <= hi:
            raise InvalidInput(f"bad length range {self.length_range_km}")
        lo, hi = self.demand_range_kbps
        if not 0 < lo <= hi:
            raise InvalidInput(f"bad demand range {self.demand_range_kbps}")
        for name in ("demand_src_fraction", "demand_dst_fraction"):
            frac = getattr(self, name)
            if not 0 < frac <= 1:
                raise InvalidInput(f"{name} must lie in (0, 1], got {frac}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInput("seed must be a 64-bit unsigned integer")

    @property
    def n_edges(self):
        return int(math.floor(self.edge_factor * self.n_nodes + 0.5))


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def _random_tree(n, rng):
    """Uniform labelled spanning tree of K_n via a random Pruefer sequence."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = [int(x) for x in rng.integers(0, n, size=n - 2)]
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    for x in seq:
        leaf = next(i for i in range(n) if degree[i] == 1)
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = [i for i in range(n) if degree[i] == 1]
    edges.append((u, v))
    return edges


def generate_network(spec):
    """Random connected network with ``round(edge_factor * n)`` links."""
    n = spec.n_nodes
    if n < 3:
        raise InvalidInput("generate_network needs at least 3 nodes")
    m = spec.n_edges
    if m < n - 1 or m > n * (n - 1) // 2:
        raise InvalidInput(f"{m} edges cannot form a connected simple graph on {n} nodes")
    rng = _rng(spec.seed, 0)
    pairs = {(min(a, b), max(a, b)) for a, b in _random_tree(n, rng)}
    absent = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in pairs]
    extra = m - len(pairs)
    if extra:
        picks = rng.choice(len(absent), size=extra, replace=False)
        pairs.update(absent[i] for i in sorted(int(i) for i in picks))
    ordered = sorted(pairs)
    lo, hi = spec.length_range_km
    lengths = rng.uniform(lo, hi, size=len(ordered))
    return Network(n, tuple((u, v, float(L)) for (u, v), L in zip(ordered, lengths)))


def generate_demands(network, spec):
    """Pick ``ceil(n*src)`` sources, each talking to ``ceil(n*dst)`` destinations."""
    n = network.n_nodes
    n_src = math.ceil(n * spec.demand_src_fraction)
    n_dst = math.ceil(n * spec.demand_dst_fraction)
    if n < 2 or n_src < 1 or n_dst < 1 or n_dst > n - 1 or n_src > n:
        raise InvalidInput(f"cannot draw {n_src} sources x {n_dst} destinations from {n} nodes")
    rng = _rng(spec.seed, 1)
    sources = sorted(int(x) for x in rng.choice(n, size=n_src, replace=False))
    lo, hi = spec.demand_range_kbps
    entries = {}
    for s in sources:
        others = [v for v in range(n) if v != s]
        dsts = sorted(others[int(i)] for i in rng.choice(len(others), size=n_dst, replace=False))
        for t in dsts:
            entries[(s, t)] = float(rng.uniform(lo, hi))
    return DemandSet(entries)


def linear_strong_relay_counts(n):
    """Strongly trusted relays on an ``n``-node chain: ``(bb84, mpc)``."""
    if n < 2:
        raise InvalidInput("a linear network needs at least 2 nodes")
    return n - 2, (n - 2) // 2


# -- persistence --------------------------------------------------------------

def to_document(network, demands=None, seed=None):
    return {
        "version": SCHEMA_VERSION,
        "nodes": network.n_nodes,
        "edges": [{"u": u, "v": v, "length_km": L} for u, v, L in network.c2c_edges],
        "demands": [] if demands is None else
        [{"s": s, "t": t, "kbps": d} for (s, t), d in demands.items()],
        "seed": seed,
    }


def dumps(network, demands=None, seed=None):
    return json.dumps(to_document(network, demands, seed), sort_keys=True, indent=1) + "\n"


def instance_hash(network, demands):
    return hashlib.sha256(dumps(network, demands).encode()).hexdigest()[:16]


def _require(obj, key, where, kind):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", where)
    if key not in obj:
        raise ParseError(f"missing required key '{key}'", where)
    val = obj[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise ParseError(f"'{key}' must be an integer", f"{where}.{key}")
    if kind is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
        raise ParseError(f"'{key}' must be a number", f"{where}.{key}")
    if kind is list and not isinstance(val, list):
        raise ParseError(f"'{key}' must be an array", f"{where}.{key}")
    return val


def from_document(doc):
    """Inverse of :func:`to_document`; returns ``(network, demands, seed)``."""
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    version = _require(doc, "version", "$", int)
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema version {version} (expected {SCHEMA_VERSION})",
                                 "$.version")
    n = _require(doc, "nodes", "$", int)
    edges = []
    for i, e in enumerate(_require(doc, "edges", "$", list)):
        where = f"$.edges[{i}]"
        edges.append((_require(e, "u", where, int), _require(e, "v", where, int),
                      _require(e, "length_km", where, float)))
    entries = {}
    for i, d in enumerate(doc.get("demands") or []):
        where = f"$.demands[{i}]"
        key = (_require(d, "s", where, int), _require(d, "t", where, int))
        if key in entries:
            raise ParseError(f"duplicate demand {key}", where)
        entries[key] = _require(d, "kbps", where, float)
    seed = doc.get("seed")
    try:
        network = Network(n, tuple(edges))
        demands = DemandSet(entries)
    except InvalidInput as exc:
        raise ParseError(str(exc)) from exc
    return network, demands, seed


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return from_document(doc)


def save(path, network, demands=None, seed=None):
    Path(path).write_text(dumps(network, demands, seed), encoding="utf-8")


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))
