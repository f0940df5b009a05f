"""Familiarity graphs, modularity-based community detection and tracking."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .contacts import DEFAULT_TICK, EncounterStats, canonical
from .errors import ParameterError


@dataclass(frozen=True)
class SocialParams:
    alpha: float = 1.0
    beta: float = 1.0
    sigma_floor: float = DEFAULT_TICK
    n_windows: int = 4
    # pairs met fewer times carry no measurable interval spread and get no edge
    min_encounters: int = 1

    def validate(self) -> "SocialParams":
        if not self.alpha > 0:
            raise ParameterError("alpha must be > 0")
        if not self.beta >= 0:
            raise ParameterError("beta must be >= 0")
        if not self.sigma_floor > 0:
            raise ParameterError("sigma_floor must be > 0")
        if self.n_windows < 1:
            raise ParameterError("n_windows must be >= 1")
        if self.min_encounters < 1:
            raise ParameterError("min_encounters must be >= 1")
        return self


def familiarity(M: int, sigma: float, params: SocialParams = SocialParams()) -> float:
    """Link strength ``M**alpha / sigma**beta``."""
    return M**params.alpha / sigma**params.beta


@dataclass(frozen=True, eq=False)
class FamiliarityGraph:
    """Undirected weighted graph; ``edges`` maps canonical ``(i, j)`` to weight."""

    nodes: tuple[str, ...]
    edges: Mapping[tuple[str, str], float]

    def __post_init__(self):
        edges = {}
        for (a, b), w in self.edges.items():
            if a == b:
                raise ValueError(f"self-loop on {a!r}")
            if not (math.isfinite(w) and w > 0):
                raise ValueError(f"edge {(a, b)} has non-positive or non-finite weight {w}")
            edges[canonical(a, b)] = float(w)
        nodes = set(self.nodes)
        for a, b in edges:
            nodes.update((a, b))
        object.__setattr__(self, "nodes", tuple(sorted(nodes)))
        object.__setattr__(self, "edges", dict(sorted(edges.items())))

    @cached_property
    def adjacency(self) -> dict[str, dict[str, float]]:
        adj = {n: {} for n in self.nodes}
        for (a, b), w in self.edges.items():
            adj[a][b] = w
            adj[b][a] = w
        return adj

    @cached_property
    def strength(self) -> dict[str, float]:
        return {n: sum(nb.values()) for n, nb in self.adjacency.items()}

    @property
    def total_weight(self) -> float:
        return sum(self.edges.values())

    def weight(self, a: str, b: str) -> float:
        return self.adjacency.get(a, {}).get(b, 0.0)

    def scaled(self, factor: float) -> "FamiliarityGraph":
        return FamiliarityGraph(self.nodes, {e: w * factor for e, w in self.edges.items()})

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("i", "j", "weight"))
        for (a, b), wt in self.edges.items():
            w.writerow((a, b, repr(wt)))
        return out.getvalue()

    @classmethod
    def from_csv(cls, content) -> "FamiliarityGraph":
        if isinstance(content, (bytes, bytearray)):
            content = content.decode("utf-8")
        rows = list(csv.reader(io.StringIO(content)))
        if not rows or tuple(rows[0]) != ("i", "j", "weight"):
            raise ValueError("expected header i,j,weight")
        return cls((), {(a, b): float(w) for a, b, w in rows[1:] if a})


def build_graph(stats: Mapping[tuple[str, str], EncounterStats], params: SocialParams = SocialParams()) -> FamiliarityGraph:
    nodes = set()
    edges = {}
    for pair, st in stats.items():
        nodes.update(pair)
        if st.M >= params.min_encounters:
            edges[pair] = familiarity(st.M, st.sigma, params)
    return FamiliarityGraph(tuple(nodes), edges)


# -- modularity ---------------------------------------------------------------

def modularity(graph: FamiliarityGraph, assignment: Mapping[str, object]) -> float:
    """Weighted Newman modularity of ``assignment`` on ``graph``."""
    missing = [n for n in graph.nodes if n not in assignment]
    if missing:
        raise ValueError(f"assignment misses nodes {missing[:5]}")
    m = graph.total_weight
    if m == 0:
        return 0.0
    internal: dict[object, float] = {}
    tot: dict[object, float] = {}
    for (a, b), w in graph.edges.items():
        if assignment[a] == assignment[b]:
            internal[assignment[a]] = internal.get(assignment[a], 0.0) + w
    for n, s in graph.strength.items():
        tot[assignment[n]] = tot.get(assignment[n], 0.0) + s
    return sum(internal.get(c, 0.0) / m - (t / (2 * m)) ** 2 for c, t in tot.items())


@dataclass(frozen=True)
class Partition:
    assignment: dict[str, int]
    q: float

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def communities(self) -> list[frozenset]:
        groups: dict[int, set] = {}
        for n, c in self.assignment.items():
            groups.setdefault(c, set()).add(n)
        return [frozenset(groups[c]) for c in sorted(groups)]


# Relative tie tolerance on modularity gains; keeps decisions invariant under
# weight rescaling and bounds the residual single-move gain well below 1e-12.
_TIE = 1e-13


class _Level:
    """Weighted graph with self-loops on integer nodes, used during aggregation."""

    def __init__(self, nbrs: list[dict[int, float]], loops: list[float]):
        self.nbrs = nbrs
        self.loops = loops
        self.k = np.array([sum(nb.values()) + 2 * lp for nb, lp in zip(nbrs, loops)])
        self.m2 = float(self.k.sum())

    def __len__(self):
        return len(self.nbrs)


def _local_moves(level: _Level, com: np.ndarray, order, allow_new: bool) -> bool:
    """Greedy single-node moves until none improves modularity. Mutates ``com``."""
    n = len(level)
    m2 = level.m2
    tot = np.zeros(n)
    size = np.zeros(n, dtype=np.int64)
    np.add.at(tot, com, level.k)
    np.add.at(size, com, 1)
    free = [c for c in range(n) if size[c] == 0]
    free.reverse()

    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in order:
            ki = level.k[i]
            if ki == 0:
                continue
            ci = com[i]
            wc: dict[int, float] = {}
            for j, w in level.nbrs[i].items():
                cj = com[j]
                wc[cj] = wc.get(cj, 0.0) + w
            tot[ci] -= ki
            size[ci] -= 1
            stay = wc.get(ci, 0.0) - tot[ci] * ki / m2
            best_c, best_gain = ci, stay
            for c in sorted(wc):
                if c == ci:
                    continue
                g = wc[c] - tot[c] * ki / m2
                if g > best_gain + _TIE * ki:
                    best_c, best_gain = c, g
            if allow_new and size[ci] > 0 and 0.0 > best_gain + _TIE * ki:
                best_c = free.pop()
            if best_c != ci:
                if size[ci] == 0:
                    free.append(ci)
                improved = moved_any = True
            com[i] = best_c
            tot[best_c] += ki
            size[best_c] += 1
    return moved_any


def _aggregate(level: _Level, com: np.ndarray):
    labels = {}
    for c in com:
        labels.setdefault(int(c), len(labels))
    new = np.array([labels[int(c)] for c in com], dtype=np.int64)
    k = len(labels)
    nbrs: list[dict[int, float]] = [{} for _ in range(k)]
    loops = [0.0] * k
    for i in range(len(level)):
        ci = new[i]
        loops[ci] += level.loops[i]
        for j, w in level.nbrs[i].items():
            cj = new[j]
            if ci == cj:
                if i < j:
                    loops[ci] += w
            else:
                nbrs[ci][cj] = nbrs[ci].get(cj, 0.0) + w
    return _Level(nbrs, loops), new


def detect_communities(graph: FamiliarityGraph, seed=0) -> Partition:
    """Louvain-style modularity maximisation.

    Alternates greedy node moves and community contraction until a level
    changes nothing, then polishes on the original graph so that no single
    node relocation (including into a fresh singleton) raises modularity.
    Visit order is a seeded shuffle.
    """
    nodes = list(graph.nodes)
    if not nodes:
        raise ValueError("graph has no nodes")
    idx = {n: i for i, n in enumerate(nodes)}
    rng = np.random.default_rng(seed)
    nbrs = [{idx[j]: w for j, w in graph.adjacency[n].items()} for n in nodes]
    base = _Level(nbrs, [0.0] * len(nodes))

    membership = np.arange(len(nodes))
    level = base
    while True:
        com = np.arange(len(level))
        order = rng.permutation(len(level))
        if not _local_moves(level, com, order, allow_new=False):
            break
        level, new = _aggregate(level, com)
        membership = new[membership]
        if len(level) == 1:
            break

    _local_moves(base, membership, rng.permutation(len(nodes)), allow_new=True)

    # canonical labels: order of each community's smallest node id
    labels: dict[int, int] = {}
    assignment = {}
    for n in nodes:
        c = int(membership[idx[n]])
        labels.setdefault(c, len(labels))
        assignment[n] = labels[c]
    return Partition(assignment, modularity(graph, assignment))


# -- temporal community tracking ----------------------------------------------

@dataclass(frozen=True)
class CommunityMap:
    windows: list[tuple[tuple[int, int], Partition]]
    persistent_ids: list[dict[int, int]]
    members: dict[int, frozenset]
    current: dict[str, int]
    latest: dict[str, int] = field(repr=False)

    @cached_property
    def _closeness(self) -> dict[tuple[int, int], int]:
        out = {}
        pids = sorted(self.members)
        for i, a in enumerate(pids):
            out[(a, a)] = len(self.members[a])
            for b in pids[i + 1:]:
                shared = len(self.members[a] & self.members[b])
                if shared:
                    out[(a, b)] = out[(b, a)] = shared
        return out

    def closeness(self, a, b) -> int:
        if a is None or b is None:
            return 0
        return self._closeness.get((a, b), 0)

    def community_of(self, node: str):
        """Persistent community of ``node``: latest window it appeared in."""
        return self.latest.get(node)

    def closeness_matrix_csv(self) -> str:
        pids = sorted(self.members)
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["community"] + [str(p) for p in pids])
        for a in pids:
            w.writerow([a] + [self.closeness(a, b) for b in pids])
        return out.getvalue()

    def assignment_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("node_id", "persistent_community_id"))
        for n in sorted(self.latest):
            w.writerow((n, self.latest[n]))
        return out.getvalue()


def _jaccard(a: frozenset, b: frozenset) -> float:
    return len(a & b) / len(a | b)


def build_community_map(graphs: Iterable[FamiliarityGraph], seed=0, spans=None) -> CommunityMap:
    """Detect communities per window and link them into persistent ids.

    Consecutive windows are matched greedily by Jaccard overlap of member
    sets (largest first; ties go to the smaller persistent id). Unmatched
    communities receive fresh ids.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one window")
    spans = list(spans) if spans is not None else [(i, i + 1) for i in range(len(graphs))]

    windows, pid_maps = [], []
    members: dict[int, set] = {}
    latest: dict[str, int] = {}
    prev: dict[int, frozenset] = {}
    next_pid = 0
    for span, g in zip(spans, graphs):
        if not g.nodes:
            part = Partition({}, 0.0)
            windows.append((span, part))
            pid_maps.append({})
            continue
        part = detect_communities(g, seed)
        comms = part.communities()
        candidates = []
        for ci, cset in enumerate(comms):
            for pid, pset in prev.items():
                if cset & pset:
                    candidates.append((-_jaccard(cset, pset), pid, ci))
        candidates.sort()
        mapping: dict[int, int] = {}
        used = set()
        for _, pid, ci in candidates:
            if ci in mapping or pid in used:
                continue
            mapping[ci] = pid
            used.add(pid)
        for ci in range(len(comms)):
            if ci not in mapping:
                mapping[ci] = next_pid
                next_pid += 1
        prev = {}
        for ci, cset in enumerate(comms):
            pid = mapping[ci]
            members.setdefault(pid, set()).update(cset)
            prev[pid] = cset
            for n in cset:
                latest[n] = pid
        windows.append((span, part))
        pid_maps.append(mapping)

    last_part = windows[-1][1]
    current = {n: pid_maps[-1][c] for n, c in last_part.assignment.items()}
    return CommunityMap(
        windows,
        pid_maps,
        {p: frozenset(s) for p, s in sorted(members.items())},
        current,
        latest,
    )
