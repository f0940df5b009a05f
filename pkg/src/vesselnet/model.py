"""Estimator front ends for the social analysis.

``CommunityDetector`` clusters a familiarity graph; ``SocialModel`` runs the
whole training pipeline (contacts -> encounter stats -> graph -> tracked
communities) on a fleet or on precomputed contact events.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .contacts import DEFAULT_RANGE_KM, DEFAULT_TICK, ContactEvent, aggregate_encounters, extract_contacts
from .geo import DEFAULT_MAX_GAP, Fleet
from .social import FamiliarityGraph, SocialParams, build_community_map, build_graph, detect_communities
from .validation import check_events, check_graph, check_positive, check_window


class CommunityDetector(ClusterMixin, BaseEstimator):
    """Modularity-maximising community detection on a ``FamiliarityGraph``.

    After ``fit``, ``nodes_`` lists the graph nodes and ``labels_`` holds the
    community index of each, aligned with ``nodes_``.
    """

    def __init__(self, seed=0):
        self.seed = seed

    def fit(self, X, y=None):
        graph = check_graph(X)
        self.partition_ = detect_communities(graph, self.seed)
        self.nodes_ = np.array(graph.nodes, dtype=object)
        self.labels_ = np.array([self.partition_.assignment[n] for n in graph.nodes], dtype=np.int64)
        self.modularity_ = self.partition_.q
        self.n_communities_ = self.partition_.n_communities
        return self


def clip_events(events, window, tick=DEFAULT_TICK):
    """Restrict contact events to ``[t0, t1)``; events straddling an edge are cut.

    ``t0`` must lie on the events' tick grid.
    """
    t0, t1 = window
    out = []
    for e in events:
        if e.end < t0 or e.start >= t1:
            continue
        end = e.end if e.end < t1 else e.start + (t1 - 1 - e.start) // tick * tick
        out.append(ContactEvent(e.a, e.b, max(e.start, t0), end))
    return out


def split_windows(window, n, tick):
    """``n`` consecutive sub-windows whose edges sit on the tick grid."""
    t0, t1 = window
    n_ticks = -(-(t1 - t0) // tick)
    edges = [t0 + (n_ticks * k // n) * tick for k in range(n + 1)]
    edges[-1] = t1
    return [(a, b) for a, b in zip(edges, edges[1:]) if a < b]


def _with_nodes(graph: FamiliarityGraph, nodes) -> FamiliarityGraph:
    if not nodes:
        return graph
    return FamiliarityGraph(graph.nodes + tuple(nodes), graph.edges)


class SocialModel(BaseEstimator):
    """Familiarity graph and tracked communities learned from a training span."""

    def __init__(
        self,
        alpha=1.0,
        beta=1.0,
        sigma_floor=DEFAULT_TICK,
        n_windows=4,
        min_encounters=1,
        range_km=DEFAULT_RANGE_KM,
        tick=DEFAULT_TICK,
        max_gap=DEFAULT_MAX_GAP,
        seed=0,
    ):
        self.alpha = alpha
        self.beta = beta
        self.sigma_floor = sigma_floor
        self.n_windows = n_windows
        self.min_encounters = min_encounters
        self.range_km = range_km
        self.tick = tick
        self.max_gap = max_gap
        self.seed = seed

    @classmethod
    def from_params(cls, params: SocialParams, **kw) -> "SocialModel":
        return cls(
            alpha=params.alpha,
            beta=params.beta,
            sigma_floor=params.sigma_floor,
            n_windows=params.n_windows,
            min_encounters=params.min_encounters,
            **kw,
        )

    @property
    def social_params(self) -> SocialParams:
        return SocialParams(self.alpha, self.beta, self.sigma_floor, self.n_windows, self.min_encounters).validate()

    def fit(self, X, y=None, window=None):
        """Fit on a ``Fleet`` (contacts are extracted) or on contact events.

        ``window`` is the half-open training span; with events it defaults to
        the span the events cover.
        """
        params = self.social_params
        check_positive(self.tick, "tick")
        nodes = ()
        if isinstance(X, Fleet):
            # nodes without any contact still stand as singleton communities
            nodes = tuple(X.vessel_ids + X.station_ids)
            if window is None:
                span = X.time_span()
                if span is None:
                    raise ValueError("cannot infer a window from an empty fleet")
                window = (span[0], span[1] + 1)
            window = check_window(window)
            events = extract_contacts(X, self.range_km, self.tick, window, self.max_gap)
        else:
            events = check_events(X)
            if window is None:
                if not events:
                    raise ValueError("cannot infer a window from no events")
                window = (min(e.start for e in events), max(e.end for e in events) + self.tick)
            window = check_window(window)
            events = clip_events(events, window, self.tick)

        self.window_ = window
        self.contacts_ = events
        self.stats_ = aggregate_encounters(events, params.sigma_floor)
        self.graph_ = _with_nodes(build_graph(self.stats_, params), nodes)
        spans = split_windows(window, params.n_windows, self.tick)
        graphs = [
            _with_nodes(build_graph(aggregate_encounters(clip_events(events, s, self.tick), params.sigma_floor), params), nodes)
            for s in spans
        ]
        self.window_graphs_ = graphs
        self.community_map_ = build_community_map(graphs, self.seed, spans)
        return self

    def predict(self, nodes):
        """Persistent community id of each node (-1 when unknown)."""
        check_is_fitted(self, "community_map_")
        cm = self.community_map_
        return np.array([-1 if cm.community_of(n) is None else cm.community_of(n) for n in nodes])
