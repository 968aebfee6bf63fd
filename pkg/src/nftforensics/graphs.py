"""The four relation graphs (sales, bids, payments, transfers) and component queries."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .model import AuctionStart, Bid, CancelBid, EventStream, Paid, Sale, Transfer, Win

DEFAULT_HUB_DEGREE = 1000


@dataclass(frozen=True, eq=False)
class UserGraph:
    """Directed multigraph over accounts; one edge per relation event.

    ``nodes`` is sorted, so node index order equals address order.  ``edges``
    holds the originating events in stream order, parallel to ``src``/``dst``.
    """

    relation: str
    nodes: tuple
    src: np.ndarray
    dst: np.ndarray
    edges: tuple
    node_index: dict = field(repr=False, compare=False, default_factory=dict)

    @classmethod
    def from_pairs(cls, relation: str, pairs: Sequence[tuple], edges: Sequence = (),
                   nodes: Sequence[str] = ()) -> "UserGraph":
        names = sorted(set(nodes).union(*((a, b) for a, b in pairs)) if pairs else set(nodes))
        index = {n: i for i, n in enumerate(names)}
        src = np.fromiter((index[a] for a, _ in pairs), np.int64, len(pairs))
        dst = np.fromiter((index[b] for _, b in pairs), np.int64, len(pairs))
        edges = tuple(edges) if edges else tuple(pairs)
        return cls(relation, tuple(names), src, dst, edges, index)

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def multiplicity(self, u1: str, u2: str) -> int:
        """Number of parallel edges u1 -> u2."""
        i, j = self.node_index.get(u1), self.node_index.get(u2)
        if i is None or j is None:
            return 0
        return int(np.count_nonzero((self.src == i) & (self.dst == j)))

    def pair_counts(self) -> Counter:
        """Edge multiplicity per ordered node-index pair."""
        return Counter(zip(self.src.tolist(), self.dst.tolist()))

    def csr(self):
        order = np.argsort(self.src, kind="stable")
        indptr = np.zeros(self.n_nodes + 1, np.int64)
        np.cumsum(np.bincount(self.src, minlength=self.n_nodes), out=indptr[1:])
        return indptr, self.dst[order]

    def undirected_degree(self) -> np.ndarray:
        """Distinct neighbours per node, direction ignored, self-loops excluded."""
        a = np.concatenate([self.src, self.dst])
        b = np.concatenate([self.dst, self.src])
        keep = a != b
        if not keep.any():
            return np.zeros(self.n_nodes, np.int64)
        pairs = np.unique(np.stack([a[keep], b[keep]], axis=1), axis=0)
        return np.bincount(pairs[:, 0], minlength=self.n_nodes)


@dataclass(frozen=True)
class BidGraph:
    """Bipartite user -> asset graph of auction activity."""

    users: tuple
    assets: tuple
    edges: tuple  # (user, asset, kind, amount_usd, time, auction_id)

    def __len__(self) -> int:
        return len(self.edges)


class RelationGraphs(NamedTuple):
    sales: UserGraph
    bids: BidGraph
    payments: UserGraph
    transfers: UserGraph


_BID_KIND = {AuctionStart: "auction", Bid: "bid", CancelBid: "cancel_bid", Win: "win"}


def build_graphs(stream: EventStream) -> RelationGraphs:
    """Build G_s, G_b, G_p and G_t from a stream.

    Every sale, auction start, bid, cancel, win, payment and transfer event
    becomes exactly one edge.  Mint and AuctionEnd carry no user-to-user or
    user-to-asset relation and produce no edge.
    """
    sales, payments, transfers, bid_edges = [], [], [], []
    for e in stream.events:
        t = type(e)
        if t is Sale:
            sales.append(e)
        elif t is Paid:
            payments.append(e)
        elif t is Transfer:
            transfers.append(e)
        elif t in _BID_KIND:
            user = e.seller if t is AuctionStart else getattr(e, "bidder", None) or e.winner
            amount = e.reserve_usd if t is AuctionStart else e.amount_usd
            bid_edges.append((user, e.asset, _BID_KIND[t], amount, e.time, e.auction_id))
    return RelationGraphs(
        sales=UserGraph.from_pairs("sale", [(s.seller, s.buyer) for s in sales], sales),
        bids=BidGraph(
            users=tuple(sorted({b[0] for b in bid_edges})),
            assets=tuple(sorted({b[1] for b in bid_edges})),
            edges=tuple(bid_edges),
        ),
        payments=UserGraph.from_pairs("paid", [(p.src, p.dst) for p in payments], payments),
        transfers=UserGraph.from_pairs("transfer", [(x.src, x.dst) for x in transfers], transfers),
    )


@dataclass(frozen=True, eq=False)
class ComponentIndex:
    """Partition of a graph's nodes into components.

    Component ids are ranks by smallest member address, so they depend only on
    the node and edge sets.  Nodes removed by hub exclusion are listed in
    ``excluded`` and belong to no component.
    """

    kind: str
    nodes: tuple
    labels: np.ndarray
    members: tuple
    excluded: tuple = ()
    pair_multiplicity: dict = field(default_factory=dict, repr=False)

    def component_of(self, node: str) -> Optional[int]:
        i = self._index().get(node)
        if i is None:
            return None
        c = int(self.labels[i])
        return None if c < 0 else c

    def same(self, u: str, v: str) -> bool:
        cu = self.component_of(u)
        return cu is not None and cu == self.component_of(v)

    def size(self, cid: int) -> int:
        return len(self.members[cid])

    def __len__(self) -> int:
        return len(self.members)

    def partition(self) -> set:
        return {frozenset(m) for m in self.members}

    def _index(self) -> dict:
        cache = self.__dict__.get("_idx")
        if cache is None:
            cache = {n: i for i, n in enumerate(self.nodes)}
            object.__setattr__(self, "_idx", cache)
        return cache


def _canonical(kind: str, graph: UserGraph, raw: np.ndarray, keep: np.ndarray) -> ComponentIndex:
    n = graph.n_nodes
    labels = np.full(n, -1, np.int64)
    kept = np.flatnonzero(keep)
    if kept.size:
        # Kept node indices are ascending, so first occurrence of each raw label
        # is its smallest member; rank those to get canonical ids.
        _, first, inverse = np.unique(raw[kept], return_index=True, return_inverse=True)
        rank = np.argsort(np.argsort(kept[first]))
        labels[kept] = rank[inverse]
    groups: list[list[str]] = [[] for _ in range(int(labels.max()) + 1 if kept.size else 0)]
    for i in kept.tolist():
        groups[labels[i]].append(graph.nodes[i])
    mult: Counter = Counter()
    for (i, j), c in graph.pair_counts().items():
        if labels[i] >= 0 and labels[i] == labels[j]:
            mult[(graph.nodes[i], graph.nodes[j])] += c
    return ComponentIndex(
        kind=kind,
        nodes=graph.nodes,
        labels=labels,
        members=tuple(tuple(g) for g in groups),
        excluded=tuple(graph.nodes[i] for i in np.flatnonzero(~keep).tolist()),
        pair_multiplicity=dict(mult),
    )


def scc(graph: UserGraph) -> ComponentIndex:
    """Strongly connected components (single-pass Tarjan)."""
    indptr, indices = graph.csr()
    raw = _kernels.scc_labels(graph.n_nodes, indptr, indices)
    return _canonical("scc", graph, raw, np.ones(graph.n_nodes, bool))


def wcc(graph: UserGraph, hub_degree: Optional[int] = None) -> ComponentIndex:
    """Weakly connected components via union-find.

    With ``hub_degree`` set, nodes with more than that many distinct neighbours
    are dropped first (exchange hot wallets would otherwise merge unrelated
    users) and reported in ``excluded``.
    """
    keep = np.ones(graph.n_nodes, bool)
    if hub_degree is not None and graph.n_nodes:
        keep = graph.undirected_degree() <= hub_degree
    raw = _kernels.wcc_labels(graph.n_nodes, graph.src, graph.dst, keep)
    return _canonical("wcc", graph, raw, keep)


def write_edge_list(graph, path) -> None:
    """Debug dump: one tab-separated edge per line (src, dst, annotation fields)."""
    lines = []
    if isinstance(graph, BidGraph):
        for user, asset, kind, amount, t, aid in graph.edges:
            lines.append("\t".join([user, str(asset), kind, str(amount), str(t), aid]))
    else:
        for e in graph.edges:
            if isinstance(e, Sale):
                ann = [str(e.asset), str(e.price_usd), str(e.time)]
                a, b = e.seller, e.buyer
            elif isinstance(e, Paid):
                ann = [str(e.amount_wei)]
                a, b = e.src, e.dst
            elif isinstance(e, Transfer):
                ann = [str(e.asset)]
                a, b = e.src, e.dst
            else:
                a, b = e
                ann = []
            lines.append("\t".join([a, b, *ann]))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
