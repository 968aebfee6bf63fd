"""Trading malpractice detectors: wash trading, shill bidding, bid shielding.

All detectors are pure functions of an :class:`EventStream` (plus the graphs
and component indices derived from it) and return findings in a deterministic
order.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import NamedTuple, Optional

import numpy as np

from .graphs import (
    DEFAULT_HUB_DEGREE,
    ComponentIndex,
    RelationGraphs,
    UserGraph,
    build_graphs,
    scc,
    wcc,
)
from .model import AuctionEnd, AuctionStart, Bid, CancelBid, EventStream, Sale, Win

SCC_SALES = "SCC_sales"
WCC_TRANSFER = "WCC_transfer"
WCC_PAYMENT = "WCC_payment"
_TRIGGER_PRIORITY = (SCC_SALES, WCC_TRANSFER, WCC_PAYMENT)

EPSILON_MODES = ("all_pairs", "heavy_edges")


class ConfigError(ValueError):
    """A detector threshold outside its valid range."""


# ------------------------------------------------------------------ configs

@dataclass(frozen=True)
class WashConfig:
    """Wash-trade thresholds.

    ``epsilon_mode`` picks how the heavy-trading filter is read:
    ``all_pairs`` requires every sale-connected pair inside an SCC to have at
    least ``epsilon`` sales across both directions; ``heavy_edges`` drops
    light pairs first and takes the SCCs of what remains.
    """

    epsilon: int = 10
    max_component_users: int = 50
    epsilon_mode: str = "all_pairs"
    hub_degree: Optional[int] = DEFAULT_HUB_DEGREE

    def __post_init__(self):
        if self.epsilon < 1:
            raise ConfigError("epsilon must be >= 1")
        if self.max_component_users < 2:
            raise ConfigError("max_component_users must be >= 2")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ConfigError(f"epsilon_mode must be one of {EPSILON_MODES}")
        if self.hub_degree is not None and self.hub_degree < 1:
            raise ConfigError("hub_degree must be >= 1")


@dataclass(frozen=True)
class ShillConfig:
    min_bids: int = 3
    sigma: int = 10
    mu: Decimal = Decimal("0.8")
    hub_degree: Optional[int] = DEFAULT_HUB_DEGREE

    def __post_init__(self):
        object.__setattr__(self, "mu", Decimal(str(self.mu)))
        if self.min_bids < 2:
            raise ConfigError("min_bids must be >= 2")
        if self.sigma < 1:
            raise ConfigError("sigma must be >= 1")
        if not (Decimal(0) < self.mu <= Decimal(1)):
            raise ConfigError("mu must lie in (0, 1]")


@dataclass(frozen=True)
class ShieldConfig:
    """Optional strictness beyond the two formal rules (both off by default).

    ``max_cancel_before_end``: the cancel must fall at most this many seconds
    before the auction closes.  ``require_no_outbidding``: the two parties may
    not trade the lead back and forth.
    """

    max_cancel_before_end: Optional[int] = None
    require_no_outbidding: bool = False

    def __post_init__(self):
        if self.max_cancel_before_end is not None and self.max_cancel_before_end < 0:
            raise ConfigError("max_cancel_before_end must be >= 0")


# ----------------------------------------------------------------- findings

@dataclass(frozen=True)
class WashFinding:
    flagged_sales: tuple
    members: tuple
    trigger: frozenset
    volume_usd: Decimal
    component: tuple  # (trigger kind used for grouping, component id)

    @property
    def first_time(self) -> int:
        return self.flagged_sales[0].time


@dataclass(frozen=True)
class ShillFinding:
    bidder: str
    seller: str
    auction_id: str
    asset: object
    shill_score: Decimal
    shill_profit_usd: Optional[Decimal]
    connectivity: frozenset
    bids: tuple = field(repr=False, default=())

    @property
    def first_time(self) -> int:
        return self.bids[0].time


@dataclass(frozen=True)
class ShieldFinding:
    shielder: str
    winner: str
    auction_id: str
    asset: object
    shield_amount: Decimal
    win_amount: Decimal
    shielded_bid_difference: Decimal
    cancel_time: int
    events: tuple = field(default=(), repr=False)  # shield bid, cancel, win


class FailedHighestBid(NamedTuple):
    auction_id: str
    highest_bidder: str
    winner: str
    highest_amount: Decimal
    win_amount: Decimal


# ------------------------------------------------------------------ auctions

@dataclass
class Auction:
    auction_id: str
    asset: object = None
    seller: Optional[str] = None
    reserve_usd: Optional[Decimal] = None
    start_time: Optional[int] = None
    end_time: Optional[int] = None
    bids: list = field(default_factory=list)
    cancels: list = field(default_factory=list)
    wins: list = field(default_factory=list)

    @property
    def win(self) -> Optional[Win]:
        return self.wins[0] if self.wins else None

    def bids_by(self, bidder: str) -> list:
        return [b for b in self.bids if b.bidder == bidder]


def reconstruct_auctions(stream: EventStream) -> dict:
    """Group auction events by id, in stream (time) order."""
    auctions: dict[str, Auction] = {}

    def get(e):
        a = auctions.get(e.auction_id)
        if a is None:
            a = auctions[e.auction_id] = Auction(e.auction_id, asset=e.asset)
        return a

    for e in stream.events:
        t = type(e)
        if t is AuctionStart:
            a = get(e)
            if a.seller is None:
                a.seller, a.reserve_usd, a.start_time = e.seller, e.reserve_usd, e.time
        elif t is Bid:
            get(e).bids.append(e)
        elif t is CancelBid:
            get(e).cancels.append(e)
        elif t is Win:
            get(e).wins.append(e)
        elif t is AuctionEnd:
            a = get(e)
            if a.end_time is None:
                a.end_time = e.time
    return auctions


@dataclass(frozen=True)
class Components:
    """Component indices shared by the wash and shill detectors."""

    sales_scc: ComponentIndex
    transfers_wcc: ComponentIndex
    payments_wcc: ComponentIndex

    @classmethod
    def of(cls, graphs: RelationGraphs, hub_degree: Optional[int] = DEFAULT_HUB_DEGREE) -> "Components":
        return cls(scc(graphs.sales), wcc(graphs.transfers), wcc(graphs.payments, hub_degree))


# ------------------------------------------------------------------- wash

def _qualifying_scc(comps: ComponentIndex, cfg: WashConfig) -> tuple:
    """Component ids of SCCs that pass the size cap and the heavy-trading filter."""
    heavy = defaultdict(lambda: True)
    has_pair = set()
    pair_total: Counter = Counter()
    for (a, b), c in comps.pair_multiplicity.items():
        pair_total[(a, b) if a <= b else (b, a)] += c
    for (a, b), total in pair_total.items():
        cid = comps.component_of(a)
        if a == b:
            if comps.size(cid) == 1:
                has_pair.add(cid)
                heavy[cid] &= total >= cfg.epsilon
            continue
        has_pair.add(cid)
        heavy[cid] &= total >= cfg.epsilon
    return tuple(c for c in sorted(has_pair) if heavy[c] and comps.size(c) <= cfg.max_component_users)


def _heavy_subgraph(graph: UserGraph, epsilon: int) -> UserGraph:
    counts = graph.pair_counts()
    total = {k: c + (counts.get((k[1], k[0]), 0) if k[0] != k[1] else 0) for k, c in counts.items()}
    keep = np.fromiter((total[(s, d)] >= epsilon for s, d in zip(graph.src.tolist(), graph.dst.tolist())),
                       bool, len(graph))
    return UserGraph(graph.relation, graph.nodes, graph.src[keep], graph.dst[keep],
                     tuple(e for e, k in zip(graph.edges, keep) if k), graph.node_index)


def sales_components(graphs: RelationGraphs, cfg: WashConfig,
                     components: Optional[Components] = None) -> tuple:
    """SCC index used for the sales disjunct and the ids of qualifying components."""
    if cfg.epsilon_mode == "heavy_edges":
        comps = scc(_heavy_subgraph(graphs.sales, cfg.epsilon))
    else:
        comps = components.sales_scc if components is not None else scc(graphs.sales)
    return comps, _qualifying_scc(comps, cfg)


def detect_wash_trades(stream: EventStream, graphs: Optional[RelationGraphs] = None,
                       cfg: WashConfig = WashConfig(),
                       components: Optional[Components] = None) -> list:
    """Flag sales whose parties share a heavy SCC of G_s or a small WCC of G_t / G_p.

    Each flagged sale lands in exactly one finding, grouped by the component of
    its highest-priority trigger (sales SCC, then transfer WCC, then payment
    WCC); ``trigger`` is the union of all disjuncts that fired for its sales.
    """
    graphs = graphs or build_graphs(stream)
    if components is None:
        components = Components.of(graphs, cfg.hub_degree)
    sale_scc, qualifying = sales_components(graphs, cfg, components)
    qualifying = set(qualifying)
    cap = cfg.max_component_users
    t_wcc, p_wcc = components.transfers_wcc, components.payments_wcc

    groups: dict[tuple, list] = defaultdict(list)
    triggers: dict[tuple, set] = defaultdict(set)
    for sale in graphs.sales.edges:
        u1, u2 = sale.seller, sale.buyer
        fired = {}
        c = sale_scc.component_of(u1)
        if c is not None and c in qualifying and c == sale_scc.component_of(u2):
            fired[SCC_SALES] = (sale_scc, c)
        if u1 != u2:
            for kind, idx in ((WCC_TRANSFER, t_wcc), (WCC_PAYMENT, p_wcc)):
                c = idx.component_of(u1)
                if c is not None and c == idx.component_of(u2) and idx.size(c) <= cap:
                    fired[kind] = (idx, c)
        if not fired:
            continue
        kind = next(k for k in _TRIGGER_PRIORITY if k in fired)
        key = (kind, fired[kind][1])
        groups[key].append(sale)
        triggers[key].update(fired)

    findings = []
    for (kind, cid), sales in groups.items():
        idx = {SCC_SALES: sale_scc, WCC_TRANSFER: t_wcc, WCC_PAYMENT: p_wcc}[kind]
        findings.append(WashFinding(
            flagged_sales=tuple(sales),
            members=tuple(idx.members[cid]),
            trigger=frozenset(triggers[(kind, cid)]),
            volume_usd=sum((s.price_usd for s in sales), Decimal(0)),
            component=(kind, cid),
        ))
    findings.sort(key=lambda f: (f.first_time, f.members))
    return findings


def wash_trade_factor(collection: str, findings, stream: EventStream) -> Optional[Decimal]:
    """Flagged volume over total sale volume of one collection; ``None`` when volume is zero."""
    total = Decimal(0)
    for s in stream.events:
        if type(s) is Sale and stream.collection_of(s.asset) == collection:
            total += s.price_usd
    if total == 0:
        return None
    flagged = sum((s.price_usd for f in findings for s in f.flagged_sales
                   if stream.collection_of(s.asset) == collection), Decimal(0))
    return flagged / total


def wash_trade_factors(findings, stream: EventStream) -> dict:
    """Factor for every collection with at least one flagged sale."""
    flagged_cols = sorted({stream.collection_of(s.asset) for f in findings for s in f.flagged_sales})
    return {c: wash_trade_factor(c, findings, stream) for c in flagged_cols}


# ------------------------------------------------------------------- shill

def _strictly_increasing(bids: list) -> bool:
    return all(b.time > a.time and b.amount_usd > a.amount_usd for a, b in zip(bids, bids[1:]))


def shill_profit(finding: ShillFinding, auction: Auction,
                 flagged_bidders: frozenset = frozenset()) -> Optional[Decimal]:
    """Final price minus the last legitimate offer before shilling started.

    The legitimate offer is the highest bid placed before the flagged bidder's
    first bid by anyone not flagged on this auction, falling back to the
    reserve.  ``None`` when the auction has no win.
    """
    win = auction.win
    if win is None:
        return None
    flagged = set(flagged_bidders) | {finding.bidder}
    first = min(b.time for b in auction.bids_by(finding.bidder))
    prior = [b.amount_usd for b in auction.bids if b.bidder not in flagged and b.time < first]
    if prior:
        legit = max(prior)
    else:
        legit = auction.reserve_usd if auction.reserve_usd is not None else Decimal(0)
    return max(win.amount_usd - legit, Decimal(0))


def detect_shill_bids(stream: EventStream, graphs: Optional[RelationGraphs] = None,
                      cfg: ShillConfig = ShillConfig(),
                      components: Optional[Components] = None,
                      auctions: Optional[dict] = None) -> list:
    """Report (bidder, auction) pairs satisfying all five shill rules.

    1. at least ``min_bids`` bids on the auction, strictly increasing in both
       time and amount;
    2. the bidder does not win that auction;
    3. fewer than ``sigma`` sales with the bidder as buyer or seller;
    4. bidder and seller share a WCC of the transfer or payment graph;
    5. shill score (share of the bidder's auctions run by this seller) > ``mu``.
    """
    graphs = graphs or build_graphs(stream)
    if components is None:
        components = Components.of(graphs, cfg.hub_degree)
    if auctions is None:
        auctions = reconstruct_auctions(stream)

    activity: Counter = Counter()
    for s in graphs.sales.edges:
        activity[s.seller] += 1
        if s.buyer != s.seller:
            activity[s.buyer] += 1

    participated: dict[str, set] = defaultdict(set)
    for a in auctions.values():
        for b in a.bids:
            participated[b.bidder].add(a.auction_id)

    raw = []
    for a in auctions.values():
        if a.seller is None:
            continue
        winners = {w.winner for w in a.wins}
        for bidder in sorted({b.bidder for b in a.bids}):
            bids = a.bids_by(bidder)
            if len(bids) < cfg.min_bids or not _strictly_increasing(bids):
                continue
            if bidder in winners or activity[bidder] >= cfg.sigma:
                continue
            conn = set()
            if components.transfers_wcc.same(bidder, a.seller):
                conn.add(WCC_TRANSFER)
            if components.payments_wcc.same(bidder, a.seller):
                conn.add(WCC_PAYMENT)
            if not conn:
                continue
            mine = participated[bidder]
            by_seller = sum(1 for aid in mine if auctions[aid].seller == a.seller)
            # exact comparison: by_seller / |mine| > mu
            if not Decimal(by_seller) > cfg.mu * len(mine):
                continue
            raw.append((a, bidder, Decimal(by_seller) / Decimal(len(mine)), frozenset(conn), tuple(bids)))

    flagged_per_auction: dict[str, set] = defaultdict(set)
    for a, bidder, *_ in raw:
        flagged_per_auction[a.auction_id].add(bidder)

    findings = []
    for a, bidder, score, conn, bids in raw:
        f = ShillFinding(bidder, a.seller, a.auction_id, a.asset, score, None, conn, bids)
        profit = shill_profit(f, a, frozenset(flagged_per_auction[a.auction_id]))
        findings.append(ShillFinding(bidder, a.seller, a.auction_id, a.asset, score, profit, conn, bids))
    findings.sort(key=lambda f: (f.first_time, f.auction_id, f.bidder))
    return findings


# ---------------------------------------------------------------- shielding

def _lead_changes(bids: list, u1: str, u2: str) -> int:
    best = {u1: None, u2: None}
    leader = None
    changes = 0
    for b in bids:
        if b.bidder not in best:
            continue
        if best[b.bidder] is None or b.amount_usd > best[b.bidder]:
            best[b.bidder] = b.amount_usd
        other = u2 if b.bidder == u1 else u1
        if best[other] is None or best[b.bidder] > best[other]:
            if leader is not None and leader != b.bidder:
                changes += 1
            leader = b.bidder
    return changes


def detect_bid_shielding(stream: EventStream, cfg: ShieldConfig = ShieldConfig(),
                         auctions: Optional[dict] = None) -> list:
    """Find retracted high bids that uncovered a colluding lower winning bid.

    A cancel by u2 of a bid at p2 qualifies when it comes strictly after every
    bid on the auction, and the auction is won by some u1 != u2 at p1 < p2.
    Both p1 and p2 must correspond to bids actually placed by u1 and u2.
    """
    if auctions is None:
        auctions = reconstruct_auctions(stream)
    findings = []
    for a in auctions.values():
        win = a.win
        if win is None or not a.cancels or not a.bids:
            continue
        last_bid = max(b.time for b in a.bids)
        u1, p1 = win.winner, win.amount_usd
        if not any(b.bidder == u1 and b.amount_usd == p1 for b in a.bids):
            continue
        close = a.end_time if a.end_time is not None else win.time
        for c in a.cancels:
            u2, p2 = c.bidder, c.amount_usd
            if c.time <= last_bid or u2 == u1 or not p1 < p2:
                continue
            shield_bids = [b for b in a.bids if b.bidder == u2 and b.amount_usd == p2]
            if not shield_bids:
                continue
            if cfg.max_cancel_before_end is not None and close - c.time > cfg.max_cancel_before_end:
                continue
            if cfg.require_no_outbidding and _lead_changes(a.bids, u1, u2) > 1:
                continue
            findings.append(ShieldFinding(u2, u1, a.auction_id, a.asset, p2, p1, p2 - p1, c.time,
                                          (shield_bids[-1], c, win)))
    findings.sort(key=lambda f: (f.cancel_time, f.auction_id, f.shielder))
    return findings


def detect_failed_highest_bid(stream: EventStream, auctions: Optional[dict] = None) -> list:
    """Ended auctions whose highest bid belongs to someone other than the winner.

    When several bidders tie at the maximum and any of them won, the auction is
    not reported.
    """
    if auctions is None:
        auctions = reconstruct_auctions(stream)
    out = []
    for a in auctions.values():
        win = a.win
        if win is None or not a.bids:
            continue
        top = max(b.amount_usd for b in a.bids)
        leaders = [b for b in a.bids if b.amount_usd == top]
        if any(b.bidder == win.winner for b in leaders):
            continue
        out.append(FailedHighestBid(a.auction_id, leaders[0].bidder, win.winner, top, win.amount_usd))
    out.sort(key=lambda r: r.auction_id)
    return out
