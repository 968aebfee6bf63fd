"""Seeded synthetic markets with injectable, labelled malpractice.

The baseline is clean by construction: every account's sales only go to
higher-ranked accounts (so the sales graph is acyclic), each buyer is funded
by its own faucet address, there are no direct transfers, and every auction is
won by its highest bidder.  Injections append fresh accounts and assets, so
they never touch baseline relations.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Optional, Sequence

from .model import (
    AssetId,
    AssetRecord,
    AuctionEnd,
    AuctionStart,
    Bid,
    CancelBid,
    EventStream,
    Marketplace,
    Mint,
    Paid,
    Sale,
    Win,
    write_stream,
)

T0 = 1_600_000_000
SLOT = 60  # seconds between consecutive generated events
ETH_USD = Decimal(2000)
WEI = 10**18
_BASE58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"

WASH_RING = "wash_ring"
SHILL_AUCTION = "shill_auction"
SHIELD_AUCTION = "shield_auction"
INJECTION_KINDS = (WASH_RING, SHILL_AUCTION, SHIELD_AUCTION)


class SynthError(ValueError):
    """Generator parameters that cannot be satisfied."""


def _digest(*parts) -> bytes:
    return hashlib.sha256(":".join(map(str, parts)).encode()).digest()


def _address(*parts) -> str:
    return "0x" + _digest(*parts).hex()[:40]


def _fake_cid(*parts) -> str:
    n = int.from_bytes(_digest(*parts), "big")
    chars = []
    for _ in range(44):
        n, r = divmod(n, 58)
        chars.append(_BASE58[r])
    return "Qm" + "".join(chars)


def _eth(usd: Decimal) -> Decimal:
    return (usd / ETH_USD).quantize(Decimal("1e-18"))


def _wei(usd: Decimal) -> int:
    return int(_eth(usd) * WEI)


@dataclass(frozen=True)
class Label:
    kind: str
    accounts: tuple
    events: tuple  # the events a detector is expected to flag

    def to_json(self, index: dict) -> dict:
        return {"kind": self.kind, "accounts": list(self.accounts),
                "events": sorted(index[e] for e in self.events)}


@dataclass(frozen=True)
class Scenario:
    seed: int
    events: tuple
    assets: tuple
    labels: tuple = ()
    baseline_events: frozenset = field(default=frozenset(), repr=False)

    @property
    def stream(self) -> EventStream:
        cached = self.__dict__.get("_stream")
        if cached is None:
            cached = EventStream.from_events(self.events, self.assets)
            object.__setattr__(self, "_stream", cached)
        return cached

    @property
    def end_time(self) -> int:
        return max((e.time for e in self.events), default=T0)

    def labels_of(self, kind: str) -> list:
        return [lb for lb in self.labels if lb.kind == kind]


@dataclass(frozen=True)
class InjectionSpec:
    """One malpractice pattern to append.

    wash_ring: ``ring_size`` fresh users trade one asset around a cycle
    ``trades_per_pair`` times.  shill_auction: a seller-funded bidder places
    ``amounts`` (strictly increasing) and a fresh winner takes the item at
    ``final_price``; ``legit_bids`` come from other fresh bidders beforehand.
    shield_auction: a low bid ``low``, a high bid ``high`` that is cancelled
    after all bids, and a win at ``low``.
    """

    kind: str
    seed: int = 0
    ring_size: int = 3
    trades_per_pair: int = 12
    bid_count: int = 5
    amounts: tuple = ()
    reserve: Decimal = Decimal(2)
    final_price: Decimal = Decimal(9)
    legit_bids: tuple = ()
    low: Decimal = Decimal(100)
    high: Decimal = Decimal(500)
    start_time: Optional[int] = None

    def __post_init__(self):
        conv = lambda v: Decimal(str(v))
        object.__setattr__(self, "amounts", tuple(conv(a) for a in self.amounts))
        object.__setattr__(self, "legit_bids", tuple(conv(a) for a in self.legit_bids))
        for name in ("reserve", "final_price", "low", "high"):
            object.__setattr__(self, name, conv(getattr(self, name)))
        if self.kind not in INJECTION_KINDS:
            raise SynthError(f"unknown injection kind {self.kind!r}")
        if not 0 <= self.seed < 2**64:
            raise SynthError("seed must be a 64-bit unsigned integer")
        if self.kind == WASH_RING:
            if not 2 <= self.ring_size <= 50:
                raise SynthError("wash_ring needs 2 <= ring_size <= 50")
            if self.trades_per_pair < 1:
                raise SynthError("wash_ring needs trades_per_pair >= 1")
        elif self.kind == SHILL_AUCTION:
            if self.amounts and len(self.amounts) != self.bid_count:
                object.__setattr__(self, "bid_count", len(self.amounts))
            if self.bid_count < 2:
                raise SynthError("shill_auction needs bid_count >= 2")
            if any(b <= a for a, b in zip(self.amounts, self.amounts[1:])):
                raise SynthError("shill amounts must be strictly increasing")
            top = max(self.amounts + self.legit_bids, default=self.reserve)
            if self.final_price <= top:
                raise SynthError("final_price must exceed every other bid")
        elif self.kind == SHIELD_AUCTION and not self.low < self.high:
            raise SynthError("shield_auction needs low < high")


def _asset_record(aid: AssetId, slug: str, name: str, idx: str, verified: bool = False,
                  seller_verified: Optional[bool] = None) -> AssetRecord:
    return AssetRecord(
        id=aid, collection_slug=slug, collection_name=name, marketplace=Marketplace.OPENSEA,
        collection_verified=verified,
        image_url=f"https://img.example/{aid.contract}/{aid.token_id}.png",
        metadata_url=f"https://gateway.example/ipfs/{_fake_cid(idx, aid)}",
        source_available=True, seller_verified=seller_verified, taken_down=False,
    )


def gen_baseline(seed: int, n_users: int, n_assets: int, n_sales: int,
                 auction_rate: float = 0.2, n_collections: Optional[int] = None) -> Scenario:
    """Clean market: acyclic sales, per-buyer faucets, honest auctions, no labels."""
    if n_users < 2:
        raise SynthError("n_users must be >= 2")
    if n_sales < 0 or n_assets < 0:
        raise SynthError("n_sales and n_assets must be >= 0")
    capacity = n_assets * (n_users - 1)
    if n_sales > capacity:
        raise SynthError(f"n_sales={n_sales} exceeds acyclic capacity {capacity} "
                         f"(n_assets * (n_users - 1))")
    rng = random.Random(seed)
    users = [_address(seed, "user", i) for i in range(n_users)]
    faucets = {u: _address(seed, "faucet", u) for u in users}
    n_collections = n_collections or max(1, n_assets // 20)
    col_info = []
    for c in range(n_collections):
        tag = _digest(seed, "collection", c).hex()[:12]
        col_info.append((f"col-{tag}", f"Collection {tag}", _address(seed, "contract", c),
                         Decimal(rng.randint(0, 10)) / 100, rng.random() < 0.3))

    # sales per asset, each capped at n_users - 1 so a strictly rising owner path exists
    per_asset = [0] * n_assets
    open_assets = list(range(n_assets))
    for _ in range(n_sales):
        k = rng.randrange(len(open_assets))
        a = open_assets[k]
        per_asset[a] += 1
        if per_asset[a] == n_users - 1:
            open_assets[k] = open_assets[-1]
            open_assets.pop()

    assets, events, paths, aids = [], [], [], []
    slot = 0
    for a in range(n_assets):
        slug, name, contract, _, verified = col_info[a % n_collections]
        aid = AssetId(contract, a)
        aids.append(aid)
        path = sorted(rng.sample(range(n_users), per_asset[a] + 1))
        paths.append(path)
        assets.append(_asset_record(aid, slug, name, seed, verified, rng.random() < 0.2))
        events.append(Mint(users[path[0]], aid, T0 + SLOT * slot))
        slot += 1

    def at():
        nonlocal slot
        slot += 1
        return T0 + SLOT * slot

    order = [a for a in range(n_assets) for _ in range(per_asset[a])]
    rng.shuffle(order)
    step = [0] * n_assets
    for n, a in enumerate(order):
        path = paths[a]
        seller, buyer = users[path[step[a]]], users[path[step[a] + 1]]
        step[a] += 1
        aid = aids[a]
        royalty = col_info[a % n_collections][3]
        price = Decimal(rng.randint(1_000, 500_000)) / 100
        events.append(Paid(faucets[buyer], buyer, _wei(price), at()))
        if rng.random() < auction_rate:
            auction_id = f"auction-{seed}-{n}"
            others = [u for u in rng.sample(users, min(len(users), 5)) if u not in (seller, buyer)]
            losers = others[: rng.randint(0, min(2, len(others)))]
            reserve = (price * Decimal("0.5")).quantize(Decimal("0.01"))
            events.append(AuctionStart(seller, reserve, at(), auction_id, aid))
            amount = reserve
            gap = (price - reserve) / (len(losers) + 1)
            for u in losers:
                amount = (amount + gap).quantize(Decimal("0.01"))
                if amount >= price:
                    break
                events.append(Bid(u, amount, at(), auction_id, aid))
            events.append(Bid(buyer, price, at(), auction_id, aid))
            events.append(Win(buyer, price, at(), auction_id, aid))
            events.append(Sale(seller, buyer, aid, price, _eth(price), at(), royalty))
            events.append(AuctionEnd(auction_id, aid, at()))
        else:
            events.append(Sale(seller, buyer, aid, price, _eth(price), at(), royalty))

    evs = tuple(events)
    return Scenario(seed, evs, tuple(assets), (), frozenset(evs))


class _Appender:
    def __init__(self, scenario: Scenario, spec: InjectionSpec):
        self.scenario = scenario
        self.spec = spec
        self.tag = (scenario.seed, spec.kind, spec.seed, len(scenario.labels))
        self.rng = random.Random(repr(self.tag))
        self.time = spec.start_time if spec.start_time is not None else scenario.end_time + SLOT
        self.events: list = []
        self.assets: list = []

    def at(self) -> int:
        t = self.time
        self.time += SLOT
        return t

    def account(self, role: str, i: int = 0) -> str:
        return _address(*self.tag, role, i)

    def emit(self, event):
        self.events.append(event)
        return event

    def new_asset(self, owner: str) -> AssetId:
        contract = self.account("contract")
        aid = AssetId(contract, 0)
        slug = f"{self.spec.kind.replace('_', '-')}-{len(self.scenario.labels)}"
        self.assets.append(_asset_record(aid, slug, f"Injected {_digest(*self.tag).hex()[:12]}", self.tag))
        self.emit(Mint(owner, aid, self.at()))
        return aid

    def fund(self, user: str, usd: Decimal) -> None:
        self.emit(Paid(self.account("faucet", user), user, _wei(usd), self.at()))


def inject(scenario: Scenario, spec: InjectionSpec) -> Scenario:
    """Append one labelled malpractice pattern to ``scenario``."""
    ap = _Appender(scenario, spec)
    rng = ap.rng
    if spec.kind == WASH_RING:
        k = spec.ring_size
        users = [ap.account("ring", i) for i in range(k)]
        aid = ap.new_asset(users[0])
        for u in users:
            ap.fund(u, Decimal(1000))
        sales = []
        for _ in range(spec.trades_per_pair):
            for i in range(k):
                price = Decimal(rng.randint(10_000, 200_000)) / 100
                sales.append(ap.emit(Sale(users[i], users[(i + 1) % k], aid, price, _eth(price),
                                          ap.at(), None)))
        label = Label(WASH_RING, tuple(users), tuple(sales))

    elif spec.kind == SHILL_AUCTION:
        seller, shill, winner = ap.account("seller"), ap.account("shill"), ap.account("winner")
        amounts = spec.amounts
        if not amounts:
            base, amounts = spec.reserve, []
            for _ in range(spec.bid_count):
                base += Decimal(rng.randint(10, 200)) / 100
                amounts.append(base)
            amounts = tuple(amounts)
        final = max(spec.final_price, amounts[-1] + 1)
        aid = ap.new_asset(seller)
        ap.emit(Paid(seller, shill, _wei(Decimal(50)), ap.at()))
        ap.fund(winner, final)
        auction_id = f"shill-{'-'.join(map(str, ap.tag))}"
        ap.emit(AuctionStart(seller, spec.reserve, ap.at(), auction_id, aid))
        for i, amt in enumerate(spec.legit_bids):
            ap.emit(Bid(ap.account("legit", i), amt, ap.at(), auction_id, aid))
        bids = [ap.emit(Bid(shill, amt, ap.at(), auction_id, aid)) for amt in amounts]
        ap.emit(Bid(winner, final, ap.at(), auction_id, aid))
        ap.emit(Win(winner, final, ap.at(), auction_id, aid))
        ap.emit(Sale(seller, winner, aid, final, _eth(final), ap.at(), None))
        ap.emit(AuctionEnd(auction_id, aid, ap.at()))
        label = Label(SHILL_AUCTION, (shill, seller), tuple(bids))

    else:
        seller, low_u, high_u = ap.account("seller"), ap.account("low"), ap.account("high")
        aid = ap.new_asset(seller)
        ap.fund(low_u, spec.low)
        auction_id = f"shield-{'-'.join(map(str, ap.tag))}"
        ap.emit(AuctionStart(seller, spec.low, ap.at(), auction_id, aid))
        ap.emit(Bid(low_u, spec.low, ap.at(), auction_id, aid))
        high_bid = ap.emit(Bid(high_u, spec.high, ap.at(), auction_id, aid))
        cancel = ap.emit(CancelBid(high_u, spec.high, ap.at(), auction_id, aid))
        win = ap.emit(Win(low_u, spec.low, ap.at(), auction_id, aid))
        ap.emit(Sale(seller, low_u, aid, spec.low, _eth(spec.low), ap.at(), None))
        ap.emit(AuctionEnd(auction_id, aid, ap.at()))
        label = Label(SHIELD_AUCTION, (high_u, low_u), (high_bid, cancel, win))

    return replace(scenario, events=scenario.events + tuple(ap.events),
                   assets=scenario.assets + tuple(ap.assets),
                   labels=scenario.labels + (label,))


def build_scenario(seed: int, n_users: int = 200, n_assets: int = 100, n_sales: int = 2000,
                   ring_sizes: Sequence[int] = (), trades_per_pair: int = 12,
                   n_shill: int = 0, n_shield: int = 0, auction_rate: float = 0.2) -> Scenario:
    """Baseline market followed by wash rings, shill auctions and shield auctions, in that order."""
    sc = gen_baseline(seed, n_users, n_assets, n_sales, auction_rate)
    for i, k in enumerate(ring_sizes):
        sc = inject(sc, InjectionSpec(WASH_RING, seed=i, ring_size=k, trades_per_pair=trades_per_pair))
    for i in range(n_shill):
        sc = inject(sc, InjectionSpec(SHILL_AUCTION, seed=i))
    for i in range(n_shield):
        sc = inject(sc, InjectionSpec(SHIELD_AUCTION, seed=i))
    return sc


def write_scenario(scenario: Scenario, out_dir) -> dict:
    """Emit events.ndjson, assets.ndjson and labels.ndjson; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"events": out / "events.ndjson", "assets": out / "assets.ndjson",
             "labels": out / "labels.ndjson"}
    stream = scenario.stream
    write_stream(stream, paths["events"], paths["assets"])
    index = stream.index_map()
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        for lb in scenario.labels:
            fh.write(json.dumps(lb.to_json(index), sort_keys=True) + "\n")
    return paths


def read_labels(path) -> list:
    """Labels as plain dicts: kind, accounts, events (stream indices)."""
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
