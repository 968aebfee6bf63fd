import hashlib
import os
from decimal import Decimal

import pytest
from hypothesis import settings

from nftforensics.model import (AssetId, AssetRecord, AuctionEnd, AuctionStart, Bid, CancelBid, EventStream,
                                Marketplace, Mint, Paid, Sale, Transfer, Win)

settings.register_profile("ci", max_examples=60, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def addr(name) -> str:
    """Deterministic address for a short label."""
    return "0x" + hashlib.sha256(str(name).encode()).hexdigest()[:40]


def asset(n: int = 0, contract: str = "contract") -> AssetId:
    return AssetId(addr(contract), n)


def D(x) -> Decimal:
    return Decimal(str(x))


def sale(seller, buyer, t, price=100, a=None, royalty=None) -> Sale:
    price = D(price)
    return Sale(addr(seller), addr(buyer), a or asset(), price, price / 2000, t, royalty)


def paid(src, dst, t, wei=10**18) -> Paid:
    return Paid(addr(src), addr(dst), wei, t)


def transfer(src, dst, t, a=None) -> Transfer:
    return Transfer(addr(src), addr(dst), a or asset(), t)


def mint(creator, t, a=None) -> Mint:
    return Mint(addr(creator), a or asset(), t)


class AuctionBuilder:
    """Compact construction of auction event sequences with one-second spacing."""

    def __init__(self, auction_id="A1", seller="seller", reserve=1, a=None, t0=1000):
        self.id = auction_id
        self.asset = a or asset(hash(auction_id) % 1000)
        self.t = t0
        self.events = [AuctionStart(addr(seller), D(reserve), self._tick(), auction_id, self.asset)]

    def _tick(self):
        self.t += 1
        return self.t - 1

    def bid(self, who, amount):
        e = Bid(addr(who), D(amount), self._tick(), self.id, self.asset)
        self.events.append(e)
        return e

    def cancel(self, who, amount):
        e = CancelBid(addr(who), D(amount), self._tick(), self.id, self.asset)
        self.events.append(e)
        return e

    def win(self, who, amount, seller="seller", with_sale=True):
        e = Win(addr(who), D(amount), self._tick(), self.id, self.asset)
        self.events.append(e)
        if with_sale:
            self.events.append(Sale(addr(seller), addr(who), self.asset, D(amount), D(amount) / 2000,
                                    self._tick()))
        return e

    def end(self):
        self.events.append(AuctionEnd(self.id, self.asset, self._tick()))
        return self


def stream(*events, assets=()) -> EventStream:
    flat = []
    for e in events:
        if isinstance(e, (list, tuple)):
            flat.extend(e)
        else:
            flat.append(e)
    return EventStream.from_events(flat, assets)


def record(a: AssetId, slug: str, name: str = None, verified=False, image=None, metadata=None,
           source=None, seller_verified=None, taken_down=False) -> AssetRecord:
    return AssetRecord(a, slug, name or slug, Marketplace.OPENSEA, verified, image, metadata, source,
                       seller_verified, taken_down)


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


# ------------------------------------------------ acceptance result lines

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    prev = _criteria.get(number, (title, True))
    _criteria[number] = (title, prev[1] and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")
