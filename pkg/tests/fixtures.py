"""Hand-built auction scenarios shared by unit and acceptance tests."""
from conftest import D, AuctionBuilder, paid, sale, stream

SHILL_BIDS = ("3.3", "4.4", "5.5", "6.71", "8.14")
RULES = ("monotone", "never_wins", "low_activity", "connected", "score")


def shill_fixture(drop=None, bids=SHILL_BIDS, legit_before=None):
    """Reserve 2, five rising shill bids, a sale at 9 to another bidder.

    ``drop`` names one rule whose precondition is broken: the bids stop rising,
    the shill wins, the shill trades heavily, the funding link is removed, or
    the shill mostly bids on other sellers' auctions.
    """
    if drop is not None and drop not in RULES:
        raise ValueError(drop)
    evs = []
    if drop != "connected":
        evs.append(paid("seller", "shill", 1))
    a = AuctionBuilder("shill-1", seller="seller", reserve=2, t0=100)
    if legit_before is not None:
        a.bid("early", legit_before)
    amounts = ("5.0", "4.0", "6.0") if drop == "monotone" else bids
    for x in amounts:
        a.bid("shill", x)
    if drop == "never_wins":
        a.win("shill", amounts[-1])
    else:
        a.bid("winner", 9)
        a.win("winner", 9)
    evs += a.end().events
    if drop == "low_activity":
        evs += [sale("shill", f"p{i}", 5000 + i) for i in range(10)]
    if drop == "score":
        for i in range(2):
            other = AuctionBuilder(f"other-{i}", seller=f"seller{i + 2}", reserve=1, t0=3000 + 100 * i)
            other.bid("shill", 2)
            other.bid(f"w{i}", 3)
            other.win(f"w{i}", 3, seller=f"seller{i + 2}")
            evs += other.end().events
    return stream(evs)


def shield_fixture(variant=None, low="100", high="500"):
    """u1 bids low, u2 bids high, u2 cancels after every bid, u1 wins at low.

    ``variant``: ``"rebid"`` adds a bid after the cancel; ``"canceller_wins"``
    gives the win to u2.
    """
    a = AuctionBuilder("shield-1", seller="seller", reserve=low, t0=200)
    a.bid("u1", low)
    a.bid("u2", high)
    a.cancel("u2", high)
    if variant == "rebid":
        a.bid("u1", D(low) + 1)
        a.win("u1", D(low) + 1)
    elif variant == "canceller_wins":
        a.win("u2", high)
    else:
        a.win("u1", low)
    return stream(a.end().events)


def ring_stream(users=("u1", "u2"), per_direction=12):
    evs = []
    t = 0
    for _ in range(per_direction):
        for i, u in enumerate(users):
            evs.append(sale(u, users[(i + 1) % len(users)], t))
            t += 1
    return stream(evs)

