"""Brute-force reference implementations used as test oracles."""
from collections import Counter, defaultdict
from decimal import Decimal
from functools import lru_cache


def reachability(n, edges):
    """Floyd-Warshall transitive closure (reflexive)."""
    r = [[i == j for j in range(n)] for i in range(n)]
    for a, b in edges:
        r[a][b] = True
    for k in range(n):
        for i in range(n):
            if r[i][k]:
                for j in range(n):
                    if r[k][j]:
                        r[i][j] = True
    return r


def scc_partition(n, edges):
    r = reachability(n, edges)
    return {frozenset(j for j in range(n) if r[i][j] and r[j][i]) for i in range(n)}


def wcc_partition(n, edges, removed=()):
    adj = defaultdict(set)
    removed = set(removed)
    for a, b in edges:
        if a in removed or b in removed:
            continue
        adj[a].add(b)
        adj[b].add(a)
    seen, parts = set(), set()
    for s in range(n):
        if s in seen or s in removed:
            continue
        comp, todo = {s}, [s]
        while todo:
            u = todo.pop()
            for v in adj[u]:
                if v not in comp:
                    comp.add(v)
                    todo.append(v)
        seen |= comp
        parts.add(frozenset(comp))
    return parts


def levenshtein(a, b):
    """Recursive definition with memoization."""
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


# ------------------------------------------------------------ wash trading

def _reach_sets(nodes, pairs):
    idx = {u: i for i, u in enumerate(nodes)}
    r = reachability(len(nodes), [(idx[a], idx[b]) for a, b in pairs])
    return idx, r


def _flood(nodes, pairs, removed=()):
    idx = {u: i for i, u in enumerate(nodes)}
    parts = wcc_partition(len(nodes), [(idx[a], idx[b]) for a, b in pairs], [idx[x] for x in removed])
    comp = {}
    for p in parts:
        for i in p:
            comp[nodes[i]] = p
    return comp


def wash_flagged(stream, epsilon=10, cap=50, hub_degree=1000):
    """Sales flagged by the three disjuncts, checked directly per sale."""
    from nftforensics.model import Paid, Sale, Transfer

    sales = [e for e in stream.events if type(e) is Sale]
    spairs = [(s.seller, s.buyer) for s in sales]
    snodes = sorted({u for p in spairs for u in p})
    idx, r = _reach_sets(snodes, spairs)
    mult = Counter(spairs)

    def scc_members(u):
        return {v for v in snodes if r[idx[u]][idx[v]] and r[idx[v]][idx[u]]}

    def scc_ok(members):
        if len(members) > cap:
            return False
        pairs = [(x, y) for x in members for y in members if x < y and (mult[(x, y)] or mult[(y, x)])]
        if len(members) == 1:
            (x,) = members
            return mult[(x, x)] >= epsilon
        if not pairs:
            return False
        # self-loops inside a multi-member component do not form a pair
        return all(mult[(x, y)] + mult[(y, x)] >= epsilon for x, y in pairs)

    def wcc_of(kind):
        evs = [e for e in stream.events if type(e) is kind]
        pairs = [(e.src, e.dst) for e in evs]
        nodes = sorted({u for p in pairs for u in p})
        removed = ()
        if kind is Paid and hub_degree is not None:
            nb = defaultdict(set)
            for a, b in pairs:
                if a != b:
                    nb[a].add(b)
                    nb[b].add(a)
            removed = [u for u in nodes if len(nb[u]) > hub_degree]
        return _flood(nodes, pairs, removed)

    t_comp, p_comp = wcc_of(Transfer), wcc_of(Paid)
    flagged = set()
    for s in sales:
        u1, u2 = s.seller, s.buyer
        m = scc_members(u1)
        if u2 in m and scc_ok(m):
            flagged.add(s)
            continue
        if u1 == u2:
            continue
        for comp in (t_comp, p_comp):
            c = comp.get(u1)
            if c is not None and c is comp.get(u2) and len(c) <= cap:
                flagged.add(s)
                break
    return flagged


# -------------------------------------------------------------- shielding

def shield_pairs(stream):
    """(shielder, winner, auction_id, p2 - p1) by direct rule evaluation."""
    from nftforensics.model import AuctionStart, Bid, CancelBid, Win

    out = set()
    ids = {e.auction_id for e in stream.events if type(e) is AuctionStart}
    for aid in ids:
        evs = [e for e in stream.events if getattr(e, "auction_id", None) == aid]
        bids = [e for e in evs if type(e) is Bid]
        wins = [e for e in evs if type(e) is Win]
        if not wins or not bids:
            continue
        w = wins[0]
        for c in (e for e in evs if type(e) is CancelBid):
            if all(c.time > b.time for b in bids) and c.bidder != w.winner and w.amount_usd < c.amount_usd \
                    and any(b.bidder == c.bidder and b.amount_usd == c.amount_usd for b in bids) \
                    and any(b.bidder == w.winner and b.amount_usd == w.amount_usd for b in bids):
                out.add((c.bidder, w.winner, aid, c.amount_usd - w.amount_usd))
    return out


def shill_score(stream, bidder, seller) -> Decimal:
    from nftforensics.model import AuctionStart, Bid

    owner = {e.auction_id: e.seller for e in stream.events if type(e) is AuctionStart}
    mine = {e.auction_id for e in stream.events if type(e) is Bid and e.bidder == bidder}
    return Decimal(sum(1 for a in mine if owner.get(a) == seller)) / Decimal(len(mine))
