import json
import random
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import D, AuctionBuilder, addr, asset, mint, paid, record, sale, stream, transfer
from nftforensics.model import (AssetId, Bid, EventStream, IngestError, Sale, account, asset_from_record,
                                asset_to_record, event_from_record, event_to_record, extract_ipfs_cid,
                                ingest, normalize_url, serialize, serialize_events, write_stream)

CID = "QmT5NvUtoM5nWFfrQdVrFtvGfKFmG7AHE8P34isapyhCxX"


def lines(*events):
    return serialize_events(events)


# ------------------------------------------------------------ addresses, ids

def test_account_lowercases_checksummed_input():
    mixed = "0xAbCdEf0123456789abcdef0123456789ABCDEF01"
    assert account(mixed) == mixed.lower()


@pytest.mark.parametrize("bad", ["0x123", "abcdef0123456789abcdef0123456789abcdef01", "0x" + "g" * 40, 7, None])
def test_account_rejects_malformed(bad):
    with pytest.raises(ValueError):
        account(bad)


def test_asset_id_rejects_negative_token():
    with pytest.raises(ValueError):
        AssetId(addr("c"), -1)


def test_asset_id_big_token_roundtrips_as_string():
    a = AssetId(addr("c"), 2**200)
    assert a.to_json()["token_id"] == str(2**200)
    assert AssetId.from_json(a.to_json()) == a


# ------------------------------------------------------------------ records

def test_paid_uses_from_and_to_on_the_wire():
    rec = event_to_record(paid("x", "y", 5, wei=12345))
    assert rec["from"] == addr("x") and rec["to"] == addr("y")
    assert rec["amount_wei"] == "12345"
    assert event_from_record("paid", rec) == paid("x", "y", 5, wei=12345)


def test_decimal_strings_keep_precision():
    rec = event_to_record(sale("a", "b", 1, price="0.10"))
    assert rec["price_usd"] == "0.10"
    back = event_from_record("sale", rec)
    assert back.price_usd == Decimal("0.10")


def test_royalty_above_one_is_rejected():
    rec = event_to_record(sale("a", "b", 1))
    rec["royalty_fraction"] = "1.5"
    with pytest.raises(ValueError):
        event_from_record("sale", rec)


def test_asset_record_roundtrip():
    r = record(asset(3), "slug", "Name", verified=True, image="https://x/1.png", source=False,
               seller_verified=True, taken_down=True)
    assert asset_from_record(asset_to_record(r)) == r


# ------------------------------------------------------------------- ingest

def test_ingest_sorts_out_of_order_sales():
    s1, s2, s3 = sale("a", "b", 30), sale("b", "c", 10), sale("c", "d", 20)
    st_ = ingest(lines(s1, s2, s3))
    assert [e.time for e in st_.events] == [10, 20, 30]
    assert st_.diagnostics == ()


def test_ingest_drops_duplicate_line_with_diagnostic():
    s = sale("a", "b", 10)
    st_ = ingest(lines(s, s))
    assert st_.events == (s,)
    assert [d.code for d in st_.diagnostics] == ["duplicate"]
    assert st_.diagnostics[0].line == 2


def test_ingest_flags_dangling_bid_but_keeps_it():
    b = Bid(addr("u"), D(5), 10, "never-opened", asset())
    st_ = ingest(lines(b, sale("a", "b", 11)))
    assert b in st_.events
    assert [d.code for d in st_.diagnostics] == ["dangling_auction"]


def test_ingest_records_unknown_kind_and_malformed_lines():
    good = lines(*(sale("a", "b", t) for t in range(5))).decode()
    data = good + '{"type": "teleport", "time": 3}\nnot json\n'
    st_ = ingest(data.encode())
    codes = sorted(d.code for d in st_.diagnostics)
    assert codes == ["malformed", "unknown_kind"]
    assert {d.line for d in st_.diagnostics} == {6, 7}
    assert len(st_.events) == 5


def test_ingest_fatal_when_mostly_malformed():
    data = b'{"type":"sale"}\ngarbage\n' + lines(sale("a", "b", 1))
    with pytest.raises(IngestError, match="malformed"):
        ingest(data)


def test_ingest_unreadable_path_is_fatal(tmp_path):
    with pytest.raises(IngestError, match="cannot read"):
        ingest(tmp_path / "missing.ndjson")


def test_ingest_custom_discriminator():
    rec = event_to_record(sale("a", "b", 1), discriminator="kind")
    st_ = ingest((json.dumps(rec) + "\n").encode(), schema="kind")
    assert len(st_.events) == 1


def test_ingest_reads_companion_asset_file(tmp_path):
    a = asset(1)
    ev, assets = tmp_path / "e.ndjson", tmp_path / "a.ndjson"
    write_stream(stream(sale("x", "y", 1, a=a), assets=[record(a, "col")]), ev, assets)
    st_ = ingest(ev, assets=assets)
    assert st_.collection_of(a) == "col"
    assert len(st_.events) == 1


def test_ingest_conflicting_asset_records_keep_first():
    a = asset(1)
    data = serialize(stream(assets=[record(a, "first")])) + serialize(stream(assets=[record(a, "second")]))
    st_ = ingest(data)
    assert st_.assets[a].collection_slug == "first"
    assert [d.code for d in st_.diagnostics] == ["conflict"]


def test_self_sale_is_kept():
    st_ = ingest(lines(sale("a", "a", 1)))
    assert len(st_.events) == 1


def test_collection_falls_back_to_contract():
    a = asset(1, contract="unknown")
    assert stream(sale("a", "b", 1, a=a)).collection_of(a) == a.contract


# --------------------------------------------------------------- properties

names = st.sampled_from(["a", "b", "c", "d", "e"])
times = st.integers(0, 50)


@st.composite
def events(draw):
    kind = draw(st.sampled_from(["sale", "paid", "transfer", "mint", "auction"]))
    t = draw(times)
    if kind == "sale":
        return [sale(draw(names), draw(names), t, draw(st.integers(1, 500)))]
    if kind == "paid":
        return [paid(draw(names), draw(names), t, draw(st.integers(0, 10**20)))]
    if kind == "transfer":
        return [transfer(draw(names), draw(names), t, asset(draw(st.integers(0, 3))))]
    if kind == "mint":
        return [mint(draw(names), t, asset(draw(st.integers(0, 3))))]
    b = AuctionBuilder(f"A{draw(st.integers(0, 3))}", t0=t)
    b.bid(draw(names), draw(st.integers(2, 9)))
    return b.events


event_lists = st.lists(events(), max_size=15).map(lambda xs: [e for x in xs for e in x])


@given(event_lists, st.randoms(use_true_random=False))
def test_ingest_is_order_invariant(evs, rnd):
    data = lines(*evs).decode().splitlines(keepends=True)
    shuffled = data[:]
    rnd.shuffle(shuffled)
    a, b = ingest("".join(data).encode()), ingest("".join(shuffled).encode())
    assert a.events == b.events
    assert serialize(a) == serialize(b)


@given(event_lists)
def test_ingest_is_idempotent(evs):
    once = ingest(lines(*evs))
    twice = ingest(serialize(once))
    assert twice.events == once.events
    assert twice.assets == once.assets


@given(event_lists)
def test_stream_is_time_sorted_and_unique(evs):
    st_ = ingest(lines(*evs))
    ts = [e.time for e in st_.events]
    assert ts == sorted(ts)
    assert len(set(st_.events)) == len(st_.events)


# --------------------------------------------------------------------- IPFS

def test_cid_is_gateway_invariant():
    a = extract_ipfs_cid(f"https://gateway-a.example/ipfs/{CID}")
    b = extract_ipfs_cid(f"https://gateway-b.example/ipfs/{CID}/meta.json")
    assert a == b == CID


def test_cid_from_scheme_matches_gateway_form():
    assert extract_ipfs_cid(f"ipfs://{CID}") == CID
    assert extract_ipfs_cid(f"ipfs://ipfs/{CID}") == CID


def test_plain_url_has_no_cid():
    assert extract_ipfs_cid("https://example.com/art/cat.png") is None


def test_bare_cid_segment_and_cidv1():
    v1 = "bafybeigdyrzt5sfp7udm7hu76uh7y26nf3efuylqabf3oclgtqy55fbzdi"
    assert extract_ipfs_cid(f"https://{v1}.ipfs.dweb.example/x") is None  # subdomain form not recognized
    assert extract_ipfs_cid(f"https://cdn.example/{v1}") == v1
    assert extract_ipfs_cid(f"https://cdn.example/{CID}") == CID


@pytest.mark.parametrize("url", ["", "ftp://x/ipfs/" + CID, "https://x/ipfs/", "ipfs://", "http://[bad"])
def test_cid_extraction_is_total(url):
    assert extract_ipfs_cid(url) is None


_B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
hosts = st.from_regex(r"[a-z]{1,10}(\.[a-z]{2,5}){1,2}", fullmatch=True)


@given(st.text(_B58, min_size=44, max_size=44), hosts, hosts)
def test_cid_extraction_property(tail, h1, h2):
    cid = "Qm" + tail
    assert extract_ipfs_cid(f"https://{h1}/ipfs/{cid}") == cid == extract_ipfs_cid(f"http://{h2}/ipfs/{cid}")


def test_normalize_url():
    assert normalize_url("  ") is None
    assert normalize_url(f"https://g/ipfs/{CID}") == CID
    assert normalize_url(" https://x/a.png ") == "https://x/a.png"
