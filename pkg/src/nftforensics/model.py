"""Canonical asset/event schema, newline-delimited ingestion and URL normalization."""
from __future__ import annotations

import io
import json
import os
import re
from dataclasses import dataclass, field, fields
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Optional, Union
from urllib.parse import urlsplit

_ADDRESS_RE = re.compile(r"^0x[0-9a-fA-F]{40}$")
_TX_RE = re.compile(r"^0x[0-9a-fA-F]{64}$")
_BASE58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_CIDV0_RE = re.compile(rf"^Qm[{_BASE58}]{{44}}$")
_CIDV1_B32_RE = re.compile(r"^b[a-z2-7]{50,}$")
# Looser forms only accepted right after an explicit "ipfs/" segment or scheme.
_CIDV1_OTHER_RE = re.compile(r"^(?:[kz][0-9A-Za-z]{45,}|B[A-Z2-7]{50,})$")

MALFORMED_FATAL_FRACTION = 0.5


class IngestError(Exception):
    """Input that cannot be ingested at all (unreadable, or mostly malformed)."""


class Marketplace(str, Enum):
    OPENSEA = "OpenSea"
    AXIE = "Axie"
    CRYPTOPUNKS = "CryptoPunks"
    RARIBLE = "Rarible"
    SUPERRARE = "SuperRare"
    SORARE = "Sorare"
    FOUNDATION = "Foundation"


def account(value: str) -> str:
    """Normalize an address to lowercase ``0x`` + 40 hex digits; checksummed input is accepted."""
    if not isinstance(value, str) or not _ADDRESS_RE.match(value):
        raise ValueError(f"invalid account address: {value!r}")
    return value.lower()


def _tx_hash(value) -> Optional[str]:
    if value is None:
        return None
    if not isinstance(value, str) or not _TX_RE.match(value):
        raise ValueError(f"invalid transaction hash: {value!r}")
    return value.lower()


@dataclass(frozen=True, order=True)
class AssetId:
    contract: str
    token_id: int

    def __post_init__(self):
        object.__setattr__(self, "contract", account(self.contract))
        if isinstance(self.token_id, bool) or not isinstance(self.token_id, int) or self.token_id < 0:
            raise ValueError(f"token_id must be a non-negative integer, got {self.token_id!r}")

    def __str__(self) -> str:
        return f"{self.contract}_{self.token_id}"

    def to_json(self) -> dict:
        return {"contract": self.contract, "token_id": str(self.token_id)}

    @classmethod
    def from_json(cls, obj) -> "AssetId":
        if not isinstance(obj, Mapping):
            raise ValueError("asset must be an object with contract and token_id")
        return cls(obj["contract"], _uint(obj["token_id"], "token_id"))


@dataclass(frozen=True)
class AssetRecord:
    id: AssetId
    collection_slug: str
    collection_name: str
    marketplace: Marketplace
    collection_verified: bool = False
    image_url: Optional[str] = None
    metadata_url: Optional[str] = None
    source_available: Optional[bool] = None
    seller_verified: Optional[bool] = None
    taken_down: bool = False

    def __post_init__(self):
        if not self.collection_slug:
            raise ValueError("collection_slug must be nonempty")
        object.__setattr__(self, "marketplace", Marketplace(self.marketplace))


# ------------------------------------------------------------------- events
#
# Attribute names follow the wire field names except Paid/Transfer, whose
# "from"/"to" become ``src``/``dst``.

@dataclass(frozen=True)
class Mint:
    creator: str
    asset: AssetId
    time: int


@dataclass(frozen=True)
class Sale:
    seller: str
    buyer: str
    asset: AssetId
    price_usd: Decimal
    price_eth: Decimal
    time: int
    royalty_fraction: Optional[Decimal] = None
    tx: Optional[str] = None


@dataclass(frozen=True)
class AuctionStart:
    seller: str
    reserve_usd: Decimal
    time: int
    auction_id: str
    asset: AssetId


@dataclass(frozen=True)
class Bid:
    bidder: str
    amount_usd: Decimal
    time: int
    auction_id: str
    asset: AssetId


@dataclass(frozen=True)
class CancelBid:
    bidder: str
    amount_usd: Decimal
    time: int
    auction_id: str
    asset: AssetId


@dataclass(frozen=True)
class Win:
    winner: str
    amount_usd: Decimal
    time: int
    auction_id: str
    asset: AssetId


@dataclass(frozen=True)
class AuctionEnd:
    auction_id: str
    asset: AssetId
    time: int


@dataclass(frozen=True)
class Paid:
    src: str
    dst: str
    amount_wei: int
    time: int
    tx: Optional[str] = None


@dataclass(frozen=True)
class Transfer:
    src: str
    dst: str
    asset: AssetId
    time: int
    tx: Optional[str] = None


Event = Union[Mint, Sale, AuctionStart, Bid, CancelBid, Win, AuctionEnd, Paid, Transfer]

EVENT_KINDS: dict[str, type] = {
    "mint": Mint,
    "sale": Sale,
    "auction_start": AuctionStart,
    "bid": Bid,
    "cancel_bid": CancelBid,
    "win": Win,
    "auction_end": AuctionEnd,
    "paid": Paid,
    "transfer": Transfer,
}
KIND_OF = {cls: name for name, cls in EVENT_KINDS.items()}
_KIND_RANK = {cls: i for i, cls in enumerate(EVENT_KINDS.values())}
_WIRE_NAME = {"src": "from", "dst": "to"}
_ACCOUNT_FIELDS = {"creator", "seller", "buyer", "bidder", "winner", "src", "dst"}
_DECIMAL_FIELDS = {"price_usd", "price_eth", "reserve_usd", "amount_usd", "royalty_fraction"}
AUCTION_REF_KINDS = (Bid, CancelBid, Win)


def _uint(value, name: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    if isinstance(value, int):
        out = value
    elif isinstance(value, str) and value.strip().isdigit():
        out = int(value.strip())
    elif isinstance(value, Decimal) and value == value.to_integral_value():
        out = int(value)
    else:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    if out < 0:
        raise ValueError(f"{name} must be non-negative")
    return out


def _decimal(value, name: str) -> Decimal:
    if isinstance(value, bool) or value is None:
        raise ValueError(f"{name} must be a decimal amount")
    try:
        out = value if isinstance(value, Decimal) else Decimal(str(value))
    except InvalidOperation:
        raise ValueError(f"{name} is not a decimal: {value!r}") from None
    if not out.is_finite() or out < 0:
        raise ValueError(f"{name} must be a finite non-negative amount")
    return out


def event_from_record(kind: str, rec: Mapping) -> Event:
    """Build one event from a decoded wire record. Raises ValueError/KeyError on bad input."""
    cls = EVENT_KINDS[kind]
    kwargs = {}
    for f in fields(cls):
        wire = _WIRE_NAME.get(f.name, f.name)
        optional = f.default is None
        if wire not in rec or rec[wire] is None:
            if optional:
                kwargs[f.name] = None
                continue
            raise KeyError(f"missing field {wire!r}")
        raw = rec[wire]
        if f.name in _ACCOUNT_FIELDS:
            kwargs[f.name] = account(raw)
        elif f.name == "asset":
            kwargs[f.name] = AssetId.from_json(raw)
        elif f.name in _DECIMAL_FIELDS:
            kwargs[f.name] = _decimal(raw, wire)
        elif f.name in ("time", "amount_wei"):
            kwargs[f.name] = _uint(raw, wire)
        elif f.name == "tx":
            kwargs[f.name] = _tx_hash(raw)
        elif f.name == "auction_id":
            if not isinstance(raw, str) or not raw:
                raise ValueError("auction_id must be a nonempty string")
            kwargs[f.name] = raw
    if kwargs.get("royalty_fraction") is not None and kwargs["royalty_fraction"] > 1:
        raise ValueError("royalty_fraction must lie in [0, 1]")
    return cls(**kwargs)


def event_to_record(event: Event, discriminator: str = "type") -> dict:
    rec = {discriminator: KIND_OF[type(event)]}
    for f in fields(event):
        value = getattr(event, f.name)
        if value is None:
            continue
        wire = _WIRE_NAME.get(f.name, f.name)
        if isinstance(value, AssetId):
            rec[wire] = value.to_json()
        elif isinstance(value, Decimal):
            rec[wire] = str(value)
        elif f.name == "amount_wei":
            rec[wire] = str(value)
        else:
            rec[wire] = value
    return rec


def asset_from_record(rec: Mapping) -> AssetRecord:
    def opt_bool(name):
        v = rec.get(name)
        if v is None or isinstance(v, bool):
            return v
        raise ValueError(f"{name} must be boolean or null")

    for name in ("collection_verified", "taken_down"):
        if not isinstance(rec.get(name, False), bool):
            raise ValueError(f"{name} must be boolean")
    return AssetRecord(
        id=AssetId.from_json(rec["id"]),
        collection_slug=str(rec["collection_slug"]),
        collection_name=str(rec.get("collection_name", rec["collection_slug"])),
        marketplace=Marketplace(rec["marketplace"]),
        collection_verified=rec.get("collection_verified", False),
        image_url=rec.get("image_url") or None,
        metadata_url=rec.get("metadata_url") or None,
        source_available=opt_bool("source_available"),
        seller_verified=opt_bool("seller_verified"),
        taken_down=rec.get("taken_down", False),
    )


def asset_to_record(asset: AssetRecord, discriminator: str = "type") -> dict:
    rec = {
        discriminator: "asset",
        "id": asset.id.to_json(),
        "collection_slug": asset.collection_slug,
        "collection_name": asset.collection_name,
        "marketplace": asset.marketplace.value,
        "collection_verified": asset.collection_verified,
        "taken_down": asset.taken_down,
    }
    for name in ("image_url", "metadata_url", "source_available", "seller_verified"):
        value = getattr(asset, name)
        if value is not None:
            rec[name] = value
    return rec


def _canonical_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def event_sort_key(event: Event):
    """Total order: time, then relation kind, then canonical serialization."""
    return (event.time, _KIND_RANK[type(event)], _canonical_line(event_to_record(event)))


# ------------------------------------------------------------------ stream

@dataclass(frozen=True)
class Diagnostic:
    source: str
    line: int
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.source}:{self.line}: {self.code}: {self.message}"


@dataclass(frozen=True)
class EventStream:
    events: tuple
    assets: Mapping[AssetId, AssetRecord] = field(default_factory=dict)
    diagnostics: tuple = ()

    @classmethod
    def from_events(cls, events: Iterable[Event], assets: Iterable[AssetRecord] = (),
                    diagnostics: Iterable[Diagnostic] = ()) -> "EventStream":
        """Sort, de-duplicate (first occurrence wins) and index assets."""
        ordered = sorted(dict.fromkeys(events), key=event_sort_key)
        by_id = {a.id: a for a in sorted(assets, key=lambda a: a.id)}
        return cls(tuple(ordered), by_id, tuple(diagnostics))

    def __len__(self) -> int:
        return len(self.events)

    def of_type(self, cls) -> list:
        return [e for e in self.events if type(e) is cls]

    def index_map(self) -> dict:
        return {e: i for i, e in enumerate(self.events)}

    def collection_of(self, asset: AssetId) -> str:
        """Collection slug of an asset; unknown assets fall back to their contract address."""
        rec = self.assets.get(asset)
        return rec.collection_slug if rec is not None else asset.contract


def _iter_lines(source) -> Iterator[bytes]:
    if isinstance(source, (bytes, bytearray)):
        yield from io.BytesIO(source)
    elif isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "rb") as fh:
                yield from fh
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc.strerror or exc}") from exc
    else:
        for line in source:
            yield line if isinstance(line, bytes) else line.encode("utf-8")


def _source_name(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        return str(source)
    return getattr(source, "name", "<stream>")


def ingest(source, schema: str = "type", *, assets=None) -> EventStream:
    """Parse newline-delimited JSON records into a validated :class:`EventStream`.

    ``source`` (and the optional companion ``assets`` source) may be a path, raw
    bytes, or an iterable of lines.  ``schema`` names the field carrying the
    record kind.  Malformed lines, unknown kinds, duplicates and dangling auction
    references become diagnostics tagged with their line number.

    Raises:
        IngestError: a source cannot be read, or more than half of its
            non-blank lines are malformed.
    """
    events: list = []
    asset_recs: dict[AssetId, AssetRecord] = {}
    diags: list[Diagnostic] = []
    first_seen: dict = {}
    origin: dict = {}

    for src in (source, assets):
        if src is None:
            continue
        name = _source_name(src)
        total = malformed = 0
        for lineno, raw in enumerate(_iter_lines(src), start=1):
            if not raw.strip():
                continue
            total += 1
            try:
                rec = json.loads(raw.decode("utf-8"), parse_float=Decimal)
                if not isinstance(rec, dict):
                    raise ValueError("record is not an object")
                kind = rec.get(schema)
                if not isinstance(kind, str):
                    raise ValueError(f"missing {schema!r} discriminator")
                if kind == "asset":
                    item = asset_from_record(rec)
                elif kind in EVENT_KINDS:
                    item = event_from_record(kind, rec)
                else:
                    diags.append(Diagnostic(name, lineno, "unknown_kind", f"unknown record kind {kind!r}"))
                    continue
            except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
                malformed += 1
                msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
                diags.append(Diagnostic(name, lineno, "malformed", str(msg)))
                continue

            if isinstance(item, AssetRecord):
                prev = asset_recs.get(item.id)
                if prev is None:
                    asset_recs[item.id] = item
                elif prev == item:
                    diags.append(Diagnostic(name, lineno, "duplicate", f"duplicate asset record {item.id}"))
                else:
                    diags.append(Diagnostic(name, lineno, "conflict",
                                            f"conflicting asset record for {item.id}; first kept"))
                continue
            if item in first_seen:
                where = first_seen[item]
                diags.append(Diagnostic(name, lineno, "duplicate", f"duplicate of {where[0]}:{where[1]}"))
                continue
            first_seen[item] = (name, lineno)
            origin[item] = (name, lineno)
            events.append(item)
        if total and malformed * 2 > total:
            raise IngestError(
                f"{name}: {malformed} of {total} lines malformed; is this the right file?"
            )

    opened = {e.auction_id for e in events if type(e) is AuctionStart}
    for e in events:
        if type(e) in AUCTION_REF_KINDS and e.auction_id not in opened:
            name, lineno = origin[e]
            diags.append(Diagnostic(name, lineno, "dangling_auction",
                                    f"{KIND_OF[type(e)]} references unopened auction {e.auction_id!r}"))
    diags.sort(key=lambda d: (d.source, d.line, d.code))
    return EventStream.from_events(events, asset_recs.values(), diags)


def serialize(stream: EventStream, discriminator: str = "type") -> bytes:
    """Canonical newline-delimited form: asset records first, then events in stream order."""
    return serialize_assets(stream.assets.values(), discriminator) + serialize_events(stream.events, discriminator)


def serialize_events(events: Iterable[Event], discriminator: str = "type") -> bytes:
    return "".join(_canonical_line(event_to_record(e, discriminator)) + "\n" for e in events).encode("utf-8")


def serialize_assets(assets: Iterable[AssetRecord], discriminator: str = "type") -> bytes:
    return "".join(_canonical_line(asset_to_record(a, discriminator)) + "\n"
                   for a in sorted(assets, key=lambda a: a.id)).encode("utf-8")


def write_stream(stream: EventStream, events_path, assets_path=None) -> None:
    """Write events (and assets, to a separate file when a path is given)."""
    if assets_path is None:
        Path(events_path).write_bytes(serialize(stream))
        return
    Path(events_path).write_bytes(serialize_events(stream.events))
    Path(assets_path).write_bytes(serialize_assets(stream.assets.values()))


# -------------------------------------------------------------------- IPFS

def _is_cid(segment: str, lenient: bool) -> bool:
    if _CIDV0_RE.match(segment) or _CIDV1_B32_RE.match(segment):
        return True
    return lenient and bool(_CIDV1_OTHER_RE.match(segment))


def extract_ipfs_cid(url: str) -> Optional[str]:
    """Return the IPFS content identifier embedded in ``url``, if any.

    Recognized: ``ipfs://<cid>[/path]`` (also ``ipfs://ipfs/<cid>``), gateway
    paths ``.../ipfs/<cid>/...``, and a bare path segment that is a CIDv0 or a
    base32 CIDv1.  The gateway host never affects the result.
    """
    if not isinstance(url, str):
        return None
    url = url.strip()
    try:
        parts = urlsplit(url)
    except ValueError:
        return None
    scheme = parts.scheme.lower()
    if scheme == "ipfs":
        segs = [s for s in (parts.netloc + parts.path).split("/") if s]
        if segs and segs[0] == "ipfs":
            segs = segs[1:]
        if segs and _is_cid(segs[0], lenient=True):
            return segs[0]
        return None
    if scheme not in ("http", "https"):
        return None
    segs = [s for s in parts.path.split("/") if s]
    for i, seg in enumerate(segs[:-1]):
        if seg == "ipfs" and _is_cid(segs[i + 1], lenient=True):
            return segs[i + 1]
    for seg in segs:
        if _is_cid(seg, lenient=False):
            return seg
    return None


def normalize_url(url: Optional[str]) -> Optional[str]:
    """CID for IPFS URLs, the stripped URL otherwise; empty becomes ``None``."""
    if not url or not url.strip():
        return None
    return extract_ipfs_cid(url) or url.strip()
