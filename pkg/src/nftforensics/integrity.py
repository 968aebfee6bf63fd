"""Counterfeit detection and trade-integrity audits."""
from __future__ import annotations

import bisect
import logging
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .model import AssetId, AssetRecord, EventStream, Paid, Sale, Transfer, extract_ipfs_cid

log = logging.getLogger(__name__)

HASH_SIZE = 8
HASH_IMAGE_SIZE = 32
EVASION_WINDOW = 900


class ImageError(ValueError):
    """Pixel data that cannot be hashed."""


# ------------------------------------------------------------ edit distance

def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype="<u4").astype(np.int64)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values, case-sensitive."""
    if a == b:
        return 0
    return _kernels.edit_distance(_codes(a), _codes(b))


@dataclass(frozen=True)
class Collection:
    slug: str
    name: str
    verified: bool
    asset_count: int


@dataclass(frozen=True)
class NameMatch:
    verified_collection: str
    replica_collection: str
    distance: int


def collections_from_assets(assets: Iterable[AssetRecord]) -> list:
    """One :class:`Collection` per slug; name from the lowest asset id, verified if any asset says so."""
    by_slug: dict[str, list] = defaultdict(list)
    for a in assets:
        by_slug[a.collection_slug].append(a)
    out = []
    for slug in sorted(by_slug):
        recs = sorted(by_slug[slug], key=lambda r: r.id)
        out.append(Collection(slug, recs[0].collection_name,
                              any(r.collection_verified for r in recs), len(recs)))
    return out


def find_similar_collection_names(collections: Iterable[Collection], max_distance: int = 2,
                                  min_name_len: int = 8, min_assets: int = 10) -> list:
    """Pairs (verified, unverified) whose names are within ``max_distance`` edits.

    Only names of at least ``min_name_len`` characters from collections with at
    least ``min_assets`` assets take part.  Identical names under different
    slugs are reported with distance 0.
    """
    eligible = [c for c in collections if len(c.name) >= min_name_len and c.asset_count >= min_assets]
    verified = [c for c in eligible if c.verified]
    replicas = [c for c in eligible if not c.verified]
    codes = {c.slug: _codes(c.name) for c in eligible}
    out = []
    for v in verified:
        for r in replicas:
            if abs(len(v.name) - len(r.name)) > max_distance:
                continue
            d = 0 if v.name == r.name else _kernels.edit_distance(codes[v.slug], codes[r.slug])
            if d <= max_distance:
                out.append(NameMatch(v.slug, r.slug, d))
    out.sort(key=lambda m: (m.verified_collection, m.replica_collection))
    return out


# ------------------------------------------------------------ duplicate URLs

@dataclass(frozen=True)
class UrlDuplicateGroup:
    key: str
    kind: str  # "ipfs" or "non_ipfs"
    members: tuple
    collections: tuple


class UrlDuplicateReport(NamedTuple):
    groups: list           # span at least two collections
    same_collection: list  # duplicates confined to one collection


def find_duplicate_asset_urls(assets: Iterable[AssetRecord]) -> UrlDuplicateReport:
    """Group assets by image CID (any gateway) or by exact non-IPFS URL."""
    buckets: dict[tuple, list] = defaultdict(list)
    for a in assets:
        if not a.image_url:
            continue
        cid = extract_ipfs_cid(a.image_url)
        key = ("ipfs", cid) if cid else ("non_ipfs", a.image_url)
        buckets[key].append(a)
    groups, same = [], []
    for (kind, key), recs in sorted(buckets.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if len(recs) < 2:
            continue
        cols = tuple(sorted({r.collection_slug for r in recs}))
        g = UrlDuplicateGroup(key, kind, tuple(sorted(r.id for r in recs)), cols)
        (groups if len(cols) > 1 else same).append(g)
    return UrlDuplicateReport(groups, same)


# ---------------------------------------------------------- perceptual hash

@dataclass(frozen=True)
class ImageHash:
    bits: int
    asset: Optional[AssetId] = None

    @property
    def hex(self) -> str:
        return f"{self.bits:016x}"

    def __sub__(self, other: "ImageHash") -> int:
        return hamming(self.bits, other.bits)


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging input cells over each output cell's span."""
    edges_in = np.arange(n_in + 1, dtype=np.float64)
    edges_out = np.linspace(0.0, n_in, n_out + 1)
    lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
    hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
    w = np.clip(hi - lo, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def _dct_rows(n: int, k: int) -> np.ndarray:
    # Unnormalized type-II DCT basis, first k frequencies.
    freq = np.arange(k)[:, None]
    pos = np.arange(n)[None, :]
    return 2.0 * np.cos(np.pi * freq * (2 * pos + 1) / (2 * n))


_DCT = _dct_rows(HASH_IMAGE_SIZE, HASH_SIZE)


def _to_gray(pixels) -> np.ndarray:
    arr = np.asarray(pixels)
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        # ITU-R 601-2 luma, as used by common image libraries for "L" mode
        arr = arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114
    if arr.ndim != 2:
        raise ImageError(f"expected a 2-D pixel matrix, got shape {arr.shape}")
    return arr.astype(np.float64)


def perceptual_hash(pixels) -> int:
    """64-bit DCT perceptual hash of a grayscale pixel matrix.

    The image is area-averaged to 32x32, transformed with a 2-D type-II DCT,
    and the top-left 8x8 block is thresholded at the median of its 63 non-DC
    coefficients.  Bit order is row-major over the block, most significant bit
    first.
    """
    gray = _to_gray(pixels)
    h, w = gray.shape
    if h < HASH_SIZE or w < HASH_SIZE:
        raise ImageError(f"image {w}x{h} is too small to hash")
    if not np.isfinite(gray).all():
        raise ImageError("image contains non-finite values")
    small = _area_weights(h, HASH_IMAGE_SIZE) @ gray @ _area_weights(w, HASH_IMAGE_SIZE).T
    low = (_DCT @ small @ _DCT.T).ravel()
    med = np.median(low[1:])
    out = 0
    for bit in (low > med).tolist():
        out = (out << 1) | bit
    return out


def hash_image_file(path) -> int:
    from PIL import Image

    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise ImageError(f"cannot decode {path}: {exc}") from exc
    return perceptual_hash(pixels)


def hash_image_directory(directory, assets: Optional[Iterable[AssetId]] = None):
    """Hash every ``<contract>_<token_id>[.ext]`` file in ``directory``.

    Returns ``(hashes, diagnostics)``; undecodable or unparseable files are
    skipped with a diagnostic string.
    """
    wanted = set(assets) if assets is not None else None
    hashes, diags = [], []
    for path in sorted(Path(directory).iterdir()):
        if not path.is_file():
            continue
        stem = path.name.split(".", 1)[0]
        try:
            contract, token = stem.rsplit("_", 1)
            aid = AssetId(contract, int(token))
        except ValueError:
            diags.append(f"{path.name}: name is not <contract>_<token_id>")
            continue
        if wanted is not None and aid not in wanted:
            continue
        try:
            hashes.append(ImageHash(hash_image_file(path), aid))
        except ImageError as exc:
            diags.append(f"{path.name}: {exc}")
    for d in diags:
        log.warning("skipped image %s", d)
    return hashes, diags


class ImagePair(NamedTuple):
    asset_a: AssetId
    asset_b: AssetId
    distance: int


def _collection_lookup(collection_of) -> Callable:
    if isinstance(collection_of, EventStream):
        return collection_of.collection_of
    if isinstance(collection_of, Mapping):
        return lambda a: collection_of[a]
    return collection_of


def find_similar_images(hashes: Sequence[ImageHash], collection_of, hamming_threshold: int = 0) -> list:
    """Cross-collection asset pairs whose hashes are within ``hamming_threshold`` bits.

    ``collection_of`` maps an AssetId to its collection slug (a mapping, a
    callable, or an EventStream).
    """
    col = _collection_lookup(collection_of)
    out = []
    if hamming_threshold == 0:
        for group in group_hash_collisions(hashes, col, cross_collection_only=False).values():
            for i, a in enumerate(group):
                for b in group[i + 1:]:
                    if col(a) != col(b):
                        out.append(ImagePair(a, b, 0))
    else:
        ordered = sorted(hashes, key=lambda h: h.asset)
        arr = np.array([h.bits for h in ordered], dtype=np.uint64)
        ii, jj, dd = _kernels.hamming_pairs(arr, hamming_threshold)
        for i, j, d in zip(ii.tolist(), jj.tolist(), dd.tolist()):
            a, b = ordered[i].asset, ordered[j].asset
            if col(a) != col(b):
                out.append(ImagePair(a, b, d))
    out.sort()
    return out


def group_hash_collisions(hashes: Sequence[ImageHash], collection_of,
                          cross_collection_only: bool = True) -> dict:
    """Hex hash -> sorted asset ids sharing it (groups of two or more)."""
    col = _collection_lookup(collection_of)
    groups: dict[int, list] = defaultdict(list)
    for h in hashes:
        groups[h.bits].append(h.asset)
    out = {}
    for bits in sorted(groups):
        members = sorted(groups[bits])
        if len(members) < 2:
            continue
        if cross_collection_only and len({col(a) for a in members}) < 2:
            continue
        out[f"{bits:016x}"] = members
    return out


# ------------------------------------------------------------------ evasion

@dataclass(frozen=True)
class EvasionInstance:
    seller: str
    buyer: str
    asset: AssetId
    transfer_time: int
    payment_time: int
    gap_seconds: int
    amount_wei: int


def detect_offplatform_trades(transfers: Iterable[Transfer], payments: Iterable[Paid],
                              window_seconds: int = EVASION_WINDOW) -> list:
    """Direct transfers S->B matched by a payment B->S within the window (inclusive).

    At most one instance per transfer: the nearest payment, earlier one on ties.
    ``gap_seconds`` is payment time minus transfer time.
    """
    by_pair: dict[tuple, list] = defaultdict(list)
    for p in payments:
        by_pair[(p.src, p.dst)].append(p)
    times = {}
    for key, ps in by_pair.items():
        ps.sort(key=lambda p: p.time)
        times[key] = [p.time for p in ps]
    out = []
    for t in transfers:
        if t.src == t.dst:
            continue
        key = (t.dst, t.src)
        ts = times.get(key)
        if not ts:
            continue
        lo = bisect.bisect_left(ts, t.time - window_seconds)
        hi = bisect.bisect_right(ts, t.time + window_seconds)
        if lo == hi:
            continue
        best = min(range(lo, hi), key=lambda k: (abs(ts[k] - t.time), ts[k]))
        p = by_pair[key][best]
        out.append(EvasionInstance(t.src, t.dst, t.asset, t.time, p.time, p.time - t.time, p.amount_wei))
    out.sort(key=lambda e: (e.transfer_time, e.seller, e.buyer, e.asset))
    return out


# ---------------------------------------------------------------- royalties

def count_royalty_increases(stream: EventStream) -> dict:
    """Per collection, ``[(asset, increases)]`` over each asset's sales in time order.

    Sales without a royalty are skipped; the comparison bridges over them.
    """
    last: dict[AssetId, Decimal] = {}
    counts: dict[AssetId, int] = {}
    for s in stream.events:
        if type(s) is not Sale or s.royalty_fraction is None:
            continue
        prev = last.get(s.asset)
        counts.setdefault(s.asset, 0)
        if prev is not None and s.royalty_fraction > prev:
            counts[s.asset] += 1
        last[s.asset] = s.royalty_fraction
    out: dict[str, list] = defaultdict(list)
    for asset in sorted(counts):
        out[stream.collection_of(asset)].append((asset, counts[asset]))
    return dict(sorted(out.items()))


def royalty_increases_for(royalties: Sequence[Optional[Union[Decimal, float]]]) -> int:
    """Increase count for one asset's time-ordered royalty sequence."""
    seq = [r for r in royalties if r is not None]
    return sum(1 for a, b in zip(seq, seq[1:]) if b > a)
