"""Off-chain persistence audits: URL liveness, metadata drift, escrow custody,
verification aggregates and contract source availability."""
from __future__ import annotations

import csv
import json
import threading
import time
import urllib.error
import urllib.request
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping, Optional, Protocol, Sequence
from urllib.parse import urlsplit

from .model import AssetId, AssetRecord, EventStream, Sale, Transfer, extract_ipfs_cid, normalize_url

ALIVE = "alive"
INACCESSIBLE = "inaccessible"
INSUFFICIENT = "insufficient_data"
ATTEMPTS = 3
TIMEOUT = None  # status marker for a request that timed out or failed to connect


@dataclass(frozen=True)
class AccessibilityRecord:
    url: str
    attempt: int
    method: str
    status: Optional[int]
    observed_at: int

    def __post_init__(self):
        if self.attempt not in (1, 2, 3):
            raise ValueError(f"attempt must be 1, 2 or 3, got {self.attempt}")
        if self.method not in ("HEAD", "GET"):
            raise ValueError(f"method must be HEAD or GET, got {self.method!r}")

    def to_json(self) -> dict:
        return {"url": self.url, "attempt": self.attempt, "method": self.method,
                "status": "timeout" if self.status is None else self.status,
                "observed_at": self.observed_at}

    @classmethod
    def from_json(cls, rec: Mapping) -> "AccessibilityRecord":
        status = rec["status"]
        if status == "timeout" or status is None:
            status = None
        elif isinstance(status, bool) or not isinstance(status, int):
            raise ValueError(f"status must be an HTTP code or 'timeout', got {status!r}")
        return cls(str(rec["url"]), int(rec["attempt"]), str(rec["method"]), status,
                   int(rec["observed_at"]))


def read_records(path) -> list:
    """Load a newline-delimited AccessibilityRecord file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(AccessibilityRecord.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_records(records: Iterable[AccessibilityRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def _attempt_outcome(recs: Sequence[AccessibilityRecord]) -> Optional[bool]:
    """True: reached (a 200). False: HEAD and GET both failed. None: incomplete."""
    by_method = {r.method: r.status for r in recs}
    if 200 in by_method.values():
        return True
    if "HEAD" in by_method and "GET" in by_method:
        return False
    return None


def classify_accessibility(records: Sequence[AccessibilityRecord]) -> str:
    """Classify one URL from up to three HEAD-then-GET attempts.

    ``alive`` if any attempt saw a 200; ``inaccessible`` only when all three
    attempts concluded with both HEAD and GET failing; otherwise
    ``insufficient_data``.
    """
    if len({r.url for r in records}) > 1:
        raise ValueError("records for more than one URL")
    seen = Counter((r.attempt, r.method) for r in records)
    dup = [k for k, n in seen.items() if n > 1]
    if dup:
        raise ValueError(f"repeated attempt/method records: {dup}")
    by_attempt: dict[int, list] = defaultdict(list)
    for r in records:
        by_attempt[r.attempt].append(r)
    outcomes = [_attempt_outcome(by_attempt[a]) for a in sorted(by_attempt)]
    if any(o is True for o in outcomes):
        return ALIVE
    if len(outcomes) == ATTEMPTS and all(o is False for o in outcomes):
        return INACCESSIBLE
    return INSUFFICIENT


def classify_all(records: Iterable[AccessibilityRecord]) -> dict:
    by_url: dict[str, list] = defaultdict(list)
    for r in records:
        by_url[r.url].append(r)
    return {url: classify_accessibility(recs) for url, recs in sorted(by_url.items())}


# ------------------------------------------------------------------ fetching

class Fetcher(Protocol):
    def status(self, url: str, method: str, attempt: int = 1) -> Optional[int]:
        """HTTP status for one request, or ``None`` on timeout/connection failure."""


class FixtureFetcher:
    """Replays canned statuses: ``{url: {method: status}}`` or ``{url: [per-round {method: status}]}``."""

    def __init__(self, table: Mapping):
        self.table = table
        self.calls: list = []

    def status(self, url: str, method: str, attempt: int = 1) -> Optional[int]:
        self.calls.append((url, method, attempt))
        entry = self.table.get(url, {})
        if isinstance(entry, list):
            entry = entry[min(attempt, len(entry)) - 1] if entry else {}
        return entry.get(method)


class HttpFetcher:
    """Live HEAD/GET prober restricted to an allowlist of hosts.

    Redirects are followed and the final status counts.  Requests to a host are
    spaced by ``per_host_delay`` seconds.
    """

    def __init__(self, allowlist: Iterable[str], timeout: float = 10.0, per_host_delay: float = 1.0):
        self.allowlist = {h.lower() for h in allowlist}
        self.timeout = timeout
        self.per_host_delay = per_host_delay
        self._last: dict[str, float] = {}
        self._lock = threading.Lock()

    def _wait(self, host: str) -> None:
        with self._lock:
            now = time.monotonic()
            ready = self._last.get(host, 0.0) + self.per_host_delay
            self._last[host] = max(now, ready)
        if ready > now:
            time.sleep(ready - now)

    def status(self, url: str, method: str, attempt: int = 1) -> Optional[int]:
        host = (urlsplit(url).hostname or "").lower()
        if host not in self.allowlist:
            raise PermissionError(f"host {host!r} is not in the allowlist")
        self._wait(host)
        req = urllib.request.Request(url, method=method)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status
        except urllib.error.HTTPError as exc:
            return exc.code
        except (urllib.error.URLError, TimeoutError, OSError):
            return TIMEOUT


def read_allowlist(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def probe_once(url: str, fetcher, attempt: int, clock=time.time) -> list:
    """One HEAD-then-GET attempt; GET only when HEAD is not 200."""
    head = fetcher.status(url, "HEAD", attempt)
    recs = [AccessibilityRecord(url, attempt, "HEAD", head, int(clock()))]
    if head != 200:
        get = fetcher.status(url, "GET", attempt)
        recs.append(AccessibilityRecord(url, attempt, "GET", get, int(clock())))
    return recs


def run_accessibility_rounds(urls: Iterable[str], fetcher, rounds: int = ATTEMPTS,
                             max_workers: int = 8, clock=time.time, between_rounds=None) -> list:
    """Run up to ``rounds`` attempts; only URLs that failed the previous round are retried.

    ``between_rounds`` is called between rounds (the operational schedule spaces
    them over days; nothing here enforces that).
    """
    pending = sorted(set(urls))
    records: list = []
    for attempt in range(1, rounds + 1):
        if not pending:
            break
        if attempt > 1 and between_rounds is not None:
            between_rounds(attempt)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda u: probe_once(u, fetcher, attempt, clock), pending))
        failed = []
        for url, recs in zip(pending, results):
            records.extend(recs)
            if not any(r.status == 200 for r in recs):
                failed.append(url)
        pending = failed
    return records


# -------------------------------------------------------------- link matrix

RESOURCES = ("image", "metadata")
HOST_KINDS = ("ipfs", "non_ipfs")
STATES = (ALIVE, INACCESSIBLE)


@dataclass
class LinkAuditMatrix:
    counts: dict = field(default_factory=lambda: {(r, h, s): 0 for r in RESOURCES
                                                  for h in HOST_KINDS for s in STATES})
    missing_url: dict = field(default_factory=lambda: {r: 0 for r in RESOURCES})
    unresolved: dict = field(default_factory=lambda: {r: 0 for r in RESOURCES})

    def audited(self, resource: str) -> int:
        return sum(v for (r, _, _), v in self.counts.items() if r == resource)

    def to_json(self) -> dict:
        return {
            "cells": {f"{r}/{h}/{s}": v for (r, h, s), v in sorted(self.counts.items())},
            "missing_url": dict(sorted(self.missing_url.items())),
            "unresolved": dict(sorted(self.unresolved.items())),
        }


def build_link_matrix(assets: Iterable[AssetRecord], classifications: Mapping[str, str]) -> LinkAuditMatrix:
    """Tally each asset's image and metadata URL by host kind and liveness.

    Assets without a URL are counted in ``missing_url``; URLs with no verdict or
    ``insufficient_data`` go to ``unresolved``.
    """
    m = LinkAuditMatrix()
    for a in assets:
        for resource, url in (("image", a.image_url), ("metadata", a.metadata_url)):
            if not url:
                m.missing_url[resource] += 1
                continue
            state = classifications.get(url)
            if state not in STATES:
                m.unresolved[resource] += 1
                continue
            host = "ipfs" if extract_ipfs_cid(url) else "non_ipfs"
            m.counts[(resource, host, state)] += 1
    return m


# ------------------------------------------------------------- metadata drift

@dataclass(frozen=True)
class MetadataDiff:
    changed: int
    unchanged: int
    missing: int


def diff_metadata_urls(crawl_a: Mapping, crawl_b: Mapping) -> MetadataDiff:
    """Compare two asset -> metadata_url snapshots; IPFS URLs compare by CID."""
    changed = unchanged = missing = 0
    for key in set(crawl_a) | set(crawl_b):
        a, b = normalize_url(crawl_a.get(key)), normalize_url(crawl_b.get(key))
        if a is None or b is None:
            missing += 1
        elif a == b:
            unchanged += 1
        else:
            changed += 1
    return MetadataDiff(changed, unchanged, missing)


def taken_down(earlier: Iterable[AssetRecord], later: Iterable[AssetRecord]) -> set:
    """Assets present in the earlier snapshot and absent from the later one."""
    return {a.id for a in earlier} - {a.id for a in later}


# ------------------------------------------------------------------- escrow

def escrow_series(transfers: Iterable[Transfer], escrow: str) -> list:
    """``(time, count)`` after every transfer that changes the escrow's holdings."""
    holder: dict[AssetId, str] = {}
    count = 0
    series = []
    for t in sorted(transfers, key=lambda t: t.time):
        before = holder.get(t.asset) == escrow
        holder[t.asset] = t.dst
        after = t.dst == escrow
        if before != after:
            count += 1 if after else -1
            series.append((t.time, count))
    return series


def count_escrowed(transfers: Iterable[Transfer], escrow: str, at_time: int) -> int:
    """Assets whose latest destination at or before ``at_time`` is the escrow account."""
    count = 0
    for t, c in escrow_series((t for t in transfers if t.time <= at_time), escrow):
        count = c
    return count


def write_escrow_csv(series: Sequence[tuple], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "count"])
        w.writerows(series)


# ------------------------------------------------------ verification table

@dataclass(frozen=True)
class VerificationRow:
    entity: str  # "seller" or "collection"
    status: str  # "verified" or "non_verified"
    count: int
    total_sales_usd: Decimal
    average_sales_usd: Optional[Decimal]
    taken_down: Optional[int]


def verification_aggregates(stream: EventStream, assets: Optional[Mapping] = None) -> list:
    """Counts and sales volumes of verified vs non-verified sellers and collections.

    A seller is verified when any sold asset's record marks the seller
    verified; sellers with no verification information are left out.  A
    collection counts as taken down when every one of its assets is.
    """
    assets = stream.assets if assets is None else assets
    seller_flag: dict[str, Optional[bool]] = {}
    seller_total: dict[str, Decimal] = defaultdict(Decimal)
    col_total: dict[str, Decimal] = defaultdict(Decimal)
    for s in stream.events:
        if type(s) is not Sale:
            continue
        rec = assets.get(s.asset)
        flag = rec.seller_verified if rec is not None else None
        prev = seller_flag.get(s.seller)
        seller_flag[s.seller] = flag if prev is None else (prev or bool(flag))
        seller_total[s.seller] += s.price_usd
        if rec is not None:
            col_total[rec.collection_slug] += s.price_usd

    col_verified: dict[str, bool] = {}
    col_down: dict[str, bool] = {}
    for rec in assets.values():
        slug = rec.collection_slug
        col_verified[slug] = col_verified.get(slug, False) or rec.collection_verified
        col_down[slug] = col_down.get(slug, True) and rec.taken_down

    def row(entity, status, keys, totals, down):
        total = sum((totals.get(k, Decimal(0)) for k in keys), Decimal(0))
        n = len(keys)
        return VerificationRow(entity, status, n, total, total / n if n else None, down)

    rows = []
    for status, want in (("verified", True), ("non_verified", False)):
        sellers = [u for u, f in seller_flag.items() if f is not None and f == want]
        rows.append(row("seller", status, sellers, seller_total, None))
    for status, want in (("verified", True), ("non_verified", False)):
        cols = [c for c, v in col_verified.items() if v == want]
        rows.append(row("collection", status, cols, col_total, sum(1 for c in cols if col_down[c])))
    return rows


# ------------------------------------------------------- source availability

@dataclass(frozen=True)
class SourceAvailability:
    open_alive: int
    open_down: int
    closed_alive: int
    closed_down: int
    unknown: int

    @property
    def known(self) -> int:
        return self.open_alive + self.open_down + self.closed_alive + self.closed_down

    def percentages(self) -> dict:
        n = self.known
        cells = {"open_alive": self.open_alive, "open_down": self.open_down,
                 "closed_alive": self.closed_alive, "closed_down": self.closed_down}
        if n == 0:
            return {k: Decimal(0) for k in cells}
        return {k: Decimal(v) * 100 / n for k, v in cells.items()}


def source_availability_stats(assets: Iterable[AssetRecord]) -> SourceAvailability:
    c = Counter()
    for a in assets:
        if a.source_available is None:
            c["unknown"] += 1
        else:
            c[("open" if a.source_available else "closed") + ("_down" if a.taken_down else "_alive")] += 1
    return SourceAvailability(c["open_alive"], c["open_down"], c["closed_alive"], c["closed_down"], c["unknown"])
