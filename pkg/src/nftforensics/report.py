"""Run reports: detector orchestration, JSON emission and label scoring.

Reports are JSON trees with sorted keys.  Decimals are written as strings and
events are referenced by their index in the canonical stream order, so a
report plus its inputs is enough to reproduce and audit a run.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import __version__
from .config import Settings
from .graphs import build_graphs
from .integrity import (collections_from_assets, detect_offplatform_trades, find_duplicate_asset_urls,
                        find_similar_collection_names, find_similar_images, hash_image_directory,
                        count_royalty_increases)
from .linkaudit import (LinkAuditMatrix, build_link_matrix, classify_all, count_escrowed, diff_metadata_urls,
                        escrow_series, source_availability_stats, taken_down, verification_aggregates)
from .model import EventStream, Paid, Transfer
from .trading import (Components, detect_bid_shielding, detect_failed_highest_bid, detect_shill_bids,
                      detect_wash_trades, reconstruct_auctions, wash_trade_factors)

DETECTORS = ("wash", "shill", "shield", "counterfeit", "evasion")


def _dec(d: Optional[Decimal]) -> Optional[str]:
    return None if d is None else str(d)


def _sum(values: Iterable[str]) -> Decimal:
    return sum((Decimal(v) for v in values if v is not None), Decimal(0))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def describe_inputs(paths: Mapping[str, Optional[str]]) -> dict:
    """``{role: {"path", "sha256"}}`` for every given input file."""
    return {role: {"path": str(p), "sha256": file_digest(p)} for role, p in sorted(paths.items()) if p}


@dataclass
class RunReport:
    """Everything one command produced.

    ``findings`` maps a detector or audit name to a list of JSON objects and
    ``summary`` holds the totals derived from them.
    """

    command: str
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    findings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {"tool_version": self.tool_version, "command": self.command, "config": self.config,
                "inputs": self.inputs, "findings": self.findings, "summary": self.summary}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        obj = json.loads(text)
        missing = {"tool_version", "command", "config", "inputs", "findings", "summary"} - set(obj)
        if missing:
            raise ValueError(f"report lacks {sorted(missing)}")
        return cls(obj["command"], obj["config"], obj["inputs"], obj["findings"], obj["summary"],
                   obj["tool_version"])

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- detection

def _wash_json(f, index) -> dict:
    return {
        "members": list(f.members),
        "trigger": sorted(f.trigger),
        "component": f.component[0],
        "first_time": f.first_time,
        "flagged_sales": [index[s] for s in f.flagged_sales],
        "volume_usd": _dec(f.volume_usd),
    }


def _shill_json(f, index) -> dict:
    return {
        "bidder": f.bidder, "seller": f.seller, "auction_id": f.auction_id, "asset": str(f.asset),
        "shill_score": _dec(f.shill_score), "shill_profit_usd": _dec(f.shill_profit_usd),
        "connectivity": sorted(f.connectivity), "bids": [index[b] for b in f.bids],
    }


def _shield_json(f, index) -> dict:
    return {
        "shielder": f.shielder, "winner": f.winner, "auction_id": f.auction_id, "asset": str(f.asset),
        "shield_amount": _dec(f.shield_amount), "win_amount": _dec(f.win_amount),
        "shielded_bid_difference": _dec(f.shielded_bid_difference), "cancel_time": f.cancel_time,
        "events": [index[e] for e in f.events],
    }


def _evasion_json(e) -> dict:
    return {"seller": e.seller, "buyer": e.buyer, "asset": str(e.asset), "transfer_time": e.transfer_time,
            "payment_time": e.payment_time, "gap_seconds": e.gap_seconds, "amount_wei": str(e.amount_wei)}


def parse_which(which) -> tuple:
    """Normalize ``--which`` input (comma list, ``all``) into detector names."""
    if isinstance(which, str):
        which = [w for w in which.split(",") if w.strip()]
    names = []
    for w in which:
        w = w.strip().lower()
        if w == "all":
            names.extend(DETECTORS)
        elif w in DETECTORS:
            names.append(w)
        else:
            raise ValueError(f"unknown detector {w!r}; choose from {', '.join(DETECTORS + ('all',))}")
    return tuple(d for d in DETECTORS if d in names)


def run_detect(stream: EventStream, settings: Settings = Settings(), which="all",
               images_dir=None) -> tuple:
    """Run the chosen detectors; returns ``(findings, summary)`` as JSON-ready dicts."""
    which = parse_which(which)
    index = stream.index_map()
    findings: dict = {}
    summary: dict = {}
    need_graphs = {"wash", "shill"} & set(which)
    graphs = build_graphs(stream) if need_graphs else None
    auctions = reconstruct_auctions(stream) if {"shill", "shield"} & set(which) else None

    comps = {}
    def components(hub):
        if hub not in comps:
            comps[hub] = Components.of(graphs, hub)
        return comps[hub]

    if "wash" in which:
        wash = detect_wash_trades(stream, graphs, settings.wash, components(settings.wash.hub_degree))
        rows = [_wash_json(f, index) for f in wash]
        findings["wash"] = rows
        excluded = components(settings.wash.hub_degree).payments_wcc.excluded
        summary["wash"] = {
            "instances": len(rows),
            "flagged_sales": sum(len(r["flagged_sales"]) for r in rows),
            "volume_usd": str(_sum(r["volume_usd"] for r in rows)),
            "wash_trade_factor": {c: _dec(v) for c, v in wash_trade_factors(wash, stream).items()},
            "hub_excluded": sorted(excluded),
        }
    if "shill" in which:
        shill = detect_shill_bids(stream, graphs, settings.shill, components(settings.shill.hub_degree), auctions)
        rows = [_shill_json(f, index) for f in shill]
        findings["shill"] = rows
        summary["shill"] = {
            "instances": len(rows),
            "auctions": len({r["auction_id"] for r in rows}),
            "shill_profit_usd": str(_sum(r["shill_profit_usd"] for r in rows)),
        }
    if "shield" in which:
        shield = detect_bid_shielding(stream, settings.shield, auctions)
        rows = [_shield_json(f, index) for f in shield]
        findings["shield"] = rows
        summary["shield"] = {
            "instances": len(rows),
            "shielded_bid_difference_usd": str(_sum(r["shielded_bid_difference"] for r in rows)),
        }
    if "counterfeit" in which:
        names = find_similar_collection_names(collections_from_assets(stream.assets.values()),
                                              settings.name_max_distance, settings.name_min_len,
                                              settings.name_min_assets)
        urls = find_duplicate_asset_urls(stream.assets.values())
        block = {
            "names": [{"verified": m.verified_collection, "replica": m.replica_collection,
                       "distance": m.distance} for m in names],
            "urls": [{"key": g.key, "kind": g.kind, "members": [str(a) for a in g.members],
                      "collections": list(g.collections)} for g in urls.groups],
            "urls_same_collection": [{"key": g.key, "kind": g.kind, "members": [str(a) for a in g.members],
                                      "collections": list(g.collections)} for g in urls.same_collection],
        }
        if images_dir is not None:
            hashes, diags = hash_image_directory(images_dir, stream.assets.keys() or None)
            pairs = find_similar_images(hashes, stream, settings.hamming_threshold)
            block["images"] = [{"a": str(p.asset_a), "b": str(p.asset_b), "distance": p.distance}
                               for p in pairs]
            block["image_diagnostics"] = diags
        findings["counterfeit"] = block
        summary["counterfeit"] = {
            "name_pairs": len(block["names"]),
            "url_groups": len(block["urls"]),
            "url_assets": sum(len(g["members"]) for g in block["urls"]),
            "image_pairs": len(block.get("images", [])),
        }
    if "evasion" in which:
        ev = detect_offplatform_trades(stream.of_type(Transfer), stream.of_type(Paid), settings.evasion_window)
        rows = [_evasion_json(e) for e in ev]
        findings["evasion"] = rows
        summary["evasion"] = {"instances": len(rows),
                              "amount_wei": str(sum(int(r["amount_wei"]) for r in rows))}
    return findings, summary


def detect_report(stream: EventStream, settings: Settings = Settings(), which="all", inputs=None,
                  images_dir=None, labels: Optional[Sequence] = None) -> RunReport:
    findings, summary = run_detect(stream, settings, which, images_dir)
    config = settings.echo()
    config["which"] = ",".join(parse_which(which))
    if labels is not None:
        summary["labels"] = score_against_labels(findings, labels)
    if stream.diagnostics:
        summary["ingest_diagnostics"] = len(stream.diagnostics)
    return RunReport("detect", config, inputs or {}, findings, summary)


# ------------------------------------------------------------------ scoring

_LABEL_KIND = {"wash_ring": "wash", "shill_auction": "shill", "shield_auction": "shield"}


def _flagged_indices(findings: Mapping) -> dict:
    out = {
        "wash": {i for f in findings.get("wash", []) for i in f["flagged_sales"]},
        "shill": {i for f in findings.get("shill", []) for i in f["bids"]},
        "shield": {i for f in findings.get("shield", []) for i in f["events"]},
    }
    return out


def score_against_labels(findings: Mapping, labels: Sequence[Mapping]) -> dict:
    """Event-level recall per labelled kind plus flagged events outside every label.

    ``labels`` are the dicts of a labels file (kind, accounts, event indices).
    """
    flagged = _flagged_indices(findings)
    out = {}
    for det in ("wash", "shill", "shield"):
        if det not in findings:
            continue
        labelled = set()
        found_labels = 0
        kind_labels = [lb for lb in labels if _LABEL_KIND.get(lb["kind"]) == det]
        for lb in kind_labels:
            ev = set(lb["events"])
            labelled |= ev
            found_labels += ev <= flagged[det]
        hit = labelled & flagged[det]
        out[det] = {
            "labels": len(kind_labels),
            "labels_fully_found": found_labels,
            "labelled_events": len(labelled),
            "recalled_events": len(hit),
            "recall": None if not labelled else str(Decimal(len(hit)) / len(labelled)),
            "unlabelled_flagged": len(flagged[det] - labelled),
        }
    return out


# -------------------------------------------------------------------- audit

def _matrix_json(m: LinkAuditMatrix) -> dict:
    return m.to_json()


def run_audit(stream: EventStream, records: Optional[Sequence] = None, later_assets: Optional[Iterable] = None,
              escrow: Optional[str] = None, escrow_at: Optional[int] = None) -> tuple:
    """Persistence and integrity audits; returns ``(findings, summary)``."""
    findings: dict = {}
    summary: dict = {}
    assets = list(stream.assets.values())

    if records is not None:
        verdicts = classify_all(records)
        matrix = build_link_matrix(assets, verdicts)
        findings["accessibility"] = [{"url": u, "state": s} for u, s in verdicts.items()]
        summary["link_matrix"] = _matrix_json(matrix)
        states: dict = {}
        for s in verdicts.values():
            states[s] = states.get(s, 0) + 1
        summary["accessibility"] = dict(sorted(states.items()))

    rows = verification_aggregates(stream)
    findings["verification"] = [
        {"entity": r.entity, "status": r.status, "count": r.count, "total_sales_usd": _dec(r.total_sales_usd),
         "average_sales_usd": _dec(r.average_sales_usd), "taken_down": r.taken_down} for r in rows
    ]
    src = source_availability_stats(assets)
    summary["source_availability"] = {
        "open_alive": src.open_alive, "open_down": src.open_down, "closed_alive": src.closed_alive,
        "closed_down": src.closed_down, "unknown": src.unknown,
        "percent": {k: _dec(v) for k, v in src.percentages().items()},
    }

    if later_assets is not None:
        later = list(later_assets)
        before = {a.id: a.metadata_url for a in assets}
        after = {a.id: a.metadata_url for a in later}
        diff = diff_metadata_urls({str(k): v for k, v in before.items()}, {str(k): v for k, v in after.items()})
        gone = sorted(taken_down(assets, later))
        findings["taken_down"] = [str(a) for a in gone]
        summary["metadata_diff"] = {"changed": diff.changed, "unchanged": diff.unchanged, "missing": diff.missing}
        summary["taken_down"] = len(gone)

    if escrow is not None:
        transfers = stream.of_type(Transfer)
        at = escrow_at if escrow_at is not None else max((t.time for t in transfers), default=0)
        findings["escrow_series"] = [[t, c] for t, c in escrow_series(transfers, escrow)]
        summary["escrow"] = {"account": escrow, "at_time": at, "held": count_escrowed(transfers, escrow, at)}

    royalty = count_royalty_increases(stream)
    findings["royalty_increases"] = {c: [[str(a), n] for a, n in rows] for c, rows in royalty.items()}
    summary["royalty_increases"] = sum(n for rows in royalty.values() for _, n in rows)

    failed = detect_failed_highest_bid(stream)
    findings["failed_highest_bid"] = [
        {"auction_id": f.auction_id, "highest_bidder": f.highest_bidder, "winner": f.winner,
         "highest_amount": _dec(f.highest_amount), "win_amount": _dec(f.win_amount)} for f in failed
    ]
    summary["failed_highest_bid"] = len(failed)
    return findings, summary


# ------------------------------------------------------------ human output

def render_summary(report: RunReport) -> str:
    """A few lines per section for the terminal."""
    def flat(body: dict) -> str:
        return ", ".join(f"{k}={v}" for k, v in sorted(body.items()) if not isinstance(v, (dict, list)))

    lines = [f"nftforensics {report.tool_version} {report.command}"]
    for section, body in sorted(report.summary.items()):
        if not isinstance(body, dict):
            lines.append(f"  {section}: {body}")
            continue
        scalars = flat(body)
        lines.append(f"  {section}: {scalars}" if scalars else f"  {section}:")
        for key, sub in sorted(body.items()):
            if isinstance(sub, dict) and sub and all(not isinstance(v, (dict, list)) for v in sub.values()):
                lines.append(f"    {key}: {flat(sub)}")
    return "\n".join(lines)
