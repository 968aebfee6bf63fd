"""Forensics for NFT marketplace event data.

Relation graphs over sales, bids, payments and transfers; detectors for wash
trading, shill bidding, bid shielding, counterfeit collections and off-platform
trades; audits of off-chain link persistence.
"""
__version__ = "0.1.0"

from .config import Settings, build_settings, load_config
from .graphs import BidGraph, ComponentIndex, RelationGraphs, UserGraph, build_graphs, scc, wcc
from .integrity import (detect_offplatform_trades, find_duplicate_asset_urls, find_similar_collection_names,
                        find_similar_images, levenshtein, perceptual_hash)
from .linkaudit import AccessibilityRecord, LinkAuditMatrix, build_link_matrix, classify_accessibility
from .model import AssetId, AssetRecord, EventStream, IngestError, ingest, serialize
from .report import RunReport, run_audit, run_detect
from .trading import (ConfigError, ShieldConfig, ShillConfig, WashConfig, detect_bid_shielding,
                      detect_failed_highest_bid, detect_shill_bids, detect_wash_trades)

__all__ = [
    "AccessibilityRecord", "AssetId", "AssetRecord", "BidGraph", "ComponentIndex", "ConfigError",
    "EventStream", "IngestError", "LinkAuditMatrix", "RelationGraphs", "RunReport", "Settings",
    "ShieldConfig", "ShillConfig", "UserGraph", "WashConfig", "build_graphs", "build_link_matrix",
    "build_settings", "classify_accessibility", "detect_bid_shielding", "detect_failed_highest_bid",
    "detect_offplatform_trades", "detect_shill_bids", "detect_wash_trades", "find_duplicate_asset_urls",
    "find_similar_collection_names", "find_similar_images", "ingest", "levenshtein", "load_config",
    "perceptual_hash", "run_audit", "run_detect", "scc", "serialize", "wcc",
]
