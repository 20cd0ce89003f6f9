"""Neighbor-aware virtual infrastructure selection for hybrid LTE / short-range vehicular dissemination."""

from .dissem import ALL_LTE, NAVI, DeliveryLog, DisseminationRequest, Variant
from .geoserver import (CoverageSets, Geoserver, SelectionResult, StopReason, WorldView, ZoneGrid,
                        coverage_sets, dissimilarity, select_virtual_infrastructure, zone_index, zone_of)
from .radio import ConnectivityGraph, RadioConfig, connectivity_snapshot, link_exists, range_from_power
from .simcore import SimParams, Simulator, run
from .trace import (MobilityTrace, Position, Rect, generate_synthetic_trace, parse_ns2_trace, position_at,
                    to_ns2)

__version__ = "0.1.0"
