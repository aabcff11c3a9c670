"""Simulator for anycast-addressed VM migration and replication across
federated data centers, with overlay-flooded forwarding-table updates."""

from .errors import (ConfigError, ModeConflict, OverlayError, ParseError,
                     ScenarioError)
from .overlay import (Overlay, OverlayMetrics, add_wraparound, all_pairs_delay,
                      build_overlay, build_tree, connect_leaves,
                      flood_duplicate_count, flood_schedule, format_overlay,
                      leaf_set, load_overlay, overlay_metrics, parse_overlay,
                      save_overlay)
from .protocol import (ForwardingTable, Notification, NotificationKind,
                       PacketTrace, VmMode, VmRecord, apply_notification,
                       format_notification_line, format_trace_line, lookup,
                       make_notification, notification_origin, route_reply,
                       route_user_packet)
from .simulator import (EventKind, PacketRecord, ScenarioEvent, SessionState,
                        SimReport, Simulation, format_scenario, load_scenario,
                        parse_scenario, run_scenario)
from .topology import (AddressPlan, AnycastAddress, DcrId, Point, Topology,
                       UnicastAddress, allocate_anycast, allocate_unicast,
                       distance, format_topology, generate_random_topology,
                       load_topology, nearest_dcr, parse_topology,
                       save_topology)

__version__ = "0.1.0"

__all__ = [
    "AddressPlan", "AnycastAddress", "ConfigError", "DcrId", "EventKind",
    "ForwardingTable", "ModeConflict", "Notification", "NotificationKind",
    "Overlay", "OverlayError", "OverlayMetrics", "PacketRecord", "PacketTrace",
    "ParseError", "Point", "ScenarioError", "ScenarioEvent", "SessionState",
    "SimReport", "Simulation", "Topology", "UnicastAddress", "VmMode",
    "VmRecord", "add_wraparound", "all_pairs_delay", "allocate_anycast",
    "allocate_unicast", "apply_notification",
    "build_overlay", "build_tree", "connect_leaves", "distance",
    "flood_duplicate_count", "flood_schedule", "format_notification_line",
    "format_overlay", "format_scenario", "format_topology", "format_trace_line",
    "generate_random_topology", "leaf_set", "load_overlay", "load_scenario",
    "load_topology", "lookup", "make_notification", "nearest_dcr",
    "notification_origin", "overlay_metrics", "parse_overlay", "parse_scenario",
    "parse_topology", "route_reply", "route_user_packet", "run_scenario",
    "save_overlay", "save_topology",
]
