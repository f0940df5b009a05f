"""Store-carry-forward data collection over a fishing fleet.

Vessel tracks become opportunistic contacts, contacts become a familiarity
graph with tracked communities, and a tick-synchronous simulator compares
community-based routing against familiarity, flooding and random-walk
baselines.
"""
from .contacts import ContactEvent, EncounterStats, aggregate_encounters, extract_contacts
from .errors import DataError, ParameterError, ParseError, VesselNetError
from .geo import Fleet, GeoPoint, Station, VesselTrack, haversine_km, position_at
from .model import CommunityDetector, SocialModel
from .routing import PROTOCOLS, Packet
from .sim import Metrics, SimConfig, SourceArea, run, sweep_fleet_size
from .social import CommunityMap, FamiliarityGraph, SocialParams, build_community_map, build_graph, detect_communities, familiarity, modularity
from .synth import SyntheticFleetParams, generate_fleet

__version__ = "0.1.0"
