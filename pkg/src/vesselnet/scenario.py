"""The synthetic benchmark scenario: planted fleet, ports and data sources."""
from __future__ import annotations

from dataclasses import replace

from .geo import Station, haversine_km
from .sim import SimConfig, SourceArea
from .synth import SyntheticFleet, SyntheticFleetParams, generate_fleet

BENCHMARK_FLEET = SyntheticFleetParams(n_vessels=600, n_groups=12, p_mix=0.05, duration=14 * 86400)


def place_stations_and_sources(synth: SyntheticFleet, n_stations=3, radius_km=20.0, period=600):
    """Ports at the home anchorages of evenly spread groups; one data source
    on the farthest fishing ground of each port's group, addressed to that port."""
    n_groups = len(synth.homes)
    n_stations = min(n_stations, n_groups)
    picks = [round(i * (n_groups - 1) / max(n_stations - 1, 1)) for i in range(n_stations)]
    stations, sources = [], []
    for k, g in enumerate(picks):
        sid = f"PORT{k}"
        stations.append(Station(sid, synth.homes[g]))
        far = max(synth.grounds[g], key=lambda p: haversine_km(p, synth.homes[g]))
        sources.append(SourceArea(f"SRC{k}", far, radius_km, period, sid))
    return tuple(stations), tuple(sources)


def benchmark(seed: int = 0, fleet_params: SyntheticFleetParams = BENCHMARK_FLEET, **config) -> tuple[SyntheticFleet, SimConfig]:
    synth = generate_fleet(replace(fleet_params, seed=seed))
    stations, sources = place_stations_and_sources(synth)
    cfg = SimConfig(stations=stations, sources=sources, seed=seed, **config)
    return synth, cfg.validate()
