"""Command-line front end.

Subcommands: gen, contacts, graph, communities, simulate, report. Every
command writes its outputs plus a ``manifest.json`` into ``--out``. Exit
codes: 0 success, 1 data or runtime error, 2 usage or parameter error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .contacts import extract_contacts, format_contacts
from .errors import DataError, ParameterError, VesselNetError
from .geo import Fleet, format_labels, format_stations, format_tracks, read_fleet
from .model import SocialModel
from .routing import PROTOCOLS
from .scenario import place_stations_and_sources
from .sim import Metrics, SimConfig, run, sweep_fleet_size
from .synth import SyntheticFleetParams, generate_fleet


class UsageError(VesselNetError):
    pass


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_atomic(path: Path, data: str | bytes) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


class Outputs:
    """Collects written files so the manifest can list their digests."""

    def __init__(self, out_dir: str, command: str):
        self.dir = Path(out_dir)
        self.command = command
        self.files: dict[str, str] = {}
        self.inputs: dict[str, str] = {}

    def input(self, path) -> bytes:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"input file not found: {p}")
        data = p.read_bytes()
        self.inputs[str(p)] = _digest(data)
        return data

    def write(self, name: str, data: str) -> None:
        write_atomic(self.dir / name, data)
        self.files[name] = _digest(data.encode("utf-8"))

    def manifest(self, config: dict, seed) -> None:
        doc = {
            "command": self.command,
            "config_sha256": _digest(json.dumps(config, sort_keys=True).encode("utf-8")),
            "seed": seed,
            "versions": {
                "vesselnet": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            "inputs": self.inputs,
            "outputs": self.files,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        write_atomic(self.dir / "manifest.json", _dump_json(doc))


# -- config -------------------------------------------------------------------

def load_config(path, outputs: Outputs | None = None) -> dict:
    if path is None:
        return {}
    raw = outputs.input(path) if outputs else Path(path).read_bytes()
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ParameterError(f"config {path}: expected a JSON object")
    return cfg


def _sim_config(cfg: dict, args) -> SimConfig:
    d = dict(cfg)
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "protocol", None) is not None:
        d["protocol"] = args.protocol
    return SimConfig.from_dict(d)


def _fleet(args, out: Outputs, sim: SimConfig | None = None, need_stations=False) -> Fleet:
    out.input(args.tracks)
    if args.stations is not None:
        out.input(args.stations)
    fleet = read_fleet(args.tracks, args.stations)
    if sim is not None and sim.stations:
        if fleet.stations:
            raise ParameterError("stations given both in the config and with --stations")
        fleet = fleet.with_stations(sim.stations)
    if need_stations and not fleet.stations:
        raise UsageError("no stations: pass --stations or list them in the config")
    return fleet


def _require_vessels(fleet: Fleet):
    if not fleet.vessels:
        raise DataError("trajectory file holds no vessels")


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or any(n < 0 for n in sizes):
        raise argparse.ArgumentTypeError("sizes must be non-negative integers")
    return sizes


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> None:
    out = Outputs(args.out, "gen")
    cfg = load_config(args.config, out)
    fleet_cfg = dict(cfg.get("fleet", cfg))
    if args.seed is not None:
        fleet_cfg["seed"] = args.seed
    params = SyntheticFleetParams.from_dict(fleet_cfg)
    synth = generate_fleet(params)
    out.write("tracks.csv", format_tracks(synth.vessels))
    out.write("labels.csv", format_labels(synth.labels))
    if args.scenario:
        stations, sources = place_stations_and_sources(synth)
        sim = SimConfig(sources=sources, seed=params.seed)
        out.write("stations.csv", format_stations(stations))
        doc = sim.to_dict()
        doc.pop("stations")
        out.write("scenario.json", _dump_json(doc))
    out.manifest({"fleet": fleet_cfg, "scenario": args.scenario}, params.seed)


def cmd_contacts(args) -> None:
    out = Outputs(args.out, "contacts")
    cfg = load_config(args.config, out)
    sim = _sim_config(cfg, args)
    fleet = _fleet(args, out, sim)
    events = extract_contacts(fleet, sim.range_km, sim.tick, _window(sim, fleet), sim.max_gap)
    out.write("contacts.csv", format_contacts(events))
    out.manifest(sim.to_dict(), sim.seed)


def _window(sim: SimConfig, fleet: Fleet):
    if sim.train_span:
        return tuple(sim.train_span)
    span = fleet.time_span()
    if span is None:
        raise DataError("trajectory file holds no vessels")
    return span[0], span[1] + 1


def _social_model(args, out: Outputs):
    cfg = load_config(args.config, out)
    sim = _sim_config(cfg, args)
    fleet = _fleet(args, out, sim)
    _require_vessels(fleet)
    model = SocialModel.from_params(
        sim.social, range_km=sim.range_km, tick=sim.tick, max_gap=sim.max_gap, seed=sim.seed
    ).fit(fleet, window=_window(sim, fleet))
    return sim, model


def cmd_graph(args) -> None:
    out = Outputs(args.out, "graph")
    sim, model = _social_model(args, out)
    out.write("graph.csv", model.graph_.to_csv())
    out.manifest(sim.to_dict(), sim.seed)


def cmd_communities(args) -> None:
    out = Outputs(args.out, "communities")
    sim, model = _social_model(args, out)
    cm = model.community_map_
    out.write("communities.csv", cm.assignment_csv())
    out.write("closeness.csv", cm.closeness_matrix_csv())
    out.manifest(sim.to_dict(), sim.seed)


def cost_cdf_csv(metrics: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("protocol", "copies", "cum_fraction"))
    for m in metrics:
        copies = m["copies_per_delivered"]
        n = len(copies)
        if not n:
            continue
        values, counts = np.unique(np.asarray(copies), return_counts=True)
        for v, c in zip(values, np.cumsum(counts)):
            w.writerow((m["protocol"], int(v), repr(float(c) / n)))
    return buf.getvalue()


def delivery_by_size_csv(metrics: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("protocol", "n_vessels", "delivery_ratio"))
    for m in metrics:
        w.writerow((m["protocol"], m["n_vessels"], repr(m["delivery_ratio"])))
    return buf.getvalue()


def _full_fleet(runs: list[dict]) -> list[dict]:
    """The largest-fleet run of each protocol."""
    best = {}
    for m in runs:
        if m["protocol"] not in best or m["n_vessels"] > best[m["protocol"]]["n_vessels"]:
            best[m["protocol"]] = m
    return [best[p] for p in sorted(best)]


def cmd_simulate(args) -> None:
    out = Outputs(args.out, "simulate")
    cfg = load_config(args.config, out)
    sim = _sim_config(cfg, args)
    fleet = _fleet(args, out, sim, need_stations=True)
    if not sim.sources:
        raise ParameterError("config lists no source areas")
    sim = replace(sim, stations=())
    if args.sizes:
        results: list[Metrics] = list(sweep_fleet_size(fleet, sim, args.sizes).values())
    else:
        results = [run(fleet, sim)]
    runs = [m.to_json() for m in results]
    doc = {"protocol": sim.protocol, "seed": sim.seed, "runs": runs}
    out.write("metrics.json", _dump_json(doc))
    out.write("cost_cdf.csv", cost_cdf_csv(_full_fleet(runs)))
    out.write("delivery_by_size.csv", delivery_by_size_csv(runs))
    manifest_cfg = sim.to_dict()
    manifest_cfg["sizes"] = args.sizes
    out.manifest(manifest_cfg, sim.seed)


def cmd_report(args) -> None:
    out = Outputs(args.out, "report")
    runs, seeds = [], set()
    for d in args.runs:
        path = Path(d) / "metrics.json" if Path(d).is_dir() else Path(d)
        try:
            doc = json.loads(out.input(path))
            runs.extend(doc["runs"])
            seeds.add(doc["seed"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: not a metrics document ({exc})") from None
    runs.sort(key=lambda m: (m["protocol"], m["n_vessels"]))
    summary = []
    for m in _full_fleet(runs):
        summary.append({
            "protocol": m["protocol"],
            "n_vessels": m["n_vessels"],
            "generated": m["generated"],
            "delivered": m["delivered"],
            "delivery_ratio": m["delivery_ratio"],
            "cost_quantiles": m["cost_quantiles"],
            "delay_quantiles": m["delay_quantiles"],
        })
    out.write("summary.json", _dump_json(summary))
    out.write("cost_cdf.csv", cost_cdf_csv(_full_fleet(runs)))
    out.write("delivery_by_size.csv", delivery_by_size_csv(runs))
    seed = seeds.pop() if len(seeds) == 1 else sorted(seeds)
    out.manifest({"runs": [str(r) for r in args.runs]}, seed)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vesselnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tracks=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", required=True, help="output directory")
        if tracks:
            p.add_argument("--tracks", required=True, help="trajectory CSV (vessel_id,ts,lat,lon)")
            p.add_argument("--stations", help="station CSV (station_id,lat,lon)")

    p = sub.add_parser("gen", help="generate a synthetic fleet")
    common(p, tracks=False)
    p.add_argument("--scenario", action="store_true", help="also write stations.csv and scenario.json")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("contacts", help="extract contact events")
    common(p)
    p.set_defaults(func=cmd_contacts)

    p = sub.add_parser("graph", help="build the familiarity graph")
    common(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("communities", help="detect and track communities")
    common(p)
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("simulate", help="run a routing simulation")
    common(p)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--sizes", type=_parse_sizes, help="comma-separated fleet sizes to sweep")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge simulate outputs into report tables")
    p.add_argument("runs", nargs="+", help="simulate output directories or metrics.json files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"vesselnet {args.command}: {exc}", file=sys.stderr)
        return 2
    except (VesselNetError, ValueError, OSError) as exc:
        print(f"vesselnet {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
