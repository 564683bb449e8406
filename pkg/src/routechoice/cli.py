"""Command-line front end: ``routechoice <command> ...``.

Exit codes: 0 on success, 1 when input data or configuration is rejected,
2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .clustering import ClusteringConfig, fit_route_clusters, properties_csv, route_name
from .dataset import airac_cycle, flights_in_airacs, load_cask, load_flights
from .errors import ConfigurationError, RouteChoiceError
from .features import compute_metrics
from .fileio import build_manifest, dumps_canonical, write_outputs
from .geo import load_zones, route_charges, weight_factor, zone_distance_profile
from .pipeline import (
    load_bundle,
    load_config,
    test,
    train_pipeline,
    training_csv,
    validate,
    validation_flights,
)
from .segmentation import fit_segmentation
from .synth import scenario, synth_generate

log = logging.getLogger("routechoice")

MANIFEST = "run_manifest.json"


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


def _emit(args, out_dir: Path, files: dict, inputs: dict, seeds: dict, t0: float) -> None:
    """Write outputs plus a manifest in one staged batch."""
    paths = {out_dir / name: text for name, text in files.items()}
    manifest = build_manifest(args.command, sys.argv[1:] if args.argv is None else args.argv,
                              inputs, seeds, list(paths), {"total": round(time.perf_counter() - t0, 3)})
    paths[out_dir / MANIFEST] = dumps_canonical(manifest)
    write_outputs(paths)
    log.info("wrote %d files to %s", len(paths), out_dir)


def cmd_synth(args) -> None:
    t0 = time.perf_counter()
    spec = _read_json(args.spec) if args.spec else scenario(args.scenario)
    result = synth_generate(spec, args.seed)
    _emit(args, Path(args.out), result.files(), {"spec": args.spec}, {"seed": args.seed}, t0)


def charges_csv(flights, zones, airac: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["flight_id", "weight_factor", *zones.ids, "total_eur"])
    for f in flights:
        wf = weight_factor(f.aircraft_mtow)
        br = route_charges(zone_distance_profile(f.trajectory, zones), zones, wf, airac)
        w.writerow([f.flight_id, f"{wf:.6f}", *(f"{br.per_zone.get(z, 0.0):.4f}" for z in zones.ids),
                    f"{br.total:.4f}"])
    return buf.getvalue()


def cmd_charges(args) -> None:
    t0 = time.perf_counter()
    airac_cycle(args.airac)  # validates the identifier
    text = charges_csv(load_flights(args.flights), load_zones(args.zones), args.airac)
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    _emit(args, out.parent, {out.name: text}, {"flights": args.flights, "zones": args.zones}, {}, t0)


def cmd_cluster(args) -> None:
    t0 = time.perf_counter()
    flights = load_flights(args.flights)
    if args.airacs:
        flights = flights_in_airacs(flights, args.airacs)
    zones = load_zones(args.zones)
    config = ClusteringConfig.from_dict(_read_json(args.config) if args.config else None)
    model = fit_route_clusters(compute_metrics(flights, zones), config)
    if model.warning:
        log.warning("clustering criteria not met; best attempt kept")
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["flight_id", "route"])
    for f, label in zip(flights, model.labels):
        w.writerow([f.flight_id, route_name(int(label))])
    files = {
        "clusters.json": dumps_canonical(model.to_dict()),
        "route_properties.csv": properties_csv(model.properties),
        "flight_routes.csv": rows.getvalue(),
    }
    _emit(args, Path(args.out), files,
          {"flights": args.flights, "zones": args.zones, "config": args.config}, {}, t0)


def cmd_segment(args) -> None:
    t0 = time.perf_counter()
    flights = load_flights(args.flights)
    if args.airacs:
        flights = flights_in_airacs(flights, args.airacs)
    model = fit_segmentation(flights, load_cask(args.cask), args.seed)
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(["flight_id", "segment"])
    for f, s in zip(flights, model.assign_many(flights)):
        w.writerow([f.flight_id, int(s)])
    files = {"segmentation.json": dumps_canonical(model.to_dict()), "flight_segments.csv": rows.getvalue()}
    _emit(args, Path(args.out), files, {"flights": args.flights, "cask": args.cask},
          {"seed": args.seed}, t0)


def cmd_train(args) -> None:
    t0 = time.perf_counter()
    config = load_config(args.config)
    bundle = train_pipeline(config, load_flights(args.flights), load_zones(args.zones),
                            load_cask(args.cask), threads=args.threads)
    if bundle.clusters.warning:
        log.warning("clustering criteria not met; best attempt kept")
    files = {
        "bundle.json": dumps_canonical(bundle.to_dict()),
        "training.csv": training_csv(bundle),
        "route_properties.csv": properties_csv(bundle.clusters.properties),
    }
    _emit(args, Path(args.out), files,
          {"flights": args.flights, "zones": args.zones, "cask": args.cask, "config": args.config},
          {"seed": config.seed}, t0)


def _report_files(report) -> dict:
    return {"report.csv": report.to_csv(), "summary.json": dumps_canonical(report.summary())}


def cmd_validate(args) -> None:
    t0 = time.perf_counter()
    bundle = load_bundle(args.bundle)
    flights = validation_flights(bundle, load_flights(args.flights))
    report = validate(bundle, flights, load_zones(args.zones))
    _emit(args, Path(args.out), _report_files(report),
          {"bundle": args.bundle, "flights": args.flights, "zones": args.zones},
          {"seed": bundle.config.seed}, t0)


def cmd_test(args) -> None:
    t0 = time.perf_counter()
    bundle = load_bundle(args.bundle)
    config = load_config(args.config) if args.config else bundle.config
    report = test(bundle, load_flights(args.flights), load_zones(args.zones), config)
    _emit(args, Path(args.out), _report_files(report),
          {"bundle": args.bundle, "flights": args.flights, "zones": args.zones, "config": args.config},
          {"seed": config.seed}, t0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="routechoice", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scenario JSON")
    src.add_argument("--scenario", help="built-in scenario name")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("charges", help="per-flight en-route charges")
    s.add_argument("--flights", required=True)
    s.add_argument("--zones", required=True)
    s.add_argument("--airac", required=True, help="cycle whose unit rates apply, e.g. 1601")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_charges)

    s = sub.add_parser("cluster", help="cluster trajectories into routes")
    s.add_argument("--flights", required=True)
    s.add_argument("--zones", required=True)
    s.add_argument("--config", help="clustering config JSON")
    s.add_argument("--airacs", nargs="+", help="restrict to these cycles")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("segment", help="fit airline x arrival-time segments")
    s.add_argument("--flights", required=True)
    s.add_argument("--cask", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--airacs", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("train", help="fit the full model bundle")
    s.add_argument("--flights", required=True)
    s.add_argument("--zones", required=True)
    s.add_argument("--cask", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_train)

    for name, func, text in (("validate", cmd_validate, "score the held-out validation flights"),
                             ("test", cmd_test, "re-cluster and score the testing cycles")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--bundle", required=True)
        s.add_argument("--flights", required=True)
        s.add_argument("--zones", required=True)
        if name == "test":
            s.add_argument("--config", help="override the bundle's experiment config")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except RouteChoiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
