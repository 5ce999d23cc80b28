"""Command line: ``overtake synth | ingest | run | report``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 a classifier did not
converge (results are still written and flagged in the report).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import DataError, InvalidConfig, OvertakeError, UnknownMoment
from .features import WindowingConfig, table_from_csv, table_to_csv
from .pipeline import (
    CLASSIFIERS,
    load_models,
    parse_classifiers,
    recordings_to_windows,
    run_experiment,
    write_results,
)
from .signals import read_fleet, write_fleet
from .synth import REFERENCE_INVENTORY, FleetConfig, TruckSpec, generate_fleet
from .trigger import TriggerRule

log = logging.getLogger("overtake")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3
FEATURES_FILE = "features.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys use flag names."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def parse_trucks(spec: str) -> tuple[TruckSpec, ...]:
    trucks = []
    for item in spec.split(","):
        try:
            tid, n0, n1 = item.split(":")
            trucks.append(TruckSpec(tid.strip(), int(n0), int(n1)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad truck spec {item!r}, want id:n_class0:n_class1") from None
    return tuple(trucks)


def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_trigger_and_window(p):
    p.add_argument("--trigger-min-speed", type=float, default=TriggerRule.min_speed)
    p.add_argument("--trigger-max-dist", type=float, default=TriggerRule.max_dist_ahead)
    p.add_argument("--trigger-min-relspeed", type=float, default=TriggerRule.min_rel_speed)
    p.add_argument("--window-len", type=int, default=WindowingConfig.window_len_frames)
    p.add_argument("--hop", type=int, default=WindowingConfig.hop_frames)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="overtake", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic CAN fleet (CSV files + manifest.json)")
    _add_common(p)
    p.add_argument("--out", required=True)
    default_trucks = ",".join(f"{t}:{a}:{b}" for t, a, b in REFERENCE_INVENTORY)
    p.add_argument("--trucks", type=parse_trucks, default=default_trucks,
                   help=f"id:n_class0:n_class1,... (default {default_trucks})")
    p.add_argument("--drift", type=float, default=FleetConfig.drift_strength)
    p.add_argument("--noise", type=float, default=FleetConfig.noise_scale)

    p = sub.add_parser("ingest", help="detect triggers, crop and extract window features")
    _add_common(p)
    _add_trigger_and_window(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="split, train, evaluate and export")
    _add_common(p)
    _add_trigger_and_window(p)
    p.add_argument("--data-dir", help="fleet directory (manifest.json) or ingest output "
                                      "(features.csv); omitted: synthesise the default fleet")
    p.add_argument("--out", required=True)
    p.add_argument("--classifiers", default=",".join(CLASSIFIERS))
    p.add_argument("--split-fraction", type=float, default=0.7)
    p.add_argument("--drift", type=float, default=FleetConfig.drift_strength,
                   help="synthetic fleet drift when --data-dir is omitted")
    p.add_argument("--reuse-models", action="store_true",
                   help="load models already present under OUT/models instead of training")

    p = sub.add_parser("report", help="print the tables of a finished run")
    p.add_argument("results_dir")
    return ap


def parse_args(argv):
    ap = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in ("synth", "ingest", "run"):
        sub = ap._subparsers._group_actions[0].choices[known.command]
        values = read_config_file(known.config)
        dests = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - dests)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**values)
    return ap.parse_args(argv)


def _rule(args) -> TriggerRule:
    return TriggerRule(args.trigger_min_speed, args.trigger_max_dist, args.trigger_min_relspeed)


def _windowing(args) -> WindowingConfig:
    return WindowingConfig(args.window_len, args.hop)


def cmd_synth(args) -> int:
    trucks = args.trucks if isinstance(args.trucks, tuple) else parse_trucks(args.trucks)
    cfg = FleetConfig(trucks=trucks, seed=args.seed, drift_strength=args.drift, noise_scale=args.noise)
    fleet = generate_fleet(cfg)
    path = write_fleet(fleet.recordings, args.out)
    print(f"wrote {len(fleet.recordings)} recordings and {path}")
    return EXIT_OK


def _load_windows(args):
    data = Path(args.data_dir)
    if (data / FEATURES_FILE).exists():
        return table_from_csv((data / FEATURES_FILE).read_text())
    if (data / "manifest.json").exists():
        return recordings_to_windows(read_fleet(data), _rule(args), _windowing(args))
    raise DataError(f"{data} has neither manifest.json nor {FEATURES_FILE}")


def cmd_ingest(args) -> int:
    recs = read_fleet(args.data_dir)
    table = recordings_to_windows(recs, _rule(args), _windowing(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / FEATURES_FILE).write_text(table_to_csv(table))
    print(f"{len(recs)} recordings -> {len(table)} windows in {out / FEATURES_FILE}")
    return EXIT_OK


def cmd_run(args) -> int:
    selection = parse_classifiers(args.classifiers)
    if args.data_dir:
        if not Path(args.data_dir).is_dir():
            raise DataError(f"data dir {args.data_dir} does not exist")
        windows = _load_windows(args)
    else:
        from .synth import replicate_tableI_inventory
        fleet = generate_fleet(replicate_tableI_inventory(seed=args.seed, drift_strength=args.drift))
        windows = recordings_to_windows(fleet.recordings, _rule(args), _windowing(args))
    models = load_models(args.out, [k for k in CLASSIFIERS if k != "fusion"]) if args.reuse_models else None
    res = run_experiment(windows, seed=args.seed, selection=selection,
                         fraction=args.split_fraction, models=models)
    path = write_results(res, args.out)
    print(f"wrote {path}")
    if not res.all_converged:
        bad = [k for k, ok in res.converged.items() if not ok]
        print(f"warning: not converged: {', '.join(bad)}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


_LABELS = {"auc_pr": "AUC", "precision": "Prec", "recall": "Rec", "f1": "F1",
           "tpr": "TPR", "tnr": "TNR"}


def _fmt(v, pct=False):
    if v is None:
        return "-"
    return f"{100 * v:.2f}" if pct else f"{v:.3f}"


def render_report(doc: dict) -> str:
    moments = doc["moments"]
    rows = doc["classifiers"]
    var = doc.get("variation")
    name_w = max(9, *(len(r) for r in rows))
    lines = []

    def table(title, fields, pct, with_th=False):
        lines.append(title)
        cols = [_LABELS[f] for f in fields] + (["th"] if with_th else [])
        head = " " * name_w + " | " + " | ".join(f"{m:^{8 * len(cols)}}" for m in moments)
        sub = " " * name_w + " | " + " | ".join("".join(f"{c:>8}" for c in cols) for _ in moments)
        lines.extend([head, sub, "-" * len(sub)])
        for name, per in rows.items():
            cells = []
            for m in moments:
                vals = [_fmt(per[m][f], pct) for f in fields]
                if with_th:
                    vals.append(f"{per[m]['best_threshold']:.2f}")
                cells.append("".join(f"{v:>8}" for v in vals))
            lines.append(f"{name:<{name_w}} | " + " | ".join(cells))
        if var:
            cells = []
            for m in moments:
                vals = []
                for f in fields:
                    v = var[m][f]
                    vals.append("-" if v is None else (f"{100 * v:+.2f}" if pct else f"{v:+.3f}"))
                if with_th:
                    vals.append("")
                cells.append("".join(f"{v:>8}" for v in vals))
            lines.append(f"{'variation':<{name_w}} | " + " | ".join(cells))
        lines.append("")

    table("AUC-PR", ["auc_pr"], False)
    table("Precision / Recall / F1 (%) at the max-F1 threshold", ["precision", "recall", "f1"], True, True)
    table("TPR / TNR (%)", ["tpr", "tnr"], True)
    flagged = [k for k, ok in doc.get("converged", {}).items() if not ok]
    if flagged:
        lines.append("NOT CONVERGED: " + ", ".join(flagged))
    return "\n".join(lines)


def cmd_report(args) -> int:
    path = Path(args.results_dir) / "moment_report.json"
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"no moment_report.json in {args.results_dir}") from None
    print(render_report(doc))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "run": cmd_run, "report": cmd_report}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"overtake: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidConfig, UnknownMoment) as exc:
        print(f"overtake: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OvertakeError, OSError) as exc:
        print(f"overtake: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
