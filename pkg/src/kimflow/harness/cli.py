"""``kimflow`` command line.

    kimflow <subcommand> (--config PATH | --preset NAME) [--seed N] [--out DIR]
    kimflow --list-presets

Exit status: 0 when the checked inequality holds, 2 on a violation, 1 on
any error (bad config, refused experiment, numerical failure).
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from ..errors import KimflowError, RefusedExperiment
from .config import EXPERIMENTS, load_config, loads_config
from .experiments import run
from .reports import document, write_outputs

EXIT_PASS, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

log = logging.getLogger("kimflow")


def preset_names() -> list[str]:
    root = resources.files("kimflow.harness") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    path = resources.files("kimflow.harness") / "presets" / f"{name}.ini"
    if not path.is_file():
        raise KimflowError(f"unknown preset {name!r}; try --list-presets")
    return path.read_text()


def preset_kind(name: str) -> str | None:
    return loads_config(preset_text(name), source=f"preset:{name}").kind


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kimflow", description=__doc__.split("\n\n")[0])
    ap.add_argument("--list-presets", action="store_true", help="list built-in configurations and exit")
    sub = ap.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for kind in EXPERIMENTS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="INI or JSON experiment config")
        src.add_argument("--preset", help="name of a built-in config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default: [output] dir, else ./out)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _headline(kind: str, report) -> str:
    status = "PASS" if report.passed else "VIOLATION"
    if hasattr(report, "slack"):
        return (f"{kind}: {status} empirical={report.empirical:.6g} bound={report.bound:.6g} "
                f"slack={report.slack if isinstance(report.slack, str) else format(report.slack, '.6g')}")
    detail = ", ".join(f"{k}={v}" for k, v in report.summary.items()
                       if isinstance(v, (int, float, bool)) and not isinstance(v, dict))
    return f"{kind}: {status} {detail}"


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_presets:
        for name in preset_names():
            print(f"{name}\t{preset_kind(name)}")
        return EXIT_PASS
    if args.command is None:
        ap.print_usage(sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind = args.command
    try:
        if args.config is not None:
            cfg = load_config(args.config, kind)
        else:
            cfg = loads_config(preset_text(args.preset), kind, source=f"preset:{args.preset}")
        cfg = cfg.with_overrides(seed=args.seed)
        report = run(cfg)
        doc = document(kind, cfg.describe(), report, report.provenance)
        out_dir = args.out or cfg.out_dir or "out"
        stem = cfg.stem or cfg.name or kind
        jpath, cpath = write_outputs(out_dir, stem, doc, report.csv_header, report.csv_rows())
    except RefusedExperiment as exc:
        print(f"kimflow: refused: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (KimflowError, OSError) as exc:
        print(f"kimflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(_headline(kind, report))
    print(f"wrote {jpath} and {cpath}")
    return EXIT_PASS if report.passed else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
