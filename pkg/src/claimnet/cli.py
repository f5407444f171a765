"""Command-line entry point.

Exit status: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .graph import GraphError
from .ingest import FormatConfig, IngestError
from .pipeline import ANALYSES, ConfigError, RunConfig, StageError, describe_inputs, run_pipeline
from .synth import ScenarioConfig, ScenarioError, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("claimnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_yaml(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return data


def _apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = yaml.safe_load(value)
    return data


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("inputs", nargs="*", help="claims files (delimiter-separated, header row)")
    p.add_argument("-c", "--config", help="YAML/JSON run configuration")
    p.add_argument("-o", "--output-dir", help="bundle directory (replaced if present)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set referral.top_k=20")
    p.add_argument("--delimiter", help="field delimiter (default ',')")
    p.add_argument("--threads", type=int, help="cap on worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="claimnet", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("describe", help="summary statistics of claims files")
    d.add_argument("inputs", nargs="+")
    d.add_argument("--delimiter", default=",")
    d.add_argument("--threads", type=int, default=1)

    for name in ANALYSES:
        _common(sub.add_parser(name, help=f"run the {name} analysis only"))
    _common(sub.add_parser("pipeline", help="run the analyses selected in the config (default: all)"))

    s = sub.add_parser("synth", help="generate a synthetic scenario (claims.csv + manifest.json)")
    s.add_argument("-c", "--config", help="YAML/JSON scenario configuration")
    s.add_argument("-o", "--output-dir", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _run_config(args, only: str | None) -> RunConfig:
    data = _load_yaml(args.config)
    if args.inputs:
        data["inputs"] = list(args.inputs)
    if args.output_dir:
        data["output_dir"] = args.output_dir
    if args.delimiter:
        data.setdefault("format", {})["delimiter"] = args.delimiter
    if args.threads is not None:
        data["threads"] = args.threads
    if only is not None:
        data["analyses"] = [only]
    _apply_overrides(data, args.overrides)
    return RunConfig.from_dict(data)


def _dispatch(args) -> int:
    if args.command == "describe":
        summary = describe_inputs(args.inputs, FormatConfig(delimiter=args.delimiter), args.threads)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "synth":
        data = _apply_overrides(_load_yaml(args.config), args.overrides)
        if args.seed is not None:
            data["seed"] = args.seed
        result = generate(ScenarioConfig.from_dict(data))
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.write(out / "claims.csv", out / "manifest.json")
        print(f"wrote {len(result.records)} claims to {out / 'claims.csv'}")
        return EXIT_OK
    only = None if args.command == "pipeline" else args.command
    result = run_pipeline(_run_config(args, only))
    print(f"bundle written to {result.output_dir}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"claimnet: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        data_error = isinstance(exc.cause, (IngestError, GraphError, ValueError))
        print(f"claimnet: {exc}", file=sys.stderr)
        return EXIT_DATA if data_error else EXIT_INTERNAL
    except (IngestError, GraphError) as exc:
        print(f"claimnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"claimnet: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
