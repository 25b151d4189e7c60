"""Command line front end: ``accrisk <command> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import yaml

from . import config as config_mod
from . import pipeline
from .errors import AccRiskError, ConfigError

COMMANDS = ("integrate", "calibrate", "annotate", "featurize", "train", "evaluate", "ablate",
            "gradcheck", "synth")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="accrisk", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS + ("all",))
    p.add_argument("--config", help="pipeline config (YAML); for synth, a scenario document")
    p.add_argument("--seed", type=int, help="override the configured seed(s) with one seed")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _synth(args) -> None:
    from .synth import SynthScenario, generate, write_city

    fields = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError("--config", f"no such file {path}")
        fields = yaml.safe_load(path.read_text()) or {}
        if not isinstance(fields, dict):
            raise ConfigError("<root>", "expected a mapping")
        known = {f.name for f in dataclasses.fields(SynthScenario)}
        unknown = sorted(set(fields) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown scenario key")
    if args.seed is not None:
        fields["seed"] = args.seed
    try:
        scenario = SynthScenario(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError("scenario", str(exc)) from None
    out = Path(args.out)
    city = generate(scenario)
    write_city(city, out)
    cfg = config_mod.PipelineConfig(
        city=f"synth-{scenario.seed}", start=scenario.start, utc_offset=scenario.utc_offset,
        seeds=(scenario.seed,),
        grid=config_mod.GridConfig(scenario.anchor_lat, scenario.anchor_lng, scenario.rows,
                                   scenario.cols, scenario.cell_size),
        split=config_mod.SplitConfig(train_weeks=scenario.weeks - 2, test_weeks=2))
    (out / "config.yaml").write_text(config_mod.render(cfg))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            _synth(args)
            return 0
        if args.config:
            cfg = config_mod.load(args.config)
        elif args.command == "gradcheck":
            cfg = config_mod.PipelineConfig()
        else:
            raise ConfigError("--config", f"required for {args.command}")
        if args.seed is not None:
            cfg.seeds = (args.seed,)
        if args.command == "all":
            pipeline.run_all(cfg, args.out)
        else:
            pipeline.run(args.command, cfg, args.out)
    except AccRiskError as exc:
        print(f"accrisk {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"accrisk {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
