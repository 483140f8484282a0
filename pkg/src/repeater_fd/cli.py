"""Command-line front end: campaign runs, self-verification, config handling.

Subcommands
-----------
``run``          execute a Monte Carlo campaign and emit results.csv,
                 summary.json, per-metric CDF files, and CDF figures.
``verify``       run the built-in oracle suites and report pass/fail.
``dump-config``  print the fully resolved configuration.

A configuration file is YAML with the same field names as
:class:`~repeater_fd.scenario.ScenarioConfig`; every field is also
addressable from the command line as a repeatable ``--set key=value`` with
dotted paths into nested blocks (``--set pathloss.bs_ue.exponent=3.2``).
Unknown keys and type mismatches are rejected.  The ``REPEATER_FD_LOG``
environment variable sets the log level.

Exit codes: 0 on success, 1 on configuration errors, 2 when verification
fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import yaml

from .harness import (
    DEFAULT_ARCHS,
    ArchitectureSpec,
    run_campaign,
    summary_dict,
    write_cdf_files,
    write_results_csv,
    write_summary_json,
)
from .scenario import LINK_CLASSES, PathLossParams, ScenarioConfig
from .verification import run_all_checks

LOG = logging.getLogger("repeater_fd")

ARCH_CHOICES = {
    "RA_FD_OPT": ArchitectureSpec("RA_FD_OPT"),
    "RA_FD_RANDOM": ArchitectureSpec("RA_FD_RANDOM"),
    "RA_HD": ArchitectureSpec("RA_HD"),
    "RA_HD_OPTIMIZED": ArchitectureSpec("RA_HD", "optimized"),
    "FD_MMIMO": ArchitectureSpec("FD_MMIMO"),
}


class ConfigError(ValueError):
    """Bad configuration file, unknown key, or type mismatch."""


# ---------------------------------------------------------------------------
# Config serialization and overrides
# ---------------------------------------------------------------------------

def config_to_dict(config: ScenarioConfig) -> dict:
    """Plain-type mapping that round-trips through YAML."""
    data = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name == "pathloss":
            value = {
                name: {
                    "ref_gain_db": params.ref_gain_db,
                    "ref_distance": params.ref_distance,
                    "exponent": params.exponent,
                }
                for name, params in value.items()
            }
        data[f.name] = value
    return data


def config_from_dict(data: dict) -> ScenarioConfig:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    kwargs = dict(data)
    if "pathloss" in kwargs:
        block = kwargs["pathloss"]
        if not isinstance(block, dict):
            raise ConfigError("pathloss must be a mapping of link classes")
        classes = {}
        for name, params in block.items():
            if name not in LINK_CLASSES:
                raise ConfigError(f"unknown pathloss class: {name!r}")
            if not isinstance(params, dict):
                raise ConfigError(f"pathloss.{name} must be a mapping")
            extra = sorted(set(params) - {"ref_gain_db", "ref_distance", "exponent"})
            if extra:
                raise ConfigError(f"unknown pathloss.{name} keys: {', '.join(extra)}")
            classes[name] = PathLossParams(**{k: float(v) for k, v in params.items()})
        kwargs["pathloss"] = classes
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(key: str, old, new):
    """Type-check an override against the value it replaces."""
    if key == "dl_power_coeffs":
        if new is None:
            return None
        if isinstance(new, (list, tuple)) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in new
        ):
            return [float(v) for v in new]
        raise ConfigError("dl_power_coeffs must be a list of numbers or null")
    if isinstance(old, bool) or isinstance(new, bool):
        raise ConfigError(f"{key}: boolean not valid here")
    if isinstance(old, int):
        if not isinstance(new, int):
            raise ConfigError(f"{key}: expected an integer, got {new!r}")
        return new
    if isinstance(old, float):
        if not isinstance(new, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {new!r}")
        return float(new)
    if isinstance(old, str):
        if not isinstance(new, str):
            raise ConfigError(f"{key}: expected a string, got {new!r}")
        return new
    raise ConfigError(f"{key}: cannot be overridden from the command line")


def apply_override(data: dict, assignment: str) -> None:
    """Apply one dotted ``key=value`` to the config mapping in place."""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value: {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    path = dotted.strip().split(".")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{dotted}: unparseable value {raw!r}: {exc}") from exc

    node = data
    for part in path[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown configuration key: {dotted}")
        node = node[part]
    leaf = path[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown configuration key: {dotted}")
    node[leaf] = _coerce(dotted, node[leaf], value)


def resolve_config(config_path, overrides, seed=None) -> ScenarioConfig:
    """Defaults, then the YAML file, then dotted overrides, then --seed."""
    data = config_to_dict(ScenarioConfig())
    if config_path is not None:
        try:
            with open(config_path) as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config file: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a mapping")
        unknown = sorted(set(loaded) - set(data))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        for key, value in loaded.items():
            if key == "pathloss":
                if not isinstance(value, dict):
                    raise ConfigError("pathloss must be a mapping of link classes")
                for cls, params in value.items():
                    if cls not in data["pathloss"]:
                        raise ConfigError(f"unknown pathloss class: {cls!r}")
                    if not isinstance(params, dict):
                        raise ConfigError(f"pathloss.{cls} must be a mapping")
                    for pkey, pval in params.items():
                        if pkey not in data["pathloss"][cls]:
                            raise ConfigError(f"unknown key pathloss.{cls}.{pkey}")
                        data["pathloss"][cls][pkey] = _coerce(
                            f"pathloss.{cls}.{pkey}", data["pathloss"][cls][pkey], pval
                        )
            else:
                data[key] = _coerce(key, data[key], value)
    for assignment in overrides or ():
        apply_override(data, assignment)
    if seed is not None:
        data["rng_seed"] = int(seed)
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    config = resolve_config(args.config, args.set, seed=args.seed)
    if args.arch:
        archs = tuple(ARCH_CHOICES[name] for name in args.arch)
    else:
        archs = DEFAULT_ARCHS
    LOG.info(
        "campaign: %d drops, seed %d, %d architecture(s), %d worker(s)",
        args.drops, config.rng_seed, len(archs), args.jobs,
    )
    result = run_campaign(
        config, archs, num_drops=args.drops, parallelism=args.jobs
    )
    os.makedirs(args.out, exist_ok=True)
    write_results_csv(result, os.path.join(args.out, "results.csv"))
    write_summary_json(result, os.path.join(args.out, "summary.json"))
    written = write_cdf_files(result, args.out)
    LOG.info("wrote results.csv, summary.json, %d CDF files", len(written))
    if not args.no_figures:
        from .plots import render_cdf_figures

        figures = render_cdf_figures(result, args.out)
        LOG.info("wrote %d figure(s)", len(figures))
    summary = summary_dict(result)
    for label in result.arch_labels:
        entry = summary["archs"][label]
        LOG.info(
            "%-14s dl_se median %.3f  ul_se median %.3f  objective mean %.3f",
            label, entry["dl_se_median"], entry["ul_se_median"], entry["objective_mean"],
        )
    print(f"campaign complete: {args.drops} drops -> {args.out}")
    return 0


def cmd_verify(args) -> int:
    failures = 0
    for check in run_all_checks():
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.detail} ({check.seconds:.1f} s)")
        failures += 0 if check.passed else 1
    if failures:
        print(f"{failures} verification suite(s) failed")
        return 2
    print("all verification suites passed")
    return 0


def cmd_dump_config(args) -> int:
    config = resolve_config(args.config, args.set, seed=args.seed)
    yaml.safe_dump(config_to_dict(config), sys.stdout, sort_keys=False)
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repeater-fd",
        description="Simulator and amplification-weight optimizer for "
        "repeater-assisted full-duplex massive MIMO.",
        epilog="Environment: REPEATER_FD_LOG sets the log level "
        "(DEBUG, INFO, WARNING, ERROR).",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="YAML configuration file")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override one configuration field (repeatable, dotted paths)",
    )
    common.add_argument("--seed", type=int, help="override the configured RNG seed")
    common.add_argument(
        "-v", "--verbose", action="store_true", help="log progress at INFO level"
    )

    sub = parser.add_subparsers(dest="subcommand", required=True)

    run_p = sub.add_parser("run", parents=[common], help="run a Monte Carlo campaign")
    run_p.add_argument("--drops", type=int, default=200, help="number of drops (default 200)")
    run_p.add_argument(
        "--arch",
        action="append",
        choices=sorted(ARCH_CHOICES),
        help="architecture to include (repeatable; default: all)",
    )
    run_p.add_argument("--out", default="out", help="output directory (default ./out)")
    run_p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    run_p.add_argument(
        "--no-figures", action="store_true", help="skip rendering CDF figures"
    )
    run_p.set_defaults(func=cmd_run)

    verify_p = sub.add_parser(
        "verify", parents=[common], help="run the built-in oracle suites"
    )
    verify_p.set_defaults(func=cmd_verify)

    dump_p = sub.add_parser(
        "dump-config", parents=[common], help="print the resolved configuration"
    )
    dump_p.set_defaults(func=cmd_dump_config)
    return parser


def _setup_logging(verbose: bool) -> None:
    level_name = os.environ.get("REPEATER_FD_LOG", "").upper()
    level = getattr(logging, level_name, None) if level_name else None
    if level is None:
        level = logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(getattr(args, "verbose", False))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
