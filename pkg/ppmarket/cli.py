"""
Command-line interface for ppmarket.

Verbs:
  run-scenario  run a DO/CO/MO scenario, write artifacts, check expectations
  verify        replay an exported ledger and run the verification suite
  bench         run a simulator sweep and write CSV
  export        run a scenario and write only the ledger and a state snapshot

Exit codes: 0 success, 1 verification or expectation mismatch, 2 configuration
error, 3 corrupt ledger export.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .actors import load_scenario, run_scenario, verify_suite, write_artifacts
from .actors.verification import attributable, flagged_cis
from .config import Config
from .exceptions import ConfigError, CorruptChain, ProtocolError
from .ledger import Ledger
from .offchain import ObjectStore
from .simnet import SweepConfig, load_sweep, models_per_second, sweep, write_csv

# Configure logging
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_CORRUPT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppmarket",
        description="Blockchain-mediated AI marketplace: scenarios, verification and benchmarks",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb, help_text in (
        ("run-scenario", "Run a scenario, write artifacts and check its expectations"),
        ("export", "Run a scenario and write the ledger export and a world-state snapshot"),
    ):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", type=str, required=True, help="Scenario JSON file")
        p.add_argument("--out", type=str, help="Output directory (default: from config or ./out)")
        p.add_argument("--seed", type=int, help="Seed override (default: PPMARKET_SEED, then the scenario seed)")

    p = sub.add_parser("verify", help="Replay an exported ledger and run every verification check")
    p.add_argument("--out", type=str, help="Artifact directory holding ledger.ndjson and objects.json")
    p.add_argument("--ledger", type=str, help="Ledger export (default: <out>/ledger.ndjson)")
    p.add_argument("--objects", type=str, help="Object store dump (default: next to the ledger)")
    p.add_argument("--quorum", type=int, default=2, help="Agreeing replicas the data claim check requires")

    p = sub.add_parser("bench", help="Run a simulator sweep and write bench.csv")
    p.add_argument("--config", type=str, help="Sweep JSON file (default: the built-in sweep)")
    p.add_argument("--out", type=str, help="Output directory (default: from config or ./out)")
    p.add_argument("--seed", type=int, help="Seed override (default: PPMARKET_SEED, then the sweep seed)")
    return parser


def cmd_run_scenario(args, cfg: Config) -> int:
    scenario = load_scenario(args.config)
    seed = cfg.resolve_seed(scenario.seed, args.seed)
    out = Path(args.out or cfg.run.out_dir)
    try:
        result = run_scenario(scenario, seed=seed, ledger_config=cfg.ledger)
    except ProtocolError as e:
        print(f"ERROR: scenario {scenario.name} did not complete: {e}")
        return EXIT_MISMATCH
    write_artifacts(result, out)

    print(f"Scenario {scenario.name} (seed {seed}): {result.ledger.height} blocks, "
          f"{len(result.tx_types)} transaction types")
    print(f"  training finished: {result.mo.finished}, quorum failure: {result.mo.failure or 'none'}")
    print(f"  flagged cloud instances: {len(result.flagged)} (expected {scenario.expect.flagged})")
    print(f"  matches centralized oracle: {result.matches_oracle}")
    for report in result.failures():
        note = "attributed" if attributable(report, result.ledger, result.flagged) else "UNEXPLAINED"
        print(f"  {report.check.value:<28} {report.subject[:12]} {note}: {report.evidence}")
    print(f"Artifacts written to {out}")

    if result.meets_expectations():
        return EXIT_OK
    print("Scenario outcome does not match its expectations")
    return EXIT_MISMATCH


def cmd_export(args, cfg: Config) -> int:
    scenario = load_scenario(args.config)
    seed = cfg.resolve_seed(scenario.seed, args.seed)
    out = Path(args.out or cfg.run.out_dir)
    try:
        result = run_scenario(scenario, seed=seed, ledger_config=cfg.ledger)
    except ProtocolError as e:
        print(f"ERROR: scenario {scenario.name} did not complete: {e}")
        return EXIT_MISMATCH
    result.ledger.export(out / "ledger.ndjson")
    (out / "state.json").write_bytes(result.ledger.state.snapshot())
    print(f"Exported {result.ledger.height} blocks and {len(result.ledger.state)} state entries to {out}")
    return EXIT_OK


def _endpoints(actors_log: Path) -> List[str]:
    if not actors_log.exists():
        return []
    endpoints = []
    for line in actors_log.read_text(encoding="utf-8").splitlines():
        if line.strip():
            entry = json.loads(line)
            if entry.get("kind") == "register":
                endpoints.append(entry["endpoint"])
    return endpoints


def cmd_verify(args, cfg: Config) -> int:
    if not args.ledger and not args.out:
        raise ConfigError("verify needs --out or --ledger")
    ledger_path = Path(args.ledger) if args.ledger else Path(args.out) / "ledger.ndjson"
    objects_path = Path(args.objects) if args.objects else ledger_path.parent / "objects.json"
    if not ledger_path.exists():
        raise ConfigError(f"ledger export {ledger_path} not found")

    ledger = Ledger.load(ledger_path, cfg.ledger)
    try:
        store = ObjectStore.load(objects_path) if objects_path.exists() else ObjectStore()
    except ValueError as e:
        raise ConfigError(f"unreadable object store {objects_path}: {e}") from e
    reports = verify_suite(ledger, store, _endpoints(ledger_path.parent / "actors.ndjson"), q=args.quorum)
    flagged = flagged_cis(ledger)

    failing = [r for r in reports if not r.passed]
    print(f"Replayed {ledger.height} blocks, world state digest {ledger.state.digest()[:16]}")
    print(f"{len(reports)} checks, {len(failing)} failing, {len(flagged)} cloud instances flagged on-chain")
    for report in failing:
        note = "attributed" if attributable(report, ledger, flagged) else "UNEXPLAINED"
        print(f"  {report.check.value:<28} {report.subject[:12]} {note}: {report.evidence}")
    return EXIT_MISMATCH if failing else EXIT_OK


def cmd_bench(args, cfg: Config) -> int:
    sweep_cfg = load_sweep(args.config) if args.config else SweepConfig()
    seed = cfg.resolve_seed(sweep_cfg.seed, args.seed)
    out = Path(args.out or cfg.run.out_dir)
    reports = sweep(sweep_cfg.cells(), seed=seed, runs=sweep_cfg.runs, sim=cfg.sim, ledger_config=cfg.ledger)
    path = write_csv(reports, out / "bench.csv")

    print(f"{'topology':<10} {'rate':>6} {'tps':>9} {'mean ms':>10} {'p95 ms':>10} {'models/s':>9}")
    for r in reports:
        print(f"{r.topology.label:<10} {r.profile.send_rate:>6g} {r.throughput:>9.1f} "
              f"{r.aggregate.lat_mean_ms:>10.1f} {r.aggregate.lat_p95_ms:>10.1f} {models_per_second(r):>9.2f}")
    print(f"{len(reports)} cells written to {path}")
    return EXIT_OK


COMMANDS = {
    "run-scenario": cmd_run_scenario,
    "export": cmd_export,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    args = build_parser().parse_args(argv)

    try:
        cfg = Config()
    except ValueError as e:
        print(f"ERROR: invalid environment configuration: {e}")
        return EXIT_CONFIG
    logging.basicConfig(
        level=getattr(logging, cfg.run.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if not cfg.validate():
        print("ERROR: Invalid configuration. Please check your .env file or environment variables.")
        return EXIT_CONFIG

    try:
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as e:
        print(f"ERROR: {e}")
        return EXIT_CONFIG
    except CorruptChain as e:
        print(f"ERROR: corrupt ledger export: {e}")
        return EXIT_CORRUPT
