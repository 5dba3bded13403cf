#!/usr/bin/env python3
"""
POI Privacy Simulator - Main Application Entry Point

This application simulates decentralized collaborative POI recommenders,
attacks the knowledge their members share to infer visited places, and
measures how well local defenses hide sensitive POIs.
"""

import argparse
import logging
import os
import sys

# Add the project root directory to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import application modules
from src.config.defaults import APP_DESCRIPTION, APP_ID, APP_NAME, APP_VERSION, OUTPUT_ROOT_ENV
from src.config.settings import load_config
from src.evalkit.report import REPORT_JSON, emit_report, load_report
from src.harness.pipeline import ExperimentRunner, generate_world, ingest
from src.utils.errors import ConfigError, SimulationError
from src.utils.logs import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

PIPELINE_VERBS = ("train", "collab", "defend", "attack", "eval", "run")


class PoiPrivacySimulator:
    """Main application class that coordinates all components."""

    def __init__(self, args):
        """Initialize the application from parsed command-line arguments."""
        self.args = args
        self.config = load_config(args.config, args.set)

    def gen(self):
        """Write a synthetic world as a check-in CSV."""
        world = generate_world(self.config.dataset['synthetic'], self.args.out, self.args.truth)
        print(f"{len(world.dataset.sequences)} users, {len(world.dataset.pois)} POIs -> {self.args.out}")

    def ingest(self):
        """Filter a check-in CSV into the internal JSON form."""
        path = self.args.csv or self.config.dataset['csv_path']
        if not path:
            raise ConfigError("ingest needs --csv or dataset.csv_path")
        dataset = ingest(path, self.config.dataset['min_interactions'], self.args.out)
        print(f"{len(dataset.sequences)} users, {len(dataset.pois)} POIs kept")

    def pipeline(self, verb):
        """Run the experiment through the stage named by ``verb``."""
        until = "eval" if verb in ("eval", "run") else verb
        runner = ExperimentRunner(self.config, self.args.output)
        report = runner.run(until)
        print(runner.run_dir)
        if report is not None and verb == "run":
            print(report.summary().to_string(float_format=lambda v: f"{v:.4f}"))

    def report(self):
        """Re-emit the report of a finished run."""
        run_dir = self.args.run_dir
        report = load_report(os.path.join(run_dir, REPORT_JSON))
        emit_report(report, run_dir)
        print(report.summary().to_string(float_format=lambda v: f"{v:.4f}"))

    def run(self):
        """Dispatch the selected verb."""
        verb = self.args.verb
        if verb in PIPELINE_VERBS:
            self.pipeline(verb)
        else:
            getattr(self, verb)()


def build_parser():
    """
    Build the command-line parser.

    Returns:
        argparse.ArgumentParser: Parser with one sub-command per verb
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration (JSON)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration value, e.g. defense.mu=0.8")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    parser = argparse.ArgumentParser(prog=APP_ID, description=f"{APP_NAME}: {APP_DESCRIPTION}")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    verbs = parser.add_subparsers(dest="verb", required=True)

    gen = verbs.add_parser("gen", parents=[common], help="generate a synthetic world")
    gen.add_argument("--out", required=True, help="check-in CSV to write")
    gen.add_argument("--truth", help="JSON file for the planted ground truth")

    ing = verbs.add_parser("ingest", parents=[common], help="filter a check-in CSV")
    ing.add_argument("--csv", help="input CSV (defaults to dataset.csv_path)")
    ing.add_argument("--out", help="JSON file for the filtered dataset")

    for verb in PIPELINE_VERBS:
        stage = "eval" if verb == "run" else verb
        sub = verbs.add_parser(verb, parents=[common], help=f"run the pipeline through '{stage}'")
        sub.add_argument("--output", help=f"output root (default ${OUTPUT_ROOT_ENV} or runs/)")

    rep = verbs.add_parser("report", parents=[common], help="re-emit tables of a finished run")
    rep.add_argument("run_dir", help="run directory holding report.json")
    return parser


def main(argv=None):
    """Application entry point."""
    args = build_parser().parse_args(argv)
    configure_logging(-1 if args.quiet else args.verbose)
    try:
        app = PoiPrivacySimulator(args)
        app.run()
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except SimulationError as e:
        logger.error("%s", e)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
