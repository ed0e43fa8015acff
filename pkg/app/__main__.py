#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse
import glob
import json
import logging
import math
import os
import sys
import textwrap
import argcomplete
from argparse import RawTextHelpFormatter
from typing import Any, Dict, List, Optional

import numpy as np

from app import __version__
from .utils import analyzer, clocks, engines, palm
from .utils.common import setup_logging
from .utils.config import config, create_example_config
from .utils.engines import DiffusionConfig, EmpiricalLaw
from .utils.errors import ConfigError, UnstableSystemError
from .utils.experiment import ExperimentConfig, load_experiment
from .utils.interrupt import install_interrupt_handlers, reset_interrupt
from .utils.primitives import RenewalKind
from .utils.profile import stability_report
from .utils.reporting import MANIFEST, result_manager

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_INTERRUPTED = 130


def get_log_levels():
    """
    Get list of valid log levels for auto-completion.

    Returns:
        list: List of valid log level strings
    """
    return ["debug", "info", "warning", "error", "critical"]


def parse_args(argv: Optional[List[str]] = None):
    """
    Parse command-line arguments for sdq.

    Models are described in the JSON experiment file given with --config;
    the flags only override run-scale settings.

    Parameters:
        argv (list): Arguments to parse (default sys.argv[1:])

    Returns:
        argparse.Namespace: Parsed command-line arguments
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-f", metavar="PATH", help="JSON experiment file")
    common.add_argument("--out", "-o", metavar="DIR", help="Output directory (default: 'outputs' of the experiment)")
    common.add_argument("--seed", type=int, metavar="U64", help="Override the experiment seed")
    common.add_argument("--events", type=int, metavar="N", help="Override the events per replication")
    common.add_argument("--replications", type=int, metavar="K", help="Override the number of replications")
    common.add_argument(
        "--n", dest="n_list", type=int, action="append", metavar="N",
        help="Scaling index to run (repeatable); replaces n_list of the experiment",
    )
    common.add_argument(
        "--allow-unstable", action="store_true",
        help="Simulate even when gamma_inf >= 0 (the queue may not have a stationary law)",
    )
    common.add_argument(
        "--log-level", "-l",
        choices=get_log_levels(),
        default=(
            str(config.logging.level).lower()
            if str(config.logging.level).lower() in get_log_levels()
            else "info"
        ),
        help="Set the logging level",
    )

    parser = argparse.ArgumentParser(
        prog="sdq",
        description="Heavy-traffic toolkit for single-server queues with state-dependent arrival and service speeds.",
        formatter_class=RawTextHelpFormatter,
    )
    parser.add_argument(
        "--version", "-v",
        action="version",
        version=__version__,
        help="Display the current version",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    subparsers.add_parser(
        "simulate", parents=[common], formatter_class=RawTextHelpFormatter,
        help="Simulate the stationary queue for every n and write laws and Palm reports",
    )
    subparsers.add_parser(
        "limit", parents=[common], formatter_class=RawTextHelpFormatter,
        help="Write the heavy-traffic limit density on a grid",
    )
    compare = subparsers.add_parser(
        "compare", parents=[common], formatter_class=RawTextHelpFormatter,
        help="KS distance of the n-th stationary law to the limit over n_list",
    )
    compare.add_argument(
        "--source", choices=["oracle", "simulation"],
        help=textwrap.dedent("""
                            Where the n-th law comes from:
                            oracle        exact birth-death law (exponential clocks only)
                            simulation    merged simulation replications
                            Default: oracle when both clocks are exponential.
                        """),
    )
    compare.add_argument("--atomic", action="store_true", help="Compare raw atom CDFs instead of cell histograms")
    subparsers.add_parser(
        "diffusion", parents=[common], formatter_class=RawTextHelpFormatter,
        help="Simulate the reflected diffusion limit and compare it with the limit density",
        description=(
            "Reflected Euler scheme for the diffusion limit, compared with the limit density.\n\n"
            "Boundary treatment comes from diffusion.reflection (experiment file or settings):\n"
            "  mirror      Z = |x|, the default: its histogram has no atom at 0\n"
            "  projection  Z = max(0, x), piles mass onto 0 and biases KS by O(sqrt(step))"
        ),
    )
    subparsers.add_parser(
        "clocks", parents=[common], formatter_class=RawTextHelpFormatter,
        help="Solve the clock equations over the theta grid and n_list",
    )
    subparsers.add_parser(
        "fluid", parents=[common], formatter_class=RawTextHelpFormatter,
        help="Fluid-scaled path L(y t) / y against its exact limit",
    )
    report = subparsers.add_parser(
        "palm-report", parents=[common], formatter_class=RawTextHelpFormatter,
        help="Rebuild Palm reports from the output directory of a previous simulate run",
    )
    report.add_argument("--from", dest="source_dir", required=True, metavar="DIR", help="Output directory of 'simulate'")
    report.add_argument("--probe", dest="probes", type=float, action="append", metavar="X", help="Scaled probe level (repeatable)")
    report.add_argument("--min-epochs", type=int, metavar="K", help="Epochs needed at a probe (default simulation.minEpochs)")

    if argcomplete:
        argcomplete.autocomplete(parser)

    return parser.parse_args(argv)


def probes_for(experiment: ExperimentConfig) -> List[float]:
    return list(experiment.probes) or palm.default_probes(experiment.model)


def limit_grid(density: analyzer.LimitDensity, experiment: ExperimentConfig) -> np.ndarray:
    """Uniform u grid of the limit settings; u_max defaults past the 1 - 1e-6 quantile and the last level."""
    u_max = experiment.limit.u_max
    if u_max is None:
        last_level = density.profile.levels[-1] if density.profile.levels else 0.0
        u_max = float(math.ceil(max(density.quantile(1 - 1e-6), 1.25 * last_level)))
    return np.linspace(0.0, u_max, experiment.limit.points)


def simulation_documents(law: EmpiricalLaw, acc: palm.PalmAccumulators, sys, probes: List[float], min_epochs: int = None, limit_rhs: float = None):
    """Palm rows and the run document shared by simulate and palm-report."""
    rows = palm.palm_report(law, acc, sys, probes, min_epochs)
    intensity = palm.intensity_identity_report(law, acc, sys)
    boundary = palm.boundary_identity_report(law, sys, limit_rhs)
    if not intensity.r1_within_bound:
        logging.warning(
            f"n={sys.n}: |alpha_e - alpha_d| = {intensity.r1:.3g} exceeds (L(0) + L(T)) / T = {intensity.bound:.3g}",
            extra={"indent": 2},
        )
    document = {
        "n": sys.n,
        "law": law.to_dict(),
        "palm": acc.to_dict(),
        "stability": stability_report(sys).to_dict(),
        "intensity": intensity.to_dict(),
        "boundary": boundary.to_dict(),
        "moments": palm.moment_table(acc, sys, probes),
    }
    return rows, document


def _limit_rhs(experiment: ExperimentConfig) -> Optional[float]:
    """-integral of b against the limit law, when the limit exists."""
    if not experiment.model.balanced:
        return None
    try:
        return -analyzer.limit_density(experiment.model, experiment.arrival, experiment.service).expected_b()
    except ValueError:
        return None


def cmd_simulate(experiment: ExperimentConfig, args) -> Dict[str, Any]:
    """
    Simulate every n of the experiment.

    Writes law_n<n>.csv (lattice law), law_n<n>.json (law, Palm sums and
    identity reports) and palm_n<n>.csv (H and Delta per probe).
    """
    probes = probes_for(experiment)
    limit_rhs = _limit_rhs(experiment)
    for sys in experiment.systems():
        logging.info(f"Simulating n={sys.n}")
        law, acc = engines.run_replications(
            sys,
            experiment.events,
            experiment.burn_in_fraction,
            seed=experiment.seed,
            replications=experiment.replications,
            allow_unstable=args.allow_unstable,
        )
        rows, document = simulation_documents(law, acc, sys, probes, limit_rhs=limit_rhs)
        result_manager.add_table(f"law_n{sys.n}", law.to_csv_rows())
        result_manager.add_document(f"law_n{sys.n}", document)
        result_manager.add_table(f"palm_n{sys.n}", rows)
        logging.info(
            f"n={sys.n}: T={law.observed_time:.6g}, arrivals={law.arrivals}, departures={law.departures}, P[L=0]={law.mass(0):.5f}",
            extra={"indent": 2},
        )
    return {}


def cmd_limit(experiment: ExperimentConfig, args) -> Dict[str, Any]:
    """Write limit_density.csv (u, h, Hcdf) and limit_density.json (constants and segments)."""
    density = analyzer.limit_density(experiment.model, experiment.arrival, experiment.service)
    grid = limit_grid(density, experiment)
    result_manager.add_table("limit_density", density.grid_rows(grid))
    document = density.to_dict(grid)
    document["jump_ratios"] = [{"level": level, "ratio": density.jump_ratio(level)} for level in density.profile.levels]
    result_manager.add_document("limit_density", document)
    logging.info(f"Limit density ({density.label}): C={density.C:.10g}, mean={density.mean():.6g}")
    return {"label": density.label}


def _default_source(experiment: ExperimentConfig) -> str:
    exponential = experiment.arrival.kind is RenewalKind.EXPONENTIAL and experiment.service.kind is RenewalKind.EXPONENTIAL
    return "oracle" if exponential else "simulation"


def cmd_compare(experiment: ExperimentConfig, args) -> Dict[str, Any]:
    """Write convergence.csv (n, ks, boundary mass, jump ratio) and convergence.json."""
    density = analyzer.limit_density(experiment.model, experiment.arrival, experiment.service)
    source = getattr(args, "source", None) or _default_source(experiment)
    table = analyzer.convergence_study(
        experiment.system(experiment.n_list[0]),
        experiment.n_list,
        density,
        source=source,
        events=experiment.events,
        seed=experiment.seed,
        replications=experiment.replications,
        allow_unstable=args.allow_unstable,
        atomic=getattr(args, "atomic", False),
    )
    result_manager.add_table("convergence", table.to_csv_rows())
    result_manager.add_document(
        "convergence",
        {"source": source, "label": table.label, "monotone_ks": table.monotone, "monotone_boundary": table.boundary_monotone, "limit_rhs": -density.expected_b(), "rows": table.to_csv_rows()},
    )
    logging.info(f"KS strictly decreasing over n: {table.monotone}")
    logging.info(f"Boundary error strictly decreasing over n: {table.boundary_monotone}")
    return {"source": source, "label": table.label}


def cmd_diffusion(experiment: ExperimentConfig, args) -> Dict[str, Any]:
    """Write diffusion_law.csv (histogram) and diffusion.json (boundary statistics, KS and jump ratios)."""
    density = analyzer.limit_density(experiment.model, experiment.arrival, experiment.service)
    settings = experiment.diffusion
    overrides = {"reflection": settings.reflection} if settings.reflection else {}
    cfg = DiffusionConfig.from_density(
        density,
        step=settings.step,
        steps=settings.steps,
        burn_in=settings.burn_in,
        seed=experiment.seed,
        paths=settings.paths,
        **overrides,
    )
    law = engines.simulate_rbm(cfg)
    result_manager.add_table("diffusion_law", law.to_csv_rows())

    document = law.to_dict()
    document["label"] = density.label
    if not law.is_empty:
        upper = max(float(law.edges()[-1]), density.quantile(1 - 1e-9))
        document["ks"] = analyzer.ks_distance(law.cdf, density.Hcdf, points=law.edges(), upper=upper)
        document["jump_ratios"] = [
            {
                "level": level,
                "estimate": analyzer.jump_ratio_estimate(law.centers(), law.density(), level, window=0.25),
                "limit": density.jump_ratio(level),
            }
            for level in density.profile.levels
        ]
        logging.info(f"Reflected Euler ({cfg.reflection}): KS to the limit density {document['ks']:.5f} over {law.samples} states")
    result_manager.add_document("diffusion", document)
    return {"label": density.label}


def cmd_clocks(experiment: ExperimentConfig, args) -> Dict[str, Any]:
    """Write clocks.csv (theta, n, eta, zeta, residuals) and clocks.json (expansion slopes, safe-radius constants)."""
    arrival, service = experiment.arrival, experiment.service
    result_manager.add_table("clocks", clocks.clock_table(arrival, service, experiment.clocks.theta, experiment.n_list))
    document = {
        "safe_radius": {
            str(n): clocks.fit_safe_radius_constants(arrival, service, n, experiment.clocks.theta, experiment.clocks.u_grid)
            for n in experiment.n_list
        }
    }
    if len(experiment.n_list) > 1:
        document["expansion_slopes"] = {
            str(theta): clocks.expansion_slope(arrival, service, theta, experiment.n_list)
            for theta in experiment.clocks.theta
            if theta != 0
        }
    result_manager.add_document("clocks", document)
    return {}


def cmd_fluid(experiment: ExperimentConfig, args) -> Dict[str, Any]:
    """Write fluid_n<n>.csv (t, L_bar, reference, abs_error) and fluid.json (sup errors)."""
    settings = experiment.fluid
    summary = []
    for sys in experiment.systems():
        trajectory = engines.run_fluid(sys, settings.y, settings.t_grid, settings.initial, experiment.seed)
        reference = engines.fluid_reference(sys, settings.t_grid, settings.initial)
        result_manager.add_table(f"fluid_n{sys.n}", trajectory.to_csv_rows(reference))
        sup_error = float(np.max(np.abs(trajectory.values - reference))) if len(reference) else 0.0
        summary.append({"n": sys.n, "y": settings.y, "initial": settings.initial, "sup_error": sup_error})
        logging.info(f"n={sys.n}: sup |L(y t)/y - fluid limit| = {sup_error:.4g}", extra={"indent": 2})
    result_manager.add_document("fluid", {"runs": summary})
    return {}


def cmd_palm_report(experiment: Optional[ExperimentConfig], args) -> Dict[str, Any]:
    """Recompute palm_n<n>.csv and the identity reports from the law_n<n>.json files of a simulate run."""
    files = sorted(glob.glob(os.path.join(args.source_dir, "law_n*.json")))
    if not files:
        raise ConfigError([f"--from: no law_n*.json files in '{args.source_dir}'"])
    probes = args.probes or probes_for(experiment)
    limit_rhs = _limit_rhs(experiment)
    for path in files:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        law = EmpiricalLaw.from_dict(data["law"])
        acc = palm.PalmAccumulators.from_dict(data["palm"])
        sys = experiment.system(law.n)
        rows, document = simulation_documents(law, acc, sys, probes, args.min_epochs, limit_rhs)
        result_manager.add_table(f"palm_n{sys.n}", rows)
        result_manager.add_document(f"palm_n{sys.n}", {k: document[k] for k in ("n", "intensity", "boundary", "moments")})
    return {"source_dir": os.path.abspath(args.source_dir)}


HANDLERS = {
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "compare": cmd_compare,
    "diffusion": cmd_diffusion,
    "clocks": cmd_clocks,
    "fluid": cmd_fluid,
    "palm-report": cmd_palm_report,
}


def load_for(args) -> ExperimentConfig:
    """
    Load the experiment of a command and apply the run-scale flags.

    palm-report falls back to the configuration recorded in the manifest of
    its source directory.
    """
    if args.config:
        experiment = load_experiment(args.config)
    elif args.command == "palm-report":
        manifest_path = os.path.join(args.source_dir, MANIFEST)
        try:
            with open(manifest_path, "r", encoding="utf-8") as f:
                experiment = ExperimentConfig.from_dict(json.load(f)["config"])
        except (FileNotFoundError, KeyError, TypeError, json.JSONDecodeError):
            raise ConfigError([f"--from: '{manifest_path}' does not hold a run configuration; pass --config"])
    else:
        raise ConfigError(["--config is required"])
    if args.command == "palm-report" and not args.out:
        args.out = os.path.join(args.source_dir, "palm-report")
    return experiment.with_overrides(
        n_list=args.n_list,
        events=args.events,
        seed=args.seed,
        replications=args.replications,
        outputs=args.out,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for sdq.

    Parses the command line, loads the experiment, runs the command and
    writes every collected result together with the run manifest.

    Returns:
        int: 0 on success, 2 on invalid input or an unstable system, 130 on
             interrupt, 1 on any other failure
    """
    args = parse_args(argv)
    setup_logging(log_level=args.log_level, log_file_path=str(config.logging.file))
    install_interrupt_handlers()
    reset_interrupt()

    # keep the example settings file current when a conf directory exists
    if os.path.isdir("./conf"):
        create_example_config()

    result_manager.reset()
    result_manager.set_start_time()
    try:
        experiment = load_for(args)
        logging.info(f"sdq {__version__}: {args.command} for n in {list(experiment.n_list)}")
        extra = HANDLERS[args.command](experiment, args)
        result_manager.write_all(
            args.out or experiment.outputs,
            args.command,
            list(sys.argv[1:] if argv is None else argv),
            experiment.to_dict(),
            experiment.seed,
            extra,
        )
    except (ConfigError, UnstableSystemError, ValueError) as e:
        logging.error(str(e))
        return EXIT_INVALID
    except KeyboardInterrupt:
        logging.error("Interrupted; partial results were not written")
        return EXIT_INTERRUPTED
    except Exception as e:
        logging.error(f"{type(e).__name__}: {e}")
        logging.debug("Traceback", exc_info=True)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
