"""Command handlers behind the CLI; the only place library errors become exit codes."""

import argparse
from dataclasses import replace
from typing import Optional

from .balance import (
    balance_table, describe_set, outcome_boxplot_data, qq_data, residual_boxplot_data,
)
from .cohort_io import (
    design_sidecar_path, read_cohort, read_design, read_json, write_balance, write_cohort,
    write_design, write_report, write_table, write_truth,
)
from .config_manager import ConfigManager, RunConfig
from .errors import (
    BalanceViolation, BracketFailure, ConfigError, DomainError, EmptyDesign,
    InfeasibleDesign, IsolateError, MissingOutcome, SchemaError, UnknownVariable,
)
from .inference import infer_proportional, infer_tobit
from .logger import configure_logging, setup_logger
from .riskset_matcher import build_risk_set_match
from .simulate import SimSpec, simulate, simulate_design
from .utils import Codes, MODEL_RATIO, MODEL_TOBIT, resolve_threads

ERROR_CODES: list[tuple[tuple[type, ...], int]] = [
    ((BracketFailure,), Codes.BRACKET_FAILURE),
    ((InfeasibleDesign, EmptyDesign), Codes.INFEASIBLE),
    ((SchemaError, ConfigError, UnknownVariable, MissingOutcome, DomainError), Codes.SCHEMA_ERROR),
    ((IsolateError, OSError), Codes.GENERAL_ERROR),
]


def exit_code_for(error: Exception) -> Optional[int]:
    """Exit code of a handled error, None for anything unexpected."""
    for types, code in ERROR_CODES:
        if isinstance(error, types):
            return code
    return None


class CommandHandler:
    """Base class for command handlers."""
    def __init__(self, config: RunConfig):
        self.config  = config
        self.threads = resolve_threads()
        self.logger  = setup_logger(self.__class__.__name__)

    def _path(self, given: Optional[str], key: str) -> str:
        path = given or self.config.paths.get(key)
        if not path:
            raise ConfigError(f"No {key} path given on the command line or in the config")
        return path


class MatchHandler(CommandHandler):
    def handle(self, args: argparse.Namespace) -> int:
        """Build the risk-set match and write the design with its unmatched log."""
        cohort = read_cohort(self._path(args.cohort, "cohort"))
        design = build_risk_set_match(
            cohort, self.config.eligibility, self.config.distance,
            solver=self.config.solver, threads=self.threads,
        )
        out = self._path(args.out_design, "design")
        write_design(design, out)

        if not design.sets:
            raise InfeasibleDesign("No matched set could be formed")

        summary = ", ".join(f"k={k}: {n}" for k, n in design.summary().items())
        self.logger.info(
            f"Matched {len(design.sets)} sets ({summary}), objective {design.objective:.6g}, "
            f"{len(design.unmatched_treated)} treated unmatched"
        )
        return Codes.SUCCESS


class BalanceHandler(CommandHandler):
    def handle(self, args: argparse.Namespace) -> int:
        """Write the balance table and the qq and boxplot data."""
        design = read_design(self._path(args.design, "design"))
        design = replace(design, config_echo=(self.config.eligibility, self.config.distance))
        cohort = read_cohort(self._path(args.cohort, "cohort"))
        if not design.sets:
            raise EmptyDesign("Design has no matched sets")

        variables = _split(args.vars) if args.vars else self._variables(max(design.summary()))
        members = None
        if args.set_id is not None:
            matched = next((s for s in design.sets if s.set_id == args.set_id), None)
            if matched is None:
                raise ConfigError(f"Design has no matched set {args.set_id}")
            set_variables = _split(args.vars) if args.vars else self._variables(matched.event_index)
            members = describe_set(design, cohort, args.set_id, set_variables)
        outcomes = _split(args.outcomes) if args.outcomes else [
            name for name in (self.config.outcome, self.config.dose) if name
        ]

        table = balance_table(design, cohort, variables, threads=self.threads)
        qq = {name: qq_data(design, cohort, name) for name in outcomes}
        boxplots = {"outcomes": {name: outcome_boxplot_data(design, cohort, name) for name in outcomes}}
        if args.tau0 is not None:
            boxplots["residuals"] = {
                "outcome": self.config.outcome,
                "tau0": args.tau0,
                "boxes": residual_boxplot_data(design, cohort, self.config.outcome, args.tau0),
            }

        prefix = self._path(args.out, "output_prefix")
        write_balance(table, qq, boxplots, prefix)
        if members is not None:
            write_table(members, f"{prefix}.set{args.set_id}.csv")
        return Codes.SUCCESS

    def _variables(self, k: int) -> list[str]:
        """Exact variables, then distance covariates through event k."""
        names = [v.name for v in self.config.eligibility.exact_variables]
        return names + self.config.distance.names_for(k)


class InferHandler(CommandHandler):
    def handle(self, args: argparse.Namespace) -> int:
        """Run the sensitivity analysis and write the report and table."""
        design = read_design(self._path(args.design, "design"))
        cohort = read_cohort(self._path(args.cohort, "cohort"))
        model = args.model or self.config.model
        outcome = args.outcome or self.config.outcome
        dose = args.dose or self.config.dose
        gammas = _gammas(args.gammas) if args.gammas else self.config.gammas

        if model == MODEL_TOBIT:
            report = infer_tobit(design, cohort, outcome, gammas, self.config.statistic,
                                 self.config.settings, threads=self.threads)
        elif model == MODEL_RATIO:
            if not dose:
                raise ConfigError("The ratio model needs --dose")
            report = infer_proportional(design, cohort, outcome, dose, gammas,
                                        self.config.statistic, self.config.settings,
                                        threads=self.threads)
        else:
            raise ConfigError(f"Unknown model '{model}'")

        write_report(report, self._path(args.out, "output_prefix"))
        return Codes.SUCCESS


class SimulateHandler(CommandHandler):
    def handle(self, args: argparse.Namespace) -> int:
        """Write a synthetic cohort, its truth record and optionally a known design."""
        spec = SimSpec.from_dict(read_json(args.spec)) if args.spec else self.config.simulation
        out = self._path(args.out, "cohort")

        if args.sets:
            cohort, design, truth = simulate_design(spec, args.sets, k=args.k)
            write_cohort(cohort, out)
            write_design(design, design_sidecar_path(out))
        else:
            simulation = simulate(spec)
            cohort, truth = simulation.cohort, simulation.truth
            write_cohort(cohort, out)
        write_truth(truth, out)
        return Codes.SUCCESS


class CommandFactory:
    """Factory class routing a command to its handler and mapping failures to exit codes."""
    def __init__(self, config: RunConfig):
        self.config = config
        self.logger = setup_logger(__name__)
        self.handlers = {
            "match":    MatchHandler(config),
            "balance":  BalanceHandler(config),
            "infer":    InferHandler(config),
            "simulate": SimulateHandler(config),
        }

    def handle_command(self, command: str, args: argparse.Namespace) -> int:
        """Route a command to its handler."""
        handler = self.handlers.get(command)
        if handler is None:
            self.logger.warning(f"Unknown command: {command}")
            return Codes.GENERAL_ERROR

        try:
            self.logger.debug(f"Handling command: {command}")
            return handler.handle(args)
        except BalanceViolation as e:
            self.logger.error(f"Balance check failed: {e}")
            return Codes.GENERAL_ERROR
        except (IsolateError, OSError) as e:
            code = exit_code_for(e)
            self.logger.error(f"{command} failed ({type(e).__name__}): {e}")
            return code


def execute(args: argparse.Namespace) -> int:
    """
    Load the configuration, set up logging and run one command.

    Args:
        args: Parsed command line; `command` and `config` are required.

    Returns:
        The process exit code.
    """
    try:
        manager = ConfigManager(args.config)
        config = manager.run_config()
    except IsolateError as e:
        setup_logger(__name__).error(f"Configuration error: {e}")
        return exit_code_for(e)

    configure_logging(config.log_level, config.log_dir)
    return CommandFactory(config).handle_command(args.command, args)


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _gammas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in _split(text))
    except ValueError:
        raise ConfigError(f"Gammas must be comma-separated numbers, got '{text}'") from None
