import argparse
import sys
from typing import Optional, Sequence

from src.commands import execute
from src.utils import DEFAULT_CONFIG_FILE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isolate",
        description="Risk-set matching and sensitivity analysis for differential effects.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", default=DEFAULT_CONFIG_FILE, help="Run configuration (JSON)")
        return sub

    match = add_command("match", "Build the risk-set matched design")
    match.add_argument("--cohort", help="Cohort CSV")
    match.add_argument("--out-design", dest="out_design", help="Design CSV to write")

    balance = add_command("balance", "Covariate balance and outcome plot data")
    balance.add_argument("--design", help="Design CSV")
    balance.add_argument("--cohort", help="Cohort CSV")
    balance.add_argument("--vars", help="Comma-separated covariates")
    balance.add_argument("--outcomes", help="Comma-separated outcomes for the plot data")
    balance.add_argument("--tau0", type=float, help="Tobit effect for the residual boxplots")
    balance.add_argument("--set-id", type=int, help="Also write PREFIX.set<ID>.csv describing one matched set")
    balance.add_argument("--out", help="Output prefix")

    infer = add_command("infer", "Sensitivity analysis over a grid of Gamma")
    infer.add_argument("--design", help="Design CSV")
    infer.add_argument("--cohort", help="Cohort CSV")
    infer.add_argument("--outcome", help="Outcome name")
    infer.add_argument("--dose", help="Dose name, for the ratio model")
    infer.add_argument("--model", choices=["tobit", "ratio"], help="Effect model")
    infer.add_argument("--gammas", help="Comma-separated Gamma values, e.g. 1,1.1,1.2,1.25")
    infer.add_argument("--out", help="Output prefix")

    sim = add_command("simulate", "Generate a synthetic cohort with a known effect")
    sim.add_argument("--spec", help="Simulation spec (JSON); the config's simulation section otherwise")
    sim.add_argument("--out", help="Cohort CSV to write")
    sim.add_argument("--sets", type=int, help="Generate this many known matched sets instead")
    sim.add_argument("--k", type=int, default=2, help="Event index of the known sets")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
