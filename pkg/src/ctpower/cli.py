"""Command-line front end.

    ctpower solve   --input inst.json [--cost COST] [--opts OPTS] [--output out.json]
    ctpower region  --input inst.json [--weights K] [--output trace.csv]
    ctpower fading  --input states.json [--cost COST] [--mode avg|short_term]
                    [--objective cost_of_expected|expected_cost]
    ctpower robust  --input robust.json [--cost COST] [--seed S] [--samples N]
    ctpower verify

COST and OPTS are inline JSON or a path to a JSON file. Errors go to stderr
as one JSON object and the exit status is nonzero. Set CTPOWER_LOG to a
logging level name (e.g. DEBUG) for diagnostics.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .costs import CostSpec
from .model import NetworkInstance, ParseError
from .solver import InfeasibleError, SolveOptions, SolverError

COMMANDS = ("solve", "region", "fading", "robust", "verify")
DEFAULT_K = 65

EXIT_FAILURE, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SOLVER = 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, payload: dict, status: int):
        super().__init__(payload.get("message", ""))
        self.payload = payload
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError({"error": "usage", "message": message}, EXIT_USAGE)


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    output: Optional[str] = None
    cost: Optional[str] = None
    opts: Optional[str] = None
    seed: int = 0
    samples: int = 100_000
    weights: int = DEFAULT_K
    mode: str = "avg"
    objective: str = "cost_of_expected"
    jobs: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise CliError({"error": "usage", "message": f"unknown command {self.command!r}"}, EXIT_USAGE)
        if self.command != "verify" and not self.input:
            raise CliError({"error": "usage", "field": "--input", "message": "required"}, EXIT_USAGE)
        if self.input and not Path(self.input).is_file():
            raise CliError({"error": "io", "path": self.input, "message": "input file not found"}, EXIT_USAGE)


def _load_json_text(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError({"error": "parse", "source": source, "line": exc.lineno,
                        "column": exc.colno, "message": exc.msg}, EXIT_USAGE) from None


def _inline_or_file(value: str, flag: str):
    if value.lstrip().startswith("{"):
        return _load_json_text(value, flag)
    path = Path(value)
    if not path.is_file():
        raise CliError({"error": "io", "path": value, "field": flag, "message": "file not found"}, EXIT_USAGE)
    return _load_json_text(path.read_text(), value)


def _parsed(fn, data, source: str):
    try:
        return fn(data)
    except ParseError as exc:
        raise CliError({"error": "parse", "source": source, "field": exc.field,
                        "message": exc.message}, EXIT_USAGE) from None


def _cost(cfg: RunConfig, default: Optional[dict] = None) -> CostSpec:
    data = _inline_or_file(cfg.cost, "--cost") if cfg.cost else default
    if data is None:
        raise CliError({"error": "usage", "field": "--cost", "message": "required"}, EXIT_USAGE)
    return _parsed(CostSpec.from_dict, data, "--cost")


def _opts(cfg: RunConfig) -> SolveOptions:
    if not cfg.opts:
        return SolveOptions()
    return _parsed(SolveOptions.from_dict, _inline_or_file(cfg.opts, "--opts"), "--opts")


def _input(cfg: RunConfig):
    return _load_json_text(Path(cfg.input).read_text(), cfg.input)


def _strict(obj):
    """Non-finite floats as strings, so error payloads are strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _strict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_strict(v) for v in obj]
    return obj


def _dumps(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)


def run(cfg: RunConfig) -> int:
    """Execute one command; raises CliError on failure."""
    try:
        return _dispatch(cfg)
    except InfeasibleError as exc:
        cert = exc.certificate.to_dict() if exc.certificate else None
        raise CliError({"error": "infeasible", "message": str(exc), "certificate": cert},
                       EXIT_INFEASIBLE) from None
    except SolverError as exc:
        cert = exc.certificate.to_dict() if exc.certificate else None
        raise CliError({"error": "solver", "message": str(exc), "certificate": cert}, EXIT_SOLVER) from None
    except ParseError as exc:
        raise CliError({"error": "parse", "source": cfg.input, "field": exc.field,
                        "message": exc.message}, EXIT_USAGE) from None
    except ValueError as exc:
        raise CliError({"error": "invalid", "message": str(exc)}, EXIT_USAGE) from None


def _dispatch(cfg: RunConfig) -> int:
    if cfg.command == "verify":
        from .verify import run_all

        lines = []
        ok = run_all(lines.append)
        _emit(cfg, "\n".join(lines) + "\n")
        return 0 if ok else EXIT_FAILURE

    data = _input(cfg)
    opts = _opts(cfg)

    if cfg.command == "solve":
        from .solver import solve_perfect_csi

        inst = _parsed(NetworkInstance.from_dict, data, cfg.input)
        sol = solve_perfect_csi(inst, _cost(cfg), opts)
        _emit(cfg, _dumps(sol.to_dict()))

    elif cfg.command == "region":
        from .region import trace_completion_region

        inst = _parsed(NetworkInstance.from_dict, data, cfg.input)
        trace = trace_completion_region(inst, cfg.weights, opts=opts, n_jobs=cfg.jobs)
        for f in trace.failures:
            logging.getLogger(__name__).warning("sweep point %d failed: %s", f["index"], f["error"])
        _emit(cfg, trace.to_csv())

    elif cfg.command == "fading":
        from .fading import FadingStates, solve_adaptive_avg, solve_adaptive_expected_cost

        fs = _parsed(FadingStates.from_dict, data, cfg.input)
        spec = _cost(cfg)
        if cfg.objective == "cost_of_expected":
            sol = solve_adaptive_avg(fs, spec, opts, mode=cfg.mode)
        else:
            sol = solve_adaptive_expected_cost(fs, spec, cfg.mode, opts, n_jobs=cfg.jobs)
        _emit(cfg, _dumps(sol.to_dict()))

    elif cfg.command == "robust":
        from .robust import RobustProblem, solve_robust

        prob = _parsed(RobustProblem.from_dict, data, cfg.input)
        sol = solve_robust(prob.shape, prob.dist, prob.outage, _cost(cfg), opts,
                           samples=cfg.samples, seed=cfg.seed)
        _emit(cfg, _dumps(sol.to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctpower", description="Completion-time optimal power control.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--output", help="output path (default: stdout)")
        if name == "verify":
            continue
        p.add_argument("--input", required=True, help="input JSON file")
        p.add_argument("--opts", help="solver options, inline JSON or path")
        if name != "region":
            p.add_argument("--cost", required=True, help="cost spec, inline JSON or path")
        if name == "region":
            p.add_argument("--weights", type=int, default=DEFAULT_K, metavar="K",
                           help=f"number of sweep angles (default {DEFAULT_K})")
        if name in ("region", "fading"):
            p.add_argument("--jobs", type=int, default=1, help="worker threads")
        if name == "fading":
            p.add_argument("--mode", choices=("avg", "short_term"), default="avg")
            p.add_argument("--objective", choices=("cost_of_expected", "expected_cost"),
                           default="cost_of_expected")
        if name == "robust":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--samples", type=int, default=100_000,
                           help="frozen draws per non-Rayleigh user")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CTPOWER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig(**{k: v for k, v in vars(args).items() if v is not None})
        if cfg.weights < 1 or cfg.samples < 1 or cfg.jobs < 1:
            raise CliError({"error": "usage", "message": "--weights, --samples and --jobs must be >= 1"},
                           EXIT_USAGE)
        return run(cfg)
    except CliError as exc:
        sys.stderr.write(json.dumps(_strict(exc.payload), sort_keys=True, allow_nan=False) + "\n")
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
