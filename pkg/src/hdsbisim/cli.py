"""Command-line front end.

    hdsbisim check   --model FILE
    hdsbisim bisim   --model FILE --eta ETA [--sweep] [--format json|dot] [--out FILE]
    hdsbisim example [--sweep] [--format json|dot] [--out FILE]

Exit status: 0 on success, 1 when the model fails a check or the run ends
exhausted/inconclusive, 2 for unreadable or malformed input, 3 when the
engine itself fails (a flow that neither exits nor settles, for instance).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .bisim import FIXED_POINT, STABLE, BisimulationResult, compute_bisimulation, eta_sweep
from .export import points_dump, to_dot, to_json
from .expr import ExprEvalError
from .flow import FlowConfig
from .mapped import OutputNondeterminism, SuccessorError
from .model import HybridAutomaton, ModelError, load_model, thermostat_path, validate_assumptions

EXAMPLE_ETA = 0.05 * math.sqrt(2)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_ENGINE = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    model: Path
    eta: float
    spacing: Optional[float] = None
    sweep: bool = False
    sweep_factor: float = 0.5
    sweep_rounds: int = 3
    k_max: int = 100
    flow: FlowConfig = FlowConfig()
    format: str = "json"
    out: Optional[str] = None
    points: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        for name in ("eta", "sweep_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.spacing is not None and not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not self.sweep_factor < 1:
            raise ValueError("sweep factor must be below 1")
        if self.sweep_rounds < 2:
            raise ValueError("a sweep needs at least two rounds")
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        if self.format not in ("json", "dot"):
            raise ValueError(f"unknown format {self.format!r}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdsbisim", description="Bisimulation quotients of hybrid automata.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="validate a model")
    check.add_argument("--model", required=True)
    check.add_argument("--seed", type=int, default=0, help="seed for the random guard probes")
    _flow_flags(check)

    for name, needs_model in (("bisim", True), ("example", False)):
        sp = sub.add_parser(name, help="compute the quotient" if needs_model else
                            "run the bundled two-room heater end to end")
        if needs_model:
            sp.add_argument("--model", required=True)
            sp.add_argument("--eta", type=float, required=True)
        else:
            sp.add_argument("--eta", type=float, default=EXAMPLE_ETA)
        sp.add_argument("--spacing", type=float, help="grid pitch (default: eta)")
        sp.add_argument("--sweep", action="store_true", help="repeat with smaller eta until stable")
        sp.add_argument("--sweep-factor", type=float, default=0.5)
        sp.add_argument("--sweep-rounds", type=int, default=3)
        sp.add_argument("--k-max", type=int, default=100)
        sp.add_argument("--format", choices=("json", "dot"), default="json")
        sp.add_argument("--out", help="write the quotient here ('-' for stdout)")
        sp.add_argument("--points", help="write the sample grid as TSV here")
        sp.add_argument("--seed", type=int, default=0)
        _flow_flags(sp)
    return p


def _flow_flags(p: argparse.ArgumentParser):
    d = FlowConfig()
    p.add_argument("--step", type=float, default=d.step)
    p.add_argument("--event-tol", type=float, default=d.event_tol)
    p.add_argument("--eq-tol", type=float, default=d.eq_tol)
    p.add_argument("--t-max", type=float, default=d.t_max)


def _flow(args) -> FlowConfig:
    return FlowConfig(step=args.step, event_tol=args.event_tol, eq_tol=args.eq_tol, t_max=args.t_max)


def _load(path) -> HybridAutomaton:
    return load_model(path)


def cmd_check(model: str | Path, seed: int = 0, cfg: FlowConfig = FlowConfig(), out=None) -> int:
    out = out or sys.stdout
    try:
        h = _load(model)
    except FileNotFoundError:
        print(f"error: no such file: {model}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"error: {model}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    diags = validate_assumptions(h, seed=seed, cfg=cfg)
    for d in diags:
        print(d, file=out)
    if not diags:
        print(f"ok: {len(h.modes)} modes, {len(h.edges)} edges", file=out)
    return EXIT_FAIL if diags else EXIT_OK


def _write(text: str, dest: Optional[str]):
    if dest is None:
        return
    if dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def render(result: BisimulationResult, fmt: str) -> str:
    return to_json(result.graph) if fmt == "json" else to_dot(result.graph)


def cmd_bisim(rc: RunConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        h = _load(rc.model)
    except FileNotFoundError:
        print(f"error: no such file: {rc.model}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"error: {rc.model}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    # keep stdout clean for the quotient when it goes there
    log = sys.stderr if rc.out == "-" else out
    try:
        if rc.sweep:
            report = eta_sweep(h, rc.eta, rc.sweep_factor, rc.sweep_rounds, rc.flow, rc.k_max,
                               progress=lambda r: print("round: " + r.summary(), file=log))
            result, status = report.final, report.status
        else:
            result = compute_bisimulation(h, rc.eta, rc.flow, rc.spacing, rc.k_max)
            status = result.status
    except (SuccessorError, OutputNondeterminism, ExprEvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    if result.graph is not None:
        result.graph.metadata["status"] = status
    print(f"k={result.k} classes={result.class_count} grid={len(result.grid)} "
          f"eta={result.eta:.7g} status={status}", file=log)
    if result.message:
        print(f"hint: {result.message}", file=log)
    if rc.points:
        Path(rc.points).write_text(points_dump(result.grid))
    if result.graph is not None:
        _write(render(result, rc.format), rc.out)
    return EXIT_OK if status in (FIXED_POINT, STABLE) else EXIT_FAIL


def _run_config(args, model) -> RunConfig:
    return RunConfig(model=Path(model), eta=args.eta, spacing=args.spacing, sweep=args.sweep,
                     sweep_factor=args.sweep_factor, sweep_rounds=args.sweep_rounds, k_max=args.k_max,
                     flow=_flow(args), format=args.format, out=args.out, points=args.points, seed=args.seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "check":
            return cmd_check(args.model, args.seed, _flow(args))
        model = args.model if args.command == "bisim" else thermostat_path()
        rc = _run_config(args, model)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return cmd_bisim(rc)


if __name__ == "__main__":
    sys.exit(main())
