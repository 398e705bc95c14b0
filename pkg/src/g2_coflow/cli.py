"""
``g2-coflow``: run, resume and verify coflow experiments and fit analyticity constants.

Exit codes: 0 success, 2 configuration error, 3 stability violation or failed check, 4 checkpoint error.
"""
import argparse
import concurrent.futures
import csv
import json
import logging
import math
import pathlib
import sys
import time
import typing
from dataclasses import dataclass
from dataclasses import field

from .analysis import commutator_monitor
from .analysis import diagnostics_row
from .analysis import evolution_monitors
from .analysis import fit_analyticity
from .analysis import fit_entries
from .analysis import first_exit_time
from .analysis import lambda_field
from .analysis import shi_reference_blowup_time
from .analysis import shi_sequences
from .checkpoint import Checkpoint
from .checkpoint import load_checkpoint
from .checkpoint import save_checkpoint
from .coflow import FlowState
from .coflow import FlowTrajectory
from .coflow import initial_state
from .coflow import run
from .coflow import stable_dt
from .coflow import step
from .config import RunConfig
from .config import build_initial
from .config import parse_config
from .errors import ChecksumMismatch
from .errors import CoflowError
from .errors import InsufficientData
from .errors import InsufficientTrajectory
from .errors import InvalidArgument
from .errors import NotCoclosed
from .errors import NotPositive
from .errors import ParseError
from .errors import StabilityViolation
from .errors import ValidationError
from .errors import VersionMismatch
from .lab_config import LabConfig
from .verify import format_table
from .verify import run_battery

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STABILITY = 3
EXIT_CHECKPOINT = 4


@dataclass
class ExecutionResult:
    exit_code: int
    rows: typing.List[typing.Dict[str, float]] = field(default_factory=list)
    report: typing.Dict[str, typing.Any] = field(default_factory=dict)
    trajectory: typing.Optional[FlowTrajectory] = None
    message: str = ""


class _RowCollector:
    """
    Collects monitor rows at the configured cadence. Rows are computed on a worker pool and gathered
    in submission order, so the table does not depend on the number of workers.
    """

    def __init__(self, config: RunConfig, executor: concurrent.futures.Executor, started: float):
        self._config = config
        self._executor = executor
        self._started = started
        self._futures: typing.List["concurrent.futures.Future[typing.Dict[str, float]]"] = []
        self._last_step: typing.Optional[int] = None

    def __call__(self, state: FlowState, companion: typing.Optional[FlowState] = None) -> None:
        if state.step_index % self._config.monitors.every != 0:
            return
        self.submit(state, companion)

    def submit(self, state: FlowState, companion: typing.Optional[FlowState] = None) -> None:
        if self._last_step == state.step_index:
            return
        self._last_step = state.step_index
        self._futures.append(
            self._executor.submit(
                diagnostics_row,
                state,
                self._config.monitors.kmax,
                "shi" in self._config.monitors.names,
                companion,
                time.perf_counter() - self._started,
            )
        )

    def rows(self) -> typing.List[typing.Dict[str, float]]:
        return [future.result() for future in self._futures]


def _checkpoint_path(config: RunConfig) -> pathlib.Path:
    return pathlib.Path(config.output.directory) / config.output.checkpoint


def _maybe_checkpoint(config: RunConfig, state: FlowState) -> None:
    every = config.output.checkpoint_every
    if every > 0 and state.step_index > 0 and state.step_index % every == 0:
        save_checkpoint(state, _checkpoint_path(config), config.flow.integrator)


def _run_single(config: RunConfig, start: FlowState, collector: _RowCollector) -> FlowTrajectory:
    def on_step(state: FlowState) -> None:
        collector(state)
        _maybe_checkpoint(config, state)

    return run(
        start,
        config.flow.t_end,
        config.flow.integrator,
        c_cfl=config.flow.c_cfl,
        fixed_dt=config.flow.dt,
        keep_every=config.monitors.every,
        on_step=on_step,
    )


def _run_both(config: RunConfig, start: FlowState, collector: _RowCollector) -> FlowTrajectory:
    """
    Direct and velocity routes in lockstep with the direct route's step sizes; the direct trajectory is returned
    """
    direct = start
    companion = initial_state(start.psi, start.A, "velocity", start.scheme, start.cache.phi, start.t, start.step_index)
    trajectory = FlowTrajectory(states=[direct])
    collector(direct, companion)
    t_end = config.flow.t_end
    while t_end - direct.t > 1e-14 * max(1.0, abs(t_end)):
        dt = config.flow.dt if config.flow.dt is not None else stable_dt(direct, config.flow.c_cfl)
        dt = min(dt, t_end - direct.t)
        try:
            direct = step(direct, dt, config.flow.integrator)
            companion = step(companion, dt, config.flow.integrator)
        except StabilityViolation as error:
            error.trajectory = trajectory
            raise
        if direct.step_index % config.monitors.every == 0:
            trajectory.states.append(direct)
        collector(direct, companion)
        _maybe_checkpoint(config, direct)
    if trajectory.states[-1] is not direct:
        trajectory.states.append(direct)
    collector.submit(direct, companion)
    trajectory.completed = True
    return trajectory


def _report(
    config: RunConfig,
    trajectory: FlowTrajectory,
    rows: typing.List[typing.Dict[str, float]],
    abort_reason: typing.Optional[str],
    M0: float,
) -> typing.Dict[str, typing.Any]:
    report: typing.Dict[str, typing.Any] = {
        "config": config.as_dict(),
        "completed": trajectory.completed,
        "steps": trajectory.final.step_index,
        "t_final": trajectory.final.t,
        "abort_reason": abort_reason,
        "final": rows[-1] if rows else None,
    }
    names = config.monitors.names
    kmax = config.monitors.kmax
    if "fit" in names:
        try:
            series = [shi_sequences(s.cache, s.t, kmax, s.scheme) for s in trajectory.states]
            fit = fit_analyticity(series)
            report["analyticity_fit"] = fit.as_dict()
            if rows:
                A = config.flow.A
                report["reference_curve"] = {
                    "M0": M0,
                    "blowup_time": shi_reference_blowup_time(M0, A, fit.C_fit),
                    "first_exit_time": first_exit_time(
                        [r["t"] for r in rows], [r["Phi_N"] for r in rows], M0, A, fit.C_fit
                    ),
                }
        except InsufficientData as error:
            report["analyticity_fit"] = {"error": str(error)}
    if "evolution" in names:
        try:
            evolution = evolution_monitors(trajectory.states)
            report["evolution"] = {
                "metric_velocity_sup": evolution.metric_velocity_sup,
                "torsion_c_hat": evolution.torsion_c_hat,
                "torsion_inequality_holds": evolution.torsion_inequality_holds,
                "torsion_growth_constant": evolution.torsion_growth_constant,
                "curvature_growth_constant": evolution.curvature_growth_constant,
                "time_commutator_c_hat": evolution.time_commutator_c_hat,
            }
        except InsufficientTrajectory as error:
            report["evolution"] = {"error": str(error)}
    if "commutator" in names:
        final = trajectory.final
        commutator = commutator_monitor(final.cache.torsion.T, final.cache, 1, final.scheme)
        report["commutator"] = {
            "k": 1,
            "lhs_sup": commutator.lhs_sup,
            "rhs_sup": commutator.rhs_sup,
            "c_hat": commutator.c_hat,
        }
    return report


def _initial_lambda_sup(config: RunConfig, start: typing.Optional[FlowState]) -> float:
    """sup Λ of the configured initial data; rebuilt from the configuration when resuming."""
    if start is None:
        psi = build_initial(config.initial, config.grid.build(), config.flow.scheme)
        start = initial_state(psi, config.flow.A, scheme=config.flow.scheme)
    return lambda_field(start.cache, config.flow.scheme).sup


def execute(config: RunConfig, checkpoint: typing.Optional[Checkpoint] = None, write: bool = True) -> ExecutionResult:
    """
    Run the configured experiment (or resume it from a checkpoint) and write the time series and report

        Parameters:
            config (RunConfig): validated configuration
            checkpoint (Checkpoint): state to resume from; the configured initial data is used when None
            write (bool): whether to write the output files

        Returns:
            result (ExecutionResult): exit code, rows and report; partial outputs on a stability violation
    """
    LabConfig.set_default_scheme(config.flow.scheme)
    LabConfig.set_max_tensor_elements(config.runtime.max_tensor_elements)
    grid = config.grid.build()
    route = "direct" if config.flow.route == "both" else config.flow.route
    if checkpoint is None:
        psi = build_initial(config.initial, grid, config.flow.scheme)
        start = initial_state(psi, config.flow.A, route, config.flow.scheme)
    else:
        start = checkpoint.to_state(grid)
        logger.info("resuming from step %d at t = %g", start.step_index, start.t)

    started = time.perf_counter()
    abort_reason: typing.Optional[str] = None
    exit_code = EXIT_OK
    with concurrent.futures.ThreadPoolExecutor(max_workers=config.runtime.workers) as executor:
        collector = _RowCollector(config, executor, started)
        try:
            if config.flow.route == "both":
                trajectory = _run_both(config, start, collector)
            else:
                trajectory = _run_single(config, start, collector)
                collector.submit(trajectory.final)
        except StabilityViolation as error:
            trajectory = error.trajectory if error.trajectory is not None else FlowTrajectory(states=[start])
            abort_reason = f"{error} (step {error.step_index})"
            exit_code = EXIT_STABILITY
        rows = collector.rows()

    if exit_code == EXIT_OK and config.output.checkpoint_every > 0:
        save_checkpoint(trajectory.final, _checkpoint_path(config), config.flow.integrator)
    M0 = _initial_lambda_sup(config, start if checkpoint is None else None) if "fit" in config.monitors.names else math.nan
    report = _report(config, trajectory, rows, abort_reason, M0)
    if exit_code == EXIT_OK and rows and max(r["dpsi_sup"] for r in rows) > 1e-8:
        exit_code = EXIT_STABILITY
        report["abort_reason"] = "‖dψ‖∞ exceeded 1e-8 along the run"
    if write:
        write_outputs(config, rows, report)
    return ExecutionResult(exit_code, rows, report, trajectory, abort_reason or "")


def write_timeseries(path: pathlib.Path, rows: typing.Sequence[typing.Dict[str, float]]) -> None:
    if not rows:
        return
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(float(value)) for key, value in row.items()})


def write_outputs(config: RunConfig, rows: typing.Sequence[typing.Dict[str, float]], report: typing.Dict[str, typing.Any]) -> None:
    directory = pathlib.Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_timeseries(directory / config.output.timeseries, rows)
    (directory / config.output.report).write_text(json.dumps(report, indent=2, default=str))
    logger.info("wrote %d rows and the report to %s", len(rows), directory)


def read_timeseries(path: pathlib.Path) -> typing.List[typing.Dict[str, float]]:
    with path.open(newline="") as handle:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(handle)]


def fit_timeseries(rows: typing.Sequence[typing.Dict[str, float]]) -> typing.Any:
    """Fit (C, L) from the a_k and b_k columns of every row with t > 0."""
    ks: typing.List[int] = []
    entries: typing.List[float] = []
    for row in rows:
        if row["t"] <= 0:
            continue
        k = 0
        while f"a_{k}" in row and f"b_{k}" in row:
            value = row[f"a_{k}"] + row[f"b_{k}"]
            if not math.isnan(value):
                ks.append(k)
                entries.append(value)
            k += 1
    return fit_entries(ks, entries)


def _load_config(path: str) -> RunConfig:
    return parse_config(pathlib.Path(path).read_text())


def _command_run(args: argparse.Namespace) -> int:
    result = execute(_load_config(args.config))
    if result.exit_code != EXIT_OK:
        logger.error("run failed: %s", result.report.get("abort_reason"))
    return result.exit_code


def _command_resume(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    try:
        checkpoint = load_checkpoint(args.checkpoint)
    except (ChecksumMismatch, VersionMismatch, OSError) as error:
        logger.error("cannot load checkpoint: %s", error)
        return EXIT_CHECKPOINT
    if tuple(checkpoint.dims) != tuple(config.grid.dims):
        logger.error("checkpoint grid %s does not match the configured grid %s", checkpoint.dims, config.grid.dims)
        return EXIT_CHECKPOINT
    if (checkpoint.A, checkpoint.scheme) != (config.flow.A, config.flow.scheme):
        logger.warning("checkpoint A/scheme differ from the configuration; the checkpoint values are used")
    return execute(config, checkpoint).exit_code


def _command_verify(args: argparse.Namespace) -> int:
    results = run_battery()
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_STABILITY


def _command_fit(args: argparse.Namespace) -> int:
    try:
        fit = fit_timeseries(read_timeseries(pathlib.Path(args.timeseries)))
    except InsufficientData as error:
        logger.error("%s", error)
        return EXIT_CONFIG
    print(f"C = {fit.C_fit:.6g}")
    print(f"L = {fit.L_fit:.6g}")
    print(f"C_envelope = {fit.C_envelope:.6g}")
    print(f"consistent = {fit.consistent}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="g2-coflow", description="Modified Laplacian coflow lab on the 7-torus")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)
    run_parser = commands.add_parser("run", help="run a configured experiment")
    run_parser.add_argument("config")
    run_parser.set_defaults(handler=_command_run)
    verify_parser = commands.add_parser("verify", help="run the property battery")
    verify_parser.set_defaults(handler=_command_verify)
    resume_parser = commands.add_parser("resume", help="resume a run from a checkpoint")
    resume_parser.add_argument("checkpoint")
    resume_parser.add_argument("config")
    resume_parser.set_defaults(handler=_command_resume)
    fit_parser = commands.add_parser("fit", help="fit analyticity constants from a time series")
    fit_parser.add_argument("timeseries")
    fit_parser.set_defaults(handler=_command_fit)
    return parser


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return int(args.handler(args))
    except ParseError as error:
        logger.error("configuration error at line %s: %s", error.line, error)
        return EXIT_CONFIG
    except (ValidationError, InvalidArgument, NotPositive, NotCoclosed, OSError) as error:
        logger.error("configuration error: %s", error)
        return EXIT_CONFIG
    except CoflowError as error:
        logger.error("%s", error)
        return EXIT_STABILITY


if __name__ == "__main__":
    sys.exit(main())
