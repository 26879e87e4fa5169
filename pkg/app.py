import os
from itertools import starmap
from multiprocessing import Pool
from pathlib import Path
from typing import Optional

import typer
from dotenv import load_dotenv

from database.schema import HFNetDB
from agents.intake_agent import IntakeAgent
from agents.integration_agent import IntegrationAgent
from agents.compiler_agent import CompilerAgent
from agents.solver_agent import SolverAgent
from agents.verification_agent import VerificationAgent
from agents.governance_agent import GovernanceAgent
from hfgt.errors import CompilationError, HFGTError, ModelValidationError
from hfgt.qp import EPSILON
from hfgt.solver import DEFAULT_MAX_ITER, DEFAULT_TOL, INFEASIBLE, OPTIMAL

load_dotenv()

EXIT_OK = 0
EXIT_REGRESSION = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4

DEFAULT_MODEL = "input/h2_ng_model.json"
DEFAULT_SCENARIOS = "input/scenarios"
DEFAULT_GOLDENS = "input/goldens.json"

app = typer.Typer(add_completion=False, help="Hetero-functional network minimum cost flow: compile, solve, verify, report.")


def default_db_path():
    return os.environ.get("HFNET_DB_PATH", "hfnet.db")


def default_solver():
    return os.environ.get("HFNET_SOLVER", "CLARABEL")


def _diagnostics(error):
    if isinstance(error, CompilationError) and isinstance(error.cause, ModelValidationError):
        error = error.cause
    if isinstance(error, ModelValidationError):
        return [str(d) for d in error.diagnostics]
    return [str(error)]


def _structure(system, problem):
    s = system.structural_report()
    return {
        "sigma_x": problem.report["sigma_x"]["actual"],
        "sigma_A": problem.report["sigma_A"]["actual"],
        "sigma_D": problem.report["sigma_D"]["actual"],
        "capabilities": s["capabilities"],
        "buffers": s["buffers"],
        "system_concept": s["system_concept"]["shape"],
        "system_concept_nnz": s["system_concept"]["nnz"],
        "incidence_shape": s["incidence"]["shape"],
        "incidence_nnz_signed": s["incidence"]["nnz_signed"],
    }


def run_pipeline(model_path, scenario_path, out_dir=None, db_path=None, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITER, solver=None, epsilon=EPSILON, dims_only=False, export_dir=None):
    """
    Intake, build, compile, solve, verify and report one scenario.

    Returns:
        summary dictionary with `exit_code`, `status` and, when solved,
        objective, total CO2 and the verification verdict
    """
    db = HFNetDB(db_path or default_db_path())
    intake = IntakeAgent(db)
    integration = IntegrationAgent(db)
    compiler = CompilerAgent(db)
    solver_agent = SolverAgent(db, solver or default_solver())
    verification = VerificationAgent(db)
    governance = GovernanceAgent(db)

    run_id = db.insert_run(Path(scenario_path).stem, out_dir=str(out_dir) if out_dir else None)
    summary = {
        "run_id": run_id,
        "scenario_id": Path(scenario_path).stem,
        "status": "failed",
        "exit_code": EXIT_VALIDATION,
        "objective": None,
        "total_co2": None,
        "verified": False,
        "message": "",
        "diagnostics": [],
        "dimensions": [],
        "structure": {},
    }

    try:
        model = intake.load_model(model_path, run_id)
        scenario = intake.load_scenario(scenario_path, model, run_id)
        summary["scenario_id"] = scenario.id
        system = integration.build(model, run_id)
        problem = compiler.compile(system, scenario, epsilon, run_id)
    except (HFGTError, OSError) as e:
        summary["status"] = "invalid"
        summary["diagnostics"] = _diagnostics(e)
        summary["message"] = summary["diagnostics"][0] if summary["diagnostics"] else str(e)
        db.update_run(run_id, "invalid", details={"diagnostics": summary["diagnostics"]})
        return summary

    summary["dimensions"] = compiler.dimension_lines(problem)
    summary["structure"] = _structure(system, problem)

    if export_dir:
        compiler.export(problem, export_dir, run_id)

    if dims_only:
        summary["status"] = "dims-only"
        summary["exit_code"] = EXIT_OK
        db.update_run(run_id, "dims-only", details=problem.report)
        return summary

    out_dir = out_dir or os.path.join("out", scenario.id)
    solution = solver_agent.solve(problem, tol=tol, max_iter=max_iter, run_id=run_id)
    summary["status"] = solution.status
    series = report_verification = trajectory = None

    if solution.status == OPTIMAL:
        series = solver_agent.extract(solution, problem, system, run_id)
        report_verification = verification.verify(solution, system, problem, tol=tol, run_id=run_id)
        trajectory = verification.replay_frame(solution, system, problem)
        summary["objective"] = solution.objective
        summary["total_co2"] = series.total_co2
        summary["verified"] = report_verification.passed
        if report_verification.passed:
            summary["exit_code"] = EXIT_OK
        else:
            summary["status"] = "unverified"
            summary["exit_code"] = EXIT_NOT_CONVERGED
            summary["message"] = "solution failed verification at tol"
            summary["diagnostics"] = [
                f"{b['block']}: residual {b['max_residual']:.3g}" for b in report_verification.flagged_blocks[:10]
            ]
    elif solution.status == INFEASIBLE:
        summary["exit_code"] = EXIT_INFEASIBLE
        summary["message"] = solution.message
        summary["diagnostics"] = [
            f"{d['block']}: violation {d['violation']:.6g}" for d in solution.diagnosis[:10]
        ]
    else:
        summary["exit_code"] = EXIT_NOT_CONVERGED
        summary["message"] = solution.message

    report = governance.build_run_report(scenario, problem, solution, series, report_verification, system)
    governance.write_outputs(out_dir, report, series, trajectory, run_id)
    summary["out_dir"] = str(out_dir)

    db.update_run(run_id, summary["status"], summary["objective"], summary["total_co2"], details={
        "solver": solution.stats(),
        "verified": summary["verified"]
    })
    return summary


def _echo_summary(summary):
    for line in summary["dimensions"]:
        typer.echo(line)
    if summary["status"] not in ("invalid", "dims-only"):
        typer.echo(f"status              {summary['status']}")
    if summary["objective"] is not None:
        typer.echo(f"objective           {summary['objective']:,.2f}")
        typer.echo(f"total CO2 [t]       {summary['total_co2']:,.2f}")
    if summary.get("out_dir"):
        typer.echo(f"outputs             {summary['out_dir']}")
    if summary["message"] and summary["status"] != "invalid":
        typer.echo(summary["message"], err=True)
    for line in summary["diagnostics"]:
        typer.echo(line, err=True)


@app.command()
def run(
    scenario: Path = typer.Option(..., "--scenario", help="Scenario document."),
    model: Path = typer.Option(DEFAULT_MODEL, "--model", help="Model document."),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory (default out/<scenario id>)."),
    dims_only: bool = typer.Option(False, "--dims-only", help="Compile and print the dimension block; no solve."),
    export_qp: Optional[Path] = typer.Option(None, "--export-qp", help="Write F, A, D, f, b, e and a manifest here."),
    tol: float = typer.Option(DEFAULT_TOL, "--tol", help="Tolerance on scaled KKT residuals and absolute verification residuals."),
    max_iter: int = typer.Option(DEFAULT_MAX_ITER, "--max-iter", help="Solver iteration limit."),
    solver: Optional[str] = typer.Option(None, "--solver", help="cvxpy solver name (CLARABEL or OSQP)."),
    epsilon: float = typer.Option(EPSILON, "--epsilon", help="Lower bound of the quadratic cost diagonal."),
):
    """Compile, solve, verify and report one scenario."""
    summary = run_pipeline(model, scenario, out, tol=tol, max_iter=max_iter, solver=solver,
                           epsilon=epsilon, dims_only=dims_only, export_dir=export_qp)
    _echo_summary(summary)
    raise typer.Exit(code=summary["exit_code"])


@app.command()
def regress(
    model: Path = typer.Option(DEFAULT_MODEL, "--model"),
    scenarios_dir: Path = typer.Option(DEFAULT_SCENARIOS, "--scenarios-dir"),
    goldens: Path = typer.Option(DEFAULT_GOLDENS, "--goldens"),
    out: Path = typer.Option("out", "--out", help="Parent directory of the per-scenario outputs."),
    freeze: bool = typer.Option(False, "--freeze", help="Store this run as the frozen record."),
    jobs: int = typer.Option(1, "--jobs", help="Worker processes."),
    tol: float = typer.Option(DEFAULT_TOL, "--tol"),
    max_iter: int = typer.Option(DEFAULT_MAX_ITER, "--max-iter"),
    solver: Optional[str] = typer.Option(None, "--solver"),
    epsilon: float = typer.Option(EPSILON, "--epsilon"),
):
    """Run every scenario and compare with the golden results."""
    db = HFNetDB(default_db_path())
    governance = GovernanceAgent(db)
    paths = IntakeAgent(db).find_scenarios(scenarios_dir)
    if not paths:
        typer.echo(f"no scenario documents in {scenarios_dir}", err=True)
        raise typer.Exit(code=EXIT_VALIDATION)

    jobs_args = [
        (str(model), path, str(Path(out) / Path(path).stem), default_db_path(), tol, max_iter,
         solver or default_solver(), epsilon)
        for path in paths
    ]
    if jobs > 1:
        with Pool(jobs) as pool:
            summaries = pool.starmap(run_pipeline, jobs_args)
    else:
        summaries = list(starmap(run_pipeline, jobs_args))
    results = {s["scenario_id"]: s for s in summaries}

    golden_data = governance.load_goldens(goldens)
    rows = governance.regression_rows(results, golden_data)
    for line in governance.format_table(rows):
        typer.echo(line)
    for s in summaries:
        for line in s["diagnostics"]:
            typer.echo(f"{s['scenario_id']}: {line}", err=True)

    never_frozen = not any(e.get("frozen") for e in golden_data.get("scenarios", {}).values())
    if all(r["passed"] for r in rows) and (freeze or never_frozen):
        governance.freeze_goldens(goldens, results)
        typer.echo(f"frozen results written to {goldens}")

    if all(r["passed"] for r in rows):
        raise typer.Exit(code=EXIT_OK)
    failing = [s["exit_code"] for s in summaries if s["exit_code"] != EXIT_OK]
    raise typer.Exit(code=max(failing) if failing else EXIT_REGRESSION)


@app.command()
def inspect(
    model: Path = typer.Option(DEFAULT_MODEL, "--model"),
    out: Path = typer.Option("out/inspect", "--out"),
):
    """Export the nets as DOT, the incidence tensors as coordinate lists and the structural report."""
    db = HFNetDB(default_db_path())
    try:
        document = IntakeAgent(db).load_model(model)
        integration = IntegrationAgent(db)
        system = integration.build(document)
    except (HFGTError, OSError) as e:
        for line in _diagnostics(e):
            typer.echo(line, err=True)
        raise typer.Exit(code=EXIT_VALIDATION)

    report = system.structural_report()
    written = integration.export_nets(system, out)
    typer.echo(f"system concept      {report['system_concept']['shape']} with {report['system_concept']['nnz']} nonzeros")
    typer.echo(f"incidence tensors   {report['incidence']['shape']}")
    typer.echo(f"  {report['incidence']['note']}")
    typer.echo(f"service nets        {report['service']['nets']} ({report['service']['places']} places, "
               f"{report['service']['transitions']} transitions)")
    typer.echo(f"wrote {len(written)} files to {out}")


@app.command()
def history(
    limit: int = typer.Option(20, "--limit"),
    scenario: Optional[str] = typer.Option(None, "--scenario"),
):
    """List recent runs."""
    runs = GovernanceAgent(HFNetDB(default_db_path())).history(limit, scenario)
    typer.echo(f"{'run':>5} {'scenario':<12} {'status':<15} {'objective':>16} {'CO2 [t]':>12}  started")
    for r in runs:
        objective = f"{r['objective']:>16,.2f}" if r['objective'] is not None else f"{'-':>16}"
        co2 = f"{r['total_co2']:>12,.2f}" if r['total_co2'] is not None else f"{'-':>12}"
        typer.echo(f"{r['run_id']:>5} {r['scenario_id']:<12} {r['status']:<15} {objective} {co2}  {r['started_at']}")


if __name__ == "__main__":
    app()
