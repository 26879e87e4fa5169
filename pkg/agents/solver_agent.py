from database.schema import HFNetDB
from hfgt.solver import DEFAULT_MAX_ITER, DEFAULT_TOL, INFEASIBLE, diagnose_infeasibility, extract, solve

class SolverAgent:
    """
    Solver Agent

    Solves the compiled QP, explains infeasible ones and turns optimal
    points into per-entity time series.
    """

    def __init__(self, db: HFNetDB, solver="CLARABEL"):
        self.db = db
        self.agent_name = "Solver Agent"
        self.solver = solver

    def solve(self, problem, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, run_id=None):
        """
        Solve one QP; an infeasible one is diagnosed before returning

        Returns:
            Solution
        """
        try:
            solution = solve(problem, tol=tol, max_iter=max_iter, solver=self.solver)

            self.db.log_audit(self.agent_name, "QP_SOLVED", run_id, {
                "scenario_id": problem.report.get("scenario"),
                **solution.stats(),
                "objective": solution.objective
            })

            if solution.status == INFEASIBLE:
                solution.diagnosis = self.diagnose(problem, run_id)

            return solution

        except Exception as e:
            self.db.log_audit(self.agent_name, "QP_SOLVE_ERROR", run_id, {
                "scenario_id": problem.report.get("scenario"),
                "error": str(e)
            })
            raise e

    def diagnose(self, problem, run_id=None):
        """Attribute infeasibility to row blocks, largest violation first"""
        try:
            findings = diagnose_infeasibility(problem, solver=self.solver)

            self.db.log_audit(self.agent_name, "INFEASIBILITY_DIAGNOSED", run_id, {
                "scenario_id": problem.report.get("scenario"),
                "blocks": findings[:10]
            })

            return findings

        except Exception as e:
            self.db.log_audit(self.agent_name, "INFEASIBILITY_DIAGNOSIS_ERROR", run_id, {
                "error": str(e)
            })
            raise e

    def extract(self, solution, problem, system, run_id=None):
        """
        Buffer stocks, firings, CO2 per resource, balances and costs

        Returns:
            SolutionSeries
        """
        try:
            series = extract(solution, problem, system)

            self.db.log_audit(self.agent_name, "SERIES_EXTRACTED", run_id, {
                "total_co2": series.total_co2,
                "balances": [label for label in series.balances]
            })

            return series

        except Exception as e:
            self.db.log_audit(self.agent_name, "SERIES_EXTRACT_ERROR", run_id, {
                "error": str(e)
            })
            raise e
