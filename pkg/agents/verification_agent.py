from database.schema import HFNetDB
from hfgt.petri import simulate, trajectory_frame, FiringSchedule, Marking
from hfgt.solver import DEFAULT_TOL, verify

class VerificationAgent:
    """
    Verification Agent (Residuals + Petri-net replay)

    Re-checks every constraint family of a returned point and replays its
    firings through the engineering system net and the service nets.
    A point is only accepted when every check holds at the tolerance.
    """

    def __init__(self, db: HFNetDB):
        self.db = db
        self.agent_name = "Verification Agent"

    def verify(self, solution, system, problem, tol=DEFAULT_TOL, run_id=None):
        """
        Args:
            solution: Solution from the Solver Agent
            system: EngineeringSystem the problem was compiled from
            problem: QPProblem
            tol: acceptance tolerance on absolute residuals

        Returns:
            VerificationReport
        """
        try:
            report = verify(solution, system, problem, tol=tol)

            self.db.log_audit(self.agent_name, "SOLUTION_VERIFIED", run_id, {
                "passed": report.passed,
                "equality_residual": report.equality_residual,
                "inequality_violation": report.inequality_violation,
                "sync_residual": report.sync_residual,
                "simulator_error": report.simulator_error,
                "duration_violations": len(report.duration_violations),
                "flagged_blocks": [b["block"] for b in report.flagged_blocks[:10]]
            })

            return report

        except Exception as e:
            self.db.log_audit(self.agent_name, "SOLUTION_VERIFY_ERROR", run_id, {
                "error": str(e)
            })
            raise e

    def replay_frame(self, solution, system, problem):
        """Long (step, kind, name, value) table of the replayed engineering system net"""
        lay = problem.layout
        u_minus = lay.series(solution.x, "u_minus").clip(min=0.0)
        u_plus = lay.series(solution.x, "u_plus").clip(min=0.0)
        q0 = Marking(
            lay.series(solution.x, "q_b")[0].clip(min=0.0),
            lay.series(solution.x, "q_e")[0].clip(min=0.0)
        )
        trajectory = simulate(system.ptn, FiringSchedule(u_minus, u_plus), q0, lay.horizon, tol=float("inf"))
        return trajectory_frame(trajectory, system.ptn)
