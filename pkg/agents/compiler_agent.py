from database.schema import HFNetDB
from hfgt.qp import EPSILON, compile_problem, export_qp

class CompilerAgent:
    """
    Compiler Agent

    Composes a scenario with the engineering system into the sparse QP
    and reconciles its dimensions with the closed-form identities.
    """

    def __init__(self, db: HFNetDB):
        self.db = db
        self.agent_name = "Compiler Agent"

    def compile(self, system, scenario, epsilon=EPSILON, run_id=None):
        """
        Compile one scenario

        Args:
            system: EngineeringSystem from the Integration Agent
            scenario: ScenarioDocument from the Intake Agent
            epsilon: lower bound of the quadratic cost diagonal
            run_id: Run the audit entries belong to

        Returns:
            QPProblem; its `report` holds the dimension block
        """
        try:
            problem = compile_problem(system, scenario, epsilon)

            self.db.log_audit(self.agent_name, "QP_COMPILED", run_id, {
                "scenario_id": scenario.id,
                "sigma_x": problem.report["sigma_x"]["actual"],
                "sigma_A": problem.report["sigma_A"]["actual"],
                "sigma_D": problem.report["sigma_D"]["actual"],
                "nnz": problem.report["nnz"]
            })

            return problem

        except Exception as e:
            self.db.log_audit(self.agent_name, "QP_COMPILE_ERROR", run_id, {
                "scenario_id": scenario.id,
                "stage": getattr(e, 'stage', None),
                "error": str(e)
            })
            raise e

    def export(self, problem, out_dir, run_id=None):
        """Write the QP in MatrixMarket / coordinate-list form"""
        try:
            directory = export_qp(problem, out_dir)

            self.db.log_audit(self.agent_name, "QP_EXPORTED", run_id, {
                "out_dir": str(directory),
                "size": problem.layout.size
            })

            return directory

        except Exception as e:
            self.db.log_audit(self.agent_name, "QP_EXPORT_ERROR", run_id, {
                "out_dir": str(out_dir),
                "error": str(e)
            })
            raise e

    def dimension_lines(self, problem):
        """Human-readable dimension block for --dims-only"""
        report = problem.report
        sizes = report["sizes"]
        lines = [
            f"scenario            {report['scenario']}",
            f"horizon K           {report['horizon']}",
            f"operands            {sizes['operands']}",
            f"buffers             {sizes['buffers']}",
            f"capabilities        {sizes['capabilities']}",
            f"service places      {sizes['service_places']}",
            f"service transitions {sizes['service_transitions']}",
            f"sigma(x)            {report['sigma_x']['actual']} (formula {report['sigma_x']['formula']})",
            f"sigma(A)            {report['sigma_A']['actual']} (formula {report['sigma_A']['formula']})",
            f"sigma(D)            {report['sigma_D']['actual']} (formula {report['sigma_D']['formula']})",
        ]
        for name, block in report["sigma_A"]["blocks"].items():
            if block["delta"]:
                lines.append(f"  {name}: {block['actual']} rows, formula {block['formula']}")
        pinned = report["sigma_A"]["pinned_duration_rows"]
        if pinned:
            lines.append(f"  duration rows pinned to U-=0: {len(pinned)}")
        return lines
