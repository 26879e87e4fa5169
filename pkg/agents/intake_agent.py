import os
from database.schema import HFNetDB
from hfgt.errors import ModelValidationError
from hfgt.model_io import load_model, load_scenario

class IntakeAgent:
    """
    Data Intake Agent

    Reads the model and scenario documents and validates them.
    Every problem in a document is reported at once, with its line and column.
    """

    def __init__(self, db: HFNetDB):
        self.db = db
        self.agent_name = "Intake Agent"

    def load_model(self, model_path, run_id=None):
        """
        Parse and cross-reference a model document

        Args:
            model_path: Path to the model JSON file
            run_id: Run the audit entries belong to

        Returns:
            ModelDocument
        """
        try:
            model = load_model(model_path)

            self.db.log_audit(self.agent_name, "MODEL_LOADED", run_id, {
                "source_file": str(model_path),
                "name": model.name,
                "operands": len(model.operands),
                "resources": len(model.resources),
                "capabilities": len(model.capabilities),
                "service_nets": len(model.service_nets)
            })

            return model

        except ModelValidationError as e:
            self.db.log_audit(self.agent_name, "MODEL_LOAD_ERROR", run_id, {
                "source_file": str(model_path),
                "diagnostics": [d.to_dict() for d in e.diagnostics]
            })
            raise e
        except Exception as e:
            self.db.log_audit(self.agent_name, "MODEL_LOAD_ERROR", run_id, {
                "source_file": str(model_path),
                "error": str(e)
            })
            raise e

    def load_scenario(self, scenario_path, model=None, run_id=None):
        """
        Parse a scenario document, checked against the model when given

        Args:
            scenario_path: Path to the scenario JSON file
            model: ModelDocument whose capability ids the series must name
            run_id: Run the audit entries belong to

        Returns:
            ScenarioDocument
        """
        try:
            scenario = load_scenario(scenario_path, model)

            self.db.log_audit(self.agent_name, "SCENARIO_LOADED", run_id, {
                "source_file": str(scenario_path),
                "scenario_id": scenario.id,
                "horizon": scenario.horizon,
                "supply_series": len(scenario.supply),
                "demand_series": len(scenario.demand),
                "carbon_prices": dict(scenario.carbon_prices)
            })

            return scenario

        except ModelValidationError as e:
            self.db.log_audit(self.agent_name, "SCENARIO_LOAD_ERROR", run_id, {
                "source_file": str(scenario_path),
                "diagnostics": [d.to_dict() for d in e.diagnostics]
            })
            raise e
        except Exception as e:
            self.db.log_audit(self.agent_name, "SCENARIO_LOAD_ERROR", run_id, {
                "source_file": str(scenario_path),
                "error": str(e)
            })
            raise e

    def find_scenarios(self, scenarios_dir):
        """List scenario files of a directory in name order"""
        if not os.path.exists(scenarios_dir):
            return []

        return [
            os.path.join(scenarios_dir, filename)
            for filename in sorted(os.listdir(scenarios_dir))
            if filename.endswith('.json')
        ]
