import json
import os
import numpy as np
from database.schema import HFNetDB
from hfgt.incidence import export_coordinates
from hfgt.petri import PlaceTransitionNet, to_dot
from hfgt.system import build_engineering_system

class IntegrationAgent:
    """
    Integration Agent

    Turns a validated model document into the engineering system:
    system concept, capabilities, incidence tensors, the color-split
    engineering system net and the stacked service nets.
    """

    def __init__(self, db: HFNetDB):
        self.db = db
        self.agent_name = "Integration Agent"

    def build(self, model, run_id=None):
        """
        Build the engineering system of a model

        Args:
            model: ModelDocument from the Intake Agent
            run_id: Run the audit entries belong to

        Returns:
            EngineeringSystem
        """
        try:
            system = build_engineering_system(model)
            report = system.structural_report()

            self.db.log_audit(self.agent_name, "SYSTEM_BUILT", run_id, {
                "model": model.name,
                "system_concept": report["system_concept"],
                "capabilities": report["capabilities"],
                "incidence": {
                    "shape": report["incidence"]["shape"],
                    "nnz_joint": report["incidence"]["nnz_joint"],
                    "nnz_signed": report["incidence"]["nnz_signed"]
                }
            })

            return system

        except Exception as e:
            self.db.log_audit(self.agent_name, "SYSTEM_BUILD_ERROR", run_id, {
                "model": getattr(model, 'name', 'unknown'),
                "error": str(e)
            })
            raise e

    def export_nets(self, system, out_dir, run_id=None):
        """
        Write DOT files of every net, coordinate lists of the incidence
        tensors and the structural report

        Returns:
            List of written file paths
        """
        os.makedirs(out_dir, exist_ok=True)
        written = []

        try:
            path = os.path.join(out_dir, "esn.dot")
            with open(path, 'w') as f:
                f.write(to_dot(system.ptn, name="engineering_system_net"))
            written.append(path)

            for net in system.service_nets:
                ptn = PlaceTransitionNet(
                    places=net.places,
                    transitions=net.transitions,
                    m_plus=net.m_plus,
                    m_minus=net.m_minus,
                    durations=np.zeros(len(net.transitions), dtype=np.int64)
                )
                path = os.path.join(out_dir, f"service_{net.operand}.dot")
                with open(path, 'w') as f:
                    f.write(to_dot(ptn, name=f"service_{net.operand}"))
                written.append(path)

            labels = {
                "operands": system.operands,
                "buffers": system.buffers,
                "capabilities": system.capabilities
            }
            for name, tensor in (
                ("incidence_plus", system.tensors[0]),
                ("incidence_minus", system.tensors[1]),
                ("refined_plus", system.refined[0]),
                ("refined_minus", system.refined[1])
            ):
                path = os.path.join(out_dir, f"{name}.txt")
                export_coordinates(tensor, path, **labels)
                written.append(path)

            path = os.path.join(out_dir, "capabilities.csv")
            system.capability_frame().to_csv(path, index=False)
            written.append(path)

            path = os.path.join(out_dir, "structure.json")
            with open(path, 'w') as f:
                json.dump(system.structural_report(), f, indent=2)
            written.append(path)

            self.db.log_audit(self.agent_name, "NETS_EXPORTED", run_id, {
                "out_dir": str(out_dir),
                "files": len(written)
            })

            return written

        except Exception as e:
            self.db.log_audit(self.agent_name, "NETS_EXPORT_ERROR", run_id, {
                "out_dir": str(out_dir),
                "error": str(e)
            })
            raise e
