import json
import os
from datetime import datetime
from database.schema import HFNetDB

FLOAT_FORMAT = "%.10g"

class GovernanceAgent:
    """
    Governance Agent

    Assembles the run report, writes every output file atomically, keeps
    the golden results and renders the regression table and run history.
    """

    def __init__(self, db: HFNetDB):
        self.db = db
        self.agent_name = "Governance Agent"

    def build_run_report(self, scenario, problem, solution=None, series=None, verification=None, system=None):
        """
        Collect everything known about a run into one dictionary

        Returns:
            RunReport dictionary; deterministic for identical inputs
        """
        report = {
            'scenario_id': scenario.id,
            'scenario_name': scenario.name,
            'model': system.document.name if system is not None else None,
            'dimensions': problem.report,
            'structure': system.structural_report() if system is not None else None
        }

        if solution is not None:
            stats = solution.stats()
            # wall-clock time would break byte-stable reports
            stats.pop('solve_time', None)
            report['status'] = solution.status
            report['objective'] = solution.objective
            report['solver'] = stats
            report['diagnosis'] = solution.diagnosis

        if series is not None:
            co2 = series.co2_by_resource
            report['total_co2'] = series.total_co2
            report['co2_by_resource'] = {
                row['resource']: [float(v) for v in row.drop(labels=['resource', 'total'])]
                for _, row in co2.iterrows()
            }
            report['balances'] = {
                label: frame.to_dict(orient='records') for label, frame in series.balances.items()
            }
            report['cost_breakdown'] = {
                'capabilities': float(series.costs['total'].sum()),
                'regularization': series.regularization
            }

        if verification is not None:
            report['verification'] = verification.to_dict()

        return report

    def write_outputs(self, out_dir, report, series=None, trajectory=None, run_id=None):
        """
        Write run_report.json, objective.txt and the CSV tables

        Every file is written to a temporary name and renamed into place,
        so a reader sees the complete file or none.

        Returns:
            List of written file paths
        """
        os.makedirs(out_dir, exist_ok=True)
        written = []

        try:
            if series is not None:
                tables = {
                    'co2_by_resource.csv': series.co2_by_resource,
                    'buffer_stocks.csv': series.buffer_stocks,
                    'firings.csv': series.firings,
                    'costs.csv': series.costs
                }
                for label, frame in series.balances.items():
                    tables[f'{label}_balance.csv'] = frame
                if trajectory is not None:
                    tables['trajectory.csv'] = trajectory

                for filename, frame in tables.items():
                    path = os.path.join(out_dir, filename)
                    self._atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))
                    written.append(path)

            if report.get('objective') is not None:
                path = os.path.join(out_dir, 'objective.txt')
                self._atomic_write_text(path, f"{report['objective']:.2f}\n")
                written.append(path)

            path = os.path.join(out_dir, 'run_report.json')
            self._atomic_write_json(path, report)
            written.append(path)

            self.db.log_audit(self.agent_name, "REPORT_WRITTEN", run_id, {
                "out_dir": str(out_dir),
                "files": [os.path.basename(p) for p in written]
            })

            return written

        except Exception as e:
            self.db.log_audit(self.agent_name, "REPORT_WRITE_ERROR", run_id, {
                "out_dir": str(out_dir),
                "error": str(e)
            })
            raise e

    def _atomic_write_text(self, path, text):
        tmp = f"{path}.tmp"
        with open(tmp, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    def _atomic_write_json(self, path, obj):
        self._atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def load_goldens(self, goldens_path):
        """Published targets, reference structure and frozen results"""
        with open(goldens_path, 'r') as f:
            return json.load(f)

    def freeze_goldens(self, goldens_path, results):
        """
        Store the outcome of an all-optimal regression as the frozen record

        Args:
            goldens_path: Path to goldens.json
            results: run summaries keyed by scenario id
        """
        try:
            goldens = self.load_goldens(goldens_path)
            frozen_at = datetime.now().isoformat(timespec='seconds')
            for scenario_id, result in results.items():
                entry = goldens.setdefault('scenarios', {}).setdefault(scenario_id, {})
                entry['frozen'] = {
                    'objective': result['objective'],
                    'total_co2': result['total_co2'],
                    'frozen_at': frozen_at
                }
            self._atomic_write_json(goldens_path, goldens)

            self.db.log_audit(self.agent_name, "GOLDENS_FROZEN", None, {
                "goldens": str(goldens_path),
                "scenarios": sorted(results)
            })

            return goldens

        except Exception as e:
            self.db.log_audit(self.agent_name, "GOLDENS_FREEZE_ERROR", None, {
                "error": str(e)
            })
            raise e

    def regression_rows(self, results, goldens):
        """
        Compare run summaries with the goldens

        A row passes when the run is optimal and verified, its structure
        matches the reference, objective and CO2 lie within published_rel of
        the published targets (within published_abs of a zero target) and,
        when a frozen record exists, agree with it.
        """
        tolerance = goldens.get('tolerance', {})
        published_rel = tolerance.get('published_rel', 1e-2)
        published_abs = tolerance.get('published_abs', 1.0)
        frozen_rel = tolerance.get('frozen_rel', 1e-4)
        frozen_abs = tolerance.get('frozen_abs', 1e-2)
        reference = goldens.get('structure', {})
        rows = []

        for scenario_id in sorted(results):
            result = results[scenario_id]
            entry = goldens.get('scenarios', {}).get(scenario_id, {})
            published = entry.get('published', {})
            frozen = entry.get('frozen')
            objective, total_co2 = result.get('objective'), result.get('total_co2')
            reasons = []

            if result['status'] != 'optimal' or not result.get('verified', False):
                reasons.append(result.get('message') or result['status'])
            structure = result.get('structure', {})
            for key, expected in reference.items():
                if key in structure and structure[key] != expected:
                    reasons.append(f"{key} {structure[key]} != {expected}")

            if objective is not None:
                for key, value in (('objective', objective), ('total_co2', total_co2)):
                    target = published.get(key)
                    if target is None:
                        continue
                    allowed = published_abs if target == 0 else published_rel * abs(target)
                    if abs(value - target) > allowed:
                        reasons.append(f"{key} {value:.2f} != published {target:.2f}")

            if frozen and objective is not None:
                for key, value in (('objective', objective), ('total_co2', total_co2)):
                    target = frozen[key]
                    if abs(value - target) > frozen_abs + frozen_rel * abs(target):
                        reasons.append(f"{key} {value:.2f} != frozen {target:.2f}")

            rows.append({
                'scenario': scenario_id,
                'status': result['status'],
                'objective': objective,
                'total_co2': total_co2,
                'published_objective': published.get('objective'),
                'objective_deviation': _relative(objective, published.get('objective')),
                'published_co2': published.get('total_co2'),
                'co2_deviation': _relative(total_co2, published.get('total_co2')),
                'compared_to': '+'.join(name for name, ref in (('published', published), ('frozen', frozen)) if ref) or 'none',
                'passed': not reasons,
                'reasons': reasons
            })

        self.db.log_audit(self.agent_name, "REGRESSION_COMPLETED", None, {
            "passed": sum(1 for r in rows if r['passed']),
            "total": len(rows),
            "failed": [r['scenario'] for r in rows if not r['passed']]
        })

        return rows

    def format_table(self, rows):
        """Fixed-width regression table"""
        header = f"{'scenario':<12} {'status':<15} {'objective':>16} {'vs pub.':>9} {'CO2 [t]':>12} {'vs pub.':>9}  result"
        lines = [header, '-' * len(header)]
        for r in rows:
            lines.append(
                f"{r['scenario']:<12} {r['status']:<15} {_fmt(r['objective'], 16)} {_pct(r['objective_deviation'])} "
                f"{_fmt(r['total_co2'], 12)} {_pct(r['co2_deviation'])}  {'PASS' if r['passed'] else 'FAIL'}"
            )
            for reason in r['reasons']:
                lines.append(f"    {reason}")
        lines.append(f"{sum(1 for r in rows if r['passed'])}/{len(rows)} pass")
        return lines

    def history(self, limit=20, scenario_id=None):
        """Recent runs, newest first"""
        runs = []
        for row in self.db.get_runs(limit=limit, scenario_id=scenario_id):
            runs.append({
                'run_id': row[0],
                'scenario_id': row[1],
                'model': row[2],
                'status': row[3],
                'objective': row[4],
                'total_co2': row[5],
                'out_dir': row[6],
                'started_at': row[7],
                'finished_at': row[8]
            })
        return runs


def _relative(value, target):
    if value is None or target is None:
        return None
    if target == 0:
        return abs(value)
    return (value - target) / abs(target)


def _fmt(value, width):
    return f"{value:>{width},.2f}" if value is not None else f"{'-':>{width}}"


def _pct(value):
    return f"{value * 100:>8.1f}%" if value is not None else f"{'-':>9}"


def _json_default(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"not serializable: {type(value).__name__}")
