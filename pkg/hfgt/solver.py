"""
Solve, extract and verify.

The QP goes to cvxpy (Clarabel by default, OSQP as an alternative). The
returned point is snapped onto its active set, judged by its own scaled
KKT residuals rather than the backend's status alone, and verification
replays it through the Petri-net simulator in absolute terms.
"""

from dataclasses import asdict, dataclass, field
from typing import Optional

import cvxpy as cp
import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import linalg as spla

from hfgt.petri import FiringSchedule, Marking, PlaceTransitionNet, check_duration, simulate
from hfgt.qp import QPProblem
from hfgt.service import sync_residual

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible"

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10000

# rows are met to this many ulps of the point's magnitude after polishing
POLISH_ULPS = 16
POLISH_ROUNDS = 6
REFINE_STEPS = 4

# elastic slack above this, relative to 1 + ‖b‖∞, means the rows cannot all hold
INFEASIBLE_SLACK = 1e-7

_BACKEND_INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE)


def _solver_options(name, tol, max_iter):
    inner = tol * 1e-2
    if name == "CLARABEL":
        return {"max_iter": max_iter, "tol_feas": inner, "tol_gap_abs": inner, "tol_gap_rel": inner}
    if name == "OSQP":
        return {"max_iter": max_iter, "eps_abs": inner, "eps_rel": inner, "polish": True}
    return {"max_iters": max_iter}


@dataclass
class KKTResiduals:
    primal: float
    dual: float
    gap: float

    def worst(self):
        return max(self.primal, self.dual, self.gap)


_NO_RESIDUALS = (float("inf"),) * 3


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    status: str
    kkt: KKTResiduals
    solver: str
    iterations: Optional[int] = None
    solve_time: Optional[float] = None
    backend_status: str = ""
    message: str = ""
    diagnosis: list = field(default_factory=list)
    polished: bool = False

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def stats(self):
        return {
            "status": self.status,
            "backend_status": self.backend_status,
            "solver": self.solver,
            "iterations": self.iterations,
            "solve_time": self.solve_time,
            "kkt": asdict(self.kkt),
            "polished": self.polished,
            "message": self.message,
        }


def _inf_norm(v):
    return float(np.max(np.abs(v))) if len(v) else 0.0


def primal_scale(qp: QPProblem, x):
    return 1.0 + max(_inf_norm(x), _inf_norm(qp.b))


def kkt_residuals(qp: QPProblem, x, y, mu, nu, objective):
    """
    Scaled primal infeasibility, stationarity and complementarity.

    The sign convention of equality duals differs between backends, so
    both signs are tried and the smaller stationarity residual is kept.
    """
    x = np.asarray(x, dtype=float)
    r_eq = qp.A @ x - qp.b
    r_in = np.maximum(qp.D @ x - qp.e, 0.0)
    r_nn = np.maximum(-x, 0.0)
    primal = max(_inf_norm(r_eq), _inf_norm(r_in), _inf_norm(r_nn)) / primal_scale(qp, x)

    if y is None or mu is None or nu is None:
        return KKTResiduals(primal, float("inf"), float("inf"))
    y, mu, nu = (np.asarray(v, dtype=float).reshape(-1) for v in (y, mu, nu))
    grad = 2.0 * (qp.F @ x) + qp.f
    a_ty = qp.A.T @ y if len(y) else np.zeros_like(x)
    d_tmu = qp.D.T @ mu if len(mu) else np.zeros_like(x)
    stationarity = min(_inf_norm(grad + s * a_ty + d_tmu - nu) for s in (1.0, -1.0))
    dual_scale = 1.0 + max(_inf_norm(grad), _inf_norm(a_ty), _inf_norm(d_tmu), _inf_norm(nu))
    sign_violation = max(0.0, -float(mu.min()) if len(mu) else 0.0, -float(nu.min()) if len(nu) else 0.0)
    dual = max(stationarity, sign_violation) / dual_scale

    slack = qp.e - qp.D @ x
    complementarity = abs(float(mu @ slack)) + abs(float(nu @ x))
    gap = complementarity / (1.0 + abs(objective))
    return KKTResiduals(primal, dual, gap)


def _refine(rows, rhs, x, free, target):
    """Least-norm corrections on the free entries until every row is met to target."""
    columns = np.flatnonzero(free)
    block = rows[:, columns].tocsr()
    for _ in range(REFINE_STEPS):
        r = rhs - rows @ x
        if _inf_norm(r) <= target or not len(columns):
            break
        x[columns] += spla.lsqr(block, r, atol=1e-15, btol=1e-15, conlim=1e16)[0]
    return x


def polish(qp: QPProblem, x, mu=None, nu=None):
    """
    Snap an interior point onto its active set.

    A bound is active when its dual exceeds the value, an inequality row when
    its dual exceeds the slack. Active entries are set to zero and the rest
    get the least-norm correction meeting A x = b and the active rows exactly.
    Entries the correction drives negative join the active set and the
    correction is repeated.

    Args:
        qp: compiled problem
        x: returned point
        mu: inequality duals, or None
        nu: bound duals, or None

    Returns:
        (x, active bounds, active rows), or None when no round gives a
        point inside the bounds and the inactive rows
    """
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    target = POLISH_ULPS * np.finfo(float).eps * primal_scale(qp, x)
    nu = np.zeros_like(x) if nu is None else np.maximum(np.asarray(nu, dtype=float).reshape(-1), 0.0)
    slack = qp.e - qp.D @ x
    mu = np.zeros_like(slack) if mu is None else np.maximum(np.asarray(mu, dtype=float).reshape(-1), 0.0)
    fixed = (x <= nu) | (x <= target)
    active = (slack <= mu) | (slack <= target)

    for _ in range(POLISH_ROUNDS):
        x[fixed] = 0.0
        rows = sparse.vstack([qp.A, qp.D[np.flatnonzero(active)]], format="csr")
        rhs = np.concatenate([qp.b, qp.e[active]])
        x = _refine(rows, rhs, x, ~fixed, target)
        negative = ~fixed & (x < -target)
        violated = ~active & (qp.D @ x > qp.e + target)
        if not negative.any() and not violated.any():
            return np.maximum(x, 0.0), fixed, active
        fixed |= negative
        active |= violated
    return None


def _polished(qp, x, y, mu, nu, residuals, tol):
    """Polished point and its residuals when the polish does not worsen the point, else None."""
    result = polish(qp, x, mu, nu)
    if result is None:
        return None
    x_p, fixed, active = result
    mu_p = np.where(active, np.maximum(mu, 0.0), 0.0) if len(mu) else mu
    nu_p = np.where(fixed, np.maximum(nu, 0.0), 0.0)
    polished = kkt_residuals(qp, x_p, y, mu_p, nu_p, qp.objective(x_p))
    if polished.primal > residuals.primal or polished.worst() > max(residuals.worst(), tol):
        return None
    return x_p, polished


def solve(qp: QPProblem, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, solver="CLARABEL"):
    """
    Args:
        qp: compiled problem
        tol: acceptance tolerance on the scaled KKT residuals
        max_iter: backend iteration limit
        solver: cvxpy solver name

    Returns:
        Solution; `status` is optimal only when every residual is below tol
    """
    n = qp.layout.size
    x = cp.Variable(n)
    objective = cp.Minimize(cp.quad_form(x, qp.F, assume_PSD=True) + qp.f @ x)
    constraints = []
    eq = ineq = None
    if qp.A.shape[0]:
        eq = qp.A @ x == qp.b
        constraints.append(eq)
    if qp.D.shape[0]:
        ineq = qp.D @ x <= qp.e
        constraints.append(ineq)
    nonneg = x >= 0
    constraints.append(nonneg)
    problem = cp.Problem(objective, constraints)

    name = solver.upper()
    try:
        problem.solve(solver=name, verbose=False, **_solver_options(name, tol, max_iter))
    except cp.error.SolverError as e:
        # a backend that gives up without a certificate: the elastic program decides
        diagnosis = diagnose_infeasibility(qp, solver=name)
        status = INFEASIBLE if diagnosis else MAX_ITERATIONS
        return Solution(np.zeros(n), float("nan"), status, KKTResiduals(*_NO_RESIDUALS),
                        name, backend_status="solver_error", message=str(e), diagnosis=diagnosis)

    stats = problem.solver_stats
    iterations = getattr(stats, "num_iters", None) if stats else None
    solve_time = getattr(stats, "solve_time", None) if stats else None
    backend = str(problem.status)

    if problem.status in _BACKEND_INFEASIBLE:
        return Solution(np.zeros(n), float("nan"), INFEASIBLE, KKTResiduals(*_NO_RESIDUALS),
                        name, iterations, solve_time, backend,
                        message=f"backend reported {backend}")
    if x.value is None:
        return Solution(np.zeros(n), float("nan"), MAX_ITERATIONS, KKTResiduals(*_NO_RESIDUALS),
                        name, iterations, solve_time, backend, message="no point returned")

    x_star = np.asarray(x.value, dtype=float)
    y = np.asarray(eq.dual_value, dtype=float).reshape(-1) if eq is not None else np.zeros(0)
    mu = np.asarray(ineq.dual_value, dtype=float).reshape(-1) if ineq is not None else np.zeros(0)
    nu = np.asarray(nonneg.dual_value, dtype=float).reshape(-1)
    residuals = kkt_residuals(qp, x_star, y, mu, nu, qp.objective(x_star))

    polished = _polished(qp, x_star, y, mu, nu, residuals, tol)
    if polished is not None:
        x_star, residuals = polished
    value = qp.objective(x_star)

    accepted = problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and residuals.worst() < tol
    message = "" if accepted else f"residuals {residuals.worst():.3g} above tol {tol:g} ({backend})"
    return Solution(x_star, value, OPTIMAL if accepted else MAX_ITERATIONS, residuals,
                    name, iterations, solve_time, backend, message, polished=polished is not None)


def diagnose_infeasibility(qp: QPProblem, solver="CLARABEL"):
    """
    Elastic program: every row may be violated at unit price. The slack
    mass is summed per row block, largest first; an empty list means the
    rows can all hold.
    """
    n, m_eq, m_in = qp.layout.size, qp.A.shape[0], qp.D.shape[0]
    x = cp.Variable(n, nonneg=True)
    over = cp.Variable(m_eq, nonneg=True)
    under = cp.Variable(m_eq, nonneg=True)
    excess = cp.Variable(m_in, nonneg=True)
    constraints = []
    if m_eq:
        constraints.append(qp.A @ x + over - under == qp.b)
    if m_in:
        constraints.append(qp.D @ x - excess <= qp.e)
    problem = cp.Problem(cp.Minimize(cp.sum(over) + cp.sum(under) + cp.sum(excess)), constraints)
    try:
        problem.solve(solver=solver.upper())
    except cp.error.SolverError:
        return []
    if over.value is None:
        return []

    threshold = INFEASIBLE_SLACK * (1.0 + _inf_norm(qp.b))
    eq_violation = np.abs(over.value - under.value) if m_eq else np.zeros(0)
    in_violation = excess.value if m_in else np.zeros(0)
    findings = []
    for blocks, violation, family in (
        (qp.equality_blocks, eq_violation, "equality"),
        (qp.inequality_blocks, in_violation, "inequality"),
    ):
        for block in blocks:
            part = violation[block.start:block.stop]
            if len(part) and part.max() > threshold:
                worst = int(np.argmax(part))
                findings.append({
                    "family": family,
                    "block": block.label,
                    "violation": float(part.sum()),
                    "worst_row": block.start + worst,
                    "worst_value": float(part[worst]),
                })
    return sorted(findings, key=lambda d: -d["violation"])


@dataclass
class SolutionSeries:
    buffer_stocks: pd.DataFrame
    firings: pd.DataFrame
    co2_by_resource: pd.DataFrame
    balances: dict
    costs: pd.DataFrame
    regularization: float
    total_co2: float
    objective: float


def _balance(system, u_minus, u_plus, operand_index):
    rows = []
    by_resource = {}
    for c in system.capabilities:
        if c.process.kind.value != "transformation":
            continue
        w = system.pmap(c.index)
        out_ratio = system.device.ratio(1, operand_index, w)
        in_ratio = system.device.ratio(-1, operand_index, w)
        if out_ratio == 0.0 and in_ratio == 0.0:
            continue
        produced, consumed = by_resource.get(c.resource.id, (0.0, 0.0))
        produced += out_ratio * float(u_plus[:, c.index].sum())
        consumed += in_ratio * float(u_minus[:, c.index].sum())
        by_resource[c.resource.id] = (produced, consumed)
    for r in system.resources:
        if r.id in by_resource:
            produced, consumed = by_resource[r.id]
            rows.append({"resource": r.id, "name": r.name, "produced": produced,
                         "consumed": consumed, "net": produced - consumed})
    return pd.DataFrame(rows, columns=["resource", "name", "produced", "consumed", "net"])


def extract(solution: Solution, qp: QPProblem, system):
    """
    Per-entity time series of an optimal solution.

    Returns:
        SolutionSeries
    """
    lay = qp.layout
    K = lay.horizon
    x = solution.x
    steps = np.arange(1, lay.steps + 1)
    q_b = lay.series(x, "q_b")
    u_minus = lay.series(x, "u_minus")
    u_plus = lay.series(x, "u_plus")

    operand_buffer = [place.split("@", 1) for place in system.ptn.places]
    stocks = pd.DataFrame({
        "step": np.repeat(steps, len(operand_buffer)),
        "operand": [ob[0] for ob in operand_buffer] * len(steps),
        "buffer": [ob[1] for ob in operand_buffer] * len(steps),
        "value": q_b.reshape(-1),
    })

    caps = system.capabilities
    firings = pd.DataFrame({
        "step": np.repeat(steps, len(caps)),
        "capability": [c.id for c in caps] * len(steps),
        "process": [c.process.id for c in caps] * len(steps),
        "resource": [c.resource.id for c in caps] * len(steps),
        "u_minus": u_minus.reshape(-1),
        "u_plus": u_plus.reshape(-1),
    })

    emission = system.document.emission_operand
    day_columns = [f"day_{k}" for k in range(1, K + 1)]
    co2 = pd.DataFrame(columns=["resource"] + day_columns + ["total"])
    if emission is not None:
        i = [o.id for o in system.operands].index(emission)
        per_resource = {}
        for psi in system.emission_capabilities:
            ratio = system.device.ratio(-1, i, system.pmap(psi))
            series = ratio * u_minus[:K, psi]
            rid = caps[psi].resource.id
            per_resource[rid] = per_resource.get(rid, 0.0) + series
        rows = []
        for r in system.resources:
            if r.id in per_resource:
                values = per_resource[r.id]
                rows.append([r.id] + list(values) + [float(values.sum())])
        co2 = pd.DataFrame(rows, columns=["resource"] + day_columns + ["total"])

    operand_ids = [o.id for o in system.operands]
    balances = {
        label: _balance(system, u_minus, u_plus, operand_ids.index(operand_id))
        for label, operand_id in system.document.balances
    }

    diagonal = qp.F.diagonal()
    cost_rows = []
    on_costs = np.zeros(lay.size, dtype=bool)
    for k in range(1, K + 1):
        s = lay.slice("u_minus", k)
        on_costs[s] = True
        u = x[s]
        linear = qp.f[s] * u
        quadratic = diagonal[s] * u * u
        for c in caps:
            cost_rows.append((k, c.id, c.resource.id, linear[c.index], quadratic[c.index]))
    costs = pd.DataFrame(cost_rows, columns=["step", "capability", "resource", "linear", "quadratic"])
    costs["total"] = costs["linear"] + costs["quadratic"]
    regularization = float(np.sum(diagonal[~on_costs] * x[~on_costs] ** 2))

    total_co2 = float(co2["total"].sum()) if len(co2) else 0.0
    return SolutionSeries(stocks, firings, co2, balances, costs, regularization, total_co2, solution.objective)


@dataclass
class VerificationReport:
    tol: float
    equality_residual: float
    inequality_violation: float
    nonnegativity_violation: float
    duration_violations: list
    sync_residual: float
    simulator_error: dict
    flagged_blocks: list
    negative_marking: Optional[str]
    passed: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def service_ptn(service):
    labels = tuple(f"{o}:{p}" for o, p in service.place_labels)
    transitions = tuple(f"{o}:{t}" for o, t in service.transition_labels)
    return PlaceTransitionNet(
        places=labels,
        transitions=transitions,
        m_plus=service.m_plus,
        m_minus=service.m_minus,
        durations=np.zeros(len(transitions), dtype=np.int64),
    )


def verify(solution: Solution, system, qp: QPProblem, tol=DEFAULT_TOL):
    """
    Replay the firings through the color-split engineering system net and
    the service block, and re-check every constraint family.

    Every residual is absolute: the replayed trajectories, the
    synchronization over k = 1..K and each start/finish pair must agree
    with the QP point to within tol.
    """
    lay = qp.layout
    K = lay.horizon
    x = np.asarray(solution.x, dtype=float)

    r_eq = qp.A @ x - qp.b
    flagged = []
    for block in qp.equality_blocks:
        part = np.abs(r_eq[block.start:block.stop])
        if len(part) and part.max() > tol:
            flagged.append({"block": block.label, "max_residual": float(part.max()),
                            "row": block.start + int(np.argmax(part))})
    equality = _inf_norm(r_eq)
    inequality = _inf_norm(np.maximum(qp.D @ x - qp.e, 0.0))
    nonnegativity = _inf_norm(np.maximum(-x, 0.0))

    u_minus = np.maximum(lay.series(x, "u_minus"), 0.0)
    u_plus = np.maximum(lay.series(x, "u_plus"), 0.0)
    schedule = FiringSchedule(u_minus, u_plus)
    durations = [
        {"capability": system.capabilities[v.transition].id, "step": v.step,
         "started": v.started, "finished": v.finished}
        for v in check_duration(schedule, system.ptn.durations, tol=tol)
    ]

    u_l_minus = np.maximum(lay.series(x, "u_l_minus"), 0.0)
    u_l_plus = np.maximum(lay.series(x, "u_l_plus"), 0.0)
    sync = 0.0
    for k in range(K):
        r_plus, r_minus = sync_residual(u_l_plus[k], u_l_minus[k], u_plus[k], u_minus[k], system.service)
        sync = max(sync, _inf_norm(r_plus), _inf_norm(r_minus))

    errors = {}
    negative = None
    for label, net, places, transitions, up, um in (
        ("esn", system.ptn, "q_b", "q_e", u_plus, u_minus),
        ("service", service_ptn(system.service), "q_sl", "q_el", u_l_plus, u_l_minus),
    ):
        q_places = lay.series(x, places)
        q_transitions = lay.series(x, transitions)
        q0 = Marking(np.maximum(q_places[0], 0.0), np.maximum(q_transitions[0], 0.0))
        trajectory = simulate(net, FiringSchedule(um, up), q0, K, tol=tol)
        errors[places] = _inf_norm((trajectory.q_b - q_places).reshape(-1))
        errors[transitions] = _inf_norm((trajectory.q_e - q_transitions).reshape(-1))
        if trajectory.violation is not None and negative is None:
            negative = f"{label}: {trajectory.violation}"

    passed = (
        max(equality, inequality, nonnegativity, sync, *errors.values()) <= tol
        and not durations
        and negative is None
    )
    return VerificationReport(
        tol=tol,
        equality_residual=equality,
        inequality_violation=inequality,
        nonnegativity_violation=nonnegativity,
        duration_violations=durations,
        sync_residual=sync,
        simulator_error=errors,
        flagged_blocks=flagged,
        negative_marking=negative,
        passed=passed,
        notes=[
            "residuals are absolute",
            "synchronization is checked for k = 1..K",
            "starts whose finish falls past the horizon are pinned to zero",
        ],
    )
