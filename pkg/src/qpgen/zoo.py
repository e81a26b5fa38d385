"""Built-in problem families, closed-loop drivers, and synthetic data.

Three families exercise the full toolchain:

* nonnegative least squares (the worked example at any size),
* quadcopter tracking MPC with a polyhedral tilt-angle constraint,
* single-period mean-variance portfolio selection with a factor risk model.

The MPC and portfolio problems are modeled in their parameter-disciplined
forms: quadratic costs enter through square-root matrices (transposed
Cholesky factors), quadratic forms are written as sums of squares of affine
expressions, and every pre-collected parameter product (like gamma*m*g) is
a single parameter.  Deliberately undisciplined variants of both are
exposed for testing the compliance gate.

All numeric constants that the problem statements leave open (masses,
weights, sampling time, synthetic market statistics) are package defaults,
chosen for well-conditioned, feasible instances, and documented inline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .canon import CanonParams, CanonQP, canonicalize, eval_params, \
    partial_update, retrieve
from .expr import Parameter, Shape, Variable
from .problem import Constraint, EQ_ZERO, MAXIMIZE, MINIMIZE, NONPOS_KIND, \
    Problem
from .solver import Settings, SolverWorkspace, setup, solve, \
    update_matrix_values, update_vectors
from .sparse import spmv

__all__ = [
    "MPC_SETTINGS", "MpcFamily", "NnlsFamily", "PORTFOLIO_SETTINGS",
    "PortfolioFamily", "SimTrace", "StepRecord", "ZooError", "backtest",
    "build_mpc", "build_mpc_non_dpp", "build_nnls", "build_portfolio",
    "build_portfolio_non_dpp", "simulate_mpc", "solve_dare",
]

# Quadcopter constants (the problem statement leaves them open):
# point mass 0.5 kg, gravity 9.81, 30-degree tilt limit, thrust authority
# asymmetric around hover, 10 Hz control rate.
QUAD_MASS = 0.5
GRAVITY = 9.81
TILT_GAMMA = float(np.tan(np.pi / 6))
U_VMIN = -QUAD_MASS * GRAVITY / 2
U_VMAX = QUAD_MASS * GRAVITY
SAMPLE_TIME = 0.1

# Driver accuracy targets are tighter than the solver defaults so that the
# per-step feasibility audits land well inside 1e-6.  The step parameter is
# still a per-workspace constant; it is merely chosen per family, since the
# regulator KKT systems favor a larger step than the allocation ones.
MPC_SETTINGS = Settings(rho=4.0, eps_abs=1e-8, eps_rel=1e-8,
                        max_iter=200_000)
# rare market draws sit near a degenerate leverage boundary and need three
# orders of magnitude more splitting iterations than the median period
PORTFOLIO_SETTINGS = Settings(eps_abs=1e-8, eps_rel=1e-8,
                              max_iter=2_000_000)
DRIVER_SETTINGS = PORTFOLIO_SETTINGS


class ZooError(RuntimeError):
    """Driver-level failure (solver did not converge at some step)."""


# ---------------------------------------------------------------------------
# family containers


@dataclass(frozen=True)
class NnlsFamily:
    m: int
    n: int
    problem: Problem

    def default_values(self, rng: np.random.Generator | None = None) -> dict:
        rng = rng or np.random.default_rng(0)
        return {"G": rng.standard_normal((self.m, self.n)),
                "h": rng.standard_normal((self.m, 1))}


@dataclass(frozen=True)
class MpcFamily:
    H: int
    N_hs: int
    problem: Problem
    A: np.ndarray = field(repr=False, default=None)
    B: np.ndarray = field(repr=False, default=None)
    Q: np.ndarray = field(repr=False, default=None)
    R: np.ndarray = field(repr=False, default=None)
    T: np.ndarray = field(repr=False, default=None)

    def default_values(self) -> dict:
        """Parameter values for the nominal quadcopter instance."""
        Q_T = solve_dare(self.A, self.B, self.Q, self.R)
        d = TILT_GAMMA * QUAD_MASS * GRAVITY * np.ones((self.H - 1, 1))
        return {
            "Q_T_sqrt": _sqrt_factor(Q_T),
            "Q_sqrt": _sqrt_factor(self.Q),
            "R_sqrt": _sqrt_factor(self.R),
            "T_sqrt": _sqrt_factor(self.T),
            "A": self.A, "B": self.B,
            "gamma": TILT_GAMMA, "d": d,
            "u_vmin": U_VMIN, "u_vmax": U_VMAX,
            "z_meas": np.zeros((6, 1)), "u_prev": np.zeros((3, 1)),
        }


@dataclass(frozen=True)
class PortfolioFamily:
    N: int
    K: int
    problem: Problem

    def default_values(self, rng: np.random.Generator | None = None) -> dict:
        rng = rng or np.random.default_rng(0)
        w_prev = np.zeros((self.N + 1, 1))
        w_prev[-1, 0] = 1.0          # start all-cash
        values = self.market_draw(rng)
        values.update({
            "k_tc": 5e-3 * np.ones((self.N + 1, 1)),
            "k_sh": 1e-2 * np.ones((self.N + 1, 1)),
            "L": 1.6,
            "w_prev": w_prev,
        })
        return values

    def market_draw(self, rng: np.random.Generator) -> dict:
        """One period of synthetic market data (loadings, vols, forecasts)."""
        n1 = self.N + 1
        F = rng.standard_normal((n1, self.K)) / np.sqrt(self.K) * 0.15
        F[-1, :] = 0.0               # cash loads on no factor
        d_sqrt = rng.uniform(0.05, 0.2, size=n1)
        d_sqrt[-1] = 1e-3            # near-riskless cash
        alpha = 0.03 * rng.standard_normal((n1, 1))
        alpha[-1, 0] = 0.0
        return {"a_gr": alpha, "F": F, "D_sqrt": np.diag(d_sqrt)}


# ---------------------------------------------------------------------------
# builders


def build_nnls(m: int, n: int) -> NnlsFamily:
    """minimize ||G x - h||^2 subject to x >= 0."""
    if m < 1 or n < 1:
        raise ZooError("nnls needs m, n >= 1")
    x = Variable("x", Shape(n, 1))
    G = Parameter("G", Shape(m, n))
    h = Parameter("h", Shape(m, 1))
    objective = ex.sum_squares(ex.param(G) @ ex.var(x) - ex.param(h))
    constraints = [Constraint(NONPOS_KIND, ex.neg(ex.var(x)))]
    prob = Problem(MINIMIZE, objective, constraints, [x], [G, h],
                   name="nnls")
    return NnlsFamily(m=m, n=n, problem=prob)


def _tilt_normals(N_hs: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(N_hs) / N_hs
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)   # N_hs x 2


def _quad_dynamics() -> tuple:
    """Discretized point-mass dynamics in error coordinates."""
    dt = SAMPLE_TIME
    A = np.eye(6)
    A[:3, 3:] = dt * np.eye(3)
    B = np.vstack([dt * dt / (2 * QUAD_MASS) * np.eye(3),
                   dt / QUAD_MASS * np.eye(3)])
    return A, B


def _default_weights() -> tuple:
    Q = np.diag([10.0, 10.0, 10.0, 1.0, 1.0, 1.0])
    R = np.diag([0.1, 0.1, 0.1])
    T = np.diag([0.01, 0.01, 0.01])
    return Q, R, T


def _sqrt_factor(M: np.ndarray) -> np.ndarray:
    """Transposed Cholesky factor: M = (M^{1/2})^T M^{1/2}."""
    return np.linalg.cholesky(M).T


def build_mpc(H: int, N_hs: int = 8) -> MpcFamily:
    """Tracking MPC over horizon H with N_hs tilt halfspaces.

    Variables are stage-stacked matrices Z (states, 6 x (H+1)) and U
    (inputs, 3 x (H+1)); stage 0 is pinned to the measurement and the
    previously applied input, and the thrust/tilt rows cover stages
    1..H-1.  The tilt normals are fixed constants of the family.
    """
    if H < 2:
        raise ZooError("MPC horizon must be at least 2")
    if N_hs < 3:
        raise ZooError("tilt polytope needs at least 3 halfspaces")
    Z = Variable("Z", Shape(6, H + 1))
    U = Variable("U", Shape(3, H + 1))
    params = [
        Parameter("Q_T_sqrt", Shape(6, 6)),
        Parameter("Q_sqrt", Shape(6, 6)),
        Parameter("R_sqrt", Shape(3, 3)),
        Parameter("T_sqrt", Shape(3, 3)),
        Parameter("A", Shape(6, 6)),
        Parameter("B", Shape(6, 3)),
        Parameter("gamma", Shape(1, 1), sign=ex.NONNEG),
        Parameter("d", Shape(H - 1, 1)),
        Parameter("u_vmin", Shape(1, 1)),
        Parameter("u_vmax", Shape(1, 1)),
        Parameter("z_meas", Shape(6, 1)),
        Parameter("u_prev", Shape(3, 1)),
    ]
    by_name = {p.name: ex.param(p) for p in params}
    z = ex.var(Z)
    u = ex.var(U)

    z_last = ex.index(z, (0, 5), (H, H))
    z_head = ex.index(z, (0, 5), (0, H - 1))
    u_head = ex.index(u, (0, 2), (0, H - 1))
    u_tail = ex.index(u, (0, 2), (1, H))
    objective = ex.sum_squares(by_name["Q_T_sqrt"] @ z_last) \
        + ex.sum_squares(by_name["Q_sqrt"] @ z_head) \
        + ex.sum_squares(by_name["R_sqrt"] @ u_head) \
        + ex.sum_squares(by_name["T_sqrt"] @ (u_tail - u_head))

    cons = [
        Constraint(EQ_ZERO, ex.index(z, (0, 5), (0, 0)) - by_name["z_meas"]),
        Constraint(EQ_ZERO, ex.index(u, (0, 2), (0, 0)) - by_name["u_prev"]),
        Constraint(EQ_ZERO,
                   ex.index(z, (0, 5), (1, H))
                   - (by_name["A"] @ z_head + by_name["B"] @ u_head)),
    ]
    u_vert = ex.transpose(ex.index(u, (2, 2), (1, H - 1)))     # (H-1) x 1
    cons.append(Constraint(NONPOS_KIND,
                           ex.neg(u_vert - by_name["u_vmin"])))
    cons.append(Constraint(NONPOS_KIND, u_vert - by_name["u_vmax"]))
    u_horiz = ex.transpose(ex.index(u, (0, 1), (1, H - 1)))    # (H-1) x 2
    for c in _tilt_normals(N_hs):
        lhs = u_horiz @ ex.constant(c.reshape(2, 1))
        rhs = by_name["gamma"] * u_vert + by_name["d"]
        cons.append(Constraint(NONPOS_KIND, lhs - rhs))

    A, B = _quad_dynamics()
    Q, R, T = _default_weights()
    prob = Problem(MINIMIZE, objective, cons, [Z, U], params, name="mpc")
    return MpcFamily(H=H, N_hs=N_hs, problem=prob, A=A, B=B, Q=Q, R=R, T=T)


def build_mpc_non_dpp(H: int, N_hs: int = 8) -> Problem:
    """The undisciplined variant: gamma*(u_z + m*g) multiplies parameters."""
    if H < 2:
        raise ZooError("MPC horizon must be at least 2")
    Z = Variable("Z", Shape(6, H + 1))
    U = Variable("U", Shape(3, H + 1))
    params = [
        Parameter("Q_T_sqrt", Shape(6, 6)),
        Parameter("Q_sqrt", Shape(6, 6)),
        Parameter("R_sqrt", Shape(3, 3)),
        Parameter("T_sqrt", Shape(3, 3)),
        Parameter("A", Shape(6, 6)),
        Parameter("B", Shape(6, 3)),
        Parameter("gamma", Shape(1, 1), sign=ex.NONNEG),
        Parameter("mass", Shape(1, 1), sign=ex.NONNEG),
        Parameter("grav", Shape(1, 1), sign=ex.NONNEG),
        Parameter("u_vmin", Shape(1, 1)),
        Parameter("u_vmax", Shape(1, 1)),
        Parameter("z_meas", Shape(6, 1)),
        Parameter("u_prev", Shape(3, 1)),
    ]
    by_name = {p.name: ex.param(p) for p in params}
    z = ex.var(Z)
    u = ex.var(U)
    z_head = ex.index(z, (0, 5), (0, H - 1))
    u_head = ex.index(u, (0, 2), (0, H - 1))
    u_tail = ex.index(u, (0, 2), (1, H))
    objective = ex.sum_squares(by_name["Q_T_sqrt"] @ ex.index(z, (0, 5), (H, H))) \
        + ex.sum_squares(by_name["Q_sqrt"] @ z_head) \
        + ex.sum_squares(by_name["R_sqrt"] @ u_head) \
        + ex.sum_squares(by_name["T_sqrt"] @ (u_tail - u_head))
    cons = [
        Constraint(EQ_ZERO, ex.index(z, (0, 5), (0, 0)) - by_name["z_meas"]),
        Constraint(EQ_ZERO, ex.index(u, (0, 2), (0, 0)) - by_name["u_prev"]),
        Constraint(EQ_ZERO,
                   ex.index(z, (0, 5), (1, H))
                   - (by_name["A"] @ z_head + by_name["B"] @ u_head)),
    ]
    u_vert = ex.transpose(ex.index(u, (2, 2), (1, H - 1)))
    cons.append(Constraint(NONPOS_KIND, ex.neg(u_vert - by_name["u_vmin"])))
    cons.append(Constraint(NONPOS_KIND, u_vert - by_name["u_vmax"]))
    u_horiz = ex.transpose(ex.index(u, (0, 1), (1, H - 1)))
    # the undisciplined part: gamma * (u_z + mass * grav)
    hover = by_name["mass"] * by_name["grav"]
    for c in _tilt_normals(N_hs):
        lhs = u_horiz @ ex.constant(c.reshape(2, 1))
        rhs = by_name["gamma"] * (u_vert + hover)
        cons.append(Constraint(NONPOS_KIND, lhs - rhs))
    return Problem(MINIMIZE, objective, cons, [Z, U], params,
                   name="mpc_non_dpp")


def build_portfolio(N: int) -> PortfolioFamily:
    """Mean-variance selection of N assets plus cash under a factor model.

    Weights w (length N+1, last entry cash) maximize risk-adjusted return
    with transaction and shorting costs, subject to full investment and a
    leverage cap.  Products of parameters are pre-collected: the problem
    sees alpha/gamma_risk, the scaled cost vectors, F, and D^{1/2} (a
    diagonal parameter declared with diagonal-only sparsity).
    """
    if N < 2:
        raise ZooError("portfolio needs at least 2 assets")
    K = max(N // 10, 5)
    n1 = N + 1
    w = Variable("w", Shape(n1, 1))
    dw = Variable("dw", Shape(n1, 1))
    diag_pattern = tuple((i, i) for i in range(n1))
    params = [
        Parameter("a_gr", Shape(n1, 1)),
        Parameter("F", Shape(n1, K)),
        Parameter("D_sqrt", Shape(n1, n1), sign=ex.NONNEG,
                  sparsity=diag_pattern),
        Parameter("k_tc", Shape(n1, 1), sign=ex.NONNEG),
        Parameter("k_sh", Shape(n1, 1), sign=ex.NONNEG),
        Parameter("L", Shape(1, 1), sign=ex.NONNEG),
        Parameter("w_prev", Shape(n1, 1)),
    ]
    by_name = {p.name: ex.param(p) for p in params}
    we = ex.var(w)
    dwe = ex.var(dw)
    objective = ex.transpose(by_name["a_gr"]) @ we \
        - ex.sum_squares(ex.transpose(by_name["F"]) @ we) \
        - ex.sum_squares(by_name["D_sqrt"] @ we) \
        - ex.transpose(by_name["k_tc"]) @ ex.abs_(dwe) \
        - ex.transpose(by_name["k_sh"]) @ ex.neg_part(we)
    ones = ex.constant(np.ones((1, n1)))
    cons = [
        Constraint(EQ_ZERO, ones @ we - ex.constant(1.0)),
        Constraint(NONPOS_KIND, ex.norm1(we) - by_name["L"]),
        Constraint(EQ_ZERO, dwe - (we - by_name["w_prev"])),
    ]
    prob = Problem(MAXIMIZE, objective, cons, [w, dw], params,
                   name="portfolio")
    return PortfolioFamily(N=N, K=K, problem=prob)


def build_portfolio_non_dpp(N: int) -> Problem:
    """Undisciplined variant: objective scales parametrized terms by
    gamma_risk and gamma_tc, so parameters multiply parameters."""
    if N < 2:
        raise ZooError("portfolio needs at least 2 assets")
    K = max(N // 10, 5)
    n1 = N + 1
    w = Variable("w", Shape(n1, 1))
    dw = Variable("dw", Shape(n1, 1))
    params = [
        Parameter("alpha", Shape(n1, 1)),
        Parameter("gamma_risk", Shape(1, 1), sign=ex.NONNEG),
        Parameter("gamma_tc", Shape(1, 1), sign=ex.NONNEG),
        Parameter("F", Shape(n1, K)),
        Parameter("D_sqrt", Shape(n1, n1), sign=ex.NONNEG,
                  sparsity=tuple((i, i) for i in range(n1))),
        Parameter("k_tc", Shape(n1, 1), sign=ex.NONNEG),
        Parameter("L", Shape(1, 1), sign=ex.NONNEG),
        Parameter("w_prev", Shape(n1, 1)),
    ]
    by_name = {p.name: ex.param(p) for p in params}
    we = ex.var(w)
    dwe = ex.var(dw)
    risk = ex.sum_squares(ex.transpose(by_name["F"]) @ we) \
        + ex.sum_squares(by_name["D_sqrt"] @ we)
    objective = ex.transpose(by_name["alpha"]) @ we \
        - by_name["gamma_risk"] * risk \
        - by_name["gamma_tc"] * (ex.transpose(by_name["k_tc"]) @ ex.abs_(dwe))
    ones = ex.constant(np.ones((1, n1)))
    cons = [
        Constraint(EQ_ZERO, ones @ we - ex.constant(1.0)),
        Constraint(NONPOS_KIND, ex.norm1(we) - by_name["L"]),
        Constraint(EQ_ZERO, dwe - (we - by_name["w_prev"])),
    ]
    return Problem(MAXIMIZE, objective, cons, [w, dw], params,
                   name="portfolio_non_dpp")


# ---------------------------------------------------------------------------
# Riccati terminal cost


def solve_dare(A: np.ndarray, B: np.ndarray, Q: np.ndarray,
               R: np.ndarray, tol: float = 1e-10,
               max_iter: int = 10_000) -> np.ndarray:
    """Fixed point of P <- Q + A'(P - P B (R + B'PB)^{-1} B'P) A."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ (P @ A - BtP.T @ gain)
        step = float(np.max(np.abs(P_next - P)))
        P = 0.5 * (P_next + P_next.T)
        if step < tol:
            return P
    raise ZooError("Riccati iteration did not converge")


# ---------------------------------------------------------------------------
# traces and drivers


@dataclass
class StepRecord:
    step: int
    params: dict                 # parameter values changed before this solve
    theta: np.ndarray            # canonical parameter vector after update
    x: np.ndarray                # canonical solution
    values: dict                 # retrieved user variables
    objective: float
    iterations: int
    status: str
    wall_ns: int
    refactorized: bool
    touched: tuple               # (P, q, l, u, A) flags for this step
    feasibility_violation: float
    state: np.ndarray | None = None
    applied_input: np.ndarray | None = None


@dataclass
class SimTrace:
    family: str
    steps: list
    factor_count: int

    def __len__(self) -> int:
        return len(self.steps)


def _violation(canon: CanonQP, cp: CanonParams, x: np.ndarray) -> float:
    ax = spmv(canon.A_with(cp.A_values), x)
    below = np.maximum(cp.l - ax, 0.0)
    above = np.maximum(ax - cp.u, 0.0)
    both = np.maximum(below, above)
    return float(np.max(both)) if both.size else 0.0


def _apply_updates(canon: CanonQP, cp: CanonParams, ws: SolverWorkspace,
                   changed: dict) -> tuple:
    """Push parameter changes through the maps into the workspace.

    Returns (touched flags, refactorized).  Vector segments go through the
    no-factorization path; P or A changes trigger a numeric refactorization
    on the frozen pattern.
    """
    touched = partial_update(canon, cp, changed)
    t_p, t_q, t_l, t_u, t_a = touched
    if t_q or t_l or t_u:
        update_vectors(ws,
                       q=cp.q if t_q else None,
                       l=cp.l if t_l else None,
                       u=cp.u if t_u else None)
    refactor = t_p or t_a
    if refactor:
        update_matrix_values(ws,
                             P_values=cp.P_values if t_p else None,
                             A_values=cp.A_values if t_a else None)
    return touched, refactor


def simulate_mpc(family: MpcFamily, z0: np.ndarray, steps: int,
                 A_true: np.ndarray | None = None,
                 B_true: np.ndarray | None = None,
                 settings: Settings | None = None) -> SimTrace:
    """Closed-loop run: measure, update (z_meas, u_prev), solve, apply.

    Only vector segments change between steps, so the KKT factorization
    from setup is the only one in the whole run; the trace's factor count
    asserts that.  The applied input is stage 1 of the plan (stage 0 is
    pinned to the previously applied input).
    """
    z0 = np.asarray(z0, dtype=float).reshape(6, 1)
    A_true = family.A if A_true is None else np.asarray(A_true, dtype=float)
    B_true = family.B if B_true is None else np.asarray(B_true, dtype=float)
    settings = settings or MPC_SETTINGS

    canon = canonicalize(family.problem)
    values = family.default_values()
    values["z_meas"] = z0
    cp = eval_params(canon, values)
    ws = setup(canon.P_with(cp.P_values), cp.q, canon.A_with(cp.A_values),
               cp.l, cp.u, settings)

    z = z0.copy()
    u_exec = np.zeros((3, 1))   # input executing during the current interval
    records = []
    for t in range(steps):
        # step 0 records the full assignment so a trace replays standalone
        changed = dict(values)
        refactor = False
        touched = (False,) * 5
        start = time.perf_counter_ns()
        if t > 0:
            changed = {"z_meas": z.copy(), "u_prev": u_exec.copy()}
            touched, refactor = _apply_updates(canon, cp, ws, changed)
        res = solve(ws)
        wall = time.perf_counter_ns() - start
        if res.status != "solved":
            raise ZooError(f"step {t}: solver status {res.status}")
        vals = retrieve(canon, res.x_tilde)
        records.append(StepRecord(
            step=t, params=changed, theta=cp.theta.copy(), x=res.x_tilde.copy(),
            values=vals, objective=res.obj_val + cp.obj_offset,
            iterations=res.iterations, status=res.status, wall_ns=wall,
            refactorized=refactor, touched=touched,
            feasibility_violation=_violation(canon, cp, res.x_tilde),
            state=z.copy(), applied_input=u_exec.copy()))
        # the plan's stage 1 takes over at the next sample; the committed
        # input finishes the current interval first
        z = A_true @ z + B_true @ u_exec
        u_exec = vals["U"][:, 1:2].copy()
    return SimTrace(family="mpc", steps=records,
                    factor_count=ws.factor_count)


def backtest(family: PortfolioFamily, periods: int, seed: int,
             settings: Settings | None = None) -> SimTrace:
    """Sequential rebalancing against a seeded synthetic market.

    Every period redraws the factor loadings, idiosyncratic volatilities,
    and return forecasts, and chains w_prev from the previous solution.
    Loadings and volatilities touch the constraint-matrix segment, so each
    period after the first refactorizes on the frozen pattern.
    """
    if periods < 1:
        raise ZooError("backtest needs at least one period")
    settings = settings or PORTFOLIO_SETTINGS
    rng = np.random.default_rng(seed)

    canon = canonicalize(family.problem)
    values = family.default_values(rng)
    cp = eval_params(canon, values)
    ws = setup(canon.P_with(cp.P_values), cp.q, canon.A_with(cp.A_values),
               cp.l, cp.u, settings)

    records = []
    w_prev = values["w_prev"]
    for t in range(periods):
        # step 0 records the full assignment so a trace replays standalone
        changed = dict(values)
        refactor = False
        touched = (False,) * 5
        start = time.perf_counter_ns()
        if t > 0:
            changed = family.market_draw(rng)
            changed["w_prev"] = w_prev.copy()
            touched, refactor = _apply_updates(canon, cp, ws, changed)
        res = solve(ws)
        wall = time.perf_counter_ns() - start
        if res.status != "solved":
            raise ZooError(f"period {t}: solver status {res.status}")
        vals = retrieve(canon, res.x_tilde)
        w_prev = vals["w"].copy()
        records.append(StepRecord(
            step=t, params=changed, theta=cp.theta.copy(), x=res.x_tilde.copy(),
            values=vals, objective=res.obj_val + cp.obj_offset,
            iterations=res.iterations, status=res.status, wall_ns=wall,
            refactorized=refactor, touched=touched,
            feasibility_violation=_violation(canon, cp, res.x_tilde)))
    return SimTrace(family="portfolio", steps=records,
                    factor_count=ws.factor_count)
