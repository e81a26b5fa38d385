"""Operator-splitting QP solver over a quasi-definite KKT system.

Solves

    minimize    (1/2) x'Px + q'x
    subject to  l <= Ax <= u

with a fixed-step ADMM iteration.  Each iteration solves the KKT system

    [P + sigma I      A'       ] [x~]   [sigma x - q  ]
    [     A       -(1/rho) I   ] [nu] = [z - (1/rho) y]

through a single LDL^T factorization that is reused across iterations and
across solves.  Vector updates (q, l, u) never refactor; value updates to P
or A reuse the symbolic structure and permutation and only redo the numeric
factorization.  The step parameters are fixed scalars, so the factorization
stays valid for the lifetime of the data and the hot path stays
division-free.  Everything is deterministic: fixed iteration order, no
randomization, no pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .ldl import LdlFactor, _solve_inplace, min_degree_order, permute_upper, \
    symbolic_factor
from .sparse import CscMatrix, build_csc, spmv

__all__ = [
    "Settings", "SolveResult", "SolverError", "SolverWorkspace",
    "ldl_solve", "setup", "solve", "update_matrix_values", "update_vectors",
]

SOLVED = "solved"
MAX_ITER_REACHED = "max_iter_reached"
PRIMAL_INFEASIBLE = "primal_infeasible_cert"
DUAL_INFEASIBLE = "dual_infeasible_cert"

_STATUS_BY_CODE = (SOLVED, MAX_ITER_REACHED, PRIMAL_INFEASIBLE,
                   DUAL_INFEASIBLE)
STATUS_CODES = {name: code for code, name in enumerate(_STATUS_BY_CODE)}


class SolverError(ValueError):
    """Bad dimensions, bounds, or update payloads."""


@dataclass(frozen=True)
class Settings:
    """Algorithm constants; the step parameters are fixed scalars.

    The infeasibility-detection tolerances eps_pinf/eps_dinf govern the
    delta-iterate certificates and are separate from the optimality
    tolerances.
    """

    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    eps_pinf: float = 1e-4
    eps_dinf: float = 1e-4
    max_iter: int = 20000
    check_interval: int = 25

    def validate(self) -> None:
        if self.rho <= 0 or self.sigma <= 0:
            raise SolverError("rho and sigma must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise SolverError("alpha must lie in (0, 2)")
        if self.max_iter < 1 or self.check_interval < 1:
            raise SolverError("max_iter and check_interval must be >= 1")


@dataclass
class SolveResult:
    status: str
    x_tilde: np.ndarray
    y: np.ndarray
    obj_val: float
    iterations: int
    primal_res: float
    dual_res: float
    certificate: np.ndarray | None = None

    @property
    def status_code(self) -> int:
        return STATUS_CODES[self.status]


@njit(cache=True)
def _admm_kernel(n, m, Pp, Pi, Px, Ap, Ai, Ax, q, l, u,
                 Lp, Li, Lx, Dinv, perm,
                 rho, sigma, alpha, eps_abs, eps_rel, eps_pinf, eps_dinf,
                 max_iter, check_interval,
                 x, y, z, cert, rhs, work, ax, px, aty):
    """Full splitting iteration; returns (status, iterations, pri, dua).

    Residuals and the delta-iterate infeasibility certificates are evaluated
    every check_interval iterations.  On an infeasibility status the
    normalized certificate is written into cert.
    """
    rho_inv = 1.0 / rho
    nk = n + m
    norm_q = 0.0
    for i in range(n):
        norm_q = max(norm_q, abs(q[i]))

    status = 1
    iters = max_iter
    pri = np.inf
    dua = np.inf
    dx_norm = 0.0
    dy_norm = 0.0

    for it in range(1, max_iter + 1):
        # previous iterates (only needed at check time, cheap to keep)
        for i in range(m):
            rhs[n + i] = z[i] - rho_inv * y[i]
        for i in range(n):
            rhs[i] = sigma * x[i] - q[i]
        for k in range(nk):
            work[k] = rhs[perm[k]]
        _solve_inplace(nk, Lp, Li, Lx, Dinv, work)
        for k in range(nk):
            rhs[perm[k]] = work[k]

        check = (it % check_interval == 0) or (it == max_iter)
        if check:
            dx_norm = 0.0
            dy_norm = 0.0
        for i in range(n):
            x_new = alpha * rhs[i] + (1.0 - alpha) * x[i]
            if check:
                d = x_new - x[i]
                px[i] = d                      # px doubles as delta-x buffer
                dx_norm = max(dx_norm, abs(d))
            x[i] = x_new
        for i in range(m):
            z_tilde = z[i] + rho_inv * (rhs[n + i] - y[i])
            z_relax = alpha * z_tilde + (1.0 - alpha) * z[i]
            z_new = z_relax + rho_inv * y[i]
            if z_new < l[i]:
                z_new = l[i]
            elif z_new > u[i]:
                z_new = u[i]
            y_new = y[i] + rho * (z_relax - z_new)
            if check:
                d = y_new - y[i]
                ax[i] = d                      # ax doubles as delta-y buffer
                dy_norm = max(dy_norm, abs(d))
            y[i] = y_new
            z[i] = z_new

        if not check:
            continue

        # primal infeasibility: delta-y must have a strictly negative
        # support value and lie near the null space of A'.  Comparisons are
        # scaled by the delta norm rather than normalizing, keeping the
        # check division-free and exactly equivalent.
        if dy_norm > 1e-30:
            lhs = 0.0
            feasible_dir = True
            for i in range(m):
                d = ax[i]
                if d > 0.0:
                    if u[i] == np.inf:
                        feasible_dir = False
                        break
                    lhs += u[i] * d
                elif d < 0.0:
                    if l[i] == -np.inf:
                        feasible_dir = False
                        break
                    lhs += l[i] * d
            if feasible_dir and lhs <= -eps_pinf * dy_norm:
                ok = True
                for j in range(n):
                    acc = 0.0
                    for k in range(Ap[j], Ap[j + 1]):
                        acc += Ax[k] * ax[Ai[k]]
                    if abs(acc) > eps_pinf * dy_norm:
                        ok = False
                        break
                if ok:
                    for i in range(m):
                        cert[i] = ax[i] / dy_norm
                    status = 2
                    iters = it
                    break

        # dual infeasibility: normalized delta-x is a strict descent ray
        if dx_norm > 1e-30:
            qdx = 0.0
            for i in range(n):
                qdx += q[i] * px[i]
            if qdx <= -eps_dinf * dx_norm:
                ok = True
                # P @ delta-x, symmetric from the upper triangle
                for i in range(n):
                    aty[i] = 0.0               # aty doubles as P*dx buffer
                for j in range(n):
                    vj = px[j]
                    for k in range(Pp[j], Pp[j + 1]):
                        i = Pi[k]
                        aty[i] += Px[k] * vj
                        if i < j:
                            aty[j] += Px[k] * px[i]
                for i in range(n):
                    if abs(aty[i]) > eps_dinf * dx_norm:
                        ok = False
                        break
                if ok:
                    for i in range(m):
                        rhs[n + i] = 0.0       # A*dx accumulates here
                    for j in range(n):
                        vj = px[j]
                        for k in range(Ap[j], Ap[j + 1]):
                            rhs[n + Ai[k]] += Ax[k] * vj
                    for i in range(m):
                        adx = rhs[n + i]
                        if u[i] == np.inf:
                            if adx < -eps_dinf * dx_norm:
                                ok = False
                                break
                        elif l[i] == -np.inf:
                            if adx > eps_dinf * dx_norm:
                                ok = False
                                break
                        elif abs(adx) > eps_dinf * dx_norm:
                            ok = False
                            break
                    if ok:
                        for i in range(n):
                            cert[i] = px[i] / dx_norm
                        status = 3
                        iters = it
                        break

        # optimality: residuals of the current iterate
        for i in range(m):
            ax[i] = 0.0
        for j in range(n):
            vj = x[j]
            for k in range(Ap[j], Ap[j + 1]):
                ax[Ai[k]] += Ax[k] * vj
        for i in range(n):
            px[i] = 0.0
        for j in range(n):
            vj = x[j]
            for k in range(Pp[j], Pp[j + 1]):
                i = Pi[k]
                px[i] += Px[k] * vj
                if i < j:
                    px[j] += Px[k] * x[i]
        for j in range(n):
            acc = 0.0
            for k in range(Ap[j], Ap[j + 1]):
                acc += Ax[k] * y[Ai[k]]
            aty[j] = acc

        pri = 0.0
        norm_ax = 0.0
        norm_z = 0.0
        for i in range(m):
            pri = max(pri, abs(ax[i] - z[i]))
            norm_ax = max(norm_ax, abs(ax[i]))
            norm_z = max(norm_z, abs(z[i]))
        dua = 0.0
        norm_px = 0.0
        norm_aty = 0.0
        for i in range(n):
            dua = max(dua, abs(px[i] + q[i] + aty[i]))
            norm_px = max(norm_px, abs(px[i]))
            norm_aty = max(norm_aty, abs(aty[i]))
        eps_pri = eps_abs + eps_rel * max(norm_ax, norm_z)
        eps_dua = eps_abs + eps_rel * max(norm_px, max(norm_aty, norm_q))
        if pri <= eps_pri and dua <= eps_dua:
            status = 0
            iters = it
            break

    return status, iters, pri, dua


@dataclass
class SolverWorkspace:
    """Problem data, KKT factorization, and iterates that persist across solves."""

    n: int
    m: int
    P: CscMatrix
    q: np.ndarray
    A: CscMatrix
    l: np.ndarray
    u: np.ndarray
    settings: Settings
    factor: LdlFactor
    kkt_base: np.ndarray       # constant part of KKT values (sigma, -1/rho)
    p_slots: np.ndarray        # P nnz -> KKT value slot
    a_slots: np.ndarray        # A nnz -> KKT value slot
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    factor_count: int = 0
    _rhs: np.ndarray = field(default=None, repr=False)
    _work: np.ndarray = field(default=None, repr=False)
    _ax: np.ndarray = field(default=None, repr=False)
    _px: np.ndarray = field(default=None, repr=False)
    _aty: np.ndarray = field(default=None, repr=False)
    _cert: np.ndarray = field(default=None, repr=False)

    def warm_start(self, x: np.ndarray, y: np.ndarray) -> None:
        if x.shape != (self.n,) or y.shape != (self.m,):
            raise SolverError("warm start dimensions do not match")
        self.x = x.copy()
        self.y = y.copy()
        self.z = spmv(self.A, self.x)

    def cold_start(self) -> None:
        self.x = np.zeros(self.n)
        self.y = np.zeros(self.m)
        self.z = np.zeros(self.m)


def _check_bounds(l: np.ndarray, u: np.ndarray) -> None:
    if np.any(np.isnan(l)) or np.any(np.isnan(u)):
        raise SolverError("bounds contain NaN")
    if np.any(l > u):
        raise SolverError("infeasible bounds: l > u in some row")
    if np.any(l == np.inf) or np.any(u == -np.inf):
        raise SolverError("bounds place a row's interval at infinity")


def _assemble_and_factor(ws: SolverWorkspace) -> None:
    ws.factor.Kx[:] = ws.kkt_base
    ws.factor.Kx[ws.p_slots] += ws.P.values
    ws.factor.Kx[ws.a_slots] += ws.A.values
    ws.factor.refactor(expected_pos=ws.n)
    ws.factor_count += 1


def setup(P: CscMatrix, q: np.ndarray, A: CscMatrix, l: np.ndarray,
          u: np.ndarray, settings: Settings | None = None) -> SolverWorkspace:
    """Build the KKT system, choose an ordering, and factor once."""
    settings = settings or Settings()
    settings.validate()
    n, m = P.nrows, A.nrows
    if P.ncols != n or A.ncols != n:
        raise SolverError("P must be n x n and A must be m x n")
    q = np.asarray(q, dtype=float)
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    if q.shape != (n,) or l.shape != (m,) or u.shape != (m,):
        raise SolverError("q, l, u lengths must match P and A")
    _check_bounds(l, u)
    # upper-triangularity of P is structural: row <= col for every entry
    for j in range(P.ncols):
        for k in range(int(P.col_ptr[j]), int(P.col_ptr[j + 1])):
            if P.row_idx[k] > j:
                raise SolverError("P must store only its upper triangle")

    nk = n + m
    coords: list[tuple] = []
    slot_index: dict[tuple, int] = {}
    base_vals: list[float] = []

    def entry(i: int, j: int, base: float) -> int:
        key = (i, j)
        idx = slot_index.get(key)
        if idx is None:
            idx = len(coords)
            slot_index[key] = idx
            coords.append(key)
            base_vals.append(0.0)
        base_vals[idx] += base
        return idx

    for i in range(n):
        entry(i, i, settings.sigma)
    p_entry = np.empty(P.nnz, dtype=np.int64)
    for j in range(P.ncols):
        for k in range(int(P.col_ptr[j]), int(P.col_ptr[j + 1])):
            p_entry[k] = entry(int(P.row_idx[k]), j, 0.0)
    a_entry = np.empty(A.nnz, dtype=np.int64)
    for j in range(A.ncols):
        for k in range(int(A.col_ptr[j]), int(A.col_ptr[j + 1])):
            a_entry[k] = entry(j, n + int(A.row_idx[k]), 0.0)
    for r in range(m):
        entry(n + r, n + r, -1.0 / settings.rho)

    pattern = build_csc([(i, j, 0.0) for (i, j) in coords], nk, nk)
    perm = min_degree_order(nk, pattern.col_ptr, pattern.row_idx)
    Kp, Ki, slot_of_entry = permute_upper(nk, coords, perm)
    factor = symbolic_factor(nk, Kp, Ki, perm)

    kkt_base = np.zeros(len(coords))
    for idx, v in enumerate(base_vals):
        kkt_base[slot_of_entry[idx]] += v

    ws = SolverWorkspace(
        n=n, m=m, P=P.copy_values(), q=q.copy(), A=A.copy_values(),
        l=l.copy(), u=u.copy(), settings=settings, factor=factor,
        kkt_base=kkt_base,
        p_slots=slot_of_entry[p_entry] if P.nnz else np.empty(0, np.int64),
        a_slots=slot_of_entry[a_entry] if A.nnz else np.empty(0, np.int64),
        x=np.zeros(n), y=np.zeros(m), z=np.zeros(m),
        _rhs=np.zeros(nk), _work=np.zeros(nk), _ax=np.zeros(m),
        _px=np.zeros(n), _aty=np.zeros(n), _cert=np.zeros(max(n, m, 1)),
    )
    _assemble_and_factor(ws)
    return ws


def update_vectors(ws: SolverWorkspace, q: np.ndarray | None = None,
                   l: np.ndarray | None = None,
                   u: np.ndarray | None = None) -> None:
    """Replace q, l, u in place; no factorization work at all."""
    if q is not None:
        q = np.asarray(q, dtype=float)
        if q.shape != (ws.n,):
            raise SolverError("q length mismatch")
        ws.q[:] = q
    new_l = ws.l if l is None else np.asarray(l, dtype=float)
    new_u = ws.u if u is None else np.asarray(u, dtype=float)
    if new_l.shape != (ws.m,) or new_u.shape != (ws.m,):
        raise SolverError("bound length mismatch")
    _check_bounds(new_l, new_u)
    ws.l[:] = new_l
    ws.u[:] = new_u


def update_matrix_values(ws: SolverWorkspace,
                         P_values: np.ndarray | None = None,
                         A_values: np.ndarray | None = None) -> None:
    """Rewrite P and/or A values on the frozen pattern and refactor numerically.

    The fill-reducing permutation and symbolic structure are reused; only the
    numeric factorization pass runs again.
    """
    if P_values is not None:
        P_values = np.asarray(P_values, dtype=float)
        if P_values.shape != (ws.P.nnz,):
            raise SolverError(f"P update needs {ws.P.nnz} values")
        ws.P.values[:] = P_values
    if A_values is not None:
        A_values = np.asarray(A_values, dtype=float)
        if A_values.shape != (ws.A.nnz,):
            raise SolverError(f"A update needs {ws.A.nnz} values")
        ws.A.values[:] = A_values
    _assemble_and_factor(ws)


def ldl_solve(ws: SolverWorkspace, b: np.ndarray) -> np.ndarray:
    """Solve the current KKT system for an arbitrary right-hand side."""
    b = np.asarray(b, dtype=float)
    if b.shape != (ws.n + ws.m,):
        raise SolverError("right-hand side must have length n + m")
    return ws.factor.solve(b)


def _objective(ws: SolverWorkspace, x: np.ndarray) -> float:
    from .sparse import spmv_sym_upper
    return float(0.5 * np.dot(x, spmv_sym_upper(ws.P, x)) + np.dot(ws.q, x))


def solve(ws: SolverWorkspace) -> SolveResult:
    """Run the splitting iteration from the current iterates.

    A fresh workspace starts from zero (a cold start); after a previous
    solve or a warm_start call the iteration continues from the stored
    point.
    """
    s = ws.settings
    f = ws.factor
    code, iters, pri, dua = _admm_kernel(
        ws.n, ws.m,
        ws.P.col_ptr, ws.P.row_idx, ws.P.values,
        ws.A.col_ptr, ws.A.row_idx, ws.A.values,
        ws.q, ws.l, ws.u,
        f.Lp, f.Li, f.Lx, f.Dinv, f.perm,
        s.rho, s.sigma, s.alpha, s.eps_abs, s.eps_rel,
        s.eps_pinf, s.eps_dinf, s.max_iter, s.check_interval,
        ws.x, ws.y, ws.z, ws._cert, ws._rhs, ws._work,
        ws._ax, ws._px, ws._aty)
    status = _STATUS_BY_CODE[code]
    cert = None
    if status == PRIMAL_INFEASIBLE:
        cert = ws._cert[:ws.m].copy()
    elif status == DUAL_INFEASIBLE:
        cert = ws._cert[:ws.n].copy()
    return SolveResult(
        status=status, x_tilde=ws.x.copy(), y=ws.y.copy(),
        obj_val=_objective(ws, ws.x), iterations=int(iters),
        primal_res=float(pri), dual_res=float(dua), certificate=cert)
