"""Joint scheduling and power allocation.

Pipeline for one period: feasibility test, relaxed convex solve for the
per-user element counts ``d``, integer repair, NIF scheduling, then filling
unassigned elements and computing equal per-element powers.

All powers are in watts.  Users are flattened as ``i = k * U + u``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import InterferenceGraph
from .scheduler import schedule_nif, served_counts

LN2 = math.log(2.0)


class InfeasibleError(RuntimeError):
    """The rate requirements cannot all be met within ``Pmax``."""


@dataclass
class CsiState:
    """Per-user local gain and worst measured interference-plus-noise."""

    alpha: np.ndarray
    I_tilde: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.I_tilde = np.asarray(self.I_tilde, dtype=float)
        if self.alpha.shape != self.I_tilde.shape:
            raise ValueError("alpha and I_tilde must have the same shape")
        if np.any(self.alpha <= 0) or np.any(self.I_tilde <= 0):
            raise ValueError("alpha and I_tilde must be positive")

    @property
    def beta(self) -> np.ndarray:
        return self.alpha / self.I_tilde

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "I_tilde": self.I_tilde.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "CsiState":
        return cls(np.array(doc["alpha"]), np.array(doc["I_tilde"]))


# ---------------------------------------------------------------- closed forms

def min_required_elements(gamma, beta, N: int, W: float, Pmax: float):
    """Fewest elements that carry ``gamma`` at power ``Pmax`` (0 if ``gamma == 0``).

    Values above ``N`` mean the user cannot be satisfied.
    """
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    cap = W * np.log2(beta * Pmax + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(gamma > 0, np.ceil(gamma * N / cap), 0.0)
    out = need.astype(np.int64)
    return int(out) if out.ndim == 0 else out


def per_element_power(gamma, beta, d_hat, N: int, W: float):
    """Power on each of ``d_hat`` elements that exactly meets ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    if np.any((d_hat <= 0) & (gamma > 0)):
        raise ValueError("a user with a positive rate needs at least one element")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p = np.where(gamma > 0, np.expm1(LN2 * gamma * N / (np.maximum(d_hat, 1) * W)) / beta, 0.0)
    return float(p) if p.ndim == 0 else p


def objective_terms(d, gamma, beta, N: int, W: float) -> np.ndarray:
    """Per-user power ``d * p(d)``; ``inf`` for a positive rate with ``d = 0``."""
    d = np.asarray(d, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    c = gamma * N / W
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = d * np.expm1(LN2 * c / d) / beta
    val = np.where(gamma > 0, val, 0.0)
    return np.where((gamma > 0) & (d <= 0), np.inf, val)


def constraint_rows(graph: InterferenceGraph):
    """Clique rows (size >= 2) followed by one row per cell, as index arrays."""
    rows = [np.array(c) for c in graph.maximal_cliques if len(c) > 1]
    cells = [np.arange(k * graph.U, (k + 1) * graph.U) for k in range(graph.K)]
    return rows, cells


def check_feasibility(beta, gamma, cliques, config) -> bool:
    """Can every user hit its rate at ``Pmax`` without breaking the clique or cell caps?"""
    lb = np.ravel(min_required_elements(np.ravel(gamma), np.ravel(beta), config.N,
                                        config.W_Hz, config.Pmax_W))
    if np.any(lb > config.N):
        return False
    if any(lb[list(c)].sum() > config.N for c in cliques):
        return False
    per_cell = lb.reshape(config.K, config.U).sum(axis=1)
    return bool(np.all(per_cell <= config.N_RF * config.N))


# ------------------------------------------------------------- relaxed solver

@dataclass
class RelaxedSolution:
    d: np.ndarray            # continuous solution, 0 for rate-free users
    primal: float            # objective at ``d`` (watts)
    lower_bound: float       # Lagrangian dual value, never above the true optimum
    kkt_residual: float
    iterations: int
    lb: np.ndarray           # box lower bounds used


class _Objective:
    """Separable ``sum_i (x_i / b_i) (2^(c_i / x_i) - 1)`` and its derivatives, scaled."""

    def __init__(self, c, beta, scale):
        self.c, self.beta, self.scale = c, beta, scale

    def value(self, x):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return x * np.expm1(LN2 * self.c / x) / self.beta / self.scale

    def grad(self, x):
        t = LN2 * self.c / x
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(t)
            return (np.expm1(t) - t * e) / self.beta / self.scale

    def hess(self, x):
        t = LN2 * self.c / x
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(t) * t * t / (x * self.beta * self.scale)


def _dual_bound(obj: _Objective, lb, ub, A, b, z) -> float:
    """``min`` over the box of the Lagrangian at multipliers ``z`` (scaled units)."""
    a = A.T @ z if len(z) else np.zeros_like(lb)
    lo = np.maximum(lb, 1e-9 * ub)
    hi = ub.copy()
    g_hi = obj.grad(hi) + a
    g_lo = obj.grad(lo) + a
    x = np.where(g_hi <= 0, hi, np.where(g_lo >= 0, lo, 0.5 * (lo + hi)))
    inner = (g_hi > 0) & (g_lo < 0)
    l, h = lo.copy(), hi.copy()
    for _ in range(200):
        if not inner.any():
            break
        m = 0.5 * (l + h)
        gm = obj.grad(m) + a
        l = np.where(inner & (gm < 0), m, l)
        h = np.where(inner & (gm >= 0), m, h)
    x = np.where(inner, 0.5 * (l + h), x)
    return float(np.sum(obj.value(x) + a * x) - z @ b)


def _interior_point(obj: _Objective, lb, ub, A, b, tol=1e-10, max_iter=300):
    """Primal-dual interior point for ``min f(x)`` with ``lb < x < ub`` and ``A x <= b``.

    The box is kept strictly feasible at every iterate (``f`` blows up at 0);
    the linear rows start infeasible and are driven feasible through slacks.
    """
    n, m = len(lb), len(b)
    x = lb + 0.75 * (ub - lb)
    s = np.maximum(b - A @ x, 1.0)
    z = np.ones(m)
    zl = np.ones(n)
    zu = np.ones(n)
    sigma = 0.1
    for it in range(1, max_iter + 1):
        g = obj.grad(x)
        rl, ru = x - lb, ub - x
        r_d = g - zl + zu + A.T @ z
        r_p = A @ x + s - b
        mu = (s @ z + rl @ zl + ru @ zu) / (m + 2 * n)
        if (np.max(np.abs(r_d)) <= tol * (1 + np.max(np.abs(g)))
                and (m == 0 or np.max(np.abs(r_p)) <= tol * (1 + np.max(np.abs(b))))
                and mu <= tol):
            break
        smu = sigma * mu
        M = np.diag(obj.hess(x) + zl / rl + zu / ru) + (A.T * (z / s)) @ A
        rhs = -g + smu / rl - smu / ru - A.T @ ((smu + z * r_p) / s)
        dx = np.linalg.solve(M, rhs)
        ds = -r_p - A @ dx
        dz = (smu - s * z - z * ds) / s
        dzl = (smu - rl * zl - zl * dx) / rl
        dzu = (smu - ru * zu + zu * dx) / ru
        step = 1.0
        for v, dv in ((rl, dx), (ru, -dx), (s, ds), (z, dz), (zl, dzl), (zu, dzu)):
            neg = dv < 0
            if neg.any():
                step = min(step, 0.995 * float(np.min(-v[neg] / dv[neg])))
        while step > 1e-12 and not np.all(np.isfinite(obj.value(x + step * dx))):
            step *= 0.5
        x_new = x + step * dx
        s_new = s + step * ds
        if not (np.all(x_new > lb) and np.all(x_new < ub) and np.all(s_new > 0)):
            # a bound is tighter than float spacing allows; the last iterate is as good as it gets
            break
        x, s = x_new, s_new
        z, zl, zu = z + step * dz, zl + step * dzl, zu + step * dzu
        sigma = 0.1 if step > 0.5 else 0.5
    return x, z, zl, zu, it


def solve_relaxed_p5(beta, gamma, cliques, config, best_effort: bool = False) -> RelaxedSolution:
    """Continuous minimum-power element counts.

    Minimizes the total power over real ``d`` with ``lb <= d <= N`` (``lb``
    the Pmax-driven minimum, or 0 in best-effort mode), every clique sum at
    most ``N`` and every cell sum at most ``N_RF * N``.  Users without a rate
    requirement are pinned to 0.
    """
    N, W = config.N, config.W_Hz
    gamma = np.ravel(np.asarray(gamma, dtype=float))
    beta = np.ravel(np.asarray(beta, dtype=float))
    n_all = len(gamma)
    if best_effort:
        lb_all = np.zeros(n_all)
    else:
        need = np.ravel(min_required_elements(gamma, beta, N, W, config.Pmax_W))
        if not check_feasibility(beta, gamma, cliques, config):
            raise InfeasibleError("rate requirements exceed what Pmax allows")
        lb_all = need.astype(float)
    active = np.flatnonzero(gamma > 0)
    d = np.zeros(n_all)
    rows = [np.asarray(c) for c in cliques]
    rows += [np.arange(k * config.U, (k + 1) * config.U) for k in range(config.K)]
    caps = [float(N)] * len(cliques) + [float(config.N_RF * N)] * config.K
    if len(active) == 0:
        return RelaxedSolution(d, 0.0, 0.0, 0.0, 0, lb_all)

    lb, ub = lb_all[active], np.full(len(active), float(N))
    fixed = lb >= ub
    free = np.flatnonzero(~fixed)
    pos = {v: i for i, v in enumerate(active)}
    A_full = np.zeros((len(rows), len(active)))
    for r, row in enumerate(rows):
        for v in row:
            if v in pos:
                A_full[r, pos[v]] = 1.0
    b = np.array(caps) - A_full[:, fixed] @ ub[fixed]
    A = A_full[:, free]
    keep = A.any(axis=1)
    A, b = A[keep], b[keep]
    if np.any(b < -1e-9):
        raise InfeasibleError("fixed demands already break a clique or cell cap")

    c = gamma[active] * N / W
    full = _Objective(c, beta[active], 1.0)
    scale = float(np.sum(full.value(ub))) or 1.0
    obj = _Objective(c[free], beta[active][free], scale)
    x_act = ub.copy()
    z = np.zeros(0)
    iters = 0
    if len(free):
        x, z, zl, zu, iters = _interior_point(obj, lb[free], ub[free], A, b)
        x_act[free] = x
        g = obj.grad(x)
        stat = np.max(np.abs(g - zl + zu + A.T @ z)) / (1 + np.max(np.abs(g)))
        slack = b - A @ x
        prim = max(0.0, float(-slack.min())) / (1 + np.max(np.abs(b))) if len(b) else 0.0
        comp_terms = [np.abs(z * slack), zl * (x - lb[free]), zu * (ub[free] - x)]
        fx = float(np.sum(obj.value(x)))
        comp = max(float(np.max(t)) if len(t) else 0.0 for t in comp_terms) / (1 + abs(fx))
        kkt = max(stat, prim, comp)
        dual = _dual_bound(obj, lb[free], ub[free], A, b, np.maximum(z, 0.0)) * scale
    else:
        kkt, dual = 0.0, 0.0
    fixed_cost = float(np.sum(full.value(ub)[fixed]))
    d[active] = x_act
    primal = float(np.sum(full.value(x_act)))
    return RelaxedSolution(d, primal, min(dual + fixed_cost, primal), float(kkt), iters, lb_all)


# ------------------------------------------------------------ integer repair

@dataclass
class AllocationResult:
    d: np.ndarray
    relaxed_optimum: float
    integer_objective: float
    feasible: bool
    best_effort: bool
    kkt_residual: float = 0.0
    d_relaxed: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "d": [int(x) for x in self.d],
            "d_relaxed": None if self.d_relaxed is None else [float(x) for x in self.d_relaxed],
            "relaxed_optimum_w": self.relaxed_optimum,
            "integer_objective_w": self.integer_objective,
            "feasible": self.feasible,
            "best_effort": self.best_effort,
            "kkt_residual": self.kkt_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(int)


def allocate_resources(relaxed: RelaxedSolution, beta, gamma, cliques, config,
                       best_effort: bool = False) -> AllocationResult:
    """Round the relaxed counts, then shave violated caps at least extra power.

    While a clique sum exceeds ``N`` or a cell sum exceeds ``N_RF * N``, the
    member of some violated row whose decrement costs the least power (and
    keeps it at or above its lower bound) loses one element; ties go to the
    lowest user index.
    """
    N, W = config.N, config.W_Hz
    gamma = np.ravel(np.asarray(gamma, dtype=float))
    beta = np.ravel(np.asarray(beta, dtype=float))
    lb = np.round(relaxed.lb).astype(int)
    d = np.clip(round_half_up(relaxed.d), lb, N)
    d[gamma <= 0] = 0
    rows = [np.asarray(c) for c in cliques]
    caps = [N] * len(rows)
    for k in range(config.K):
        rows.append(np.arange(k * config.U, (k + 1) * config.U))
        caps.append(config.N_RF * N)
    while True:
        violated = [row for row, cap in zip(rows, caps) if d[row].sum() > cap]
        if not violated:
            break
        cand = np.unique(np.concatenate(violated))
        cand = cand[d[cand] > lb[cand]]
        if len(cand) == 0:
            raise InfeasibleError("cannot meet the clique and cell caps above the lower bounds")
        cost = (objective_terms(d[cand] - 1, gamma[cand], beta[cand], N, W)
                - objective_terms(d[cand], gamma[cand], beta[cand], N, W))
        pick = cand[int(np.argmin(cost))]          # argmin keeps the first on ties
        d[pick] -= 1
    value = float(np.sum(objective_terms(d, gamma, beta, N, W)))
    return AllocationResult(d, relaxed.lower_bound, value, not best_effort, best_effort,
                            relaxed.kkt_residual, relaxed.d.copy())


# -------------------------------------------------------- fill and power

def fill_and_allocate_power(S, graph: InterferenceGraph, beta, gamma, config):
    """Hand out unassigned elements, then compute equal per-element powers.

    Elements are visited in ``(k, n, r)`` order.  An element goes to the
    cell-k user that saves the most power by gaining it, among users not in
    that column already, below ``N`` elements, and not adjacent to anyone
    scheduled in slot ``n``; ties go to the lowest index.  With no saving
    available it stays muted.

    Powers follow the closed form and are capped at ``Pmax``.  The cap only
    binds when a user ended up with fewer elements than its minimum, which
    happens in best-effort mode or after a scheduling shortfall.
    """
    N, N_RF, U, W = config.N, config.N_RF, graph.U, config.W_Hz
    S = np.array(S, dtype=int, copy=True)
    gamma = np.ravel(np.asarray(gamma, dtype=float))
    beta = np.ravel(np.asarray(beta, dtype=float))
    d_hat = served_counts(S, U)
    active = [set() for _ in range(N)]
    for k in range(graph.K):
        for r in range(N_RF):
            for n in range(N):
                if S[k, r, n]:
                    active[n].add(k * U + S[k, r, n] - 1)
    for k in range(graph.K):
        for n in range(N):
            for r in range(N_RF):
                if S[k, r, n]:
                    continue
                best, best_gain = None, 0.0
                for u in range(U):
                    v = k * U + u
                    if v in active[n] or d_hat[v] >= N or graph.adj[v] & active[n]:
                        continue
                    gain = float(objective_terms(d_hat[v], gamma[v], beta[v], N, W)
                                 - objective_terms(d_hat[v] + 1, gamma[v], beta[v], N, W))
                    if gain > best_gain:
                        best, best_gain = v, gain
                if best is not None:
                    S[k, r, n] = best % U + 1
                    active[n].add(best)
                    d_hat[best] += 1
    p_user = np.zeros(len(gamma))
    served = d_hat > 0
    p_user[served] = per_element_power(gamma[served], beta[served], d_hat[served], N, W)
    p_user = np.minimum(p_user, config.Pmax_W)
    P = np.zeros(S.shape)
    for k in range(graph.K):
        mask = S[k] > 0
        P[k][mask] = p_user[k * U + S[k][mask] - 1]
    return S, P


@dataclass
class PipelineResult:
    S: np.ndarray
    P: np.ndarray
    allocation: AllocationResult
    n0: int                    # elements of the integer d left unscheduled
    short_users: list          # users whose rate could not be met at Pmax

    @property
    def total_power(self) -> float:
        return float(self.P.sum())


def joint_pipeline(graph: InterferenceGraph, gamma, csi: CsiState, config,
                   strict: bool = False, scheduler=None) -> PipelineResult:
    """One period of the proposed scheme.

    Falls back to best effort (lower bounds dropped, powers capped) when the
    requirements are infeasible, unless ``strict`` is set, in which case
    :class:`InfeasibleError` propagates.  ``scheduler(graph, d, config)``
    defaults to :func:`schedule_nif`.
    """
    scheduler = scheduler or schedule_nif
    gamma = np.ravel(np.asarray(gamma, dtype=float))
    beta = np.ravel(csi.beta)
    cliques = [c for c in graph.maximal_cliques if len(c) > 1]
    best_effort = not check_feasibility(beta, gamma, cliques, config)
    if best_effort and strict:
        raise InfeasibleError("rate requirements are infeasible at Pmax")
    relaxed = solve_relaxed_p5(beta, gamma, cliques, config, best_effort=best_effort)
    alloc = allocate_resources(relaxed, beta, gamma, cliques, config, best_effort=best_effort)
    S0 = scheduler(graph, alloc.d, config)
    n0 = int(alloc.d.sum() - served_counts(S0, graph.U).sum())
    S, P = fill_and_allocate_power(S0, graph, beta, gamma, config)
    d_hat = served_counts(S, graph.U)
    need = np.ravel(min_required_elements(gamma, beta, config.N, config.W_Hz, config.Pmax_W))
    short = [int(v) for v in np.flatnonzero((gamma > 0) & (d_hat < need))]
    return PipelineResult(S, P, alloc, n0, short)


def power_to_json(P) -> str:
    return json.dumps({"power_w": np.asarray(P).tolist()})
