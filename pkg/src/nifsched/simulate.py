"""Full-SINR evaluation and multi-period runs with interference feedback.

A period schedules with the CSI measured in the previous one (or the
initial estimate), evaluates rates with every interference term present,
then feeds back each user's worst interference-plus-noise.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .baselines import schedule_greedy_per_slot, schedule_is_based, schedule_uncoordinated
from .config import w_to_dbm
from .graph import InterferenceGraph, build_graph
from .power import CsiState, InfeasibleError, check_feasibility, joint_pipeline, min_required_elements
from .scheduler import served_counts

RATE_RTOL = 1e-9
CDF_BINS = np.linspace(0.0, 3.0, 200)
CSV_COLUMNS = ("seed", "period", "total_power_dbm", "ee_bits_per_joule",
               "unfulfilled_rate_frac", "n0_pct")


def _active(S, U):
    """Per slot: node ids, and their (k, r) positions."""
    K, N_RF, N = S.shape
    out = []
    for n in range(N):
        k, r = np.nonzero(S[:, :, n])
        out.append((k * U + S[k, r, n] - 1, k, r))
    return out


def _received(H, nodes, cells, powers, zf):
    """Desired power and interference at each active node of one slot."""
    M = H[np.ix_(nodes, nodes)] * powers[:, None]      # M[a, b]: a's beam at b
    desired = np.diag(M).copy()
    np.fill_diagonal(M, 0.0)
    if zf:
        M[cells[:, None] == cells[None, :]] = 0.0
    return desired, M.sum(axis=0)


def compute_sinr(scenario, S, P, zf: bool = False, H=None) -> np.ndarray:
    """SINR of every element, shape ``(K, N_RF, N)``; 0 where unassigned.

    ``zf`` removes the intra-cell interference sum and nothing else.
    """
    S = np.asarray(S)
    P = np.asarray(P, dtype=float)
    H = scenario.link_gain() if H is None else H
    U = scenario.serving_beam.shape[1]
    noise = scenario.noise_w
    rho = np.zeros(S.shape)
    for n, (nodes, k, r) in enumerate(_active(S, U)):
        if len(nodes) == 0:
            continue
        desired, interf = _received(H, nodes, k, P[k, r, n], zf)
        rho[k, r, n] = desired / (noise + interf)
    return rho


def compute_rates(scenario, S, P, zf: bool = False, H=None) -> np.ndarray:
    """Average rate of each user over the period, flattened ``(K * U,)``."""
    cfg = scenario.config
    S = np.asarray(S)
    rho = compute_sinr(scenario, S, P, zf, H)
    U = scenario.serving_beam.shape[1]
    rates = np.zeros(cfg.K * U)
    k, r, n = np.nonzero(S)
    np.add.at(rates, k * U + S[k, r, n] - 1, cfg.W_Hz * np.log2(1.0 + rho[k, r, n]))
    return rates / cfg.N


def initial_interference(scenario, eta: float, P0: float | None = None) -> CsiState:
    """Rough first-period CSI: every BS leaking side-lobe power at full load."""
    cfg = scenario.config
    P0 = cfg.P0_W if P0 is None else P0
    pl = scenario.path_loss_lin                  # [bs, cell, user]
    I = eta * cfg.N_RF * P0 * cfg.g_min * pl.sum(axis=0) + scenario.noise_w
    return CsiState(scenario.alpha, I)


def measure_interference(scenario, S, P, zf: bool, previous: CsiState, H=None) -> CsiState:
    """Worst interference-plus-noise each served user saw this period.

    Users with no element keep their previous value.
    """
    S = np.asarray(S)
    P = np.asarray(P, dtype=float)
    H = scenario.link_gain() if H is None else H
    U = scenario.serving_beam.shape[1]
    worst = np.full(scenario.config.K * U, -np.inf)
    for n, (nodes, k, r) in enumerate(_active(S, U)):
        if len(nodes) == 0:
            continue
        _, interf = _received(H, nodes, k, P[k, r, n], zf)
        np.maximum.at(worst, nodes, interf + scenario.noise_w)
    I = previous.I_tilde.ravel().copy()
    seen = np.isfinite(worst)
    I[seen] = worst[seen]
    return CsiState(previous.alpha, I.reshape(previous.I_tilde.shape))


@dataclass
class PeriodMetrics:
    rates: np.ndarray
    ratio: np.ndarray              # r / gamma for users with a rate requirement
    total_power: float             # watts, summed over all elements
    energy_efficiency: float       # bits per joule with a 1 s period
    unfulfilled_rate: int
    unfulfilled_rate_frac: float
    n0: int
    n0_pct: float
    feasible: bool

    def row(self, seed: int, period: int) -> dict:
        return {
            "seed": seed,
            "period": period,
            "total_power_dbm": w_to_dbm(self.total_power) if self.total_power > 0 else float("-inf"),
            "ee_bits_per_joule": self.energy_efficiency,
            "unfulfilled_rate_frac": self.unfulfilled_rate_frac,
            "n0_pct": self.n0_pct,
        }


def period_metrics(rates, gamma, P, n0: int, config, feasible: bool) -> PeriodMetrics:
    gamma = np.ravel(gamma)
    want = gamma > 0
    ratio = rates[want] / gamma[want]
    short = int(np.sum(rates[want] < gamma[want] * (1 - RATE_RTOL)))
    power = float(np.sum(P))
    ee = float(rates.sum() / power) if power > 0 else 0.0
    total_elements = config.K * config.N_RF * config.N
    return PeriodMetrics(rates, ratio, power, ee, short,
                         short / max(int(want.sum()), 1), n0, 100.0 * n0 / total_elements,
                         feasible)


@dataclass
class PeriodRecord:
    csi: CsiState
    S: np.ndarray
    P: np.ndarray
    metrics: PeriodMetrics
    relaxed_optimum: float | None = None
    kkt_residual: float | None = None
    integer_objective: float | None = None


@dataclass
class RunTrace:
    seed: int
    mode: str
    zf: bool
    periods: list = field(default_factory=list)

    def __len__(self):
        return len(self.periods)

    def power_trace(self) -> np.ndarray:
        return np.array([p.metrics.total_power for p in self.periods])

    def rows(self) -> list:
        return [p.metrics.row(self.seed, t) for t, p in enumerate(self.periods, start=1)]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "mode": self.mode, "zf": self.zf,
            "periods": [{
                "csi": p.csi.to_dict(),
                "schedule": p.S.tolist(),
                "power_w": p.P.tolist(),
                "rates": p.metrics.rates.tolist(),
                "metrics": p.metrics.row(self.seed, t),
                "relaxed_optimum_w": p.relaxed_optimum,
                "kkt_residual": p.kkt_residual,
            } for t, p in enumerate(self.periods, start=1)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


_SCHEDULERS = {
    "nif": None,
    "greedy": schedule_greedy_per_slot,
    "uncoordinated": schedule_uncoordinated,
}


def run_period(scenario, graph: InterferenceGraph, gamma, csi: CsiState, mode: str = "nif",
               strict: bool = False):
    """Schedule and power one period.  Returns ``(S, P, n0, feasible, extras)``."""
    cfg = scenario.config
    if mode == "is_based":
        S, P, best_effort = schedule_is_based(graph, gamma, csi, cfg)
        if best_effort and strict:
            raise InfeasibleError("IS-based schedule cannot meet every rate at Pmax")
        need = np.ravel(min_required_elements(np.ravel(gamma), np.ravel(csi.beta), cfg.N,
                                              cfg.W_Hz, cfg.Pmax_W))
        n0 = int(np.maximum(need - served_counts(S, cfg.U), 0).sum())
        return S, P, n0, not best_effort, {}
    if mode not in _SCHEDULERS:
        raise ValueError(f"unknown mode {mode!r}")
    res = joint_pipeline(graph, gamma, csi, cfg, strict=strict, scheduler=_SCHEDULERS[mode])
    extras = {"relaxed_optimum": res.allocation.relaxed_optimum,
              "kkt_residual": res.allocation.kkt_residual,
              "integer_objective": res.allocation.integer_objective}
    return res.S, res.P, res.n0, res.allocation.feasible, extras


def run_consecutive(scenario, gamma, graph: InterferenceGraph | None = None, mode: str = "nif",
                    zf: bool = False, eta: float | None = None, periods: int | None = None,
                    strict: bool = False, seed: int = 0) -> RunTrace:
    """Chain ``periods`` scheduling periods, feeding measured CSI forward."""
    cfg = scenario.config
    graph = build_graph(scenario, cfg.epsilon) if graph is None else graph
    eta = cfg.eta if eta is None else eta
    periods = cfg.periods if periods is None else periods
    gamma = np.ravel(gamma)
    H = scenario.link_gain()
    csi = initial_interference(scenario, eta)
    trace = RunTrace(seed, mode, zf)
    for _ in range(periods):
        S, P, n0, feasible, extras = run_period(scenario, graph, gamma, csi, mode, strict)
        rates = compute_rates(scenario, S, P, zf, H)
        metrics = period_metrics(rates, gamma, P, n0, cfg, feasible)
        trace.periods.append(PeriodRecord(csi, S, P, metrics, **extras))
        csi = measure_interference(scenario, S, P, zf, csi, H)
    return trace


def summarize_metrics(traces, period: int | None = None) -> dict:
    """Averages across traces at one period (default: the last) plus an r/gamma CDF."""
    traces = list(traces)
    if not traces or not any(len(t) for t in traces):
        raise ValueError("nothing to summarize")
    recs = [t.periods[(period or len(t)) - 1] for t in traces if len(t)]
    power = np.array([r.metrics.total_power for r in recs])
    ee = np.array([r.metrics.energy_efficiency for r in recs])
    unf = np.array([r.metrics.unfulfilled_rate_frac for r in recs])
    n0 = np.array([r.metrics.n0_pct for r in recs])
    ratios = np.concatenate([r.metrics.ratio for r in recs])
    cdf = (np.searchsorted(np.sort(ratios), CDF_BINS, side="right") / len(ratios)
           if len(ratios) else np.zeros_like(CDF_BINS))
    return {
        "realizations": len(recs),
        "mean_power_w": float(power.mean()),
        "p10_power_w": float(np.percentile(power, 10)),
        "p90_power_w": float(np.percentile(power, 90)),
        "mean_ee_bits_per_joule": float(ee.mean()),
        "mean_unfulfilled_rate_frac": float(unf.mean()),
        "mean_n0_pct": float(n0.mean()),
        "feasible_frac": float(np.mean([r.metrics.feasible for r in recs])),
        "cdf_x": CDF_BINS.tolist(),
        "cdf_y": cdf.tolist(),
    }


def feasibility_table(scenarios_and_gammas, pmax_dbm_list, eta: float | None = None) -> list:
    """Share of realizations each scheme can serve fully, per ``Pmax``.

    Uses the first-period CSI.  Rows are ``(pmax_dbm, proposed, is_based)``.
    """
    prepared = []
    for scenario, gamma in scenarios_and_gammas:
        cfg = scenario.config
        graph = build_graph(scenario, cfg.epsilon)
        csi = initial_interference(scenario, cfg.eta if eta is None else eta)
        cliques = [c for c in graph.maximal_cliques if len(c) > 1]
        prepared.append((cfg, graph, csi, cliques, np.ravel(gamma)))
    rows = []
    for pmax in pmax_dbm_list:
        ok_p = ok_i = 0
        for cfg, graph, csi, cliques, gamma in prepared:
            cfg = cfg.replace(Pmax_dBm=float(pmax))
            ok_p += check_feasibility(np.ravel(csi.beta), gamma, cliques, cfg)
            ok_i += not schedule_is_based(graph, gamma, csi, cfg)[2]
        count = max(len(prepared), 1)
        rows.append((float(pmax), ok_p / count, ok_i / count))
    return rows


def metrics_csv(traces) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for t in sorted(traces, key=lambda t: t.seed):
        for row in t.rows():
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
