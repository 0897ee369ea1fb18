"""Stroboscopic cycle, energetics ledger, limit cycle and operating mode.

Each cycle attaches freshly prepared baths to the chain, runs the heat stroke
on ``(C, 1..N, H)``, traces the baths out and runs the work stroke on the
chain. Heats are positive when energy enters the chain; work is positive when
energy leaves it.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from twostroke.circuits import (
    RESET,
    X,
    Circuit,
    Gate,
    apply_circuit,
    build_heat_stroke_circuit,
    build_work_stroke_circuit,
    sample_sigma_z,
)
from twostroke.model import (
    ChainSpec,
    bath_states,
    ground_state,
    stroke_hamiltonians,
)
from twostroke.qmath import (
    SIGMA_Z,
    DensityMatrix,
    embed,
    herm_propagator,
    partial_trace,
    tensor,
    trace_distance,
)
from twostroke.vqt import BathBranch, BathPair, VqtResult, ansatz_gates, prepare_bath_pair, train_bath

EXECUTIONS = ("exact", "circuit", "shots")
BATH_PREPS = ("exact_gibbs", "vqt")
STRATEGIES = ("mixed", "branches")
DEAD_BAND = 1e-9


class Mode(str, Enum):
    HEAT_ENGINE = "HeatEngine"
    REFRIGERATOR = "Refrigerator"
    ACCELERATOR = "Accelerator"
    OTHER = "Other"


@dataclass(frozen=True)
class EngineConfig:
    spec: ChainSpec
    tau_q: float
    tau_w: float
    n_cycles: int = 50
    execution: str = "exact"
    shots: int = 8192
    seed: int = 0
    bath_prep: str = "exact_gibbs"
    vqt: tuple[VqtResult, VqtResult] | None = None
    initial_chain_state: DensityMatrix | None = None
    strategy: str = "mixed"
    heat_steps: int = 1
    work_steps: int | None = None  # None: exact lowering for two sites

    def __post_init__(self):
        if not (self.tau_q >= 0 and self.tau_w >= 0):
            raise ValueError("stroke durations must be non-negative")
        if self.n_cycles < 1:
            raise ValueError(f"n_cycles must be >= 1, got {self.n_cycles}")
        if self.execution not in EXECUTIONS:
            raise ValueError(f"execution must be one of {EXECUTIONS}, got {self.execution!r}")
        if self.bath_prep not in BATH_PREPS:
            raise ValueError(f"bath_prep must be one of {BATH_PREPS}, got {self.bath_prep!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.initial_chain_state is not None and self.initial_chain_state.dims != self.spec.chain_dims:
            raise ValueError("initial chain state does not match the chain size")

    @property
    def chain_start(self) -> DensityMatrix:
        return self.initial_chain_state if self.initial_chain_state is not None else ground_state(self.spec)


@dataclass
class CycleEntry:
    cycle: int
    q_cold: float
    q_hot: float
    work: float
    dv_cold: float
    dv_hot: float
    q_cold_bath: float  # heat from the bath energy change
    q_hot_bath: float
    sz_pre: tuple[float, ...]  # <sigma_z^i> at the start of the cycle
    sz_mid: tuple[float, ...]  # after the heat stroke
    sz_post: tuple[float, ...]  # after the work stroke
    err_q_cold: float = 0.0
    err_q_hot: float = 0.0
    err_work: float = 0.0
    err_first_law: float = 0.0

    @property
    def q_sum(self) -> float:
        return self.q_cold + self.q_hot

    @property
    def first_law_residual(self) -> float:
        return self.q_cold + self.q_hot - self.work


CSV_COLUMNS = (
    "cycle", "q_cold", "q_hot", "work", "q_sum", "dv_cold", "dv_hot",
    "sz1_pre", "sz1_mid", "sz2_pre", "sz2_mid", "err_q_cold", "err_q_hot", "err_work",
)  # fmt: skip


@dataclass
class CycleLedger:
    entries: list[CycleEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __iter__(self):
        return iter(self.entries)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.entries])

    def cumulative(self, name: str) -> np.ndarray:
        return np.cumsum(self.column(name))

    def rows(self) -> list[dict]:
        out = []
        for e in self.entries:
            out.append(
                {
                    "cycle": e.cycle,
                    "q_cold": e.q_cold,
                    "q_hot": e.q_hot,
                    "work": e.work,
                    "q_sum": e.q_sum,
                    "dv_cold": e.dv_cold,
                    "dv_hot": e.dv_hot,
                    "sz1_pre": e.sz_pre[0],
                    "sz1_mid": e.sz_mid[0],
                    "sz2_pre": e.sz_pre[-1],
                    "sz2_mid": e.sz_mid[-1],
                    "err_q_cold": e.err_q_cold,
                    "err_q_hot": e.err_q_hot,
                    "err_work": e.err_work,
                }
            )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (repr(float(v)) if k != "cycle" else v) for k, v in row.items()})
        return buf.getvalue()


@dataclass
class Trajectory:
    starts: list[DensityMatrix]  # rho^1 ... rho^{n+1}
    mids: list[DensityMatrix]  # tilde rho^1 ... tilde rho^n
    baths: list[DensityMatrix]  # bath pair attached at each cycle
    globals_pre: list[DensityMatrix]
    globals_post: list[DensityMatrix]


@dataclass(frozen=True)
class LimitCycleReport:
    reached: bool
    cycle_index: int | None
    q_cold_star: float
    q_hot_star: float
    work_star: float
    first_law_residual: float
    first_law_error: float
    mode: Mode
    final_distance: float

    def to_dict(self) -> dict:
        return {
            "reached": self.reached,
            "cycle_index": self.cycle_index,
            "q_cold_star": self.q_cold_star,
            "q_hot_star": self.q_hot_star,
            "work_star": self.work_star,
            "first_law_residual": self.first_law_residual,
            "first_law_error": self.first_law_error,
            "mode": self.mode.value,
            "final_distance": self.final_distance,
        }


def bath_side_heat(global_pre: DensityMatrix, global_post: DensityMatrix, spec: ChainSpec) -> tuple[float, float]:
    """``Q_x = -Tr[H_x (rho_x' - rho_x)]`` for the cold and hot baths."""
    _check_heat_register(global_pre, global_post, spec)
    hs = stroke_hamiltonians(spec)
    delta = global_post.matrix - global_pre.matrix
    return (
        -float(np.trace(hs.h_cold @ delta).real),
        -float(np.trace(hs.h_hot @ delta).real),
    )


def onoff_work(global_pre: DensityMatrix, global_post: DensityMatrix, spec: ChainSpec) -> tuple[float, float]:
    """Switching work ``-Delta V_x`` for the cold and hot couplings."""
    _check_heat_register(global_pre, global_post, spec)
    hs = stroke_hamiltonians(spec)
    delta = global_post.matrix - global_pre.matrix
    return (
        -float(np.trace(hs.v_cold @ delta).real),
        -float(np.trace(hs.v_hot @ delta).real),
    )


def _check_heat_register(a: DensityMatrix, b: DensityMatrix, spec: ChainSpec) -> None:
    if a.dims != spec.heat_dims or b.dims != spec.heat_dims:
        raise ValueError(f"expected states over {spec.n_qubits} qubits (C, chain, H)")


def sigma_z_profile(chain_state: DensityMatrix) -> tuple[float, ...]:
    dims = chain_state.dims
    return tuple(
        float(np.trace(embed(SIGMA_Z, k, dims) @ chain_state.matrix).real) for k in range(len(dims))
    )


def gibbs_bath_pair(spec: ChainSpec) -> BathPair:
    """Exact thermal baths with their diagonal four-branch decomposition."""
    rc, rh = bath_states(spec)
    pc, ph = np.real(np.diag(rc.matrix)), np.real(np.diag(rh.matrix))
    branches = tuple(
        BathBranch(float(pc[i] * ph[j]), (i, j), tensor(DensityMatrix.basis(i, (2,)), DensityMatrix.basis(j, (2,))))
        for i in (0, 1)
        for j in (0, 1)
    )
    return BathPair(tensor(rc, rh), branches, None, None)


def train_baths(spec: ChainSpec, **kwargs) -> tuple[VqtResult, VqtResult]:
    return (
        train_bath(spec.omega_c, spec.t_cold, **kwargs),
        train_bath(spec.omega_h, spec.t_hot, **kwargs),
    )


def _attach(bath: DensityMatrix, chain: DensityMatrix) -> DensityMatrix:
    """``rho_C (x) rho_S (x) rho_H`` from a (C, H) product state."""
    rc = partial_trace(bath, [0])
    rh = partial_trace(bath, [1])
    return tensor(rc, chain, rh)


def _branch_prep(pair: BathPair, branch: BathBranch, n_qubits: int) -> Circuit:
    """Reset both bath qubits and prepare one pure branch from ``|0>``."""
    hot = n_qubits - 1
    gates: list[Gate] = [RESET(0), RESET(hot)]
    for qubit, bit, params in ((0, branch.basis[0], pair.cold), (hot, branch.basis[1], pair.hot)):
        if bit:
            gates.append(X(qubit))
        if params is not None:
            gates += ansatz_gates(params[1], qubit)
    return Circuit(n_qubits, gates)


def _shift(circuit: Circuit, offset: int, width: int) -> Circuit:
    return Circuit(width, [Gate(g.kind, tuple(q + offset for q in g.targets), g.angle) for g in circuit.gates])


class _Sampler:
    """Shot estimates of every site's ``sigma_z`` with their standard errors."""

    def __init__(self, shots: int, seed):
        self.shots = shots
        self.rng = np.random.default_rng(seed)

    def __call__(self, chain_state: DensityMatrix) -> tuple[np.ndarray, np.ndarray]:
        ests = [sample_sigma_z(chain_state, k, self.shots, self.rng) for k in range(chain_state.n_subsystems)]
        return np.array([e.mean for e in ests]), np.array([e.std_error for e in ests])


def run_cycles(cfg: EngineConfig, seed=None) -> tuple[Trajectory, CycleLedger]:
    """Run ``cfg.n_cycles`` cycles and book the energetics of each one.

    ``seed`` overrides ``cfg.seed`` for the shot sampler (used for
    repetitions); the state evolution itself is deterministic.
    """
    spec = cfg.spec
    n = spec.n_sites
    width = spec.n_qubits
    hs = stroke_hamiltonians(spec)
    half_omegas = 0.5 * np.array(spec.omegas)

    if cfg.bath_prep == "vqt":
        cold, hot = cfg.vqt if cfg.vqt is not None else train_baths(spec)
        pair = prepare_bath_pair(spec, cold, hot)
    else:
        pair = gibbs_bath_pair(spec)

    if cfg.execution == "exact":
        u_q = herm_propagator(hs.h_q, cfg.tau_q)
        u_w = herm_propagator(hs.h_w, cfg.tau_w)
        heat = lambda rho: rho.evolve(u_q)  # noqa: E731
        work = lambda rho: rho.evolve(u_w)  # noqa: E731
    else:
        heat_circ = build_heat_stroke_circuit(spec, cfg.tau_q, cfg.heat_steps)
        work_circ = build_work_stroke_circuit(spec, cfg.tau_w, cfg.work_steps)
        heat = lambda rho: apply_circuit(rho, heat_circ)  # noqa: E731
        work = lambda rho: apply_circuit(rho, work_circ)  # noqa: E731

    sampler = _Sampler(cfg.shots, cfg.seed if seed is None else seed) if cfg.execution == "shots" else None

    chain = cfg.chain_start
    # the full register carries the used baths from one cycle into the next
    register = tensor(DensityMatrix.basis(0, (2,)), chain, DensityMatrix.basis(0, (2,)))
    traj = Trajectory([chain], [], [], [], [])
    ledger = CycleLedger()
    keep_chain = list(range(1, n + 1))

    if sampler is not None:
        sz_pre, se_pre = sampler(chain)
    else:
        sz_pre, se_pre = np.array(sigma_z_profile(chain)), np.zeros(n)

    for cycle in range(1, cfg.n_cycles + 1):
        pre = _attach(pair.state, chain)
        if cfg.strategy == "mixed":
            post = heat(pre)
        else:
            acc_pre = np.zeros_like(pre.matrix)
            acc_post = np.zeros_like(pre.matrix)
            for branch in pair.branches:
                if cfg.execution == "exact":
                    start = tensor(partial_trace(branch.state, [0]), chain, partial_trace(branch.state, [1]))
                else:
                    start = apply_circuit(register, _branch_prep(pair, branch, width))
                acc_pre += branch.weight * start.matrix
                acc_post += branch.weight * heat(start).matrix
            pre = DensityMatrix(acc_pre, pre.dims, check=False)
            post = DensityMatrix(acc_post, pre.dims, check=False)
        mid = partial_trace(post, keep_chain)

        q_bath = bath_side_heat(pre, post, spec)
        w_onoff = onoff_work(pre, post, spec)
        if cfg.execution == "exact":
            new_chain = work(mid)
        else:
            register = apply_circuit(post, _shift(work_circ, 1, width))
            new_chain = partial_trace(register, keep_chain)

        if sampler is not None:
            sz_mid, se_mid = sampler(mid)
            sz_post, se_post = sampler(new_chain)
        else:
            sz_mid, se_mid = np.array(sigma_z_profile(mid)), np.zeros(n)
            sz_post, se_post = np.array(sigma_z_profile(new_chain)), np.zeros(n)

        q_cold = half_omegas[0] * (sz_mid[0] - sz_pre[0])
        q_hot = half_omegas[-1] * (sz_mid[-1] - sz_pre[-1])
        w = -float(np.sum(half_omegas * (sz_post - sz_mid)))
        ledger.entries.append(
            CycleEntry(
                cycle=cycle,
                q_cold=float(q_cold),
                q_hot=float(q_hot),
                work=w,
                dv_cold=-w_onoff[0],
                dv_hot=-w_onoff[1],
                q_cold_bath=q_bath[0],
                q_hot_bath=q_bath[1],
                sz_pre=tuple(map(float, sz_pre)),
                sz_mid=tuple(map(float, sz_mid)),
                sz_post=tuple(map(float, sz_post)),
                err_q_cold=float(half_omegas[0] * math.hypot(se_mid[0], se_pre[0])),
                err_q_hot=float(half_omegas[-1] * math.hypot(se_mid[-1], se_pre[-1])),
                err_work=float(np.sqrt(np.sum(half_omegas**2 * (se_post**2 + se_mid**2)))),
                err_first_law=float(np.sqrt(np.sum(half_omegas**2 * (se_post**2 + se_pre**2)))),
            )
        )
        traj.mids.append(mid)
        traj.starts.append(new_chain)
        traj.baths.append(partial_trace(pre, [0, n + 1]))
        traj.globals_pre.append(pre)
        traj.globals_post.append(post)
        chain = new_chain
        sz_pre, se_pre = sz_post, se_post

    return traj, ledger


def observed_mode(q_cold: float, q_hot: float, work: float, dead_band: float = DEAD_BAND) -> Mode:
    pos = lambda v: v > dead_band  # noqa: E731
    neg = lambda v: v < -dead_band  # noqa: E731
    if pos(q_hot) and neg(q_cold) and pos(work):
        return Mode.HEAT_ENGINE
    if pos(q_cold) and neg(q_hot) and neg(work):
        return Mode.REFRIGERATOR
    if pos(q_hot) and neg(q_cold) and neg(work):
        return Mode.ACCELERATOR
    return Mode.OTHER


def detect_limit_cycle(trajectory: Trajectory, ledger: CycleLedger, tol: float = 1e-6) -> LimitCycleReport:
    """Find the first cycle after which successive start states stay within ``tol``.

    The limit-cycle energetics are those of the final cycle. Fewer than two
    cycles give a not-reached report.
    """
    starts = trajectory.starts
    dists = [trace_distance(b, a) for a, b in zip(starts[:-1], starts[1:])]
    last = ledger[-1]
    reached, index = False, None
    if len(ledger) >= 2:
        for k in range(len(dists)):
            if all(d < tol for d in dists[k:]):
                reached, index = True, k + 1
                break
    return LimitCycleReport(
        reached=reached,
        cycle_index=index,
        q_cold_star=last.q_cold,
        q_hot_star=last.q_hot,
        work_star=last.work,
        first_law_residual=abs(last.first_law_residual),
        first_law_error=last.err_first_law,
        mode=observed_mode(last.q_cold, last.q_hot, last.work),
        final_distance=dists[-1] if dists else math.nan,
    )


def classify_mode(spec: ChainSpec) -> Mode:
    """Predicted operating mode of the two-site machine.

    Heat engine for ``T_C/T_H < w1/w2 < 1``, refrigerator below that window,
    accelerator above it. Ratios equal to either boundary carry no signed
    power and are reported as ``Other``.
    """
    if spec.n_sites != 2:
        raise NotImplementedError("mode classification is defined for two-site chains")
    r = spec.omegas[0] / spec.omegas[1]
    t = spec.t_cold / spec.t_hot
    if math.isclose(r, t, rel_tol=1e-12) or math.isclose(r, 1.0, rel_tol=1e-12):
        return Mode.OTHER
    if r < t:
        return Mode.REFRIGERATOR
    if r < 1.0:
        return Mode.HEAT_ENGINE
    return Mode.ACCELERATOR


def verify_mode(report: LimitCycleReport, predicted: Mode, dead_band: float = DEAD_BAND) -> bool:
    """Whether the limit-cycle sign pattern matches ``predicted``."""
    if not report.reached:
        raise ValueError("cannot verify the mode of a run that has not reached its limit cycle")
    return observed_mode(report.q_cold_star, report.q_hot_star, report.work_star, dead_band) == Mode(predicted)


@dataclass
class RepetitionSummary:
    """Mean and spread over repeated shot-sampled runs, one row per cycle."""

    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    repetitions: int
    first_law_mean: float
    first_law_error: float  # propagated shot-noise standard error of the mean

    def rows(self) -> list[dict]:
        n = len(self.mean["cycle"])
        out = []
        for k in range(n):
            row = {"cycle": int(self.mean["cycle"][k])}
            for name in ("q_cold", "q_hot", "work", "q_sum"):
                row[name] = float(self.mean[name][k])
                row[f"{name}_3sigma"] = float(3 * self.std[name][k])
            out.append(row)
        return out


def summarize_repetitions(ledgers: Sequence[CycleLedger]) -> RepetitionSummary:
    fields_ = ("cycle", "q_cold", "q_hot", "work", "q_sum")
    stacked = {
        name: np.array([[getattr(e, name) for e in led] for led in ledgers]) for name in fields_
    }
    r = len(ledgers)
    ddof = 1 if r > 1 else 0
    residuals = np.array([led[-1].first_law_residual for led in ledgers])
    errors = np.array([led[-1].err_first_law for led in ledgers])
    return RepetitionSummary(
        mean={k: v.mean(axis=0) for k, v in stacked.items()},
        std={k: v.std(axis=0, ddof=ddof) for k, v in stacked.items()},
        repetitions=r,
        first_law_mean=float(residuals.mean()),
        first_law_error=float(np.sqrt(np.sum(errors**2)) / r),
    )


def mean_ledger(ledgers: Sequence[CycleLedger]) -> CycleLedger:
    """Cycle-by-cycle mean of repeated runs; errors become standard errors of the mean."""
    if not ledgers:
        raise ValueError("no ledgers to average")
    r = len(ledgers)
    out = CycleLedger()
    for rows in zip(*(led.entries for led in ledgers)):
        avg = lambda name: float(np.mean([getattr(e, name) for e in rows]))  # noqa: E731
        sem = lambda name: float(np.sqrt(np.sum([getattr(e, name) ** 2 for e in rows])) / r)  # noqa: E731
        prof = lambda name: tuple(np.mean([getattr(e, name) for e in rows], axis=0).tolist())  # noqa: E731
        out.entries.append(
            CycleEntry(
                cycle=rows[0].cycle,
                q_cold=avg("q_cold"),
                q_hot=avg("q_hot"),
                work=avg("work"),
                dv_cold=avg("dv_cold"),
                dv_hot=avg("dv_hot"),
                q_cold_bath=avg("q_cold_bath"),
                q_hot_bath=avg("q_hot_bath"),
                sz_pre=prof("sz_pre"),
                sz_mid=prof("sz_mid"),
                sz_post=prof("sz_post"),
                err_q_cold=sem("err_q_cold"),
                err_q_hot=sem("err_q_hot"),
                err_work=sem("err_work"),
                err_first_law=sem("err_first_law"),
            )
        )
    return out


def _ledger_only(cfg: EngineConfig, seed) -> CycleLedger:
    return run_cycles(cfg, seed=seed)[1]


def run_repetitions(cfg: EngineConfig, repetitions: int, jobs: int = 1) -> list[CycleLedger]:
    """Independent shot-sampled runs seeded from ``SeedSequence(cfg.seed)``.

    With ``jobs > 1`` the runs go to a process pool. Each run owns its seed,
    so the result does not depend on ``jobs``.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    seeds = np.random.SeedSequence(cfg.seed).spawn(repetitions)
    if jobs <= 1:
        return [_ledger_only(cfg, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_ledger_only, [cfg] * repetitions, seeds))
