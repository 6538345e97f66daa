"""Quantum trajectory ensembles: the sampled Markov chain of conditional
states, the mismatched-initial-state filter, and per-step observables
(sector posteriors Q, Lyapunov value W, log-likelihood accumulators).

Trajectory t of an ensemble owns the splitmix64 stream seeded by
``mix64(root_seed, t)``; outcomes are drawn by inverse CDF in the declared
outcome order, so ensembles are bit-reproducible regardless of execution
order.  The inner loop lives in :mod:`qtsector._kernels`.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import instrument as inst
from . import rng
from ._kernels import USE_NUMBA, _traj_kernel, record_width
from .sectors import SectorDecomposition

DEFAULT_P_FLOOR = 1e-14


class TrajectoryError(RuntimeError):
    pass


@dataclass
class RunConfig:
    steps: int
    trajectories: int
    root_seed: int = 0
    initial_state: np.ndarray = None
    filter_state: np.ndarray = None   # positive definite, or None for no filter
    record_stride: int = 1
    p_floor: float = DEFAULT_P_FLOOR

    def __post_init__(self):
        if self.steps < 0 or self.trajectories < 0:
            raise ValueError("steps and trajectories must be >= 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


def q_vector(decomp: SectorDecomposition, rho: np.ndarray) -> np.ndarray:
    """Sector posteriors Q(alpha) = tr(E_alpha rho), clamped to [0, 1]."""
    rho = np.asarray(rho, dtype=complex)
    q = np.array([np.trace(e @ rho).real for e in decomp.sector_effects])
    return np.clip(q, 0.0, 1.0)


def lyapunov_w(q: np.ndarray) -> float:
    """W = sum over ordered pairs alpha != beta of sqrt(q_a q_b).

    Each unordered pair is counted twice; equivalently
    (sum sqrt(q))^2 - sum q.
    """
    q = np.asarray(q, dtype=float)
    return max(float(np.sqrt(q).sum() ** 2 - q.sum()), 0.0)


def step(instr: inst.Instrument, rho: np.ndarray, u: float,
         p_floor: float = DEFAULT_P_FLOOR):
    """One trajectory step driven by a uniform u in [0, 1).

    Returns (outcome_label, new_rho, p_raw) where p_raw is the raw outcome
    probability tr(Phi*_a(rho)).  Reference implementation of the kernel's
    sampling rule, used for oracle tests and exact enumeration.
    """
    from .matcore import clip_to_state
    probs = []
    for a in instr.outcomes:
        p = float(np.trace(inst.apply_schrodinger(instr, a, rho)).real)
        probs.append(p if p >= p_floor else 0.0)
    tot = sum(probs)
    if tot < instr.dim * p_floor:
        raise TrajectoryError("all outcome probabilities below p_floor")
    target = u * tot
    idx, c = 0, probs[0]
    while c < target and idx < len(probs) - 1:
        idx += 1
        c += probs[idx]
    while probs[idx] <= 0.0 and idx < len(probs) - 1:
        idx += 1
    a = instr.outcomes[idx]
    post = inst.apply_schrodinger(instr, a, rho)
    p_raw = float(np.trace(post).real)
    return a, clip_to_state(post / p_raw), p_raw


@dataclass
class EnsembleRecords:
    """Output of :func:`run_ensemble`.

    ``records`` holds one row per (trajectory, recorded step); rows of
    failed trajectories are NaN-filled past the failure point.  Per-step
    ensemble statistics cover every step (not only recorded ones) and count
    successful trajectories only.
    """

    columns: list
    records: np.ndarray            # (n_traj * n_rec, width)
    record_steps: np.ndarray       # 1-based steps present in records
    statuses: np.ndarray           # -1 ok, else failing step
    w_mean: np.ndarray
    w_se: np.ndarray
    what_mean: np.ndarray
    what_se: np.ndarray
    q_mean: np.ndarray             # (steps, n_sec)
    final_q: np.ndarray            # (n_traj, n_sec), NaN for failed
    final_qhat: np.ndarray
    outcome_labels: tuple
    n_sectors: int
    config: RunConfig

    @property
    def n_trajectories(self) -> int:
        return self.statuses.shape[0]

    @property
    def n_ok(self) -> int:
        return int(np.count_nonzero(self.statuses == -1))

    def rows_for(self, t: int) -> np.ndarray:
        n_rec = self.record_steps.shape[0]
        return self.records[t * n_rec:(t + 1) * n_rec]

    def column(self, name: str) -> np.ndarray:
        return self.records[:, self.columns.index(name)]

    def final_rows(self) -> np.ndarray:
        n_rec = self.record_steps.shape[0]
        return self.records[n_rec - 1::n_rec]

    def summary_dict(self) -> dict:
        return {
            "trajectories": int(self.n_trajectories),
            "steps": int(self.config.steps),
            "failed": int(self.n_trajectories - self.n_ok),
            "failed_trajectories": [int(t) for t in np.flatnonzero(self.statuses != -1)],
            "w_mean": [float(x) for x in self.w_mean],
            "w_se": [float(x) for x in self.w_se],
            "what_mean": [_jsonf(x) for x in self.what_mean],
            "q_mean": [[float(x) for x in row] for row in self.q_mean],
        }


def _jsonf(x):
    return None if (isinstance(x, float) and math.isnan(x)) or np.isnan(x) else float(x)


def _columns(n_sec: int) -> list:
    cols = ["traj", "step", "outcome"]
    cols += [f"Q_s{s}" for s in range(n_sec)]
    cols += [f"Qhat_s{s}" for s in range(n_sec)]
    cols += ["W", "What", "loglik_true"]
    cols += [f"loglik_ch_s{s}" for s in range(n_sec)]
    cols += [f"loglik_sec_s{s}" for s in range(n_sec)]
    return cols


def run_ensemble(instr: inst.Instrument, decomp: SectorDecomposition,
                 config: RunConfig) -> EnsembleRecords:
    """Simulate ``config.trajectories`` independent trajectories.

    Per-trajectory failures (numerical collapse) are flagged in
    ``statuses`` and excluded from ensemble statistics; they do not abort
    the run.
    """
    d = instr.dim
    n_sec = decomp.n_sectors
    rho0 = np.ascontiguousarray(config.initial_state, dtype=np.complex128)
    if rho0.shape != (d, d):
        raise ValueError(f"initial state shape {rho0.shape} != ({d}, {d})")
    use_filter = config.filter_state is not None
    if use_filter:
        rhohat0 = np.ascontiguousarray(config.filter_state, dtype=np.complex128)
        if float(np.linalg.eigvalsh((rhohat0 + rhohat0.conj().T) / 2)[0]) <= 1e-9:
            raise ValueError("filter state must be positive definite")
    else:
        rhohat0 = np.eye(d, dtype=np.complex128) / d

    kraus = np.ascontiguousarray(
        np.concatenate([np.stack(instr.kraus[a]) for a in instr.outcomes]),
        dtype=np.complex128)
    k_offs = np.zeros(instr.n_outcomes + 1, dtype=np.int64)
    for ia, a in enumerate(instr.outcomes):
        k_offs[ia + 1] = k_offs[ia] + len(instr.kraus[a])
    m_ops = np.stack([inst.apply_heisenberg(instr, a, np.eye(d, dtype=complex))
                      for a in instr.outcomes]).astype(np.complex128)
    e_alphas = np.stack(decomp.sector_effects).astype(np.complex128)
    sec_refs = np.stack(decomp.reference_states()).astype(np.complex128)

    # Sector-deformed families evaluating the chaotic conditional laws by
    # normalized log-space propagation; zero-padded to a homogeneous d x d
    # block so one kernel signature covers sectors of different dimension.
    from .sectors import sector_deformed_instrument
    n_k = int(k_offs[-1])
    ch_kraus = np.zeros((n_sec, n_k, d, d), dtype=np.complex128)
    ch_states = np.zeros((n_sec, d, d), dtype=np.complex128)
    for s, e in enumerate(decomp.sector_effects):
        dfm = sector_deformed_instrument(instr, e)
        m = dfm.instrument.dim
        pos = 0
        for a in instr.outcomes:
            for k in dfm.instrument.kraus[a]:
                ch_kraus[s, pos, :m, :m] = k
                pos += 1
        ch_states[s, :m, :m] = dfm.state

    steps = config.steps
    rec_steps = np.arange(config.record_stride, steps + 1, config.record_stride,
                          dtype=np.int64)
    if steps > 0 and (rec_steps.size == 0 or rec_steps[-1] != steps):
        rec_steps = np.append(rec_steps, np.int64(steps))
    n_rec = rec_steps.shape[0]
    width = record_width(n_sec)
    cols = _columns(n_sec)

    n_traj = config.trajectories
    records = np.full((n_traj * n_rec, width), np.nan)
    statuses = np.full(n_traj, -1, dtype=np.int64)
    w_sum = np.zeros(steps)
    w2_sum = np.zeros(steps)
    what_sum = np.zeros(steps)
    what2_sum = np.zeros(steps)
    q_sum = np.zeros((steps, n_sec))
    final_q = np.full((n_traj, n_sec), np.nan)
    final_qhat = np.full((n_traj, n_sec), np.nan)

    w_series = np.zeros(steps)
    what_series = np.zeros(steps)
    q_series = np.zeros((steps, n_sec))
    n_ok = 0
    for t in range(n_traj):
        u = rng.trajectory_uniforms(config.root_seed, t, steps)
        rec_view = records[t * n_rec:(t + 1) * n_rec]
        status = _traj_kernel(
            t, kraus, k_offs, m_ops, rho0, rhohat0, use_filter, e_alphas,
            sec_refs, ch_kraus, ch_states, u, config.p_floor, rec_steps, rec_view,
            w_series, what_series, q_series)
        statuses[t] = status
        if status == -1:
            n_ok += 1
            w_sum += w_series
            w2_sum += w_series ** 2
            if use_filter:
                what_sum += what_series
                what2_sum += what_series ** 2
            q_sum += q_series
            if steps > 0:
                final_q[t] = q_series[-1]
                final_qhat[t] = rec_view[-1, 3 + n_sec:3 + 2 * n_sec]
        else:
            # Mark the rows past the failure point; earlier rows stay valid.
            bad = rec_steps >= status
            rec_view[bad, 0] = t
            rec_view[bad, 1] = rec_steps[bad]

    denom = max(n_ok, 1)
    w_mean = w_sum / denom
    w_se = np.sqrt(np.clip(w2_sum / denom - w_mean ** 2, 0.0, None) / denom)
    if use_filter:
        what_mean = what_sum / denom
        what_se = np.sqrt(np.clip(what2_sum / denom - what_mean ** 2, 0.0, None) / denom)
    else:
        what_mean = np.full(steps, np.nan)
        what_se = np.full(steps, np.nan)

    return EnsembleRecords(
        columns=cols, records=records, record_steps=rec_steps,
        statuses=statuses, w_mean=w_mean, w_se=w_se, what_mean=what_mean,
        what_se=what_se, q_mean=q_sum / denom, final_q=final_q,
        final_qhat=final_qhat, outcome_labels=instr.outcomes,
        n_sectors=n_sec, config=config)


def write_records_csv(rec: EnsembleRecords, path):
    """Plot-ready CSV with doubles at 17 significant digits."""
    out_idx = rec.columns.index("outcome")
    with open(path, "w") as fh:
        fh.write(",".join(rec.columns) + "\n")
        for row in rec.records:
            parts = []
            for j, val in enumerate(row):
                if j == 0 or j == 1:
                    parts.append("%d" % int(val) if not np.isnan(val) else "")
                elif j == out_idx:
                    parts.append(str(rec.outcome_labels[int(val)])
                                 if not np.isnan(val) else "")
                else:
                    parts.append("%.17g" % val)
            fh.write(",".join(parts) + "\n")
