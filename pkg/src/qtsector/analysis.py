"""Post-processing of trajectory ensembles into verifiable quantities:
word frequencies, sector classification, almost-sure decay rates, entropy
rates, mean Lyapunov decay checks and Born-rule selection statistics.

Statistical bands are 3-sigma normal approximations throughout (desk-scale
ensembles of 1e3..1e4 trajectories).
"""

from dataclasses import dataclass, field

import numpy as np

from . import instrument as inst
from .sectors import SectorDecomposition
from .trajectory import EnsembleRecords, RunConfig, lyapunov_w, q_vector, run_ensemble

DEFAULT_TOL_CLASS = 0.05
DEFAULT_SELECTED_THRESHOLD = 0.99
LN_FLOOR = 1e-300


class AmbiguousSectorError(RuntimeError):
    """Two sector laws both fit the observed frequencies within tolerance."""


def empirical_frequencies(sequence, words) -> dict:
    """Sliding-window counts N_n(word) and frequencies N_n / (n - p + 1)."""
    seq = tuple(sequence)
    n = len(seq)
    table = {}
    for word in words:
        w = tuple(word)
        p = len(w)
        if p > n:
            raise ValueError(f"word {w} longer than the sequence ({n})")
        count = sum(1 for k in range(n - p + 1) if seq[k:k + p] == w)
        table[w] = (count, count / (n - p + 1))
    return table


def classify_trajectory(instr: inst.Instrument, decomp: SectorDecomposition,
                        freq_table: dict, tol_class: float = DEFAULT_TOL_CLASS):
    """Sector index whose law best matches the observed frequencies.

    Returns the unique sector whose max-word deviation is below tol_class,
    None when no sector fits, and raises when two fit simultaneously.
    """
    refs = decomp.reference_states()
    devs = []
    for rho_ref in refs:
        dev = max(abs(freq - inst.word_probability(instr, rho_ref, w))
                  for w, (_, freq) in freq_table.items())
        devs.append(dev)
    order = np.argsort(devs)
    if devs[order[0]] > tol_class:
        return None
    if len(devs) > 1 and devs[order[1]] <= tol_class:
        raise AmbiguousSectorError(
            f"sectors {int(order[0])} and {int(order[1])} both within "
            f"{tol_class} (deviations {devs[order[0]]:.4f}, {devs[order[1]]:.4f})")
    return int(order[0])


@dataclass
class RateFit:
    slope: float
    stderr: float
    n_used: int
    burn_in: int
    truncated: bool                # series hit numerical zero before the end

    def to_dict(self):
        return {"slope": self.slope, "stderr": self.stderr,
                "n_used": self.n_used, "burn_in": self.burn_in,
                "truncated": self.truncated}


def as_rate(steps: np.ndarray, q_series: np.ndarray, burn_in: int = None) -> RateFit:
    """Least-squares slope of ln Q_n over [burn_in, end].

    Default burn-in is 10% of the series.  When Q hits numerical zero the
    fit uses the pre-zero prefix and is flagged as truncated.
    """
    steps = np.asarray(steps, dtype=float)
    q = np.asarray(q_series, dtype=float)
    if burn_in is None:
        burn_in = int(0.1 * len(q))
    dead = np.flatnonzero(q <= LN_FLOOR)
    truncated = dead.size > 0
    end = dead[0] if truncated else len(q)
    sl = slice(burn_in, end)
    x, y = steps[sl], np.log(q[sl])
    if x.size < 3:
        raise ValueError("fewer than 3 usable points for the rate fit")
    (slope, _), cov = np.polyfit(x, y, 1, cov=True)
    return RateFit(float(slope), float(np.sqrt(cov[0, 0])), int(x.size),
                   int(burn_in), truncated)


@dataclass
class EntropyRateEstimate:
    value: float                   # +inf when any trajectory truncated
    stderr: float
    trajectories: int
    n_infinite: int

    def to_dict(self):
        return {"value": None if np.isinf(self.value) else self.value,
                "infinite": bool(np.isinf(self.value)),
                "stderr": self.stderr, "trajectories": self.trajectories,
                "n_infinite": self.n_infinite}


def entropy_rate(instr: inst.Instrument, decomp: SectorDecomposition,
                 gamma: int, alpha: int, n: int, trajectories: int,
                 seed: int = 0) -> EntropyRateEstimate:
    """Relative entropy rate s(gamma|alpha) between sector laws.

    Samples words under P_gamma (trajectories started from the sector's
    extreme invariant state) and averages -(1/n)(ln P_{ch,alpha} - ln
    P_gamma), both accumulated in log space during simulation.
    """
    rho0 = decomp.reference_states()[gamma]
    cfg = RunConfig(steps=n, trajectories=trajectories, root_seed=seed,
                    initial_state=rho0, record_stride=n)
    rec = run_ensemble(instr, decomp, cfg)
    finals = rec.final_rows()
    ok = rec.statuses == -1
    l_true = finals[ok, rec.columns.index("loglik_true")]
    l_ch = finals[ok, rec.columns.index(f"loglik_ch_s{alpha}")]
    vals = -(l_ch - l_true) / n
    n_inf = int(np.count_nonzero(np.isinf(vals)))
    if n_inf:
        return EntropyRateEstimate(float("inf"), float("nan"), int(ok.sum()), n_inf)
    return EntropyRateEstimate(float(vals.mean()),
                               float(vals.std(ddof=1) / np.sqrt(vals.size)),
                               int(ok.sum()), 0)


@dataclass
class WDecayReport:
    gamma_bound: float             # kappa_hat ** (1/N)
    w0: float
    scale: float                   # 1 for the true trajectory, filter constant else
    bound_ok: bool
    first_violation: int           # step of first band violation, -1 if none
    slope: float                   # fitted slope of ln(mean W)
    n_fit: int

    def to_dict(self):
        return {"gamma_bound": self.gamma_bound, "w0": self.w0,
                "scale": self.scale, "bound_ok": self.bound_ok,
                "first_violation": self.first_violation,
                "slope": self.slope, "n_fit": self.n_fit}


def _w_bound_check(mean: np.ndarray, se: np.ndarray, w0: float,
                   gamma: float, scale: float) -> WDecayReport:
    steps = np.arange(1, mean.size + 1)
    bound = scale * w0 * gamma ** steps + 3 * se
    viol = np.flatnonzero(mean > bound)
    usable = mean > 1e-12
    if np.count_nonzero(usable) >= 3:
        x = steps[usable].astype(float)
        y = np.log(mean[usable])
        slope = float(np.polyfit(x, y, 1)[0])
        n_fit = int(usable.sum())
    else:
        slope, n_fit = float("nan"), 0
    return WDecayReport(gamma, w0, scale, viol.size == 0,
                        int(steps[viol[0]]) if viol.size else -1, slope, n_fit)


def mean_w_decay(rec: EnsembleRecords, decomp: SectorDecomposition,
                 kappa_hat: float, horizon: int,
                 use_filter: bool = False) -> WDecayReport:
    """Check the mean Lyapunov decay E[W_n] <= W_0 (kappa^(1/N))^n + 3 SE.

    For the filter the bound carries the mismatch constant
    ||rhohat^{-1/2} rho rhohat^{-1/2}||_inf and starts from W(rhohat_0).
    """
    gamma = kappa_hat ** (1.0 / horizon)
    if use_filter:
        if rec.config.filter_state is None:
            raise ValueError("ensemble was run without a filter")
        from .matcore import psd_power
        inv_half = psd_power(np.asarray(rec.config.filter_state, dtype=complex), -0.5)
        scale = float(np.linalg.norm(
            inv_half @ np.asarray(rec.config.initial_state, dtype=complex) @ inv_half, 2))
        w0 = lyapunov_w(q_vector(decomp, rec.config.filter_state))
        return _w_bound_check(rec.what_mean, rec.what_se, w0, gamma, scale)
    w0 = lyapunov_w(q_vector(decomp, rec.config.initial_state))
    return _w_bound_check(rec.w_mean, rec.w_se, w0, gamma, 1.0)


@dataclass
class BornReport:
    threshold: float
    expected: list                 # tr(E_alpha rho_0)
    observed: list                 # selection fractions
    bands: list                    # 3-sigma binomial half-widths
    unresolved_fraction: float
    within_bands: bool
    filter_agreement: float = None  # fraction with argmax Qhat == argmax Q

    def to_dict(self):
        return {"threshold": self.threshold, "expected": self.expected,
                "observed": self.observed, "bands": self.bands,
                "unresolved_fraction": self.unresolved_fraction,
                "within_bands": self.within_bands,
                "filter_agreement": self.filter_agreement}


def born_rule_check(rec: EnsembleRecords, decomp: SectorDecomposition,
                    rho0: np.ndarray,
                    threshold: float = DEFAULT_SELECTED_THRESHOLD) -> BornReport:
    """Selection frequencies of each sector against tr(E_alpha rho_0)."""
    ok = rec.statuses == -1
    finals = rec.final_q[ok]
    n = finals.shape[0]
    expected = [float(np.trace(e @ np.asarray(rho0, dtype=complex)).real)
                for e in decomp.sector_effects]
    observed, bands = [], []
    selected = finals > threshold
    for s in range(decomp.n_sectors):
        frac = float(selected[:, s].mean()) if n else float("nan")
        p = expected[s]
        bands.append(3.0 * float(np.sqrt(max(p * (1 - p), 1e-12) / max(n, 1))))
        observed.append(frac)
    unresolved = float((~selected.any(axis=1)).mean()) if n else float("nan")
    within = all(abs(o - e) <= b for o, e, b in zip(observed, expected, bands))

    agreement = None
    if rec.config.filter_state is not None and n:
        fq = rec.final_qhat[ok]
        agreement = float((np.argmax(finals, axis=1) == np.argmax(fq, axis=1)).mean())
    return BornReport(threshold, expected, observed, bands, unresolved, within,
                      agreement)


@dataclass
class AnalysisReport:
    born: BornReport = None
    w_decay: WDecayReport = None
    w_decay_filter: WDecayReport = None
    rate_fits: dict = field(default_factory=dict)       # alpha -> RateFit
    entropy_rates: dict = field(default_factory=dict)   # (gamma, alpha) -> estimate
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "born": self.born.to_dict() if self.born else None,
            "w_decay": self.w_decay.to_dict() if self.w_decay else None,
            "w_decay_filter": (self.w_decay_filter.to_dict()
                               if self.w_decay_filter else None),
            "rate_fits": {str(a): f.to_dict() for a, f in sorted(self.rate_fits.items())},
            "entropy_rates": {f"{g},{a}": e.to_dict()
                              for (g, a), e in sorted(self.entropy_rates.items())},
            "notes": list(self.notes),
        }
