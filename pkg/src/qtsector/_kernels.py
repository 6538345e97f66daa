"""Hot inner loop of trajectory simulation.

The single-trajectory kernel below is written in a numba-compatible subset
of numpy.  By default it is compiled with ``numba.njit``; setting the
environment variable ``QTSECTOR_DISABLE_NUMBA=1`` before import selects the
pure-numpy interpretation of the very same function (bit-identical output,
much slower).  ``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("QTSECTOR_DISABLE_NUMBA", "") not in ("1", "true", "yes")

NEG_INF = float("-inf")


def _rtrace(m):
    s = 0.0
    for i in range(m.shape[0]):
        s += m[i, i].real
    return s


def _rtrace_prod(a, b):
    # Re tr(a @ b) without forming the product.
    s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += (a[i, j] * b[j, i]).real
    return s


def _herm(m):
    return (m + m.conj().T) * 0.5


def _clip_state(m):
    """Hermitize, clip negative eigenvalues, renormalize to trace 1."""
    h = _herm(m)
    w, v = np.linalg.eigh(h)
    wc = np.where(w > 0.0, w, 0.0)
    s = wc.sum()
    if s <= 0.0:
        return h, 0.0
    return (v * (wc / s)) @ v.conj().T, s


def _schrod(kraus, lo, hi, rho):
    d = rho.shape[0]
    out = np.zeros((d, d), dtype=np.complex128)
    for k in range(lo, hi):
        out = out + kraus[k] @ rho @ kraus[k].conj().T
    return out


def _traj_kernel(traj_id, kraus, k_offs, m_ops, rho0, rhohat0, use_filter,
                 e_alphas, sec_refs, ch_kraus, ch_states, uniforms, p_floor,
                 rec_steps, rec_out, w_series, what_series, q_series):
    """Simulate one trajectory; fill records and per-step series.

    ``ch_kraus[s]``/``ch_states[s]`` hold the sector-deformed Kraus family
    and initial state evaluating the chaotic conditional law of sector s by
    normalized propagation (log traces accumulate; no underflow on long
    runs).  Returns -1 on success, or the 1-based step at which the outcome
    distribution collapsed numerically.
    """
    d = rho0.shape[0]
    n_out = m_ops.shape[0]
    n_sec = e_alphas.shape[0]
    steps = uniforms.shape[0]

    rho = rho0.copy()
    rhohat = rhohat0.copy()
    chi = ch_states.copy()
    sigma = sec_refs.copy()

    loglik_true = 0.0
    cum_ch = np.zeros(n_sec)
    ch_alive = np.ones(n_sec, dtype=np.bool_)
    cum_sec = np.zeros(n_sec)
    sec_alive = np.ones(n_sec, dtype=np.bool_)

    probs = np.zeros(n_out)
    q = np.zeros(n_sec)
    qhat = np.zeros(n_sec)
    rec_ptr = 0

    for step in range(1, steps + 1):
        tot = 0.0
        for a in range(n_out):
            p = _rtrace_prod(rho, m_ops[a])
            if p < p_floor:
                p = 0.0
            probs[a] = p
            tot += p
        if tot < d * p_floor:
            return step
        u = uniforms[step - 1] * tot
        a = 0
        c = probs[0]
        while c < u and a < n_out - 1:
            a += 1
            c += probs[a]
        while probs[a] <= 0.0 and a < n_out - 1:
            a += 1

        # True trajectory update (Bayes rule for the sampled outcome).
        post = _schrod(kraus, k_offs[a], k_offs[a + 1], rho)
        p_raw = _rtrace(post)
        if p_raw <= 0.0:
            return step
        loglik_true += np.log(p_raw)
        rho, ok = _clip_state(post / p_raw)
        if ok <= 0.0:
            return step

        if use_filter:
            post_hat = _schrod(kraus, k_offs[a], k_offs[a + 1], rhohat)
            ph = _rtrace(post_hat)
            if ph <= 0.0:
                return step
            rhohat, okh = _clip_state(post_hat / ph)
            if okh <= 0.0:
                return step

        # Reference-law propagation in log space (per-step rescaling).
        for s in range(n_sec):
            if ch_alive[s]:
                tau = _schrod(ch_kraus[s], k_offs[a], k_offs[a + 1], chi[s])
                t = _rtrace(tau)
                if t <= 0.0:
                    ch_alive[s] = False
                else:
                    cum_ch[s] += np.log(t)
                    chi[s] = _herm(tau / t)
        for s in range(n_sec):
            if sec_alive[s]:
                tau = _schrod(kraus, k_offs[a], k_offs[a + 1], sigma[s])
                t = _rtrace(tau)
                if t <= 0.0:
                    sec_alive[s] = False
                else:
                    cum_sec[s] += np.log(t)
                    sigma[s] = _herm(tau / t)

        # Posterior sector probabilities and Lyapunov value.
        sq_sum = 0.0
        lin_sum = 0.0
        for s in range(n_sec):
            v = _rtrace_prod(e_alphas[s], rho)
            if v < 0.0:
                v = 0.0
            if v > 1.0:
                v = 1.0
            q[s] = v
            sq_sum += np.sqrt(v)
            lin_sum += v
        w = sq_sum * sq_sum - lin_sum
        if w < 0.0:
            w = 0.0
        w_series[step - 1] = w
        for s in range(n_sec):
            q_series[step - 1, s] = q[s]

        if use_filter:
            sq_sum = 0.0
            lin_sum = 0.0
            for s in range(n_sec):
                v = _rtrace_prod(e_alphas[s], rhohat)
                if v < 0.0:
                    v = 0.0
                if v > 1.0:
                    v = 1.0
                qhat[s] = v
                sq_sum += np.sqrt(v)
                lin_sum += v
            what = sq_sum * sq_sum - lin_sum
            if what < 0.0:
                what = 0.0
        else:
            for s in range(n_sec):
                qhat[s] = np.nan
            what = np.nan
        what_series[step - 1] = what

        if rec_ptr < rec_steps.shape[0] and rec_steps[rec_ptr] == step:
            row = rec_out[rec_ptr]
            row[0] = traj_id
            row[1] = step
            row[2] = a
            col = 3
            for s in range(n_sec):
                row[col] = q[s]
                col += 1
            for s in range(n_sec):
                row[col] = qhat[s]
                col += 1
            row[col] = w
            row[col + 1] = what
            row[col + 2] = loglik_true
            col += 3
            for s in range(n_sec):
                row[col] = cum_ch[s] if ch_alive[s] else NEG_INF
                col += 1
            for s in range(n_sec):
                row[col] = cum_sec[s] if sec_alive[s] else NEG_INF
                col += 1
            rec_ptr += 1
    return -1


if USE_NUMBA:
    import numba

    _rtrace = numba.njit(cache=True)(_rtrace)
    _rtrace_prod = numba.njit(cache=True)(_rtrace_prod)
    _herm = numba.njit(cache=True)(_herm)
    _clip_state = numba.njit(cache=True)(_clip_state)
    _schrod = numba.njit(cache=True)(_schrod)
    _traj_kernel = numba.njit(cache=True)(_traj_kernel)


def record_width(n_sectors: int) -> int:
    """Columns: traj, step, outcome, Q*, Qhat*, W, What, loglik_true,
    loglik_ch*, loglik_sec*."""
    return 6 + 4 * n_sectors
