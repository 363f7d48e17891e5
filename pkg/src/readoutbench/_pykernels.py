"""Pure-numpy reference implementations of the hot estimator loops.

These mirror ``_kernels.pyx`` step for step so either backend can be
selected at import time (see ``kernels.py``).
"""
import numpy as np

ZERO_PROB = 1e-12
ADAPT_TARGET = 0.3
_STALL_EPS = 1e-8


class ZeroProbability(ArithmeticError):
    pass


def _probs(rho, effects):
    return np.einsum("tij,ji->t", effects, rho).real


def _hermitize(a):
    return 0.5 * (a + a.conj().T)


def _norm_loglik(p, freqs, observed):
    if np.any(p[observed] < ZERO_PROB):
        t = int(np.flatnonzero(observed & (p < ZERO_PROB))[0])
        raise ZeroProbability(t)
    return float(np.dot(freqs[observed], np.log(p[observed])))


def qst_mle_loop(rho0, effects, counts, dilution, max_iterations, tol):
    """Diluted ``rho <- N[(1-e) rho + e R rho R]`` with step halving.

    Returns ``(rho, iterations, per-shot log-likelihood, converged, history)``.
    A step that would lower the likelihood is retried with half the
    dilution; when the dilution stalls below 1e-8 the iterate is final.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    freqs = counts / total
    observed = counts > 0
    rho = np.array(rho0, dtype=complex)
    p = _probs(rho, effects)
    ll = _norm_loglik(p, freqs, observed)
    history = [ll]
    converged = False
    it = 0
    while it < max_iterations:
        it += 1
        w = np.where(observed, freqs / np.where(observed, p, 1.0), 0.0)
        r = np.einsum("t,tij->ij", w, effects)
        rrr = r @ rho @ r
        eps = dilution
        while True:
            cand = (1 - eps) * rho + eps * rrr
            cand = _hermitize(cand / np.trace(cand).real)
            pc = _probs(cand, effects)
            try:
                llc = _norm_loglik(pc, freqs, observed)
            except ZeroProbability:
                llc = -np.inf
            if llc >= ll - 1e-12:
                break
            eps *= 0.5
            if eps < _STALL_EPS:
                break
        if eps < _STALL_EPS:
            converged = True
            break
        delta = float(np.max(np.abs(cand - rho)))
        rho, p, ll = cand, pc, llc
        history.append(ll)
        if delta < tol:
            converged = True
            break
    return rho, it, ll, converged, history


def qdt_mle_loop(m0, rhos, counts, max_iterations, tol):
    """Detector iteration ``M_i <- L R_i M_i R_i L`` with step dilution.

    ``R_i = sum_s f_is/p_is rho_s`` and ``L = (sum_i R_i M_i R_i)^{-1/2}``.
    A step that would lower the likelihood is retried with
    ``R_i -> e R_i + (1-e) (S/d) 1`` for halving ``e``.
    Returns ``(M, iterations, per-shot log-likelihood, converged, history)``.
    """
    n = np.asarray(counts, dtype=float)
    s_count, k = n.shape
    d = rhos.shape[1]
    rv = rhos.reshape(s_count, d * d)
    freqs = n / n.sum(axis=1, keepdims=True)
    observed = n > 0
    weight = n / n.sum()
    c = s_count / d
    eye = np.eye(d)

    def probs(effects):
        return (rv @ effects.transpose(0, 2, 1).reshape(k, d * d).T).real

    def loglik(p):
        if np.any(p[observed] < ZERO_PROB):
            return -np.inf
        return float(np.sum(weight[observed] * np.log(p[observed])))

    m = np.array(m0, dtype=complex)
    p = probs(m)
    ll = loglik(p)
    if not np.isfinite(ll):
        raise ZeroProbability(-1)
    history = [ll]
    converged = False
    it = 0
    while it < max_iterations:
        it += 1
        ratio = np.where(observed, freqs / np.where(observed, p, 1.0), 0.0)
        r_full = (ratio.T @ rv).reshape(k, d, d)
        eps = 1.0
        while True:
            r = eps * r_full + (1 - eps) * c * eye
            rmr = r @ m @ r
            lam = rmr.sum(axis=0)
            w, v = np.linalg.eigh(_hermitize(lam))
            inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
            cand = inv_sqrt @ rmr @ inv_sqrt
            cand = 0.5 * (cand + cand.conj().transpose(0, 2, 1))
            pc = probs(cand)
            llc = loglik(pc)
            if llc >= ll - 1e-12:
                break
            eps *= 0.5
            if eps < _STALL_EPS:
                break
        if eps < _STALL_EPS:
            converged = True
            break
        delta = float(np.max(np.abs(cand - m)))
        m, p, ll = cand, pc, llc
        history.append(ll)
        if delta < tol:
            converged = True
            break
    return m, it, ll, converged, history


def _log_target(g, effects, counts, observed):
    rho = g @ g.conj().T
    tr = np.trace(rho).real
    p = _probs(rho, effects) / tr
    if np.any(p[observed] <= 0.0):
        return -np.inf, rho / tr
    return -tr + float(np.dot(counts[observed], np.log(p[observed]))), rho / tr


def bme_chain(g0, effects, counts, normals, log_u, scale0, burn_in, adapt_every):
    """Random-walk Metropolis over the Ginibre factor G.

    Target density ``exp(-|G|_F^2) * prod_t p_t(G)^n_t`` with
    ``rho(G) = G G† / Tr(G G†)``. During burn-in the step size is adapted
    every ``adapt_every`` steps towards 30% acceptance, then frozen.
    Returns ``(posterior mean rho, post-burn-in acceptance rate, final scale)``.
    """
    counts = np.asarray(counts, dtype=float)
    observed = counts > 0
    g = np.array(g0, dtype=complex)
    lp, rho = _log_target(g, effects, counts, observed)
    if not np.isfinite(lp):
        raise ZeroProbability(-1)
    n_steps = normals.shape[0]
    scale = float(scale0)
    window = 0
    kept_accepts = 0
    mean = np.zeros_like(rho)
    for step in range(n_steps):
        gp = g + scale * normals[step]
        lpp, rhop = _log_target(gp, effects, counts, observed)
        accepted = log_u[step] < lpp - lp
        if accepted:
            g, lp, rho = gp, lpp, rhop
        if step < burn_in:
            window += accepted
            if (step + 1) % adapt_every == 0:
                scale *= np.exp(2.0 * (window / adapt_every - ADAPT_TARGET))
                window = 0
        else:
            kept_accepts += accepted
            mean += rho
    kept = n_steps - burn_in
    return _hermitize(mean / kept), kept_accepts / kept, scale
