# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled estimator loops; same contracts as ``_pykernels``."""
import numpy as np
from libc.math cimport log, exp, fabs, sqrt, INFINITY
from scipy.linalg.cython_lapack cimport zheev

from readoutbench._pykernels import ZeroProbability

ctypedef double complex cplx

cdef double ZERO_PROB = 1e-12
cdef double ADAPT_TARGET = 0.3
cdef double STALL_EPS = 1e-8


cdef inline double _probs(cplx[:, ::1] rho, const cplx[:, :, ::1] eff,
                          double[::1] out) noexcept nogil:
    # out[t] = Re Tr(rho E_t); returns Re Tr(rho)
    cdef Py_ssize_t t, a, b
    cdef Py_ssize_t n = eff.shape[0], d = eff.shape[1]
    cdef double s, tr = 0.0
    for a in range(d):
        tr += rho[a, a].real
    for t in range(n):
        s = 0.0
        for a in range(d):
            for b in range(d):
                s += (rho[a, b] * eff[t, b, a]).real
        out[t] = s
    return tr


cdef inline double _gram(cplx[:, ::1] g, cplx[:, ::1] rho) noexcept nogil:
    # rho = g g†; returns the trace
    cdef Py_ssize_t d = g.shape[0], a, b, c
    cdef cplx s
    cdef double tr = 0.0
    for a in range(d):
        for b in range(a, d):
            s = 0.0
            for c in range(d):
                s = s + g[a, c] * g[b, c].conjugate()
            rho[a, b] = s
            rho[b, a] = s.conjugate()
        tr += rho[a, a].real
    return tr


cdef inline void _matmul(cplx[:, ::1] x, cplx[:, ::1] y, cplx[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t d = x.shape[0], a, b, c
    cdef cplx s
    for a in range(d):
        for b in range(d):
            s = 0.0
            for c in range(d):
                s = s + x[a, c] * y[c, b]
            out[a, b] = s


cdef inline double _loglik(double[::1] p, double[::1] freqs, double scale,
                           Py_ssize_t* bad) noexcept nogil:
    # sum_t f_t log(p_t / scale) over observed outcomes; -inf and bad index on zero prob
    cdef Py_ssize_t t
    cdef double s = 0.0, q
    for t in range(p.shape[0]):
        if freqs[t] > 0.0:
            q = p[t] / scale
            if q < ZERO_PROB:
                bad[0] = t
                return -INFINITY
            s += freqs[t] * log(q)
    return s


def qst_mle_loop(rho0, effects, counts, double dilution, int max_iterations, double tol):
    cdef cplx[:, :, ::1] eff = np.ascontiguousarray(effects, dtype=complex)
    cdef double[::1] cnt = np.ascontiguousarray(counts, dtype=float)
    cdef Py_ssize_t n = eff.shape[0], d = eff.shape[1], t, a, b
    cdef double total = 0.0
    for t in range(n):
        total += cnt[t]
    freqs_arr = np.asarray(cnt) / total
    cdef double[::1] freqs = freqs_arr
    cdef cplx[:, ::1] rho = np.array(rho0, dtype=complex, order="C")
    cdef cplx[:, ::1] r = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] tmp = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] rrr = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] cand = np.zeros((d, d), dtype=complex)
    cdef double[::1] p = np.zeros(n)
    cdef double[::1] pc = np.zeros(n)
    cdef Py_ssize_t bad = -1
    cdef double ll, llc, eps, tr, delta, w, x
    cdef int it = 0
    cdef bint converged = False
    history = []

    tr = _probs(rho, eff, p)
    ll = _loglik(p, freqs, tr, &bad)
    if bad >= 0:
        raise ZeroProbability(int(bad))
    history.append(ll)
    while it < max_iterations:
        it += 1
        with nogil:
            for a in range(d):
                for b in range(d):
                    r[a, b] = 0.0
            for t in range(n):
                if freqs[t] > 0.0:
                    w = freqs[t] / p[t]
                    for a in range(d):
                        for b in range(d):
                            r[a, b] = r[a, b] + w * eff[t, a, b]
            _matmul(r, rho, tmp)
            _matmul(tmp, r, rrr)
            eps = dilution
            while True:
                tr = 0.0
                for a in range(d):
                    tr += (1 - eps) * rho[a, a].real + eps * rrr[a, a].real
                for a in range(d):
                    for b in range(d):
                        cand[a, b] = ((1 - eps) * rho[a, b] + eps * rrr[a, b]) / tr
                for a in range(d):
                    for b in range(a, d):
                        cand[a, b] = 0.5 * (cand[a, b] + cand[b, a].conjugate())
                        cand[b, a] = cand[a, b].conjugate()
                bad = -1
                _probs(cand, eff, pc)
                llc = _loglik(pc, freqs, 1.0, &bad)
                if llc >= ll - 1e-12:
                    break
                eps *= 0.5
                if eps < STALL_EPS:
                    break
        if eps < STALL_EPS:
            converged = True
            break
        delta = 0.0
        for a in range(d):
            for b in range(d):
                x = abs(cand[a, b] - rho[a, b])
                if x > delta:
                    delta = x
        rho[:, :] = cand
        p[:] = pc
        ll = llc
        history.append(ll)
        if delta < tol:
            converged = True
            break
    return np.asarray(rho).copy(), it, ll, bool(converged), history


cdef int _inv_sqrt(cplx[:, ::1] a, cplx[:, ::1] out, cplx[:, ::1] work_a,
                   double[::1] w, cplx[::1] work, double[::1] rwork) noexcept nogil:
    # out = a^{-1/2} for Hermitian positive definite a; nonzero on failure
    cdef int n = a.shape[0], lwork = work.shape[0], info = 0
    cdef Py_ssize_t i, j, k
    cdef cplx s
    cdef char jobz = b'V', uplo = b'U'
    work_a[:, :] = a
    # LAPACK sees the transpose, i.e. conj(a); its eigenvectors are conj(v)
    zheev(&jobz, &uplo, &n, &work_a[0, 0], &n, &w[0], &work[0], &lwork, &rwork[0], &info)
    if info != 0:
        return info
    for k in range(n):
        if w[k] <= 0.0:
            return -1
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s = s + work_a[k, i].conjugate() * work_a[k, j] / sqrt(w[k])
            out[i, j] = s
    return 0


def qdt_mle_loop(m0, rhos, counts, int max_iterations, double tol):
    cdef cplx[:, :, ::1] rh = np.ascontiguousarray(rhos, dtype=complex)
    n_arr = np.ascontiguousarray(counts, dtype=float)
    cdef double[:, ::1] n = n_arr
    cdef Py_ssize_t S = n.shape[0], K = n.shape[1], d = rh.shape[1]
    cdef Py_ssize_t s, k, a, b, c_
    freqs_arr = n_arr / n_arr.sum(axis=1, keepdims=True)
    weight_arr = n_arr / n_arr.sum()
    cdef double[:, ::1] freqs = freqs_arr
    cdef double[:, ::1] weight = weight_arr
    cdef cplx[:, :, ::1] m = np.array(m0, dtype=complex, order="C")
    cdef cplx[:, :, ::1] r_full = np.zeros((K, d, d), dtype=complex)
    cdef cplx[:, :, ::1] rmr = np.zeros((K, d, d), dtype=complex)
    cdef cplx[:, :, ::1] cand = np.zeros((K, d, d), dtype=complex)
    cdef cplx[:, ::1] r = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] tmp = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] lam = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] lis = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] work_a = np.zeros((d, d), dtype=complex)
    cdef double[::1] w = np.zeros(d)
    cdef cplx[::1] work = np.zeros(4 * d, dtype=complex)
    cdef double[::1] rwork = np.zeros(3 * d)
    cdef double[:, ::1] p = np.zeros((S, K))
    cdef double[:, ::1] pc = np.zeros((S, K))
    cdef double c = <double>S / d
    cdef double ll, llc, eps, delta, x, ratio
    cdef int it = 0, info = 0
    cdef bint converged = False
    history = []

    _qdt_probs(rh, m, p)
    ll = _qdt_loglik(p, weight)
    if ll == -INFINITY:
        raise ZeroProbability(-1)
    history.append(ll)
    while it < max_iterations:
        it += 1
        with nogil:
            for k in range(K):
                for a in range(d):
                    for b in range(d):
                        r_full[k, a, b] = 0.0
                for s in range(S):
                    if freqs[s, k] > 0.0:
                        ratio = freqs[s, k] / p[s, k]
                        for a in range(d):
                            for b in range(d):
                                r_full[k, a, b] = r_full[k, a, b] + ratio * rh[s, a, b]
            eps = 1.0
            while True:
                for a in range(d):
                    for b in range(d):
                        lam[a, b] = 0.0
                for k in range(K):
                    for a in range(d):
                        for b in range(d):
                            r[a, b] = eps * r_full[k, a, b]
                        r[a, a] = r[a, a] + (1 - eps) * c
                    _matmul(r, m[k], tmp)
                    _matmul(tmp, r, rmr[k])
                    for a in range(d):
                        for b in range(d):
                            lam[a, b] = lam[a, b] + rmr[k, a, b]
                for a in range(d):
                    for b in range(a, d):
                        lam[a, b] = 0.5 * (lam[a, b] + lam[b, a].conjugate())
                        lam[b, a] = lam[a, b].conjugate()
                info = _inv_sqrt(lam, lis, work_a, w, work, rwork)
                if info != 0:
                    break
                for k in range(K):
                    _matmul(lis, rmr[k], tmp)
                    _matmul(tmp, lis, cand[k])
                    for a in range(d):
                        for b in range(a, d):
                            cand[k, a, b] = 0.5 * (cand[k, a, b] + cand[k, b, a].conjugate())
                            cand[k, b, a] = cand[k, a, b].conjugate()
                _qdt_probs(rh, cand, pc)
                llc = _qdt_loglik(pc, weight)
                if llc >= ll - 1e-12:
                    break
                eps *= 0.5
                if eps < STALL_EPS:
                    break
        if info != 0:
            raise ArithmeticError(f"eigendecomposition failed (info={info})")
        if eps < STALL_EPS:
            converged = True
            break
        delta = 0.0
        for k in range(K):
            for a in range(d):
                for b in range(d):
                    x = abs(cand[k, a, b] - m[k, a, b])
                    if x > delta:
                        delta = x
        m[:, :, :] = cand
        p[:, :] = pc
        ll = llc
        history.append(ll)
        if delta < tol:
            converged = True
            break
    return np.asarray(m).copy(), it, ll, bool(converged), history


cdef inline void _qdt_probs(cplx[:, :, ::1] rh, cplx[:, :, ::1] m, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t s, k, a, b, S = rh.shape[0], K = m.shape[0], d = rh.shape[1]
    cdef double acc
    for s in range(S):
        for k in range(K):
            acc = 0.0
            for a in range(d):
                for b in range(d):
                    acc += (rh[s, a, b] * m[k, b, a]).real
            out[s, k] = acc


cdef inline double _qdt_loglik(double[:, ::1] p, double[:, ::1] weight) noexcept nogil:
    cdef Py_ssize_t s, k
    cdef double acc = 0.0
    for s in range(p.shape[0]):
        for k in range(p.shape[1]):
            if weight[s, k] > 0.0:
                if p[s, k] < ZERO_PROB:
                    return -INFINITY
                acc += weight[s, k] * log(p[s, k])
    return acc


cdef inline double _log_target(cplx[:, ::1] g, cplx[:, ::1] rho, const cplx[:, :, ::1] eff,
                               double[::1] cnt, double[::1] p) noexcept nogil:
    # -|G|^2 + sum n log p, with rho = G G† / Tr left in ``rho``
    cdef Py_ssize_t t, a, b, d = g.shape[0]
    cdef double tr = _gram(g, rho)
    cdef double s = -tr, q
    _probs(rho, eff, p)
    for a in range(d):
        for b in range(d):
            rho[a, b] = rho[a, b] / tr
    for t in range(cnt.shape[0]):
        if cnt[t] > 0.0:
            q = p[t] / tr
            if q <= 0.0:
                return -INFINITY
            s += cnt[t] * log(q)
    return s


def bme_chain(g0, effects, counts, normals, log_u, double scale0, int burn_in, int adapt_every):
    cdef cplx[:, :, ::1] eff = np.ascontiguousarray(effects, dtype=complex)
    cdef double[::1] cnt = np.ascontiguousarray(counts, dtype=float)
    cdef cplx[:, :, ::1] z = np.ascontiguousarray(normals, dtype=complex)
    cdef double[::1] lu = np.ascontiguousarray(log_u, dtype=float)
    cdef Py_ssize_t d = eff.shape[1], n_steps = z.shape[0], step, a, b
    cdef cplx[:, ::1] g = np.array(g0, dtype=complex, order="C")
    cdef cplx[:, ::1] gp = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] rho = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] rhop = np.zeros((d, d), dtype=complex)
    cdef cplx[:, ::1] mean = np.zeros((d, d), dtype=complex)
    cdef double[::1] p = np.zeros(eff.shape[0])
    cdef double lp, lpp, scale = scale0
    cdef long window = 0, kept_accepts = 0
    cdef bint accepted

    lp = _log_target(g, rho, eff, cnt, p)
    if lp == -INFINITY:
        raise ZeroProbability(-1)
    with nogil:
        for step in range(n_steps):
            for a in range(d):
                for b in range(d):
                    gp[a, b] = g[a, b] + scale * z[step, a, b]
            lpp = _log_target(gp, rhop, eff, cnt, p)
            accepted = lu[step] < lpp - lp
            if accepted:
                g[:, :] = gp
                rho[:, :] = rhop
                lp = lpp
            if step < burn_in:
                window += accepted
                if (step + 1) % adapt_every == 0:
                    scale *= exp(2.0 * (<double>window / adapt_every - ADAPT_TARGET))
                    window = 0
            else:
                kept_accepts += accepted
                for a in range(d):
                    for b in range(d):
                        mean[a, b] = mean[a, b] + rho[a, b]
    kept = n_steps - burn_in
    m = np.asarray(mean) / kept
    return 0.5 * (m + m.conj().T), kept_accepts / kept, scale
