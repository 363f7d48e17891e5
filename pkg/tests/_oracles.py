"""Independent reference computations used as test oracles.

Nothing here calls the package's metric code: partial traces are explicit
index loops, norms use the closed form for 2x2 Hermitian matrices, and the
state grid is a polar lattice rather than the optimizer's Fibonacci grid.
"""
import numpy as np


def loop_conditional(effects, labels, keep, sigma):
    """Outcome-grouped Tr_other(M (1 ⊗ sigma)) by explicit summation."""
    out = np.zeros((2, 2, 2), dtype=complex)
    for k, lab in enumerate(labels):
        e = effects[k]
        x = int(lab[keep])
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    for d in range(2):
                        if keep == 0:
                            out[x, a, b] += e[2 * a + c, 2 * b + d] * sigma[d, c]
                        else:
                            out[x, a, b] += e[2 * c + a, 2 * d + b] * sigma[d, c]
    return out


def lattice_states(n_theta=100, n_phi=100):
    """Pure qubit states on a polar lattice closed under the antipodal map."""
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    t, p = np.meshgrid(theta, phi, indexing="ij")
    kets = np.stack([np.cos(t / 2), np.exp(1j * p) * np.sin(t / 2)], axis=-1).reshape(-1, 2)
    return kets


def _pauli_coords(h):
    # h = c0 I + c . sigma for Hermitian 2x2 h
    return np.stack([(h[..., 0, 0] + h[..., 1, 1]).real / 2, h[..., 0, 1].real,
                     -h[..., 0, 1].imag, (h[..., 0, 0] - h[..., 1, 1]).real / 2], axis=-1)


def pair_grid_coefficient(effects, labels, source, target, kets=None, chunk=250):
    """max over all pairs (rho, sigma) of lattice states of ||M0(rho) - M0(sigma)||."""
    kets = lattice_states() if kets is None else kets
    m0 = np.array([loop_conditional(effects, labels, target, np.outer(k, k.conj()))[0]
                   for k in kets])
    c = _pauli_coords(m0)
    best = 0.0
    for s in range(0, len(c), chunk):
        d = c[s:s + chunk, None, :] - c[None, :, :]
        norms = np.abs(d[..., 0]) + np.linalg.norm(d[..., 1:], axis=-1)
        best = max(best, float(norms.max()))
    return best


def classical_coefficient(effects, labels, source, target):
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    d = (loop_conditional(effects, labels, target, p0)[0]
         - loop_conditional(effects, labels, target, p1)[0])
    return float(np.max(np.abs(np.linalg.eigvalsh(d))))


def d_av(m, n):
    """Average-case POVM distance written out term by term."""
    d = m[0].shape[0]
    total = 0.0
    for a, b in zip(m, n):
        diff = np.array(a) - np.array(b)
        hs = np.sqrt(np.trace(diff.conj().T @ diff).real)
        tr = np.trace(diff).real
        total += np.sqrt(hs ** 2 + tr ** 2)
    return total / (2 * d)
