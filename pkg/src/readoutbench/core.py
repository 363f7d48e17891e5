"""Dense operator primitives for few-qubit states and measurements.

Conventions used throughout the package:

* qubit 0 is the leftmost tensor factor and the most significant bit of an
  outcome label, so ``"01"`` means qubit 0 read 0 and qubit 1 read 1;
* matrices are plain ``complex128`` numpy arrays; :class:`DensityMatrix`,
  :class:`PureState` and :class:`Povm` are thin validated wrappers that
  convert back with ``np.asarray``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

STATE_TOL = 1e-10
POVM_TOL = 1e-8
PROB_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


class DimensionError(ValueError):
    """Operands do not have compatible shapes."""


class InvalidStateError(ValueError):
    pass


class InvalidPovmError(ValueError):
    pass


def make_rng(seed, *indices: int) -> np.random.Generator:
    """Return a generator for ``seed``, optionally split by task indices.

    ``make_rng(s, i)`` streams are independent for distinct ``i``, which is
    how concurrent cells get schedule-independent randomness.
    """
    if isinstance(seed, np.random.Generator):
        if indices:
            raise TypeError("cannot split an existing Generator by index")
        return seed
    if indices:
        # spawn keys keep (s, i) and (s, i, 0) distinct, unlike an entropy list
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in indices))
        return np.random.default_rng(ss)
    return np.random.default_rng(None if seed is None else int(seed))


def as_square(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def n_qubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_hermitian(a, tol: float = POVM_TOL) -> bool:
    a = np.asarray(a)
    return max_abs(a - dagger(a)) <= tol


def bitstrings(n_qubits: int) -> list[str]:
    return [format(i, f"0{n_qubits}b") for i in range(1 << n_qubits)]


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        n_qubits_for(v.size)
        if abs(np.vdot(v, v).real - 1.0) > STATE_TOL:
            raise InvalidStateError(f"state norm² is {np.vdot(v, v).real!r}")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_qubits(self) -> int:
        return n_qubits_for(self.dim)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace operator on 2^n dims."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_square(self.matrix).copy()
        n_qubits_for(m.shape[0])
        if not is_hermitian(m, STATE_TOL):
            raise InvalidStateError("density matrix is not Hermitian")
        m = hermitize(m)
        if abs(np.trace(m).real - 1.0) > STATE_TOL:
            raise InvalidStateError(f"trace is {np.trace(m).real!r}, expected 1")
        lo = np.linalg.eigvalsh(m)[0]
        if lo < -STATE_TOL:
            raise InvalidStateError(f"negative eigenvalue {lo!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, state) -> "DensityMatrix":
        """Coerce a PureState, DensityMatrix, ket or matrix."""
        if isinstance(state, DensityMatrix):
            return state
        if isinstance(state, PureState):
            return state.density()
        a = np.asarray(state, dtype=complex)
        if a.ndim == 1:
            return PureState(a).density()
        return cls(a)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return n_qubits_for(self.dim)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered measurement effects with one bitstring label per outcome.

    Construction checks Hermiticity, positivity and completeness at
    ``POVM_TOL``.
    """

    effects: np.ndarray
    outcome_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        e = np.array(self.effects, dtype=complex)
        if e.ndim != 3 or e.shape[1] != e.shape[2] or e.shape[0] < 1:
            raise DimensionError(f"effects must have shape (K, d, d), got {e.shape}")
        labels = tuple(self.outcome_labels) or tuple(
            bitstrings(n_qubits_for(e.shape[1]))
            if e.shape[0] == e.shape[1]
            else (str(i) for i in range(e.shape[0]))
        )
        if len(labels) != e.shape[0]:
            raise InvalidPovmError(f"{len(labels)} labels for {e.shape[0]} effects")
        if not is_hermitian(e, POVM_TOL):
            raise InvalidPovmError("effects are not Hermitian")
        e = hermitize(e)
        lo = np.linalg.eigvalsh(e).min()
        if lo < -POVM_TOL:
            raise InvalidPovmError(f"effect has negative eigenvalue {lo!r}")
        dev = max_abs(e.sum(axis=0) - np.eye(e.shape[1]))
        if dev > POVM_TOL:
            raise InvalidPovmError(f"effects sum to identity only within {dev:.3g}")
        e.setflags(write=False)
        object.__setattr__(self, "effects", e)
        object.__setattr__(self, "outcome_labels", labels)

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def n_qubits(self) -> int:
        return n_qubits_for(self.dim)

    def __len__(self) -> int:
        return self.effects.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.effects[i]

    def __iter__(self):
        return iter(self.effects)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.effects, dtype=dtype)

    def conjugated(self, u: np.ndarray) -> "Povm":
        """Effects ``u† M_i u``."""
        u = as_square(u)
        return Povm(dagger(u) @ self.effects @ u, self.outcome_labels)


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product with ``a`` on the more significant qubits."""
    return np.kron(as_square(a), as_square(b))


def kron_all(ops: Iterable) -> np.ndarray:
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def product_povm(povms: Sequence[Povm]) -> Povm:
    """Tensor product of per-qubit POVMs; labels are concatenated."""
    effects = [np.eye(1, dtype=complex)]
    labels = [""]
    for p in povms:
        effects = [np.kron(a, b) for a in effects for b in p.effects]
        labels = [la + lb for la in labels for lb in p.outcome_labels]
    return Povm(np.array(effects), tuple(labels))


def _conditional_map(effects: np.ndarray, labels: Sequence[str], keep: int,
                     sigma: np.ndarray) -> np.ndarray:
    # sigma may be any 2x2 operator here; linearity in sigma is used by metrics
    groups = sorted({lab[keep] for lab in labels})
    t = effects.reshape(-1, 2, 2, 2, 2)
    if keep == 0:
        partial = np.einsum("kacbd,dc->kab", t, sigma)
    else:
        partial = np.einsum("kcadb,dc->kab", t, sigma)
    out = np.zeros((len(groups), 2, 2), dtype=complex)
    for k, lab in enumerate(labels):
        out[groups.index(lab[keep])] += partial[k]
    return out


def conditional_marginal(m: Povm, keep: int, sigma) -> np.ndarray:
    """Effects seen on qubit ``keep`` when the other qubit is in ``sigma``.

    Returns an array of shape (2, 2, 2), one effect per value of the kept
    qubit's outcome bit, ``sum_x_j Tr_j[M_{x_i x_j} (1 ⊗ sigma)]``.
    """
    if m.dim != 4:
        raise DimensionError(f"conditional marginal needs a two-qubit POVM, got dim {m.dim}")
    if keep not in (0, 1):
        raise ValueError(f"keep must be 0 or 1, got {keep}")
    s = DensityMatrix.from_state(sigma)
    if s.dim != 2:
        raise DimensionError(f"conditioning state must be single-qubit, got dim {s.dim}")
    return _conditional_map(m.effects, m.outcome_labels, keep, s.matrix)


def spectral_norm(a) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(as_square(a), 2))


def psd_projection(a) -> np.ndarray:
    """Clip negative eigenvalues of a Hermitian matrix to zero.

    No trace renormalization; callers that need unit trace do it themselves.
    """
    m = as_square(a)
    if not is_hermitian(m, POVM_TOL):
        raise ValueError("psd_projection requires a Hermitian matrix")
    w, v = np.linalg.eigh(hermitize(m))
    return hermitize((v * np.clip(w, 0.0, None)) @ dagger(v))


def haar_random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary from QR of a complex Ginibre matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def haar_random_product_state(n_qubits: int, rng: np.random.Generator) -> PureState:
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    kets = [haar_random_unitary(2, rng)[:, 0] for _ in range(n_qubits)]
    psi = kron_all(kets)
    return PureState(psi / np.linalg.norm(psi))


def ginibre_density(dim: int, rank: int, rng: np.random.Generator) -> DensityMatrix:
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must be in [1, {dim}], got {rank}")
    g = (rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))) / np.sqrt(2)
    rho = g @ dagger(g)
    return DensityMatrix(hermitize(rho / np.trace(rho).real))


def random_povm(dim: int, n_outcomes: int, rng: np.random.Generator,
                labels: Sequence[str] = ()) -> Povm:
    """Random full-rank POVM: Ginibre positives normalized by S^{-1/2}."""
    g = (rng.standard_normal((n_outcomes, dim, dim))
         + 1j * rng.standard_normal((n_outcomes, dim, dim)))
    a = g @ dagger(g)
    w, v = np.linalg.eigh(a.sum(axis=0))
    s = (v / np.sqrt(w)) @ dagger(v)
    return Povm(hermitize(s @ a @ s), tuple(labels))


def born_probabilities(rho, m: Povm) -> np.ndarray:
    """Outcome probabilities ``Tr(rho M_i)``; tiny negatives are clamped."""
    r = np.asarray(DensityMatrix.from_state(rho))
    if r.shape[0] != m.dim:
        raise DimensionError(f"state dim {r.shape[0]} != POVM dim {m.dim}")
    p = np.einsum("kij,ji->k", m.effects, r).real
    if p.min() < -PROB_TOL:
        raise ValueError(f"negative outcome probability {p.min()!r}")
    if abs(p.sum() - 1.0) > POVM_TOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}")
    return np.clip(p, 0.0, 1.0)


def pure_infidelity(rho, sigma) -> float:
    """``1 - <sigma|rho|sigma>`` for a pure target."""
    r = np.asarray(DensityMatrix.from_state(rho))
    psi = np.asarray(sigma if isinstance(sigma, PureState) else PureState(sigma))
    if psi.size != r.shape[0]:
        raise DimensionError(f"state dims differ: {r.shape[0]} vs {psi.size}")
    return float(1.0 - np.vdot(psi, r @ psi).real)


def trace_distance(a, b) -> float:
    d = hermitize(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex))
    return 0.5 * float(np.abs(np.linalg.eigvalsh(d)).sum())


# -- JSON schema -------------------------------------------------------------

def matrix_to_json(a) -> dict:
    m = as_square(a)
    return {"dim": m.shape[0], "re": m.real.ravel().tolist(), "im": m.imag.ravel().tolist()}


def matrix_from_json(obj: dict) -> np.ndarray:
    d = int(obj["dim"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj["im"], dtype=float)
    if re.size != d * d or im.size != d * d:
        raise DimensionError(f"expected {d * d} entries for dim {d}")
    return (re + 1j * im).reshape(d, d)


def povm_to_json(m: Povm) -> dict:
    return {"effects": [matrix_to_json(e) for e in m.effects],
            "outcome_labels": list(m.outcome_labels)}


def povm_from_json(obj: dict) -> Povm:
    return Povm(np.array([matrix_from_json(e) for e in obj["effects"]]),
                tuple(obj["outcome_labels"]))
