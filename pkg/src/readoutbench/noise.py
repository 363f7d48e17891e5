"""Measurement settings, calibration states, readout-noise channels and shot sampling.

Noise acts on POVMs (Heisenberg picture); state preparation stays ideal.
A scenario's per-setting POVMs are built by applying the channel to the
computational-basis readout and then undoing the setting's basis change,
i.e. the noise sits between the basis-change gates and the detector.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    PAULIS,
    DensityMatrix,
    DimensionError,
    Povm,
    PureState,
    bitstrings,
    born_probabilities,
    dagger,
    hermitize,
    kron_all,
    max_abs,
    n_qubits_for,
)

PAULI_LETTERS = "XYZ"

_TETRA_1Q = np.array(
    [
        [1.0, 0.0],
        [1 / np.sqrt(3), np.sqrt(2 / 3)],
        [1 / np.sqrt(3), np.sqrt(2 / 3) * np.exp(2j * np.pi / 3)],
        [1 / np.sqrt(3), np.sqrt(2 / 3) * np.exp(4j * np.pi / 3)],
    ],
    dtype=complex,
)

# rows map the setting's (+1, -1) eigenstates to |0>, |1>
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.diag([1, -1j])
_BASIS_CHANGE = {"X": _H, "Y": _H @ _SDG, "Z": np.eye(2, dtype=complex)}


def pauli_settings(n_qubits: int) -> list[str]:
    """All 3^n Pauli measurement settings, e.g. ``['XX', 'XY', ..., 'ZZ']``."""
    return ["".join(s) for s in itertools.product(PAULI_LETTERS, repeat=n_qubits)]


def _check_setting(setting: str) -> str:
    if not setting or any(c not in PAULI_LETTERS for c in setting):
        raise ValueError(f"invalid measurement setting {setting!r}")
    return setting


def tetrahedron_states(n_qubits: int) -> list[PureState]:
    """The 4^n products of the four tetrahedron states, lexicographic order."""
    if n_qubits not in (1, 2, 3):
        raise ValueError(f"tetrahedron calibration supports 1-3 qubits, got {n_qubits}")
    return [PureState(kron_all(c)) for c in itertools.product(_TETRA_1Q, repeat=n_qubits)]


def tetrahedron_tags(n_qubits: int) -> list[str]:
    return ["".join(str(i + 1) for i in c) for c in itertools.product(range(4), repeat=n_qubits)]


def basis_change(setting: str) -> np.ndarray:
    """Unitary B with ``B† P_Z B`` equal to the setting's projectors."""
    return kron_all(_BASIS_CHANGE[c] for c in _check_setting(setting))


def projective_povm(setting: str) -> Povm:
    """Rank-1 projectors onto the setting's eigenbasis; bit 0 is the +1 eigenstate."""
    b = basis_change(setting)
    dim = b.shape[0]
    kets = dagger(b)  # column k is the eigenvector for outcome k
    effects = np.array([np.outer(kets[:, k], kets[:, k].conj()) for k in range(dim)])
    return Povm(effects, tuple(bitstrings(len(setting))))


def _embed_1q(op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    return kron_all(op if q == qubit else PAULIS["I"] for q in range(n_qubits))


def iswap_unitary(n_qubits: int = 2, pair: tuple[int, int] = (0, 1)) -> np.ndarray:
    """iSWAP on ``pair``: |01> <-> |10> with phase i, identity elsewhere."""
    a, b = pair
    if a == b or not (0 <= a < n_qubits and 0 <= b < n_qubits):
        raise ValueError(f"invalid qubit pair {pair} for {n_qubits} qubits")
    dim = 1 << n_qubits
    u = np.zeros((dim, dim), dtype=complex)
    sa, sb = n_qubits - 1 - a, n_qubits - 1 - b
    for i in range(dim):
        ba, bb = (i >> sa) & 1, (i >> sb) & 1
        if ba == bb:
            u[i, i] = 1.0
        else:
            j = i ^ (1 << sa) ^ (1 << sb)
            u[j, i] = 1j
    return u


def rotation_unitary(theta: float, axis: str = "X", n_qubits: int = 1) -> np.ndarray:
    """``exp(-i theta sigma_axis)`` on every qubit (Bloch rotation of 2*theta)."""
    s = PAULIS[axis.upper()]
    u1 = np.cos(theta) * PAULIS["I"] - 1j * np.sin(theta) * s
    return kron_all([u1] * n_qubits)


def symmetric_confusion(error: float, n_qubits: int = 1) -> np.ndarray:
    """Independent per-qubit bit flips with probability ``error``."""
    c1 = np.array([[1 - error, error], [error, 1 - error]])
    out = np.ones((1, 1))
    for _ in range(n_qubits):
        out = np.kron(out, c1)
    return out


@dataclass(frozen=True)
class ConfusionMatrix:
    """Classical readout error ``M~_i = sum_j C_ij P_j``; columns of C sum to 1."""

    matrix: np.ndarray

    def __post_init__(self):
        c = np.array(self.matrix, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if c.min() < 0 or max_abs(c.sum(axis=0) - 1.0) > 1e-10:
            raise ValueError("confusion matrix must be column-stochastic")
        object.__setattr__(self, "matrix", c)

    def apply(self, m: Povm) -> Povm:
        if self.matrix.shape[0] != len(m):
            raise DimensionError(
                f"confusion matrix has {self.matrix.shape[0]} outcomes, POVM has {len(m)}")
        return Povm(np.einsum("ij,jab->iab", self.matrix.astype(complex), m.effects),
                    m.outcome_labels)

    def to_dict(self) -> dict:
        return {"kind": "confusion", "matrix": self.matrix.tolist()}


@dataclass(frozen=True)
class Depolarizing:
    """Single-qubit depolarizing channel of strength k on each target qubit."""

    k: float
    qubits: tuple[int, ...] | None = None  # None: all qubits

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"depolarizing strength must be in [0, 1], got {self.k}")
        if self.qubits is not None:
            object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))

    def apply(self, m: Povm) -> Povm:
        n = m.n_qubits
        targets = range(n) if self.qubits is None else self.qubits
        e = m.effects
        for q in targets:
            if not 0 <= q < n:
                raise DimensionError(f"qubit {q} out of range for {n} qubits")
            acc = (1 - 0.75 * self.k) * e
            for p in "XYZ":
                pq = _embed_1q(PAULIS[p], q, n)
                acc = acc + 0.25 * self.k * (pq @ e @ pq)
            e = acc
        return Povm(hermitize(e), m.outcome_labels)

    def to_dict(self) -> dict:
        d = {"kind": "depolarizing", "k": self.k}
        if self.qubits is not None:
            d["qubits"] = list(self.qubits)
        return d


@dataclass(frozen=True)
class ProbabilisticIswap:
    """``(1-k) M + k U M U†`` with U the iSWAP on ``qubits``."""

    k: float
    qubits: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"iSWAP probability must be in [0, 1], got {self.k}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))

    def apply(self, m: Povm) -> Povm:
        u = iswap_unitary(m.n_qubits, self.qubits)
        e = (1 - self.k) * m.effects + self.k * (u @ m.effects @ dagger(u))
        return Povm(hermitize(e), m.outcome_labels)

    def to_dict(self) -> dict:
        return {"kind": "iswap", "k": self.k, "qubits": list(self.qubits)}


@dataclass(frozen=True)
class CoherentRotation:
    """Coherent readout error ``M~_i = U† M_i U``."""

    unitary: np.ndarray

    def __post_init__(self):
        u = np.array(self.unitary, dtype=complex)
        if u.ndim != 2 or max_abs(dagger(u) @ u - np.eye(u.shape[0])) > 1e-10:
            raise ValueError("coherent rotation requires a unitary matrix")
        object.__setattr__(self, "unitary", u)

    @classmethod
    def about_axis(cls, theta: float, axis: str = "X", n_qubits: int = 1) -> "CoherentRotation":
        return cls(rotation_unitary(theta, axis, n_qubits))

    def apply(self, m: Povm) -> Povm:
        if self.unitary.shape[0] != m.dim:
            raise DimensionError(f"rotation dim {self.unitary.shape[0]} != POVM dim {m.dim}")
        return m.conjugated(self.unitary)

    def to_dict(self) -> dict:
        return {"kind": "unitary", "re": self.unitary.real.tolist(),
                "im": self.unitary.imag.tolist()}


@dataclass(frozen=True)
class Composite:
    """Channels applied left to right."""

    channels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))

    def apply(self, m: Povm) -> Povm:
        for ch in self.channels:
            m = ch.apply(m)
        return m

    def to_dict(self) -> dict:
        return {"kind": "composite", "channels": [c.to_dict() for c in self.channels]}


NoiseChannel = ConfusionMatrix | Depolarizing | ProbabilisticIswap | CoherentRotation | Composite


def apply_noise(m: Povm, ch: NoiseChannel | None) -> Povm:
    return m if ch is None else ch.apply(m)


def setting_povms(n_qubits: int, channel: NoiseChannel | None = None,
                  settings: Sequence[str] | None = None) -> list[Povm]:
    """Per-setting POVMs of a readout with ``channel`` acting on the Z readout."""
    settings = pauli_settings(n_qubits) if settings is None else list(settings)
    noisy_z = apply_noise(projective_povm("Z" * n_qubits), channel)
    return [noisy_z.conjugated(basis_change(s)) for s in settings]


@dataclass(frozen=True, eq=False)
class ShotCounts:
    """Outcome histograms indexed ``counts[state, setting, outcome]``."""

    counts: np.ndarray
    state_tags: tuple[str, ...]
    settings: tuple[str, ...]
    outcome_labels: tuple[str, ...]

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        shape = (len(self.state_tags), len(self.settings), len(self.outcome_labels))
        if c.shape != shape:
            raise DimensionError(f"counts shape {c.shape} != {shape}")
        if c.size and c.min() < 0:
            raise ValueError("counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        for name in ("state_tags", "settings", "outcome_labels"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def total_shots(self) -> int:
        return int(self.counts.sum())

    def for_state(self, i: int) -> np.ndarray:
        """Counts of one prepared state, shape (settings, outcomes)."""
        return self.counts[i]

    def for_setting(self, j: int) -> np.ndarray:
        """Counts of one setting, shape (states, outcomes)."""
        return self.counts[:, j]

    def __add__(self, other: "ShotCounts") -> "ShotCounts":
        if (self.state_tags, self.settings, self.outcome_labels) != (
                other.state_tags, other.settings, other.outcome_labels):
            raise ValueError("cannot add counts with different layouts")
        return ShotCounts(self.counts + other.counts, self.state_tags, self.settings,
                          self.outcome_labels)

    def to_json(self) -> dict:
        return {
            "state_tags": list(self.state_tags),
            "settings": list(self.settings),
            "outcome_labels": list(self.outcome_labels),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ShotCounts":
        return cls(np.array(obj["counts"], dtype=np.int64).reshape(
            len(obj["state_tags"]), len(obj["settings"]), len(obj["outcome_labels"])),
            obj["state_tags"], obj["settings"], obj["outcome_labels"])


def sample_counts(states: Sequence, povms: Sequence[Povm], shots_per_cell: int,
                  rng: np.random.Generator, state_tags: Sequence[str] | None = None,
                  settings: Sequence[str] | None = None) -> ShotCounts:
    """Multinomial shot counts for every (state, setting) cell.

    Cells are drawn in row-major (state, setting) order from ``rng``.
    """
    if shots_per_cell < 1:
        raise ValueError(f"shots_per_cell must be >= 1, got {shots_per_cell}")
    if not povms:
        raise ValueError("at least one POVM is required")
    rhos = [DensityMatrix.from_state(s) for s in states]
    labels = povms[0].outcome_labels
    out = np.zeros((len(rhos), len(povms), len(labels)), dtype=np.int64)
    for i, rho in enumerate(rhos):
        for j, m in enumerate(povms):
            p = born_probabilities(rho, m)
            out[i, j] = rng.multinomial(int(shots_per_cell), p / p.sum())
    if state_tags is None:
        state_tags = [f"s{i}" for i in range(len(rhos))]
    if settings is None:
        n = n_qubits_for(povms[0].dim)
        settings = pauli_settings(n) if len(povms) == 3 ** n else [str(j) for j in range(len(povms))]
    return ShotCounts(out, tuple(state_tags), tuple(settings), labels)
