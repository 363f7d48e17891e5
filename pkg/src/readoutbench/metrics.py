"""Readout quality metrics computed from POVMs and counts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import (
    PAULIS,
    DimensionError,
    Povm,
    make_rng,
    product_povm,
    _conditional_map,
)
from .noise import ShotCounts, sample_counts, tetrahedron_states
from .tomography import QdtConfig, qdt_mle

MODES = ("classical", "quantum")
OPTIMIZER_TOL = 1e-4
_GRID_SIZE = 400


@dataclass(frozen=True)
class AssignmentFidelity:
    per_qubit: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_qubit))

    @property
    def product(self) -> float:
        return float(np.prod(self.per_qubit))


def assignment_fidelity(counts: Mapping[str, Sequence[float]] | ShotCounts) -> AssignmentFidelity:
    """Per-qubit ``(p(0|0) + p(1|1)) / 2`` from computational-basis preparations.

    ``counts`` maps each prepared bitstring to its outcome histogram (or
    probabilities) over the usual bitstring labels; for ``ShotCounts`` the
    state tags are the prepared bitstrings and the all-Z setting is used.
    """
    if isinstance(counts, ShotCounts):
        n = len(counts.outcome_labels[0])
        j = counts.settings.index("Z" * n)
        counts = {tag: counts.counts[i, j] for i, tag in enumerate(counts.state_tags)}
    if not counts:
        raise ValueError("no preparation data")
    n = len(next(iter(counts)))
    labels = [format(i, f"0{n}b") for i in range(1 << n)]
    per_qubit = []
    for q in range(n):
        correct = {"0": [], "1": []}
        for prep, hist in counts.items():
            h = np.asarray(hist, dtype=float)
            if h.sum() <= 0:
                continue
            hit = sum(h[k] for k, lab in enumerate(labels) if lab[q] == prep[q])
            correct[prep[q]].append(hit / h.sum())
        if not correct["0"] or not correct["1"]:
            raise ValueError(f"qubit {q} lacks |0> or |1> preparations")
        per_qubit.append(0.5 * (np.mean(correct["0"]) + np.mean(correct["1"])))
    return AssignmentFidelity(tuple(float(f) for f in per_qubit))


# -- correlation coefficients ------------------------------------------------

def _outcome0_index(m: Povm, target: int) -> int:
    groups = sorted({lab[target] for lab in m.outcome_labels})
    return groups.index("0")


def _pauli_response(m: Povm, target: int) -> np.ndarray:
    """Outcome-0 conditional effect on ``target`` for sigma = X, Y, Z on the other qubit.

    The conditional effect is linear in the conditioning operator, so for
    antipodal Bloch vectors ±u the difference of conditional effects is
    ``sum_a u_a A_a``.
    """
    k0 = _outcome0_index(m, target)
    return np.array([_conditional_map(m.effects, m.outcome_labels, target, PAULIS[p])[k0]
                     for p in "XYZ"])


def _hermitian_norms(h: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(h)
    return np.max(np.abs(w), axis=-1)


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5 ** 0.5) * i
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _bloch(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


@dataclass(frozen=True)
class _Sup:
    value: float
    evaluations: int
    maximizer: tuple[float, ...]


def _classical_sup(m: Povm, target: int) -> _Sup:
    k0 = _outcome0_index(m, target)
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    a = _conditional_map(m.effects, m.outcome_labels, target, p0)[k0]
    b = _conditional_map(m.effects, m.outcome_labels, target, p1)[k0]
    return _Sup(float(np.linalg.norm(a - b, 2)), 2, (0.0, 0.0, 1.0))


def _quantum_sup(m: Povm, target: int, grid_size: int = _GRID_SIZE) -> _Sup:
    resp = _pauli_response(m, target)
    grid = np.vstack([fibonacci_sphere(grid_size), [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0],
                                                     [0.0, 1.0, 0.0]]])
    vals = _hermitian_norms(np.einsum("na,aij->nij", grid, resp))
    evals = len(grid)
    best = int(np.argmax(vals))
    best_val, best_u = float(vals[best]), grid[best]

    def neg(x):
        return -float(_hermitian_norms(np.einsum("a,aij->ij", _bloch(*x), resp)[None])[0])

    for start in np.argsort(vals)[-3:]:
        u = grid[start]
        x0 = np.array([np.arccos(np.clip(u[2], -1, 1)), np.arctan2(u[1], u[0])])
        res = minimize(neg, x0, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000})
        evals += res.nfev
        if -res.fun > best_val:
            best_val, best_u = float(-res.fun), _bloch(*res.x)
    return _Sup(best_val, evals, tuple(float(c) for c in best_u))


def _check_two_qubit(m: Povm) -> None:
    if m.dim != 4:
        raise DimensionError(f"correlation coefficients need a two-qubit POVM, got dim {m.dim}")


def correlation_coefficient(m: Povm, source: int, target: int, mode: str = "quantum") -> float:
    """``c_{source -> target}``: how much the source qubit's state moves the
    target qubit's outcome-0 effect, in spectral norm."""
    _check_two_qubit(m)
    if {source, target} != {0, 1}:
        raise ValueError("source and target must be the two distinct qubits 0 and 1")
    if mode == "classical":
        return _classical_sup(m, target).value
    if mode == "quantum":
        return _quantum_sup(m, target).value
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class CorrelationReport:
    """Directional and symmetric coefficients of a two-qubit POVM.

    ``c_j_to_i`` is ``c_{1->0}`` (qubit 1 affecting qubit 0) and
    ``c_i_to_j`` is ``c_{0->1}``.
    """

    c_j_to_i: float
    c_i_to_j: float
    symmetric: float
    mode: str
    evaluations: int = 0
    maximizers: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"mode": self.mode, "c_1_to_0": self.c_j_to_i, "c_0_to_1": self.c_i_to_j,
                "symmetric": self.symmetric, "evaluations": self.evaluations,
                "maximizers": {k: list(v) for k, v in self.maximizers.items()}}


def correlation_report(m: Povm, mode: str = "quantum") -> CorrelationReport:
    _check_two_qubit(m)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    sup = _classical_sup if mode == "classical" else _quantum_sup
    to0, to1 = sup(m, 0), sup(m, 1)
    return CorrelationReport(
        to0.value, to1.value, (to0.value + to1.value) / 2, mode,
        to0.evaluations + to1.evaluations,
        {"1->0": to0.maximizer, "0->1": to1.maximizer})


def symmetric_correlation(m: Povm, mode: str = "quantum") -> float:
    return correlation_report(m, mode).symmetric


# -- coherent errors ---------------------------------------------------------

def average_case_distance(m: Povm, n: Povm) -> float:
    """``(1/2d) sum_i sqrt(|M_i - N_i|_HS^2 + Tr(M_i - N_i)^2)``."""
    a, b = np.asarray(m.effects), np.asarray(n.effects)
    if a.shape != b.shape:
        raise DimensionError(f"POVM shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    hs2 = np.sum(np.abs(diff) ** 2, axis=(1, 2))
    tr = np.trace(diff, axis1=1, axis2=2).real
    return float(np.sum(np.sqrt(hs2 + tr ** 2)) / (2 * a.shape[1]))


def dephased(m: Povm) -> Povm:
    """Keep only the diagonal of every effect."""
    d = m.dim
    mask = np.eye(d, dtype=bool)
    return Povm(np.where(mask, m.effects, 0), m.outcome_labels)


@dataclass(frozen=True)
class CoherentErrorReport:
    epsilon_coh: float
    distance_kind: str = "average-case"


def coherent_error(m: Povm) -> CoherentErrorReport:
    return CoherentErrorReport(average_case_distance(m, dephased(m)))


# -- uncorrelated baseline ---------------------------------------------------

@dataclass(frozen=True)
class BaselineBand:
    """Mean and spread of symmetric coefficients for uncorrelated readout."""

    shot_grid: tuple[int, ...]
    mean: dict
    std: dict
    n_trials: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.shot_grid, self.shot_grid[1:])):
            raise ValueError("shot grid must be strictly increasing")

    def rows(self) -> list[dict]:
        return [{"shots": s, "mode": mode, "mean": self.mean[mode][g], "std": self.std[mode][g]}
                for g, s in enumerate(self.shot_grid) for mode in MODES]

    def to_json(self) -> dict:
        return {"shot_grid": list(self.shot_grid), "mean": self.mean, "std": self.std,
                "n_trials": self.n_trials}


def marginal_povms(m: Povm) -> list[Povm]:
    """Single-qubit marginals of a two-qubit POVM, the other qubit maximally mixed."""
    _check_two_qubit(m)
    half = np.eye(2, dtype=complex) / 2
    return [Povm(_conditional_map(m.effects, m.outcome_labels, q, half), ("0", "1"))
            for q in range(2)]


def reconstruct_z_povm(true_povm: Povm, total_shots: int, rng: np.random.Generator,
                       qdt_cfg: QdtConfig | None = None) -> Povm:
    """QDT of a computational-basis POVM from tetrahedron calibration.

    ``total_shots`` is split evenly over the calibration states.
    """
    states = tetrahedron_states(true_povm.n_qubits)
    per_state = total_shots // len(states)
    if per_state < 1:
        raise ValueError(f"{total_shots} shots cannot cover {len(states)} calibration states")
    counts = sample_counts(states, [true_povm], per_state, rng, settings=["Z" * true_povm.n_qubits])
    return qdt_mle(counts.for_setting(0), states, qdt_cfg, true_povm.outcome_labels).povm


def uncorrelated_baseline(single_qubit_povms: Sequence[Povm], shot_grid: Sequence[int],
                          n_trials: int, seed: int = 0,
                          qdt_cfg: QdtConfig | None = None) -> BaselineBand:
    """Coefficient bands from QDT of the product (uncorrelated) readout.

    Trial ``t`` at grid index ``g`` uses its own stream ``make_rng(seed, g, t)``.
    """
    if not shot_grid:
        raise ValueError("shot grid must be nonempty")
    if n_trials < 10:
        raise ValueError("n_trials must be >= 10")
    if len(single_qubit_povms) != 2:
        raise ValueError("baseline bands are defined for two-qubit readout")
    product = product_povm(single_qubit_povms)
    mean = {m: [] for m in MODES}
    std = {m: [] for m in MODES}
    for g, shots in enumerate(shot_grid):
        vals = {m: [] for m in MODES}
        for t in range(n_trials):
            est = reconstruct_z_povm(product, int(shots), make_rng(seed, g, t), qdt_cfg)
            for mode in MODES:
                vals[mode].append(symmetric_correlation(est, mode))
        for mode in MODES:
            mean[mode].append(float(np.mean(vals[mode])))
            std[mode].append(float(np.std(vals[mode], ddof=1)))
    return BaselineBand(tuple(int(s) for s in shot_grid), mean, std, n_trials)
