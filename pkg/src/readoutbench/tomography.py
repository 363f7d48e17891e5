"""Detector and state tomography estimators.

``qdt_mle`` reconstructs a POVM from calibration counts; ``qst_mle`` and
``qst_bme`` reconstruct a density matrix from counts over several
measurement settings, given a (possibly noisy, estimated) POVM per setting.
Passing estimated POVMs is what makes the state estimate readout-error
mitigated; passing ideal projectors gives standard tomography.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import kernels
from .core import (
    DensityMatrix,
    DimensionError,
    Povm,
    dagger,
    hermitize,
    make_rng,
    matrix_to_json,
    povm_to_json,
)
from .noise import ShotCounts

log = logging.getLogger(__name__)

ZERO_PROB = kernels._pykernels.ZERO_PROB


class EstimationError(RuntimeError):
    """Estimator could not produce a result from the given data."""


@dataclass(frozen=True)
class QdtConfig:
    max_iterations: int = 5000
    convergence_tol: float = 1e-10
    initial_povm: Povm | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be > 0")


@dataclass(frozen=True)
class QstConfig:
    estimator: str = "mle"
    max_iterations: int = 5000
    convergence_tol: float = 1e-10
    dilution: float = 0.5
    bme_chain_length: int = 10000
    bme_burn_in: int = 1000
    bme_proposal_scale: float = 1.0

    def __post_init__(self):
        if self.estimator not in ("mle", "bme"):
            raise ValueError(f"estimator must be 'mle' or 'bme', got {self.estimator!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be > 0")
        if not 0 < self.dilution <= 1:
            raise ValueError("dilution must be in (0, 1]")
        if not self.bme_chain_length > self.bme_burn_in >= 0:
            raise ValueError("need bme_chain_length > bme_burn_in >= 0")
        if not self.bme_proposal_scale > 0:
            raise ValueError("bme_proposal_scale must be > 0")


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_resamples < 2:
            raise ValueError("n_resamples must be >= 2")


@dataclass(frozen=True, eq=False)
class PovmFit:
    povm: Povm
    iterations: int
    log_likelihood: float
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    def to_json(self, config: dict | None = None, seed: int | None = None) -> dict:
        return {"povm": povm_to_json(self.povm), "iterations": self.iterations,
                "log_likelihood": self.log_likelihood, "converged": self.converged,
                "config": config, "seed": seed}


@dataclass(frozen=True, eq=False)
class StateFit:
    state: DensityMatrix
    estimator: str
    iterations: int
    log_likelihood: float
    converged: bool
    acceptance: float | None = None
    history: list[float] = field(default_factory=list, repr=False)

    def metadata(self) -> dict:
        out = {"estimator": self.estimator, "iterations": self.iterations,
               "log_likelihood": self.log_likelihood, "converged": self.converged}
        if self.acceptance is not None:
            out["acceptance"] = self.acceptance
        return out

    def to_json(self, config: dict | None = None, seed: int | None = None) -> dict:
        return {"state": matrix_to_json(self.state.matrix), **self.metadata(),
                "config": config, "seed": seed}


# -- detector tomography -----------------------------------------------------

def _state_stack(states) -> np.ndarray:
    return np.array([np.asarray(DensityMatrix.from_state(s)) for s in states])


def check_informationally_complete(rhos: np.ndarray) -> None:
    d = rhos.shape[1]
    rank = np.linalg.matrix_rank(rhos.reshape(rhos.shape[0], d * d), tol=1e-9)
    if rank < d * d:
        raise EstimationError(
            f"calibration states span rank {rank} < {d * d}; not informationally complete")


def qdt_mle(counts, calibration_states: Sequence, cfg: QdtConfig | None = None,
            outcome_labels: Sequence[str] = ()) -> PovmFit:
    """Maximum-likelihood POVM from counts of shape (states, outcomes).

    Iterates ``M_i <- L R_i M_i R_i L`` with ``R_i = sum_s f_is/p_is rho_s``
    and ``L = (sum_i R_i M_i R_i)^{-1/2}``. Any step that would lower the
    likelihood is diluted towards the identity until it does not.
    """
    cfg = cfg or QdtConfig()
    n = np.asarray(counts, dtype=float)
    rhos = _state_stack(calibration_states)
    if n.ndim != 2 or n.shape[0] != rhos.shape[0]:
        raise DimensionError(f"counts shape {n.shape} does not match {rhos.shape[0]} states")
    check_informationally_complete(rhos)
    k = n.shape[1]
    d = rhos.shape[1]
    if np.any(n.sum(axis=1) == 0):
        raise EstimationError("every calibration state needs at least one shot")
    if cfg.initial_povm is not None:
        if len(cfg.initial_povm) != k or cfg.initial_povm.dim != d:
            raise DimensionError("initial POVM does not match the counts")
        m0 = np.array(cfg.initial_povm.effects)
    else:
        m0 = np.repeat(np.eye(d, dtype=complex)[None] / k, k, axis=0)
    try:
        m, it, ll, converged, history = kernels.qdt_mle_loop(
            m0, rhos, n, cfg.max_iterations, cfg.convergence_tol)
    except kernels.ZeroProbability as exc:
        raise EstimationError("initial POVM assigns zero probability to observed data") from exc
    if not converged:
        log.debug("qdt_mle stopped at max_iterations=%d", cfg.max_iterations)
    labels = tuple(outcome_labels) or ()
    return PovmFit(Povm(m, labels), it, ll, converged, history)


def qdt_per_setting(counts: ShotCounts, calibration_states: Sequence,
                    cfg: QdtConfig | None = None) -> list[PovmFit]:
    """One ``qdt_mle`` reconstruction per measurement setting."""
    return [qdt_mle(counts.for_setting(j), calibration_states, cfg, counts.outcome_labels)
            for j in range(len(counts.settings))]


# -- state tomography --------------------------------------------------------

def pool_settings(counts, povms: Sequence[Povm]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate per-setting effects and counts into one outcome pool."""
    if isinstance(counts, ShotCounts):
        if counts.counts.shape[0] != 1:
            raise DimensionError("state tomography expects counts for a single state")
        counts = counts.counts[0]
    n = np.asarray(counts, dtype=float)
    if n.ndim != 2 or n.shape[0] != len(povms):
        raise DimensionError(f"counts shape {n.shape} does not match {len(povms)} settings")
    dims = {p.dim for p in povms}
    if len(dims) != 1:
        raise DimensionError("all settings must act on the same dimension")
    if any(len(p) != n.shape[1] for p in povms):
        raise DimensionError("outcome count differs between counts and POVMs")
    effects = np.concatenate([np.asarray(p.effects) for p in povms])
    return effects, n.reshape(-1)


def _as_density(rho: np.ndarray) -> DensityMatrix:
    # clip round-off negatives only; RrhoR iterates are PSD analytically
    w, v = np.linalg.eigh(hermitize(rho))
    if w[0] < -1e-8:
        raise EstimationError(f"estimator produced eigenvalue {w[0]:.3g}")
    w = np.clip(w, 0.0, None)
    return DensityMatrix(hermitize((v * (w / w.sum())) @ dagger(v)))


def qst_mle(counts, povms: Sequence[Povm], cfg: QstConfig | None = None,
            initial_state=None) -> StateFit:
    """Maximum-likelihood state under the given per-setting POVMs."""
    cfg = cfg or QstConfig()
    effects, n = pool_settings(counts, povms)
    if n.sum() <= 0:
        raise EstimationError("no shots recorded")
    d = effects.shape[1]
    rho0 = (np.eye(d, dtype=complex) / d if initial_state is None
            else np.asarray(DensityMatrix.from_state(initial_state), dtype=complex))
    try:
        rho, it, ll, converged, history = kernels.qst_mle_loop(
            rho0, effects, n, cfg.dilution, cfg.max_iterations, cfg.convergence_tol)
    except kernels.ZeroProbability as exc:
        raise EstimationError(
            f"outcome {exc.args[0]} observed but has zero probability under the model") from exc
    return StateFit(_as_density(rho), "mle", it, ll, converged, history=history)


def _ginibre_factor(rho: np.ndarray, norm2: float) -> np.ndarray:
    w, v = np.linalg.eigh(hermitize(rho))
    g = (v * np.sqrt(np.clip(w, 0.0, None))) @ dagger(v)
    return g * np.sqrt(norm2 / np.real(np.trace(g @ dagger(g))))


def qst_bme(counts, povms: Sequence[Povm], cfg: QstConfig | None = None,
            rng: np.random.Generator | int | None = None) -> StateFit:
    """Bayesian mean state under a full-rank Ginibre prior.

    Random-walk Metropolis in the Ginibre factor G, started near the
    maximum-likelihood estimate. The proposal scale adapts during burn-in.
    """
    cfg = cfg or QstConfig(estimator="bme")
    rng = make_rng(rng)
    effects, n = pool_settings(counts, povms)
    d = effects.shape[1]
    total = float(n.sum())
    if total > 0:
        init = qst_mle(counts, povms, QstConfig(max_iterations=min(cfg.max_iterations, 500),
                                                convergence_tol=1e-8,
                                                dilution=cfg.dilution)).state.matrix
        delta = d / (total + d)
        rho0 = (1 - delta) * init + delta * np.eye(d) / d
    else:
        rho0 = np.eye(d, dtype=complex) / d
    g0 = _ginibre_factor(rho0, float(d * d))
    length = cfg.bme_chain_length
    normals = (rng.standard_normal((length, d, d))
               + 1j * rng.standard_normal((length, d, d))) / np.sqrt(2)
    log_u = np.log(rng.random(length))
    scale0 = cfg.bme_proposal_scale * 2.38 / np.sqrt(2 * d * d) / np.sqrt(total + 1)
    try:
        mean, acc, _ = kernels.bme_chain(g0, effects, n, normals, log_u, scale0,
                                         cfg.bme_burn_in, 50)
    except kernels.ZeroProbability as exc:
        raise EstimationError("posterior is not finite at the chain start") from exc
    if not np.all(np.isfinite(mean)):
        raise EstimationError("non-finite posterior mean")
    rho = _as_density(mean)
    p = np.einsum("tij,ji->t", effects, rho.matrix).real
    obs = n > 0
    ll = float(np.dot(n[obs], np.log(np.clip(p[obs], 1e-300, None))) / total) if total else 0.0
    return StateFit(rho, "bme", length, ll, True, acceptance=float(acc))


def estimate_state(counts, povms: Sequence[Povm], cfg: QstConfig | None = None,
                   rng: np.random.Generator | int | None = None) -> StateFit:
    cfg = cfg or QstConfig()
    if cfg.estimator == "bme":
        return qst_bme(counts, povms, cfg, rng)
    return qst_mle(counts, povms, cfg)


# -- bootstrap ---------------------------------------------------------------

class BootstrapError(EstimationError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"estimator failed on bootstrap resample {index}: {cause}")
        self.index = index


def resample_counts(counts, rng: np.random.Generator):
    """Multinomial resample of every cell at its observed total."""
    if isinstance(counts, ShotCounts):
        return ShotCounts(resample_counts(counts.counts, rng), counts.state_tags,
                          counts.settings, counts.outcome_labels)
    c = np.asarray(counts, dtype=np.int64)
    cells = c.reshape(-1, c.shape[-1])
    out = np.zeros_like(cells)
    for i, row in enumerate(cells):
        tot = int(row.sum())
        if tot:
            out[i] = rng.multinomial(tot, row / tot)
    return out.reshape(c.shape)


def bootstrap_std(counts, estimator: Callable[[Any], Any], statistic: Callable[[Any], float],
                  cfg: BootstrapConfig | None = None) -> float:
    """Standard deviation of ``statistic(estimator(resample))`` over resamples."""
    cfg = cfg or BootstrapConfig()
    arr = counts.counts if isinstance(counts, ShotCounts) else np.asarray(counts)
    if arr.size == 0 or arr.sum() == 0:
        raise ValueError("bootstrap needs nonempty counts")
    rng = make_rng(cfg.seed)
    values = np.empty(cfg.n_resamples)
    for b in range(cfg.n_resamples):
        sample = resample_counts(counts, rng)
        try:
            values[b] = statistic(estimator(sample))
        except Exception as exc:  # noqa: BLE001 - reported with the resample index
            raise BootstrapError(b, exc) from exc
    return float(np.std(values, ddof=1))
