"""End-to-end simulated studies: infidelity curves, shot budgets, QREM
comparisons and correlation studies.

Every random draw comes from a stream keyed by ``make_rng(seed, ...)`` on
the cell coordinates, so results do not depend on thread scheduling.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    DensityMatrix,
    Povm,
    PureState,
    born_probabilities,
    make_rng,
    pure_infidelity,
)
from .metrics import (
    MODES,
    BaselineBand,
    correlation_report,
    marginal_povms,
    reconstruct_z_povm,
    uncorrelated_baseline,
)
from .noise import (
    Composite,
    Depolarizing,
    NoiseChannel,
    apply_noise,
    projective_povm,
    setting_povms,
    tetrahedron_states,
    sample_counts,
)
from .tomography import (
    BootstrapConfig,
    EstimationError,
    QdtConfig,
    QstConfig,
    bootstrap_std,
    estimate_state,
    qdt_per_setting,
    qst_mle,
)

log = logging.getLogger(__name__)


class StudyError(RuntimeError):
    """A study cell failed; ``coordinates`` locates it."""

    def __init__(self, coordinates: dict, cause: Exception):
        where = ", ".join(f"{k}={v}" for k, v in coordinates.items())
        super().__init__(f"failed at {where}: {cause}")
        self.coordinates = dict(coordinates)


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def log_schedule(start: float, stop: float, n_points: int = 20) -> list[int]:
    """Logarithmically spaced integer shot counts, duplicates removed."""
    if not 0 < start < stop:
        raise ValueError("need 0 < start < stop")
    if n_points < 2:
        raise ValueError("need at least two schedule points")
    raw = np.geomspace(start, stop, n_points)
    return sorted({int(round(x)) for x in raw})


# -- infidelity curves -------------------------------------------------------

@dataclass(frozen=True)
class InfidelityCurve:
    cumulative_shots: tuple[int, ...]
    mean: tuple[float, ...]
    q25: tuple[float, ...]
    q75: tuple[float, ...]
    n_states: int
    estimator: str
    per_state: np.ndarray = field(repr=False, compare=False, default=None)
    failures: tuple = ()

    def __post_init__(self):
        s = self.cumulative_shots
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError("shots must be strictly increasing")
        if not len(s) == len(self.mean) == len(self.q25) == len(self.q75):
            raise ValueError("curve columns differ in length")

    def rows(self) -> list[dict]:
        return [{"shots": s, "mean": m, "q25": lo, "q75": hi, "estimator": self.estimator}
                for s, m, lo, hi in zip(self.cumulative_shots, self.mean, self.q25, self.q75)]

    def to_json(self) -> dict:
        return {"estimator": self.estimator, "n_states": self.n_states,
                "cumulative_shots": list(self.cumulative_shots), "mean": list(self.mean),
                "q25": list(self.q25), "q75": list(self.q75),
                "failures": [list(f) for f in self.failures]}


def _aggregate(shots: Sequence[int], values: np.ndarray, estimator: str,
               failures: Sequence = ()) -> InfidelityCurve:
    mean, q25, q75 = [], [], []
    for col in values.T:
        ok = col[np.isfinite(col)]
        if ok.size == 0:
            mean.append(math.nan), q25.append(math.nan), q75.append(math.nan)
            continue
        mean.append(float(ok.mean()))
        lo, hi = np.percentile(ok, [25, 75])
        q25.append(float(lo)), q75.append(float(hi))
    return InfidelityCurve(tuple(int(s) for s in shots), tuple(mean), tuple(q25), tuple(q75),
                           values.shape[0], estimator, values, tuple(failures))


def _per_setting_schedule(shot_schedule: Sequence[float], n_settings: int) -> list[float]:
    """Per-setting cumulative shots; ``inf`` marks the exact-frequency limit."""
    out = []
    for s in shot_schedule:
        out.append(math.inf if math.isinf(s) else max(1, int(round(s / n_settings))))
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError("schedule must stay strictly increasing after splitting over settings")
    return out


def simulate_cumulative(state, true_povms: Sequence[Povm], per_setting: Sequence[float],
                        rng: np.random.Generator) -> list[np.ndarray]:
    """Counts at each schedule point, grown by drawing only the increments.

    An infinite entry yields exact expected frequencies instead of counts.
    """
    rho = DensityMatrix.from_state(state)
    probs = [born_probabilities(rho, m) for m in true_povms]
    running = np.zeros((len(true_povms), len(probs[0])), dtype=np.int64)
    done = 0
    out = []
    for n in per_setting:
        if math.isinf(n):
            out.append(np.array(probs))
            continue
        inc = int(n) - done
        for j, p in enumerate(probs):
            running[j] += rng.multinomial(inc, p / p.sum())
        done = int(n)
        out.append(running.copy())
    return out


def infidelity_curve(targets: Sequence[PureState], true_povms: Sequence[Povm],
                     estimation_povms: Sequence[Povm], shot_schedule: Sequence[float],
                     cfg: QstConfig | None = None, seed: int = 0, label: str = "qrem",
                     threads: int = 1) -> InfidelityCurve:
    """Mean and interquartile infidelity versus cumulative QST shots.

    ``shot_schedule`` counts shots per target summed over all settings.
    Target ``t`` draws its counts from ``make_rng(seed, t)`` so two curves
    with the same seed (e.g. QREM and standard) share their data. Estimator
    failures drop that (target, point) cell and are listed in ``failures``.
    """
    if not targets:
        raise ValueError("need at least one target")
    cfg = cfg or QstConfig()
    per_setting = _per_setting_schedule(shot_schedule, len(true_povms))
    # the exact-frequency limit is recorded as the largest representable count
    shots = [np.iinfo(np.int64).max if math.isinf(p) else p * len(true_povms)
             for p in per_setting]

    def run(t: int):
        counts = simulate_cumulative(targets[t], true_povms, per_setting, make_rng(seed, t))
        row, failed = np.full(len(counts), np.nan), []
        for k, c in enumerate(counts):
            try:
                fit = estimate_state(c, estimation_povms, cfg, make_rng(seed, t, k, 1))
                row[k] = pure_infidelity(fit.state, targets[t])
            except EstimationError as exc:
                failed.append((t, shots[k], str(exc)))
        return row, failed

    results = _map(run, list(range(len(targets))), threads)
    values = np.array([r for r, _ in results])
    failures = [f for _, fs in results for f in fs]
    for f in failures:
        log.warning("estimator failed for target %d at %d shots: %s", *f)
    return _aggregate(shots, values, label, failures)


class NoCrossingError(ValueError):
    """The curve never falls to the threshold."""


@dataclass(frozen=True)
class ThresholdCrossing:
    threshold: float
    shots_at_crossing: float
    bootstrap_std: float | None = None

    def to_json(self) -> dict:
        return {"threshold": self.threshold, "shots_at_crossing": self.shots_at_crossing,
                "bootstrap_std": self.bootstrap_std}


def _crossing(shots: Sequence[float], mean: Sequence[float], threshold: float) -> float:
    for k, m in enumerate(mean):
        if not m <= threshold:
            continue
        if k == 0 or m == threshold:
            return float(shots[k])
        x0, x1 = math.log(shots[k - 1]), math.log(shots[k])
        y0, y1 = math.log(mean[k - 1]), math.log(max(m, 1e-300))
        x = x0 + (math.log(threshold) - y0) * (x1 - x0) / (y1 - y0)
        return float(math.exp(x))
    raise NoCrossingError(f"curve never reaches infidelity {threshold}")


def threshold_crossing(curve: InfidelityCurve, threshold: float,
                       bootstrap: BootstrapConfig | None = None) -> ThresholdCrossing:
    """First crossing of ``threshold`` by log-log interpolation.

    A curve that already starts at or below the threshold reports its first
    schedule point.

    With ``bootstrap`` the targets are resampled with replacement and the
    spread of the resampled crossings is reported (resamples whose curve
    never crosses are skipped).
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    shots = curve.cumulative_shots
    value = _crossing(shots, curve.mean, threshold)
    std = None
    if bootstrap is not None and curve.per_state is not None and curve.n_states > 1:
        rng = make_rng(bootstrap.seed)
        vals = curve.per_state
        found = []
        for _ in range(bootstrap.n_resamples):
            idx = rng.integers(0, vals.shape[0], vals.shape[0])
            with np.errstate(all="ignore"):
                mean = np.nanmean(vals[idx], axis=0)
            try:
                found.append(_crossing(shots, mean, threshold))
            except NoCrossingError:
                pass
        if len(found) > 1:
            std = float(np.std(found, ddof=1))
    return ThresholdCrossing(float(threshold), value, std)


# -- shot budgets ------------------------------------------------------------

@dataclass(frozen=True)
class RatioPrediction:
    n_qubits: int
    n_states: int
    assumption: str
    r: float


def theoretical_ratio(n_qubits: int, n_states: int, assumption: str = "IC") -> RatioPrediction:
    """Parameter-counting optimum of the calibration share of the budget."""
    if n_qubits < 1 or n_states < 1:
        raise ValueError("n_qubits and n_states must be >= 1")
    full, half = 4 ** n_qubits, 2 ** n_qubits
    if assumption == "IC":
        r = full / (full + n_states)
    elif assumption == "mixed":
        r = half / (half + n_states)
    elif assumption == "pure":
        r = (full + half) / (full + half + 2 * n_states)
    else:
        raise ValueError(f"assumption must be IC, mixed or pure, got {assumption!r}")
    return RatioPrediction(n_qubits, n_states, assumption, r)


@dataclass(frozen=True)
class BudgetPoint:
    r: float
    qdt_shots_per_cell: int
    qst_shots_per_setting: int
    mean: float
    std: float
    sem: float
    infidelities: tuple[float, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class BudgetSweepResult:
    total_budget: int
    n_qubits: int
    points: tuple[BudgetPoint, ...]
    baseline: BudgetPoint

    def __post_init__(self):
        rs = [p.r for p in self.points]
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("r grid must be strictly increasing")

    @property
    def best(self) -> BudgetPoint:
        return min((p for p in self.points if p.r > 0), key=lambda p: p.mean)

    def rows(self) -> list[dict]:
        return [{"r": p.r, "qdt_shots_per_cell": p.qdt_shots_per_cell,
                 "qst_shots_per_setting": p.qst_shots_per_setting, "mean": p.mean,
                 "std": p.std, "sem": p.sem} for p in self.points]

    def to_json(self) -> dict:
        def pt(p):
            return {"r": p.r, "qdt_shots_per_cell": p.qdt_shots_per_cell,
                    "qst_shots_per_setting": p.qst_shots_per_setting, "mean": p.mean,
                    "std": p.std, "sem": p.sem, "infidelities": list(p.infidelities)}
        return {"total_budget": self.total_budget, "n_qubits": self.n_qubits,
                "points": [pt(p) for p in self.points], "baseline": pt(self.baseline)}


def budget_allocation(total_budget: int, r: float, n_qubits: int) -> tuple[int, int]:
    """Shots per QDT cell and per QST setting for a calibration share ``r``.

    Each target gets its own budget; calibration uses every tetrahedron
    product state in every Pauli setting.
    """
    settings = 3 ** n_qubits
    cells = 4 ** n_qubits * settings
    qdt = int(r * total_budget) // cells
    qst = int(total_budget - int(r * total_budget)) // settings
    if (r > 0 and qdt < 1) or qst < 1:
        raise ValueError(f"budget {total_budget} at r={r} leaves a cell with zero shots")
    return qdt, qst


def _summary(r, qdt, qst, vals) -> BudgetPoint:
    v = np.asarray(vals, dtype=float)
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return BudgetPoint(float(r), qdt, qst, float(v.mean()), std, std / math.sqrt(v.size),
                       tuple(float(x) for x in v))


def budget_sweep(total_budget: int, r_grid: Sequence[float], targets: Sequence[PureState],
                 channel: NoiseChannel | None, cfg: QstConfig | None = None, seed: int = 0,
                 qdt_cfg: QdtConfig | None = None, threads: int = 1) -> BudgetSweepResult:
    """Final infidelity as a function of the calibration share ``r``.

    For each target and ``r``, ``r * budget`` shots go to detector tomography
    and the rest to state tomography with the reconstructed POVMs. At
    ``r = 0`` ideal projectors are used instead. Target ``t`` uses the
    stream ``make_rng(seed, t)`` at every ``r``.
    """
    if total_budget < 100:
        raise ValueError("budget must be >= 100")
    if not r_grid or any(not 0 <= r < 1 for r in r_grid):
        raise ValueError("r grid must be a nonempty subset of [0, 1)")
    if not targets:
        raise ValueError("need at least one target")
    cfg = cfg or QstConfig()
    n = targets[0].n_qubits
    true = setting_povms(n, channel)
    ideal = setting_povms(n)
    cal = tetrahedron_states(n)
    allocs = [budget_allocation(total_budget, r, n) for r in r_grid]
    budget_allocation(total_budget, 0.0, n)

    def one(t: int, r: float, qdt: int, qst: int) -> float:
        try:
            return _one(t, r, qdt, qst)
        except (EstimationError, ValueError) as exc:
            raise StudyError({"target": t, "r": r}, exc) from exc

    def _one(t: int, r: float, qdt: int, qst: int) -> float:
        rng = make_rng(seed, t)
        if r > 0:
            fits = qdt_per_setting(sample_counts(cal, true, qdt, rng), cal, qdt_cfg)
            povms = [f.povm for f in fits]
        else:
            povms = ideal
        counts = sample_counts([targets[t]], true, qst, rng)
        fit = estimate_state(counts, povms, cfg, make_rng(seed, t, 1))
        return pure_infidelity(fit.state, targets[t])

    def column(r: float, qdt: int, qst: int) -> BudgetPoint:
        vals = _map(lambda t: one(t, r, qdt, qst), list(range(len(targets))), threads)
        return _summary(r, qdt, qst, vals)

    points = tuple(column(r, *a) for r, a in zip(r_grid, allocs))
    baseline = next((p for p in points if p.r == 0), None)
    if baseline is None:
        baseline = column(0.0, *budget_allocation(total_budget, 0.0, n))
    return BudgetSweepResult(int(total_budget), n, points, baseline)


# -- three-qubit QREM comparison ---------------------------------------------

@dataclass(frozen=True)
class QremPoint:
    shots_per_basis: int
    infidelity_qrem: float
    infidelity_standard: float
    bootstrap_std_qrem: float | None
    bootstrap_std_standard: float | None

    @property
    def ratio(self) -> float:
        return self.infidelity_standard / self.infidelity_qrem


@dataclass(frozen=True)
class QremComparison:
    n_qubits: int
    qdt_shots_per_cell: int
    points: tuple[QremPoint, ...]
    target: tuple = ()

    def rows(self) -> list[dict]:
        return [{"shots_per_basis": p.shots_per_basis, "infidelity_qrem": p.infidelity_qrem,
                 "infidelity_standard": p.infidelity_standard, "ratio": p.ratio}
                for p in self.points]

    def bootstrap_rows(self) -> list[dict]:
        return [{"shots_per_basis": p.shots_per_basis, "std_qrem": p.bootstrap_std_qrem,
                 "std_standard": p.bootstrap_std_standard} for p in self.points]

    def to_json(self) -> dict:
        return {"n_qubits": self.n_qubits, "qdt_shots_per_cell": self.qdt_shots_per_cell,
                "target": [[z.real, z.imag] for z in self.target],
                "points": [{**r, **b} for r, b in zip(self.rows(), self.bootstrap_rows())]}


def _warm_mle(povms, cfg: QstConfig, start: np.ndarray):
    d = start.shape[0]
    init = DensityMatrix(0.9 * start + 0.1 * np.eye(d) / d)
    return lambda counts: qst_mle(counts, povms, cfg, initial_state=init)


def _qrem_cell(counts, povms, cfg, boot_cfg, bootstrap, target, rng, k):
    fit = estimate_state(counts, povms, cfg, rng)
    inf = pure_infidelity(fit.state, target)
    if bootstrap is None:
        return inf, None
    boot = BootstrapConfig(bootstrap.n_resamples,
                           int(make_rng(bootstrap.seed, k).integers(2 ** 63)))
    std = bootstrap_std(counts, _warm_mle(povms, boot_cfg, fit.state.matrix),
                        lambda f: pure_infidelity(f.state, target), boot)
    return inf, std


def qrem_comparison(target: PureState, channel: NoiseChannel | None,
                    shots_schedule: Sequence[int], qdt_shots_per_cell: int = 10_000,
                    cfg: QstConfig | None = None, bootstrap: BootstrapConfig | None = None,
                    seed: int = 0, qdt_cfg: QdtConfig | None = None) -> QremComparison:
    """Mitigated versus standard tomography of one target at growing shots.

    Detector tomography runs once; state counts are cumulative across the
    schedule. Bootstrap resamples refit the state with the POVMs held fixed
    (MLE, warm-started at the point estimate). ``bootstrap=None`` skips them.
    """
    if not shots_schedule or any(b <= a for a, b in zip(shots_schedule, shots_schedule[1:])):
        raise ValueError("shots schedule must be nonempty and strictly increasing")
    cfg = cfg or QstConfig()
    n = target.n_qubits
    true = setting_povms(n, channel)
    ideal = setting_povms(n)
    cal = tetrahedron_states(n)
    rng = make_rng(seed, 0)
    fits = qdt_per_setting(sample_counts(cal, true, qdt_shots_per_cell, rng), cal, qdt_cfg)
    est = [f.povm for f in fits]
    counts_seq = simulate_cumulative(target, true, list(shots_schedule), make_rng(seed, 1))
    boot_cfg = QstConfig(max_iterations=cfg.max_iterations, convergence_tol=cfg.convergence_tol,
                         dilution=cfg.dilution)
    points = []
    for k, counts in enumerate(counts_seq):
        row = {}
        for tag, povms in (("qrem", est), ("standard", ideal)):
            try:
                row[tag] = _qrem_cell(counts, povms, cfg, boot_cfg, bootstrap, target,
                                      make_rng(seed, 2, k), k)
            except (EstimationError, ValueError) as exc:
                raise StudyError({"shots_per_basis": shots_schedule[k], "estimate": tag},
                                 exc) from exc
        points.append(QremPoint(int(shots_schedule[k]), row["qrem"][0], row["standard"][0],
                                row["qrem"][1], row["standard"][1]))
    return QremComparison(n, int(qdt_shots_per_cell), tuple(points),
                          tuple(complex(a) for a in target.amplitudes))


# -- correlation studies -----------------------------------------------------

DEFAULT_FIDELITY_PROFILE = ((0.1, 0.55), (1.0, 0.95))


def depolarizing_for_amplitude(amplitude: float,
                               profile: Sequence[tuple[float, float]] = DEFAULT_FIDELITY_PROFILE
                               ) -> float:
    """Per-qubit depolarizing strength giving the profiled assignment fidelity.

    Depolarizing ideal Z projectors with strength ``k`` gives assignment
    fidelity ``1 - k/2``; the profile is interpolated linearly in amplitude.
    """
    xs, ys = zip(*sorted(profile))
    fid = float(np.interp(amplitude, xs, ys))
    return float(np.clip(2 * (1 - fid), 0.0, 1.0))


@dataclass(frozen=True)
class CorrelationPoint:
    shots: int
    amplitude: float | None
    depolarizing: float
    mean: dict
    std: dict
    directional: dict

    def rows(self) -> list[dict]:
        return [{"shots": self.shots, "amplitude": self.amplitude, "mode": m,
                 "c_1_to_0": self.directional[m][0], "c_0_to_1": self.directional[m][1],
                 "mean": self.mean[m], "std": self.std[m]} for m in MODES]


@dataclass(frozen=True)
class CorrelationStudy:
    points: tuple[CorrelationPoint, ...]
    band: BaselineBand
    exact: dict

    def rows(self) -> list[dict]:
        return [r for p in self.points for r in p.rows()]

    def to_json(self) -> dict:
        return {"points": self.rows(), "band": self.band.to_json(), "exact": self.exact}


def correlation_study(scenario: NoiseChannel | None, shot_grid: Sequence[int],
                      amplitude_grid: Sequence[float] | None = None, n_trials: int = 10,
                      seed: int = 0, qdt_cfg: QdtConfig | None = None,
                      fidelity_profile: Sequence[tuple[float, float]] = DEFAULT_FIDELITY_PROFILE,
                      baseline_povms: Sequence[Povm] | None = None,
                      threads: int = 1) -> CorrelationStudy:
    """Correlation coefficients of QDT reconstructions versus shots.

    The two-qubit computational-basis readout is ``scenario`` applied to ZZ
    projectors, optionally followed by per-qubit depolarizing mapped from
    each relative amplitude. Each point repeats the reconstruction
    ``n_trials`` times. The uncorrelated band uses the same shot grid and,
    unless ``baseline_povms`` is given, the single-qubit marginals of the
    scenario readout, so the band and the points share marginal quality.
    """
    if not shot_grid:
        raise ValueError("shot grid must be nonempty")
    if amplitude_grid is not None and not amplitude_grid:
        raise ValueError("amplitude grid must be nonempty when given")
    amps = list(amplitude_grid) if amplitude_grid is not None else [None]
    zz = projective_povm("ZZ")
    cells = [(a_i, g) for a_i in range(len(amps)) for g in range(len(shot_grid))]
    exact = {}
    truths = []
    for a in amps:
        k = 0.0 if a is None else depolarizing_for_amplitude(a, fidelity_profile)
        ch = scenario if a is None else Composite(
            tuple(c for c in (scenario, Depolarizing(k)) if c is not None))
        truths.append((k, apply_noise(zz, ch)))
        key = "none" if a is None else repr(float(a))
        exact[key] = {m: correlation_report(truths[-1][1], m).symmetric for m in MODES}

    def cell(c):
        try:
            return _cell(c)
        except (EstimationError, ValueError) as exc:
            raise StudyError({"amplitude": amps[c[0]], "shots": shot_grid[c[1]]}, exc) from exc

    def _cell(c):
        a_i, g = c
        k, truth = truths[a_i]
        vals = {m: [] for m in MODES}
        direc = {m: [] for m in MODES}
        for t in range(n_trials):
            est = reconstruct_z_povm(truth, int(shot_grid[g]), make_rng(seed, 1, a_i, g, t),
                                     qdt_cfg)
            for m in MODES:
                rep = correlation_report(est, m)
                vals[m].append(rep.symmetric)
                direc[m].append((rep.c_j_to_i, rep.c_i_to_j))
        std = {m: float(np.std(vals[m], ddof=1)) if n_trials > 1 else 0.0 for m in MODES}
        return CorrelationPoint(
            int(shot_grid[g]), None if amps[a_i] is None else float(amps[a_i]), k,
            {m: float(np.mean(vals[m])) for m in MODES}, std,
            {m: tuple(float(x) for x in np.mean(direc[m], axis=0)) for m in MODES})

    points = tuple(_map(cell, cells, threads))
    base = baseline_povms or marginal_povms(apply_noise(zz, scenario))
    band = uncorrelated_baseline(base, shot_grid, max(n_trials, 10), seed, qdt_cfg)
    return CorrelationStudy(points, band, exact)


__all__ = [
    "InfidelityCurve", "ThresholdCrossing", "NoCrossingError", "RatioPrediction",
    "BudgetPoint", "BudgetSweepResult", "QremPoint", "QremComparison", "CorrelationPoint",
    "CorrelationStudy", "log_schedule", "simulate_cumulative", "infidelity_curve",
    "threshold_crossing", "theoretical_ratio", "budget_allocation", "budget_sweep",
    "qrem_comparison", "depolarizing_for_amplitude", "correlation_study",
]
