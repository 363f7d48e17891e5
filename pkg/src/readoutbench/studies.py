"""Run a configured study and persist its archive, CSV tables and manifest."""
from __future__ import annotations

import datetime as _dt
from pathlib import Path
from typing import Callable

from . import __version__, harness
from .config import ExperimentConfig
from .core import haar_random_product_state, make_rng, povm_to_json, pure_infidelity
from .io import RunManifest, append_line, emit_csv, emit_json
from .metrics import (
    MODES,
    average_case_distance,
    coherent_error,
    correlation_report,
    marginal_povms,
    uncorrelated_baseline,
)
from .noise import (
    apply_noise,
    pauli_settings,
    projective_povm,
    sample_counts,
    setting_povms,
    tetrahedron_states,
)
from .tomography import (
    BootstrapConfig,
    QdtConfig,
    QstConfig,
    estimate_state,
    qdt_per_setting,
)

# stream tags keep each kind of draw independent of the others
_TARGETS, _CALIBRATION, _STATE = 100, 101, 102

CURVE_COLUMNS = ("shots", "mean", "q25", "q75", "estimator")
CROSSING_COLUMNS = ("estimator", "threshold", "shots_at_crossing", "bootstrap_std")
BAND_COLUMNS = ("shots", "mode", "mean", "std")
SWEEP_COLUMNS = ("r", "qdt_shots_per_cell", "qst_shots_per_setting", "mean", "std", "sem")
RATIO_COLUMNS = ("assumption", "n_qubits", "n_states", "r")
QREM_COLUMNS = ("shots_per_basis", "infidelity_qrem", "infidelity_standard", "ratio")
BOOT_COLUMNS = ("shots_per_basis", "std_qrem", "std_standard")
COEFF_COLUMNS = ("shots", "amplitude", "mode", "c_1_to_0", "c_0_to_1", "mean", "std")
QDT_COLUMNS = ("setting", "d_av", "iterations", "converged")
QST_COLUMNS = ("target", "estimator", "infidelity")


def _qdt_cfg(cfg: ExperimentConfig) -> QdtConfig:
    return QdtConfig(cfg.qdt.max_iterations, cfg.qdt.convergence_tol)


def _qst_cfg(cfg: ExperimentConfig) -> QstConfig:
    q = cfg.qst
    return QstConfig(q.estimator, q.max_iterations, q.convergence_tol, q.dilution,
                     q.bme_chain_length, q.bme_burn_in, q.bme_proposal_scale)


def _targets(cfg: ExperimentConfig, count: int):
    rng = make_rng(cfg.seed, _TARGETS)
    return [haar_random_product_state(cfg.n_qubits, rng) for _ in range(count)]


def _sub_seed(cfg: ExperimentConfig, tag: int) -> int:
    # harness streams are keyed (seed, target, ...); a derived seed keeps them
    # clear of this module's own (seed, tag) streams
    return int(make_rng(cfg.seed, tag).integers(2 ** 63))


def _state_json(s) -> list:
    return [[complex(a).real, complex(a).imag] for a in s.amplitudes]


def _calibrate(cfg: ExperimentConfig):
    n = cfg.n_qubits
    true = setting_povms(n, cfg.channel())
    cal = tetrahedron_states(n)
    counts = sample_counts(cal, true, cfg.shots.qdt_per_cell, make_rng(cfg.seed, _CALIBRATION))
    return true, qdt_per_setting(counts, cal, _qdt_cfg(cfg))


def _study_qdt(cfg):
    true, fits = _calibrate(cfg)
    settings = pauli_settings(cfg.n_qubits)
    rows = [{"setting": s, "d_av": average_case_distance(f.povm, t), "iterations": f.iterations,
             "converged": f.converged} for s, f, t in zip(settings, fits, true)]
    z = settings.index("Z" * cfg.n_qubits)
    result = {"distances": rows, "max_d_av": max(r["d_av"] for r in rows),
              "coherent_error": coherent_error(fits[z].povm).epsilon_coh,
              "povms": {s: povm_to_json(f.povm) for s, f in zip(settings, fits)}}
    if cfg.n_qubits == 2:
        result["correlations"] = {m: correlation_report(fits[z].povm, m).to_json() for m in MODES}
    return result, [("qdt_distances.csv", rows, QDT_COLUMNS, "table")]


def _study_qst(cfg):
    true, fits = _calibrate(cfg)
    est = [f.povm for f in fits]
    ideal = setting_povms(cfg.n_qubits)
    rows, states = [], []
    qst = _qst_cfg(cfg)
    for t, psi in enumerate(_targets(cfg, cfg.shots.n_targets)):
        counts = sample_counts([psi], true, cfg.shots.qst_per_setting,
                               make_rng(cfg.seed, _STATE, t))
        for tag, povms in (("qrem", est), ("standard", ideal)):
            fit = estimate_state(counts, povms, qst, make_rng(cfg.seed, _STATE, t, 1))
            rows.append({"target": t, "estimator": tag,
                         "infidelity": pure_infidelity(fit.state, psi)})
        states.append(_state_json(psi))
    return {"infidelities": rows, "targets": states}, [
        ("qst_infidelities.csv", rows, QST_COLUMNS, "table")]


def _study_threshold(cfg):
    true, fits = _calibrate(cfg)
    sched = harness.log_schedule(cfg.shots.schedule_start, cfg.shots.schedule_stop,
                                 cfg.shots.schedule_points)
    targets = _targets(cfg, cfg.shots.n_targets)
    curves = [harness.infidelity_curve(targets, true, povms, sched, _qst_cfg(cfg),
                                       _sub_seed(cfg, _STATE), label, cfg.threads)
              for label, povms in (("qrem", [f.povm for f in fits]),
                                   ("standard", setting_povms(cfg.n_qubits)))]
    crossings = []
    boot = BootstrapConfig(cfg.analysis.bootstrap_resamples, cfg.seed)
    for c in curves:
        for th in cfg.analysis.thresholds:
            try:
                x = harness.threshold_crossing(c, th, boot)
                crossings.append({"estimator": c.estimator, "threshold": th,
                                  "shots_at_crossing": x.shots_at_crossing,
                                  "bootstrap_std": x.bootstrap_std})
            except harness.NoCrossingError:
                crossings.append({"estimator": c.estimator, "threshold": th,
                                  "shots_at_crossing": None, "bootstrap_std": None})
    rows = [r for c in curves for r in c.rows()]
    result = {"curves": [c.to_json() for c in curves], "crossings": crossings,
              "targets": [_state_json(t) for t in targets]}
    return result, [("curves.csv", rows, CURVE_COLUMNS, "table"),
                    ("crossings.csv", crossings, CROSSING_COLUMNS, "table")]


def _study_budget(cfg):
    targets = _targets(cfg, cfg.shots.n_targets)
    res = harness.budget_sweep(cfg.shots.budget, list(cfg.shots.r_grid), targets, cfg.channel(),
                               _qst_cfg(cfg), _sub_seed(cfg, _STATE), _qdt_cfg(cfg),
                               cfg.threads)
    ratios = [vars(harness.theoretical_ratio(cfg.n_qubits, 1, a)) for a in ("IC", "mixed", "pure")]
    ratios = [{"assumption": r["assumption"], "n_qubits": r["n_qubits"],
               "n_states": r["n_states"], "r": r["r"]} for r in ratios]
    return {"sweep": res.to_json(), "predictions": ratios}, [
        ("budget_sweep.csv", res.rows(), SWEEP_COLUMNS, "table"),
        ("ratio_predictions.csv", ratios, RATIO_COLUMNS, "table")]


def _study_qrem3(cfg):
    target = _targets(cfg, 1)[0]
    boot = BootstrapConfig(cfg.analysis.bootstrap_resamples, cfg.seed)
    res = harness.qrem_comparison(target, cfg.channel(), list(cfg.shots.per_basis),
                                  cfg.shots.qdt_per_cell, _qst_cfg(cfg), boot, cfg.seed,
                                  _qdt_cfg(cfg))
    return res.to_json(), [("qrem_points.csv", res.rows(), QREM_COLUMNS, "table"),
                           ("qrem_bootstrap.csv", res.bootstrap_rows(), BOOT_COLUMNS, "table")]


def _study_correlation(cfg):
    amps = list(cfg.analysis.amplitude_grid) or None
    res = harness.correlation_study(cfg.channel(), list(cfg.shots.grid), amps,
                                    cfg.analysis.n_trials, cfg.seed, _qdt_cfg(cfg),
                                    cfg.analysis.fidelity_profile, threads=cfg.threads)
    return res.to_json(), [
        ("correlation_coefficients.csv", res.rows(), COEFF_COLUMNS, "table"),
        ("baseline_band.csv", res.band.rows(), BAND_COLUMNS, "table")]


def _study_baseline(cfg):
    # uncorrelated readout with the configured scenario's single-qubit marginals
    base = marginal_povms(apply_noise(projective_povm("ZZ"), cfg.channel()))
    band = uncorrelated_baseline(base, list(cfg.shots.grid), cfg.analysis.n_trials,
                                 cfg.seed, _qdt_cfg(cfg))
    return band.to_json(), [("baseline_band.csv", band.rows(), BAND_COLUMNS, "table")]


RUNNERS: dict[str, Callable] = {
    "qdt": _study_qdt, "qst": _study_qst, "threshold": _study_threshold,
    "budget": _study_budget, "qrem3": _study_qrem3, "correlation": _study_correlation,
    "baseline": _study_baseline,
}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_study(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunManifest:
    """Execute ``cfg.study`` and write ``archive.json``, its CSV tables and
    ``manifest.json`` into the output directory.

    The archive holds only the config, seed, version and results, so equal
    inputs give byte-identical archives; timestamps live in the manifest.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    manifest = RunManifest(cfg.to_dict(), __version__, cfg.seed, _now())
    result, tables = RUNNERS[cfg.study](cfg)
    inputs = cfg.to_dict()
    inputs.pop("output_dir")  # where a run is written does not change its results
    archive = {"study": cfg.study, "version": __version__, "seed": cfg.seed,
               "config": inputs, "results": result}
    manifest.add(emit_json(out / "archive.json", archive), out, "archive")
    for name, rows, cols, role in tables:
        manifest.add(emit_csv(out / name, rows, cols), out, role)
    manifest.finished = _now()
    emit_json(out / "manifest.json", manifest.to_json())
    append_line(out / "runs.jsonl", manifest.to_json())
    return manifest


__all__ = ["run_study", "RUNNERS"]
