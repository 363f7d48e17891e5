import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import classical_coefficient, d_av, lattice_states, pair_grid_coefficient
from readoutbench.core import DimensionError, Povm, make_rng, product_povm, random_povm
from readoutbench.metrics import (
    BaselineBand, assignment_fidelity, average_case_distance, coherent_error,
    correlation_coefficient, correlation_report, dephased, fibonacci_sphere, marginal_povms,
    symmetric_correlation, uncorrelated_baseline,
)
from readoutbench.noise import (
    CoherentRotation, ConfusionMatrix, Depolarizing, ProbabilisticIswap, projective_povm,
    sample_counts, setting_povms, symmetric_confusion,
)
from readoutbench.tomography import QdtConfig

seeds = st.integers(0, 2**32 - 1)
SMALL_LATTICE = lattice_states(40, 40)


def conditional_confusion(e_if_0: float, e_if_1: float) -> Povm:
    """Qubit 0 flips with a probability that depends on qubit 1's state."""
    c = np.zeros((4, 4))
    for j in range(4):
        e = e_if_0 if j & 1 == 0 else e_if_1
        c[j, j] += 1 - e
        c[j ^ 2, j] += e
    return ConfusionMatrix(c).apply(projective_povm("ZZ"))


class TestAssignmentFidelity:
    def test_perfect(self):
        counts = {"0": [100, 0], "1": [0, 100]}
        assert assignment_fidelity(counts).per_qubit == (1.0,)

    def test_symmetric_confusion_exact(self):
        m = ConfusionMatrix(symmetric_confusion(0.05, 2)).apply(projective_povm("ZZ"))
        probs = {format(i, "02b"): np.real(m.effects[:, i, i]) for i in range(4)}
        f = assignment_fidelity(probs)
        assert np.allclose(f.per_qubit, 0.95, atol=1e-12)
        assert f.product == pytest.approx(0.95 ** 2)

    def test_from_shot_counts(self):
        states = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
        counts = sample_counts(states, setting_povms(1), 50, make_rng(0), state_tags=["0", "1"])
        assert assignment_fidelity(counts).mean == 1.0

    def test_missing_preparation(self):
        with pytest.raises(ValueError):
            assignment_fidelity({"0": [10, 0]})


class TestCorrelation:
    @pytest.mark.parametrize("mode", ["classical", "quantum"])
    def test_product_zero(self, rng, mode):
        m = product_povm([random_povm(2, 2, rng), random_povm(2, 2, rng)])
        r = correlation_report(m, mode)
        assert r.c_j_to_i <= 1e-10 and r.c_i_to_j <= 1e-10 and r.symmetric <= 1e-10

    def test_iswap_symmetric(self):
        m = ProbabilisticIswap(0.2).apply(projective_povm("ZZ"))
        r = correlation_report(m)
        assert abs(r.c_j_to_i - r.c_i_to_j) <= 1e-6
        assert abs(r.symmetric - r.c_j_to_i) <= 1e-6

    def test_iswap_against_grid(self):
        m = ProbabilisticIswap(0.2).apply(projective_povm("ZZ"))
        oracle = pair_grid_coefficient(m.effects, m.outcome_labels, 1, 0, SMALL_LATTICE)
        value = correlation_coefficient(m, 1, 0)
        # a coarse lattice can only undershoot the supremum
        assert oracle - 1e-3 <= value <= oracle + 5e-3

    def test_asymmetric_confusion(self):
        m = conditional_confusion(0.02, 0.12)
        rep = correlation_report(m)
        to0 = pair_grid_coefficient(m.effects, m.outcome_labels, 1, 0, SMALL_LATTICE)
        to1 = pair_grid_coefficient(m.effects, m.outcome_labels, 0, 1, SMALL_LATTICE)
        assert rep.c_j_to_i == pytest.approx(to0, abs=1e-3)
        assert rep.c_i_to_j == pytest.approx(to1, abs=1e-3)
        assert rep.symmetric == pytest.approx((to0 + to1) / 2, abs=1e-3)
        assert rep.c_j_to_i == pytest.approx(0.1, abs=1e-9)

    def test_classical_against_oracle(self, rng):
        m = random_povm(4, 4, rng)
        for s, t in ((0, 1), (1, 0)):
            assert correlation_coefficient(m, s, t, "classical") == pytest.approx(
                classical_coefficient(m.effects, m.outcome_labels, s, t), abs=1e-12)

    @settings(max_examples=25)
    @given(seeds)
    def test_quantum_dominates_classical(self, seed):
        m = random_povm(4, 4, np.random.default_rng(seed))
        for s, t in ((0, 1), (1, 0)):
            q = correlation_coefficient(m, s, t, "quantum")
            c = correlation_coefficient(m, s, t, "classical")
            assert q >= c - 1e-4

    @settings(max_examples=15)
    @given(seeds, st.integers(0, 1), st.sampled_from(["classical", "quantum"]))
    def test_relabel_invariant(self, seed, qubit, mode):
        m = random_povm(4, 4, np.random.default_rng(seed))
        flip = tuple(lab[:qubit] + str(1 - int(lab[qubit])) + lab[qubit + 1:]
                     for lab in m.outcome_labels)
        relabelled = Povm(m.effects, flip)
        a, b = correlation_report(m, mode), correlation_report(relabelled, mode)
        assert abs(a.c_j_to_i - b.c_j_to_i) <= 1e-6 and abs(a.c_i_to_j - b.c_i_to_j) <= 1e-6

    @settings(max_examples=20)
    @given(seeds, st.floats(0, 1), st.sampled_from(["classical", "quantum"]))
    def test_depolarizing_nonincreasing(self, seed, k, mode):
        m = random_povm(4, 4, np.random.default_rng(seed))
        before = correlation_report(m, mode)
        after = correlation_report(Depolarizing(k).apply(m), mode)
        assert after.c_j_to_i <= before.c_j_to_i + 1e-4
        assert after.c_i_to_j <= before.c_i_to_j + 1e-4

    def test_symmetric_is_exact_average(self, rng):
        r = correlation_report(random_povm(4, 4, rng))
        assert r.symmetric == (r.c_j_to_i + r.c_i_to_j) / 2
        assert symmetric_correlation(ProbabilisticIswap(0.0).apply(projective_povm("ZZ"))) == 0

    def test_report_json(self, rng):
        obj = correlation_report(random_povm(4, 4, rng), "classical").to_json()
        assert set(obj) >= {"c_1_to_0", "c_0_to_1", "symmetric", "mode"}

    def test_errors(self, rng):
        with pytest.raises(DimensionError):
            correlation_coefficient(projective_povm("Z"), 0, 1)
        with pytest.raises(ValueError):
            correlation_coefficient(projective_povm("ZZ"), 0, 0)
        with pytest.raises(ValueError):
            correlation_report(projective_povm("ZZ"), "both")

    def test_fibonacci_sphere_unit(self):
        pts = fibonacci_sphere(400)
        assert pts.shape == (400, 3)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1)


class TestCoherentError:
    def test_self_distance(self, rng):
        m = random_povm(4, 3, rng)
        assert average_case_distance(m, m) == 0.0

    def test_diagonal_exact_zero(self, rng):
        p = rng.random((3, 4))
        p /= p.sum(axis=0)
        m = Povm(np.array([np.diag(r) for r in p]).astype(complex))
        assert coherent_error(m).epsilon_coh == 0.0

    def test_confusion_exact_zero(self, rng):
        c = rng.random((4, 4))
        m = ConfusionMatrix(c / c.sum(axis=0)).apply(projective_povm("ZZ"))
        assert coherent_error(m).epsilon_coh == 0.0

    def test_rotation_independent_formula(self):
        m = CoherentRotation.about_axis(0.3).apply(projective_povm("Z"))
        diag = [np.diag(np.diag(e)) for e in m.effects]
        assert coherent_error(m).epsilon_coh == pytest.approx(d_av(m.effects, diag), abs=1e-12)

    def test_rotation_closed_form(self):
        # off-diagonal magnitude sin(theta)cos(theta) in both effects, zero trace difference
        theta = 0.3
        m = CoherentRotation.about_axis(theta).apply(projective_povm("Z"))
        expected = 2 * np.sqrt(2) * np.sin(theta) * np.cos(theta) / 4
        assert coherent_error(m).epsilon_coh == pytest.approx(expected, abs=1e-12)

    @given(st.floats(0.05, 1.5))
    def test_rotation_positive(self, theta):
        m = CoherentRotation.about_axis(theta, "Y", 2).apply(projective_povm("ZZ"))
        assert coherent_error(m).epsilon_coh > 0

    def test_dephased_valid(self, rng):
        m = dephased(random_povm(4, 4, rng))
        assert np.allclose(m.effects.sum(axis=0), np.eye(4))

    def test_report_kind(self):
        assert coherent_error(projective_povm("Z")).distance_kind == "average-case"


class TestBaseline:
    z = projective_povm("Z")

    def test_exact_limit(self):
        m = product_povm([self.z, self.z])
        for mode in ("classical", "quantum"):
            assert symmetric_correlation(m, mode) <= 1e-4

    def test_band_shape_and_scaling(self):
        band = uncorrelated_baseline([self.z, self.z], [2000, 8000], 30, seed=4)
        assert band.shot_grid == (2000, 8000) and band.n_trials == 30
        for mode in ("classical", "quantum"):
            assert all(s >= 0 for s in band.std[mode])
            ratio = band.std[mode][1] / band.std[mode][0]
            assert 0.5 * 0.6 <= ratio <= 0.5 * 1.4
        rows = band.rows()
        assert len(rows) == 4 and set(rows[0]) == {"shots", "mode", "mean", "std"}

    def test_marginals_of_product(self, rng):
        a, b = random_povm(2, 2, rng), random_povm(2, 2, rng)
        ma, mb = marginal_povms(product_povm([a, b]))
        assert np.allclose(ma.effects, a.effects) and np.allclose(mb.effects, b.effects)

    def test_independent_product_inside_band(self):
        noisy = ConfusionMatrix(symmetric_confusion(0.03)).apply(self.z)
        band = uncorrelated_baseline([noisy, noisy], [16000], 10, seed=1)
        other = uncorrelated_baseline([noisy, noisy], [16000], 10, seed=2)
        for mode in ("classical", "quantum"):
            gap = abs(other.mean[mode][0] - band.mean[mode][0])
            assert gap <= 3 * (band.std[mode][0] + other.std[mode][0])

    def test_preconditions(self):
        with pytest.raises(ValueError):
            uncorrelated_baseline([self.z, self.z], [], 10)
        with pytest.raises(ValueError):
            uncorrelated_baseline([self.z, self.z], [1000], 9)
        with pytest.raises(ValueError):
            BaselineBand((10, 10), {}, {}, 10)

    def test_reproducible(self):
        a = uncorrelated_baseline([self.z, self.z], [1600], 10, seed=3, qdt_cfg=QdtConfig())
        b = uncorrelated_baseline([self.z, self.z], [1600], 10, seed=3, qdt_cfg=QdtConfig())
        assert a.to_json() == b.to_json()
