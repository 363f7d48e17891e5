import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from readoutbench.core import (
    I2, X, Y, Z,
    DensityMatrix, DimensionError, InvalidPovmError, InvalidStateError, Povm, PureState,
    born_probabilities, conditional_marginal, ginibre_density, haar_random_product_state,
    haar_random_unitary, make_rng, matrix_from_json, matrix_to_json, povm_from_json,
    povm_to_json, psd_projection, pure_infidelity, random_povm, spectral_norm,
    tensor_product, trace_distance,
)
from readoutbench.noise import ProbabilisticIswap, projective_povm, tetrahedron_states

P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)
seeds = st.integers(0, 2**32 - 1)


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


class TestTensorProduct:
    def test_identities(self):
        assert np.array_equal(tensor_product(I2, I2), np.eye(4))

    def test_zz(self):
        assert np.array_equal(tensor_product(Z, Z), np.diag([1, -1, -1, 1]))

    def test_projector_placement(self):
        assert np.array_equal(tensor_product(P0, P1), np.diag([0, 1, 0, 0]))

    @given(seeds)
    def test_associative(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = (random_hermitian(r, 2) for _ in range(3))
        left = tensor_product(tensor_product(a, b), c)
        right = tensor_product(a, tensor_product(b, c))
        assert np.allclose(left, right, rtol=0, atol=1e-15)


def brute_conditional(m: Povm, keep: int, sigma: np.ndarray) -> np.ndarray:
    """Explicit sum over indices of Tr_j(M (1 ⊗ sigma))."""
    out = np.zeros((2, 2, 2), dtype=complex)
    for k, lab in enumerate(m.outcome_labels):
        e = m.effects[k]
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


class TestConditionalMarginal:
    def test_product_povm_any_sigma(self, rng):
        a = random_povm(2, 2, rng)
        b = random_povm(2, 2, rng)
        m = Povm(np.array([np.kron(x, y) for x in a for y in b]), ("00", "01", "10", "11"))
        sigma = ginibre_density(2, 2, rng).matrix
        out = conditional_marginal(m, 0, sigma)
        assert np.allclose(out, a.effects, atol=1e-12)

    def test_ideal_projectors(self):
        out = conditional_marginal(projective_povm("ZZ"), 0, P0)
        assert np.allclose(out, [P0, P1])

    @pytest.mark.parametrize("keep", [0, 1])
    def test_iswap_against_brute_force(self, keep):
        m = ProbabilisticIswap(0.2).apply(projective_povm("ZZ"))
        assert np.allclose(conditional_marginal(m, keep, P1), brute_conditional(m, keep, P1),
                           atol=1e-14)

    @given(seeds, st.integers(0, 1))
    def test_result_is_valid_povm(self, seed, keep):
        r = np.random.default_rng(seed)
        m = random_povm(4, 4, r)
        m = Povm(m.effects, ("00", "01", "10", "11"))
        sigma = ginibre_density(2, 1 + seed % 2, r).matrix
        out = conditional_marginal(m, keep, sigma)
        Povm(out)
        assert np.allclose(out, brute_conditional(m, keep, sigma), atol=1e-12)

    def test_dimension_errors(self):
        with pytest.raises(DimensionError):
            conditional_marginal(projective_povm("Z"), 0, P0)
        with pytest.raises((DimensionError, InvalidStateError)):
            conditional_marginal(projective_povm("ZZ"), 0, np.eye(4) / 4)


class TestSpectralNorm:
    def test_pauli(self):
        assert spectral_norm(Z) == pytest.approx(1.0)

    def test_diagonal(self):
        assert spectral_norm(np.diag([0.3, -0.5])) == pytest.approx(0.5)

    @given(seeds, st.sampled_from([2, 4, 8]))
    def test_eigen_oracle(self, seed, d):
        h = random_hermitian(np.random.default_rng(seed), d)
        assert abs(spectral_norm(h) - np.max(np.abs(np.linalg.eigvalsh(h)))) < 1e-10


class TestPsdProjection:
    def test_fixed_point(self, rng):
        rho = ginibre_density(4, 4, rng).matrix
        assert np.allclose(psd_projection(rho), rho, atol=1e-12)

    def test_clip(self):
        assert np.allclose(psd_projection(np.diag([1.0, -0.2])), np.diag([1.0, 0.0]))

    @given(seeds)
    def test_eigen_clip_oracle(self, seed):
        h = random_hermitian(np.random.default_rng(seed), 4)
        w, v = np.linalg.eigh(h)
        oracle = (v * np.maximum(w, 0)) @ v.conj().T
        out = psd_projection(h)
        assert np.allclose(out, oracle, atol=1e-12)
        assert np.linalg.eigvalsh(out).min() > -1e-12

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            psd_projection(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestSampling:
    def test_haar_state_normalized_and_pure(self, rng):
        for n in (1, 2, 3):
            s = haar_random_product_state(n, rng)
            assert abs(np.vdot(s.amplitudes, s.amplitudes).real - 1) < 1e-12
            assert abs(s.density().purity() - 1) < 1e-12

    def test_haar_bloch_mean(self):
        r = make_rng(11)
        n = 100_000
        bloch = np.empty((n, 3))
        for i in range(n):
            rho = haar_random_product_state(1, r).projector()
            bloch[i] = [np.trace(rho @ p).real for p in (X, Y, Z)]
        assert np.all(np.abs(bloch.mean(axis=0)) < 3 / np.sqrt(3 * n))

    def test_haar_unitary_is_unitary(self, rng):
        u = haar_random_unitary(4, rng)
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)

    def test_haar_seeded_bit_identical(self):
        a = haar_random_product_state(3, make_rng(5)).amplitudes
        b = haar_random_product_state(3, make_rng(5)).amplitudes
        assert np.array_equal(a, b)

    def test_split_streams_distinct(self):
        draws = {make_rng(1, *idx).random() for idx in [(), (0,), (0, 0), (1,), (1, 0)]}
        assert len(draws) == 5

    def test_ginibre_rank_one_pure(self, rng):
        assert abs(ginibre_density(4, 1, rng).purity() - 1) < 1e-12

    def test_ginibre_valid(self, rng):
        rho = ginibre_density(8, 3, rng).matrix
        assert np.linalg.eigvalsh(rho).min() > -1e-12
        assert abs(np.trace(rho).real - 1) < 1e-12

    def test_ginibre_mean(self):
        r = make_rng(3)
        samples = np.array([ginibre_density(2, 2, r).matrix for _ in range(20_000)])
        mean = samples.mean(axis=0)
        sem = samples.std(axis=0) / np.sqrt(len(samples))
        assert np.all(np.abs(mean - np.eye(2) / 2) <= 3 * sem + 1e-12)

    @pytest.mark.parametrize("rank", [0, 5])
    def test_ginibre_rank_range(self, rng, rank):
        with pytest.raises(ValueError):
            ginibre_density(4, rank, rng)


class TestBorn:
    def test_eigencase(self):
        assert np.allclose(born_probabilities(P0, projective_povm("Z")), [1, 0])

    def test_tetrahedron_second_state(self):
        psi2 = tetrahedron_states(1)[1]
        assert np.allclose(born_probabilities(psi2.density(), projective_povm("Z")),
                           [1 / 3, 2 / 3], atol=1e-12)

    @given(seeds)
    def test_maximally_mixed_trace_oracle(self, seed):
        m = random_povm(4, 3, np.random.default_rng(seed))
        p = born_probabilities(np.eye(4) / 4, m)
        assert np.allclose(p, [np.trace(e).real / 4 for e in m.effects], atol=1e-12)

    @given(seeds)
    def test_valid_pairs(self, seed):
        r = np.random.default_rng(seed)
        p = born_probabilities(ginibre_density(4, 2, r), random_povm(4, 5, r))
        assert abs(p.sum() - 1) < 1e-8 and p.min() >= 0 and p.max() <= 1

    def test_negative_probability_rejected(self):
        bad = Povm.__new__(Povm)
        object.__setattr__(bad, "effects", np.array([np.diag([1.2, 1.0]), np.diag([-0.2, 0.0])]))
        object.__setattr__(bad, "outcome_labels", ("0", "1"))
        with pytest.raises(ValueError):
            born_probabilities(P0, bad)


class TestInfidelity:
    def test_self(self, rng):
        s = haar_random_product_state(2, rng)
        assert abs(pure_infidelity(s.density(), s)) < 1e-12

    def test_mixed(self, rng):
        assert pure_infidelity(np.eye(2) / 2, haar_random_product_state(1, rng)) == \
            pytest.approx(0.5)

    def test_orthogonal(self):
        assert pure_infidelity(P1, PureState([1, 0])) == pytest.approx(1.0)


class TestValidation:
    def test_state_norm(self):
        with pytest.raises(InvalidStateError):
            PureState([1, 1])

    def test_density_trace(self):
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.eye(2))

    def test_density_negative(self):
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.diag([1.1, -0.1]))

    def test_povm_completeness(self):
        with pytest.raises(InvalidPovmError):
            Povm([P0, P0])

    def test_povm_positivity(self):
        with pytest.raises(InvalidPovmError):
            Povm([np.diag([1.1, 0.0]), np.diag([-0.1, 1.0])])

    def test_povm_hermitian(self):
        with pytest.raises(InvalidPovmError):
            Povm([P0 + np.array([[0, 0.1], [0, 0]]), P1 - np.array([[0, 0.1], [0, 0]])])

    def test_non_power_of_two(self):
        with pytest.raises(DimensionError):
            DensityMatrix(np.eye(3) / 3)


class TestSerialization:
    def test_matrix_round_trip(self, rng):
        a = ginibre_density(4, 2, rng).matrix
        obj = json.loads(json.dumps(matrix_to_json(a)))
        assert obj["dim"] == 4 and len(obj["re"]) == 16
        assert np.array_equal(matrix_from_json(obj), a)

    def test_row_major_layout(self):
        obj = matrix_to_json(np.array([[1, 2j], [3, 4]]))
        assert obj["re"] == [1, 0, 3, 4] and obj["im"] == [0, 2, 0, 0]

    def test_povm_round_trip(self, rng):
        m = random_povm(4, 4, rng)
        back = povm_from_json(json.loads(json.dumps(povm_to_json(m))))
        assert np.array_equal(back.effects, m.effects)
        assert back.outcome_labels == m.outcome_labels


def test_trace_distance_basic():
    assert trace_distance(P0, P1) == pytest.approx(1.0)
    assert trace_distance(P0, P0) == 0.0
