import numpy as np
import pytest
from hypothesis import given, strategies as st

from readoutbench.core import (
    DimensionError, InvalidPovmError, Povm, PureState, kron_all, make_rng, random_povm,
    tensor_product,
)
from readoutbench.noise import (
    CoherentRotation, Composite, ConfusionMatrix, Depolarizing, ProbabilisticIswap, ShotCounts,
    apply_noise, iswap_unitary, pauli_settings, projective_povm, sample_counts, setting_povms,
    symmetric_confusion, tetrahedron_states,
)

seeds = st.integers(0, 2**32 - 1)
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def assert_valid(m: Povm):
    e = m.effects
    assert np.abs(e - e.conj().transpose(0, 2, 1)).max() <= 1e-8
    assert min(np.linalg.eigvalsh(x).min() for x in e) >= -1e-8
    assert np.abs(e.sum(axis=0) - np.eye(m.dim)).max() <= 1e-8
    assert len(m.outcome_labels) == len(e)


def test_tetrahedron_first_is_zero():
    assert np.allclose(tetrahedron_states(1)[0].amplitudes, [1, 0])


def test_tetrahedron_overlaps():
    s = tetrahedron_states(1)
    for i in range(4):
        for j in range(4):
            if i != j:
                assert abs(abs(np.vdot(s[i].amplitudes, s[j].amplitudes)) ** 2 - 1 / 3) < 1e-12


def test_tetrahedron_two_qubits():
    s = tetrahedron_states(2)
    assert len(s) == 16
    assert all(abs(np.linalg.norm(x.amplitudes) - 1) < 1e-12 for x in s)


def test_projective_z():
    m = projective_povm("Z")
    assert np.allclose(m.effects, [P0, P1])


def test_projective_x():
    m = projective_povm("X")
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    assert np.allclose(m.effects, [np.outer(plus, plus), np.outer(minus, minus)])
    assert np.allclose([np.trace(e) for e in m.effects], 1)
    assert np.allclose(m.effects.sum(axis=0), np.eye(2))


def test_projective_zz_tensor_oracle():
    m = projective_povm("ZZ")
    oracle = [tensor_product(a, b) for a in (P0, P1) for b in (P0, P1)]
    assert np.allclose(m.effects, oracle)
    assert m.outcome_labels == ("00", "01", "10", "11")


def test_projective_y_eigenvectors():
    y = np.array([[0, -1j], [1j, 0]])
    m = projective_povm("Y")
    assert np.allclose(y @ m.effects[0], m.effects[0])
    assert np.allclose(y @ m.effects[1], -m.effects[1])


def test_invalid_setting():
    with pytest.raises(ValueError):
        projective_povm("ZQ")


class TestApplyNoise:
    def test_depolarizing_zero(self, rng):
        m = random_povm(2, 3, rng)
        assert np.abs(apply_noise(m, Depolarizing(0.0)).effects - m.effects).max() < 1e-12

    def test_depolarizing_full(self, rng):
        m = random_povm(2, 3, rng)
        out = apply_noise(m, Depolarizing(1.0)).effects
        for e, o in zip(m.effects, out):
            assert np.allclose(o, np.trace(e) * np.eye(2) / 2, atol=1e-12)

    def test_confusion_example(self):
        out = apply_noise(projective_povm("Z"), ConfusionMatrix(symmetric_confusion(0.05))).effects
        assert np.allclose(out, [np.diag([0.95, 0.05]), np.diag([0.05, 0.95])], atol=1e-12)

    def test_confusion_rejects_non_stochastic(self):
        with pytest.raises(ValueError):
            ConfusionMatrix([[0.9, 0.2], [0.2, 0.8]])

    def test_strength_range(self):
        with pytest.raises(ValueError):
            Depolarizing(1.3)
        with pytest.raises(ValueError):
            ProbabilisticIswap(-0.1)

    def test_rotation_requires_unitary(self):
        with pytest.raises(ValueError):
            CoherentRotation(np.array([[1, 1], [0, 1]]))

    def test_rotation_dimension(self):
        with pytest.raises(DimensionError):
            apply_noise(projective_povm("ZZ"), CoherentRotation.about_axis(0.1))

    @given(seeds, st.floats(0, 1))
    def test_depolarizing_separable(self, seed, k):
        r = np.random.default_rng(seed)
        a, b = random_povm(2, 2, r), random_povm(2, 2, r)
        joint = Povm(np.array([np.kron(x, y) for x in a for y in b]))
        da, db = Depolarizing(k).apply(a), Depolarizing(k).apply(b)
        sep = np.array([np.kron(x, y) for x in da for y in db])
        assert np.abs(Depolarizing(k).apply(joint).effects - sep).max() < 1e-10

    @given(seeds, st.floats(0, 1), st.floats(0, 1))
    def test_iswap_composition(self, seed, k1, k2):
        m = random_povm(4, 4, np.random.default_rng(seed))
        twice = ProbabilisticIswap(k2).apply(ProbabilisticIswap(k1).apply(m)).effects
        # single-conjugation weight is k1 + k2 - 2 k1 k2, the rest splits between 1 and U^2
        u = iswap_unitary()
        ud = u.conj().T
        e = m.effects
        oracle = ((1 - k1) * (1 - k2) * e + (k1 + k2 - 2 * k1 * k2) * (u @ e @ ud)
                  + k1 * k2 * (u @ u @ e @ ud @ ud))
        assert np.abs(twice - oracle).max() < 1e-12

    @given(seeds, st.sampled_from(["confusion", "depolarizing", "iswap", "rotation", "mix"]),
           st.floats(0, 1))
    def test_output_valid(self, seed, kind, k):
        r = np.random.default_rng(seed)
        m = random_povm(4, 4, r)
        if kind == "confusion":
            c = r.random((4, 4))
            ch = ConfusionMatrix(c / c.sum(axis=0))
        elif kind == "depolarizing":
            ch = Depolarizing(k, qubits=(int(r.integers(2)),))
        elif kind == "iswap":
            ch = ProbabilisticIswap(k)
        elif kind == "rotation":
            ch = CoherentRotation.about_axis(3 * k, "XYZ"[seed % 3], 2)
        else:
            ch = Composite((Depolarizing(k), ProbabilisticIswap(k / 2),
                            CoherentRotation.about_axis(k, "Y", 2)))
        assert_valid(apply_noise(m, ch))

    def test_confusion_preserves_diagonal(self, rng):
        c = rng.random((4, 4))
        out = ConfusionMatrix(c / c.sum(axis=0)).apply(projective_povm("ZZ")).effects
        assert all(np.count_nonzero(e - np.diag(np.diag(e))) == 0 for e in out)


class TestSettingPovms:
    def test_noiseless_matches_projective(self):
        for s, m in zip(pauli_settings(2), setting_povms(2)):
            assert np.allclose(m.effects, projective_povm(s).effects)

    def test_noise_on_z_readout(self):
        # confusion before a basis change: X setting gets the flipped X projectors mixed
        ch = ConfusionMatrix(symmetric_confusion(0.1))
        x = setting_povms(1, ch, ["X"])[0]
        px = projective_povm("X").effects
        assert np.allclose(x.effects[0], 0.9 * px[0] + 0.1 * px[1])

    def test_count(self):
        assert len(setting_povms(3)) == 27


class TestSampleCounts:
    def test_deterministic_outcome(self):
        c = sample_counts([PureState([1, 0])], [projective_povm("Z")], 777, make_rng(0))
        assert c.counts[0, 0].tolist() == [777, 0]

    def test_binomial_concentration(self):
        n = 100_000
        plus = PureState(np.array([1, 1]) / np.sqrt(2))
        c = sample_counts([plus], [projective_povm("Z")], n, make_rng(4))
        assert abs(c.counts[0, 0, 0] / n - 0.5) <= 5 * 0.5 / np.sqrt(n)

    def test_reproducible(self):
        states = tetrahedron_states(2)
        a = sample_counts(states, setting_povms(2), 50, make_rng(9))
        b = sample_counts(states, setting_povms(2), 50, make_rng(9))
        assert np.array_equal(a.counts, b.counts)

    @given(seeds, st.integers(1, 500))
    def test_totals(self, seed, shots):
        r = np.random.default_rng(seed)
        c = sample_counts(tetrahedron_states(1), setting_povms(1), shots, r)
        assert np.all(c.counts.sum(axis=-1) == shots)
        assert c.settings == ("X", "Y", "Z")

    def test_zero_shots_rejected(self):
        with pytest.raises(ValueError):
            sample_counts(tetrahedron_states(1), setting_povms(1), 0, make_rng(0))

    def test_json_round_trip(self):
        c = sample_counts(tetrahedron_states(1), setting_povms(1), 10, make_rng(1))
        back = ShotCounts.from_json(c.to_json())
        assert np.array_equal(back.counts, c.counts) and back.settings == c.settings

    def test_add(self):
        c = sample_counts(tetrahedron_states(1), setting_povms(1), 10, make_rng(1))
        assert (c + c).total_shots == 2 * c.total_shots


def test_rotation_convention():
    # exp(-i theta X) on |0>: P(1) = sin^2 theta
    m = setting_povms(1, CoherentRotation.about_axis(0.3))[2]
    p1 = np.trace(m.effects[1] @ P0).real
    assert p1 == pytest.approx(np.sin(0.3) ** 2)


def test_kron_all_matches_tensor():
    a, b, c = np.eye(2), P0, P1
    assert np.array_equal(kron_all([a, b, c]), tensor_product(tensor_product(a, b), c))


def test_invalid_povm_from_bad_channel():
    with pytest.raises(InvalidPovmError):
        Povm(np.array([P0, P0]))
