import numpy as np
import pytest

from gdlkit import grid_signals as gs
from gdlkit.finite_groups import (
    cayley_table_json,
    dna_reverse_complement_permutation,
    group_convolve,
    group_from_generators,
    group_self_convolve,
    regular_representation,
    transform_convolve,
    translation_permutation,
    verify_group_axioms,
    FiniteGroup,
)

# one-hot DNA encoding in (A, C, G, T) order
_DNA = {"A": 0, "C": 1, "G": 2, "T": 3}


def dna_one_hot(sequence):
    x = np.zeros((len(sequence), 4))
    for i, letter in enumerate(sequence):
        x[i, _DNA[letter]] = 1.0
    return x


def cube_rotation_generators():
    coords = [(x, y, z) for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 0, 1)]
    index = {c: i for i, c in enumerate(coords)}
    rot_z = np.array([index[(-y, x, z)] for (x, y, z) in coords])
    rot_diag = np.array([index[(z, x, y)] for (x, y, z) in coords])
    return [rot_z, rot_diag]


class TestClosure:
    def test_d3_from_two_generators(self):
        group, action = group_from_generators(3, [np.array([1, 2, 0]), np.array([1, 0, 2])])
        assert group.order == 6
        assert verify_group_axioms(group).all_pass()
        assert action.perms.shape == (6, 3)

    def test_cyclic_group(self):
        for n in (1, 2, 5, 12):
            group, _ = group_from_generators(n, [(np.arange(n) + 1) % n])
            assert group.order == n

    def test_cube_rotations_order_24(self):
        group, _ = group_from_generators(27, cube_rotation_generators())
        assert group.order == 24

    def test_semidirect_product_of_shift_and_revcomp(self):
        n = 6
        gens = [translation_permutation(n, 4, 1), dna_reverse_complement_permutation(n)]
        group, _ = group_from_generators(n * 4, gens)
        assert group.order == 2 * n

    def test_invalid_generator_rejected(self):
        with pytest.raises(ValueError):
            group_from_generators(3, [np.array([0, 0, 1])])


class TestAxioms:
    def test_z4_passes(self):
        group, _ = group_from_generators(4, [(np.arange(4) + 1) % 4])
        assert verify_group_axioms(group).all_pass()

    def test_trivial_group_passes(self):
        group, _ = group_from_generators(1, [np.array([0])])
        assert group.order == 1
        assert verify_group_axioms(group).all_pass()

    def test_corrupted_table_caught_with_witness(self):
        group, _ = group_from_generators(4, [(np.arange(4) + 1) % 4])
        table = group.table.copy()
        table[1, 1] = 1  # 1*1 should be 2 in Z4
        bad = FiniteGroup(table=table, identity=0, inverses=group.inverses.copy())
        report = verify_group_axioms(bad)
        assert not report.all_pass()
        assert report.witness is not None


class TestRegularRepresentation:
    def test_trivial_group(self):
        group, _ = group_from_generators(1, [np.array([0])])
        rep = regular_representation(group)
        assert rep.matrices.shape == (1, 1, 1)
        assert rep.matrices[0, 0, 0] == 1.0

    def test_z2_swap(self):
        group, _ = group_from_generators(2, [np.array([1, 0])])
        rep = regular_representation(group)
        assert np.array_equal(rep.matrices[0], np.eye(2))
        assert np.array_equal(rep.matrices[1], np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_d3_products_match_table(self):
        group, _ = group_from_generators(3, [np.array([1, 2, 0]), np.array([1, 0, 2])])
        rep = regular_representation(group)
        for i in range(6):
            for j in range(6):
                prod = rep.matrices[i] @ rep.matrices[j]
                assert np.array_equal(prod, rep.matrices[group.compose(i, j)])


class TestGroupConvolve:
    def test_cyclic_reduces_to_cross_correlation(self):
        n = 8
        rng = np.random.default_rng(3)
        x = rng.standard_normal(n)
        theta = rng.standard_normal(n)
        group, action = group_from_generators(n, [(np.arange(n) + 1) % n])
        out = group_convolve(x, theta, action)
        # element g_k acts by u -> u + k; match each element to its step
        expected = gs.cross_correlate(x, theta)
        for g in range(n):
            step = int(action.perms[g][0])  # image of position 0 gives the shift
            assert abs(out[g] - expected[step]) <= 1e-12

    def test_matched_filter_at_identity(self):
        n = 5
        x = np.random.default_rng(4).standard_normal(n)
        group, action = group_from_generators(n, [(np.arange(n) + 1) % n])
        out = group_convolve(x, x, action)
        assert abs(out[group.identity] - np.dot(x, x)) <= 1e-12

    def test_d3_against_brute_force(self):
        group, action = group_from_generators(3, [np.array([1, 2, 0]), np.array([1, 0, 2])])
        rng = np.random.default_rng(5)
        x = rng.standard_normal(3)
        theta = rng.standard_normal(3)
        out = group_convolve(x, theta, action)
        for g in range(group.order):
            ginv = group.inverse(g)
            brute = sum(x[u] * theta[action.perms[ginv][u]] for u in range(3))
            assert abs(out[g] - brute) <= 1e-12

    @pytest.mark.parametrize("generators,domain", [
        ([np.array([1, 2, 0]), np.array([1, 0, 2])], 3),
        (cube_rotation_generators(), 27),
    ])
    def test_equivariance_exhaustive(self, generators, domain):
        group, action = group_from_generators(domain, generators)
        rng = np.random.default_rng(6)
        x = rng.standard_normal(domain)
        theta = rng.standard_normal(domain)
        base = group_convolve(x, theta, action)
        for h in range(group.order):
            hinv = group.inverse(h)
            translated = x[action.perms[hinv]]  # (rho(h) x)(u) = x(h^{-1} u)
            shifted = group_convolve(translated, theta, action)
            # (rho(h) x * theta)(g) = (x * theta)(h^{-1} g)
            expected = base[group.table[hinv]]
            assert np.max(np.abs(shifted - expected)) <= 1e-12


class TestGroupSelfConvolve:
    def test_identity_filter(self):
        group, _ = group_from_generators(4, [(np.arange(4) + 1) % 4])
        x = np.random.default_rng(7).standard_normal(4)
        delta = np.zeros(4)
        delta[group.identity] = 1.0
        assert np.allclose(group_self_convolve(x, delta, group), x)

    def test_trivial_group_scalar_product(self):
        group, _ = group_from_generators(1, [np.array([0])])
        out = group_self_convolve(np.array([3.0]), np.array([2.0]), group)
        assert np.array_equal(out, np.array([6.0]))

    def test_d3_brute_force(self):
        group, _ = group_from_generators(3, [np.array([1, 2, 0]), np.array([1, 0, 2])])
        rng = np.random.default_rng(8)
        x = rng.standard_normal(6)
        theta = rng.standard_normal(6)
        out = group_self_convolve(x, theta, group)
        for g in range(6):
            brute = sum(x[h] * theta[group.compose(group.inverse(g), h)] for h in range(6))
            assert abs(out[g] - brute) <= 1e-12


class TestTransformConvolve:
    def test_trivial_subgroup_is_plain_correlation(self):
        n = 8
        rng = np.random.default_rng(9)
        x = rng.standard_normal((n, 1))
        theta = rng.standard_normal((n, 1))
        out = transform_convolve(x, theta, [np.arange(n)])
        expected = gs.cross_correlate(x[:, 0], theta[:, 0])
        assert np.allclose(out[0], expected, atol=1e-12)

    def test_reverse_complement_channel_swap(self):
        # outputs for a sequence and its reverse complement agree after
        # swapping orientation channels and reversing the position index
        x1 = dna_one_hot("ACCCTGG")
        x2 = dna_one_hot("CCAGGGT")
        n = x1.shape[0]
        rng = np.random.default_rng(10)
        theta = rng.integers(-4, 5, size=(n, 4)).astype(float)
        perms = [np.arange(n * 4), dna_reverse_complement_permutation(n)]
        out1 = transform_convolve(x1, theta, perms)
        out2 = transform_convolve(x2, theta, perms)
        assert np.array_equal(out2[0], out1[1][(-np.arange(n)) % n])
        assert np.array_equal(out2[1], out1[0][(-np.arange(n)) % n])

    def test_matches_group_convolution_bitwise(self):
        n = 6
        rng = np.random.default_rng(11)
        x = rng.integers(-3, 4, size=(n, 4)).astype(float)
        theta = rng.integers(-3, 4, size=(n, 4)).astype(float)
        h_perms = [np.arange(n * 4), dna_reverse_complement_permutation(n)]
        stack = transform_convolve(x, theta, h_perms)
        gens = [translation_permutation(n, 4, 1), dna_reverse_complement_permutation(n)]
        group, action = group_from_generators(n * 4, gens)
        direct = group_convolve(x.reshape(-1), theta.reshape(-1), action)
        # match each group element to (translation step k, subgroup row h)
        matched = 0
        for g in range(group.order):
            for row, h_perm in enumerate(h_perms):
                for k in range(n):
                    t = translation_permutation(n, 4, k)
                    if np.array_equal(action.perms[g], t[h_perm]):
                        assert direct[g] == stack[row, k]
                        matched += 1
        assert matched == group.order

    def test_non_normalising_permutation_rejected(self):
        n = 6
        bad = np.arange(n * 4)
        bad[[0, 5]] = bad[[5, 0]]  # arbitrary transposition: not in the normaliser
        with pytest.raises(ValueError, match="normalise"):
            transform_convolve(np.ones((n, 4)), np.ones((n, 4)), [bad])


def test_cayley_table_json_round_trip():
    group, _ = group_from_generators(3, [np.array([1, 2, 0]), np.array([1, 0, 2])])
    table = cayley_table_json(group)
    assert len(table) == 6 and all(len(row) == 6 for row in table)
    assert table == np.array(group.table).tolist()
