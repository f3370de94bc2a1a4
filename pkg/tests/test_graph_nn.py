import numpy as np
import pytest

from gdlkit.graph_nn import (
    Graph,
    MlpParams,
    conv_coefficient,
    deepsets_forward,
    gnn_forward,
    gnn_params,
    graph_from_edges,
    load_graph_edgelist,
    mlp_init,
    permute_graph,
    positional_encoding,
    set_linear_equivariant,
    transformer_forward,
    tree_sum,
    wl_distinguish,
    wl_refine,
)
from gdlkit.rng import substream

IDENTITY = MlpParams(weights=[], biases=[], activation="identity")


def random_graph(n, d, rng, p=0.35):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.uniform() < p]
    return graph_from_edges(n, edges, rng.standard_normal((n, d)))


def permuted_rows(x, p):
    out = np.empty_like(x)
    out[p] = x
    return out


class TestPermuteGraph:
    def test_identity(self):
        g = random_graph(5, 3, np.random.default_rng(0))
        h = permute_graph(g, np.arange(5))
        assert np.array_equal(h.features, g.features)
        assert (h.adjacency != g.adjacency).nnz == 0

    def test_involution_restores(self):
        g = random_graph(6, 2, np.random.default_rng(1))
        p = np.array([1, 0, 3, 2, 5, 4])
        h = permute_graph(permute_graph(g, p), p)
        assert np.array_equal(h.features, g.features)
        assert (h.adjacency != g.adjacency).nnz == 0

    def test_path_relabelling_edge_set(self):
        g = graph_from_edges(3, [(0, 1), (1, 2)], np.eye(3))
        h = permute_graph(g, np.array([2, 0, 1]))
        # node u is relabelled p[u]: edges {0,1},{1,2} -> {2,0},{0,1}
        rows, cols = h.adjacency.nonzero()
        edges = {(min(a, b), max(a, b)) for a, b in zip(rows, cols)}
        assert edges == {(0, 2), (0, 1)}

    def test_self_loop_flag_enforced(self):
        with pytest.raises(ValueError, match="self-loop"):
            graph_from_edges(2, [(0, 0)], np.zeros((2, 1)))


class TestDeepSets:
    def test_identity_maps_sum(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(deepsets_forward(x, IDENTITY, IDENTITY), [4.0, 6.0])

    def test_empty_set_gives_phi_of_zero(self):
        rng = substream(0, "ds")
        psi = mlp_init([3, 4], rng)
        phi = mlp_init([4, 2], rng)
        out = deepsets_forward(np.zeros((0, 3)), psi, phi)
        assert np.array_equal(out, phi.apply(np.zeros(4)))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        prng = substream(1, "ds")
        psi = mlp_init([3, 5], prng)
        phi = mlp_init([5, 2], prng)
        x = rng.standard_normal((9, 3))
        base = deepsets_forward(x, psi, phi)
        for _ in range(10):
            p = rng.permutation(9)
            assert np.max(np.abs(deepsets_forward(x[p], psi, phi) - base)) <= 1e-12


class TestSetLinear:
    def test_generators(self):
        x = np.random.default_rng(3).standard_normal((4, 2))
        assert np.array_equal(set_linear_equivariant(x, 1.0, 0.0), x)
        avg = set_linear_equivariant(x, 0.0, 1.0)
        assert np.allclose(avg, np.tile(x.mean(axis=0), (4, 1)))

    def test_equivariance(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((7, 3))
        p = rng.permutation(7)
        lhs = set_linear_equivariant(x[p], 0.7, -0.3)
        rhs = set_linear_equivariant(x, 0.7, -0.3)[p]
        assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            set_linear_equivariant(np.zeros((0, 2)), 1.0, 1.0)


class TestGnnForward:
    @pytest.mark.parametrize("flavour", ["conv", "attn", "mpnn"])
    def test_zero_features_zero_biases_give_zero(self, flavour):
        g = random_graph(6, 3, np.random.default_rng(5))
        g = Graph(adjacency=g.adjacency, features=np.zeros((6, 3)))
        params = gnn_params(3, 4, 2, flavour, seed=0)
        zeroed = type(params)(
            psi=MlpParams([np.zeros_like(w) for w in params.psi.weights],
                          [np.zeros_like(b) for b in params.psi.biases],
                          params.psi.activation),
            phi=MlpParams([np.zeros_like(w) for w in params.phi.weights],
                          [np.zeros_like(b) for b in params.phi.biases],
                          params.phi.activation),
            att_w=params.att_w, att_u=params.att_u, att_q=params.att_q)
        out = gnn_forward(g, flavour, zeroed)
        assert np.array_equal(out, np.zeros_like(out))

    @pytest.mark.parametrize("flavour", ["conv", "attn", "mpnn"])
    def test_isolated_node_sees_zero_aggregate(self, flavour):
        g = graph_from_edges(1, [], np.array([[0.3, -1.2]]))
        params = gnn_params(2, 3, 2, flavour, seed=1)
        out = gnn_forward(g, flavour, params)
        expected = params.phi.apply(np.concatenate([g.features[0], np.zeros(3)]))
        assert np.array_equal(out[0], expected)

    @pytest.mark.parametrize("flavour", ["conv", "attn", "mpnn"])
    def test_permutation_equivariance(self, flavour):
        rng = np.random.default_rng(6)
        worst = 0.0
        for trial in range(20):
            g = random_graph(12, 5, rng)
            params = gnn_params(5, 7, 6, flavour, seed=trial)
            p = rng.permutation(12)
            base = gnn_forward(g, flavour, params)
            out = gnn_forward(permute_graph(g, p), flavour, params)
            worst = max(worst, float(np.max(np.abs(out - permuted_rows(base, p)))))
        assert worst <= 1e-11

    def test_attention_reduces_to_conv_with_lookup(self):
        rng = np.random.default_rng(7)
        g = random_graph(10, 4, rng)
        params = gnn_params(4, 6, 3, "conv", seed=9)
        conv = gnn_forward(g, "conv", params)
        attn = gnn_forward(g, "attn", params, attention_fn=conv_coefficient)
        assert np.max(np.abs(attn - conv)) <= 1e-12

    def test_mpnn_reduces_to_attention_with_fixed_message(self):
        rng = np.random.default_rng(8)
        g = random_graph(10, 4, rng)
        params = gnn_params(4, 6, 3, "attn", seed=10)
        attn = gnn_forward(g, "attn", params)
        x = g.features

        def attention_weight(u, v):
            nbrs = np.sort(g.neighbours(u))
            logits = params.att_q @ np.tanh(
                (params.att_w @ x[u])[:, None] + params.att_u @ x[nbrs].T)
            logits = logits - np.max(logits)
            weights = np.exp(logits)
            return weights[list(nbrs).index(v)] / np.sum(weights)

        def message(xu, xv):
            u = int(np.where((x == xu).all(axis=1))[0][0])
            v = int(np.where((x == xv).all(axis=1))[0][0])
            return attention_weight(u, v) * params.psi.apply(xv)

        mpnn = gnn_forward(g, "mpnn", params, message_fn=message)
        assert np.max(np.abs(mpnn - attn)) <= 1e-12


class TestTransformer:
    def test_single_node_attends_to_itself(self):
        x = np.array([[0.4, -0.2]])
        params = gnn_params(2, 3, 2, "attn", seed=11)
        out = transformer_forward(x, params)
        expected = params.phi.apply(np.concatenate([x[0], params.psi.apply(x[0])]))
        assert np.max(np.abs(out[0] - expected)) <= 1e-12

    def test_equivariant_without_positions(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((8, 3))
        params = gnn_params(3, 5, 4, "attn", seed=12)
        base = transformer_forward(x, params)
        for _ in range(5):
            p = rng.permutation(8)
            out = transformer_forward(permuted_rows(x, p), params)
            assert np.max(np.abs(out - permuted_rows(base, p))) <= 1e-11

    def test_positional_encoding_breaks_equivariance(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((8, 3))
        params = gnn_params(3 + 4, 5, 4, "attn", seed=13)
        base = transformer_forward(x, params, use_positional=True)
        p = rng.permutation(8)
        out = transformer_forward(permuted_rows(x, p), params, use_positional=True)
        assert np.max(np.abs(out - permuted_rows(base, p))) > 1e-3


class TestPositionalEncoding:
    def test_first_row_alternates(self):
        enc = positional_encoding(3, 6)
        assert np.array_equal(enc[0], np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0]))

    def test_pairs_have_unit_norm(self):
        enc = positional_encoding(10, 8)
        sums = enc[:, 0::2] ** 2 + enc[:, 1::2] ** 2
        assert np.max(np.abs(sums - 1.0)) <= 1e-12

    def test_first_column_is_plain_sine(self):
        enc = positional_encoding(4, 2)
        assert np.allclose(enc[:, 0], np.sin(np.arange(4)))

    def test_odd_width_rejected(self):
        with pytest.raises(ValueError):
            positional_encoding(4, 3)


def cycle_graph(n):
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)], np.zeros((n, 1)))


def path_graph(n):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)], np.zeros((n, 1)))


class TestWeisfeilerLehman:
    def test_edgeless_graph_one_colour_forever(self):
        g = graph_from_edges(5, [], np.zeros((5, 1)))
        hists = wl_refine(g, 4)
        assert all(h == (5,) for h in hists)

    def test_path_vs_triangle_split_at_round_one(self):
        assert wl_distinguish(path_graph(3), cycle_graph(3), 1)

    def test_refinement_stabilises(self):
        g = path_graph(6)
        hists = wl_refine(g, 8)
        assert hists[6] == hists[7] == hists[8]

    def test_six_cycle_vs_two_triangles_indistinguishable(self):
        two_triangles = graph_from_edges(
            6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], np.zeros((6, 1)))
        assert not wl_distinguish(cycle_graph(6), two_triangles, 10)

    def test_isomorphic_relabellings_indistinguishable(self):
        rng = np.random.default_rng(14)
        for trial in range(50):
            n = int(rng.integers(2, 9))
            g = random_graph(n, 1, rng, p=0.4)
            p = rng.permutation(n)
            assert not wl_distinguish(g, permute_graph(g, p), n + 2)

    def test_histograms_permutation_invariant(self):
        rng = np.random.default_rng(15)
        g = random_graph(7, 1, rng)
        p = rng.permutation(7)
        assert wl_refine(g, 5) == wl_refine(permute_graph(g, p), 5)


def test_tree_sum_matches_plain_sum():
    rng = np.random.default_rng(16)
    rows = rng.standard_normal((13, 4))
    assert np.allclose(tree_sum(rows), rows.sum(axis=0), atol=1e-12)


def test_edgelist_round_trip(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("3 2\n0 1\n1 2\n1.0 2.0\n3.0 4.0\n5.0 6.0\n")
    g = load_graph_edgelist(path)
    assert g.n == 3
    assert np.array_equal(g.features, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    rows, cols = g.adjacency.nonzero()
    assert {(min(a, b), max(a, b)) for a, b in zip(rows, cols)} == {(0, 1), (1, 2)}


def test_edgelist_rejects_bad_edge(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("2 1\n0 5\n1.0\n2.0\n")
    with pytest.raises(ValueError, match="out of range"):
        load_graph_edgelist(path)
