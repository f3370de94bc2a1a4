"""Permutation-symmetric layers on sets and graphs: Deep Sets, the two
linear set generators, the three spatial GNN flavours (convolutional,
attentional, message-passing), self-attention on the complete graph with
optional positional encodings, and Weisfeiler-Lehman colour refinement.

Aggregation is a fixed balanced reduction tree over contributions sorted
by node index, so permuting the input reorders floating-point sums only
at the tree level and outputs agree to near machine precision.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rng import substream

_ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class MlpParams:
    """Dense layers ``x -> act(W x + b)``; an empty layer list is the identity."""

    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases):
            raise ValueError("one bias per weight matrix required")
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != b.shape[0]:
                raise ValueError("weight/bias shapes incompatible")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    @property
    def in_width(self):
        return self.weights[0].shape[1] if self.weights else None

    @property
    def out_width(self):
        return self.weights[-1].shape[0] if self.weights else None

    def apply(self, x):
        """Apply to a vector or row-wise to a matrix."""
        act = _ACTIVATIONS[self.activation]
        out = np.asarray(x, dtype=float)
        single = out.ndim == 1
        if single:
            out = out[None, :]
        for w, b in zip(self.weights, self.biases):
            out = act(out @ w.T + b)
        return out[0] if single else out


def mlp_init(widths, rng, activation="tanh"):
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights=weights, biases=biases, activation=activation)


@dataclass(frozen=True)
class Graph:
    """Node features plus sparse binary adjacency, kept synchronised."""

    adjacency: sp.csr_matrix
    features: np.ndarray
    undirected: bool = True
    allow_self_loops: bool = False

    def __post_init__(self):
        n = self.features.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be square and match the feature rows")
        if self.undirected:
            if (self.adjacency != self.adjacency.T).nnz != 0:
                raise ValueError("undirected graph requires symmetric adjacency")
        if not self.allow_self_loops and self.adjacency.diagonal().any():
            raise ValueError("self-loops present but not flagged")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite node features")

    @property
    def n(self):
        return self.features.shape[0]

    def neighbours(self, u):
        row = self.adjacency.getrow(u)
        return row.indices[row.data != 0]


def graph_from_edges(n, edges, features, undirected=True, allow_self_loops=False):
    rows, cols = [], []
    for u, v in edges:
        rows.append(u)
        cols.append(v)
        if undirected and u != v:
            rows.append(v)
            cols.append(u)
    data = np.ones(len(rows))
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adj.data[:] = 1.0  # collapse duplicate edges
    return Graph(adjacency=adj, features=np.asarray(features, dtype=float),
                 undirected=undirected, allow_self_loops=allow_self_loops)


def check_permutation(p, n):
    p = np.asarray(p, dtype=int)
    if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
        raise ValueError("not a permutation of the node set")
    return p


def permute_graph(g, p):
    """Relabel nodes: features ``P X``, adjacency ``P A P^T``; pure index moves.

    ``p[u]`` is the new label of old node ``u``.
    """
    p = check_permutation(p, g.n)
    pm = sp.csr_matrix((np.ones(g.n), (p, np.arange(g.n))), shape=(g.n, g.n))
    adj = (pm @ g.adjacency @ pm.T).tocsr()
    feats = np.empty_like(g.features)
    feats[p] = g.features
    return Graph(adjacency=adj, features=feats, undirected=g.undirected,
                 allow_self_loops=g.allow_self_loops)


def tree_sum(rows):
    """Balanced pairwise reduction of an (m, d) stack along axis 0.

    Used for every neighbourhood aggregation so results are reproducible
    to ~1e-12 under permutations of the inputs.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] == 0:
        raise ValueError("tree_sum of an empty stack; caller handles empties")
    while rows.shape[0] > 1:
        m = rows.shape[0]
        half = m // 2
        paired = rows[:2 * half:2] + rows[1:2 * half:2]
        rows = np.concatenate([paired, rows[2 * half:]], axis=0) if m % 2 else paired
    return rows[0]


def deepsets_forward(x, psi, phi):
    """Permutation-invariant set readout ``phi(sum_u psi(x_u))``.

    The empty set contributes the zero vector of psi's output width.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected an (n, d) feature matrix")
    if x.shape[0] == 0:
        width = psi.out_width
        if width is None:
            width = x.shape[1]
        aggregate = np.zeros(width)
    else:
        aggregate = tree_sum(psi.apply(x))
    return phi.apply(aggregate)


def set_linear_equivariant(x, alpha, beta):
    """The two linear permutation-equivariant generators on sets:
    ``alpha * X + beta * mean-over-rows`` (identity and average)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("expected a non-empty (n, d) feature matrix")
    return alpha * x + beta * np.mean(x, axis=0, keepdims=True)


@dataclass(frozen=True)
class GnnParams:
    """Parameters for one spatial GNN layer.

    ``psi`` transforms sender features (input width 2d for the
    message-passing flavour, which sees the concatenated pair).  The update
    is ``phi([x_u || aggregate])``.  ``att_*`` parameterise the attention
    score ``q^T tanh(W x_u + U x_v)``, softmax-normalised over the
    neighbourhood.
    """

    psi: MlpParams
    phi: MlpParams
    att_w: np.ndarray = None
    att_u: np.ndarray = None
    att_q: np.ndarray = None


def gnn_params(d, hidden, out, flavour, seed):
    rng = substream(seed, f"gnn-params-{flavour}")
    psi_in = 2 * d if flavour == "mpnn" else d
    psi = mlp_init([psi_in, hidden], rng)
    phi = mlp_init([d + hidden, out], rng)
    att_w = att_u = att_q = None
    if flavour == "attn":
        bound = 1.0 / np.sqrt(d)
        att_w = rng.uniform(-bound, bound, size=(hidden, d))
        att_u = rng.uniform(-bound, bound, size=(hidden, d))
        att_q = rng.uniform(-1.0 / np.sqrt(hidden), 1.0 / np.sqrt(hidden), size=hidden)
    return GnnParams(psi=psi, phi=phi, att_w=att_w, att_u=att_u, att_q=att_q)


def conv_coefficient(g, u, v):
    # degrees counted with the self-loop option: d_u = deg_u + 1
    du = g.neighbours(u).shape[0] + 1.0
    dv = g.neighbours(v).shape[0] + 1.0
    return 1.0 / np.sqrt(du * dv)


def gnn_forward(g, flavour, params, attention_fn=None, message_fn=None):
    """One GNN layer ``h_u = phi(x_u, aggregate of messages from N_u)``.

    flavour 'conv': messages ``c_uv psi(x_v)`` with the symmetric degree
    normalisation; 'attn': ``a(x_u, x_v) psi(x_v)`` with softmax-normalised
    scores; 'mpnn': ``psi(x_u || x_v)``.  ``attention_fn(g, u, v)`` and
    ``message_fn(x_u, x_v)`` override the respective mechanisms (used by
    the flavour-containment checks).  Empty neighbourhoods aggregate to
    the zero vector.
    """
    if flavour not in ("conv", "attn", "mpnn"):
        raise ValueError(f"unknown flavour {flavour!r}")
    x = g.features
    width = params.psi.out_width
    if width is None:
        width = 2 * x.shape[1] if flavour == "mpnn" else x.shape[1]
    out = []
    for u in range(g.n):
        nbrs = np.sort(g.neighbours(u))
        if nbrs.shape[0] == 0:
            aggregate = np.zeros(width)
        elif flavour == "conv":
            msgs = params.psi.apply(x[nbrs])
            coeff = np.array([conv_coefficient(g, u, v) for v in nbrs])
            aggregate = tree_sum(coeff[:, None] * msgs)
        elif flavour == "attn":
            msgs = params.psi.apply(x[nbrs])
            if attention_fn is not None:
                scores = np.array([attention_fn(g, u, v) for v in nbrs])
            else:
                logits = params.att_q @ np.tanh(
                    (params.att_w @ x[u])[:, None] + params.att_u @ x[nbrs].T
                )
                logits = logits - np.max(logits)
                weights = np.exp(logits)
                scores = weights / np.sum(weights)
            if np.any(~np.isfinite(scores)):
                raise ValueError(f"degenerate attention at node {u}")
            aggregate = tree_sum(scores[:, None] * msgs)
        else:  # mpnn
            if message_fn is not None:
                msgs = np.stack([message_fn(x[u], x[v]) for v in nbrs])
            else:
                pairs = np.concatenate(
                    [np.repeat(x[u][None, :], nbrs.shape[0], axis=0), x[nbrs]], axis=1
                )
                msgs = params.psi.apply(pairs)
            aggregate = tree_sum(msgs)
        out.append(params.phi.apply(np.concatenate([x[u], aggregate])))
    return np.stack(out)


def positional_encoding(n, d):
    """Sinusoidal position features: ``(sin(u w_i), cos(u w_i))`` pairs with
    ``w_i = 10000^{-2i/d}``."""
    if d % 2 != 0:
        raise ValueError("encoding width must be even")
    u = np.arange(n)[:, None]
    i = np.arange(d // 2)[None, :]
    rate = u / np.power(10000.0, 2.0 * i / d)
    enc = np.empty((n, d))
    enc[:, 0::2] = np.sin(rate)
    enc[:, 1::2] = np.cos(rate)
    return enc


def transformer_forward(x, params, use_positional=False):
    """Self-attention over the complete graph (self-edges included).

    With positional encodings concatenated the permutation symmetry is
    deliberately broken; without them the layer is a permutation-
    equivariant attentional GNN.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if use_positional:
        x = np.concatenate([x, positional_encoding(n, 2 * ((x.shape[1] + 1) // 2))], axis=1)
    adj = sp.csr_matrix(np.ones((n, n)))
    g = Graph(adjacency=adj, features=x, undirected=True, allow_self_loops=True)
    return gnn_forward(g, "attn", params)


# ---------------------------------------------------------------------------
# Weisfeiler-Lehman colour refinement


def _refine_once(graphs_colours, graphs, table):
    """One shared-interning refinement round across a list of graphs."""
    signatures = []
    for colours, g in zip(graphs_colours, graphs):
        sigs = []
        for u in range(g.n):
            nbr = tuple(sorted(colours[v] for v in g.neighbours(u)))
            sigs.append((colours[u], nbr))
        signatures.append(sigs)
    # lexicographic interning keeps colour ids canonical, never hash-based
    fresh = sorted({s for sigs in signatures for s in sigs if s not in table})
    for s in fresh:
        table[s] = len(table)
    return [np.array([table[s] for s in sigs], dtype=int) for sigs in signatures]


def _initial_colours(g, colours):
    if colours is None:
        return np.zeros(g.n, dtype=int)
    colours = np.asarray(colours, dtype=int)
    if colours.shape != (g.n,):
        raise ValueError("one initial colour per node required")
    return colours


def _histogram(colours):
    _, counts = np.unique(colours, return_counts=True)
    return tuple(sorted(int(c) for c in counts))


def wl_refine(g, rounds, colours=None):
    """Colour histograms (sorted counts) for rounds ``0..rounds``.

    Round t+1 colours encode (own colour, sorted multiset of neighbour
    colours) via lexicographic string interning; refinement is monotone and
    stabilises after at most ``n`` rounds.
    """
    colours = _initial_colours(g, colours)
    table = {}
    histograms = [_histogram(colours)]
    state = [colours]
    for _ in range(rounds):
        state = _refine_once(state, [g], table)
        histograms.append(_histogram(state[0]))
    return histograms


def wl_distinguish(g1, g2, rounds):
    """True iff refinement separates the two graphs within ``rounds`` rounds.

    Colours are interned jointly so histograms are comparable across the
    graphs; a False answer means WL-indistinguishable (necessary but not
    sufficient for isomorphism).
    """
    c1, c2 = _initial_colours(g1, None), _initial_colours(g2, None)
    if g1.n != g2.n:
        return True
    table = {}
    state = [c1, c2]
    for _ in range(rounds):
        state = _refine_once(state, [g1, g2], table)
        u1, n1 = np.unique(state[0], return_counts=True)
        u2, n2 = np.unique(state[1], return_counts=True)
        if not (np.array_equal(u1, u2) and np.array_equal(n1, n2)):
            return True
    return False


def load_graph_edgelist(path):
    """Text format: first line ``n d``, then ``u v`` edge lines, then ``n``
    whitespace-separated feature rows."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.split() for line in fh if line.strip()]
    if not tokens:
        raise ValueError(f"empty graph file {path}")
    n, d = int(tokens[0][0]), int(tokens[0][1])
    edge_lines = tokens[1:len(tokens) - n]
    feature_lines = tokens[len(tokens) - n:]
    if len(feature_lines) != n:
        raise ValueError("feature row count does not match node count")
    edges = [(int(a), int(b)) for a, b in edge_lines]
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range")
    features = np.array([[float(t) for t in row] for row in feature_lines])
    if features.shape != (n, d):
        raise ValueError("feature width does not match header")
    return graph_from_edges(n, edges, features)
