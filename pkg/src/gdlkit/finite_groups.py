"""Finite symmetry groups stored extensionally: composition tables built by
breadth-first closure from generators, permutation actions on index
domains, matrix representations, and group convolution (including the
transform+convolve factorisation over a translation-normalising subgroup).
"""

from dataclasses import dataclass, field

import numpy as np

CLOSURE_CAP = 10_000


@dataclass(frozen=True)
class FiniteGroup:
    """Composition table ``table[i, j] = index of g_i g_j``, identity first."""

    table: np.ndarray
    identity: int = 0
    inverses: np.ndarray = field(default=None)

    @property
    def order(self):
        return self.table.shape[0]

    def compose(self, i, j):
        return int(self.table[i, j])

    def inverse(self, i):
        return int(self.inverses[i])


@dataclass(frozen=True)
class GroupAction:
    """Permutation of a fixed index domain per group element.

    ``perms[g][u]`` is the image ``g.u``.
    """

    group: FiniteGroup
    perms: np.ndarray

    @property
    def domain_size(self):
        return self.perms.shape[1]

    def __post_init__(self):
        g = self.group
        if self.perms.shape[0] != g.order:
            raise ValueError("one permutation per group element required")
        if not np.array_equal(self.perms[g.identity], np.arange(self.domain_size)):
            raise ValueError("identity must act as the identity permutation")
        for i in range(g.order):
            for j in range(g.order):
                composed = self.perms[i][self.perms[j]]
                if not np.array_equal(composed, self.perms[g.compose(i, j)]):
                    raise ValueError(f"action not compatible with composition at ({i}, {j})")


@dataclass(frozen=True)
class Representation:
    """Invertible matrix per group element with ``rho(gh) = rho(g) rho(h)``."""

    group: FiniteGroup
    matrices: np.ndarray

    @property
    def dimension(self):
        return self.matrices.shape[1]

    def __post_init__(self):
        g = self.group
        if self.matrices.shape[0] != g.order:
            raise ValueError("one matrix per group element required")
        if not np.allclose(self.matrices[g.identity], np.eye(self.dimension), atol=1e-10):
            raise ValueError("rho(identity) must be the identity matrix")
        for i in range(g.order):
            if abs(np.linalg.det(self.matrices[i])) < 1e-12:
                raise ValueError(f"rho(g_{i}) is singular")
            for j in range(g.order):
                prod = self.matrices[i] @ self.matrices[j]
                if not np.allclose(prod, self.matrices[g.compose(i, j)], atol=1e-10):
                    raise ValueError(f"homomorphism fails at ({i}, {j})")


def _as_permutation(p, domain_size):
    p = np.asarray(p, dtype=int)
    if p.shape != (domain_size,) or not np.array_equal(np.sort(p), np.arange(domain_size)):
        raise ValueError("generator is not a permutation of the domain")
    return p


def group_from_generators(domain_size, generators):
    """Close a generating set of permutations under composition.

    Elements are indexed in breadth-first discovery order with the identity
    first, which keeps indices deterministic for golden tests.  Raises if
    the closure exceeds ``CLOSURE_CAP`` elements.
    """
    gens = [_as_permutation(p, domain_size) for p in generators]
    identity = np.arange(domain_size)
    elements = [identity]
    index = {identity.tobytes(): 0}
    frontier = [0]
    while frontier:
        next_frontier = []
        for i in frontier:
            for gen in gens:
                candidate = elements[i][gen]  # right multiplication: g . s
                key = candidate.tobytes()
                if key not in index:
                    if len(elements) >= CLOSURE_CAP:
                        raise ValueError(f"closure exceeds cap of {CLOSURE_CAP} elements")
                    index[key] = len(elements)
                    elements.append(candidate)
                    next_frontier.append(index[key])
        frontier = next_frontier
    order = len(elements)
    table = np.empty((order, order), dtype=int)
    for i in range(order):
        for j in range(order):
            composed = elements[i][elements[j]]  # (g_i g_j).u = g_i.(g_j.u)
            table[i, j] = index[composed.tobytes()]
    inverses = np.empty(order, dtype=int)
    for i in range(order):
        hits = np.where(table[i] == 0)[0]
        if hits.shape[0] != 1:
            raise ValueError(f"element {i} lacks a unique inverse")
        inverses[i] = hits[0]
    group = FiniteGroup(table=table, identity=0, inverses=inverses)
    report = verify_group_axioms(group)
    if not report.all_pass():
        raise ValueError(f"generated table violates group axioms: {report}")
    return group, GroupAction(group=group, perms=np.stack(elements))


@dataclass
class AxiomReport:
    """Pass/fail per group axiom; failures carry a witness tuple."""

    closure: bool = True
    associativity: bool = True
    identity: bool = True
    inverse: bool = True
    witness: tuple = None

    def all_pass(self):
        return self.closure and self.associativity and self.identity and self.inverse

    def __str__(self):
        parts = [
            f"closure={'pass' if self.closure else 'FAIL'}",
            f"associativity={'pass' if self.associativity else 'FAIL'}",
            f"identity={'pass' if self.identity else 'FAIL'}",
            f"inverse={'pass' if self.inverse else 'FAIL'}",
        ]
        if self.witness is not None:
            parts.append(f"witness={self.witness}")
        return ", ".join(parts)


def verify_group_axioms(group):
    """Exhaustive check of closure, associativity, identity and inverses."""
    table = group.table
    n = table.shape[0]
    report = AxiomReport()
    if np.any(table < 0) or np.any(table >= n):
        bad = np.argwhere((table < 0) | (table >= n))[0]
        report.closure = False
        report.witness = (int(bad[0]), int(bad[1]))
        return report
    e = group.identity
    if not (np.array_equal(table[e], np.arange(n)) and np.array_equal(table[:, e], np.arange(n))):
        report.identity = False
        report.witness = (e,)
        return report
    for g in range(n):
        for h in range(n):
            gh = table[g, h]
            # (g h) k == g (h k) for every k, vectorised over k
            if not np.array_equal(table[gh], table[g][table[h]]):
                k = int(np.where(table[gh] != table[g][table[h]])[0][0])
                report.associativity = False
                report.witness = (g, h, k)
                return report
    for g in range(n):
        hits = np.where(table[g] == e)[0]
        if hits.shape[0] != 1 or table[hits[0], g] != e:
            report.inverse = False
            report.witness = (g,)
            return report
    return report


def regular_representation(group):
    """Permutation matrices of the group acting on itself by left translation."""
    n = group.order
    matrices = np.zeros((n, n, n))
    for g in range(n):
        for h in range(n):
            matrices[g, group.compose(g, h), h] = 1.0
    return Representation(group=group, matrices=matrices)


def group_convolve(x, theta, action):
    """Group convolution ``(x * theta)(g) = sum_u x_u theta_{g^{-1}.u}``.

    ``x`` and ``theta`` are signals on the action's domain; the output is a
    signal on the group elements.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = action.domain_size
    if x.shape != (n,) or theta.shape != (n,):
        raise ValueError("signal and filter must live on the action domain")
    group = action.group
    out = np.empty(group.order)
    for g in range(group.order):
        ginv = group.inverse(g)
        out[g] = float(x @ theta[action.perms[ginv]])
    return out


def group_self_convolve(x, theta, group):
    """Convolution of signals on the group itself:
    ``(x * theta)(g) = sum_h x(h) theta(g^{-1} h)``."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = group.order
    if x.shape != (n,) or theta.shape != (n,):
        raise ValueError("signals must be indexed by group elements")
    out = np.empty(n)
    for g in range(n):
        ginv = group.inverse(g)
        out[g] = float(x @ theta[group.table[ginv]])
    return out


# ---------------------------------------------------------------------------
# grid actions used by transform+convolve


def translation_permutation(n, channels=1, step=1):
    """Shift-by-``step`` permutation of the flattened (position, channel)
    grid: position ``p`` maps to ``p + step``."""
    idx = np.arange(n * channels).reshape(n, channels)
    return idx[(np.arange(n) + step) % n].reshape(-1)


def dna_reverse_complement_permutation(n):
    """Reverse positions and swap complementary channels (A,C,G,T order)."""
    complement = np.array([3, 2, 1, 0])  # A<->T, C<->G
    idx = np.arange(n * 4).reshape(n, 4)
    return idx[::-1][:, complement].reshape(-1)


def _normalises_translations(perm, n, channels):
    """True iff conjugating the unit shift by ``perm`` is again a shift."""
    shift1 = translation_permutation(n, channels)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0])
    conj = perm[shift1[inv]]
    for step in range(n):
        if np.array_equal(conj, translation_permutation(n, channels, step)):
            return True
    return False


def transform_convolve(x, theta, h_perms):
    """Group convolution over (translations x H) via transform+convolve.

    ``x`` and ``theta`` are ``(n, c)`` signals; ``h_perms`` lists index
    permutations of the flattened grid (e.g. from
    :func:`dna_reverse_complement_permutation`), each of which must
    normalise translations.  Output row ``h`` is the translational
    cross-correlation of ``x`` with the transformed filter ``rho(h) theta``.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if theta.ndim == 1:
        theta = theta[:, None]
    if x.shape != theta.shape:
        raise ValueError("signal and filter shapes must match")
    n, c = x.shape
    out = np.empty((len(h_perms), n))
    for row, perm in enumerate(h_perms):
        perm = _as_permutation(perm, n * c)
        if not _normalises_translations(perm, n, c):
            raise ValueError(f"subgroup element {row} does not normalise translations")
        # (rho(h) theta)_u = theta_{h^{-1} u}
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.shape[0])
        theta_h = theta.reshape(-1)[inv].reshape(n, c)
        for k in range(n):
            # np.roll(theta_h, k)[u] = theta_h[u - k]
            out[row, k] = float(np.sum(x * np.roll(theta_h, k, axis=0)))
    return out


def cayley_table_json(group):
    """Cayley table as plain nested lists (array-of-arrays of indices)."""
    return [[int(v) for v in row] for row in group.table]
