"""Box lattices, their carpet refinements, and edge configurations.

The box Lambda^d = {x in Z^d : |x|_inf <= L} carries positively oriented
edges (x, e_j) and plaquettes (x, e_i, e_j), i < j.  The plaquette holonomy
follows the convention

    U_p = U_(x, e_i) U_(x+e_i, e_j) U_(x+e_j, e_i)^{-1} U_(x, e_j)^{-1}.

The carpet refinement tiles every plaquette with an N x N grid of micro
plaquettes of side 1/N.  Distinct plaquettes are glued exclusively along the
N sub-edges of shared base edges; grid-interior vertices and edges are
private to their plaquette.  For N = 1 the refinement is the base lattice
with identical indexing.

Both graphs expose ``n_edges``, ``plaq_edges`` (P, 4) and ``plaq_signs``
(P, 4), which is the whole interface the Monte Carlo sampler needs.
"""

from __future__ import annotations

import csv

import numpy as np

from .groups import CompactGroup

__all__ = [
    "BoxLattice", "CarpetGraph", "Configuration",
    "build_box", "build_carpet",
    "holonomy", "project_pi", "loop_holonomy", "wilson_loop",
    "plaquette_loop", "carpet_lifted_loop", "gauge_transform",
    "edge_plaquette_incidence",
    "dump_edges_csv", "dump_plaquettes_csv",
]

MAX_MICRO_PLAQUETTES = 10 ** 7

EDGE_KIND_BASE = 0
EDGE_KIND_SUB = 1
EDGE_KIND_INTERIOR = 2
_KIND_NAMES = {EDGE_KIND_BASE: "base", EDGE_KIND_SUB: "sub", EDGE_KIND_INTERIOR: "interior"}


class BoxLattice:

    def __init__(self, d: int, L: int):
        if d < 2 or L < 1:
            raise ValueError("need d >= 2 and L >= 1")
        self.d, self.L = d, L
        side = np.arange(-L, L + 1)
        grids = np.meshgrid(*([side] * d), indexing="ij")
        self.vertices = np.stack([g.ravel() for g in grids], axis=1)
        self._vindex = {tuple(v): i for i, v in enumerate(self.vertices)}

        edges, axes = [], []
        self._eindex = {}
        for i, x in enumerate(self.vertices):
            for j in range(d):
                if x[j] < L:
                    y = x.copy(); y[j] += 1
                    self._eindex[(tuple(x), j)] = len(edges)
                    edges.append((i, self._vindex[tuple(y)]))
                    axes.append(j)
        e = np.array(edges, dtype=np.int64)
        self.edge_tail, self.edge_head = e[:, 0], e[:, 1]
        self.edge_axis = np.array(axes, dtype=np.int64)

        plaqs, signs, corners, paxes = [], [], [], []
        for x in self.vertices:
            for i in range(d):
                for j in range(i + 1, d):
                    if x[i] < L and x[j] < L:
                        xi = x.copy(); xi[i] += 1
                        xj = x.copy(); xj[j] += 1
                        plaqs.append([
                            self._eindex[(tuple(x), i)],
                            self._eindex[(tuple(xi), j)],
                            self._eindex[(tuple(xj), i)],
                            self._eindex[(tuple(x), j)],
                        ])
                        signs.append([1, 1, -1, -1])
                        corners.append(x.copy())
                        paxes.append((i, j))
        self.plaq_edges = np.array(plaqs, dtype=np.int64).reshape(-1, 4)
        self.plaq_signs = np.array(signs, dtype=np.int8).reshape(-1, 4)
        self.plaq_corner = np.array(corners, dtype=np.int64).reshape(-1, d)
        self.plaq_axes = paxes

    @property
    def n_vertices(self): return len(self.vertices)

    @property
    def n_edges(self): return len(self.edge_tail)

    @property
    def n_plaquettes(self): return len(self.plaq_edges)

    def edge_id(self, x, axis: int) -> int:
        return self._eindex[(tuple(x), axis)]

    def plaquette_id(self, x, i: int, j: int) -> int:
        x = np.asarray(x)
        match = np.all(self.plaq_corner == x, axis=1)
        for p in np.nonzero(match)[0]:
            if self.plaq_axes[p] == (i, j):
                return int(p)
        raise KeyError((tuple(x), i, j))

    def __repr__(self):
        return (f"<BoxLattice d={self.d} L={self.L}: {self.n_vertices} vertices, "
                f"{self.n_edges} edges, {self.n_plaquettes} plaquettes>")


def build_box(d: int, L: int) -> BoxLattice:
    return BoxLattice(d, L)


class CarpetGraph:

    def __init__(self, base: BoxLattice, N: int):
        if N < 1:
            raise ValueError("refinement N must be >= 1")
        if N * N * base.n_plaquettes > MAX_MICRO_PLAQUETTES:
            raise ValueError("refinement exceeds the micro-plaquette guard")
        self.base, self.N = base, N

        nB = base.n_edges
        # Vertex ids: base vertices, then N-1 split points per base edge,
        # then (N-1)^2 interior points per base plaquette.
        self._sub_vertex0 = base.n_vertices
        self._int_vertex0 = self._sub_vertex0 + nB * (N - 1)
        self.n_vertices = self._int_vertex0 + base.n_plaquettes * (N - 1) ** 2

        # Edge ids: sub-edge t of base edge b is b*N + t; interior edges follow.
        b_of = np.repeat(np.arange(nB), N)
        pos = np.tile(np.arange(N), nB)
        split0 = self._sub_vertex0
        sub_tails = np.where(pos == 0, base.edge_tail[b_of],
                             split0 + b_of * (N - 1) + (pos - 1))
        sub_heads = np.where(pos == N - 1, base.edge_head[b_of],
                             split0 + b_of * (N - 1) + pos)
        sub_kinds = np.full(nB * N, EDGE_KIND_SUB if N > 1 else EDGE_KIND_BASE,
                            dtype=np.int8)

        int_tails, int_heads = [], []
        plaq_edges = np.empty((base.n_plaquettes * N * N, 4), dtype=np.int64)
        plaq_signs = np.tile(np.array([1, 1, -1, -1], dtype=np.int8),
                             (base.n_plaquettes * N * N, 1))
        self.plaq_base = np.repeat(np.arange(base.n_plaquettes), N * N)

        next_edge = nB * N
        for p in range(base.n_plaquettes):
            x = base.plaq_corner[p]
            i, j = base.plaq_axes[p]
            xi = x.copy(); xi[i] += 1
            xj = x.copy(); xj[j] += 1
            e_bottom = base.edge_id(x, i)
            e_right = base.edge_id(xi, j)
            e_top = base.edge_id(xj, i)
            e_left = base.edge_id(x, j)

            def vid(a, b, p=p, x=x, xi=xi, xj=xj,
                    e_bottom=e_bottom, e_right=e_right, e_top=e_top, e_left=e_left):
                if a == 0 and b == 0:
                    return base._vindex[tuple(x)]
                if a == N and b == 0:
                    return base._vindex[tuple(xi)]
                if a == 0 and b == N:
                    return base._vindex[tuple(xj)]
                if a == N and b == N:
                    y = xi.copy(); y[j] += 1
                    return base._vindex[tuple(y)]
                if b == 0:
                    return self._sub_vertex0 + e_bottom * (N - 1) + a - 1
                if b == N:
                    return self._sub_vertex0 + e_top * (N - 1) + a - 1
                if a == 0:
                    return self._sub_vertex0 + e_left * (N - 1) + b - 1
                if a == N:
                    return self._sub_vertex0 + e_right * (N - 1) + b - 1
                return self._int_vertex0 + p * (N - 1) ** 2 + (b - 1) * (N - 1) + a - 1

            h_id = {}
            v_id = {}
            for b in range(N + 1):
                for a in range(N):
                    if b == 0:
                        h_id[a, b] = e_bottom * N + a
                    elif b == N:
                        h_id[a, b] = e_top * N + a
                    else:
                        h_id[a, b] = next_edge
                        int_tails.append(vid(a, b)); int_heads.append(vid(a + 1, b))
                        next_edge += 1
            for a in range(N + 1):
                for b in range(N):
                    if a == 0:
                        v_id[a, b] = e_left * N + b
                    elif a == N:
                        v_id[a, b] = e_right * N + b
                    else:
                        v_id[a, b] = next_edge
                        int_tails.append(vid(a, b)); int_heads.append(vid(a, b + 1))
                        next_edge += 1
            for b in range(N):
                for a in range(N):
                    q = p * N * N + b * N + a
                    plaq_edges[q] = (h_id[a, b], v_id[a + 1, b], h_id[a, b + 1], v_id[a, b])

        self.edge_tail = np.concatenate([sub_tails, np.array(int_tails, dtype=np.int64)])
        self.edge_head = np.concatenate([sub_heads, np.array(int_heads, dtype=np.int64)])
        self.edge_kind = np.concatenate(
            [sub_kinds, np.full(len(int_tails), EDGE_KIND_INTERIOR, dtype=np.int8)])
        self.plaq_edges = plaq_edges
        self.plaq_signs = plaq_signs
        self.sub_edges = (np.arange(nB)[:, None] * N + np.arange(N)[None, :])

    @property
    def n_edges(self): return len(self.edge_tail)

    @property
    def n_plaquettes(self): return len(self.plaq_edges)

    def micro_plaquettes_of(self, p: int) -> np.ndarray:
        N = self.N
        return np.arange(p * N * N, (p + 1) * N * N)

    def boundary_sub_edges(self, p: int):
        """Sub-edge ids of the four base edges bounding base plaquette p,
        as (bottom, right, top, left) arrays ordered along each edge."""
        e1, e2, e3, e4 = self.base.plaq_edges[p]
        return tuple(self.sub_edges[e] for e in (e1, e2, e3, e4))

    def __repr__(self):
        return (f"<CarpetGraph N={self.N} over {self.base!r}: "
                f"{self.n_edges} edges, {self.n_plaquettes} plaquettes>")


def build_carpet(base: BoxLattice, N: int) -> CarpetGraph:
    return CarpetGraph(base, N)


# ---------------------------------------------------------------------------
# configurations


class Configuration:
    """Group-element assignment to a declared edge set.

    U(1): float array of angles; SU(n): complex (E, n, n) array.  The implicit
    orientation rule U(reversed e) = U(e)^{-1} is applied on read by the
    holonomy and loop routines via the sign conventions.
    """

    def __init__(self, group: CompactGroup, values: np.ndarray):
        self.group = group
        self.values = values
        self._products = np.zeros(len(values), dtype=np.int64)

    @classmethod
    def identity(cls, group, n_edges: int):
        if group.name == "U1":
            return cls(group, np.zeros(n_edges))
        n = group.matrix_size
        vals = np.tile(np.eye(n, dtype=complex), (n_edges, 1, 1))
        return cls(group, vals)

    @classmethod
    def haar(cls, group, n_edges: int, rng):
        if group.name == "U1":
            return cls(group, rng.uniform(-np.pi, np.pi, size=n_edges))
        vals = np.stack([group.haar(rng) for _ in range(n_edges)])
        return cls(group, vals)

    @property
    def n_edges(self):
        return len(self.values)

    def get(self, e: int):
        return self.values[e]

    def set(self, e: int, value, renorm_every: int = 64):
        """Store a value; re-unitarise every ``renorm_every`` writes (or when
        the unitarity defect exceeds 1e-12) to keep long products stable."""
        self._products[e] += 1
        if self.group.name != "U1" and (
                self._products[e] % renorm_every == 0
                or self.group.unitarity_defect(value) > 1e-12):
            value = self.group.renormalize(value)
        self.values[e] = value

    def copy(self):
        return Configuration(self.group, self.values.copy())


def holonomy(config: Configuration, graph, p: int):
    """Ordered 4-product around plaquette p with the orientation convention."""
    edges = graph.plaq_edges[p]
    signs = graph.plaq_signs[p]
    g = config.group
    if g.name == "U1":
        return float(np.remainder(
            np.sum(signs * config.values[edges]) + np.pi, 2 * np.pi) - np.pi)
    out = g.identity()
    for e, s in zip(edges, signs):
        u = config.values[e]
        out = out @ (u if s > 0 else u.conj().T)
    return out


def project_pi(carpet: CarpetGraph, config: Configuration) -> Configuration:
    """Push a carpet (or subdivided-lattice) configuration down to the base
    lattice: ordered product of the N sub-edge elements along each base edge."""
    g = config.group
    base = carpet.base
    if g.name == "U1":
        vals = config.values[carpet.sub_edges].sum(axis=1)
        vals = np.remainder(vals + np.pi, 2 * np.pi) - np.pi
        return Configuration(g, vals)
    out = Configuration.identity(g, base.n_edges)
    for b in range(base.n_edges):
        u = g.identity()
        for e in carpet.sub_edges[b]:
            u = u @ config.values[e]
        out.values[b] = g.renormalize(u) if carpet.N >= 64 else u
    return out


def _check_closed(graph, loop):
    v = None
    start = None
    for e, s in loop:
        a, b = graph.edge_tail[e], graph.edge_head[e]
        if s < 0:
            a, b = b, a
        if v is None:
            start = a
        elif a != v:
            raise ValueError("loop is not a connected walk")
        v = b
    if v != start:
        raise ValueError("loop does not close")


def loop_holonomy(config: Configuration, graph, loop):
    """Ordered product along a closed walk given as [(edge_id, +-1), ...]."""
    _check_closed(graph, loop)
    g = config.group
    if g.name == "U1":
        total = sum(s * config.values[e] for e, s in loop)
        return float(np.remainder(total + np.pi, 2 * np.pi) - np.pi)
    out = g.identity()
    for e, s in loop:
        u = config.values[e]
        out = out @ (u if s > 0 else u.conj().T)
    return out


def wilson_loop(config: Configuration, graph, loop) -> float:
    """Re Tr of the loop holonomy, normalised by the matrix size."""
    g = config.group
    return g.re_trace(loop_holonomy(config, graph, loop)) / g.matrix_size


def plaquette_loop(graph, p: int):
    return list(zip(graph.plaq_edges[p].tolist(), graph.plaq_signs[p].tolist()))


def carpet_lifted_loop(carpet: CarpetGraph, base_loop):
    """Expand a base-lattice loop into the corresponding carpet loop along
    subdivided edges (the pullback of the loop under the projection)."""
    out = []
    for e, s in base_loop:
        subs = carpet.sub_edges[e]
        if s > 0:
            out.extend((int(t), 1) for t in subs)
        else:
            out.extend((int(t), -1) for t in subs[::-1])
    return out


def gauge_transform(config: Configuration, graph, site_elements) -> Configuration:
    """U_e -> g_tail U_e g_head^{-1} at every edge."""
    g = config.group
    out = config.copy()
    for e in range(config.n_edges):
        a, b = graph.edge_tail[e], graph.edge_head[e]
        if g.name == "U1":
            out.values[e] = g.multiply(g.multiply(site_elements[a], config.values[e]),
                                       g.inverse(site_elements[b]))
        else:
            out.values[e] = site_elements[a] @ config.values[e] @ site_elements[b].conj().T
    return out


def edge_plaquette_incidence(graph):
    """CSR-style incidence: for each edge, the incident (plaquette, sign).

    Returns (indptr, plaq, sign) with the slice indptr[e]:indptr[e+1] listing
    the plaquettes containing edge e and the orientation it enters with.
    """
    E = graph.n_edges
    counts = np.zeros(E + 1, dtype=np.int64)
    for row in graph.plaq_edges:
        for e in row:
            counts[e + 1] += 1
    indptr = np.cumsum(counts)
    plaq = np.empty(indptr[-1], dtype=np.int64)
    sign = np.empty(indptr[-1], dtype=np.int8)
    cursor = indptr[:-1].copy()
    for p, (row, srow) in enumerate(zip(graph.plaq_edges, graph.plaq_signs)):
        for e, s in zip(row, srow):
            plaq[cursor[e]] = p
            sign[cursor[e]] = s
            cursor[e] += 1
    return indptr, plaq, sign


# ---------------------------------------------------------------------------
# dumps


def dump_edges_csv(graph, path):
    kinds = getattr(graph, "edge_kind", None)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_id", "from_vertex", "to_vertex", "kind"])
        for e in range(graph.n_edges):
            k = EDGE_KIND_BASE if kinds is None else int(kinds[e])
            w.writerow([e, int(graph.edge_tail[e]), int(graph.edge_head[e]),
                        _KIND_NAMES[k]])


def dump_plaquettes_csv(graph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["plaq_id", "e1", "e2", "e3", "e4", "s1", "s2", "s3", "s4"])
        for p in range(graph.n_plaquettes):
            w.writerow([p, *graph.plaq_edges[p].tolist(), *graph.plaq_signs[p].tolist()])
