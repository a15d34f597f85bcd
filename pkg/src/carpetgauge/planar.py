"""Planar gauge graphs and the face-merge reduction of their partition sums.

A planar gauge theory here is an oriented connected finite plane multigraph
with class-function weights on its internal faces and fixed boundary values
on the edges bordering the outer face.  Its partition function

    Z = integral over internal edges of  prod_f p_f(U(f))

reduces to a single convolution p_F = p_{f_1} * ... * p_{f_n} evaluated at
the (conjugacy class of the) boundary holonomy.  The reduction is performed
by repeatedly deleting an internal edge shared by two distinct faces and
convolving their weights; commutativity of * on class functions makes the
result independent of the merge order.

Faces are given by their oriented boundary words (consistent chirality across
faces); an edge bordering a single face appears twice with opposite signs and
drops out by free reduction of the word.
"""

from __future__ import annotations

import numpy as np

from .classfun import ClassFunction, convolve, convolve_power
from .groups import get_group
from .lattice import CarpetGraph

__all__ = [
    "PlanarGaugeGraph", "MergeStuckError",
    "face_holonomy", "face_holonomy_class",
    "reduce_faces", "evaluate_z", "quadrature_z",
    "carpet_face_reduce", "carpet_plaquette_graph",
    "parse_planar_graph", "format_planar_graph",
]


class MergeStuckError(RuntimeError):
    """No internal edge borders two distinct faces while several faces remain;
    the input violates the planarity/connectivity invariants."""


def _simplify_word(word):
    """Free reduction: cancel adjacent (e, s)(e, -s) pairs, cyclically."""
    word = list(word)
    changed = True
    while changed and word:
        changed = False
        out = []
        for item in word:
            if out and out[-1][0] == item[0] and out[-1][1] == -item[1]:
                out.pop()
                changed = True
            else:
                out.append(item)
        # cyclic cancellation across the seam
        while len(out) >= 2 and out[0][0] == out[-1][0] and out[0][1] == -out[-1][1]:
            out = out[1:-1]
            changed = True
        word = out
    return word


class PlanarGaugeGraph:
    """Plane multigraph with face words, per-face weights and boundary data.

    Parameters
    ----------
    group : group or name
    faces : dict name -> word
        Boundary word of each internal face: a sequence of (edge_id, +-1),
        consistently oriented (an internal edge shared by two faces must
        appear with opposite signs in their words).
    weights : dict name -> ClassFunction
    boundary : dict edge_id -> element
        Values on the edges bordering the outer face.
    outer_word : optional word of the outer face.  When provided, the face
        words define a combinatorial plane map: every directed edge appears
        exactly once, vertices are recovered as orbits, and the Euler formula
        is checked.
    """

    def __init__(self, group, faces, weights, boundary, outer_word=None):
        self.group = get_group(group) if isinstance(group, str) else group
        self.faces = {name: list(word) for name, word in faces.items()}
        self.weights = dict(weights)
        self.boundary = dict(boundary)
        self.outer_word = list(outer_word) if outer_word is not None else None
        self._validate()

    def _validate(self):
        if not self.faces:
            raise ValueError("need at least one internal face")
        if set(self.faces) != set(self.weights):
            raise ValueError("faces and weights must carry the same names")
        mult = {}
        net = {}
        for word in self.faces.values():
            for e, s in word:
                if s not in (1, -1):
                    raise ValueError("orientations must be +-1")
                mult[e] = mult.get(e, 0) + 1
                net[e] = net.get(e, 0) + s
        self.all_edges = set(mult)
        self.boundary_edges = set(self.boundary)
        self.internal_edges = self.all_edges - self.boundary_edges
        for e in sorted(self.internal_edges):
            if mult[e] != 2 or net[e] != 0:
                raise ValueError(
                    f"internal edge {e} must appear twice with opposite "
                    f"orientations across the face words")
        for e in sorted(self.boundary_edges & self.all_edges):
            if mult[e] != 1:
                raise ValueError(f"boundary edge {e} must appear once in the "
                                 f"internal face words")
        if self.outer_word is not None:
            self._check_plane_map()

    def _check_plane_map(self):
        words = list(self.faces.values()) + [self.outer_word]
        darts = {}
        for w in words:
            for k, (e, s) in enumerate(w):
                if (e, s) in darts:
                    raise ValueError(f"dart {(e, s)} appears in two face words")
                darts[(e, s)] = w[(k + 1) % len(w)]
        if set((e, -s) for e, s in darts) != set(darts):
            raise ValueError("every edge must be traversed once per direction")
        # Vertex orbits of sigma = alpha o phi_next with alpha the reversal.
        seen = set()
        n_vertices = 0
        for d in darts:
            if d in seen:
                continue
            n_vertices += 1
            cur = d
            while cur not in seen:
                seen.add(cur)
                nxt = darts[cur]
                cur = (nxt[0], -nxt[1])
        V, E, F = n_vertices, len(darts) // 2, len(words)
        if V - E + F != 2:
            raise ValueError(f"Euler check failed: V-E+F = {V}-{E}+{F} != 2")


def face_holonomy(graph: PlanarGaugeGraph, assignment, face):
    """Ordered product along the face word (a class representative).

    ``assignment`` maps internal edge ids to elements; boundary values come
    from the graph.  Only the conjugacy class of the result is meaningful.
    """
    g = graph.group

    def val(e):
        if e in graph.boundary:
            return graph.boundary[e]
        return assignment[e]

    out = g.identity()
    for e, s in graph.faces[face]:
        u = val(e)
        out = g.multiply(out, u if s > 0 else g.inverse(u))
    return out


face_holonomy_class = face_holonomy


def reduce_faces(graph: PlanarGaugeGraph, prefer="min"):
    """Merge all internal faces; returns (p_F, final_word).

    ``prefer`` picks the merge edge among eligible ones ("min" or "max" id);
    the result is merge-order independent because convolution of class
    functions commutes.
    """
    faces = {n: _simplify_word(w) for n, w in graph.faces.items()}
    weights = dict(graph.weights)
    while len(faces) > 1:
        side = {}
        for name, word in faces.items():
            for e, s in word:
                side.setdefault(e, []).append((name, s))
        eligible = sorted(e for e, occ in side.items()
                          if e not in graph.boundary
                          and len(occ) == 2 and occ[0][0] != occ[1][0])
        if not eligible:
            raise MergeStuckError("no internal edge joins two distinct faces")
        e = eligible[0] if prefer == "min" else eligible[-1]
        (na, sa), (nb, sb) = side[e]
        if sa == sb:
            raise MergeStuckError(f"edge {e} enters both faces with one sign")
        fplus, fminus = (na, nb) if sa > 0 else (nb, na)
        wp = faces[fplus]
        k = wp.index((e, 1))
        rest_plus = wp[k + 1:] + wp[:k]
        wm = faces[fminus]
        k = wm.index((e, -1))
        rest_minus = wm[k + 1:] + wm[:k]
        merged_name = f"({fminus}*{fplus})"
        merged_weight = convolve(weights.pop(fminus), weights.pop(fplus))
        del faces[fplus], faces[fminus]
        faces[merged_name] = _simplify_word(rest_minus + rest_plus)
        weights[merged_name] = merged_weight
    (name, word), = faces.items()
    word = _simplify_word(word)
    stray = [e for e, _ in word if e not in graph.boundary]
    if stray:
        raise MergeStuckError(f"internal edges {stray} survived the reduction")
    return weights[name], word


def evaluate_z(graph: PlanarGaugeGraph, prefer="min") -> float:
    """Partition function: p_F at the boundary holonomy of the merged face."""
    p_F, word = reduce_faces(graph, prefer=prefer)
    g = graph.group
    hol = g.identity()
    for e, s in word:
        u = graph.boundary[e]
        hol = g.multiply(hol, u if s > 0 else g.inverse(u))
    return float(p_F.value_at(hol))


# ---------------------------------------------------------------------------
# brute-force oracles


def quadrature_z(graph: PlanarGaugeGraph, n_nodes=64, table_size=65536,
                 rng=None, n_samples=200_000):
    """Direct integration of prod_f p_f(U(f)) over the internal edges.

    U(1): tensor-product trapezoid over the internal edge angles (spectrally
    accurate; weights are evaluated through dense lookup tables).  SU(2):
    tensor Haar quadrature on S^3 per edge for one internal edge, Monte Carlo
    with Haar samples otherwise (returns (estimate, stderr) in that case).
    """
    g = graph.group
    internal = sorted(graph.internal_edges)
    if g.name == "U1":
        return _quadrature_z_u1(graph, internal, n_nodes, table_size)
    if g.name == "SU2":
        if len(internal) <= 1:
            return _quadrature_z_su2(graph, internal)
        return _mc_z(graph, internal, rng, n_samples)
    return _mc_z(graph, internal, rng, n_samples)


def _face_tables(graph, table_size):
    th = -np.pi + np.arange(table_size + 1) * (2.0 * np.pi / table_size)
    tables = {}
    for name, w in graph.weights.items():
        tables[name] = w.value_at_angles(th[:, None])
    return th, tables


def _quadrature_z_u1(graph, internal, n_nodes, table_size):
    th_tab, tables = _face_tables(graph, table_size)
    nodes = -np.pi + (np.arange(n_nodes) + 0.5) * (2.0 * np.pi / n_nodes)
    grids = np.meshgrid(*([nodes] * len(internal)), indexing="ij") if internal else []
    pos = {e: k for k, e in enumerate(internal)}
    total = np.ones(grids[0].shape if internal else (1,))
    for name, word in graph.faces.items():
        ang = 0.0
        for e, s in word:
            if e in graph.boundary:
                ang = ang + s * graph.boundary[e]
            else:
                ang = ang + s * grids[pos[e]]
        ang = np.remainder(np.asarray(ang, dtype=float) + np.pi, 2 * np.pi) - np.pi
        total = total * np.interp(ang, th_tab, tables[name])
    return float(np.mean(total))


def _su2_haar_nodes(n_psi=32, n_theta=16, n_phi=32):
    """Product quadrature for normalised Haar on SU(2) ~ S^3:
    g = cos(psi) 1 + i sin(psi) n.sigma, density (2/pi) sin^2(psi) d psi d n."""
    x, w = np.polynomial.legendre.leggauss(n_psi)
    psi = (x + 1.0) * (np.pi / 2.0)
    wpsi = (np.pi / 2.0) * w * (2.0 / np.pi) * np.sin(psi) ** 2
    xc, wc = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    wphi = np.full(n_phi, 1.0 / n_phi)
    P, C, F = np.meshgrid(psi, xc, phi, indexing="ij")
    W = np.einsum("i,j,k->ijk", wpsi, wc / 2.0, wphi).ravel() * 2.0
    # wc integrates d cos(theta) over [-1, 1] (mass 2), normalised above.
    sint = np.sqrt(1.0 - C ** 2)
    n1, n2, n3 = (sint * np.cos(F)).ravel(), (sint * np.sin(F)).ravel(), C.ravel()
    a0 = np.cos(P).ravel()
    s = np.sin(P).ravel()
    mats = np.empty((a0.size, 2, 2), dtype=complex)
    mats[:, 0, 0] = a0 + 1j * s * n3
    mats[:, 0, 1] = s * (n2 + 1j * n1)
    mats[:, 1, 0] = s * (-n2 + 1j * n1)
    mats[:, 1, 1] = a0 - 1j * s * n3
    return mats, W


def _face_value_su2(graph, name, mats_by_edge, n_points):
    g = graph.group
    prod = np.tile(np.eye(2, dtype=complex), (n_points, 1, 1))
    for e, s in graph.faces[name]:
        if e in graph.boundary:
            u = graph.boundary[e]
            u = u if s > 0 else u.conj().T
            prod = prod @ u
        else:
            u = mats_by_edge[e]
            prod = prod @ (u if s > 0 else np.conj(np.swapaxes(u, 1, 2)))
    alpha = np.arccos(np.clip(0.5 * np.einsum("kii->k", prod).real, -1.0, 1.0))
    return graph.weights[name].value_at_angles(alpha[:, None])


def _quadrature_z_su2(graph, internal):
    if not internal:
        mats = {}
        total = 1.0
        for name in graph.faces:
            total *= float(_face_value_su2(graph, name, mats, 1)[0])
        return total
    e0 = internal[0]
    mats, W = _su2_haar_nodes()
    vals = np.ones(len(W))
    for name in graph.faces:
        vals = vals * _face_value_su2(graph, name, {e0: mats}, len(W))
    return float(W @ vals)


def _mc_z(graph, internal, rng, n_samples):
    g = graph.group
    rng = np.random.default_rng(0) if rng is None else rng
    batch = 20_000
    sums, sq, n = 0.0, 0.0, 0
    while n < n_samples:
        m = min(batch, n_samples - n)
        mats_by_edge = {e: np.stack([g.haar(rng) for _ in range(m)])
                        for e in internal}
        vals = np.ones(m)
        for name in graph.faces:
            vals = vals * _face_value_generic(graph, name, mats_by_edge, m)
        sums += vals.sum()
        sq += (vals ** 2).sum()
        n += m
    mean = sums / n
    var = max(sq / n - mean ** 2, 0.0)
    return mean, float(np.sqrt(var / n))


def _face_value_generic(graph, name, mats_by_edge, n_points):
    g = graph.group
    nsz = g.matrix_size
    prod = np.tile(np.eye(nsz, dtype=complex), (n_points, 1, 1))
    for e, s in graph.faces[name]:
        if e in graph.boundary:
            u = graph.boundary[e]
            u = u if s > 0 else g.inverse(u)
            prod = prod @ u
        else:
            u = mats_by_edge[e]
            prod = prod @ (u if s > 0 else np.conj(np.swapaxes(u, 1, 2)))
    if g.name == "SU2":
        ang = np.arccos(np.clip(0.5 * np.einsum("kii->k", prod).real, -1, 1))[:, None]
    else:
        w = np.linalg.eigvals(prod)
        ang = np.sort(np.angle(w), axis=1)[:, ::-1][:, :2]
    return graph.weights[name].value_at_angles(ang)


# ---------------------------------------------------------------------------
# carpet specialisation


def carpet_plaquette_graph(carpet: CarpetGraph, p: int, weight: ClassFunction,
                           boundary=None) -> PlanarGaugeGraph:
    """The N x N micro-grid of base plaquette p as a planar gauge graph.

    Boundary edges are the 4 N sub-edges of the base plaquette's boundary;
    internal edges are the grid-interior micro-edges; every micro-plaquette
    carries the same weight.
    """
    g = carpet.base  # noqa: F841  (documented relation)
    group = weight.group
    micro = carpet.micro_plaquettes_of(p)
    bottom, right, top, left = carpet.boundary_sub_edges(p)
    bnd_edges = set(int(e) for arr in (bottom, right, top, left) for e in arr)
    if boundary is None:
        boundary = {e: group.identity() for e in bnd_edges}
    faces = {}
    weights = {}
    for q in micro:
        word = list(zip(carpet.plaq_edges[q].tolist(),
                        carpet.plaq_signs[q].tolist()))
        faces[f"m{q}"] = word
        weights[f"m{q}"] = weight
    return PlanarGaugeGraph(group, faces, weights, boundary)


def carpet_face_reduce(carpet: CarpetGraph, p: int, weight: ClassFunction) -> ClassFunction:
    """Reduce one base plaquette's carpet: returns weight^{* N^2}.

    The result is asserted (coefficientwise, 1e-10) against the direct
    convolution power; a mismatch signals a wiring bug between the planar
    reduction and the character calculus.
    """
    graph = carpet_plaquette_graph(carpet, p, weight)
    p_F, _ = reduce_faces(graph)
    direct = convolve_power(weight, carpet.N ** 2)
    err = float(np.max(np.abs(p_F.coeffs - direct.coeffs)))
    if err > 1e-10 * max(1.0, float(np.max(np.abs(direct.coeffs)))):
        raise AssertionError(
            f"carpet reduction disagrees with the convolution power by {err:.3e}")
    return p_F


# ---------------------------------------------------------------------------
# text format:  face <id>: <+-edge ids clockwise> / boundary <edge>=<element>


def parse_planar_graph(text, group, weight_for=None):
    """Parse the planar-graph text format.

    One line per internal face: ``face <id>: <signed edge ids>``;
    boundary lines: ``boundary <edge-id>=<element>`` where the element is an
    angle for U(1) or a row-major comma-separated complex matrix for SU(n);
    optionally ``outer: <signed edge ids>``.

    ``weight_for`` maps a face id to its ClassFunction (a callable or dict);
    when omitted the graph is returned with no weights bound (faces only).
    """
    group = get_group(group) if isinstance(group, str) else group
    faces, boundary, outer = {}, {}, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("face "):
                head, rest = line[5:].split(":", 1)
                faces[head.strip()] = _parse_word(rest)
            elif line.startswith("outer:"):
                outer = _parse_word(line[6:])
            elif line.startswith("boundary "):
                lhs, rhs = line[9:].split("=", 1)
                boundary[int(lhs)] = _parse_element(group, rhs)
            else:
                raise ValueError(f"unrecognised directive {line.split()[0]!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if weight_for is None:
        return faces, boundary, outer
    weights = {name: (weight_for(name) if callable(weight_for) else weight_for[name])
               for name in faces}
    return PlanarGaugeGraph(group, faces, weights, boundary, outer_word=outer)


def _parse_word(s):
    word = []
    for tok in s.split():
        e = int(tok)
        if e == 0:
            raise ValueError("edge ids must be nonzero in the text format")
        word.append((abs(e), 1 if e > 0 else -1))
    return word


def _parse_element(group, s):
    s = s.strip()
    if group.name == "U1":
        return float(s)
    vals = [complex(tok) for tok in s.split(",")]
    n = group.matrix_size
    if len(vals) != n * n:
        raise ValueError(f"expected {n * n} complex entries")
    return np.array(vals, dtype=complex).reshape(n, n)


def format_planar_graph(graph: PlanarGaugeGraph) -> str:
    lines = []
    for name, word in graph.faces.items():
        toks = " ".join(str(e if s > 0 else -e) for e, s in word)
        lines.append(f"face {name}: {toks}")
    for e, u in sorted(graph.boundary.items()):
        if graph.group.name == "U1":
            lines.append(f"boundary {e}={u!r}")
        else:
            flat = ",".join(repr(complex(z)) for z in np.asarray(u).ravel())
            lines.append(f"boundary {e}={flat}")
    if graph.outer_word is not None:
        toks = " ".join(str(e if s > 0 else -e) for e, s in graph.outer_word)
        lines.append(f"outer: {toks}")
    return "\n".join(lines) + "\n"
