"""Markov chain Monte Carlo for plaquette gauge measures.

Samples U from  Z^{-1} prod_p Q_p(U_p) dU  on any plaquette complex exposing
``n_edges`` / ``plaq_edges`` / ``plaq_signs`` (box lattices and carpet
graphs).  Couplings are per plaquette: each plaquette carries a weight
ClassFunction, deduplicated into "patterns" so identical weights share cached
tables.

Samplers: Metropolis with proposals U -> U exp(w xi), xi uniform on the unit
algebra ball, with the width w adapted toward 40-60% acceptance during
burn-in and then frozen; and an exact heat-bath for U(1).  U(1) and SU(2)
sweeps run in numba kernels (U(1) weights through a cached 4096-point
log-density grid with linear interpolation, SU(2) through the Chebyshev
character series); other groups fall back to a plain Python sweep.

One chain owns one RNG stream and runs single-threaded; reports are
bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .classfun import ClassFunction
from .groups import get_group
from .lattice import Configuration, edge_plaquette_incidence, holonomy

__all__ = [
    "ChainState", "EstimatorReport", "GinibreReport",
    "make_chain", "local_weight", "metropolis_sweep", "heatbath_sweep_u1",
    "estimate", "ginibre_experiment",
]

_U1_GRID = 4096
_TINY = 1e-300


@dataclass
class EstimatorReport:
    name: str
    estimate: float
    stderr: float
    batches: int
    tau_int: float
    sweeps: int
    seed: int


@dataclass
class GinibreReport:
    couplings: list
    estimates: list
    stderrs: list
    diffs: list          # consecutive differences
    diff_sigmas: list    # combined sigma per difference
    verdict: str         # "nondecreasing" | "inconclusive" | "violation"


class ChainState:

    def __init__(self, group, graph, weights, seed, init="cold"):
        self.group = get_group(group) if isinstance(group, str) else group
        self.graph = graph
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        if isinstance(weights, ClassFunction) or weights is None:
            weights = [weights] * graph.n_plaquettes
        if len(weights) != graph.n_plaquettes:
            raise ValueError("need one weight per plaquette")
        self.weights = list(weights)
        pats, pat_of = [], []
        seen = {}
        for w in self.weights:
            key = id(w)
            if key not in seen:
                seen[key] = len(pats)
                pats.append(w)
            pat_of.append(seen[key])
        self.patterns = pats
        self.plaq_pattern = np.array(pat_of, dtype=np.int64)
        if init == "cold":
            self.config = Configuration.identity(self.group, graph.n_edges)
        elif init == "hot":
            self.config = Configuration.haar(self.group, graph.n_edges, self.rng)
        else:
            raise ValueError(init)
        self.width = 1.0
        self.frozen = False
        self.sweep_count = 0
        self._incidence = edge_plaquette_incidence(graph)
        self._tables = {}

    # -- cached weight tables -------------------------------------------------

    def _logq_grid(self):
        """(n_patterns, M + 1) log densities on the closed angle grid."""
        if "u1" not in self._tables:
            th = np.linspace(-np.pi, np.pi, _U1_GRID + 1)
            rows = []
            for w in self.patterns:
                if w is None:
                    rows.append(np.zeros(th.size))
                else:
                    rows.append(np.log(np.maximum(w.value_at_angles(th[:, None]), _TINY)))
            self._tables["u1"] = np.array(rows)
        return self._tables["u1"]

    def _cheb_coeffs(self):
        """(n_patterns, K) character-series coefficients, tail-truncated."""
        if "su2" not in self._tables:
            rows = []
            for w in self.patterns:
                if w is None:
                    c = np.array([1.0])
                else:
                    c = w.coeffs.copy()
                    scale = np.max(np.abs(c) * w.irreps.dims)
                    keep = np.nonzero(np.abs(c) * w.irreps.dims > 1e-14 * scale)[0]
                    c = c[: keep[-1] + 1] if keep.size else c[:1]
                rows.append(c)
            K = max(len(r) for r in rows)
            table = np.zeros((len(rows), K))
            for i, r in enumerate(rows):
                table[i, : len(r)] = r
            self._tables["su2"] = table
        return self._tables["su2"]

    def weight_value(self, p: int, element) -> float:
        w = self.weights[p]
        return 1.0 if w is None else float(w.value_at(element))


def make_chain(group, graph, weights, seed, init="cold") -> ChainState:
    return ChainState(group, graph, weights, seed, init=init)


# ---------------------------------------------------------------------------
# generic (pure Python) path


def local_weight(state: ChainState, edge: int, candidate) -> float:
    """prod over plaquettes containing the edge of Q_p(holonomy with the
    candidate substituted).  Edges with no incident plaquette return 1."""
    indptr, plq, _ = state._incidence
    g = state.group
    old = state.config.values[edge]
    state.config.values[edge] = candidate
    try:
        total = 1.0
        for k in range(indptr[edge], indptr[edge + 1]):
            p = plq[k]
            total *= state.weight_value(p, holonomy(state.config, state.graph, p))
    finally:
        state.config.values[edge] = old
    return total


def _propose(state, edge):
    g = state.group
    xi = state.rng.normal(size=g.dim)
    xi /= np.linalg.norm(xi)
    xi *= state.rng.uniform() ** (1.0 / g.dim)
    step = g.exp(state.width * xi)
    return g.multiply(state.config.values[edge], step)


def metropolis_sweep(state: ChainState, n: int = 1) -> float:
    """n full sweeps in edge-id order (Python path); returns acceptance rate."""
    g = state.group
    accepted = total = 0
    for _ in range(n):
        for e in range(state.graph.n_edges):
            cand = _propose(state, e)
            w_new = local_weight(state, e, cand)
            w_old = local_weight(state, e, state.config.values[e])
            total += 1
            if state.rng.uniform() < min(1.0, w_new / max(w_old, _TINY)):
                state.config.set(e, cand)
                accepted += 1
        state.sweep_count += 1
    return accepted / total


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _wrap(x):
    y = (x + np.pi) % (2.0 * np.pi) - np.pi
    return y


@njit(cache=True)
def _interp_closed(table, ang):
    # table sampled on linspace(-pi, pi, M+1)
    M = table.shape[0] - 1
    t = (ang + np.pi) * (M / (2.0 * np.pi))
    i = int(t)
    if i >= M:
        i = M - 1
    f = t - i
    return table[i] * (1.0 - f) + table[i + 1] * f


@njit(cache=True)
def _u1_measure(theta, loop_ptr, loop_edge, loop_sign, out, s):
    for l in range(loop_ptr.size - 1):
        tot = 0.0
        for k in range(loop_ptr[l], loop_ptr[l + 1]):
            tot += loop_sign[k] * theta[loop_edge[k]]
        out[s, l] = np.cos(tot)


@njit(cache=True)
def _u1_metro_chunk(theta, plaq_angle, pat, logq,
                    indptr, inc_plq, inc_sgn,
                    prop, accu, width,
                    loop_ptr, loop_edge, loop_sign, out):
    n_sweeps, E = prop.shape
    accepted = 0
    for s in range(n_sweeps):
        for e in range(E):
            delta = width * prop[s, e]
            dlog = 0.0
            for k in range(indptr[e], indptr[e + 1]):
                p = inc_plq[k]
                row = logq[pat[p]]
                new_ang = _wrap(plaq_angle[p] + inc_sgn[k] * delta)
                dlog += _interp_closed(row, new_ang) - _interp_closed(row, plaq_angle[p])
            if np.log(accu[s, e]) < dlog:
                theta[e] = _wrap(theta[e] + delta)
                for k in range(indptr[e], indptr[e + 1]):
                    p = inc_plq[k]
                    plaq_angle[p] = _wrap(plaq_angle[p] + inc_sgn[k] * delta)
                accepted += 1
        if out.shape[1] > 0:
            _u1_measure(theta, loop_ptr, loop_edge, loop_sign, out, s)
    return accepted


@njit(cache=True)
def _u1_heatbath_chunk(theta, plaq_angle, pat, logq,
                       indptr, inc_plq, inc_sgn,
                       uni, loop_ptr, loop_edge, loop_sign, out):
    n_sweeps, E = uni.shape
    M = logq.shape[1] - 1
    h = 2.0 * np.pi / M
    cond = np.empty(M)
    for s in range(n_sweeps):
        for e in range(E):
            lo, hi = indptr[e], indptr[e + 1]
            if lo == hi:
                theta[e] = -np.pi + uni[s, e] * 2.0 * np.pi
                continue
            best = -1e308
            for m in range(M):
                th = -np.pi + (m + 0.5) * h
                tot = 0.0
                for k in range(lo, hi):
                    p = inc_plq[k]
                    # complement: current plaquette angle minus this edge's part
                    alpha = plaq_angle[p] - inc_sgn[k] * theta[e]
                    row = logq[pat[p]]
                    tot += _interp_closed(row, _wrap(alpha + inc_sgn[k] * th))
                cond[m] = tot
                if tot > best:
                    best = tot
            total = 0.0
            for m in range(M):
                cond[m] = np.exp(cond[m] - best)
                total += cond[m]
            u = uni[s, e] * total
            acc = 0.0
            m_pick = M - 1
            for m in range(M):
                acc += cond[m]
                if acc >= u:
                    m_pick = m
                    break
            # uniform within the bin
            frac = (acc - u) / cond[m_pick] if cond[m_pick] > 0 else 0.5
            new_theta = -np.pi + (m_pick + 1.0 - frac) * h
            delta = _wrap(new_theta - theta[e])
            theta[e] = _wrap(theta[e] + delta)
            for k in range(lo, hi):
                p = inc_plq[k]
                plaq_angle[p] = _wrap(plaq_angle[p] + inc_sgn[k] * delta)
        if out.shape[1] > 0:
            _u1_measure(theta, loop_ptr, loop_edge, loop_sign, out, s)
    return 0


@njit(cache=True)
def _qmul(a, b, out):
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + b[0] * a[1] - (a[2] * b[3] - a[3] * b[2])
    out[2] = a[0] * b[2] + b[0] * a[2] - (a[3] * b[1] - a[1] * b[3])
    out[3] = a[0] * b[3] + b[0] * a[3] - (a[1] * b[2] - a[2] * b[1])


@njit(cache=True)
def _qmul_conj(a, b, out):
    # a * b^{-1}
    out[0] = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    out[1] = -a[0] * b[1] + b[0] * a[1] + (a[2] * b[3] - a[3] * b[2])
    out[2] = -a[0] * b[2] + b[0] * a[2] + (a[3] * b[1] - a[1] * b[3])
    out[3] = -a[0] * b[3] + b[0] * a[3] + (a[1] * b[2] - a[2] * b[1])


@njit(cache=True)
def _plaq_quat(quat, edges, signs, e_sub, cand, out):
    tmp = np.empty(4)
    out[0] = 1.0; out[1] = 0.0; out[2] = 0.0; out[3] = 0.0
    for k in range(4):
        e = edges[k]
        q = cand if e == e_sub else quat[e]
        if signs[k] > 0:
            _qmul(out, q, tmp)
        else:
            _qmul_conj(out, q, tmp)
        out[0] = tmp[0]; out[1] = tmp[1]; out[2] = tmp[2]; out[3] = tmp[3]


@njit(cache=True)
def _cheb_logq(coeffs, x):
    # Q = sum_k c_k U_k(x); log with a positivity clamp.
    K = coeffs.shape[0]
    val = coeffs[0]
    if K > 1:
        u0 = 1.0
        u1 = 2.0 * x
        val += coeffs[1] * u1
        for k in range(2, K):
            u2 = 2.0 * x * u1 - u0
            val += coeffs[k] * u2
            u0 = u1
            u1 = u2
    if val < _TINY:
        val = _TINY
    return np.log(val)


@njit(cache=True)
def _su2_measure(quat, loop_ptr, loop_edge, loop_sign, out, s):
    acc = np.empty(4)
    tmp = np.empty(4)
    for l in range(loop_ptr.size - 1):
        acc[0] = 1.0; acc[1] = 0.0; acc[2] = 0.0; acc[3] = 0.0
        for k in range(loop_ptr[l], loop_ptr[l + 1]):
            q = quat[loop_edge[k]]
            if loop_sign[k] > 0:
                _qmul(acc, q, tmp)
            else:
                _qmul_conj(acc, q, tmp)
            acc[0] = tmp[0]; acc[1] = tmp[1]; acc[2] = tmp[2]; acc[3] = tmp[3]
        out[s, l] = acc[0]


@njit(cache=True)
def _su2_metro_chunk(quat, plaq_logq, pat, coeffs,
                     plaq_edges, plaq_signs,
                     indptr, inc_plq, inc_sgn,
                     xi, accu, width, renorm_count,
                     loop_ptr, loop_edge, loop_sign, out):
    n_sweeps, E = accu.shape
    accepted = 0
    cand = np.empty(4)
    step = np.empty(4)
    hol = np.empty(4)
    new_logq = np.empty(8)
    for s in range(n_sweeps):
        for e in range(E):
            # proposal: right-multiply by exp of an algebra ball vector
            v1 = width * xi[s, e, 0] / np.sqrt(2.0)
            v2 = width * xi[s, e, 1] / np.sqrt(2.0)
            v3 = width * xi[s, e, 2] / np.sqrt(2.0)
            ang = np.sqrt(v1 * v1 + v2 * v2 + v3 * v3)
            if ang < 1e-300:
                step[0] = 1.0; step[1] = 0.0; step[2] = 0.0; step[3] = 0.0
            else:
                sc = np.sin(ang) / ang
                step[0] = np.cos(ang)
                step[1] = sc * v1; step[2] = sc * v2; step[3] = sc * v3
            _qmul(quat[e], step, cand)
            dlog = 0.0
            idx = 0
            for k in range(indptr[e], indptr[e + 1]):
                p = inc_plq[k]
                _plaq_quat(quat, plaq_edges[p], plaq_signs[p], e, cand, hol)
                x = hol[0]
                if x > 1.0:
                    x = 1.0
                elif x < -1.0:
                    x = -1.0
                lq = _cheb_logq(coeffs[pat[p]], x)
                new_logq[idx] = lq
                idx += 1
                dlog += lq - plaq_logq[p]
            if np.log(accu[s, e]) < dlog:
                renorm_count[e] += 1
                if renorm_count[e] % 64 == 0:
                    nrm = np.sqrt(cand[0] ** 2 + cand[1] ** 2 + cand[2] ** 2 + cand[3] ** 2)
                    cand[0] /= nrm; cand[1] /= nrm; cand[2] /= nrm; cand[3] /= nrm
                quat[e, 0] = cand[0]; quat[e, 1] = cand[1]
                quat[e, 2] = cand[2]; quat[e, 3] = cand[3]
                idx = 0
                for k in range(indptr[e], indptr[e + 1]):
                    plaq_logq[inc_plq[k]] = new_logq[idx]
                    idx += 1
                accepted += 1
        if out.shape[1] > 0:
            _su2_measure(quat, loop_ptr, loop_edge, loop_sign, out, s)
    return accepted


# ---------------------------------------------------------------------------
# driving the kernels


def _loops_csr(loops):
    ptr = [0]
    edges, signs = [], []
    for loop in loops:
        for e, s in loop:
            edges.append(e)
            signs.append(s)
        ptr.append(len(edges))
    return (np.array(ptr, dtype=np.int64),
            np.array(edges, dtype=np.int64),
            np.array(signs, dtype=np.int8))


def _su2_to_quat(mats):
    q = np.empty((len(mats), 4))
    q[:, 0] = mats[:, 0, 0].real
    q[:, 3] = mats[:, 0, 0].imag
    q[:, 2] = mats[:, 0, 1].real
    q[:, 1] = mats[:, 0, 1].imag
    return q


def _quat_to_su2(q):
    mats = np.empty((len(q), 2, 2), dtype=complex)
    mats[:, 0, 0] = q[:, 0] + 1j * q[:, 3]
    mats[:, 0, 1] = q[:, 2] + 1j * q[:, 1]
    mats[:, 1, 0] = -q[:, 2] + 1j * q[:, 1]
    mats[:, 1, 1] = q[:, 0] - 1j * q[:, 3]
    return mats


class _KernelDriver:
    """Chunked kernel execution with a single RNG stream."""

    def __init__(self, state: ChainState, loops, sampler):
        self.state = state
        self.sampler = sampler
        self.loop_csr = _loops_csr(loops)
        self.n_loops = len(loops)
        g = state.group
        graph = state.graph
        self.indptr, self.inc_plq, self.inc_sgn = state._incidence
        if g.name == "U1":
            self.theta = np.asarray(state.config.values, dtype=float)
            self.plaq_angle = np.array(
                [holonomy(state.config, graph, p) for p in range(graph.n_plaquettes)])
            self.logq = state._logq_grid()
        elif g.name == "SU2":
            if sampler != "metropolis":
                raise ValueError("heat bath is implemented for U(1) only")
            self.quat = _su2_to_quat(np.asarray(state.config.values))
            self.coeffs = state._cheb_coeffs()
            self.renorm_count = np.zeros(graph.n_edges, dtype=np.int64)
            self.plaq_logq = np.empty(graph.n_plaquettes)
            for p in range(graph.n_plaquettes):
                hol = holonomy(state.config, graph, p)
                x = float(np.clip(0.5 * np.trace(hol).real, -1.0, 1.0))
                self.plaq_logq[p] = _cheb_logq(self.coeffs[state.plaq_pattern[p]], x)
        else:
            raise ValueError("no kernel for this group")

    def run(self, n_sweeps, measure):
        st = self.state
        g = st.group
        E = st.graph.n_edges
        out = np.empty((n_sweeps if measure else 0, self.n_loops if measure else 0))
        lp, le, ls = self.loop_csr
        if g.name == "U1" and self.sampler == "metropolis":
            prop = st.rng.uniform(-1.0, 1.0, size=(n_sweeps, E))
            accu = st.rng.random(size=(n_sweeps, E))
            acc = _u1_metro_chunk(self.theta, self.plaq_angle, st.plaq_pattern,
                                  self.logq, self.indptr, self.inc_plq, self.inc_sgn,
                                  prop, accu, st.width, lp, le, ls, out)
        elif g.name == "U1":
            uni = st.rng.random(size=(n_sweeps, E))
            acc = _u1_heatbath_chunk(self.theta, self.plaq_angle, st.plaq_pattern,
                                     self.logq, self.indptr, self.inc_plq,
                                     self.inc_sgn, uni, lp, le, ls, out)
            acc = n_sweeps * E
        else:
            xi = st.rng.normal(size=(n_sweeps, E, 3))
            norm = np.linalg.norm(xi, axis=2, keepdims=True)
            norm[norm == 0] = 1.0
            r = st.rng.random(size=(n_sweeps, E, 1)) ** (1.0 / 3.0)
            xi = xi / norm * r
            accu = st.rng.random(size=(n_sweeps, E))
            acc = _su2_metro_chunk(self.quat, self.plaq_logq, st.plaq_pattern,
                                   self.coeffs, st.graph.plaq_edges,
                                   st.graph.plaq_signs, self.indptr, self.inc_plq,
                                   self.inc_sgn, xi, accu, st.width,
                                   self.renorm_count, lp, le, ls, out)
        st.sweep_count += n_sweeps
        self._resync()
        return acc / (n_sweeps * E), out

    def _resync(self):
        """Recompute maintained plaquette data from the edge variables; the
        incremental updates accumulate float drift over long runs."""
        st = self.state
        graph = st.graph
        if st.group.name == "U1":
            total = (self.theta[graph.plaq_edges] * graph.plaq_signs).sum(axis=1)
            self.plaq_angle[:] = np.remainder(total + np.pi, 2 * np.pi) - np.pi
        else:
            self.quat /= np.linalg.norm(self.quat, axis=1, keepdims=True)
            scratch = np.empty(4)
            hol = np.empty(4)
            for p in range(graph.n_plaquettes):
                _plaq_quat(self.quat, graph.plaq_edges[p], graph.plaq_signs[p],
                           -1, scratch, hol)
                x = float(np.clip(hol[0], -1.0, 1.0))
                self.plaq_logq[p] = _cheb_logq(self.coeffs[st.plaq_pattern[p]], x)

    def writeback(self):
        st = self.state
        if st.group.name == "U1":
            st.config.values[:] = self.theta
        else:
            st.config.values[:] = _quat_to_su2(self.quat)


def heatbath_sweep_u1(state: ChainState, n: int = 1):
    """n exact conditional resampling sweeps (U(1) only)."""
    if state.group.name != "U1":
        raise ValueError("heat bath is implemented for U(1) only")
    driver = _KernelDriver(state, [], "heatbath")
    driver.run(n, measure=False)
    driver.writeback()


_ADAPT_INTERVAL = 100
_CHUNK = 4096


def estimate(state: ChainState, loops, sweeps, burn_in, batches=32,
             sampler="metropolis", loop_names=None, force_python=False):
    """Run the chain and report batch-means estimates of the loop observables.

    The proposal width adapts toward 40-60% acceptance during burn-in (the
    whole burn-in is the adaptive phase) and is frozen for measurement.
    Raises when ``batches < 8``: too few batches for a trustworthy error bar.
    """
    if batches < 8:
        raise ValueError("refusing to report an error bar with fewer than 8 batches")
    if loop_names is None:
        loop_names = [f"loop{i}" for i in range(len(loops))]

    use_kernel = (not force_python) and state.group.name in ("U1", "SU2")
    if use_kernel:
        driver = _KernelDriver(state, loops, sampler)
        done = 0
        while done < burn_in:  # adaptive phase
            n = min(_ADAPT_INTERVAL, burn_in - done)
            rate, _ = driver.run(n, measure=False)
            if sampler == "metropolis" and not state.frozen:
                if rate < 0.4:
                    state.width = max(state.width * 0.8, 1e-3)
                elif rate > 0.6:
                    state.width = min(state.width * 1.25, np.pi)
            done += n
        state.frozen = True
        series = np.empty((sweeps, len(loops)))
        done = 0
        while done < sweeps:
            n = min(_CHUNK, sweeps - done)
            _, out = driver.run(n, measure=True)
            series[done:done + n] = out
            done += n
        driver.writeback()
    else:
        from .lattice import wilson_loop
        done = 0
        while done < burn_in:
            n = min(_ADAPT_INTERVAL, burn_in - done)
            rate = metropolis_sweep(state, n)
            if not state.frozen:
                if rate < 0.4:
                    state.width = max(state.width * 0.8, 1e-3)
                elif rate > 0.6:
                    state.width = min(state.width * 1.25, np.pi)
            done += n
        state.frozen = True
        series = np.empty((sweeps, len(loops)))
        for s in range(sweeps):
            metropolis_sweep(state, 1)
            for l, loop in enumerate(loops):
                series[s, l] = wilson_loop(state.config, state.graph, loop)

    return [_batch_report(series[:, l], loop_names[l], batches, state)
            for l in range(len(loops))]


def _batch_report(x, name, batches, state):
    n = (len(x) // batches) * batches
    bm = x[:n].reshape(batches, -1).mean(axis=1)
    est = float(bm.mean())
    stderr = float(bm.std(ddof=1) / np.sqrt(batches))
    var = float(x[:n].var(ddof=1))
    blen = n // batches
    tau = 0.5 * blen * float(bm.var(ddof=1)) / var if var > 0 else 0.5
    return EstimatorReport(name=name, estimate=est, stderr=stderr,
                           batches=batches, tau_int=max(tau, 0.0),
                           sweeps=len(x), seed=state.seed)


def ginibre_experiment(graph, loop, couplings, beta_fixed, distinguished,
                       seed, sweeps=40_000, burn_in=4_000, batches=32,
                       irreps=None):
    """Wilson-loop monotonicity in the coupling of one distinguished plaquette.

    U(1) Villain weights: the distinguished plaquette runs through the
    coupling grid while all others stay at ``beta_fixed``.  Independent
    chains per grid point, seeded from a common sequence.
    """
    from .actions import villain_density
    group = get_group("U1")
    fixed = villain_density(beta_fixed, group, irreps=irreps)
    seeds = np.random.SeedSequence(seed).generate_state(len(couplings))
    estimates, stderrs = [], []
    for b, s in zip(couplings, seeds):
        special = villain_density(b, group, irreps=irreps)
        weights = [special if p == distinguished else fixed
                   for p in range(graph.n_plaquettes)]
        chain = make_chain(group, graph, weights, int(s))
        rep, = estimate(chain, [loop], sweeps, burn_in, batches=batches)
        estimates.append(rep.estimate)
        stderrs.append(rep.stderr)
    diffs = [estimates[i + 1] - estimates[i] for i in range(len(estimates) - 1)]
    sig = [float(np.hypot(stderrs[i + 1], stderrs[i])) for i in range(len(diffs))]
    if any(d < -3.0 * s for d, s in zip(diffs, sig)):
        verdict = "violation"
    elif all(d > 0 for d in diffs):
        verdict = "nondecreasing"
    elif all(d >= -3.0 * s for d, s in zip(diffs, sig)):
        # cannot resolve an increase, but no contradiction either
        verdict = "inconclusive"
    else:  # pragma: no cover
        verdict = "violation"
    return GinibreReport(couplings=list(couplings), estimates=estimates,
                         stderrs=stderrs, diffs=diffs, diff_sigmas=sig,
                         verdict=verdict)
