"""Class functions on U(1), SU(2), SU(3) in a truncated character basis.

A :class:`ClassFunction` stores real character coefficients over a finite
irrep set together with a cached evaluation on the group's Weyl quadrature
grid.  Convolution is diagonal in this basis,

    (f * g)^_lambda = f^_lambda g^_lambda / d_lambda,

so convolution powers are computed by exponentiating coefficients rather than
by repeated quadrature.

Irrep labels: U(1) integer n with |n| <= cutoff; SU(2) integer k = 2j with
k <= cutoff; SU(3) Dynkin pairs (p, q) with p + q <= cutoff.  The quadratic
Casimir of each irrep is *derived* by a finite-difference Laplacian on its
character (Richardson-extrapolated central stencils along every basis
direction) rather than hardcoded, and cached per irrep set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .groups import U1, SU2, SU3, CompactGroup, get_group

__all__ = [
    "IrrepSet", "ClassFunction", "WeylQuadrature",
    "default_irreps", "weyl_quadrature", "default_grid_size",
    "project", "convolve", "convolve_power", "normalize",
    "sup_distance", "tv_distance",
    "grad_eps", "sup_grad_eps", "SupGradResult",
    "QuadratureUnconvergedError", "NonMarkovError",
    "write_csv", "read_csv",
]

DEFAULT_CUTOFF = {"U1": 256, "SU2": 128, "SU3": 24}
DEFAULT_GRID = {"U1": 4096, "SU2": 512, "SU3": 256}

_FD_STENCIL_H = 1e-3


class QuadratureUnconvergedError(RuntimeError):
    """Doubling the quadrature grid moved a coefficient beyond tolerance."""


class NonMarkovError(ValueError):
    """A coefficient violates |f^_lambda| <= d_lambda; the function cannot be
    a probability density, so convolution powers would blow up."""


# ---------------------------------------------------------------------------
# characters


def _u1_characters(labels, angles):
    n = np.asarray(labels, dtype=float)[:, None]
    return np.exp(1j * n * np.asarray(angles, dtype=float)[None, :, 0])


def _su2_characters(labels, angles):
    """chi_{j}(alpha) = U_{2j}(cos alpha) (Chebyshev, second kind)."""
    alpha = np.asarray(angles, dtype=float)[:, 0]
    x = np.cos(alpha)
    kmax = int(max(labels))
    table = np.empty((kmax + 1, x.size))
    table[0] = 1.0
    if kmax >= 1:
        table[1] = 2.0 * x
    for k in range(2, kmax + 1):
        table[k] = 2.0 * x * table[k - 1] - table[k - 2]
    return table[np.asarray(labels, dtype=int)].astype(complex)


def _su3_char_raw(p, q, z1, z2, z3):
    a, b = p + q + 2, q + 1

    def det3(e1, e2, e3):
        return (z1 ** e1 * (z2 ** e2 * z3 ** e3 - z2 ** e3 * z3 ** e2)
                - z2 ** e1 * (z1 ** e2 * z3 ** e3 - z1 ** e3 * z3 ** e2)
                + z3 ** e1 * (z1 ** e2 * z2 ** e3 - z1 ** e3 * z2 ** e2))

    return det3(a, b, 0), det3(2, 1, 0)


def _su3_characters(labels, angles):
    """Weyl character formula (Schur ratio).  Near the Weyl-chamber walls the
    0/0 ratio is replaced by a symmetric two-sided jitter average."""
    angles = np.asarray(angles, dtype=float)
    t1, t2 = angles[:, 0], angles[:, 1]
    z = [np.exp(1j * t1), np.exp(1j * t2), np.exp(-1j * (t1 + t2))]
    out = np.empty((len(labels), t1.size), dtype=complex)
    vdm = (z[0] - z[1]) * (z[0] - z[2]) * (z[1] - z[2])
    bad = np.abs(vdm) < 1e-8
    for i, (p, q) in enumerate(labels):
        num, den = _su3_char_raw(p, q, *z)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[i] = num / den
    if np.any(bad):
        d1, d2 = 1.3e-6, -2.9e-6
        for sgn in (+1.0, -1.0):
            u1 = t1[bad] + sgn * d1
            u2 = t2[bad] + sgn * d2
            zz = [np.exp(1j * u1), np.exp(1j * u2), np.exp(-1j * (u1 + u2))]
            for i, (p, q) in enumerate(labels):
                num, den = _su3_char_raw(p, q, *zz)
                val = num / den
                if sgn > 0:
                    out[i, bad] = 0.5 * val
                else:
                    out[i, bad] += 0.5 * val
    return out


# ---------------------------------------------------------------------------
# irrep sets


class IrrepSet:
    """Finite set of irreducible characters of one group.

    Attributes
    ----------
    labels : list
        U(1): int n; SU(2): int k = 2j; SU(3): tuple (p, q).
    dims : ndarray of int
        Weyl dimensions.
    casimirs : ndarray of float
        Eigenvalues of -Laplacian on each character, derived numerically.
    """

    def __init__(self, group: CompactGroup, cutoff: int | None = None):
        self.group = group
        self.cutoff = DEFAULT_CUTOFF[group.name] if cutoff is None else int(cutoff)
        if group.name == "U1":
            self.labels = list(range(-self.cutoff, self.cutoff + 1))
            self.dims = np.ones(len(self.labels), dtype=np.int64)
        elif group.name == "SU2":
            self.labels = list(range(self.cutoff + 1))
            self.dims = np.asarray(self.labels, dtype=np.int64) + 1
        elif group.name == "SU3":
            self.labels = [(p, s - p) for s in range(self.cutoff + 1) for p in range(s + 1)]
            self.dims = np.array(
                [(p + 1) * (q + 1) * (p + q + 2) // 2 for p, q in self.labels],
                dtype=np.int64)
        else:  # pragma: no cover
            raise ValueError(group.name)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self._casimirs = None
        self._char_cache = {}

    def __len__(self):
        return len(self.labels)

    @property
    def trivial_index(self) -> int:
        return self.index[0 if self.group.name != "SU3" else (0, 0)]

    def characters(self, angles) -> np.ndarray:
        """chi_lambda at conjugacy angles; shape (n_irreps, n_points)."""
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        if self.group.name == "U1":
            return _u1_characters(self.labels, angles)
        if self.group.name == "SU2":
            return _su2_characters(self.labels, angles)
        return _su3_characters(self.labels, angles)

    def character_table(self, M: int) -> np.ndarray:
        """Characters on the M-point Weyl quadrature grid (cached)."""
        if M not in self._char_cache:
            quad = weyl_quadrature(self.group, M)
            self._char_cache[M] = self.characters(quad.nodes)
        return self._char_cache[M]

    @property
    def casimirs(self) -> np.ndarray:
        if self._casimirs is None:
            self._casimirs = _fd_casimirs(self.group, self)
        return self._casimirs


def _fd_casimirs(group, irreps, h0=_FD_STENCIL_H):
    """Casimir of each irrep from Delta chi = -c2 chi at a generic point.

    Central second differences along every orthonormal basis direction,
    Richardson-extrapolated through three levels (h, h/2, h/4)."""
    if group.name == "U1":
        base_angles = [np.array([0.7]), np.array([1.3])]
    elif group.name == "SU2":
        base_angles = [np.array([0.9]), np.array([1.7])]
    else:
        base_angles = [np.array([0.9, 0.37]), np.array([1.9, 0.83])]

    steps = [h0, h0 / 2, h0 / 4]
    estimates, conditioning = [], []
    for angles0 in base_angles:
        x0 = group.angles_to_element(angles0)
        chi0 = irreps.characters(angles0[None, :])[:, 0]
        lap = np.zeros(len(irreps), dtype=complex)
        for a in range(group.dim):
            d2 = []
            for h in steps:
                probe = []
                for s in (+1.0, -1.0):
                    step = np.zeros(group.dim)
                    step[a] = s * h
                    if group.name == "U1":
                        g = group.multiply(x0, group.exp(step))
                        probe.append(np.array([g]))
                    else:
                        g = x0 @ group.exp(step)
                        probe.append(group.conjugacy_angles(g))
                ang = np.stack(probe)
                chi_pm = irreps.characters(ang)
                d2.append((chi_pm[:, 0] + chi_pm[:, 1] - 2.0 * chi0) / h ** 2)
            r1a = (4.0 * d2[1] - d2[0]) / 3.0
            r1b = (4.0 * d2[2] - d2[1]) / 3.0
            lap += (16.0 * r1b - r1a) / 15.0
        with np.errstate(invalid="ignore", divide="ignore"):
            estimates.append(-lap / chi0)
        conditioning.append(np.abs(chi0))
    # Per irrep, keep the estimate from the best-conditioned base point.
    estimates = np.stack(estimates)
    pick = np.argmax(np.stack(conditioning), axis=0)
    c2 = estimates[pick, np.arange(len(irreps))]
    if np.max(np.abs(c2.imag)) > 1e-6 * max(1.0, float(np.max(np.abs(c2.real)))):
        raise RuntimeError("Casimir stencil produced complex eigenvalues")
    out = c2.real.copy()
    out[irreps.trivial_index] = 0.0
    return out


_IRREPS_CACHE: dict = {}


def default_irreps(group, cutoff=None) -> IrrepSet:
    group = get_group(group) if isinstance(group, str) else group
    key = (group.name, cutoff)
    if key not in _IRREPS_CACHE:
        _IRREPS_CACHE[key] = IrrepSet(group, cutoff)
    return _IRREPS_CACHE[key]


# ---------------------------------------------------------------------------
# Weyl quadrature


@dataclass(frozen=True)
class WeylQuadrature:
    """Nodes (conjugacy angles) and weights integrating class functions
    against the normalised Haar measure: sum(weights) == 1."""
    nodes: np.ndarray     # (n_points, rank)
    weights: np.ndarray   # (n_points,)
    M: int


_QUAD_CACHE: dict = {}


def default_grid_size(group) -> int:
    return DEFAULT_GRID[group.name]


def weyl_quadrature(group: CompactGroup, M: int | None = None) -> WeylQuadrature:
    M = default_grid_size(group) if M is None else int(M)
    key = (group.name, M)
    if key in _QUAD_CACHE:
        return _QUAD_CACHE[key]
    if group.name == "U1":
        theta = -np.pi + (np.arange(M) + 0.5) * (2.0 * np.pi / M)
        quad = WeylQuadrature(theta[:, None], np.full(M, 1.0 / M), M)
    elif group.name == "SU2":
        x, w = np.polynomial.legendre.leggauss(M)
        alpha = (x + 1.0) * (np.pi / 2.0)
        weights = (np.pi / 2.0) * w * (2.0 / np.pi) * np.sin(alpha) ** 2
        quad = WeylQuadrature(alpha[:, None], weights, M)
    else:
        x, w = np.polynomial.legendre.leggauss(M)
        t = (x + 1.0) * np.pi
        wt = w * np.pi
        T1, T2 = np.meshgrid(t, t, indexing="ij")
        W = np.outer(wt, wt)
        z1, z2 = np.exp(1j * T1), np.exp(1j * T2)
        z3 = np.exp(-1j * (T1 + T2))
        vdm2 = np.abs((z1 - z2) * (z1 - z3) * (z2 - z3)) ** 2
        weights = (W * vdm2 / (6.0 * (2.0 * np.pi) ** 2)).ravel()
        nodes = np.stack([T1.ravel(), T2.ravel()], axis=1)
        quad = WeylQuadrature(nodes, weights, M)
    _QUAD_CACHE[key] = quad
    return quad


# ---------------------------------------------------------------------------
# class functions


class ClassFunction:
    """Symmetric class function f = sum_lambda c_lambda chi_lambda with real
    coefficients c over a finite irrep set."""

    __slots__ = ("group", "irreps", "coeffs", "quad_error", "_grid_cache")

    def __init__(self, group, irreps: IrrepSet, coeffs, quad_error=0.0):
        self.group = group
        self.irreps = irreps
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (len(irreps),):
            raise ValueError("coefficient table does not match the irrep set")
        self.quad_error = float(quad_error)
        self._grid_cache = {}

    @property
    def trivial_coefficient(self) -> float:
        return float(self.coeffs[self.irreps.trivial_index])

    def grid_values(self, M: int | None = None) -> np.ndarray:
        """Values on the M-point Weyl grid (cached); real by construction."""
        M = default_grid_size(self.group) if M is None else int(M)
        if M not in self._grid_cache:
            table = self.irreps.character_table(M)
            self._grid_cache[M] = np.real(self.coeffs @ table)
        return self._grid_cache[M]

    def value_at_angles(self, angles) -> np.ndarray:
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        return np.real(self.coeffs @ self.irreps.characters(angles))

    def value_at(self, element) -> float:
        ang = self.group.conjugacy_angles(element)
        return float(self.value_at_angles(ang[None, :])[0])

    def at_identity(self) -> float:
        """f(1) = sum_lambda c_lambda d_lambda, exactly from coefficients."""
        return float(self.coeffs @ self.irreps.dims)

    def __repr__(self):
        nz = int(np.count_nonzero(self.coeffs))
        return f"<ClassFunction {self.group.name} {nz}/{len(self.coeffs)} coeffs>"


def _compat(f: ClassFunction, g: ClassFunction):
    if f.group is not g.group or f.irreps is not g.irreps:
        raise ValueError("class functions live on different groups or irrep sets")


def project(f, group, irreps: IrrepSet | None = None, M: int | None = None,
            tol: float | None = None) -> ClassFunction:
    """Project a pointwise class function onto the character basis.

    Parameters
    ----------
    f : callable or ndarray
        Either ``f(angles) -> values`` (vectorised over an (n, rank) angle
        array, may return complex) or precomputed values on the M-grid.
    tol : float, optional
        When given, raise :class:`QuadratureUnconvergedError` if doubling the
        grid (from M/2 to M) moves any coefficient by more than ``tol``.

    The attached ``quad_error`` is the largest such coefficient movement.
    """
    group = get_group(group) if isinstance(group, str) else group
    irreps = default_irreps(group) if irreps is None else irreps
    M = default_grid_size(group) if M is None else int(M)

    def coeffs_on(m):
        quad = weyl_quadrature(group, m)
        vals = f(quad.nodes) if callable(f) else np.asarray(f)
        if vals.shape != (quad.weights.size,):
            raise ValueError("grid values do not match the quadrature")
        table = irreps.character_table(m)
        return table.conj() @ (quad.weights * vals)

    fine = coeffs_on(M)
    coarse = coeffs_on(M // 2)
    err = float(np.max(np.abs(fine - coarse)))
    if tol is not None and err > tol:
        raise QuadratureUnconvergedError(
            f"coefficient moved by {err:.3e} > tol {tol:.3e} under grid doubling")
    scale = max(1.0, float(np.max(np.abs(fine))))
    if np.max(np.abs(fine.imag)) > 1e-10 * scale:
        raise ValueError("projection produced non-real coefficients; "
                         "the input is not a symmetric class function")
    return ClassFunction(group, irreps, fine.real, quad_error=err)


def convolve(f: ClassFunction, g: ClassFunction) -> ClassFunction:
    _compat(f, g)
    coeffs = f.coeffs * g.coeffs / f.irreps.dims
    return ClassFunction(f.group, f.irreps, coeffs,
                         quad_error=max(f.quad_error, g.quad_error))


def convolve_power(p: ClassFunction, k: int) -> ClassFunction:
    """k-fold convolution power, diagonal in the character basis."""
    if k < 1:
        raise ValueError("convolution power needs k >= 1")
    d = p.irreps.dims.astype(float)
    ratio = p.coeffs / d
    bad = np.abs(ratio) > 1.0 + 1e-9
    if np.any(bad):
        labs = [p.irreps.labels[i] for i in np.nonzero(bad)[0][:5]]
        raise NonMarkovError(
            f"|coefficient| exceeds the dimension at {labs}; not a density")
    coeffs = d * ratio ** k
    return ClassFunction(p.group, p.irreps, coeffs, quad_error=p.quad_error)


def normalize(f: ClassFunction) -> ClassFunction:
    z = f.trivial_coefficient
    if z <= 0.0:
        raise ValueError("cannot normalise: integral (trivial coefficient) <= 0")
    return ClassFunction(f.group, f.irreps, f.coeffs / z, quad_error=f.quad_error / z)


def sup_distance(f: ClassFunction, g: ClassFunction, M: int | None = None) -> float:
    _compat(f, g)
    return float(np.max(np.abs(f.grid_values(M) - g.grid_values(M))))


def tv_distance(f: ClassFunction, g: ClassFunction, M: int | None = None) -> float:
    """(1/2) integral |f - g| over the group, by Weyl quadrature."""
    _compat(f, g)
    M = default_grid_size(f.group) if M is None else int(M)
    quad = weyl_quadrature(f.group, M)
    return 0.5 * float(quad.weights @ np.abs(f.grid_values(M) - g.grid_values(M)))


# ---------------------------------------------------------------------------
# ball-gradient functionals (scale-normalised variant)


@dataclass(frozen=True)
class SupGradResult:
    value: float            # lower bound on the sup, from the finer grid
    refinement_delta: float  # change under grid doubling


def _ball_probes(group, eps, trials, rng):
    """Deterministic boundary probes along +-T^a plus random ball points."""
    r = eps * (1.0 - 1e-9)
    probes = []
    for a in range(group.dim):
        step = np.zeros(group.dim)
        step[a] = r
        probes.append(group.exp(step))
        probes.append(group.exp(-step))
    if rng is not None:
        probes.extend(group.ball(eps, rng) for _ in range(trials))
    return probes


def grad_eps(q: ClassFunction, eps: float, x, trials: int = 64, rng=None) -> float:
    """eps^{-1} sup_{y in B_eps} |q(x) - q(xy)|, estimated from below.

    The supremum is probed with 2*dim deterministic boundary points along the
    basis directions plus ``trials`` Haar-in-ball samples; the result is a
    lower bound, nondecreasing in ``trials``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    group = q.group
    qx = q.value_at(x)
    best = 0.0
    for y in _ball_probes(group, eps, trials, rng):
        v = q.value_at(group.multiply(x, y))
        best = max(best, abs(qx - v))
    return best / eps


def _angle_grid(group, size):
    if group.name == "U1":
        th = -np.pi + (np.arange(size) + 0.5) * (2.0 * np.pi / size)
        return th[:, None]
    if group.name == "SU2":
        a = (np.arange(size) + 0.5) * (np.pi / size)
        return a[:, None]
    t = -np.pi + (np.arange(size) + 0.5) * (2.0 * np.pi / size)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    return np.stack([T1.ravel(), T2.ravel()], axis=1)


_SUP_GRID = {"U1": 256, "SU2": 128, "SU3": 24}


def sup_grad_eps(q: ClassFunction, eps: float, grid: int | None = None,
                 trials: int = 64, seed: int = 7) -> SupGradResult:
    """max_x grad_eps(q, eps, x) over a conjugacy-angle grid, with a
    grid-doubling consistency check.  Lower-bound semantics throughout."""
    group = q.group
    base = _SUP_GRID[group.name] if grid is None else int(grid)

    def sup_on(size, rng):
        ys = _ball_probes(group, eps, trials, rng)
        if group.name == "U1":
            ys_ang = np.array([[y] for y in ys])
        else:
            ys_mat = np.stack(ys)
        best = 0.0
        for ang in _angle_grid(group, size):
            x = group.angles_to_element(ang)
            qx = q.value_at_angles(ang[None, :])[0]
            if group.name == "U1":
                pts = (x + ys_ang)
                vals = q.value_at_angles(np.mod(pts + np.pi, 2 * np.pi) - np.pi)
            else:
                prod = x[None, :, :] @ ys_mat
                angs = _batch_conj_angles(group, prod)
                vals = q.value_at_angles(angs)
            best = max(best, float(np.max(np.abs(qx - vals))))
        return best / eps

    v1 = sup_on(base, np.random.default_rng(seed))
    v2 = sup_on(2 * base, np.random.default_rng(seed))
    return SupGradResult(value=max(v1, v2), refinement_delta=abs(v2 - v1))


def _batch_conj_angles(group, mats):
    """Conjugacy angles for a stack of SU(n) matrices."""
    if group.name == "SU2":
        tr = np.einsum("kii->k", mats)
        alpha = np.arccos(np.clip(0.5 * tr.real, -1.0, 1.0))
        return alpha[:, None]
    w = np.linalg.eigvals(mats)
    ang = np.sort(np.angle(w), axis=1)[:, ::-1]
    return ang[:, :2]


# ---------------------------------------------------------------------------
# serialization: CSV with header  lambda,dim,casimir,coeff


def _label_str(group, lab):
    if group.name == "SU3":
        return f"{lab[0]}:{lab[1]}"
    if group.name == "SU2":
        j = lab / 2.0
        return f"{j:g}"
    return str(lab)


def _label_parse(group, s):
    if group.name == "SU3":
        p, q = s.split(":")
        return (int(p), int(q))
    if group.name == "SU2":
        return int(round(2 * float(s)))
    return int(s)


def write_csv(cf: ClassFunction, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "dim", "casimir", "coeff"])
        cas = cf.irreps.casimirs
        for i, lab in enumerate(cf.irreps.labels):
            w.writerow([_label_str(cf.group, lab), int(cf.irreps.dims[i]),
                        f"{cas[i]:.12g}", f"{cf.coeffs[i]:.17g}"])


def read_csv(group, path, irreps: IrrepSet | None = None) -> ClassFunction:
    group = get_group(group) if isinstance(group, str) else group
    irreps = default_irreps(group) if irreps is None else irreps
    coeffs = np.zeros(len(irreps))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            lab = _label_parse(group, row["lambda"])
            coeffs[irreps.index[lab]] = float(row["coeff"])
    return ClassFunction(group, irreps, coeffs)
