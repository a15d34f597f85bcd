"""Plaquette actions: Wilson, Manton and Villain (heat-kernel) densities.

Each density is a normalised :class:`~carpetgauge.classfun.ClassFunction`
(integral one against the normalised Haar measure).  Normalisation constants
are never written in closed form; they come from the trivial character
coefficient.  The refinement family used throughout is p_N = kind at coupling
N^2 beta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classfun import (ClassFunction, IrrepSet, default_irreps, normalize,
                       project, weyl_quadrature, default_grid_size)
from .groups import get_group

__all__ = [
    "ActionSpec", "KINDS",
    "wilson_density", "manton_density", "villain_density", "density",
    "action_values", "refined",
    "check_assumption_b", "AssumptionReport", "AssumptionViolationError",
    "check_positive_definite", "PositiveDefiniteReport",
    "TruncationError",
]

KINDS = ("wilson", "manton", "villain")


class TruncationError(RuntimeError):
    """The irrep cutoff cannot represent the heat kernel to tolerance."""


class AssumptionViolationError(AssertionError):
    """A quadratic action bound failed on the certification grid."""

    def __init__(self, violations):
        self.violations = violations
        worst = min(violations, key=lambda v: v[2])
        super().__init__(
            f"{len(violations)} bound violations; worst margin {worst[2]:.3e} "
            f"at N={worst[0]}, angles={worst[1]}")


@dataclass(frozen=True)
class ActionSpec:
    kind: str
    beta: float
    group: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def refined(beta: float, N: int) -> float:
    """Coupling of the refinement family member p_N."""
    return beta * N * N


def _unnormalized_values(kind, beta, group):
    """Pointwise exp(-S) with S(1) = 0, as a function of conjugacy angles."""
    if kind == "wilson":
        n = group.matrix_size
        return lambda ang: np.exp(-beta * (n - group.re_trace_from_angles(ang)))
    if kind == "manton":
        return lambda ang: np.exp(-beta * group.distance_from_angles(ang) ** 2)
    raise ValueError(kind)


def wilson_density(beta, group, irreps=None, M=None) -> ClassFunction:
    """exp(-beta Re Tr(1 - x)) / Z, projected and normalised."""
    group = get_group(group) if isinstance(group, str) else group
    cf = project(_unnormalized_values("wilson", beta, group), group,
                 irreps=irreps, M=M)
    return normalize(cf)


def manton_density(beta, group, irreps=None, M=None) -> ClassFunction:
    """exp(-beta rho(x, 1)^2) / Z with geodesic distance rho."""
    group = get_group(group) if isinstance(group, str) else group
    cf = project(_unnormalized_values("manton", beta, group), group,
                 irreps=irreps, M=M)
    return normalize(cf)


def villain_density(beta, group, irreps=None, tail_tol=1e-9) -> ClassFunction:
    """Heat kernel e^{Delta / (2 beta)}: coefficients d_lambda e^{-c2/(2 beta)}.

    The trivial coefficient is one, so the density is normalised by
    construction.  Raises :class:`TruncationError` when the estimated sup-norm
    tail beyond the irrep cutoff exceeds ``tail_tol``.
    """
    group = get_group(group) if isinstance(group, str) else group
    irreps = default_irreps(group) if irreps is None else irreps
    if not beta > 0:
        raise ValueError("beta must be positive")
    coeffs = irreps.dims * np.exp(-irreps.casimirs / (2.0 * beta))
    tail = _villain_tail(group, irreps, beta)
    if tail > tail_tol:
        raise TruncationError(
            f"heat-kernel tail ~{tail:.3e} beyond cutoff {irreps.cutoff} at "
            f"beta={beta}; raise the cutoff")
    return ClassFunction(group, irreps, coeffs, quad_error=tail)


_TAIL_PAD = {"U1": 64, "SU2": 32, "SU3": 6}


def _villain_tail(group, irreps, beta):
    """Upper estimate of sum_{beyond cutoff} d^2 e^{-c2/(2 beta)}: a few
    explicit shells plus a geometric remainder."""
    pad = _TAIL_PAD[group.name]
    ext = default_irreps(group, irreps.cutoff + pad)
    shell_of = (lambda lab: abs(lab)) if group.name == "U1" else (
        (lambda lab: lab) if group.name == "SU2" else (lambda lab: lab[0] + lab[1]))
    shells = np.array([shell_of(lab) for lab in ext.labels])
    terms = ext.dims.astype(float) ** 2 * np.exp(-ext.casimirs / (2.0 * beta))
    sums = np.array([terms[shells == s].sum()
                     for s in range(irreps.cutoff + 1, irreps.cutoff + pad + 1)])
    total = float(sums.sum())
    if len(sums) >= 2 and sums[-2] > 0:
        r = sums[-1] / sums[-2]
        if r < 0.9:
            total += float(sums[-1] * r / (1.0 - r))
        else:
            total = np.inf
    return total


def density(kind, beta, group, irreps=None, M=None) -> ClassFunction:
    if kind == "wilson":
        return wilson_density(beta, group, irreps=irreps, M=M)
    if kind == "manton":
        return manton_density(beta, group, irreps=irreps, M=M)
    if kind == "villain":
        return villain_density(beta, group, irreps=irreps)
    raise ValueError(f"unknown action kind {kind!r}")


def action_values(kind, beta, group, angles, irreps=None):
    """S(x) on conjugacy angles, with the normalisation S(1) = 0."""
    group = get_group(group) if isinstance(group, str) else group
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    if kind in ("wilson", "manton"):
        u = _unnormalized_values(kind, beta, group)(angles)
        return -np.log(u)
    v = villain_density(beta, group, irreps=irreps)
    vals = v.value_at_angles(angles)
    v1 = v.at_identity()
    if np.any(vals <= 0):
        raise ValueError("heat-kernel values must be positive")
    return np.log(v1 / vals)


# ---------------------------------------------------------------------------
# Assumption checks: theta N^2 rho^2 <= S_N <= Theta N^2 rho^2 (upper on B_r)


@dataclass
class AssumptionReport:
    kind: str
    beta: float
    group: str
    r: float
    theta_low: float
    theta_high: float
    lower_margins: dict = field(default_factory=dict)   # N -> worst margin
    upper_margins: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        vals = list(self.lower_margins.values()) + list(self.upper_margins.values())
        return all(m >= 0 for m in vals)


def check_assumption_b(kind, beta, group, N_values, r, theta_low, theta_high,
                       grid=4096, raise_on_violation=True) -> AssumptionReport:
    """Certify the quadratic action bounds for p_N = kind_{N^2 beta} on a
    finite angle grid.

    The action is reconstructed from the unnormalised pointwise formula, so
    S_N(1) = 0 exactly.  The lower bound is required on the whole group, the
    upper bound on the geodesic ball of radius r/N.  Margins are reported as
    min(S_N - theta N^2 rho^2) and min(Theta N^2 rho^2 - S_N); a negative
    margin is a violation.  This is a finite-grid certificate, not a proof.
    """
    group = get_group(group) if isinstance(group, str) else group
    if not 0.0 < r < np.pi:
        raise ValueError("r must lie in (0, pi)")
    angles = _certification_grid(group, grid)
    rho = group.distance_from_angles(angles)
    report = AssumptionReport(kind, beta, group.name, r, theta_low, theta_high)
    violations = []
    for N in N_values:
        S = action_values(kind, refined(beta, N), group, angles)
        quad = N * N * rho ** 2
        lo = S - theta_low * quad
        mask = rho > 0
        report.lower_margins[N] = float(lo[mask].min()) if mask.any() else 0.0
        if report.lower_margins[N] < 0:
            i = int(np.argmin(np.where(mask, lo, np.inf)))
            violations.append((N, tuple(angles[i]), report.lower_margins[N]))
        ball = (rho < r / N) & mask
        if ball.any():
            hi = theta_high * quad[ball] - S[ball]
            report.upper_margins[N] = float(hi.min())
            if report.upper_margins[N] < 0:
                j = int(np.argmin(hi))
                i = int(np.nonzero(ball)[0][j])
                violations.append((N, tuple(angles[i]), report.upper_margins[N]))
        else:
            report.upper_margins[N] = 0.0
    if violations and raise_on_violation:
        raise AssumptionViolationError(violations)
    return report


def _certification_grid(group, grid):
    if group.name == "U1":
        th = -np.pi + (np.arange(grid) + 0.5) * (2.0 * np.pi / grid)
        return th[:, None]
    if group.name == "SU2":
        a = (np.arange(grid) + 0.5) * (np.pi / grid)
        return a[:, None]
    t = -np.pi + (np.arange(grid) + 0.5) * (2.0 * np.pi / grid)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    return np.stack([T1.ravel(), T2.ravel()], axis=1)


# ---------------------------------------------------------------------------
# positive definiteness of -log density (U(1) only)


@dataclass
class PositiveDefiniteReport:
    coefficients: dict          # k -> -U^(k), k >= 1
    positive_definite: bool
    worst_k: int
    worst_value: float


def check_positive_definite(f: ClassFunction, kmax=64, M=None,
                            tol=1e-8) -> PositiveDefiniteReport:
    """Fourier sign pattern of -U where f = exp(-U) on U(1).

    A nonnegative pattern {-U^(k)}_{k != 0} makes the interaction amenable to
    Ginibre-type correlation inequalities directly; a negative coefficient
    below -tol certifies that the interaction is not positive definite.
    """
    if f.group.name != "U1":
        raise ValueError("positive-definiteness check is for U(1) only")
    M = default_grid_size(f.group) if M is None else int(M)
    quad = weyl_quadrature(f.group, M)
    vals = f.grid_values(M)
    if np.any(vals <= 0):
        raise ValueError("density must be strictly positive on the grid")
    theta = quad.nodes[:, 0]
    logf = np.log(vals)
    coeffs = {}
    for k in range(1, kmax + 1):
        # -U = log f up to an additive constant, which k != 0 modes ignore.
        coeffs[k] = float(np.mean(logf * np.cos(k * theta)) * 2.0)
    worst_k = min(coeffs, key=coeffs.get)
    worst = coeffs[worst_k]
    return PositiveDefiniteReport(
        coefficients=coeffs,
        positive_definite=bool(worst >= -tol),
        worst_k=worst_k,
        worst_value=worst)
