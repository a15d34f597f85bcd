"""Moment conditions and gradient bounds for the refinement random walks.

Two families of checks:

* Central-limit moments.  For the single-power family P_N = kind at coupling
  N beta, the odd coordinate map xi (minimal log) must satisfy N E[xi] -> 0
  and N E[xi xi^T] -> A = beta^{-1} I.  On U(1) the moments are quadrature
  integrals; on SU(n) they are estimated by exact rejection sampling with
  algebra-Gaussian proposals (Haar proposals at small coupling).

* Transition-function machinery on a ball Omega = B_eps: the word metric
  rho_word(x) = min{n >= 1 : x in Omega^n} (equal to floor(rho/eps) + 1 for
  geodesic balls), the functionals

      grad f(x)   = sup_{y in Omega}  |f(x) - f(xy)|
      grad2 f(x)  = ( int_{Omega^2} |f(x) - f(xy)|^2 dy )^{1/2}

  (no eps^{-1} prefactor, unlike the refinement gradient in classfun), the
  weak-Harnack inequalities on convolution powers, and the 2^{-m/2} scaling
  of ||grad p^{(2^m)}||_inf.

Sup-type quantities are grid/probe lower bounds with doubling certificates;
a reported violation beyond tolerance is therefore a genuine red flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import action_values, density
from .classfun import (ClassFunction, convolve_power, sup_grad_eps,
                       weyl_quadrature)
from .groups import get_group

__all__ = [
    "MomentReport", "moment_check",
    "word_rho", "ball_volume", "ball_quadrature",
    "grad_sup", "grad2_at", "grad2_l2",
    "HarnackReport", "weak_harnack_check",
    "ScalingReport", "gradient_scaling_check",
    "RejectionError",
]


class RejectionError(RuntimeError):
    """Rejection sampling acceptance collapsed; diagnostics in args."""


# ---------------------------------------------------------------------------
# moment conditions


@dataclass
class MomentReport:
    N: int
    nb: np.ndarray          # N * E[xi]
    nb_err: np.ndarray
    na: np.ndarray          # N * E[xi xi^T]
    na_err: np.ndarray
    samples: int
    acceptance: float
    method: str


def moment_check(kind, beta, group, N_values, samples=200_000, seed=0,
                 method="auto"):
    """Moment reports for P_N = kind_{N beta} across ``N_values``.

    method: "quadrature" (U(1) only), "mc", or "auto" (quadrature on U(1),
    rejection MC otherwise).  MC errors come from 8 independent replicas.
    """
    group = get_group(group) if isinstance(group, str) else group
    if method == "auto":
        method = "quadrature" if group.name == "U1" else "mc"
    out = []
    for N in N_values:
        if method == "quadrature":
            if group.name != "U1":
                raise ValueError("quadrature moments implemented for U(1) only")
            out.append(_moments_u1_quadrature(kind, beta, N))
        else:
            out.append(_moments_mc(kind, beta, group, N, samples, seed))
    return out


def _moments_u1_quadrature(kind, beta, N, M=1 << 16):
    th = -np.pi + (np.arange(M) + 0.5) * (2.0 * np.pi / M)
    S = action_values(kind, beta * N, "U1", th[:, None])
    w = np.exp(-(S - S.min()))
    w /= w.sum()
    b = float(np.sum(w * th))
    a = float(np.sum(w * th * th))
    return MomentReport(N=N, nb=np.array([N * b]), nb_err=np.array([0.0]),
                        na=np.array([[N * a]]), na_err=np.array([[0.0]]),
                        samples=M, acceptance=1.0, method="quadrature")


def _proposal_sigma2(kind, beta_N, group):
    # Curvature-matched algebra-Gaussian scales making the rejection ratio
    # bounded: Wilson needs the quadratic lower bound 1 - cos t >= 2 t^2/pi^2.
    if kind == "wilson":
        return np.pi ** 2 / (4.0 * beta_N)
    if kind == "manton":
        return 1.0 / (2.0 * beta_N)
    return 1.3 / beta_N


def _log_target_from_radial(kind, beta_N, group, angles):
    return -action_values(kind, beta_N, group, angles)


def _su_envelope(kind, beta_N, group, sigma2):
    """Grid bound for  exp(-S(e^X)) J(X) / exp(-|X|^2 / (2 sigma2))  on the
    minimal-log domain.  Radial in |X| for SU(2); 2-d angle grid for SU(3)."""
    if group.name == "SU2":
        r = np.linspace(1e-6, np.pi * np.sqrt(2.0) - 1e-9, 4096)
        alpha = r / np.sqrt(2.0)
        logt = _log_target_from_radial(kind, beta_N, group, alpha[:, None])
        logj = 2.0 * np.log(np.abs(np.sinc(alpha / np.pi)) + 1e-300)
        ratio = logt + logj + r * r / (2.0 * sigma2)
        return float(ratio.max())
    # SU(3): eigenangles phi of -iX with phi1 + phi2 + phi3 = 0
    t = np.linspace(-np.pi, np.pi, 256)
    P1, P2 = np.meshgrid(t, t, indexing="ij")
    P3 = -(P1 + P2)
    ok = np.abs(P3) <= np.pi
    phis = np.stack([P1[ok], P2[ok], P3[ok]], axis=1)
    r2 = (phis ** 2).sum(axis=1)
    conj = np.stack([phis[:, 0], phis[:, 1]], axis=1)
    logt = _log_target_from_radial(kind, beta_N, group, conj)
    logj = np.zeros(len(phis))
    for a in range(3):
        for b in range(a + 1, 3):
            logj += 2.0 * np.log(
                np.abs(np.sinc((phis[:, a] - phis[:, b]) / (2.0 * np.pi))) + 1e-300)
    ratio = logt + logj + r2 / (2.0 * sigma2)
    return float(ratio.max())


def _moments_mc(kind, beta, group, N, samples, seed, replicas=8):
    """Exact rejection sampling of P_N through the exponential chart.

    Proposals are algebra Gaussians truncated to the minimal-log domain,
    accepted against the pointwise density times the exp-map Jacobian.  On
    SU(3) the domain is restricted to |X| < pi (mass outside is exponentially
    negligible for the families considered).
    """
    beta_N = beta * N
    if group.name == "U1":
        raise ValueError("use the quadrature path for U(1)")
    D = group.dim
    sigma2 = _proposal_sigma2(kind, beta_N, group)
    log_env = _su_envelope(kind, beta_N, group, sigma2) + np.log(1.05)
    rng = np.random.default_rng(seed)
    per = samples // replicas
    nb_reps, na_reps, acc_all = [], [], []
    for _ in range(replicas):
        xs = _rejection_batch(kind, beta_N, group, sigma2, log_env, per, rng,
                              acc_all)
        nb_reps.append(N * xs.mean(axis=0))
        na_reps.append(N * (xs[:, :, None] * xs[:, None, :]).mean(axis=0))
    nb = np.mean(nb_reps, axis=0)
    na = np.mean(na_reps, axis=0)
    nb_err = np.std(nb_reps, axis=0, ddof=1) / np.sqrt(replicas)
    na_err = np.std(na_reps, axis=0, ddof=1) / np.sqrt(replicas)
    return MomentReport(N=N, nb=nb, nb_err=nb_err, na=na, na_err=na_err,
                        samples=per * replicas,
                        acceptance=float(np.mean(acc_all)), method="mc")


def _rejection_batch(kind, beta_N, group, sigma2, log_env, n_keep, rng, acc_log):
    out = np.empty((n_keep, group.dim))
    got = 0
    tried = 0
    sigma = np.sqrt(sigma2)
    rmax = np.pi * np.sqrt(2.0) if group.name == "SU2" else np.pi
    while got < n_keep:
        m = max(4096, 2 * (n_keep - got))
        X = rng.normal(scale=sigma, size=(m, group.dim))
        tried += m
        r = np.linalg.norm(X, axis=1)
        ok = r < rmax
        X, r = X[ok], r[ok]
        if group.name == "SU2":
            alpha = r / np.sqrt(2.0)
            logt = _log_target_from_radial(kind, beta_N, group, alpha[:, None])
            logj = 2.0 * np.log(np.abs(np.sinc(alpha / np.pi)) + 1e-300)
        else:
            phis = _su3_algebra_angles(group, X)
            conj = phis[:, :2]
            logt = _log_target_from_radial(kind, beta_N, group, conj)
            logj = np.zeros(len(X))
            for a in range(3):
                for b in range(a + 1, 3):
                    logj += 2.0 * np.log(np.abs(
                        np.sinc((phis[:, a] - phis[:, b]) / (2.0 * np.pi))) + 1e-300)
        logr = logt + logj + r * r / (2.0 * sigma2) - log_env
        if np.any(logr > 1e-9):
            raise RejectionError(
                f"envelope violated by exp({logr.max():.3e}); grid bound too tight")
        keep = np.log(rng.random(len(X))) < logr
        kept = X[keep]
        take = min(len(kept), n_keep - got)
        out[got:got + take] = kept[:take]
        got += take
        if tried > 1000 and got / tried < 1e-4:
            raise RejectionError(
                f"acceptance {got / tried:.2e} < 1e-4 (kind={kind}, "
                f"beta_N={beta_N}, group={group.name})")
    acc_log.append(got / tried)
    return out


def _su3_algebra_angles(group, X):
    """Eigenangles of -iX for algebra coordinate rows X."""
    mats = np.tensordot(X, group.basis, axes=(1, 0))
    H = -1j * mats
    return np.linalg.eigvalsh(H)


# ---------------------------------------------------------------------------
# word metric and ball geometry


def word_rho(group, eps, angles):
    """rho_word = min{n >= 1 : x in B_eps^n} = floor(rho_geo / eps) + 1 for
    open geodesic balls (off the measure-zero lattice rho_geo in eps Z it
    coincides with ceil(rho_geo / eps))."""
    group = get_group(group) if isinstance(group, str) else group
    rho = group.distance_from_angles(np.atleast_2d(np.asarray(angles, dtype=float)))
    return np.floor(rho / eps).astype(np.int64) + 1


def ball_volume(group, eps, M=4096) -> float:
    """Haar volume of the geodesic eps-ball, by Weyl quadrature."""
    group = get_group(group) if isinstance(group, str) else group
    quad = weyl_quadrature(group, M if group.name != "SU3" else 256)
    rho = group.distance_from_angles(quad.nodes)
    return float(quad.weights[rho < eps].sum())


def ball_quadrature(group, radius, n_radial=24, n_sphere=16, rng=None,
                    n_samples=20_000):
    """Nodes and weights integrating int_{B_radius} f(y) dy (normalised Haar).

    U(1) and SU(2): deterministic product rules through the exponential chart
    (Gauss-Legendre radial x sphere, weighted by the exp-map Jacobian).
    SU(3): Monte Carlo (Haar-in-ball samples scaled by the ball volume).
    """
    group = get_group(group) if isinstance(group, str) else group
    if group.name == "U1":
        x, w = np.polynomial.legendre.leggauss(2 * n_radial)
        th = x * radius
        return [float(t) for t in th], w * radius / (2.0 * np.pi)
    if group.name == "SU2":
        x, w = np.polynomial.legendre.leggauss(n_radial)
        r = (x + 1.0) * (radius / 2.0)
        wr = w * (radius / 2.0)
        xc, wc = np.polynomial.legendre.leggauss(n_sphere)
        phi = (np.arange(2 * n_sphere) + 0.5) * (np.pi / n_sphere)
        wphi = np.full(2 * n_sphere, np.pi / n_sphere)
        # Lebesgue on the algebra in spherical coordinates times J, over the
        # Haar normaliser V = 4 sqrt(2) pi^2.
        V = 4.0 * np.sqrt(2.0) * np.pi ** 2
        nodes, weights = [], []
        for i, ri in enumerate(r):
            alpha = ri / np.sqrt(2.0)
            Ji = np.sinc(alpha / np.pi) ** 2
            for j, cj in enumerate(xc):
                sj = np.sqrt(1.0 - cj ** 2)
                for k, fk in enumerate(phi):
                    v = ri / np.sqrt(2.0) * np.array(
                        [sj * np.cos(fk), sj * np.sin(fk), cj])
                    a0, s = np.cos(alpha), np.sin(alpha)
                    n_hat = v / alpha if alpha > 0 else np.array([0.0, 0.0, 1.0])
                    mat = np.array([
                        [a0 + 1j * s * n_hat[2], s * (n_hat[1] + 1j * n_hat[0])],
                        [s * (-n_hat[1] + 1j * n_hat[0]), a0 - 1j * s * n_hat[2]],
                    ])
                    nodes.append(mat)
                    weights.append(ri ** 2 * Ji * wr[i] * wc[j] * wphi[k] / V)
        return nodes, np.array(weights)
    # SU(3): Haar-conditioned samples times the ball volume
    rng = np.random.default_rng(11) if rng is None else rng
    vol = ball_volume(group, radius)
    nodes = [group.ball(radius, rng) for _ in range(n_samples)]
    return nodes, np.full(n_samples, vol / n_samples)


# ---------------------------------------------------------------------------
# gradient functionals (section-5 normalisation: no eps^{-1})


def grad_sup(p: ClassFunction, eps, grid=None, trials=64, seed=7):
    """||grad p||_inf = sup_x sup_{y in B_eps} |p(x) - p(xy)| (lower bound
    with a grid-doubling certificate)."""
    res = sup_grad_eps(p, eps, grid=grid, trials=trials, seed=seed)
    return eps * res.value, eps * res.refinement_delta


def grad2_at(p: ClassFunction, eps, x, _cache=None):
    """grad2 p(x) over Omega^2 = B_{2 eps} by ball quadrature."""
    g = p.group
    if _cache is None:
        nodes, weights = ball_quadrature(g, 2.0 * eps)
    else:
        nodes, weights = _cache
    px = p.value_at(x)
    if g.name == "U1":
        angs = np.asarray([[g.multiply(x, y)] for y in nodes])
        vals = p.value_at_angles(angs)
    else:
        stack = np.stack([x @ y for y in nodes])
        if g.name == "SU2":
            tr = np.einsum("kii->k", stack)
            angs = np.arccos(np.clip(0.5 * tr.real, -1, 1))[:, None]
        else:
            w = np.linalg.eigvals(stack)
            angs = np.sort(np.angle(w), axis=1)[:, ::-1][:, :2]
        vals = p.value_at_angles(angs)
    return float(np.sqrt(np.sum(weights * (px - vals) ** 2)))


def grad2_l2(p: ClassFunction, eps, M=None) -> float:
    """|| grad2 p ||_{L^2(G)}; x -> grad2 p(x) is a class function, so the
    outer integral is Weyl quadrature over a conjugacy grid."""
    g = p.group
    quad = weyl_quadrature(g, M if M is not None else (64 if g.name != "U1" else 512))
    cache = ball_quadrature(g, 2.0 * eps)
    vals = np.array([grad2_at(p, eps, g.angles_to_element(a), _cache=cache) ** 2
                     for a in quad.nodes])
    return float(np.sqrt(quad.weights @ vals))


# ---------------------------------------------------------------------------
# weak Harnack inequalities


@dataclass
class HarnackReport:
    status: str                  # "PASS" | "FAIL" | "NOT_APPLICABLE"
    c0: float
    ball: float                  # |Omega|
    B: float
    sup_lhs: float
    sup_rhs: float
    sup_margin: float
    pointwise_worst_margin: float

    @property
    def passed(self):
        return self.status == "PASS"


def _inf_on_ball(p: ClassFunction, radius, n=4096):
    """inf over the closed ball of a class function, on a radial angle grid."""
    g = p.group
    if g.name == "U1":
        th = np.linspace(-min(radius, np.pi), min(radius, np.pi), n)
        return float(p.value_at_angles(th[:, None]).min())
    if g.name == "SU2":
        a = np.linspace(0.0, min(radius / np.sqrt(2.0), np.pi), n)
        return float(p.value_at_angles(a[:, None]).min())
    t = np.linspace(-radius, radius, 96)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    angs = np.stack([T1.ravel(), T2.ravel()], axis=1)
    rho = g.distance_from_angles(angs)
    mask = rho <= radius
    return float(p.value_at_angles(angs[mask]).min())


def weak_harnack_check(p: ClassFunction, eps, n, m, grid=None,
                       trials=64) -> HarnackReport:
    """Check, on certified grids, the convolution-power gradient bounds

        ||grad p^{(2n+m)}||_inf <= 2 (m B)^{-1/2} p^{(2n)}(1)
        |p^{(2n+m)}(x) - p^{(2n+m)}(1)| <= 2 (m B)^{-1/2} rho_word(x) p^{(2n)}(1)

    with B = |Omega| inf_{Omega^2} p^{(2)}.  Left sides are lower-bound
    estimates, so negative margins flag genuine violations.  Returns
    NOT_APPLICABLE when inf_{Omega^2} p^{(2)} <= 0 on the grid.
    """
    g = p.group
    p2 = convolve_power(p, 2)
    c0 = _inf_on_ball(p2, 2.0 * eps)
    vol = ball_volume(g, eps)
    if c0 <= 1e-12:
        return HarnackReport("NOT_APPLICABLE", c0, vol, 0.0, 0.0, 0.0, 0.0, 0.0)
    B = c0 * vol
    bound = 2.0 / np.sqrt(m * B)
    p_2n = convolve_power(p, 2 * n)
    p_big = convolve_power(p, 2 * n + m)
    at1 = p_2n.at_identity()

    lhs, _ = grad_sup(p_big, eps, grid=grid, trials=trials)
    rhs = bound * at1
    sup_margin = rhs - lhs

    from .classfun import _angle_grid  # shared conjugacy grids
    angs = _angle_grid(g, 256 if g.name != "SU3" else 24)
    vals = p_big.value_at_angles(angs)
    big1 = p_big.at_identity()
    rho_w = word_rho(g, eps, angs)
    pw_margin = float(np.min(bound * rho_w * at1 - np.abs(vals - big1)))

    ok = sup_margin >= 0 and pw_margin >= 0
    return HarnackReport("PASS" if ok else "FAIL", c0, vol, B,
                         lhs, rhs, float(sup_margin), pw_margin)


# ---------------------------------------------------------------------------
# gradient scaling across the refinement family


@dataclass
class ScalingReport:
    group: str
    kind: str
    beta: float
    hypothesis_ratios: dict = field(default_factory=dict)
    # (N, m) -> measured ||grad p^{(2^m)}||_inf
    grad_norms: dict = field(default_factory=dict)
    # (N, m) -> measured / bound-shape value
    constants: dict = field(default_factory=dict)
    fitted_constant: float = 0.0
    crossovers: dict = field(default_factory=dict)       # N -> (measured, predicted)
    uniform_grad_seq: dict = field(default_factory=dict)  # N -> sup grad of p_N^{*N^2}

    @property
    def constant_spread(self):
        vals = [max(v for (n2, m2), v in self.constants.items() if n2 == N)
                for N in {k[0] for k in self.constants}]
        return max(vals) / max(min(vals), 1e-300)


def gradient_scaling_check(kind, beta, group, N_values, m_values,
                           grid=None, trials=48) -> ScalingReport:
    """Measure ||grad p_N^{(2^m)}||_inf against C 2^{-m/2} max(1, 2^{-Dm/2} eps^{-D})
    with eps = 1/N, p_N = kind_{N^2 beta}; fit the single constant C as the
    max ratio, report per-N spreads, the regime crossover in m, the
    hypothesis ratios, and the uniformity of sup-grad over p_N^{*N^2}.
    """
    group = get_group(group) if isinstance(group, str) else group
    D = group.dim
    rep = ScalingReport(group.name, kind, beta)
    for N in N_values:
        eps = 1.0 / N
        p = density(kind, beta * N * N, group)
        p2 = convolve_power(p, 2)
        c0 = _inf_on_ball(p2, 2.0 * eps)
        at1 = p2.at_identity()
        rep.hypothesis_ratios[N] = {
            "p2_at_1_times_epsD": at1 * eps ** D,
            "inf_over_p2_at_1": c0 / at1 if at1 > 0 else np.nan,
        }
        h = []
        for m in m_values:
            pk = convolve_power(p, 2 ** m)
            val, _ = grad_sup(pk, eps, grid=grid, trials=trials)
            shape = 2.0 ** (-m / 2.0) * max(1.0, 2.0 ** (-D * m / 2.0) * eps ** (-D))
            rep.grad_norms[(N, m)] = val
            rep.constants[(N, m)] = val / shape
            h.append((m, val * 2.0 ** (m / 2.0)))
        # crossover: where val * 2^{m/2} flattens to its terminal plateau
        plateau = h[-1][1]
        measured = next((m for m, hv in h if hv <= 2.0 * plateau), h[-1][0])
        predicted = 2.0 * np.log2(N)
        rep.crossovers[N] = (measured, predicted)
        pN2 = convolve_power(p, N * N)
        val, _ = grad_sup(pN2, eps, grid=grid, trials=trials)
        rep.uniform_grad_seq[N] = val
    rep.fitted_constant = max(rep.constants.values())
    return rep
