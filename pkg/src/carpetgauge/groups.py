"""Compact structure groups U(1), SU(2), SU(3) and their Lie algebras.

Group elements are raw data: a float angle in (-pi, pi] for U(1), a complex
(n, n) unitary matrix with unit determinant for SU(n).  All geometry uses the
Ad-invariant inner product <X, Y> = -Tr(XY) on the algebra, for which the
bases below are orthonormal:

    U(1):  T   = i
    SU(2): T^a = i sigma_a / sqrt(2)       (Pauli)
    SU(3): T^a = i lambda_a / sqrt(2)      (Gell-Mann)

Conjugacy classes are parameterised by eigenvalue angles: theta in (-pi, pi]
for U(1), alpha in [0, pi] for SU(2) (eigenvalues e^{+-i alpha}), and a pair
(theta_1, theta_2) for SU(3) with theta_3 = -theta_1 - theta_2 implied.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "CompactGroup", "U1", "SU2", "SU3", "GROUPS", "get_group",
    "CutLocusError", "GroupMismatchError",
]


class CutLocusError(ValueError):
    """Logarithm requested at (or too close to) the cut locus."""


class GroupMismatchError(ValueError):
    """Operands belong to different groups."""


def _wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    t = np.mod(np.asarray(theta) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(t == -np.pi, np.pi, t)


# Pauli and Gell-Mann matrices.
_SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

_LAMBDA = np.zeros((8, 3, 3), dtype=complex)
_LAMBDA[0, 0, 1] = _LAMBDA[0, 1, 0] = 1
_LAMBDA[1, 0, 1] = -1j; _LAMBDA[1, 1, 0] = 1j
_LAMBDA[2, 0, 0] = 1; _LAMBDA[2, 1, 1] = -1
_LAMBDA[3, 0, 2] = _LAMBDA[3, 2, 0] = 1
_LAMBDA[4, 0, 2] = -1j; _LAMBDA[4, 2, 0] = 1j
_LAMBDA[5, 1, 2] = _LAMBDA[5, 2, 1] = 1
_LAMBDA[6, 1, 2] = -1j; _LAMBDA[6, 2, 1] = 1j
_LAMBDA[7] = np.diag([1, 1, -2]) / np.sqrt(3)

_CUT_TOL = 1e-10


class CompactGroup:
    """Base class; see :class:`_U1Group` and :class:`_SUGroup`."""

    name: str
    matrix_size: int
    dim: int
    rank: int          # number of independent conjugacy angles
    diameter: float

    # -- element arithmetic -------------------------------------------------

    def identity(self):
        raise NotImplementedError

    def multiply(self, a, b):
        raise NotImplementedError

    def inverse(self, a):
        raise NotImplementedError

    def conjugate(self, a, h):
        """h a h^{-1}."""
        return self.multiply(self.multiply(h, a), self.inverse(h))

    def trace(self, a):
        raise NotImplementedError

    def re_trace(self, a):
        return float(np.real(self.trace(a)))

    # -- exponential geometry ----------------------------------------------

    def exp(self, coeffs):
        """Group element exp(sum_a coeffs[a] T^a)."""
        raise NotImplementedError

    def log(self, a):
        """Minimal-norm algebra coordinates of a; odd by construction.

        Raises :class:`CutLocusError` when an eigenvalue of ``a`` lies within
        1e-10 of -1.
        """
        raise NotImplementedError

    def geodesic_distance(self, a):
        """rho(a, 1) = ||log a|| with ||X||^2 = -Tr(X^2); defined everywhere."""
        return float(self.distance_from_angles(self.conjugacy_angles(a)))

    def conjugacy_angles(self, a):
        """Eigenvalue angles parameterising the conjugacy class of ``a``."""
        raise NotImplementedError

    def angles_to_element(self, angles):
        """A diagonal representative of the class with the given angles."""
        raise NotImplementedError

    def distance_from_angles(self, angles):
        """Vectorised rho(., 1) from conjugacy angles (last axis = rank)."""
        raise NotImplementedError

    def re_trace_from_angles(self, angles):
        """Vectorised Re Tr from conjugacy angles."""
        raise NotImplementedError

    # -- sampling ------------------------------------------------------------

    def haar(self, rng):
        raise NotImplementedError

    def ball(self, eps, rng):
        """Haar sample conditioned on rho(x, 1) < eps (requires 0 < eps < pi).

        Sampled by pushing a uniform algebra ball through exp and rejecting
        against the exp-map Jacobian prod_{j<k} sinc^2((theta_j - theta_k)/2);
        for eps < pi the algebra ball maps bijectively onto the geodesic ball.
        """
        raise NotImplementedError

    # -- hygiene ---------------------------------------------------------------

    def unitarity_defect(self, a) -> float:
        raise NotImplementedError

    def renormalize(self, a):
        """Project back onto the group (polar decomposition for SU(n))."""
        raise NotImplementedError

    def check_element(self, a, tol=1e-12):
        d = self.unitarity_defect(a)
        if d > tol:
            raise ValueError(f"{self.name} element drifted off the group (defect {d:.3e})")

    def __repr__(self):
        return f"<{self.name}>"


class _U1Group(CompactGroup):

    name = "U1"
    matrix_size = 1
    dim = 1
    rank = 1
    diameter = np.pi

    def __init__(self):
        self.basis = np.array([[[1j]]])
        _check_basis_orthonormal(self.basis)

    def identity(self):
        return 0.0

    def _as_angle(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape != ():
            raise GroupMismatchError("U1 elements are scalar angles")
        return float(a)

    def multiply(self, a, b):
        return float(_wrap_angle(self._as_angle(a) + self._as_angle(b)))

    def inverse(self, a):
        return float(_wrap_angle(-self._as_angle(a)))

    def conjugate(self, a, h):
        self._as_angle(h)
        return self._as_angle(a)

    def trace(self, a):
        return complex(np.exp(1j * self._as_angle(a)))

    def exp(self, coeffs):
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        return float(_wrap_angle(coeffs[0]))

    def log(self, a):
        t = self._as_angle(a)
        if abs(t) > np.pi - _CUT_TOL:
            raise CutLocusError("U1 logarithm at theta = pi")
        return np.array([t])

    def conjugacy_angles(self, a):
        return np.array([self._as_angle(a)])

    def angles_to_element(self, angles):
        return float(_wrap_angle(np.asarray(angles).reshape(-1)[0]))

    def distance_from_angles(self, angles):
        angles = np.asarray(angles, dtype=float)
        return np.abs(_wrap_angle(angles[..., 0]))

    def re_trace_from_angles(self, angles):
        angles = np.asarray(angles, dtype=float)
        return np.cos(angles[..., 0])

    def haar(self, rng):
        return float(rng.uniform(-np.pi, np.pi))

    def ball(self, eps, rng):
        if not 0.0 < eps < np.pi:
            raise ValueError("ball radius must lie in (0, pi)")
        return float(rng.uniform(-eps, eps))

    def unitarity_defect(self, a):
        self._as_angle(a)
        return 0.0

    def renormalize(self, a):
        return float(_wrap_angle(self._as_angle(a)))


class _SUGroup(CompactGroup):

    def __init__(self, n, name, basis, diameter):
        self.matrix_size = n
        self.name = name
        self.dim = n * n - 1
        self.rank = n - 1
        self.basis = basis
        self.diameter = diameter
        _check_basis_orthonormal(basis)
        self._eye = np.eye(n, dtype=complex)

    def identity(self):
        return self._eye.copy()

    def _as_matrix(self, a):
        a = np.asarray(a)
        n = self.matrix_size
        if a.shape != (n, n):
            raise GroupMismatchError(f"{self.name} elements are {n}x{n} matrices")
        return a

    def multiply(self, a, b):
        return self._as_matrix(a) @ self._as_matrix(b)

    def inverse(self, a):
        return self._as_matrix(a).conj().T

    def trace(self, a):
        return complex(np.trace(self._as_matrix(a)))

    def exp(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        X = np.tensordot(coeffs, self.basis, axes=(0, 0))
        # X is skew-Hermitian: exponentiate through the Hermitian matrix -iX.
        w, v = np.linalg.eigh(-1j * X)
        return (v * np.exp(1j * w)) @ v.conj().T

    def _eig_angles_vectors(self, a):
        # Unitary matrices are normal; the complex Schur form is diagonal and
        # gives orthonormal eigenvectors even for degenerate eigenvalues.
        t, q = scipy.linalg.schur(self._as_matrix(a), output="complex")
        return np.angle(np.diag(t)), q

    @staticmethod
    def _adjust_branch(theta):
        """Shift eigenvalue angles by multiples of 2 pi so they sum to zero,
        minimising sum(theta^2).  For SU(n), n <= 3, at most one shift."""
        theta = np.array(theta, dtype=float)
        s = int(np.round(theta.sum() / (2.0 * np.pi)))
        for _ in range(abs(s)):
            if s > 0:
                theta[np.argmax(theta)] -= 2.0 * np.pi
            else:
                theta[np.argmin(theta)] += 2.0 * np.pi
        return theta

    def _log_raw(self, a):
        theta, q = self._eig_angles_vectors(a)
        if np.any(np.abs(np.abs(theta) - np.pi) < _CUT_TOL):
            raise CutLocusError(f"{self.name} logarithm at an eigenvalue -1")
        theta = self._adjust_branch(theta)
        X = (q * (1j * theta)) @ q.conj().T
        # Orthonormal basis: coefficients are <X, T^a> = -Tr(X T^a).
        return np.real(-np.einsum("ij,aji->a", X, self.basis))

    def log(self, a):
        # Symmetrised so that log(a^{-1}) == -log(a) bit-exactly.
        x1 = self._log_raw(a)
        x2 = self._log_raw(self.inverse(a))
        coeffs = 0.5 * (x1 - x2)
        # A tie between minimal branches (measure zero) breaks the mirror
        # symmetry; fall back to the unsymmetrised log there.
        if np.max(np.abs(x1 + x2)) > 1e-6 * max(1.0, np.max(np.abs(x1))):
            return x1
        return coeffs

    def conjugacy_angles(self, a):
        theta, _ = self._eig_angles_vectors(a)
        theta = np.sort(theta)[::-1]
        if self.matrix_size == 2:
            return np.array([abs(theta[0])])
        return theta[: self.rank]

    def angles_to_element(self, angles):
        angles = np.asarray(angles, dtype=float).reshape(-1)
        if self.matrix_size == 2:
            th = np.array([angles[0], -angles[0]])
        else:
            th = np.concatenate([angles[: self.rank], [-angles[: self.rank].sum()]])
        return np.diag(np.exp(1j * th))

    def _full_angles(self, angles):
        angles = np.asarray(angles, dtype=float)
        if self.matrix_size == 2:
            a = angles[..., 0]
            return np.stack([a, -a], axis=-1)
        t1 = angles[..., 0]
        t2 = angles[..., 1]
        return np.stack([t1, t2, -(t1 + t2)], axis=-1)

    def distance_from_angles(self, angles):
        th = _wrap_angle(self._full_angles(angles))
        s = np.round(th.sum(axis=-1) / (2.0 * np.pi)).astype(int)
        # Undo a +-2 pi excess in the wrapped sum by shifting one extreme angle.
        if np.any(s != 0):
            th = th.copy()
            idx_max = np.argmax(th, axis=-1)
            idx_min = np.argmin(th, axis=-1)
            take = np.where(s > 0, idx_max, idx_min)
            shift = -2.0 * np.pi * np.sign(s)
            np.put_along_axis(
                th, take[..., None],
                np.take_along_axis(th, take[..., None], axis=-1) + shift[..., None],
                axis=-1)
        return np.sqrt(np.sum(th * th, axis=-1))

    def re_trace_from_angles(self, angles):
        return np.cos(self._full_angles(angles)).sum(axis=-1)

    def haar(self, rng):
        n = self.matrix_size
        z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2.0)
        q, r = np.linalg.qr(z)
        # Fix the R-diagonal phases (Mezzadri), then normalise the determinant.
        d = np.diag(r)
        q = q * (d / np.abs(d))
        det = np.linalg.det(q)
        return q * det ** (-1.0 / n)

    def _jacobian_from_algebra_angles(self, phi):
        """prod_{j<k} sinc^2((phi_j - phi_k)/2) for eigenangles phi of -iX."""
        J = 1.0
        for j in range(len(phi)):
            for k in range(j + 1, len(phi)):
                J *= np.sinc((phi[j] - phi[k]) / (2.0 * np.pi)) ** 2
        return J

    def ball(self, eps, rng):
        if not 0.0 < eps < np.pi:
            raise ValueError("ball radius must lie in (0, pi)")
        D = self.dim
        while True:
            u = rng.normal(size=D)
            u /= np.linalg.norm(u)
            r = eps * rng.uniform() ** (1.0 / D)
            X = np.tensordot(r * u, self.basis, axes=(0, 0))
            phi = np.linalg.eigvalsh(-1j * X)
            if rng.uniform() < self._jacobian_from_algebra_angles(phi):
                return self.exp(r * u)

    def unitarity_defect(self, a):
        a = self._as_matrix(a)
        return float(np.linalg.norm(a @ a.conj().T - self._eye))

    def renormalize(self, a):
        u, _, vh = np.linalg.svd(self._as_matrix(a))
        q = u @ vh
        det = np.linalg.det(q)
        return q * det ** (-1.0 / self.matrix_size)


def _check_basis_orthonormal(basis):
    gram = -np.einsum("aij,bji->ab", basis, basis)
    if not np.allclose(gram, np.eye(len(basis)), atol=1e-12):
        raise AssertionError("algebra basis is not orthonormal under -Tr(XY)")


U1 = _U1Group()
SU2 = _SUGroup(2, "SU2", 1j * _SIGMA / np.sqrt(2.0), np.pi * np.sqrt(2.0))
SU3 = _SUGroup(3, "SU3", 1j * _LAMBDA / np.sqrt(2.0), 2.0 * np.pi * np.sqrt(2.0 / 3.0))

GROUPS = {"U1": U1, "SU2": SU2, "SU3": SU3}


def get_group(name: str) -> CompactGroup:
    try:
        return GROUPS[name]
    except KeyError:
        raise KeyError(f"unknown group {name!r}; choose from {sorted(GROUPS)}") from None
