"""Smallest Stokes eigenpair via shift-invert Arnoldi on the saddle pencil.

The discrete problem is posed as K x = lambda N x with

    K = [[ A, -B^T, 0 ],          N = blockdiag(M, 0, 0),
         [-B,  0,   c ],
         [ 0,  c^T, 0 ]]

where the trailing row/column enforce the zero-mean pressure constraint
through a Lagrange multiplier.  K is symmetric and nonsingular, so the
smallest positive eigenvalue of the pencil is the dominant eigenvalue of
T = K^{-1} N, which plain Arnoldi (shift 0) finds quickly.  Infinite
pencil eigenvalues (pressure modes) map to 0 in T and never compete with
the dominant Ritz pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem


class SingularSystemError(RuntimeError):
    """The pencil matrix factorization failed."""


class NonConvergenceError(RuntimeError):
    """The Arnoldi iteration exhausted its restart budget."""


@dataclass
class Pencil:
    K: sp.csc_matrix
    M: sp.csr_matrix
    n_u: int
    n_p: int

    def apply_mass(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        out[: self.n_u] = self.M @ x[: self.n_u]
        return out


@dataclass
class EigenPair:
    lambda_h: float
    u: np.ndarray
    p: np.ndarray
    residual: float
    iterations: int


def build_pencil(system: AssembledSystem) -> Pencil:
    c = sp.csc_matrix(system.c.reshape(-1, 1))
    K = sp.bmat(
        [
            [system.A, -system.B.T, None],
            [-system.B, None, c],
            [None, c.T, None],
        ],
        format="csc",
    )
    return Pencil(K=K, M=system.M.tocsr(), n_u=system.n_u, n_p=system.n_p)


class SparseFactorization:
    """Sparse LU with partial pivoting and fill-reducing ordering."""

    def __init__(self, K):
        try:
            self._lu = spla.splu(sp.csc_matrix(K))
        except RuntimeError as exc:
            raise SingularSystemError(
                f"sparse LU failed ({exc}); the mean constraint may be "
                f"broken or the penalty parameter too small"
            ) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


def factorize(K) -> SparseFactorization:
    return SparseFactorization(K)


def _arnoldi(op, v0: np.ndarray, m: int):
    """m-step Arnoldi with full (re)orthogonalization.

    Returns (V, H, j) with V (n, j) orthonormal and H (j, j) upper
    Hessenberg; j < m signals a happy breakdown (invariant subspace).
    """
    n = v0.shape[0]
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    V[:, 0] = v0 / np.linalg.norm(v0)
    for j in range(m):
        w = op(V[:, j])
        for i in range(j + 1):
            h = V[:, i] @ w
            w -= h * V[:, i]
            H[i, j] += h
        for i in range(j + 1):  # one reorthogonalization pass
            h = V[:, i] @ w
            w -= h * V[:, i]
            H[i, j] += h
        beta = np.linalg.norm(w)
        H[j + 1, j] = beta
        if beta <= 1e-14 * max(1.0, abs(H[:, : j + 1]).max()):
            return V[:, : j + 1], H[: j + 1, : j + 1], j + 1
        V[:, j + 1] = w / beta
    return V[:, :m], H[:m, :m], m


def _dominant_ritz(V: np.ndarray, H: np.ndarray):
    evals, evecs = np.linalg.eig(H)
    idx = int(np.argmax(np.abs(evals)))
    theta = evals[idx]
    if abs(theta.imag) > 1e-8 * max(abs(theta), 1e-300):
        raise NonConvergenceError(
            f"dominant Ritz value is complex ({theta}); the pencil has "
            f"lost symmetry"
        )
    y = evecs[:, idx]
    pivot = y[int(np.argmax(np.abs(y)))]
    y = (y / pivot).real
    x = V @ y
    return float(theta.real), x / np.linalg.norm(x)


def smallest_eigenpair(pencil: Pencil, tol: float = 1e-8, subspace_dim: int = 20,
                       max_restarts: int = 50, verbosity: int = 0) -> EigenPair:
    """Smallest positive eigenvalue and eigenfunction of the pencil.

    The returned velocity has unit L2 norm and its largest-magnitude
    coefficient is positive; the Lagrange multiplier entry is checked to
    vanish and then dropped.
    """
    if not 1e-14 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-14, 1e-6], got {tol}")
    if subspace_dim < 10:
        raise ValueError(f"subspace_dim must be >= 10, got {subspace_dim}")

    n = pencil.K.shape[0]
    m = min(subspace_dim, n)
    lu = factorize(pencil.K)
    op = lambda x: lu.solve(pencil.apply_mass(x))

    v0 = op(np.ones(n))
    nrm = np.linalg.norm(v0)
    if nrm == 0.0:
        raise SingularSystemError("mass operator annihilated the start vector")
    v0 /= nrm

    iterations = 0
    for sweep in range(max_restarts):
        V, H, j = _arnoldi(op, v0, m)
        iterations += j
        theta, x = _dominant_ritz(V, H)
        if theta <= 0.0:
            raise NonConvergenceError(f"dominant Ritz value {theta} is not positive")
        lam = 1.0 / theta
        residual = float(np.linalg.norm(pencil.K @ x - lam * pencil.apply_mass(x)))
        if verbosity >= 2:
            print(f"[eig] sweep {sweep}: lambda={lam:.12e} residual={residual:.3e}")
        if residual <= tol:
            multiplier = abs(x[-1])
            if multiplier > 1e-8:
                raise SingularSystemError(
                    f"pressure-mean multiplier {multiplier:.3e} did not vanish"
                )
            u = x[: pencil.n_u]
            p = x[pencil.n_u: pencil.n_u + pencil.n_p]
            scale = float(np.sqrt(u @ (pencil.M @ u)))
            u = u / scale
            p = p / scale
            imax = int(np.argmax(np.abs(u)))
            if u[imax] < 0.0:
                u = -u
                p = -p
            return EigenPair(lambda_h=lam, u=u, p=p, residual=residual,
                             iterations=iterations)
        v0 = x
    raise NonConvergenceError(
        f"no convergence to tol={tol} within {max_restarts} restarts "
        f"(last residual {residual:.3e})"
    )


def rayleigh_check(system: AssembledSystem, pair: EigenPair) -> float:
    """Relative defect of the discrete Rayleigh identity.

    With v = u_h in the discrete equations and div u_h = 0, the eigenvalue
    equals the velocity energy over the mass norm, so this is ~0 for a
    converged pair.
    """
    u = pair.u
    energy = float(u @ (system.A @ u))
    mass = float(u @ (system.M @ u))
    return abs(energy - pair.lambda_h * mass) / pair.lambda_h
