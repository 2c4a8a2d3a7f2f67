"""Matrix kernels and the stable-operator abstraction used by every solver.

Sparse matrices are plain :class:`scipy.sparse.csr_matrix` objects in
canonical form (sorted indices, no duplicates).  Dense blocks are numpy
arrays, real or complex.
"""

import warnings

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp
import scipy.sparse.linalg as spsla

from lyapkit.errors import (EigFailure, RankDeficientLS, SingularMatrix,
                            SingularProjectedSystem)

RANK_TOL = 1e-12


def as_csr(A):
    """Return `A` as a canonical real CSR matrix.

    Duplicates are summed and column indices sorted so that the row offsets,
    column indices and values satisfy the usual CSR invariants.
    """
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError('sparse matrix has non-finite entries')
    return A


class Factorization:
    """Reusable sparse LU factors of a fixed square matrix."""

    def __init__(self, lu, n):
        self._lu = lu
        self.n = n

    def solve(self, X):
        X = np.asarray(X)
        if np.iscomplexobj(X):
            return self._lu.solve(np.ascontiguousarray(X.real)) \
                + 1j * self._lu.solve(np.ascontiguousarray(X.imag))
        return self._lu.solve(np.asarray(X, dtype=float))


def factorize(A):
    """LU-factorize a square sparse matrix once for many right-hand sides.

    Raises
    ------
    SingularMatrix
        If a pivot vanishes to working precision.  ``err.row`` names the
        offending row of `A` when it can be identified.
    """
    A = sp.csc_matrix(A, dtype=float)
    n, m = A.shape
    if n != m:
        raise ValueError(f'matrix must be square, got {A.shape}')
    empty = np.flatnonzero(np.diff(sp.csr_matrix(A).indptr) == 0)
    if empty.size:
        raise SingularMatrix(f'matrix is singular: row {empty[0]} is empty',
                             row=int(empty[0]))
    try:
        lu = spsla.splu(A)
    except RuntimeError as exc:
        raise SingularMatrix(f'matrix is singular: {exc}') from exc
    udiag = np.abs(lu.U.diagonal())
    scale = max(abs(A).max(), np.finfo(float).tiny)
    bad = np.flatnonzero(udiag <= n * np.finfo(float).eps * scale)
    if bad.size:
        row = int(np.argsort(lu.perm_r)[bad[0]])
        raise SingularMatrix(f'matrix is singular to working precision '
                             f'(pivot row {row})', row=row)
    return Factorization(lu, n)


def economy_qr(X, rank_tol=RANK_TOL, ref_norm=None):
    """Thin QR with a nonnegative diagonal in ``R``.

    Returns ``(Q, R, deficient)`` where `deficient` lists the indices ``i``
    with ``|R[i, i]| <= rank_tol * ref_norm`` (``ref_norm`` defaults to the
    Frobenius norm of `X`).  Rank deficiency is reported, not raised.
    """
    X = np.asarray(X)
    Q, R = spla.qr(X, mode='economic')
    d = np.diagonal(R)
    signs = np.where(np.real(d) < 0, -1.0, 1.0)
    Q = Q * signs
    R = signs[:, None] * R
    if ref_norm is None:
        ref_norm = np.linalg.norm(X)
    deficient = np.flatnonzero(np.abs(np.diagonal(R)) <= rank_tol * ref_norm)
    return Q, R, deficient


def dense_solve_cx(M, rhs):
    """Solve a small (possibly complex) square system.

    Raises :class:`SingularProjectedSystem` when `M` is numerically singular.
    """
    M = np.asarray(M)
    k = M.shape[0]
    try:
        with warnings.catch_warnings():
            # singularity is detected from the pivots below
            warnings.simplefilter('ignore', spla.LinAlgWarning)
            lu, piv = spla.lu_factor(M, check_finite=True)
    except (ValueError, spla.LinAlgError) as exc:
        raise SingularProjectedSystem(str(exc)) from exc
    pivots = np.abs(np.diagonal(lu))
    if k and pivots.min() <= k * np.finfo(float).eps * max(pivots.max(), np.finfo(float).tiny):
        raise SingularProjectedSystem('projected shifted matrix is singular; '
                                      'the negated shift is a Ritz value')
    return spla.lu_solve((lu, piv), rhs)


def dense_lstsq_cx(M, rhs):
    """Least squares by a complete QR factorization.

    Returns ``(Y, Q2)`` with ``Y`` minimizing ``||M Y - rhs||_F`` and ``Q2``
    an orthonormal basis of the orthogonal complement of ``range(M)`` (so the
    minimal residual norm equals ``||Q2^H rhs||_F``).
    """
    M = np.asarray(M)
    r, k = M.shape
    if r < k:
        raise ValueError('least squares needs at least as many rows as columns')
    Q, P = spla.qr(M, mode='full')
    d = np.abs(np.diagonal(P))
    if k and d.min() <= RANK_TOL * np.linalg.norm(M):
        raise RankDeficientLS('projected least-squares matrix is rank deficient')
    Q1, Q2 = Q[:, :k], Q[:, k:]
    Y = spla.solve_triangular(P[:k], Q1.conj().T @ rhs)
    return Y, Q2


def dense_eig(M):
    """Eigenvalues and unit-norm eigenvectors of a small dense matrix."""
    try:
        w, v = spla.eig(np.asarray(M))
    except (ValueError, spla.LinAlgError) as exc:
        raise EigFailure(str(exc)) from exc
    v = v / np.linalg.norm(v, axis=0)
    return w, v


class _PencilSolves:
    """Factor ``A + p E`` per shift and cache the factors.

    Complex shifts go through the real augmented system
    ``[[A + t E, -s E], [s E, A + t E]]`` for ``p = t + i s``.
    """

    def __init__(self, A, E=None):
        self.A = sp.csc_matrix(A)
        self.n = A.shape[0]
        self.E = sp.identity(self.n, format='csc') if E is None else sp.csc_matrix(E)
        self._cache = {}

    def factor(self, p):
        p = complex(p)
        F = self._cache.get(p)
        if F is None:
            t, s = p.real, p.imag
            K = self.A + t * self.E
            if s != 0.0:
                K = sp.bmat([[K, -s * self.E], [s * self.E, K]], format='csc')
            F = factorize(K)
            self._cache[p] = F
        return F

    def solve(self, p, W):
        p = complex(p)
        F = self.factor(p)
        W = np.asarray(W)
        if p.imag == 0.0:
            return F.solve(W)
        n = self.n
        X = F.solve(np.vstack([W.real, W.imag]) if np.iscomplexobj(W)
                    else np.vstack([W, np.zeros_like(W)]))
        return X[:n] + 1j * X[n:]

    @property
    def n_factorizations(self):
        return len(self._cache)


class StableOperator:
    """A stable matrix seen only through products and solves.

    Subclasses provide :meth:`apply`, :meth:`inv_apply` and
    :meth:`shifted_solve`; solvers never look at matrix entries.
    """

    n = 0
    symmetric = False

    def apply(self, X):
        raise NotImplementedError

    def inv_apply(self, X):
        raise NotImplementedError

    def shifted_solve(self, p, X):
        """Return ``(A + p I)^{-1} X`` (complex when `p` is complex)."""
        raise NotImplementedError

    def to_dense(self):
        return self.apply(np.eye(self.n))


class SparseOperator(StableOperator):
    """Explicit sparse `A`, factorized once up front."""

    def __init__(self, A):
        self.A = as_csr(A)
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f'operator must be square, got {self.A.shape}')
        self.n = self.A.shape[0]
        self.symmetric = (abs(self.A - self.A.T) > 0).nnz == 0
        self._fact = factorize(self.A)
        self._shifted = _PencilSolves(self.A)

    def apply(self, X):
        return self.A @ X

    def inv_apply(self, X):
        return self._fact.solve(X)

    def shifted_solve(self, p, X):
        return self._shifted.solve(p, X)

    def to_dense(self):
        return self.A.toarray()


class CongruenceOperator(StableOperator):
    """Implicit ``L^{-1} A L^{-T}`` for a mass matrix ``E = L L^T``.

    `factor` supplies the four triangular maps ``L x``, ``L^T x``,
    ``L^{-1} x`` and ``L^{-T} x``.  Shifted solves use
    ``(L^{-1} A L^{-T} + p I)^{-1} = L^T (A + p E)^{-1} L``.
    """

    def __init__(self, A, E, factor):
        self.A = as_csr(A)
        self.E = as_csr(E)
        self.n = self.A.shape[0]
        self.L = factor
        self.symmetric = (abs(self.A - self.A.T) > 0).nnz == 0
        self._fact = factorize(self.A)
        self._shifted = _PencilSolves(self.A, self.E)

    def apply(self, X):
        return self.L.solve(self.A @ self.L.solve_t(X))

    def inv_apply(self, X):
        return self.L.mul_t(self._fact.solve(self.L.mul(X)))

    def shifted_solve(self, p, X):
        return self.L.mul_t(self._shifted.solve(p, self.L.mul(X)))


def as_operator(A):
    if isinstance(A, StableOperator):
        return A
    return SparseOperator(A)
