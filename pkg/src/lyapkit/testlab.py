"""Test problems, mass-matrix transforms, dense oracles and the K-PIK baseline."""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp
import scipy.sparse.linalg as spsla

from lyapkit.errors import MaxSpaceReached, NotSPD, SingularMatrix
from lyapkit.linops import CongruenceOperator, as_csr, as_operator
from lyapkit.report import HistoryRow, SolveReport
from lyapkit.xkrylov import ExtendedKrylovBasis

KRON_DENSE_MAX = 50


@dataclass
class GeneratedProblem:
    A: object
    B: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.B.shape[0]


def _tridiag(h, lower, diag, upper):
    return sp.diags([lower, diag, upper], [-1, 0, 1], shape=(h, h), format='csr')


def _unit_b(rng, n, q):
    B = rng.standard_normal((n, q))
    return B / np.linalg.norm(B)


def gen_laplacian2d(h, q=1, b_kind=None, seed=0):
    """``A = I kron D + D kron I`` with ``D = tridiag(1, -2, 1)`` of order `h`.

    `b_kind` is ``'ones'`` (normalized all-ones columns) or ``'random'``
    (seeded Gaussian, unit Frobenius norm).  The default is ``'ones'`` for
    ``q == 1`` and ``'random'`` otherwise, since identical columns would make
    the first basis block rank deficient.
    """
    if h < 2:
        raise ValueError('h must be at least 2')
    if b_kind is None:
        b_kind = 'ones' if q == 1 else 'random'
    D = _tridiag(h, 1.0, -2.0, 1.0)
    I = sp.identity(h, format='csr')
    A = as_csr(sp.kron(I, D) + sp.kron(D, I))
    n = h * h
    if b_kind == 'ones':
        B = np.ones((n, q)) / np.sqrt(n * q)
    elif b_kind == 'random':
        B = _unit_b(np.random.default_rng(seed), n, q)
    else:
        raise ValueError(f'unknown b_kind {b_kind!r}')
    return GeneratedProblem(A, B, dict(generator='laplacian2d', h=h, q=q,
                                       b_kind=b_kind, seed=seed))


def convdiff_nodes(h):
    """Nodal coordinates ``(i - 1) / (h - 1)``, i = 1..h, on the unit interval."""
    return np.linspace(0.0, 1.0, h)


def gen_convdiff3d(h, zeta, seed=0, q=1, convection=True):
    """3-D convection-diffusion operator on an ``h^3`` grid, returned stable.

    Assembled from Kronecker products (slowest index ``z``, fastest ``x``)::

        L = (D + P3 N^T) kron I kron I + I kron D kron I + I kron I kron D
            + P1 kron Y1 kron (F1 N)

    with ``D = zeta (h-1)^2 tridiag(-1, 2, -1)``,
    ``N = -(h-1)/2 tridiag(-1, 0, 1)`` and diagonal nodal values
    ``F1 = 1 - x^2``, ``Y1 = y``, ``P1 = z``, ``P3 = e^z``.  `L` discretizes a
    positive operator, so ``A = -L`` is returned.
    """
    if h < 3:
        raise ValueError('h must be at least 3')
    if not zeta > 0:
        raise ValueError('zeta must be positive')
    t = convdiff_nodes(h)
    I = sp.identity(h, format='csr')
    D = zeta * (h - 1) ** 2 * _tridiag(h, -1.0, 2.0, -1.0)
    N = -(h - 1) / 2.0 * _tridiag(h, -1.0, 0.0, 1.0)
    c = 1.0 if convection else 0.0
    F1 = sp.diags(c * (1.0 - t ** 2))
    Y1 = sp.diags(t)
    P1 = sp.diags(t)
    P3 = sp.diags(c * np.exp(t))
    L = (sp.kron(sp.kron(D + P3 @ N.T, I), I)
         + sp.kron(sp.kron(I, D), I)
         + sp.kron(sp.kron(I, I), D)
         + sp.kron(sp.kron(P1, Y1), F1 @ N))
    A = as_csr(-L)
    A.eliminate_zeros()
    B = _unit_b(np.random.default_rng(seed), h ** 3, q)
    return GeneratedProblem(A, B, dict(generator='convdiff3d', h=h, zeta=zeta,
                                       q=q, seed=seed))


# -- mass-matrix transforms ----------------------------------------------------

class _DiagFactor:
    def __init__(self, d):
        self.s = np.sqrt(d)[:, None]

    def mul(self, X):
        return self.s * X

    mul_t = mul

    def solve(self, X):
        return X / self.s

    solve_t = solve


class _SparseCholFactor:
    """``E = C C^T`` from an unpivoted sparse LU (``E = L U``, ``U = D L^T``)."""

    def __init__(self, E):
        n = E.shape[0]
        if (abs(E - E.T) > 1e-14 * abs(E).max()).nnz:
            raise NotSPD('mass matrix is not symmetric')
        try:
            lu = spsla.splu(sp.csc_matrix(E), permc_spec='NATURAL',
                            diag_pivot_thresh=0.0,
                            options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise NotSPD(f'Cholesky factorization failed: {exc}') from exc
        ident = np.arange(n)
        if not (np.array_equal(lu.perm_r, ident) and np.array_equal(lu.perm_c, ident)):
            raise NotSPD('Cholesky factorization needed pivoting')
        d = lu.U.diagonal()
        if np.any(d <= 0):
            raise NotSPD('mass matrix is not positive definite')
        sd = np.sqrt(d)
        self.C = sp.csr_matrix(lu.L @ sp.diags(sd))
        self.Ct = sp.csr_matrix(self.C.T)

    def mul(self, X):
        return self.C @ X

    def mul_t(self, X):
        return self.Ct @ X

    def solve(self, X):
        return _tri(self.C, X, lower=True)

    def solve_t(self, X):
        return _tri(self.Ct, X, lower=False)


def _tri(M, X, lower):
    X = np.asarray(X)
    if np.iscomplexobj(X):
        return _tri(M, X.real, lower) + 1j * _tri(M, X.imag, lower)
    out = spsla.spsolve_triangular(M, X.reshape(X.shape[0], -1), lower=lower)
    return out.reshape(X.shape)


def transform_diag_e(A, E_diag, B):
    """Reduce ``A X E + E X A^T + B B^T = 0`` with diagonal SPD `E` to standard form.

    Returns ``(op, B_t, back_map)`` where `op` applies
    ``E^{-1/2} A E^{-1/2}`` implicitly, ``B_t = E^{-1/2} B`` and
    ``back_map(Z_t) = E^{-1/2} Z_t``.
    """
    d = np.asarray(E_diag, dtype=float).ravel()
    if np.any(d <= 0):
        raise NotSPD('diagonal mass matrix has nonpositive entries')
    factor = _DiagFactor(d)
    op = CongruenceOperator(A, sp.diags(d), factor)
    return op, factor.solve(np.asarray(B, dtype=float)), factor.solve


def transform_chol_e(A, E, B):
    """Reduce the generalized equation with sparse SPD `E = L L^T`.

    `op` applies ``L^{-1} A L^{-T}``, ``B_t = L^{-1} B`` and
    ``back_map(Z_t) = L^{-T} Z_t``.
    """
    factor = _SparseCholFactor(as_csr(E))
    op = CongruenceOperator(A, E, factor)
    return op, factor.solve(np.asarray(B, dtype=float)), factor.solve_t


# -- dense oracles -------------------------------------------------------------

def kron_lyap_solve(A, B):
    """Solve ``A X + X A^T = -B B^T`` through the Kronecker system on ``vec(X)``.

    ``(I kron A + A kron I) vec(X) = -vec(B B^T)``.  Up to
    ``KRON_DENSE_MAX`` unknowns per side the system is formed densely and
    LU-solved; beyond that it is kept sparse and solved by CG (symmetric `A`)
    or GMRES, with the residual checked afterwards.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = B.shape[0]
    rhs = -(B @ B.T).reshape(-1, order='F')
    if n <= KRON_DENSE_MAX:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        I = np.eye(n)
        K = np.kron(I, Ad) + np.kron(Ad, I)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', spla.LinAlgWarning)
            lu, piv = spla.lu_factor(K)
        piv_abs = np.abs(np.diagonal(lu))
        if piv_abs.min() <= n * n * np.finfo(float).eps * piv_abs.max():
            raise SingularMatrix('Kronecker system is singular: A is not stable')
        x = spla.lu_solve((lu, piv), rhs)
    else:
        As = sp.csr_matrix(A)
        I = sp.identity(n, format='csr')
        K = sp.csr_matrix(sp.kron(I, As) + sp.kron(As, I))
        if (abs(As - As.T) > 0).nnz == 0:
            x, info = spsla.cg(-K, -rhs, rtol=1e-14, maxiter=20 * n)
        else:
            x, info = spsla.gmres(K, rhs, rtol=1e-14, restart=min(n * n, 300),
                                  maxiter=200)
        if info != 0 or np.linalg.norm(K @ x - rhs) > 1e-10 * np.linalg.norm(rhs):
            raise SingularMatrix('Kronecker solve failed: A is likely not stable')
    X = x.reshape(n, n, order='F')
    return 0.5 * (X + X.T)


def dense_lyap_residual(A, Z, B, E=None):
    """Relative residual ``||A X E + E X A^T + B B^T||_F / ||B^T B||_F`` of ``X = Z Z^T``."""
    if isinstance(A, np.ndarray):
        Ad = A
    elif sp.issparse(A):
        Ad = A.toarray()
    else:
        Ad = as_operator(A).to_dense()
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    X = Z @ Z.T
    if E is None:
        R = Ad @ X + X @ Ad.T
    else:
        Ed = E.toarray() if sp.issparse(E) else np.asarray(E)
        R = Ad @ X @ Ed + Ed @ X @ Ad.T
    R += B @ B.T
    return float(np.linalg.norm(R) / np.linalg.norm(B.T @ B))


# -- K-PIK ----------------------------------------------------------------------

def projected_lyap_solve(T, G):
    """Solve ``T L + L T^T + G G^T = 0`` at projected scale."""
    if T.shape[0] <= KRON_DENSE_MAX:
        return kron_lyap_solve(T, G)
    L = spla.solve_continuous_lyapunov(T, -(G @ G.T))
    return 0.5 * (L + L.T)


def kpik_solve(op, B, eps_out=1e-8, m_max=100, trunc=1e-12):
    """Galerkin projection onto the extended Krylov space (K-PIK).

    At each step the projected Lyapunov equation is solved and the residual
    norm is obtained as ``sqrt(2) ||T_tail L||_F``.  The returned factor comes
    from the eigendecomposition of ``L`` truncated at `trunc` relative to its
    largest eigenvalue.
    """
    t0 = time.perf_counter()
    op = as_operator(op)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    nu = float(np.linalg.norm(B.T @ B))
    basis = ExtendedKrylovBasis(op, B)
    report = SolveReport(method='kpik', nu=nu)
    while True:
        L = projected_lyap_solve(basis.T, basis.rhs0())
        res = np.sqrt(2.0) * np.linalg.norm(basis.T_tail @ L)
        report.history.append(HistoryRow(j=basis.m, m=basis.m, space_dim=basis.dim,
                                         resnorm_abs=res, resnorm_rel=res / nu))
        if res <= eps_out * nu:
            report.status = 'converged'
            break
        if basis.m >= m_max or not basis.can_expand:
            report.status = 'max_space'
            break
        basis.expand()
    w, U = np.linalg.eigh(L)
    keep = w > trunc * w.max()
    Z = basis.V @ (U[:, keep] * np.sqrt(w[keep]))
    report.wall_time = time.perf_counter() - t0
    if report.status != 'converged':
        raise MaxSpaceReached(f'K-PIK did not converge within m={basis.m}', Z=Z,
                              report=report, status=report.status)
    return Z, report

