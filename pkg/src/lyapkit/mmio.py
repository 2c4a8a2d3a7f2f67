"""Matrix Market input/output (coordinate for sparse, array for dense)."""

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from lyapkit.linops import as_csr


def _mmread(path):
    # the fast reader reports a missing file as a malformed banner
    if not Path(path).is_file():
        raise FileNotFoundError(f'no such file: {path}')
    return scipy.io.mmread(str(path))


def read_sparse(path):
    """Read a real coordinate-format file (general or symmetric) as CSR."""
    M = _mmread(path)
    if np.iscomplexobj(M.data if sp.issparse(M) else M):
        raise ValueError(f'{path}: complex matrices are not supported')
    return as_csr(M)


def write_sparse(path, A, symmetric=False):
    A = sp.coo_matrix(A)
    scipy.io.mmwrite(str(path), A, precision=17,
                     symmetry='symmetric' if symmetric else 'general')


def read_dense(path):
    M = _mmread(path)
    if sp.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return M


def write_dense(path, X):
    scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(X, dtype=float)),
                     precision=17)
