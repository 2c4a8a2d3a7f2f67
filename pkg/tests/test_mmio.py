import numpy as np
import pytest
import scipy.sparse as sp

from lyapkit import mmio
from lyapkit.testlab import gen_convdiff3d, gen_laplacian2d


def test_sparse_roundtrip_general(tmp_path):
    A = gen_convdiff3d(3, 0.7).A
    mmio.write_sparse(tmp_path / 'a.mtx', A)
    R = mmio.read_sparse(tmp_path / 'a.mtx')
    assert sp.isspmatrix_csr(R) or isinstance(R, sp.csr_array)
    assert abs(R - A).max() == 0


def test_sparse_roundtrip_symmetric(tmp_path):
    A = gen_laplacian2d(4).A
    mmio.write_sparse(tmp_path / 'a.mtx', A, symmetric=True)
    assert 'symmetric' in (tmp_path / 'a.mtx').read_text().splitlines()[0]
    assert abs(mmio.read_sparse(tmp_path / 'a.mtx') - A).max() == 0


def test_dense_roundtrip_is_lossless(tmp_path):
    Z = np.random.default_rng(14).standard_normal((7, 3))
    mmio.write_dense(tmp_path / 'z.mtx', Z)
    np.testing.assert_array_equal(mmio.read_dense(tmp_path / 'z.mtx'), Z)


def test_read_missing_file(tmp_path):
    with pytest.raises(OSError):
        mmio.read_sparse(tmp_path / 'missing.mtx')
