"""numba kernels against their numpy fallbacks."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given

from muonlab import _accel
from muonlab.norm import norm_col
from muonlab.polar import svd_small
from muonlab.tensorcore import Rng

from ._strategies import matrices

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@given(matrices())
def test_norm_col_bit_identical(x):
    np.testing.assert_array_equal(norm_col(x, use_numba=True), norm_col(x, use_numba=False))


def test_norm_col_float32_bit_identical():
    x = Rng(0).normal((17, 9)).astype(np.float32)
    a, b = norm_col(x, use_numba=True), norm_col(x, use_numba=False)
    assert a.dtype == b.dtype == np.float32
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("shape", [(16, 16), (40, 7), (7, 40), (33, 33)])
def test_jacobi_kernels_agree(shape):
    # different rotation orders, so agreement is to rounding, not bitwise
    a = Rng(1).normal(shape)
    u1, s1, v1 = svd_small(a, use_numba=True)
    u2, s2, v2 = svd_small(a, use_numba=False)
    np.testing.assert_allclose(s1, s2, rtol=1e-12)
    np.testing.assert_allclose(u1 @ v1.T, u2 @ v2.T, atol=1e-11)


def test_env_flag_selects_numpy():
    env = dict(os.environ, MUONLAB_DISABLE_NUMBA="1")
    code = "import muonlab; print(muonlab.backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["MUONLAB_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
