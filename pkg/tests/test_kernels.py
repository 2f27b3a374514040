import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigencap import _kernels_py, kernels, simcore
from eigencap.simcore import _circuit_args

compiled = pytest.importorskip("eigencap._kernels", reason="compiled extension not built")


@given(st.integers(1, 7), st.integers(0, 2**32), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_backends_agree_on_circuits(L, seed, tau):
    sp = simcore.random_encoding("circuit", L, 1.3, seed=seed, tau=tau)
    us = np.linspace(-1, 1, 17)
    args = _circuit_args(sp)
    np.testing.assert_allclose(compiled.circuit_states(*args, us), _kernels_py.circuit_states(*args, us),
                               atol=1e-12)
    np.testing.assert_allclose(compiled.circuit_probabilities(*args, us),
                               _kernels_py.circuit_probabilities(*args, us), atol=1e-12)


def test_backends_agree_with_init():
    sp = simcore.random_encoding("circuit", 3, 0.4, seed=2)
    init = np.eye(8, dtype=complex)
    us = np.full(8, 0.3)
    args = _circuit_args(sp)
    np.testing.assert_allclose(compiled.circuit_states(*args, us, init=init),
                               _kernels_py.circuit_states(*args, us, init=init), atol=1e-12)


@given(st.integers(0, 9), st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_backends_agree_on_fwht(L, seed):
    x = np.random.default_rng(seed).normal(size=(3, 1 << L))
    np.testing.assert_allclose(compiled.fwht(x), _kernels_py.fwht(x), atol=1e-12)
    np.testing.assert_allclose(compiled.fwht(x[0]), _kernels_py.fwht(x[0]), atol=1e-12)


def test_default_backend_is_compiled():
    if os.environ.get("EIGENCAP_PURE_PYTHON"):
        pytest.skip("fallback forced by environment")
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    env = dict(os.environ, EIGENCAP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import eigencap; print(eigencap.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
