"""Numba loop kernels against their numpy twins."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatskin import _accel
from flatskin._kernels import KERNELS, polygon_winding, shuffle_matrix, track_bands

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 60), cx=st.floats(-2, 2), cy=st.floats(-2, 2), turns=st.integers(-3, 3))
def test_winding_parity(n, cx, cy, turns):
    t = np.linspace(0, 2 * np.pi * (turns or 1), n * abs(turns or 1), endpoint=False)
    z = np.exp(1j * t) * (1 + 0.3 * np.cos(3 * t))
    loop, vec = KERNELS["polygon_winding"]
    a = loop(z.real.copy(), z.imag.copy(), cx, cy)
    b = vec(z.real.copy(), z.imag.copy(), cx, cy)
    assert a[0] == pytest.approx(b[0], abs=1e-9)
    assert a[1] == pytest.approx(b[1], abs=1e-12)


@pytest.mark.parametrize("ref, expected", [(0, 1), (0.5j, 1), (3, 0)])
def test_winding_circle(ref, expected):
    z = np.exp(1j * np.linspace(0, 2 * np.pi, 200, endpoint=False))
    w, _ = polygon_winding(z, ref)
    assert round(w) == expected and abs(w - expected) < 1e-9
    w_rev, _ = polygon_winding(z[::-1], ref)
    assert round(w_rev) == -expected


@needs_numba
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(2, 40), B=st.integers(1, 4))
def test_tracking_parity(seed, K, B):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((K, B)) + 1j * rng.standard_normal((K, B))
    if B > 1:
        values[K // 2, 1] = values[K // 2, 0]  # force a tie
    vectors = rng.standard_normal((K, B, B)) + 1j * rng.standard_normal((K, B, B))
    loop, vec = KERNELS["track_bands"]
    o1, a1 = loop(values, vectors, 1e-12)
    o2, a2 = vec(values, vectors, 1e-12)
    assert np.array_equal(o1, o2) and np.array_equal(a1, a2)


def test_tracking_follows_crossing_lines():
    # two lines crossing at k = 0; sorting swaps them, tracking must not
    k = np.linspace(-1, 1, 21)
    lines = np.stack([k + 0.1j * k, -k - 0.1j * k], axis=1)
    perm = np.argsort(lines.real, axis=1, kind="stable")
    values = np.take_along_axis(lines, perm, axis=1)
    vectors = np.stack([np.eye(2, dtype=complex)[:, p] for p in perm])
    order, ambiguous = track_bands(values, vectors)
    tracked = values[np.arange(k.size)[:, None], order]
    assert np.allclose(tracked, lines)
    assert ambiguous.sum() >= 1


@needs_numba
@pytest.mark.parametrize("wrap", [False, True])
@pytest.mark.parametrize("ncells", [2, 3, 7])
def test_assembly_parity(ncells, wrap, rng):
    blocks = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(3)]
    loop, vec = KERNELS["assemble_chain"]
    assert np.array_equal(loop(*blocks, ncells, wrap), vec(*blocks, ncells, wrap))


@needs_numba
@pytest.mark.parametrize("ncells", [1, 2, 5, 12])
def test_shuffle_parity_and_permutation(ncells):
    loop, vec = KERNELS["shuffle_matrix"]
    U = loop(ncells)
    assert np.array_equal(U, vec(ncells))
    assert np.all(U.sum(axis=0) == 1) and np.all(U.sum(axis=1) == 1)


def test_shuffle_swaps_a_sites():
    U = shuffle_matrix(2)
    n = 6
    for i in range(2 * n):
        j = int(np.flatnonzero(U[:, i])[0])
        if i % 3 == 0:
            assert abs(i - j) == n
        else:
            assert i == j


@needs_numba
@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1, max_size=50))
def test_center_parity(values):
    v = np.array(values, dtype=np.complex128)
    loop, vec = KERNELS["weighted_site_sum"]
    a, b = loop(v), vec(v)
    assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-12)
    assert a[1] == pytest.approx(b[1], rel=1e-12, abs=1e-12)


def test_env_flag_selects_numpy():
    code = "from flatskin import _accel; print(_accel.backend())"
    env = dict(os.environ, FLATSKIN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("FLATSKIN_THREADS", "3")
    assert _accel.thread_count() == 3
    monkeypatch.setenv("FLATSKIN_THREADS", "junk")
    assert _accel.thread_count() == 1
