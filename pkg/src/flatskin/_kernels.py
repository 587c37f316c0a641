"""Inner-loop kernels.

Each kernel exists twice: a loop formulation compiled with numba
(``*_loop``) and a vectorised numpy formulation (``*_np``). The public
names dispatch on :data:`flatskin._accel.USE_NUMBA`. Both paths must agree
exactly on integer outputs and to rounding on float outputs; the test suite
runs them side by side.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

TWO_PI = 2.0 * math.pi


# -- polygon winding ---------------------------------------------------------

@njit
def _winding_loop(re, im, ref_re, ref_im):
    n = re.shape[0]
    total = 0.0
    dmin = np.inf
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        x0 = re[i] - ref_re
        y0 = im[i] - ref_im
        x1 = re[j] - ref_re
        y1 = im[j] - ref_im
        d = math.hypot(x0, y0)
        if d < dmin:
            dmin = d
        total += math.atan2(x0 * y1 - y0 * x1, x0 * x1 + y0 * y1)
    return total / TWO_PI, dmin


def _winding_np(re, im, ref_re, ref_im):
    z = (re - ref_re) + 1j * (im - ref_im)
    z1 = np.roll(z, -1)
    cross = z.real * z1.imag - z.imag * z1.real
    dot = z.real * z1.real + z.imag * z1.imag
    return float(np.arctan2(cross, dot).sum() / TWO_PI), float(np.abs(z).min())


def polygon_winding(curve, ref):
    """Winding of the closed polygon ``curve`` (complex samples) around ``ref``.

    Returns ``(raw_winding, min_distance)``; the raw winding is a float that is
    an integer up to rounding when the polygon is well sampled.
    """
    curve = np.ascontiguousarray(curve, dtype=np.complex128)
    re = np.ascontiguousarray(curve.real)
    im = np.ascontiguousarray(curve.imag)
    ref = complex(ref)
    if USE_NUMBA:
        w, d = _winding_loop(re, im, ref.real, ref.imag)
        return float(w), float(d)
    return _winding_np(re, im, ref.real, ref.imag)


# -- greedy band tracking ----------------------------------------------------

@njit
def _track_loop(values, vectors, tie_tol):
    K, B = values.shape
    order = np.empty((K, B), dtype=np.int64)
    ambiguous = np.zeros(K, dtype=np.int64)
    for b in range(B):
        order[0, b] = b
    D = np.empty((B, B))
    for k in range(1, K):
        for i in range(B):
            pi = order[k - 1, i]
            for j in range(B):
                D[i, j] = abs(values[k - 1, pi] - values[k, j])
        row_done = np.zeros(B, dtype=np.bool_)
        col_done = np.zeros(B, dtype=np.bool_)
        for _ in range(B):
            best = np.inf
            bi = -1
            bj = -1
            for i in range(B):
                if row_done[i]:
                    continue
                for j in range(B):
                    if col_done[j]:
                        continue
                    if D[i, j] < best:
                        best = D[i, j]
                        bi = i
                        bj = j
            # tie among free columns of the chosen row: pick by eigenvector overlap
            pi = order[k - 1, bi]
            best_ov = -1.0
            ntie = 0
            for j in range(B):
                if col_done[j] or D[bi, j] - best > tie_tol:
                    continue
                ntie += 1
                ov = 0.0
                re_acc = 0.0
                im_acc = 0.0
                for r in range(B):
                    a = vectors[k - 1, r, pi]
                    c = vectors[k, r, j]
                    prod = a.conjugate() * c
                    re_acc += prod.real
                    im_acc += prod.imag
                ov = math.hypot(re_acc, im_acc)
                if ov > best_ov:
                    best_ov = ov
                    bj = j
            if ntie > 1:
                ambiguous[k] += 1
            order[k, bi] = bj
            row_done[bi] = True
            col_done[bj] = True
    return order, ambiguous


def _track_np(values, vectors, tie_tol):
    K, B = values.shape
    order = np.empty((K, B), dtype=np.int64)
    ambiguous = np.zeros(K, dtype=np.int64)
    order[0] = np.arange(B)
    for k in range(1, K):
        prev = values[k - 1, order[k - 1]]
        D = np.abs(prev[:, None] - values[k][None, :])
        free_rows = np.ones(B, dtype=bool)
        free_cols = np.ones(B, dtype=bool)
        for _ in range(B):
            masked = np.where(free_rows[:, None] & free_cols[None, :], D, np.inf)
            bi, bj = np.unravel_index(np.argmin(masked), masked.shape)
            best = masked[bi, bj]
            tied = np.flatnonzero(free_cols & (D[bi] - best <= tie_tol))
            if tied.size > 1:
                ambiguous[k] += 1
                v_prev = vectors[k - 1][:, order[k - 1, bi]]
                ov = np.abs(v_prev.conj() @ vectors[k][:, tied])
                bj = tied[np.argmax(ov)]
            order[k, bi] = bj
            free_rows[bi] = False
            free_cols[bj] = False
    return order, ambiguous


def track_bands(values, vectors, tie_tol=1e-12):
    """Greedy nearest-neighbour continuation of eigenvalues along a k path.

    Parameters
    ----------
    values : (K, B) complex array
    vectors : (K, B, B) complex array, columns are eigenvectors
    tie_tol : float
        Distance window inside which candidates count as tied; ties are broken
        by the largest eigenvector overlap.

    Returns
    -------
    order : (K, B) int array
        ``values[k, order[k, b]]`` is band ``b`` at step ``k``.
    ambiguous : (K,) int array
        Number of tie-breaks used at each step.
    """
    values = np.ascontiguousarray(values, dtype=np.complex128)
    vectors = np.ascontiguousarray(vectors, dtype=np.complex128)
    if USE_NUMBA:
        return _track_loop(values, vectors, float(tie_tol))
    return _track_np(values, vectors, float(tie_tol))


# -- block-tridiagonal assembly ----------------------------------------------

@njit
def _assemble_loop(H0, Tplus, Tminus, ncells, wrap):
    B = H0.shape[0]
    H = np.zeros((B * ncells, B * ncells), dtype=np.complex128)
    for n in range(ncells):
        o = n * B
        for i in range(B):
            for j in range(B):
                H[o + i, o + j] = H0[i, j]
        if n + 1 < ncells:
            p = o + B
            for i in range(B):
                for j in range(B):
                    H[p + i, o + j] = Tplus[i, j]
                    H[o + i, p + j] = Tminus[i, j]
    if wrap:
        last = (ncells - 1) * B
        for i in range(B):
            for j in range(B):
                H[i, last + j] += Tplus[i, j]
                H[last + i, j] += Tminus[i, j]
    return H


def _assemble_np(H0, Tplus, Tminus, ncells, wrap):
    eye = np.eye(ncells)
    lower = np.eye(ncells, k=-1)
    upper = np.eye(ncells, k=1)
    if wrap:
        lower[0, ncells - 1] += 1.0
        upper[ncells - 1, 0] += 1.0
    return np.kron(eye, H0) + np.kron(lower, Tplus) + np.kron(upper, Tminus)


def assemble_chain(H0, Tplus, Tminus, ncells, wrap=False):
    """Cell-major chain matrix: H0 on the diagonal, Tplus below, Tminus above.

    With ``wrap`` the ring closure adds Tplus at (cell 1, cell N) and Tminus
    at (cell N, cell 1).
    """
    H0 = np.ascontiguousarray(H0, dtype=np.complex128)
    Tplus = np.ascontiguousarray(Tplus, dtype=np.complex128)
    Tminus = np.ascontiguousarray(Tminus, dtype=np.complex128)
    if USE_NUMBA:
        return _assemble_loop(H0, Tplus, Tminus, int(ncells), bool(wrap))
    return _assemble_np(H0, Tplus, Tminus, int(ncells), bool(wrap))


# -- shuffle permutation -------------------------------------------------------

@njit
def _shuffle_loop(ncells):
    half = 3 * ncells
    n = 2 * half
    U = np.zeros((n, n))
    for m in range(1, n + 1):
        for c in range(1, n + 1):
            if m == c:
                if c % 3 != 1:
                    U[m - 1, c - 1] = 1.0
            elif min(m, c) % 3 == 1 and abs(m - c) == half:
                U[m - 1, c - 1] = 1.0
    return U


def _shuffle_np(ncells):
    half = 3 * ncells
    idx = np.arange(1, 2 * half + 1)
    m = idx[:, None]
    c = idx[None, :]
    diag = (m == c) & (c % 3 != 1)
    swap = (m != c) & (np.minimum(m, c) % 3 == 1) & (np.abs(m - c) == half)
    return (diag | swap).astype(float)


def shuffle_matrix(ncells):
    """0/1 matrix from the 1-based index rule: keep ``n`` with ``n mod 3 != 1``,
    swap ``n`` and ``n + 3N`` when ``n mod 3 == 1``."""
    if USE_NUMBA:
        return _shuffle_loop(int(ncells))
    return _shuffle_np(int(ncells))


# -- weighted centre ----------------------------------------------------------

@njit
def _center_loop(amplitudes):
    n = amplitudes.shape[0]
    num = 0.0
    den = 0.0
    for i in range(n):
        w = amplitudes[i].real ** 2 + amplitudes[i].imag ** 2
        num += (i + 1) * w
        den += w
    return num, den


def _center_np(amplitudes):
    w = np.abs(amplitudes) ** 2
    return float(np.arange(1, w.size + 1) @ w), float(w.sum())


def weighted_site_sum(amplitudes):
    """Return ``(sum_n n |v_n|^2, sum_n |v_n|^2)`` with 1-based ``n``."""
    amplitudes = np.ascontiguousarray(amplitudes, dtype=np.complex128)
    if USE_NUMBA:
        num, den = _center_loop(amplitudes)
        return float(num), float(den)
    return _center_np(amplitudes)


KERNELS = {
    "polygon_winding": (_winding_loop, _winding_np),
    "track_bands": (_track_loop, _track_np),
    "assemble_chain": (_assemble_loop, _assemble_np),
    "shuffle_matrix": (_shuffle_loop, _shuffle_np),
    "weighted_site_sum": (_center_loop, _center_np),
}
