"""Zero-energy multiplicities, Jordan structure and the spectral rotation.

Exact counts use :class:`fractions.Fraction` with fraction-free (Bareiss)
elimination, so rank statements carry no tolerance at all.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from ._accel import thread_count
from ._kernels import shuffle_matrix
from .errors import NumericalError, PreconditionError
from .model import ModelSpec, as_params, builtin_flatband3, obc_hamiltonian

log = logging.getLogger(__name__)


# -- exact arithmetic -----------------------------------------------------------

class RationalMatrix:
    """Dense matrix of exact rationals."""

    def __init__(self, entries):
        rows = [[Fraction(x) for x in row] for row in entries]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise PreconditionError("ragged rows")
        self.entries = rows
        self.rows = len(rows)
        self.cols = widths.pop() if rows else 0

    @classmethod
    def identity(cls, n):
        return cls([[int(i == j) for j in range(n)] for i in range(n)])

    @classmethod
    def from_array(cls, a):
        return cls([list(r) for r in np.asarray(a, dtype=object)])

    def __eq__(self, other):
        return isinstance(other, RationalMatrix) and self.entries == other.entries

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def __sub__(self, other):
        return RationalMatrix([[a - b for a, b in zip(r, s)] for r, s in zip(self.entries, other.entries)])

    def __matmul__(self, other):
        if self.cols != other.rows:
            raise PreconditionError("shape mismatch")
        cols = list(zip(*other.entries))
        return RationalMatrix([[sum((a * b for a, b in zip(r, c)), Fraction(0)) for c in cols]
                               for r in self.entries])

    def shift(self, lam):
        """``self - lam * I``."""
        lam = Fraction(lam)
        return RationalMatrix([[x - lam if i == j else x for j, x in enumerate(r)]
                               for i, r in enumerate(self.entries)])

    def power(self, k):
        out = RationalMatrix.identity(self.rows)
        for _ in range(k):
            out = out @ self
        return out

    def submatrix(self, rows, cols):
        return RationalMatrix([[self.entries[i][j] for j in cols] for i in rows])

    def rank(self):
        """Bareiss elimination on the row-wise integer rescaling."""
        M = []
        for r in self.entries:
            lcm = 1
            for x in r:
                lcm = lcm * x.denominator // math.gcd(lcm, x.denominator)
            M.append([int(x * lcm) for x in r])
        m, n = self.rows, self.cols
        rank, prev = 0, 1
        for c in range(n):
            pivot = next((i for i in range(rank, m) if M[i][c] != 0), None)
            if pivot is None:
                continue
            M[rank], M[pivot] = M[pivot], M[rank]
            pr = M[rank]
            for i in range(rank + 1, m):
                ri = M[i]
                f = ri[c]
                # exact division is guaranteed by Sylvester's identity
                M[i] = [(pr[c] * ri[j] - f * pr[j]) // prev for j in range(n)]
            prev = pr[c]
            rank += 1
            if rank == m:
                break
        return rank

    def nullity(self):
        return self.cols - self.rank()


def _assemble_exact(spec: ModelSpec, p, N):
    H0, Tp, Tm = spec.blocks(p, exact=True)
    B = spec.bands
    M = [[Fraction(0)] * (B * N) for _ in range(B * N)]
    for n in range(N):
        o = B * n
        for i in range(B):
            for j in range(B):
                M[o + i][o + j] = H0[i, j]
                if n + 1 < N:
                    M[o + B + i][o + j] = Tp[i, j]
                    M[o + i][o + B + j] = Tm[i, j]
    return RationalMatrix(M)


def exact_obc_hamiltonian(p, N, spec: ModelSpec | None = None) -> RationalMatrix:
    p = as_params(p)
    if not p.is_exact:
        raise PreconditionError("exact arithmetic needs Fraction/int parameters")
    return _assemble_exact(spec or builtin_flatband3(), p, N)


def exact_null_dim(p, N, spec: ModelSpec | None = None):
    """``dim ker H_OBC`` with zero tolerance."""
    return exact_obc_hamiltonian(p, N, spec).nullity()


def exact_blockwise_null_dim(p, N):
    """``dim ker A + dim ker B`` for the sublattice form ``[[0, A], [B, 0]]``.

    ``A`` couples A-site rows to B/C columns; ``B`` the reverse. Raises if the
    diagonal sublattice blocks are not identically zero.
    """
    H = exact_obc_hamiltonian(p, N)
    a_sites = [3 * n for n in range(N)]
    bc_sites = [3 * n + o for n in range(N) for o in (1, 2)]
    for rows in (a_sites, bc_sites):
        S = H.submatrix(rows, rows)
        if any(x != 0 for r in S.entries for x in r):
            raise PreconditionError("matrix is not sublattice off-diagonal")
    A = H.submatrix(a_sites, bc_sites)
    B = H.submatrix(bc_sites, a_sites)
    return A.nullity() + B.nullity()


@dataclass
class JordanReport:
    N: int
    eigenvalue: tuple  # (0, t2, -t2)
    algebraic: dict  # eigenvalue -> algebraic multiplicity
    geometric: dict  # eigenvalue -> dim ker (H - lam)
    kernel_chain: dict  # eigenvalue -> [dim ker (H - lam)^k, k = 1..]

    def multiset(self):
        return {lam: self.algebraic[lam] for lam in self.eigenvalue}

    def chain_lengths(self, lam):
        """Number of Jordan chains of length >= k, k = 1, 2, ..."""
        dims = [0] + self.kernel_chain[lam]
        return [dims[k] - dims[k - 1] for k in range(1, len(dims))]

    def ok(self):
        N = self.N
        z, tp, tm = self.eigenvalue
        return (self.algebraic == {z: N + 2, tp: N - 1, tm: N - 1}
                and self.geometric == {z: N + 1, tp: 1, tm: 1}
                and self.chain_lengths(z)[:2] == [N + 1, 1])


def jordan_special_case(t1, t2, N, gamma1=None, gamma2=None) -> JordanReport:
    """Exact Jordan data of the open chain on the locus ``t1 = gamma1, t2 = gamma2``.

    For each ``lam`` in ``{0, t2, -t2}`` the dimensions ``dim ker (H - lam)^k``
    are computed until they stop growing; the final value is the algebraic
    multiplicity and the first is the geometric one.
    """
    t1, t2 = Fraction(t1), Fraction(t2)
    g1 = t1 if gamma1 is None else Fraction(gamma1)
    g2 = t2 if gamma2 is None else Fraction(gamma2)
    if g1 != t1 or g2 != t2:
        raise PreconditionError("parameters are off the locus t1 = gamma1, t2 = gamma2")
    if t2 == 0:
        raise PreconditionError("t2 = 0 merges the three eigenvalues")
    if N < 2:
        raise PreconditionError("N must be >= 2")
    H = exact_obc_hamiltonian((t1, t2, g1, g2), N)
    lams = (Fraction(0), t2, -t2)
    alg, geo, chains = {}, {}, {}
    for lam in lams:
        S = H.shift(lam)
        P = S
        dims = [S.nullity()]
        while True:
            P = P @ S
            d = P.nullity()
            if d == dims[-1]:
                break
            dims.append(d)
        alg[lam], geo[lam], chains[lam] = dims[-1], dims[0], dims
    if sum(alg.values()) != 3 * N:
        raise NumericalError("generalised eigenspaces do not fill the space",
                             {"algebraic": {str(k): v for k, v in alg.items()}})
    return JordanReport(N, lams, alg, geo, chains)


# -- numerical multiplicities ---------------------------------------------------

@dataclass
class MultiplicityReport:
    algebraic_zero: int
    geometric_zero: int
    N: int
    tol: float
    warnings: list = field(default_factory=list)

    @property
    def is_ep(self):
        return self.algebraic_zero > self.geometric_zero


def multiplicities_at_zero(H_obc, tol=None, rank_tol=1e-10, bands=3) -> MultiplicityReport:
    """Algebraic (eigenvalue cluster) and geometric (SVD null space) counts at 0.

    ``tol`` defaults to ``1e-6 * ||H||_F``. A warning is attached when some
    eigenvalue magnitude lies within a factor 10 of ``tol`` on either side,
    i.e. the threshold does not separate a clean cluster.
    """
    H = np.asarray(H_obc, dtype=np.complex128)
    norm = float(np.linalg.norm(H))
    if tol is None:
        tol = 1e-6 * max(norm, 1.0)
    mags = np.sort(np.abs(np.linalg.eigvals(H)))
    inside = mags[mags < tol]
    s = np.linalg.svd(H, compute_uv=False)
    geo = int((s <= rank_tol * (s[0] if s[0] > 0 else 1.0)).sum())
    warnings = []
    straddle = mags[(mags > tol / 10) & (mags < 10 * tol)]
    if straddle.size:
        warnings.append(f"ambiguous tolerance: {straddle.size} eigenvalue(s) within 10x of tol={tol:.3g}")
    rep = MultiplicityReport(int(inside.size), geo, H.shape[0] // bands, float(tol), warnings)
    if rep.geometric_zero > rep.algebraic_zero:
        rep.warnings.append("geometric count exceeds algebraic count; tolerance too tight")
    return rep


# -- OBC EP scan ----------------------------------------------------------------

def _sublattice_blocks(H, bands=3):
    n = H.shape[0]
    a = np.arange(0, n, bands)
    bc = np.setdiff1d(np.arange(n), a)
    return H[np.ix_(a, bc)], H[np.ix_(bc, a)]


def dispersive_min_abs(H_obc):
    """``min |E|`` over the dispersive OBC eigenvalues (``E^2 = eig(A B)``)."""
    A, B = _sublattice_blocks(np.asarray(H_obc))
    return float(np.sqrt(np.abs(np.linalg.eigvals(A @ B)).min()))


def _signed_indicator(spec, base, g1, g2, N):
    H = obc_hamiltonian(spec, base.replace(gamma1=g1, gamma2=g2), N)
    A, B = _sublattice_blocks(H)
    M = A @ B
    M = M / np.linalg.norm(M)
    d = np.linalg.det(M)
    return float(d.real)


@dataclass
class EpLocus:
    gamma1: float
    gamma2: float
    min_abs_E: float
    report: MultiplicityReport


@dataclass
class EpScan:
    gamma1_grid: np.ndarray
    gamma2_grid: np.ndarray
    min_abs_E: np.ndarray  # [i, j]
    loci: list
    unresolved: list  # (gamma1, gamma2_lo, gamma2_hi)

    def rows(self):
        out = []
        for i, g1 in enumerate(self.gamma1_grid):
            for j, g2 in enumerate(self.gamma2_grid):
                out.append((float(g1), float(g2), float(self.min_abs_E[i, j]), 0))
        for loc in self.loci:
            out.append((loc.gamma1, loc.gamma2, loc.min_abs_E, int(loc.report.is_ep)))
        return out

    def crossings(self, gamma1):
        return sorted(l.gamma2 for l in self.loci if l.gamma1 == gamma1)


def obc_ep_scan(gamma1_grid, gamma2_grid, N, base_params=None, spec: ModelSpec | None = None,
                threads=None, xtol=1e-15, recheck_rel_tol=1e-4) -> EpScan:
    """Locate gamma2 values where a pair of OBC dispersive eigenvalues reaches 0.

    With real parameters ``det(A B)`` is real and vanishes exactly where some
    ``E^2 = 0``. Sign changes between neighbouring gamma2 samples are refined
    with Brent's method and rechecked through :func:`multiplicities_at_zero`.
    The recheck tolerance is ``recheck_rel_tol * ||H||_F``: at a refined root
    the merging eigenvalues still sit at ``O(eps^(1/3))`` (a flat-band mode
    can join the pair), far above the default cluster threshold.
    Cells where ``min |E|`` dips without a sign change (an even number of
    crossings inside one step) are reported as unresolved.
    """
    if N < 8:
        raise PreconditionError(f"EP scan needs N >= 8, got {N}")
    spec = spec or builtin_flatband3()
    base = as_params(base_params if base_params is not None else spec.defaults())
    if any(complex(v).imag != 0 for v in base):
        raise PreconditionError("EP scan needs real parameters")
    g1s = np.asarray(gamma1_grid, dtype=float)
    g2s = np.asarray(gamma2_grid, dtype=float)
    if g2s.size < 2 or np.any(np.diff(g2s) <= 0):
        raise PreconditionError("gamma2 grid must be strictly increasing with >= 2 points")

    def indicator(g1, g2):
        return _signed_indicator(spec, base, g1, g2, N)

    def min_abs(g1, g2):
        return dispersive_min_abs(obc_hamiltonian(spec, base.replace(gamma1=g1, gamma2=g2), N))

    def roots_in(g1, grid, signs):
        out = []
        for j in range(grid.size - 1):
            if signs[j] == 0.0:
                out.append(float(grid[j]))
            elif signs[j] * signs[j + 1] < 0:
                out.append(brentq(lambda g: indicator(g1, g), grid[j], grid[j + 1],
                                  xtol=xtol, rtol=4 * np.finfo(float).eps))
        return out

    def refine(g1, lo, hi, depth):
        # an even number of crossings inside one step leaves no sign change
        grid = np.linspace(lo, hi, 17)
        signs = np.array([indicator(g1, g) for g in grid])
        found = roots_in(g1, grid, signs)
        if found:
            return found, []
        mins = np.array([min_abs(g1, g) for g in grid])
        j = int(np.argmin(mins))
        if 0 < j < grid.size - 1 and mins[j] < mins[0] and mins[j] < mins[-1]:
            if depth == 0:
                return [], [(float(g1), float(grid[j - 1]), float(grid[j + 1]))]
            return refine(g1, grid[j - 1], grid[j + 1], depth - 1)
        return [], []

    def line(g1):
        mins = np.array([min_abs(g1, g2) for g2 in g2s])
        signs = np.array([indicator(g1, g2) for g2 in g2s])
        roots = roots_in(g1, g2s, signs)
        unresolved = []
        changed = np.zeros(g2s.size, dtype=bool)
        flip = signs[:-1] * signs[1:] <= 0
        changed[:-1] |= flip
        changed[1:] |= flip
        for j in range(1, g2s.size - 1):
            if mins[j] < mins[j - 1] and mins[j] < mins[j + 1] and not changed[j]:
                r, u = refine(g1, g2s[j - 1], g2s[j + 1], depth=3)
                roots.extend(r)
                unresolved.extend(u)
        loci = []
        for root in sorted(set(roots)):
            H = obc_hamiltonian(spec, base.replace(gamma1=g1, gamma2=root), N)
            loci.append(EpLocus(float(g1), float(root), dispersive_min_abs(H),
                                multiplicities_at_zero(H, recheck_rel_tol * np.linalg.norm(H))))
        return mins, loci, unresolved

    n_threads = threads or thread_count()
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(line, g1s))
    else:
        results = [line(g) for g in g1s]
    mins = np.vstack([r[0] for r in results])
    loci = [l for r in results for l in r[1]]
    unresolved = [u for r in results for u in r[2]]
    return EpScan(g1s, g2s, mins, loci, unresolved)


# -- spectral rotation ----------------------------------------------------------

@dataclass
class Rotation:
    H1: np.ndarray
    U1: np.ndarray
    H2: np.ndarray
    U2: np.ndarray
    H2bar: np.ndarray
    H3: np.ndarray
    offdiag_max: float

    def spectrum_mismatch(self, H_obc):
        """Max distance between ``eig(H3)`` and ``i eig(H_obc)`` after optimal matching."""
        from scipy.optimize import linear_sum_assignment
        a = np.linalg.eigvals(self.H3)
        b = 1j * np.linalg.eigvals(np.asarray(H_obc))
        D = np.abs(a[:, None] - b[None, :])
        r, c = linear_sum_assignment(D)
        return float(D[r, c].max())


def rotate_spectrum(H_obc, imag_tol=1e-14, offdiag_tol=1e-12) -> Rotation:
    """Turn a real ``H`` into the real matrix ``H3`` with ``eig(H3) = i eig(H)``.

    ``H1 = i H``; ``U1^H (H1 + conj(H1)) U1 = H2 = [[0, H], [-H, 0]]`` with
    ``U1 = [[-i, -1], [i, -1]] / sqrt(2)`` per block; the shuffle ``U2`` swaps
    the A sites of the two copies, after which ``H2`` splits into ``H3`` and
    ``-H3``.
    """
    H = np.asarray(H_obc)
    if H.shape[0] % 3:
        raise PreconditionError("matrix size must be a multiple of 3")
    if np.abs(np.imag(H)).max(initial=0.0) > imag_tol * max(1.0, np.abs(H).max()):
        raise PreconditionError("rotation needs a real-valued Hamiltonian")
    H = np.real(H).astype(float)
    n = H.shape[0]
    N = n // 3
    H1 = 1j * H
    u = np.array([[-1j, -1.0], [1j, -1.0]]) / math.sqrt(2)
    U1 = np.kron(u, np.eye(n))
    Z = np.zeros_like(H)
    H2 = np.block([[Z, H], [-H, Z]])
    U2 = shuffle_matrix(N)
    ok = (set(np.unique(U2)) <= {0.0, 1.0}
          and np.all(U2.sum(axis=0) == 1) and np.all(U2.sum(axis=1) == 1))
    if not ok:
        raise NumericalError("shuffle matrix is not a permutation")
    H2bar = U2.T @ H2 @ U2
    off = max(np.abs(H2bar[:n, n:]).max(), np.abs(H2bar[n:, :n]).max())
    H3 = H2bar[:n, :n].copy()
    off = max(off, np.abs(H2bar[n:, n:] + H3).max())
    if off > offdiag_tol * max(1.0, np.abs(H).max()):
        raise NumericalError("shuffled matrix is not block diagonal", {"offdiag_max": float(off)})
    return Rotation(H1, U1, H2, U2, H2bar, H3, float(off))


def multiplicity_rows(reports):
    """Rows ``(gamma1, gamma2, N, algebraic_zero, geometric_zero, is_ep)``."""
    return [(g1, g2, r.N, r.algebraic_zero, r.geometric_zero, int(r.is_ep)) for g1, g2, r in reports]
