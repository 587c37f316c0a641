"""Zero-energy subspace of the open chain.

Right zero modes (REVs) are orthonormalised and localised; left zero modes
(LEVs) are fixed by biorthogonality ``<lev_m|rev_n> = delta_mn``. With this
normalisation the non-normality shows up entirely in the LEV amplitudes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._kernels import weighted_site_sum
from .errors import DegeneracyAnomalyError, DomainError, NumericalError
from .model import as_params, builtin_flatband3, obc_hamiltonian


@dataclass(frozen=True)
class LocalizationReport:
    center_of_mass: float  # 1-based site index
    participation_ratio: float
    argmax_site: int  # 1-based
    max_abs: float


@dataclass
class ModeBasis:
    revs: np.ndarray  # (dim, n) orthonormal columns
    levs: np.ndarray  # (dim, n) with levs^H revs = I

    @property
    def size(self):
        return self.revs.shape[1]

    def projector(self):
        """Flat-band projector ``sum_n |rev_n><lev_n|``."""
        return self.revs @ self.levs.conj().T

    def pairing_error(self):
        M = self.levs.conj().T @ self.revs
        return float(np.abs(M - np.eye(self.size)).max())

    def residuals(self, H):
        r = np.linalg.norm(H @ self.revs, axis=0)
        l = np.linalg.norm(self.levs.conj().T @ H, axis=1)
        return r, l

    def remix(self, U):
        """Change of basis: ``revs U`` paired with ``levs U^{-H}``."""
        return ModeBasis(self.revs @ U, self.levs @ np.linalg.inv(U).conj().T)


def localization_report(v) -> LocalizationReport:
    v = np.asarray(v, dtype=np.complex128).ravel()
    num, den = weighted_site_sum(v)
    if den == 0.0:
        raise DomainError("localization of the zero vector is undefined")
    w = np.abs(v) ** 2
    pr = den ** 2 / float((w ** 2).sum())
    i = int(np.argmax(np.abs(v)))
    return LocalizationReport(num / den, pr, i + 1, float(np.abs(v[i])))


def _null_basis(H, tol):
    _, s, Vh = np.linalg.svd(H)
    cut = tol * (s[0] if s.size and s[0] > 0 else 1.0)
    rank = int((s > cut).sum())
    return Vh[rank:].conj().T, s


def _phase_fix(Q):
    i = np.argmax(np.abs(Q), axis=0)
    ph = Q[i, np.arange(Q.shape[1])]
    return Q * (np.abs(ph) / ph)[None, :]


def flatband_revs(H_obc, tol=1e-10, expected=None):
    """Orthonormal, localised basis of ``ker H_obc``, columns sorted by centre of mass.

    The null space comes from an SVD. Pivoted QR on its adjoint picks one
    anchor site per mode, and rescaling the basis to the identity on those
    anchors gives compactly concentrated vectors. A Gram-Schmidt pass in
    anchor order then orthonormalises them. For the built-in chain the anchors
    are the C sites and the result equals the orthonormalised CLS basis.
    """
    H = np.asarray(H_obc, dtype=np.complex128)
    if expected is None:
        expected = H.shape[0] // 3
    Z, s = _null_basis(H, tol)
    n = Z.shape[1]
    if n != expected:
        raise DegeneracyAnomalyError(
            f"null space has dimension {n}, expected {expected}", found=n, expected=expected)
    if n == 0:
        return Z
    _, _, piv = sla.qr(Z.conj().T, pivoting=True, mode="economic")
    anchors = np.sort(piv[:n])
    W = Z @ np.linalg.inv(Z[anchors])
    Q, _ = np.linalg.qr(W)
    Q = _phase_fix(Q)
    com = [weighted_site_sum(Q[:, j]) for j in range(n)]
    order = np.argsort([a / b for a, b in com], kind="stable")
    return Q[:, order]


def biorthogonal_levs(revs, H_obc, tol=1e-10, cond_limit=1e13):
    """LEVs dual to ``revs``: ``levs = L ((L^H revs)^{-1})^H`` for any left-null basis ``L``."""
    H = np.asarray(H_obc, dtype=np.complex128)
    L, _ = _null_basis(H.conj().T, tol)
    if L.shape[1] != revs.shape[1]:
        raise DegeneracyAnomalyError(
            f"left null space has dimension {L.shape[1]}, right has {revs.shape[1]}",
            found=L.shape[1], expected=revs.shape[1])
    M = L.conj().T @ revs
    if np.linalg.cond(M) > cond_limit:
        raise NumericalError("flat-band left/right subspaces orthogonal",
                             {"cond": float(np.linalg.cond(M))})
    return L @ np.linalg.inv(M).conj().T


def mode_basis(H_obc, tol=1e-10, expected=None) -> ModeBasis:
    revs = flatband_revs(H_obc, tol, expected)
    return ModeBasis(revs, biorthogonal_levs(revs, H_obc, tol))


def cls_basis(p, N, check=True, residual_tol=1e-12):
    """Compact localised zero modes of the built-in chain, one per cell.

    Cell ``n >= 2``: support ``{B_n, C_n, C_{n-1}}`` with amplitudes
    ``(1, -(t1-g1)/(t2-g2), -t2/(t2-g2))``. Cell 1: ``{B_1, C_1}`` only.
    The amplitudes cancel the two A-site rows the state touches; the residual
    ``||H psi||`` is checked before returning.
    """
    p = as_params(p)
    if p.t2 == p.gamma2:
        raise DomainError("unidirectional C-coupling: CLS support degenerates (t2 = gamma2)")
    ratio_c = -(p.t1 - p.gamma1) / (p.t2 - p.gamma2)
    ratio_prev = -p.t2 / (p.t2 - p.gamma2)
    V = np.zeros((3 * N, N), dtype=np.complex128)
    for n in range(N):
        V[3 * n + 1, n] = 1.0
        V[3 * n + 2, n] = float(ratio_c)
        if n > 0:
            V[3 * (n - 1) + 2, n] = float(ratio_prev)
    if check:
        H = obc_hamiltonian(builtin_flatband3(), p, N)
        res = np.linalg.norm(H @ V, axis=0)
        if res.max() > residual_tol:
            raise NumericalError("CLS residual above tolerance", {"max_residual": float(res.max())})
    return V


def cls_amplitudes(p):
    """``(1, C-own, C-neighbour)`` amplitudes of a bulk CLS."""
    p = as_params(p)
    return (1.0, -(p.t1 - p.gamma1) / (p.t2 - p.gamma2), -p.t2 / (p.t2 - p.gamma2))


def projector_onto(V):
    Q, _ = np.linalg.qr(V)
    return Q @ Q.conj().T


def mode_rows(basis: ModeBasis):
    """Rows ``(mode_index, site, |rev|, |lev|)`` for ``modes.csv``; 1-based."""
    rows = []
    for m in range(basis.size):
        r = np.abs(basis.revs[:, m])
        l = np.abs(basis.levs[:, m])
        for site in range(r.size):
            rows.append((m + 1, site + 1, float(r[site]), float(l[site])))
    return rows
