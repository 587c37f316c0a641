"""Band structures, open-chain spectra and point-gap tests."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import polygon_winding, track_bands
from .errors import NumericalError, OnCurveError, PreconditionError
from .model import ModelSpec, as_params, bloch_hamiltonian

log = logging.getLogger(__name__)

REGION_I, REGION_II, REGION_III, BOUNDARY = "I", "II", "III", "boundary"


@dataclass
class Spectrum:
    """Eigenvalues with per-value provenance and optional right eigenvectors."""

    values: np.ndarray
    provenance: np.ndarray
    vectors: np.ndarray | None = None
    source: str = "obc"

    def __len__(self):
        return len(self.values)

    def residuals(self, H):
        """``||H v - E v|| / ||v||`` per eigenpair."""
        if self.vectors is None:
            raise ValueError("spectrum carries no eigenvectors")
        V = self.vectors
        R = H @ V - V * self.values[None, :]
        return np.linalg.norm(R, axis=0) / np.linalg.norm(V, axis=0)

    def defective(self, tol=1e-8):
        """Mask of eigenvectors numerically parallel to another one (Jordan blocks)."""
        if self.vectors is None:
            raise ValueError("spectrum carries no eigenvectors")
        V = self.vectors / np.linalg.norm(self.vectors, axis=0)
        G = np.abs(V.conj().T @ V)
        np.fill_diagonal(G, 0.0)
        return (G > 1.0 - tol).any(axis=1)


def _lexsort(values):
    return np.lexsort((values.imag, values.real))


def eig_general(H, vectors=False) -> Spectrum:
    """All eigenvalues of a dense square matrix, sorted by (real, imag)."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise PreconditionError("matrix has non-finite entries")
    try:
        if vectors:
            w, V = np.linalg.eig(H)
        else:
            w, V = np.linalg.eigvals(H), None
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigenvalue iteration did not converge",
                             {"shape": H.shape, "lapack": str(exc)}) from None
    w = np.asarray(w, dtype=np.complex128)
    order = _lexsort(w)
    return Spectrum(w[order], order.astype(np.int64), None if V is None else V[:, order])


# -- PBC bands -----------------------------------------------------------------

@dataclass
class BandStructure:
    """Eigenvalues on a uniform k-grid, continued band by band."""

    k: np.ndarray
    values: np.ndarray  # (K, B) tracked
    vectors: np.ndarray  # (K, B, B) tracked, vectors[k, :, b]
    ambiguous_steps: int = 0
    flat_tol: float = 1e-9

    @property
    def nbands(self):
        return self.values.shape[1]

    @property
    def spectra(self):
        return [Spectrum(self.values[i], np.full(self.nbands, self.k[i]),
                         self.vectors[i], source="pbc") for i in range(len(self.k))]

    def flat_bands(self):
        spread = np.abs(self.values - self.values.mean(axis=0)).max(axis=0)
        return np.flatnonzero(spread < self.flat_tol)

    def dispersive_bands(self):
        flat = set(self.flat_bands().tolist())
        return [b for b in range(self.nbands) if b not in flat]

    def loops(self, bands=None):
        """Closed curves formed by the tracked bands.

        Band ``b`` ends the k circle next to the start of some band ``sigma(b)``;
        following ``sigma`` joins bands into loops of period ``2*pi*len(cycle)``.
        """
        if bands is None:
            bands = self.dispersive_bands()
        bands = list(bands)
        first = self.values[0, bands]
        last = self.values[-1, bands]
        # step size on the grid bounds how far the wrap-around may move
        remaining = set(range(len(bands)))
        succ = {}
        for i in range(len(bands)):
            d = np.abs(first - last[i])
            for j in np.argsort(d, kind="stable"):
                if j in remaining:
                    succ[i] = int(j)
                    remaining.discard(j)
                    break
        loops, seen = [], set()
        for start in range(len(bands)):
            if start in seen:
                continue
            cycle, cur = [], start
            while cur not in seen:
                seen.add(cur)
                cycle.append(cur)
                cur = succ[cur]
            loops.append(np.concatenate([self.values[:, bands[c]] for c in cycle]))
        return loops


def pbc_bands(spec: ModelSpec, p, k_count: int = 401, tie_tol: float = 1e-12) -> BandStructure:
    if k_count < 64:
        raise PreconditionError(f"k_count must be >= 64, got {k_count}")
    p = as_params(p)
    H0, Tp, Tm = spec.blocks(p)
    ks = 2.0 * np.pi * np.arange(k_count) / k_count
    phases = np.exp(1j * ks)
    Hk = H0[None] + Tp[None] * phases[:, None, None] + Tm[None] / phases[:, None, None]
    try:
        w, V = np.linalg.eig(Hk)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigenvalue iteration did not converge", {"lapack": str(exc)}) from None
    for i in range(k_count):
        o = _lexsort(w[i])
        w[i] = w[i, o]
        V[i] = V[i][:, o]
    order, ambiguous = track_bands(w, V, tie_tol)
    rows = np.arange(k_count)[:, None]
    values = w[rows, order]
    vectors = np.take_along_axis(V, order[:, None, :], axis=2)
    n_amb = int(ambiguous.sum())
    if n_amb:
        log.info("band tracking: %d tie(s) broken by eigenvector overlap", n_amb)
    return BandStructure(ks, values, vectors, n_amb)


# -- analytic dispersive bands -------------------------------------------------

def hermitian_delta(p, k):
    """``t1^2 + 2 t2^2 + 2 t1 t2 cos k``."""
    p = as_params(p)
    return p.t1 ** 2 + 2 * p.t2 ** 2 + 2 * p.t1 * p.t2 * np.cos(k)


def dispersive_energy_squared(p, k):
    """``f(k)`` with dispersive energies ``+-sqrt(f)``.

    ``f = t1^2 + 2 t2^2 + 2 t1 t2 cos k - (g1^2 + g2^2) - 2i g1 t2 sin k``.
    """
    p = as_params(p)
    g2sum = p.gamma1 ** 2 + p.gamma2 ** 2
    return hermitian_delta(p, k) - g2sum - 2j * p.gamma1 * p.t2 * np.sin(k)


@dataclass(frozen=True)
class RegionLabel:
    label: str
    thresholds: tuple  # (lower, upper) values of gamma1^2 + gamma2^2
    gamma_sq: float = field(default=float("nan"))

    def __str__(self):
        return self.label


def region_thresholds(p):
    p = as_params(p)
    a, b = float(hermitian_delta(p, 0.0)), float(hermitian_delta(p, math.pi))
    return (min(a, b), max(a, b))


def region_classify(p, rel_tol=1e-12) -> RegionLabel:
    """Label the (gamma1, gamma2) point I / II / III / boundary.

    ``f(k) = 0`` needs ``sin k = 0`` once ``gamma1 != 0``, so the PBC line gap
    closes on the two circles ``g1^2 + g2^2 = Delta(0)`` and ``Delta(pi)``.
    At ``gamma1 = 0`` the dispersive loops collapse onto the real axis and the
    whole band between the circles is gapless, hence ``boundary``.
    """
    p = as_params(p)
    lo, hi = region_thresholds(p)
    s = float(p.gamma1) ** 2 + float(p.gamma2) ** 2
    scale = max(1.0, hi)
    if abs(s - lo) <= rel_tol * scale or abs(s - hi) <= rel_tol * scale:
        return RegionLabel(BOUNDARY, (lo, hi), s)
    if s < lo:
        return RegionLabel(REGION_I, (lo, hi), s)
    if s > hi:
        return RegionLabel(REGION_III, (lo, hi), s)
    if p.gamma1 == 0:
        return RegionLabel(BOUNDARY, (lo, hi), s)
    return RegionLabel(REGION_II, (lo, hi), s)


def boundary_distance(p):
    """Euclidean distance in the (gamma1, gamma2) plane to the gap-closing set."""
    p = as_params(p)
    lo, hi = region_thresholds(p)
    g1, g2 = float(p.gamma1), float(p.gamma2)
    r = math.hypot(g1, g2)
    d = min(abs(r - math.sqrt(max(lo, 0.0))), abs(r - math.sqrt(max(hi, 0.0))))
    # gamma1 = 0 segment between the circles
    seg_lo, seg_hi = math.sqrt(max(lo, 0.0)), math.sqrt(max(hi, 0.0))
    nearest = min(max(abs(g2), seg_lo), seg_hi)
    return min(d, math.hypot(g1, abs(g2) - nearest))


def pointgap_encloses(bands: BandStructure, E_ref=0.0, on_curve_tol=1e-9):
    """Does the dispersive PBC spectrum wind around ``E_ref``?

    Returns ``(enclosed, winding)``. Flat bands are dropped; the remaining
    bands are joined into closed loops (see :meth:`BandStructure.loops`) and
    the signed angle sums are added up.
    """
    total = 0.0
    for loop in bands.loops():
        w, dmin = polygon_winding(loop, E_ref)
        if dmin < on_curve_tol:
            raise OnCurveError(f"E_ref={E_ref} lies within {dmin:.2e} of a sampled eigenvalue")
        total += w
    winding = int(round(total))
    if abs(total - winding) > 1e-6:
        raise NumericalError("winding sum is not an integer; refine the k-grid",
                             {"raw_winding": total})
    return winding != 0, winding


def spectrum_rows(bands: BandStructure | None = None, obc: Spectrum | None = None):
    """Rows ``(source, k_or_index, re_E, im_E, band_id)`` for ``spectrum.csv``."""
    rows = []
    if bands is not None:
        for i, k in enumerate(bands.k):
            for b in range(bands.nbands):
                E = bands.values[i, b]
                rows.append(("pbc", float(k), E.real, E.imag, b))
    if obc is not None:
        for i, E in enumerate(obc.values):
            rows.append(("obc", i, E.real, E.imag, -1))
    return rows
