"""Green's-function responses of the open chain at the flat-band energy."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._accel import thread_count
from ._kernels import weighted_site_sum
from .errors import DomainError, FlatSkinError, NumericalError, PreconditionError
from .flatband import ModeBasis, mode_basis
from .model import ModelSpec, as_params, obc_hamiltonian
from .spectra import region_thresholds

DEFAULT_ETA = 1e-8
METHODS = ("direct-inverse", "flat-band-projector")


@dataclass(frozen=True)
class GreenProbe:
    E_probe: complex = 1j * DEFAULT_ETA
    source_site: int = 2  # 0-based row; 2 is orbital C of cell 1
    method: str = "direct-inverse"

    def __post_init__(self):
        if self.method not in METHODS:
            raise PreconditionError(f"unknown method {self.method!r}; choose from {METHODS}")

    @classmethod
    def at(cls, cell=1, orbital=2, eta=DEFAULT_ETA, method="direct-inverse", bands=3):
        return cls(1j * eta, bands * (cell - 1) + orbital, method)


def _source(dim, site):
    if not 0 <= site < dim:
        raise PreconditionError(f"source site {site} outside 0..{dim - 1}")
    s = np.zeros(dim, dtype=np.complex128)
    s[site] = 1.0
    return s


def green_response(H_obc, probe: GreenProbe = GreenProbe(), basis: ModeBasis | None = None):
    """Normalised response ``G(E) |s>`` with ``sum |R_n|^2 = 1``.

    ``direct-inverse`` factorises ``E - H`` (partial pivoting) and solves.
    ``flat-band-projector`` keeps only the zero-energy Lehmann term
    ``E^-1 sum_n |rev_n><lev_n|``; after normalisation ``E`` drops out.
    """
    H = np.asarray(H_obc, dtype=np.complex128)
    dim = H.shape[0]
    s = _source(dim, probe.source_site)
    E = complex(probe.E_probe)
    if probe.method == "direct-inverse":
        if E == 0:
            raise DomainError("E_probe = 0 makes E - H singular on the flat band; use a nonzero eta")
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                lu = sla.lu_factor(E * np.eye(dim) - H, check_finite=False)
                R = sla.lu_solve(lu, s, check_finite=False)
            except (sla.LinAlgWarning, np.linalg.LinAlgError, ValueError) as exc:
                raise NumericalError("resolvent solve failed", {"E_probe": E, "error": str(exc)}) from None
    else:
        if basis is None:
            basis = mode_basis(H)
        R = basis.revs @ (basis.levs.conj().T @ s)
    norm = np.linalg.norm(R)
    if not np.isfinite(norm) or norm == 0.0:
        raise NumericalError("response is zero or non-finite", {"norm": float(norm)})
    return R / norm


def chi(R, total_sites=None, tol=1e-10):
    """Response centre ``sum_n (n / M) |R_n|^2`` with 1-based ``n`` and ``M`` sites."""
    R = np.asarray(R, dtype=np.complex128).ravel()
    M = R.size if total_sites is None else int(total_sites)
    num, den = weighted_site_sum(R)
    if abs(den - 1.0) > tol:
        raise DomainError(f"response not normalised: sum |R|^2 = {den:.12g}")
    return num / M


@dataclass
class ChiMap:
    gamma1_grid: np.ndarray
    gamma2_grid: np.ndarray
    chi: np.ndarray  # chi[i, j] at (gamma1_grid[i], gamma2_grid[j]); NaN = failed cell
    region_boundaries: list = field(default_factory=list)  # [(name, (M, 2) polyline)]
    failures: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for i, g1 in enumerate(self.gamma1_grid):
            for j, g2 in enumerate(self.gamma2_grid):
                out.append((float(g1), float(g2), float(self.chi[i, j])))
        return out


def boundary_polylines(p, g1_max=2.0, g2_max=2.0, samples=181):
    """Gap-closing set in the first quadrant: two circles plus the gamma1 = 0 segment."""
    lo, hi = region_thresholds(p)
    lines = []
    th = np.linspace(0.0, np.pi / 2, samples)
    for name, r2 in (("gap_close", lo), ("gap_reopen", hi)):
        if r2 <= 0:
            continue
        r = math.sqrt(r2)
        pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
        keep = (pts[:, 0] <= g1_max + 1e-12) & (pts[:, 1] <= g2_max + 1e-12)
        lines.append((name, pts[keep]))
    if lo > 0:
        seg = np.column_stack([np.zeros(2), [math.sqrt(lo), math.sqrt(hi)]])
        lines.append(("hermitian_axis", seg))
    return lines


def _chi_cell(spec, base, g1, g2, N, probe):
    p = base.replace(gamma1=g1, gamma2=g2)
    H = obc_hamiltonian(spec, p, N)
    return chi(green_response(H, probe))


def chi_map(spec: ModelSpec, base_params, gamma1_grid, gamma2_grid, N=20,
            probe: GreenProbe | None = None, threads=None) -> ChiMap:
    """Sweep chi over a (gamma1, gamma2) grid; failed cells become NaN."""
    g1 = np.asarray(gamma1_grid, dtype=float)
    g2 = np.asarray(gamma2_grid, dtype=float)
    for name, g in (("gamma1", g1), ("gamma2", g2)):
        if g.size > 1 and not (np.all(np.diff(g) > 0) or np.all(np.diff(g) < 0)):
            raise PreconditionError(f"{name} grid must be strictly monotone")
    if N < 8:
        raise PreconditionError(f"chi map needs N >= 8, got {N}")
    base = as_params(base_params)
    probe = probe or GreenProbe()
    cells = [(i, j) for i in range(g1.size) for j in range(g2.size)]

    def work(ij):
        i, j = ij
        try:
            return _chi_cell(spec, base, g1[i], g2[j], N, probe), None
        except FlatSkinError as exc:
            return float("nan"), str(exc)

    n_threads = threads or thread_count()
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(c) for c in cells]
    out = np.empty((g1.size, g2.size))
    failures = {}
    for (i, j), (value, err) in zip(cells, results):
        out[i, j] = value
        if err is not None:
            failures[(float(g1[i]), float(g2[j]))] = err
    return ChiMap(g1, g2, out, boundary_polylines(base, g1.max(initial=0), g2.max(initial=0)), failures)


@dataclass
class ScalingResult:
    N: np.ndarray
    log_max_G: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    extrapolated: np.ndarray

    def rows(self):
        return [(int(n), float(v)) for n, v in zip(self.N, self.log_max_G)]


def _linfit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def max_green_scaling(spec: ModelSpec, p, N_list, eta=DEFAULT_ETA) -> ScalingResult:
    """``log max_mn |G_mn|`` of the flat-band Green's function versus chain length.

    ``G = (i eta)^-1 P`` with ``P`` the biorthogonal flat-band projector.
    Sizes where ``P`` overflows are filled from the log-linear trend of the
    finite ones and flagged in ``extrapolated``.
    """
    Ns = np.asarray(list(N_list), dtype=int)
    if Ns.size < 4 or np.any(np.diff(Ns) <= 0):
        raise PreconditionError("N_list must be strictly increasing with at least 4 entries")
    if eta == 0:
        raise DomainError("eta = 0: the flat-band Green's function diverges")
    logs = np.full(Ns.size, np.nan)
    for idx, N in enumerate(Ns):
        H = obc_hamiltonian(spec, p, int(N))
        with np.errstate(over="ignore", invalid="ignore"):
            P = mode_basis(H).projector()
            m = np.abs(P).max()
        if np.isfinite(m) and m > 0:
            logs[idx] = math.log(m) - math.log(abs(eta))
    finite = np.isfinite(logs)
    if finite.sum() < 2:
        raise NumericalError("fewer than two finite Green's-function maxima", {"N": Ns.tolist()})
    extrapolated = ~finite
    if extrapolated.any():
        s, c, _ = _linfit(Ns[finite].astype(float), logs[finite])
        logs[extrapolated] = s * Ns[extrapolated] + c
    slope, intercept, r2 = _linfit(Ns.astype(float), logs)
    return ScalingResult(Ns, logs, slope, intercept, r2, extrapolated)


def response_rows(R):
    return [(n + 1, float(abs(v))) for n, v in enumerate(np.asarray(R).ravel())]
