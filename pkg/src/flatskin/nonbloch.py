"""Non-Bloch analysis of the built-in three-band chain.

For ``H(beta)`` the characteristic polynomial factorises as
``-E (E^2 - (a c + b d))`` with

    a = t1 - g1 + t2 / beta,  b = t2 - g2,  c = t1 + g1 + t2 beta,  d = t2 + g2.

So every ``beta`` solves the flat-band equation ``det H(beta) = 0``. The
dispersive bands give the quadratic ``p2 beta^2 + p1 beta + p0 = 0``.

Convention: ``beta`` replaces ``exp(ik)`` in the Bloch matrix. On the open
chain this corresponds to amplitudes ``beta**-n`` (see :mod:`flatskin.model`).
The per-cell growth of skin modes is therefore ``1 / |beta|``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, PreconditionError, SelfOrthogonalityError
from .model import ModelSpec, as_params, builtin_flatband3, nonbloch_hamiltonian, obc_hamiltonian
from .spectra import eig_general

RANK_TOL = 1e-8
GBZ_REL_TOL = 1e-8


def beta_coefficients(p, E=0.0):
    p = as_params(p)
    t1, t2, g1, g2 = (float(x) for x in p)
    E = complex(E)
    p2 = (t1 - g1) * t2
    p1 = t1 * t1 - g1 * g1 + 2 * t2 * t2 - g2 * g2 - E * E
    p0 = t2 * (t1 + g1)
    return p2, p1, p0


def beta_roots(p, E=0.0):
    """Roots of ``p2 b^2 + p1 b + p0``, ordered by modulus (ascending)."""
    p2, p1, p0 = beta_coefficients(p, E)
    if p2 == 0:
        raise DomainError("degenerate beta polynomial: (t1 - gamma1) * t2 = 0")
    disc = cmath.sqrt(complex(p1) * p1 - 4 * p2 * p0)
    # cancellation-free pair
    q = -0.5 * (p1 + (disc if (complex(p1).conjugate() * disc).real >= 0 else -disc))
    if q == 0:
        r1 = r2 = complex(-p1 / (2 * p2))
    else:
        r1, r2 = q / p2, p0 / q
    r1, r2 = sorted((complex(r1), complex(r2)), key=lambda z: (abs(z), z.real, z.imag))
    return r1, r2


def gbz_radius(p):
    p = as_params(p)
    t1, g1 = float(p.t1), float(p.gamma1)
    if t1 == g1:
        raise DomainError("t1 = gamma1: GBZ radius undefined")
    return math.sqrt(abs((t1 + g1) / (t1 - g1)))


@dataclass
class GbzResult:
    radius: float
    samples: list  # [(E, beta1, beta2)]
    boundary_samples: list = field(default_factory=list)
    flatband_gbz: str = "all-of-complex-plane"

    @property
    def reciprocal_radius(self):
        return 1.0 / self.radius

    def fitted_radius(self):
        if not self.samples:
            return float("nan")
        return float(np.mean([0.5 * (abs(b1) + abs(b2)) for _, b1, b2 in self.samples]))

    def rows(self):
        out = []
        for E, b1, b2 in self.samples:
            for b in (b1, b2):
                out.append((b.real, b.imag, E.real, E.imag))
        return out


def gbz_dispersive(p, N=40, zero_tol=1e-6, match_tol=1e-4) -> GbzResult:
    """Sample the dispersive GBZ at every nonzero open-chain eigenvalue."""
    if N < 20:
        raise PreconditionError(f"GBZ sampling needs N >= 20, got {N}")
    p = as_params(p)
    H = obc_hamiltonian(builtin_flatband3(), p, N)
    spec = eig_general(H)
    radius = gbz_radius(p)
    scale = max(1.0, float(np.abs(spec.values).max()))
    samples, boundary = [], []
    for E in spec.values:
        if abs(E) < zero_tol * scale:
            continue
        b1, b2 = beta_roots(p, E)
        if abs(abs(b1) - abs(b2)) > match_tol * max(abs(b2), 1e-300):
            boundary.append((complex(E), b1, b2))
        else:
            samples.append((complex(E), b1, b2))
    return GbzResult(radius, samples, boundary)


def skin_growth_per_cell(p, N=40, spec: ModelSpec | None = None, zero_tol=1e-6, edge=3):
    """Median per-cell growth factor of dispersive open-chain eigenvectors.

    Fits ``log ||psi_cell||`` against the cell index for every eigenvector
    with ``|E|`` above ``zero_tol`` (bulk cells only), exponentiates the
    median slope. It is an independent check of the GBZ radius: it uses only
    dense diagonalisation.
    """
    spec = spec or builtin_flatband3()
    H = obc_hamiltonian(spec, p, N)
    s = eig_general(H, vectors=True)
    B = spec.bands
    cells = np.arange(N)
    bulk = (cells >= edge) & (cells < N - edge)
    slopes = []
    for j, E in enumerate(s.values):
        if abs(E) < zero_tol:
            continue
        norms = np.linalg.norm(s.vectors[:, j].reshape(N, B), axis=1)
        if np.any(norms[bulk] == 0):
            continue
        slopes.append(np.polyfit(cells[bulk], np.log(norms[bulk]), 1)[0])
    if not slopes:
        raise NumericalError("no dispersive eigenvectors to fit")
    return float(math.exp(np.median(slopes)))


# -- exceptional points -------------------------------------------------------

def _numerical_rank(A, tol, scale):
    s = np.linalg.svd(A, compute_uv=False)
    return int((s > tol * scale).sum())


def nilpotency_rank_sequence(H, tol=RANK_TOL):
    """Ranks of ``H, H^2, ...`` until rank 0 or ``B`` powers.

    Thresholds scale as ``tol * sigma_max(H)^k`` for ``H^k``. Nilpotency is
    checked through ``||H^B|| <= tol * sigma_max^B``, not through
    eigenvalues: near an EP of order ``n`` these move by ``eps^(1/n)``.
    """
    H = np.asarray(H, dtype=np.complex128)
    B = H.shape[0]
    smax = float(np.linalg.norm(H, 2))
    if smax == 0.0:
        return [0]
    if np.linalg.norm(np.linalg.matrix_power(H, B), 2) > tol * smax ** B:
        raise PreconditionError("matrix is not nilpotent within tolerance")
    ranks = []
    P = np.eye(B, dtype=np.complex128)
    for k in range(1, B + 1):
        P = P @ H
        r = _numerical_rank(P, tol, smax ** k)
        ranks.append(r)
        if r == 0:
            break
    return ranks


@dataclass(frozen=True)
class EpRecord:
    beta: complex
    order: int
    rank_sequence: tuple
    on_gbz: bool
    gamma1: float = float("nan")
    gamma2: float = float("nan")


def ep3_locations(p, tol=RANK_TOL, gbz_tol=GBZ_REL_TOL):
    """Non-Bloch EP3s where the dispersive GBZ meets the flat band at E = 0."""
    p = as_params(p)
    spec = builtin_flatband3()
    try:
        b1, b2 = beta_roots(p, 0.0)
        radius = gbz_radius(p)
    except DomainError:
        return []
    if abs(abs(b1) - abs(b2)) > gbz_tol * abs(b2):
        return []
    out = []
    for beta in (b1, b2):
        if beta == 0 or abs(abs(beta) - radius) > gbz_tol * radius:
            continue
        H = nonbloch_hamiltonian(spec, p, beta)
        try:
            ranks = nilpotency_rank_sequence(H, tol)
        except PreconditionError:
            continue
        order = next((i + 1 for i, r in enumerate(ranks) if r == 0), 0)
        if ranks[:3] == [2, 1, 0]:
            out.append(EpRecord(beta, order, tuple(ranks), True, float(p.gamma1), float(p.gamma2)))
    if len(out) == 2 and out[0].beta == out[1].beta:
        out = out[:1]
    return out


def ep3_window(gamma1, t1=-1.06, t2=-0.3):
    """Closed-form ``gamma2`` interval with EP3s on the GBZ (discriminant < 0)."""
    c0 = t1 * t1 - gamma1 * gamma1 + 2 * t2 * t2
    half = math.sqrt(4 * t2 * t2 * (t1 * t1 - gamma1 * gamma1)) if t1 * t1 > gamma1 * gamma1 else 0.0
    lo2, hi2 = c0 - half, c0 + half
    if hi2 <= 0 or half == 0:
        return None
    return (math.sqrt(max(lo2, 0.0)), math.sqrt(hi2))


# -- zero modes and quantum distance -----------------------------------------

@dataclass(frozen=True)
class ZeroMode:
    rev: np.ndarray  # unit norm
    lev: np.ndarray  # <lev|rev> = 1
    overlap: complex  # <lev_raw|rev_raw> before normalisation


def _abcd(p, beta):
    t1, t2, g1, g2 = (float(x) for x in as_params(p))
    beta = complex(beta)
    if beta == 0:
        raise DomainError("beta = 0")
    return t1 - g1 + t2 / beta, t2 - g2, t1 + g1 + t2 * beta, t2 + g2


def nonbloch_zero_mode(p, beta, self_orth_tol=1e-12) -> ZeroMode:
    """Right/left eigenvectors of ``H(beta)`` at the exact zero eigenvalue."""
    a, b, c, d = _abcd(p, beta)
    rev = np.array([0.0, b, -a], dtype=np.complex128)
    lev = np.array([0.0, np.conj(d), -np.conj(c)], dtype=np.complex128)
    nr = np.linalg.norm(rev)
    if nr == 0:
        raise DomainError("zero right vector: a = b = 0")
    rev = rev / nr
    lev = lev / np.linalg.norm(lev)
    ov = np.vdot(lev, rev)
    if abs(ov) < self_orth_tol:
        raise SelfOrthogonalityError("left and right zero modes are orthogonal (at or too near the EP)",
                                     {"overlap": abs(ov), "beta": complex(beta)})
    return ZeroMode(rev, lev / np.conj(ov), ov)


def quantum_distance(p, beta_ep, delta_beta, theta, dtheta, kind="LR"):
    """Distance between zero modes on the circle ``|beta - beta_ep| = delta_beta``.

    The reference state sits at angle ``theta`` on that circle and the
    compared one at ``theta + dtheta``. ``LR`` pairs the left vector of the
    second point with the right vector of the first (biorthogonal
    normalisation at each point). ``RR`` uses unit-norm right vectors.
    """
    if delta_beta <= 0:
        raise DomainError("delta_beta must be positive")
    beta_ep = complex(beta_ep)
    z0 = nonbloch_zero_mode(p, beta_ep + delta_beta * cmath.exp(1j * theta))
    z1 = nonbloch_zero_mode(p, beta_ep + delta_beta * cmath.exp(1j * (theta + dtheta)))
    if kind == "LR":
        ov = np.vdot(z1.lev, z0.rev)
    elif kind == "RR":
        ov = np.vdot(z1.rev, z0.rev)
    else:
        raise PreconditionError(f"kind must be 'LR' or 'RR', got {kind!r}")
    return math.sqrt(abs(1.0 - abs(ov) ** 2))


def qdist_grid(p, beta_ep, delta_betas, thetas, dthetas, kinds=("LR", "RR")):
    """Rows ``(kind, delta_beta, theta, dtheta, value)``."""
    rows = []
    for kind in kinds:
        for db in delta_betas:
            for th in thetas:
                for dt in dthetas:
                    rows.append((kind, float(db), float(th), float(dt),
                                 quantum_distance(p, beta_ep, db, th, dt, kind)))
    return rows


def ep3_present(p, **kw):
    return bool(ep3_locations(p, **kw))


def ep3_window_scan(p, gamma2_grid, xtol=1e-7):
    """Brute-force EP3 window along ``gamma2`` at fixed ``gamma1``.

    Every grid point is classified with :func:`ep3_locations`; each edge
    between a present and an absent sample is then bisected to ``xtol``.
    Returns the sorted list of ``(lower, upper)`` intervals.
    """
    p = as_params(p)
    g2 = np.asarray(gamma2_grid, dtype=float)
    present = [ep3_present(p.replace(gamma2=g)) for g in g2]

    def edge(lo, hi, lo_state):
        while hi - lo > xtol:
            mid = 0.5 * (lo + hi)
            if ep3_present(p.replace(gamma2=mid)) == lo_state:
                lo = mid
            else:
                hi = mid
        return float(0.5 * (lo + hi))

    intervals, start = [], None
    if present and present[0]:
        start = float(g2[0])
    for j in range(1, g2.size):
        if present[j] and not present[j - 1]:
            start = edge(g2[j - 1], g2[j], False)
        elif present[j - 1] and not present[j]:
            intervals.append((start, edge(g2[j - 1], g2[j], True)))
            start = None
    if start is not None:
        intervals.append((start, float(g2[-1])))
    return intervals


def ep3_rows(records):
    """Rows ``(gamma1, gamma2, re_beta, im_beta, order)``."""
    return [(r.gamma1, r.gamma2, r.beta.real, r.beta.imag, r.order) for r in records]
