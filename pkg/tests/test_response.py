import numpy as np
import pytest

from flatskin.errors import DomainError, NumericalError, PreconditionError
from flatskin.flatband import mode_basis
from flatskin.model import obc_hamiltonian
from flatskin.response import (GreenProbe, boundary_polylines, chi, chi_map, green_response,
                               max_green_scaling, response_rows)

from conftest import DEFAULT, SETUP_I, SETUP_II, SETUP_III


@pytest.mark.parametrize("p, lo, hi", [(SETUP_II, 0.9, 1.0), (SETUP_I, 0.0, 0.1), (SETUP_III, 0.0, 0.1)])
def test_chi_setups(spec, p, lo, hi):
    R = green_response(obc_hamiltonian(spec, p, 20))
    assert lo < chi(R) < hi


def test_response_normalised(spec):
    R = green_response(obc_hamiltonian(spec, SETUP_II, 20))
    assert np.linalg.norm(R) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [SETUP_I, SETUP_II, SETUP_III])
def test_projector_matches_direct(spec, p):
    H = obc_hamiltonian(spec, p, 16)
    R1 = green_response(H, GreenProbe(method="direct-inverse"))
    R2 = green_response(H, GreenProbe(method="flat-band-projector"))
    assert chi(R1) == pytest.approx(chi(R2), abs=1e-6)
    assert abs(abs(np.vdot(R1, R2)) - 1.0) < 1e-6


def test_projector_reuses_basis(spec):
    H = obc_hamiltonian(spec, SETUP_II, 10)
    b = mode_basis(H)
    R = green_response(H, GreenProbe(method="flat-band-projector"), basis=b)
    assert np.linalg.norm(R) == pytest.approx(1.0)


def test_mid_chain_source_still_right(spec):
    H = obc_hamiltonian(spec, SETUP_II, 20)
    R = green_response(H, GreenProbe.at(cell=10, orbital=2))
    assert chi(R) > 0.9


def test_zero_energy_rejected(spec):
    with pytest.raises(DomainError):
        green_response(obc_hamiltonian(spec, DEFAULT, 6), GreenProbe(0j))


def test_bad_source_and_method(spec):
    with pytest.raises(PreconditionError):
        green_response(obc_hamiltonian(spec, DEFAULT, 4), GreenProbe(1e-8j, 99))
    with pytest.raises(PreconditionError):
        GreenProbe(method="magic")


def test_chi_rejects_unnormalised():
    with pytest.raises(DomainError):
        chi(np.ones(4))


def test_diagonal_resolvent():
    R = green_response(np.diag([1.0, 2.0, 3.0]), GreenProbe(1e-6j, 0))
    assert np.allclose(np.abs(R), [1, 0, 0], atol=1e-12)


def test_chi_extremes():
    e = np.zeros(30)
    e[-1] = 1
    assert chi(e) == 1.0
    assert chi(e[::-1]) == pytest.approx(1 / 30)


def test_chi_map_values_in_unit_interval(spec):
    m = chi_map(spec, DEFAULT, np.linspace(0, 2, 6), np.linspace(0, 2, 6), N=8)
    assert np.all((m.chi >= 1 / 24 - 1e-12) & (m.chi <= 1))


def test_chi_uniform():
    R = np.ones(9) / 3
    assert chi(R) == pytest.approx(5 / 9)


def test_chi_map_threads_agree(spec):
    g1 = np.linspace(0.0, 2.0, 5)
    g2 = np.linspace(0.0, 2.0, 4)
    a = chi_map(spec, DEFAULT, g1, g2, N=10, threads=1)
    b = chi_map(spec, DEFAULT, g1, g2, N=10, threads=3)
    assert np.array_equal(a.chi, b.chi, equal_nan=True)
    assert len(a.rows()) == 20
    assert {name for name, _ in a.region_boundaries} == {"gap_close", "gap_reopen", "hermitian_axis"}


def test_chi_map_failure_becomes_nan(spec):
    # t1 = gamma1, t2 = gamma2 adds a zero mode, so the projector path refuses
    m = chi_map(spec, DEFAULT, [-1.06], [-0.3, 0.32], N=8,
                probe=GreenProbe(1e-8j, 2, "flat-band-projector"))
    assert np.isnan(m.chi[0, 0]) and np.isfinite(m.chi[0, 1])
    assert list(m.failures) == [(-1.06, -0.3)]


def test_chi_map_grid_checks(spec):
    with pytest.raises(PreconditionError):
        chi_map(spec, DEFAULT, [0.1, 0.1], [0.2], N=10)
    with pytest.raises(PreconditionError):
        chi_map(spec, DEFAULT, [0.1], [0.2], N=4)


def test_boundary_polylines_on_circles():
    for name, pts in boundary_polylines(DEFAULT):
        if name == "gap_close":
            assert np.allclose((pts ** 2).sum(axis=1), 0.6676)
        if name == "gap_reopen":
            assert np.allclose((pts ** 2).sum(axis=1), 1.9396)


def test_scaling_region_two(spec):
    r = max_green_scaling(spec, SETUP_II, range(8, 25))
    assert r.slope > 0.1 and r.r_squared > 0.99


@pytest.mark.parametrize("p", [SETUP_I, SETUP_III])
def test_scaling_flat_elsewhere(spec, p):
    assert abs(max_green_scaling(spec, p, range(8, 25)).slope) < 0.05


def test_scaling_preconditions(spec):
    with pytest.raises(PreconditionError):
        max_green_scaling(spec, SETUP_II, [8, 9, 10])
    with pytest.raises(DomainError):
        max_green_scaling(spec, SETUP_II, [8, 9, 10, 11], eta=0)


def test_response_rows():
    assert response_rows(np.array([1j, 0])) == [(1, 1.0), (2, 0.0)]
