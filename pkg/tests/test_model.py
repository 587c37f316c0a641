import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatskin.errors import ConfigurationError, DomainError, ParseError
from flatskin.model import (Affine, ParamSet, as_params, bloch_hamiltonian, builtin_flatband3,
                            load_model_spec, nonbloch_hamiltonian, obc_hamiltonian,
                            pbc_ring_hamiltonian, site_index)

from conftest import DEFAULT, SETUP_II

finite = st.floats(-3, 3, allow_nan=False)


def test_bloch_entries_at_zero(spec):
    H = bloch_hamiltonian(spec, DEFAULT, 0.0)
    assert H[1, 0] == pytest.approx(-0.86)
    assert H[2, 0] == pytest.approx(0.02)
    assert np.allclose(H[1:, 1:], 0)


def test_bloch_entry_quarter_period(spec):
    H = bloch_hamiltonian(spec, DEFAULT, math.pi / 2)
    assert H[0, 1] == pytest.approx(-1.56 + 0.3j)


def test_bloch_hermitian_when_gammas_vanish(spec):
    p = DEFAULT.hermitian()
    for k in np.linspace(0, 2 * np.pi, 7):
        H = bloch_hamiltonian(spec, p, k)
        assert np.allclose(H, H.conj().T)


def test_nonbloch_matches_bloch_on_unit_circle(spec):
    k = 0.37
    assert np.allclose(nonbloch_hamiltonian(spec, DEFAULT, np.exp(1j * k)), bloch_hamiltonian(spec, DEFAULT, k))


def test_nonbloch_rejects_zero_beta(spec):
    with pytest.raises(DomainError):
        nonbloch_hamiltonian(spec, DEFAULT, 0)


def test_obc_structure(spec):
    H = obc_hamiltonian(spec, DEFAULT, 4)
    assert H.shape == (12, 12)
    # t2 bond joins A of cell n with B of cell n+1, both directions
    assert H[site_index(2, 1), site_index(1, 0)] == pytest.approx(-0.3)
    assert H[site_index(1, 0), site_index(2, 1)] == pytest.approx(-0.3)
    assert H[site_index(1, 1), site_index(2, 0)] == 0
    # A-A and B/C-B/C blocks vanish (sublattice structure)
    a = np.arange(0, 12, 3)
    bc = np.setdiff1d(np.arange(12), a)
    assert np.all(H[np.ix_(a, a)] == 0) and np.all(H[np.ix_(bc, bc)] == 0)


def test_obc_requires_two_cells(spec):
    with pytest.raises(DomainError):
        obc_hamiltonian(spec, DEFAULT, 1)


def test_ring_spectrum_is_bloch_union(spec):
    N = 9
    ring = np.sort_complex(np.linalg.eigvals(pbc_ring_hamiltonian(spec, SETUP_II, N)))
    bloch = np.concatenate([np.linalg.eigvals(bloch_hamiltonian(spec, SETUP_II, 2 * np.pi * m / N))
                            for m in range(N)])
    d = np.abs(ring[:, None] - bloch[None, :]).min(axis=1)
    assert d.max() < 1e-8


def test_paramset_rejects_nonfinite():
    with pytest.raises(ConfigurationError):
        ParamSet(float("nan"), 0, 0, 0)


def test_paramset_exact_and_replace():
    p = ParamSet(Fraction(1), Fraction(1, 2), 1, 0)
    assert p.is_exact
    assert not p.replace(gamma2=0.5).is_exact
    assert as_params({"t1": 1, "t2": 2, "gamma1": 0, "gamma2": 0, "mu": 3}).extras == {"mu": 3}


def test_builtin_json_round_trip():
    spec = builtin_flatband3()
    again = load_model_spec(spec.to_json())
    assert again == spec
    assert again.to_json() == spec.to_json()


@pytest.mark.parametrize("mutate, location", [
    (lambda d: d.pop("H0"), "H0"),
    (lambda d: d.__setitem__("bands", 0), "bands"),
    (lambda d: d["Tplus"][1].__setitem__(0, "t2 * t1"), "Tplus[1][0]"),
    (lambda d: d["Tplus"][1].__setitem__(0, "kappa"), "Tplus[1][0]"),
    (lambda d: d["H0"].pop(), "H0"),
    (lambda d: d["params"].append({"name": "t1"}), "params"),
])
def test_load_errors_carry_location(mutate, location):
    doc = json.loads(builtin_flatband3().to_json())
    mutate(doc)
    with pytest.raises(ParseError) as info:
        load_model_spec(doc)
    assert info.value.location == location


def test_load_invalid_json():
    with pytest.raises(ParseError):
        load_model_spec("{not json")


def test_user_model_with_extra_parameter():
    doc = {"bands": 1, "params": [{"name": "mu", "default": 0.5}, "t"],
           "H0": [["mu"]], "Tplus": [["t"]], "Tminus": [["t"]]}
    spec = load_model_spec(doc)
    H = obc_hamiltonian(spec, {"mu": 0.5, "t": 1.0}, 5)
    expected = 0.5 + 2 * np.cos(np.pi * np.arange(1, 6) / 6)
    assert np.allclose(np.sort(np.linalg.eigvals(H).real), np.sort(expected))


def test_unbound_parameter(spec):
    with pytest.raises(ConfigurationError):
        spec.blocks({"t1": 1.0})


def test_exact_blocks(spec):
    H0, Tp, Tm = spec.blocks(ParamSet(Fraction(-53, 50), Fraction(-3, 10), Fraction(1, 2), Fraction(8, 25)),
                             exact=True)
    assert H0[0, 1] == Fraction(-78, 50)
    assert Tp[1, 0] == Fraction(-3, 10)


@given(c=finite, a=finite, b=finite)
def test_affine_str_round_trip(c, a, b):
    e = Affine(complex(c), (("t1", complex(a)), ("gamma2", complex(0, b))))
    again = Affine.parse(str(e))
    binding = {"t1": 0.7, "gamma2": -1.3}
    assert again.evaluate(binding) == pytest.approx(e.evaluate(binding), abs=1e-9)


@pytest.mark.parametrize("text", ["t1 * t2", "1 / t1", "(t1)", "t1 +", "", "2 ** t1"])
def test_affine_rejects_non_affine(text):
    with pytest.raises(ParseError):
        Affine.parse(text, "x")


@settings(max_examples=30)
@given(t1=finite, t2=finite, g1=finite, g2=finite, k=st.floats(0, 2 * np.pi))
def test_bloch_rank_at_most_two(t1, t2, g1, g2, k):
    H = bloch_hamiltonian(builtin_flatband3(), (t1, t2, g1, g2), k)
    assert abs(np.linalg.det(H)) < 1e-9 * max(1.0, np.abs(H).max()) ** 3
