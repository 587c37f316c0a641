"""Lattice models as data, and the matrices built from them.

A model is a unit cell of ``B`` orbitals with an intra-cell block ``H0`` and
two nearest-cell blocks. The Bloch matrix is

    H(k) = H0 + Tplus * exp(ik) + Tminus * exp(-ik)

and the non-Bloch matrix replaces ``exp(ik)`` by a complex ``beta``.

Chain placement. Open and ring chains put ``Tplus`` on the block *below* the
diagonal (row cell n+1, column cell n) and ``Tminus`` above it. For the
built-in three-band model that makes the ``t2`` bond join orbital A of cell
``n`` with orbital B of cell ``n+1``. Plane waves on the chain then read
``psi_n ~ exp(-ikn) u`` (``beta**-n`` off the unit circle), so the ring
spectrum is the union of ``H(-k)`` over the grid. That equals the union of
``H(k)`` because the grid is symmetric. With this orientation, non-reciprocal
amplification drives both the dispersive skin modes and the flat-band
response toward the right edge (large cell index).

Sites are ordered cell-major with orbitals (A, B, C) inside a cell. The
1-based site index is ``B*(cell-1) + orbital + 1``.
"""
from __future__ import annotations

import cmath
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Mapping

import numpy as np

from ._kernels import assemble_chain
from .errors import ConfigurationError, DomainError, ParseError

PARAM_NAMES = ("t1", "t2", "gamma1", "gamma2")
FIG1_DEFAULTS = {"t1": -1.06, "t2": -0.3, "gamma1": 0.5, "gamma2": 0.32}


@dataclass(frozen=True)
class ParamSet:
    """Concrete hopping values. Entries may be floats or exact ``Fraction``s."""

    t1: float = -1.06
    t2: float = -0.3
    gamma1: float = 0.5
    gamma2: float = 0.32
    extras: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.items():
            if isinstance(value, Rational):
                continue
            try:
                ok = math.isfinite(float(value))
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigurationError(f"parameter {name!r} is not a finite real: {value!r}")
        object.__setattr__(self, "extras", dict(self.extras))

    def items(self):
        yield from (("t1", self.t1), ("t2", self.t2), ("gamma1", self.gamma1), ("gamma2", self.gamma2))
        yield from self.extras.items()

    def as_dict(self):
        return dict(self.items())

    def replace(self, **changes):
        base = {"t1": self.t1, "t2": self.t2, "gamma1": self.gamma1, "gamma2": self.gamma2,
                "extras": dict(self.extras)}
        for key, value in changes.items():
            if key in base:
                base[key] = value
            else:
                base["extras"][key] = value
        return ParamSet(**base)

    def hermitian(self):
        return self.replace(gamma1=0 * self.gamma1, gamma2=0 * self.gamma2)

    @property
    def is_exact(self):
        return all(isinstance(v, Rational) for _, v in self.items())

    def __iter__(self):
        return iter((self.t1, self.t2, self.gamma1, self.gamma2))


def as_params(p) -> ParamSet:
    if isinstance(p, ParamSet):
        return p
    if isinstance(p, Mapping):
        core = {k: p[k] for k in PARAM_NAMES if k in p}
        extras = {k: v for k, v in p.items() if k not in PARAM_NAMES}
        return ParamSet(**core, extras=extras)
    t1, t2, g1, g2 = p
    return ParamSet(t1, t2, g1, g2)


# -- affine expressions -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/]))"
)


def _number(text):
    if text.endswith("j"):
        return complex(text)
    return Fraction(text)


@dataclass(frozen=True)
class Affine:
    """``const + sum(coef * name)`` with Fraction or complex coefficients."""

    const: complex | Fraction = Fraction(0)
    terms: tuple = ()  # ((name, coef), ...) sorted by name

    @classmethod
    def parse(cls, text, location=None):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return cls(Fraction(str(text)) if isinstance(text, float) else Fraction(text))
        if not isinstance(text, str):
            raise ParseError(f"expected an expression string, got {type(text).__name__}", location)
        tokens = []
        pos = 0
        src = text.strip()
        if not src:
            raise ParseError("empty expression", location)
        while pos < len(src):
            m = _TOKEN.match(src, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character {src[pos]!r} in {text!r}", location)
            kind = m.lastgroup
            tokens.append((kind, m.group(kind)))
            pos = m.end()
            while pos < len(src) and src[pos].isspace():
                pos += 1

        const = Fraction(0)
        coeffs = {}
        i = 0
        expect_term = True
        while i < len(tokens):
            sign = 1
            while i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] in "+-":
                if tokens[i][1] == "-":
                    sign = -sign
                i += 1
            if i >= len(tokens):
                raise ParseError(f"dangling operator in {text!r}", location)
            coef = Fraction(sign)
            name = None
            while True:
                kind, val = tokens[i]
                if kind == "num":
                    coef = coef * _number(val)
                elif kind == "name":
                    if name is not None:
                        raise ParseError(f"non-affine product {name}*{val} in {text!r}", location)
                    name = val
                else:
                    raise ParseError(f"unexpected operator {val!r} in {text!r}", location)
                i += 1
                if i < len(tokens) and tokens[i] == ("op", "*"):
                    i += 1
                    continue
                if i < len(tokens) and tokens[i] == ("op", "/"):
                    i += 1
                    if i >= len(tokens) or tokens[i][0] != "num":
                        raise ParseError(f"division only by numeric literals in {text!r}", location)
                    coef = coef / _number(tokens[i][1])
                    i += 1
                    if i < len(tokens) and tokens[i] == ("op", "*"):
                        i += 1
                        continue
                break
            if name is None:
                const = const + coef
            else:
                coeffs[name] = coeffs.get(name, Fraction(0)) + coef
            expect_term = False
            if i < len(tokens) and not (tokens[i][0] == "op" and tokens[i][1] in "+-"):
                raise ParseError(f"missing operator before {tokens[i][1]!r} in {text!r}", location)
        if expect_term:
            raise ParseError(f"no terms in {text!r}", location)
        terms = tuple(sorted((n, c) for n, c in coeffs.items() if c != 0))
        return cls(const, terms)

    @property
    def names(self):
        return tuple(n for n, _ in self.terms)

    @property
    def is_real(self):
        return all(isinstance(c, Rational) for c in (self.const, *(c for _, c in self.terms)))

    def evaluate(self, binding, exact=False):
        value = self.const if exact else complex(self.const)
        for name, coef in self.terms:
            try:
                x = binding[name]
            except KeyError:
                raise ConfigurationError(f"unbound parameter {name!r}") from None
            if exact:
                value = value + coef * Fraction(x)
            else:
                value = value + complex(coef) * float(x)
        return value

    def __str__(self):
        pieces = []  # (signed magnitude text, name or None, negative?)
        for name, coef in (*self.terms, (None, self.const)):
            if isinstance(coef, complex):
                parts = []
                if coef.real:
                    parts.append((abs(coef.real), "", coef.real < 0))
                if coef.imag:
                    parts.append((abs(coef.imag), "j", coef.imag < 0))
                for mag, suffix, neg in parts:
                    pieces.append((f"{mag!r}{suffix}", name, neg))
            elif coef != 0 or (name is None and not pieces):
                mag = abs(coef)
                text = "" if (name is not None and mag == 1) else str(mag)
                pieces.append((text, name, coef < 0))
        if not pieces:
            return "0"
        out = []
        for idx, (mag, name, neg) in enumerate(pieces):
            term = mag if name is None else (f"{mag}*{name}" if mag else name)
            if idx == 0:
                out.append(f"-{term}" if neg else term)
            else:
                out.append(f"{'-' if neg else '+'} {term}")
        return " ".join(out)


# -- model spec ---------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    bands: int
    params: tuple  # ((name, default), ...)
    H0: tuple
    Tplus: tuple
    Tminus: tuple
    name: str = "user"

    @property
    def param_names(self):
        return tuple(n for n, _ in self.params)

    def defaults(self):
        return dict(self.params)

    def binding(self, p):
        if isinstance(p, Mapping):
            b = dict(p)
        else:
            b = as_params(p).as_dict()
        missing = [n for n in self.param_names if n not in b]
        if missing:
            raise ConfigurationError(f"unbound parameter(s): {', '.join(missing)}")
        return b

    def blocks(self, p, exact=False):
        """Numeric ``(H0, Tplus, Tminus)``; ``exact=True`` gives Fraction object arrays."""
        b = self.binding(p)
        out = []
        for block in (self.H0, self.Tplus, self.Tminus):
            if exact:
                if not all(e.is_real for row in block for e in row):
                    raise ConfigurationError("exact evaluation needs real rational coefficients")
                arr = np.empty((self.bands, self.bands), dtype=object)
                for i, row in enumerate(block):
                    for j, e in enumerate(row):
                        arr[i, j] = Fraction(e.evaluate(b, exact=True))
            else:
                arr = np.array([[e.evaluate(b) for e in row] for row in block], dtype=np.complex128)
            out.append(arr)
        return tuple(out)

    def to_dict(self):
        def dump(block):
            return [[str(e) for e in row] for row in block]

        return {
            "name": self.name,
            "bands": self.bands,
            "params": [{"name": n, "default": _json_number(d)} for n, d in self.params],
            "H0": dump(self.H0),
            "Tplus": dump(self.Tplus),
            "Tminus": dump(self.Tminus),
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def _json_number(x):
    if isinstance(x, Fraction):
        return float(x) if x.denominator != 1 else int(x)
    return x


def builtin_flatband3() -> ModelSpec:
    """The three-band flat-band chain.

    Bloch matrix rows: ``(0, t1-g1+t2 e^{-ik}, t2-g2)``, ``(t1+g1+t2 e^{ik}, 0, 0)``,
    ``(t2+g2, 0, 0)``.
    """
    z = "0"
    H0 = [[z, "t1 - gamma1", "t2 - gamma2"], ["t1 + gamma1", z, z], ["t2 + gamma2", z, z]]
    Tplus = [[z, z, z], ["t2", z, z], [z, z, z]]
    Tminus = [[z, "t2", z], [z, z, z], [z, z, z]]
    doc = {
        "name": "flatband3",
        "bands": 3,
        "params": [{"name": k, "default": v} for k, v in FIG1_DEFAULTS.items()],
        "H0": H0,
        "Tplus": Tplus,
        "Tminus": Tminus,
    }
    return load_model_spec(doc)


def load_model_spec(text) -> ModelSpec:
    """Validate a model document (JSON text, bytes or an already-decoded dict)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    else:
        doc = text
    if not isinstance(doc, Mapping):
        raise ParseError("top level must be an object", "$")
    for key in ("bands", "H0", "Tplus", "Tminus"):
        if key not in doc:
            raise ParseError("missing key", key)
    bands = doc["bands"]
    if not isinstance(bands, int) or isinstance(bands, bool) or bands < 1:
        raise ParseError("must be a positive integer", "bands")

    raw_params = doc.get("params", [])
    if not isinstance(raw_params, list):
        raise ParseError("must be a list", "params")
    params = []
    for i, entry in enumerate(raw_params):
        if isinstance(entry, str):
            params.append((entry, 0.0))
        elif isinstance(entry, Mapping) and isinstance(entry.get("name"), str):
            default = entry.get("default", 0.0)
            if not isinstance(default, (int, float)) or isinstance(default, bool):
                raise ParseError("default must be a number", f"params[{i}].default")
            params.append((entry["name"], default))
        else:
            raise ParseError("expected a name or {name, default}", f"params[{i}]")
    names = [n for n, _ in params]
    if len(set(names)) != len(names):
        raise ParseError("duplicate parameter names", "params")

    blocks = {}
    for key in ("H0", "Tplus", "Tminus"):
        rows = doc[key]
        if not isinstance(rows, list) or len(rows) != bands:
            raise ParseError(f"expected {bands} rows", key)
        block = []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != bands:
                raise ParseError(f"expected {bands} columns", f"{key}[{i}]")
            out_row = []
            for j, entry in enumerate(row):
                loc = f"{key}[{i}][{j}]"
                expr = Affine.parse(entry, loc)
                for n in expr.names:
                    if n not in names:
                        raise ParseError(f"unknown parameter {n!r}", loc)
                out_row.append(expr)
            block.append(tuple(out_row))
        blocks[key] = tuple(block)
    return ModelSpec(bands, tuple(params), blocks["H0"], blocks["Tplus"], blocks["Tminus"],
                     name=str(doc.get("name", "user")))


# -- matrices -----------------------------------------------------------------

def bloch_hamiltonian(spec: ModelSpec, p, k: float) -> np.ndarray:
    H0, Tp, Tm = spec.blocks(p)
    phase = cmath.exp(1j * k)
    return H0 + Tp * phase + Tm / phase


def nonbloch_hamiltonian(spec: ModelSpec, p, beta: complex) -> np.ndarray:
    beta = complex(beta)
    if beta == 0:
        raise DomainError("beta = 0: the Tminus/beta term is singular")
    H0, Tp, Tm = spec.blocks(p)
    return H0 + Tp * beta + Tm / beta


def obc_hamiltonian(spec: ModelSpec, p, N: int) -> np.ndarray:
    """Open chain of ``N`` cells, ``(B*N, B*N)`` complex."""
    if N < 2:
        raise DomainError(f"open chain needs N >= 2 cells, got {N}")
    H0, Tp, Tm = spec.blocks(p)
    return assemble_chain(H0, Tp, Tm, N, wrap=False)


def pbc_ring_hamiltonian(spec: ModelSpec, p, N: int) -> np.ndarray:
    if N < 3:
        raise DomainError(f"ring needs N >= 3 cells, got {N}")
    H0, Tp, Tm = spec.blocks(p)
    return assemble_chain(H0, Tp, Tm, N, wrap=True)


def site_index(cell: int, orbital: int, bands: int = 3) -> int:
    """0-based row of (1-based ``cell``, 0-based ``orbital``)."""
    return bands * (cell - 1) + orbital


SUBLATTICE = np.diag([-1.0, 1.0, 1.0])
