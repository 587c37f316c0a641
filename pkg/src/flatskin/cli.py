"""``flatskin`` command line.

Every subcommand writes one data file (two for ``phase-map`` and
``ep-scan``) plus ``manifest.json`` into ``--out``. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 precondition violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import csvio
from .errors import ConfigurationError, FlatSkinError, PreconditionError
from .model import FIG1_DEFAULTS, ParamSet, builtin_flatband3, load_model_spec, obc_hamiltonian

log = logging.getLogger("flatskin")

BUILTIN = "flatband3"
DEFAULT_GRID = "0:2:41,0:2:41"


@dataclass
class RunConfig:
    """Everything a command needs; saving it reproduces the outputs byte for byte."""

    command: str = "spectrum"
    model: str = BUILTIN
    params: dict = field(default_factory=lambda: {k: repr(v) for k, v in FIG1_DEFAULTS.items()})
    N: int = 20
    kpoints: int = 401
    grid: str = DEFAULT_GRID
    eta: float = 1e-8
    method: str = "direct-inverse"
    sizes: str = "8:24:1"
    delta_beta: str = "1e-2,1e-3,1e-4"
    theta: str = "0"
    dtheta_count: int = 36
    hermitian: bool = False
    out: str = "."
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def spec(self):
        if self.model == BUILTIN:
            return builtin_flatband3()
        try:
            text = Path(self.model).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read model file {self.model!r}: {exc.strerror}") from None
        return load_model_spec(text)

    def exact_params(self):
        """Parameters as Fractions (decimal strings and ``p/q`` both accepted)."""
        out = {}
        for k, v in self.params.items():
            try:
                out[k] = Fraction(str(v))
            except (ValueError, ZeroDivisionError):
                raise ConfigurationError(f"parameter {k}={v!r} is not a rational number") from None
        return self._paramset(out)

    def float_params(self):
        out = {}
        for k, v in self.params.items():
            try:
                out[k] = float(Fraction(str(v)))
            except (ValueError, ZeroDivisionError):
                raise ConfigurationError(f"parameter {k}={v!r} is not a real number") from None
        return self._paramset(out)

    def _paramset(self, values):
        spec = self.spec()
        merged = {k: v for k, v in spec.defaults().items()}
        merged.update(values)
        if self.hermitian:
            for k in ("gamma1", "gamma2"):
                if k in merged:
                    merged[k] = 0 * merged[k]
        core = {k: merged.pop(k) for k in ("t1", "t2", "gamma1", "gamma2") if k in merged}
        return ParamSet(**core, extras=merged)


def parse_range(text, what="range"):
    """``a:b:n`` (n points, inclusive) or a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return np.linspace(float(a), float(b), n)
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ConfigurationError(f"malformed {what} {text!r}; expected a:b:n or a comma list") from None


def parse_grid(text):
    parts = text.split(",")
    if len(parts) != 2 or any(":" not in s for s in parts):
        raise ConfigurationError(f"malformed --grid {text!r}; expected g1min:g1max:n,g2min:g2max:n")
    return parse_range(parts[0], "--grid"), parse_range(parts[1], "--grid")


def parse_sizes(text):
    try:
        if ":" in text:
            a, b, step = (int(x) for x in text.split(":"))
            return list(range(a, b + 1, step))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"malformed --sizes {text!r}; expected a:b:step or a comma list") from None


def _meta(cfg, **extra):
    m = {"command": cfg.command, "model": cfg.model,
         "params": " ".join(f"{k}={v}" for k, v in sorted(cfg.params.items()))}
    if cfg.hermitian:
        m["hermitian"] = "true"
    m.update({k: str(v) for k, v in extra.items()})
    return m


def _require_builtin(cfg):
    if cfg.model != BUILTIN:
        raise PreconditionError(f"'{cfg.command}' is implemented for the built-in model only")


# -- commands -------------------------------------------------------------------

def cmd_spectrum(cfg, out):
    from .spectra import eig_general, pbc_bands, pointgap_encloses, region_classify, spectrum_rows

    spec, p = cfg.spec(), cfg.float_params()
    bands = pbc_bands(spec, p, cfg.kpoints)
    obc = eig_general(obc_hamiltonian(spec, p, cfg.N))
    path = csvio.write_csv(out / "spectrum.csv", ["source", "k_or_index", "re_E", "im_E", "band"],
                           spectrum_rows(bands, obc), _meta(cfg, N=cfg.N, kpoints=cfg.kpoints))
    if cfg.model == BUILTIN:
        print(f"region: {region_classify(p)}")
    try:
        enclosed, w = pointgap_encloses(bands, 0.0)
        print(f"point gap around E=0: {'yes' if enclosed else 'no'} (winding {w})")
    except FlatSkinError as exc:
        print(f"point gap around E=0: undefined ({exc})")
    print(f"max |Im E| (OBC): {np.abs(obc.values.imag).max():.3e}")
    return [path]


def cmd_phase_map(cfg, out):
    from .response import GreenProbe, chi_map

    spec, p = cfg.spec(), cfg.float_params()
    g1, g2 = parse_grid(cfg.grid)
    probe = GreenProbe(1j * cfg.eta, 2, cfg.method)
    m = chi_map(spec, p, g1, g2, cfg.N, probe)
    meta = _meta(cfg, N=cfg.N, grid=cfg.grid, eta=cfg.eta, method=cfg.method)
    files = [csvio.write_csv(out / "chi_map.csv", ["gamma1", "gamma2", "chi"], m.rows(), meta)]
    if cfg.model == BUILTIN:
        rows = [(name, x, y) for name, pts in m.region_boundaries for x, y in pts]
        files.append(csvio.write_csv(out / "boundaries.csv", ["curve", "gamma1", "gamma2"], rows, meta))
    if m.failures:
        print(f"{len(m.failures)} cell(s) failed and are written as nan")
    print(f"chi range: {np.nanmin(m.chi):.4f} .. {np.nanmax(m.chi):.4f}")
    return files


def cmd_response(cfg, out):
    from .response import GreenProbe, chi, green_response, response_rows

    spec, p = cfg.spec(), cfg.float_params()
    H = obc_hamiltonian(spec, p, cfg.N)
    R = green_response(H, GreenProbe(1j * cfg.eta, 2, cfg.method))
    path = csvio.write_csv(out / "response.csv", ["site", "abs_R"], response_rows(R),
                           _meta(cfg, N=cfg.N, eta=cfg.eta, method=cfg.method))
    print(f"chi = {chi(R):.6f}")
    return [path]


def cmd_modes(cfg, out):
    from .flatband import localization_report, mode_basis, mode_rows

    spec, p = cfg.spec(), cfg.float_params()
    H = obc_hamiltonian(spec, p, cfg.N)
    basis = mode_basis(H)
    path = csvio.write_csv(out / "modes.csv", ["mode", "site", "abs_rev", "abs_lev"], mode_rows(basis),
                           _meta(cfg, N=cfg.N))
    r = [localization_report(basis.revs[:, j]) for j in range(basis.size)]
    l = [localization_report(basis.levs[:, j]) for j in range(basis.size)]
    print(f"{basis.size} zero modes; pairing error {basis.pairing_error():.2e}")
    print(f"REV participation ratio max {max(x.participation_ratio for x in r):.3f}")
    print(f"LEV argmax sites: {sorted({x.argmax_site for x in l})}")
    return [path]


def cmd_scaling(cfg, out):
    from .response import max_green_scaling

    spec, p = cfg.spec(), cfg.float_params()
    res = max_green_scaling(spec, p, parse_sizes(cfg.sizes), cfg.eta)
    path = csvio.write_csv(out / "green_scaling.csv", ["N", "log_max_G"], res.rows(),
                           _meta(cfg, sizes=cfg.sizes, eta=cfg.eta))
    print(f"slope = {res.slope:.6f}  R^2 = {res.r_squared:.6f}")
    if res.extrapolated.any():
        print(f"extrapolated sizes: {res.N[res.extrapolated].tolist()}")
    return [path]


def cmd_gbz(cfg, out):
    from .nonbloch import gbz_dispersive, skin_growth_per_cell

    _require_builtin(cfg)
    p = cfg.float_params()
    g = gbz_dispersive(p, cfg.N)
    path = csvio.write_csv(out / "gbz.csv", ["re_beta", "im_beta", "re_E", "im_E"], g.rows(),
                           _meta(cfg, N=cfg.N, flatband_gbz=g.flatband_gbz))
    print(f"GBZ radius {g.radius:.6f} (reciprocal {g.reciprocal_radius:.6f})")
    print(f"{len(g.samples)} samples, {len(g.boundary_samples)} excluded as boundary modes")
    print(f"skin growth per cell {skin_growth_per_cell(p, cfg.N):.6f}")
    return [path]


def cmd_ep_scan(cfg, out):
    from .degeneracy import obc_ep_scan
    from .nonbloch import ep3_locations, ep3_rows, ep3_window_scan

    _require_builtin(cfg)
    p = cfg.float_params()
    g1, g2 = parse_grid(cfg.grid)
    scan = obc_ep_scan(g1, g2, cfg.N, p)
    meta = _meta(cfg, N=cfg.N, grid=cfg.grid)
    files = [csvio.write_csv(out / "ep_curves.csv", ["gamma1", "gamma2", "min_abs_E", "is_ep"],
                             scan.rows(), meta)]
    records = [r for a in g1 for b in g2 for r in ep3_locations(p.replace(gamma1=a, gamma2=b))]
    files.append(csvio.write_csv(out / "ep3.csv", ["gamma1", "gamma2", "re_beta", "im_beta", "order"],
                                 ep3_rows(records), meta))
    for a in g1:
        crossings = scan.crossings(float(a))
        windows = ep3_window_scan(p.replace(gamma1=float(a)), g2)
        text = ", ".join(f"({lo:.5f}, {hi:.5f})" for lo, hi in windows) or "none"
        print(f"gamma1={a:.6g}: EP3 window {text}; {len(crossings)} OBC EP crossing(s)")
    if scan.unresolved:
        print(f"{len(scan.unresolved)} unresolved segment(s)")
    return files


def cmd_qdist(cfg, out):
    from .nonbloch import ep3_locations, qdist_grid

    _require_builtin(cfg)
    p = cfg.float_params()
    eps = ep3_locations(p)
    if not eps:
        raise PreconditionError("no EP3 on the GBZ at these parameters (try --gamma2 1.0)")
    beta_ep = max(eps, key=lambda r: r.beta.imag).beta
    dbs = parse_range(cfg.delta_beta, "--delta-beta")
    thetas = parse_range(cfg.theta, "--theta")
    dthetas = 2 * np.pi * np.arange(cfg.dtheta_count) / cfg.dtheta_count
    rows = qdist_grid(p, beta_ep, dbs, thetas, dthetas)
    path = csvio.write_csv(out / "qdist.csv", ["kind", "delta_beta", "theta", "dtheta", "value"], rows,
                           _meta(cfg, beta_ep=f"{beta_ep.real:.17g}{beta_ep.imag:+.17g}j"))
    for kind in ("LR", "RR"):
        v = np.array([r[4] for r in rows if r[0] == kind and r[1] == dbs.min() and r[3] != 0.0])
        print(f"d_{kind} at delta_beta={dbs.min():g}: min {v.min():.4g} max {v.max():.4g}")
    return [path]


def cmd_transform(cfg, out):
    from .degeneracy import rotate_spectrum
    from scipy.optimize import linear_sum_assignment

    spec, p = cfg.spec(), cfg.float_params()
    H = obc_hamiltonian(spec, p, cfg.N)
    rot = rotate_spectrum(H)
    a = np.linalg.eigvals(rot.H3)
    b = 1j * np.linalg.eigvals(H)
    D = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(D)
    order = np.lexsort((b[c].imag, b[c].real))
    rows = [(b[c[i]].real, b[c[i]].imag, a[r[i]].real, a[r[i]].imag) for i in order]
    path = csvio.write_csv(out / "transform.csv", ["re_iE", "im_iE", "re_eig_H3", "im_eig_H3"], rows,
                           _meta(cfg, N=cfg.N))
    print(f"max |eig(H3) - i eig(H)| = {D[r, c].max():.3e}")
    print(f"H3 real: {bool(np.isrealobj(rot.H3))}; block off-diagonal max {rot.offdiag_max:.1e}")
    return [path]


def cmd_jordan(cfg, out):
    from .degeneracy import jordan_special_case

    _require_builtin(cfg)
    p = cfg.exact_params()
    rep = jordan_special_case(p.t1, p.t2, cfg.N, p.gamma1, p.gamma2)
    rows = [(str(lam), rep.algebraic[lam], rep.geometric[lam], " ".join(map(str, rep.kernel_chain[lam])))
            for lam in rep.eigenvalue]
    path = csvio.write_csv(out / "jordan.csv", ["eigenvalue", "algebraic", "geometric", "kernel_dims"],
                           rows, _meta(cfg, N=cfg.N))
    for lam, a, g, _ in rows:
        print(f"lambda={lam}: algebraic {a}, geometric {g}")
    print(f"structure as expected: {rep.ok()}")
    return [path]


def cmd_multiplicity(cfg, out):
    from .degeneracy import exact_null_dim, multiplicities_at_zero

    spec, p = cfg.spec(), cfg.float_params()
    rep = multiplicities_at_zero(obc_hamiltonian(spec, p, cfg.N))
    exact = exact_null_dim(cfg.exact_params(), cfg.N, spec)
    rows = [(p.gamma1, p.gamma2, cfg.N, rep.algebraic_zero, rep.geometric_zero, int(rep.is_ep), exact)]
    path = csvio.write_csv(out / "multiplicity.csv",
                           ["gamma1", "gamma2", "N", "algebraic_zero", "geometric_zero", "is_ep",
                            "exact_null_dim"], rows, _meta(cfg, N=cfg.N))
    print(f"algebraic {rep.algebraic_zero}, geometric {rep.geometric_zero}, exact null dim {exact}, "
          f"EP: {rep.is_ep}")
    for w in rep.warnings:
        print(f"warning: {w}")
    return [path]


def cmd_emit_model(cfg, out):
    path = out / "model.json"
    path.write_text(cfg.spec().to_json() + "\n", encoding="utf-8")
    return [path]


COMMANDS = {
    "spectrum": (cmd_spectrum, "PBC bands and OBC eigenvalues"),
    "phase-map": (cmd_phase_map, "chi over a (gamma1, gamma2) grid"),
    "response": (cmd_response, "flat-band Green's-function response profile"),
    "modes": (cmd_modes, "zero-mode REV/LEV amplitudes"),
    "scaling": (cmd_scaling, "log max |G| against chain length"),
    "gbz": (cmd_gbz, "dispersive generalized Brillouin zone"),
    "ep-scan": (cmd_ep_scan, "OBC exceptional-point curves and non-Bloch EP3s"),
    "qdist": (cmd_qdist, "quantum distances around a non-Bloch EP3"),
    "transform": (cmd_transform, "90-degree spectral rotation check"),
    "jordan": (cmd_jordan, "exact Jordan data on t1 = gamma1, t2 = gamma2"),
    "multiplicity": (cmd_multiplicity, "algebraic/geometric zero multiplicities"),
    "emit-model": (cmd_emit_model, "write the model spec as JSON"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON; explicit flags override it")
    common.add_argument("--model", help=f"'{BUILTIN}' or a model-spec JSON file")
    for name in ("t1", "t2", "gamma1", "gamma2"):
        common.add_argument(f"--{name}", help="decimal or p/q")
    common.add_argument("--param", action="append", metavar="NAME=VALUE",
                        help="extra parameter of a user model (repeatable)")
    common.add_argument("--cells", "-N", type=int, dest="N", help="unit cells")
    common.add_argument("--kpoints", type=int)
    common.add_argument("--grid", help="g1min:g1max:n,g2min:g2max:n")
    common.add_argument("--eta", type=float)
    common.add_argument("--method", choices=["direct-inverse", "flat-band-projector"])
    common.add_argument("--sizes", help="chain lengths, a:b:step or comma list")
    common.add_argument("--delta-beta", dest="delta_beta")
    common.add_argument("--theta")
    common.add_argument("--dtheta-count", dest="dtheta_count", type=int)
    common.add_argument("--hermitian", action="store_true", default=None, help="set gamma1 = gamma2 = 0")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="flatskin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_)
    v = sub.add_parser("verify", help="check output files against manifest.json")
    v.add_argument("--out", default=".")
    return parser


def resolve_config(args) -> RunConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config!r}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc.msg}") from None
        base = base.get("config", base)  # accept a whole manifest too
    cfg = RunConfig.from_dict(base) if base else RunConfig()
    cfg.command = args.command
    for key in ("model", "N", "kpoints", "grid", "eta", "method", "sizes", "delta_beta", "theta",
                "dtheta_count", "hermitian", "out", "seed"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    params = dict(cfg.params)
    if args.model is not None and not args.config and cfg.model != BUILTIN:
        params = {}
    for name in ("t1", "t2", "gamma1", "gamma2"):
        value = getattr(args, name)
        if value is not None:
            params[name] = value
    for item in args.param or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ConfigurationError(f"--param expects NAME=VALUE, got {item!r}")
        params[name] = value
    cfg.params = params
    if cfg.N < 2:
        raise ConfigurationError(f"--cells must be >= 2, got {cfg.N}")
    if not math.isfinite(cfg.eta):
        raise ConfigurationError("--eta must be finite")
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.command == "verify":
            status = csvio.verify_manifest(args.out)
            for name, state in sorted(status.items()):
                print(f"{name}: {state}")
            return 0 if all(s == "ok" for s in status.values()) else 3
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[cfg.command][0](cfg, out)
        csvio.write_manifest(out, cfg.to_dict(), files, cfg.command)
        return 0
    except FlatSkinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
