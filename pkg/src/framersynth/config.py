"""Model configuration files, bundled systems, and gain/certificate IO.

Configs are YAML documents. The layout, with optional keys marked:

    name: my_system
    matrices: {A: [[...]], B: ..., C: ..., D: ..., W: ..., V: ...}
    phi:                       # optional; one list of terms per state row
      - [{kind: sin, coef: 0.1, var: 3}, {kind: lin, coef: -0.1, var: 3}]
      - []
    psi: [...]                 # optional; one list of terms per output row
    noise:
      w: {lo: [...], hi: [...]}
      v: {lo: [...], hi: [...]}
    x0: {lo: [...], hi: [...]}
    pre_decomposed: false      # optional; true = phi/psi already sign-stable
    observer_gain:             # optional
      value: [[...]]
      orientation: gain        # or transposed (value stored as l x n)
    gains: {Ac: ..., Kb_hi: ..., Kb_lo: ..., Cc: ..., Kd_hi: ...,
            Kd_lo: ..., Kx_nu: ..., Ku_nu: ...}      # optional, all 8 or none
    alpha: 0.1                 # optional
    eps0: 0.001                # optional
    regularization: only_if_singular   # optional
    selection: auto            # optional
    horizon: 100               # optional
    seed: 0                    # optional

Term variable indices are 1-based in files (var: 3 means the third state)
and converted to 0-based internally. Parsing collects every problem it can
find before raising, so one round of fixes usually suffices.

``dump_config`` emits a canonical form (sorted keys, floats via repr) so
that configs diff cleanly and emit/parse/emit is byte-stable.
"""

import io

import numpy as np
import yaml

try:
    from importlib import resources as _resources
except ImportError:  # pragma: no cover
    _resources = None

from .controller import ControllerGains
from .decomp import JssDecomposition, NonlinearMap, Term, is_sign_stable
from .matops import IntervalVec
from .observer import DecompPair, decompose_model
from .plant import SystemModel

__all__ = [
    "ConfigError",
    "ModelConfig",
    "parse_config",
    "parse_config_text",
    "config_from_dict",
    "canonical_dict",
    "dump_config",
    "save_gains",
    "load_gains",
    "list_bundled",
    "load_bundled",
]

_MATRIX_KEYS = ("A", "B", "C", "D", "W", "V")
_TOP_KEYS = {
    "name", "matrices", "phi", "psi", "noise", "x0", "pre_decomposed",
    "observer_gain", "gains", "alpha", "eps0", "regularization",
    "selection", "horizon", "seed",
}
_TERM_KINDS = ("sin", "cos", "lin", "const")
_DEFAULTS = {
    "alpha": 0.1,
    "eps0": 0.001,
    "regularization": "only_if_singular",
    "selection": "auto",
    "horizon": 100,
    "seed": 0,
}


class ConfigError(ValueError):
    """Raised with the complete list of problems found in a config."""

    def __init__(self, errors, source=""):
        self.errors = list(errors)
        self.source = source
        where = f" in {source}" if source else ""
        super().__init__(
            f"{len(self.errors)} config error(s){where}:\n  - "
            + "\n  - ".join(self.errors)
        )


class ModelConfig:
    """Validated model description plus run settings.

    Everything heavyweight (the SystemModel, gains, observer gain) is
    already constructed; ``decomposition()`` produces the remainder
    decomposition pair the rest of the library consumes.
    """

    def __init__(self, model, L=None, gains=None, alpha=0.1, eps0=0.001,
                 regularization="only_if_singular", selection="auto",
                 horizon=100, seed=0, pre_decomposed=False, name=""):
        self.model = model
        self.L = None if L is None else np.asarray(L, dtype=float)
        self.gains = gains
        self.alpha = float(alpha)
        self.eps0 = float(eps0)
        self.regularization = regularization
        self.selection = selection
        self.horizon = int(horizon)
        self.seed = int(seed)
        self.pre_decomposed = bool(pre_decomposed)
        self.name = name or model.name

    def decomposition(self):
        """Remainder decompositions of phi and psi per the config's policy."""
        if self.pre_decomposed:
            m = self.model
            return DecompPair(
                JssDecomposition(np.zeros((m.n, m.n)), m.phi, "pre"),
                JssDecomposition(np.zeros((m.l, m.n)), m.psi, "pre"),
            )
        return decompose_model(self.model, selection=self.selection)

    def __repr__(self):
        return (
            f"ModelConfig(name={self.name!r}, n={self.model.n}, "
            f"m={self.model.m}, l={self.model.l}, "
            f"gains={'yes' if self.gains is not None else 'no'})"
        )


def _as_matrix(value, what, errs):
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errs.append(f"{what}: not a numeric matrix")
        return None
    if M.ndim != 2:
        errs.append(f"{what}: expected a matrix (list of rows), got ndim={M.ndim}")
        return None
    return M


def _as_vector(value, what, errs):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errs.append(f"{what}: not a numeric vector")
        return None
    if v.ndim != 1:
        errs.append(f"{what}: expected a flat list of numbers")
        return None
    return v


def _parse_box(data, what, dim, errs):
    if not isinstance(data, dict) or set(data) != {"lo", "hi"}:
        errs.append(f"{what}: expected a mapping with keys lo and hi")
        return None
    lo = _as_vector(data["lo"], f"{what}.lo", errs)
    hi = _as_vector(data["hi"], f"{what}.hi", errs)
    if lo is None or hi is None:
        return None
    if dim is not None and (lo.shape != (dim,) or hi.shape != (dim,)):
        errs.append(f"{what}: expected vectors of length {dim}, got {lo.shape[0]} and {hi.shape[0]}")
        return None
    if np.any(lo > hi):
        errs.append(f"{what}: lo exceeds hi in some component")
        return None
    return IntervalVec(lo, hi)


def _parse_terms(rows, what, n_in, n_out, errs):
    if not isinstance(rows, list):
        errs.append(f"{what}: expected a list of rows")
        return None
    if n_out is not None and len(rows) != n_out:
        errs.append(f"{what}: expected {n_out} rows, got {len(rows)}")
        return None
    parsed = []
    ok = True
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            errs.append(f"{what}[{i}]: each row must be a list of terms")
            ok = False
            continue
        terms = []
        for j, item in enumerate(row):
            where = f"{what}[{i}][{j}]"
            if not isinstance(item, dict):
                errs.append(f"{where}: term must be a mapping")
                ok = False
                continue
            kind = item.get("kind")
            if kind not in _TERM_KINDS:
                errs.append(f"{where}: unknown term kind {kind!r}")
                ok = False
                continue
            if "coef" not in item or not isinstance(item["coef"], (int, float)):
                errs.append(f"{where}: missing or non-numeric coef")
                ok = False
                continue
            extra = set(item) - {"kind", "coef", "var"}
            if extra:
                errs.append(f"{where}: unknown term keys {sorted(extra)}")
                ok = False
                continue
            if kind == "const":
                if "var" in item:
                    errs.append(f"{where}: const terms take no var")
                    ok = False
                    continue
                terms.append(Term("const", item["coef"]))
                continue
            var = item.get("var")
            if not isinstance(var, int) or isinstance(var, bool):
                errs.append(f"{where}: var must be an integer (1-based)")
                ok = False
                continue
            if n_in is not None and not (1 <= var <= n_in):
                errs.append(f"{where}: var {var} out of range 1..{n_in}")
                ok = False
                continue
            terms.append(Term(kind, item["coef"], var - 1))
        parsed.append(terms)
    return parsed if ok else None


def config_from_dict(data, source=""):
    """Validate a raw mapping into a ModelConfig, aggregating all errors."""
    errs = []
    if not isinstance(data, dict):
        raise ConfigError(["document root must be a mapping"], source)
    unknown = set(data) - _TOP_KEYS
    if unknown:
        errs.append(f"unknown top-level keys {sorted(unknown)}")

    mats = data.get("matrices")
    got = {}
    if not isinstance(mats, dict):
        errs.append("matrices: required mapping with keys A,B,C,D,W,V")
    else:
        missing = [k for k in _MATRIX_KEYS if k not in mats]
        if missing:
            errs.append(f"matrices: missing {missing}")
        extra = set(mats) - set(_MATRIX_KEYS)
        if extra:
            errs.append(f"matrices: unknown keys {sorted(extra)}")
        for k in _MATRIX_KEYS:
            if k in mats:
                M = _as_matrix(mats[k], f"matrices.{k}", errs)
                if M is not None:
                    got[k] = M

    n = m = l = None
    if "A" in got:
        if got["A"].shape[0] != got["A"].shape[1]:
            errs.append(f"matrices.A: must be square, got {got['A'].shape}")
        else:
            n = got["A"].shape[0]
    if "B" in got:
        m = got["B"].shape[1]
        if n is not None and got["B"].shape[0] != n:
            errs.append(f"matrices.B: expected {n} rows, got {got['B'].shape[0]}")
    if "C" in got:
        l = got["C"].shape[0]
        if n is not None and got["C"].shape[1] != n:
            errs.append(f"matrices.C: expected {n} columns, got {got['C'].shape[1]}")
    if "D" in got and l is not None and m is not None and got["D"].shape != (l, m):
        errs.append(f"matrices.D: expected shape {(l, m)}, got {got['D'].shape}")
    if "W" in got and n is not None and got["W"].shape[0] != n:
        errs.append(f"matrices.W: expected {n} rows, got {got['W'].shape[0]}")
    if "V" in got and l is not None and got["V"].shape[0] != l:
        errs.append(f"matrices.V: expected {l} rows, got {got['V'].shape[0]}")
    n_w = got["W"].shape[1] if "W" in got else None
    n_v = got["V"].shape[1] if "V" in got else None

    phi = psi = None
    if "phi" in data:
        rows = _parse_terms(data["phi"], "phi", n, n, errs)
        if rows is not None and n is not None:
            phi = NonlinearMap(n, n, rows=rows)
    if "psi" in data:
        rows = _parse_terms(data["psi"], "psi", n, l, errs)
        if rows is not None and n is not None and l is not None:
            psi = NonlinearMap(n, l, rows=rows)

    noise = data.get("noise")
    w_box = v_box = None
    if not isinstance(noise, dict) or set(noise) - {"w", "v"}:
        errs.append("noise: required mapping with keys w and v")
    else:
        if "w" not in noise:
            errs.append("noise.w: required")
        else:
            w_box = _parse_box(noise["w"], "noise.w", n_w, errs)
        if "v" not in noise:
            errs.append("noise.v: required")
        else:
            v_box = _parse_box(noise["v"], "noise.v", n_v, errs)
    x0_box = None
    if "x0" not in data:
        errs.append("x0: required initial-state box")
    else:
        x0_box = _parse_box(data["x0"], "x0", n, errs)

    pre_dec = data.get("pre_decomposed", False)
    if not isinstance(pre_dec, bool):
        errs.append("pre_decomposed: must be true or false")
        pre_dec = False
    if pre_dec:
        for name_, mp in (("phi", phi), ("psi", psi)):
            if mp is not None and not is_sign_stable(mp.jac_lo, mp.jac_hi):
                errs.append(f"{name_}: pre_decomposed set but Jacobian bounds are not sign-stable")

    L = None
    og = data.get("observer_gain")
    if og is not None:
        if not isinstance(og, dict) or "value" not in og or set(og) - {"value", "orientation"}:
            errs.append("observer_gain: expected mapping with value and optional orientation")
        else:
            orientation = og.get("orientation", "gain")
            if orientation not in ("gain", "transposed"):
                errs.append(f"observer_gain.orientation: unknown value {orientation!r}")
            else:
                M = _as_matrix(og["value"], "observer_gain.value", errs)
                if M is not None:
                    L = M.T if orientation == "transposed" else M
                    if n is not None and l is not None and L.shape != (n, l):
                        errs.append(
                            f"observer_gain: expected effective shape {(n, l)}, got {L.shape}"
                        )
                        L = None

    gains = None
    gd = data.get("gains")
    if gd is not None:
        if not isinstance(gd, dict):
            errs.append("gains: expected a mapping of the eight gain matrices")
        else:
            missing = [k for k in ControllerGains.FIELDS if k not in gd]
            extra = set(gd) - set(ControllerGains.FIELDS)
            if missing:
                errs.append(f"gains: missing {missing}")
            if extra:
                errs.append(f"gains: unknown keys {sorted(extra)}")
            if not missing and not extra:
                parsed = {k: _as_matrix(gd[k], f"gains.{k}", errs) for k in ControllerGains.FIELDS}
                if all(v is not None for v in parsed.values()):
                    try:
                        gains = ControllerGains(**parsed)
                    except ValueError as e:
                        errs.append(f"gains: {e}")
                    else:
                        if n is not None and gains.n != n:
                            errs.append(f"gains: state dimension {gains.n} != model {n}")
                            gains = None
                        elif m is not None and gains.m != m:
                            errs.append(f"gains: input dimension {gains.m} != model {m}")
                            gains = None

    settings = dict(_DEFAULTS)
    for key in _DEFAULTS:
        if key in data:
            settings[key] = data[key]
    if not isinstance(settings["alpha"], (int, float)) or settings["alpha"] <= 0:
        errs.append("alpha: must be a positive number")
    if not isinstance(settings["eps0"], (int, float)) or settings["eps0"] < 0:
        errs.append("eps0: must be a nonnegative number")
    if settings["regularization"] not in ("only_if_singular", "always", "never"):
        errs.append(f"regularization: unknown policy {settings['regularization']!r}")
    if settings["selection"] not in ("auto", "upper", "lower"):
        errs.append(f"selection: unknown mode {settings['selection']!r}")
    if not isinstance(settings["horizon"], int) or isinstance(settings["horizon"], bool) or settings["horizon"] < 1:
        errs.append("horizon: must be a positive integer")
    if not isinstance(settings["seed"], int) or isinstance(settings["seed"], bool) or settings["seed"] < 0:
        errs.append("seed: must be a nonnegative integer")

    model = None
    if not errs:
        try:
            model = SystemModel(
                got["A"], got["B"], got["C"], got["D"], got["W"], got["V"],
                w_box, v_box, x0_box, phi=phi, psi=psi,
                name=data.get("name", ""),
            )
        except ValueError as e:
            errs.append(str(e))
    if errs:
        raise ConfigError(errs, source)
    return ModelConfig(
        model, L=L, gains=gains,
        alpha=settings["alpha"], eps0=settings["eps0"],
        regularization=settings["regularization"], selection=settings["selection"],
        horizon=settings["horizon"], seed=settings["seed"],
        pre_decomposed=pre_dec, name=data.get("name", ""),
    )


def parse_config_text(text, source="<string>"):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"not valid YAML: {e}"], source)
    return config_from_dict(data, source=source)


def parse_config(path):
    """Load and validate a config file; raises ConfigError with every problem."""
    with open(path, "r") as f:
        text = f.read()
    return parse_config_text(text, source=str(path))


def _listify(M):
    return [[float(x) for x in row] for row in np.asarray(M, dtype=float)]


def _terms_to_data(mp):
    rows = []
    for terms in mp.rows:
        row = []
        for t in terms:
            d = {"kind": t.kind, "coef": float(t.coef)}
            if t.var is not None:
                d["var"] = t.var + 1
            row.append(d)
        rows.append(row)
    return rows


def canonical_dict(cfg):
    """The plain-data form of a config, suitable for stable serialization.

    Only expression-mode nonlinearities can be serialized; callable maps
    have no file representation.
    """
    mdl = cfg.model
    out = {
        "matrices": {k: _listify(getattr(mdl, k)) for k in _MATRIX_KEYS},
        "noise": {
            "w": {"lo": [float(x) for x in mdl.w_box.lo], "hi": [float(x) for x in mdl.w_box.hi]},
            "v": {"lo": [float(x) for x in mdl.v_box.lo], "hi": [float(x) for x in mdl.v_box.hi]},
        },
        "x0": {"lo": [float(x) for x in mdl.x0_box.lo], "hi": [float(x) for x in mdl.x0_box.hi]},
        "alpha": float(cfg.alpha),
        "eps0": float(cfg.eps0),
        "regularization": cfg.regularization,
        "selection": cfg.selection,
        "horizon": int(cfg.horizon),
        "seed": int(cfg.seed),
    }
    if cfg.name:
        out["name"] = cfg.name
    if cfg.pre_decomposed:
        out["pre_decomposed"] = True
    for key, mp in (("phi", mdl.phi), ("psi", mdl.psi)):
        if mp.rows is None:
            raise ValueError(f"{key} is a callable map and cannot be serialized")
        if any(mp.rows):
            out[key] = _terms_to_data(mp)
    if cfg.L is not None:
        out["observer_gain"] = {"value": _listify(cfg.L), "orientation": "gain"}
    if cfg.gains is not None:
        out["gains"] = {k: _listify(getattr(cfg.gains, k)) for k in ControllerGains.FIELDS}
    return out


def dump_config(cfg, path=None):
    """Serialize a config canonically; returns the YAML text."""
    text = yaml.safe_dump(canonical_dict(cfg), sort_keys=True, default_flow_style=None)
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


def save_gains(path, gains=None, L=None, certificate=None):
    """Write a gain file: controller gains, observer gain, and certificate.

    The certificate mapping, when given, carries the quadratic form P, the
    attenuation level mu, and the scalars alpha/epsilon/gamma it was checked
    under. Output key order is fixed so identical inputs produce identical
    files.
    """
    data = {}
    if gains is not None:
        data["gains"] = {k: _listify(getattr(gains, k)) for k in ControllerGains.FIELDS}
    if L is not None:
        data["observer_gain"] = {"value": _listify(L), "orientation": "gain"}
    if certificate is not None:
        cert = {}
        for key in ("mu", "alpha", "epsilon", "gamma"):
            if key in certificate and certificate[key] is not None:
                cert[key] = float(certificate[key])
        if "P" in certificate and certificate["P"] is not None:
            cert["P"] = _listify(certificate["P"])
        data["certificate"] = cert
    text = yaml.safe_dump(data, sort_keys=True, default_flow_style=None)
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


def load_gains(path):
    """Read a gain file back; returns {gains, L, certificate} (members may be None)."""
    with open(path, "r") as f:
        data = yaml.safe_load(f)
    errs = []
    if not isinstance(data, dict):
        raise ConfigError(["gain file root must be a mapping"], str(path))
    out = {"gains": None, "L": None, "certificate": None}
    gd = data.get("gains")
    if gd is not None:
        parsed = {k: _as_matrix(gd.get(k), f"gains.{k}", errs) for k in ControllerGains.FIELDS}
        if all(v is not None for v in parsed.values()):
            try:
                out["gains"] = ControllerGains(**parsed)
            except ValueError as e:
                errs.append(f"gains: {e}")
    og = data.get("observer_gain")
    if og is not None:
        M = _as_matrix(og.get("value"), "observer_gain.value", errs)
        if M is not None:
            out["L"] = M.T if og.get("orientation") == "transposed" else M
    cert = data.get("certificate")
    if cert is not None:
        parsed = dict(cert)
        if "P" in parsed:
            parsed["P"] = _as_matrix(parsed["P"], "certificate.P", errs)
        out["certificate"] = parsed
    if errs:
        raise ConfigError(errs, str(path))
    return out


def list_bundled():
    """Names of the model configs shipped with the package."""
    root = _resources.files("framersynth") / "models"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled(name):
    """Parse one of the bundled model configs by bare name."""
    root = _resources.files("framersynth") / "models"
    path = root / f"{name}.yaml"
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise KeyError(f"no bundled model {name!r}; have {list_bundled()}")
    return parse_config_text(text, source=f"bundled:{name}")
