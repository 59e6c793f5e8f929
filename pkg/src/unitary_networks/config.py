"""Experiment configuration: JSON schema checks and model construction.

Complex numbers are ``[re, im]`` pairs and angles are radians. Every schema
violation raises :class:`SchemaError` carrying the dotted path of the field.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .fibered import ArcSet, Symbol, arc, symbol_cc, symbol_qw
from .lattice import CoinField, LatticeShape, NetworkOperator, StateVector, UnitaryMatrix
from .models import (
    NAMED_COINS, BbParams, CcParams, QwParams, VerblunskiSeq, build_bb, build_cc_qw, build_cmv, build_qw,
    coin_from_params, named_coin,
)
from .mourre import PerturbationProfile, perturbation_field, perturbed_field

SCHEMA_VERSION = 1
MODEL_KINDS = ("qw", "bb", "cmv", "cc")
RELATIONS = ("cc-qw", "qw-bb", "bb-square", "gauge", "cmv")

DEFAULT_TOLERANCES = {
    "unitary": 1e-12,
    "residual": 1e-12,
    "square_residual": 1e-11,
    "spectral": 1e-11,
    "gap": 1e-6,
    "grad": 1e-4,
    "fourier": 1e-10,
}

DEFAULTS = {
    "seed": 0,
    "bands": {"N": 512},
    "verify": {"instances": 1},
    "mourre": {"exclude": 0},
    "evolve": {"T": 100, "initial": {"coin": 1, "site": None}},
    "spectrum": {"n_max": 64, "n_grid": 2048, "initial": {"coin": 1, "site": None}},
    "stability": {"N": 1024, "factor": 3.0},
}


class SchemaError(ConfigurationError):
    """A config field is missing, mistyped or out of range."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --- primitive readers ----------------------------------------------------------


def _get(node: dict, key: str, path: str, default=...):
    if key in node:
        return node[key]
    if default is ...:
        raise SchemaError(f"{path}.{key}" if path else key, "required field is missing")
    return default


def _number(value, path, lo=-np.inf, hi=np.inf) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    if not lo <= value <= hi:
        raise SchemaError(path, f"{value} outside [{lo}, {hi}]")
    return float(value)


def _integer(value, path, lo=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise SchemaError(path, f"{value} is below the minimum {lo}")
    return int(value)


def _complex(value, path) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if not (isinstance(value, list) and len(value) == 2):
        raise SchemaError(path, f"expected [re, im], got {value!r}")
    return complex(_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]"))


def _real_array(value, path, size=None) -> np.ndarray:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list of numbers")
    out = np.array([_number(v, f"{path}[{k}]") for k, v in enumerate(value)])
    if size is not None and out.size != size:
        raise SchemaError(path, f"expected {size} entries, got {out.size}")
    return out


def _complex_matrix(value, path) -> np.ndarray:
    if not (isinstance(value, list) and value and all(isinstance(row, list) for row in value)):
        raise SchemaError(path, "expected a square matrix of [re, im] entries")
    n = len(value)
    rows = []
    for i, row in enumerate(value):
        if len(row) != n:
            raise SchemaError(f"{path}[{i}]", f"expected {n} entries, got {len(row)}")
        rows.append([_complex(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(rows, dtype=complex)


def _arc(value, path) -> ArcSet:
    if not (isinstance(value, list) and len(value) == 2):
        raise SchemaError(path, f"expected [lo, hi] in radians, got {value!r}")
    lo, hi = (_number(v, f"{path}[{k}]") for k, v in enumerate(value))
    return arc(lo, hi)


def _sizes(value, path) -> list:
    if not (isinstance(value, list) and value):
        raise SchemaError(path, "expected a non-empty list of truncation sizes")
    return [_integer(v, f"{path}[{k}]", lo=2) for k, v in enumerate(value)]


# --- document level ----------------------------------------------------------------


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def read(path) -> dict:
    """Parse a config file without schema checks."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return doc


def load(path) -> dict:
    return validate(read(path))


def validate(doc) -> dict:
    """Schema-check a config document and fill in defaults; returns a new dict."""
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "expected a JSON object")
    doc = copy.deepcopy(doc)
    version = _get(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version!r}, expected {SCHEMA_VERSION}")
    unknown = set(doc) - {"schema_version", "model", "seed", "tolerances", *DEFAULTS, "description"}
    if unknown:
        raise SchemaError(sorted(unknown)[0], "unknown top-level field")
    doc["seed"] = _integer(doc.get("seed", DEFAULTS["seed"]), "seed", lo=0)
    tols = dict(DEFAULT_TOLERANCES)
    for key, val in doc.get("tolerances", {}).items():
        if key not in DEFAULT_TOLERANCES:
            raise SchemaError(f"tolerances.{key}", "unknown tolerance")
        tols[key] = _number(val, f"tolerances.{key}", lo=0.0)
    doc["tolerances"] = tols
    for section, defaults in DEFAULTS.items():
        if section == "seed":
            continue
        node = doc.get(section, {})
        if not isinstance(node, dict):
            raise SchemaError(section, "expected an object")
        merged = copy.deepcopy(defaults)
        merged.update(node)
        doc[section] = merged
    if "model" in doc:
        _check_model(doc["model"])
    return doc


def _check_model(model):
    if not isinstance(model, dict):
        raise SchemaError("model", "expected an object")
    kind = _get(model, "kind", "model")
    if kind not in MODEL_KINDS:
        raise SchemaError("model.kind", f"expected one of {MODEL_KINDS}, got {kind!r}")
    # Building validates every field; the result is discarded.
    build_model(model, seed=0)


# --- models --------------------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """A constructed model: the operator, its symbol when homogeneous, and the parameters."""

    kind: str
    operator: NetworkOperator
    params: object
    symbol: Symbol | None = None


def _coin(model, d) -> np.ndarray:
    spec = _get(model, "coin", "model")
    if isinstance(spec, str):
        if spec not in NAMED_COINS:
            raise SchemaError("model.coin", f"unknown coin {spec!r}; known: {sorted(NAMED_COINS)}")
        return named_coin(spec, d)
    if isinstance(spec, dict):
        if d != 1:
            raise SchemaError("model.coin", "(alpha, beta, eta) parameters describe a 2x2 coin, d must be 1")
        alpha = _complex(_get(spec, "alpha", "model.coin"), "model.coin.alpha")
        beta = _complex(_get(spec, "beta", "model.coin"), "model.coin.beta")
        eta = _number(spec.get("eta", 0.0), "model.coin.eta")
        if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-12:
            raise SchemaError("model.coin", f"|alpha|^2 + |beta|^2 = {abs(alpha) ** 2 + abs(beta) ** 2:.6g} != 1")
        return coin_from_params(alpha, beta, eta).entries
    mat = _complex_matrix(spec, "model.coin")
    if mat.shape != (2 * d, 2 * d):
        raise SchemaError("model.coin", f"expected a {2 * d}x{2 * d} matrix, got {mat.shape}")
    try:
        return UnitaryMatrix(mat).entries
    except ValidationError as exc:
        raise SchemaError("model.coin", str(exc)) from exc


def _perturbation(node, seed) -> PerturbationProfile:
    path = "model.perturbation"
    if not isinstance(node, dict):
        raise SchemaError(path, "expected an object")
    kind = _get(node, "kind", path)
    if kind not in ("compact", "power"):
        raise SchemaError(f"{path}.kind", f"expected 'compact' or 'power', got {kind!r}")
    return PerturbationProfile(
        kind,
        c=_number(node.get("c", 0.5), f"{path}.c", lo=0.0),
        eps=_number(node.get("eps", 1.0), f"{path}.eps", lo=0.0),
        radius=_integer(node.get("radius", 0), f"{path}.radius", lo=0),
        seed=_integer(node.get("seed", seed), f"{path}.seed", lo=0),
    )


def build_model(model: dict, seed: int = 0, L: int | None = None) -> Model:
    """Construct the operator described by a ``model`` section; ``L`` overrides the truncation."""
    kind = model["kind"]
    if L is None:
        L = _integer(_get(model, "L", "model"), "model.L", lo=2)
    if kind == "qw":
        return _build_qw(model, seed, L)
    if kind == "bb":
        return _build_bb(model, seed, L)
    if kind == "cmv":
        return _build_cmv(model, L)
    return _build_cc(model, seed, L)


def _build_qw(model, seed, L) -> Model:
    d = _integer(model.get("d", 1), "model.d", lo=1)
    coin = _coin(model, d)
    field = CoinField.homogeneous(coin, d, L)
    sym = symbol_qw(coin, d)
    if "perturbation" in model:
        profile = _perturbation(model["perturbation"], seed)
        field = perturbed_field(coin, perturbation_field(profile, d, L, 2 * d))
    params = QwParams(d, field)
    return Model("qw", build_qw(params), params, sym)


_BB_FIELDS = ("r", "t", "theta", "nu", "gamma")


def _build_bb(model, seed, L) -> Model:
    if "random_seed" in model:
        rng = np.random.default_rng(_integer(model["random_seed"], "model.random_seed", lo=0))
        params = BbParams.random(L, rng)
    else:
        arrays = {}
        for name in _BB_FIELDS:
            value = _get(model, name, "model")
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                arrays[name] = np.full(L, float(value))
            else:
                arrays[name] = _real_array(value, f"model.{name}", size=L)
        params = BbParams(**arrays)
    try:
        params.validate()
    except ValidationError as exc:
        raise SchemaError(f"model.r[{exc.where}]", f"{exc} (k = {exc.where})") from exc
    return Model("bb", build_bb(params), params)


def _build_cmv(model, L) -> Model:
    raw = _get(model, "verblunski", "model")
    if not isinstance(raw, list):
        raise SchemaError("model.verblunski", "expected a list of [re, im] pairs")
    coeffs = np.array([_complex(v, f"model.verblunski[{k}]") for k, v in enumerate(raw)])
    if coeffs.size == 1:
        coeffs = np.full(L, coeffs[0])
    if coeffs.size != L:
        raise SchemaError("model.verblunski", f"expected {L} coefficients, got {coeffs.size}")
    seq = VerblunskiSeq(coeffs)
    try:
        seq.validate()
    except ValidationError as exc:
        raise SchemaError(f"model.verblunski[{exc.where}]", str(exc)) from exc
    if L % 2:
        raise SchemaError("model.L", f"CMV truncation must be even, got {L}")
    return Model("cmv", build_cmv(seq), seq)


def _build_cc(model, seed, L) -> Model:
    phi = _number(_get(model, "phi", "model"), "model.phi", lo=0.0, hi=np.pi / 2)
    if L % 2:
        raise SchemaError("model.L", f"Chalker-Coddington truncation must be even, got {L}")
    phases = model.get("d_phases", "identity")
    if phases == "identity":
        params = CcParams.uniform(phi, L)
    elif isinstance(phases, dict) and "random_seed" in phases:
        rng = np.random.default_rng(_integer(phases["random_seed"], "model.d_phases.random_seed", lo=0))
        params = CcParams.random(phi, L, rng)
    else:
        raise SchemaError("model.d_phases", "expected 'identity' or {\"random_seed\": n}")
    sym = symbol_cc(phi) if phases == "identity" else None
    return Model("cc", build_cc_qw(params), params, sym)


def homogeneous_symbol(model: dict) -> Symbol:
    """Symbol of a translation-invariant ``qw`` or ``cc`` model section."""
    kind = model["kind"]
    if kind == "qw" and "perturbation" not in model:
        d = _integer(model.get("d", 1), "model.d", lo=1)
        return symbol_qw(_coin(model, d), d)
    if kind == "cc" and model.get("d_phases", "identity") == "identity":
        return symbol_cc(_number(model["phi"], "model.phi", lo=0.0, hi=np.pi / 2))
    if kind == "qw":
        # the background coin of a perturbed walk
        d = _integer(model.get("d", 1), "model.d", lo=1)
        return symbol_qw(_coin(model, d), d)
    raise SchemaError("model.kind", f"a homogeneous qw or cc model is required, got {kind!r}")


def initial_state(node: dict, shape: LatticeShape, path: str) -> StateVector:
    """Basis state ``|tau> (x) |site>``; ``site`` defaults to the origin."""
    tau = _integer(_get(node, "coin", path), f"{path}.coin")
    valid = [s * k for k in range(1, shape.d + 1) for s in (1, -1)]
    if tau not in valid:
        raise SchemaError(f"{path}.coin", f"coin label must be one of {sorted(valid)}, got {tau}")
    site = node.get("site")
    if site is None:
        site = [0] * shape.d
    if not (isinstance(site, list) and len(site) == shape.d):
        raise SchemaError(f"{path}.site", f"expected {shape.d} integer coordinates")
    site = [_integer(v, f"{path}.site[{k}]") % shape.L for k, v in enumerate(site)]
    return StateVector.basis(shape, tau, site)

