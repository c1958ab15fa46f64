"""Config files (TOML or JSON) resolved into engine objects.

Recognised keys::

    p0 | p0_star     in-control true proportion, or its surrogate (converted)
    lambda           smoothing constant in (0, 1]
    n                subgroup size (int or list)
    arl0             target in-control ARL (default 370)
    l_bounds         [a, b] search interval for L (default [0.01, 10])
    max_run_length   censoring horizon (default max(100 * arl0, 5000))
    replicates       Monte Carlo replicates M (default 10001)
    seed             64-bit seed
    stream           "surrogate" or "latent" (corrected chart only)
    variants         subset of ["true", "naive", "corrected"]
    deltas           relative shifts for ARL1
    L                coefficient per variant, e.g. {corrected = 1.645}
    [pi]             misclassification matrix, see MisclassMatrix.from_mapping
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .chart import DEFAULT_L_BOUNDS, DEFAULT_REPLICATES, DEFAULT_SEED, ChartConfig, Variant, default_max_run_length
from .engine import STREAMS
from .errors import ChartError, ValidationError
from .misclass import MisclassMatrix, correct_proportion

KNOWN_KEYS = {
    "p0", "p0_star", "lambda", "n", "arl0", "l_bounds", "max_run_length", "replicates", "seed", "stream",
    "variants", "deltas", "L", "pi",
}


class ConfigError(ValidationError):
    def __init__(self, path, key, message):
        where = f"{path}" + (f": key '{key}'" if key else "")
        super().__init__(f"{where}: {message}")
        self.path = path
        self.key = key


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(path, None, f"cannot read config ({exc.strerror})") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(path, None, f"parse error: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(path, None, "top level must be a table/object")
    data["_path"] = str(path)
    return data


def resolve(raw: dict) -> dict:
    """Fill every default so the result fully determines a run."""
    path = raw.get("_path", "<config>")
    unknown = set(raw) - KNOWN_KEYS - {"_path"}
    if unknown:
        raise ConfigError(path, sorted(unknown)[0], "unknown key")

    def get(key, cast, default=None, required=False):
        if key not in raw:
            if required:
                raise ConfigError(path, key, "missing required key")
            return default
        try:
            return cast(raw[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(path, key, f"invalid value {raw[key]!r} ({exc})") from None

    if "pi" not in raw:
        pi_spec = {"pi11": 1.0, "pi10": 0.0, "pi01": 0.0, "pi00": 1.0}
    elif isinstance(raw["pi"], dict):
        pi_spec = dict(raw["pi"])
    else:
        pi_spec = {"pi": get("pi", float)}
    try:
        pi = MisclassMatrix.from_mapping(pi_spec)
    except ChartError as exc:
        raise ConfigError(path, "pi", str(exc)) from None

    if "p0" in raw and "p0_star" in raw:
        raise ConfigError(path, "p0_star", "give either p0 or p0_star, not both")
    if "p0_star" in raw:
        p0_star = get("p0_star", float)
        p0 = correct_proportion(p0_star, pi)
    else:
        p0 = get("p0", float, required=True)
        p0_star = None
    arl0 = get("arl0", float, 370.0)
    n = raw.get("n")
    if n is None:
        raise ConfigError(path, "n", "missing required key")
    if not isinstance(n, (int, list)):
        raise ConfigError(path, "n", f"must be an integer or list of integers, got {n!r}")
    variants = get("variants", lambda v: [Variant.parse(x).value for x in v], [v.value for v in Variant])
    stream = get("stream", str, "surrogate")
    if stream not in STREAMS:
        raise ConfigError(path, "stream", f"must be one of {STREAMS}")
    lvals = raw.get("L", {})
    if isinstance(lvals, (int, float)):
        lvals = {v: float(lvals) for v in variants}
    try:
        lvals = {Variant.parse(k).value: float(v) for k, v in lvals.items()}
    except (AttributeError, ValueError, ChartError) as exc:
        raise ConfigError(path, "L", str(exc)) from None
    resolved = {
        "p0": p0,
        "p0_star_input": p0_star,
        "lambda": get("lambda", float, required=True),
        "n": n,
        "arl0": arl0,
        "l_bounds": get("l_bounds", lambda v: [float(x) for x in v], list(DEFAULT_L_BOUNDS)),
        "max_run_length": get("max_run_length", int, default_max_run_length(arl0)),
        "replicates": get("replicates", int, DEFAULT_REPLICATES),
        "seed": get("seed", int, DEFAULT_SEED),
        "stream": stream,
        "variants": variants,
        "deltas": get("deltas", lambda v: [float(x) for x in v], []),
        "L": lvals,
        "pi": pi.to_dict(),
    }
    try:
        resolved["_cfg"] = chart_config(resolved)
    except ValidationError as exc:
        raise ConfigError(path, None, str(exc)) from None
    resolved["_pi"] = pi
    return resolved


def chart_config(resolved: dict) -> ChartConfig:
    return ChartConfig(
        p0=resolved["p0"],
        lam=resolved["lambda"],
        n=resolved["n"],
        arl0_target=resolved["arl0"],
        l_bounds=tuple(resolved["l_bounds"]),
        max_run_length=resolved["max_run_length"],
        replicates=resolved["replicates"],
        seed=resolved["seed"],
    )


def public(resolved: dict) -> dict:
    return {k: v for k, v in resolved.items() if not k.startswith("_")}


def digest(resolved: dict) -> str:
    blob = json.dumps(public(resolved), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
