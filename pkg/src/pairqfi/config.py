"""Flat ``key=value`` run configuration with command-line overrides."""

from .errors import ConfigError


def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _vec3(text):
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated numbers, got {text!r}")
    return tuple(parts)


def _floats(text):
    vals = [float(p) for p in str(text).split(",") if p.strip()]
    if not vals:
        raise ValueError("empty list")
    return tuple(vals)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return text

    return parse


KEY_TYPES = {
    "pupil": _choice("clear", "gaussian"),
    "pupil_sigma": _float,
    "nr": _int,
    "ntheta": _int,
    "out": str,
    "plot": _bool,
    "l": _vec3,
    "s": _vec3,
    "axis": _choice("x", "y", "z"),
    "start": _float,
    "stop": _float,
    "step": _float,
    "values": _floats,
    "workers": _int,
    "samples": _int,
    "seed": _int,
    "channels": _int,
    "photons": _int,
    "sigma_s": _vec3,
    "draws": _int,
    "frames": _int,
    "multistart": _int,
    "jitter": _float,
    "xatol": _float,
    "estimator_nr": _int,
    "estimator_ntheta": _int,
    "scale": _choice("desk", "full"),
    "outdir": str,
    "simulate": _bool,
}

COMMON = {"pupil", "pupil_sigma", "nr", "ntheta", "out"}
SWEEP = {"l", "s", "axis", "start", "stop", "step", "values"}
SIMULATION = {"channels", "photons", "sigma_s", "draws", "frames", "seed", "multistart", "jitter",
              "xatol", "estimator_nr", "estimator_ntheta", "workers"}

COMMAND_KEYS = {
    "qcrb-ll": COMMON,
    "qcrb-ss": COMMON | SWEEP | {"workers", "plot"},
    "verify": COMMON | {"samples", "seed", "workers"},
    "channels": COMMON | {"l", "s", "channels"},
    "fi": COMMON | {"l", "s", "channels", "photons"},
    "simulate": COMMON | SIMULATION | {"l", "axis", "values", "plot", "scale"},
    "figures": (COMMON - {"out"}) | SIMULATION | {"outdir", "simulate"},
}

DEFAULTS = {
    "pupil": "clear",
    "pupil_sigma": 0.5,
    "nr": 80,
    "ntheta": 160,
    "out": "-",
    "plot": False,
    "l": (0.0, 0.0, 0.0),
    "s": (0.0, 0.0, 0.0),
    "workers": 1,
    "samples": 100,
    "seed": 0,
    "channels": 4,
    "photons": 100_000,
    "sigma_s": (0.005, 0.005, 0.01),
    "draws": 10,
    "frames": 200,
    "multistart": 4,
    "jitter": 0.05,
    "xatol": 1e-6,
    "estimator_nr": 32,
    "estimator_ntheta": 64,
    "scale": "desk",
    "outdir": "figures",
    "simulate": False,
}


def normalize_key(key):
    return key.strip().lstrip("-").replace("-", "_").lower()


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns ``{key: (raw, where)}``."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value.strip(), f"{source}:{lineno}")
    return out


def resolve(command, file_items=None, overrides=None):
    """Merge defaults, config-file entries and overrides into typed values.

    Keys not accepted by ``command`` are rejected with their location.
    """
    allowed = COMMAND_KEYS[command]
    raw = {}
    for k, (v, where) in (file_items or {}).items():
        raw[k] = (v, where)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[normalize_key(k)] = (v, f"--{k.replace('_', '-')}")
    resolved = {k: v for k, v in DEFAULTS.items() if k in allowed}
    for key, (value, where) in raw.items():
        if key not in KEY_TYPES:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key not in allowed:
            raise ConfigError(f"{where}: key {key!r} is not used by '{command}'")
        try:
            resolved[key] = KEY_TYPES[key](value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    return resolved
