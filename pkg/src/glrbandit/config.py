"""Experiment configuration: profiles, flat key=value files, and fingerprints."""

import dataclasses
import hashlib
from dataclasses import dataclass, fields

from .exceptions import InvalidConfig

ALGORITHMS = ("g-estt", "g-ests", "naive-glm-ucb", "g-estt-plow")
ESTIMATORS = ("stein", "loglik")
LINKS = ("logistic", "linear")
THETA_STYLES = ("diagonal", "random-rotated")
AUTO_FIELDS = ("lambda_perp", "sigma0")


@dataclass(frozen=True)
class ExperimentConfig:
    d1: int = 10
    d2: int = 10
    r: int = 1
    n_arms: int = 480
    T: int = 45000
    T1: int = 1800
    algorithm: str = "g-ests"
    estimator: str = "stein"
    link: str = "logistic"
    noise_sigma: float = 0.01
    delta: float = 0.01
    lambda0: float = 1.0
    lambda_perp: object = "auto"
    C: float = 2.0
    exploration_multiplier: float = 1.0
    n_seeds: int = 20
    seed_base: int = 0
    contextual: bool = False
    output_dir: str = "runs"
    S0: float = 1.0
    theta_style: str = "diagonal"
    sigma0: object = "auto"
    stein_lambda_scale: float = 1.0
    stein_center: bool = True
    loglik_step: float = 0.1
    loglik_lambda_scale: float = 1.0
    s_perp_multiplier: float = 1.0
    gests_replay: bool = False
    oracle_subspace: bool = False

    def __post_init__(self):
        errs = []
        for name in ("d1", "d2", "r", "n_arms", "T", "n_seeds"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be positive")
        if self.T1 < 0:
            errs.append("T1 must be nonnegative")
        if self.algorithm != "naive-glm-ucb" and not 0 < self.T1 < self.T:
            errs.append(f"need 0 < T1 < T, got T1={self.T1}, T={self.T}")
        if self.r > min(self.d1, self.d2):
            errs.append(f"r={self.r} exceeds min(d1, d2)")
        for name, allowed in (("algorithm", ALGORITHMS), ("estimator", ESTIMATORS),
                              ("link", LINKS), ("theta_style", THETA_STYLES)):
            if getattr(self, name) not in allowed:
                errs.append(f"{name}={getattr(self, name)!r} not in {allowed}")
        if not 0 < self.delta < 1:
            errs.append("delta must lie in (0, 1)")
        if self.C <= 1:
            errs.append("C must exceed 1")
        for name in ("lambda0", "exploration_multiplier", "S0", "stein_lambda_scale",
                     "loglik_step", "loglik_lambda_scale"):
            if getattr(self, name) <= 0:
                errs.append(f"{name} must be positive")
        if self.noise_sigma < 0 or self.s_perp_multiplier < 0:
            errs.append("noise_sigma and s_perp_multiplier must be nonnegative")
        for name in AUTO_FIELDS:
            v = getattr(self, name)
            if v != "auto" and not (isinstance(v, (int, float)) and v > 0):
                errs.append(f"{name} must be 'auto' or a positive number")
        if errs:
            raise InvalidConfig("; ".join(errs))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def fingerprint(self):
        """sha256 over sorted ``key=value`` pairs, output location excluded."""
        items = sorted(f"{k}={_format_value(v)}" for k, v in self.to_dict().items() if k != "output_dir")
        return hashlib.sha256("\n".join(items).encode("utf-8")).hexdigest()


PROFILES = {
    "full": ExperimentConfig(),
    "desk": ExperimentConfig(T=9000, T1=600),
    "smoke": ExperimentConfig(d1=4, d2=4, n_arms=40, T=400, T1=100, n_seeds=2),
}


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _field_types():
    return {f.name: type(f.default) for f in fields(ExperimentConfig)}


def coerce_value(key, raw):
    """Convert a string setting to the type of the named field."""
    types = _field_types()
    if key not in types:
        raise InvalidConfig(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in AUTO_FIELDS:
        return "auto" if raw == "auto" else _parse_float(key, raw)
    typ = types[key]
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise InvalidConfig(f"{key}: expected a boolean, got {raw!r}")
    if typ is int:
        try:
            return int(raw)
        except ValueError:
            raise InvalidConfig(f"{key}: expected an integer, got {raw!r}") from None
    if typ is float:
        return _parse_float(key, raw)
    return raw


def _parse_float(key, raw):
    try:
        return float(raw)
    except ValueError:
        raise InvalidConfig(f"{key}: expected a number, got {raw!r}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = coerce_value(key, value)
    return out


def load_config(path=None, profile="desk", overrides=None):
    """Profile defaults, then the file's settings, then explicit overrides."""
    if profile not in PROFILES:
        raise InvalidConfig(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    settings = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            settings.update(parse_config_text(fh.read()))
    for k, v in (overrides or {}).items():
        if v is not None:
            settings[k] = coerce_value(k, v)
    return PROFILES[profile].replace(**settings)


def dump_config(cfg):
    """Inverse of :func:`parse_config_text`."""
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in cfg.to_dict().items())
