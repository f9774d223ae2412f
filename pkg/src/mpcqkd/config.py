"""Run configuration shared by the CLI and the experiment harness.

Values merge as flags > config file > defaults.  The config file is JSON
with optional ``rates``, ``econ``, ``solver``, ``out_dir`` and
``log_level`` keys; any subset of fields may be given.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

from .errors import InvalidInput, ParseError
from .formulation import EconParams
from .keyrate import RateParams
from .solver.milp import SolverConfig

OUT_DIR_ENV = "MPCQKD_OUT_DIR"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def default_out_dir():
    return os.environ.get(OUT_DIR_ENV, "out")


@dataclass(frozen=True)
class GlobalConfig:
    rates: RateParams = field(default_factory=RateParams)
    econ: EconParams = field(default_factory=EconParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: str = field(default_factory=default_out_dir)
    log_level: str = "INFO"

    def __post_init__(self):
        if self.log_level.upper() not in LOG_LEVELS:
            raise InvalidInput(f"log_level must be one of {LOG_LEVELS}")
        object.__setattr__(self, "log_level", self.log_level.upper())

    def to_dict(self):
        return {"rates": self.rates.to_dict(), "econ": self.econ.to_dict(),
                "solver": self.solver.to_dict(), "out_dir": self.out_dir,
                "log_level": self.log_level}

    def model_dict(self):
        """The part of the config that can change results."""
        return {"rates": self.rates.to_dict(), "econ": self.econ.to_dict(),
                "solver": self.solver.to_dict()}

    def config_hash(self, extra=None):
        """Short digest of everything that influences results.

        Output location and log verbosity are excluded so moving the output
        directory does not invalidate earlier artifacts.
        """
        doc = self.model_dict()
        if extra:
            doc["extra"] = extra
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_SECTIONS = {"rates": RateParams, "econ": EconParams, "solver": SolverConfig}


def merge(base, overrides):
    """Apply a (possibly partial) nested dict on top of ``base``."""
    if not isinstance(overrides, dict):
        raise ParseError("config must be a JSON object")
    unknown = set(overrides) - set(_SECTIONS) - {"out_dir", "log_level"}
    if unknown:
        raise ParseError(f"unknown config keys {sorted(unknown)}", f"$.{sorted(unknown)[0]}")
    changes = {}
    for key, cls in _SECTIONS.items():
        sub = overrides.get(key)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ParseError("expected an object", f"$.{key}")
        current = getattr(base, key).to_dict()
        bad = set(sub) - set(current)
        if bad:
            raise ParseError(f"unknown field {sorted(bad)[0]!r}", f"$.{key}.{sorted(bad)[0]}")
        current.update(sub)
        try:
            changes[key] = cls.from_dict(current) if hasattr(cls, "from_dict") else cls(**current)
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), f"$.{key}") from exc
    for key in ("out_dir", "log_level"):
        if overrides.get(key) is not None:
            changes[key] = str(overrides[key])
    return replace(base, **changes)


def load_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInput(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}") from exc


def resolve(config_path=None, flag_overrides=None):
    """Defaults, then the config file, then command-line overrides."""
    cfg = GlobalConfig()
    if config_path:
        cfg = merge(cfg, load_file(config_path))
    if flag_overrides:
        cfg = merge(cfg, flag_overrides)
    return cfg
