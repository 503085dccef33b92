"""Pipeline configuration.

Plain ``key = value`` text files; every run records the digest of the active
configuration in its provenance activity, so results stay attributable to the
exact thresholds that produced them. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import os
from fractions import Fraction
from pathlib import Path

ENV_VAR = "RECITAL_CONFIG"

DEFAULTS: dict[str, str] = {
    "store.path": "recital.store",
    "reports.dir": "reports",
    "cook.theta": "9/10",
    "cook.tau": "1/2",
    "cook.tier.full.min_votes": "3",
    "cook.tier.full.min_agreement": "2/3",
    "cook.tier.almost.min_votes": "2",
    "cook.tier.almost.min_agreement": "1/2",
    "link.auto_threshold": "17/20",
    "link.review_threshold": "7/10",
    "link.blocking_min_size": "10000",
    "registry.path": "",
    "abbrev.path": "",
    "api.port": "8747",
    "api.curator_token": "",
    "surrogate.marker.open": "⟨",
    "surrogate.marker.close": "⟩",
}


class ConfigError(Exception):
    pass


def parse_fraction(text: str) -> Fraction:
    """Exact rational from "2/3", "0.9" or "3" forms."""
    return Fraction(text.strip())


class Config:
    def __init__(self, values: dict[str, str] | None = None):
        self.values = dict(DEFAULTS)
        for key, val in (values or {}).items():
            self.set(key, val)

    def set(self, key: str, value: str) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key: {key!r}")
        self.values[key] = value

    def get(self, key: str) -> str:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key: {key!r}")
        return self.values[key]

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_fraction(self, key: str) -> Fraction:
        return parse_fraction(self.get(key))

    def digest(self) -> str:
        canon = "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def dump(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, str] | None = None) -> "Config":
        """Load from an explicit path, $RECITAL_CONFIG, or defaults."""
        values: dict[str, str] = {}
        if path is None:
            env = os.environ.get(ENV_VAR)
            path = env if env else None
        if path is not None:
            for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
        cfg = cls(values)
        for key, val in (overrides or {}).items():
            cfg.set(key, val)
        return cfg
