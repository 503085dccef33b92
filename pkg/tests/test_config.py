from fractions import Fraction

import pytest

from recital.config import Config, ConfigError


def test_defaults_and_typed_accessors():
    config = Config()
    assert config.get_fraction("cook.theta") == Fraction(9, 10)
    assert config.get_fraction("cook.tau") == Fraction(1, 2)
    assert config.get_int("cook.tier.full.min_votes") == 3
    assert config.get_fraction("cook.tier.full.min_agreement") == Fraction(2, 3)
    assert config.get_fraction("link.auto_threshold") == Fraction(17, 20)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        Config({"nope": "1"})
    with pytest.raises(ConfigError):
        Config().get("nope")


def test_digest_deterministic_and_sensitive():
    a, b = Config(), Config()
    assert a.digest() == b.digest()
    b.set("cook.theta", "4/5")
    assert a.digest() != b.digest()


def test_load_file_with_comments_and_overrides(tmp_path):
    path = tmp_path / "recital.conf"
    path.write_text("# comment\ncook.theta = 4/5\n\nstore.path = x.store\n", encoding="utf-8")
    config = Config.load(path, overrides={"api.port": "9000"})
    assert config.get_fraction("cook.theta") == Fraction(4, 5)
    assert config.get("store.path") == "x.store"
    assert config.get_int("api.port") == 9000


def test_decimal_fractions_are_exact():
    config = Config({"cook.theta": "0.9"})
    assert config.get_fraction("cook.theta") == Fraction(9, 10)
