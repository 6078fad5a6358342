import pytest

from fbm_ips.config import load_config, parse_override
from fbm_ips.errors import ConfigError

BASE = """
[experiment]
model = arctan
theta0 = 5
hurst = 0.6
particles = 4
"""


def test_defaults():
    cfg = load_config(text=BASE)
    assert cfg.n_steps == 200 and cfg.grid.dt == pytest.approx(0.005)
    assert cfg.estimators and cfg.scheme == "forward" and cfg.sigma_power == 2
    lin = load_config(text=BASE.replace("arctan", "linear"))
    assert lin.n_steps == 1000


def test_overrides():
    cfg = load_config(text=BASE, overrides=["experiment.mc_reps=3", "ratio.epsilon=0.1"])
    assert cfg.mc_reps == 3 and cfg.epsilon == 0.1
    assert parse_override("a.b = c") == ("a", "b", "c")
    with pytest.raises(ConfigError):
        parse_override("nodot=1")


def test_unknown_keys_listed():
    with pytest.raises(ConfigError, match=r"unknown config keys: experiment\.colour, \[extra\]"):
        load_config(text=BASE + "colour = red\n[extra]\nx = 1\n")


@pytest.mark.parametrize("line,match", [
    ("hurst = 1.2", r"\(0, 1\)"),
    ("theta0 = 1, 2", "needs 1 values"),
    ("particles = 0", "at least one"),
    ("estimators = ratio, bogus", "unknown"),
    ("sigma = -1", "positive"),
    ("dt = 0.003", "divide"),
    ("scheme = midpoint", "forward or trapezoid"),
])
def test_validation_errors(line, match):
    key = line.split("=")[0].strip()
    text = "\n".join(l for l in BASE.splitlines() if not l.startswith(key)) + "\n" + line + "\n"
    with pytest.raises(ConfigError, match=match):
        load_config(text=text)


def test_p2_rejects_fixed_point():
    text = BASE.replace("arctan", "two_param").replace("theta0 = 5", "theta0 = 2, 11")
    with pytest.raises(ConfigError, match="p = 1"):
        load_config(text=text + "estimators = fixed_point\n")
    load_config(text=text + "estimators = ratio, contrast\n")


def test_rough_h_only_for_simulation():
    text = BASE.replace("0.6", "0.3")
    with pytest.raises(ConfigError, match="H >= 1/2"):
        load_config(text=text + "estimators = ratio\n")
    assert load_config(text=text + "estimators =\n").estimators == ()


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/x.cfg")
