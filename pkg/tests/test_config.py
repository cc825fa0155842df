import pytest

from odcal.analytical import FdParams
from odcal.config import dump_config, load_config, parse_config, save_config
from odcal.errors import ParseError, ValidationError
from odcal.mesosim import SimConfig


def test_round_trip(tmp_path):
    sim = SimConfig(replications=7, noise_cv=0.12, horizon_s=5400.0, warmup_s=900.0, seed=3)
    fd = FdParams(alpha1=1.5, alpha2=2.5, kappa1=4e-4)
    save_config(tmp_path / "c.ini", sim, fd)
    sim2, fd2 = load_config(tmp_path / "c.ini")
    assert sim2 == sim
    assert fd2 == fd
    assert dump_config(sim2, fd2) == dump_config(sim, fd)


def test_defaults_and_bare_keys():
    sim, fd = parse_config("replications = 3\n")
    assert sim.replications == 3
    assert fd == FdParams()
    assert parse_config("")[0] == SimConfig()


def test_bad_input():
    with pytest.raises(ValidationError):
        parse_config("bogus = 1\n")
    with pytest.raises(ValidationError):
        parse_config("[weird]\nx = 1\n")
    with pytest.raises(ParseError):
        parse_config("replications = many\n")
    with pytest.raises(ValidationError):
        parse_config("replications = 0\n")
    with pytest.raises(ValidationError):
        parse_config("[analytical]\nalpha1 = -2\n")
