from pathlib import Path

import numpy as np
import pytest

from feedbacksim import config as cfgmod
from feedbacksim.feedback import compose_feedback

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.toml"))

MINIMAL = """
hamiltonian = "omega*n_c"

[[space.subsystem]]
label = "c"
kind = "fock"
dim = 5

[params]
omega = 1.5
kappa = 0.25

[[dissipator]]
rate = "2*kappa"
jump = "a_c"

[initial]
kind = "fock"
occupations = { c = 2 }
"""


def test_configs_present():
    assert {p.name for p in CONFIGS} >= {"cavity_decay.toml", "cross_pair.toml",
                                          "squeeze_feedback.toml", "noisy_squeezer.toml"}


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_build(path):
    sc = cfgmod.build(cfgmod.load(str(path)))
    assert abs(np.trace(sc.initial.mat) - 1) < 1e-12
    compose_feedback(sc.base, sc.channels)


def test_minimal_build():
    sc = cfgmod.build(cfgmod.loads(MINIMAL))
    assert sc.space.dim == 5
    assert sc.base.dissipators[0].rate == pytest.approx(0.5)
    assert np.allclose(np.diag(sc.base.hamiltonian.mat).real, 1.5 * np.arange(5))
    assert sc.initial.mat[2, 2] == pytest.approx(1.0)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_dumps_round_trip(path):
    cfg = cfgmod.load(str(path))
    again = cfgmod.loads(cfgmod.dumps(cfg))
    assert cfgmod.to_dict(again) == cfgmod.to_dict(cfg)
    a, b = cfgmod.build(cfg), cfgmod.build(again)
    assert np.array_equal(a.base.hamiltonian.mat, b.base.hamiltonian.mat)
    for da, db in zip(a.base.dissipators, b.base.dissipators, strict=True):
        assert da.rate == db.rate and np.array_equal(da.jump.mat, db.jump.mat)
    assert np.array_equal(a.initial.mat, b.initial.mat)


def test_with_fock_dim():
    cfg = cfgmod.loads(MINIMAL).with_fock_dim(8)
    assert cfgmod.build(cfg).space.dim == 8


@pytest.mark.parametrize("text,line", [
    ('hamiltonian = "n_c +"\n' + MINIMAL.split("\n", 2)[2], 1),
    ("hamiltonian = \n", 1),
    (MINIMAL.replace("kappa = 0.25", "kappa = \"fast\""), None),
    (MINIMAL.replace('jump = "a_c"', 'jump = "a_q"'), None),
    ("bogus = 1\n" + MINIMAL, 1),
    (MINIMAL + "amplitude = 1\n", None),
    (MINIMAL.replace('kind = "fock"\ndim = 5', 'kind = "fock"'), None),
])
def test_errors_are_located(text, line):
    with pytest.raises(cfgmod.ConfigError) as e:
        cfgmod.build(cfgmod.loads(text))
    assert e.value.line is not None and e.value.col is not None
    if line is not None:
        assert e.value.line == line


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.build(cfgmod.loads(MINIMAL.replace('"omega*n_c"', '"a_c"')))


def test_negative_rate_rejected():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.build(cfgmod.loads(MINIMAL.replace('"2*kappa"', '"-kappa"')))


def test_matrix_forms_survive(tmp_path):
    text = MINIMAL.replace('jump = "a_c"', 'jump_matrix = ' + str(
        [[[0.0, 0.0]] * 5 for _ in range(5)]).replace("(", "[").replace(")", "]"))
    cfg = cfgmod.loads(text)
    sc = cfgmod.build(cfg)
    assert np.count_nonzero(sc.base.dissipators[0].jump.mat) == 0
    assert cfgmod.to_dict(cfgmod.loads(cfgmod.dumps(cfg))) == cfgmod.to_dict(cfg)


def test_readme_example_config_builds():
    import re
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = re.search(r"```toml\n(.*?)```", readme, re.S).group(1)
    sc = cfgmod.build(cfgmod.loads(block))
    assert len(sc.channels) == 1 and sc.space.dim == 14
