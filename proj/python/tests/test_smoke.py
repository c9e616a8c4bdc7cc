import numpy as np
import pytest

import nkca

CONFIG = """
seed = 5

[kernel]
kind = "continuous"
w = 0.5

[schedule]
steps = 10
beta_start = 1.0
beta_end = 0.05

[variants]
beta = 0.2
steps = 5
n = 4

[inpaint]
tile = 4

[denoiser]
type = "mlp"
hidden = [16]
embedding_dim = 8

[train]
learning_rate = 0.001
batch_size = 8
steps = 5
log_every = 0

[dataset]
generator = "stripes"
count = 32
side = 8
seed = 1
"""


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    digest = nkca.train(CONFIG, path)
    m = nkca.Model(path)
    assert m.digest == digest
    return m


def test_kernel_coefficients():
    c = nkca.equilibrium_coeffs(0.2, 0.8, 0.5)
    assert c.a == pytest.approx(0.4)
    assert c.b == pytest.approx(0.15)
    assert nkca.equilibrium_b(0.5, 0.95) == pytest.approx(0.047619047619047616)
    with pytest.raises(nkca.ScheduleError):
        nkca.annealed_coeffs(0.1, 0.01, 0.9, 0.99, 0.5)


def test_linear_gaussian_marginal():
    mean, var = nkca.marginal_of_linear_gaussian(1.0, 0.5, 2.0, -0.5, 0.1)
    assert mean == pytest.approx(1.5)
    assert var == pytest.approx(2.1)


def test_validation_props():
    checks = nkca.validate("props", 20251015)
    assert checks
    assert all(c["pass"] for c in checks)
    assert "props" in nkca.validation_suites()


def test_training_is_deterministic(tmp_path, model):
    assert nkca.train(CONFIG, tmp_path / "again.ckpt") == model.digest
    assert nkca.train(CONFIG, tmp_path / "other.ckpt", seed=6) != model.digest


def test_bad_config_raises():
    with pytest.raises(nkca.ConfigError):
        nkca.train("[kernel]\nkind = \"continuous\"\nbogus = 1\n", "unused.ckpt")


def test_sample_shapes_and_seeds(model):
    assert model.kind == "continuous"
    assert list(model.example_shape) == [8, 8, 1]
    a = model.sample(3, seed=9)
    assert a.shape == (3, 8, 8, 1)
    assert np.array_equal(a, model.sample(3, seed=9))
    assert np.array_equal(a[0], model.sample(1, seed=9)[0])
    with pytest.raises(nkca.ScheduleError):
        model.sample(1, seed=9, steps=2, beta_end=0.1)


def test_variants_and_inpaint(model):
    z0 = model.sample(1, seed=2)[0]
    v = model.variants(z0, seed=4)
    assert v.shape == (4, 8, 8, 1)
    mask = np.zeros((8, 8, 1), dtype=np.uint8)
    mask[2:6, 2:6] = 1
    out = model.inpaint(z0, mask, seed=1)
    assert out.shape == (8, 8, 1)
    assert np.array_equal(out[mask == 0], z0[mask == 0])
    with pytest.raises(nkca.ShapeError):
        model.inpaint(z0, np.zeros(5, dtype=np.uint8), seed=1)
