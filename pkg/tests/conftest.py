import numpy as np
import pytest

from fragscope import FeatureMatrix


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    yield tmp_path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def correlated_columns(rng, n, rho):
    a = rng.standard_normal(n)
    b = rho * a + np.sqrt(1 - rho**2) * rng.standard_normal(n)
    return a, b


@pytest.fixture
def correlated():
    return correlated_columns


@pytest.fixture
def collinear_task():
    """Binary task on standardized features where x0 and x1 are strongly
    correlated and x2, x3 are independent.
    """

    def make(n=2000, rho=0.95, seed=0, extra=2):
        rng = np.random.default_rng(seed)
        a, b = correlated_columns(rng, n, rho)
        others = rng.standard_normal((n, extra))
        values = np.column_stack([a, b, others])
        logits = values @ np.r_[1.0, 1.0, np.linspace(1.5, 0.5, extra)]
        y = (rng.uniform(size=n) < 1 / (1 + np.exp(-logits))).astype(int)
        return FeatureMatrix.from_array(values), y

    return make


@pytest.fixture
def csv_file(workdir):
    def write(text, name="data.csv"):
        path = workdir / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


def central_difference(f, theta, h=1e-6):
    grad = np.zeros_like(theta)
    for k in range(len(theta)):
        step = np.zeros_like(theta)
        step[k] = h
        grad[k] = (f(theta + step) - f(theta - step)) / (2 * h)
    return grad


@pytest.fixture
def finite_difference():
    return central_difference
