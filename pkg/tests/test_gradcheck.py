import time

import numpy as np
import pytest

from wldreg.gradcheck import COMPONENTS, gradcheck, numeric_grad, relative_error


def test_numeric_grad_of_quadratic():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    assert np.allclose(numeric_grad(lambda a: float(np.sum(a**2)), x), 2 * x, atol=1e-8)


def test_relative_error():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.1, 2.0]), np.array([1.0, 2.0])) == pytest.approx(0.05)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


def test_default_build_passes_quickly():
    start = time.perf_counter()
    report = gradcheck()
    assert time.perf_counter() - start < 30
    assert report.passed, report.format()
    assert [r.name for r in report.results] == list(COMPONENTS)


def test_none_variant_has_zero_error():
    report = gradcheck(components=["wld_none", "network_none"])
    assert [r.max_error for r in report.results] == [0.0, pytest.approx(0.0, abs=1e-8)]
    assert report.passed


@pytest.mark.parametrize("component", ["similarity", "logdet", "decov", "wld_direct",
                                       "network_det"])
def test_perturbed_gradient_is_caught(component):
    report = gradcheck(components=[component], perturb={component: lambda g: g * 1.01 + 1e-3})
    assert not report.passed
    assert "FAIL" in report.format()


def test_selection_by_suffix():
    names = [r.name for r in gradcheck(components=["det"]).results]
    assert names == ["det", "wld_det", "network_det"]


def test_unknown_component():
    with pytest.raises(ValueError):
        gradcheck(components=["nonsense"])


def test_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        gradcheck(tolerance=0.0)
