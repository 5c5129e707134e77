import numpy as np
import pytest

from .conftest import perturbed


def _fd5(f, x, j, h):
    e = np.zeros_like(x)
    e[j] = h
    return (8 * (f(x + e) - f(x - e)) - (f(x + 2 * e) - f(x - 2 * e))) / (12 * h)


def test_autodiff_matches_finite_differences_double_gauss(double_gauss):
    """20 random feasible designs; every continuous component within 1e-5 relative."""
    template, problem = double_gauss
    rng = np.random.default_rng(0)
    mats = template.materials()
    worst = 0.0
    for _ in range(20):
        x = perturbed(template, rng, 0.02)
        _, g = problem.value_and_grad(x, mats)
        fd = np.array([
            _fd5(lambda z: problem.scalar(z, mats), x, j, 1e-4 * max(abs(x[j]), 1e-3)) for j in range(x.size)
        ])
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)
        worst = max(worst, rel.max())
    assert worst < 1e-5


def test_explicit_image_gradient(triplet):
    template, problem = triplet
    x = template.continuous()
    mats = template.materials()
    img = problem.solved_image_distance(x, mats) + 0.3
    free = list(range(template.n_c))
    v = np.r_[x[:template.n_c], img]
    _, g = problem.value_and_grad(v, mats, free=free, base_x=x, explicit_image=True)
    f = lambda z: problem.scalar(z, mats, free=free, base_x=x, explicit_image=True)  # noqa: E731
    fd = np.array([_fd5(f, v, j, 1e-4 * max(abs(v[j]), 1e-3)) for j in range(v.size)])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-10)


def test_value_agrees_with_compiled(triplet):
    template, problem = triplet
    x = template.continuous()
    v, _ = problem.value_and_grad(x, template.materials())
    assert v == pytest.approx(problem(x, template.materials()), rel=1e-12)
