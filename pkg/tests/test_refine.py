import numpy as np
import pytest

from ldgea.descriptor import describe_vector
from ldgea.refine import bfgs_minimize, bfgs_refine

from .conftest import triplet_problem

# SPD matrix and minimiser of the constructed quadratic 0.5 (x - m)' A (x - m) + 2
_R = np.random.default_rng(42).normal(size=(5, 5))
A = _R @ _R.T + 0.5 * np.eye(5)
M = np.array([0.3, -1.2, 2.0, 0.7, -0.4])


def quad(x):
    d = x - M
    return 0.5 * d @ A @ d + 2.0


def quad_grad(x):
    return A @ (x - M)


def test_quadratic_exact_minimum():
    res = bfgs_minimize(quad, quad_grad, np.zeros(5), gtol=1e-10)
    assert res.iterations <= 50
    assert np.max(np.abs(res.x - M)) < 1e-8
    assert res.reason == "gradient"


def test_already_optimal_unchanged():
    res = bfgs_minimize(quad, quad_grad, M.copy())
    assert res.iterations == 0
    np.testing.assert_array_equal(res.x, M)


def test_monotone_trace_and_bounds():
    lo, hi = np.full(5, -0.5), np.full(5, 0.5)
    res = bfgs_minimize(quad, quad_grad, np.zeros(5), lo, hi)
    assert np.all(np.diff(res.f_trace) <= 0)
    assert np.all(res.x >= lo) and np.all(res.x <= hi)
    # at a box optimum the projected gradient vanishes even though the raw one does not
    assert res.grad_norm < 1e-6 and np.linalg.norm(quad_grad(res.x)) > 1e-3


def test_non_finite_region_is_survived():
    def f(x):
        return quad(x) if x[0] < 1.0 else np.inf

    res = bfgs_minimize(f, quad_grad, np.full(5, 0.9))
    assert np.isfinite(res.f) and res.f <= quad(np.full(5, 0.9))


def test_non_finite_start_rejected():
    with pytest.raises(ValueError):
        bfgs_minimize(lambda x: np.nan, quad_grad, np.zeros(5))


@pytest.fixture(scope="module")
def refined():
    template, problem = triplet_problem()
    rng = np.random.default_rng(0)
    x0 = template.continuous()
    lo, hi = template.continuous_bounds()
    out = []
    while len(out) < 3:
        x = np.clip(x0 * (1 + 0.05 * rng.uniform(-1, 1, x0.size)), lo, hi)
        if np.isfinite(problem(x, template.materials())):
            out.append((x, bfgs_refine(problem, x, template.materials(), max_iter=200)))
    return template, problem, out


def test_refine_improves_and_keeps_descriptor(refined):
    template, problem, out = refined
    mats = template.materials()
    for x, rep in out:
        assert rep.f_after <= rep.f_before + 1e-12
        assert rep.improvement >= 1 - 1e-9
        assert np.all(np.diff(rep.f_trace) <= 0)
        assert describe_vector(rep.x_after, mats, template.n_c).key() == rep.descriptor
        assert describe_vector(x, mats, template.n_c).key() == rep.descriptor
        # thicknesses fixed
        np.testing.assert_array_equal(rep.x_after[template.n_c:], x[template.n_c:])
        f = problem.evaluate(rep.x_after[None, :], mats, image_distance=rep.image_after)[0]
        assert f == pytest.approx(rep.f_after, rel=1e-12)


def test_refine_stop_reason_consistent(refined):
    _, _, out = refined
    for _, rep in out:
        if rep.reason == "gradient":
            assert rep.grad_norm < 1e-6
        assert rep.iterations <= 200


def test_refine_report_dict(refined):
    _, _, out = refined
    d = out[0][1].to_dict()
    assert d["improvement"] == out[0][1].improvement and len(d["x_after"]) == len(out[0][0])
