import math

import numpy as np
import pytest

from ldgea.algorithm import (
    SlotResult,
    initial_distribution,
    ldgea_loop,
    ldgea_run,
    select_top,
    slot_rng,
    stage1_evaluate,
)
from ldgea.config import RunConfig
from ldgea.descriptor import Descriptor, DescriptorDistribution, describe_vector
from ldgea.hvea import NicheArchive

from .conftest import triplet_problem


def _slot(value_fn):
    """Slot evaluator with a one-entry archive and a single evaluation."""

    def fn(d, t, i, rng):
        v = float(value_fn(d, rng))
        a = NicheArchive(0.5, d.key())
        a.insert(np.array([rng.random()]), v, d.key())
        return SlotResult(d, v, a, 1, 1)

    return fn


def _dist(n_s=3, n_m=2, n_g=4):
    return DescriptorDistribution.uniform(n_s, n_m, n_g)


# -- selection ---------------------------------------------------------------------------------------


def test_select_distinct_values():
    assert select_top(["a", "b", "c", "d"], [3.0, 1.0, 4.0, 2.0], 2) == [1, 3]


def test_select_ties_by_key():
    assert select_top(["c", "a", "d", "b"], [1.0] * 4, 2) == [1, 3]


def test_select_all_is_empirical_marginals():
    keys = ["+|0", "-|1"]
    idx = select_top(keys, [2.0, 1.0], 2)
    assert sorted(idx) == [0, 1]
    new = DescriptorDistribution.uniform(1, 1, 2, floor=0.0, positive_first=False).update(
        [Descriptor.parse(keys[i]) for i in idx], 1.0)
    assert new.sign_p[0] == 0.5
    np.testing.assert_array_equal(new.material_p[0], [0.5, 0.5])


def test_select_too_many_raises():
    with pytest.raises(ValueError):
        select_top(["a"], [1.0], 2)


# -- stage 1 ---------------------------------------------------------------------------------------


def test_stage1_empty():
    assert stage1_evaluate([], 1, _slot(lambda d, r: 0.0), 0) == []


def test_stage1_order_and_errors():
    ds = [Descriptor((1,), (i,)) for i in range(6)]

    def fn(d, t, i, rng):
        if d.materials[0] == 3:
            raise RuntimeError("boom")
        return _slot(lambda d, r: d.materials[0])(d, t, i, rng)

    res = stage1_evaluate(ds, 1, fn, 0, threads=4)
    assert [r.descriptor for r in res] == ds
    assert res[3].best_f == math.inf and "boom" in res[3].error
    assert [r.best_f for r in res if r.error is None] == [0, 1, 2, 4, 5]


def test_duplicate_descriptors_get_different_streams():
    d = Descriptor((1, -1), (0,))
    res = stage1_evaluate([d, d], 1, _slot(lambda d, r: r.random()), 7)
    assert res[0].best_f != res[1].best_f
    assert slot_rng(7, 1, 0).random() != slot_rng(7, 1, 1).random()


def test_stage1_thread_independent():
    ds = [Descriptor((1, 1), (i % 3,)) for i in range(9)]
    fn = _slot(lambda d, r: r.normal())
    a = stage1_evaluate(ds, 2, fn, 11, threads=1)
    b = stage1_evaluate(ds, 2, fn, 11, threads=8)
    assert [r.best_f for r in a] == [r.best_f for r in b]


# -- outer loop ------------------------------------------------------------------------------------


def test_single_iteration_two_slots():
    calls = []

    def fn(d, t, i, rng):
        calls.append((t, i))
        return _slot(lambda d, r: 1.0)(d, t, i, rng)

    res = ldgea_loop(RunConfig(lam=2, mu=1, iterations=1, threads=1), _dist(), fn)
    assert sorted(calls) == [(1, 0), (1, 1)]
    assert res.reason == "iteration-cap" and len(res.generations) == 1


def test_constant_objective_stagnates():
    cfg = RunConfig(lam=6, mu=2, iterations=50, threads=1, kl_threshold=0.0)
    res = ldgea_loop(cfg, _dist(), _slot(lambda d, r: 3.0))
    assert res.reason == "stagnation"
    assert len(res.generations) == cfg.stagnation_window


def test_kl_convergence_stops():
    # every descriptor scores the same, so the selection and the distribution settle
    cfg = RunConfig(lam=20, mu=20, iterations=50, threads=1, stagnation_tol=-math.inf)
    res = ldgea_loop(cfg, _dist(1, 1, 1), _slot(lambda d, r: r.random()))
    assert res.reason == "kl-converged"


def test_ablated_never_stops_on_kl():
    cfg = RunConfig(lam=20, mu=20, iterations=6, threads=1, stagnation_tol=-math.inf, ablated=True)
    res = ldgea_loop(cfg, _dist(1, 1, 1), _slot(lambda d, r: r.random()))
    assert res.reason == "iteration-cap" and all(g.kl == 0.0 for g in res.generations)


def test_generation_records_consistent():
    cfg = RunConfig(lam=10, mu=3, iterations=3, threads=2, seed=5)
    seen = []
    res = ldgea_loop(cfg, _dist(), _slot(lambda d, r: sum(d.materials) + r.random()),
                     lambda rec, results: seen.append(len(results)))
    assert seen == [10] * len(res.generations)
    for g in res.generations:
        assert len(g.descriptors) == 10 and len(g.selected) == 3
        top = sorted(zip(g.values, g.descriptors))[:3]
        assert g.selected == [k for _, k in top]
    assert res.candidates == sum(len(a) for a in res.archive.values())
    assert res.best()[2] == min(a.best for a in res.archive.values())


def test_distribution_learns_on_synthetic_objective():
    target = Descriptor((1, -1, 1, -1), (2, 0, 3))
    dist = DescriptorDistribution.uniform(4, 3, 4)
    cfg = RunConfig(lam=50, mu=5, iterations=10, threads=1, seed=1, stagnation_tol=-math.inf, kl_threshold=0.0)
    res = ldgea_loop(cfg, dist, _slot(lambda d, r: sum(a != b for a, b in zip(d.as_tuple(), target.as_tuple()))))
    final = res.generations[-1].distribution
    assert DescriptorDistribution.from_dict(final).mode() == target


# -- lens runs --------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_runs():
    built = triplet_problem()
    cfg = RunConfig(preset="triplet", catalog_size=20, lam=3, mu=1, iterations=2, budget=150, seed=3)
    return cfg, built, [ldgea_run(RunConfig(**{**cfg.__dict__, "threads": t}), built=built) for t in (1, 8)]


def test_lens_run_ledger_and_keys(small_runs):
    cfg, (template, _), (res, _) = small_runs
    assert res.evaluations <= cfg.lam * cfg.budget * cfg.iterations
    assert sum(g.evaluations for g in res.generations) == res.evaluations
    for key, a in res.archive.items():
        d = Descriptor.parse(key)
        for x in a.points:
            assert describe_vector(x, d.materials, template.n_c).key() == key


def test_lens_run_thread_independent(small_runs):
    _, _, (a, b) = small_runs
    assert [g.values for g in a.generations] == [g.values for g in b.generations]
    assert [(e.descriptor, e.x, e.value) for e in a.entries] == [(e.descriptor, e.x, e.value) for e in b.entries]


def test_initial_distribution_respects_template():
    template, _ = triplet_problem()
    dist = initial_distribution(template, RunConfig())
    assert dist.n_signs == template.n_c and dist.n_glasses == len(template.catalog)
