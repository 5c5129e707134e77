import json
import math
from xml.etree import ElementTree

import numpy as np
import pytest

from ldgea import cli
from ldgea import records as rec_io
from ldgea.algorithm import ldgea_run
from ldgea.config import RunConfig, load_config
from ldgea.descriptor import Descriptor, describe_vector

from .conftest import triplet_problem

SMALL = ["preset.include=triplet", "catalog.size=20", "run.lam=3", "run.mu=1", "run.iterations=2",
         "run.budget=150", "run.seed=4"]


def _args(*extra):
    out = []
    for s in SMALL:
        out += ["--set", s]
    return out + list(extra)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "r"
    assert cli.main(["run", *_args("--out", str(out))]) == 0
    return out


# -- archive file ----------------------------------------------------------------------------------


def test_run_outputs_present(run_dir):
    for name in (rec_io.ARCHIVE_NAME, rec_io.GENERATIONS_NAME, rec_io.RUN_NAME, rec_io.SUMMARY_NAME):
        assert (run_dir / name).exists()
    summary = json.loads((run_dir / rec_io.SUMMARY_NAME).read_text())
    assert summary["status"] == "ok" and summary["generations"] >= 1


def test_load_reproduces_run_archives(run_dir):
    cfg = load_config(None, SMALL)
    res = ldgea_run(cfg, built=triplet_problem())
    loaded = rec_io.load_archive(run_dir / rec_io.ARCHIVE_NAME)
    rebuilt = rec_io.rebuild_archives(loaded)
    assert set(rebuilt) == {k for k, a in res.archive.items() if len(a)}
    for key, a in res.archive.items():
        if not len(a):
            continue
        assert rebuilt[key].values == a.values  # full precision
        for x, y in zip(rebuilt[key].points, a.points):
            np.testing.assert_array_equal(x, np.asarray(y))
    assert loaded.candidates == res.candidates


def test_records_describe_to_their_key(run_dir):
    template, _ = triplet_problem()
    for r in rec_io.read_jsonl(run_dir / rec_io.ARCHIVE_NAME):
        assert describe_vector(np.array(r["x"]), r["materials"], template.n_c).key() == r["descriptor"]
        assert r["kind"] == "ldgea" and list(r)[-1] == "timestamp"


def test_same_seed_same_archive(run_dir, tmp_path):
    out = tmp_path / "again"
    assert cli.main(["run", *_args("--out", str(out), "--threads", "8")]) == 0
    a = rec_io.strip_timestamps(rec_io.read_jsonl(run_dir / rec_io.ARCHIVE_NAME))
    b = rec_io.strip_timestamps(rec_io.read_jsonl(out / rec_io.ARCHIVE_NAME))
    assert a == b
    assert [rec_io.dumps(r) for r in a] == [rec_io.dumps(r) for r in b]


def test_run_id_ignores_threads():
    cfg = RunConfig().to_dict()
    assert rec_io.run_id(cfg, "ldgea") == rec_io.run_id({**cfg, "threads": 8}, "ldgea")
    assert rec_io.run_id(cfg, "ldgea") != rec_io.run_id({**cfg, "seed": 1}, "ldgea")


def test_malformed_archive_line(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text('{"descriptor": "+|0", "value": 1.0}\nnot json\n')
    with pytest.raises(ValueError):
        rec_io.read_jsonl(p)


def _write(path, kind, rows):
    with rec_io.ArchiveWriter(path, "id", kind, 0) as w:
        for key, v in rows:
            d = Descriptor.parse(key)
            w.write(1, 0, key, [0.01] * len(d.signs), list(d.materials), v)


# -- report ------------------------------------------------------------------------------------------


def test_report_single_candidate(tmp_path):
    p = tmp_path / "one.jsonl"
    _write(p, "ldgea", [("++|1", 0.25)])
    report, _ = cli.build_report([str(p)])
    run = report["runs"][0]
    assert (run["candidates"], run["distinct_descriptors"], run["best_value"]) == (1, 1, 0.25)


def test_report_disjoint_union(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    _write(a, "ldgea", [("++|1", 0.2), ("+-|1", 0.3)])
    _write(b, "baseline", [("++|2", 0.1), ("--|0", 5.0), ("-+|0", 0.25)])
    report, _ = cli.build_report([str(a), str(b)])
    assert report["union_distinct_descriptors"] == 5
    cmp = report["comparison"]
    assert cmp["worst_ldgea_value"] == 0.3 and cmp["baseline_at_least_as_good"] == 2


def test_report_bytes_deterministic(run_dir, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        assert cli.main(["report", str(run_dir), "--out", str(tmp_path / name)]) == 0
        outs.append(((tmp_path / name / "report.json").read_bytes(), (tmp_path / name / "per_iteration.csv").read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][1].decode().splitlines()[0]
    assert header == "run,kind,iteration,n_finite,mean,std"


# -- exit codes -------------------------------------------------------------------------------------


def test_missing_catalog_exit_2(tmp_path):
    out = tmp_path / "never"
    code = cli.main(["run", *_args("--set", f"catalog.path={tmp_path / 'nope.csv'}", "--out", str(out))])
    assert code == 2 and not out.exists()


def test_unknown_key_exit_2(tmp_path):
    out = tmp_path / "never"
    assert cli.main(["run", "--set", "run.lambda=3", "--out", str(out)]) == 2
    assert not out.exists()


def test_render_rank_bounds(run_dir, tmp_path):
    n = rec_io.load_archive(run_dir / rec_io.ARCHIVE_NAME).candidates
    assert cli.main(["render", str(run_dir), "--rank", str(n + 1), "--out", str(tmp_path / "x.svg")]) == 2
    assert cli.main(["render", str(run_dir), "--rank", "0", "--out", str(tmp_path / "x.svg")]) == 2
    assert cli.main(["render", str(run_dir), "--rank", "1", "--out", str(tmp_path / "x.svg")]) == 0
    root = ElementTree.parse(tmp_path / "x.svg").getroot()
    assert root.tag == "{http://www.w3.org/2000/svg}svg"


def test_interrupt_flushes_and_exits_3(tmp_path, monkeypatch):
    real = cli.ldgea_loop

    def interrupted(cfg, dist, slot_fn, on_generation):
        def once(rec, results):
            on_generation(rec, results)
            raise KeyboardInterrupt

        return real(cfg, dist, slot_fn, once)

    monkeypatch.setattr(cli, "ldgea_loop", interrupted)
    out = tmp_path / "int"
    assert cli.main(["run", *_args("--out", str(out))]) == 3
    recs = rec_io.read_jsonl(out / rec_io.ARCHIVE_NAME)
    assert recs and {r["iteration"] for r in recs} == {1}
    assert json.loads((out / rec_io.SUMMARY_NAME).read_text())["status"] == "interrupted"


def test_baseline_command_logs_budget(tmp_path):
    out = tmp_path / "b"
    args = ["baseline", "--set", "preset.include=triplet", "--set", "catalog.size=20", "--set", "run.lam=2", "--set", "run.mu=1",
            "--set", "run.iterations=1", "--set", "run.budget=300", "--out", str(out)]
    assert cli.main(args) == 0
    summary = json.loads((out / rec_io.SUMMARY_NAME).read_text())
    assert summary["budget"] == 600 and summary["evaluations"] == 600
    recs = rec_io.read_jsonl(out / rec_io.ARCHIVE_NAME)
    assert sum(r["evaluations"] for r in recs) == 600
    assert all(r["kind"] == "baseline" for r in recs)


def test_default_baseline_budget_rule():
    assert RunConfig(lam=8, budget=2000, iterations=5).baseline_budget == 80_000


def test_refine_command(run_dir, tmp_path):
    out = tmp_path / "ref.jsonl"
    assert cli.main(["refine", str(run_dir), "--top-k", "2", "--max-iter", "20", "--out", str(out)]) == 0
    rows = rec_io.read_jsonl(out)
    assert len(rows) == 2
    for r in rows:
        assert r["kind"] == "refined"
        assert r["value"] <= r["value_before"] + 1e-12
        assert r["improvement"] >= 1 - 1e-9


def test_refined_breakdown_matches_value(run_dir, tmp_path):
    out = tmp_path / "ref1.jsonl"
    assert cli.main(["refine", str(run_dir), "--top-k", "1", "--max-iter", "10", "--out", str(out)]) == 0
    r = rec_io.read_jsonl(out)[0]
    assert r["breakdown"]["total"] == pytest.approx(r["value"], rel=1e-12)
    assert r["breakdown"]["image_distance"] == pytest.approx(r["image_distance"], rel=1e-12)


def test_non_finite_values_written_as_null(tmp_path):
    p = tmp_path / "inf.jsonl"
    _write(p, "baseline", [("++|1", math.inf), ("+-|1", 0.5)])
    text = p.read_text()
    assert "Infinity" not in text and '"value":null' in text
    loaded = rec_io.load_archive(p)
    assert loaded.candidates == 1 and loaded.values == [0.5]
    assert len(loaded.records) == 2
