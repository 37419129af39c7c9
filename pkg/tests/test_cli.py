import csv
import json
import math

import pytest

from bisectlab import thresholds
from bisectlab.cli import main
from bisectlab.graph_model import Graph, Labelling, read_graph, read_labels, write_graph, write_labels


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def instance(tmp_path, capsys):
    g, lab = tmp_path / "g.txt", tmp_path / "l.txt"
    code, _, _ = run(capsys, "gen", "--n", "60", "--p", "0.4", "--q", "0.03", "--seed", "5",
                     "--out-graph", str(g), "--out-labels", str(lab))
    assert code == 0
    return g, lab


def test_gen_writes_consistent_files(instance):
    g, lab = instance
    graph, labels = read_graph(g), read_labels(lab)
    assert graph.num_nodes == 120 and len(labels) == 120 and labels.balanced


def test_recover_json_trace(instance, capsys):
    g, lab = instance
    code, out, _ = run(capsys, "recover", "--graph", str(g), "--labels", str(lab), "--seed", "2", "--json")
    assert code == 0
    d = json.loads(out)
    assert d["stage"] == "final" and d["stage_errors"][2] == 0
    assert len(d["labelling"]) == 120 and set(d["labelling"]) == {-1, 1}


def test_recover_plain_output_per_stage(instance, capsys):
    g, _ = instance
    code, out, _ = run(capsys, "recover", "--graph", str(g), "--stage", "spectral", "--m", "4")
    assert code == 0
    lines = out.split()
    assert len(lines) == 120 and set(lines) <= {"+1", "-1"}
    assert lines.count("+1") == 60


def test_threshold_forms_agree(capsys):
    n, a, b = 1000, 5.0, 1.0
    _, out_ab, _ = run(capsys, "threshold", "--n", str(n), "--a", str(a), "--b", str(b))
    scale = math.log(n) / n
    _, out_pq, _ = run(capsys, "threshold", "--n", str(n), "--p", repr(a * scale), "--q", repr(b * scale))
    assert json.loads(out_ab) == json.loads(out_pq)
    d = json.loads(out_ab)
    assert set(d) == set(thresholds.report(n, a * scale, b * scale).to_dict())
    assert "hypothesis_unmet" in d and "regime" in d


def test_threshold_rejects_mixed_forms(capsys):
    with pytest.raises(SystemExit):
        main(["threshold", "--n", "10", "--p", "0.1", "--a", "1", "--b", "1"])


def test_oracle_kinds(tmp_path, capsys):
    g, lab = tmp_path / "g.txt", tmp_path / "l.txt"
    write_graph(Graph.from_edges(4, [0, 2], [1, 3]), g)
    write_labels(Labelling([1, 1, -1, -1]), lab)
    common = ["--graph", str(g), "--p", "0.5", "--q", "0.25"]

    _, out, _ = run(capsys, "oracle", "likelihood", "--labels", str(lab), *common)
    d = json.loads(out)
    assert d["counts"] == [2, 4, 2, 0]
    assert d["log_likelihood"] == pytest.approx(math.log(0.25 * 0.75**4))

    _, out, _ = run(capsys, "oracle", "map", *common)
    assert json.loads(out)["plus_sets"] == [[0, 1]]

    _, out, _ = run(capsys, "oracle", "minbisect", *common)
    d = json.loads(out)
    assert d["cut_size"] == 0 and d["num_optima"] == 1

    _, out, _ = run(capsys, "oracle", "swapcheck", "--labels", str(lab), *common)
    assert json.loads(out)["pair_exists"] is False


def test_oracle_needs_labels(tmp_path):
    g = tmp_path / "g.txt"
    write_graph(Graph.empty(4), g)
    with pytest.raises(SystemExit):
        main(["oracle", "likelihood", "--graph", str(g), "--p", "0.5", "--q", "0.2"])


def test_likelihood_infinity_is_serialised(tmp_path, capsys):
    g, lab = tmp_path / "g.txt", tmp_path / "l.txt"
    write_graph(Graph.from_edges(4, [0], [1]), g)
    write_labels(Labelling([1, -1, 1, -1]), lab)
    _, out, _ = run(capsys, "oracle", "likelihood", "--graph", str(g), "--labels", str(lab), "--p", "1", "--q", "0")
    assert json.loads(out)["log_likelihood"] == "-inf"


def test_sweep_with_seed_override(tmp_path, capsys, monkeypatch):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "grid": [{"n": 20, "p": 0.6, "q": 0.05}, {"n": 20, "a": 2.0, "b": 1.0}],
        "trials": 2,
        "master_seed": 1,
        "measurements": ["exact_recovery", "overlap", "minority_stats", "timing"],
    }))
    seeds = []
    for env in ("11", "11", "12"):
        monkeypatch.setenv("BISECTLAB_SEED", env)
        out = tmp_path / f"rows{len(seeds)}.csv"
        code, _, _ = run(capsys, "sweep", "--spec", str(spec), "--out", str(out), "--workers", "1")
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [(r["point_id"], r["trial"]) for r in rows] == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]
        seeds.append([r["seed"] for r in rows])
        assert out.with_suffix(".summary.csv").exists()
    assert seeds[0] == seeds[1] != seeds[2]


def test_missing_file_reports_error(tmp_path, capsys):
    code, _, err = run(capsys, "recover", "--graph", str(tmp_path / "nope.txt"))
    assert code == 1 and "recover" in err


def test_calibrate_outputs_table(capsys):
    code, out, _ = run(capsys, "calibrate")
    assert code == 0
    d = json.loads(out)
    assert d["constant"] >= d["max_ratio"] and len(d["rows"]) > 0
    assert {"m", "ell", "ratio", "ratio_pos", "hypothesis_met"} <= set(d["rows"][0])


def test_recover_derives_m_from_epsilon(instance, capsys):
    from bisectlab.refine import guaranteed_m

    g, _ = instance
    code, out, _ = run(capsys, "recover", "--graph", str(g), "--paper-m", "--epsilon", "100", "--json")
    assert code == 0 and json.loads(out)["m"] == guaranteed_m(100.0)
