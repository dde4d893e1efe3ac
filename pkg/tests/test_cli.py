import csv
import json
import subprocess
import sys

import pytest

from lineplan.cli import main


@pytest.fixture
def base(data_dir):
    return ["--network", str(data_dir / "network.csv"), "--od", str(data_dir / "od.csv"),
            "--pool", str(data_dir / "pool.csv")]


def read_concept(path):
    with open(path, newline="") as fh:
        return {r["line_id"]: int(r["frequency"]) for r in csv.DictReader(fh)}


class TestSolve:
    def test_cost_fixture(self, base, tmp_path):
        assert main(["solve", "--formulation", "cost", *base, "--out", str(tmp_path)]) == 0
        assert read_concept(tmp_path / "concept.csv") == {"l1": 0, "l2": 0, "l3": 2}
        assert "cost: 3.6" in (tmp_path / "summary.txt").read_text()
        sol = json.loads((tmp_path / "solution.json").read_text())
        assert sol["status"] == "Optimal" and sol["objective"] == 3.6 and sol["node_count"] >= 1
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert set(manifest["inputs"]) == {"network", "od", "pool"}
        assert len(manifest["inputs"]["pool"]["sha256"]) == 64

    def test_infeasible(self, data_dir, tmp_path):
        args = ["solve", "--network", str(data_dir / "network.csv"),
                "--od", str(data_dir / "od_infeasible.csv"), "--pool", str(data_dir / "pool.csv"),
                "--out", str(tmp_path)]
        assert main(args) == 2
        assert not (tmp_path / "concept.csv").exists()

    def test_missing_file(self, data_dir, tmp_path, capsys):
        args = ["solve", "--network", str(tmp_path / "nope.csv"), "--od", str(data_dir / "od.csv"),
                "--pool", str(data_dir / "pool.csv"), "--out", str(tmp_path)]
        assert main(args) == 1
        assert "not found" in capsys.readouterr().err

    def test_bad_arguments(self):
        assert main(["solve", "--formulation", "nonsense"]) == 1

    @pytest.mark.parametrize("extra", [
        ["--formulation", "flow-line"],
        ["--formulation", "flow-link", "--objective", "weighted:0.001"],
        ["--formulation", "direct", "--budget", "1.8"],
        ["--formulation", "cost", "--system-frequency", "2"],
        ["--formulation", "cost", "--frequencies", "1,2,4"],
    ])
    def test_other_formulations(self, base, tmp_path, extra):
        assert main(["solve", *base, *extra, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "concept.csv").exists()

    def test_robust_box(self, base, data_dir, tmp_path):
        args = ["solve", *base, "--formulation", "robust-box", "--uncertainty",
                str(data_dir / "box.json"), "--out", str(tmp_path)]
        assert main(args) == 0
        assert read_concept(tmp_path / "concept.csv") == {"l1": 0, "l2": 0, "l3": 2}

    def test_multiperiod(self, base, data_dir, tmp_path):
        season = tmp_path / "season2.csv"
        season.write_text("origin,destination,passengers\ns1,s2,300\n")
        args = ["solve", *base, "--formulation", "multiperiod", "--seasons", str(data_dir / "od.csv"),
                str(season), "--bound", "0", "--out", str(tmp_path)]
        assert main(args) == 0
        assert read_concept(tmp_path / "concept_season1.csv") == read_concept(tmp_path / "concept_season2.csv")

    def test_node_limit(self, tmp_path):
        # odd cycle: the LP optimum is f = 1/2 on every line, so branching is needed
        (tmp_path / "n.csv").write_text("link_id,from,to,length_time,lower_freq,upper_freq\n"
                                        "x,a,b,1,1,3\ny,b,c,1,1,3\nz,c,a,1,1,3\n")
        (tmp_path / "o.csv").write_text("origin,destination,passengers\n")
        (tmp_path / "p.csv").write_text("line_id,link_ids,cost_per_trip,fixed_cost\n"
                                        "p,x;y,1,0\nq,y;z,1,0\nr,z;x,1,0\n")
        args = ["solve", "--network", str(tmp_path / "n.csv"), "--od", str(tmp_path / "o.csv"),
                "--pool", str(tmp_path / "p.csv")]
        assert main(args + ["--node-limit", "1", "--out", str(tmp_path / "a")]) == 3
        sol = json.loads((tmp_path / "a" / "solution.json").read_text())
        assert sol["status"] == "NodeLimit" and sol["bound"] == 2
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert json.loads((tmp_path / "b" / "solution.json").read_text())["objective"] == 2

    def test_config_file(self, base, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"formulation": "cost", "system_frequency": 2}))
        assert main(["solve", *base, "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "manifest.json").read_text())["options"]["system_frequency"] == 2
        cfg.write_text(json.dumps({"colour": "red"}))
        assert main(["solve", *base, "--config", str(cfg), "--out", str(tmp_path)]) == 1


class TestEvaluate:
    def test_trip_level_deficit(self, base, data_dir, tmp_path):
        args = ["evaluate", *base, "--concept", str(data_dir / "concept.csv"), "--level", "trip",
                "--out", str(tmp_path)]
        assert main(args) == 0
        report = json.loads((tmp_path / "evaluation.json").read_text())
        cap = report["levels"]["trip"]["capacity"]
        assert not cap["feasible"]
        assert cap["violations"] == [{"arc": ["a2", "l2", 2], "load": 60.0, "capacity": 30,
                                      "deficit": 30.0}]
        assert main(args + ["--strict"]) == 4

    def test_link_level_feasible(self, base, data_dir, tmp_path):
        args = ["evaluate", *base, "--concept", str(data_dir / "concept.csv"), "--level", "link",
                "--strict", "--out", str(tmp_path)]
        assert main(args) == 0
        report = json.loads((tmp_path / "evaluation.json").read_text())
        assert report["levels"]["link"]["capacity"]["feasible"]

    def test_sub_modes(self, base, data_dir, tmp_path):
        args = ["evaluate", *base, "--concept", str(data_dir / "concept.csv"),
                "--dissimilar", str(data_dir / "concept.csv"), "--scan", "link-failure",
                "--uncertainty", str(data_dir / "box.json"), "--out", str(tmp_path)]
        assert main(args) == 0
        report = json.loads((tmp_path / "evaluation.json").read_text())
        assert report["dissimilarity"] == {"freq_norm": 0.0, "line_set_delta": 0.0,
                                           "transport_distance": 0.0}
        assert report["scan"]["worst_link"] == "a1"
        assert report["uncertainty"]["worst_case"]["worst"]["scenario"][0]["passengers"] == 140.0


class TestOtherCommands:
    def test_generate_pool(self, data_dir, tmp_path):
        args = ["generate-pool", "--network", str(data_dir / "network.csv"),
                "--od", str(data_dir / "od.csv"), "--out", str(tmp_path)]
        assert main(args) == 0
        rows = (tmp_path / "pool.csv").read_text().splitlines()
        assert rows[1].startswith("s1-s3-1,a1;a2,20.0")

    def test_scan(self, base, data_dir, tmp_path):
        args = ["scan", *base, "--concept", str(data_dir / "concept.csv"), "--policy", "bridge:2",
                "--out", str(tmp_path)]
        assert main(args) == 0
        scan = json.loads((tmp_path / "scan.json").read_text())
        assert scan["policy"] == "bridge(2)"
        assert [r["added_minutes"] for r in scan["links"]] == [1200.0, 1200.0]

    def test_module_entry_point(self, base, tmp_path):
        out = subprocess.run([sys.executable, "-m", "lineplan.cli", "solve", *base, "--out", str(tmp_path)],
                             capture_output=True, text=True)
        assert out.returncode == 0, out.stderr
