import json

import pytest

from blamebench.cli import main


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--generator", "seneca_rc", "--n", "120", "--noise", "0.3",
                 "--out", str(d / "data.csv")]) == 0
    assert main(["train", "--model", "logistic", "--data", str(d / "data.csv"),
                 "--out", str(d / "model.json")]) == 0
    return d


def lines(path):
    return path.read_text().splitlines()


class TestPipeline:
    def test_explain_and_score(self, files):
        d = files
        common = ["--data", str(d / "data.csv"), "--model", str(d / "model.json"),
                  "--instances", "10"]
        assert main(["explain", *common, "--explainer", "gradient_input",
                     "--out", str(d / "att.csv")]) == 0
        assert lines(d / "att.csv")[0] == "instance,explainer,base_value,phi_x0,phi_x1"
        assert main(["groundtruth", *common, "--method", "mias",
                     "--out", str(d / "gt.csv")]) == 0
        assert lines(d / "gt.csv")[0] == "instance,lambda0,lambda_x0,lambda_x1,provenance"
        assert main(["score", "--attributions", str(d / "att.csv"), "--gt", str(d / "gt.csv"),
                     "--metrics", "spearman,cosine", "--out", str(d / "score.csv")]) == 0
        assert len(lines(d / "score.csv")) == 1 + 2 * (10 + 2)

    def test_seneca_groundtruth(self, files):
        d = files
        assert main(["groundtruth", "--data", str(d / "data.csv"), "--model",
                     str(d / "model.json"), "--method", "seneca", "--instances", "3",
                     "--normalize", "--out", str(d / "sen.csv")]) == 0
        assert lines(d / "sen.csv")[1] == "0,,1.0,-0.5,seneca_rc"

    def test_robustness(self, files):
        d = files
        assert main(["robustness", "--data", str(d / "data.csv"), "--model",
                     str(d / "model.json"), "--explainer", "occlusion", "--measure", "deletion",
                     "--instances", "5", "--out", str(d / "rob.csv")]) == 0
        assert len(lines(d / "rob.csv")) == 6

    def test_sanity_strict(self, files):
        d = files
        args = ["sanity", "--data", str(d / "data.csv"), "--model", str(d / "model.json"),
                "--mode", "full_reinit", "--metric", "spearman", "--instances", "30",
                "--seeds", "0,1", "--out", str(d / "san.csv")]
        assert main([*args, "--explainer", "random", "--strict"]) == 5
        assert main([*args, "--explainer", "random"]) == 0
        assert main([*args, "--explainer", "gradient_input", "--strict"]) == 0
        assert lines(d / "san.csv")[0] == \
            "stage,plan,seed,instance,similarity,retained_accuracy,verdict"

    def test_run_and_summarize(self, files, tmp_path):
        cfg = {"version": 1, "seed": 1,
               "dataset": {"generator": "seneca_rc", "n": 100, "noise": 0.3},
               "model": {"kind": "logistic"},
               "explainers": [{"kind": "gradient_input"}, {"kind": "random"}],
               "evaluation": {"ground_truth": ["mias"], "metrics": ["spearman"]}}
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        assert main(["run", "--config", str(tmp_path / "c.json"),
                     "--out-dir", str(tmp_path / "out")]) == 0
        assert main(["summarize", "--report", str(tmp_path / "out" / "report.csv"),
                     "--out", str(tmp_path / "s.csv")]) == 0
        assert lines(tmp_path / "s.csv")[0] == "explainer,measure,n,mean,median,std"
        assert len(lines(tmp_path / "s.csv")) == 3

    def test_figure4(self, tmp_path):
        assert main(["figure4", "--out", str(tmp_path / "f.csv")]) == 0
        assert len(lines(tmp_path / "f.csv")) == 4001


class TestExitCodes:
    def test_config_error(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"version": 1, "seed": 0}))
        assert main(["run", "--config", str(tmp_path / "c.json")]) == 2

    def test_unreadable_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2

    def test_data_error(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x0,label\nfoo,1\n")
        assert main(["train", "--model", "logistic", "--data", str(tmp_path / "bad.csv"),
                     "--out", str(tmp_path / "m.json")]) == 3

    def test_numeric_error(self, tmp_path):
        # duplicated column makes the least-squares system singular
        (tmp_path / "dup.csv").write_text("a,b,label\n1,1,0\n2,2,1\n3,3,1\n")
        assert main(["train", "--model", "linear", "--data", str(tmp_path / "dup.csv"),
                     "--out", str(tmp_path / "m.json")]) == 4

    def test_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2
