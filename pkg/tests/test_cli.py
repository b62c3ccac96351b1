import io
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fixture_sets import tier_case, tier_record
from mofblock.cli import build_parser, main
from mofblock.codec import render_sft_response


@pytest.fixture
def record_file(record_set, tmp_path):
    path = tmp_path / "rec.json"
    path.write_text(json.dumps(record_set[2].to_dict()), "utf-8")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_all_subcommands_registered():
    choices = build_parser()._subparsers._group_actions[0].choices
    assert set(choices) == {"encode-cpt", "encode-sft", "parse", "assemble", "match", "evaluate", "reward",
                            "train-sim", "descriptors", "niggli"}


class TestExitCodes:
    def test_usage_errors(self, capsys, fixture_dir):
        for argv in ([], ["bogus"], ["encode-sft", str(fixture_dir / "structures.jsonl")],
                     ["match", "a", "b", "--tolerances", "0.5,0.3"], ["match", "a", "b", "--tolerances", "x,y,z"]):
            with pytest.raises(SystemExit) as info:
                main(argv)
            assert info.value.code == 1
        capsys.readouterr()

    def test_data_errors(self, capsys, tmp_path):
        code, _, err = run(capsys, "niggli", tmp_path / "absent.json")
        assert code == 2 and "absent.json" in err
        bad = tmp_path / "bad.json"
        bad.write_text("{nope", "utf-8")
        assert run(capsys, "assemble", bad)[0] == 2
        bad.write_text(json.dumps({"id": "x"}), "utf-8")
        assert run(capsys, "descriptors", bad)[0] == 2


class TestEncode:
    @pytest.mark.parametrize("cmd, keys", [("encode-sft", {"id", "prompt", "response"}), ("encode-cpt", {"id", "text"})])
    def test_encode(self, capsys, fixture_dir, tmp_path, cmd, keys):
        out = tmp_path / "corpus.jsonl"
        code, stdout, _ = run(capsys, cmd, fixture_dir / "structures.jsonl", "-o", out)
        counts = json.loads(stdout)
        assert code == 0 and counts["errors"] == [] and counts["skipped_on_load"] == []
        rows = [json.loads(x) for x in out.read_text("utf-8").splitlines()]
        assert len(rows) == counts["emitted"] and set(rows[0]) == keys
        first = out.read_bytes()
        run(capsys, cmd, fixture_dir / "structures.jsonl", "-o", out)
        assert out.read_bytes() == first


class TestParse:
    TEXT = "10.00 11.00 12.00 90.00 90.00 90.00\n[0] translation=(0.500 0.250 0.125) rotation=(0.100 0.200 0.300)"

    def test_file(self, capsys, tmp_path):
        path = tmp_path / "r.txt"
        path.write_text(self.TEXT, "utf-8")
        code, out, _ = run(capsys, "parse", path, "--expected-blocks", 1, "--strict-parse")
        d = json.loads(out)
        assert code == 0 and d["ok"] and d["lattice"]["b"] == 11.0
        assert d["poses"][0]["translation"] == [0.5, 0.25, 0.125]

    def test_stdin(self, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO(self.TEXT))
        code, out, _ = run(capsys, "parse")
        assert code == 0 and json.loads(out)["poses"][0]["euler"] == pytest.approx([0.1, 0.2, 0.3])

    def test_failure(self, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO("10 10 10 90 90 90\n[1] 0 0 0 0 0 0"))
        code, out, _ = run(capsys, "parse", "-")
        d = json.loads(out)
        assert code == 2
        assert set(d) == {"ok", "kind", "offset", "message"}
        assert (d["ok"], d["kind"], d["offset"]) == (False, "index-gap", 18)


class TestAssemble:
    def test_json(self, capsys, record_file, record_set):
        code, out, _ = run(capsys, "assemble", record_file)
        d = json.loads(out)
        assert code == 0 and len(d["species"]) == len(record_set[2].assemble().species)

    def test_cif(self, capsys, record_file):
        code, out, _ = run(capsys, "assemble", record_file, "--cif")
        assert code == 0 and "_cell_length_a" in out and out.startswith("data_")

    def test_response(self, capsys, tmp_path):
        rec = tmp_path / "rec.json"
        rec.write_text(json.dumps(tier_record().to_dict()), "utf-8")
        resp = tmp_path / "r.txt"
        resp.write_text(render_sft_response(*tier_case(0.0, 12.0)[2:]), "utf-8")
        code, _, _ = run(capsys, "assemble", rec, "--response", resp, "-o", tmp_path / "s.json")
        d = json.loads((tmp_path / "s.json").read_text("utf-8"))
        assert code == 0 and d["lattice"][0][0] == pytest.approx(12.0)


class TestMatch:
    def test_default_and_multiple(self, capsys, record_file, tmp_path):
        code, out, _ = run(capsys, "match", record_file, record_file)
        d = json.loads(out)
        assert code == 0 and len(d) == 2 and all(r["matched"] for r in d)
        assert [r["stol"] for r in d] == [0.5, 1.0]
        code, out, _ = run(capsys, "match", record_file, record_file, "--tolerances", "0.3,0.2,5")
        d = json.loads(out)
        assert d["matched"] and d["rmse"] == pytest.approx(0, abs=1e-9) and d["atol"] == 5.0

    def test_atom_level_inputs(self, capsys, tmp_path):
        _, gt, _, _ = tier_case(0.0)
        far = tmp_path / "far.json"
        far.write_text(json.dumps({**gt.to_dict(), "lattice": [15, 15, 15, 90, 90, 90]}), "utf-8")
        near = tmp_path / "near.json"
        near.write_text(json.dumps(gt.to_dict()), "utf-8")
        code, out, _ = run(capsys, "match", far, near, "--tolerances", "0.5,0.3,1")
        assert code == 0 and json.loads(out)["matched"] is False


class TestEvaluate:
    @pytest.fixture
    def eval_file(self, record_set, tmp_path):
        path = tmp_path / "e.jsonl"
        rows = [{"id": r.id, "candidates": ["junk", r.sft_pair()["response"]], "gt": r.to_dict()} for r in record_set[:4]]
        path.write_text("".join(json.dumps(x) + "\n" for x in rows), "utf-8")
        return path

    def test_json(self, capsys, eval_file):
        code, out, _ = run(capsys, "evaluate", eval_file, "--workers", 2)
        d = json.loads(out)
        assert code == 0 and [x["match_rate"] for x in d["results"]] == [100.0, 100.0]
        assert [c["id"] for c in d["cases"]] == ["fx000", "fx001", "fx002", "fx003"]

    def test_samples_and_table(self, capsys, eval_file, tmp_path):
        code, out, _ = run(capsys, "evaluate", eval_file, "--samples", 1, "--table",
                           "--tolerances", "1.0,0.3,1.0", "-o", tmp_path / "s.json")
        assert code == 0 and out.startswith("tolerances (stol, ltol, atol)")
        assert "0.00" in out.splitlines()[2]
        assert json.loads((tmp_path / "s.json").read_text("utf-8"))["results"][0]["match_rate"] == 0.0


def test_reward(capsys, tmp_path):
    blocks, gt, _, _ = tier_case(0.0)
    rec = tier_record()
    block_json = rec.to_dict()["blocks"]
    rows = [
        {"id": "a", "response_text": render_sft_response(*tier_case(0.0)[2:]), "gt_structure": rec.to_dict()},
        {"id": "b", "response_text": render_sft_response(*tier_case(3.5)[2:]), "gt_structure": gt.to_dict(),
         "blocks": block_json},
        {"response_text": "nothing", "gt_structure": gt.to_dict(), "blocks": block_json},
    ]
    path = tmp_path / "r.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), "utf-8")
    code, out, _ = run(capsys, "reward", path, "--workers", 3)
    got = [json.loads(x) for x in out.splitlines()]
    assert code == 0
    assert [(g.get("id"), g["branch"], g["reward"]) for g in got] == [
        ("a", "tier-0.5", 1.5), ("b", "tier-0.75", 0.6), (None, "parse-failure", -1.0)]
    path.write_text(json.dumps({"response_text": "x", "gt_structure": gt.to_dict()}) + "\n", "utf-8")
    assert run(capsys, "reward", path)[0] == 2


def test_train_sim(capsys, tmp_path):
    metrics = tmp_path / "m.jsonl"
    code, out, _ = run(capsys, "train-sim", "--steps", 5, "--sft-steps", 3, "--seed", 4, "-o", metrics)
    d = json.loads(out)
    assert code == 0 and d["steps"] == 5 and d["seed"] == 4
    assert math.isfinite(d["trailing_mean_reward"]) and d["sft_final_nll"] > 0
    assert len(metrics.read_text("utf-8").splitlines()) == 5
    code, again, _ = run(capsys, "train-sim", "--steps", 5, "--sft-steps", 3, "--seed", 4)
    assert again == out


class TestDescriptors:
    def test_defaults(self, capsys, record_file):
        code, out, _ = run(capsys, "descriptors", record_file, "--grid", 16, "--probe-radius", 1.2)
        d = json.loads(out)
        assert code == 0 and d["grid_resolution"] == 16 and d["probe_radius"] == 1.2

    def test_radii(self, capsys, tmp_path):
        cell = tmp_path / "s.json"
        cell.write_text(json.dumps({"species": ["C"], "frac_coords": [[0.5, 0.5, 0.5]], "lattice": [10, 10, 10, 90, 90, 90]}))
        base = json.loads(run(capsys, "descriptors", cell, "--grid", 16)[1])
        for key in ("C", "6"):
            radii = tmp_path / "r.json"
            radii.write_text(json.dumps({key: 0.5}))
            d = json.loads(run(capsys, "descriptors", cell, "--grid", 16, "--radii", radii)[1])
            assert d["vf_grid"] > base["vf_grid"]
            assert d["lcd_grid"] == pytest.approx(2 * (5 * math.sqrt(3) - 0.5))


class TestNiggli:
    SKEWED = [[5, 0, 0], [7, 6, 0], [1, 2, 7]]

    @pytest.mark.parametrize("payload", [
        SKEWED,
        {"lattice": SKEWED},
        {"species": ["Zn"], "frac_coords": [[0, 0, 0]], "lattice": SKEWED},
    ])
    def test_inputs(self, capsys, tmp_path, payload):
        path = tmp_path / "l.json"
        path.write_text(json.dumps(payload))
        code, out, _ = run(capsys, "niggli", path)
        d = json.loads(out)
        assert code == 0 and set(d) == {"matrix", "params", "transform"}
        assert d["params"]["b"] == pytest.approx(math.hypot(2, 6))

    def test_params(self, capsys, tmp_path):
        path = tmp_path / "l.json"
        path.write_text(json.dumps({"a": 4, "b": 3, "c": 5, "alpha": 90, "beta": 90, "gamma": 90}))
        d = json.loads(run(capsys, "niggli", path)[1])
        assert [d["params"][k] for k in "abc"] == pytest.approx([3, 4, 5])
        assert_allclose(np.linalg.norm(d["matrix"], axis=1), [3, 4, 5])
        assert_allclose(np.abs(np.linalg.det(d["transform"])), 1)
