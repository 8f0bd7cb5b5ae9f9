import json
import subprocess
import sys

import pytest

from dentlab.cli import run


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def grid_file(tmp_path, capsys):
    p = tmp_path / "grid.json"
    assert call(capsys, "gen-example", "--shape", "grid", "--n", "21", "-o", str(p))[0] == 0
    return p


@pytest.fixture
def disc_file(tmp_path, capsys):
    p = tmp_path / "disc.json"
    assert call(capsys, "gen-example", "--shape", "ball", "--d", "2", "--n", "150",
                "-o", str(p))[0] == 0
    return p


def test_dent_index_grid(grid_file, tmp_path, capsys):
    csv = tmp_path / "stages.csv"
    code, out, _ = call(capsys, "dent-index", "--input", str(grid_file), "--eps", "0.4",
                        "--csv", str(csv))
    assert code == 0
    rep = json.loads(out)
    assert rep["trace"]["outcome"] == {"Dz": 2}
    assert rep["config"]["tolerances"]["sep_tol"] == 1e-9
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("# config ")
    assert lines[1] == "stage,survivors,max_witness_osc"
    assert lines[2].startswith("0,3,")


def test_derive_with_subset(grid_file, capsys):
    code, out, _ = call(capsys, "derive", "--input", str(grid_file), "--eps", "0.4",
                        "--subset", "p0,p1,p2")
    assert code == 0
    assert json.loads(out)["stage"]["survivors"] == []


def test_ss_scan_csv_and_json(disc_file, capsys):
    code, out, _ = call(capsys, "ss-scan", "--input", str(disc_file), "--n-dirs", "8")
    assert code == 0 and out.splitlines()[1].startswith("direction_index,")
    code, out, _ = call(capsys, "ss-scan", "--input", str(disc_file), "--n-dirs", "8",
                        "--emit", "json")
    assert json.loads(out)["success_fraction"] == 1.0


def test_dc_approx_builtin_function(capsys):
    code, out, _ = call(capsys, "dc-approx", "--function", "abs", "--grid-mesh", "0.0078125",
                        "--n-list", "1,4", "--emit", "json", "--trials", "200")
    assert code == 0
    rep = json.loads(out)
    assert [round(r["sup_error"], 4) for r in rep["rows"]] == [0.25, 0.0625]
    assert all(c["passed"] for c in rep["split_checks"])


def test_renorm_check(tmp_path, capsys):
    p = tmp_path / "sym.json"
    p.write_text(json.dumps({"dim": 1, "points": [{"x": [x / 20 - 1]} for x in range(41)]}))
    code, out, _ = call(capsys, "renorm-check", "--input", str(p), "--K", "2",
                        "--trials", "100")
    assert code == 0 and json.loads(out)["passed"]


def test_gen_example_tree_maps(capsys):
    for kind in ("identity", "tree-dist", "norm-one"):
        code, out, _ = call(capsys, "gen-example", "--shape", "tree", "--tree-depth", "2",
                            "--map", kind)
        assert code == 0
        assert len(json.loads(out)["points"]) == 7


def test_martingale_default_tree(capsys):
    code, out, _ = call(capsys, "martingale")
    assert code == 0 and json.loads(out)["run"]["passed"]


def test_equi_slice_outcome(grid_file, capsys):
    code, out, _ = call(capsys, "equi-slice", "--input", str(grid_file), "--eps", "0.2")
    rep = json.loads(out)
    assert code == 0 and rep["outcome"] == "slice"
    assert max(rep["oscillations"]) < 0.2


# errors and exit codes ----------------------------------------------------

def test_unknown_subcommand_exits_2(capsys):
    code, _, err = call(capsys, "bogus")
    assert code == 2 and "usage" in err


def test_missing_required_option_exits_2(grid_file, capsys):
    code, _, err = call(capsys, "dent-index", "--input", str(grid_file))
    assert code == 2 and "--eps" in err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"points": [[0]\n,}')
    code, _, err = call(capsys, "dent-index", "--input", str(p), "--eps", "0.1")
    assert code == 2 and "line 2" in err


def test_nonpositive_eps_exits_2(grid_file, capsys):
    assert call(capsys, "dent-index", "--input", str(grid_file), "--eps", "-1")[0] == 2


def test_capacity_exceeded_exits_3(tmp_path, capsys):
    p = tmp_path / "ball3.json"
    call(capsys, "gen-example", "--shape", "ball", "--d", "3", "--n", "30", "-o", str(p))
    code, _, err = call(capsys, "dent-index", "--input", str(p), "--eps", "0.3")
    assert code == 3
    assert call(capsys, "dent-index", "--input", str(p), "--eps", "0.3",
                "--capacity-any", "30")[0] == 0


def test_unwritable_output_exits_3(grid_file, tmp_path, capsys):
    target = tmp_path / "missing-dir" / "out.json"
    code, _, _ = call(capsys, "dent-index", "--input", str(grid_file), "--eps", "0.4",
                      "-o", str(target))
    assert code == 3


def test_config_precedence(grid_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eps": 0.4, "mode": "cluster"}))
    _, out, _ = call(capsys, "dent-index", "--input", str(grid_file), "--config", str(cfg))
    assert json.loads(out)["trace"]["outcome"] == {"Dz": 3}
    _, out, _ = call(capsys, "dent-index", "--input", str(grid_file), "--config", str(cfg),
                     "--mode", "exact")
    assert json.loads(out)["trace"]["outcome"] == {"Dz": 2}


def test_config_unknown_key_rejected(grid_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.4}))
    assert call(capsys, "dent-index", "--input", str(grid_file), "--config", str(cfg))[0] == 2


def test_same_seed_same_bytes(disc_file, capsys):
    a = call(capsys, "ss-scan", "--input", str(disc_file), "--n-dirs", "6", "--seed", "4")[1]
    b = call(capsys, "ss-scan", "--input", str(disc_file), "--n-dirs", "6", "--seed", "4")[1]
    assert a == b


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dentlab", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("dentlab ")
