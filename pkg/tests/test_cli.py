import csv
import json
from pathlib import Path

from prtrack.__main__ import EXIT_CHECK, EXIT_FAILURE, EXIT_OK, EXIT_SOLVER, main
from prtrack.polysolve import SolverDegeneracy
from prtrack.utilities import RunManifest, manifest_path_for
import pytest


DATA = Path(__file__).parent.joinpath('data')


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    """Run every command inside a scratch directory."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_model(tmp_path):
    """Test that `model` writes the Bloch form and a manifest."""
    out = tmp_path.joinpath("model.json")
    assert main(["--check", "model", "--epsilon", "0.1", "--out", str(out)]) == EXIT_OK
    document = json.loads(out.read_text())
    assert document["epsilon"] == 0.1
    assert document["r_ss"] == pytest.approx([0.0, 0.2 / 1.02, -1 / 1.02])
    manifest = RunManifest.load(manifest_path_for(out))
    assert manifest.command == "model"
    assert manifest.mismatches() == []


def test_ensembles_json(tmp_path):
    """Test that `ensembles` lists the three two-state ensembles."""
    out = tmp_path.joinpath("ensembles.json")
    code = main(["--check", "ensembles", "--k", "2", "--epsilon", "0.1", "--json", "--out", str(out)])
    assert code == EXIT_OK
    document = json.loads(out.read_text())
    assert len(document) == 3
    assert {tuple(e["provenance"]) for e in document} == {("u1",), ("u+",), ("u-",)}


def test_ensembles_csv(tmp_path):
    """Test the CSV form of `ensembles`."""
    out = tmp_path.joinpath("ensembles.csv")
    assert main(["ensembles", "--epsilon", "0.3", "--csv", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("epsilon,solution_id,h")
    assert len(lines) == 2


def test_ensembles_check_failure(mocker):
    """Test that a wrong ensemble count exits with the check code."""
    mocker.patch('prtrack.__main__.two_state_ensembles', return_value=[])
    assert main(["--check", "ensembles", "--epsilon", "0.1"]) == EXIT_CHECK


def test_stability_check():
    """Test that the half branch reproduces C = 1/25 and R = ln(5)/4."""
    assert main(["--check", "stability", "--epsilon", "0.1"]) == EXIT_OK


def test_appendixb_check():
    """Test the worked Groebner example end to end."""
    assert main(["--check", "appendixb"]) == EXIT_OK


def test_appendixb_with_config():
    """Test that a configuration file is accepted."""
    assert main(["-c", str(DATA.joinpath('prtrack.yml')), "appendixb"]) == EXIT_OK


def test_solve(tmp_path):
    """Test that `solve` writes the basis and both solutions."""
    out = tmp_path.joinpath("solution.json")
    assert main(["solve", "--system", str(DATA.joinpath('circle_line.txt')), "--out", str(out)]) == EXIT_OK
    document = json.loads(out.read_text())
    assert document["variables"] == ["a", "b"]
    assert len(document["solutions"]) == 2
    assert sorted(point[0][0] for point in document["solutions"]) == pytest.approx(
        [-2**-0.5, 2**-0.5]
    )


def test_simulate(tmp_path):
    """Test a small Monte Carlo run with a recorded trajectory."""
    out = tmp_path.joinpath("mc.json")
    trajectory = tmp_path.joinpath("trajectory.csv")
    argv = [
        "--seed", "3", "-t", "2",
        "simulate", "--ntraj", "40", "--cycles", "2", "--max-jumps", "4",
        "--trajectory-out", str(trajectory), "--out", str(out),
    ]
    assert main(argv) == EXIT_OK
    document = json.loads(out.read_text())
    assert document["cycles"] == [1, 2]
    assert document["counts"] == [40, 40]
    assert len(document["predicted"]) == 2
    assert trajectory.read_text().startswith("t,F,stage,dN\n")
    manifest = RunManifest.load(manifest_path_for(out))
    assert manifest.seed == 3
    assert set(manifest.outputs) == {str(out), str(trajectory)}


def test_simulate_bad_psi0():
    """Test that malformed amplitudes exit with the failure code."""
    assert main(["simulate", "--ntraj", "2", "--psi0", "1;0"]) == EXIT_FAILURE


def test_simulate_missing_branch():
    """Test that a branch without an ensemble exits with the failure code."""
    assert main(["simulate", "--epsilon", "0.3", "--branch", "nu-"]) == EXIT_FAILURE


def test_sweep_and_replay(tmp_path):
    """Test that a sweep is reproduced byte for byte by `replay`."""
    out = tmp_path.joinpath("sweep.csv")
    argv = ["--check", "-t", "2", "sweep", "--epsilon-grid", "0.1", "0.2", "0.05", "--out", str(out)]
    assert main(argv) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "epsilon,branch,h,C,R,stage1,stage2,lambda_min,B1,B2"
    assert len(lines) == 1 + 3 * 3
    manifest = manifest_path_for(out)
    assert main(["--check", "replay", str(manifest)]) == EXIT_OK

    out.write_text("tampered\n")
    recorded = RunManifest.load(manifest)
    assert recorded.mismatches() == [str(out)]


def test_replay_missing_manifest(tmp_path):
    """Test that a missing manifest exits with the failure code."""
    assert main(["replay", str(tmp_path.joinpath("none.json"))]) == EXIT_FAILURE


def test_solver_failure_exit_code(mocker):
    """Test that solver failures exit with their own code."""
    mocker.patch('prtrack.__main__.solve_zero_dim', side_effect=SolverDegeneracy("degenerate"))
    assert main(["appendixb"]) == EXIT_SOLVER


def test_missing_system_file(tmp_path):
    """Test that a missing input file exits with the failure code."""
    assert main(["solve", "--system", str(tmp_path.joinpath("none.txt"))]) == EXIT_FAILURE


@pytest.mark.parametrize(
    "argv",
    (
        [],
        ["model"],
        ["model", "--epsilon", "-1"],
        ["model", "--epsilon", "abc"],
        ["ensembles", "--k", "4", "--epsilon", "0.1"],
    ),
)
def test_bad_arguments(argv):
    """Test that argparse rejects malformed command lines."""
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 2


@pytest.mark.slow
def test_table1_check():
    """Test the three-state geometry at epsilon = 0.15."""
    assert main(["--check", "table1"]) == EXIT_OK


@pytest.mark.slow
def test_three_state_ensembles_check():
    """Test the three-state count past the last threshold."""
    assert main(["--check", "ensembles", "--k", "3", "--epsilon", "0.3"]) == EXIT_OK


def test_ensembles_table_with_out(tmp_path):
    """Test that the default table format still writes CSV to `--out`."""
    out = tmp_path.joinpath("table.csv")
    assert main(["ensembles", "--epsilon", "0.1", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("epsilon,solution_id,h")
    assert len(lines) == 1 + 3
    assert RunManifest.load(manifest_path_for(out)).mismatches() == []


@pytest.mark.parametrize(
    "argv, manifest",
    (
        (["model", "--epsilon", "0.1"], "results/model.json.manifest.json"),
        (["ensembles", "--epsilon", "0.1"], "results/ensembles.csv.manifest.json"),
        (["ensembles", "--epsilon", "0.1", "--json"], "results/ensembles.json.manifest.json"),
        (["stability", "--epsilon", "0.1"], "results/stability.csv.manifest.json"),
        (
            ["sweep", "--epsilon-grid", "0.1", "0.1", "0.05"],
            "results/sweep.csv.manifest.json",
        ),
        (
            ["simulate", "--ntraj", "4", "--cycles", "1", "--max-jumps", "4"],
            "results/simulate.json.manifest.json",
        ),
        (
            ["simulate", "--ntraj", "4", "--start-stage", "2", "--max-jumps", "4"],
            "results/simulate.manifest.json",
        ),
        (["appendixb"], "results/appendixb.json.manifest.json"),
        (
            ["solve", "--system", str(DATA.joinpath('circle_line.txt'))],
            "results/solve.json.manifest.json",
        ),
    ),
)
def test_every_command_writes_manifest(workdir, argv, manifest):
    """Test that a command without `--out` writes its manifest under results/."""
    assert main(argv) == EXIT_OK
    recorded = RunManifest.load(workdir.joinpath(manifest))
    assert recorded.command == argv[0]
    assert recorded.argv == argv
    assert recorded.mismatches() == []


def test_appendixb_golden(tmp_path):
    """Test the exact part of the worked example against the golden file."""
    out = tmp_path.joinpath("appendixb.json")
    assert main(["appendixb", "--out", str(out)]) == EXIT_OK
    document = json.loads(out.read_text())
    assert len(document.pop("solutions")) == 6
    rendered = json.dumps(document, indent=2, sort_keys=True) + "\n"
    assert rendered.encode() == DATA.joinpath('worked_example_exact.json').read_bytes()


def test_sweep_golden(tmp_path, render_golden):
    """Test the half branch of a sweep against the golden file."""
    out = tmp_path.joinpath("sweep.csv")
    argv = ["-t", "2", "sweep", "--epsilon-grid", "0.05", "0.3", "0.05", "--out", str(out)]
    assert main(argv) == EXIT_OK
    golden = DATA.joinpath('half_branch_rows.csv')
    columns = tuple(golden.read_text().splitlines()[0].split(","))
    with open(out, newline="") as stream:
        rows = [row for row in csv.DictReader(stream) if row["branch"] == "half"]
    assert render_golden(rows, columns).encode() == golden.read_bytes()


@pytest.mark.slow
def test_table1_writes_default_output(workdir):
    """Test that `table1` without `--out` writes its CSV and manifest."""
    assert main(["table1"]) == EXIT_OK
    recorded = RunManifest.load(workdir.joinpath("results/table1.csv.manifest.json"))
    assert recorded.mismatches() == []
