from freqmpc.cli import main
from freqmpc.harness import DATA_DIR


def _scenario(tmp_path, body):
    path = tmp_path / "s.scn"
    path.write_text(f"case = {DATA_DIR / 'ieee9.case'}\n" + body)
    return path


def test_validate_case_and_partition(capsys):
    assert main(["validate", "--case", str(DATA_DIR / "ieee39.case"),
                 "--partition", str(DATA_DIR / "ieee39_regions.part")]) == 0
    out = capsys.readouterr().out
    assert "n = 39" in out and "partition valid: 2 regions" in out


def test_validate_reports_bad_partition(tmp_path, capsys):
    part = tmp_path / "bad.part"
    part.write_text("a = 1 2 3 25 30\n")
    assert main(["validate", "--case", str(DATA_DIR / "ieee39.case"), "--partition", str(part)]) == 1
    assert "offending buses" in capsys.readouterr().out


def test_run_then_report(tmp_path, capsys):
    scn = _scenario(tmp_path, "controller = centralized\nduration = 0.3\ninitial_noise = 0.12\n")
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(scn), "--out", str(out)]) == 0
    assert (out / "trace.csv").exists()
    capsys.readouterr()
    assert main(["report", "--logs", str(out), str(out / "trace.csv"), "--out", str(tmp_path / "t.txt")]) == 0
    text = capsys.readouterr().out
    assert text.count("centralized") >= 2
    assert (tmp_path / "t.txt").read_text() == text


def test_input_errors_exit_with_2(tmp_path, capsys):
    assert main(["validate", "--case", str(tmp_path / "none.case")]) == 2
    scn = _scenario(tmp_path, "controller = nonsense\n")
    assert main(["run", "--scenario", str(scn)]) == 2
    assert "error" in capsys.readouterr().err


def test_failed_run_exits_with_3(tmp_path, capsys):
    # a coarse period lets the reference overshoot the bound, which aborts the run
    bad = tmp_path / "bad.case"
    text = (DATA_DIR / "two_gen.case").read_text()
    bad.write_text(text.replace("N = 150", "N = 5").replace("T = 0.001", "T = 0.5"))
    scn = tmp_path / "s.scn"
    scn.write_text(f"case = {bad}\ncontroller = centralized\nduration = 20\ndisturbance = sinusoidal\n"
                   "amplitude = 8\nperiod = 40\ncutoff = 20\ndisturbed_buses = 1-4\n")
    assert main(["run", "--scenario", str(scn), "--out", str(tmp_path / "o")]) == 3
    assert "run aborted" in capsys.readouterr().err
