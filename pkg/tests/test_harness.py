import numpy as np
import pytest

from freqmpc.harness import (
    DATA_DIR,
    GridMismatchError,
    InjectionSignal,
    Scenario,
    ScenarioError,
    forecast,
    load_run,
    load_scenario,
    parse_scenario,
    report,
    run,
    summarize,
    write_run,
)


def _short(controller="centralized", **kw):
    base = dict(case=str(DATA_DIR / "ieee9.case"), controller=controller, duration=1.0,
                initial_noise=0.12, seed=3, name=f"short_{controller}")
    if controller == "distributed":
        base["partition"] = str(DATA_DIR / "ieee9_regions.part")
    base.update(kw)
    return Scenario(**base)


@pytest.fixture(scope="module")
def short_run():
    return run(_short())


def test_injection_signal():
    sc = Scenario(case="x", disturbance="sinusoidal", amplitude=0.25, period=40, cutoff=20,
                  disturbed_buses=(2,))
    sig = InjectionSignal(np.array([1.0, -2.0, 0.5]), sc)
    assert np.allclose(sig(10.0), [1.0, -2.0 * 1.25, 0.5])
    assert np.allclose(sig(25.0), [1.0, -2.0, 0.5])
    assert sig(np.array([0.0, 10.0, 30.0])).shape == (3, 3)
    with pytest.raises(ScenarioError):
        InjectionSignal(np.ones(3), Scenario(case="x", disturbance="sinusoidal", disturbed_buses=(4,)))


def test_forecast_models():
    sc = Scenario(case="x")
    sig = InjectionSignal(np.array([1.0, -1.0]), sc)
    exact = forecast("exact", sig, 0.3, 151, 1e-3)
    grow = forecast("linear_growth", sig, 0.3, 151, 1e-3)
    assert np.array_equal(exact[:, 0], sig(0.3)) and np.array_equal(grow[:, 0], sig(0.3))
    assert np.all(exact == exact[:, :1])
    assert grow[0, 150] == pytest.approx(1.15)
    with pytest.raises(ScenarioError):
        forecast("psychic", sig, 0.0, 3, 1e-3)


def test_parse_scenario_resolves_paths(tmp_path):
    text = "# demo\ncase = ieee9.case\ncontroller = distributed\npartition = ieee9_regions.part\n" \
           "disturbed_buses = 4-6 9\nduration = 2\n"
    sc = parse_scenario(text, DATA_DIR, name="demo")
    assert sc.case == str(DATA_DIR / "ieee9.case")
    assert sc.partition == str(DATA_DIR / "ieee9_regions.part")
    assert sc.disturbed_buses == (4, 5, 6, 9) and sc.duration == 2.0


@pytest.mark.parametrize("text", [
    "controller = none\n",
    "case = a\nbogus = 1\n",
    "case = a\nduration = soon\n",
    "case = a\nduration = -1\n",
    "case = a\ncontroller = magic\n",
    "case = a\ncontroller = distributed\n",
    "case = a\nforecast = psychic\n",
    "case = a\nenable_time = -2\n",
    "case = a\ndisturbed_buses = 1 x\n",
])
def test_bad_scenarios(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_shipped_scenarios_parse():
    for path in sorted((DATA_DIR / "scenarios").glob("*.scn")):
        sc = load_scenario(path)
        assert sc.name == path.stem
    with pytest.raises(ScenarioError):
        load_scenario(DATA_DIR / "scenarios" / "missing.scn")


def test_open_loop_rest_stays_at_equilibrium():
    log = run(Scenario(case=str(DATA_DIR / "ieee39.case"), duration=2.0))
    assert np.max(np.abs(log.omega - log.meta["sync_freq"])) < 1e-9
    assert not log.u.any()


def test_log_shape_and_properties(short_run):
    log = short_run
    case = log.case
    K = 100
    assert log.t.shape == (K + 1,) and log.omega.shape == (K + 1, case.n)
    assert np.allclose(np.diff(log.t), 0.01)
    s = summarize(log)
    assert s["sign_violations"] == 0
    assert s["violations_safe"] == 0
    assert log.u[:, case.u_idx].any()
    assert not log.u[:, np.setdiff1d(np.arange(case.n), case.u_idx)].any()


def test_run_is_deterministic(short_run):
    again = run(_short())
    assert np.array_equal(again.omega, short_run.omega)
    assert np.array_equal(again.u, short_run.u)


def test_seed_changes_initial_state(short_run):
    other = run(_short(seed=4, duration=0.1))
    assert not np.array_equal(other.omega[0], short_run.omega[0])


def test_write_and_load_round_trip(short_run, tmp_path):
    out = write_run(short_run, tmp_path / "r")
    assert {p.name for p in out.iterdir()} >= {"trace.csv", "summary.txt", "meta.json"}
    back = load_run(out)
    assert np.allclose(back.omega, short_run.omega, rtol=1e-11, atol=1e-13)
    assert np.allclose(back.u, short_run.u, rtol=1e-11, atol=1e-13)
    assert summarize(back)["sign_violations"] == 0


def test_report_tables(short_run):
    text = report([short_run])
    assert text.splitlines()[0].startswith("run\tcontroller")
    assert "short_centralized" in text
    shorter = run(_short(controller="none", duration=0.5))
    with pytest.raises(GridMismatchError):
        report([short_run, shorter])
    with pytest.raises(ValueError):
        report([])


def test_delayed_enable_holds_zero_input():
    log = run(_short(enable_time=0.5))
    assert not log.u[log.t < 0.5 - 1e-12].any()


def test_distributed_and_baseline_short_runs():
    for ctl in ("distributed", "reference_baseline"):
        s = summarize(run(_short(controller=ctl)))
        assert s["sign_violations"] == 0


def test_duration_must_fit_the_grid():
    with pytest.raises(ScenarioError):
        run(_short(duration=0.015))
