import csv
import json

import numpy as np
import pytest

from brascpd.cli import main
from brascpd.config import parse_config
from brascpd.data import SyntheticSpec, generate, load_model, load_tensor, save_model, save_tensor
from brascpd.experiment import run_experiment, trial_seed
from brascpd.metrics import cost, mse_all
from brascpd.solvers import init_state

SMALL = """
shape = 12,10,8
rank = 3
batch = 4
reg.kind = nonneg
max_mttkrp = 4
trials = 3
seed = 99
plot = false
"""


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text(SMALL)
    return p


class TestSeeds:
    def test_trial_seed_deterministic_and_distinct(self):
        seeds = [trial_seed(7, k) for k in range(50)]
        assert seeds == [trial_seed(7, k) for k in range(50)]
        assert len(set(seeds)) == 50
        assert trial_seed(8, 0) != trial_seed(7, 0)


class TestRunExperiment:
    def test_zero_iterations_summary_is_init(self, tmp_path):
        cfg = parse_config(SMALL.replace("max_mttkrp = 4", "max_iterations = 0").replace("trials = 3", "trials = 1"))
        summary = run_experiment(cfg, tmp_path)
        seed = trial_seed(99, 0)
        inst = generate(cfg.synthetic_spec(seed), seed=np.random.SeedSequence([seed, 1]))
        init = init_state(inst.tensor, cfg.solver_config(seed)).model
        assert summary["metrics"]["cost"]["median"] == cost(inst.tensor, init)
        assert summary["metrics"]["mse_avg"]["mean"] == pytest.approx(np.mean(mse_all(init, inst.truth)), rel=1e-15)

    def test_rerun_identical_files(self, tmp_path):
        cfg = parse_config(SMALL)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b", parallel=2)
        for name in ["summary.csv", "trials.csv"] + [f"trace_{k:03d}.csv" for k in range(3)]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_headers(self, tmp_path):
        run_experiment(parse_config(SMALL), tmp_path)
        head = (tmp_path / "trace_001.csv").read_text().splitlines()
        assert head[0].startswith("# brascpd ")
        assert "# prng = numpy.random.PCG64" in head
        assert "# master_seed = 99" in head
        assert f"# trial_seed = {trial_seed(99, 1)}" in head
        assert "# config: rank = 3" in head
        assert "# config: reg.kind = nonneg" in head
        summary = (tmp_path / "summary.csv").read_text()
        assert "# diverged = 0" in summary

    def test_trace_columns(self, tmp_path):
        run_experiment(parse_config(SMALL), tmp_path)
        rows = read_rows(tmp_path / "trace_000.csv")
        assert list(rows[0]) == ["iteration", "mttkrp_eq", "all_mode_mttkrp_eq", "sampled_entries",
                                 "wall_seconds", "cost", "mse_mode_1", "mse_mode_2", "mse_mode_3", "mse_avg"]
        assert rows[0]["wall_seconds"] == "nan"
        assert float(rows[-1]["mttkrp_eq"]) >= 4.0 - 1e-12

    def test_divergence_counted(self, tmp_path):
        text = SMALL + "algorithm = brascpd\nalpha = 1000\n"
        summary = run_experiment(parse_config(text), tmp_path)
        assert summary["diverged"] == 3 and summary["finite_trials"] == 0
        last = read_rows(tmp_path / "trace_000.csv")[-1]
        assert last["cost"] == "nan" and float(last["mttkrp_eq"]) > 0

    def test_file_source(self, tmp_path):
        inst = generate(SyntheticSpec((6, 5, 4), 2, seed=3))
        save_tensor(tmp_path / "x.dten", inst.tensor)
        save_model(tmp_path / "x.dfac", inst.truth)
        text = (f"source = file\ntensor_path = {tmp_path / 'x.dten'}\ntruth_path = {tmp_path / 'x.dfac'}\n"
                "rank = 2\nbatch = 2\nmax_mttkrp = 2\nplot = false\nreg.kind = nonneg\n")
        summary = run_experiment(parse_config(text), tmp_path / "out")
        assert summary["finite_trials"] == 1 and "mse_avg" in summary["metrics"]

    def test_figures_written(self, tmp_path):
        summary = run_experiment(parse_config(SMALL), tmp_path, plot=True)
        names = sorted(p.split("/")[-1] for p in summary["figures"])
        assert names == ["cost_vs_mttkrp.png", "mse_vs_mttkrp.png", "mse_vs_sampled.png"]
        assert all((tmp_path / n).stat().st_size > 1000 for n in names)


class TestCli:
    def test_run(self, cfg_file, tmp_path, capsys):
        assert main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "o"), "--trials", "2",
                     "--seed", "5", "--parallel", "1"]) == 0
        assert "trials=2" in capsys.readouterr().out
        assert "# master_seed = 5" in (tmp_path / "o" / "trace_000.csv").read_text()
        assert not (tmp_path / "o" / "trace_002.csv").exists()

    def test_run_diverged_exit_code(self, tmp_path):
        p = tmp_path / "d.cfg"
        p.write_text(SMALL + "algorithm = brascpd\nalpha = 1000\ntrials = 1\n")
        assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1

    def test_bad_config(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("shape = 3,3,3\nrank = many\n")
        assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
        assert "bad.cfg:2: field 'rank'" in capsys.readouterr().err

    def test_generate(self, cfg_file, tmp_path):
        out = tmp_path / "g"
        assert main(["generate", "--config", str(cfg_file), "--out", str(out), "--seed", "4"]) == 0
        t = load_tensor(out / "tensor.dten")
        assert t.shape == (12, 10, 8)
        assert load_model(out / "truth.dfac").rank == 3
        assert load_tensor(out / "clean.dten") == t

    def test_verify_selector(self, capsys):
        assert main(["verify", "prox"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert list(report["suites"]) == ["prox"] and report["passed"]

    def test_verify_negative_control(self, capsys):
        assert main(["verify", "unbiased", "--inject-gradient-scale", "1.001"]) == 1
        assert json.loads(capsys.readouterr().out)["suites"]["unbiased"]["passed"] is False

    def test_verify_unknown_suite(self, capsys):
        assert main(["verify", "nope"]) == 2
