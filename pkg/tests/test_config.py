import pytest

from brascpd import Regularizer
from brascpd.config import load_config, parse_config
from brascpd.errors import ConfigError

BASIC = """
# experiment
algorithm = brascpd   # trailing comment
shape = 10x12x14
rank = 4
alpha = 0.05
reg.kind = nonneg
reg.2.kind = simplex
reg.2.rho = 12
max_mttkrp = 5
"""


class TestParse:
    def test_values(self):
        cfg = parse_config(BASIC)
        assert cfg.get("shape") == (10, 12, 14)
        assert cfg.get("alpha") == 0.05
        assert cfg.get("eta") == 1.0  # default
        sc = cfg.solver_config(5)
        assert sc.algorithm == "brascpd" and sc.schedule.alpha == 0.05 and sc.seed == 5

    def test_per_mode_regularizers(self):
        regs = parse_config(BASIC).regularizers(3)
        assert regs == [Regularizer("nonneg"), Regularizer("simplex", rho=12.0), Regularizer("nonneg")]

    def test_shape_comma_form(self):
        assert parse_config("shape = 3,4,5\nmax_iterations = 1").get("shape") == (3, 4, 5)

    def test_ada_history(self):
        cfg = parse_config("shape = 3,4,5\nmax_iterations = 1\nada_history = exclusive")
        assert cfg.step_schedule().include_current is False

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text(BASIC)
        assert load_config(p).get("rank") == 4

    def test_echo_is_sorted_and_skips_runtime_keys(self):
        lines = parse_config(BASIC + "parallel = 4\n").echo_lines()
        keys = [ln.split(" = ")[0] for ln in lines if not ln.startswith("reg")]
        assert keys == sorted(keys)
        assert "parallel" not in keys and "plot" not in keys
        assert "reg.2.rho = 12.0" in lines


class TestErrors:
    @pytest.mark.parametrize("text,where", [
        ("shape = 3,4,5\nrank = two\n", ":2: field 'rank'"),
        ("shape = 3,4,5\nnot a pair\n", ":2: expected"),
        ("shape = 3,4,5\nbogus = 1\n", ":2: field 'bogus': unknown key"),
        ("algorithm = sgd\n", ":1: field 'algorithm'"),
        ("reg.0.kind = l1\n", ":1: field 'reg.0.kind'"),
        ("reg.kind = l1\nreg.weight = 2\n", ":2: field 'reg.weight'"),
    ])
    def test_line_and_field(self, text, where):
        with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
            parse_config(text, "exp.cfg")

    @pytest.mark.parametrize("text", [
        "max_iterations = 1\n",                              # no shape
        "shape = 3,4\nmax_iterations = 1\n",                 # too few modes
        "shape = 3,4,5\n",                                   # no stopping bound
        "shape = 3,4,5\nmax_iterations = 1\ntrials = 0\n",
        "shape = 3,4,5\nmax_iterations = 1\nreg.kind = unimodal\n",
        "shape = 3,4,5\nmax_iterations = 1\nreg.4.kind = l1\n",
        "source = file\nmax_iterations = 1\n",
    ])
    def test_invalid_experiments(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)
