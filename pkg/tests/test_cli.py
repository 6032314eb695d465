import csv
import os

import numpy as np
import pytest

from deconopt import cli
from deconopt.cli import ExperimentConfig, parse_config, serialize_config
from deconopt.errors import ConfigError

BASE_INI = """
[scenario]
preset = ls-ring
n = 5
p = 2
seed = 1

[algorithm]
name = dadmm
rho = 1.0
eta = 0.5
pi = 0
rounds = 40

[output]
dir = {out}
"""

EXPLICIT_INI = """
[scenario]
preset = explicit
n = 3
p = 1
seed = 7

[graph]
edges = 1-2 2-3

[problem]
h1 = 1.0
y1 = 0.0
h2 = 1.0
y2 = 1.0
h3 = 1.0
y3 = 2.0

[algorithm]
name = dadmm
rho = 1.0
eta = 0.5
rounds = 30

[output]
dir = {out}
"""


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigRoundTrip:
    def test_parse_serialize_parse_identity(self):
        for text in (BASE_INI.format(out="out"), EXPLICIT_INI.format(out="x")):
            cfg = parse_config(text)
            again = parse_config(serialize_config(cfg))
            assert again == cfg

    def test_defaults(self):
        cfg = parse_config("[scenario]\npreset = ls-ring\n")
        assert cfg == ExperimentConfig()

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[algorithm]\nrho = abc\n")
        with pytest.raises(ConfigError):
            parse_config("[graph]\nedges = 1:2\n")
        with pytest.raises(ConfigError):
            parse_config("not an ini at all [ ")

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            parse_config("[algorithm]\nname = nosuch\n").validate()
        with pytest.raises(ConfigError):
            parse_config("[algorithm]\nrho = -1\n").validate()
        with pytest.raises(ConfigError):
            parse_config("[algorithm]\npi = theorem2\n").validate()


class TestRun:
    def test_preset_smoke(self, tmp_path):
        out = tmp_path / "out"
        path = write(tmp_path, BASE_INI.format(out=out))
        code = cli.main(["run", path, "--verify"])
        assert code == 0
        assert (out / "trace.csv").exists()
        assert (out / "certificate.txt").exists()
        assert (out / "certificate.csv").exists()

    def test_eta_out_of_theorem_range_with_verify_fails_setup(self, tmp_path, capsys):
        text = BASE_INI.format(out=tmp_path / "o").replace("eta = 0.5", "eta = 1.5")
        path = write(tmp_path, text)
        code = cli.main(["run", path, "--verify"])
        assert code == 1
        assert "deconopt" in capsys.readouterr().err

    def test_eta_without_verify_runs(self, tmp_path):
        text = BASE_INI.format(out=tmp_path / "o").replace("eta = 0.5", "eta = 1.5")
        path = write(tmp_path, text)
        assert cli.main(["run", path]) == 0

    def test_compare_dadmm_pextra_theorem2(self, tmp_path):
        out = tmp_path / "cmp"
        text = BASE_INI.format(out=out).replace("pi = 0", "pi = theorem2")
        text = text.replace("[algorithm]", "[algorithm]\nxi = 0.04")
        path = write(tmp_path, text)
        code = cli.main(["run", path, "--compare", "dadmm,pextra"])
        assert code == 0
        with open(out / "compare.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "max_abs_dx"]
        gaps = [float(r[1]) for r in rows[1:]]
        assert len(gaps) == 41
        assert max(gaps) <= 1e-9

    def test_explicit_scenario(self, tmp_path):
        out = tmp_path / "exp"
        path = write(tmp_path, EXPLICIT_INI.format(out=out))
        assert cli.main(["run", path]) == 0
        with open(out / "trace.csv") as fh:
            rows = list(fh)
        assert rows[0].strip() == cli.TRACE_HEADER
        assert len(rows) == 32  # header + k=0..30

    def test_explicit_quadratic_blocks(self, tmp_path):
        out = tmp_path / "quad"
        text = f"""
[scenario]
preset = explicit
n = 2
p = 2
seed = 0

[graph]
edges = 1-2

[problem]
q1 = 1.0 0.0 0.0 1.0
b1 = -1.0 0.0
h2 = 0.0 1.0
y2 = 2.0

[algorithm]
name = dadmm
rho = 1.0
eta = 0.5
rounds = 400

[output]
dir = {out}
"""
        path = write(tmp_path, text, name="quad.ini")
        cfg = parse_config(text)
        assert parse_config(serialize_config(cfg)) == cfg  # mixed-row round-trip
        assert cli.main(["run", path, "--verify"]) == 0
        with open(out / "trace.csv") as fh:
            last = list(csv.DictReader(fh))[-1]
        assert float(last["consensus_resid"]) < 1e-6
        assert abs(float(last["obj_err"])) < 1e-9

    def test_missing_config_is_setup_error(self, tmp_path, capsys):
        assert cli.main(["run", str(tmp_path / "nope.ini")]) == 1
        assert "nope.ini" in capsys.readouterr().err

    def test_dump_operators(self, tmp_path):
        out = tmp_path / "ops"
        path = write(tmp_path, EXPLICIT_INI.format(out=out))
        assert cli.main(["run", path, "--dump-operators"]) == 0
        lap = np.loadtxt(out / "laplacian.csv", delimiter=",")
        np.testing.assert_allclose(lap, [[2, -2, 0], [-2, 4, -2], [0, -2, 2]])


class TestTraceFile:
    def read_rows(self, out):
        with open(os.path.join(out, "trace.csv")) as fh:
            return list(csv.DictReader(fh))

    def test_header_and_k0_fields(self, tmp_path):
        out = str(tmp_path / "t")
        path = write(tmp_path, BASE_INI.format(out=out))
        assert cli.main(["run", path, "--verify"]) == 0
        rows = self.read_rows(out)
        assert rows[0]["k"] == "0"
        assert rows[0]["contraction_ratio"] == ""
        assert rows[0]["messages"] == "0"
        assert rows[1]["contraction_ratio"] != ""
        assert all(r["messages"] == rows[1]["messages"] for r in rows[1:])

    def test_delta_column_constant(self, tmp_path):
        out = str(tmp_path / "t2")
        path = write(tmp_path, BASE_INI.format(out=out))
        cli.main(["run", path, "--verify"])
        rows = self.read_rows(out)
        deltas = {r["delta_bound"] for r in rows}
        assert len(deltas) == 1

    def test_verification_columns_empty_without_verify(self, tmp_path):
        out = str(tmp_path / "t3")
        path = write(tmp_path, BASE_INI.format(out=out))
        cli.main(["run", path])
        rows = self.read_rows(out)
        assert all(r["u_dist_H_sq"] == "" for r in rows)
        assert all(r["delta_bound"] == "" for r in rows)

    def test_byte_identical_reruns(self, tmp_path):
        path = write(tmp_path, BASE_INI.format(out=tmp_path / "A"))
        cli.main(["run", path, "--verify"])
        path2 = write(tmp_path, BASE_INI.format(out=tmp_path / "B"), name="exp2.ini")
        cli.main(["run", path2, "--verify"])
        a = (tmp_path / "A" / "trace.csv").read_bytes()
        b = (tmp_path / "B" / "trace.csv").read_bytes()
        assert a == b

    def test_seed_flag_changes_instance(self, tmp_path):
        path = write(tmp_path, BASE_INI.format(out=tmp_path / "A"))
        cli.main(["run", path])
        path2 = write(tmp_path, BASE_INI.format(out=tmp_path / "B"), name="e2.ini")
        cli.main(["run", path2, "--seed", "99"])
        a = (tmp_path / "A" / "trace.csv").read_bytes()
        b = (tmp_path / "B" / "trace.csv").read_bytes()
        assert a != b


class TestVerifiedRuns:
    def test_pextra_verify_requires_matching_weights(self, tmp_path):
        text = BASE_INI.format(out=tmp_path / "o")
        text = text.replace("name = dadmm", "name = pextra")
        text = text.replace("[algorithm]", "[algorithm]\nxi = 0.04")
        path = write(tmp_path, text)
        assert cli.main(["run", path, "--verify"]) == 1  # pi is not theorem2

    def test_pextra_verify_with_theorem2_passes(self, tmp_path):
        out = tmp_path / "p"
        text = BASE_INI.format(out=out)
        text = text.replace("name = dadmm", "name = pextra")
        text = text.replace("pi = 0", "pi = theorem2")
        text = text.replace("[algorithm]", "[algorithm]\nxi = 0.04")
        path = write(tmp_path, text)
        assert cli.main(["run", path, "--verify"]) == 0
        assert (out / "certificate.txt").exists()

    def test_overshoot_pextra_verify_passes(self, tmp_path):
        out = tmp_path / "ov"
        text = BASE_INI.format(out=out)
        text = text.replace("name = dadmm", "name = pextra")
        text = text.replace("pi = 0", "pi = theorem2")
        text = text.replace("[algorithm]", "[algorithm]\nxi = 0.04\nomega = 0.75")
        path = write(tmp_path, text)
        assert cli.main(["run", path, "--verify"]) == 0

    def test_contraction_violation_exit_code(self, tmp_path, monkeypatch):
        # wire check: a violating report must surface as exit code 2
        real = cli.analysis.verify_contraction

        def fake(*args, **kwargs):
            report = real(*args, **kwargs)
            return cli.analysis.ContractionReport(
                distances=report.distances, bound=report.bound,
                slack=report.slack, violations=((1, 1.0, 0.5),),
                worst_ratio=report.worst_ratio,
            )

        monkeypatch.setattr(cli.analysis, "verify_contraction", fake)
        path = write(tmp_path, BASE_INI.format(out=tmp_path / "v"))
        assert cli.main(["run", path, "--verify"]) == 2


class TestCentralAlgorithms:
    @pytest.mark.parametrize("name", ["dadmm-matrix", "full-admm", "mm-exact", "mm-approx"])
    def test_each_runs_and_verifies(self, name, tmp_path):
        out = tmp_path / name
        text = BASE_INI.format(out=out).replace("name = dadmm", f"name = {name}")
        path = write(tmp_path, text, name=f"{name}.ini")
        assert cli.main(["run", path, "--verify"]) == 0
        with open(out / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert all(r["messages"] == "0" for r in rows)

    def test_general_uv_runs_on_network(self, tmp_path):
        out = tmp_path / "uv"
        text = BASE_INI.format(out=out).replace("name = dadmm", "name = general-uv")
        path = write(tmp_path, text, name="uv.ini")
        assert cli.main(["run", path, "--verify"]) == 0
        with open(out / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert all(r["messages"] != "0" for r in rows[1:])

    def test_general_uv_matches_dadmm(self, tmp_path):
        out = tmp_path / "uvc"
        path = write(tmp_path, BASE_INI.format(out=out))
        assert cli.main(["run", path, "--compare", "dadmm,general-uv"]) == 0
        with open(out / "compare.csv") as fh:
            gaps = [float(r[1]) for r in list(csv.reader(fh))[1:]]
        assert max(gaps) <= 1e-9


def test_env_tolerance_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DECON_OPT_TOL", "1e-6")
    from deconopt import tolerances
    tol = tolerances.from_env()
    assert tol.subproblem == 1e-6
    monkeypatch.setenv("DECON_OPT_TOL", "bogus")
    with pytest.raises(ConfigError):
        tolerances.from_env()
    monkeypatch.setenv("DECON_OPT_TOL", "-2")
    with pytest.raises(ConfigError):
        tolerances.from_env()
