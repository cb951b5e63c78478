import itertools
import json
import math
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from conftest import make_panel
from panelfe.cli import build_parser, main, spec_from_args

SCALARS = {"N", "N_drop", "N_group_drop", "N_time_drop", "N_group", "T_min", "T_avg", "T_max",
           "k", "df_m", "r2_p", "chi2", "p", "ll", "ll_0", "fpc", "rankV", "rankV2"}
MACROS = {"cmd", "cmdline", "depvar", "title", "title1", "title2", "title3", "chi2type", "id",
          "time", "properties"}


@pytest.fixture(scope="module")
def csv_path(tmp_path_factory):
    panel = make_panel(16, 12, seed=4)
    i, t = np.nonzero(panel.mask)
    df = pd.DataFrame({"firm": i + 1, "year": panel.periods[t], "y": panel.y[i, t],
                       "x1": panel.X[i, t, 0], "x2": panel.X[i, t, 1]})
    path = tmp_path_factory.mktemp("cli") / "panel.csv"
    df.to_csv(path, index=False)
    return path


def base(csv_path):
    return ["fit", "--data", str(csv_path), "--id", "firm", "--time", "year", "--depvar", "y",
            "--indepvars", "x1,x2"]


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


class TestUsage:
    @pytest.mark.parametrize("extra,flag", [
        (["--ieffects", "no", "--teffects", "no"], "--teffects"),
        (["--ibias", "no", "--tbias", "no"], "--tbias"),
        (["--analytical", "--jackknife"], "--jackknife"),
        (["--jk-variant", "jj"], "--jk-variant"),
        (["--jackknife", "--jk-variant", "jj", "--multiple", "3"], "--multiple"),
        (["--jackknife", "--multiple-dim", "time"], "--multiple-dim"),
        (["--jackknife", "--lags", "1"], "--lags"),
        (["--family", "probit", "--emulate", "logitfe"], "--emulate"),
        (["--population", "-3"], "--population"),
        (["--ieffects", "maybe"], "--ieffects"),
    ])
    def test_exit_2_names_flag(self, csv_path, capsys, extra, flag):
        with pytest.raises(SystemExit) as exc:
            main(base(csv_path) + extra)
        assert exc.value.code == 2
        assert flag in capsys.readouterr().err

    def test_population_below_sample_size(self, csv_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(base(csv_path) + ["--population", "10"])
        assert exc.value.code == 2

    def test_estimation_error_exits_1(self, csv_path, capsys):
        argv = base(csv_path)
        argv[argv.index("x1,x2")] = "x1,nosuch"
        code, out = run(argv, capsys)
        assert code == 1 and "nosuch" in out.err

    def test_bad_env_seed(self, csv_path, capsys, monkeypatch):
        monkeypatch.setenv("PANELFE_SEED", "abc")
        with pytest.raises(SystemExit) as exc:
            main(base(csv_path) + ["--jackknife"])
        assert exc.value.code == 2


class TestSpecMapping:
    def parse(self, extra):
        return spec_from_args(build_parser().parse_args(
            ["fit", "--data", "d", "--id", "i", "--time", "t", "--depvar", "y",
             "--indepvars", "x"] + extra))

    def test_defaults(self):
        s = self.parse([])
        assert (s.family, s.correction, s.lags_L, s.include_ieffects, s.include_teffects,
                s.ibias, s.tbias) == ("logit", "analytical", 0, True, True, True, True)
        assert math.isinf(s.population_M)
        assert self.parse(["--jackknife"]).jk_variant == "ss2"

    def test_emulate_sets_family(self):
        assert self.parse(["--emulate", "probitfe"]).family == "probit"

    def test_injective(self):
        options = [
            [[], ["--family", "probit"]],
            [["--nocorrection"], ["--analytical", "--lags", "2"], ["--jackknife"],
             ["--jackknife", "--jk-variant", "jj"],
             ["--jackknife", "--jk-variant", "ss1", "--multiple", "4", "--multiple-dim", "time"]],
            [[], ["--teffects", "no"], ["--ieffects", "no"]],
            [[], ["--population", "5000"]],
        ]
        specs = [self.parse(sum(combo, [])) for combo in itertools.product(*options)]
        assert len(set(specs)) == len(specs)


class TestOutputs:
    def test_saved_results_fields_and_table(self, csv_path, capsys, tmp_path):
        out = tmp_path / "res.json"
        code, io = run(base(csv_path) + ["--population", "1000", "--out", str(out)], capsys)
        assert code == 0
        saved = json.loads(out.read_text())
        assert set(saved["scalars"]) == SCALARS
        assert set(saved["macros"]) == MACROS
        assert set(saved["matrices"]) == {"b", "V", "b2", "V2"}
        assert saved["macros"]["cmdline"].startswith("panelfe fit --data")
        assert "--out" not in saved["macros"]["cmdline"]
        b = saved["matrices"]["b"]["values"][0]
        V = np.array(saved["matrices"]["V"]["values"])
        b2 = saved["matrices"]["b2"]["values"][0]
        # the coefficient table comes first, the APE table reuses the names later
        coef_lines = [l.split() for l in io.out.splitlines() if l.startswith(("x1 ", "x2 "))]
        for k, cols in enumerate(coef_lines[:2]):
            assert float(cols[1]) == pytest.approx(b[k], abs=5e-5)
            assert float(cols[2]) == pytest.approx(math.sqrt(V[k, k]), abs=5e-5)
        for k, cols in enumerate(coef_lines[2:4]):
            assert float(cols[1]) == pytest.approx(b2[k], abs=5e-5)
            assert float(cols[3]) == pytest.approx(
                math.sqrt(saved["matrices"]["V2"]["values"][k][k]), abs=5e-5)
        assert saved["scalars"]["fpc"] < 1

    def test_float_round_trip(self, csv_path, capsys, tmp_path):
        out = tmp_path / "res.json"
        run(base(csv_path) + ["--out", str(out)], capsys)
        text = out.read_text()
        again = json.dumps(json.loads(text), indent=2) + "\n"
        assert again == text

    def test_deterministic_jackknife(self, csv_path, capsys, tmp_path):
        extra = ["--jackknife", "--jk-variant", "ss2", "--multiple", "10", "--multiple-dim",
                 "time", "--seed", "7"]
        docs = []
        for k, jobs in enumerate(["1", "1", "2"]):
            path = tmp_path / f"r{k}.json"
            code, io = run(base(csv_path) + extra + ["--jobs", jobs, "--out", str(path)], capsys)
            assert code == 0
            docs.append((path.read_bytes(), io.out))
        assert docs[0] == docs[1] == docs[2]

    def test_env_seed_matches_flag(self, csv_path, capsys, tmp_path, monkeypatch):
        extra = ["--jackknife", "--jk-variant", "ss1", "--multiple", "3"]
        code, a = run(base(csv_path) + extra + ["--seed", "5"], capsys)
        monkeypatch.setenv("PANELFE_SEED", "5")
        code, b = run(base(csv_path) + extra, capsys)
        assert a.out == b.out

    def test_emulate_title(self, csv_path, capsys):
        code, io = run(base(csv_path) + ["--emulate", "probitfe", "--nocorrection"], capsys)
        assert code == 0 and io.out.startswith("probitfe: probit model")

    def test_module_entry_point(self, csv_path):
        proc = subprocess.run([sys.executable, "-m", "panelfe", *base(csv_path),
                               "--nocorrection"], capture_output=True, text=True)
        assert proc.returncode == 0 and "Coef." in proc.stdout


def test_simulate_smoke(capsys, tmp_path):
    out = tmp_path / "mc.csv"
    code, io = run(["simulate", "--sizes", "20", "--reps", "3", "--estimators", "fe,an0",
                    "--seed", "1", "--out", str(out)], capsys)
    assert code == 0
    table = pd.read_csv(out)
    assert set(table["estimator"]) == {"fe", "an0"}
    assert (table["n_ok"] + table["n_failed"] == 3).all()
