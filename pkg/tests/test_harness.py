import json

import numpy as np
import pytest

from twoway_pwb.dgp import DgpSpec, generate
from twoway_pwb.drc import RegimeLabel
from twoway_pwb.exceptions import DataError, ExperimentAborted, PanelFormatError
from twoway_pwb.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    classification_accuracy,
    prepare_inference,
    run_experiment,
    run_inference,
    run_replicate,
)
from twoway_pwb.panel import PanelData, write_panel_csv


def _noiseless(n=6, t=5, k=3, seed=0):
    g = np.random.default_rng(seed)
    x = np.concatenate([np.ones((n, t, 1)), g.standard_normal((n, t, k - 1))], axis=-1)
    return PanelData(y=x.sum(axis=-1), x=x)


@pytest.mark.parametrize("method", ["pwb-d", "pwb-v", "pwb-h"])
def test_noiseless_panel_is_degenerate(method):
    rep = run_inference(_noiseless(), method=method, beta0=[1, 1, 1], b=99)
    assert rep["reject"] is False
    for lo, hi in rep["ci"]:
        assert lo == pytest.approx(1.0, abs=1e-12) and hi == pytest.approx(1.0, abs=1e-12)
    assert rep["q_fallback"] is True


def test_report_fields_are_json_ready(tmp_path):
    panel, _ = generate(DgpSpec("d1", 8, 9, k=3), np.random.default_rng(0))
    path = tmp_path / "p.csv"
    write_panel_csv(panel, path)
    rep = run_inference(str(path), b=99, seed=4)
    text = json.dumps(rep)
    for key in ("beta_hat", "ci", "reject", "regime", "ks_pvalues", "d_star",
                "variances", "q", "bandwidth", "draws_summary", "feasible_rate", "crve_se"):
        assert key in rep
    assert rep["variances"]["bandwidth"] == 1.0
    assert len(rep["regime"]["regime"]) == 3
    assert json.loads(text) == rep
    assert run_inference(str(path), b=99, seed=4) == rep
    crv = run_inference(panel, method="crve", b=99)
    assert "se" in crv and isinstance(crv["reject"], bool)


def test_inference_validation(tmp_path):
    panel = _noiseless()
    with pytest.raises(ValueError):
        run_inference(panel, method="oracle")
    with pytest.raises(ValueError):
        run_inference(panel, rho=[1, 1, 0])
    with pytest.raises(ValueError):
        run_inference(panel, beta0=[1, 1])
    bad = tmp_path / "dup.csv"
    bad.write_text("i,t,y,x1\n1,1,1.0,1.0\n1,2,2.0,1.0\n1,1,3.0,1.0\n2,1,1.0,1.0\n2,2,1.0,1.0\n")
    with pytest.raises(PanelFormatError) as err:
        run_inference(str(bad))
    assert "line 4" in str(err.value) and "i=1, t=1" in str(err.value)
    assert isinstance(err.value, DataError)


def test_inference_size_on_iid_panels():
    rejects = []
    for s in range(120):
        panel, beta = generate(DgpSpec("d3", 10, 10, k=2), np.random.default_rng([9, s]))
        rejects.append(run_inference(panel, method="pwb-v", beta0=beta, b=99, seed=s)["reject"])
    assert 0.0 <= np.mean(rejects) <= 0.12


def test_prepare_inference_q_override():
    panel, _ = generate(DgpSpec("d1", 6, 8), np.random.default_rng(0))
    assert prepare_inference(panel, q=0.3).q == 0.3
    with pytest.raises(ValueError):
        prepare_inference(panel, q=1.0)


def test_classification_accuracy_rules():
    assert classification_accuracy(["D"] * 4, "d1") == 1.0
    assert classification_accuracy([RegimeLabel.NonGaussian], "d2") == 1.0
    assert classification_accuracy([RegimeLabel.NonGaussian], "d4") == 1.0
    assert classification_accuracy(["VandG", "D"], "d3") == 0.5
    with pytest.raises(ValueError):
        classification_accuracy(["D"], "nonsep")
    with pytest.raises(ValueError):
        classification_accuracy([], "d1")


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(b=10, alpha=0.05)
    with pytest.raises(ValueError):
        ExperimentConfig(reps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("bogus",))
    with pytest.raises(ValueError):
        ExperimentConfig(designs=("hetero",), methods=("oracle",))
    with pytest.raises(ValueError):
        ExperimentConfig(grid=((2, 10),))
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"nope": 1})
    cfg = ExperimentConfig(designs=("spatial-sweep", "d1"), rho_d_grid=(0.0, 0.2))
    labels = [c.label for c in cfg.cells()]
    assert labels == ["spatial-sweep:rho_d=0", "spatial-sweep:rho_d=0.2", "d1"]


def _small_config(**kw):
    base = dict(designs=("d1", "d3"), grid=((6, 6),), b=99, reps=12,
                methods=("pwb-v", "pwb-h", "oracle", "crve"), seed=7)
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_table():
    table = run_experiment(_small_config())
    assert len(table.rows) == 8
    row = table.lookup("d1", 6, 6, "pwb-h")
    p = row["reject_freq"]
    assert 0 <= p <= 1 and row["mc_se"] == pytest.approx((p * (1 - p) / 12) ** 0.5)
    assert 0 <= row["drc_accuracy"] <= 1 and row["failures"] == 0
    header = table.to_csv().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    assert json.loads(table.to_json())["rows"][0]["design"] == "d1"


def test_experiment_is_byte_identical_across_runs_and_workers():
    a = run_experiment(_small_config()).to_csv()
    b = run_experiment(_small_config()).to_csv()
    c = run_experiment(_small_config(workers=2)).to_csv()
    assert a == b == c
    assert run_experiment(_small_config(seed=8)).to_csv() != a


def test_replicate_keyed_independently_of_method_list():
    cfg1 = _small_config(methods=("pwb-v",))
    cfg2 = _small_config(methods=("crve", "pwb-v"))
    c1, c2 = next(cfg1.cells()), next(cfg2.cells())
    assert run_replicate(c1, 3).reject["pwb-v"] == run_replicate(c2, 3).reject["pwb-v"]


def test_experiment_aborts_on_failures(monkeypatch):
    from twoway_pwb import harness
    from twoway_pwb.exceptions import SingularGram

    def boom(*a, **k):
        raise SingularGram("forced")

    monkeypatch.setattr(harness, "diagnostic_pass", boom)
    with pytest.raises(ExperimentAborted):
        run_experiment(_small_config(designs=("d1",)))
