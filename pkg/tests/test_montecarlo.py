import numpy as np
import pytest

from mlrd_toolkit.app.schemas import load_config, parse_config
from mlrd_toolkit.common.errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    HypothesisError,
    OrderingError,
)
from mlrd_toolkit.experiments.kinds import Experiment
from mlrd_toolkit.experiments.montecarlo import (
    run_autocov,
    run_clt,
    run_experiment,
    run_fclt,
    run_subordination,
)

LINEAR = {
    "kind": "linear_lrd",
    "dimension": 2,
    "memory": {"values": [0.4, 0.2]},
    "a_plus": [[1.0, 0.0], [0.0, 1.0]],
    "a_minus": [[1.0, 0.0], [0.0, 1.0]],
}
GAUSSIAN_OPERATOR = {"kind": "gaussian_diagonal", "dimension": 2, "memory": {"values": [0.2, 0.1]}, "r_diag": [0.5, 0.5]}


def _config(**fields):
    base = {"seed": 17, "replications": 200}
    base.update(fields)
    return parse_config(base)


def _by_label(items, label):
    return next(item for item in items if item.label == label)


def test_clt_report_shape_and_thread_independence():
    config = _config(experiment="clt", **LINEAR, n=128)
    one = run_clt(config, threads=1)
    three = run_clt(config, threads=3)
    assert one.digest == three.digest
    assert one.report_json() == three.report_json()
    assert one.experiment == Experiment.CLT
    cov = _by_label(one.comparisons, "normalized_covariance")
    assert cov.passed
    assert [s.label for s in one.normality] == ["coordinate_1", "coordinate_2"]
    assert "sigma_inv" in one.normalizers
    assert one.diagnostics["route_gap"] <= 1e-8
    assert set(one.timing.stages_ms) == {"prepare", "replicate", "evaluate", "report"}
    assert "threads" not in one.config


def test_clt_white_noise_covariance():
    report = run_clt(_config(kind="white_noise", dimension=2, n=64))
    assert _by_label(report.comparisons, "normalized_covariance").passed
    np.testing.assert_allclose(report.normalizers["sigma_inv"], np.eye(2) / 8.0)


def test_seed_changes_digest():
    a = run_clt(_config(kind="white_noise", dimension=1, n=16, seed=1))
    b = run_clt(_config(kind="white_noise", dimension=1, n=16, seed=2))
    assert a.digest != b.digest


def test_experiment_selection_errors():
    config = _config(experiment="clt", kind="white_noise", dimension=1, n=16)
    with pytest.raises(ConfigurationError):
        run_fclt(config)
    with pytest.raises(ConfigurationError):
        run_experiment(_config(kind="white_noise", dimension=1, n=16))


def test_ordering_violation_is_rejected(configs_dir):
    with pytest.raises(OrderingError) as exc:
        run_clt(load_config(configs_dir / "bad_ordering.json"))
    assert exc.value.to_payload()["error"] == "ordering_violation"


def test_fclt_structure():
    report = run_fclt(_config(**LINEAR, n=128, grid=[0.0, 0.5, 1.0]))
    origin = _by_label(report.comparisons, "cross_cov(t=0,u=0)")
    assert origin.passed and origin.max_abs == 0.0
    assert len(report.comparisons) == 6
    for label in ("ofbm_self_similarity", "ofbm_stationary_increments"):
        assert _by_label(report.checks, label).passed
    assert {c.label for c in report.checks} >= {"scaling_ratio_1", "scaling_ratio_2", "variance_order"}
    assert report.flags["finite_n_calibration"] is True
    assert "A_asymptotic" in report.normalizers


def test_fclt_asymptotic_form_is_graded():
    report = run_fclt(_config(**LINEAR, n=128, grid=[0.5, 1.0]))
    form = _by_label(report.checks, "asymptotic_form_gap")
    assert form.bound == 0.2 and form.relation == "<="
    assert form.value == report.diagnostics["asymptotic_form_gap"]
    assert form.passed == (form.value <= 0.2)

    strict = run_fclt(_config(**LINEAR, n=128, grid=[0.5, 1.0], tolerances={"asymptotic_form": 1e-12}))
    assert not _by_label(strict.checks, "asymptotic_form_gap").passed
    assert not strict.passed


def test_fclt_without_calibration_uses_limiting_form():
    config = _config(**LINEAR, n=128, grid=[0.5, 1.0], normalization={"finite_n_calibration": False})
    report = run_fclt(config)
    assert report.flags["finite_n_calibration"] is False
    assert report.normalizers["A_n"] == report.normalizers["A_asymptotic"]
    assert _by_label(report.checks, "asymptotic_form_gap").value > 0.0
    assert len(report.comparisons) == 3


def test_subordination_without_calibration_uses_limiting_form():
    config = _config(**GAUSSIAN_OPERATOR, n=256, subordination={"functions": ["hermite2"]},
                     normalization={"finite_n_calibration": False})
    report = run_subordination(config)
    assert report.flags["finite_n_calibration"] is False
    assert report.normalizers["A_n"] == report.normalizers["A_asymptotic"]
    form = _by_label(report.checks, "asymptotic_form_gap")
    assert form.value == report.diagnostics["asymptotic_form_gap"]
    assert form.bound == 0.2


def test_fclt_needs_linear_spec():
    with pytest.raises(ContractError):
        run_fclt(_config(**GAUSSIAN_OPERATOR, n=64))


def test_subordination_rank_two():
    config = _config(**GAUSSIAN_OPERATOR, n=256, subordination={"functions": ["hermite2"]})
    report = run_subordination(config)
    assert report.diagnostics["tau"] == 2
    assert report.flags["limit_law_surrogate"] is True
    assert report.normality == []
    assert len(report.comparisons) == 3
    assert report.comparisons[2].note
    tail = _by_label(report.checks, "reduction_tail_ratio")
    assert tail.passed and tail.note


def test_subordination_function_override():
    config = _config(**GAUSSIAN_OPERATOR, n=128, subordination={"functions": ["hermite2"]})
    report = run_subordination(config, G=[lambda x: x, lambda x: x + x ** 3])
    assert report.diagnostics["tau"] == 1
    assert len(report.normality) == 2
    with pytest.raises(HypothesisError):
        run_subordination(config, G=[lambda x: x, np.square])


def test_subordination_hypotheses(linear_spec):
    long_memory = _config(kind="gaussian_diagonal", dimension=2, memory={"values": [0.3, 0.2]},
                          r_diag=[0.5, 0.5], n=64, subordination={"functions": ["hermite2"]})
    with pytest.raises(HypothesisError):
        run_subordination(long_memory)
    with pytest.raises(ContractError):
        run_subordination(_config(**LINEAR, n=64))


def test_autocov_white_noise_exact_variance():
    config = _config(kind="white_noise", dimension=1, n_list=[64, 128], lags=[0, 1])
    report = run_autocov(config)
    lag0 = _by_label(report.comparisons, "exact_variance(h=0,n=128)")
    assert lag0.target == [[2.0]]
    assert lag0.passed
    lag1 = _by_label(report.comparisons, "exact_variance(h=1,n=128)")
    assert lag1.target == [[1.0]]
    assert report.diagnostics["regime"] == "sqrt_n"
    assert len(report.normality) == 2


def test_autocov_regime_errors():
    mixed = _config(kind="gaussian_diagonal", dimension=2, memory={"values": [0.3, 0.2]}, r_diag=[0.5, 0.5], n=64)
    with pytest.raises(DomainError):
        run_autocov(mixed)
    forced = _config(**GAUSSIAN_OPERATOR, n=64, regime="sqrt_n")
    with pytest.raises(DomainError):
        run_autocov(forced)
    with pytest.raises(ContractError):
        run_autocov(_config(**LINEAR, n=64))


def test_autocov_operator_regime():
    config = _config(**GAUSSIAN_OPERATOR, n_list=[64, 128], lags=[0])
    report = run_autocov(config)
    assert report.diagnostics["regime"] == "operator"
    assert _by_label(report.checks, "cov_bound(p=q=0)").passed
    assert "B_inv(n=128)" in report.normalizers
    assert report.normality == []


@pytest.mark.slow
@pytest.mark.parametrize("name", [
    "clt_white_noise", "clt_linear", "fclt_linear", "subordination_hermite2", "autocov_sqrt_n", "autocov_operator",
])
def test_acceptance_fixture_passes(configs_dir, name):
    report = run_experiment(load_config(configs_dir / f"{name}.json"), threads=4)
    failed = [c.label for c in report.comparisons + report.checks + report.normality if not c.passed]
    assert report.passed, failed
