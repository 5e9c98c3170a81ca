import numpy as np
import pytest

from connprobit.data import Dataset
from connprobit.likelihood import loglik_only
from connprobit.optimize import BOUNDARY, FitOptions, RankDeficiencyError, fit, grad_tolerance
from connprobit.simulate import DgpConfig, simulate, true_params
from connprobit.spec import BaselineVarSpec, BiasSpec, InfoSpec, ModelSpec, ThresholdSpec

HOMOSCEDASTIC = ModelSpec(bias=BiasSpec("none"), info=InfoSpec("none"),
                          baseline=BaselineVarSpec("homoscedastic"),
                          threshold=ThresholdSpec("grouped_effects", ()), include_expected=False)


def _plain_probit_data(seed, n_exams=100, per_exam=100):
    cfg = DgpConfig(n_exams=n_exams, candidates_per_exam=per_exam, m=2, beta=(0.5, -0.3),
                    ties_strong_mean=0.0, ties_weak_mean=0.0, bias_variant="none",
                    bias_params={}, info_variant="none", n_group_covariates=0,
                    a_true=(0.2,), seed=seed)
    return simulate(cfg)[0]


def test_homoscedastic_recovery_monte_carlo():
    # truth: beta = (0.5, -0.3), threshold 0.2; n = 10,000 per replication
    est = []
    for r in range(100):
        res = fit(HOMOSCEDASTIC, _plain_probit_data(1000 + r))
        assert res.converged
        est.append(res.params_hat.values)
    est = np.array(est)
    truth = np.array([0.5, -0.3, 0.2])
    mc_se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - truth) <= 3 * mc_se)


def test_init_at_truth(medium_sim):
    ds, truth = medium_sim
    res0 = fit(truth.spec, ds)
    res = fit(truth.spec, ds, init=res0.params_hat)
    assert res.converged and res.iterations <= 3
    direct = loglik_only(truth.spec.compile(ds), res.params_hat.values)
    assert abs(res.loglik - direct) < 1e-8


def test_converged_means_small_gradient(medium_sim):
    ds, _ = medium_sim
    for k in (6, 7, 8):
        res = fit(ModelSpec.model(k), ds)
        assert res.converged
        assert res.gradient_norm < grad_tolerance(res.loglik, res.n_obs, 1e-6)
        assert res.loglik >= res.history[0]


def test_separated_data_flagged():
    x = np.array([-1.0, -1.0, 1.0, 1.0, -1.0, 1.0])
    ds = Dataset(y=(x > 0).astype(int), X=x[:, None], n_strong=[0] * 6, n_weak=[0] * 6,
                 e_strong=[0.0] * 6, e_weak=[0.0] * 6, exam=[0, 0, 0, 1, 1, 1],
                 exam_ids=["A", "B"], Z=np.zeros((2, 0)), jury_size=[7, 7], positions=[1, 1],
                 observable_names=("x",))
    res = fit(HOMOSCEDASTIC.replace(threshold=ThresholdSpec("grouped_effects")), ds)
    assert res.condition_flag == BOUNDARY


def test_line_search_is_monotone(medium_sim):
    ds, _ = medium_sim
    res = fit(ModelSpec.model(8), ds)
    h = np.array(res.history)
    assert np.all(np.diff(h) >= -1e-10 * np.abs(h[1:]))


def test_permutation_invariance(medium_sim):
    ds, _ = medium_sim
    spec = ModelSpec.model(7)
    a = fit(spec, ds).params_hat.values
    perm = np.random.default_rng(0).permutation(len(ds))
    b = fit(spec, ds.subset(perm)).params_hat.values
    assert np.max(np.abs(a - b)) < 1e-6


def test_staged_start_not_worse_than_cold(medium_sim):
    ds, _ = medium_sim
    spec = ModelSpec.model(8)
    warm = fit(spec, ds)
    cold = fit(spec, ds, options=FitOptions(stages=("full",)))
    assert warm.loglik >= cold.loglik - 1e-8


def test_deterministic(medium_sim):
    ds, _ = medium_sim
    a, b = fit(ModelSpec.model(6), ds), fit(ModelSpec.model(6), ds)
    assert np.array_equal(a.params_hat.values, b.params_hat.values)
    assert a.loglik == b.loglik


def test_rank_deficiency_names_columns(small_sim):
    ds, _ = small_sim
    X = ds.X.copy()
    X[:, 2] = 2 * X[:, 0]
    with pytest.raises(RankDeficiencyError) as e:
        fit(ModelSpec.model(6), ds.replace(X=X))
    assert set(e.value.columns) & {"x1", "x3"}


def test_fixed_effects_with_block_alternation():
    ds, _ = simulate(DgpConfig(n_exams=80, candidates_per_exam=40, seed=8,
                               info_mode="parametric", info_params={"delta_c": 0.2}))
    spec = ModelSpec.model(6, threshold=ThresholdSpec("fixed_effects"))
    res = fit(spec, ds)
    assert res.converged
    joint = fit(spec, ds, options=FitOptions(fe_block_min=10_000))
    assert joint.converged
    assert abs(res.loglik - joint.loglik) < 1e-6
    assert res.n_obs == len(ds.drop_degenerate_exams())


def test_fixed_effects_drop_degenerate_exams(small_sim):
    ds, _ = small_sim
    y = ds.y.copy()
    y[ds.exam == 0] = 0
    res = fit(ModelSpec.model(6, threshold=ThresholdSpec("fixed_effects")), ds.replace(y=y))
    assert res.dropped_exams >= 1
    assert len(res.params_hat.layout.block_names("threshold")) == ds.n_exams - res.dropped_exams


def test_no_outcome_variation(small_sim):
    from connprobit.optimize import FitError
    ds, _ = small_sim
    with pytest.raises(FitError):
        fit(ModelSpec.model(6), ds.replace(y=np.zeros(len(ds), dtype=int)))


def test_true_params_layout(small_sim):
    ds, truth = small_sim
    p = true_params(truth.config, ds)
    assert p["B"] == 0.2 and p["delta_c"] == 0.2
