import csv

import numpy as np
import pytest
from scipy import stats

from dcebhm import sampler
from dcebhm.hierarchy import ModelState, StudyLayout
from dcebhm.sampler import (ChainSamples, McmcConfig, adapt_proposals, effects_conditional,
                            effects_design, gibbs_effects_block, gibbs_patient_variances,
                            initial_state, mh_voxel_psi, mh_vp,
                            noise_variance_conditional, patient_variance_conditional, run_chain,
                            voxel_variance_conditional)
from dcebhm.studyio import SimulationSpec, simulate_study


def test_config_defaults_and_validation():
    c = McmcConfig()
    assert (c.burn_in, c.iterations, c.thin, c.n_draws) == (10_000, 100_000, 100, 1000)
    with pytest.raises(ValueError):
        McmcConfig(iterations=10, thin=20)
    with pytest.raises(ValueError):
        McmcConfig(target_accept=(0.6, 0.4))
    with pytest.raises(ValueError):
        McmcConfig(burn_in=-1)


def test_effects_design_rows():
    W = effects_design(StudyLayout(np.array([[1, 1], [1, 1]])))
    np.testing.assert_array_equal(W, [[1, 0, 1, 0, 0, 0], [1, 0, 0, 1, 0, 0],
                                      [1, 1, 1, 0, 1, 0], [1, 1, 0, 1, 0, 1]])


def test_effects_block_matches_dense_oracle():
    """J = 1, one voxel per scan, all variances 1: ridge normal equations via lstsq."""
    layout = StudyLayout(np.array([[1], [1]]))
    state = ModelState.zeros(layout)
    state.psi[:] = [[0.3, -1.2], [-0.4, 0.7]]
    X = np.array([[1, 0, 1, 0], [1, 1, 1, 1]], dtype=float)
    A = np.vstack([X, np.diag([0, 0, 1.0, 1.0])])
    for l in range(2):
        V, m = effects_conditional(state, l)
        b = np.concatenate([state.psi[:, l], np.zeros(4)])
        mean_ref = np.linalg.lstsq(A, b, rcond=None)[0]
        cov_ref = np.linalg.pinv(A.T @ A)
        np.testing.assert_allclose(np.linalg.solve(V, m), mean_ref, atol=1e-10)
        np.testing.assert_allclose(np.linalg.inv(V), cov_ref, atol=1e-10)


def test_effects_block_tiny_voxel_variance_follows_psi():
    layout = StudyLayout(np.array([[1], [1]]))
    state = ModelState.zeros(layout)
    state.psi[:] = [[0.3, -1.2], [-0.4, 0.7]]
    state.tau2_eps[:] = 1e-12
    rng = np.random.default_rng(0)
    for l in range(2):
        gibbs_effects_block(state, l, rng)
    np.testing.assert_allclose(state.group_means()[:, 0], state.psi, atol=1e-4)


def test_patient_variance_examples():
    layout = StudyLayout(np.array([[1], [1]]))
    state = ModelState.zeros(layout)
    shape, scale_g, _ = patient_variance_conditional(state)
    assert shape == 1.5 and np.all(scale_g == 1.0)
    assert scale_g[0, 0] / (shape - 1) == 2.0

    state.gamma[:] = 1.0
    rng = np.random.default_rng(1)
    n = 10**6
    draws = np.empty(n)
    shape, scale_g, _ = patient_variance_conditional(state)
    draws = scale_g[0, 0] / rng.standard_gamma(shape, n)
    prec = 1 / draws
    # 1/tau2 ~ Gamma(shape 1.5, rate 1.5)
    ref = stats.gamma(1.5, scale=1 / 1.5)
    assert abs(prec.mean() - ref.mean()) < 3 * ref.std() / np.sqrt(n)


def test_gibbs_patient_variances_uses_conditional():
    layout = StudyLayout(np.array([[1], [1]]))
    state = ModelState.zeros(layout)
    state.gamma[:] = 1.0
    rng = np.random.default_rng(7)
    draws = []
    for _ in range(20000):
        gibbs_patient_variances(state, rng)
        draws.append(state.tau2_gamma[0, 0])
    assert stats.kstest(draws, stats.invgamma(1.5, scale=1.5).cdf).statistic < 0.015


def test_voxel_variance_examples():
    layout = StudyLayout(np.array([[10], [1]]))
    state = ModelState.zeros(layout)
    shape, scale = voxel_variance_conditional(state)
    assert shape[0, 0, 0] == 6.0 and scale[0, 0, 0] == 1e-5
    state.psi[10, 1] = 0.3
    shape, scale = voxel_variance_conditional(state)
    assert shape[1, 0, 1] == 1.5
    assert scale[1, 0, 1] == pytest.approx(1e-5 + 0.045)


def test_noise_variance_examples():
    spec = SimulationSpec(n_patients=1, n_voxels=1, n_times=5, sigma2=0.0)
    data, truth = simulate_study(spec, seed=0)
    # zero residuals at the generating state
    shape, scale = noise_variance_conditional(truth.state, data)
    np.testing.assert_allclose(shape, [[3.5], [3.5]])
    np.testing.assert_allclose(scale, [[1e-2], [1e-2]], atol=1e-15)
    # one residual r on a single observed point
    from dcebhm.kinetics import TimeGrid
    from dcebhm.studyio import StudyData
    one = StudyData(data.layout, data.aif, [[TimeGrid([-1.0, 0.0])]] * 2,
                    [[np.array([[0.0, 0.0]])], [np.array([[0.0, 0.0]])]])
    state = truth.state.copy()
    state.vp[:] = 0.0
    one.curves[0][0][0, 1] = 0.7
    shape, scale = noise_variance_conditional(state, one)
    assert shape[0, 0] == 2.0   # two frames here; the pre-injection one has zero residual
    assert scale[0, 0] == pytest.approx(1e-2 + 0.7 ** 2 / 2)


def test_mh_identity_proposal_always_accepts(small_study):
    data, truth = small_study
    state = truth.state.copy()
    state.sigma2[:] = 0.01
    rng = np.random.default_rng(0)
    acc = mh_voxel_psi(state, data, 0.0, rng)
    assert acc.all()
    assert mh_vp(state, data, 0.0, rng).all()


def test_mh_flat_target_accepts_tiny_steps(small_study):
    data, truth = small_study
    state = truth.state.copy()
    state.tau2_eps[:] = 1e12
    state.sigma2[:] = 1e12
    rng = np.random.default_rng(0)
    acc = np.mean([mh_voxel_psi(state, data, 1e-6, rng).mean() for _ in range(50)])
    assert acc > 0.999


def test_mh_vp_data_free_mean(small_study):
    data, truth = small_study
    state = truth.state.copy()
    state.sigma2[:] = 1e12
    rng = np.random.default_rng(2)
    vals = []
    for it in range(20000):
        mh_vp(state, data, 2.0, rng)
        if it >= 1000:
            vals.append(state.vp.copy())
    assert np.mean(vals) == pytest.approx(0.05, abs=0.004)


def test_mh_subset_only_touches_selected(small_study):
    data, truth = small_study
    state = truth.state.copy()
    before = state.psi.copy()
    rng = np.random.default_rng(5)
    for _ in range(20):
        mh_voxel_psi(state, data, 0.05, rng, voxels=np.array([1, 4]))
    changed = np.any(state.psi != before, axis=1)
    assert not changed[[0, 2, 3, 5, 6, 7, 8, 9, 10, 11]].any()
    assert changed[[1, 4]].all()


def test_adapt_proposals_examples():
    np.testing.assert_allclose(adapt_proposals([0.4], [1.0]), [1.0])
    np.testing.assert_allclose(adapt_proposals([0.8], [1.0]), [1.1])
    np.testing.assert_allclose(adapt_proposals([0.1], [1.0]), [0.9])
    np.testing.assert_allclose(adapt_proposals([0.8, 0.1], [[1.0, 2.0], [1.0, 2.0]]),
                               [[1.1, 2.2], [0.9, 1.8]])


def test_adaptation_only_during_burn_in(small_study, monkeypatch):
    data, _ = small_study
    calls = []
    real = sampler.adapt_proposals

    def spy(*args, **kw):
        calls.append(1)
        return real(*args, **kw)

    monkeypatch.setattr(sampler, "adapt_proposals", spy)
    run_chain(McmcConfig(burn_in=300, iterations=500, thin=50, seed=1), data, initial_state(data))
    assert len(calls) == 2 * (300 // 100)


def test_thinning_arithmetic(small_study):
    data, _ = small_study
    chain = run_chain(McmcConfig(burn_in=0, iterations=100, thin=100), data, initial_state(data))
    assert chain.n_draws == 1
    chain = run_chain(McmcConfig(burn_in=10, iterations=90, thin=20), data, initial_state(data))
    assert chain.n_draws == 4


def test_run_chain_rejects_bad_init(small_study):
    data, _ = small_study
    other = StudyLayout(np.array([[1, 1], [1, 1]]))
    with pytest.raises(ValueError):
        run_chain(McmcConfig(burn_in=0, iterations=10, thin=1), data, ModelState.zeros(other))
    init = initial_state(data)
    init.sigma2[0, 0] = -1.0
    with pytest.raises(ValueError):
        run_chain(McmcConfig(burn_in=0, iterations=10, thin=1), data, init)


def test_initial_state_uses_pre_injection_variance(small_study):
    data, _ = small_study
    state = initial_state(data)
    pre = data.curves[0][0][:, data.grids[0][0].times < 0]
    assert state.sigma2[0, 0] == pytest.approx(np.mean(np.var(pre, axis=1, ddof=1)))
    np.testing.assert_allclose(state.alpha, [np.log(0.2), 0.0])
    np.testing.assert_allclose(state.epsilon(), 0.0)


def test_chain_file_round_trip(tmp_path, small_study):
    data, _ = small_study
    chain = run_chain(McmcConfig(burn_in=50, iterations=100, thin=10, seed=3), data, initial_state(data))
    path = chain.save(tmp_path / "c.csv")
    back = ChainSamples.load(path)
    for name, arr in chain.draws.items():
        np.testing.assert_array_equal(back.draws[name], arr)
    assert back.config == chain.config
    assert back.acceptance == chain.acceptance
    header = next(csv.reader(path.open()))
    assert header[:2] == ["alpha[1]", "alpha[2]"]
    assert header[-1] == "psi[2,2,3,2]"
    np.testing.assert_allclose(chain.epsilon()[0], chain.state(0).epsilon())


def test_stationarity_from_truth():
    """Started at the generating state, the posterior mean of alpha_1 stays near the truth."""
    data, truth = simulate_study(SimulationSpec(n_patients=3, n_voxels=10, n_times=20), seed=21)
    init = truth.state.copy()
    chain = run_chain(McmcConfig(burn_in=500, iterations=3000, thin=10, seed=4), data, init)
    a = chain.alpha[:, 0]
    assert abs(a.mean() - truth.state.alpha[0]) < 3 * a.std()
