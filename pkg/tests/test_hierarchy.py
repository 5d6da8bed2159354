import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from dcebhm.hierarchy import (LayoutError, ModelState, StudyLayout, design_row, log_prior_density,
                              psi_mean, scan_indicator, stacked_effects)

counts_strategy = st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6)), min_size=1, max_size=5)


def random_state(layout, rng):
    J, N = layout.n_patients, layout.n_voxels
    return ModelState(layout, alpha=rng.normal(size=2), beta=rng.normal(size=2),
                      gamma=rng.normal(size=(J, 2)), delta=rng.normal(size=(J, 2)),
                      psi=rng.normal(size=(N, 2)), tau2_gamma=rng.uniform(0.1, 2, (J, 2)),
                      tau2_delta=rng.uniform(0.1, 2, (J, 2)), tau2_eps=rng.uniform(0.1, 2, (2, J, 2)),
                      sigma2=rng.uniform(0.1, 2, (2, J)), vp=rng.uniform(0.01, 0.5, N))


@given(counts_strategy)
def test_flat_voxel_order(pairs):
    layout = StudyLayout(np.array(pairs).T)
    seen = []
    for i in (1, 2):
        for j in range(1, layout.n_patients + 1):
            sl = layout.voxel_slice(i, j)
            assert sl.stop - sl.start == layout.voxel_counts[i - 1, j - 1]
            assert np.all(layout.voxel_scan[sl] == i - 1)
            assert np.all(layout.voxel_patient[sl] == j - 1)
            seen.extend(range(sl.start, sl.stop))
            assert layout.voxel_index(i, j, 1) == sl.start
    assert seen == list(range(layout.n_voxels))


def test_layout_errors():
    with pytest.raises(LayoutError):
        StudyLayout(np.ones((3, 2)))
    with pytest.raises(LayoutError, match="scan 2, patient 1"):
        StudyLayout(np.array([[1, 1], [0, 1]]))
    layout = StudyLayout(np.array([[2], [3]]))
    with pytest.raises(LayoutError):
        layout.check(3, 1)
    with pytest.raises(LayoutError):
        layout.check(1, 2)
    with pytest.raises(LayoutError):
        layout.voxel_index(1, 1, 3)


def test_scan_indicator_and_design():
    assert scan_indicator(1) == 0.0 and scan_indicator(2) == 1.0
    with pytest.raises(LayoutError):
        scan_indicator(0)
    Z = design_row(2)
    assert Z.shape == (2, 8)
    np.testing.assert_array_equal(Z[:, :4], Z[:, 4:])


@given(st.integers(0, 10_000))
def test_psi_mean_is_design_times_effects(seed):
    rng = np.random.default_rng(seed)
    layout = StudyLayout(np.array([[2, 1, 3], [1, 2, 2]]))
    state = random_state(layout, rng)
    for i in (1, 2):
        for j in (1, 2, 3):
            np.testing.assert_allclose(psi_mean(i, j, state), design_row(i) @ stacked_effects(state, j))
            np.testing.assert_allclose(state.group_means()[i - 1, j - 1], psi_mean(i, j, state))
    np.testing.assert_allclose(state.psi_means() + state.epsilon(), state.psi)


def test_log_prior_matches_scipy(rng):
    layout = StudyLayout(np.array([[2, 1], [1, 3]]))
    s = random_state(layout, rng)
    eps = s.epsilon()
    tau_vox = s.tau2_eps.reshape(-1, 2)[layout.voxel_group]
    expected = (stats.norm.logpdf(s.gamma, scale=np.sqrt(s.tau2_gamma)).sum()
                + stats.norm.logpdf(s.delta, scale=np.sqrt(s.tau2_delta)).sum()
                + stats.norm.logpdf(eps, scale=np.sqrt(tau_vox)).sum()
                + stats.invgamma.logpdf(s.tau2_gamma, 1, scale=1).sum()
                + stats.invgamma.logpdf(s.tau2_delta, 1, scale=1).sum()
                + stats.invgamma.logpdf(s.tau2_eps, 1, scale=1e-5).sum()
                + stats.invgamma.logpdf(s.sigma2, 1, scale=1e-2).sum()
                + stats.beta.logpdf(s.vp, 1, 19).sum())
    assert log_prior_density(s) == pytest.approx(expected, rel=1e-12)


def test_state_shapes_validated():
    layout = StudyLayout(np.array([[1], [1]]))
    s = ModelState.zeros(layout)
    bad = {n: getattr(s, n) for n in ModelState.ARRAY_FIELDS}
    bad["psi"] = np.zeros((3, 2))
    with pytest.raises(LayoutError, match="psi"):
        ModelState(layout, **bad)
    s2 = s.copy()
    s2.alpha[0] = 5.0
    assert s.alpha[0] == 0.0
    s.tau2_eps[0, 0, 0] = 0.0
    with pytest.raises(ValueError):
        s.validate_support()
