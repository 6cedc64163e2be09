import numpy as np
import pytest

from toposculpt import (
    Connectivity,
    CurriculumConfig,
    OptimizerConfig,
    RefinementNumericalError,
    SkeletonParams,
    TibWeights,
    TopoPrior,
    ToposculptError,
    Volume,
    init_state,
    run,
    schedule_j,
    step,
)
from toposculpt.volume import sigmoid_array


def prob(arr):
    return Volume(np.asarray(arr, dtype=np.float64))


def two_blob_volume(dims=(10, 10, 10)):
    """Strong blob plus a weaker point feature on a dim background."""
    data = np.full(dims, 0.05)
    data[1:4, 1:4, 1:4] = 0.95
    data[7, 7, 7] = 0.75
    return prob(data)


SKEL = SkeletonParams(iterations=2)
PRIOR = TopoPrior(1)


class TestInitState:
    def test_half_maps_to_zero_logits(self):
        st = init_state(prob(np.full((3, 3, 3), 0.5)))
        assert (st.logits == 0.0).all()
        assert st.iteration == 0 and st.trajectory == []

    def test_closed_form_logit(self):
        st = init_state(prob(np.full((1, 1, 1), 0.75)))
        assert abs(st.logits[0, 0, 0] - np.log(3.0)) < 1e-12

    def test_exact_one_clamped_finite(self):
        st = init_state(prob(np.ones((2, 2, 2))))
        assert np.isfinite(st.logits).all()
        back = sigmoid_array(st.logits)
        assert abs(back[0, 0, 0] - (1.0 - 1e-6)) < 1e-9


class TestSchedule:
    CFG = CurriculumConfig(dense_end=30, total_iters=90, sample_interval=3, late_gamma=0.1)

    def test_dense_phase_identity(self):
        assert schedule_j(30, self.CFG) == 30
        assert schedule_j(0, self.CFG) == 0

    def test_late_phase_floor(self):
        assert schedule_j(31, self.CFG) == 30
        assert schedule_j(32, self.CFG) == 30
        assert schedule_j(33, self.CFG) == 33

    def test_interval_one_degenerates_to_dense(self):
        cfg = CurriculumConfig(dense_end=2, total_iters=10, sample_interval=1)
        assert all(schedule_j(i, cfg) == i for i in range(11))

    def test_idempotent_on_image(self):
        for i in range(91):
            j = schedule_j(i, self.CFG)
            assert schedule_j(j, self.CFG) == j

    def test_bounds_checked(self):
        with pytest.raises(ToposculptError):
            schedule_j(91, self.CFG)

    def test_config_validation(self):
        with pytest.raises(ToposculptError):
            CurriculumConfig(dense_end=5, total_iters=4)
        with pytest.raises(ToposculptError):
            CurriculumConfig(sample_interval=0)


class TestStep:
    def test_near_ideal_state_is_stable(self):
        data = np.full((6, 6, 10), 0.02)
        data[2:4, 2:4, 1:9] = 0.97
        state = init_state(prob(data))
        opt = OptimizerConfig(learning_rate=1e-3, method="plain-gradient")
        cfg = CurriculumConfig(dense_end=2, total_iters=4)
        before = state.logits.copy()
        step(state, PRIOR, TibWeights(), SKEL, opt, cfg)
        rec = state.trajectory[0]
        assert rec.beta0 == 1
        assert rec.l_cor < 0.1
        assert rec.ph_recomputed
        # one plain-gradient step moves logits by at most lr * |grad|
        assert np.abs(state.logits - before).max() <= opt.learning_rate * 30

    def test_ph_recomputation_count_default_schedule(self):
        rng = np.random.default_rng(0)
        p0 = prob(rng.uniform(0.05, 0.95, size=(5, 5, 5)))
        cfg = CurriculumConfig(dense_end=30, total_iters=90, sample_interval=3, late_gamma=0.1)
        _, trajectory = run(p0, PRIOR, TibWeights(alpha=1.0, beta=0.0), SKEL,
                            OptimizerConfig(learning_rate=1e-3), cfg)
        assert len(trajectory) == 91
        flags = [r.ph_recomputed for r in trajectory]
        assert sum(flags) == 51  # 31 dense + 20 sampled
        recompute_iters = [r.iteration for r in trajectory if r.ph_recomputed]
        assert recompute_iters[:31] == list(range(31))
        assert recompute_iters[31:] == list(range(33, 91, 3))

    def test_ph_count_formula_small_config(self):
        rng = np.random.default_rng(1)
        p0 = prob(rng.uniform(0.1, 0.9, size=(4, 4, 4)))
        cfg = CurriculumConfig(dense_end=2, total_iters=8, sample_interval=3)
        _, trajectory = run(p0, PRIOR, TibWeights(alpha=1.0, beta=0.0), SKEL,
                            OptimizerConfig(learning_rate=1e-3), cfg)
        expected = (cfg.dense_end + 1) + len(
            [i for i in range(cfg.dense_end + 1, cfg.total_iters + 1) if i % cfg.sample_interval == 0]
        )
        assert sum(r.ph_recomputed for r in trajectory) == expected == 5

    def test_cached_features_track_current_values(self):
        rng = np.random.default_rng(2)
        p0 = prob(rng.uniform(0.1, 0.9, size=(5, 5, 5)))
        cfg = CurriculumConfig(dense_end=0, total_iters=4, sample_interval=5)
        _, trajectory = run(p0, PRIOR, TibWeights(alpha=0.0, beta=0.0), SKEL,
                            OptimizerConfig(learning_rate=0.05, method="plain-gradient"), cfg)
        assert [r.ph_recomputed for r in trajectory] == [True, False, False, False, False]
        l_cors = [r.l_cor for r in trajectory]
        assert len(set(l_cors)) > 1  # values move between recomputations

    def test_null_update_with_zero_learning_rate(self):
        rng = np.random.default_rng(3)
        p0 = prob(rng.uniform(0.2, 0.8, size=(4, 4, 4)))
        for method in ("plain-gradient", "adamw"):
            state = init_state(p0)
            cfg = CurriculumConfig(dense_end=1, total_iters=3)
            opt = OptimizerConfig(learning_rate=0.0, method=method)
            first = sigmoid_array(state.logits).copy()
            while state.iteration <= cfg.total_iters:
                step(state, PRIOR, TibWeights(), SKEL, opt, cfg)
                np.testing.assert_array_equal(sigmoid_array(state.logits), first)

    def test_two_blob_suppression_is_monotone(self):
        # superfluous birth voxel carries +1: pure correction descent must
        # push the weaker feature down strictly, and never the faithful one
        p0 = two_blob_volume()
        state = init_state(p0)
        cfg = CurriculumConfig(dense_end=20, total_iters=20)
        opt = OptimizerConfig(learning_rate=0.05, method="plain-gradient")
        weights = TibWeights(alpha=0.0, beta=0.0)
        weak = (7, 7, 7)
        strong = sigmoid_array(state.logits)[1:4, 1:4, 1:4].max()
        maxima = [sigmoid_array(state.logits)[weak]]
        while state.iteration <= cfg.total_iters:
            step(state, PRIOR, weights, SKEL, opt, cfg)
            maxima.append(sigmoid_array(state.logits)[weak])
        assert all(b < a for a, b in zip(maxima, maxima[1:]))
        assert maxima[-1] < maxima[0] - 0.03
        assert sigmoid_array(state.logits)[1:4, 1:4, 1:4].max() >= strong

    def test_non_finite_loss_raises_with_diagnostics(self):
        rng = np.random.default_rng(4)
        p0 = prob(rng.uniform(0.3, 0.7, size=(4, 4, 4)))
        cfg = CurriculumConfig(dense_end=5, total_iters=5)
        opt = OptimizerConfig(learning_rate=0.5, method="plain-gradient")
        # inf * (zero MSE at i=0) -> NaN in the voxel term
        weights = TibWeights(alpha=float("inf"), beta=0.0)
        state = init_state(p0)
        with pytest.raises(RefinementNumericalError) as err:
            step(state, PRIOR, weights, SKEL, opt, cfg)
        assert err.value.iteration == 0
        assert err.value.term == "l_com_voxel"
        assert err.value.trajectory == []


class TestRun:
    def test_zero_iterations_returns_input(self):
        p0 = prob(np.full((3, 3, 3), 0.4))
        out, trajectory = run(p0, PRIOR, TibWeights(), SKEL, OptimizerConfig(),
                              CurriculumConfig(dense_end=0, total_iters=0))
        assert trajectory == []
        np.testing.assert_array_equal(out.data, p0.data)

    def test_reproducibility_bit_identical(self):
        rng = np.random.default_rng(5)
        p0 = prob(rng.uniform(0.05, 0.95, size=(6, 6, 6)))
        cfg = CurriculumConfig(dense_end=3, total_iters=9, sample_interval=2, late_gamma=0.5)
        opt = OptimizerConfig(learning_rate=0.02)
        out1, t1 = run(p0, PRIOR, TibWeights(alpha=10.0, beta=1.0), SKEL, opt, cfg)
        out2, t2 = run(p0, PRIOR, TibWeights(alpha=10.0, beta=1.0), SKEL, opt, cfg)
        np.testing.assert_array_equal(out1.data, out2.data)
        assert t1 == t2

    def test_optimizer_config_validation(self):
        with pytest.raises(ToposculptError):
            OptimizerConfig(method="sgd-momentum")
        with pytest.raises(ToposculptError):
            OptimizerConfig(learning_rate=-1.0)
