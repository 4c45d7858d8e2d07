import math

import numpy as np
import pytest

from adaptive_median.core import EstimatorQuery, grid
from adaptive_median.errors import DomainError, ParameterError, UpdateBudgetExhausted
from adaptive_median.harness.oracle import GroundTruthOracle
from adaptive_median.harness.distributions import Categorical
from adaptive_median.pmw import (
    PMWConfig,
    PMWState,
    UniverseDistribution,
    encode_blocks,
    enumerate_universe,
    estimator_call_budget,
    pmw_answer_estimator,
    pmw_answer_sq,
    pmw_required_m,
)


def make_state(size=16, alpha=0.2, k=200, seed=0, pop=None):
    cfg = PMWConfig(universe_size=size, alpha=alpha, beta=0.05, k=k)
    rng = np.random.default_rng(seed)
    pop = rng.dirichlet(np.ones(size)) if pop is None else pop
    hist = rng.multinomial(pmw_required_m(cfg).m, pop)
    return PMWState(hist, cfg, rng), pop


class TestConfig:
    def test_derived_constants(self):
        cfg = PMWConfig(universe_size=64, alpha=0.2, beta=0.05, k=200)
        assert cfg.threshold == 0.1 and cfg.gamma == 0.05
        assert cfg.update_cap == math.ceil(32 * math.log(64) / 0.04)

    def test_frozen_sizes(self):
        assert pmw_required_m(PMWConfig(universe_size=64, alpha=0.2, beta=0.05, k=200)).m == 1311703
        assert pmw_required_m(PMWConfig(universe_size=64, alpha=0.125, beta=0.05, k=50)).m == 3602479

    def test_bounds(self):
        for bad in (dict(universe_size=1), dict(universe_size=10 ** 7), dict(alpha=0), dict(k=0)):
            with pytest.raises(ParameterError):
                PMWConfig(**{**dict(universe_size=8, alpha=0.2, beta=0.05, k=1), **bad})


class TestAnswers:
    def test_zero_query(self):
        state, _ = make_state()
        assert abs(pmw_answer_sq(state, np.zeros(16))) <= 0.2

    def test_random_batch_accuracy(self):
        good = 0
        trials = 20
        for seed in range(trials):
            state, pop = make_state(seed=seed)
            rng = np.random.default_rng(1000 + seed)
            psis = rng.choice([-1.0, 1.0], size=(200, 16))
            good += all(abs(state.answer(p) - pop @ p) <= 0.2 for p in psis)
        assert good / trials >= 0.95

    def test_repeated_query_updates_at_most_once(self):
        state, pop = make_state(seed=3)
        psi = np.where(np.arange(16) < 4, 1.0, -1.0)
        for _ in range(50):
            state.answer(psi)
        assert state.updates <= 1
        assert state.queries == 50

    def test_ledger_and_cap(self):
        cfg = PMWConfig(universe_size=4, alpha=0.9, beta=0.05, k=10)
        state = PMWState([1000, 0, 0, 0], cfg, np.random.default_rng(0))
        with pytest.raises(UpdateBudgetExhausted):
            for _ in range(10_000):
                state.answer(np.array([1.0, -1.0, -1.0, -1.0]) * (1 if state.queries % 2 else -1))
        assert state.updates == cfg.update_cap
        assert state.ledger.epsilon_hat <= cfg.target_epsilon + 1e-9

    def test_input_checks(self):
        state, _ = make_state()
        with pytest.raises(DomainError):
            state.answer(np.zeros(3))
        with pytest.raises(DomainError):
            state.answer(np.full(16, 2.0))
        with pytest.raises(DomainError):
            PMWState.from_samples([0, 99], state.config)

    def test_universe_distribution(self):
        u = UniverseDistribution.uniform(4)
        assert u.expect(np.array([1, 0, 0, 0])) == 0.25
        u.reweight(np.array([3.0, 1, 1, 1]))
        assert u.expect(np.array([1, 0, 0, 0])) == 0.5


class TestEstimator:
    def test_universe_encoding(self):
        blocks = enumerate_universe(4, 3)
        assert blocks.shape == (64, 3)
        assert encode_blocks(blocks, 4).tolist() == list(range(64))
        with pytest.raises(DomainError):
            enumerate_universe(10, 7)

    def test_point_mass(self):
        blocks = enumerate_universe(4, 3)
        cfg = PMWConfig(universe_size=64, alpha=0.125, beta=0.05, k=100)
        hist = np.zeros(64)
        hist[0] = pmw_required_m(cfg).m
        state = PMWState(hist, cfg, np.random.default_rng(0))
        phi = EstimatorQuery(fn=lambda b: np.full(b.shape[0], 2.0), range=grid(0, 3, 0.2), block_size=3)
        assert pmw_answer_estimator(state, phi, blocks) == 2.0

    def test_block_mean_in_iqr_and_call_budget(self):
        blocks = enumerate_universe(4, 3)
        T = grid(0, 3, 0.2)
        assert T.size() == 16
        phi = EstimatorQuery(fn=lambda b: b.mean(axis=-1), range=T, block_size=3)
        p = np.array([0.1, 0.2, 0.3, 0.4])
        oracle = GroundTruthOracle(Categorical(atoms=(0, 1, 2, 3), probs=tuple(p)))
        iqr = oracle.iqr(phi)
        pop = np.prod(p[blocks], axis=1)
        trials = 40
        good = 0
        for seed in range(trials):
            cfg = PMWConfig(universe_size=64, alpha=0.125, beta=0.05, k=5 * estimator_call_budget(16))
            rng = np.random.default_rng(seed)
            state = PMWState(rng.multinomial(pmw_required_m(cfg).m, pop), cfg, rng)
            ok = True
            for _ in range(5):
                before = state.sq_calls
                v = pmw_answer_estimator(state, phi, blocks)
                assert state.sq_calls - before <= estimator_call_budget(16) == 8
                ok &= iqr.contains(v)
            good += ok
        assert good / trials >= 0.95

    def test_needs_small_alpha(self):
        state, _ = make_state(size=64, alpha=0.2)
        phi = EstimatorQuery(fn=lambda b: b.mean(axis=-1), range=grid(0, 3, 1), block_size=3)
        with pytest.raises(ParameterError):
            pmw_answer_estimator(state, phi, enumerate_universe(4, 3))
