import json
import math
from pathlib import Path

import numpy as np
import pytest

from adaptive_median.core import FiniteRange, grid
from adaptive_median.errors import DomainError, ParameterError, SchemaError
from adaptive_median.harness import adversaries, baselines, distributions, experiment, queries
from adaptive_median.harness.audit import (
    broken_median,
    clopper_pearson,
    constant_mechanism,
    dp_ratio_audit,
    em_audit,
    em_sampler,
    frequency_audit,
    neighbour_families,
)
from adaptive_median.harness.oracle import GroundTruthOracle, binomial_mad, true_iqr

ROOT = Path(__file__).resolve().parents[1]


def reference_correlation(x, j, t, label_bit=49):
    xj = ((x >> np.uint64(j)) & np.uint64(1)).astype(int) * 2 - 1
    y = ((x >> np.uint64(label_bit)) & np.uint64(1)).astype(int) * 2 - 1
    return (xj * y).reshape(-1, t).mean(axis=1)


class TestDistributions:
    def test_packed_bits(self):
        x = distributions.BernoulliProduct().sample(200_000, np.random.default_rng(0))
        assert x.dtype == np.uint64 and int(x.max()) < 1 << 50
        for bit in (0, 17, 49):
            assert ((x >> np.uint64(bit)) & np.uint64(1)).mean() == pytest.approx(0.5, abs=0.01)

    def test_biased_product(self):
        x = distributions.BernoulliProduct(features=3, p=0.2).sample(100_000, np.random.default_rng(1))
        assert ((x >> np.uint64(3)) & np.uint64(1)).mean() == pytest.approx(0.2, abs=0.01)

    def test_descriptors_round_trip(self):
        for d in (distributions.BernoulliProduct(), distributions.Bernoulli(0.1),
                  distributions.Categorical((0, 1), (0.3, 0.7)), distributions.Gaussian(1, 2)):
            assert distributions.from_descriptor(d.descriptor()) == d

    def test_validation(self):
        with pytest.raises(DomainError):
            distributions.Categorical((0, 1), (0.5, 0.6))
        with pytest.raises(DomainError):
            distributions.from_descriptor({"kind": "zipf"})


class TestQueries:
    def test_feature_correlation_matches_reference(self):
        x = distributions.BernoulliProduct().sample(16 * 500, np.random.default_rng(2))
        blocks = x.reshape(-1, 16)
        for j in (0, 13, 48):
            q = queries.feature_correlation(j, 16)
            assert np.array_equal(q.evaluate(blocks), reference_correlation(x, j, 16))

    def test_label_agreement(self):
        x = distributions.BernoulliProduct(features=3).sample(4 * 100, np.random.default_rng(3))
        signs = np.array([1, -1, 1])
        q = queries.label_agreement(signs, 4, label_bit=3)
        bits = ((x[:, None] >> np.arange(4, dtype=np.uint64)) & np.uint64(1)).astype(int) * 2 - 1
        score = bits[:, :3] @ signs
        pred = np.where(score >= 0, 1, -1)
        assert np.array_equal(q.evaluate(x.reshape(-1, 4)), (pred * bits[:, 3]).reshape(-1, 4).mean(axis=1))

    def test_grid(self):
        assert queries.pm_one_grid(16).size() == 17
        assert FiniteRange.from_descriptor(queries.pm_one_grid(4).descriptor()) == queries.pm_one_grid(4)

    def test_rebuild_from_descriptor(self):
        q = queries.label_agreement([1, -1] * 24 + [1], 16)
        back = queries.from_descriptor(q.descriptor, q.range)
        x = distributions.BernoulliProduct().sample(64, np.random.default_rng(4)).reshape(-1, 16)
        assert np.array_equal(q.evaluate(x), back.evaluate(x))
        with pytest.raises(DomainError):
            queries.from_descriptor({"kind": "nope"}, q.range)

    def test_bad_arguments(self):
        with pytest.raises(DomainError):
            queries.feature_correlation(49, 16)
        with pytest.raises(DomainError):
            queries.label_agreement([1, 0, -1], 16)


class TestOracle:
    def test_four_coins(self):
        oracle = GroundTruthOracle(distributions.Bernoulli(0.5))
        q = queries.block_mean(4, grid(0, 1, 0.25))
        assert oracle.iqr(q).members == (0.25, 0.5, 0.75)

    def test_point_mass(self):
        oracle = GroundTruthOracle(distributions.Bernoulli(0.5))
        iqr = true_iqr(oracle, queries.constant(0.3, 2, grid(0, 1, 0.1)))
        assert iqr.lower == iqr.upper == pytest.approx(0.3)

    def test_attack_truth(self):
        oracle = GroundTruthOracle(distributions.BernoulliProduct())
        iqr = oracle.iqr(queries.label_agreement(np.ones(49, dtype=int), 16))
        assert (iqr.lower, iqr.upper) == (-0.125, 0.125)
        assert oracle.mean(queries.feature_correlation(3, 16)) == pytest.approx(0.0)
        assert oracle.sd(queries.feature_correlation(3, 16)) == pytest.approx(0.25)

    @pytest.mark.parametrize("dist,query", [
        (distributions.Bernoulli(0.3), queries.block_mean(5, grid(0, 1, 0.2))),
        (distributions.Categorical((0, 1, 3), (0.5, 0.3, 0.2)), queries.block_mean(3, grid(0, 3, 1 / 3))),
        (distributions.BernoulliProduct(), queries.feature_correlation(7, 16)),
    ])
    def test_monte_carlo_agrees_with_exact(self, dist, query):
        oracle = GroundTruthOracle(dist, mc_draws=200_000, seed=5)
        exact = oracle.iqr(query)
        mc = oracle.iqr(query, force_monte_carlo=True)
        assert mc.outer.lower <= exact.lower <= mc.inner.lower or math.isclose(mc.inner.lower, exact.lower)
        assert mc.inner.upper <= exact.upper <= mc.outer.upper or math.isclose(mc.inner.upper, exact.upper)
        assert mc.draws == 200_000

    def test_binomial_mad(self):
        assert binomial_mad(100, 0.1) == pytest.approx(0.02373576242840788, abs=1e-15)
        law = GroundTruthOracle(distributions.Bernoulli(0.1)).law(queries.block_mean(100, grid(0, 1, 0.01)))
        assert law.mad() == pytest.approx(binomial_mad(100, 0.1), abs=1e-12)


class TestAdversaries:
    def test_overfit_boost_protocol(self):
        adv = adversaries.OverfitBoost(features=3, t=4)
        adv.reset()
        seen = []
        for a in (0.5, -0.25, None):
            q = adv.next_query()
            seen.append(q.descriptor["kind"])
            adv.observe(a)
        final = adv.next_query()
        assert final.descriptor["signs"] == [1, -1, 1]
        adv.observe(0.0)
        assert adv.next_query() is None and adv.k == 4

    def test_no_queries(self):
        adv = adversaries.NoQueries()
        adv.reset()
        assert adv.next_query() is None

    def test_random_sq_is_bounded_and_seeded(self):
        def run(seed):
            adv = adversaries.RandomSQ(16, 10)
            adv.reset(np.random.default_rng(seed))
            out = []
            while (q := adv.next_query()) is not None:
                out.append(q)
                adv.observe(float(q.mean()) + 0.01)
            return np.array(out)
        a = run(1)
        assert a.shape == (10, 16) and np.all(np.abs(a) <= 1)
        assert np.array_equal(a, run(1))

    def test_gray_zone_walk(self):
        q = queries.block_mean(1, grid(0, 10, 1))
        adv = adversaries.GrayZoneProber(q, start_index=5, k=4, step=2)
        adv.reset()
        points = []
        for verdict in ("Y", "Y", "N", "Y"):
            points.append(adv.next_query()[1])
            adv.observe(verdict)
        assert points == [5.0, 7.0, 9.0, 1.0]
        assert adv.next_query() is None


class TestBaselines:
    def test_naive_constant(self):
        b = baselines.make_baseline("naive-empirical", np.zeros(40), 4)
        assert b.answer(queries.constant(0.7, 4, grid(0, 1, 0.1))) == pytest.approx(0.7)

    def test_data_splitting_budget(self):
        b = baselines.DataSplitting(np.zeros(40), 4, chunks=3)
        q = queries.block_mean(4, grid(0, 1, 0.1))
        assert [b.answer(q) is not None for _ in range(4)] == [True, True, True, False]

    def test_gaussian_limit(self):
        x = np.random.default_rng(0).random(400)
        q = queries.block_mean(4, grid(0, 1, 0.01))
        naive = baselines.baseline_answer("naive-empirical", x, q)
        noisy = baselines.baseline_answer("gaussian-noise", x, q, sigma=1e-12, rng=np.random.default_rng(1))
        assert noisy == pytest.approx(naive, abs=1e-9)

    def test_unknown(self):
        with pytest.raises(ValueError):
            baselines.make_baseline("oracle", np.zeros(4), 1)


class TestAudit:
    def test_em_example(self):
        res = em_audit(6, FiniteRange(np.arange(8.0)), 0.5)
        assert res.passed and res.max_ratio <= math.exp(0.5)

    def test_constant_mechanism(self):
        T = FiniteRange(np.arange(4.0))
        assert dp_ratio_audit(constant_mechanism(T), neighbour_families(3, T), 0.1).max_ratio == 1.0

    def test_broken_mechanism(self):
        T = FiniteRange(np.arange(4.0))
        res = dp_ratio_audit(broken_median(T), neighbour_families(3, T), 1.0)
        assert not res.passed and math.isinf(res.max_ratio)
        assert json.loads(json.dumps(res.to_dict()))["max_ratio"] == "inf"

    def test_families_cover_all_neighbours(self):
        T = FiniteRange(np.arange(3.0))
        pairs = {(a, b) for g in neighbour_families(2, T) for a in g for b in g if a != b}
        assert ((0.0, 0.0), (0.0, 2.0)) in pairs and ((1.0, 2.0), (2.0, 2.0)) in pairs

    def test_frequency_audit(self):
        T = FiniteRange(np.arange(4.0))
        pairs = [((0.0, 1.0, 1.0), (0.0, 1.0, 3.0))]
        rng = np.random.default_rng(0)
        ok = frequency_audit(em_sampler(T, 1.0), pairs, T.values, 1.0, 50_000, rng)
        assert ok.passed and ok.mode == "frequency"
        bad = frequency_audit(lambda s, rng, n: np.full(n, sorted(s)[1]), [((0.0, 0.0, 1.0), (0.0, 1.0, 1.0))],
                              T.values, 1.0, 10_000, rng)
        assert not bad.passed

    def test_clopper_pearson(self):
        lo, hi = clopper_pearson(0, 100)
        assert lo == 0 and 0.04 < hi < 0.06
        lo, hi = clopper_pearson(50, 100, 0.95)
        assert lo < 0.5 < hi


def small_spec(**overrides):
    spec = {
        "schema_version": 1,
        "name": "tiny",
        "seed": 3,
        "trials": 4,
        "distribution": {"kind": "bernoulli_product", "features": 5, "p": 0.5},
        "adversary": {"kind": "overfit_boost", "features": 5, "t": 4},
        "mechanism": {"kind": "naive-empirical", "t": 4, "n": 200},
        "assertions": [{"name": "anything", "metric": "joint_violation_rate", "op": "<=", "value": 1.0}],
    }
    spec.update(overrides)
    return spec


class TestExperiment:
    def test_docs_schema_matches_package(self):
        packaged = experiment.load_schema()
        assert json.loads((ROOT / "docs" / "experiment.schema.json").read_text()) == packaged

    @pytest.mark.parametrize("name", ["attack_naive.json", "engine_protection.json", "mad_wrapper.json"])
    def test_bundled_specs_validate(self, name):
        assert experiment.bundled_spec(name)["schema_version"] == 1

    def test_schema_violations(self, tmp_path):
        bad = small_spec(trials="many")
        with pytest.raises(SchemaError):
            experiment.validate_spec(bad)
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(SchemaError):
            experiment.load_spec(p)
        with pytest.raises(SchemaError):
            experiment.load_spec(tmp_path / "missing.json")

    def test_cross_field_checks(self):
        with pytest.raises(ParameterError):
            experiment.validate_spec(small_spec(adversary={"kind": "overfit_boost", "features": 5, "t": 8}))
        with pytest.raises(ParameterError):
            experiment.validate_spec(small_spec(mechanism={"kind": "naive-empirical", "t": 4}))

    def test_reproducible(self):
        a = experiment.run_experiment(small_spec())
        b = experiment.run_experiment(small_spec())
        assert a.rows == b.rows and a.metrics == b.metrics
        c = experiment.run_experiment(small_spec(), seed=4)
        assert c.rows != a.rows

    def test_workers_do_not_change_results(self, monkeypatch):
        serial = experiment.run_experiment(small_spec())
        monkeypatch.setenv(experiment.WORKERS_ENV, "2")
        assert experiment.resolve_workers(None) == 2
        assert experiment.run_experiment(small_spec()).rows == serial.rows

    def test_empty_adversary(self):
        report = experiment.run_experiment(small_spec(adversary={"kind": "none"}, assertions=[]))
        assert all(r["queries"] == 0 for r in report.rows) and report.passed

    def test_naive_attack_is_visible_even_at_tiny_scale(self):
        spec = small_spec(distribution={"kind": "bernoulli_product", "features": 49, "p": 0.5},
                          adversary={"kind": "overfit_boost", "features": 49, "t": 16},
                          mechanism={"kind": "naive-empirical", "t": 16, "n": 1000}, trials=40)
        report = experiment.run_experiment(spec)
        assert report.metrics["final_exceeds_3se_rate"]["rate"] >= 0.7

    def test_assertion_slack(self):
        res = experiment._check({"metric": "joint_violation_rate", "op": "<=", "value": 0.05, "slack_se": 3},
                                {"joint_violation_rate": {"rate": 0.06, "trials": 500}})
        assert res["threshold"] == pytest.approx(0.05 + 3 * math.sqrt(0.05 * 0.95 / 500)) and res["passed"]
        missing = experiment._check({"metric": "mad_violation_rate", "op": "<=", "value": 0.05}, {})
        assert not missing["passed"]

    def test_report_files(self, tmp_path):
        report = experiment.run_experiment(small_spec())
        json_path, csv_path = report.write(tmp_path / "out")
        data = json.loads(json_path.read_text())
        assert data["schema_version"] == 1 and len(data["trials"]) == 4
        assert csv_path.read_text().splitlines()[0].startswith("trial,")

    def test_engine_trial_and_transcript(self, tmp_path):
        spec = small_spec(mechanism={"kind": "engine", "t": 4, "k": 6, "r": 5, "beta": 0.05}, trials=1)
        report = experiment.run_experiment(spec, transcript_dir=tmp_path)
        row = report.rows[0]
        assert row["answered"] == 6 and row["epsilon_hat"] <= 0.05 and not row["guarantee_void"]
        assert (tmp_path / "trial-00000.jsonl").exists()

    def test_dataset_regeneration(self):
        spec = small_spec()
        desc = experiment.dataset_descriptor(spec, 2, 100)
        a = experiment.regenerate_dataset(desc)
        assert np.array_equal(a, experiment.regenerate_dataset(json.loads(json.dumps(desc))))
