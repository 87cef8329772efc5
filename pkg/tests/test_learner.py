import json
import math
import os
import random

import pytest

from reducto.driver import random_formula
from reducto.learner import (
    DeltaStore,
    DistRecord,
    FEATURE_NAMES,
    LinearEvaluator,
    MoveStat,
    ParamStore,
    ParamVersionError,
    TrainDivergedError,
    ValueRecord,
    append_quality_log,
    evaluate,
    featurize,
    init_params,
    load_params,
    load_quality_log,
    loss_gradients,
    merge_quality,
    merge_stores,
    params_text,
    parse_params,
    save_params,
    store_loss,
    train,
    _ordered_examples,
)
from reducto.sat import BOTTOM, Formula, TOP
from reducto.search import QualityData


def random_store(rng, n_values=3, n_dists=2, dim=len(FEATURE_NAMES)):
    store = DeltaStore()
    for i in range(n_values):
        store.values[f"v{i}"] = ValueRecord(
            digest=f"v{i}",
            n_vars=rng.randint(1, 10),
            features=tuple(rng.random() for _ in range(dim)),
            value=rng.random(),
            visits=rng.randint(1, 5),
        )
    for i in range(n_dists):
        moves = {}
        for j in range(rng.randint(2, 4)):
            moves[f"m{i}_{j}"] = MoveStat(
                digest=f"m{i}_{j}",
                features=tuple(rng.random() for _ in range(dim)),
                count=rng.randint(0, 6),
            )
        rid = rng.choice(["resolution", "flip", "pure-literal"])
        store.dists[(f"d{i}", rid)] = DistRecord(f"d{i}", rid, rng.randint(1, 10), moves)
    return store


def random_params(rng):
    theta = ParamStore()
    theta.value_weights = [rng.uniform(-1, 1) for _ in range(theta.dim + 1)]
    theta.prior_weights = {
        "resolution": [rng.uniform(-1, 1) for _ in range(theta.dim + 1)],
        "flip": [rng.uniform(-1, 1) for _ in range(theta.dim + 1)],
        "pure-literal": [rng.uniform(-1, 1) for _ in range(theta.dim + 1)],
    }
    theta.examples_seen = rng.randint(0, 100)
    theta.last_loss = rng.random()
    return theta


class TestFeatures:
    def test_dimension_matches_spec(self):
        assert len(featurize(TOP)) == len(FEATURE_NAMES)

    def test_all_features_in_unit_interval(self):
        rng = random.Random(3)
        for _ in range(50):
            phi = random_formula(rng, 6, 10)
            assert all(0.0 <= f <= 1.0 for f in featurize(phi))

    def test_degenerate_formulas(self):
        assert all(f == 0.0 for f in featurize(TOP))
        assert all(math.isfinite(f) for f in featurize(BOTTOM))

    def test_renaming_invariance(self):
        phi = Formula([[1, -2], [2, 3], [-3]])
        renamed = Formula([[5, -9], [9, 2], [-2]])
        assert featurize(phi) == featurize(renamed)


class TestEvaluator:
    def test_fresh_params_value_half(self):
        ev = LinearEvaluator(init_params())
        assert ev.value(Formula([[1, -2]])) == 0.5

    def test_fresh_params_uniform_priors(self):
        ev = LinearEvaluator(init_params())
        moves = [Formula([[1]]), Formula([[2]]), Formula([[3]])]
        assert ev.priors(TOP, "resolution", moves) == [1 / 3, 1 / 3, 1 / 3]

    def test_single_move_prior_is_one(self):
        ev = LinearEvaluator(init_params())
        assert ev.priors(TOP, "flip", [Formula([[1]])]) == [1.0]

    def test_empty_move_list(self):
        ev = LinearEvaluator(init_params())
        assert ev.priors(TOP, "flip", []) == []

    def test_value_bounded_and_priors_normalized(self):
        rng = random.Random(7)
        theta = random_params(rng)
        ev = LinearEvaluator(theta)
        for _ in range(20):
            phi = random_formula(rng, 5, 8)
            assert 0.0 <= ev.value(phi) <= 1.0
            moves = [random_formula(rng, 5, 8) for _ in range(4)]
            priors = ev.priors(phi, "resolution", moves)
            assert all(p >= 0 for p in priors)
            assert abs(sum(priors) - 1.0) <= 1e-9

    def test_value_invariant_under_renaming(self):
        rng = random.Random(11)
        theta = random_params(rng)
        ev = LinearEvaluator(theta)
        assert ev.value(Formula([[1, -2], [2]])) == ev.value(Formula([[4, -7], [7]]))

    def test_bias_translation_leaves_priors_unchanged(self):
        rng = random.Random(13)
        theta = random_params(rng)
        moves = [random_formula(rng, 4, 5) for _ in range(3)]
        before = LinearEvaluator(theta).priors(TOP, "flip", moves)
        shifted = theta.copy()
        shifted.prior_weights["flip"][-1] += 7.5
        after = LinearEvaluator(shifted).priors(TOP, "flip", moves)
        assert all(abs(a - b) <= 1e-9 for a, b in zip(before, after))

    def test_unknown_reduction_falls_back_to_uniform(self):
        rng = random.Random(17)
        theta = random_params(rng)
        ev = LinearEvaluator(theta)
        assert ev.priors(TOP, "mystery", [TOP, BOTTOM]) == [0.5, 0.5]

    def test_evaluate_operation(self):
        value, priors = evaluate(init_params(), Formula([[1]]), {"flip": [Formula([[2]])]})
        assert value == 0.5
        assert priors == {"flip": [1.0]}

    def test_dimension_mismatch_is_a_version_error(self):
        theta = init_params()
        theta.value_weights = [0.0, 0.0]
        with pytest.raises(ParamVersionError):
            LinearEvaluator(theta)


class TestInitAndSerialization:
    def test_init_is_deterministic(self):
        assert params_text(init_params(1)) == params_text(init_params(2))

    def test_round_trip_is_bit_exact(self):
        rng = random.Random(19)
        for _ in range(20):
            theta = random_params(rng)
            assert parse_params(params_text(theta)) == theta

    def test_file_round_trip(self, tmp_path):
        rng = random.Random(23)
        theta = random_params(rng)
        path = str(tmp_path / "params.json")
        save_params(theta, path)
        assert load_params(path) == theta

    def test_version_rejected(self):
        doc = json.loads(params_text(init_params()))
        doc["version"] = 99
        with pytest.raises(ParamVersionError):
            parse_params(json.dumps(doc))

    def test_interrupted_write_leaves_old_params_intact(self, tmp_path, monkeypatch):
        path = str(tmp_path / "params.json")
        original = init_params()
        save_params(original, path)

        def exploding_replace(src, dst):
            raise OSError("killed mid-rename")

        monkeypatch.setattr(os, "replace", exploding_replace)
        try:
            save_params(random_params(random.Random(1)), path)
        except OSError:
            pass
        monkeypatch.undo()
        assert load_params(path) == original
        leftovers = [p for p in os.listdir(tmp_path) if p.endswith(".tmp")]
        assert leftovers == []


def quality_from(values, dists):
    q = QualityData()
    q.values.update(values)
    q.distributions.update(dists)
    return q


class TestMerge:
    def setup_method(self):
        self.phi = Formula([[1, -2], [2]])
        self.move = Formula([[1]])
        self.delta = quality_from(
            {self.phi: (0.8, 4)},
            {(self.phi, "flip"): {self.move: 4}},
        )

    def test_merge_into_empty_equals_delta(self):
        store = merge_quality(DeltaStore(), self.delta)
        rec = store.values[self.phi.digest]
        assert rec.value == 0.8 and rec.visits == 4
        assert store.dists[(self.phi.digest, "flip")].moves[self.move.digest].count == 4

    def test_merging_twice_doubles_counts_keeps_means(self):
        store = merge_quality(DeltaStore(), self.delta)
        merge_quality(store, self.delta)
        rec = store.values[self.phi.digest]
        assert rec.value == 0.8 and rec.visits == 8
        assert store.dists[(self.phi.digest, "flip")].moves[self.move.digest].count == 8

    def test_visit_weighted_mean(self):
        store = merge_quality(DeltaStore(), quality_from({self.phi: (1.0, 1)}, {}))
        merge_quality(store, quality_from({self.phi: (0.0, 3)}, {}))
        rec = store.values[self.phi.digest]
        assert rec.visits == 4
        assert abs(rec.value - 0.25) < 1e-12

    def test_merge_is_commutative(self):
        other = quality_from(
            {self.phi: (0.2, 2), TOP: (1.0, 1)},
            {(self.phi, "flip"): {self.move: 1, Formula([[2]]): 3}},
        )
        a = merge_quality(merge_quality(DeltaStore(), self.delta), other)
        b = merge_quality(merge_quality(DeltaStore(), other), self.delta)
        assert a.canonical_text() == b.canonical_text()

    def test_merge_empty_delta_is_identity(self):
        store = merge_quality(DeltaStore(), self.delta)
        before = store.canonical_text()
        merge_quality(store, QualityData())
        assert store.canonical_text() == before

    def test_merge_stores(self):
        a = merge_quality(DeltaStore(), self.delta)
        b = merge_quality(DeltaStore(), self.delta)
        merged = merge_stores(a, b)
        assert merged.values[self.phi.digest].visits == 8


class TestQualityLog:
    def test_append_and_load_round_trip(self, tmp_path):
        path = str(tmp_path / "quality.jsonl")
        phi = Formula([[1, -2], [2]])
        delta = quality_from(
            {phi: (0.75, 2), TOP: (1.0, 1)},
            {(phi, "flip"): {Formula([[1]]): 2}},
        )
        written = append_quality_log(path, delta)
        assert written == 3
        store, skipped = load_quality_log(path)
        assert skipped == 0
        expected = merge_quality(DeltaStore(), delta)
        assert store.canonical_text() == expected.canonical_text()

    def test_corrupt_records_skipped_and_counted(self, tmp_path):
        path = str(tmp_path / "quality.jsonl")
        phi = Formula([[1]])
        append_quality_log(path, quality_from({phi: (1.0, 1)}, {}))
        with open(path, "a") as handle:
            handle.write("not json\n")
            handle.write(json.dumps({"kind": "value", "digest": "x"}) + "\n")
            handle.write(
                json.dumps(
                    {
                        "kind": "value",
                        "digest": "y",
                        "n_vars": 1,
                        "features": [float("nan")] * len(FEATURE_NAMES),
                        "value": 0.5,
                        "visits": 1,
                    }
                )
                + "\n"
            )
        store, skipped = load_quality_log(path)
        assert skipped == 3
        assert len(store.values) == 1


class TestLossAndGradients:
    def finite_difference(self, theta, store, eps=1e-6):
        grads = {"value": [], "prior": {}}
        for j in range(theta.dim + 1):
            up = theta.copy()
            down = theta.copy()
            up.value_weights[j] += eps
            down.value_weights[j] -= eps
            grads["value"].append((store_loss(up, store) - store_loss(down, store)) / (2 * eps))
        rids = {rid for _, rid in store.dists}
        for rid in rids:
            grads["prior"][rid] = []
            for j in range(theta.dim + 1):
                up = theta.copy()
                down = theta.copy()
                up.prior_weights.setdefault(rid, [0.0] * (theta.dim + 1))
                down.prior_weights.setdefault(rid, [0.0] * (theta.dim + 1))
                up.prior_weights[rid] = list(up.prior_weights[rid])
                down.prior_weights[rid] = list(down.prior_weights[rid])
                up.prior_weights[rid][j] += eps
                down.prior_weights[rid][j] -= eps
                grads["prior"][rid].append(
                    (store_loss(up, store) - store_loss(down, store)) / (2 * eps)
                )
        return grads

    @staticmethod
    def close(a, b, rel=1e-4, abs_tol=1e-7):
        return abs(a - b) <= max(abs_tol, rel * max(abs(a), abs(b)))

    def test_gradients_match_finite_differences(self):
        rng = random.Random(29)
        for _ in range(5):
            store = random_store(rng, n_values=5, n_dists=3)
            theta = random_params(rng)
            loss, value_grad, prior_grads = loss_gradients(theta, store)
            assert math.isfinite(loss)
            numeric = self.finite_difference(theta, store)
            for a, b in zip(value_grad, numeric["value"]):
                assert self.close(a, b)
            for rid, grad in prior_grads.items():
                for a, b in zip(grad, numeric["prior"][rid]):
                    assert self.close(a, b)

    def test_loss_on_three_example_store(self):
        rng = random.Random(31)
        store = random_store(rng, n_values=3, n_dists=0)
        theta = init_params()
        expected = sum((0.5 - rec.value) ** 2 for rec in store.values.values()) / 3
        assert abs(store_loss(theta, store) - expected) < 1e-12


class TestTrain:
    def test_zero_epochs_is_identity(self):
        rng = random.Random(37)
        store = random_store(rng)
        theta = random_params(rng)
        theta2 = train(theta, store, epochs=0)
        assert theta2 == theta
        assert theta2 is not theta

    def test_empty_store_rejected(self):
        with pytest.raises(ValueError):
            train(init_params(), DeltaStore())

    def test_loss_never_increases(self):
        rng = random.Random(41)
        for _ in range(10):
            store = random_store(rng, n_values=4, n_dists=3)
            theta = random_params(rng)
            before = store_loss(theta, store)
            theta2 = train(theta, store)
            assert store_loss(theta2, store) <= before + 1e-12

    def test_easy_value_targets_drive_value_up_monotonically(self):
        phi = Formula([[1, -2], [2]])
        store = merge_quality(DeltaStore(), quality_from({phi: (1.0, 3)}, {}))
        theta = init_params()
        last = 0.5
        for _ in range(10):
            theta = train(theta, store, epochs=1)
            current = LinearEvaluator(theta).value(phi)
            assert current >= last - 1e-12
            last = current
        assert last > 0.5

    def test_prior_training_tracks_visit_distribution(self):
        # Moves must differ in feature space for the prior head to separate them.
        phi = Formula([[-1, -2]])
        a, b = Formula([[1]]), Formula([[-1], [-2], [-1, -2]])
        assert featurize(a) != featurize(b)
        delta = quality_from({}, {(phi, "flip"): {a: 9, b: 1}})
        store = merge_quality(DeltaStore(), delta)
        theta = train(init_params(), store, epochs=50, learning_rate=0.2)
        priors = LinearEvaluator(theta).priors(phi, "flip", [a, b])
        assert priors[0] > 0.6

    def test_curriculum_orders_examples_by_variable_count(self):
        rng = random.Random(43)
        store = random_store(rng, n_values=6, n_dists=4)
        ordered = _ordered_examples(store, curriculum=True)
        sizes = [rec.n_vars for rec in ordered]
        assert sizes == sorted(sizes)

    def test_training_is_deterministic(self):
        rng = random.Random(47)
        store = random_store(rng, n_values=4, n_dists=2)
        theta = random_params(rng)
        t1 = train(theta, store, epochs=5)
        t2 = train(theta, store, epochs=5)
        assert params_text(t1) == params_text(t2)

    def test_diverging_loss_raises_and_leaves_theta_unchanged(self):
        # Contradictory targets over the same feature pattern: a huge learning
        # rate saturates the softmax and one record's cross-entropy hits inf.
        ones = tuple([1.0] * len(FEATURE_NAMES))
        zeros = tuple([0.0] * len(FEATURE_NAMES))
        store = DeltaStore()
        store.dists[("d0", "flip")] = DistRecord(
            "d0", "flip", 2,
            {"m0": MoveStat("m0", ones, 1), "m1": MoveStat("m1", zeros, 0)},
        )
        store.dists[("d1", "flip")] = DistRecord(
            "d1", "flip", 2,
            {"m2": MoveStat("m2", ones, 0), "m3": MoveStat("m3", zeros, 1)},
        )
        theta = init_params()
        before = params_text(theta)
        with pytest.raises(TrainDivergedError):
            train(theta, store, epochs=3, learning_rate=1e18)
        assert params_text(theta) == before

    def test_feature_dimension_mismatch_rejected(self):
        rng = random.Random(53)
        store = random_store(rng, dim=3)
        with pytest.raises(ParamVersionError):
            train(init_params(), store)
