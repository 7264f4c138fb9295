import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ffa.analog import DenseLayer
from ffa.core import PolarityPartition, SigmoidProb, SymmetricProb
from ffa.data import Dataset, LabelCodebook
from ffa.errors import DataError
from ffa.metrics import (
    LatentDump,
    accuracy,
    analog_runner,
    classify,
    collect_latents,
    evaluate,
    export_latents,
    hoyer_index,
    hoyer_summary,
    read_latents,
    separability_index,
    spiking_runner,
)
from ffa.spiking import SpikeEncoderConfig, SpikingConfig


class TestHoyerIndex:
    @pytest.mark.parametrize("n", [2, 4, 200])
    def test_one_hot_is_one(self, n):
        v = np.zeros(n)
        v[0] = 3.7
        assert hoyer_index(v) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 10, 64])
    def test_uniform_is_zero(self, n):
        assert hoyer_index(np.full(n, 0.8)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_evaluated(self):
        # l1 = 7, l2 = 5, n = 4: (2 - 1.4) / (2 - 1) = 0.6
        assert hoyer_index(np.array([3.0, 4.0, 0.0, 0.0])) == pytest.approx(0.6, abs=1e-12)

    def test_zero_vector_convention(self):
        assert hoyer_index(np.zeros(16)) == 1.0

    def test_too_short(self):
        with pytest.raises(ValueError):
            hoyer_index(np.array([1.0]))

    @given(c=st.floats(min_value=1e-3, max_value=1e3))
    def test_scale_invariant(self, c):
        v = np.array([0.1, 0.9, 0.0, 0.4, 2.0])
        assert hoyer_index(c * v) == pytest.approx(hoyer_index(v), abs=1e-12)

    def test_summary_counts_dead_latents(self):
        latents = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.5, 0.5]])
        mean, std, dead = hoyer_summary(latents)
        assert dead == 1
        values = [1.0, 1.0, 0.0]
        assert mean == pytest.approx(np.mean(values), abs=1e-12)
        assert std == pytest.approx(np.std(values), abs=1e-12)


def brute_force_si(latents, labels, k):
    """Independent quadratic-loop kNN oracle."""
    q = len(labels)
    matches = 0
    for a in range(q):
        dists = [(np.sum((latents[a] - latents[b]) ** 2), b) for b in range(q) if b != a]
        dists.sort()
        for _, b in dists[:k]:
            matches += labels[a] == labels[b]
    return matches / (q * k)


class TestSeparabilityIndex:
    def test_single_label_is_one(self):
        rng = np.random.default_rng(0)
        dump = LatentDump(rng.uniform(0, 1, size=(30, 4)), np.zeros(30, dtype=int))
        assert separability_index(dump, k_nn=5) == 1.0

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 0.05, size=(8, 3))
        b = rng.normal(10.0, 0.05, size=(8, 3))
        dump = LatentDump(np.vstack([a, b]), np.array([0] * 8 + [1] * 8))
        assert separability_index(dump, k_nn=5) == 1.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        latents = rng.normal(size=(40, 6))
        labels = rng.integers(0, 3, size=40)
        dump = LatentDump(latents, labels)
        for k in (1, 3, 5):
            assert separability_index(dump, k_nn=k) == pytest.approx(
                brute_force_si(latents, labels, k), abs=1e-12
            )

    def test_random_labels_near_class_prior(self):
        rng = np.random.default_rng(3)
        latents = rng.normal(size=(2000, 8))
        labels = rng.integers(0, 10, size=2000)
        si = separability_index(LatentDump(latents, labels), k_nn=5)
        assert abs(si - 0.1) < 0.03

    def test_coordinate_permutation_invariance(self):
        rng = np.random.default_rng(4)
        latents = rng.normal(size=(60, 10))
        labels = rng.integers(0, 4, size=60)
        si = separability_index(LatentDump(latents, labels))
        perm = rng.permutation(10)
        si_perm = separability_index(LatentDump(latents[:, perm], labels))
        assert si_perm == pytest.approx(si, abs=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(5)
        latents = rng.normal(size=(60, 10))
        labels = rng.integers(0, 4, size=60)
        q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        si = separability_index(LatentDump(latents, labels))
        si_rot = separability_index(LatentDump(latents @ q, labels))
        assert si_rot == pytest.approx(si, abs=1e-12)

    def test_duplicate_latents_tie_break_in_index_order(self):
        latents = np.zeros((6, 2))
        labels = np.array([0, 0, 1, 1, 1, 1])
        # all points identical: each query's k=3 neighbors are the lowest
        # other indices, namely {0,1,2} minus itself plus 3 when displaced;
        # every query then sees exactly one same-label neighbor
        si = separability_index(LatentDump(latents, labels), k_nn=3)
        assert si == pytest.approx(1 / 3, abs=1e-12)

    def test_requires_more_samples_than_k(self):
        dump = LatentDump(np.zeros((4, 2)), np.zeros(4, dtype=int))
        with pytest.raises(DataError):
            separability_index(dump, k_nn=5)


class TestExport:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        dump = LatentDump(rng.uniform(-5, 5, size=(20, 7)), rng.integers(0, 10, 20))
        path = tmp_path / "latents.csv"
        export_latents(dump, path)
        loaded = read_latents(path)
        assert np.array_equal(loaded.labels, dump.labels)
        assert np.allclose(loaded.latents, dump.latents, rtol=5e-9, atol=1e-12)

    def test_header_only_for_empty_dump(self, tmp_path):
        dump = LatentDump(np.zeros((0, 5)), np.zeros(0, dtype=int))
        path = tmp_path / "latents.csv"
        export_latents(dump, path)
        lines = path.read_text().splitlines()
        assert lines == ["label,h0,h1,h2,h3,h4"]

    def test_row_count(self, tmp_path):
        dump = LatentDump(np.ones((13, 3)), np.ones(13, dtype=int))
        path = tmp_path / "latents.csv"
        export_latents(dump, path)
        assert len(path.read_text().splitlines()) == 14


def trained_like_layer(rng, n_out, n_in):
    return DenseLayer(rng.uniform(-0.3, 0.3, size=(n_out, n_in)),
                      PolarityPartition.split_halves(n_out))


class TestClassify:
    def test_all_zero_weights_tie_breaks_to_label_zero(self):
        book = LabelCodebook(length=8, density=0.3, seed=3)
        layer = DenseLayer(np.zeros((6, 18)), PolarityPartition.all_positive(6))
        pred = classify(layer, np.zeros(10), book, analog_runner(), SigmoidProb())
        assert pred == 0

    def test_weight_rescaling_invariance(self):
        rng = np.random.default_rng(7)
        book = LabelCodebook(length=8, density=0.3, seed=3)
        layer = trained_like_layer(rng, 12, 18)
        images = rng.uniform(0, 1, size=(25, 10))
        runner = analog_runner()
        for prob in (SigmoidProb(), SymmetricProb()):
            before = [classify(layer, img, book, runner, prob) for img in images]
            scaled = DenseLayer(3.7 * layer.weights, layer.partition)
            after = [classify(scaled, img, book, runner, prob) for img in images]
            assert before == after

    def test_untrained_accuracy_near_chance(self, synthetic_data):
        rng = np.random.default_rng(8)
        layer = trained_like_layer(rng, 30, 120)
        acc = accuracy(layer, synthetic_data.test, synthetic_data.codebook,
                       analog_runner(), SymmetricProb())
        assert 0.02 <= acc <= 0.25

    def test_accuracy_agrees_with_classify_loop(self, synthetic_data):
        rng = np.random.default_rng(9)
        layer = trained_like_layer(rng, 20, 120)
        data = synthetic_data.test
        sub = Dataset(data.images[:40], data.labels[:40])
        prob = SigmoidProb()
        acc = accuracy(layer, sub, synthetic_data.codebook, analog_runner(), prob, chunk=16)
        preds = [
            classify(layer, img, synthetic_data.codebook, analog_runner(), prob)
            for img in sub.images
        ]
        assert acc == np.mean(np.asarray(preds) == sub.labels)

    def test_spiking_runner_deterministic_per_seed(self):
        rng = np.random.default_rng(10)
        book = LabelCodebook(length=8, density=0.3, seed=3)
        layer = trained_like_layer(rng, 10, 18)
        spk = SpikingConfig(n_out=10, encoder=SpikeEncoderConfig(steps=6, active_window=2))
        img = rng.uniform(0, 1, 10)
        a = classify(layer, img, book, spiking_runner(spk, seed=4), SigmoidProb())
        b = classify(layer, img, book, spiking_runner(spk, seed=4), SigmoidProb())
        assert a == b


class TestCollectAndEvaluate:
    def test_latents_match_direct_forward(self, synthetic_data):
        rng = np.random.default_rng(11)
        layer = trained_like_layer(rng, 14, 120)
        sub = Dataset(synthetic_data.test.images[:30], synthetic_data.test.labels[:30])
        dump = collect_latents(layer, sub, synthetic_data.codebook, analog_runner(), "tag")
        from ffa.analog import forward
        from ffa.data import embed

        for q in (0, 7, 29):
            x = embed(sub.images[q], int(sub.labels[q]), synthetic_data.codebook)
            _, latent = forward(layer, x)
            assert np.allclose(dump.latents[q], latent, rtol=1e-13)
        assert dump.model_tag == "tag"

    def test_evaluate_report_fields(self, synthetic_data):
        rng = np.random.default_rng(12)
        layer = trained_like_layer(rng, 14, 120)
        sub = Dataset(synthetic_data.test.images[:50], synthetic_data.test.labels[:50])
        report, dump = evaluate(layer, sub, synthetic_data.codebook, analog_runner(),
                                SymmetricProb(), model_tag="probe")
        assert 0.0 <= report.accuracy <= 1.0
        assert 0.0 <= report.hoyer_mean <= 1.0
        assert 0.0 <= report.separability <= 1.0
        assert dump.latents.shape == (50, 14)
        text = report.format()
        assert "accuracy:" in text and "separability:" in text
