import numpy as np
import pytest

from clusterns.datasynth import (
    MixtureSpec,
    generate,
    read_dataset,
    read_scored_pairs,
    write_dataset,
    write_scored_pairs,
)
from clusterns.errors import ConfigError, EmptyInputError, GenerationError, ParseError
from clusterns.evaluation import ScoredPairSet


def spec(**overrides):
    base = dict(
        num_classes=4, dim=16, samples_per_class=8,
        intra_concentration=0.1, min_inter_cosine_gap=0.8, seed=7,
    )
    base.update(overrides)
    return MixtureSpec(**base)


class TestMixtureSpec:
    @pytest.mark.parametrize(
        "overrides",
        [dict(num_classes=1), dict(dim=1), dict(samples_per_class=1),
         dict(intra_concentration=-0.1), dict(min_inter_cosine_gap=-0.5),
         dict(min_inter_cosine_gap=2.5)],
    )
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            spec(**overrides)


class TestGenerate:
    def test_deterministic(self):
        a = generate(spec())
        b = generate(spec())
        np.testing.assert_array_equal(a.embeddings, b.embeddings)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_balanced_labels(self):
        dataset = generate(spec(samples_per_class=11))
        counts = np.bincount(dataset.labels)
        assert list(counts) == [11, 11, 11, 11]

    def test_zero_noise_collapses_to_directions(self):
        dataset = generate(spec(intra_concentration=0.0))
        for c in range(4):
            rows = dataset.embeddings[dataset.labels == c]
            np.testing.assert_array_equal(rows, np.tile(rows[0], (len(rows), 1)))

    def test_direction_separation_holds(self):
        dataset = generate(spec(intra_concentration=0.0, min_inter_cosine_gap=0.8))
        directions = np.stack(
            [dataset.embeddings[dataset.labels == c][0] for c in range(4)]
        )
        sims = directions @ directions.T
        np.fill_diagonal(sims, -1.0)
        assert sims.max() <= 0.2 + 1e-12

    def test_unit_norm_samples(self):
        dataset = generate(spec())
        np.testing.assert_allclose(
            np.linalg.norm(dataset.embeddings, axis=1), 1.0, atol=1e-12
        )

    def test_within_class_tighter_than_between(self):
        dataset = generate(spec(samples_per_class=32))
        sims = dataset.embeddings @ dataset.embeddings.T
        same = dataset.labels[:, None] == dataset.labels[None, :]
        np.fill_diagonal(same, False)
        off = ~np.eye(len(dataset), dtype=bool)
        assert sims[same].mean() > sims[off & ~same].mean()

    def test_impossible_separation_fails(self):
        # only three directions fit pairwise cosine <= -0.5 in the plane
        with pytest.raises(GenerationError):
            generate(spec(num_classes=4, dim=2, min_inter_cosine_gap=1.5))

    def test_many_classes_supported(self):
        dataset = generate(spec(num_classes=8, samples_per_class=4))
        assert dataset.num_classes == 8


class TestDatasetRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        dataset = generate(spec())
        path = tmp_path / "data.tsv"
        write_dataset(path, dataset)
        loaded = read_dataset(path)
        np.testing.assert_array_equal(loaded.embeddings, dataset.embeddings)
        np.testing.assert_array_equal(loaded.labels, dataset.labels)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        with pytest.raises(EmptyInputError):
            read_dataset(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.tsv"
        path.write_text("clusterns-dataset v1 dim=4\n")
        with pytest.raises(EmptyInputError):
            read_dataset(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("nonsense\n0\t1.0\n")
        with pytest.raises(ParseError) as excinfo:
            read_dataset(path)
        assert excinfo.value.line == 1

    def test_non_numeric_coordinate_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text(
            "clusterns-dataset v1 dim=2\n0\t1.0\t0.0\n1\t0.5\tpotato\n"
        )
        with pytest.raises(ParseError) as excinfo:
            read_dataset(path)
        assert excinfo.value.line == 3

    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("clusterns-dataset v1 dim=3\n0\t1.0\t0.0\n")
        with pytest.raises(ParseError) as excinfo:
            read_dataset(path)
        assert excinfo.value.line == 2


class TestScoredPairRoundTrip:
    def make_pairs(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((6, 5))
        b = rng.standard_normal((6, 5))
        gold = rng.uniform(0.0, 5.0, size=6)
        return ScoredPairSet(a, b, gold)

    def test_round_trip(self, tmp_path):
        pairs = self.make_pairs()
        path = tmp_path / "pairs.tsv"
        write_scored_pairs(path, pairs)
        loaded = read_scored_pairs(path)
        np.testing.assert_array_equal(loaded.embeddings_a, pairs.embeddings_a)
        np.testing.assert_array_equal(loaded.embeddings_b, pairs.embeddings_b)
        np.testing.assert_array_equal(loaded.gold_scores, pairs.gold_scores)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("clusterns-pairs v1 dim=2\n3.5\t1.0\t0.0\t0.5\n")
        with pytest.raises(ParseError) as excinfo:
            read_scored_pairs(path)
        assert excinfo.value.line == 2
