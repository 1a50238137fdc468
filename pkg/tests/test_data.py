import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fwl.data import (
    Dataset,
    DeploymentSplit,
    EmbeddingTable,
    SyntheticTaskSpec,
    convert_dbpedia_csv,
    embed_document,
    generate_synthetic,
    load_embeddings,
    read_jsonl,
    read_labels,
    split_dataset,
    synthetic_centers,
    tokenize,
    write_jsonl,
    write_labels,
)

from conftest import make_dataset


def table(**vecs):
    vecs = {k: np.asarray(v, dtype=float) for k, v in vecs.items()}
    return EmbeddingTable(vecs, len(next(iter(vecs.values()))))


class TestEmbedDocument:
    def test_single_token(self):
        np.testing.assert_array_equal(embed_document("Cat", table(cat=[1.0, 2.0])), [1.0, 2.0])

    def test_opposites_cancel(self):
        np.testing.assert_array_equal(embed_document("up down", table(up=[1.0, -2.0], down=[-1.0, 2.0])), [0, 0])

    def test_occurrence_weighted_mean(self):
        np.testing.assert_allclose(embed_document("a b a", table(a=[1, 0], b=[0, 3])), [2 / 3, 1.0], rtol=1e-15)

    def test_oov_skipped_and_counted(self):
        t = table(a=[2.0, 2.0])
        np.testing.assert_array_equal(embed_document("a zzz", t), [2.0, 2.0])
        np.testing.assert_array_equal(embed_document("zzz yyy", t), [0.0, 0.0])
        assert t.oov_documents == 1

    def test_punctuation_and_case(self):
        assert tokenize("Hello, World! it's") == ["hello", "world", "it", "s"]

    def test_empty_table(self):
        with pytest.raises(ValueError):
            embed_document("a", EmbeddingTable({}, 2))

    @given(st.permutations(["a", "b", "c", "a", "d"]))
    def test_permutation_invariant(self, tokens):
        t = table(a=[1.0, 0.5], b=[-2.0, 1.0], c=[0.25, 4.0])
        np.testing.assert_allclose(embed_document(" ".join(tokens), t), embed_document("a b c a d", t), atol=1e-15)


class TestFiles:
    def test_embeddings_file(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("the 0.1 0.2 0.3\ncat 1 2 3\ndog -1 -2 -3\n")
        t = load_embeddings(p, vocab={"cat", "dog"})
        assert t.dim == 3 and t.vocab_size == 2
        np.testing.assert_array_equal(t.vectors["cat"], [1, 2, 3])

    def test_embeddings_ragged(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("a 1 2\nb 1\n")
        with pytest.raises(ValueError):
            load_embeddings(p)

    def test_jsonl_round_trip(self, tmp_path):
        d = make_dataset(7, 3, 4, 0)
        write_jsonl(tmp_path / "d.jsonl", d)
        back = read_jsonl(tmp_path / "d.jsonl", 4)
        assert back.content_hash() == d.content_hash()

    def test_jsonl_text(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text(json.dumps({"id": "x1", "text": "a b a", "label": 1}) + "\n")
        d = read_jsonl(p, 2, table(a=[1, 0], b=[0, 3]))
        np.testing.assert_allclose(d.features[0], [2 / 3, 1.0])
        with pytest.raises(ValueError):
            read_jsonl(p, 2)

    def test_labels_file(self, tmp_path):
        write_labels(tmp_path / "l.txt", ["Person", "Place"])
        assert read_labels(tmp_path / "l.txt") == ["Person", "Place"]

    def test_dbpedia_conversion(self, tmp_path):
        csv_path = tmp_path / "train.csv"
        csv_path.write_text('text,l1,l2,l3\n"Alpha is a town",Place,Settlement,Town\n'
                            '"Beta, a singer",Agent,Person,Singer\n"Gamma town",Place,Settlement,Town\n')
        labels = convert_dbpedia_csv(csv_path, tmp_path / "train.jsonl")
        assert labels == ["Town", "Singer"]
        recs = [json.loads(line) for line in (tmp_path / "train.jsonl").read_text().splitlines()]
        assert [r["label"] for r in recs] == [0, 1, 0]
        assert recs[1]["text"] == "Beta, a singer"


class TestSplit:
    def test_ten_ninety(self):
        s = split_dataset(make_dataset(100, 2, 3, 0), 0.1, seed=5)
        assert (len(s.train), len(s.deployment)) == (10, 90)

    def test_floor_rounding(self):
        s = split_dataset(make_dataset(3, 2, 3, 0), 0.5, seed=5)
        assert (len(s.train), len(s.deployment)) == (1, 2)

    def test_float_representation_does_not_lose_an_example(self):
        # 100 * 0.29 == 28.999999999999996 in binary floating point
        assert len(split_dataset(make_dataset(100, 2, 3, 0), 0.29, seed=0).train) == 29

    def test_deterministic(self):
        d = make_dataset(50, 2, 3, 0)
        a, b = split_dataset(d, 0.2, 9), split_dataset(d, 0.2, 9)
        assert a.train.ids.tolist() == b.train.ids.tolist()

    def test_dev_test_untouched(self):
        dev, test = make_dataset(5, 2, 3, 1, "dev"), make_dataset(6, 2, 3, 2, "test")
        s = split_dataset(make_dataset(20, 2, 3, 0), 0.1, 0, dev, test)
        assert s.dev is dev and s.test is test

    def test_errors(self):
        with pytest.raises(ValueError):
            split_dataset(make_dataset(10, 2, 3, 0), 1.0, 0)
        with pytest.raises(ValueError):
            split_dataset(make_dataset(0, 2, 3, 0), 0.5, 0)

    @given(st.integers(1, 60), st.floats(0.01, 0.99), st.integers(0, 1000))
    def test_partition(self, n, frac, seed):
        d = make_dataset(n, 2, 3, 0)
        s = split_dataset(d, frac, seed)
        tr, de = set(s.train.ids.tolist()), set(s.deployment.ids.tolist())
        assert not tr & de and tr | de == set(d.ids.tolist())

    def test_overlapping_partitions_rejected(self):
        d = make_dataset(4, 2, 3, 0)
        with pytest.raises(ValueError):
            DeploymentSplit(d, d.subset([0]), d.subset([]), d.subset([]))


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.array(["a", "a"], dtype=object), np.zeros((2, 1)), np.zeros(2), 2)
        with pytest.raises(ValueError):
            Dataset(np.array(["a"], dtype=object), np.zeros((1, 1)), np.array([3]), 2)
        with pytest.raises(ValueError):
            Dataset(np.array(["a"], dtype=object), np.array([[np.inf]]), np.array([0]), 2)


class TestSynthetic:
    def test_deterministic_and_balanced(self):
        spec = SyntheticTaskSpec(num_classes=4, dim=3, per_class=10, dev_per_class=2, test_per_class=3, seed=3)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        for x, y in zip(a, b):
            assert x.content_hash() == y.content_hash()
        assert np.bincount(a[0].labels).tolist() == [10] * 4
        assert (len(a[1]), len(a[2])) == (8, 12)

    def test_separable_limit(self):
        spec = SyntheticTaskSpec(num_classes=6, dim=5, per_class=20, noise=1e-6, seed=1)
        _, _, test = generate_synthetic(spec)
        centers = synthetic_centers(spec)
        dist = ((test.features[:, None, :] - centers[None]) ** 2).sum(-1)
        assert np.mean(dist.argmin(1) == test.labels) == 1.0

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticTaskSpec(num_classes=1)
        with pytest.raises(ValueError):
            SyntheticTaskSpec(noise=0.0)
