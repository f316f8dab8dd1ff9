import numpy as np
import pytest

from nsm.clustering import KMeansConfig, kmeans
from nsm.core import Clustering, Dataset
from nsm.errors import BadProbeCount, LengthMismatch
from nsm.ivf import SENTINEL, accuracy, accuracy_grid, build, route, search
from nsm.neighbors import exact_knn
from oracles import naive_knn
from conftest import line_data


@pytest.fixture
def line_index(x_line):
    return build(x_line, Clustering([0, 0, 1, 1], 2))


class TestBuild:
    def test_postings(self, line_index):
        assert [p.tolist() for p in line_index.postings] == [[0, 1], [2, 3]]
        np.testing.assert_allclose(line_index.centroids[:, 0], [0.5, 10.5])

    def test_empty_cluster_kept(self, x_line):
        idx = build(x_line, Clustering([0, 0, 2, 2], 3))
        assert [p.tolist() for p in idx.postings] == [[0, 1], [], [2, 3]]
        assert search(idx, [5.0], 2, 3).ids.tolist() == [1, 0]

    def test_rebuild_from_assignment(self, x_line, tmp_path):
        from nsm import io

        c = Clustering([1, 0, 1, 0], 2)
        io.write_assignment(tmp_path / "a.ivecs", c.assignment)
        again = io.load_clustering(tmp_path / "a.ivecs")
        a, b = build(x_line, c), build(x_line, again)
        assert all(np.array_equal(p, q) for p, q in zip(a.postings, b.postings))
        assert np.array_equal(a.centroids, b.centroids)

    def test_cosine_means_normalized(self):
        data = Dataset([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 5.0]], "cosine")
        idx = build(data, Clustering([0, 0, 1, 1], 2))
        np.testing.assert_allclose(np.linalg.norm(idx.centroids, axis=1), 1.0)


class TestRoute:
    def test_query_at_centroid(self):
        rng = np.random.default_rng(0)
        data = Dataset(rng.standard_normal((100, 3)))
        c = kmeans(data, KMeansConfig("standard", 6, 10, 0))
        idx = build(data, c)
        assert route(idx, idx.centroids[3], 1)[0] == 3

    def test_x_line(self, line_index):
        assert route(line_index, [0.4], 1).tolist() == [0]

    def test_all_clusters_tie_order(self, x_line):
        idx = build(x_line, Clustering([0, 1, 2, 3], 4, centroids=[[1.0], [-1.0], [3.0], [-3.0]]))
        assert route(idx, [0.0], 4).tolist() == [0, 1, 2, 3]

    def test_bad_probe_count(self, line_index):
        for p in (0, 3):
            with pytest.raises(BadProbeCount):
                route(line_index, [0.0], p)

    def test_scale_invariant(self):
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((200, 4))
        q = rng.standard_normal((20, 4))
        c = kmeans(Dataset(pts), KMeansConfig("standard", 10, 10, 0))
        a = build(Dataset(pts), Clustering(c.assignment, 10))
        b = build(Dataset(pts * 4.0), Clustering(c.assignment, 10))
        for row in q:
            assert route(a, row, 10).tolist() == route(b, row * 4.0, 10).tolist()


class TestSearch:
    def test_x_line(self, line_index):
        res = search(line_index, [0.4], 2, 1)
        assert sorted(res.ids.tolist()) == [0, 1] and not res.short

    def test_short_result(self, line_index):
        res = search(line_index, [5.4], 3, 1)
        assert res.short and res.ids.size == 2

    @pytest.mark.parametrize("metric", ["euclidean", "cosine", "inner_product"])
    def test_full_probe_equals_exact(self, metric):
        rng = np.random.default_rng(3)
        data = Dataset(rng.standard_normal((150, 5)), metric)
        variant = "standard" if metric == "euclidean" else "spherical"
        idx = build(data, kmeans(data, KMeansConfig(variant, 7, 10, 1)))
        q = rng.standard_normal((15, 5)).astype(np.float32)
        exact = exact_knn(data, q, k=6).ids
        for i in range(15):
            assert search(idx, q[i], 6, 7).ids.tolist() == exact[i].tolist()
        assert exact.tolist() == naive_knn(data.points, metric, 6, q)


class TestAccuracy:
    def test_partial_overlap(self):
        assert accuracy([[1, 2, 3, 9, 10]], [[1, 2, 3, 4, 5]], 5) == pytest.approx(0.6)

    def test_identical(self):
        assert accuracy([[4, 5, 6]], [[4, 5, 6]], 3) == 1.0

    def test_mean_over_queries(self):
        gt = [[0, 1, 2, 3, 4]] * 3
        res = [[0, 1, 2, 3, 4], [0, 1, 2, 7, 8], [4, 9, 9, 9, 9]]
        assert accuracy(res, gt, 5) == pytest.approx(0.6)

    def test_short_rows_count_as_misses(self):
        assert accuracy([[1]], [[1, 2]], 2) == 0.5
        assert SENTINEL < 0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            accuracy([[1]], [[1], [2]], 1)


class TestGrid:
    def test_matches_per_query_search(self):
        rng = np.random.default_rng(4)
        data = Dataset(rng.standard_normal((400, 6)))
        idx = build(data, kmeans(data, KMeansConfig("standard", 12, 10, 0)))
        q = rng.standard_normal((30, 6)).astype(np.float32)
        gt = exact_knn(data, q, k=10).ids
        grid = accuracy_grid(idx, q, gt, [5, 10], [1, 2, 4, 12])
        for k in (5, 10):
            for p in (1, 2, 4, 12):
                res = [search(idx, row, k, p).ids for row in q]
                assert grid[(k, p)] == pytest.approx(accuracy(res, gt, k), abs=1e-15)
        assert grid[(10, 12)] == 1.0

    def test_monotone_in_probes(self):
        rng = np.random.default_rng(5)
        data = Dataset(rng.standard_normal((600, 4)), "cosine")
        idx = build(data, kmeans(data, KMeansConfig("spherical", 20, 10, 0)))
        q = rng.standard_normal((50, 4)).astype(np.float32)
        gt = exact_knn(data, q, k=10).ids
        grid = accuracy_grid(idx, q, gt, [10], list(range(1, 21)))
        accs = [grid[(10, p)] for p in range(1, 21)]
        assert all(b >= a for a, b in zip(accs, accs[1:]))
        assert accs[-1] == 1.0

    def test_bad_probe(self, line_index):
        with pytest.raises(BadProbeCount):
            accuracy_grid(line_index, np.zeros((1, 1)), np.array([[0]]), [1], [3])

    def test_short_shards_in_grid(self):
        data = line_data([0, 1, 10, 11, 12])
        idx = build(data, Clustering([0, 0, 1, 1, 1], 2))
        gt = exact_knn(data, np.array([[0.2]], dtype=np.float32), k=3).ids
        assert accuracy_grid(idx, np.array([[0.2]]), gt, [3], [1])[(3, 1)] == pytest.approx(2 / 3)
