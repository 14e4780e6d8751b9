import numpy as np
import pytest

from ledgs.localization import (QueryEmbedding, RelevanceMap, localize,
                                localize_refined, mask_2d, refine_precision,
                                refine_recall, relevance_map, scores_for_features)
from ledgs.metrics import miou
from ledgs.quantizer import Codebook
from ledgs.semantics import Decoder, decode_gaussians, expected_embedding
from ledgs.synthetic import make_localization_fixture


@pytest.fixture(scope="module")
def clean_fixture():
    return make_localization_fixture(seed=0)


@pytest.fixture(scope="module")
def planted_fixture():
    return make_localization_fixture(seed=0, plant_fn=0.10, plant_fp=0.10)


def saturated_decoder(d_f, n, hot):
    """Decoder whose output is exactly one-hot at `hot` for any input."""
    dec = Decoder(np.zeros((d_f, 4)), np.zeros(4), np.zeros((4, n)), np.zeros(n))
    dec.b2[hot] = 800.0
    return dec


class TestQueryEmbedding:
    def test_normalized_at_load(self):
        q = QueryEmbedding([3.0, 0.0, 4.0], "x")
        assert abs(np.linalg.norm(q.vector) - 1.0) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            QueryEmbedding([0.0, 0.0], "zero")


class TestRelevanceMap:
    def test_one_hot_pixel_full_relevance(self, clean_fixture):
        fx = clean_fixture
        dec = saturated_decoder(fx.scene.d_f, fx.codebook.n_entries, hot=0)
        query = QueryEmbedding(fx.codebook.entries[0], "entry-0")
        rel = relevance_map(fx.scene, dec, fx.codebook, query, 0, fx.cams[0])
        covered = rel.values[rel.values > -1.0]
        assert covered.size > 0
        assert np.allclose(covered, 1.0, atol=1e-12)

    def test_orthogonal_query_zero_relevance(self, clean_fixture):
        fx = clean_fixture
        c = fx.codebook.dim
        ortho = np.zeros(c)
        # orthonormal prototypes occupy the first rows of a QR basis; build
        # a vector orthogonal to all entries by Gram-Schmidt
        rng = np.random.default_rng(5)
        v = rng.normal(size=c)
        for row in fx.codebook.entries:
            v -= (v @ row) / (row @ row) * row
        query = QueryEmbedding(v, "ortho")
        rel = relevance_map(fx.scene, fx.decoder, fx.codebook, query, 0, fx.cams[0])
        covered = rel.values[rel.values > -1.0]
        assert np.max(np.abs(covered)) < 1e-6

    def test_matches_per_pixel_loop_oracle(self, clean_fixture):
        fx = clean_fixture
        from ledgs.rasterizer import render
        query = fx.queries[0]
        out = render(fx.scene, 1, fx.cams[1], channels="feature")
        rel = relevance_map(fx.scene, fx.decoder, fx.codebook, query, 1, fx.cams[1])
        h, w = out.alpha.shape
        for i in range(0, h, 7):
            for j in range(0, w, 7):
                if out.alpha[i, j] < 0.5:
                    assert rel.values[i, j] == -1.0
                    continue
                probs = decode_gaussians(out.feature[i, j][None, :], fx.decoder)[0]
                emb = expected_embedding(probs, fx.codebook.entries)
                expected = emb @ query.vector / np.linalg.norm(emb)
                assert abs(rel.values[i, j] - expected) < 1e-6


class TestMask2d:
    def test_strict_inequality_at_threshold(self):
        rel = RelevanceMap(np.array([[0.95, 0.9500001], [0.2, -1.0]]), 0)
        mask = mask_2d(rel, 0.95)
        assert mask.tolist() == [[False, True], [False, False]]

    def test_default_threshold(self):
        rel = RelevanceMap(np.array([[1.0]]), 0)
        assert mask_2d(rel, 0.95)[0, 0]

    def test_all_invalid_empty(self):
        rel = RelevanceMap(np.full((3, 3), -1.0), 0)
        assert not mask_2d(rel, 0.95).any()


class TestLocalize:
    def test_matches_brute_force_oracle_exactly(self, clean_fixture):
        fx = clean_fixture
        for query in fx.queries:
            result = localize(fx.scene, fx.decoder, fx.codebook, query, 0.95)
            selected = []
            for g in range(fx.scene.n_total):
                probs = decode_gaussians(fx.scene.feat[g][None, :], fx.decoder)[0]
                emb = probs @ fx.codebook.entries
                score = emb @ query.vector / np.linalg.norm(emb)
                if score > 0.95:
                    selected.append(g)
            assert np.array_equal(result.l3d, np.array(selected, dtype=int))
            assert result.consistent()

    def test_selects_target_cluster(self, clean_fixture):
        fx = clean_fixture
        result = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        assert np.array_equal(result.l3d, fx.membership["cluster-0"])

    def test_tau_one_empty(self, clean_fixture):
        fx = clean_fixture
        result = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], 1.0)
        assert result.l3d.size == 0
        assert any("empty" in str(entry) for entry in result.log)

    def test_tau_minus_one_selects_all(self, clean_fixture):
        fx = clean_fixture
        result = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], -1.0)
        assert result.l3d.size == fx.scene.n_total

    def test_query_scale_invariance(self, clean_fixture):
        fx = clean_fixture
        raw = fx.codebook.entries[0]
        a = localize(fx.scene, fx.decoder, fx.codebook, QueryEmbedding(raw, "a"), 0.95)
        b = localize(fx.scene, fx.decoder, fx.codebook, QueryEmbedding(2.0 * raw, "b"), 0.95)
        assert np.array_equal(a.l3d, b.l3d)


class TestRefineRecall:
    def test_zero_epochs_unchanged(self, planted_fixture):
        fx = planted_fixture
        out, log = refine_recall(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                 0.95, fx.frames, 0)
        assert np.array_equal(out.feat, fx.scene.feat)
        assert log == []

    def test_recovers_planted_false_negatives(self, planted_fixture):
        fx = planted_fixture
        query = fx.queries[0]
        planted = fx.planted_fn["cluster-0"]
        before = localize(fx.scene, fx.decoder, fx.codebook, query, 0.95)
        assert not np.isin(planted, before.l3d).any()
        refined, _ = refine_recall(fx.scene, fx.decoder, fx.codebook, query, 0.95,
                                   fx.frames, 50)
        after = localize(refined, fx.decoder, fx.codebook, query, 0.95)
        recovered = np.isin(planted, after.l3d).mean()
        assert recovered >= 0.95

    def test_clean_fixture_stable(self, clean_fixture):
        fx = clean_fixture
        base = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        refined, _ = refine_recall(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                   0.95, fx.frames, 50)
        after = localize(refined, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        assert len(set(base.l3d.tolist()) ^ set(after.l3d.tolist())) <= 1

    def test_never_touches_selected_features(self, planted_fixture):
        fx = planted_fixture
        query = fx.queries[0]
        selected = localize(fx.scene, fx.decoder, fx.codebook, query, 0.95).selected_mask()
        refined, _ = refine_recall(fx.scene, fx.decoder, fx.codebook, query, 0.95,
                                   fx.frames, 5)
        assert np.array_equal(refined.feat[selected], fx.scene.feat[selected])

    def test_empty_mask_warns(self, clean_fixture):
        fx = clean_fixture
        hopeless = QueryEmbedding(np.ones(fx.codebook.dim), "nothing")
        with pytest.warns(UserWarning, match="empty 2D mask"):
            out, _ = refine_recall(fx.scene, fx.decoder, fx.codebook, hopeless,
                                   0.9999999, fx.frames, 3)
        assert np.array_equal(out.feat, fx.scene.feat)


class TestRefinePrecision:
    def test_zero_epochs_unchanged(self, planted_fixture):
        fx = planted_fixture
        out, log = refine_precision(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                    0.95, fx.frames, 0)
        assert np.array_equal(out.feat, fx.scene.feat)

    def test_removes_planted_false_positives(self, planted_fixture):
        fx = planted_fixture
        query = fx.queries[0]
        planted = fx.planted_fp["cluster-0"]
        before = localize(fx.scene, fx.decoder, fx.codebook, query, 0.95)
        assert np.isin(planted, before.l3d).all()
        refined, _ = refine_precision(fx.scene, fx.decoder, fx.codebook, query, 0.95,
                                      fx.frames, 10)
        after = localize(refined, fx.decoder, fx.codebook, query, 0.95)
        removed = 1.0 - np.isin(planted, after.l3d).mean()
        assert removed >= 0.95

    def test_clean_fixture_stable_within_one(self, clean_fixture):
        fx = clean_fixture
        base = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        refined, _ = refine_precision(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                      0.95, fx.frames, 10)
        after = localize(refined, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        assert len(set(base.l3d.tolist()) ^ set(after.l3d.tolist())) <= 1

    def test_frozen_features_untouched(self, planted_fixture):
        """Selected Gaussians projecting mostly inside the mask are frozen."""
        fx = planted_fixture
        query = fx.queries[0]
        members = fx.membership["cluster-0"]
        interior = members[:5]  # cluster cores live inside the mask
        refined, _ = refine_precision(fx.scene, fx.decoder, fx.codebook, query, 0.95,
                                      fx.frames, 10)
        assert np.array_equal(refined.feat[interior], fx.scene.feat[interior])


class TestLocalizeRefined:
    def test_clean_fixture_identical_to_plain(self, clean_fixture):
        fx = clean_fixture
        plain = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        refined, _ = localize_refined(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                      0.95, n_epochs=50, m_epochs=10, frames=fx.frames)
        assert np.array_equal(plain.l3d, refined.l3d)

    def test_zero_epochs_identical_to_plain(self, planted_fixture):
        fx = planted_fixture
        plain = localize(fx.scene, fx.decoder, fx.codebook, fx.queries[0], 0.95)
        refined, scene2 = localize_refined(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                           0.95, n_epochs=0, m_epochs=0, frames=fx.frames)
        assert np.array_equal(plain.l3d, refined.l3d)
        assert np.array_equal(scene2.feat, fx.scene.feat)

    @pytest.mark.filterwarnings("ignore:precision refinement")
    def test_improves_f1_on_planted_fixture(self, planted_fixture):
        fx = planted_fixture
        query = fx.queries[0]
        members = set(fx.membership["cluster-0"].tolist())

        def f1(l3d):
            sel = set(l3d.tolist())
            tp = len(sel & members)
            if tp == 0:
                return 0.0
            precision = tp / len(sel)
            recall = tp / len(members)
            return 2 * precision * recall / (precision + recall)

        plain = localize(fx.scene, fx.decoder, fx.codebook, query, 0.95)
        refined, _ = localize_refined(fx.scene, fx.decoder, fx.codebook, query, 0.95,
                                      n_epochs=50, m_epochs=10, frames=fx.frames)
        assert f1(refined.l3d) > f1(plain.l3d)
        assert refined.consistent()
        assert miou(refined.l3d, fx.membership["cluster-0"]) > miou(plain.l3d, fx.membership["cluster-0"])

    @pytest.mark.filterwarnings("ignore:precision refinement")
    def test_trajectory_logged(self, planted_fixture):
        fx = planted_fixture
        refined, _ = localize_refined(fx.scene, fx.decoder, fx.codebook, fx.queries[0],
                                      0.95, n_epochs=3, m_epochs=2, frames=fx.frames)
        kinds = [entry[0] for entry in refined.log]
        assert "init" in kinds and "recall_epoch" in kinds and "precision_epoch" in kinds


class TestScoresForFeatures:
    def test_zero_embedding_scores_minus_one(self):
        book = Codebook(np.zeros((3, 4)))
        dec = Decoder.create(8, 3, seed=0)
        scores = scores_for_features(np.zeros((2, 8)), dec, book,
                                     QueryEmbedding(np.ones(4), "q"))
        assert np.all(scores == -1.0)
