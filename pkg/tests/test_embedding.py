import numpy as np
import pytest

from kgalign.config import OptimizerConfig
from kgalign.embedding import (AMSGrad, KGBatch, TextBatch, gcn_forward,
                               context_pairs, init_space, kg_loss,
                               negative_triples, read_embeddings, text_loss,
                               train, train_with_history, triple_score,
                               write_embeddings)
from kgalign.grounding import entity_token, lexeme
from kgalign.kg import (build_graph_structure, from_string_triples,
                        relation_stats)

from conftest import make_corpus, random_corpus, random_kg, small_config
from oracles import finite_difference_grad, relative_error


def make_space(kg, corpus, cfg, seed=0):
    rng = np.random.default_rng(seed)
    return init_space(kg, corpus, cfg, rng)


def random_instance(seed, gcn=True, activation="tanh", dim=4):
    rng = np.random.default_rng(seed)
    kg = random_kg(rng, n_entities=int(rng.integers(4, 10)),
                   n_triples=int(rng.integers(8, 16)))
    corpus = random_corpus(rng, kg)
    cfg = small_config(dim=dim, gcn_enabled=gcn, activation=activation)
    space = init_space(kg, corpus, cfg, rng)
    graph = build_graph_structure(kg)
    stats = relation_stats(kg)
    return rng, kg, corpus, cfg, space, graph, stats


def random_kg_batch(rng, kg, stats, bsz=3, m=2):
    pos_idx = rng.integers(len(kg.triples), size=bsz)
    pos = np.array([kg.triples[i] for i in pos_idx])
    neg_h = np.array([
        [negative_triples(tuple(p), stats, kg, 1, rng)[0][0] for _ in range(m)]
        for p in pos])
    neg_t = np.array([
        [int(rng.integers(kg.n_entities)) for _ in range(m)] for _ in pos])
    return KGBatch(positives=pos, neg_heads=neg_h, neg_tails=neg_t)


def random_text_batch(rng, space, bsz=4, m=3):
    n = space.n_tokens
    return TextBatch(centers=rng.integers(n, size=bsz),
                     contexts=rng.integers(n, size=bsz),
                     negatives=rng.integers(n, size=(bsz, m)))


class TestGCNForward:
    def test_single_node_identity(self):
        kg = from_string_triples([("a", "r", "a")], "xx")
        corpus = make_corpus([["w"]])
        cfg = small_config(dim=3, activation="identity")
        space = make_space(kg, corpus, cfg)
        space.gcn_weights[0] = np.eye(3)
        graph = build_graph_structure(kg)
        np.testing.assert_allclose(gcn_forward(space, graph), space.ent0)

    def test_two_nodes_average(self):
        kg = from_string_triples([("a", "r", "b")], "xx")
        corpus = make_corpus([["w"]])
        cfg = small_config(dim=3, activation="identity")
        space = make_space(kg, corpus, cfg)
        space.gcn_weights[0] = np.eye(3)
        graph = build_graph_structure(kg)
        out = gcn_forward(space, graph)
        avg = (space.ent0[0] + space.ent0[1]) / 2
        np.testing.assert_allclose(out[0], avg)
        np.testing.assert_allclose(out[1], avg)

    def test_zero_input_relu_zero_output(self):
        kg = from_string_triples([("a", "r", "b")], "xx")
        corpus = make_corpus([["w"]])
        space = make_space(kg, corpus, small_config(dim=3, activation="relu"))
        space.ent0[:] = 0.0
        graph = build_graph_structure(kg)
        np.testing.assert_allclose(gcn_forward(space, graph), 0.0)


class TestTripleScore:
    def test_exact_translation(self):
        assert triple_score(np.array([1.0, 0]), np.array([0, 1.0]),
                            np.array([1.0, 1.0])) == 0.0

    def test_three_four_five(self):
        assert triple_score(np.zeros(2), np.zeros(2),
                            np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_self_loop_zero_relation(self):
        h = np.array([0.3, -0.7])
        assert triple_score(h, np.zeros(2), h) == 0.0


class TestKGLoss:
    def equal_logit_space(self):
        kg = from_string_triples(
            [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")], "xx")
        corpus = make_corpus([["w"]])
        cfg = small_config(dim=4, gcn_enabled=False)
        space = make_space(kg, corpus, cfg)
        space.ent0[:] = 1.0
        space.rel[:] = 0.0
        return kg, space

    def test_equal_logits_ln6(self):
        kg, space = self.equal_logit_space()
        batch = KGBatch(positives=np.array([[0, 0, 1]]),
                        neg_heads=np.array([[1, 2, 0, 1, 2]]),
                        neg_tails=np.array([[2, 1, 2, 0, 0]]))
        loss, _ = kg_loss(batch, space, None, bias=2.0)
        assert loss == pytest.approx(np.log(6), abs=1e-9)

    def test_bias_cancels_for_equal_scores(self):
        kg, space = self.equal_logit_space()
        batch = KGBatch(positives=np.array([[0, 0, 1]]),
                        neg_heads=np.array([[1, 2]]),
                        neg_tails=np.array([[2, 0]]))
        loss_a, _ = kg_loss(batch, space, None, bias=1.0)
        loss_b, _ = kg_loss(batch, space, None, bias=7.0)
        assert loss_a == pytest.approx(loss_b)

    def test_dominant_positive_drives_loss_to_zero(self):
        kg = from_string_triples([("a", "r", "b")], "xx")
        corpus = make_corpus([["w"]])
        space = make_space(kg, corpus, small_config(dim=2, gcn_enabled=False))
        space.ent0[:] = [[0.0, 0.0], [0.0, 0.0]]
        space.rel[:] = 0.0
        far = np.array([[100.0, 0.0]])
        space.ent0 = np.vstack([space.ent0, far])
        batch = KGBatch(positives=np.array([[0, 0, 1]]),
                        neg_heads=np.array([[2]]),
                        neg_tails=np.array([[1]]))
        loss, _ = kg_loss(batch, space, None, bias=2.0)
        assert loss < 1e-8

    def test_loss_positive_and_finite(self):
        _, kg, _, cfg, space, graph, stats = random_instance(5)
        rng = np.random.default_rng(5)
        batch = random_kg_batch(rng, kg, stats)
        loss, _ = kg_loss(batch, space, graph, cfg.bias_b)
        assert np.isfinite(loss) and loss > 0

    @pytest.mark.parametrize("gcn", [True, False])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradients_match_finite_differences(self, gcn, seed):
        rng, kg, _, cfg, space, graph, stats = random_instance(
            seed, gcn=gcn)
        batch = random_kg_batch(rng, kg, stats)
        _, grads = kg_loss(batch, space, graph, cfg.bias_b)
        for name, param in space.parameters().items():
            if name == "lex":
                continue
            fd = finite_difference_grad(
                lambda: kg_loss(batch, space, graph, cfg.bias_b)[0], param)
            assert relative_error(grads[name], fd) < 1e-4, name


class TestTextLoss:
    def test_equal_distances_ln6(self):
        _, kg, corpus, cfg, space, graph, _ = random_instance(
            3, gcn=False)
        space.ent0[:] = 0.5
        space.lex[:] = 0.5
        batch = TextBatch(centers=np.array([0]), contexts=np.array([1]),
                          negatives=np.array([[0, 1, 2, 0, 1]]))
        loss, _ = text_loss(batch, space, None)
        assert loss == pytest.approx(np.log(6), abs=1e-9)

    def test_not_scale_invariant(self):
        rng, _, _, _, space, graph, _ = random_instance(9, gcn=False)
        batch = random_text_batch(rng, space)
        loss1, _ = text_loss(batch, space, None)
        space.ent0 *= 2.0
        space.lex *= 2.0
        loss2, _ = text_loss(batch, space, None)
        assert loss1 != pytest.approx(loss2)

    @pytest.mark.parametrize("gcn", [True, False])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradients_match_finite_differences(self, gcn, seed):
        rng, kg, _, cfg, space, graph, _ = random_instance(seed + 10, gcn=gcn)
        batch = random_text_batch(rng, space)
        _, grads = text_loss(batch, space, graph)
        for name, param in space.parameters().items():
            if name == "rel":
                continue
            fd = finite_difference_grad(
                lambda: text_loss(batch, space, graph)[0], param)
            assert relative_error(grads[name], fd) < 1e-4, name

    def test_shared_entity_storage_affects_both_losses(self):
        rng, kg, _, cfg, space, graph, stats = random_instance(21, gcn=False)
        kg_batch = random_kg_batch(rng, kg, stats)
        # entity 0 as a text token (unified index 0 is an entity)
        tx_batch = TextBatch(centers=np.array([0]),
                             contexts=np.array([space.n_entities]),
                             negatives=np.array([[1, 2]]))
        kg_batch = KGBatch(positives=np.array([[0, 0, 1]]),
                           neg_heads=kg_batch.neg_heads[:1],
                           neg_tails=kg_batch.neg_tails[:1])
        kg_before = kg_loss(kg_batch, space, None, cfg.bias_b)[0]
        tx_before = text_loss(tx_batch, space, None)[0]
        space.ent0[0] += 0.37
        assert kg_loss(kg_batch, space, None, cfg.bias_b)[0] != \
            pytest.approx(kg_before)
        assert text_loss(tx_batch, space, None)[0] != pytest.approx(tx_before)


class TestNegativeTriples:
    def test_symmetric_stats_prob_half(self):
        kg = from_string_triples(
            [("a", "r", "b"), ("a", "r", "c"), ("d", "r", "b")], "xx")
        stats = relation_stats(kg)
        assert stats.head_corruption_prob(0) == pytest.approx(0.5)

    def test_negatives_never_observed(self):
        rng = np.random.default_rng(0)
        kg = random_kg(rng, n_entities=6, n_triples=12)
        stats = relation_stats(kg)
        observed = kg.triple_set()
        for t in kg.triples[:5]:
            for neg in negative_triples(t, stats, kg, 10, rng):
                assert neg not in observed

    def test_head_corruption_frequency(self):
        # tph = 2, hpt = 1 -> head corrupted with probability 2/3
        kg = from_string_triples([("a", "r", "b"), ("a", "r", "c")], "xx")
        stats = relation_stats(kg)
        rng = np.random.default_rng(42)
        n = 100_000
        heads = 0
        for neg in negative_triples((0, 0, 1), stats, kg, n, rng):
            if neg[0] != 0:
                heads += 1
            else:
                assert neg[2] != 1
        assert abs(heads / n - 2 / 3) < 0.01

    def test_single_entity_rejected(self):
        kg = from_string_triples([("a", "r", "a")], "xx")
        stats = relation_stats(kg)
        with pytest.raises(ValueError):
            negative_triples((0, 0, 0), stats, kg, 1,
                             np.random.default_rng(0))


class TestContextPairs:
    @staticmethod
    def pairs_text(corpus, radius):
        return [(a.text, b.text) for a, b in context_pairs(corpus, radius)]

    def test_radius_one(self):
        corpus = make_corpus([["a", "b", "c"]])
        assert self.pairs_text(corpus, 1) == \
            [("a", "b"), ("b", "a"), ("b", "c"), ("c", "b")]

    def test_single_token_no_pairs(self):
        assert self.pairs_text(make_corpus([["a"]]), 3) == []

    def test_large_radius_all_ordered_pairs(self):
        corpus = make_corpus([["a", "b", "c", "d"]])
        pairs = self.pairs_text(corpus, 5)
        assert len(pairs) == 12
        assert len(set(pairs)) == 12

    def test_document_boundaries_respected(self):
        corpus = make_corpus([["a"], ["b"]])
        assert self.pairs_text(corpus, 2) == []


class TestAMSGrad:
    def test_converges_on_quadratic(self):
        x = np.array([5.0, -3.0])
        opt = AMSGrad({"x": x}, lr=0.1, beta1=0.9, beta2=0.999)
        for _ in range(2000):
            opt.step({"x": 2 * x})
        assert np.linalg.norm(x) < 1e-3

    def test_vhat_monotone(self):
        x = np.array([1.0])
        opt = AMSGrad({"x": x}, lr=0.01, beta1=0.9, beta2=0.999)
        prev = 0.0
        for g in [5.0, 0.1, 0.1, 0.1]:
            opt.step({"x": np.array([g])})
            assert opt.v_hat["x"][0] >= prev
            prev = opt.v_hat["x"][0]


class TestTrain:
    def test_zero_epochs_returns_initialized_space(self):
        rng = np.random.default_rng(0)
        kg = random_kg(rng, n_entities=5, n_triples=8)
        corpus = random_corpus(rng, kg)
        cfg = small_config(epochs=0)
        space = train(kg, corpus, cfg, seed=1)
        reference = init_space(kg, corpus, cfg, np.random.default_rng(1))
        np.testing.assert_array_equal(space.ent0, reference.ent0)
        np.testing.assert_array_equal(space.lex, reference.lex)

    def test_alternating_schedule(self):
        rng = np.random.default_rng(1)
        kg = random_kg(rng, n_entities=6, n_triples=10)
        corpus = random_corpus(rng, kg, n_docs=3, doc_len=12)
        _, history = train_with_history(kg, corpus, small_config(epochs=3),
                                        seed=0)
        assert history.kg_steps == history.text_steps > 0

    def test_gcn_disabled_output_equals_base(self):
        rng = np.random.default_rng(2)
        kg = random_kg(rng, n_entities=6, n_triples=10)
        corpus = random_corpus(rng, kg)
        cfg = small_config(epochs=2, gcn_enabled=False)
        space = train(kg, corpus, cfg, seed=3)
        np.testing.assert_array_equal(space.ent_out, space.ent0)

    def test_seeded_determinism(self):
        rng = np.random.default_rng(3)
        kg = random_kg(rng, n_entities=6, n_triples=10)
        corpus = random_corpus(rng, kg)
        cfg = small_config(epochs=3)
        a = train(kg, corpus, cfg, seed=7)
        b = train(kg, corpus, cfg, seed=7)
        for name in a.parameters():
            np.testing.assert_array_equal(a.parameters()[name],
                                          b.parameters()[name])

    def test_text_only_and_kg_only_modes(self):
        rng = np.random.default_rng(4)
        kg = random_kg(rng, n_entities=6, n_triples=10)
        corpus = random_corpus(rng, kg)
        _, hist = train_with_history(
            kg, corpus, small_config(epochs=2, use_kg_loss=False), seed=0)
        assert hist.kg_steps == 0 and hist.text_steps > 0
        _, hist = train_with_history(
            kg, corpus, small_config(epochs=2, use_text_loss=False), seed=0)
        assert hist.text_steps == 0 and hist.kg_steps > 0

    def test_all_parameters_finite_after_training(self):
        rng = np.random.default_rng(5)
        kg = random_kg(rng, n_entities=8, n_triples=14)
        corpus = random_corpus(rng, kg)
        space = train(kg, corpus, small_config(epochs=5), seed=0)
        assert space.all_finite()


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        kg = random_kg(rng, n_entities=5, n_triples=8)
        corpus = random_corpus(rng, kg)
        space = train(kg, corpus, small_config(epochs=1), seed=0)
        write_embeddings(space, tmp_path / "emb")
        tokens, mat = read_embeddings(tmp_path / "emb.vec")
        assert len(tokens) == space.n_tokens
        assert tokens[:space.n_entities] == \
            [f"@ent:{e}" for e in space.entities]
        np.testing.assert_array_equal(mat[:space.n_entities], space.ent_out)
        np.testing.assert_array_equal(mat[space.n_entities:], space.lex)
        rel_tokens, rel_mat = read_embeddings(tmp_path / "emb.rel.vec")
        assert tuple(rel_tokens) == space.relations
        np.testing.assert_array_equal(rel_mat, space.rel)

    def test_lexemes_frequency_ordered(self):
        corpus = make_corpus([["b", "a", "a", "a", "c", "c"]])
        kg = from_string_triples([("x", "r", "y")], "xx")
        space = init_space(kg, corpus, small_config(),
                           np.random.default_rng(0))
        assert space.lexemes == ("a", "c", "b")
