"""Model configuration, initialization, forward pass, and checkpoints."""

import numpy as np
import numpy.testing as npt
import pytest

from hlan import autodiff as ad
from hlan import model as M
from hlan.autodiff import Tensor
from hlan.corpus import EncodedDocument
from hlan.embeddings import EmbeddingTable, normalize_unit


def tiny_config(variant="hlan", **kw):
    defaults = dict(
        num_labels=4, vocab_size=50, d_e=8, d_h=8, d_w=16, d_s=16,
        n=3, n_t=5, variant=variant,
    )
    defaults.update(kw)
    return M.ModelConfig(**defaults)


def random_doc(rng, cfg, pad_tail=True):
    grid = rng.integers(2, cfg.vocab_size, size=(cfg.n, cfg.n_t))
    if pad_tail:
        for s in range(cfg.n):
            cut = int(rng.integers(0, cfg.n_t + 1))
            grid[s, cut:] = 0
        if rng.random() < 0.5:
            grid[rng.integers(0, cfg.n)] = 0  # a fully padded sentence
    tmask = grid != 0
    smask = tmask.any(axis=1)
    return grid, tmask, smask


def reference_forward(grid, tmask, smask, P, cfg):
    """Straight-line scalar-loop evaluation of the whole network.

    Plain numpy, one sentence / timestep / label at a time; exists only to
    cross-check the batched tape implementation.
    """

    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    def cell(e, h, pre):
        r = sig(e @ P[pre + ".w_er"] + h @ P[pre + ".w_hr"] + P[pre + ".b_r"])
        z = sig(e @ P[pre + ".w_ez"] + h @ P[pre + ".w_hz"] + P[pre + ".b_z"])
        c = np.tanh(e @ P[pre + ".w_eh"] + (r * h) @ P[pre + ".w_hh"])
        return (1 - z) * h + z * c

    def masked_softmax(sc, m):
        if not m.any():
            return np.full(len(sc), 1.0 / len(sc))
        e = np.exp(sc - sc[m].max()) * m
        return e / e.sum()

    n, n_t = grid.shape
    d_h = cfg.d_h
    l_w = P["v_w"].shape[0]
    l_s = P["v_s"].shape[0]

    cs = np.zeros((n, l_w, 2 * d_h))
    alpha_w = np.zeros((l_w, n, n_t))
    for s in range(n):
        H = np.zeros((n_t, 2 * d_h))
        h = np.zeros(d_h)
        for t in range(n_t):
            if tmask[s, t]:
                h = cell(P["w_e"][grid[s, t]], h, "word_fwd")
                H[t, :d_h] = h
        h = np.zeros(d_h)
        for t in range(n_t - 1, -1, -1):
            if tmask[s, t]:
                h = cell(P["w_e"][grid[s, t]], h, "word_bwd")
                H[t, d_h:] = h
        v = np.tanh(H @ P["w_w"] + P["b_w"])
        for l in range(l_w):
            a = masked_softmax(v @ P["v_w"][l], tmask[s])
            alpha_w[l, s] = a
            cs[s, l] = a @ H

    S = np.zeros((l_w, n, 4 * d_h))
    for l in range(l_w):
        h = np.zeros(2 * d_h)
        for r in range(n):
            if smask[r]:
                h = cell(cs[r, l], h, "sent_fwd")
                S[l, r, : 2 * d_h] = h
        h = np.zeros(2 * d_h)
        for r in range(n - 1, -1, -1):
            if smask[r]:
                h = cell(cs[r, l], h, "sent_bwd")
                S[l, r, 2 * d_h :] = h

    alpha_s = np.zeros((l_s, n))
    cd = np.zeros((l_s, 4 * d_h))
    for l in range(l_s):
        shared = min(l, l_w - 1)
        U = np.tanh(S[shared] @ P["w_s"] + P["b_s"])
        a = masked_softmax(U @ P["v_s"][l], smask)
        alpha_s[l] = a
        cd[l] = a @ S[shared]

    if cfg.variant == "han":
        probs = sig(P["w_proj"] @ cd[0] + P["b_proj"])
    else:
        probs = sig((P["w_proj"] * cd).sum(axis=1) + P["b_proj"])
    return probs, alpha_w, alpha_s


def arrays_of(params):
    return {name: t.data for name, t in params.named_tensors().items()}


class TestModelConfig:
    def test_attention_dims_default_to_squares(self):
        cfg = M.ModelConfig(num_labels=3, vocab_size=10, d_h=32)
        assert cfg.d_w == 64 and cfg.d_s == 128

    def test_doc_dim_at_defaults_is_400(self):
        cfg = M.ModelConfig(num_labels=3, vocab_size=10)
        assert cfg.doc_dim == 400

    def test_context_rows_per_variant(self):
        rows = {
            v: (
                M.ModelConfig(5, 10, variant=v).word_context_rows,
                M.ModelConfig(5, 10, variant=v).sentence_context_rows,
            )
            for v in M.VARIANTS
        }
        assert rows == {"hlan": (5, 5), "hagru": (1, 5), "han": (1, 1)}

    def test_rejects_bad_values(self):
        with pytest.raises(M.ModelError):
            M.ModelConfig(num_labels=0, vocab_size=10)
        with pytest.raises(M.ModelError):
            M.ModelConfig(num_labels=2, vocab_size=10, threshold=1.0)
        with pytest.raises(M.ModelError):
            M.ModelConfig(num_labels=2, vocab_size=10, variant="cnn")

    def test_dict_round_trip(self):
        cfg = tiny_config(variant="hagru", threshold=0.3)
        assert M.ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_config_diff_lists_changed_fields(self):
        a, b = tiny_config(), tiny_config(d_h=16, variant="han")
        diff = M.config_diff(a, b)
        assert any(line.startswith("d_h:") for line in diff)
        assert any(line.startswith("variant:") for line in diff)
        assert M.config_diff(a, a) == []


class TestInitParams:
    def test_shapes(self):
        cfg = tiny_config()
        p = init = M.init_params(cfg, seed=0)
        named = init.named_tensors()
        assert named["w_e"].shape == (50, 8)
        assert named["word_fwd.w_er"].shape == (8, 8)
        assert named["sent_fwd.w_er"].shape == (16, 16)
        assert named["w_w"].shape == (16, 16)
        assert named["w_s"].shape == (32, 16)
        assert named["v_w"].shape == (4, 16)
        assert named["v_s"].shape == (4, 16)
        assert named["w_proj"].shape == (4, 32)
        assert named["b_proj"].shape == (4,)
        assert p.word_fwd.hidden_dim == 8

    def test_default_dims_projection_row_is_400_wide(self):
        cfg = M.ModelConfig(num_labels=3, vocab_size=10)
        p = M.init_params(cfg, seed=0)
        assert p.w_proj.shape == (3, 400)

    def test_pad_row_zero_biases_zero(self):
        p = M.init_params(tiny_config(), seed=1)
        npt.assert_array_equal(p.w_e.data[0], 0.0)
        npt.assert_array_equal(p.b_w.data, 0.0)
        npt.assert_array_equal(p.word_fwd.b_r.data, 0.0)

    def test_deterministic_per_seed(self):
        a = M.init_params(tiny_config(), seed=5)
        b = M.init_params(tiny_config(), seed=5)
        for (na, ta), (nb, tb) in zip(
            a.named_tensors().items(), b.named_tensors().items()
        ):
            assert na == nb
            npt.assert_array_equal(ta.data, tb.data)

    def test_variant_context_shapes(self):
        p = M.init_params(tiny_config("hagru"), seed=0)
        assert p.v_w.shape == (1, 16) and p.v_s.shape == (4, 16)
        p = M.init_params(tiny_config("han"), seed=0)
        assert p.v_w.shape == (1, 16) and p.v_s.shape == (1, 16)

    def test_word_table_rows_copied(self):
        cfg = tiny_config()
        from hlan.corpus import Vocabulary

        vocab = Vocabulary({f"t{i}": 10 - (i % 3) for i in range(48)})
        rng = np.random.default_rng(3)
        table = EmbeddingTable(["t0", "t5"], rng.normal(size=(2, 8)))
        p = M.init_params(cfg, word_table=table, vocab=vocab, seed=0)
        npt.assert_array_equal(p.w_e.data[vocab.index_of("t0")], table.vector("t0"))
        npt.assert_array_equal(p.w_e.data[vocab.index_of("t5")], table.vector("t5"))
        npt.assert_array_equal(p.w_e.data[0], 0.0)

    def test_word_table_dim_mismatch_names_layer(self):
        from hlan.corpus import Vocabulary

        vocab = Vocabulary({"a": 1})
        table = EmbeddingTable(["a"], np.ones((1, 3)))
        with pytest.raises(M.ModelError, match="word embedding"):
            M.init_params(tiny_config(), word_table=table, vocab=vocab)


class TestLabelEmbeddingInit:
    def label_setup(self, cfg, missing=()):
        labels = [f"lab{i}" for i in range(cfg.num_labels)]
        rng = np.random.default_rng(11)
        tables = {}
        for dim in {cfg.doc_dim, cfg.d_w, cfg.d_s}:
            present = [l for l in labels if l not in missing]
            tables[dim] = EmbeddingTable(present, rng.normal(size=(len(present), dim)))
        return labels, tables

    def test_rows_copied_exactly(self):
        cfg = tiny_config(le_init=True)
        labels, tables = self.label_setup(cfg)
        p = M.init_params(cfg, label_tables=tables, labels=labels, seed=0)
        unit = normalize_unit(tables[cfg.doc_dim])
        for row, label in enumerate(labels):
            npt.assert_array_equal(p.w_proj.data[row], unit.vector(label))
        unit_w = normalize_unit(tables[cfg.d_w])
        for row, label in enumerate(labels):
            npt.assert_array_equal(p.v_w.data[row], unit_w.vector(label))

    def test_missing_label_gets_xavier_row(self):
        cfg = tiny_config(le_init=True)
        labels, tables = self.label_setup(cfg, missing=("lab2",))
        p = M.init_params(cfg, label_tables=tables, labels=labels, seed=0)
        row = p.w_proj.data[2]
        assert abs(np.linalg.norm(row) - 1.0) > 1e-6
        npt.assert_allclose(np.linalg.norm(p.w_proj.data[1]), 1.0, atol=1e-12)

    def test_le_off_rows_do_not_match_embeddings(self):
        cfg = tiny_config(le_init=False)
        labels, tables = self.label_setup(cfg)
        p = M.init_params(cfg, label_tables=tables, labels=labels, seed=2)
        unit = normalize_unit(tables[cfg.doc_dim])
        rows = p.w_proj.data / np.linalg.norm(p.w_proj.data, axis=1, keepdims=True)
        cosines = rows @ unit.matrix.T
        assert np.abs(cosines).max() < 0.99

    def test_shared_context_rows_not_le_seeded(self):
        # hagru's single shared word context row has no per-label identity
        cfg = tiny_config("hagru", le_init=True)
        labels, tables = self.label_setup(cfg)
        p = M.init_params(cfg, label_tables=tables, labels=labels, seed=0)
        assert p.v_w.shape == (1, cfg.d_w)
        unit = normalize_unit(tables[cfg.d_s])
        for row, label in enumerate(labels):
            npt.assert_array_equal(p.v_s.data[row], unit.vector(label))

    def test_missing_table_dimension_names_layer(self):
        cfg = tiny_config(le_init=True)
        labels, tables = self.label_setup(cfg)
        del tables[cfg.doc_dim]
        with pytest.raises(M.ModelError, match="projection"):
            M.init_params(cfg, label_tables=tables, labels=labels)

    def test_wrong_table_dimension_names_layer(self):
        cfg = tiny_config(le_init=True)
        labels, tables = self.label_setup(cfg)
        # filed under the word-attention width but actually one wider
        tables[cfg.d_w] = EmbeddingTable(labels, np.ones((len(labels), cfg.d_w + 1)))
        with pytest.raises(M.ModelError, match="word attention context"):
            M.init_params(cfg, label_tables=tables, labels=labels)


class TestGruCell:
    def zero_bundle(self, d_in, d_h):
        z = lambda shape: Tensor(np.zeros(shape))  # noqa: E731
        return M.GruBundle(
            w_er=z((d_in, d_h)), w_ez=z((d_in, d_h)), w_eh=z((d_in, d_h)),
            w_hr=z((d_h, d_h)), w_hz=z((d_h, d_h)), w_hh=z((d_h, d_h)),
            b_r=z(d_h), b_z=z(d_h),
        )

    def test_zero_weights_zero_state_stays_zero(self):
        bundle = self.zero_bundle(3, 4)
        h = M.gru_cell(Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 4))), bundle)
        npt.assert_array_equal(h.data, 0.0)

    def test_zero_weights_halves_previous_state(self):
        bundle = self.zero_bundle(3, 4)
        v = np.arange(8.0).reshape(2, 4)
        h = M.gru_cell(Tensor(np.ones((2, 3))), Tensor(v), bundle)
        npt.assert_array_equal(h.data, 0.5 * v)

    def test_matches_scalar_loop_reference(self):
        rng = np.random.default_rng(8)
        d_in, d_h = 3, 4
        mats = {k: rng.normal(size=(d_in if k.startswith("w_e") else d_h, d_h))
                for k in ("w_er", "w_ez", "w_eh", "w_hr", "w_hz", "w_hh")}
        bias = {k: rng.normal(size=d_h) for k in ("b_r", "b_z")}
        bundle = M.GruBundle(
            **{k: Tensor(v) for k, v in mats.items()},
            **{k: Tensor(v) for k, v in bias.items()},
        )
        e = rng.normal(size=(1, d_in))
        hp = rng.normal(size=(1, d_h))
        got = M.gru_cell(Tensor(e), Tensor(hp), bundle).data[0]

        def dot(vec, mat, j):
            return sum(vec[i] * mat[i, j] for i in range(len(vec)))

        expected = np.zeros(d_h)
        for j in range(d_h):
            r = 1 / (1 + np.exp(-(dot(e[0], mats["w_er"], j)
                                  + dot(hp[0], mats["w_hr"], j) + bias["b_r"][j])))
            z = 1 / (1 + np.exp(-(dot(e[0], mats["w_ez"], j)
                                  + dot(hp[0], mats["w_hz"], j) + bias["b_z"][j])))
            rh = np.array([r_ * h_ for r_, h_ in zip(
                [1 / (1 + np.exp(-(dot(e[0], mats["w_er"], jj)
                                   + dot(hp[0], mats["w_hr"], jj) + bias["b_r"][jj])))
                 for jj in range(d_h)], hp[0])])
            cand = np.tanh(dot(e[0], mats["w_eh"], j) + dot(rh, mats["w_hh"], j))
            expected[j] = (1 - z) * hp[0][j] + z * cand
        # summation-order (BLAS vs loop) differences only
        npt.assert_allclose(got, expected, rtol=1e-13, atol=1e-15)


class TestBigru:
    def random_bundle(self, rng, d_in, d_h):
        t = lambda shape: Tensor(rng.normal(size=shape) * 0.4)  # noqa: E731
        return M.GruBundle(
            w_er=t((d_in, d_h)), w_ez=t((d_in, d_h)), w_eh=t((d_in, d_h)),
            w_hr=t((d_h, d_h)), w_hz=t((d_h, d_h)), w_hh=t((d_h, d_h)),
            b_r=t(d_h), b_z=t(d_h),
        )

    def test_length_one_sequence(self):
        rng = np.random.default_rng(0)
        bundle = self.random_bundle(rng, 3, 5)
        seq = Tensor(rng.normal(size=(2, 1, 3)))
        out = M.bigru(seq, np.ones((2, 1)), bundle, bundle)
        assert out.shape == (2, 1, 10)
        # tied directions on one step: both halves identical
        npt.assert_array_equal(out.data[:, 0, :5], out.data[:, 0, 5:])

    def test_palindrome_with_tied_bundles(self):
        rng = np.random.default_rng(1)
        bundle = self.random_bundle(rng, 3, 5)
        half = rng.normal(size=(1, 3, 3))
        seq = np.concatenate([half, half[:, ::-1, :]], axis=1)  # length 6
        out = M.bigru(Tensor(seq), np.ones((1, 6)), bundle, bundle).data
        T = 6
        for t in range(T):
            npt.assert_array_equal(out[0, t, :5], out[0, T - 1 - t, 5:])

    def test_trailing_mask_equals_truncated_run(self):
        rng = np.random.default_rng(2)
        fwd = self.random_bundle(rng, 4, 6)
        bwd = self.random_bundle(rng, 4, 6)
        seq = rng.normal(size=(3, 7, 4))
        mask = np.ones((3, 7))
        mask[:, 5:] = 0.0
        full = M.bigru(Tensor(seq), mask, fwd, bwd).data
        trunc = M.bigru(Tensor(seq[:, :5]), np.ones((3, 5)), fwd, bwd).data
        npt.assert_array_equal(full[:, :5], trunc)
        npt.assert_array_equal(full[:, 5:], 0.0)

    def test_fully_masked_rows_zero(self):
        rng = np.random.default_rng(3)
        fwd = self.random_bundle(rng, 4, 6)
        bwd = self.random_bundle(rng, 4, 6)
        seq = rng.normal(size=(2, 4, 4))
        mask = np.zeros((2, 4))
        out = M.bigru(Tensor(seq), mask, fwd, bwd).data
        npt.assert_array_equal(out, 0.0)


class TestWordAttention:
    def test_zero_context_gives_uniform_alpha_and_mean_pool(self):
        rng = np.random.default_rng(4)
        hidden = Tensor(rng.normal(size=(1, 4, 6)))
        w_w = Tensor(rng.normal(size=(6, 5)))
        b_w = Tensor(rng.normal(size=5))
        v_w = Tensor(np.zeros((2, 5)))
        pooled, alpha = M.word_attention(hidden, np.ones((1, 4)), w_w, b_w, v_w)
        npt.assert_allclose(alpha.data, 0.25, atol=1e-15)
        npt.assert_allclose(
            pooled.data[0, 0], hidden.data[0].mean(axis=0), atol=1e-15
        )

    def test_saturated_score_concentrates_alpha(self):
        # one token's transformed state aligns with the context row
        hidden = Tensor(np.array([[[30.0, 0], [-30.0, 0], [-30.0, 0]]]))
        w_w = Tensor(np.eye(2))
        b_w = Tensor(np.zeros(2))
        v_w = Tensor(np.array([[10.0, 0.0]]))  # scores [10, -10, -10]
        pooled, alpha = M.word_attention(hidden, np.ones((1, 3)), w_w, b_w, v_w)
        assert alpha.data[0, 0, 0] > 1 - 1e-8
        npt.assert_allclose(pooled.data[0, 0], hidden.data[0, 0], atol=1e-6)

    def test_identical_context_rows_identical_alpha(self):
        rng = np.random.default_rng(5)
        hidden = Tensor(rng.normal(size=(2, 4, 6)))
        w_w = Tensor(rng.normal(size=(6, 5)))
        b_w = Tensor(rng.normal(size=5))
        row = rng.normal(size=5)
        v_w = Tensor(np.tile(row, (3, 1)))
        mask = np.ones((2, 4))
        mask[1, 2:] = 0
        _, alpha = M.word_attention(hidden, mask, w_w, b_w, v_w)
        npt.assert_array_equal(alpha.data[:, 0], alpha.data[:, 1])
        npt.assert_array_equal(alpha.data[:, 0], alpha.data[:, 2])


class TestSentenceAttention:
    def test_single_unmasked_sentence_takes_it_all(self):
        rng = np.random.default_rng(6)
        states = Tensor(rng.normal(size=(1, 3, 8)))
        w_s = Tensor(rng.normal(size=(8, 4)))
        b_s = Tensor(rng.normal(size=4))
        v_s = Tensor(rng.normal(size=(2, 4)))
        mask = np.array([[1.0, 0.0, 0.0]])
        pooled, alpha = M.sentence_attention(states, mask, w_s, b_s, v_s, batch=1)
        npt.assert_array_equal(alpha.data[0, :, 0], 1.0)
        npt.assert_array_equal(alpha.data[0, :, 1:], 0.0)
        for l in range(2):
            npt.assert_allclose(pooled.data[0, l], states.data[0, 0], atol=1e-15)

    def test_zero_context_mean_pools(self):
        rng = np.random.default_rng(7)
        states = Tensor(rng.normal(size=(1, 3, 8)))
        w_s = Tensor(rng.normal(size=(8, 4)))
        b_s = Tensor(rng.normal(size=4))
        v_s = Tensor(np.zeros((2, 4)))
        pooled, alpha = M.sentence_attention(
            states, np.ones((1, 3)), w_s, b_s, v_s, batch=1
        )
        npt.assert_allclose(alpha.data, 1 / 3, atol=1e-15)
        npt.assert_allclose(pooled.data[0, 0], states.data[0].mean(axis=0), atol=1e-15)


class TestProject:
    def test_zero_weights_give_half_probability(self):
        rng = np.random.default_rng(8)
        cd = Tensor(rng.normal(size=(1, 3, 6)))
        scores = M.project(cd, Tensor(np.zeros((3, 6))), Tensor(np.zeros(3)), "hlan")
        npt.assert_array_equal(scores.data, 0.0)
        from hlan.autodiff import _sigmoid_arr

        npt.assert_array_equal(_sigmoid_arr(scores.data), 0.5)

    def test_large_score_saturates_without_nan(self):
        cd = Tensor(np.full((1, 1, 4), 0.0))
        cd.data[0, 0, 0] = 50.0
        w = Tensor(np.array([[1.0, 0, 0, 0]]))
        scores = M.project(cd, w, Tensor(np.zeros(1)), "hlan")
        from hlan.autodiff import _sigmoid_arr

        p = _sigmoid_arr(scores.data)
        oracle = 1.0 / (1.0 + np.exp(np.longdouble(-50.0)))
        assert not np.isnan(p).any()
        npt.assert_allclose(p[0, 0], float(oracle), atol=1e-12)


class TestForward:
    def test_matches_scalar_reference_all_variants(self):
        for variant in M.VARIANTS:
            cfg = tiny_config(variant)
            params = M.init_params(cfg, seed=20)
            rng = np.random.default_rng(21)
            for trial in range(6):
                grid, tmask, smask = random_doc(rng, cfg)
                if not smask.any():
                    continue
                doc = EncodedDocument(
                    id=f"d{trial}", grid=grid, sentence_mask=smask,
                    token_mask=tmask, target=np.zeros(cfg.num_labels, dtype=np.int8),
                )
                probs, record = M.forward(doc, params, cfg)
                ref_p, ref_aw, ref_as = reference_forward(
                    grid, tmask, smask, arrays_of(params), cfg
                )
                npt.assert_allclose(probs, ref_p, atol=1e-10)
                npt.assert_allclose(record.alpha_w, ref_aw, atol=1e-10)
                npt.assert_allclose(record.alpha_s, ref_as, atol=1e-10)

    def test_deterministic(self):
        cfg = tiny_config()
        params = M.init_params(cfg, seed=1)
        rng = np.random.default_rng(2)
        grid, tmask, smask = random_doc(rng, cfg)
        doc = EncodedDocument("x", grid, smask, tmask, np.zeros(4, dtype=np.int8))
        p1, r1 = M.forward(doc, params, cfg)
        p2, r2 = M.forward(doc, params, cfg)
        npt.assert_array_equal(p1, p2)
        npt.assert_array_equal(r1.alpha_w, r2.alpha_w)

    def test_pad_only_sentences_interchangeable(self):
        cfg = tiny_config()
        params = M.init_params(cfg, seed=3)
        grid = np.zeros((3, 5), dtype=np.int64)
        grid[1] = [2, 3, 4, 5, 6]  # middle sentence real, 0 and 2 all-PAD
        tmask = grid != 0
        smask = tmask.any(axis=1)
        doc = EncodedDocument("a", grid, smask, tmask, np.zeros(4, dtype=np.int8))
        swapped = grid[[2, 1, 0]]
        doc2 = EncodedDocument(
            "b", swapped, (swapped != 0).any(axis=1), swapped != 0,
            np.zeros(4, dtype=np.int8),
        )
        p1, _ = M.forward(doc, params, cfg)
        p2, _ = M.forward(doc2, params, cfg)
        npt.assert_array_equal(p1, p2)

    def test_attention_simplex_random_docs(self):
        rng = np.random.default_rng(30)
        for variant in M.VARIANTS:
            cfg = tiny_config(variant)
            params = M.init_params(cfg, seed=int(rng.integers(1 << 31)))
            for _ in range(15):
                grid, tmask, smask = random_doc(rng, cfg)
                res = M.forward_batch(grid[None], tmask[None], smask[None], params, cfg)
                for s in range(cfg.n):
                    if smask[s]:
                        sums = res.alpha_w[0, :, s, :].sum(axis=-1)
                        npt.assert_allclose(sums, 1.0, atol=1e-6)
                if smask.any():
                    npt.assert_allclose(
                        res.alpha_s[0].sum(axis=-1), 1.0, atol=1e-6
                    )

    def test_grid_shape_mismatch_rejected(self):
        cfg = tiny_config()
        params = M.init_params(cfg, seed=0)
        bad = np.zeros((1, 2, 5), dtype=np.int64)
        with pytest.raises(M.ModelError):
            M.forward_batch(bad, bad != 0, (bad != 0).any(axis=2), params, cfg)


class TestVariantDegradation:
    def tie_word_rows(self, params, num_labels):
        tied = M.ModelParams(**{
            f: getattr(params, f)
            for f in ("w_e", "word_fwd", "word_bwd", "sent_fwd", "sent_bwd",
                      "w_w", "b_w", "w_s", "b_s", "v_w", "v_s", "w_proj", "b_proj")
        })
        tied.v_w = Tensor(np.tile(params.v_w.data[:1], (num_labels, 1)), requires_grad=True)
        return tied

    def tie_sentence_rows(self, params, num_labels):
        tied = self.tie_word_rows(params, num_labels)
        tied.v_s = Tensor(np.tile(params.v_s.data[:1], (num_labels, 1)), requires_grad=True)
        return tied

    def test_tied_word_rows_reproduce_shared_word_context(self):
        rng = np.random.default_rng(40)
        for _ in range(20):
            seed = int(rng.integers(1 << 31))
            cfg_h = tiny_config("hagru")
            base = M.init_params(cfg_h, seed=seed)
            cfg_full = tiny_config("hlan")
            tied = self.tie_word_rows(base, cfg_full.num_labels)
            grid, tmask, smask = random_doc(rng, cfg_full)
            out_full = M.forward_batch(
                grid[None], tmask[None], smask[None], tied, cfg_full
            ).probabilities()
            out_shared = M.forward_batch(
                grid[None], tmask[None], smask[None], base, cfg_h
            ).probabilities()
            npt.assert_allclose(out_full, out_shared, atol=1e-12)

    def test_fully_tied_rows_reproduce_shared_everything(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            seed = int(rng.integers(1 << 31))
            cfg_han = tiny_config("han")
            base = M.init_params(cfg_han, seed=seed)
            cfg_full = tiny_config("hlan")
            tied = self.tie_sentence_rows(base, cfg_full.num_labels)
            grid, tmask, smask = random_doc(rng, cfg_full)
            out_full = M.forward_batch(
                grid[None], tmask[None], smask[None], tied, cfg_full
            ).probabilities()
            out_han = M.forward_batch(
                grid[None], tmask[None], smask[None], base, cfg_han
            ).probabilities()
            npt.assert_allclose(out_full, out_han, atol=1e-12)


class TestGradients:
    def test_end_to_end_finite_difference_sampled(self):
        cfg = tiny_config()
        params = M.init_params(cfg, seed=50)
        rng = np.random.default_rng(51)
        grid, tmask, smask = random_doc(rng, cfg)
        y = rng.integers(0, 2, size=(1, cfg.num_labels)).astype(float)

        def build_loss():
            res = M.forward_batch(grid[None], tmask[None], smask[None], params, cfg)
            return ad.bce_with_logits(res.scores, y)

        report = ad.finite_diff_check(
            build_loss, params.named_tensors(), sample=4, seed=0
        )
        assert report.passed, (report.worst_param, report.max_rel_error)


class TestCheckpoint:
    def roundtrip(self, tmp_path, cfg, seed=9):
        params = M.init_params(cfg, seed=seed)
        ckpt = M.Checkpoint(
            config=cfg, params=params, labels=[f"lab{i}" for i in range(cfg.num_labels)],
            vocab_sha256="ab" * 32, extra={"epoch": 3},
        )
        path = tmp_path / "model.ckpt"
        M.save_checkpoint(path, ckpt)
        return ckpt, M.load_checkpoint(path), path

    def test_bit_exact_round_trip(self, tmp_path):
        ckpt, loaded, path = self.roundtrip(tmp_path, tiny_config("hagru"))
        assert loaded.config == ckpt.config
        assert loaded.labels == ckpt.labels
        assert loaded.vocab_sha256 == ckpt.vocab_sha256
        assert loaded.extra == {"epoch": 3}
        for (name, t), (name2, t2) in zip(
            ckpt.params.named_tensors().items(), loaded.params.named_tensors().items()
        ):
            assert name == name2
            npt.assert_array_equal(t.data, t2.data)

    def test_rewrite_is_byte_identical(self, tmp_path):
        ckpt, loaded, path = self.roundtrip(tmp_path, tiny_config())
        second = tmp_path / "again.ckpt"
        M.save_checkpoint(second, loaded)
        assert path.read_bytes() == second.read_bytes()

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(M.ModelError, match="not a checkpoint"):
            M.load_checkpoint(path)

    def test_loaded_params_usable_for_forward(self, tmp_path):
        cfg = tiny_config()
        ckpt, loaded, _ = self.roundtrip(tmp_path, cfg)
        rng = np.random.default_rng(10)
        grid, tmask, smask = random_doc(rng, cfg)
        a = M.forward_batch(grid[None], tmask[None], smask[None], ckpt.params, cfg)
        b = M.forward_batch(grid[None], tmask[None], smask[None], loaded.params, cfg)
        npt.assert_array_equal(a.probabilities(), b.probabilities())
