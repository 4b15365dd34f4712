import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mbcodec import quantizer as q
from mbcodec.errors import BadCode, BadDepth, DimMismatch, EmptyCorpus, NotAStream, CorruptStream


def brute_force(entries, v):
    """Exhaustive scan with lowest-index tie breaking."""
    best, best_d = 0, np.inf
    for k, e in enumerate(entries):
        d = sum((a - b) ** 2 for a, b in zip(v, e))
        if d < best_d:
            best, best_d = k, d
    return best


def random_codebook(rng, K=16, D=4, reserve_zero=True):
    e = rng.standard_normal((K, D))
    if reserve_zero:
        e[0] = 0.0
    return q.Codebook(e, reserve_zero)


def random_stack(rng, layers=4, K=16, D=4):
    return q.RvqStack([random_codebook(rng, K, D) for _ in range(layers)])


class TestCodebook:
    def test_reserve_zero_enforced(self):
        with pytest.raises(ValueError):
            q.Codebook(np.ones((4, 2)), reserve_zero=True)

    def test_rejects_nonfinite_and_tiny(self):
        with pytest.raises(ValueError):
            q.Codebook(np.array([[0.0], [np.nan]]))
        with pytest.raises(ValueError):
            q.Codebook(np.zeros((1, 3)))

    def test_mixed_dimensions(self, rng):
        with pytest.raises(DimMismatch):
            q.RvqStack([random_codebook(rng, D=3), random_codebook(rng, D=4)])


class TestVqEncode:
    def test_exact_entry(self, rng):
        cb = random_codebook(rng)
        r = q.vq_encode(cb, cb.entries[7])
        assert r.index == 7
        assert not r.residual.any()

    def test_zero_vector(self, rng):
        r = q.vq_encode(random_codebook(rng), np.zeros(4))
        assert r.index == 0 and not r.quantized.any() and not r.residual.any()

    def test_ties_pick_lowest_index(self):
        cb = q.Codebook(np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]))
        assert q.vq_encode(cb, [0.5, 0.0]).index == 0
        assert q.vq_encode(cb, [1.0, 0.0]).index == 1

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            cb = random_codebook(rng)
            v = rng.standard_normal(4) * rng.uniform(0.1, 3)
            assert q.vq_encode(cb, v).index == brute_force(cb.entries, v)

    @settings(max_examples=100, deadline=None)
    @given(entries=arrays(np.float64, (16, 4), elements=st.floats(-4, 4, allow_subnormal=False)),
           v=arrays(np.float64, 4, elements=st.floats(-4, 4, allow_subnormal=False)))
    def test_property_brute_force(self, entries, v):
        cb = q.Codebook(entries, reserve_zero=False)
        assert q.vq_encode(cb, v).index == brute_force(entries, v)

    def test_batch_matches_single(self, rng):
        cb = random_codebook(rng, K=64, D=8)
        x = rng.standard_normal((300, 8))
        idx, quant = q.vq_encode_batch(cb, x)
        assert [q.vq_encode(cb, v).index for v in x] == idx.tolist()
        np.testing.assert_array_equal(quant, cb.entries[idx])

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimMismatch):
            q.vq_encode(random_codebook(rng), np.zeros(3))


class TestRvq:
    def test_hand_built_two_layer(self):
        stack = q.RvqStack([
            q.Codebook(np.array([[1.0, 0.0], [0.0, 0.0]]), reserve_zero=False),
            q.Codebook(np.array([[0.0, 1.0], [0.0, 0.0]]), reserve_zero=False),
        ])
        r = q.rvq_encode(stack, [1.0, 1.0])
        assert r.codes == [0, 0]
        assert not r.final_residual.any()
        errs = {c: np.linalg.norm(np.array([1.0, 1.0]) - q.rvq_decode(stack, list(c)))
                for c in itertools.product(range(2), repeat=2)}
        assert min(errs, key=errs.get) == (0, 0)

    def test_depth_one_is_vq(self, rng):
        stack = random_stack(rng)
        v = rng.standard_normal(4)
        r = q.rvq_encode(stack, v, depth=1)
        single = q.vq_encode(stack.layers[0], v)
        assert r.codes == [single.index]
        np.testing.assert_array_equal(r.final_residual, single.residual)

    @pytest.mark.parametrize("depth", [0, 5])
    def test_bad_depth(self, rng, depth):
        with pytest.raises(BadDepth):
            q.rvq_encode(random_stack(rng), np.zeros(4), depth=depth)

    def test_bad_code(self, rng):
        stack = random_stack(rng)
        with pytest.raises(BadCode):
            q.rvq_decode(stack, [0, 16])
        with pytest.raises(BadDepth):
            q.rvq_decode(stack, [0] * 5)

    def test_zero_codes_decode_to_zero(self, rng):
        assert not q.rvq_decode(random_stack(rng), [0, 0, 0, 0]).any()

    def test_decode_is_sum_of_entries(self, rng):
        stack = random_stack(rng)
        codes = [3, 9, 1, 15]
        expected = sum(cb.entries[c] for cb, c in zip(stack.layers, codes))
        np.testing.assert_array_equal(q.rvq_decode(stack, codes), expected)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_residual_identity_and_monotone_norms(self, seed):
        r = np.random.default_rng(seed)
        stack = random_stack(r)
        v = r.standard_normal(4) * 2
        res = q.rvq_encode(stack, v)
        np.testing.assert_array_equal(res.final_residual, v - q.rvq_decode(stack, res.codes))
        assert res.residual_norms[0] == pytest.approx(np.linalg.norm(v))
        assert all(b <= a for a, b in zip(res.residual_norms, res.residual_norms[1:]))

    def test_batch_matches_single(self, rng):
        stack = random_stack(rng, layers=3, K=32, D=6)
        x = rng.standard_normal((100, 6))
        codes, resid = q.rvq_encode_batch(stack, x, depth=3)
        for row, c, rr in zip(x, codes, resid):
            single = q.rvq_encode(stack, row)
            assert single.codes == c.tolist()
            np.testing.assert_array_equal(single.final_residual, rr)

    def test_capacity_at_toy_scale(self, rng):
        stack = random_stack(rng, layers=2, K=4, D=3)
        decodings = {tuple(q.rvq_decode(stack, list(c))) for c in itertools.product(range(4), repeat=2)}
        assert len(decodings) <= 16
        hits = {tuple(q.rvq_encode(stack, v).codes) for v in rng.standard_normal((5000, 3)) * 3}
        assert len(hits) <= 16


class TestTraining:
    def test_captures_k_minus_one_distinct_vectors(self, rng):
        K = 16
        distinct = rng.standard_normal((K - 1, 5)) * 3
        corpus = np.repeat(distinct, 20, axis=0)
        stack = q.train_codebooks(corpus, size=K, num_layers=1, epochs=10, seed=0)
        _, quant = q.vq_encode_batch(stack.layers[0], corpus)
        assert np.mean(np.sum((corpus - quant) ** 2, axis=1)) < 1e-6

    def test_deterministic(self, rng):
        corpus = rng.standard_normal((600, 6))
        a = q.train_codebooks(corpus, size=32, num_layers=3, epochs=4, seed=5)
        b = q.train_codebooks(corpus, size=32, num_layers=3, epochs=4, seed=5)
        assert a == b
        assert q.stack_to_bytes(a) == q.stack_to_bytes(b)

    def test_residual_energy_non_increasing(self, rng):
        corpus = rng.standard_normal((800, 6))
        stack = q.train_codebooks(corpus, size=32, num_layers=4, epochs=5, seed=1)
        energies = [stack.stats[0].residual_energy_in] + [s.residual_energy_out for s in stack.stats]
        assert all(b <= a for a, b in zip(energies, energies[1:]))
        for s, t in zip(stack.stats, stack.stats[1:]):
            assert t.residual_energy_in == s.residual_energy_out

    def test_epoch_errors_non_increasing(self, rng):
        corpus = rng.standard_normal((1000, 4)) * rng.uniform(0.1, 3, size=(1000, 1))
        stack = q.train_codebooks(corpus, size=64, num_layers=2, epochs=12, seed=2)
        for s in stack.stats:
            e = s.epoch_errors
            assert all(b <= a + 1e-9 for a, b in zip(e, e[1:]))

    def test_zero_entry_pinned(self, rng):
        stack = q.train_codebooks(rng.standard_normal((400, 3)) + 5, size=16, num_layers=2, epochs=3)
        for cb in stack.layers:
            assert not cb.entries[0].any()

    def test_prefix_decode_error_non_increasing(self, rng):
        corpus = rng.standard_normal((800, 4))
        stack = q.train_codebooks(corpus, size=32, num_layers=4, epochs=4, seed=3)
        for v in rng.standard_normal((100, 4)):
            codes = q.rvq_encode(stack, v).codes
            errs = [np.linalg.norm(v - q.rvq_decode(stack, codes[:k])) for k in range(5)]
            assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    def test_supervision_keeps_entries_in_mask(self, rng):
        corpus = rng.standard_normal((600, 6))
        masks = [np.array([1, 1, 0, 0, 0, 0.0]), np.array([0, 0, 1, 1, 0, 0.0])]
        stack = q.train_codebooks(corpus, size=16, num_layers=2, epochs=3, supervision=masks)
        assert not stack.layers[0].entries[:, 2:].any()
        assert not stack.layers[1].entries[:, [0, 1, 4, 5]].any()

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            q.train_codebooks(np.zeros((0, 4)), size=4, num_layers=1)

    def test_bad_mask_shape(self, rng):
        with pytest.raises(DimMismatch):
            q.train_codebooks(rng.standard_normal((50, 4)), size=4, num_layers=1, supervision=[np.ones(3)])


class TestSerialization:
    def test_codebook_roundtrip(self, rng):
        cb = q.Codebook(rng.standard_normal((8, 3)).astype(np.float32).astype(np.float64), reserve_zero=False)
        data = q.codebook_to_bytes(cb)
        assert data[:4] == b"MBCB" and len(data) == 10 + 8 * 3 * 4
        back, end = q.codebook_from_bytes(data)
        assert back == cb and end == len(data)

    def test_stack_roundtrip(self, rng):
        stack = q.train_codebooks(rng.standard_normal((200, 4)), size=8, num_layers=3, epochs=2)
        back, end = q.stack_from_bytes(q.stack_to_bytes(stack))
        assert back == stack

    def test_bad_input(self, rng):
        data = q.codebook_to_bytes(random_codebook(rng))
        with pytest.raises(NotAStream):
            q.codebook_from_bytes(b"XXXX" + data[4:])
        with pytest.raises(CorruptStream):
            q.codebook_from_bytes(data[:-1])
