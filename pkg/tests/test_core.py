import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dve.core import (
    SegmentRecord,
    SuppressionConfig,
    TeacherVolume,
    assemble_teacher_volume,
    cosine_similarity,
    l2_normalize,
    refine_records,
    suppress_context,
)
from dve.errors import DimMismatch, MissingSegment, ZeroVector


def finite_vectors(min_size=1, max_size=16):
    return st.lists(
        st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False),
        min_size=min_size,
        max_size=max_size,
    ).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-6)


class TestL2Normalize:
    def test_analytic(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_identity_on_unit(self):
        np.testing.assert_array_equal(l2_normalize([0.0, 1.0, 0.0]), [0.0, 1.0, 0.0])

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            l2_normalize([0.0, 0.0])

    def test_tiny_norm_rejected(self):
        with pytest.raises(ZeroVector):
            l2_normalize([1e-13, 0.0])

    @given(v=finite_vectors())
    def test_unit_norm_and_idempotent(self, v):
        unit = l2_normalize(v)
        assert abs(np.linalg.norm(unit) - 1.0) <= 1e-6
        np.testing.assert_allclose(l2_normalize(unit), unit, atol=1e-6)

    @given(v=finite_vectors())
    def test_direction_preserved(self, v):
        unit = l2_normalize(v)
        assert np.dot(unit, v) > 0


class TestCosineSimilarity:
    def test_self_similarity(self):
        assert cosine_similarity([2.0, 2.0], [2.0, 2.0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_analytic(self):
        assert cosine_similarity([1.0, 2.0, 2.0], [2.0, 1.0, 2.0]) == pytest.approx(8 / 9)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(a=finite_vectors(max_size=8), b=finite_vectors(max_size=8))
    def test_symmetry_and_range(self, a, b):
        if a.shape != b.shape:
            return
        s = cosine_similarity(a, b)
        assert -1.0 <= s <= 1.0
        assert s == cosine_similarity(b, a)

    @given(v=finite_vectors(max_size=8), c=st.floats(min_value=0.01, max_value=100.0))
    def test_positive_scale_invariance(self, v, c):
        w = np.roll(v, 1) + 0.5
        if np.linalg.norm(w) <= 1e-6:
            return
        assert cosine_similarity(c * v, w) == pytest.approx(cosine_similarity(v, w), abs=1e-9)


class TestSuppressContext:
    def test_alpha_zero_is_exact_normalization(self):
        cfg = SuppressionConfig(alpha=0.0)
        e_seg = np.array([3.0, 4.0])
        e_img = np.array([-2.0, 7.0])
        np.testing.assert_array_equal(suppress_context(e_seg, e_img, cfg), l2_normalize(e_seg))

    def test_orthogonal_unit_directions(self):
        cfg = SuppressionConfig(alpha=0.65)
        out = suppress_context([2.0, 0.0], [0.0, 5.0], cfg)
        np.testing.assert_allclose(out, [1.0, -0.65])

    def test_full_self_suppression_gives_zero(self):
        cfg = SuppressionConfig(alpha=1.0)
        out = suppress_context([1.0, 1.0], [1.0, 1.0], cfg)
        np.testing.assert_allclose(out, [0.0, 0.0], atol=1e-15)
        with pytest.raises(ZeroVector):
            l2_normalize(out)

    def test_zero_inputs_rejected(self):
        cfg = SuppressionConfig()
        with pytest.raises(ZeroVector):
            suppress_context([0.0, 0.0], [1.0, 0.0], cfg)
        with pytest.raises(ZeroVector):
            suppress_context([1.0, 0.0], [0.0, 0.0], cfg)

    def test_alpha_range_validated(self):
        with pytest.raises(ValueError):
            SuppressionConfig(alpha=1.5)
        with pytest.raises(ValueError):
            SuppressionConfig(alpha=-0.1)

    @given(
        seg=finite_vectors(min_size=4, max_size=8),
        img=finite_vectors(min_size=4, max_size=8),
        c_seg=st.floats(min_value=0.01, max_value=100.0),
        c_img=st.floats(min_value=0.01, max_value=100.0),
        alpha=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=50)
    def test_scale_invariance_both_inputs(self, seg, img, c_seg, c_img, alpha):
        if seg.shape != img.shape:
            return
        cfg = SuppressionConfig(alpha=alpha)
        base = suppress_context(seg, img, cfg)
        scaled = suppress_context(c_seg * seg, c_img * img, cfg)
        np.testing.assert_allclose(scaled, base, atol=1e-6)


def _record(sid, vec, refined=None, class_id=None):
    return SegmentRecord(
        segment_id=sid, class_id=class_id, raw_embedding=vec, refined_embedding=refined
    )


class TestAssembleTeacherVolume:
    def test_direct_placement(self):
        mask = np.array([[1, 1], [0, 2]], dtype=np.uint16)
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, 2.0, 0.0])
        records = {1: _record(1, e1, e1), 2: _record(2, e2, e2)}
        vol = assemble_teacher_volume(mask, records, 3)
        np.testing.assert_array_equal(vol.embeddings[0, 0], e1)
        np.testing.assert_array_equal(vol.embeddings[0, 1], e1)
        np.testing.assert_array_equal(vol.embeddings[1, 1], e2)
        np.testing.assert_array_equal(vol.embeddings[1, 0], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(vol.coverage, [[True, True], [False, True]])
        assert vol.covered_pixels == 3

    def test_all_zero_mask_is_valid(self):
        vol = assemble_teacher_volume(np.zeros((2, 2), dtype=np.uint16), {}, 4)
        assert vol.covered_pixels == 0
        assert not vol.embeddings.any()

    def test_missing_segment(self):
        mask = np.full((1, 2), 3, dtype=np.uint16)
        with pytest.raises(MissingSegment) as exc:
            assemble_teacher_volume(mask, {}, 2)
        assert exc.value.segment_id == 3

    def test_record_without_refined_embedding(self):
        mask = np.ones((1, 1), dtype=np.uint16)
        with pytest.raises(MissingSegment):
            assemble_teacher_volume(mask, {1: _record(1, [1.0, 0.0])}, 2)

    def test_degenerate_refined_embedding(self):
        mask = np.ones((1, 1), dtype=np.uint16)
        rec = _record(1, [1.0, 0.0], refined=[0.0, 0.0])
        with pytest.raises(ZeroVector):
            assemble_teacher_volume(mask, {1: rec}, 2)

    def test_dim_mismatch(self):
        mask = np.ones((1, 1), dtype=np.uint16)
        rec = _record(1, [1.0, 0.0], refined=[1.0, 0.0])
        with pytest.raises(DimMismatch):
            assemble_teacher_volume(mask, {1: rec}, 3)

    @given(data=st.data())
    @settings(max_examples=30)
    def test_coverage_count_matches_nonzero_entries(self, data):
        h = data.draw(st.integers(1, 5))
        w = data.draw(st.integers(1, 5))
        mask = np.array(
            data.draw(st.lists(st.integers(0, 3), min_size=h * w, max_size=h * w)),
            dtype=np.uint16,
        ).reshape(h, w)
        rng = np.random.default_rng(0)
        records = {}
        for sid in range(1, 4):
            vec = rng.standard_normal(4)
            records[sid] = _record(sid, vec, refined=vec)
        vol = assemble_teacher_volume(mask, records, 4)
        assert vol.covered_pixels == int(np.count_nonzero(mask))
        for sid in np.unique(mask):
            if sid == 0:
                continue
            pixels = vol.embeddings[mask == sid]
            np.testing.assert_array_equal(
                pixels, np.tile(records[int(sid)].refined_embedding, (len(pixels), 1))
            )


class TestRefineRecords:
    def test_requires_global_record(self):
        with pytest.raises(MissingSegment) as exc:
            refine_records({1: _record(1, [1.0, 0.0])}, SuppressionConfig())
        assert exc.value.segment_id == 0

    def test_refines_each_segment_against_global(self):
        cfg = SuppressionConfig(alpha=0.5)
        records = {
            0: _record(0, [0.0, 4.0]),
            1: _record(1, [2.0, 0.0]),
        }
        refined = refine_records(records, cfg)
        np.testing.assert_allclose(refined[1].refined_embedding, [1.0, -0.5])
        assert refined[0].refined_embedding is None


class TestTeacherVolume:
    def test_uncovered_pixels_must_be_zero(self):
        emb = np.ones((1, 2, 3))
        cov = np.array([[True, False]])
        with pytest.raises(ValueError):
            TeacherVolume(embeddings=emb, coverage=cov)

    def test_from_map_and_mask_zeroes_uncovered(self):
        emb = np.ones((1, 2, 3))
        mask = np.array([[1, 0]], dtype=np.uint16)
        vol = TeacherVolume.from_map_and_mask(emb, mask)
        np.testing.assert_array_equal(vol.embeddings[0, 1], [0.0, 0.0, 0.0])
        assert vol.covered_pixels == 1

    def test_covered_zero_norm_rejected(self):
        emb = np.zeros((1, 1, 3))
        cov = np.array([[True]])
        with pytest.raises(ZeroVector):
            TeacherVolume(embeddings=emb, coverage=cov)
