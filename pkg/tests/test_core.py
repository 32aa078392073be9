import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from followpipe.core import (
    DescriptorField,
    DimensionMismatchError,
    Mask,
    QueryDescriptor,
    ShapeMismatchError,
    SimilarityConfig,
    cosine_similarity,
    validate_shapes,
)

from oracles import cosine_loop


class TestCosineSimilarity:
    def test_identical_unit_vectors(self):
        a = (1.0, 0.0, 0.0)
        assert cosine_similarity(a, a, 1e-8) == pytest.approx(1.0, abs=1e-7)

    def test_orthogonal(self):
        assert cosine_similarity((1, 0), (0, 1), 1e-8) == 0.0

    def test_hand_computed(self):
        # dot=8, norms 3*3; oracle confirms
        a, b = (1, 2, 2), (2, 1, 2)
        expected = cosine_loop(a, b, 1e-8)
        assert expected == pytest.approx(8 / (9 + 1e-8), rel=1e-12)
        assert cosine_similarity(a, b, 1e-8) == pytest.approx(expected, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_similarity((1, 2), (1, 2, 3))

    def test_zero_length_vectors(self):
        with pytest.raises(DimensionMismatchError):
            cosine_similarity((), ())

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            cosine_similarity((1, 0), (1, 0), epsilon=0.0)

    def test_clamped_to_unit_interval(self):
        # tiny epsilon cannot push the score past 1
        v = np.full(8, 0.3)
        assert cosine_similarity(v, v, 1e-8) <= 1.0

    @settings(max_examples=80)
    @given(
        data=st.lists(
            st.floats(min_value=-100, max_value=100), min_size=2, max_size=12
        ),
        lam=st.floats(min_value=0.01, max_value=100),
    )
    def test_positive_scale_stability(self, data, lam):
        half = len(data) // 2
        a = np.array(data[:half] + [1.0])
        b = np.array(data[half:2 * half] + [1.0])
        eps = 1e-8
        base = cosine_similarity(a, b, eps)
        scaled = cosine_similarity(lam * a, b, eps)
        bound = 2 * eps / (np.linalg.norm(a) * np.linalg.norm(b)) + 1e-9
        assert abs(scaled - base) <= bound / min(lam, 1.0)

    @settings(max_examples=50)
    @given(
        data=st.lists(
            st.floats(min_value=-10, max_value=10), min_size=2, max_size=8
        )
    )
    def test_symmetry(self, data):
        a = np.array(data + [0.5])
        b = np.array(data[::-1] + [2.0])
        assert cosine_similarity(a, b) == pytest.approx(
            cosine_similarity(b, a), abs=1e-12
        )

    def test_matches_loop_oracle_on_random_vectors(self, rng):
        for _ in range(50):
            d = rng.integers(1, 40)
            a = rng.standard_normal(d)
            b = rng.standard_normal(d)
            assert cosine_similarity(a, b) == pytest.approx(
                cosine_loop(a, b), abs=1e-9
            )


class TestValidateShapes:
    def test_matching(self):
        field = DescriptorField.from_array(np.zeros((480, 640, 3)) + 1)
        mask = Mask.empty(480, 640)
        validate_shapes(field, mask)  # no raise

    def test_mismatch_names_both_shapes(self):
        field = DescriptorField.from_array(np.ones((480, 640, 3)))
        mask = Mask.empty(240, 320)
        with pytest.raises(ShapeMismatchError, match="480x640.*240x320"):
            validate_shapes(field, mask)

    def test_minimal(self):
        field = DescriptorField.from_array(np.ones((1, 1, 1)))
        validate_shapes(field, Mask.empty(1, 1))


class TestDescriptorField:
    def test_rejects_non_finite(self):
        data = np.ones((2, 2, 3), dtype=np.float32)
        data[1, 1, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            DescriptorField.from_array(data)

    def test_rejects_zero_dims(self):
        with pytest.raises(ValueError):
            DescriptorField(height=0, width=4, dim=2, data=np.zeros((0, 4, 2)))

    def test_immutable(self):
        field = DescriptorField.from_array(np.ones((2, 2, 2)))
        with pytest.raises(ValueError):
            field.data[0, 0, 0] = 5.0

    def test_pixel_norms_cached(self, rng):
        field = DescriptorField.from_array(rng.standard_normal((4, 5, 3)))
        expected = np.linalg.norm(
            field.data.reshape(-1, 3).astype(np.float64), axis=1
        )
        np.testing.assert_allclose(field.pixel_norms, expected, rtol=1e-5)
        assert field.pixel_norms is field.pixel_norms


class TestMask:
    def test_rejects_non_binary(self):
        values = np.zeros((3, 3), dtype=np.uint8)
        values[1, 1] = 2
        with pytest.raises(ValueError, match="0/1"):
            Mask.from_array(values)

    def test_accepts_uint8_binary(self):
        mask = Mask.from_array(np.eye(3, dtype=np.uint8))
        assert mask.nonzero_count == 3

    def test_bbox_and_centroid(self):
        values = np.zeros((20, 20), dtype=bool)
        values[10:12, 10:12] = True
        mask = Mask.from_array(values)
        assert mask.bbox() == (10, 10, 2, 2)
        assert mask.centroid() == (10.5, 10.5)

    def test_empty_bbox(self):
        assert Mask.empty(4, 4).bbox() is None


class TestQueryDescriptor:
    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError, match="zero norm"):
            QueryDescriptor(label="q", vector=np.zeros(4))

    def test_empty_rejected(self):
        with pytest.raises(DimensionMismatchError):
            QueryDescriptor(label="q", vector=np.zeros(0))


class TestSimilarityConfig:
    def test_valid_defaults(self):
        cfg = SimilarityConfig()
        assert cfg.alpha == 0.35 and cfg.epsilon == 1e-8

    @pytest.mark.parametrize("alpha", [-0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            SimilarityConfig(alpha=alpha)

    @pytest.mark.parametrize("eps", [0.0, 1e-2, -1e-8])
    def test_epsilon_range(self, eps):
        with pytest.raises(ValueError):
            SimilarityConfig(epsilon=eps)
