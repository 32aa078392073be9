import logging

import numpy as np
import pytest

from followpipe.core import (
    DescriptorField,
    EmptyMemoryError,
    Mask,
    OutOfBoundsError,
    QueryDescriptor,
    SimilarityConfig,
)
from followpipe.detection import DetectionConfig
from followpipe.providers import class_basis, class_query, render_frame
from followpipe.redetection import (
    FeatureMemory,
    RecoveryMode,
    human_redetect,
    maybe_store,
    recovery_query,
    redetect,
)
from followpipe import scenes


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestMaybeStore:
    def _store_frames(self, memory, frames, small_camera, scene):
        field, gt = render_frame(scene, 0.0, small_camera)
        mask = gt.mask_for("obj0")
        for i in frames:
            maybe_store(memory, i, field, mask)
        return memory

    def test_tau_one_stores_every_frame(self, small_camera, clean_scene):
        memory = FeatureMemory(tau=1, capacity=64)
        self._store_frames(memory, range(5), small_camera, clean_scene)
        assert len(memory) == 5

    def test_tau_ten_stores_frame_zero_only(self, small_camera, clean_scene):
        memory = FeatureMemory(tau=10, capacity=64)
        self._store_frames(memory, range(10), small_camera, clean_scene)
        assert len(memory) == 1

    def test_ring_eviction(self, small_camera):
        scene = scenes.stationary_scene(sigma=0.1, dim=16)
        memory = FeatureMemory(tau=1, capacity=3)
        fields = []
        for i in range(5):
            field, gt = render_frame(scene, i / scene.frame_rate, small_camera)
            fields.append(field)
            maybe_store(memory, i, field, gt.mask_for("obj0"))
        assert len(memory) == 3
        from followpipe.detection import region_descriptor
        _, gt = render_frame(scene, 4 / scene.frame_rate, small_camera)
        expected_last = region_descriptor(fields[4], gt.mask_for("obj0"))
        np.testing.assert_allclose(memory.stored[-1], expected_last)

    def test_idempotent_within_frame(self, small_camera, clean_scene):
        memory = FeatureMemory(tau=1, capacity=8)
        field, gt = render_frame(clean_scene, 0.0, small_camera)
        maybe_store(memory, 0, field, gt.mask_for("obj0"))
        maybe_store(memory, 0, field, gt.mask_for("obj0"))
        assert len(memory) == 1

    def test_empty_mask_skipped_with_warning(self, small_camera, clean_scene, caplog):
        memory = FeatureMemory(tau=1)
        field, _ = render_frame(clean_scene, 0.0, small_camera)
        with caplog.at_level(logging.WARNING):
            maybe_store(memory, 0, field, Mask.empty(field.height, field.width))
        assert len(memory) == 0
        assert "empty mask" in caplog.text


class TestRecoveryQuery:
    def test_single_entry(self):
        memory = FeatureMemory(tau=1)
        memory.stored.append(np.array([0.0, 3.0, 4.0]))
        q = recovery_query(memory, "obj")
        np.testing.assert_allclose(q.vector, [0.0, 3.0, 4.0])
        assert q.label == "obj"

    def test_mean_of_two(self):
        memory = FeatureMemory(tau=1)
        memory.stored.append(np.array([1.0, 0.0]))
        memory.stored.append(np.array([0.0, 1.0]))
        q = recovery_query(memory, "obj")
        np.testing.assert_allclose(q.vector, [0.5, 0.5])

    def test_antipodal_mean_degenerates(self):
        memory = FeatureMemory(tau=1)
        memory.stored.append(np.array([1.0, 0.0]))
        memory.stored.append(np.array([-1.0, 0.0]))
        with pytest.raises(ValueError, match="zero norm"):
            recovery_query(memory, "obj")

    def test_empty_memory(self):
        with pytest.raises(EmptyMemoryError):
            recovery_query(FeatureMemory(), "obj")

    def test_identical_vectors_exact(self):
        memory = FeatureMemory(tau=1)
        v = unit([1.0, 2.0, -1.0])
        for _ in range(4):
            memory.stored.append(v.copy())
        q = recovery_query(memory, "obj")
        np.testing.assert_array_equal(q.vector, v.astype(np.float32))


class TestRedetect:
    def test_candidate_list_contains_object(self, small_camera, clean_scene):
        field, gt = render_frame(clean_scene, 0.0, small_camera)
        query = class_query(clean_scene, "target")
        region = redetect(query, field, DetectionConfig(),
                          candidates=gt.nonempty_masks())
        assert region is not None
        assert region.score == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_array_equal(region.mask.values,
                                      gt.mask_for("obj0").values)

    def test_all_dissimilar_returns_none(self, small_camera, clean_scene):
        field, gt = render_frame(clean_scene, 0.0, small_camera)
        away = QueryDescriptor(
            label="target",
            vector=-class_basis(clean_scene)["target"].astype(np.float64),
        )
        assert redetect(away, field, DetectionConfig(),
                        candidates=gt.nonempty_masks()) is None

    def test_coarse_route(self, small_camera, noisy_scene):
        field, gt = render_frame(noisy_scene, 0.0, small_camera)
        query = class_query(noisy_scene, "target")
        cfg = DetectionConfig(similarity=SimilarityConfig(alpha=0.6))
        region = redetect(query, field, cfg, candidates=None)
        assert region is not None
        from followpipe.evaluation import iou
        assert iou(region.mask, gt.mask_for("obj0")) > 0.95

    def test_tie_breaks_to_earliest_candidate(self, small_camera, clean_scene):
        field, gt = render_frame(clean_scene, 0.0, small_camera)
        query = class_query(clean_scene, "target")
        mask = gt.mask_for("obj0")
        region = redetect(query, field, DetectionConfig(),
                          candidates=[mask, mask])
        assert region is not None
        np.testing.assert_array_equal(region.mask.values, mask.values)


class TestHumanRedetect:
    def test_box_around_clean_object(self, small_camera, clean_scene):
        field, gt = render_frame(clean_scene, 0.0, small_camera)
        truth = gt.mask_for("obj0")
        x, y, w, h = truth.bbox()
        region = human_redetect(field, "target", box=(x, y, w, h))
        np.testing.assert_array_equal(region.mask.values, truth.values)

    def test_click_background_component(self, small_camera, clean_scene):
        field, gt = render_frame(clean_scene, 0.0, small_camera)
        region = human_redetect(field, "bg", click=(2, 2))
        assert not region.mask.is_empty
        # the component is background colored: it excludes the object
        overlap = region.mask.intersection_count(gt.mask_for("obj0"))
        assert overlap == 0

    def test_oversized_box_refines_to_object(self, small_camera):
        # box with twice the object area: refinement keeps (almost) only
        # object pixels, per the refinement oracle vs ground truth
        scene = scenes.stationary_scene(sigma=0.1, dim=32, seed=8)
        field, gt = render_frame(scene, 0.0, small_camera)
        truth = gt.mask_for("obj0")
        x, y, w, h = truth.bbox()
        area = truth.nonzero_count
        # grow the box until it holds about twice the object's pixel count
        grow = 0
        while (w + 2 * grow) * (h + 2 * grow) < 2 * area:
            grow += 1
        bx = max(0, x - grow)
        by = max(0, y - grow)
        bw = min(field.width - bx, w + 2 * grow)
        bh = min(field.height - by, h + 2 * grow)
        region = human_redetect(field, "target", box=(bx, by, bw, bh))
        box_mask = np.zeros((field.height, field.width), bool)
        box_mask[by:by + bh, bx:bx + bw] = True
        assert (region.mask.values <= box_mask).all()  # refined stays in box
        kept = region.mask.intersection_count(truth)
        assert kept / truth.nonzero_count >= 0.9

    def test_out_of_bounds_click(self, small_camera, clean_scene):
        field, _ = render_frame(clean_scene, 0.0, small_camera)
        with pytest.raises(OutOfBoundsError):
            human_redetect(field, "t", click=(field.width, 0))

    def test_zero_area_box(self, small_camera, clean_scene):
        field, _ = render_frame(clean_scene, 0.0, small_camera)
        with pytest.raises(OutOfBoundsError):
            human_redetect(field, "t", box=(5, 5, 0, 3))

    def test_exactly_one_input(self, small_camera, clean_scene):
        field, _ = render_frame(clean_scene, 0.0, small_camera)
        with pytest.raises(ValueError):
            human_redetect(field, "t", click=(1, 1), box=(0, 0, 2, 2))
        with pytest.raises(ValueError):
            human_redetect(field, "t")


class TestNoiseFreeRecovery:
    def test_redetect_on_reemergence_frame_is_exact(self, small_camera):
        # memory populated from noise-free tracking: the recovery query is the
        # class basis, so the re-emergence frame matches ground truth exactly
        scene = scenes.tunnel_scene(sigma=0.0, occlusion=(1.0, 3.0), speed=0.0,
                                    duration=10.0)
        from followpipe.detection import region_descriptor
        from followpipe.evaluation import iou
        memory = FeatureMemory(tau=1, capacity=8)
        for i in range(5):
            field, gt = render_frame(scene, i / scene.frame_rate, small_camera)
            maybe_store(memory, i, field, gt.mask_for("obj0"))
        query = recovery_query(memory, "target")
        # first frame after the occluder deactivates
        field, gt = render_frame(scene, 3.1, small_camera)
        cfg = DetectionConfig(similarity=SimilarityConfig(alpha=0.6))
        region = redetect(query, field, cfg)
        assert region is not None
        assert iou(region.mask, gt.mask_for("obj0")) == 1.0


class TestTunnelRecovery:
    def test_automatic_recovery_after_reemergence(self, rng):
        from followpipe.pipeline import (
            DetectPath, FrameProcessor, PipelineMode, ProcessorConfig,
        )
        from followpipe.providers import CameraModel, ground_truth
        from followpipe.evaluation import iou

        scene = scenes.tunnel_scene(seed=17)
        camera = CameraModel(view_width=160, view_height=120, scale=0.025)
        queries = (class_query(scene, "target"),)
        cfg = ProcessorConfig(
            queries=queries, target_label="target",
            detection=DetectionConfig(similarity=SimilarityConfig(alpha=0.6)),
            recovery=RecoveryMode.AUTOMATIC,
        )
        # static camera placed over the re-emergence zone
        target = scene.objects[0]
        camera = camera.at(target.position(scene.occluders[0].t1 + 2.0))
        processor = FrameProcessor(cfg)
        reemergence = None
        recovered_at = None
        total = int(scene.duration * scene.frame_rate)
        for i in range(total):
            t = i / scene.frame_rate
            field, gt = render_frame(scene, t, camera)
            result = processor.process(field)
            truth = gt.mask_for("obj0")
            occluded = truth.is_empty
            if reemergence is None and i > 0 and not occluded and was_occluded:
                reemergence = i
            was_occluded = occluded
            if (
                reemergence is not None and recovered_at is None
                and result.track_mask is not None
                and iou(result.track_mask, truth) >= 0.5
            ):
                recovered_at = i
        assert reemergence is not None
        assert recovered_at is not None
        assert recovered_at - reemergence <= 30
