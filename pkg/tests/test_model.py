import itertools
import math
import random

import pytest
from hypothesis import given, strategies as st

from geniesim.model import (
    DetectedObject,
    Header,
    ImageRef,
    Message,
    ObjectList,
    PayloadKind,
    Pose,
    Topic,
    content_key,
    core_objects,
    inverse_translate,
    normalize_yaw,
    payload_bytes,
    strip_map_objects,
    translate_location,
)
from conftest import IMAGE, image_message, obj, objects_message


class TestContentKey:
    def test_same_image_same_topic_equal_digests(self):
        a = image_message("img-1", origin="car1/camera", seq=1)
        b = image_message("img-1", origin="car2/camera", seq=99, stamp=500.0)
        assert content_key(a) == content_key(b)

    def test_topic_separates_key_space(self):
        a = image_message("img-1")
        b = Message(a.header, Topic("/image2", PayloadKind.IMAGE), a.payload)
        assert content_key(a) != content_key(b)

    def test_object_order_irrelevant(self):
        # brute force: all 6 orderings of a 3-object list digest identically
        objs = (
            obj("car", 0.7, (1.0, 2.0, 0.5)),
            obj("pedestrian", 0.4, (3.0, -1.0, 0.0)),
            obj("traffic_light", 0.9, (-2.0, 5.0, 3.0)),
        )
        digests = {
            content_key(objects_message(tuple(perm)))
            for perm in itertools.permutations(objs)
        }
        assert len(digests) == 1

    def test_pure_function(self):
        msg = image_message("img-7")
        digests = {content_key(msg) for _ in range(10_000)}
        assert len(digests) == 1

    def test_header_and_via_excluded(self):
        msg = objects_message((obj("car", 0.5, (0.3, 0.3, 0.3)),))
        tagged = Message(msg.header, msg.topic, msg.payload, via="hit")
        assert content_key(msg) == content_key(tagged)

    def test_map_objects_excluded(self):
        base = objects_message((obj("car", 0.5, (0.3, 0.3, 0.3)),))
        augmented = objects_message(
            (obj("car", 0.5, (0.3, 0.3, 0.3)), obj("pole", 0.9, (5.3, 0.3, 0.3), from_map=True))
        )
        assert content_key(base) == content_key(augmented)

    def test_confidence_is_content(self):
        a = objects_message((obj("car", 0.5, (0.3, 0.3, 0.3)),))
        b = objects_message((obj("car", 0.6, (0.3, 0.3, 0.3)),))
        assert content_key(a) != content_key(b)

    def test_topic_override(self):
        msg = image_message("img-1")
        assert content_key(msg, "/image") == content_key(msg)
        assert content_key(msg, "/other") != content_key(msg)


class TestTranslate:
    def test_origin_maps_to_pose_position(self):
        assert translate_location((0.0, 0.0, 0.0), Pose(10.0, 5.0, 0.0, 0.0)) == (10.0, 5.0, 0.0)

    def test_quarter_turn(self):
        out = translate_location((1.0, 0.0, 0.0), Pose(0.0, 0.0, 0.0, math.pi / 2))
        assert abs(out[0] - 0.0) < 1e-9
        assert abs(out[1] - 1.0) < 1e-9
        assert abs(out[2]) < 1e-9

    def test_identity_pose_is_identity_map(self):
        v = (3.25, -7.5, 1.125)
        assert translate_location(v, Pose(0.0, 0.0, 0.0, 0.0)) == v

    def test_round_trip_100_random_offsets(self):
        rng = random.Random(42)
        for _ in range(100):
            pose = Pose(
                rng.uniform(-1000, 1000),
                rng.uniform(-1000, 1000),
                rng.uniform(-10, 10),
                rng.uniform(-math.pi, math.pi),
            )
            v = (rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 5))
            back = inverse_translate(translate_location(v, pose), pose)
            assert max(abs(a - b) for a, b in zip(back, v)) < 1e-9

    @given(
        st.floats(-100, 100), st.floats(-100, 100), st.floats(-10, 10),
        st.floats(-math.pi, math.pi),
        st.floats(-30, 30), st.floats(-30, 30), st.floats(-5, 5),
    )
    def test_round_trip_property(self, px, py, pz, yaw, vx, vy, vz):
        pose = Pose(px, py, pz, yaw)
        back = inverse_translate(translate_location((vx, vy, vz), pose), pose)
        assert max(abs(a - b) for a, b in zip(back, (vx, vy, vz))) < 1e-9


class TestTypes:
    def test_yaw_normalized(self):
        assert -math.pi <= Pose(0, 0, 0, 3 * math.pi).yaw < math.pi
        assert Pose(0, 0, 0, math.pi).yaw == pytest.approx(-math.pi)

    def test_normalize_yaw_range(self):
        for y in (-10.0, -math.pi, 0.0, math.pi, 10.0, 100.0):
            assert -math.pi <= normalize_yaw(y) < math.pi

    def test_confidence_bounds(self):
        with pytest.raises(ValueError):
            DetectedObject("car", 1.3, (0, 0, 0), (1, 1, 1))
        with pytest.raises(ValueError):
            DetectedObject("car", -0.1, (0, 0, 0), (1, 1, 1))

    def test_extent_positive(self):
        with pytest.raises(ValueError):
            DetectedObject("car", 0.5, (0, 0, 0), (1, 0, 1))

    def test_negative_stamp_rejected(self):
        with pytest.raises(ValueError):
            Header("car1/camera", 0, -1.0)

    def test_payload_topic_kind_must_match(self):
        with pytest.raises(ValueError):
            Message(Header("n", 0, 0.0), IMAGE, ObjectList(()))

    def test_empty_topic_name_rejected(self):
        with pytest.raises(ValueError):
            Topic("", PayloadKind.IMAGE)


class TestPayloadBytes:
    def test_strip_map_objects(self):
        augmented = objects_message(
            (obj("car", 0.5, (0.3, 0.3, 0.3)), obj("pole", 0.9, (5.3, 0.3, 0.3), from_map=True))
        )
        stripped = strip_map_objects(augmented)
        assert core_objects(augmented.payload) == stripped.payload.objects
        assert len(stripped.payload.objects) == 1

    def test_bytes_stable_and_order_sensitive(self):
        a = objects_message((obj("a", 0.5, (0.3, 0.3, 0.3)), obj("b", 0.5, (1.3, 0.3, 0.3))))
        b = objects_message((obj("b", 0.5, (1.3, 0.3, 0.3)), obj("a", 0.5, (0.3, 0.3, 0.3))))
        assert payload_bytes(a.payload) == payload_bytes(a.payload)
        assert payload_bytes(a.payload) != payload_bytes(b.payload)

    def test_image_bytes_ignore_size(self):
        assert payload_bytes(ImageRef("x", 10)) == payload_bytes(ImageRef("x", 999))
