import pytest

from geniesim.genie import (
    DedupFilter,
    EncapsulationError,
    GenieNode,
    GenieRole,
    ServiceSpec,
    TopicCacheDB,
    encapsulate,
)
from geniesim.model import Header, PayloadKind, Topic, content_key
from geniesim.objectmap import ObjectMapStore
from geniesim.simnet import Fabric, SimNode
from conftest import IMAGE, OBJECTS, image_message, obj, objects_message


def detector_spec() -> ServiceSpec:
    return ServiceSpec("detector", subscribes=(IMAGE,), publishes=(OBJECTS,))


class TestEncapsulate:
    def test_detector_surface(self):
        encap = encapsulate(detector_spec())
        assert encap.rewritten == {"/image": "/image-local", "/objects": "/objects-local"}
        assert set(encap.exposed_remote) == {"/image-remote", "/objects-remote"}
        assert encap.routes == {"/image": OBJECTS}

    def test_empty_spec_is_valid_noop(self):
        encap = encapsulate(ServiceSpec("idle", (), ()))
        assert encap.rewritten == {} and encap.exposed_remote == () and encap.routes == {}

    def test_already_rewritten_rejected(self):
        bad = ServiceSpec(
            "detector", (Topic("/image-local", PayloadKind.IMAGE),), (OBJECTS,)
        )
        with pytest.raises(EncapsulationError):
            encapsulate(bad)
        bad = ServiceSpec(
            "detector", (IMAGE,), (Topic("/objects-remote", PayloadKind.OBJECTS),)
        )
        with pytest.raises(EncapsulationError):
            encapsulate(bad)

    def test_unpairable_topics_rejected(self):
        spec = ServiceSpec(
            "odd",
            (IMAGE, Topic("/lidar", PayloadKind.POINT_CLOUD)),
            (OBJECTS, Topic("/objects2", PayloadKind.OBJECTS), Topic("/objects3", PayloadKind.OBJECTS)),
        )
        with pytest.raises(EncapsulationError):
            encapsulate(spec)

    def test_multi_topic_pairing_by_position(self):
        lidar = Topic("/lidar", PayloadKind.POINT_CLOUD)
        objects3d = Topic("/objects3d", PayloadKind.OBJECTS)
        encap = encapsulate(ServiceSpec("fusion", (IMAGE, lidar), (OBJECTS, objects3d)))
        assert encap.routes == {"/image": OBJECTS, "/lidar": objects3d}
        assert encap.rewritten["/lidar"] == "/lidar-local"


class TestTopicCacheDB:
    def test_build_idempotent(self):
        db = TopicCacheDB()
        db.ensure_topic(IMAGE)
        db.add_waiter("/image", "d1", Header("n", 0, 0.0), 0.0)
        db.ensure_topic(IMAGE)  # second build leaves the map untouched
        assert db.entry_count("/image") == 1

    def test_topics_keep_independent_key_spaces(self):
        db = TopicCacheDB()
        db.ensure_topic(IMAGE)
        db.ensure_topic(Topic("/image2", PayloadKind.IMAGE))
        msg_a = image_message("same-content")
        db.add_waiter("/image", content_key(msg_a, "/image"), Header("a", 0, 0.0), 0.0)
        db.fill("/image", content_key(msg_a, "/image"), objects_message(()), 1.0)
        # same digest string under the second topic is still a miss
        assert db.lookup("/image2", content_key(msg_a, "/image")) is None

    def test_pending_expiry_removes_empty_entry(self):
        db = TopicCacheDB()
        db.ensure_topic(IMAGE)
        db.add_waiter("/image", "d1", Header("n", 0, 0.0), 0.0)
        assert db.pending_count() == 1
        db.purge_expired(now=5001.0, ttl_ms=5000.0)
        assert db.pending_count() == 0
        assert db.entry_count("/image") == 0

    def test_fill_detaches_all_waiters(self):
        db = TopicCacheDB()
        db.ensure_topic(IMAGE)
        h1, h2 = Header("a", 0, 0.0), Header("a", 1, 0.0)
        db.add_waiter("/image", "d1", h1, 0.0)
        db.add_waiter("/image", "d1", h2, 0.0)
        woken = db.fill("/image", "d1", objects_message(()), 1.0)
        assert {w.key for w in woken} == {("a", 0), ("a", 1)}
        assert db.pending_count() == 0

    def test_first_answer_wins(self):
        db = TopicCacheDB()
        db.ensure_topic(IMAGE)
        db.add_waiter("/image", "d1", Header("a", 0, 0.0), 0.0)
        first = objects_message((obj("car", 0.5, (0.2, 0.2, 0.2)),))
        db.fill("/image", "d1", first, 1.0)
        db.fill("/image", "d1", objects_message(()), 2.0)
        assert db.lookup("/image", "d1").result is first

    def test_lru_bound_evicts_least_recently_hit(self):
        db = TopicCacheDB(max_entries=2)
        db.ensure_topic(IMAGE)
        for i, digest in enumerate(("d1", "d2", "d3")):
            db.add_waiter("/image", digest, Header("a", i, 0.0), float(i))
            db.fill("/image", digest, objects_message((), seq=i), float(i))
            if digest == "d1":
                db.lookup("/image", "d1").last_hit_ms = 100.0  # keep d1 warm
        assert db.entry_count("/image") == 2
        assert db.lookup("/image", "d2") is None
        assert db.lookup("/image", "d1") is not None


class TestDedupFilter:
    def test_duplicate_discarded_remote_first(self):
        dedup = DedupFilter(window_ms=1000.0)
        payload = objects_message((obj("car", 0.7, (0.2, 0.2, 0.2)),))
        from dataclasses import replace

        remote_copy = replace(payload, via="answer")
        local_copy = replace(payload, via="answer", header=Header("car1/camera", 0, 0.0))
        assert dedup.offer(10.0, remote_copy) is True
        assert dedup.offer(12.0, local_copy) is False
        assert (dedup.accepted, dedup.discarded) == (1, 1)

    def test_distinct_digests_both_delivered(self):
        dedup = DedupFilter(window_ms=1000.0)
        assert dedup.offer(0.0, objects_message((obj("car", 0.7, (0.2, 0.2, 0.2)),)))
        assert dedup.offer(0.0, objects_message((obj("car", 0.8, (0.2, 0.2, 0.2)),)))

    def test_window_boundary(self):
        dedup = DedupFilter(window_ms=1000.0)
        msg = objects_message((obj("car", 0.7, (0.2, 0.2, 0.2)),))
        assert dedup.offer(0.0, msg) is True
        assert dedup.offer(999.0, msg) is False
        assert dedup.offer(1001.0, msg) is True  # window expired, delivered again


class _AnswerSink(SimNode):
    def __init__(self, name, home):
        super().__init__(name, home)
        self.received = []

    def on_message(self, net, at, network, wire_topic, message):
        self.received.append((at, wire_topic, message))


class _EdgeSpy(SimNode):
    def __init__(self, name):
        super().__init__(name, "EDGE")
        self.received = []

    def on_message(self, net, at, network, wire_topic, message):
        self.received.append((at, wire_topic, message))


def wire_local_genie(**genie_kwargs):
    """One car network with a genie, plus spies for the inner node's wires
    and the edge side."""
    net = Fabric(seed=0)
    net.add_network("VN1")
    net.add_network("EDGE")
    net.add_node(SimNode("camera", "VN1"))
    inner = _AnswerSink("inner", "VN1")  # stands in for the wrapped detector
    net.add_node(inner)
    net.subscribe("inner", "/image-local", "VN1")
    consumer = _AnswerSink("consumer", "VN1")
    net.add_node(consumer)
    net.subscribe("consumer", "/objects", "VN1")
    spy = _EdgeSpy("edge-spy")
    net.add_node(spy)
    net.subscribe("edge-spy", "/image-remote", "EDGE")
    genie = GenieNode(
        "genie", "VN1", encapsulate(detector_spec()), GenieRole.LOCAL,
        edge_network="EDGE", **genie_kwargs,
    )
    genie.attach(net)
    return net, genie, inner, consumer, spy


class TestArrivalProcedure:
    def test_miss_forwards_local_and_remote_and_parks_digest(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        msg = image_message("f0")
        net.publish("camera", msg, wire_topic="/image", network="VN1")
        net.run_until(100.0)
        assert len(inner.received) == 1  # shared with the wrapped node
        assert len(spy.received) == 1  # shared with remote peers
        assert genie.counters.misses == 1
        assert genie.db.entry_count("/image") == 1
        assert genie.db.lookup("/image", content_key(msg, "/image")).result is None

    def test_miss_answer_relayed_to_consumer_and_cached(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        msg = image_message("f0")
        net.publish("camera", msg, wire_topic="/image", network="VN1")
        net.run_until(50.0)
        answer = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),))
        net.publish("inner", answer, wire_topic="/objects-local", network="VN1", at=50.0)
        net.run_until(200.0)
        assert len(consumer.received) == 1
        assert consumer.received[0][2].via == "answer"
        assert genie.counters.local_answers == 1
        assert genie.db.lookup("/image", content_key(msg, "/image")).result is not None

    def test_hit_publishes_stored_result_without_recompute(self):
        net, genie, inner, consumer, spy = wire_local_genie(
            object_map=ObjectMapStore(), hit_overhead_ms=8.8
        )
        net.publish("camera", image_message("f0", seq=0), wire_topic="/image", network="VN1")
        net.run_until(50.0)
        answer = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),))
        net.publish("inner", answer, wire_topic="/objects-local", network="VN1", at=50.0)
        net.run_until(100.0)
        # the same content again, new header
        net.publish("camera", image_message("f0", seq=1, stamp=100.0), wire_topic="/image", network="VN1", at=100.0)
        net.run_until(200.0)
        assert genie.counters.hits == 1
        assert len(inner.received) == 1  # no second -local delivery
        assert len(spy.received) == 1  # no second upload
        hit_at, _, hit_msg = consumer.received[-1]
        assert hit_at == pytest.approx(108.8)
        assert hit_msg.via == "hit"
        assert hit_msg.header.seq == 1  # re-headed to the requesting exchange

    def test_unmatched_answer_falls_through_as_fresh_request(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        stray = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),), seq=77)
        net.publish("inner", stray, wire_topic="/objects-local", network="VN1")
        net.run_until(100.0)
        # no crash; the miss branch ran for the /objects hash map
        assert genie.db.has_topic("/objects")
        assert genie.db.topic_map("/objects").misses == 1
        assert consumer.received == []  # nothing is relayed downstream

    def test_inflight_coalescing_answers_both_requesters(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        net.publish("camera", image_message("f0", seq=0), wire_topic="/image", network="VN1", at=0.0)
        net.publish("camera", image_message("f0", seq=1, stamp=5.0), wire_topic="/image", network="VN1", at=5.0)
        net.run_until(20.0)
        assert len(inner.received) == 1  # second request does not re-broadcast
        assert len(spy.received) == 1
        assert genie.counters.misses == 2  # in-flight repeat counts as a miss
        answer = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),), seq=0)
        net.publish("inner", answer, wire_topic="/objects-local", network="VN1", at=20.0)
        net.run_until(100.0)
        assert {m.header.seq for _, _, m in consumer.received} == {0, 1}

    def test_pending_ttl_allows_retry(self):
        net, genie, inner, consumer, spy = wire_local_genie(pending_ttl_ms=1000.0)
        net.publish("camera", image_message("f0", seq=0), wire_topic="/image", network="VN1", at=0.0)
        net.run_until(10.0)
        net.publish(
            "camera", image_message("f0", seq=1, stamp=2000.0), wire_topic="/image", network="VN1", at=2000.0
        )
        net.run_until(3000.0)
        assert len(inner.received) == 2  # expired request is re-asked

    def test_malformed_message_dropped_with_diagnostic(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        wrong = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),))
        net.publish("camera", wrong, wire_topic="/image", network="VN1")  # objects on an image wire
        net.run_until(10.0)
        assert genie.counters.malformed_dropped == 1
        assert genie.counters.requests == 0
        unknown = image_message("f0")
        net.publish("camera", unknown, wire_topic="/unheard-of", network="VN1")
        net.run_until(20.0)
        assert genie.counters.malformed_dropped == 1  # not even subscribed; nothing happens

    def test_counter_consistency(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        for seq, content in enumerate(["a", "b", "a", "a", "c"]):
            net.publish(
                "camera",
                image_message(content, seq=seq, stamp=float(seq * 1000)),
                wire_topic="/image",
                network="VN1",
                at=float(seq * 1000),
            )
            net.run_until(seq * 1000 + 10.0)
            answer = objects_message((obj("car", 0.7, (3.2 + seq, 0.2, 0.2)),), seq=seq)
            net.publish("inner", answer, wire_topic="/objects-local", network="VN1", at=seq * 1000 + 10.0)
            net.run_until(seq * 1000 + 500.0)
        c = genie.counters
        assert c.hits + c.misses == c.requests
        assert c.pending_peak >= 1

    def test_cache_growth_matches_distinct_digests(self):
        net, genie, inner, consumer, spy = wire_local_genie()
        contents = ["a", "b", "a", "c", "b", "a"]
        for seq, content in enumerate(contents):
            net.publish(
                "camera",
                image_message(content, seq=seq, stamp=float(seq * 1000)),
                wire_topic="/image",
                network="VN1",
                at=float(seq * 1000),
            )
            net.run_until(seq * 1000 + 999.0)
        assert genie.db.entry_count("/image") == len(set(contents))


def wire_remote_genie(**genie_kwargs):
    """An edge-resident genie with its own device network, plus spies on
    the edge broadcast surface and on the inner detector wire."""
    net = Fabric(seed=0)
    net.add_network("E1")
    net.add_network("EDGE")
    inner = _AnswerSink("edge-detector", "E1")
    net.add_node(inner)
    net.subscribe("edge-detector", "/image-local", "E1")
    requester = _EdgeSpy("car-side")  # a car genie's view of the edge
    net.add_node(requester)
    net.subscribe("car-side", "/objects-remote", "EDGE")
    peer = _EdgeSpy("peer-spy")
    net.add_node(peer)
    net.subscribe("peer-spy", "/image-remote", "EDGE")
    genie = GenieNode(
        "edge-genie", "E1", encapsulate(detector_spec()), GenieRole.REMOTE,
        edge_network="EDGE", **genie_kwargs,
    )
    genie.attach(net)
    return net, genie, inner, requester, peer


class TestRemoteRole:
    def test_uploaded_miss_reaches_edge_detector(self):
        net, genie, inner, requester, peer = wire_remote_genie()
        net.publish("car-side", image_message("f0"), wire_topic="/image-remote", network="EDGE")
        net.run_until(100.0)
        assert len(inner.received) == 1
        reshared = [
            r for r in net.deliveries
            if r.frm == "edge-genie" and r.to == "peer-spy" and r.topic == "/image-remote"
        ]
        assert len(reshared) == 1  # miss is re-shared with other peers

    def test_hit_served_on_edge_surface_reheaded_to_requester(self):
        net, genie, inner, requester, peer = wire_remote_genie(object_map=ObjectMapStore())
        net.publish("car-side", image_message("f0", seq=0), wire_topic="/image-remote", network="EDGE")
        net.run_until(10.0)
        answer = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),), seq=0)
        net.publish("edge-detector", answer, wire_topic="/objects-local", network="E1", at=10.0)
        net.run_until(50.0)
        assert len(requester.received) == 1  # the relayed first answer
        net.publish(
            "car-side",
            image_message("f0", origin="car2/camera", seq=4, stamp=100.0),
            wire_topic="/image-remote", network="EDGE", at=100.0,
        )
        net.run_until(200.0)
        assert genie.counters.hits == 1
        assert len(inner.received) == 1  # no recompute for the second car
        _, wire, served = requester.received[-1]
        assert wire == "/objects-remote"
        assert served.header.key == ("car2/camera", 4)
        assert served.via == "hit"

    def test_broadcast_learned_answer_not_reemitted(self):
        # two remote peers hold the same pending; when one's answer is
        # broadcast, the other fills its cache silently
        net, genie, inner, requester, peer = wire_remote_genie()
        request = image_message("f0", seq=0)
        net.publish("car-side", request, wire_topic="/image-remote", network="EDGE")
        net.run_until(10.0)
        answer = objects_message((obj("car", 0.7, (3.2, 0.2, 0.2)),), seq=0)
        net.publish("car-side", answer, wire_topic="/objects-remote", network="EDGE", at=10.0)
        net.run_until(100.0)
        assert genie.counters.remote_answers == 1
        from geniesim.model import content_key as ck

        assert genie.db.lookup("/image", ck(request, "/image")).result is not None
        assert requester.received == []  # no duplicate echo back onto the edge


class TestPhantomRole:
    def test_phantom_never_touches_local_wires(self):
        net = Fabric(seed=0)
        net.add_network("VN2")
        net.add_network("EDGE")
        net.add_node(SimNode("camera", "VN2"))
        local_spy = _AnswerSink("local-spy", "VN2")
        net.add_node(local_spy)
        net.subscribe("local-spy", "/image-local", "VN2")
        edge_spy = _EdgeSpy("edge-spy")
        net.add_node(edge_spy)
        net.subscribe("edge-spy", "/image-remote", "EDGE")
        genie = GenieNode(
            "genie", "VN2", encapsulate(detector_spec()), GenieRole.PHANTOM,
            edge_network="EDGE", answers_on="home",
        )
        genie.attach(net)
        for seq in range(3):
            net.publish(
                "camera", image_message(f"f{seq}", seq=seq, stamp=float(seq)),
                wire_topic="/image", network="VN2", at=float(seq),
            )
        net.run_until(100.0)
        assert local_spy.received == []  # phantoms forward nothing to -local
        assert len(edge_spy.received) == 3


class TestTransparency:
    def test_forced_miss_echoes_terminate_between_edge_peers(self):
        # with caching disabled there are no parked entries to absorb the
        # re-broadcasts two edge peers bounce at each other; the pending key
        # must stop the loop
        from geniesim.harness import ScenarioConfig, SynthSpec, run_scenario

        config = ScenarioConfig(
            n_cars=1,
            edge_devices=("AGX", "A4500"),
            synth=SynthSpec(route="loop", n_frames=10, overlap_fraction=0.0),
            seed=16,
            force_miss=True,
        )
        report = run_scenario(config)  # would never return if echoes cascaded
        assert report.completed == 10

    def test_forced_miss_stream_matches_no_genie_fabric(self):
        from geniesim.harness import (
            ScenarioConfig,
            SynthSpec,
            _scenario_trace,
            build_local_scenario,
            run_built_scenario,
            run_scenario,
        )
        from geniesim.model import payload_bytes, strip_map_objects

        config = ScenarioConfig(
            n_cars=1,
            synth=SynthSpec(route="loop", n_frames=30, overlap_fraction=0.5),
            seed=5,
            force_miss=True,
        )
        baseline = ScenarioConfig(
            n_cars=1,
            synth=SynthSpec(route="loop", n_frames=30, overlap_fraction=0.5),
            seed=5,
        )
        trace = _scenario_trace(baseline)
        l_report = run_built_scenario(build_local_scenario(baseline, trace), "L")
        dg_report = run_scenario(config, trace)
        l_payloads = {
            (s.car, s.seq): payload_bytes(strip_map_objects(s.message).payload)
            for s in l_report.samples
        }
        dg_payloads = {
            (s.car, s.seq): payload_bytes(strip_map_objects(s.message).payload)
            for s in dg_report.samples
        }
        assert l_payloads == dg_payloads
        # forced misses really disable reuse
        assert dg_report.reuse_ratio("image") == 0.0
