"""Deterministic simulator for transparent distributed caching in
vehicular edge pub/sub networks."""

from .model import (
    DetectedObject,
    Header,
    ImageRef,
    Message,
    ObjectList,
    PayloadKind,
    PointCloudRef,
    Pose,
    Topic,
    content_key,
    translate_location,
)
from .objectmap import BoostRecord, CellKey, ObjectMapStore, UpdateRule, quantize, share_filter
from .genie import (
    DedupFilter,
    Encapsulation,
    GenieNode,
    GenieRole,
    ServiceSpec,
    TopicCacheDB,
    encapsulate,
)
from .simnet import Fabric, Link, NodeId, SimNode
from .workload import (
    DetectorNode,
    DeviceProfile,
    Trace,
    TraceFrame,
    detector_stub,
    load_device_profiles,
    load_trace,
    save_trace,
    synth_trace,
)
from .harness import (
    MetricsReport,
    ObjectMapParams,
    ScenarioConfig,
    SynthSpec,
    compare_baselines,
    emit_report,
    run_scenario,
    with_phantoms,
)

__version__ = "0.1.0"
