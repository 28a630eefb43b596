"""hazardsim: a deterministic replay and simulation engine for camera-based
hazard alert pipelines.

The library covers the full loop: clip storage and synthesis, IoU tracking
with confidence smoothing, alert gating (class mask, zones, thresholds,
per-device debounce), a hop-latency model of the wearable alert mesh, and a
ground-truth evaluation harness (precision, recall, alert %, compensated
alert delay).
"""

from .alertgate import (
    AlertCandidate,
    AlertEvent,
    AlertLedger,
    MODE_PRESETS,
    MODES,
    PipelineConfig,
    Zone,
    debounce,
    evaluate_frame,
    mode_preset,
    zone_intersects,
)
from .alertnet import (
    COORDINATOR,
    DeliveryRecord,
    Device,
    DispatchResult,
    MeshTopology,
    default_topology,
    dispatch,
    hop_latency,
    load_topology,
    round_trip_latency,
    route_hops,
)
from .clipstore import (
    CLASSES,
    Clip,
    Detection,
    FrameRecord,
    GroundTruthPerson,
    QualityVerdict,
    load_clip,
    quality_gate,
    save_clip,
)
from .controlplane import (
    ControlMessage,
    EventBroker,
    RunSpec,
    Subscription,
    apply_config,
    run_replay,
    subscribe_events,
)
from .evalharness import (
    ClipResult,
    LatencyAccounting,
    MetricsReport,
    ReportCell,
    RunLog,
    aggregate_report,
    alert_delays,
    alert_percent,
    average_row,
    dataset_cell,
    delay_histogram,
    framewise_pr,
    match_frame,
)
from .synth import (
    ActorSpec,
    NoiseSpec,
    QualityDip,
    QualitySpec,
    ScenarioSpec,
    load_scenario,
    scenario_from_obj,
    synth_clip,
)
from .tracker import (
    Association,
    Track,
    TrackerParams,
    TrackerState,
    associate,
    greedy_assign,
    update_tracks,
)

__version__ = "0.1.0"
