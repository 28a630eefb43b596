import random

import pytest

from hazardsim.alertgate import (
    AlertCandidate,
    AlertLedger,
    MODE_PRESETS,
    PipelineConfig,
    Zone,
    debounce,
    evaluate_frame,
    mode_preset,
    zone_intersects,
)
from hazardsim.errors import DomainError, ValidationError
from hazardsim.tracker import Track

FULL_FRAME = Zone(polygon=((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


def track(track_id=1, node="cam0", cls="person", conf=0.9,
          bbox=(0.4, 0.4, 0.5, 0.7), state="confirmed", frame=5):
    return Track(
        track_id=track_id,
        node_id=node,
        cls=cls,
        smoothed_confidence=conf,
        last_bbox=bbox,
        last_seen_frame=frame,
        hit_count=5,
        state=state,
    )


def candidate(node="cam0", track_id=1, conf=0.9, ts=0.0):
    return AlertCandidate(
        node_id=node,
        track_id=track_id,
        cls="person",
        confidence=conf,
        bbox=(0.4, 0.4, 0.5, 0.7),
        timestamp=ts,
    )


# -- mode presets -----------------------------------------------------------


def test_preset_tuples():
    threshold, params = mode_preset("Reactive")
    assert threshold == 0.30
    assert params.confirm_hits == 1
    assert params.confidence_smoothing_alpha == 0.8
    threshold, params = mode_preset("Default")
    assert threshold == 0.50
    assert params.confirm_hits == 2
    assert params.confidence_smoothing_alpha == 0.6
    threshold, params = mode_preset("Certain")
    assert threshold == 0.70
    assert params.confirm_hits == 4
    assert params.confidence_smoothing_alpha == 0.4


def test_preset_ordering_invariant():
    t_r, p_r = MODE_PRESETS["Reactive"]
    t_d, p_d = MODE_PRESETS["Default"]
    t_c, p_c = MODE_PRESETS["Certain"]
    assert t_r < t_d < t_c
    assert p_r.confirm_hits <= p_d.confirm_hits <= p_c.confirm_hits
    assert p_r.confirm_hits < p_c.confirm_hits


def test_unknown_mode():
    with pytest.raises(ValidationError):
        mode_preset("Paranoid")


def test_mode_preset_overwrites_config():
    config = PipelineConfig(alert_confidence_threshold=0.99)
    certain = config.with_mode("Certain")
    assert certain.alert_confidence_threshold == 0.70
    assert certain.tracker_params.confirm_hits == 4


# -- zones -------------------------------------------------------------------


def test_zone_validation():
    with pytest.raises(ValidationError):
        Zone(polygon=((0.0, 0.0), (1.0, 1.0)))
    with pytest.raises(ValidationError):
        Zone(polygon=((0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)))  # bowtie
    with pytest.raises(ValidationError):
        Zone(polygon=((0.0, 0.0), (1.2, 0.0), (0.5, 0.5)))


def test_zone_intersects_cases():
    assert zone_intersects((0.2, 0.2, 0.4, 0.4), FULL_FRAME)
    triangle = Zone(polygon=((0.0, 0.0), (0.3, 0.0), (0.0, 0.3)))
    assert not zone_intersects((0.8, 0.8, 0.9, 0.9), triangle)
    touching = Zone(polygon=((0.0, 0.0), (0.5, 0.5), (0.0, 0.5)))
    assert zone_intersects((0.5, 0.5, 0.7, 0.7), touching)


def test_config_document_roundtrip():
    config = PipelineConfig().with_mode("Certain")
    config = PipelineConfig.from_obj(config.to_obj())
    assert config.mode == "Certain"
    assert config.alert_confidence_threshold == 0.70
    again = PipelineConfig.from_obj(config.to_obj())
    assert again.to_obj() == config.to_obj()


def test_config_document_rejects_unknown_field():
    from hazardsim.errors import SchemaViolation

    with pytest.raises(SchemaViolation):
        PipelineConfig.from_obj({"mystery_knob": 3})


def test_config_empty_class_mask_rejected():
    with pytest.raises(ValidationError):
        PipelineConfig(class_mask=frozenset())


# -- evaluate_frame ----------------------------------------------------------


def test_confirmed_person_produces_candidate():
    config = PipelineConfig()
    cands = evaluate_frame([track()], config, now=100.0)
    assert len(cands) == 1
    assert cands[0].track_id == 1
    assert cands[0].timestamp == 100.0


def test_class_mask_excludes():
    config = PipelineConfig(class_mask=frozenset({"heavy_vehicle"}))
    assert evaluate_frame([track()], config, now=0.0) == []


def test_threshold_depends_on_mode():
    t = track(conf=0.6)
    certain = PipelineConfig().with_mode("Certain")
    reactive = PipelineConfig().with_mode("Reactive")
    assert evaluate_frame([t], certain, now=0.0) == []
    assert len(evaluate_frame([t], reactive, now=0.0)) == 1


def test_tentative_and_expired_excluded():
    config = PipelineConfig()
    assert evaluate_frame([track(state="tentative")], config, now=0.0) == []
    assert evaluate_frame([track(state="expired")], config, now=0.0) == []


def test_zone_filtering_per_node():
    corner = Zone(polygon=((0.0, 0.0), (0.2, 0.0), (0.2, 0.2), (0.0, 0.2)))
    config = PipelineConfig(zones={"cam0": corner})
    assert evaluate_frame([track()], config, now=0.0) == []  # bbox at center
    inside = track(bbox=(0.05, 0.05, 0.15, 0.15))
    assert len(evaluate_frame([inside], config, now=0.0)) == 1
    # Other nodes are unaffected by cam0's zone.
    other = track(node="cam1")
    assert len(evaluate_frame([other], config, now=0.0)) == 1


def test_full_frame_zone_equals_absent():
    config_zone = PipelineConfig(zones={"cam0": FULL_FRAME})
    config_none = PipelineConfig()
    rng = random.Random(3)
    for _ in range(100):
        x0 = rng.uniform(0, 0.9)
        y0 = rng.uniform(0, 0.9)
        t = track(bbox=(x0, y0, x0 + 0.08, y0 + 0.09), conf=rng.uniform(0, 1))
        assert (
            [c.to_obj() for c in evaluate_frame([t], config_zone, now=0.0)]
            == [c.to_obj() for c in evaluate_frame([t], config_none, now=0.0)]
        )


def test_candidates_ordered_by_track_id():
    tracks = [track(track_id=5), track(track_id=2), track(track_id=9)]
    cands = evaluate_frame(tracks, PipelineConfig(), now=0.0)
    assert [c.track_id for c in cands] == [2, 5, 9]


def test_threshold_monotonicity_on_random_tracks():
    rng = random.Random(17)
    for _ in range(200):
        tracks = [
            track(track_id=i, conf=rng.random(), state=rng.choice(["confirmed", "tentative"]))
            for i in range(1, rng.randint(2, 8))
        ]
        t1 = rng.uniform(0, 1)
        t2 = rng.uniform(t1, 1)
        low = {c.track_id for c in evaluate_frame(
            tracks, PipelineConfig(alert_confidence_threshold=t1), now=0.0)}
        high = {c.track_id for c in evaluate_frame(
            tracks, PipelineConfig(alert_confidence_threshold=t2), now=0.0)}
        assert high <= low


# -- debounce ----------------------------------------------------------------


def test_debounce_second_candidate_suppressed_within_window():
    ledger = AlertLedger()
    first = debounce(candidate(ts=0.0), ledger, ["band0"], now=0.0, window=2000.0)
    assert len(first) == 1
    second = debounce(candidate(ts=1500.0), ledger, ["band0"], now=1500.0, window=2000.0)
    assert second == []


def test_debounce_window_elapsed_delivers_both():
    ledger = AlertLedger()
    assert debounce(candidate(), ledger, ["band0"], now=0.0, window=2000.0)
    assert debounce(candidate(), ledger, ["band0"], now=2500.0, window=2000.0)


def test_debounce_exact_window_boundary_delivers():
    ledger = AlertLedger()
    debounce(candidate(), ledger, ["band0"], now=0.0, window=2000.0)
    assert debounce(candidate(), ledger, ["band0"], now=2000.0, window=2000.0)


def test_debounce_per_device_ledger():
    ledger = AlertLedger()
    debounce(candidate(), ledger, ["busy"], now=500.0, window=2000.0)
    deliveries = debounce(
        candidate(), ledger, ["busy", "fresh"], now=1000.0, window=2000.0
    )
    assert [d for d, _ in deliveries] == ["fresh"]


def test_debounce_suppression_leaves_ledger_untouched():
    ledger = AlertLedger()
    debounce(candidate(), ledger, ["band0"], now=0.0, window=2000.0)
    before = dict(ledger.last_by_device)
    next_id = ledger.next_event_id
    assert debounce(candidate(), ledger, ["band0"], now=100.0, window=2000.0) == []
    assert ledger.last_by_device == before
    assert ledger.next_event_id == next_id


def test_debounce_requires_positive_window():
    with pytest.raises(DomainError):
        debounce(candidate(), AlertLedger(), ["band0"], now=0.0, window=0.0)


def test_debounce_rate_bound_random_streams():
    rng = random.Random(23)
    window = 2000.0
    for _ in range(50):
        ledger = AlertLedger()
        duration = rng.uniform(3000, 20000)
        times = sorted(rng.uniform(0, duration) for _ in range(rng.randint(0, 60)))
        delivered = []
        for now in times:
            out = debounce(candidate(ts=now), ledger, ["band0"], now=now, window=window)
            delivered.extend(t for _, e in out for t in [e.timestamp])
        # No two deliveries within one window.
        for a, b in zip(delivered, delivered[1:]):
            assert b - a >= window
        assert len(delivered) <= -(-duration // window)  # ceil bound
