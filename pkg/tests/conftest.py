import pytest

from hazardsim.synth import ActorSpec, NoiseSpec, QualitySpec, ScenarioSpec


def make_person(person_id="p1", node="cam0", enter=0.0, exit=18.0,
                start=(0.15, 0.5), end=(0.85, 0.5), size=(0.08, 0.22),
                confidence=0.8):
    return ActorSpec(
        node_id=node,
        cls="person",
        enter=enter,
        exit=exit,
        path=(start, end),
        size=size,
        base_confidence=confidence,
        person_id=person_id,
    )


def make_scenario(scenario_id="scn", duration=20.0, frame_rate=10.0,
                  nodes=("cam0",), persons=None, distractors=(),
                  noise=NoiseSpec(), quality=QualitySpec()):
    if persons is None:
        persons = (make_person(exit=min(18.0, duration)),)
    return ScenarioSpec(
        scenario_id=scenario_id,
        frame_rate=frame_rate,
        duration=duration,
        nodes=tuple(nodes),
        persons=tuple(persons),
        distractors=tuple(distractors),
        noise=noise,
        quality=quality,
    )


@pytest.fixture
def simple_scenario():
    return make_scenario(duration=5.0, persons=(make_person(exit=5.0, confidence=1.0),))
