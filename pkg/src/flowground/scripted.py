"""Deterministic table-driven implementations of the planner roles.

A Scenario is a declarative table mapping (observation id, role) to
responses, with per-call failure injection counters. Scenarios load from
JSON so a whole closed-loop run can be driven from a file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InterfaceError
from .planner import (
    PlannerInterfaces,
    Proposal,
    RecoveryChoice,
    Rollout,
    RolloutCandidate,
    RolloutScore,
)


@dataclass
class Scenario:
    goal: str
    initial_observation: str
    mode: str = "greedy"
    max_steps: int = 1
    # obs id -> list of proposal dicts
    proposals: dict = field(default_factory=dict)
    # "obs|action" -> list of rollout dicts
    rollouts: dict = field(default_factory=dict)
    # video_ref -> score dict {success, score, reason}
    scores: dict = field(default_factory=dict)
    # "obs|action" -> next observation id
    transitions: dict = field(default_factory=dict)
    # current obs id -> recovery dict {mode, contact_finger, annotated_obs_ref}
    recoveries: dict = field(default_factory=dict)
    # failure injection: "obs|action" -> number of executions that misfire
    env_failures: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        return Scenario(
            goal=d["goal"],
            initial_observation=d["initial_observation"],
            mode=d.get("mode", "greedy"),
            max_steps=int(d.get("max_steps", 1)),
            proposals=d.get("proposals", {}),
            rollouts=d.get("rollouts", {}),
            scores=d.get("scores", {}),
            transitions=d.get("transitions", {}),
            recoveries=d.get("recoveries", {}),
            env_failures=dict(d.get("env_failures", {})),
        )

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as f:
            return Scenario.from_dict(json.load(f))

    def dump(self, path) -> None:
        d = {"goal": self.goal, "initial_observation": self.initial_observation,
             "mode": self.mode, "max_steps": self.max_steps,
             "proposals": self.proposals, "rollouts": self.rollouts,
             "scores": self.scores, "transitions": self.transitions,
             "recoveries": self.recoveries, "env_failures": self.env_failures}
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


class ScriptedProposer:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def propose(self, observation_ref, goal, num_actions, history,
                steps_remaining, context):
        entries = self.scenario.proposals.get(observation_ref, [])
        return [Proposal(action=e["action"],
                         track_object=e.get("track_object", ""),
                         context=e.get("context", ""))
                for e in entries[:num_actions]]


class ScriptedGenerator:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def generate(self, observation_ref, action, count):
        entries = self.scenario.rollouts.get(f"{observation_ref}|{action}", [])
        rollouts = [Rollout(video_ref=e["video_ref"],
                            flow_ref=e.get("flow_ref", e["video_ref"]),
                            final_frame_ref=e["final_frame_ref"])
                    for e in entries]
        return rollouts[:count]


class ScriptedRanker:
    """Scores rollouts by video_ref; unknown refs are omitted from the reply."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def rank(self, goal, candidates: list[RolloutCandidate], top_n):
        out = []
        for c in candidates:
            entry = self.scenario.scores.get(c.video_ref)
            if entry is None:
                continue
            out.append(RolloutScore(candidate_id=c.id,
                                    success=bool(entry["success"]),
                                    score=float(entry["score"]),
                                    reason=entry.get("reason", "")))
        return out


class EqualityVerifier:
    """Success iff the observed state matches the rollout's target frame."""

    def verify(self, start_ref, current_ref, target_ref):
        if current_ref == target_ref:
            return True, "state matches target"
        return False, f"observed {current_ref!r}, expected {target_ref!r}"


class ScriptedRecoverySelector:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def select(self, current_ref, target_ref):
        entry = self.scenario.recoveries.get(current_ref,
                                             self.scenario.recoveries.get("*", {}))
        return RecoveryChoice(mode=entry.get("mode", "grasp"),
                              contact_finger=entry.get("contact_finger"),
                              annotated_obs_ref=entry.get("annotated_obs_ref"))


class ScriptedEnvironment:
    """Transitions table with per-key misfire counters.

    While a key's counter is positive, execution lands in a perturbed
    observation ("<next>#fail") instead of the scripted next state.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._remaining = {k: int(v) for k, v in scenario.env_failures.items()}

    def execute(self, observation_ref, action, trajectory):
        key = f"{observation_ref}|{action}"
        if key not in self.scenario.transitions:
            raise InterfaceError(f"no scripted transition for {key!r}")
        nxt = self.scenario.transitions[key]
        if self._remaining.get(key, 0) > 0:
            self._remaining[key] -= 1
            return f"{nxt}#fail"
        return nxt


class PassthroughGrounder:
    """Stands in for flow extraction in scripted runs."""

    def ground(self, rollout, contact_finger=None):
        tag = f"traj:{rollout.video_ref}"
        if contact_finger:
            tag += f":{contact_finger}"
        return tag


class FixedHorizonSelector:
    def __init__(self, mode: str):
        self.mode = mode

    def select(self, task_descriptor):
        return self.mode


def scenario_interfaces(scenario: Scenario) -> PlannerInterfaces:
    """Wire every role to its scripted implementation for a scenario."""
    return PlannerInterfaces(
        proposer=ScriptedProposer(scenario),
        generator=ScriptedGenerator(scenario),
        ranker=ScriptedRanker(scenario),
        verifier=EqualityVerifier(),
        recovery_selector=ScriptedRecoverySelector(scenario),
        environment=ScriptedEnvironment(scenario),
        grounder=PassthroughGrounder(),
        horizon_selector=FixedHorizonSelector(scenario.mode),
    )
