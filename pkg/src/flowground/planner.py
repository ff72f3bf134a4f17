"""Closed-loop beam-search planning with verify-and-recover execution.

All model-backed roles (action proposer, rollout generator, rollout
ranker, verifier, recovery selector, horizon selector) are pluggable
interfaces; deterministic table-driven scripted implementations live in
`scripted`. The tree search keeps the best N_c beams per step, scoring
every rollout candidate and defaulting unranked ids to s_min.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

from .errors import EmptyCandidateSet, InterfaceError

S_MIN = 0.0

# verify-and-recover state machine phases
PLANNING = "planning"
EXECUTING = "executing"
VERIFYING = "verifying"
RECOVERING = "recovering"
DONE = "done"
FAILED = "failed"

GREEDY = "greedy"
STRATEGIC = "strategic"


@dataclass(frozen=True)
class Proposal:
    action: str
    track_object: str
    context: str = ""


@dataclass(frozen=True)
class Rollout:
    video_ref: str
    flow_ref: str
    final_frame_ref: str


@dataclass(frozen=True)
class PlanBeam:
    """A search node: observation, action history, metadata, score."""

    observation_ref: str
    history: tuple[str, ...] = ()
    metadata: tuple[dict, ...] = ()
    score: float = 0.0

    def __post_init__(self):
        if len(self.history) != len(self.metadata):
            raise ValueError("history and metadata must have equal length")

    def child(self, observation_ref: str, action: str, meta: dict, score: float) -> "PlanBeam":
        return PlanBeam(observation_ref=observation_ref,
                        history=self.history + (action,),
                        metadata=self.metadata + (meta,),
                        score=score)

    def latest_context(self) -> str:
        return self.metadata[-1].get("context", "") if self.metadata else ""


@dataclass(frozen=True)
class RolloutCandidate:
    id: int
    parent: PlanBeam
    action: str
    track_object: str
    context: str
    video_ref: str
    flow_ref: str
    final_frame_ref: str


@dataclass(frozen=True)
class RolloutScore:
    candidate_id: int
    success: bool
    score: float
    reason: str = ""
    clamped: bool = False


@dataclass(frozen=True)
class RecoveryChoice:
    mode: str  # "grasp" | "non_prehensile"
    contact_finger: str | None = None
    annotated_obs_ref: str | None = None


class ActionProposer(Protocol):
    def propose(self, observation_ref: str, goal: str, num_actions: int,
                history: tuple[str, ...], steps_remaining: int,
                context: str) -> list[Proposal]: ...


class RolloutGenerator(Protocol):
    def generate(self, observation_ref: str, action: str, count: int) -> list[Rollout]: ...


class RolloutRanker(Protocol):
    def rank(self, goal: str, candidates: list[RolloutCandidate],
             top_n: int) -> list[RolloutScore]: ...


class Verifier(Protocol):
    def verify(self, start_ref: str, current_ref: str,
               target_ref: str) -> tuple[bool, str]: ...


class RecoverySelector(Protocol):
    def select(self, current_ref: str, target_ref: str) -> RecoveryChoice: ...


class HorizonSelector(Protocol):
    def select(self, task_descriptor: str) -> str: ...


class Environment(Protocol):
    def execute(self, observation_ref: str, action: str,
                trajectory) -> str: ...


class Grounder(Protocol):
    def ground(self, rollout: Rollout, contact_finger: str | None = None): ...


def validate_rollout_scores(scores: list[RolloutScore]) -> list[RolloutScore]:
    """Clamp scores violating the hierarchical rubric and flag them.

    Failed rollouts may score at most 0.2; successful ones must score in
    [0.3, 1.0]; everything must lie in [0, 1].
    """
    out = []
    for s in scores:
        value = min(max(s.score, 0.0), 1.0)
        clamped = value != s.score
        if not s.success and value > 0.2:
            value, clamped = 0.2, True
        elif s.success and value < 0.3:
            value, clamped = 0.3, True
        out.append(replace(s, score=value, clamped=clamped) if clamped else s)
    return out


def plan_strategic(initial_obs: str, goal: str, horizon: int, n_c: int,
                   actions_per_beam: int, rollouts_per_action: int,
                   proposer: ActionProposer, generator: RolloutGenerator,
                   ranker: RolloutRanker, s_min: float = S_MIN) -> PlanBeam:
    """Beam search over action proposals and video rollouts.

    Each step expands every beam with `actions_per_beam` proposed actions
    and `rollouts_per_action` rollouts per action, batch-ranks all
    candidates (unranked ids default to s_min), and keeps the best n_c
    children (ties: lower candidate id). Returns the best-scoring beam.
    """
    beams = [PlanBeam(observation_ref=initial_obs)]
    for t in range(1, horizon + 1):
        candidates: list[RolloutCandidate] = []
        next_id = 0
        for beam in beams:
            proposals = proposer.propose(beam.observation_ref, goal,
                                         actions_per_beam, beam.history,
                                         horizon - t + 1, beam.latest_context())
            for p in proposals:
                rollouts = generator.generate(beam.observation_ref, p.action,
                                              rollouts_per_action)
                for r in rollouts:
                    candidates.append(RolloutCandidate(
                        id=next_id, parent=beam, action=p.action,
                        track_object=p.track_object, context=p.context,
                        video_ref=r.video_ref, flow_ref=r.flow_ref,
                        final_frame_ref=r.final_frame_ref))
                    next_id += 1

        if not candidates:
            if t == 1:
                raise EmptyCandidateSet("no rollout candidates at step 1")
            break

        scores = validate_rollout_scores(ranker.rank(goal, candidates, top_n=n_c))
        score_map = {c.id: s_min for c in candidates}
        for s in scores:
            if s.candidate_id in score_map:
                score_map[s.candidate_id] = s.score

        children = []
        for c in candidates:
            meta = {"action": c.action, "track_object": c.track_object,
                    "candidate_id": c.id, "context": c.context}
            children.append((c.id, c.parent.child(
                c.final_frame_ref, c.action, meta, score_map[c.id])))
        children.sort(key=lambda item: (-item[1].score, item[0]))
        beams = [b for _, b in children[:n_c]]

    return max(beams, key=lambda b: b.score)


@dataclass
class PlannerInterfaces:
    proposer: ActionProposer
    generator: RolloutGenerator
    ranker: RolloutRanker
    verifier: Verifier
    recovery_selector: RecoverySelector
    environment: Environment
    grounder: Grounder
    horizon_selector: HorizonSelector | None = None


@dataclass(frozen=True)
class Task:
    goal: str
    initial_observation: str
    max_steps: int
    descriptor: str = ""


@dataclass
class LoopState:
    mode: str
    horizon: int
    step: int = 0
    plan: tuple[str, ...] = ()
    phase: str = PLANNING
    recoveries_this_step: int = 0


def select_horizon_mode(task_descriptor: str, selector: HorizonSelector) -> str:
    """Greedy (h = 1, single proposal) vs strategic (tree search first)."""
    mode = selector.select(task_descriptor)
    if mode not in (GREEDY, STRATEGIC):
        raise InterfaceError(f"horizon selector returned {mode!r}")
    return mode


def select_recovery(current_obs: str, target_obs: str,
                    selector: RecoverySelector) -> RecoveryChoice:
    """Delegate recovery-strategy choice; validates the returned mode."""
    choice = selector.select(current_obs, target_obs)
    if choice.mode not in ("grasp", "non_prehensile"):
        raise InterfaceError(f"recovery selector returned mode {choice.mode!r}")
    return choice


def _best_rollout(goal: str, candidates: list[RolloutCandidate],
                  ranker: RolloutRanker, s_min: float) -> tuple[RolloutCandidate, list[RolloutScore]]:
    scores = validate_rollout_scores(ranker.rank(goal, candidates, top_n=1))
    score_map = {c.id: s_min for c in candidates}
    for s in scores:
        if s.candidate_id in score_map:
            score_map[s.candidate_id] = s.score
    best = max(candidates, key=lambda c: (score_map[c.id], -c.id))
    return best, scores


@dataclass
class ExecutionReport:
    """Append-only record of a closed-loop run."""

    header: dict
    phases: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    final_status: str = ""
    failure: dict | None = None

    def enter(self, phase: str):
        self.phases.append(phase)

    def to_dict(self) -> dict:
        return {"header": self.header, "phases": list(self.phases),
                "steps": self.steps, "final_status": self.final_status,
                "failure": self.failure}


def run_loop(task: Task, mode: str, interfaces: PlannerInterfaces,
             max_recoveries_per_step: int = 2,
             n_c: int = 2, actions_per_beam: int = 2,
             rollouts_strategic: int = 4, rollouts_greedy: int = 8,
             s_min: float = S_MIN) -> ExecutionReport:
    """Execute a task closed-loop with per-step re-grounding and recovery.

    Strategic mode runs the tree search up front and executes the chosen
    plan; greedy mode proposes one action per step. Every step re-grounds
    its action into a fresh rollout, executes it, and verifies the real
    transition against the rollout's final frame; failed steps trigger
    recovery up to the per-step budget, after which the run reports
    StepFailed without raising.
    """
    report = ExecutionReport(header={
        "goal": task.goal, "mode": mode, "max_steps": task.max_steps,
        "max_recoveries_per_step": max_recoveries_per_step,
        "n_c": n_c, "rollouts_per_action":
            rollouts_strategic if mode == STRATEGIC else rollouts_greedy})
    report.enter(PLANNING)

    plan: list[str | None]
    if mode == STRATEGIC:
        try:
            best = plan_strategic(task.initial_observation, task.goal,
                                  task.max_steps, n_c, actions_per_beam,
                                  rollouts_strategic, interfaces.proposer,
                                  interfaces.generator, interfaces.ranker, s_min)
        except EmptyCandidateSet as e:
            report.final_status = FAILED
            report.failure = {"step": 1, "error": "EmptyCandidateSet",
                              "reason": str(e)}
            return report
        plan = list(best.history)
        report.header["plan"] = list(best.history)
        report.header["plan_score"] = best.score
        rollouts_per_action = rollouts_strategic
    else:
        plan = [None] * task.max_steps  # proposed on the fly
        rollouts_per_action = rollouts_greedy

    obs = task.initial_observation
    for step_index, planned_action in enumerate(plan, start=1):
        record = {"index": step_index, "recoveries": [], "status": ""}

        # greedy mode: propose the next viable action from the live observation
        if planned_action is None:
            proposals = interfaces.proposer.propose(
                obs, task.goal, 1, tuple(s["action"] for s in report.steps),
                task.max_steps - step_index + 1, "")
            if not proposals:
                break
            action = proposals[0].action
            record["track_object"] = proposals[0].track_object
        else:
            action = planned_action
        record["action"] = action

        # re-ground: fresh rollouts against the current observation
        target, obs, ok, reason, scores = _execute_once(
            task.goal, obs, action, interfaces, rollouts_per_action, s_min, report)
        record["target"] = target
        record["rollout_scores"] = [
            {"candidate_id": s.candidate_id, "success": s.success,
             "score": s.score, "reason": s.reason, "clamped": s.clamped}
            for s in scores]

        attempts = 0
        while not ok and attempts < max_recoveries_per_step:
            attempts += 1
            report.enter(RECOVERING)
            choice = select_recovery(obs, target, interfaces.recovery_selector)
            rec = {"attempt": attempts, "mode": choice.mode}
            if choice.mode == "non_prehensile":
                rec["contact_finger"] = choice.contact_finger
                rec["annotated_obs_ref"] = choice.annotated_obs_ref
            # recovery re-enters the single-step pipeline; the verification
            # target stays the original target of this step
            proposals = interfaces.proposer.propose(
                choice.annotated_obs_ref or obs, task.goal, 1, (), 1,
                f"recover:{target}")
            if not proposals:
                ok, reason = False, "no recovery proposal"
                record["recoveries"].append(rec)
                break
            rec["action"] = proposals[0].action
            _, obs, ok, reason, _ = _execute_once(
                task.goal, choice.annotated_obs_ref or obs, proposals[0].action,
                interfaces, rollouts_per_action, s_min, report,
                fixed_target=target, contact_finger=choice.contact_finger)
            rec["verified"] = ok
            record["recoveries"].append(rec)

        record["verified"] = ok
        if not ok:
            record["status"] = FAILED
            report.steps.append(record)
            report.final_status = FAILED
            report.failure = {"step": step_index, "error": "StepFailed",
                              "reason": reason or "verification failed",
                              "recovery_attempts": attempts}
            report.enter(FAILED)
            return report
        record["status"] = DONE
        report.steps.append(record)

    report.final_status = DONE
    report.enter(DONE)
    return report


def _execute_once(goal: str, obs: str, action: str,
                  interfaces: PlannerInterfaces, rollouts_per_action: int,
                  s_min: float, report: ExecutionReport,
                  fixed_target: str | None = None,
                  contact_finger: str | None = None):
    """Generate, ground, execute and verify one action; returns
    (target, new_obs, verified, reason, scores)."""
    report.enter(EXECUTING)
    rollouts = interfaces.generator.generate(obs, action, rollouts_per_action)
    if not rollouts:
        raise InterfaceError(f"generator produced no rollouts for {action!r}")
    candidates = [RolloutCandidate(id=i, parent=PlanBeam(observation_ref=obs),
                                   action=action, track_object="", context="",
                                   video_ref=r.video_ref, flow_ref=r.flow_ref,
                                   final_frame_ref=r.final_frame_ref)
                  for i, r in enumerate(rollouts)]
    best, scores = _best_rollout(goal, candidates, interfaces.ranker, s_min)
    target = fixed_target if fixed_target is not None else best.final_frame_ref
    trajectory = interfaces.grounder.ground(
        Rollout(best.video_ref, best.flow_ref, best.final_frame_ref),
        contact_finger=contact_finger)
    new_obs = interfaces.environment.execute(obs, action, trajectory)
    report.enter(VERIFYING)
    ok, reason = interfaces.verifier.verify(obs, new_obs, target)
    return target, new_obs, ok, reason, scores
