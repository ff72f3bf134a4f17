"""Line-delimited wire protocol for non-scripted model-role deployments.

Each request is one JSON line {"role": ..., "step": ..., "payload": ...};
the response is one JSON line whose shape depends on the role. Timeouts
and malformed responses surface as InterfaceError.
"""

from __future__ import annotations

import json
import socket

from .errors import InterfaceError
from .planner import (
    PlannerInterfaces,
    Proposal,
    RecoveryChoice,
    Rollout,
    RolloutScore,
)

DEFAULT_TIMEOUT = 30.0


class RemoteClient:
    """One connection multiplexing all role requests, one line per call."""

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        sock.settimeout(timeout)
        self._sock = sock
        self._rfile = sock.makefile("r", encoding="utf-8", newline="\n")
        self._wfile = sock.makefile("w", encoding="utf-8", newline="\n")
        self._step = 0

    @staticmethod
    def connect(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "RemoteClient":
        return RemoteClient(socket.create_connection((host, port), timeout=timeout), timeout)

    def call(self, role: str, payload: dict) -> dict:
        self._step += 1
        request = {"role": role, "step": self._step, "payload": payload}
        try:
            self._wfile.write(json.dumps(request, sort_keys=True) + "\n")
            self._wfile.flush()
            line = self._rfile.readline()
        except (OSError, socket.timeout) as e:
            raise InterfaceError(f"remote {role} call failed: {e}") from e
        if not line:
            raise InterfaceError(f"remote {role} closed the connection")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as e:
            raise InterfaceError(f"malformed {role} response: {line!r}") from e
        if not isinstance(response, dict):
            raise InterfaceError(f"malformed {role} response: {line!r}")
        if "error" in response:
            raise InterfaceError(f"remote {role} error: {response['error']}")
        return response

    def close(self):
        self._sock.close()


class RemoteProposer:
    def __init__(self, client: RemoteClient):
        self.client = client

    def propose(self, observation_ref, goal, num_actions, history,
                steps_remaining, context):
        r = self.client.call("proposer", {
            "observation_ref": observation_ref, "goal": goal,
            "num_actions": num_actions, "history": list(history),
            "steps_remaining": steps_remaining, "context": context})
        try:
            return [Proposal(action=p["action"],
                             track_object=p.get("track_object", ""),
                             context=p.get("context", ""))
                    for p in r["proposals"]]
        except (KeyError, TypeError) as e:
            raise InterfaceError(f"malformed proposer response: {r}") from e


class RemoteGenerator:
    def __init__(self, client: RemoteClient):
        self.client = client

    def generate(self, observation_ref, action, count):
        r = self.client.call("generator", {
            "observation_ref": observation_ref, "action": action, "count": count})
        try:
            return [Rollout(video_ref=e["video_ref"],
                            flow_ref=e.get("flow_ref", e["video_ref"]),
                            final_frame_ref=e["final_frame_ref"])
                    for e in r["rollouts"]]
        except (KeyError, TypeError) as e:
            raise InterfaceError(f"malformed generator response: {r}") from e


class RemoteRanker:
    def __init__(self, client: RemoteClient):
        self.client = client

    def rank(self, goal, candidates, top_n):
        r = self.client.call("ranker", {
            "goal": goal, "top_n": top_n,
            "candidates": [{"candidate_id": c.id, "action": c.action,
                            "video_ref": c.video_ref, "flow_ref": c.flow_ref,
                            "final_frame_ref": c.final_frame_ref}
                           for c in candidates]})
        try:
            return [RolloutScore(candidate_id=int(e["candidate_id"]),
                                 success=bool(e["success"]),
                                 score=float(e["score"]),
                                 reason=e.get("reason", ""))
                    for e in r["rankings"]]
        except (KeyError, TypeError, ValueError) as e:
            raise InterfaceError(f"malformed ranker response: {r}") from e


class RemoteVerifier:
    def __init__(self, client: RemoteClient):
        self.client = client

    def verify(self, start_ref, current_ref, target_ref):
        r = self.client.call("verifier", {
            "start_ref": start_ref, "current_ref": current_ref,
            "target_ref": target_ref})
        try:
            return bool(r["success"]), r.get("reason", "")
        except (KeyError, TypeError) as e:
            raise InterfaceError(f"malformed verifier response: {r}") from e


class RemoteRecoverySelector:
    def __init__(self, client: RemoteClient):
        self.client = client

    def select(self, current_ref, target_ref):
        r = self.client.call("recovery", {
            "current_ref": current_ref, "target_ref": target_ref})
        try:
            return RecoveryChoice(mode=r["mode"],
                                  contact_finger=r.get("contact_finger"),
                                  annotated_obs_ref=r.get("annotated_obs_ref"))
        except (KeyError, TypeError) as e:
            raise InterfaceError(f"malformed recovery response: {r}") from e


class RemoteHorizonSelector:
    def __init__(self, client: RemoteClient):
        self.client = client

    def select(self, task_descriptor):
        r = self.client.call("horizon", {"task_descriptor": task_descriptor})
        try:
            return r["mode"]
        except (KeyError, TypeError) as e:
            raise InterfaceError(f"malformed horizon response: {r}") from e


def remote_model_roles(client: RemoteClient, environment, grounder) -> PlannerInterfaces:
    """Planner interfaces with all model roles served remotely.

    The environment and grounder stay local: they touch the robot and the
    bundle files, not a model service.
    """
    return PlannerInterfaces(
        proposer=RemoteProposer(client),
        generator=RemoteGenerator(client),
        ranker=RemoteRanker(client),
        verifier=RemoteVerifier(client),
        recovery_selector=RemoteRecoverySelector(client),
        environment=environment,
        grounder=grounder,
        horizon_selector=RemoteHorizonSelector(client),
    )


class RoleServer:
    """Serves local role implementations over the wire protocol.

    Useful for tests and for exposing scripted scenarios to out-of-process
    planners.
    """

    def __init__(self, interfaces: PlannerInterfaces):
        self.interfaces = interfaces

    def handle_request(self, request: dict) -> dict:
        role = request.get("role")
        payload = request.get("payload", {})
        try:
            if role == "proposer":
                proposals = self.interfaces.proposer.propose(
                    payload["observation_ref"], payload["goal"],
                    payload["num_actions"], tuple(payload.get("history", [])),
                    payload.get("steps_remaining", 1), payload.get("context", ""))
                return {"proposals": [{"action": p.action,
                                       "track_object": p.track_object,
                                       "context": p.context} for p in proposals]}
            if role == "generator":
                rollouts = self.interfaces.generator.generate(
                    payload["observation_ref"], payload["action"], payload["count"])
                return {"rollouts": [{"video_ref": r.video_ref,
                                      "flow_ref": r.flow_ref,
                                      "final_frame_ref": r.final_frame_ref}
                                     for r in rollouts]}
            if role == "ranker":
                from .planner import PlanBeam, RolloutCandidate
                candidates = [RolloutCandidate(
                    id=int(c["candidate_id"]),
                    parent=PlanBeam(observation_ref=""),
                    action=c.get("action", ""), track_object="", context="",
                    video_ref=c["video_ref"], flow_ref=c.get("flow_ref", ""),
                    final_frame_ref=c.get("final_frame_ref", ""))
                    for c in payload["candidates"]]
                scores = self.interfaces.ranker.rank(
                    payload["goal"], candidates, payload.get("top_n", 1))
                return {"rankings": [{"candidate_id": s.candidate_id,
                                      "success": s.success, "score": s.score,
                                      "reason": s.reason} for s in scores]}
            if role == "verifier":
                ok, reason = self.interfaces.verifier.verify(
                    payload["start_ref"], payload["current_ref"],
                    payload["target_ref"])
                return {"success": ok, "reason": reason}
            if role == "recovery":
                choice = self.interfaces.recovery_selector.select(
                    payload["current_ref"], payload["target_ref"])
                return {"mode": choice.mode,
                        "contact_finger": choice.contact_finger,
                        "annotated_obs_ref": choice.annotated_obs_ref}
            if role == "horizon":
                return {"mode": self.interfaces.horizon_selector.select(
                    payload.get("task_descriptor", ""))}
            return {"error": f"unknown role {role!r}"}
        except Exception as e:  # surfaced to the client as an interface error
            return {"error": f"{type(e).__name__}: {e}"}

    def serve_connection(self, sock: socket.socket):
        rfile = sock.makefile("r", encoding="utf-8", newline="\n")
        wfile = sock.makefile("w", encoding="utf-8", newline="\n")
        for line in rfile:
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line)
            except json.JSONDecodeError:
                response = {"error": "malformed request"}
            else:
                response = self.handle_request(request)
            wfile.write(json.dumps(response, sort_keys=True) + "\n")
            wfile.flush()
