"""Control plane: job decomposition, task lifecycle with atomic
ownership, worker registry, checkpoint-driven reassignment, and result
aggregation.

The coordinator is a transport-agnostic state machine. All mutations
happen inside :meth:`Coordinator.handle_message`, :meth:`on_timer`, and
:meth:`submit_job`, which the caller must invoke from a single logical
event loop in total event order; ownership checks and the strategy
decision therefore execute atomically with the state transition. The
deterministic simulator and the loopback TCP server both drive this
same class, which is what makes their decision traces comparable.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import random
from dataclasses import dataclass, field

from . import checkpoint as cp
from .errors import InvalidJob, JobNotFinished, ProtocolError
from .fleet import DeviceProfile, TelemetrySnapshot
from .journal import JobJournal
from .scheduler import DispatchMode, FifoStrategy, StrategyKind, dispatch_mode, default_registry
from .transport import Message, MessageType
from .workloads import get_workload

__all__ = [
    "WorkloadSpec",
    "JobSpec",
    "TaskPhase",
    "TaskRecord",
    "WorkerStatus",
    "WorkerEntry",
    "JobResult",
    "CoordinatorSettings",
    "Outbound",
    "CommitOutcome",
    "Coordinator",
    "decompose",
    "slice_seed_for",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class JobSpec:
    job_id: str
    workload: WorkloadSpec
    total_work: int
    task_count: int
    strategy: str
    checkpoint: cp.CheckpointPolicy
    seed: int
    max_attempts: int = 5

    def __post_init__(self) -> None:
        if self.task_count < 1:
            raise InvalidJob("task_count must be >= 1")
        if self.task_count > self.total_work:
            raise InvalidJob("task_count cannot exceed total_work")
        if self.max_attempts < 1:
            raise InvalidJob("max_attempts must be >= 1")


class TaskPhase(enum.Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    RUNNING = "running"
    ORPHANED = "orphaned"
    COMPLETED = "completed"
    FAILED = "failed"


_OWNED_PHASES = (TaskPhase.ASSIGNED, TaskPhase.RUNNING)


@dataclass
class TaskRecord:
    task_id: str
    job_id: str
    slice_index: int
    start: int
    stop: int
    slice_seed: int
    phase: TaskPhase = TaskPhase.PENDING
    owner: str | None = None
    attempts: int = 0
    chain: cp.CheckpointChain = None  # type: ignore[assignment]
    result: bytes | None = None
    static_worker: str | None = None
    assigned_at_s: float = 0.0
    running_since_s: float | None = None
    orphaned_at_s: float = 0.0
    completed_at_s: float | None = None
    accepted_commits: int = 0
    rejected_commits: int = 0

    @property
    def size(self) -> int:
        return self.stop - self.start


class WorkerStatus(enum.Enum):
    CONNECTED = "connected"
    DISCONNECTED = "disconnected"


@dataclass
class WorkerEntry:
    worker_id: str
    profile: DeviceProfile
    status: WorkerStatus
    last_heartbeat_s: float
    telemetry: TelemetrySnapshot
    current_task: str | None = None
    completed_count: int = 0
    busy_s: float = 0.0

    @property
    def idle(self) -> bool:
        return self.status is WorkerStatus.CONNECTED and self.current_task is None


@dataclass(frozen=True)
class JobResult:
    job_id: str
    aggregate: bytes
    makespan_s: float
    per_worker_completed: dict[str, int]
    per_worker_busy_s: dict[str, float]
    accepted_commits: int
    rejected_commits: int


@dataclass(frozen=True)
class CoordinatorSettings:
    heartbeat_interval_s: float = 2.0
    heartbeat_timeout_s: float = 6.0     # 3 missed heartbeats
    assign_ack_timeout_s: float = 6.0
    job_submit_overhead_s: float = 0.4
    dispatch_overhead_s: float = 0.05


@dataclass(frozen=True)
class Outbound:
    """A message the coordinator wants delivered, not before send_at_s."""

    worker_id: str
    message: Message
    send_at_s: float


class CommitOutcome(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_STALE = "rejected_stale"


def slice_seed_for(job_seed: int, slice_index: int) -> int:
    """Stable per-slice seed; independent of executing worker."""
    digest = hashlib.blake2b(
        f"{job_seed}:{slice_index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") >> 1


def decompose(job: JobSpec) -> list[TaskRecord]:
    """Split total_work into task_count contiguous slices, sizes within 1."""
    base, remainder = divmod(job.total_work, job.task_count)
    tasks = []
    start = 0
    for index in range(job.task_count):
        size = base + (1 if index < remainder else 0)
        task_id = f"{job.job_id}-t{index:04d}"
        tasks.append(
            TaskRecord(
                task_id=task_id,
                job_id=job.job_id,
                slice_index=index,
                start=start,
                stop=start + size,
                slice_seed=slice_seed_for(job.seed, index),
                chain=cp.CheckpointChain(task_id=task_id, policy=job.checkpoint),
            )
        )
        start += size
    return tasks


class Coordinator:
    """Single-job control plane; see module docstring for the threading
    contract."""

    def __init__(
        self,
        settings: CoordinatorSettings = CoordinatorSettings(),
        journal: JobJournal | None = None,
    ):
        self.settings = settings
        self.journal = journal
        self.workers: dict[str, WorkerEntry] = {}
        self._registration_order: list[str] = []
        self.job: JobSpec | None = None
        self.tasks: dict[str, TaskRecord] = {}
        self._task_order: list[str] = []
        self._orphan_queue: list[str] = []
        self._strategy = None
        self._mode: DispatchMode | None = None
        self._workload = None
        self._submit_time_s = 0.0
        self._dispatch_ready_s = 0.0
        self._busy_until_s = 0.0
        self._seq = 0
        self._rng = random.Random(0)
        self._trace: list[tuple] = []
        self.job_failed = False

    # -- helpers ------------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _msg(self, mtype: MessageType, body: dict) -> Message:
        return Message(type=mtype, sender="coordinator", seq=self._next_seq(), body=body)

    def _journal(self, kind: str, **fields) -> None:
        if self.journal is not None:
            self.journal.record(kind, **fields)

    def decision_trace(self) -> tuple[tuple, ...]:
        """Timing-independent canonical trace: every assignment and every
        accepted commit, sorted by task then attempt."""
        return tuple(sorted(self._trace))

    def all_completed(self) -> bool:
        return bool(self.tasks) and all(
            t.phase is TaskPhase.COMPLETED for t in self.tasks.values()
        )

    # -- job lifecycle ------------------------------------------------------

    def submit_job(self, job: JobSpec, now: float, registry=None) -> list[Outbound]:
        if self.job is not None:
            raise InvalidJob("coordinator already has an active job")
        registry = registry or default_registry()
        self.job = job
        self._workload = get_workload(job.workload.name, job.workload.params)
        kind = StrategyKind(job.strategy)
        self._mode = dispatch_mode(kind)
        self._strategy = registry.create(job.strategy)
        self._rng = random.Random(job.seed)
        self._submit_time_s = now
        self._dispatch_ready_s = now + self.settings.job_submit_overhead_s
        self._busy_until_s = self._dispatch_ready_s

        for task in decompose(job):
            self.tasks[task.task_id] = task
            self._task_order.append(task.task_id)
        if self._mode is DispatchMode.STATIC:
            connected = [w for w in self._registration_order
                         if self.workers[w].status is WorkerStatus.CONNECTED]
            if not connected:
                raise InvalidJob("static dispatch requires registered workers at submission")
            for position, task_id in enumerate(self._task_order):
                self.tasks[task_id].static_worker = connected[position % len(connected)]
        self._journal(
            "submit", job_id=job.job_id, strategy=job.strategy,
            total_work=job.total_work, task_count=job.task_count, seed=job.seed,
        )
        return self._pump(now)

    def aggregate(self) -> JobResult:
        if self.job is None or not self.all_completed():
            raise JobNotFinished("job has incomplete tasks")
        results = [
            self.tasks[tid].result for tid in self._task_order  # slice order
        ]
        folded = self._workload.fold(results)
        last_done = max(t.completed_at_s for t in self.tasks.values())
        return JobResult(
            job_id=self.job.job_id,
            aggregate=folded,
            makespan_s=last_done - self._submit_time_s,
            per_worker_completed={w: e.completed_count for w, e in self.workers.items()},
            per_worker_busy_s={w: e.busy_s for w, e in self.workers.items()},
            accepted_commits=sum(t.accepted_commits for t in self.tasks.values()),
            rejected_commits=sum(t.rejected_commits for t in self.tasks.values()),
        )

    # -- message handling ---------------------------------------------------

    def handle_message(self, msg: Message, now: float) -> list[Outbound]:
        handler = {
            MessageType.REGISTER: self._on_register,
            MessageType.HEARTBEAT: self._on_heartbeat,
            MessageType.TELEMETRY: self._on_telemetry,
            MessageType.ACK: self._on_worker_ack,
            MessageType.CHECKPOINT_UPLOAD: self._on_checkpoint_upload,
            MessageType.COMMIT_RESULT: self._on_commit_result,
            MessageType.DISCONNECT_NOTICE: self._on_disconnect_notice,
        }.get(msg.type)
        if handler is None:
            raise ProtocolError(f"coordinator cannot handle {msg.type.value}")
        return handler(msg, now)

    def on_timer(self, now: float) -> list[Outbound]:
        """Periodic sweep: heartbeat timeouts and unacknowledged assigns."""
        for entry in self.workers.values():
            if (
                entry.status is WorkerStatus.CONNECTED
                and now - entry.last_heartbeat_s > self.settings.heartbeat_timeout_s
            ):
                log.info("worker %s timed out at %.3f", entry.worker_id, now)
                self._disconnect_worker(entry.worker_id, now)
        for task in self.tasks.values():
            if (
                task.phase is TaskPhase.ASSIGNED
                and now - task.assigned_at_s > self.settings.assign_ack_timeout_s
            ):
                log.info("assignment of %s to %s unacknowledged", task.task_id, task.owner)
                self._orphan_task(task, now)
        return self._pump(now)

    def _touch(self, worker_id: str, now: float) -> WorkerEntry:
        entry = self.workers.get(worker_id)
        if entry is None:
            raise ProtocolError(f"message from unregistered worker {worker_id!r}")
        entry.last_heartbeat_s = now
        return entry

    def _on_register(self, msg: Message, now: float) -> list[Outbound]:
        body = msg.body
        try:
            profile = DeviceProfile(**body["profile"])
            telemetry = TelemetrySnapshot(worker_id=msg.sender, **body["telemetry"])
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed register from {msg.sender}: {exc}") from exc
        entry = self.workers.get(msg.sender)
        if entry is None:
            entry = WorkerEntry(
                worker_id=msg.sender,
                profile=profile,
                status=WorkerStatus.CONNECTED,
                last_heartbeat_s=now,
                telemetry=telemetry,
            )
            self.workers[msg.sender] = entry
            self._registration_order.append(msg.sender)
        else:
            # Re-registration: the worker comes back stateless, so anything
            # it still owned is lost and must be resumed elsewhere.
            if entry.current_task is not None:
                self._orphan_task(self.tasks[entry.current_task], now)
            entry.status = WorkerStatus.CONNECTED
            entry.profile = profile
            entry.telemetry = telemetry
            entry.last_heartbeat_s = now
        if isinstance(self._strategy, FifoStrategy):
            self._strategy.note_registration(msg.sender)
        self._journal("register", worker_id=msg.sender, at_s=now)
        out = [Outbound(msg.sender, self._msg(MessageType.ACK, {"of": "register"}), now)]
        return out + self._pump(now)

    def _on_heartbeat(self, msg: Message, now: float) -> list[Outbound]:
        entry = self._touch(msg.sender, now)
        if "telemetry" in msg.body:
            entry.telemetry = TelemetrySnapshot(worker_id=msg.sender, **msg.body["telemetry"])
        return []

    def _on_telemetry(self, msg: Message, now: float) -> list[Outbound]:
        entry = self._touch(msg.sender, now)
        entry.telemetry = TelemetrySnapshot(worker_id=msg.sender, **msg.body["telemetry"])
        return []

    def _on_worker_ack(self, msg: Message, now: float) -> list[Outbound]:
        self._touch(msg.sender, now)
        if msg.body.get("of") != "assign_task":
            return []
        task = self.tasks.get(msg.body.get("task_id"))
        if task is not None and task.owner == msg.sender and task.phase is TaskPhase.ASSIGNED:
            task.phase = TaskPhase.RUNNING
            task.running_since_s = now
        return []

    def _on_checkpoint_upload(self, msg: Message, now: float) -> list[Outbound]:
        self._touch(msg.sender, now)
        task_id = msg.body.get("task_id")
        task = self.tasks.get(task_id)
        if task is None:
            raise ProtocolError(f"checkpoint for unknown task {task_id!r}")
        state = cp.TaskState(vars=msg.body["vars"], cursor=msg.body["cursor"])
        outcome = self.record_checkpoint(task_id, msg.sender, state, now)
        if outcome is CommitOutcome.ACCEPTED:
            reply = self._msg(MessageType.ACK, {"of": "checkpoint_upload", "task_id": task_id})
        else:
            reply = self._msg(
                MessageType.REJECT,
                {"of": "checkpoint_upload", "task_id": task_id, "reason": "not_owner"},
            )
        return [Outbound(msg.sender, reply, now)]

    def _on_commit_result(self, msg: Message, now: float) -> list[Outbound]:
        self._touch(msg.sender, now)
        task_id = msg.body.get("task_id")
        outcome = self.commit_result(task_id, msg.sender, msg.body["result"], now)
        if outcome is CommitOutcome.ACCEPTED:
            reply = self._msg(MessageType.ACK, {"of": "commit_result", "task_id": task_id})
        else:
            reply = self._msg(
                MessageType.REJECT,
                {"of": "commit_result", "task_id": task_id, "reason": "stale"},
            )
        return [Outbound(msg.sender, reply, now)] + self._pump(now)

    def _on_disconnect_notice(self, msg: Message, now: float) -> list[Outbound]:
        if msg.sender in self.workers:
            self._disconnect_worker(msg.sender, now)
        return self._pump(now)

    # -- ownership-gated operations ------------------------------------------

    def commit_result(
        self, task_id: str, worker_id: str, payload: bytes, now: float
    ) -> CommitOutcome:
        """Exactly-once commit gate: accepted only from the current owner
        of a task still in flight; everything else is a stale duplicate."""
        task = self.tasks.get(task_id)
        if task is None:
            raise ProtocolError(f"commit for unknown task {task_id!r}")
        if task.phase not in _OWNED_PHASES or task.owner != worker_id:
            task.rejected_commits += 1
            return CommitOutcome.REJECTED_STALE
        task.phase = TaskPhase.COMPLETED
        task.result = payload
        task.completed_at_s = now
        task.accepted_commits += 1
        task.owner = None
        entry = self.workers[worker_id]
        entry.completed_count += 1
        started = task.running_since_s if task.running_since_s is not None else task.assigned_at_s
        entry.busy_s += max(0.0, now - started)
        entry.current_task = None
        self._trace.append(("commit", task_id, task.attempts, worker_id))
        self._journal("commit", task_id=task_id, worker_id=worker_id, at_s=now, result=payload)
        return CommitOutcome.ACCEPTED

    def record_checkpoint(
        self, task_id: str, worker_id: str, full_state: cp.TaskState, now: float
    ) -> CommitOutcome:
        """Ownership-gated checkpoint append; stale owners change nothing."""
        task = self.tasks.get(task_id)
        if task is None:
            raise ProtocolError(f"checkpoint for unknown task {task_id!r}")
        if task.phase not in _OWNED_PHASES or task.owner != worker_id:
            return CommitOutcome.REJECTED_STALE
        before = task.chain.records
        task.chain = cp.append(task.chain, full_state, at_s=now)
        if self.journal is not None and task.chain.records != before:
            newest = task.chain.records[-1]
            self.journal.checkpoint_record(newest)
        return CommitOutcome.ACCEPTED

    # -- worker lifecycle ----------------------------------------------------

    def _disconnect_worker(self, worker_id: str, now: float) -> None:
        entry = self.workers[worker_id]
        entry.status = WorkerStatus.DISCONNECTED
        self._journal("disconnect", worker_id=worker_id, at_s=now)
        for task in self.tasks.values():
            if task.owner == worker_id and task.phase in _OWNED_PHASES:
                self._orphan_task(task, now)

    def _orphan_task(self, task: TaskRecord, now: float) -> None:
        owner = task.owner
        if owner is not None:
            entry = self.workers.get(owner)
            if entry is not None:
                if task.running_since_s is not None:
                    entry.busy_s += max(0.0, now - task.running_since_s)
                if entry.current_task == task.task_id:
                    entry.current_task = None
        task.phase = TaskPhase.ORPHANED
        task.owner = None
        task.running_since_s = None
        task.orphaned_at_s = now
        if task.task_id not in self._orphan_queue:
            self._orphan_queue.append(task.task_id)
        self._journal("orphan", task_id=task.task_id, at_s=now, former_owner=owner)

    # -- dispatch -------------------------------------------------------------

    def _idle_workers(self) -> list[WorkerEntry]:
        return [
            self.workers[wid]
            for wid in self._registration_order
            if self.workers[wid].idle
        ]

    def _assign(self, task: TaskRecord, worker: WorkerEntry, now: float) -> Outbound | None:
        if task.attempts >= self.job.max_attempts:
            task.phase = TaskPhase.FAILED
            self.job_failed = True
            log.error("task %s exceeded max attempts", task.task_id)
            self._journal("failed", task_id=task.task_id, at_s=now)
            return None
        task.attempts += 1
        task.phase = TaskPhase.ASSIGNED
        task.owner = worker.worker_id
        worker.current_task = task.task_id
        if task.chain.records:
            recovered = cp.recover(task.chain)
            start_cursor, vars_snapshot = recovered.cursor, recovered.vars
        else:
            start_cursor, vars_snapshot = 0, {}
        send_at = max(now, self._busy_until_s) + self.settings.dispatch_overhead_s
        self._busy_until_s = send_at
        task.assigned_at_s = send_at
        message = self._msg(
            MessageType.ASSIGN_TASK,
            {
                "task_id": task.task_id,
                "job_id": task.job_id,
                "slice_index": task.slice_index,
                "start": task.start,
                "stop": task.stop,
                "slice_seed": task.slice_seed,
                "workload": self.job.workload.name,
                "params": self.job.workload.params,
                "start_cursor": start_cursor,
                "vars": vars_snapshot,
                "attempt": task.attempts,
            },
        )
        self._trace.append(("assign", task.task_id, task.attempts, worker.worker_id))
        self._journal(
            "assign", task_id=task.task_id, worker_id=worker.worker_id,
            attempt=task.attempts, start_cursor=start_cursor, at_s=send_at,
        )
        return Outbound(worker.worker_id, message, send_at)

    def _next_static_task(self, worker_id: str) -> TaskRecord | None:
        for task_id in self._task_order:
            task = self.tasks[task_id]
            if task.phase is TaskPhase.PENDING and task.static_worker == worker_id:
                return task
        return None

    def _next_dynamic_task(self) -> TaskRecord | None:
        while self._orphan_queue:
            task = self.tasks[self._orphan_queue[0]]
            if task.phase is TaskPhase.ORPHANED:
                return task
            self._orphan_queue.pop(0)
        for task_id in self._task_order:
            task = self.tasks[task_id]
            if task.phase is TaskPhase.PENDING:
                return task
        return None

    def _pump(self, now: float) -> list[Outbound]:
        """Hand tasks to idle workers until one side runs dry.

        Send times are paced by the coordinator's busy window (submit
        overhead plus per-assignment dispatch overhead), so decisions can
        be made eagerly while the messages leave on the modeled schedule.
        """
        if self.job is None or self.job_failed:
            return []
        out: list[Outbound] = []
        if self._mode is DispatchMode.STATIC:
            # Orphans first (any idle worker, registration order), then each
            # worker drains its own pre-assigned queue in submission order.
            progress = True
            while progress:
                progress = False
                for entry in self._idle_workers():
                    task = None
                    while self._orphan_queue:
                        head = self.tasks[self._orphan_queue[0]]
                        if head.phase is TaskPhase.ORPHANED:
                            task = head
                            self._orphan_queue.pop(0)
                            break
                        self._orphan_queue.pop(0)
                    if task is None:
                        task = self._next_static_task(entry.worker_id)
                    if task is None:
                        continue
                    assigned = self._assign(task, entry, now)
                    if assigned is not None:
                        out.append(assigned)
                        progress = True
        else:
            while True:
                idle = self._idle_workers()
                if not idle:
                    break
                task = self._next_dynamic_task()
                if task is None:
                    break
                if task.phase is TaskPhase.ORPHANED:
                    self._orphan_queue.pop(0)
                candidates = [(e.profile, e.telemetry) for e in idle]
                chosen = self._strategy.select(candidates, self._rng)
                assigned = self._assign(task, self.workers[chosen], now)
                if assigned is not None:
                    out.append(assigned)
        return out
