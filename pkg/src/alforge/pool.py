"""Persistent data model for the unlabeled pool, labeled pairs, and lifecycle.

A PoolStore is the single writer for all instance mutations. State lives in
memory; a canonical JSON snapshot plus append-only JSONL logs (audit,
failures) make every run inspectable and resumable.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import PoolError, StateError
from .util import canonical_json, canonical_json_bytes

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

UNLABELED = "unlabeled"
SELECTED = "selected"
DISTILLED = "distilled"
PENDING_VERIFICATION = "pending_verification"
LABELED = "labeled"
REJECTED = "rejected"

STATES = (UNLABELED, SELECTED, DISTILLED, PENDING_VERIFICATION, LABELED, REJECTED)

# Forward lifecycle plus the single re-eligibility edge.
ALLOWED_TRANSITIONS = frozenset(
    {
        (UNLABELED, SELECTED),
        (SELECTED, DISTILLED),
        (DISTILLED, PENDING_VERIFICATION),
        (PENDING_VERIFICATION, LABELED),
        (PENDING_VERIFICATION, REJECTED),
        (REJECTED, UNLABELED),
    }
)

PROVENANCES = ("bootstrap", "random", "topn", "cluster")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def read_pool_records(path: str | Path) -> list[tuple[int, dict]]:
    """Parse a pool JSONL file into (lineno, record) pairs, validating shape."""
    path = Path(path)
    if not path.exists():
        raise PoolError(f"pool file not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PoolError(f"malformed line {lineno}: {exc}") from exc
            if not isinstance(obj, dict) or "text" not in obj:
                raise PoolError(f"malformed line {lineno}: missing 'text' field")
            records.append((lineno, obj))
    return records


@dataclass
class Instance:
    """One pool item. subgroup is evaluation-only ground truth, never used
    by selection."""

    id: str
    source_text: str
    subgroup: str | None = None
    embedding: list[float] | None = None
    cluster_id: int | None = None
    state: str = UNLABELED

    def validate(self) -> None:
        if not self.id:
            raise PoolError("instance id must be non-empty")
        if not self.source_text:
            raise PoolError(f"instance {self.id}: source_text must be non-empty")
        if self.state not in STATES:
            raise PoolError(f"instance {self.id}: unknown state {self.state!r}")
        if self.embedding is not None:
            norm = math.sqrt(sum(x * x for x in self.embedding))
            if abs(norm - 1.0) > 1e-6:
                raise PoolError(
                    f"instance {self.id}: embedding norm {norm} is not unit"
                )
        if self.cluster_id is not None:
            if self.embedding is None:
                raise PoolError(
                    f"instance {self.id}: cluster_id set without an embedding"
                )
            if self.cluster_id < 0:
                raise PoolError(f"instance {self.id}: negative cluster_id")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_text": self.source_text,
            "subgroup": self.subgroup,
            "embedding": self.embedding,
            "cluster_id": self.cluster_id,
            "state": self.state,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Instance":
        inst = cls(
            id=d["id"],
            source_text=d["source_text"],
            subgroup=d.get("subgroup"),
            embedding=list(d["embedding"]) if d.get("embedding") is not None else None,
            cluster_id=d.get("cluster_id"),
            state=d.get("state", UNLABELED),
        )
        inst.validate()
        return inst


@dataclass(frozen=True)
class LabeledPair:
    instance_id: str
    input_text: str
    target_text: str
    provenance: str
    iteration: int
    decision: str = "approved"
    editor_note: str | None = None

    def validate(self) -> None:
        if not self.target_text:
            raise PoolError(f"pair for {self.instance_id}: empty target_text")
        if self.provenance not in PROVENANCES:
            raise PoolError(
                f"pair for {self.instance_id}: unknown provenance {self.provenance!r}"
            )
        if self.iteration < 0:
            raise PoolError(f"pair for {self.instance_id}: negative iteration")
        if self.decision not in ("approved", "edited"):
            raise PoolError(
                f"pair for {self.instance_id}: unknown decision {self.decision!r}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabeledPair":
        pair = cls(
            instance_id=d["instance_id"],
            input_text=d["input_text"],
            target_text=d["target_text"],
            provenance=d["provenance"],
            iteration=d["iteration"],
            decision=d.get("decision", "approved"),
            editor_note=d.get("editor_note"),
        )
        pair.validate()
        return pair


@dataclass
class LoopState:
    """Control state of the acquisition loop."""

    budget_remaining: int = 0
    batch_size: int = 0
    clusters: int = 10
    iteration: int = 0
    strategy: str = "cluster"
    learner_revision: str = "base"
    rng_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "LoopState":
        return cls(**dict(d))


@dataclass(frozen=True)
class AuditRecord:
    instance_id: str
    from_state: str
    to_state: str
    iteration: int
    at: str

    def to_dict(self) -> dict:
        return asdict(self)


class PoolStore:
    """Owner of all instances, labeled pairs, and the loop state.

    Single-writer: mutations go through this object; snapshots are plain
    values safe to hand across threads.
    """

    def __init__(self, workdir: str | Path | None = None):
        self.instances: dict[str, Instance] = {}
        self.pairs: list[LabeledPair] = []
        self.loop_state = LoopState()
        self.audit: list[AuditRecord] = []
        self.failures: list[dict] = []
        self._live_candidates: dict[str, object] = {}
        self.workdir = Path(workdir) if workdir is not None else None
        if self.workdir is not None:
            self.workdir.mkdir(parents=True, exist_ok=True)
            self._reload_logs()

    def _reload_logs(self) -> None:
        """Rehydrate the append-only audit/failure logs from a prior session."""
        audit_path = self.workdir / "audit.jsonl"
        if audit_path.exists():
            with audit_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        d = json.loads(line)
                        self.audit.append(AuditRecord(**d))
        failures_path = self.workdir / "failures.jsonl"
        if failures_path.exists():
            with failures_path.open("r", encoding="utf-8") as fh:
                self.failures.extend(
                    json.loads(line) for line in fh if line.strip()
                )

    # ------------------------------------------------------------------ ingest

    def ingest(self, path: str | Path, format: str = "jsonl") -> int:
        """Load pool records from a JSONL file; all-or-nothing on errors."""
        if format != "jsonl":
            raise PoolError(f"unsupported ingest format {format!r}")
        return self.ingest_records(read_pool_records(path))

    def ingest_records(self, records: Sequence[tuple[int, Mapping]]) -> int:
        """Add (lineno, record) pairs; generated ids are zero-padded global indexes."""
        staged: dict[str, Instance] = {}
        offset = len(self.instances)
        for i, (lineno, obj) in enumerate(records):
            text = obj.get("text", "")
            if not isinstance(text, str) or not text:
                raise PoolError(f"malformed line {lineno}: empty 'text'")
            iid = obj.get("id")
            if iid is None:
                iid = f"{offset + i:06d}"
            iid = str(iid)
            if iid in self.instances or iid in staged:
                raise PoolError(f"duplicate id {iid} at line {lineno}")
            inst = Instance(id=iid, source_text=text, subgroup=obj.get("subgroup"))
            inst.validate()
            staged[iid] = inst
        self.instances.update(staged)
        return len(staged)

    def add_instance(self, inst: Instance) -> None:
        inst.validate()
        if inst.id in self.instances:
            raise PoolError(f"duplicate id {inst.id}")
        self.instances[inst.id] = inst

    # --------------------------------------------------------------- lifecycle

    def get(self, instance_id: str) -> Instance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise PoolError(f"unknown instance {instance_id}") from None

    def transition(self, instance_id: str, to: str, iteration: int | None = None) -> Instance:
        """Move an instance along the lifecycle; illegal moves raise."""
        inst = self.get(instance_id)
        if (inst.state, to) not in ALLOWED_TRANSITIONS:
            raise PoolError(
                f"illegal transition for {instance_id}: {inst.state} -> {to}"
            )
        return self._force_state(inst, to, iteration)

    def release_to_pool(self, instance_id: str, reason: str, iteration: int | None = None) -> Instance:
        """Failure path: return a selected/distilled instance to the pool.

        Distinct from transition() so the strict lifecycle rules stay intact
        for normal flows; the release is audited with its reason.
        """
        inst = self.get(instance_id)
        if inst.state not in (SELECTED, DISTILLED, PENDING_VERIFICATION):
            raise PoolError(
                f"cannot release {instance_id} from state {inst.state}"
            )
        self.record_failure("release", instance_id, reason)
        self._live_candidates.pop(instance_id, None)
        return self._force_state(inst, UNLABELED, iteration)

    def _force_state(self, inst: Instance, to: str, iteration: int | None) -> Instance:
        it = self.loop_state.iteration if iteration is None else iteration
        record = AuditRecord(
            instance_id=inst.id,
            from_state=inst.state,
            to_state=to,
            iteration=it,
            at=_now(),
        )
        inst.state = to
        self.audit.append(record)
        self._append_log("audit.jsonl", record.to_dict())
        return inst

    def record_failure(self, kind: str, instance_id: str, error: str) -> None:
        entry = {"kind": kind, "instance_id": instance_id, "error": error, "at": _now()}
        self.failures.append(entry)
        self._append_log("failures.jsonl", entry)

    def _append_log(self, name: str, obj: Mapping) -> None:
        if self.workdir is None:
            return
        with (self.workdir / name).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")

    # ------------------------------------------------------------------ views

    def instances_in(self, state: str) -> list[Instance]:
        return sorted(
            (i for i in self.instances.values() if i.state == state),
            key=lambda i: i.id,
        )

    def unlabeled_ids(self) -> list[str]:
        return [i.id for i in self.instances_in(UNLABELED)]

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in STATES}
        for inst in self.instances.values():
            out[inst.state] += 1
        return out

    @property
    def total_ingested(self) -> int:
        return len(self.instances)

    def check_conservation(self) -> bool:
        """Every ingested instance is in exactly one lifecycle state."""
        return sum(self.counts().values()) == self.total_ingested

    # ------------------------------------------------------------- embeddings

    def set_embedding(self, instance_id: str, vector: Sequence[float]) -> None:
        inst = self.get(instance_id)
        inst.embedding = [float(x) for x in vector]
        inst.validate()

    def set_cluster(self, instance_id: str, cluster_id: int) -> None:
        inst = self.get(instance_id)
        inst.cluster_id = int(cluster_id)
        inst.validate()

    # ------------------------------------------------------------- candidates

    def set_candidate(self, candidate) -> None:
        """Register the live distillation candidate for an instance (one max)."""
        iid = candidate.instance_id
        if iid in self._live_candidates:
            raise StateError(f"instance {iid} already has a live candidate")
        self.get(iid)
        self._live_candidates[iid] = candidate

    def get_candidate(self, instance_id: str):
        return self._live_candidates.get(instance_id)

    def clear_candidate(self, instance_id: str) -> None:
        self._live_candidates.pop(instance_id, None)

    # ------------------------------------------------------------------ pairs

    def add_pair(self, pair: LabeledPair) -> None:
        pair.validate()
        inst = self.get(pair.instance_id)
        if inst.state != LABELED:
            raise PoolError(
                f"pair for {pair.instance_id}: instance is {inst.state}, not labeled"
            )
        self.pairs.append(pair)

    def pairs_with(self, provenance: str | Iterable[str] | None = None) -> list[LabeledPair]:
        if provenance is None:
            wanted = None
        elif isinstance(provenance, str):
            wanted = {provenance}
        else:
            wanted = set(provenance)
        out = [p for p in self.pairs if wanted is None or p.provenance in wanted]
        return sorted(out, key=lambda p: (p.instance_id, p.iteration))

    def export_split(
        self, provenance: str | Iterable[str] | None, path: str | Path
    ) -> int:
        """Write matching pairs as JSONL sorted by instance id; returns the count."""
        pairs = self.pairs_with(provenance)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if not pairs:
            log.warning("export_split: no pairs match %r; writing empty %s", provenance, path)
        with path.open("w", encoding="utf-8") as fh:
            for p in pairs:
                fh.write(
                    canonical_json(
                        {
                            "id": p.instance_id,
                            "input": p.input_text,
                            "target": p.target_text,
                            "provenance": p.provenance,
                            "iteration": p.iteration,
                        }
                    )
                    + "\n"
                )
        return len(pairs)

    # -------------------------------------------------------------- snapshots

    def snapshot_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "instances": [
                self.instances[iid].to_dict() for iid in sorted(self.instances)
            ],
            "pairs": [
                p.to_dict()
                for p in sorted(
                    self.pairs, key=lambda p: (p.instance_id, p.iteration, p.provenance)
                )
            ],
            "loop_state": self.loop_state.to_dict(),
        }

    def snapshot_bytes(self) -> bytes:
        return canonical_json_bytes(self.snapshot_dict())

    def save_snapshot(self, path: str | Path | None = None) -> Path:
        if path is None:
            if self.workdir is None:
                raise StateError("no snapshot path and no workdir configured")
            path = self.workdir / "snapshot.json"
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.snapshot_bytes())
        return path

    @classmethod
    def restore(cls, snapshot: Mapping | bytes | str, workdir: str | Path | None = None) -> "PoolStore":
        if isinstance(snapshot, (bytes, str)):
            snapshot = json.loads(snapshot)
        if "schema_version" not in snapshot:
            raise PoolError("snapshot missing schema_version")
        if snapshot["schema_version"] != SCHEMA_VERSION:
            raise PoolError(
                f"unsupported snapshot schema_version {snapshot['schema_version']}"
            )
        store = cls(workdir=workdir)
        for d in snapshot["instances"]:
            store.add_instance(Instance.from_dict(d))
        for d in snapshot["pairs"]:
            pair = LabeledPair.from_dict(d)
            inst = store.get(pair.instance_id)
            if inst.state != LABELED:
                raise PoolError(
                    f"snapshot pair for {pair.instance_id} but instance is {inst.state}"
                )
            store.pairs.append(pair)
        store.loop_state = LoopState.from_dict(snapshot["loop_state"])
        return store

    @classmethod
    def load(cls, path: str | Path, workdir: str | Path | None = None) -> "PoolStore":
        path = Path(path)
        return cls.restore(path.read_bytes(), workdir=workdir)

    def clone(self) -> "PoolStore":
        """Deep copy through snapshot round-trip (value semantics)."""
        return PoolStore.restore(self.snapshot_dict())

    # ------------------------------------------------------------------ audit

    def verify_audit(self) -> None:
        """Check every labeled instance has one pair and a full transition chain."""
        pair_counts: dict[str, int] = {}
        for p in self.pairs:
            pair_counts[p.instance_id] = pair_counts.get(p.instance_id, 0) + 1
        chain = [UNLABELED, SELECTED, DISTILLED, PENDING_VERIFICATION, LABELED]
        for inst in self.instances_in(LABELED):
            if pair_counts.get(inst.id, 0) != 1:
                raise StateError(
                    f"labeled instance {inst.id} has {pair_counts.get(inst.id, 0)} pairs"
                )
            seen = [UNLABELED]
            for rec in self.audit:
                if rec.instance_id == inst.id:
                    seen.append(rec.to_state)
            # The chain may loop through rejected -> unlabeled before labeling.
            tail = seen[-4:]
            if tail != chain[1:]:
                raise StateError(
                    f"labeled instance {inst.id} has incomplete audit chain {seen}"
                )


def validate_disjoint(test_ids: Iterable[str], train_ids: Iterable[str]) -> None:
    overlap = set(test_ids) & set(train_ids)
    if overlap:
        sample = ", ".join(sorted(overlap)[:5])
        raise StateError(f"test/train overlap on {len(overlap)} ids (e.g. {sample})")
