"""Human verification queue: pending candidates become labeled pairs.

Items are append-only; decisions are compare-and-set so concurrent
annotators cannot double-decide. Every queue event can be written to a
JSONL log and replayed to rebuild the queue after a restart.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .distill import DistillationCandidate
from .errors import StateError
from .pool import LABELED, PENDING_VERIFICATION, REJECTED, LabeledPair, PoolStore

PENDING = "pending"
APPROVED = "approved"
EDITED = "edited"
REJECTED_ITEM = "rejected"

DECISIONS = ("approve", "edit", "reject")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class VerificationItem:
    item_id: str
    instance_id: str
    source_text: str
    candidate_text: str
    iteration: int
    provenance: str
    status: str = PENDING
    final_text: str | None = None
    annotator: str = ""
    decided_at: str | None = None
    cluster_id: int | None = None
    informativeness: float | None = None
    superseded_by: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "VerificationItem":
        return cls(**dict(d))


class VerificationQueue:
    """Owns VerificationItems and applies decisions to the pool store."""

    def __init__(self, store: PoolStore, event_log: str | Path | None = None):
        self.store = store
        self.items: dict[str, VerificationItem] = {}
        self._order: list[str] = []
        self._lock = threading.RLock()
        self.event_log = Path(event_log) if event_log else None
        if self.event_log is not None and self.event_log.exists():
            self._replay_events()

    # ------------------------------------------------------------------ intake

    def enqueue(
        self,
        candidates: Iterable[DistillationCandidate],
        *,
        iteration: int,
        provenance: str,
        informativeness: Mapping[str, float] | None = None,
    ) -> int:
        """Queue one pending item per candidate; idempotent per (instance, iteration)."""
        added = 0
        with self._lock:
            for cand in candidates:
                item_id = f"{cand.instance_id}@{iteration}"
                if item_id in self.items:
                    continue
                inst = self.store.get(cand.instance_id)
                item = VerificationItem(
                    item_id=item_id,
                    instance_id=cand.instance_id,
                    source_text=inst.source_text,
                    candidate_text=cand.candidate_text,
                    iteration=iteration,
                    provenance=provenance,
                    cluster_id=inst.cluster_id,
                    informativeness=(informativeness or {}).get(cand.instance_id),
                )
                self.items[item_id] = item
                self._order.append(item_id)
                self.store.transition(cand.instance_id, PENDING_VERIFICATION, iteration)
                self._log_event("enqueue", item)
                added += 1
        return added

    # --------------------------------------------------------------- decisions

    def decide(
        self,
        item_id: str,
        decision: str,
        final_text: str | None = None,
        annotator: str = "",
    ) -> VerificationItem:
        """Apply one decision; decided items are immutable."""
        if decision not in DECISIONS:
            raise StateError(f"unknown decision {decision!r}")
        with self._lock:
            item = self.items.get(item_id)
            if item is None:
                raise StateError(f"unknown verification item {item_id}")
            if item.status != PENDING:
                raise StateError(
                    f"item {item_id} already decided ({item.status}); "
                    "corrections must supersede"
                )
            if decision == "approve":
                item.status = APPROVED
                item.final_text = item.candidate_text
                self._label(item)
            elif decision == "edit":
                if not final_text:
                    raise StateError("edit decision requires final_text")
                if final_text == item.candidate_text:
                    raise StateError(
                        "edited text equals the candidate; approve instead"
                    )
                item.status = EDITED
                item.final_text = final_text
                self._label(item)
            else:
                item.status = REJECTED_ITEM
                self.store.clear_candidate(item.instance_id)
                self.store.transition(item.instance_id, REJECTED, item.iteration)
            item.annotator = annotator
            item.decided_at = _now()
            self._log_event("decide", item)
            return item

    def _label(self, item: VerificationItem) -> None:
        self.store.transition(item.instance_id, LABELED, item.iteration)
        self.store.add_pair(
            LabeledPair(
                instance_id=item.instance_id,
                input_text=item.source_text,
                target_text=item.final_text,
                provenance=item.provenance,
                iteration=item.iteration,
                decision="approved" if item.status == APPROVED else "edited",
            )
        )
        self.store.clear_candidate(item.instance_id)

    def supersede(self, item_id: str) -> VerificationItem:
        """Open a correction for a decided item; history stays immutable."""
        with self._lock:
            old = self.items.get(item_id)
            if old is None:
                raise StateError(f"unknown verification item {item_id}")
            if old.status == PENDING:
                raise StateError(f"item {item_id} is still pending")
            version = 2
            base = item_id.split("#", 1)[0]
            new_id = f"{base}#{version}"
            while new_id in self.items:
                version += 1
                new_id = f"{base}#{version}"
            fresh = VerificationItem(
                item_id=new_id,
                instance_id=old.instance_id,
                source_text=old.source_text,
                candidate_text=old.candidate_text,
                iteration=old.iteration,
                provenance=old.provenance,
                cluster_id=old.cluster_id,
                informativeness=old.informativeness,
            )
            old.superseded_by = new_id
            self.items[new_id] = fresh
            self._order.append(new_id)
            self._log_event("supersede", fresh)
            return fresh

    def auto_approve(self, iteration: int | None = None, annotator: str = "auto") -> int:
        """Approve every pending item, exactly as a human approving all would."""
        count = 0
        for item in self.pending(iteration):
            self.decide(item.item_id, "approve", annotator=annotator)
            count += 1
        return count

    def reconcile(self, iteration: int) -> int:
        """Re-apply decisions whose pool effects were lost to a crash.

        After a resume re-enqueues the same batch, items decided before the
        crash are already non-pending but their instances sit back in
        pending_verification; this replays the decision effects.
        """
        applied = 0
        with self._lock:
            for item in self.filter(iteration=iteration):
                if item.status == PENDING or item.superseded_by:
                    continue
                inst = self.store.get(item.instance_id)
                if inst.state != PENDING_VERIFICATION:
                    continue
                if item.status in (APPROVED, EDITED):
                    self._label(item)
                else:
                    self.store.clear_candidate(item.instance_id)
                    self.store.transition(item.instance_id, REJECTED, item.iteration)
                applied += 1
        return applied

    # ------------------------------------------------------------------- views

    def pending(self, iteration: int | None = None) -> list[VerificationItem]:
        """Pending items, oldest first."""
        return self.filter(status=PENDING, iteration=iteration)

    def filter(
        self, status: str | None = None, iteration: int | None = None
    ) -> list[VerificationItem]:
        out = []
        with self._lock:
            for item_id in self._order:
                item = self.items[item_id]
                if status is not None and item.status != status:
                    continue
                if iteration is not None and item.iteration != iteration:
                    continue
                out.append(item)
        return out

    def counts(self, iteration: int | None = None) -> dict[str, int]:
        out = {PENDING: 0, APPROVED: 0, EDITED: 0, REJECTED_ITEM: 0}
        for item in self.filter(iteration=iteration):
            out[item.status] += 1
        return out

    def all_decided(self, iteration: int) -> bool:
        return not self.pending(iteration)

    # --------------------------------------------------------------- event log

    def _log_event(self, event: str, item: VerificationItem) -> None:
        if self.event_log is None:
            return
        entry = {"event": event, "item": item.to_dict()}
        with self.event_log.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def _replay_events(self) -> None:
        with self.event_log.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                item = VerificationItem.from_dict(entry["item"])
                if item.item_id not in self.items:
                    self._order.append(item.item_id)
                self.items[item.item_id] = item
