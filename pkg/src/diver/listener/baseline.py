"""Known-good device model: build from a live connection, persist as
versioned JSON with an integrity checksum, and summarize observation
windows into the per-task statistics the runtime detector compares.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..errors import CorruptFile, InsufficientSamples, VersionMismatch
from ..recordset import RecordSet
from .client import DeviceClient

BASELINE_VERSION = 1

DEFAULT_TOLERANCES = {
    "state_fraction_eps": 0.15,
    "distinct_pc_ratio": 0.25,
}


@dataclass
class TaskProfile:
    state_fractions: Dict[str, float]
    distinct_pc: int
    priority: int
    entry_point: int
    samples: int

    def to_dict(self) -> dict:
        return {"state_fractions": self.state_fractions,
                "distinct_pc": self.distinct_pc, "priority": self.priority,
                "entry_point": self.entry_point, "samples": self.samples}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskProfile":
        return cls(state_fractions=dict(d["state_fractions"]),
                   distinct_pc=d["distinct_pc"], priority=d["priority"],
                   entry_point=d.get("entry_point", 0),
                   samples=d.get("samples", 0))


@dataclass
class Baseline:
    device_id: str
    created_at_ms: int
    config: Dict[str, str]
    modules: Dict[str, dict]            # name -> kind/file_path/load_address/segment_hash
    timer_tree: List[list]              # canonical pre-order rows
    task_profiles: Dict[str, TaskProfile]
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    sample_rate_hz: float = 1.0

    def to_dict(self) -> dict:
        return {
            "version": BASELINE_VERSION,
            "device_id": self.device_id,
            "created_at_ms": self.created_at_ms,
            "config": self.config,
            "modules": self.modules,
            "timer_tree": self.timer_tree,
            "task_profiles": {k: v.to_dict() for k, v in self.task_profiles.items()},
            "tolerances": self.tolerances,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Baseline":
        return cls(
            device_id=d["device_id"],
            created_at_ms=d["created_at_ms"],
            config=dict(d["config"]),
            modules={k: dict(v) for k, v in d["modules"].items()},
            timer_tree=[list(row) for row in d["timer_tree"]],
            task_profiles={k: TaskProfile.from_dict(v)
                           for k, v in d["task_profiles"].items()},
            tolerances=dict(d["tolerances"]),
            sample_rate_hz=d.get("sample_rate_hz", 1.0),
        )

    @property
    def ref(self) -> str:
        return f"{self.device_id}@{self.created_at_ms}"


def summarize_window(records: RecordSet) -> Dict[str, TaskProfile]:
    """Reduce a raw taskstats window to per-task statistics.

    ``records`` must carry name/state/pc/priority/entry_point columns;
    fractions are over the samples in which the task appears.
    """
    idx = {c: records.columns.index(c)
           for c in ("name", "state", "pc", "priority", "entry_point")}
    counts: Dict[str, Dict[str, int]] = {}
    pcs: Dict[str, set] = {}
    last: Dict[str, tuple] = {}
    totals: Dict[str, int] = {}
    for row in records.rows:
        name = row[idx["name"]]
        counts.setdefault(name, {})
        state = row[idx["state"]]
        counts[name][state] = counts[name].get(state, 0) + 1
        pcs.setdefault(name, set()).add(row[idx["pc"]])
        last[name] = (row[idx["priority"]], row[idx["entry_point"]])
        totals[name] = totals.get(name, 0) + 1
    profiles = {}
    for name, total in totals.items():
        fractions = {state: n / total for state, n in sorted(counts[name].items())}
        priority, entry = last[name]
        profiles[name] = TaskProfile(state_fractions=fractions,
                                     distinct_pc=len(pcs[name]),
                                     priority=priority, entry_point=entry,
                                     samples=total)
    return profiles


def collect_window(client: DeviceClient, window: int, rate_hz: float,
                   timeout: Optional[float] = None) -> RecordSet:
    """Pull one raw sampling window from the device (sim-time paced)."""
    if timeout is None:
        timeout = 60.0 + 3.0 * window / rate_hz
    return client.command("taskstats", window=window, rate=float(rate_hz),
                          timeout=timeout)


def build_baseline(client: DeviceClient, sample_rate_hz: float = 1.0,
                   duration_s: float = 60.0,
                   tolerances: Optional[Dict[str, float]] = None,
                   raw_sink: Optional[list] = None) -> Baseline:
    """Snapshot the static surfaces once, stream task samples for the
    window, and fold them into a Baseline.  ``raw_sink``, when given,
    receives the raw RecordSet so callers can recount independently."""
    window = int(duration_s * sample_rate_hz)
    if window < 10:
        raise InsufficientSamples(f"{window} samples < 10")
    sysinfo = client.command("sysinfo")
    config = {row[1]: row[2] for row in sysinfo.rows if row[0] == "config"}
    device_id = config.get("sys.hostname", "device")
    modules_rs = client.command("modules")
    modules = {d["name"]: {"kind": d["kind"], "file_path": d["file_path"],
                           "load_address": d["load_address"],
                           "segment_hash": d["segment_hash"]}
               for d in modules_rs.dicts()}
    tree = client.command("timer_tree")
    raw = collect_window(client, window, sample_rate_hz)
    if raw_sink is not None:
        raw_sink.append(raw)
    profiles = summarize_window(raw)
    if not profiles or max(p.samples for p in profiles.values()) < 10:
        raise InsufficientSamples("window produced fewer than 10 samples")
    return Baseline(device_id=device_id,
                    created_at_ms=int(time.time() * 1000),
                    config=config, modules=modules,
                    timer_tree=[list(r) for r in tree.rows],
                    task_profiles=profiles,
                    tolerances=dict(tolerances or DEFAULT_TOLERANCES),
                    sample_rate_hz=sample_rate_hz)


# --- persistence ---

def _checksum(doc: dict) -> str:
    body = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode()).hexdigest()


def save_baseline(baseline: Baseline, path: str) -> None:
    doc = baseline.to_dict()
    doc["checksum"] = _checksum(doc)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_baseline(path: str) -> Baseline:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CorruptFile(f"cannot read baseline: {e}") from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise CorruptFile("baseline missing version")
    if doc["version"] != BASELINE_VERSION:
        raise VersionMismatch(f"baseline version {doc['version']}, "
                              f"expected {BASELINE_VERSION}")
    stored = doc.pop("checksum", None)
    if stored is None or stored != _checksum(doc):
        raise CorruptFile("baseline checksum mismatch")
    try:
        return Baseline.from_dict(doc)
    except (KeyError, TypeError) as e:
        raise CorruptFile(f"baseline missing field: {e}") from None
