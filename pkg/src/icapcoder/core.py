"""Label taxonomy, scene/action compatibility and the shared record types.

Every other module speaks in terms of :class:`Scene`, :class:`Action`,
:class:`EvaluationUnit` and :class:`LabelRecord`; the label-file readers and
writers live here too so gold and prediction files share one schema.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping


class Scene(str, Enum):
    GAI = "gai"
    WEB = "web"
    DOCS = "docs"


class Action(str, Enum):
    SEARCHING_INTERNET = "searching_internet"
    TICKING_ANSWERS = "ticking_answers"
    READING_WITH_HIGHLIGHTING = "reading_with_highlighting"
    COPY_AND_PASTE = "copy_and_paste"
    PROMPTING_GAI = "prompting_gai"
    GROUP_DOCUMENT_CO_EDITING = "group_document_co_editing"
    READING_WITH_SCROLLING = "reading_with_scrolling"
    FREEZING = "freezing"


class IcapLevel(str, Enum):
    ACTIVE = "active"
    CONSTRUCTIVE = "constructive"
    INTERACTIVE = "interactive"
    PASSIVE = "passive"
    CONCEAL = "conceal"


SCENES: tuple[Scene, ...] = tuple(Scene)
ACTIONS: tuple[Action, ...] = tuple(Action)
ALL_SCENES = frozenset(Scene)

_ICAP = {
    Action.SEARCHING_INTERNET: IcapLevel.ACTIVE,
    Action.TICKING_ANSWERS: IcapLevel.ACTIVE,
    Action.READING_WITH_HIGHLIGHTING: IcapLevel.ACTIVE,
    Action.COPY_AND_PASTE: IcapLevel.ACTIVE,
    Action.PROMPTING_GAI: IcapLevel.CONSTRUCTIVE,
    Action.GROUP_DOCUMENT_CO_EDITING: IcapLevel.INTERACTIVE,
    Action.READING_WITH_SCROLLING: IcapLevel.PASSIVE,
    Action.FREEZING: IcapLevel.CONCEAL,
}

_COMPATIBLE = {
    Action.SEARCHING_INTERNET: frozenset({Scene.WEB}),
    Action.TICKING_ANSWERS: frozenset({Scene.DOCS}),
    Action.READING_WITH_HIGHLIGHTING: ALL_SCENES,
    Action.COPY_AND_PASTE: ALL_SCENES,
    Action.PROMPTING_GAI: frozenset({Scene.GAI}),
    Action.GROUP_DOCUMENT_CO_EDITING: frozenset({Scene.DOCS}),
    Action.READING_WITH_SCROLLING: ALL_SCENES,
    Action.FREEZING: ALL_SCENES,
}

DISPLAY_NAMES = MappingProxyType({
    Scene.GAI: "GAI Interface",
    Scene.WEB: "Web Content",
    Scene.DOCS: "Group Documents",
    Action.SEARCHING_INTERNET: "Searching Internet",
    Action.TICKING_ANSWERS: "Ticking Answers",
    Action.READING_WITH_HIGHLIGHTING: "Reading with Highlighting",
    Action.COPY_AND_PASTE: "Copy and Paste",
    Action.PROMPTING_GAI: "Prompting GAI",
    Action.GROUP_DOCUMENT_CO_EDITING: "Group Document Co-Editing",
    Action.READING_WITH_SCROLLING: "Reading with Scrolling",
    Action.FREEZING: "Freezing",
})


def compatible_scenes(action: Action) -> frozenset[Scene]:
    return _COMPATIBLE[Action(action)]


def icap_level(action: Action) -> IcapLevel:
    return _ICAP[Action(action)]


def _normalize_name(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


_SCENE_ALIASES = {
    "gai": Scene.GAI, "generative_ai": Scene.GAI, "gai_interface": Scene.GAI,
    "generative_ai_interface": Scene.GAI,
    "web": Scene.WEB, "web_content": Scene.WEB, "web_search": Scene.WEB,
    "docs": Scene.DOCS, "doc": Scene.DOCS, "documents": Scene.DOCS,
    "group_documents": Scene.DOCS, "group_document": Scene.DOCS,
    "shared_document": Scene.DOCS,
}
_ACTION_ALIASES = {a.value: a for a in Action}
_ACTION_ALIASES.update({_normalize_name(DISPLAY_NAMES[a]): a for a in Action})
_ACTION_ALIASES.update({
    "reading_with_highlight": Action.READING_WITH_HIGHLIGHTING,
    "group_document_coediting": Action.GROUP_DOCUMENT_CO_EDITING,
    "co_editing": Action.GROUP_DOCUMENT_CO_EDITING,
    "copy_paste": Action.COPY_AND_PASTE,
    "searching": Action.SEARCHING_INTERNET,
    "scrolling": Action.READING_WITH_SCROLLING,
    "frozen": Action.FREEZING,
})


def scene_from_name(name: str) -> Scene | None:
    """Map a serialized or display scene name onto a Scene, or None."""
    return _SCENE_ALIASES.get(_normalize_name(str(name)))


def action_from_name(name: str) -> Action | None:
    return _ACTION_ALIASES.get(_normalize_name(str(name)))


def _ordered(items: Iterable, universe: tuple) -> list:
    present = set(items)
    return [x for x in universe if x in present]


@dataclass(frozen=True)
class EvaluationUnit:
    unit_id: str
    start_s: float
    frame_indices: tuple[int, ...]
    duration_s: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "frame_indices", tuple(int(i) for i in self.frame_indices))
        if self.start_s < 0:
            raise ValueError("start_s must be non-negative")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        idx = self.frame_indices
        if not idx:
            raise ValueError(f"unit {self.unit_id}: frame_indices is empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"unit {self.unit_id}: frame_indices not strictly increasing")

    @property
    def first(self) -> int:
        return self.frame_indices[0]

    @property
    def last(self) -> int:
        return self.frame_indices[-1]


@dataclass(frozen=True)
class LabelRecord:
    """Gold or predicted labels for one evaluation unit.

    ``confidences``, ``evidence`` and ``flagged`` are only meaningful for
    predictions. The scene/action consistency rule is checked by
    :meth:`validate` rather than at construction, because raw model output
    may break it and still has to be recorded and scored.
    """

    unit_id: str
    scenes: frozenset[Scene] = frozenset()
    actions: frozenset[Action] = frozenset()
    confidences: Mapping[Action, float] = field(default_factory=dict)
    evidence: Mapping[Action, str] = field(default_factory=dict)
    flagged: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scenes", frozenset(Scene(s) for s in self.scenes))
        object.__setattr__(self, "actions", frozenset(Action(a) for a in self.actions))
        conf = {Action(a): float(c) for a, c in dict(self.confidences).items()}
        extra = set(conf) - self.actions
        if extra:
            raise ValueError(f"unit {self.unit_id}: confidences for absent actions {sorted(a.value for a in extra)}")
        for a, c in conf.items():
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"unit {self.unit_id}: confidence {c} for {a.value} outside [0, 1]")
        object.__setattr__(self, "confidences", MappingProxyType(conf))
        ev = {Action(a): str(t) for a, t in dict(self.evidence).items()}
        object.__setattr__(self, "evidence", MappingProxyType(ev))

    def __hash__(self):
        return hash((self.unit_id, self.scenes, self.actions))

    def validate(self) -> None:
        """Raise ValueError if scenes are empty while non-Freezing actions exist."""
        if not self.scenes and self.actions - {Action.FREEZING}:
            raise ValueError(
                f"unit {self.unit_id}: empty scene set with actions "
                f"{[a.value for a in _ordered(self.actions, ACTIONS)]}"
            )

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "scenes": [s.value for s in _ordered(self.scenes, SCENES)],
            "actions": [a.value for a in _ordered(self.actions, ACTIONS)],
            "confidences": {a.value: self.confidences[a] for a in _ordered(self.confidences, ACTIONS)},
            "evidence": {a.value: self.evidence[a] for a in _ordered(self.evidence, ACTIONS)},
            "flagged": self.flagged,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> LabelRecord:
        return cls(
            unit_id=str(data["unit_id"]),
            scenes=frozenset(Scene(s) for s in data.get("scenes", ())),
            actions=frozenset(Action(a) for a in data.get("actions", ())),
            confidences={Action(k): v for k, v in (data.get("confidences") or {}).items()},
            evidence={Action(k): v for k, v in (data.get("evidence") or {}).items()},
            flagged=bool(data.get("flagged", False)),
        )


def check_compatibility(record: LabelRecord) -> list[tuple[Action, frozenset[Scene]]]:
    """Return ``(action, compatible scenes)`` for every action with no matching scene.

    Freezing never violates: it is compatible with every scene and is also
    allowed on a unit with no recognisable scene.
    """
    violations = []
    for action in _ordered(record.actions, ACTIONS):
        if action is Action.FREEZING:
            continue
        allowed = compatible_scenes(action)
        if not allowed & record.scenes:
            violations.append((action, allowed))
    return violations


# --- label files -----------------------------------------------------------

LABEL_COLUMNS = ("unit_id", "scenes", "actions", "confidences", "evidence", "flagged")


class LabelFileError(ValueError):
    pass


def _format_tsv_row(rec: LabelRecord) -> list[str]:
    d = rec.to_dict()
    conf = ";".join(f"{k}={v!r}" for k, v in d["confidences"].items())
    evidence = json.dumps(d["evidence"], ensure_ascii=False, sort_keys=False) if d["evidence"] else ""
    return [
        rec.unit_id,
        ";".join(d["scenes"]),
        ";".join(d["actions"]),
        conf,
        evidence,
        "1" if rec.flagged else "0",
    ]


def dumps_tsv(records: Iterable[LabelRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(LABEL_COLUMNS)
    for rec in records:
        writer.writerow(_format_tsv_row(rec))
    return buf.getvalue()


def _split(cell: str) -> list[str]:
    return [p.strip() for p in cell.split(";") if p.strip()]


def _parse_tsv_row(row: dict, lineno: int) -> LabelRecord:
    uid = (row.get("unit_id") or "").strip()
    if not uid:
        raise LabelFileError(f"line {lineno}: missing unit_id")
    try:
        scenes = frozenset(Scene(s) for s in _split(row.get("scenes") or ""))
        actions = frozenset(Action(a) for a in _split(row.get("actions") or ""))
        conf = {}
        for item in _split(row.get("confidences") or ""):
            key, _, value = item.partition("=")
            conf[Action(key.strip())] = float(value)
        ev_cell = (row.get("evidence") or "").strip()
        evidence = {Action(k): v for k, v in json.loads(ev_cell).items()} if ev_cell else {}
        flagged = (row.get("flagged") or "0").strip().lower() in ("1", "true", "yes")
        return LabelRecord(uid, scenes, actions, conf, evidence, flagged)
    except (ValueError, json.JSONDecodeError) as exc:
        raise LabelFileError(f"line {lineno} (unit {uid}): {exc}") from None


def loads_tsv(text: str) -> list[LabelRecord]:
    reader = csv.DictReader(io.StringIO(text), delimiter="\t")
    if reader.fieldnames is None or "unit_id" not in reader.fieldnames:
        raise LabelFileError("label file needs a header row with a unit_id column")
    return [_parse_tsv_row(row, n) for n, row in enumerate(reader, start=2)]


def dumps_jsonl(records: Iterable[LabelRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records)


def loads_jsonl(text: str) -> list[LabelRecord]:
    out = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(LabelRecord.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise LabelFileError(f"line {n}: {exc}") from None
    return out


def read_labels(path: str | Path) -> list[LabelRecord]:
    """Read a label file; ``.jsonl``/``.json`` are structured, anything else is TSV."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LabelFileError(f"cannot read {path}: {exc}") from None
    if path.suffix in (".jsonl", ".json"):
        if path.suffix == ".json" and text.lstrip().startswith("["):
            return [LabelRecord.from_dict(d) for d in json.loads(text)]
        return loads_jsonl(text)
    return loads_tsv(text)


def write_labels(path: str | Path, records: Iterable[LabelRecord]) -> None:
    path = Path(path)
    text = dumps_jsonl(records) if path.suffix in (".jsonl", ".json") else dumps_tsv(records)
    path.write_text(text, encoding="utf-8")
