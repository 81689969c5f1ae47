"""Multi-label scoring of predicted label files against gold.

Scenes are scored with macro F1 and Hamming loss; actions with micro F1,
Hamming loss and a hierarchical Hamming loss over a scene -> (scene, action)
tree in which errors beneath a wrong scene are not counted twice.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

from .core import ACTIONS, SCENES, Action, LabelRecord, Scene, compatible_scenes, read_labels

ROOT = "root"


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _labels_of(record: LabelRecord | None, label) -> bool:
    if record is None:
        return False
    if isinstance(label, Scene):
        return label in record.scenes
    return label in record.actions


def align(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord]) -> list[tuple[LabelRecord, LabelRecord | None]]:
    """Pair every gold record with its prediction by unit id (None when missing)."""
    for name, records in (("gold", gold), ("pred", pred)):
        counts = Counter(r.unit_id for r in records)
        dupes = sorted(u for u, c in counts.items() if c > 1)
        if dupes:
            raise EvaluationError(f"duplicate unit_id in {name}: {', '.join(dupes)}")
    by_id = {r.unit_id: r for r in pred}
    return [(g, by_id.get(g.unit_id)) for g in gold]


def confusion_counts(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord], label) -> ConfusionCounts:
    tp = fp = fn = 0
    for g, p in align(gold, pred):
        in_gold, in_pred = _labels_of(g, label), _labels_of(p, label)
        tp += in_gold and in_pred
        fp += in_pred and not in_gold
        fn += in_gold and not in_pred
    return ConfusionCounts(tp, fp, fn)


def f1_from_counts(c: ConfusionCounts, zero_division: float = 1.0) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return zero_division if denom == 0 else 2 * c.tp / denom


def _ratio(num: int, den: int, zero_division: float) -> float:
    return zero_division if den == 0 else num / den


def macro_f1(counts: dict, classes: Iterable, zero_division: float = 1.0) -> float:
    """Unweighted mean of per-class F1.

    A class with no gold or predicted positives scores ``zero_division``
    (1.0 by default, so classes absent from a corpus do not cap the score).
    """
    classes = list(classes)
    if not classes:
        raise ValueError("macro_f1 needs at least one class")
    return sum(f1_from_counts(counts[c], zero_division) for c in classes) / len(classes)


def hamming_loss(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord], label_set: Sequence) -> float:
    label_set = list(label_set)
    if not label_set:
        raise ValueError("hamming_loss needs a non-empty label set")
    pairs = align(gold, pred)
    if not pairs:
        return 0.0
    wrong = sum(_labels_of(g, lab) != _labels_of(p, lab) for g, p in pairs for lab in label_set)
    return wrong / (len(pairs) * len(label_set))


def micro_f1(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord], label_set: Sequence,
             zero_division: float = 1.0) -> float:
    label_set = list(label_set)
    if not label_set:
        raise ValueError("micro_f1 needs a non-empty label set")
    total = ConfusionCounts()
    for lab in label_set:
        total = total + confusion_counts(gold, pred, lab)
    return f1_from_counts(total, zero_division)


def hierarchy_nodes() -> list[tuple]:
    """Scene nodes followed by every valid (parent, action) node.

    Each action hangs under each scene it is compatible with; Freezing also
    hangs under a virtual root so it can be scored on scene-less units.
    """
    nodes: list[tuple] = [(s,) for s in SCENES]
    for s in SCENES:
        for a in ACTIONS:
            if s in compatible_scenes(a):
                nodes.append((s, a))
    nodes.append((ROOT, Action.FREEZING))
    return nodes


HIERARCHY = tuple(hierarchy_nodes())


def _node_present(record: LabelRecord | None, node: tuple) -> bool:
    if record is None:
        return False
    if len(node) == 1:
        return node[0] in record.scenes
    parent, action = node
    if action not in record.actions:
        return False
    return parent == ROOT or parent in record.scenes


def _hier_cost(g: LabelRecord, p: LabelRecord | None) -> int:
    cost = 0
    for node in HIERARCHY:
        if _node_present(g, node) == _node_present(p, node):
            continue
        if len(node) == 2 and node[0] != ROOT and _node_present(g, (node[0],)) != _node_present(p, (node[0],)):
            continue
        cost += 1
    return cost


def hierarchical_hamming_loss(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord]) -> float:
    pairs = align(gold, pred)
    if not pairs:
        return 0.0
    return sum(_hier_cost(g, p) for g, p in pairs) / (len(pairs) * len(HIERARCHY))


def cohen_kappa(rater_a: Sequence[Hashable], rater_b: Sequence[Hashable]) -> float:
    if len(rater_a) != len(rater_b):
        raise ValueError(f"rater lengths differ: {len(rater_a)} vs {len(rater_b)}")
    n = len(rater_a)
    if n == 0:
        raise ValueError("kappa needs at least one rating")
    p_o = sum(x == y for x, y in zip(rater_a, rater_b)) / n
    ca, cb = Counter(rater_a), Counter(rater_b)
    p_e = sum(ca[c] * cb[c] for c in ca) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def binarized_kappa(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord], label_set: Sequence) -> float:
    """Mean over labels of Cohen's kappa on per-unit presence/absence."""
    pairs = align(gold, pred)
    label_set = list(label_set)
    if not pairs or not label_set:
        raise ValueError("binarized kappa needs units and labels")
    vals = [cohen_kappa([_labels_of(g, lab) for g, _ in pairs], [_labels_of(p, lab) for _, p in pairs])
            for lab in label_set]
    return sum(vals) / len(vals)


@dataclass
class ClassScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvaluationReport:
    n_units: int
    scene_macro_f1: float
    scene_hamming: float
    action_micro_f1: float
    action_hamming: float
    action_hier_hamming: float
    kappa: float | None
    per_class: dict[str, ClassScore] = field(default_factory=dict)
    missing_predictions: list[str] = field(default_factory=list)
    unmatched_predictions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self, label: str = "prediction") -> str:
        lines = [
            f"units scored: {self.n_units}",
            "",
            f"{'':<14}| {'Scene (F1 / HL)':<17}| {'Action (F1 / HL)':<17}| Action hier. HL",
            f"{label[:14]:<14}| {self.scene_macro_f1:.3f} / {self.scene_hamming:.3f}  "
            f"| {self.action_micro_f1:.3f} / {self.action_hamming:.3f}  | {self.action_hier_hamming:.3f}",
            "",
            f"{'class':<34}{'P':>7}{'R':>7}{'F1':>7}{'TP':>6}{'FP':>6}{'FN':>6}",
        ]
        for name, c in self.per_class.items():
            lines.append(f"{name:<34}{c.precision:>7.3f}{c.recall:>7.3f}{c.f1:>7.3f}{c.tp:>6}{c.fp:>6}{c.fn:>6}")
        if self.kappa is not None:
            lines += ["", f"mean binarized kappa (scenes + actions): {self.kappa:.3f}"]
        if self.missing_predictions:
            lines.append(f"missing predictions (scored as all-negative): {len(self.missing_predictions)}")
        if self.unmatched_predictions:
            lines.append(f"predictions without gold (ignored): {len(self.unmatched_predictions)}")
        return "\n".join(lines) + "\n"


def evaluate(gold: Sequence[LabelRecord], pred: Sequence[LabelRecord], zero_division: float = 1.0) -> EvaluationReport:
    pairs = align(gold, pred)
    gold_ids = {g.unit_id for g in gold}
    per_class = {}
    scene_counts = {}
    for lab in (*SCENES, *ACTIONS):
        c = confusion_counts(gold, pred, lab)
        if isinstance(lab, Scene):
            scene_counts[lab] = c
        per_class[f"{'scene' if isinstance(lab, Scene) else 'action'}:{lab.value}"] = ClassScore(
            precision=_ratio(c.tp, c.tp + c.fp, zero_division),
            recall=_ratio(c.tp, c.tp + c.fn, zero_division),
            f1=f1_from_counts(c, zero_division),
            tp=c.tp, fp=c.fp, fn=c.fn,
        )
    return EvaluationReport(
        n_units=len(pairs),
        scene_macro_f1=macro_f1(scene_counts, SCENES, zero_division),
        scene_hamming=hamming_loss(gold, pred, SCENES),
        action_micro_f1=micro_f1(gold, pred, ACTIONS, zero_division),
        action_hamming=hamming_loss(gold, pred, ACTIONS),
        action_hier_hamming=hierarchical_hamming_loss(gold, pred),
        kappa=binarized_kappa(gold, pred, (*SCENES, *ACTIONS)) if pairs else None,
        per_class=per_class,
        missing_predictions=[g.unit_id for g, p in pairs if p is None],
        unmatched_predictions=sorted(p.unit_id for p in pred if p.unit_id not in gold_ids),
    )


def evaluate_corpus(gold_file: str | Path, pred_file: str | Path, zero_division: float = 1.0) -> EvaluationReport:
    return evaluate(read_labels(gold_file), read_labels(pred_file), zero_division)


def write_report(report: EvaluationReport, out_dir: str | Path, label: str = "prediction") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(label), encoding="utf-8")
