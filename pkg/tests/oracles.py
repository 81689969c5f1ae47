"""Brute-force reference metrics, written without touching icapcoder.evaluation.

Records are reduced to plain string sets; the label universe and the
scene/action compatibility table are restated here from the coding scheme so
a mistake in the package taxonomy cannot leak into the oracle.
"""
from fractions import Fraction

SCENE_NAMES = ["gai", "web", "docs"]
ACTION_TABLE = {
    # action: scenes it may occur in
    "searching_internet": ["web"],
    "ticking_answers": ["docs"],
    "reading_with_highlighting": ["gai", "web", "docs"],
    "copy_and_paste": ["gai", "web", "docs"],
    "prompting_gai": ["gai"],
    "group_document_co_editing": ["docs"],
    "reading_with_scrolling": ["gai", "web", "docs"],
    "freezing": ["gai", "web", "docs"],
}
ACTION_NAMES = list(ACTION_TABLE)


def as_sets(records):
    """unit_id -> (scene name set, action name set)."""
    return {r.unit_id: ({s.value for s in r.scenes}, {a.value for a in r.actions}) for r in records}


def label_matrix(gold, pred, kind):
    """One row per gold unit: list of (gold bit, pred bit) per label."""
    g, p = as_sets(gold), as_sets(pred)
    names = SCENE_NAMES if kind == "scene" else ACTION_NAMES
    slot = 0 if kind == "scene" else 1
    rows = []
    for uid in g:
        gs = g[uid][slot]
        ps = p[uid][slot] if uid in p else set()
        rows.append([(int(n in gs), int(n in ps)) for n in names])
    return rows


def hamming(gold, pred, kind):
    rows = label_matrix(gold, pred, kind)
    cells = [c for row in rows for c in row]
    return float(Fraction(sum(1 for a, b in cells if a != b), len(cells)))


def per_label_counts(gold, pred, kind):
    rows = label_matrix(gold, pred, kind)
    out = []
    for j in range(len(rows[0])):
        tp = sum(1 for r in rows if r[j] == (1, 1))
        fp = sum(1 for r in rows if r[j] == (0, 1))
        fn = sum(1 for r in rows if r[j] == (1, 0))
        out.append((tp, fp, fn))
    return out


def f1(tp, fp, fn):
    if tp + fp + fn == 0:
        return Fraction(1)
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def macro_f1(gold, pred, kind="scene"):
    scores = [f1(*c) for c in per_label_counts(gold, pred, kind)]
    return float(sum(scores) / len(scores))


def micro_f1(gold, pred, kind="action"):
    tp = fp = fn = 0
    for a, b, c in per_label_counts(gold, pred, kind):
        tp, fp, fn = tp + a, fp + b, fn + c
    return float(f1(tp, fp, fn))


def tree():
    """(parent, child) edges: root -> scenes, scene -> scene/action, root -> root/freezing."""
    edges = [("ROOT", s) for s in SCENE_NAMES]
    for action, scenes in ACTION_TABLE.items():
        for s in scenes:
            edges.append((s, f"{s}/{action}"))
    edges.append(("ROOT", "ROOT/freezing"))
    return edges


def node_on(node, scenes, actions):
    if "/" not in node:
        return node in scenes
    parent, action = node.split("/")
    return action in actions and (parent == "ROOT" or parent in scenes)


def hier_hamming(gold, pred):
    g, p = as_sets(gold), as_sets(pred)
    edges = tree()
    parent_of = {child: parent for parent, child in edges}
    total = 0
    for uid, (gs, ga) in g.items():
        ps, pa = p.get(uid, (set(), set()))
        for child, parent in parent_of.items():
            if node_on(child, gs, ga) == node_on(child, ps, pa):
                continue
            if parent != "ROOT" and node_on(parent, gs, ga) != node_on(parent, ps, pa):
                continue
            total += 1
    return float(Fraction(total, len(g) * len(parent_of)))


def kappa(a, b):
    n = len(a)
    cats = sorted(set(a) | set(b), key=repr)
    table = {(x, y): 0 for x in cats for y in cats}
    for x, y in zip(a, b):
        table[(x, y)] += 1
    p_o = Fraction(sum(table[(c, c)] for c in cats), n)
    p_e = sum(Fraction(sum(table[(c, y)] for y in cats), n) * Fraction(sum(table[(x, c)] for x in cats), n)
              for c in cats)
    if p_e == 1:
        return 1.0 if p_o == 1 else 0.0
    return float((p_o - p_e) / (1 - p_e))
