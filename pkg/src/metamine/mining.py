"""Symbolic learners over featurised datasets.

Two model families, both transparent enough to compile into rules:
entropy/information-gain decision trees (multiway splits over finite
domains, no pruning) and level-wise apriori frequent itemsets with
association-rule derivation. Evaluation is seeded stratified k-fold
cross-validation. Every tie-break (gain ties, label ties, rule order,
fold assignment) is fixed and documented so mined artifacts are
byte-reproducible.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from random import Random
from typing import Any, Iterable, Mapping, Sequence, Union

from .errors import ConsistencyError, InputFormatError, MiningError
from .introspection import Dataset
from .jsonio import expect_field, expect_object, read_json, write_json
from .knowledge import AttributeDef, InformationState


@dataclass(frozen=True)
class MiningConfig:
    max_depth: int = 6
    min_leaf_instances: int = 1
    min_support: float = 0.1
    min_confidence: float = 0.6
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.max_depth, int) or self.max_depth < 1:
            raise MiningError("BadConfig", f"max_depth must be >= 1, got {self.max_depth!r}")
        if not isinstance(self.min_leaf_instances, int) or self.min_leaf_instances < 1:
            raise MiningError("BadConfig", f"min_leaf_instances must be >= 1, got {self.min_leaf_instances!r}")
        if not 0.0 < self.min_support <= 1.0:
            raise MiningError("BadConfig", f"min_support must be in (0, 1], got {self.min_support!r}")
        if not 0.0 < self.min_confidence <= 1.0:
            raise MiningError("BadConfig", f"min_confidence must be in (0, 1], got {self.min_confidence!r}")
        if not isinstance(self.cv_folds, int) or self.cv_folds < 2:
            raise MiningError("BadConfig", f"cv_folds must be >= 2, got {self.cv_folds!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise MiningError("BadConfig", f"seed must be an integer, got {self.seed!r}")


def mining_config_to_json(config: MiningConfig) -> dict:
    return {
        "max_depth": config.max_depth,
        "min_leaf_instances": config.min_leaf_instances,
        "min_support": config.min_support,
        "min_confidence": config.min_confidence,
        "cv_folds": config.cv_folds,
        "seed": config.seed,
    }


def mining_config_from_json(obj: Any) -> MiningConfig:
    obj = expect_object(obj, "mining config")
    known = set(mining_config_to_json(MiningConfig()))
    unknown = set(obj) - known
    if unknown:
        raise InputFormatError("UnknownField", f"mining config has unknown fields {sorted(unknown)}")
    return MiningConfig(**obj)


def entropy(labels: Iterable[Any]) -> float:
    """Shannon entropy of a label multiset, in bits. Empty input is 0."""
    counts = Counter(labels)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def _partition_gain(rows: Sequence[Mapping], attribute: str, class_attribute: str) -> float:
    labels = [r[class_attribute] for r in rows]
    groups: dict[Any, list] = {}
    for r in rows:
        groups.setdefault(r[attribute], []).append(r[class_attribute])
    n = len(rows)
    remainder = sum(len(g) / n * entropy(g) for g in groups.values())
    return entropy(labels) - remainder


def info_gain(dataset: Dataset, attribute: str) -> float:
    """Information gain of splitting the dataset on one feature attribute."""
    if not dataset.instances:
        raise MiningError("EmptyDataset", "cannot compute gain on an empty dataset")
    if attribute not in {a.name for a in dataset.feature_attributes}:
        raise MiningError("UnknownAttribute", f"{attribute!r} is not a feature attribute of the dataset")
    return _partition_gain(dataset.instances, attribute, dataset.class_attribute)


@dataclass(frozen=True)
class Leaf:
    """label with its training support and majority fraction (confidence)."""

    label: Any
    support: int
    confidence: float


@dataclass(frozen=True)
class Split:
    """Multiway test on one attribute; one child per domain value."""

    attribute: str
    children: tuple[tuple[Any, "Node"], ...]
    majority_label: Any

    def child_for(self, value: Any) -> "Node | None":
        for v, child in self.children:
            if v == value:
                return child
        return None


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class DecisionTree:
    class_attribute: str
    class_values: tuple
    root: Node

    def depth(self) -> int:
        def d(node: Node) -> int:
            if isinstance(node, Leaf):
                return 0
            return 1 + max(d(child) for _, child in node.children)
        return d(self.root)

    def leaves(self) -> list[Leaf]:
        out: list[Leaf] = []

        def walk(node: Node) -> None:
            if isinstance(node, Leaf):
                out.append(node)
            else:
                for _, child in node.children:
                    walk(child)
        walk(self.root)
        return out

    def split_attributes(self) -> set[str]:
        used: set[str] = set()

        def walk(node: Node) -> None:
            if isinstance(node, Split):
                used.add(node.attribute)
                for _, child in node.children:
                    walk(child)
        walk(self.root)
        return used


def _majority(rows: Sequence[Mapping], class_attribute: str, class_values: tuple) -> tuple[Any, float]:
    counts = Counter(r[class_attribute] for r in rows)
    best = max(counts.values())
    label = next(v for v in class_values if counts.get(v) == best)
    return label, best / len(rows)


def induce_tree(dataset: Dataset, config: MiningConfig) -> DecisionTree:
    """Greedy recursive induction on the highest-gain attribute.

    A node becomes a majority leaf when it is pure, at max_depth, out of
    attributes, or holds fewer than min_leaf_instances rows. Gain ties go
    to the earlier dataset attribute; label ties to the earlier class
    domain value. Every domain value of a split attribute gets a child;
    values unseen in the partition get a support-0 leaf inheriting the
    node's majority label and fraction.
    """
    if not dataset.instances:
        raise MiningError("EmptyDataset", "cannot induce a tree from an empty dataset")
    class_attr = dataset.class_attribute
    class_values = dataset.class_def.values()

    def build(rows: Sequence[Mapping], remaining: tuple[AttributeDef, ...], depth: int) -> Node:
        label, fraction = _majority(rows, class_attr, class_values)
        if fraction == 1.0 or depth >= config.max_depth or not remaining or len(rows) < config.min_leaf_instances:
            return Leaf(label, len(rows), fraction)
        best_attr = None
        best_gain = -math.inf
        for attr in remaining:
            g = _partition_gain(rows, attr.name, class_attr)
            if g > best_gain + 1e-12:
                best_gain = g
                best_attr = attr
        assert best_attr is not None
        rest = tuple(a for a in remaining if a.name != best_attr.name)
        children = []
        for value in best_attr.values():
            part = [r for r in rows if r[best_attr.name] == value]
            if part:
                children.append((value, build(part, rest, depth + 1)))
            else:
                children.append((value, Leaf(label, 0, fraction)))
        return Split(best_attr.name, tuple(children), label)

    return DecisionTree(class_attr, class_values, build(dataset.instances, dataset.feature_attributes, 0))


def classify(tree: DecisionTree, instance: InformationState | Mapping) -> Any:
    """Follow branches to a leaf.

    A value with no branch (possible when discretization drifted between
    training and use) falls back to the node's majority label. A missing
    tested attribute is an error.
    """
    values = instance.values if isinstance(instance, InformationState) else instance
    node = tree.root
    while isinstance(node, Split):
        if node.attribute not in values:
            raise MiningError("MissingAttribute", f"instance lacks tested attribute {node.attribute!r}")
        child = node.child_for(values[node.attribute])
        if child is None:
            return node.majority_label
        node = child
    return node.label


def training_accuracy(tree: DecisionTree, dataset: Dataset) -> float:
    hits = sum(1 for inst in dataset.instances if classify(tree, inst) == inst[dataset.class_attribute])
    return hits / len(dataset.instances)


def _itemset_key(itemset: Iterable) -> tuple:
    return tuple(sorted(repr(item) for item in itemset))


def apriori(transactions: Sequence[Iterable], min_support: float) -> dict[frozenset, int]:
    """Level-wise frequent itemset mining with subset pruning.

    Returns every itemset whose support count / n_transactions is at least
    min_support, mapped to its absolute count, in a deterministic order.
    """
    if not 0.0 < min_support <= 1.0:
        raise MiningError("BadConfig", f"min_support must be in (0, 1], got {min_support!r}")
    tx = [frozenset(t) for t in transactions]
    n = len(tx)
    if n == 0:
        raise MiningError("EmptyDataset", "apriori needs at least one transaction")

    def frequent_enough(count: int) -> bool:
        return count / n >= min_support

    singles = Counter(item for t in tx for item in t)
    current = {
        frozenset([item]): singles[item]
        for item in sorted(singles, key=repr)
        if frequent_enough(singles[item])
    }
    result = dict(current)
    k = 2
    while current:
        prev = set(current)
        seeds = sorted(prev, key=_itemset_key)
        candidates = set()
        for i in range(len(seeds)):
            for j in range(i + 1, len(seeds)):
                union = seeds[i] | seeds[j]
                if len(union) == k:
                    candidates.add(union)
        pruned = [
            c for c in sorted(candidates, key=_itemset_key)
            if all(frozenset(sub) in prev for sub in combinations(c, k - 1))
        ]
        counts = {c: sum(1 for t in tx if c <= t) for c in pruned}
        current = {c: cnt for c, cnt in counts.items() if frequent_enough(cnt)}
        result.update(current)
        k += 1
    return result


@dataclass(frozen=True)
class AssociationRule:
    """antecedent => consequent with support and confidence over the
    originating transaction list."""

    antecedent: frozenset
    consequent: Any
    support: float
    confidence: float

    @property
    def text(self) -> str:
        left = " AND ".join(sorted(_item_text(i) for i in self.antecedent)) or "TRUE"
        return f"{left} => {_item_text(self.consequent)}"


def _item_text(item: Any) -> str:
    if isinstance(item, tuple) and len(item) == 2:
        return f"{item[0]}={format_atom(item[1])}"
    return str(item)


def format_atom(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def derive_rules(frequent: Mapping[frozenset, int], min_confidence: float, n_transactions: int) -> tuple[AssociationRule, ...]:
    """Single-consequent rules from frequent itemsets of size >= 2.

    confidence = support(itemset) / support(antecedent). Sorted by
    (confidence desc, support desc, rule text). Rules with an empty
    antecedent (from singleton itemsets) are not emitted: they restate
    the class prior, which the policy default action already covers.
    """
    if not 0.0 < min_confidence <= 1.0:
        raise MiningError("BadConfig", f"min_confidence must be in (0, 1], got {min_confidence!r}")
    if frequent and n_transactions < 1:
        raise ConsistencyError("BadCount", "n_transactions must be >= 1 when frequent sets exist")
    rules = []
    for itemset, count in frequent.items():
        if len(itemset) < 2:
            continue
        for consequent in sorted(itemset, key=repr):
            antecedent = itemset - {consequent}
            if antecedent not in frequent:
                raise ConsistencyError("MissingSubset", "frequent sets are not closed; not an apriori output")
            confidence = count / frequent[antecedent]
            if confidence >= min_confidence:
                rules.append(AssociationRule(antecedent, consequent, count / n_transactions, confidence))
    rules.sort(key=lambda r: (-r.confidence, -r.support, r.text))
    return tuple(rules)


@dataclass(frozen=True)
class CvScores:
    per_fold: tuple[float, ...]

    @property
    def mean(self) -> float:
        return sum(self.per_fold) / len(self.per_fold)


def stratified_folds(dataset: Dataset, k: int, seed: int) -> list[list[int]]:
    """Seeded stratified partition into k test folds of instance indices.

    Indices are grouped by class (domain order), shuffled per group, and
    dealt round-robin, so each fold's class counts are within one of any
    other fold's.
    """
    n = len(dataset.instances)
    if not isinstance(k, int) or k < 2:
        raise MiningError("BadConfig", f"fold count must be >= 2, got {k!r}")
    if k > n:
        raise MiningError("TooFewInstances", f"cannot make {k} folds from {n} instances")
    rng = Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for value in dataset.class_def.values():
        idxs = [i for i, inst in enumerate(dataset.instances) if inst[dataset.class_attribute] == value]
        rng.shuffle(idxs)
        for idx in idxs:
            folds[cursor % k].append(idx)
            cursor += 1
    return [sorted(f) for f in folds]


def cross_validate(dataset: Dataset, config: MiningConfig) -> CvScores:
    """Stratified k-fold accuracy of the tree inducer on the dataset."""
    n = len(dataset.instances)
    if config.cv_folds > n:
        raise MiningError("TooFewInstances", f"cv_folds {config.cv_folds} exceeds dataset size {n}")
    if len(set(dataset.labels())) < 2:
        raise MiningError("FewerThanTwoClasses", "cross-validation needs at least two classes")
    folds = stratified_folds(dataset, config.cv_folds, config.seed)
    per_fold = []
    for fold in folds:
        test = set(fold)
        train_rows = tuple(inst for i, inst in enumerate(dataset.instances) if i not in test)
        train = Dataset(dataset.attributes, dataset.class_attribute, train_rows, dataset.bin_edges)
        tree = induce_tree(train, config)
        hits = sum(1 for i in fold if classify(tree, dataset.instances[i]) == dataset.instances[i][dataset.class_attribute])
        per_fold.append(hits / len(fold))
    return CvScores(tuple(per_fold))


@dataclass(frozen=True)
class MetaModel:
    """A mined artifact plus its evaluation record.

    scope reflects the attributes the model actually uses: world when all
    are world-scoped, self when all are self-scoped, mixed otherwise.
    """

    kind: str
    label_attribute: str
    scope: str
    evaluation: dict
    tree: DecisionTree | None = None
    rules: tuple[AssociationRule, ...] = ()
    frequent: tuple[tuple[frozenset, int], ...] = ()
    n_transactions: int = 0


def scope_of(defs: Iterable[AttributeDef]) -> str:
    scopes = {d.scope for d in defs}
    if scopes == {"world"}:
        return "world"
    if scopes == {"self"}:
        return "self"
    return "mixed"


def dataset_transactions(dataset: Dataset) -> list[frozenset]:
    """One transaction per instance; items are (attribute, value) pairs
    including the class attribute."""
    names = [a.name for a in dataset.attributes]
    return [frozenset((name, inst[name]) for name in names) for inst in dataset.instances]


def _base_evaluation(dataset: Dataset, config: MiningConfig) -> dict:
    return {
        "training_size": len(dataset.instances),
        "config": mining_config_to_json(config),
        "cv_mean": None,
        "cv_per_fold": None,
    }


def fit_tree_model(dataset: Dataset, config: MiningConfig) -> MetaModel:
    """Induce a tree on the full dataset; attach CV scores when the
    dataset supports them (enough rows, at least two classes)."""
    tree = induce_tree(dataset, config)
    evaluation = _base_evaluation(dataset, config)
    evaluation["training_accuracy"] = training_accuracy(tree, dataset)
    if config.cv_folds <= len(dataset.instances) and len(set(dataset.labels())) >= 2:
        scores = cross_validate(dataset, config)
        evaluation["cv_mean"] = scores.mean
        evaluation["cv_per_fold"] = list(scores.per_fold)
    by_name = {a.name: a for a in dataset.attributes}
    used = [by_name[n] for n in sorted(tree.split_attributes())] + [dataset.class_def]
    return MetaModel(
        kind="tree",
        label_attribute=dataset.class_attribute,
        scope=scope_of(used),
        evaluation=evaluation,
        tree=tree,
    )


def fit_rules_model(dataset: Dataset, config: MiningConfig) -> MetaModel:
    """Mine frequent itemsets and derive association rules from the
    dataset's (attribute, value) transactions."""
    tx = dataset_transactions(dataset)
    frequent = apriori(tx, config.min_support)
    rules = derive_rules(frequent, config.min_confidence, len(tx))
    evaluation = _base_evaluation(dataset, config)
    evaluation["n_frequent"] = len(frequent)
    evaluation["n_rules"] = len(rules)
    by_name = {a.name: a for a in dataset.attributes}
    used_names = sorted(
        {item[0] for rule in rules for item in rule.antecedent}
        | {rule.consequent[0] for rule in rules}
    ) or [dataset.class_attribute]
    return MetaModel(
        kind="rules",
        label_attribute=dataset.class_attribute,
        scope=scope_of(by_name[n] for n in used_names),
        evaluation=evaluation,
        rules=rules,
        frequent=tuple((itemset, count) for itemset, count in frequent.items()),
        n_transactions=len(tx),
    )


def _node_to_json(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"type": "leaf", "label": node.label, "support": node.support, "confidence": node.confidence}
    return {
        "type": "split",
        "attribute": node.attribute,
        "majority_label": node.majority_label,
        "children": [[value, _node_to_json(child)] for value, child in node.children],
    }


def _node_from_json(obj: Any) -> Node:
    obj = expect_object(obj, "tree node")
    kind = expect_field(obj, "type", "tree node")
    if kind == "leaf":
        return Leaf(expect_field(obj, "label", "leaf"), expect_field(obj, "support", "leaf"),
                    expect_field(obj, "confidence", "leaf"))
    if kind != "split":
        raise InputFormatError("BadField", f"unknown tree node type {kind!r}")
    children = expect_field(obj, "children", "split")
    if not isinstance(children, list):
        raise InputFormatError("BadField", "split children must be a list")
    return Split(
        expect_field(obj, "attribute", "split"),
        tuple((pair[0], _node_from_json(pair[1])) for pair in children),
        expect_field(obj, "majority_label", "split"),
    )


def _item_to_json(item: Any) -> list:
    if not (isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], str)):
        raise ConsistencyError("BadItem", f"serializable items must be (attribute, value) pairs, got {item!r}")
    return [item[0], item[1]]


def _item_from_json(obj: Any) -> tuple:
    if not isinstance(obj, list) or len(obj) != 2:
        raise InputFormatError("BadField", f"item must be an [attribute, value] pair, got {obj!r}")
    return (obj[0], obj[1])


def _itemset_to_json(itemset: frozenset) -> list:
    return [_item_to_json(i) for i in sorted(itemset, key=repr)]


def model_to_json(model: MetaModel) -> dict:
    out: dict[str, Any] = {
        "kind": model.kind,
        "label_attribute": model.label_attribute,
        "scope": model.scope,
        "evaluation": model.evaluation,
    }
    if model.kind == "tree":
        assert model.tree is not None
        out["tree"] = {
            "class_attribute": model.tree.class_attribute,
            "class_values": list(model.tree.class_values),
            "root": _node_to_json(model.tree.root),
        }
    else:
        out["n_transactions"] = model.n_transactions
        out["frequent"] = [
            {"items": _itemset_to_json(itemset), "count": count}
            for itemset, count in sorted(model.frequent, key=lambda e: (len(e[0]), _itemset_key(e[0])))
        ]
        out["rules"] = [
            {
                "antecedent": _itemset_to_json(rule.antecedent),
                "consequent": _item_to_json(rule.consequent),
                "support": rule.support,
                "confidence": rule.confidence,
            }
            for rule in model.rules
        ]
    return out


def model_from_json(obj: Any) -> MetaModel:
    obj = expect_object(obj, "model")
    kind = expect_field(obj, "kind", "model")
    common = {
        "kind": kind,
        "label_attribute": expect_field(obj, "label_attribute", "model"),
        "scope": expect_field(obj, "scope", "model"),
        "evaluation": expect_object(expect_field(obj, "evaluation", "model"), "model evaluation"),
    }
    if kind == "tree":
        tree_json = expect_object(expect_field(obj, "tree", "model"), "tree")
        tree = DecisionTree(
            expect_field(tree_json, "class_attribute", "tree"),
            tuple(expect_field(tree_json, "class_values", "tree")),
            _node_from_json(expect_field(tree_json, "root", "tree")),
        )
        return MetaModel(tree=tree, **common)
    if kind != "rules":
        raise InputFormatError("BadField", f"unknown model kind {kind!r}")
    frequent = tuple(
        (frozenset(_item_from_json(i) for i in expect_field(entry, "items", "frequent set")),
         expect_field(entry, "count", "frequent set"))
        for entry in expect_field(obj, "frequent", "model")
    )
    rules = tuple(
        AssociationRule(
            frozenset(_item_from_json(i) for i in expect_field(r, "antecedent", "rule")),
            _item_from_json(expect_field(r, "consequent", "rule")),
            expect_field(r, "support", "rule"),
            expect_field(r, "confidence", "rule"),
        )
        for r in expect_field(obj, "rules", "model")
    )
    return MetaModel(rules=rules, frequent=frequent,
                     n_transactions=expect_field(obj, "n_transactions", "model"), **common)


def save_model(model: MetaModel, path: str | Path) -> None:
    write_json(path, model_to_json(model))


def load_model(path: str | Path) -> MetaModel:
    return model_from_json(read_json(path))
