"""Compiling mined models into executable control policies.

A Rule is a conjunction of (attribute = value) literals choosing one
value for the control attribute. A RuleSet is an ordered rule list; a
Policy adds a default action, making decisions total. Mined rulesets are
born in canonical priority order (confidence desc, specificity desc,
rule text asc); integration concatenates rule blocks whose relative
order encodes precedence, so integrated sets keep their block order and
decide() simply takes the first match.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ConsistencyError, InputFormatError, PolicyError
from .jsonio import content_id, expect_field, expect_object, read_json, write_json
from .knowledge import InformationState, Schema
from .mining import AssociationRule, DecisionTree, Leaf, format_atom

ORIGINS = ("tree", "association", "default", "manual")


@dataclass(frozen=True)
class Rule:
    """conditions => action, with the evidence strength that mined it."""

    conditions: tuple[tuple[str, Any], ...]
    action: Any
    confidence: float
    origin: str

    def __post_init__(self):
        conditions = tuple(sorted(self.conditions, key=lambda c: c[0]))
        object.__setattr__(self, "conditions", conditions)
        attrs = [a for a, _ in conditions]
        if len(set(attrs)) != len(attrs):
            raise PolicyError("DuplicateCondition", "a rule may test each attribute at most once")
        if not isinstance(self.confidence, (int, float)) or not 0.0 < self.confidence <= 1.0:
            raise PolicyError("BadConfidence", f"confidence must be in (0, 1], got {self.confidence!r}")
        if self.origin not in ORIGINS:
            raise PolicyError("BadOrigin", f"origin must be one of {ORIGINS}, got {self.origin!r}")

    @property
    def specificity(self) -> int:
        return len(self.conditions)

    @property
    def text(self) -> str:
        left = " AND ".join(f"{a}={format_atom(v)}" for a, v in self.conditions) or "TRUE"
        return f"{left} => {format_atom(self.action)}"

    def matches(self, values: Mapping[str, Any]) -> bool:
        return all(a in values and values[a] == v for a, v in self.conditions)


def rule_priority(rule: Rule) -> tuple:
    return (-rule.confidence, -rule.specificity, rule.text)


def _dedup(rules: Iterable[Rule]) -> list[Rule]:
    seen = set()
    out = []
    for rule in rules:
        key = (rule.conditions, rule.action)
        if key in seen:
            continue
        seen.add(key)
        out.append(rule)
    return out


@dataclass(frozen=True)
class RuleSet:
    """Ordered rules over one control attribute; earlier rules win.

    Construct with RuleSet.canonical for mined rules; direct construction
    is for explicitly ordered lists (policy integration, file loading).
    """

    rules: tuple[Rule, ...]
    control_attribute: str

    def __post_init__(self):
        if not self.control_attribute or not isinstance(self.control_attribute, str):
            raise PolicyError("BadControlAttribute", "control attribute must be a non-empty string")
        keys = set()
        for rule in self.rules:
            if any(a == self.control_attribute for a, _ in rule.conditions):
                raise PolicyError("SelfReference", f"rule conditions may not test the control attribute: {rule.text}")
            key = (rule.conditions, rule.action)
            if key in keys:
                raise PolicyError("DuplicateRule", f"duplicate rule: {rule.text}")
            keys.add(key)

    @classmethod
    def canonical(cls, rules: Iterable[Rule], control_attribute: str) -> "RuleSet":
        ordered = sorted(rules, key=rule_priority)
        return cls(tuple(_dedup(ordered)), control_attribute)

    def is_canonical(self) -> bool:
        keys = [rule_priority(r) for r in self.rules]
        return all(keys[i] <= keys[i + 1] for i in range(len(keys) - 1))


@dataclass(frozen=True)
class Policy:
    """Total decision function: first matching rule, else the default."""

    ruleset: RuleSet
    default_action: Any
    provenance: dict = field(default_factory=dict)

    @property
    def control_attribute(self) -> str:
        return self.ruleset.control_attribute

    def decide(self, state: InformationState | Mapping) -> Any:
        values = state.values if isinstance(state, InformationState) else state
        for rule in self.ruleset.rules:
            if rule.matches(values):
                return rule.action
        return self.default_action


def tree_to_rules(tree: DecisionTree, control_attribute: str | None = None) -> RuleSet:
    """One rule per leaf: path literals => leaf label, confidence = the
    leaf's majority fraction. The tree must classify the control attribute."""
    control = control_attribute if control_attribute is not None else tree.class_attribute
    if tree.class_attribute != control:
        raise PolicyError("NotControlAttribute",
                          f"tree classifies {tree.class_attribute!r}, not the control attribute {control!r}")
    rules: list[Rule] = []

    def walk(node, path: tuple[tuple[str, Any], ...]) -> None:
        if isinstance(node, Leaf):
            rules.append(Rule(path, node.label, node.confidence, "tree"))
            return
        for value, child in node.children:
            walk(child, path + ((node.attribute, value),))

    walk(tree.root, ())
    return RuleSet.canonical(rules, control)


def rules_to_ruleset(rules: Iterable[AssociationRule], control_attribute: str, min_confidence: float = 0.0) -> RuleSet:
    """Keep association rules that decide the control attribute with at
    least min_confidence; convert antecedents to conditions.

    Rules over (attribute, value) items only. Empty antecedents and rules
    whose consequent sets anything else are dropped.
    """
    if not 0.0 <= min_confidence <= 1.0:
        raise PolicyError("BadConfidence", f"min_confidence must be in [0, 1], got {min_confidence!r}")
    kept = []
    for rule in rules:
        consequent = rule.consequent
        if not (isinstance(consequent, tuple) and len(consequent) == 2):
            raise ConsistencyError("BadItem", f"rule items must be (attribute, value) pairs, got {consequent!r}")
        if consequent[0] != control_attribute or rule.confidence < min_confidence:
            continue
        if not rule.antecedent:
            continue
        conditions = []
        for item in rule.antecedent:
            if not (isinstance(item, tuple) and len(item) == 2):
                raise ConsistencyError("BadItem", f"rule items must be (attribute, value) pairs, got {item!r}")
            conditions.append((item[0], item[1]))
        if any(a == control_attribute for a, _ in conditions):
            continue
        kept.append(Rule(tuple(conditions), consequent[1], rule.confidence, "association"))
    return RuleSet.canonical(kept, control_attribute)


def filter_association_rules(rules: Iterable[AssociationRule], schema: Schema, min_confidence: float) -> RuleSet:
    """Decision-oriented filter: only rules whose consequent sets the
    schema's class attribute survive, at or above min_confidence."""
    return rules_to_ruleset(rules, schema.class_attribute, min_confidence)


def compile_policy(ruleset: RuleSet, default_action: Any, schema: Schema | None = None,
                   provenance: dict | None = None) -> Policy:
    """Wrap a canonically ordered ruleset into a total policy.

    With a schema, also checks that the control attribute is the schema's
    class attribute and that the default, every action, and every
    condition value lie in their domains.
    """
    if not ruleset.is_canonical():
        raise PolicyError("RuleOrder", "ruleset is not in canonical priority order")
    if schema is not None:
        if ruleset.control_attribute != schema.class_attribute:
            raise ConsistencyError("ControlMismatch",
                                   f"ruleset controls {ruleset.control_attribute!r}, schema designates {schema.class_attribute!r}")
        domain = schema.class_def
        if not domain.contains(default_action):
            raise PolicyError("BadDefault", f"default action {default_action!r} not in the control domain")
        for rule in ruleset.rules:
            if not domain.contains(rule.action):
                raise PolicyError("BadAction", f"action {rule.action!r} not in the control domain: {rule.text}")
            for attr, value in rule.conditions:
                if not schema.attribute(attr).contains(value):
                    raise ConsistencyError("OutOfDomainValue", f"condition {attr}={value!r} not in domain: {rule.text}")
    return Policy(ruleset, default_action, dict(provenance) if provenance else {})


def integrate_policies(incumbent: Policy, candidate: Policy, mode: str) -> Policy:
    """Combine candidate with incumbent.

    replace: candidate as-is. override: candidate rules first. append:
    incumbent rules first. Blocks keep internal order; duplicate
    (conditions, action) pairs keep the higher-ranked copy; the incumbent
    default action is retained in both non-replace modes.
    """
    if mode not in ("override", "append", "replace"):
        raise PolicyError("BadMode", f"mode must be override, append, or replace, got {mode!r}")
    if incumbent.control_attribute != candidate.control_attribute:
        raise ConsistencyError("ControlMismatch",
                               f"policies control different attributes: {incumbent.control_attribute!r} vs {candidate.control_attribute!r}")
    if mode == "replace":
        return candidate
    if mode == "override":
        blocks = candidate.ruleset.rules + incumbent.ruleset.rules
    else:
        blocks = incumbent.ruleset.rules + candidate.ruleset.rules
    ruleset = RuleSet(tuple(_dedup(blocks)), incumbent.control_attribute)
    provenance = {
        "mode": mode,
        "cycle": candidate.provenance.get("cycle"),
        "sources": candidate.provenance.get("sources", []) + incumbent.provenance.get("sources", []),
    }
    return Policy(ruleset, incumbent.default_action, provenance)


def initial_policy(schema: Schema) -> Policy:
    """The naive starting point: one unconditional rule choosing the
    first value of the control domain."""
    first = schema.class_def.values()[0]
    rule = Rule((), first, 1.0, "default")
    return Policy(RuleSet((rule,), schema.class_attribute), first, {"cycle": 0, "sources": ["default"]})


def rule_to_json(rule: Rule) -> dict:
    return {
        "conditions": [[a, v] for a, v in rule.conditions],
        "action": rule.action,
        "confidence": rule.confidence,
        "origin": rule.origin,
    }


def rule_from_json(obj: Any) -> Rule:
    obj = expect_object(obj, "rule")
    conditions = expect_field(obj, "conditions", "rule")
    if not isinstance(conditions, list) or not all(isinstance(c, list) and len(c) == 2 for c in conditions):
        raise InputFormatError("BadField", "rule conditions must be [attribute, value] pairs")
    return Rule(
        tuple((c[0], c[1]) for c in conditions),
        expect_field(obj, "action", "rule"),
        expect_field(obj, "confidence", "rule"),
        expect_field(obj, "origin", "rule"),
    )


def policy_to_json(policy: Policy) -> dict:
    return {
        "control_attribute": policy.control_attribute,
        "default_action": policy.default_action,
        "provenance": policy.provenance,
        "rules": [rule_to_json(r) for r in policy.ruleset.rules],
    }


def policy_from_json(obj: Any) -> Policy:
    obj = expect_object(obj, "policy")
    rules_json = expect_field(obj, "rules", "policy")
    if not isinstance(rules_json, list):
        raise InputFormatError("BadField", "policy rules must be a list")
    ruleset = RuleSet(tuple(rule_from_json(r) for r in rules_json), expect_field(obj, "control_attribute", "policy"))
    return Policy(ruleset, expect_field(obj, "default_action", "policy"),
                  dict(expect_object(obj.get("provenance", {}), "policy provenance")))


def policy_id(policy: Policy) -> str:
    """Short content hash of the canonical serialization."""
    return content_id(policy_to_json(policy))


def save_policy(policy: Policy, path: str | Path) -> None:
    write_json(path, policy_to_json(policy))


def load_policy(path: str | Path) -> Policy:
    return policy_from_json(read_json(path))
