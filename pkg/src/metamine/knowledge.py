"""Attribute schemas and information states.

A Schema is the flat vocabulary everything else is expressed in: each
attribute has a kind (categorical, boolean, numeric), a scope saying
whether it describes the external world or the agent itself, and a value
domain. An InformationState is one snapshot of attribute values at an
epoch. Traces, reports, datasets, mined rules, and policies all refer
back to one schema, so validation lives here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import InputFormatError, SchemaError
from .jsonio import expect_field, expect_object, read_json, write_json

KINDS = ("categorical", "boolean", "numeric")
SCOPES = ("world", "self")


@dataclass(frozen=True)
class AttributeDef:
    """One named attribute: kind, scope, and value domain.

    domain is a tuple of distinct strings for categorical attributes,
    a (low, high) pair for numeric ones, and None for booleans.
    """

    name: str
    kind: str
    scope: str
    domain: tuple | None = None

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise SchemaError("BadAttributeName", f"attribute name must be a non-empty string, got {self.name!r}")
        if self.kind not in KINDS:
            raise SchemaError("BadKind", f"attribute {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.scope not in SCOPES:
            raise SchemaError("BadScope", f"attribute {self.name!r}: scope must be one of {SCOPES}, got {self.scope!r}")
        if self.kind == "categorical":
            if not isinstance(self.domain, tuple) or not self.domain:
                raise SchemaError("EmptyDomain", f"categorical attribute {self.name!r} needs a non-empty value tuple")
            if not all(isinstance(v, str) and v for v in self.domain):
                raise SchemaError("BadDomainValue", f"attribute {self.name!r}: categorical values must be non-empty strings")
            if len(set(self.domain)) != len(self.domain):
                raise SchemaError("DuplicateDomainValue", f"attribute {self.name!r} lists a domain value twice")
        elif self.kind == "numeric":
            ok = (
                isinstance(self.domain, tuple)
                and len(self.domain) == 2
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in self.domain)
            )
            if not ok:
                raise SchemaError("BadRange", f"numeric attribute {self.name!r} needs a (low, high) pair")
            if self.domain[0] > self.domain[1]:
                raise SchemaError("BadRange", f"numeric attribute {self.name!r}: low {self.domain[0]} exceeds high {self.domain[1]}")
        elif self.domain is not None:
            raise SchemaError("BadDomain", f"boolean attribute {self.name!r} must not declare a domain")

    @property
    def is_finite(self) -> bool:
        return self.kind in ("categorical", "boolean")

    def values(self) -> tuple:
        """All domain values, in declaration order. Finite kinds only."""
        if self.kind == "categorical":
            return self.domain
        if self.kind == "boolean":
            return (False, True)
        raise SchemaError("InfiniteDomain", f"numeric attribute {self.name!r} has no enumerable values")

    def contains(self, value: Any) -> bool:
        if self.kind == "categorical":
            return isinstance(value, str) and value in self.domain
        if self.kind == "boolean":
            return isinstance(value, bool)
        return isinstance(value, (int, float)) and not isinstance(value, bool) and self.domain[0] <= value <= self.domain[1]


@dataclass(frozen=True)
class Schema:
    """An ordered attribute vocabulary plus the designated class attribute.

    The class attribute is the one mined models predict and policies set;
    it must have a finite domain.
    """

    attributes: tuple[AttributeDef, ...]
    class_attribute: str
    _by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise SchemaError("DuplicateAttribute", f"attribute {dup!r} is defined twice")
        object.__setattr__(self, "_by_name", {a.name: a for a in self.attributes})
        if self.class_attribute not in self._by_name:
            raise SchemaError("UnknownClassAttribute", f"class attribute {self.class_attribute!r} is not in the schema")
        if not self._by_name[self.class_attribute].is_finite:
            raise SchemaError("InfiniteClassDomain", f"class attribute {self.class_attribute!r} must be categorical or boolean")

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def attribute(self, name: str) -> AttributeDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError("UnknownAttribute", f"schema has no attribute {name!r}") from None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def class_def(self) -> AttributeDef:
        return self._by_name[self.class_attribute]

    def scoped(self, scope: str) -> tuple[AttributeDef, ...]:
        return tuple(a for a in self.attributes if a.scope == scope)


def define_schema(attributes: Iterable[AttributeDef], class_attribute: str) -> Schema:
    return Schema(tuple(attributes), class_attribute)


@dataclass(frozen=True)
class InformationState:
    """Attribute values observed or held at one epoch."""

    values: Mapping[str, Any]
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))
        if not isinstance(self.epoch, int) or isinstance(self.epoch, bool) or self.epoch < 0:
            raise SchemaError("BadEpoch", f"epoch must be a non-negative integer, got {self.epoch!r}")

    def get(self, name: str, default: Any = None) -> Any:
        return self.values.get(name, default)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    attribute: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    issues: tuple[ValidationIssue, ...]


def validate_instance(schema: Schema, state: InformationState, require_complete: bool = False) -> ValidationResult:
    """Check a state against a schema.

    Flags unknown attributes and out-of-domain values. With
    require_complete it also flags omitted attributes, except the class
    attribute: unlabeled instances are legitimate, and whoever needs
    labels (the miners) checks for them itself.
    """
    issues: list[ValidationIssue] = []
    for name, value in state.values.items():
        if name not in schema:
            issues.append(ValidationIssue("UnknownAttribute", name, f"{name!r} is not in the schema"))
            continue
        if not schema.attribute(name).contains(value):
            issues.append(ValidationIssue("OutOfDomainValue", name, f"{value!r} is outside the domain of {name!r}"))
    if require_complete:
        for attr in schema.attributes:
            if attr.name not in state.values and attr.name != schema.class_attribute:
                issues.append(ValidationIssue("MissingRequiredAttribute", attr.name, f"{attr.name!r} has no value"))
    return ValidationResult(not issues, tuple(issues))


def is_reflective(schema: Schema, state: InformationState) -> bool:
    """True when the state carries any self-scoped attribute."""
    return any(name in schema and schema.attribute(name).scope == "self" for name in state.values)


def attribute_to_json(attr: AttributeDef) -> dict:
    if attr.kind == "categorical":
        domain: Any = list(attr.domain)
    elif attr.kind == "numeric":
        domain = {"low": attr.domain[0], "high": attr.domain[1]}
    else:
        domain = None
    return {"name": attr.name, "kind": attr.kind, "scope": attr.scope, "domain": domain}


def attribute_from_json(obj: Any) -> AttributeDef:
    obj = expect_object(obj, "attribute")
    name = expect_field(obj, "name", "attribute")
    kind = expect_field(obj, "kind", "attribute")
    scope = expect_field(obj, "scope", "attribute")
    raw = obj.get("domain")
    if kind == "categorical":
        if not isinstance(raw, list):
            raise InputFormatError("BadDomain", f"attribute {name!r}: categorical domain must be a list")
        domain: tuple | None = tuple(raw)
    elif kind == "numeric":
        raw = expect_object(raw, f"numeric domain of {name!r}")
        domain = (expect_field(raw, "low", "numeric domain"), expect_field(raw, "high", "numeric domain"))
    else:
        domain = None
    return AttributeDef(name=name, kind=kind, scope=scope, domain=domain)


def schema_to_json(schema: Schema) -> dict:
    return {
        "attributes": [attribute_to_json(a) for a in schema.attributes],
        "class_attribute": schema.class_attribute,
    }


def schema_from_json(obj: Any) -> Schema:
    obj = expect_object(obj, "schema")
    attrs = expect_field(obj, "attributes", "schema")
    if not isinstance(attrs, list):
        raise InputFormatError("BadField", "schema attributes must be a list")
    return define_schema(
        [attribute_from_json(a) for a in attrs],
        expect_field(obj, "class_attribute", "schema"),
    )


def state_to_json(state: InformationState) -> dict:
    return {"epoch": state.epoch, "values": dict(state.values)}


def state_from_json(obj: Any) -> InformationState:
    obj = expect_object(obj, "information state")
    return InformationState(values=expect_object(expect_field(obj, "values", "information state"), "state values"),
                            epoch=expect_field(obj, "epoch", "information state"))


def save_schema(schema: Schema, path: str | Path) -> None:
    write_json(path, schema_to_json(schema))


def load_schema(path: str | Path) -> Schema:
    return schema_from_json(read_json(path))
