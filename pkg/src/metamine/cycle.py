"""The gated mine-evaluate-deploy loop.

Each cycle runs training episodes under the incumbent policy (with
exploration so under-tried strategies still leave evidence), interprets
the traces two ways (outcome-labeled rows for performance monitoring,
success-filtered strategy-labeled rows for decision mining), mines
models, compiles the decision models into a candidate policy, and
deploys it only if the performance classifier cross-validates well
enough and the candidate does not lose to the incumbent on paired
held-out episodes. Rejected cycles leave the incumbent untouched,
byte for byte.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ConsistencyError, InputFormatError
from .introspection import MetadataProvider, collect_report, featurise
from .jsonio import expect_field, expect_object
from .mining import MetaModel, MiningConfig, fit_rules_model, fit_tree_model, mining_config_from_json, mining_config_to_json
from .policy import (
    Policy,
    RuleSet,
    compile_policy,
    filter_association_rules,
    initial_policy,
    integrate_policies,
    policy_id,
    tree_to_rules,
)
from .rover import EpisodeTrace, GridWorld, outcome_of, run_seeded, world_schema
from .seeds import derive_seed

PHASES = ("data_understanding", "data_preparation", "modelling", "operationalisation", "evaluation", "deployment")
DECISIONS = ("deployed", "rejected-accuracy", "rejected-heldout", "insufficient-data")
MODEL_KINDS = ("tree", "rules", "both")
INTEGRATION_MODES = ("override", "append", "replace")

TraceSink = Callable[[int, list[EpisodeTrace]], None]


@dataclass(frozen=True)
class AcceptanceGates:
    """Deployment thresholds: minimum CV accuracy of the performance
    classifier and minimum paired held-out success delta."""

    min_cv_accuracy: float
    min_heldout_delta: float

    def __post_init__(self):
        if not 0.0 <= self.min_cv_accuracy <= 1.0:
            raise ConsistencyError("BadThreshold", f"min_cv_accuracy must be in [0, 1], got {self.min_cv_accuracy!r}")
        if not -1.0 <= self.min_heldout_delta <= 1.0:
            raise ConsistencyError("BadThreshold", f"min_heldout_delta must be in [-1, 1], got {self.min_heldout_delta!r}")


@dataclass(frozen=True)
class CycleConfig:
    training_episodes: int
    evaluation_episodes: int
    mining: MiningConfig
    acceptance: AcceptanceGates
    master_seed: int
    model_kind: str = "both"
    integration_mode: str = "override"
    exploration: float = 0.3
    bins: int = 4

    def __post_init__(self):
        for name in ("training_episodes", "evaluation_episodes"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConsistencyError("BadConfig", f"{name} must be >= 1, got {v!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ConsistencyError("BadConfig", f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.integration_mode not in INTEGRATION_MODES:
            raise ConsistencyError("BadConfig", f"integration_mode must be one of {INTEGRATION_MODES}, got {self.integration_mode!r}")
        if not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool):
            raise ConsistencyError("BadConfig", f"master_seed must be an integer, got {self.master_seed!r}")
        if not 0.0 <= self.exploration <= 1.0:
            raise ConsistencyError("BadConfig", f"exploration must be in [0, 1], got {self.exploration!r}")
        if not isinstance(self.bins, int) or self.bins < 1:
            raise ConsistencyError("BadConfig", f"bins must be >= 1, got {self.bins!r}")


def cycle_config_to_json(config: CycleConfig) -> dict:
    return {
        "training_episodes": config.training_episodes,
        "evaluation_episodes": config.evaluation_episodes,
        "mining": mining_config_to_json(config.mining),
        "acceptance": {
            "min_cv_accuracy": config.acceptance.min_cv_accuracy,
            "min_heldout_delta": config.acceptance.min_heldout_delta,
        },
        "master_seed": config.master_seed,
        "model_kind": config.model_kind,
        "integration_mode": config.integration_mode,
        "exploration": config.exploration,
        "bins": config.bins,
    }


def cycle_config_from_json(obj: Any) -> CycleConfig:
    obj = expect_object(obj, "cycle config")
    known = set(cycle_config_to_json(CycleConfig(1, 1, MiningConfig(), AcceptanceGates(0.0, 0.0), 0)))
    unknown = set(obj) - known
    if unknown:
        raise InputFormatError("UnknownField", f"cycle config has unknown fields {sorted(unknown)}")
    acceptance = expect_object(expect_field(obj, "acceptance", "cycle config"), "acceptance gates")
    kwargs = {k: v for k, v in obj.items() if k not in ("mining", "acceptance")}
    return CycleConfig(
        mining=mining_config_from_json(expect_field(obj, "mining", "cycle config")),
        acceptance=AcceptanceGates(
            expect_field(acceptance, "min_cv_accuracy", "acceptance gates"),
            expect_field(acceptance, "min_heldout_delta", "acceptance gates"),
        ),
        **kwargs,
    )


@dataclass(frozen=True)
class PhaseRecord:
    phase: str
    status: str  # completed | skipped
    reason: str = ""
    metrics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvalResult:
    incumbent_rate: float
    candidate_rate: float
    delta: float
    incumbent_mean_reward: float
    candidate_mean_reward: float


@dataclass(frozen=True)
class CycleReport:
    index: int
    phases: tuple[PhaseRecord, ...]
    decision: str
    reason: str
    pre_policy_id: str
    post_policy_id: str
    dataset_sizes: dict
    models: tuple[dict, ...]
    cv_accuracy: float | None
    heldout: EvalResult | None
    candidate_policy_id: str | None

    def __post_init__(self):
        if self.decision not in DECISIONS:
            raise ConsistencyError("BadDecision", f"unknown gate decision {self.decision!r}")
        if tuple(p.phase for p in self.phases) != PHASES:
            raise ConsistencyError("BadPhases", "cycle report must record every phase exactly once, in order")
        if self.decision != "deployed" and self.post_policy_id != self.pre_policy_id:
            raise ConsistencyError("GateViolation", "non-deployed cycle must keep the incumbent policy")


def evaluate_candidate(world: GridWorld, incumbent: Policy, candidate: Policy, n: int, seed: int,
                       threads: int = 1) -> EvalResult:
    """Paired comparison: both policies run the same n episode seeds with
    no exploration; delta is candidate rate minus incumbent rate."""
    if not isinstance(n, int) or n < 1:
        raise ConsistencyError("BadCount", f"evaluation episode count must be >= 1, got {n!r}")
    seeds = [derive_seed(seed, i) for i in range(n)]
    inc = [outcome_of(t) for t in run_seeded(world, incumbent, seeds, threads=threads)]
    cand = [outcome_of(t) for t in run_seeded(world, candidate, seeds, threads=threads)]
    inc_rate = sum(o.reached_goal for o in inc) / n
    cand_rate = sum(o.reached_goal for o in cand) / n
    return EvalResult(
        incumbent_rate=inc_rate,
        candidate_rate=cand_rate,
        delta=cand_rate - inc_rate,
        incumbent_mean_reward=sum(o.total_reward for o in inc) / n,
        candidate_mean_reward=sum(o.total_reward for o in cand) / n,
    )


def _model_summary(role: str, model: MetaModel) -> dict:
    summary = {
        "role": role,
        "kind": model.kind,
        "label_attribute": model.label_attribute,
        "scope": model.scope,
        "evaluation": model.evaluation,
    }
    if model.kind == "rules":
        summary["n_rules"] = len(model.rules)
    return summary


def run_cycle(world: GridWorld, incumbent: Policy, config: CycleConfig, cycle_index: int,
              trace_sink: TraceSink | None = None, threads: int = 1) -> tuple[Policy, CycleReport]:
    """One augmented cycle; returns the next policy and a full report.

    Unmineable training data (no rows, no successful rows, a single
    outcome class, or fewer rows than CV folds) yields the
    insufficient-data outcome with the incumbent unchanged, not an error.
    """
    if not isinstance(cycle_index, int) or cycle_index < 1:
        raise ConsistencyError("BadIndex", f"cycle_index must be >= 1, got {cycle_index!r}")
    schema = world_schema(world)
    pre_id = policy_id(incumbent)
    phases: list[PhaseRecord] = []

    def report(decision: str, reason: str, post: Policy, *, sizes: dict, models: tuple[dict, ...],
               cv: float | None, heldout: EvalResult | None, candidate_id: str | None) -> tuple[Policy, CycleReport]:
        done = {p.phase for p in phases}
        for name in PHASES:
            if name not in done:
                phases.append(PhaseRecord(name, "skipped", reason=reason))
        ordered = tuple(sorted(phases, key=lambda p: PHASES.index(p.phase)))
        return post, CycleReport(
            index=cycle_index,
            phases=ordered,
            decision=decision,
            reason=reason,
            pre_policy_id=pre_id,
            post_policy_id=policy_id(post),
            dataset_sizes=sizes,
            models=models,
            cv_accuracy=cv,
            heldout=heldout,
            candidate_policy_id=candidate_id,
        )

    def insufficient(reason: str, sizes: dict) -> tuple[Policy, CycleReport]:
        return report("insufficient-data", reason, incumbent, sizes=sizes, models=(),
                      cv=None, heldout=None, candidate_id=None)

    # data understanding: run the system and look at what came back
    train_seeds = [derive_seed(config.master_seed, "cycle", cycle_index, "train", i)
                   for i in range(config.training_episodes)]
    traces = run_seeded(world, incumbent, train_seeds, explore=config.exploration, threads=threads)
    if trace_sink is not None:
        trace_sink(cycle_index, traces)
    total_rows = sum(len(t.records) for t in traces)
    goal_rate = sum(t.reached_goal for t in traces) / len(traces)
    phases.append(PhaseRecord("data_understanding", "completed", metrics={
        "episodes": config.training_episodes,
        "decision_records": total_rows,
        "goal_rate": goal_rate,
    }))
    if total_rows == 0:
        return insufficient("training produced no decision records", {"performance": 0, "decision": 0})

    # data preparation: two labeled views of the same traces
    world_attrs = tuple(a.name for a in schema.scoped("world"))
    selected = world_attrs + (schema.class_attribute,)
    perf_provider = MetadataProvider(selected, "outcome-as-class")
    decision_provider = MetadataProvider(selected, "strategy-as-class")
    perf_reports = [collect_report(t, perf_provider, schema) for t in traces]
    decision_reports = [collect_report(t, decision_provider, schema) for t in traces]
    decision_rows = sum(len(r.rows) for r in decision_reports)
    sizes = {"performance": total_rows, "decision": decision_rows}
    perf_dataset = featurise(perf_reports, config.bins)
    decision_dataset = featurise(decision_reports, config.bins) if decision_rows else None
    phases.append(PhaseRecord("data_preparation", "completed", metrics=dict(sizes)))
    if decision_rows == 0:
        return insufficient("no successful decisions to learn from", sizes)
    if len(set(perf_dataset.labels())) < 2:
        return insufficient("every step had the same outcome; nothing to classify", sizes)
    if len(perf_dataset) < config.mining.cv_folds:
        return insufficient("fewer rows than cross-validation folds", sizes)

    # modelling: performance classifier (gates) + decision models (deploy)
    perf_model = fit_tree_model(perf_dataset, config.mining)
    cv_mean = perf_model.evaluation["cv_mean"]
    decision_models: list[MetaModel] = []
    if config.model_kind in ("tree", "both"):
        decision_models.append(fit_tree_model(decision_dataset, config.mining))
    if config.model_kind in ("rules", "both"):
        decision_models.append(fit_rules_model(decision_dataset, config.mining))
    models = tuple([_model_summary("performance", perf_model)]
                   + [_model_summary("decision", m) for m in decision_models])
    phases.append(PhaseRecord("modelling", "completed", metrics={
        "models": len(models),
        "cv_accuracy": cv_mean,
    }))

    # operationalisation: compile the decision models into one candidate
    mined = []
    for model in decision_models:
        if model.kind == "tree":
            mined.extend(tree_to_rules(model.tree, schema.class_attribute).rules)
        else:
            mined.extend(filter_association_rules(model.rules, schema, config.mining.min_confidence).rules)
    ruleset = RuleSet.canonical(mined, schema.class_attribute)
    candidate = compile_policy(ruleset, incumbent.default_action, schema=schema, provenance={
        "cycle": cycle_index,
        "sources": [m.kind for m in decision_models],
    })
    candidate_id = policy_id(candidate)
    phases.append(PhaseRecord("operationalisation", "completed", metrics={
        "rules": len(ruleset.rules),
        "candidate_policy": candidate_id,
    }))

    # evaluation: CV gate first, held-out comparison second
    if cv_mean < config.acceptance.min_cv_accuracy:
        reason = (f"performance model cv accuracy {cv_mean:.4f} "
                  f"below threshold {config.acceptance.min_cv_accuracy}")
        phases.append(PhaseRecord("evaluation", "completed", metrics={
            "cv_accuracy": cv_mean,
            "cv_gate": "fail",
            "heldout_skipped": reason,
        }))
        return report("rejected-accuracy", reason, incumbent, sizes=sizes, models=models,
                      cv=cv_mean, heldout=None, candidate_id=candidate_id)
    heldout = evaluate_candidate(world, incumbent, candidate, config.evaluation_episodes,
                                 derive_seed(config.master_seed, "cycle", cycle_index, "eval"), threads=threads)
    phases.append(PhaseRecord("evaluation", "completed", metrics={
        "cv_accuracy": cv_mean,
        "cv_gate": "pass",
        "incumbent_rate": heldout.incumbent_rate,
        "candidate_rate": heldout.candidate_rate,
        "delta": heldout.delta,
    }))
    if heldout.delta < config.acceptance.min_heldout_delta:
        reason = (f"held-out delta {heldout.delta:+.4f} below threshold "
                  f"{config.acceptance.min_heldout_delta}")
        return report("rejected-heldout", reason, incumbent, sizes=sizes, models=models,
                      cv=cv_mean, heldout=heldout, candidate_id=candidate_id)

    # deployment: integrate and hand the new policy to the next cycle
    deployed = integrate_policies(incumbent, candidate, config.integration_mode)
    phases.append(PhaseRecord("deployment", "completed", metrics={
        "integration_mode": config.integration_mode,
        "policy": policy_id(deployed),
    }))
    return report("deployed", "both gates passed", deployed, sizes=sizes, models=models,
                  cv=cv_mean, heldout=heldout, candidate_id=candidate_id)


@dataclass(frozen=True)
class ExperimentReport:
    config: CycleConfig
    baseline: dict
    cycles: tuple[CycleReport, ...]
    final_policy: Policy

    def __post_init__(self):
        if tuple(c.index for c in self.cycles) != tuple(range(1, len(self.cycles) + 1)):
            raise ConsistencyError("BadIndex", "cycle indices must be contiguous from 1")


def run_experiment(world: GridWorld, config: CycleConfig, n_cycles: int,
                   trace_sink: TraceSink | None = None, threads: int = 1) -> ExperimentReport:
    """Chain n_cycles cycles from the default policy, recording a fixed
    baseline measurement and every cycle report along the way."""
    if not isinstance(n_cycles, int) or n_cycles < 0:
        raise ConsistencyError("BadCount", f"n_cycles must be >= 0, got {n_cycles!r}")
    schema = world_schema(world)
    policy = initial_policy(schema)
    base_seeds = [derive_seed(config.master_seed, "baseline", i) for i in range(config.evaluation_episodes)]
    base = [outcome_of(t) for t in run_seeded(world, policy, base_seeds, threads=threads)]
    baseline = {
        "policy": policy_id(policy),
        "episodes": config.evaluation_episodes,
        "success_rate": sum(o.reached_goal for o in base) / len(base),
        "mean_reward": sum(o.total_reward for o in base) / len(base),
    }
    reports = []
    for index in range(1, n_cycles + 1):
        policy, report = run_cycle(world, policy, config, index, trace_sink=trace_sink, threads=threads)
        reports.append(report)
    return ExperimentReport(config, baseline, tuple(reports), policy)


def _phase_to_json(phase: PhaseRecord) -> dict:
    return {"phase": phase.phase, "status": phase.status, "reason": phase.reason, "metrics": phase.metrics}


def _eval_to_json(result: EvalResult | None) -> dict | None:
    if result is None:
        return None
    return {
        "incumbent_rate": result.incumbent_rate,
        "candidate_rate": result.candidate_rate,
        "delta": result.delta,
        "incumbent_mean_reward": result.incumbent_mean_reward,
        "candidate_mean_reward": result.candidate_mean_reward,
    }


def cycle_report_to_json(report: CycleReport) -> dict:
    return {
        "index": report.index,
        "phases": [_phase_to_json(p) for p in report.phases],
        "decision": report.decision,
        "reason": report.reason,
        "pre_policy_id": report.pre_policy_id,
        "post_policy_id": report.post_policy_id,
        "dataset_sizes": report.dataset_sizes,
        "models": list(report.models),
        "cv_accuracy": report.cv_accuracy,
        "heldout": _eval_to_json(report.heldout),
        "candidate_policy_id": report.candidate_policy_id,
    }


def experiment_to_json(experiment: ExperimentReport) -> dict:
    from .policy import policy_to_json

    return {
        "config": cycle_config_to_json(experiment.config),
        "baseline": experiment.baseline,
        "cycles": [cycle_report_to_json(c) for c in experiment.cycles],
        "final_policy": policy_to_json(experiment.final_policy),
        "final_policy_id": policy_id(experiment.final_policy),
    }


CSV_COLUMNS = ("index", "dataset_size", "cv_accuracy", "incumbent_rate", "candidate_rate", "delta", "decision")


def cycles_csv_from_json(experiment_json: dict) -> str:
    """Flat per-cycle summary (one row per cycle) from a serialized
    experiment; empty cells where a phase never ran."""
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for cycle in expect_field(experiment_json, "cycles", "experiment"):
        heldout = cycle.get("heldout") or {}
        cells = [
            str(cycle["index"]),
            str(cycle["dataset_sizes"].get("performance", "")),
            _csv_number(cycle.get("cv_accuracy")),
            _csv_number(heldout.get("incumbent_rate")),
            _csv_number(heldout.get("candidate_rate")),
            _csv_number(heldout.get("delta")),
            cycle["decision"],
        ]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def _csv_number(value: Any) -> str:
    return "" if value is None else repr(float(value))


def cycles_csv(experiment: ExperimentReport) -> str:
    return cycles_csv_from_json(experiment_to_json(experiment))
