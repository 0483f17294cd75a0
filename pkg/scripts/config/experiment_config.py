"""
Experiment Configuration Module
===============================

JSON run configuration: schema, overrides and resolution into frozen
settings. Every default is filled in during resolution so the echo written
next to the results is the complete configuration that produced them.
"""

import copy
import json
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from jsonschema import Draft202012Validator

from benchmarks.benchmark_library import get_benchmark, merged_params
from optimization.policy import BASIS_KINDS
from information.info_structure import RECALL_MODES
from utils.exceptions import ConfigInvalid

OUTPUT_FORMATS = ('csv', 'json', 'bin', 'png')
FAMILY_NAMES = ('linear-quadratic', 'discrete-affine')

PARAM_KEYS = (
    'A', 'A_prev', 'B', 'c', 'sigma', 'G', 'Q', 'R', 'S', 'F', 'x0', 'x0_cov', 'action_dims',
    'action_bound', 'action_boxes', 'observations', 'horizon', 'horizon_steps', 'drift_bound',
)

_POSITIVE_INT = {"type": "integer", "minimum": 1}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SIGNAL_SCHEMA = {
    "type": "object",
    "properties": {
        "from": {"type": "integer", "minimum": 0},
        "delay": _POSITIVE,
        "delay_time": _POSITIVE,
    },
    "required": ["from"],
    "additionalProperties": False,
}

AGENT_INFO_SCHEMA = {
    "type": "object",
    "properties": {
        "own": {"type": "boolean"},
        "recall": {"enum": list(RECALL_MODES)},
        "window": {"type": "integer", "minimum": 0},
        "signals": {"type": "array", "items": SIGNAL_SCHEMA},
        "project": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "additionalProperties": False,
}


def _family_requires(family: str, key: str) -> Dict:
    return {
        "if": {"properties": {"family": {"const": family}}, "required": ["family"]},
        "then": {"required": ["params"], "properties": {"params": {"required": [key]}}},
    }


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "problem": {
            "type": "object",
            "properties": {
                "family": {"enum": list(FAMILY_NAMES)},
                "benchmark": {"type": "string"},
                "name": {"type": "string"},
                "params": {
                    "type": "object",
                    "properties": {key: {} for key in PARAM_KEYS},
                    "additionalProperties": False,
                },
            },
            "oneOf": [{"required": ["family"]}, {"required": ["benchmark"]}],
            "allOf": [_family_requires("linear-quadratic", "horizon"),
                      _family_requires("discrete-affine", "horizon_steps")],
            "additionalProperties": False,
        },
        "info": {
            "type": "object",
            "properties": {"agents": {"type": "array", "items": AGENT_INFO_SCHEMA}},
            "additionalProperties": False,
        },
        "policy": {
            "type": "object",
            "properties": {
                "basis": {"enum": list(BASIS_KINDS)},
                "segments": _POSITIVE_INT,
                "init": {"oneOf": [{"type": "number"},
                                   {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]},
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "paths": _POSITIVE_INT,
                "seed": {"type": "integer", "minimum": 0},
                "steps": _POSITIVE_INT,
                "checkpoints": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "tol": _POSITIVE,
                "max_cycles": _POSITIVE_INT,
                "inner_iterations": _POSITIVE_INT,
                "step_size": _POSITIVE,
                "probe_step": _POSITIVE,
                "bsde_degree": {"type": "integer", "minimum": 1, "maximum": 4},
                "value_degree": {"type": "integer", "minimum": 1, "maximum": 4},
                "gradient_degree": {"type": "integer", "minimum": 1, "maximum": 4},
                "quadrature_order": _POSITIVE_INT,
                "mc_paths": _POSITIVE_INT,
                "dimension_cap": _POSITIVE_INT,
                "drift_bound": _POSITIVE,
                "probe_count": _POSITIVE_INT,
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": list(OUTPUT_FORMATS)}, "uniqueItems": True},
            },
            "additionalProperties": False,
        },
    },
    "required": ["problem"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class RunSettings:
    paths: int = 20_000
    seed: int = 0
    steps: int = 50
    checkpoints: Tuple[float, ...] = ()
    tol: float = 1e-3
    max_cycles: int = 20
    inner_iterations: int = 5
    step_size: float = 0.5
    probe_step: float = 0.5
    bsde_degree: int = 2
    value_degree: int = 2
    gradient_degree: int = 2
    quadrature_order: int = 10
    mc_paths: int = 100_000
    dimension_cap: int = 6
    drift_bound: Optional[float] = None
    probe_count: int = 256


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "teamopt_results"
    formats: Tuple[str, ...] = ('csv', 'json')


@dataclass(frozen=True)
class PolicySettings:
    basis: str = 'affine'
    segments: int = 1
    init: Any = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated and fully resolved run configuration"""
    family: str
    name: str
    params: Dict
    info: Dict
    policy: PolicySettings
    run: RunSettings
    output: OutputSettings
    benchmark: Optional[str] = None
    source: Optional[str] = field(default=None, compare=False)

    @property
    def is_discrete(self) -> bool:
        return self.family == 'discrete-affine'

    def resolved(self) -> Dict:
        """The echo of every setting, defaults included"""
        run = asdict(self.run)
        run['checkpoints'] = list(self.run.checkpoints)
        return {
            'problem': {'family': self.family, 'name': self.name, 'benchmark': self.benchmark,
                        'params': self.params},
            'info': self.info,
            'policy': asdict(self.policy),
            'run': run,
            'output': {'directory': self.output.directory, 'formats': list(self.output.formats)},
        }


def _error_path(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    if error.validator == 'required':
        missing = [key for key in error.validator_value if key not in error.instance]
        parts.extend(missing[:1])
    elif error.validator == 'additionalProperties':
        allowed = set(error.schema.get('properties', {}))
        extra = sorted(key for key in error.instance if key not in allowed)
        parts.extend(extra[:1])
    return '.'.join(parts) or '<root>'


def _deepest_errors(errors) -> List:
    expanded = []
    for error in errors:
        if error.context:
            expanded.extend(_deepest_errors(error.context))
        else:
            expanded.append(error)
    return expanded


def validate_document(document: Dict) -> None:
    """Raise ConfigInvalid naming the first offending key"""
    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: (len(list(e.absolute_path)), e.message))
    if not errors:
        return
    leaves = _deepest_errors(errors[:1]) or errors[:1]
    leaf = max(leaves, key=lambda e: len(list(e.absolute_path)))
    raise ConfigInvalid(_error_path(leaf), leaf.message)


def parse_override(text: str) -> Tuple[str, Any]:
    """'key.path=value'; the value is JSON when it parses, else a string"""
    if '=' not in text:
        raise ConfigInvalid(text, "override must look like key.path=value")
    key, raw = text.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(document: Dict, overrides: Sequence[str]) -> Dict:
    document = copy.deepcopy(document)
    for text in overrides or ():
        key, value = parse_override(text)
        target = document
        parts = key.split('.')
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigInvalid(key, f"'{part}' is not an object")
            target = node
        target[parts[-1]] = value
    return document


def resolve_config(document: Dict, source: Optional[str] = None) -> ExperimentConfig:
    validate_document(document)
    problem = document['problem']
    benchmark = problem.get('benchmark')
    if benchmark is not None:
        try:
            profile = get_benchmark(benchmark)
        except ValueError as exc:
            raise ConfigInvalid('problem.benchmark', str(exc)) from exc
        family = profile.family
        params = merged_params(benchmark, problem.get('params'))
        info = document.get('info', profile.info)
        policy = {**profile.policy, **document.get('policy', {})}
    else:
        family = problem['family']
        params = copy.deepcopy(problem['params'])
        info = document.get('info', {})
        policy = document.get('policy', {})

    run_block = dict(document.get('run', {}))
    if 'checkpoints' in run_block:
        run_block['checkpoints'] = tuple(float(t) for t in run_block['checkpoints'])
    run = RunSettings(**run_block)
    if run.drift_bound is not None:
        params.setdefault('drift_bound', run.drift_bound)
    output_block = dict(document.get('output', {}))
    if 'formats' in output_block:
        output_block['formats'] = tuple(output_block['formats'])

    return ExperimentConfig(
        family=family,
        name=problem.get('name', benchmark or family),
        params=params,
        info=copy.deepcopy(info),
        policy=PolicySettings(**policy),
        run=run,
        output=OutputSettings(**output_block),
        benchmark=benchmark,
        source=source,
    )


def load_config(path: Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read, patch, validate and resolve a JSON configuration file"""
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(str(path), f"not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(document, dict):
        raise ConfigInvalid('<root>', "configuration must be a JSON object")
    return resolve_config(apply_overrides(document, overrides), str(path))
