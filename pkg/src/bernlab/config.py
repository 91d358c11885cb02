"""Experiment configuration: JSON loading, schema validation, resource caps.

A batch config is a JSON object with a mandatory master ``seed`` and a list
of ``experiments``.  Every random quantity in the batch is derived from the
master seed by a fixed splitting rule:

    experiment i       derive_seed(seed, f"experiment-{i}")
    role within it     derive_seed(sub_seed, "<role>") or
                       derive_seed(sub_seed, f"<role>-{j}") for the j-th
                       unit of a parameter list

where ``i`` is the experiment's position in the config file.  The rule is
position-based on purpose: running a single experiment through its named
subcommand reproduces exactly the numbers it would produce inside a full
``report`` run of the same file.

Validation happens in three stages with distinct failure modes.  Shape and
type errors (unknown kinds, malformed cylinders, missing required keys)
violate the shipped JSON schema and raise ConfigError.  Structurally valid
configs whose radii, seed counts, or walk lengths exceed the resource
bounds below raise BallCapError so the caller can distinguish "bad config"
from "config too big for this machine".  Family construction errors
(parameters rejected by the family itself, group/family mismatches) also
raise ConfigError.
"""

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

import jsonschema

from .errors import BallCapError, ConfigError
from .families import MarginalFamily, make_family
from .groups import make_group

EXPERIMENT_KINDS = (
    "kakutani",
    "conservativity",
    "clt",
    "build-phi",
    "ratio-set",
    "maharam-check",
    "l2-tail",
)

# Hard caps on configurable sizes.  They bound memory and wall clock, not
# correctness; raise them deliberately if a larger machine warrants it.
RESOURCE_BOUNDS = {
    "radius": 10_000_000,
    "seeds": 1_000_000,
    "samples": 10_000_000,
    "walk_length": 1 << 22,
    "list_items": 64,
    "cylinder_sites": 64,
}

_RADIUS_KEYS = ("r_inner", "r_group", "r_trunc", "f_excl_radius")
_LIST_KEYS = ("radii", "g_values", "c_values", "t_values", "grid",
              "n_values", "intervals", "window")

REQUIRED_PARAMS = {
    "kakutani": ("radii",),
    "l2-tail": ("radii",),
    "conservativity": ("cylinder", "eps", "r_group", "seeds"),
    "clt": ("n_values", "sample_count"),
    "build-phi": ("t_values", "eps"),
    "ratio-set": ("cylinder", "grid", "eps", "r_group", "seeds"),
    "maharam-check": ("g_values", "cylinder", "intervals"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One validated experiment: kind, optional group/family specs, params."""

    index: int
    kind: str
    label: str
    family: dict
    group: Optional[dict] = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BatchConfig:
    """A master seed plus the experiments derived from it."""

    seed: int
    experiments: tuple
    raw: dict

    def with_seed(self, seed: int) -> "BatchConfig":
        raw = dict(self.raw)
        raw["seed"] = int(seed)
        return replace(self, seed=int(seed), raw=raw)


def _schema():
    text = resources.files("bernlab").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def validate_config(raw: dict) -> BatchConfig:
    """Validate a parsed config object and freeze it into a BatchConfig."""
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {path}: {err.message}")

    experiments = []
    labels = set()
    for i, spec in enumerate(raw["experiments"]):
        kind = spec["kind"]
        params = dict(spec.get("params", {}))
        missing = [k for k in REQUIRED_PARAMS[kind] if k not in params]
        if missing:
            raise ConfigError(
                f"experiment {i} ({kind}): missing required params {missing}"
            )
        _check_resource_bounds(i, kind, params)
        label = spec.get("label", f"{kind}-{i:02d}")
        if label in labels:
            raise ConfigError(f"duplicate experiment label {label!r}")
        labels.add(label)
        experiments.append(ExperimentConfig(
            index=i, kind=kind, label=label, family=dict(spec["family"]),
            group=dict(spec["group"]) if "group" in spec else None,
            params=params,
        ))
    return BatchConfig(int(raw["seed"]), tuple(experiments), raw)


def load_config(path) -> BatchConfig:
    """Read and validate a config file."""
    try:
        with open(path, "rb") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return validate_config(raw)


def _check_resource_bounds(index: int, kind: str, params: dict) -> None:
    def too_big(key, value, cap_name):
        cap = RESOURCE_BOUNDS[cap_name]
        if value > cap:
            raise BallCapError(
                f"experiment {index} ({kind}): {key}={value} exceeds the "
                f"{cap_name} bound {cap}"
            )

    for key in _LIST_KEYS:
        if key in params:
            too_big(key, len(params[key]), "list_items")
    if "cylinder" in params:
        too_big("cylinder", len(params["cylinder"]), "cylinder_sites")
    for key in _RADIUS_KEYS:
        if key in params:
            too_big(key, params[key], "radius")
    for r in params.get("radii", ()):
        too_big("radii", r, "radius")
    if "seeds" in params:
        too_big("seeds", params["seeds"], "seeds")
    for key in ("sample_count", "scan_seeds"):
        if key in params:
            too_big(key, params[key], "samples")
    if "budget" in params:
        too_big("budget", params["budget"], "walk_length")
    for n in params.get("n_values", ()):
        too_big("n_values", n, "walk_length")


def build_family(exp: ExperimentConfig) -> MarginalFamily:
    """Construct the experiment's marginal family, group spec included.

    Any rejection by the constructors (unknown kinds, out-of-range
    probabilities, a family bound to a different group model) surfaces as
    ConfigError: the config asked for something the catalog cannot build.
    """
    spec = dict(exp.family)
    kind = spec.pop("kind")
    if "support" in spec:
        spec["support"] = {int(k): float(v) for k, v in spec["support"].items()}
    if exp.group is not None:
        gspec = dict(exp.group)
        gkind = gspec.pop("kind")
        try:
            spec["model"] = make_group(gkind, **gspec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"experiment {exp.index}: {exc}") from exc
    try:
        return make_family(kind, **spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"experiment {exp.index} ({kind}): {exc}") from exc
