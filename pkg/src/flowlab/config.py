"""Loading and strict validation of experiment config files."""
from __future__ import annotations

import difflib
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .flows import FlowConfig
from .models import Dataset, ModelSpec, dataset_from_dict, load_dataset


class ConfigError(ValueError):
    """Invalid config; the message names the offending field."""


def schema() -> dict:
    return json.loads(resources.files("flowlab").joinpath("config.schema.json").read_text())


def _where(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _validate(instance, sch, prefix: str = "") -> None:
    validator = jsonschema.Draft202012Validator(sch)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = _where(err)
        if prefix:
            where = prefix if where == "<root>" else f"{prefix}/{where}"
        raise ConfigError(f"config field '{where}': {err.message}")


def validate(cfg: dict, base_dir=None) -> dict:
    """Check ``cfg`` against the schema and its experiment's requirements; return it unchanged."""
    from .experiments import EXPERIMENTS

    _validate(cfg, schema())
    name = cfg["experiment"]
    if name not in EXPERIMENTS:
        close = difflib.get_close_matches(name, list(EXPERIMENTS), n=1)
        hint = f"; did you mean '{close[0]}'?" if close else ""
        raise ConfigError(f"config field 'experiment': unknown experiment '{name}'{hint}")
    exp = EXPERIMENTS[name]
    for key in exp.requires:
        if key == "model_or_cases":
            if ("model" in cfg) == ("cases" in cfg):
                raise ConfigError(f"experiment '{name}' needs exactly one of 'model' (with 'dataset') or 'cases'")
            if "model" in cfg and "dataset" not in cfg:
                raise ConfigError(f"config field 'dataset': required by experiment '{name}'")
        elif key not in cfg:
            raise ConfigError(f"config field '{key}': required by experiment '{name}'")
    extra = set(cfg) - set(exp.requires) - {"experiment", "seed", "output_dir", "params"}
    if "model_or_cases" in exp.requires:
        extra -= {"model", "dataset", "cases"}
    if extra:
        raise ConfigError(f"config field '{sorted(extra)[0]}': not used by experiment '{name}'")
    _validate(cfg["params"], exp.params_schema, prefix="params")
    # build the domain objects once so semantic errors surface at load time
    for case in cases(cfg, base_dir):
        case["model"].param_count
    if "flow" in cfg:
        try:
            flow_config(cfg)
        except ValueError as e:
            raise ConfigError(f"config field 'flow': {e}") from None
    return cfg


def load(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate(cfg, base_dir=path.parent)


def model_spec(d: dict) -> ModelSpec:
    return ModelSpec(input_dim=d["input_dim"], output_dim=d["output_dim"],
                     hidden_widths=tuple(d["hidden_widths"]), activation=d["activation"],
                     beta=d.get("beta", 10.0))


def dataset(d: dict, base_dir=None) -> Dataset:
    if "path" in d:
        p = Path(d["path"])
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        return load_dataset(p)
    return dataset_from_dict(d)


def cases(cfg: dict, base_dir=None) -> list:
    """``[{"name", "model": ModelSpec, "data": Dataset}]`` from either ``model``/``dataset`` or ``cases``."""
    raw = cfg.get("cases")
    if raw is None:
        if "model" not in cfg:
            return []
        raw = [{"name": "main", "model": cfg["model"], "dataset": cfg["dataset"]}]
    out = []
    for i, c in enumerate(raw):
        where = "model" if "cases" not in cfg else f"cases/{i}"
        try:
            spec = model_spec(c["model"])
            data = dataset(c["dataset"], base_dir)
        except (ValueError, OSError, KeyError) as e:
            raise ConfigError(f"config field '{where}': {e}") from None
        if data.input_dim != spec.input_dim or data.output_dim != spec.output_dim:
            raise ConfigError(f"config field '{where}/dataset': shapes (M={data.input_dim}, Q={data.output_dim}) "
                              f"do not match model (M={spec.input_dim}, Q={spec.output_dim})")
        out.append({"name": c["name"], "model": spec, "data": data})
    return out


def flow_config(cfg: dict) -> FlowConfig:
    return FlowConfig(**cfg["flow"])
