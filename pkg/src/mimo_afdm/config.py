"""YAML experiment configs: schema validation and expansion into ExperimentConfig objects.

A config holds base settings plus optional ``experiments`` (named overrides,
one curve each) and ``sweep`` (lists whose Cartesian product multiplies every
experiment).  The schema ships as ``config_schema.json`` next to this module.
"""

from __future__ import annotations

import copy
from dataclasses import asdict
import itertools
import json
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .channel import ProfileSpec
from .detect import DetectorConfig
from .harness import ExperimentConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def validate(raw: dict) -> dict:
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    return raw


def load_config(path) -> dict:
    """Read and validate a YAML config file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate(raw)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


_SWEEP_TAGS = {"zeta_multiplier": "zeta", "snrp_db": "snrp", "k_nu": "knu"}


def _expand(raw: dict) -> list[tuple[str, dict]]:
    base = {k: v for k, v in raw.items() if k not in ("experiments", "sweep")}
    variants = [(raw["name"], base)]
    if raw.get("experiments"):
        variants = [(f"{raw['name']}_{key}", _merge(base, over)) for key, over in raw["experiments"].items()]
    sweep = raw.get("sweep") or {}
    if not sweep:
        return variants
    keys = list(sweep)
    out = []
    for name, body in variants:
        for values in itertools.product(*(sweep[k] for k in keys)):
            item = copy.deepcopy(body)
            tag = name
            for k, v in zip(keys, values):
                if k == "k_nu":
                    item.setdefault("params", {})["k_nu"] = v
                else:
                    item[k] = v
                tag += f"_{_SWEEP_TAGS[k]}{v:g}"
            out.append((tag, item))
    return out


def _build(name: str, body: dict, seed: int | None) -> ExperimentConfig:
    params = body["params"]
    prof = body.get("profile")
    if prof is None:
        raise ConfigError(f"{name}: experiment needs a profile")
    mimo = body.get("mimo", {})
    trials = body.get("trials", {})
    snr = body.get("snr_db")
    if not snr:
        raise ConfigError(f"{name}: experiment needs snr_db")
    try:
        return ExperimentConfig(
            name=name,
            N=params["N"],
            l_max=params["l_max"],
            alpha_max=params["alpha_max"],
            k_nu=params.get("k_nu", 0),
            c2=params.get("c2"),
            N_t=mimo.get("N_t", 1),
            N_r=mimo.get("N_r", 1),
            profile=ProfileSpec(
                delays=tuple(prof["delays"]),
                dopplers=tuple(prof["dopplers"]) if prof.get("dopplers") is not None else None,
                nu_max=prof.get("nu_max", 0.0),
                integer_doppler=prof.get("integer_doppler", False),
                gains=prof.get("gains", "rayleigh"),
            ),
            snr_db=tuple(float(s) for s in snr),
            constellation=body.get("constellation", "BPSK"),
            detector=DetectorConfig(**body.get("detector", {})),
            snrp_db=float(body.get("snrp_db", 50.0)),
            zeta_multiplier=float(body.get("zeta_multiplier", 6.0)),
            csi_mode=body.get("csi_mode", "perfect"),
            min_trials=trials.get("min", 1),
            max_trials=trials.get("max", 1000),
            target_errors=trials.get("target_errors", 100),
            batch=trials.get("batch", 1),
            seed=body.get("seed", 0) if seed is None else seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def experiments(raw: dict, seed: int | None = None) -> list[ExperimentConfig]:
    """All curves described by a validated config, parameters checked eagerly."""
    out = []
    for name, body in _expand(raw):
        cfg = _build(name, body, seed)
        try:
            cfg.params
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        out.append(cfg)
    return out


def diversity_settings(raw: dict, name: str) -> dict:
    """Window/target/tolerance for one expanded experiment (experiment overrides win)."""
    out = dict(raw.get("diversity", {}))
    for key, over in (raw.get("experiments") or {}).items():
        if name.startswith(f"{raw['name']}_{key}"):
            out.update(over.get("diversity", {}))
    return out


def experiment_dict(cfg: ExperimentConfig) -> dict:
    """JSON-ready resolved form of an experiment (for manifests)."""
    d = asdict(cfg)
    d["profile"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d["profile"].items()}
    d["snr_db"] = [s if s != float("inf") else "inf" for s in cfg.snr_db]
    p = cfg.params
    d["derived"] = {"c1": p.c1, "c2": p.c2, "L": p.L}
    return d
