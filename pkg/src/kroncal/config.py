"""Run configuration: presets, JSON config files and flag overrides."""

import copy
import json
from pathlib import Path

from .exceptions import InputError
from .rl.ppo import PRESETS, TrainConfig
from .simulator import DEFAULT_NOISE, PHYSICAL_BOUNDS, UNIT_BOUNDS, DatasetSpec, PlantTruth, table1_plant

SECTIONS = ("plant", "dataset", "train", "select", "paths")


def preset_config(name="desk"):
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return {
        "preset": name,
        "plant": table1_plant(DEFAULT_NOISE).to_dict(),
        "dataset": DatasetSpec(n_episodes=100, seed=0, with_outputs=False).to_dict(),
        "train": PRESETS[name].to_dict(),
        "select": {"strategy": "exhaustive", "k": 4, "repeats": 1},
        "paths": {},
    }


def merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, preset=None):
    """Preset defaults overlaid by an optional JSON config file."""
    file_cfg = {}
    if path is not None:
        try:
            file_cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from exc
        unknown = set(file_cfg) - set(SECTIONS) - {"preset"}
        if unknown:
            raise InputError(f"unknown config sections: {sorted(unknown)}")
    name = preset or file_cfg.get("preset", "desk")
    cfg = merge(preset_config(name), {k: v for k, v in file_cfg.items() if k != "preset"})
    if preset is not None and "train" in file_cfg:
        # an explicit --preset wins over the file's train budget
        cfg["train"] = merge(cfg["train"], {k: PRESETS[name].to_dict()[k] for k in ("total_episodes", "hidden_dim")})
    cfg["preset"] = name
    return cfg


def plant_from(cfg):
    return PlantTruth.from_dict(cfg["plant"])


def dataset_spec_from(cfg):
    d = dict(cfg["dataset"])
    if d.get("bounds") == "physical":
        d["bounds"] = PHYSICAL_BOUNDS
    elif d.get("bounds") in (None, "unit"):
        d["bounds"] = UNIT_BOUNDS
    return DatasetSpec.from_dict(d)


def train_config_from(cfg):
    return TrainConfig.from_dict(cfg["train"])


