"""Run configuration: presets plus JSON overrides.

A config document is a single JSON object; the optional "preset" key selects
a base ("zinc-like", "polymer-like" or "toy") and any other keys override it.
Element tables come from a builtin name ("elements"), an inline table object,
or a JSON file path ("elements_file").
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .atomflow import ScaleConfig
from .bondflow import CCGlowConfig
from .elements import BUILTIN_TABLES, ElementTable, load_element_table

TOY_TABLE = ElementTable(("C", "N", "O"), {"C": 4, "N": 3, "O": 2})
_TABLES = dict(BUILTIN_TABLES, toy=TOY_TABLE)

# rng stream labels: every consumer derives its stream as seed -> label -> ...
INIT_STREAM = 0
SHUFFLE_STREAM = 1
NOISE_STREAM = 2
SAMPLE_STREAM = 3
SURROGATE_STREAM = 4
RESAMPLE_STREAM = 5


@dataclass
class TrainConfig:
    n: int = 16
    d_pad: int = 8
    lr: float = 0.001
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    noise_scale: float = 0.9
    precision: str = "f32"  # training dtype; oracle tests rebuild at f64
    elements: str = "toy"
    atom: ScaleConfig = field(default_factory=ScaleConfig)
    bond: CCGlowConfig = field(default_factory=CCGlowConfig)
    table: ElementTable = field(default=None, repr=False)  # resolved at load

    def __post_init__(self):
        if self.table is None:
            self.table = _TABLES[self.elements]
        self.atom.validate(self.n, self.d_pad)
        self.bond.validate(self.n)
        if self.d_pad < len(self.table) + 1:
            raise ValueError(f"d_pad={self.d_pad} too small for {len(self.table)} elements + pad")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_json(self) -> dict:
        doc = {
            "n": self.n,
            "d_pad": self.d_pad,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "noise_scale": self.noise_scale,
            "precision": self.precision,
            "elements": self.elements,
            "atom": asdict(self.atom),
            "bond": asdict(self.bond),
            "table": self.table.to_json(),
        }
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        atom = doc.pop("atom", {})
        bond = doc.pop("bond", {})
        table_doc = doc.pop("table", None)
        if isinstance(atom, dict):
            atom = ScaleConfig(**{**atom, "coarsen_factors": tuple(atom.get("coarsen_factors", ()))})
        if isinstance(bond, dict):
            bond = CCGlowConfig(**bond)
        table = ElementTable.from_json(table_doc) if table_doc else None
        return cls(atom=atom, bond=bond, table=table, **doc)


PRESETS: dict[str, dict] = {
    # drug-like small molecules: up to 38 atoms plus 2 virtual pads
    "zinc-like": {
        "n": 40,
        "d_pad": 16,
        "lr": 0.001,
        "batch_size": 256,
        "epochs": 100,
        "elements": "zinc",
        "atom": {"num_blocks": 4, "coarsen_factors": (2, 2, 2), "steps": 6,
                 "rgcn_layers": 2, "hidden": 256},
        "bond": {"num_blocks": 3, "steps": 3, "hidden": 256},
    },
    # polymer-scale molecules: up to 122 atoms plus 6 virtual pads
    "polymer-like": {
        "n": 128,
        "d_pad": 8,
        "lr": 0.001,
        "batch_size": 256,
        "epochs": 200,
        "elements": "polymer",
        "atom": {"num_blocks": 6, "coarsen_factors": (2, 2, 2, 2, 2), "steps": 8,
                 "rgcn_layers": 4, "hidden": 128},
        "bond": {"num_blocks": 5, "steps": 3, "hidden": 128},
    },
    # desk-scale smoke configuration for synthetic chain/ring sets
    "toy": {
        "n": 16,
        "d_pad": 8,
        "lr": 0.001,
        "batch_size": 64,
        "epochs": 30,
        "elements": "toy",
        "atom": {"num_blocks": 3, "coarsen_factors": (2, 2), "steps": 2,
                 "rgcn_layers": 2, "hidden": 32},
        "bond": {"num_blocks": 2, "steps": 2, "hidden": 24},
    },
}


def _deep_update(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


def config_from_document(doc: dict) -> TrainConfig:
    doc = dict(doc)
    preset = doc.pop("preset", "toy")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    elements_file = doc.pop("elements_file", None)
    merged = _deep_update(PRESETS[preset], doc)
    if "atom" in merged and isinstance(merged["atom"].get("coarsen_factors"), list):
        merged["atom"]["coarsen_factors"] = tuple(merged["atom"]["coarsen_factors"])
    cfg = TrainConfig.from_json(merged)
    if elements_file:
        cfg.table = load_element_table(elements_file)
        cfg.elements = elements_file
        cfg.__post_init__()
    return cfg


def load_config(path: str | None) -> TrainConfig:
    if path is None:
        return config_from_document({})
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_document(json.load(fh))
