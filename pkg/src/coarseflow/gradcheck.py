"""Finite-difference conformance of the NLL gradient on a micro-model.

Builds the smallest faithful model (single-step flows on a 2-atom graph),
fixes one dequantized batch, and compares every analytic parameter gradient
against central differences at float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .atomflow import ScaleConfig
from .bondflow import CCGlowConfig
from .elements import ElementTable
from .model import FlowModel
from .numerics import Rng, Tape, fd_gradient
from .training import dequantize, encode_dataset, nll

REL_TOL = 1e-3

MICRO_TABLE = ElementTable(("C",), {"C": 4})


def micro_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(
        n=2,
        d_pad=2,
        seed=seed,
        precision="f64",
        elements="toy",
        atom=ScaleConfig(num_blocks=1, coarsen_factors=(), steps=1, rgcn_layers=1, hidden=1),
        bond=CCGlowConfig(num_blocks=1, steps=1, hidden=1),
        table=MICRO_TABLE,
    )


@dataclass
class GradReport:
    n_params: int
    worst: float
    worst_name: str
    table: str

    @property
    def passed(self) -> bool:
        return self.worst <= REL_TOL


def gradient_conformance(seed: int = 0) -> GradReport:
    from .smiles import parse_smiles

    cfg = micro_config(seed)
    rng = Rng(seed)
    model = FlowModel(cfg.n, cfg.d_pad, cfg.atom, cfg.bond, rng.child(0), dtype=np.float64)

    graphs = [parse_smiles("CC", MICRO_TABLE), parse_smiles("C", MICRO_TABLE)]
    x_all, a_all = encode_dataset(graphs, cfg.n, cfg.d_pad, MICRO_TABLE)
    x_deq, a_deq = dequantize(x_all, a_all, cfg.noise_scale, rng.child(1), dtype=np.float64)

    # one forward initializes actnorm; afterwards the loss is a fixed function
    nll(model, x_deq, a_deq, a_all)
    # move every parameter off zero so all gradient paths are generic
    for i, p in enumerate(model.parameters()):
        p.data = p.data + 0.1 * rng.child(2, i).normal(p.data.shape)

    named = list(model.named_parameters())
    params = [p for _, p in named]
    with Tape() as tape:
        loss = nll(model, x_deq, a_deq, a_all)
    analytic = tape.gradients(loss, params)

    rows = [f"{'parameter':42s} {'size':>5s} {'max_rel_err':>12s}"]
    worst, worst_name = 0.0, ""
    total = 0
    for (name, p), grad in zip(named, analytic):
        total += p.data.size

        def f(values, p=p):
            old = p.data
            p.data = values.reshape(old.shape)
            try:
                return float(nll(model, x_deq, a_deq, a_all).data)
            finally:
                p.data = old

        fd = fd_gradient(f, p.data.ravel().copy(), h=1e-5).reshape(p.data.shape)
        denom = np.maximum(np.abs(fd), 1e-4)
        rel = float((np.abs(grad - fd) / denom).max()) if p.data.size else 0.0
        rows.append(f"{name:42s} {p.data.size:5d} {rel:12.3e}")
        if rel > worst:
            worst, worst_name = rel, name
    rows.append(f"{'TOTAL':42s} {total:5d} {worst:12.3e}")
    return GradReport(total, worst, worst_name, "\n".join(rows))
