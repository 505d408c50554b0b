"""Latent-space property optimization: pluggable scorers, circular-invariant
fingerprints with Tanimoto similarity, a surrogate predictor on flattened
latents, and constrained/unconstrained gradient-ascent search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SURROGATE_STREAM, TrainConfig
from .elements import ElementTable
from .encoding import decode
from .errors import EmptyBatch, InvalidMolecule, WidthMismatch
from .generation import onehot_bonds
from .graph import MolGraph, correct_validity
from .model import FlowModel, LatentPack
from .numerics import Linear, Module, Rng, Tape, Tensor, ops
from .smiles import canonical_smiles
from .training import Adam, encode_dataset

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class Fingerprint:
    width: int
    bits: frozenset[int]

    def count(self) -> int:
        return len(self.bits)


def fingerprint(g: MolGraph, radius: int = 2, bits: int = 2048) -> Fingerprint:
    """Circular substructure fingerprint.

    Round 0 invariant per atom: (element, degree, sorted incident orders).
    Round r: hash of the atom's round r-1 invariant together with the sorted
    (order, neighbor round r-1 invariant) pairs. All invariants are FNV-1a-64
    hashes of a fixed byte encoding; bit index = hash mod width; the bit set
    is the union over rounds 0..radius and atoms.
    """
    if g.n_atoms == 0:
        raise InvalidMolecule("cannot fingerprint an empty graph")
    invariants = []
    for i, sym in enumerate(g.atoms):
        orders = sorted(g.neighbors(i).values())
        data = f"0|{sym}|{len(orders)}|{','.join(map(str, orders))}".encode()
        invariants.append(fnv1a64(data))
    out = set(h % bits for h in invariants)
    for r in range(1, radius + 1):
        nxt = []
        for i in range(g.n_atoms):
            pairs = sorted((order, invariants[j]) for j, order in g.neighbors(i).items())
            data = f"{r}|{invariants[i]}|" + ";".join(f"{o},{h}" for o, h in pairs)
            nxt.append(fnv1a64(data.encode()))
        invariants = nxt
        out.update(h % bits for h in invariants)
    return Fingerprint(bits, frozenset(out))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; defined as 1.0 when both bit sets are empty."""
    if a.width != b.width:
        raise WidthMismatch(f"fingerprint widths {a.width} != {b.width}")
    union = a.bits | b.bits
    if not union:
        return 1.0
    return len(a.bits & b.bits) / len(union)


# ---------------------------------------------------------------------------
# property scorers

def atom_count(g: MolGraph) -> float:
    return float(g.n_atoms)


def carbon_count(g: MolGraph) -> float:
    return float(sum(1 for a in g.atoms if a == "C"))


def ring_count(g: MolGraph) -> float:
    """Cyclomatic number: bonds - atoms + components."""
    return float(len(g.bonds) - g.n_atoms + len(g.components()))


def heteroatom_fraction(g: MolGraph) -> float:
    if g.n_atoms == 0:
        return 0.0
    return sum(1 for a in g.atoms if a != "C") / g.n_atoms


SCORERS = {
    "atom_count": atom_count,
    "carbon_count": carbon_count,
    "ring_count": ring_count,
    "heteroatom_fraction": heteroatom_fraction,
}


# ---------------------------------------------------------------------------
# surrogate predictor

class Surrogate(Module):
    """Two-layer MLP on flattened latents, hidden width 32."""

    def __init__(self, d_in: int, rng: Rng, hidden: int = 32, dtype=np.float32):
        super().__init__()
        self.d_in = d_in
        self.l1 = Linear(d_in, hidden, rng.child(0), dtype=dtype)
        self.l2 = Linear(hidden, 1, rng.child(1), dtype=dtype)

    def __call__(self, z) -> Tensor:
        h = ops.swish(self.l1(z))
        return ops.reshape(self.l2(h), (-1,))

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self(Tensor(np.asarray(z, dtype=self.l1.w.dtype))).data


def encode_dataset_latents(model: FlowModel, graphs: list[MolGraph], cfg: TrainConfig,
                           seed: int, chunk_size: int = 256) -> LatentPack:
    """Latents for every molecule with a fixed per-molecule dequantization
    stream, so the regression targets sit at stable points."""
    if not graphs:
        raise EmptyBatch("no molecules to encode")
    x_all, a_all = encode_dataset(graphs, cfg.n, cfg.d_pad, cfg.table)
    base = Rng(seed).child(SURROGATE_STREAM)
    packs: list[LatentPack] = []
    for lo in range(0, len(graphs), chunk_size):
        hi = min(lo + chunk_size, len(graphs))
        noise_x = np.stack([
            base.child(i, 0).uniform(x_all.shape[1:], dtype=np.float64) for i in range(lo, hi)
        ])
        noise_a = np.stack([
            base.child(i, 1).uniform(a_all.shape[1:], dtype=np.float64) for i in range(lo, hi)
        ])
        x_deq = Tensor((x_all[lo:hi] + cfg.noise_scale * noise_x).astype(cfg.dtype))
        a_deq = Tensor((a_all[lo:hi] + cfg.noise_scale * noise_a).astype(cfg.dtype))
        packs.append(model.encode_latents(x_deq, a_deq, a_all[lo:hi]))
    bond = [np.concatenate([p.bond[i] for p in packs]) for i in range(len(packs[0].bond))]
    atom = [np.concatenate([p.atom[i] for p in packs]) for i in range(len(packs[0].atom))]
    return LatentPack(bond, atom)


def fit_surrogate(model: FlowModel, graphs: list[MolGraph], scorer, cfg: TrainConfig,
                  seed: int, epochs: int = 5, lr: float = 0.001, batch_size: int = 256,
                  hidden: int = 32) -> tuple[Surrogate, list[float]]:
    """Regress scorer values from flattened latents with Adam; returns the
    fitted surrogate and per-epoch MSE."""
    pack = encode_dataset_latents(model, graphs, cfg, seed)
    z = pack.flatten().astype(cfg.dtype)
    y = np.array([scorer(g) for g in graphs], dtype=cfg.dtype)
    rng = Rng(seed).child(SURROGATE_STREAM, 777)
    net = Surrogate(z.shape[1], rng, hidden=hidden, dtype=cfg.dtype)
    optimizer = Adam(net.parameters(), lr=lr)
    losses = []
    count = z.shape[0]
    for epoch in range(epochs):
        order = rng.child(epoch).permutation(count)
        epoch_losses = []
        for lo in range(0, count, batch_size):
            idx = order[lo : lo + batch_size]
            with Tape() as tape:
                pred = net(Tensor(z[idx]))
                err = ops.sub(pred, Tensor(y[idx]))
                loss = ops.mean(ops.mul(err, err))
            grads = tape.gradients(loss, net.parameters())
            optimizer.step(grads)
            epoch_losses.append(float(loss.data))
        losses.append(float(np.mean(epoch_losses)))
    return net, losses


# ---------------------------------------------------------------------------
# gradient-ascent search

@dataclass
class LsoRecord:
    start_smiles: str
    best_smiles: str
    score_before: float
    score_after: float
    similarity: float
    success: bool

    @property
    def improvement(self) -> float:
        return self.score_after - self.score_before


def lso(model: FlowModel, surrogate: Surrogate, start_latents: LatentPack, scorer,
        table: ElementTable, alpha: float = 0.5, steps: int = 10,
        constraint: tuple[list[MolGraph], float] | None = None) -> list[LsoRecord]:
    """Iterate z <- z + alpha * grad h(z); decode after every step and keep the
    best-scoring feasible molecule per start.

    With `constraint = (references, delta)`, a candidate is feasible only when
    its Tanimoto similarity to the per-start reference stays >= delta. Success
    means some feasible candidate improved on the start's score.
    """
    if alpha < 0:
        raise ValueError("step size alpha must be non-negative")
    bond_shapes, atom_shapes = start_latents.shapes()
    z = start_latents.flatten().astype(surrogate.l1.w.dtype)
    count = z.shape[0]

    # reference molecules: decoded starts unless the constraint provides them
    start_pack = LatentPack.unflatten(z, bond_shapes, atom_shapes)
    decoded_starts = _decode_batch(model, table, start_pack)
    if constraint is not None:
        references, delta = constraint
        if len(references) != count:
            raise ValueError(f"{len(references)} references for {count} starts")
    else:
        references, delta = decoded_starts, None
    ref_fps = [fingerprint(g) for g in references]
    ref_scores = [float(scorer(g)) for g in references]

    best = list(references)
    best_scores = list(ref_scores)
    best_sims = [1.0] * count
    improved = [False] * count

    for _ in range(steps):
        zt = Tensor(z.copy(), requires_grad=True)
        with Tape() as tape:
            total = ops.sum_(surrogate(zt))
        (gz,) = tape.gradients(total, [zt])
        z = z + alpha * gz.astype(z.dtype)
        pack = LatentPack.unflatten(z, bond_shapes, atom_shapes)
        for i, cand in enumerate(_decode_batch(model, table, pack)):
            sim = tanimoto(fingerprint(cand), ref_fps[i])
            if delta is not None and sim < delta:
                continue
            score = float(scorer(cand))
            if score > best_scores[i]:
                best[i], best_scores[i], best_sims[i] = cand, score, sim
                improved[i] = True

    records = []
    for i in range(count):
        records.append(LsoRecord(
            start_smiles=canonical_smiles(references[i]),
            best_smiles=canonical_smiles(best[i]),
            score_before=ref_scores[i],
            score_after=best_scores[i],
            similarity=best_sims[i],
            success=improved[i],
        ))
    return records


def _decode_batch(model: FlowModel, table: ElementTable, pack: LatentPack) -> list[MolGraph]:
    a_tilde = model.decode_bonds(latents=list(pack.bond))
    a_hat = onehot_bonds(a_tilde)
    x_tilde = model.decode_atoms(a_hat, latents=list(pack.atom))
    out = []
    for i in range(a_tilde.shape[0]):
        raw = decode(x_tilde[i], a_tilde[i], table)
        if raw.n_atoms == 0:
            out.append(MolGraph((table.symbols[0],), frozenset()))
        else:
            out.append(correct_validity(raw, table))
    return out


def write_optimized_tsv(records: list[LsoRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("start_smiles\tbest_smiles\tscore_before\tscore_after\tsimilarity\tsuccess\n")
        for r in records:
            fh.write(f"{r.start_smiles}\t{r.best_smiles}\t{r.score_before:.6f}\t"
                     f"{r.score_after:.6f}\t{r.similarity:.6f}\t{int(r.success)}\n")
