"""Two-step generation, reconstruction, hierarchical resampling, and
substructure frequency analysis."""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RESAMPLE_STREAM, SAMPLE_STREAM, TrainConfig
from .elements import ElementTable
from .encoding import BOND_CHANNELS, decode
from .errors import EmptyBatch, EmptyGraph
from .graph import MolGraph, bfs_reorder, check_valence, correct_validity
from .metrics import GenMetrics, compute_metrics
from .model import FlowModel, LatentPack
from .numerics import Rng
from .smiles import canonical_smiles, write_smiles
from .training import dequantize, encode_dataset


@dataclass
class SampleReport:
    raw: list[MolGraph]
    corrected: list[MolGraph]
    canonical: list[str]
    valid_uncorrected: list[bool]
    metrics: GenMetrics
    seed: int
    temperature: float


@dataclass
class ResampleGrid:
    original: str
    rows: list[tuple[int, list[str]]]  # (coarsest resampled level j, canonical strings)


def onehot_bonds(a_real: np.ndarray) -> np.ndarray:
    """Symmetrize channel-wise and argmax back to a one-hot bond tensor."""
    a_sym = 0.5 * (a_real + np.transpose(a_real, (0, 1, 3, 2)))
    ch = np.argmax(a_sym, axis=1)
    return np.ascontiguousarray(np.eye(BOND_CHANNELS, dtype=np.uint8)[ch].transpose(0, 3, 1, 2))


def _correct_or_fallback(raw: MolGraph, table: ElementTable) -> MolGraph:
    if raw.n_atoms == 0:
        # all rows decoded to pad/null channels; substitute the smallest
        # valid molecule so downstream metrics stay total
        return MolGraph((table.symbols[0],), frozenset())
    return correct_validity(raw, table)


def _sample_chunk(model: FlowModel, table: ElementTable, count: int,
                  temperature: float, chunk_rng: Rng):
    a_tilde = model.decode_bonds(rng=chunk_rng.child(0), temperature=temperature, batch=count)
    a_hat = onehot_bonds(a_tilde)
    x_tilde = model.decode_atoms(a_hat, rng=chunk_rng.child(1), temperature=temperature, batch=count)
    out = []
    for i in range(count):
        out.append(decode(x_tilde[i], a_tilde[i], table))
    return out


def sample(model: FlowModel, table: ElementTable, count: int, temperature: float,
           seed: int, train_set: set[str] | None = None, chunk_size: int = 100,
           large_atom_threshold: int = 38, threads: int = 1) -> SampleReport:
    """Draw molecules: bonds first, then atoms conditioned on the one-hot
    bonds, then argmax-decode and apply validity correction."""
    if not 0.0 < temperature <= 2.0:
        raise ValueError(f"temperature must lie in (0, 2], got {temperature}")
    if count <= 0:
        raise EmptyBatch("sample count must be positive")
    base = Rng(seed).child(SAMPLE_STREAM)
    chunks = [(k, min(chunk_size, count - k * chunk_size))
              for k in range((count + chunk_size - 1) // chunk_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sample_chunk, model, table, m, temperature, base.child(k))
                       for k, m in chunks]
            raw = [g for f in futures for g in f.result()]
    else:
        raw = [g for k, m in chunks
               for g in _sample_chunk(model, table, m, temperature, base.child(k))]

    corrected = [_correct_or_fallback(g, table) for g in raw]
    canonical = [canonical_smiles(g) for g in corrected]
    valid_unc = [check_valence(g, table) for g in raw]
    metrics = compute_metrics(raw, corrected, train_set or set(), table,
                              large_atom_threshold=large_atom_threshold)
    return SampleReport(raw, corrected, canonical, valid_unc, metrics, seed, temperature)


def write_samples_tsv(report: SampleReport, table: ElementTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index\tsmiles_raw\tsmiles_corrected\tn_atoms\tvalid_uncorrected\n")
        for i, (raw, cor, canon, ok) in enumerate(
            zip(report.raw, report.corrected, report.canonical, report.valid_uncorrected)
        ):
            raw_str = write_smiles(raw) if ok else "INVALID"
            fh.write(f"{i}\t{raw_str}\t{canon}\t{cor.n_atoms}\t{int(ok)}\n")


def reconstruct(model: FlowModel, graphs: list[MolGraph], cfg: TrainConfig,
                seed: int, chunk_size: int = 100) -> tuple[int, int]:
    """encode -> dequantize -> forward -> inverse -> decode; counts exact
    canonical-SMILES matches. Returns (ok, total)."""
    if not graphs:
        raise EmptyBatch("no molecules to reconstruct")
    x_all, a_all = encode_dataset(graphs, cfg.n, cfg.d_pad, cfg.table)
    targets = [canonical_smiles(bfs_reorder(g)) for g in graphs]
    rng = Rng(seed).child(SAMPLE_STREAM, 999)
    ok = 0
    for lo in range(0, len(graphs), chunk_size):
        hi = min(lo + chunk_size, len(graphs))
        x_deq, a_deq = dequantize(x_all[lo:hi], a_all[lo:hi], cfg.noise_scale,
                                  rng.child(lo), dtype=cfg.dtype)
        (z_a, z_x), _, _ = model.forward(x_deq, a_deq, a_all[lo:hi])
        a_rec = model.decode_bonds(latents=[z.data for z in z_a])
        a_hat = onehot_bonds(a_rec)
        x_rec = model.decode_atoms(a_hat, latents=[z.data for z in z_x])
        for i in range(hi - lo):
            g = decode(x_rec[i], a_rec[i], cfg.table)
            if g.n_atoms and check_valence(g, cfg.table) and canonical_smiles(g) == targets[lo + i]:
                ok += 1
    return ok, len(graphs)


def encode_one(model: FlowModel, g: MolGraph, cfg: TrainConfig, rng: Rng) -> LatentPack:
    x, a = encode_dataset([g], cfg.n, cfg.d_pad, cfg.table)
    x_deq, a_deq = dequantize(x, a, cfg.noise_scale, rng, dtype=cfg.dtype)
    return model.encode_latents(x_deq, a_deq, a)


def _decode_pack(model: FlowModel, table: ElementTable, bond_latents, atom_latents,
                 rng: Rng | None = None, temperature: float = 1.0,
                 batch: int | None = None) -> list[MolGraph]:
    a_tilde = model.decode_bonds(latents=bond_latents, temperature=temperature,
                                 rng=rng.child(0) if rng else None, batch=batch)
    a_hat = onehot_bonds(a_tilde)
    x_tilde = model.decode_atoms(a_hat, latents=atom_latents, temperature=temperature,
                                 rng=rng.child(1) if rng else None, batch=a_tilde.shape[0])
    return [decode(x_tilde[i], a_tilde[i], table) for i in range(a_tilde.shape[0])]


def resample_hierarchy(model: FlowModel, g: MolGraph, cfg: TrainConfig,
                       per_level_count: int, temperature: float, seed: int) -> ResampleGrid:
    """Encode a molecule, then redraw latents level by level: grid row j
    redraws levels 0..j (finest first) of both flows, keeping deeper levels
    fixed, and decodes each redraw."""
    base = Rng(seed).child(RESAMPLE_STREAM)
    pack = encode_one(model, g, cfg, base.child(0))
    n_bond, n_atom = len(pack.bond), len(pack.atom)
    n_levels = max(n_bond, n_atom)
    original = canonical_smiles(bfs_reorder(g))

    rows = []
    for j in range(n_levels):
        smiles_row = []
        for s in range(per_level_count):
            draw_rng = base.child(1 + j, s)
            bond_lat = [None if i <= j else z for i, z in enumerate(pack.bond)]
            atom_lat = [None if i <= j else z for i, z in enumerate(pack.atom)]
            decoded = _decode_pack(model, cfg.table, bond_lat, atom_lat,
                                   rng=draw_rng, temperature=temperature, batch=1)
            smiles_row.append(canonical_smiles(_correct_or_fallback(decoded[0], cfg.table)))
        rows.append((j, smiles_row))
    return ResampleGrid(original, rows)


def write_resample_tsv(grid: ResampleGrid, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("level_j\tsample_idx\tsmiles\n")
        fh.write(f"-1\t0\t{grid.original}\n")
        for j, row in grid.rows:
            for s, smi in enumerate(row):
                fh.write(f"{j}\t{s}\t{smi}\n")


def substructure_stats(samples: list[MolGraph], cluster_size: int) -> list[tuple[str, int]]:
    """Fragment frequency over consecutive cluster_size-atom clusters (the
    first-scale clusters of BFS-ordered graphs). Bonds leaving a cluster are
    dropped; disconnected clusters contribute one fragment per component."""
    counts: Counter[str] = Counter()
    for g in samples:
        g = bfs_reorder(g)
        for lo in range(0, g.n_atoms, cluster_size):
            cluster = list(range(lo, min(lo + cluster_size, g.n_atoms)))
            sub = g.subgraph(cluster)
            for comp in sub.components():
                frag = sub.subgraph(comp)
                counts[canonical_smiles(frag)] += 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def write_stats_tsv(stats: list[tuple[str, int]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fragment\tcount\n")
        for smi, count in stats:
            fh.write(f"{smi}\t{count}\n")
