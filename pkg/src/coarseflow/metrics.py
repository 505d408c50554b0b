"""Generation quality metrics: validity, uniqueness, novelty, reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

from .elements import ElementTable
from .errors import EmptyBatch
from .graph import MolGraph, check_valence
from .smiles import canonical_smiles


@dataclass(frozen=True)
class GenMetrics:
    validity: float
    validity_wo_correction: float
    validity_w_filter: float
    uniqueness: float
    novelty: float
    reconstruction: float | None = None

    def as_dict(self) -> dict:
        return {
            "validity": self.validity,
            "validity_wo_correction": self.validity_wo_correction,
            "validity_w_filter": self.validity_w_filter,
            "uniqueness": self.uniqueness,
            "novelty": self.novelty,
            "reconstruction": self.reconstruction,
        }


def compute_metrics(
    raw: list[MolGraph],
    corrected: list[MolGraph],
    train_set: set[str],
    table: ElementTable,
    recon_ok: tuple[int, int] | None = None,
    large_atom_threshold: int = 38,
) -> GenMetrics:
    """Score a generation batch.

    `raw` holds argmax-decoded graphs before correction, `corrected` the
    post-correction graphs (same order/length). `train_set` holds canonical
    SMILES of the training molecules; `recon_ok` is (reconstructed, total)
    counts from a separate reconstruction run, or None when not measured.
    """
    if len(raw) == 0:
        raise EmptyBatch("no generated samples")
    if len(raw) != len(corrected):
        raise ValueError("raw and corrected sample lists differ in length")

    n = len(raw)
    raw_valid = [g for g in raw if check_valence(g, table)]
    corrected_valid = [g for g in corrected if check_valence(g, table)]
    large = [g for g in raw_valid if g.n_atoms > large_atom_threshold]

    canon = [canonical_smiles(g) for g in corrected_valid]
    uniqueness = len(set(canon)) / len(canon) if canon else 0.0
    novelty = sum(1 for s in canon if s not in train_set) / len(canon) if canon else 0.0

    recon = None
    if recon_ok is not None:
        ok, total = recon_ok
        if total <= 0:
            raise EmptyBatch("reconstruction counted over zero molecules")
        recon = ok / total

    return GenMetrics(
        validity=len(corrected_valid) / n,
        validity_wo_correction=len(raw_valid) / n,
        validity_w_filter=len(large) / n,
        uniqueness=uniqueness,
        novelty=novelty,
        reconstruction=recon,
    )
