"""Rank-ordered cell sentences.

A cell sentence lists the panel's protein names from highest to lowest
expression. Ties keep panel order, so identical inputs always produce
byte-identical token sequences. Only the ordering matters: any strictly
increasing transform of the expression vector leaves the sentence unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CellRecord, Dataset, ProteinPanel
from .errors import IntegrityError


@dataclass(frozen=True)
class CellSentence:
    """``tokens`` is a permutation of the panel names, strongest protein
    first. ``ranks[k]`` is the 1-based panel index of ``tokens[k]``."""

    cell_id: str
    tokens: tuple[str, ...]
    ranks: tuple[int, ...]

    def text(self, truncate: int | None = None) -> str:
        """Space-joined tokens; ``truncate`` keeps only the top-m proteins."""
        toks = self.tokens if truncate is None else self.tokens[:truncate]
        return " ".join(toks)


def to_sentence(cell: CellRecord, panel: ProteinPanel) -> CellSentence:
    """Order panel names by descending expression, panel order on ties."""
    expr = np.asarray(cell.expression, dtype=np.float64)
    if expr.shape != (panel.size,):
        raise IntegrityError(
            f"cell {cell.cell_id!r}: expression length {expr.shape} does not "
            f"match panel size {panel.size}"
        )
    if not np.isfinite(expr).all():
        raise IntegrityError(f"cell {cell.cell_id!r}: non-finite expression value")
    # stable sort on the negated values keeps ties in ascending panel order
    order = np.argsort(-expr, kind="stable")
    tokens = tuple(panel.names[j] for j in order)
    ranks = tuple(int(j) + 1 for j in order)
    return CellSentence(cell_id=cell.cell_id, tokens=tokens, ranks=ranks)


def sentence_to_ranks(sentence: CellSentence, panel: ProteinPanel) -> tuple[int, ...]:
    """Inverse view: entry j is the 1-based sentence position of panel
    protein j. Round-trips with to_sentence."""
    positions: dict[str, int] = {}
    for pos, tok in enumerate(sentence.tokens, start=1):
        if tok in positions:
            raise IntegrityError(f"duplicate token in sentence: {tok!r}")
        positions[tok] = pos
    ranks = []
    for name in panel.names:
        if name not in positions:
            raise IntegrityError(f"sentence is missing panel protein: {name!r}")
        ranks.append(positions[name])
    extra = set(positions) - set(panel.names)
    if extra:
        raise IntegrityError(f"unknown token in sentence: {sorted(extra)[0]!r}")
    return tuple(ranks)


def ranks_to_tokens(ranks: tuple[int, ...], panel: ProteinPanel) -> tuple[str, ...]:
    """Rebuild the token sequence from sentence positions (testing aid)."""
    out: list[str | None] = [None] * panel.size
    for j, pos in enumerate(ranks):
        out[pos - 1] = panel.names[j]
    if any(t is None for t in out):
        raise IntegrityError("ranks are not a permutation of 1..M")
    return tuple(out)  # type: ignore[arg-type]


def sentences_for(dataset: Dataset) -> list[CellSentence]:
    """Sentence per cell, in cell index order."""
    order = np.argsort(-dataset.expression, axis=1, kind="stable")
    names = dataset.panel.names
    return [
        CellSentence(
            cell_id=dataset.cell_ids[i],
            tokens=tuple(names[j] for j in order[i]),
            ranks=tuple(int(j) + 1 for j in order[i]),
        )
        for i in range(len(dataset))
    ]
