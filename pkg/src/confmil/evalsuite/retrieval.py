"""Key-instance retrieval from per-conformer scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataIntegrityError, DomainError, ShapeError
from ..molkit import ConformerBag, bag_label

TOP_KS = (1, 5, 10)


@dataclass(frozen=True)
class RetrievalReport:
    top1: float
    top5: float
    top10: float
    n_bags: int

    def lines(self) -> list:
        return [f"top1={self.top1:.6f}", f"top5={self.top5:.6f}",
                f"top10={self.top10:.6f}", f"n_positive_bags={self.n_bags}"]


def rank_desc(scores) -> np.ndarray:
    """Indices by descending score; equal scores keep conformer-id order."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def _key_mask(bag: ConformerBag) -> np.ndarray:
    if bag.bag_label is None or any(c.instance_label is None for c in bag.conformers):
        bag_label(bag)
    keys = np.array([c.instance_label for c in bag.conformers], dtype=bool)
    if bag.bag_label != 1 or not keys.any():
        raise DataIntegrityError(f"bag {bag.id} is not a positive bag with a key instance")
    return keys


def _hit_fraction(bags, scores_per_bag, k: int) -> float:
    if k < 1:
        raise DomainError("k must be at least 1")
    if len(bags) != len(scores_per_bag):
        raise ShapeError(f"{len(bags)} bags but {len(scores_per_bag)} score vectors")
    if not bags:
        raise DomainError("retrieval needs at least one positive bag")
    hits = 0
    for bag, scores in zip(bags, scores_per_bag):
        keys = _key_mask(bag)
        if len(scores) != keys.size:
            raise ShapeError(f"bag {bag.id}: {len(scores)} scores for {keys.size} conformers")
        hits += bool(keys[rank_desc(scores)[:k]].any())
    return hits / len(bags)


def topk_retrieval(bags, alphas, k: int) -> float:
    """Fraction of positive bags with a key instance among the k highest-attention conformers."""
    return _hit_fraction(bags, alphas, k)


def retrieval_report(bags, scores_per_bag, ks=TOP_KS) -> RetrievalReport:
    return RetrievalReport(*(_hit_fraction(bags, scores_per_bag, k) for k in ks), len(bags))


def lowest_energy_baseline(bags, ks=TOP_KS) -> RetrievalReport:
    """Rank conformers by ascending energy instead of attention."""
    neg_energy = [-np.array([c.energy for c in bag.conformers], dtype=np.float64) for bag in bags]
    return retrieval_report(bags, neg_energy, ks)
