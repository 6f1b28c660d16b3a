"""Seeded (stratified) K-fold split plans."""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class SplitPlan:
    """``folds`` lists ``(train, test)`` index arrays, ``k`` per repeat in order."""

    folds: tuple
    k: int
    repeats: int
    seed: int
    stratified: bool

    def __len__(self):
        return len(self.folds)

    def repeat(self, r):
        return self.folds[r * self.k:(r + 1) * self.k]

    def permuted(self, perm):
        """Plan addressing the same trials after reordering data as ``data[perm]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        folds = tuple((np.sort(inv[tr]), np.sort(inv[te])) for tr, te in self.folds)
        return SplitPlan(folds, self.k, self.repeats, self.seed, self.stratified)


def make_splits(n, labels=None, k=5, repeats=1, seed=0, stratified=None):
    """Build ``repeats`` independent K-fold partitions of ``range(n)``.

    When stratified, every class is shuffled and dealt round-robin across the
    folds, continuing where the previous class stopped, so per-fold class
    counts are within one of the global proportion and fold sizes within one
    of each other. Repeat ``r`` draws from ``default_rng([seed, r])``, so a
    repeat does not depend on how many others are generated.
    """
    if stratified is None:
        stratified = labels is not None
    if k < 2:
        raise InvalidInput("need at least 2 folds")
    if n < k:
        raise InvalidInput(f"cannot split {n} items into {k} folds")
    if repeats < 1:
        raise InvalidInput("repeats must be >= 1")
    if stratified:
        if labels is None:
            raise InvalidInput("stratified splits need labels")
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise InvalidInput(f"{labels.size} labels for {n} items")
        classes, counts = np.unique(labels, return_counts=True)
        if np.any(counts < k):
            small = classes[counts < k].tolist()
            raise InvalidInput(f"classes {small} have fewer than {k} members")

    folds = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        fold_of = np.empty(n, dtype=np.int64)
        if stratified:
            offset = 0
            for c in classes:
                members = rng.permutation(np.flatnonzero(labels == c))
                fold_of[members] = (offset + np.arange(members.size)) % k
                offset += members.size
        else:
            fold_of[rng.permutation(n)] = np.arange(n) % k
        for f in range(k):
            test = np.flatnonzero(fold_of == f)
            train = np.flatnonzero(fold_of != f)
            folds.append((train, test))
    return SplitPlan(tuple(folds), k, repeats, seed, bool(stratified))
