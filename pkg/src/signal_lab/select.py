"""Covariate selection procedures.

A selector is any callable ``selector(sample) -> Selection``. Indices are
0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import SelectionError
from .ustat import LabeledSample, beta_sq_hat, build_w


@dataclass(frozen=True)
class Selection:
    indices: tuple[int, ...]
    method: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.indices)


def gap_select(beta_sq) -> Selection:
    """Keep the coefficients above the largest gap in the sorted estimates.

    With ``b_(1) <= ... <= b_(p)`` the stable-sorted estimates and
    ``gap_j = b_(j) - b_(j-1)``, ``j* = argmax gap_j`` and the selection is
    every original index whose sorted position is ``j*`` or later, i.e. the
    values strictly above ``b_(j*-1)`` whenever the largest gap is
    positive. Ties in the argmax go to the largest ``j``.
    """
    b = np.asarray(beta_sq, dtype=float).reshape(-1)
    p = b.shape[0]
    if p < 2:
        raise SelectionError(f"gap selection needs p >= 2, got p = {p}")
    order = np.argsort(b, kind="stable")
    ordered = b[order]
    gaps = np.diff(ordered)
    # position in `ordered` of the first element above the chosen gap;
    # searching the reversed gaps makes argmax pick the largest j on ties
    j_star = int(len(gaps) - np.argmax(gaps[::-1]))
    selected = tuple(sorted(int(i) for i in order[j_star:]))
    return Selection(
        selected,
        "gap",
        {
            "ordered": ordered,
            "gap_position": j_star,
            "gap": float(gaps[j_star - 1]),
            "threshold": float(ordered[j_star - 1]),
        },
    )


def select_all(p: int) -> Selection:
    return Selection(tuple(range(p)), "all")


def select_fixed(indices: Iterable[int], p: int) -> Selection:
    idx = sorted({int(j) for j in indices})
    if idx and (idx[0] < 0 or idx[-1] >= p):
        raise SelectionError(f"indices {idx} out of range for p = {p}")
    return Selection(tuple(idx), "fixed")


Selector = Callable[[LabeledSample], Selection]


def gap_selector(sample: LabeledSample) -> Selection:
    return gap_select(beta_sq_hat(build_w(sample)))


def all_selector(sample: LabeledSample) -> Selection:
    return select_all(sample.p)


def fixed_selector(indices: Iterable[int]) -> Selector:
    indices = tuple(indices)

    def selector(sample: LabeledSample) -> Selection:
        return select_fixed(indices, sample.p)

    return selector


SELECTORS: dict[str, Selector] = {"gap": gap_selector, "all": all_selector}


def get_selector(name: str, fixed: Iterable[int] | None = None) -> Selector:
    if name == "fixed":
        if fixed is None:
            raise SelectionError("the fixed selector needs an index list")
        return fixed_selector(fixed)
    try:
        return SELECTORS[name]
    except KeyError:
        raise SelectionError(
            f"unknown selector {name!r}; available: {sorted([*SELECTORS, 'fixed'])}"
        ) from None
