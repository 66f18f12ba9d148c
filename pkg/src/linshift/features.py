"""Declarative second-order feature maps.

A :class:`FeatureMap` lists which columns to emit for an input vector
``x``: an optional intercept, selected main effects ``x_j``, squares
``x_j**2`` and pairwise products ``x_j * x_k`` (``j < k``). Column order is
always intercept, mains, squares, interactions, each block ascending.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class FeatureMap:
    include_intercept: bool = True
    mains: tuple[int, ...] = ()
    squares: tuple[int, ...] = ()
    interactions: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        mains = tuple(sorted({int(j) for j in self.mains}))
        squares = tuple(sorted({int(j) for j in self.squares}))
        pairs = set()
        for pair in self.interactions:
            j, k = (int(v) for v in pair)
            if j >= k:
                raise ConfigError("interactions", f"pair ({j}, {k}) must satisfy j < k")
            pairs.add((j, k))
        if any(j < 0 for j in mains + squares) or any(j < 0 for j, _ in pairs):
            raise ConfigError("", "feature indices must be non-negative")
        object.__setattr__(self, "include_intercept", bool(self.include_intercept))
        object.__setattr__(self, "mains", mains)
        object.__setattr__(self, "squares", squares)
        object.__setattr__(self, "interactions", tuple(sorted(pairs)))

    # -- presets ---------------------------------------------------------
    @classmethod
    def intercept_only(cls):
        return cls(include_intercept=True)

    @classmethod
    def main_effects(cls, d, intercept=True):
        return cls(include_intercept=intercept, mains=tuple(range(d)))

    @classmethod
    def second_order(cls, d, intercept=False):
        """Squares and pairwise products only (no mains)."""
        return cls(
            include_intercept=intercept,
            squares=tuple(range(d)),
            interactions=tuple(combinations(range(d), 2)),
        )

    @classmethod
    def full(cls, d, intercept=True):
        """All mains, squares and pairwise interactions."""
        return cls(
            include_intercept=intercept,
            mains=tuple(range(d)),
            squares=tuple(range(d)),
            interactions=tuple(combinations(range(d), 2)),
        )

    @classmethod
    def preset(cls, name, d):
        builders = {
            "intercept": lambda: cls.intercept_only(),
            "mains": lambda: cls.main_effects(d),
            "full": lambda: cls.full(d),
            "second_order": lambda: cls.second_order(d),
        }
        if name not in builders:
            raise ConfigError("map", f"unknown preset {name!r}; expected one of {sorted(builders)}")
        return builders[name]()

    # -- shape -----------------------------------------------------------
    @property
    def width(self):
        return (
            int(self.include_intercept)
            + len(self.mains)
            + len(self.squares)
            + len(self.interactions)
        )

    @property
    def min_dim(self):
        """Smallest input dimension the map can be applied to."""
        idx = list(self.mains) + list(self.squares) + [k for _, k in self.interactions]
        return max(idx) + 1 if idx else 0

    def intercept_mask(self):
        mask = np.zeros(self.width, dtype=bool)
        if self.include_intercept:
            mask[0] = True
        return mask

    def column_names(self):
        names = ["intercept"] if self.include_intercept else []
        names += [f"x{j + 1}" for j in self.mains]
        names += [f"x{j + 1}^2" for j in self.squares]
        names += [f"x{j + 1}:x{k + 1}" for j, k in self.interactions]
        return names

    def block_slices(self):
        """Column slices of each block, keyed by block name."""
        out = {}
        start = 0
        for name, size in (
            ("intercept", int(self.include_intercept)),
            ("mains", len(self.mains)),
            ("squares", len(self.squares)),
            ("interactions", len(self.interactions)),
        ):
            out[name] = slice(start, start + size)
            start += size
        return out

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        return {
            "intercept": self.include_intercept,
            "mains": list(self.mains),
            "squares": list(self.squares),
            "interactions": [list(p) for p in self.interactions],
        }

    @classmethod
    def from_dict(cls, obj, path="map"):
        if not isinstance(obj, dict):
            raise ConfigError(path, "feature map must be a JSON object")
        unknown = set(obj) - {"intercept", "mains", "squares", "interactions"}
        if unknown:
            raise ConfigError(path, f"unknown keys {sorted(unknown)}")
        for key in ("mains", "squares", "interactions"):
            if key in obj and not isinstance(obj[key], list):
                raise ConfigError(f"{path}.{key}", "must be a list")
        for i, pair in enumerate(obj.get("interactions", [])):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError(f"{path}.interactions[{i}]", "must be a pair [j, k]")
        return cls(
            include_intercept=bool(obj.get("intercept", True)),
            mains=tuple(obj.get("mains", [])),
            squares=tuple(obj.get("squares", [])),
            interactions=tuple(tuple(p) for p in obj.get("interactions", [])),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_design(fmap, X):
    """Expand an ``n x d`` matrix into the ``n x width`` design of ``fmap``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D feature matrix, got shape {X.shape}")
    n, d = X.shape
    if d < fmap.min_dim:
        raise DataError(f"feature map needs at least {fmap.min_dim} input columns, got {d}")
    cols = []
    if fmap.include_intercept:
        cols.append(np.ones((n, 1)))
    if fmap.mains:
        cols.append(X[:, list(fmap.mains)])
    if fmap.squares:
        cols.append(X[:, list(fmap.squares)] ** 2)
    if fmap.interactions:
        left = [j for j, _ in fmap.interactions]
        right = [k for _, k in fmap.interactions]
        cols.append(X[:, left] * X[:, right])
    if not cols:
        return np.zeros((n, 0))
    return np.hstack(cols)


def build_row(fmap, x):
    """Design row for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError(f"expected a 1-D feature vector, got shape {x.shape}")
    return build_design(fmap, x[None, :])[0]
