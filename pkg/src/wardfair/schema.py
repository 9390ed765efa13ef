"""Feature schema: column names, kinds, and sensitive-class membership.

A schema is normally loaded from a JSON manifest that accompanies the raw
CSV extracts:

    {
      "columns": [
        {"name": "prop_group_a", "kind": "numeric", "sensitive_class": "race"},
        {"name": "jobs_total",   "kind": "numeric"},
        {"name": "area_band",    "kind": "categorical"}
      ],
      "target": "crime_rate",
      "year_range": [2016, 2022]
    }

The target may be declared either through the top-level "target" field or
as a column with kind "target"; both forms normalize to the same schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidRequest

KINDS = ("numeric", "categorical", "target")
SENSITIVE_CLASSES = ("race", "religion")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    sensitive_class: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidRequest(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.sensitive_class is not None:
            if self.sensitive_class not in SENSITIVE_CLASSES:
                raise InvalidRequest(
                    f"unknown sensitive class {self.sensitive_class!r} for {self.name!r}"
                )
            if self.kind != "numeric":
                raise InvalidRequest(
                    f"sensitive column {self.name!r} must be numeric (a proportion)"
                )


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[ColumnSpec, ...]
    year_range: tuple[int, int] = (2016, 2022)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InvalidRequest("schema column names must be unique")
        targets = [c for c in self.columns if c.kind == "target"]
        if len(targets) != 1:
            raise InvalidRequest("schema must declare exactly one target column")
        lo, hi = self.year_range
        if lo > hi:
            raise InvalidRequest(f"invalid year range {self.year_range}")

    @property
    def target(self) -> str:
        return next(c.name for c in self.columns if c.kind == "target")

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "numeric"]

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "categorical"]

    @property
    def feature_names(self) -> list[str]:
        """All input columns (everything except the target), in declared order."""
        return [c.name for c in self.columns if c.kind != "target"]

    def sensitive_names(self, sensitive_class: str | None = None) -> list[str]:
        return [
            c.name
            for c in self.columns
            if c.sensitive_class is not None
            and (sensitive_class is None or c.sensitive_class == sensitive_class)
        ]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise InvalidRequest(f"no column named {name!r} in schema")

    @classmethod
    def from_manifest(cls, manifest: dict) -> "FeatureSchema":
        cols: list[ColumnSpec] = []
        target = manifest.get("target")
        for entry in manifest.get("columns", []):
            kind = entry["kind"]
            if target is not None and entry["name"] == target:
                kind = "target"
            cols.append(
                ColumnSpec(
                    name=entry["name"],
                    kind=kind,
                    sensitive_class=entry.get("sensitive_class"),
                )
            )
        if target is not None and all(c.name != target for c in cols):
            cols.append(ColumnSpec(name=target, kind="target"))
        year_range = tuple(manifest.get("year_range", (2016, 2022)))
        return cls(columns=tuple(cols), year_range=year_range)  # type: ignore[arg-type]

    @classmethod
    def from_json(cls, path: str | Path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_manifest(json.load(fh))

    def to_manifest(self) -> dict:
        return {
            "columns": [
                {
                    "name": c.name,
                    "kind": "numeric" if c.kind == "target" else c.kind,
                    **({"sensitive_class": c.sensitive_class} if c.sensitive_class else {}),
                }
                for c in self.columns
                if c.kind != "target"
            ]
            + [{"name": self.target, "kind": "numeric"}],
            "target": self.target,
            "year_range": list(self.year_range),
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
