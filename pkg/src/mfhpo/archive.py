"""Append-only evaluation archive."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .param_space import Config, ParamSpace

# JSONL/CSV column order; part of the on-disk format.
FIELDS = ("config", "fidelity", "cost", "budget_at", "batch_id", "bracket_id", "stage_id", "seed_tag")


@dataclass(frozen=True)
class EvalRecord:
    config: Config
    fidelity: float
    cost: float
    budget_at: float = 0.0
    batch_id: int = 0
    bracket_id: int = 0
    stage_id: int = 0
    seed_tag: str = ""

    def __post_init__(self) -> None:
        if not (0.0 < self.fidelity <= 1.0):
            raise ValueError(f"fidelity must lie in (0, 1], got {self.fidelity}")

    def to_dict(self) -> dict:
        return {
            "config": self.config.values,
            "fidelity": self.fidelity,
            "cost": self.cost,
            "budget_at": self.budget_at,
            "batch_id": self.batch_id,
            "bracket_id": self.bracket_id,
            "stage_id": self.stage_id,
            "seed_tag": self.seed_tag,
        }

    @classmethod
    def from_dict(cls, d: dict, space: ParamSpace | None = None) -> "EvalRecord":
        config = Config(d["config"])
        if space is not None:
            space.validate(config)
        return cls(
            config=config,
            fidelity=float(d["fidelity"]),
            cost=float(d["cost"]),
            budget_at=float(d["budget_at"]),
            batch_id=int(d["batch_id"]),
            bracket_id=int(d["bracket_id"]),
            stage_id=int(d["stage_id"]),
            seed_tag=str(d["seed_tag"]),
        )


class Archive:
    """Chronological record of all evaluations of one optimizer run."""

    def __init__(self, records: Iterable[EvalRecord] = ()):
        self._records: list[EvalRecord] = []
        self._encoded: list[np.ndarray] = []
        self._encoded_space: ParamSpace | None = None
        for rec in records:
            self.append(rec)

    def append(self, rec: EvalRecord) -> "Archive":
        if self._records and rec.budget_at < self._records[-1].budget_at:
            raise ValueError("budget_at must be nondecreasing in insertion order")
        self._records.append(rec)
        return self

    @property
    def records(self) -> tuple[EvalRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EvalRecord]:
        return iter(self._records)

    def __getitem__(self, i: int) -> EvalRecord:
        return self._records[i]

    def best(self, at_full_fidelity: bool = False) -> EvalRecord | None:
        """Lowest-cost record (earliest on ties); restricted to r == 1 if asked."""
        best = None
        for rec in self._records:
            if at_full_fidelity and rec.fidelity != 1.0:
                continue
            if best is None or rec.cost < best.cost:
                best = rec
        return best

    def incumbent(self) -> EvalRecord | None:
        """Final answer: best full-fidelity record if any, else best overall."""
        return self.best(at_full_fidelity=True) or self.best()

    def highest_fidelity_indices(self) -> list[int]:
        """One record index per distinct config: its highest-fidelity evaluation.

        Among equal fidelities the latest evaluation wins. The returned list is
        ordered by first appearance of each config.
        """
        chosen: dict[tuple, int] = {}
        for i, rec in enumerate(self._records):
            k = rec.config.key()
            j = chosen.get(k)
            if j is None or rec.fidelity >= self._records[j].fidelity:
                chosen[k] = i
        return list(chosen.values())

    def n_distinct(self) -> int:
        return len({rec.config.key() for rec in self._records})

    def split_good_bad(self, fraction: float, min_good: int) -> tuple[list[EvalRecord], list[EvalRecord]]:
        """Partition the distinct configs into the best ``max(ceil(fraction n), min_good)`` and the rest."""
        if not self._records:
            raise ValueError("cannot split an empty archive")
        good_idx, bad_idx = self.split_indices(fraction, min_good)
        return [self._records[i] for i in good_idx], [self._records[i] for i in bad_idx]

    def split_indices(self, fraction: float, min_good: int, max_good: int | None = None) -> tuple[list[int], list[int]]:
        if not (0.0 < fraction < 1.0):
            raise ValueError("fraction must lie in (0, 1)")
        idx = self.highest_fidelity_indices()
        n = len(idx)
        n_good = max(math.ceil(fraction * n - 1e-12), min_good)
        n_good = min(n_good, n if max_good is None else max_good)
        order = sorted(idx, key=lambda i: (self._records[i].cost, i))
        return order[:n_good], order[n_good:]

    def encoded(self, space: ParamSpace) -> np.ndarray:
        """Encoded config matrix, one row per record (cached incrementally)."""
        if self._encoded_space is not space:
            self._encoded_space = space
            self._encoded = []
        for rec in self._records[len(self._encoded):]:
            self._encoded.append(space.encode(rec.config))
        if not self._encoded:
            return np.empty((0, space.dim))
        return np.vstack(self._encoded)

    def costs(self) -> np.ndarray:
        return np.array([rec.cost for rec in self._records], dtype=float)

    def fidelities(self) -> np.ndarray:
        return np.array([rec.fidelity for rec in self._records], dtype=float)

    # serialization -----------------------------------------------------

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n" for rec in self._records)

    @classmethod
    def from_jsonl(cls, text: str, space: ParamSpace | None = None) -> "Archive":
        return cls(EvalRecord.from_dict(json.loads(line), space) for line in text.splitlines() if line.strip())

    def to_csv(self, space: ParamSpace | None = None) -> str:
        """CSV export; config values become one column per parameter."""
        names = space.names if space is not None else (
            list(self._records[0].config.values) if self._records else []
        )
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(FIELDS[1:]) + [f"config.{n}" for n in names])
        for rec in self._records:
            d = rec.to_dict()
            row = [d[k] for k in FIELDS[1:]]
            row += ["" if rec.config.values[n] is None else json.dumps(rec.config.values[n]) for n in names]
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, space: ParamSpace | None = None) -> "Archive":
        rows = list(csv.DictReader(io.StringIO(text)))
        out = []
        for row in rows:
            cfg = {k[len("config."):]: (None if v == "" else json.loads(v)) for k, v in row.items() if k.startswith("config.")}
            d = {k: row[k] for k in FIELDS[1:]}
            d["config"] = cfg
            out.append(EvalRecord.from_dict(d, space))
        return cls(out)
