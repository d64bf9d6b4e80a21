"""Mixed, hierarchical search spaces and points within them.

A :class:`ParamSpace` is an ordered collection of :class:`ParamDef` records.
Each numeric parameter is treated by samplers and surrogates on its declared
*scale*; the encoded representation maps every axis into ``[0, 1]``:

* numeric axes: the scale transform, normalized to the bounds;
* categorical axes: the level index divided by ``n_levels - 1``;
* inactive axes (unmet condition): the reserved code ``-1``.

Inactive parameters carry ``None`` as their value inside a :class:`Config`.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

KINDS = ("continuous", "integer", "categorical")
SCALES = ("linear", "log", "loglog", "reciprocal")

INACTIVE = -1.0


class SpaceError(ValueError):
    """Raised for an invalid parameter definition or search space."""


class EncodingError(ValueError):
    """Raised when a config or vector does not fit its search space."""


def _forward(scale: str, x):
    if scale == "linear":
        return x
    if scale == "log":
        return np.log(x)
    if scale == "loglog":
        return np.log(np.log(x))
    # reciprocal: increasing transform, finite at x = inf
    with np.errstate(divide="ignore"):
        return -1.0 / np.asarray(x, dtype=float)


def _inverse(scale: str, t):
    if scale == "linear":
        return t
    if scale == "log":
        return np.exp(t)
    if scale == "loglog":
        return np.exp(np.exp(t))
    with np.errstate(divide="ignore"):
        return -1.0 / np.asarray(t, dtype=float)


@dataclass(frozen=True)
class ParamDef:
    """One axis of a search space.

    ``condition`` is ``(parent_name, allowed_parent_levels)``; the parameter
    is active only when the (categorical) parent is active and takes one of
    the allowed levels.
    """

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    levels: tuple = ()
    scale: str = "linear"
    condition: tuple[str, frozenset] | None = None

    def __post_init__(self) -> None:
        if not self.name or not re.fullmatch(r"[A-Za-z_][\w.\-]*", self.name):
            raise SpaceError(f"invalid parameter name {self.name!r}")
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.scale not in SCALES:
            raise SpaceError(f"{self.name}: unknown scale {self.scale!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise SpaceError(f"{self.name}: categorical needs levels")
            if len(set(map(_level_key, self.levels))) != len(self.levels):
                raise SpaceError(f"{self.name}: duplicate levels")
            if self.scale != "linear":
                raise SpaceError(f"{self.name}: categorical axes have no scale")
        else:
            lo, hi = self.lower, self.upper
            if lo is None or hi is None or math.isnan(lo) or math.isnan(hi):
                raise SpaceError(f"{self.name}: numeric bounds required")
            if not lo < hi:
                raise SpaceError(f"{self.name}: need lower < upper")
            if math.isinf(lo) or (math.isinf(hi) and self.scale != "reciprocal"):
                raise SpaceError(f"{self.name}: infinite bound")
            if self.scale in ("log", "reciprocal") and lo <= 0:
                raise SpaceError(f"{self.name}: {self.scale} scale needs lower > 0")
            if self.scale == "loglog" and lo <= 1:
                raise SpaceError(f"{self.name}: loglog scale needs lower > 1")
            if self.kind == "integer":
                if not (float(lo).is_integer() and float(hi).is_integer()):
                    raise SpaceError(f"{self.name}: integer bounds must be integral")
                if self.scale == "loglog" and lo - 0.5 <= 1:
                    raise SpaceError(f"{self.name}: integer loglog needs lower >= 3")
        if self.condition is not None:
            parent, allowed = self.condition
            if not allowed:
                raise SpaceError(f"{self.name}: empty condition level set")
            object.__setattr__(self, "condition", (parent, frozenset(allowed)))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    # scalar transforms -------------------------------------------------

    def to_unit(self, value: Any) -> float:
        """Map an active value to its encoded coordinate in ``[0, 1]``."""
        if self.kind == "categorical":
            idx = self.level_index(value)
            return idx / (self.n_levels - 1) if self.n_levels > 1 else 0.0
        v = float(value)
        if not (self.lower <= v <= self.upper):
            raise EncodingError(f"{self.name}: {value!r} outside [{self.lower}, {self.upper}]")
        if self.kind == "integer" and not v.is_integer():
            raise EncodingError(f"{self.name}: {value!r} is not an integer")
        t_lo, t_hi = _forward(self.scale, self.lower), _forward(self.scale, self.upper)
        u = (float(_forward(self.scale, v)) - t_lo) / (t_hi - t_lo)
        return min(max(u, 0.0), 1.0)

    def from_unit(self, u: float) -> Any:
        """Inverse of :meth:`to_unit` (integers and levels are rounded)."""
        if not (-1e-9 <= u <= 1 + 1e-9):
            raise EncodingError(f"{self.name}: coordinate {u!r} outside [0, 1]")
        u = min(max(float(u), 0.0), 1.0)
        if self.kind == "categorical":
            return self.levels[int(math.floor(u * (self.n_levels - 1) + 0.5))]
        if u == 0.0:
            return int(self.lower) if self.kind == "integer" else float(self.lower)
        if u == 1.0:
            return int(self.upper) if self.kind == "integer" else float(self.upper)
        t_lo, t_hi = _forward(self.scale, self.lower), _forward(self.scale, self.upper)
        x = float(_inverse(self.scale, t_lo + u * (t_hi - t_lo)))
        if self.kind == "integer":
            return int(min(max(math.floor(x + 0.5), self.lower), self.upper))
        return min(max(x, self.lower), self.upper)

    def level_index(self, value: Any) -> int:
        key = _level_key(value)
        for i, lv in enumerate(self.levels):
            if _level_key(lv) == key:
                return i
        raise EncodingError(f"{self.name}: {value!r} is not a level")

    # vectorized sampling ------------------------------------------------

    def sample_unit(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` encoded coordinates uniformly on the declared scale."""
        if self.kind == "categorical":
            idx = rng.integers(0, self.n_levels, size=n)
            return idx / (self.n_levels - 1) if self.n_levels > 1 else np.zeros(n)
        if self.kind == "continuous":
            return rng.random(n)
        # integers: uniform on the scale over [lower - 1/2, upper + 1/2], rounded,
        # out-of-bounds draws rejected
        t_lo = _forward(self.scale, self.lower - 0.5)
        t_hi = _forward(self.scale, self.upper + 0.5)
        out = np.empty(n)
        todo = np.arange(n)
        while todo.size:
            x = np.floor(_inverse(self.scale, t_lo + rng.random(todo.size) * (t_hi - t_lo)) + 0.5)
            ok = (x >= self.lower) & (x <= self.upper)
            out[todo[ok]] = x[ok]
            todo = todo[~ok]
        return self.values_to_unit(out)

    def values_to_unit(self, x: np.ndarray) -> np.ndarray:
        t_lo, t_hi = _forward(self.scale, self.lower), _forward(self.scale, self.upper)
        return np.clip((_forward(self.scale, x) - t_lo) / (t_hi - t_lo), 0.0, 1.0)

    def snap_unit(self, u: np.ndarray) -> np.ndarray:
        """Round encoded coordinates onto representable values."""
        u = np.clip(u, 0.0, 1.0)
        if self.kind == "continuous":
            return u
        if self.kind == "categorical":
            if self.n_levels == 1:
                return np.zeros_like(u)
            return np.floor(u * (self.n_levels - 1) + 0.5) / (self.n_levels - 1)
        t_lo, t_hi = _forward(self.scale, self.lower), _forward(self.scale, self.upper)
        x = np.floor(_inverse(self.scale, t_lo + u * (t_hi - t_lo)) + 0.5)
        return self.values_to_unit(np.clip(x, self.lower, self.upper))


def _level_key(value: Any) -> tuple:
    # keeps True distinct from 1 and "1"
    return (type(value).__name__, value)


def continuous(name, lower, upper, scale="linear", condition=None) -> ParamDef:
    return ParamDef(name, "continuous", float(lower), float(upper), (), scale, condition)


def integer(name, lower, upper, scale="linear", condition=None) -> ParamDef:
    return ParamDef(name, "integer", float(lower), float(upper), (), scale, condition)


def categorical(name, levels, condition=None) -> ParamDef:
    return ParamDef(name, "categorical", None, None, tuple(levels), "linear", condition)


class Config:
    """A point in a :class:`ParamSpace`.

    ``values`` maps every parameter name to its value, ``None`` for inactive
    parameters; ``active`` holds the matching activity flags.
    """

    __slots__ = ("values", "active", "_key")

    def __init__(self, values: Mapping[str, Any], active: Mapping[str, bool] | None = None):
        self.values = dict(values)
        if active is None:
            active = {k: v is not None for k, v in self.values.items()}
        self.active = dict(active)
        self._key = tuple((k, _level_key(v)) for k, v in self.values.items())

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def key(self) -> tuple:
        """Hashable identity of the configuration."""
        return self._key

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Config) and self._key == other._key and self.active == other.active

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"Config({self.values!r})"


@dataclass(frozen=True)
class ParamSpace:
    params: tuple[ParamDef, ...]
    _index: dict = field(init=False, repr=False, compare=False)
    _order: tuple = field(init=False, repr=False, compare=False)

    def __init__(self, params: Iterable[ParamDef]):
        object.__setattr__(self, "params", tuple(params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpaceError("duplicate parameter names")
        index = {n: i for i, n in enumerate(names)}
        object.__setattr__(self, "_index", index)
        for p in self.params:
            if p.condition is None:
                continue
            parent = p.condition[0]
            if parent not in index:
                raise SpaceError(f"{p.name}: unknown parent {parent!r}")
            par = self.params[index[parent]]
            if not par.is_categorical:
                raise SpaceError(f"{p.name}: parent {parent!r} is not categorical")
            for lv in p.condition[1]:
                par.level_index(lv)
        object.__setattr__(self, "_order", self._topological_order())

    def _topological_order(self) -> tuple[int, ...]:
        order: list[int] = []
        state: dict[int, int] = {}

        def visit(i: int) -> None:
            if state.get(i) == 2:
                return
            if state.get(i) == 1:
                raise SpaceError("dependency cycle in conditions")
            state[i] = 1
            cond = self.params[i].condition
            if cond is not None:
                visit(self._index[cond[0]])
            state[i] = 2
            order.append(i)

        for i in range(len(self.params)):
            visit(i)
        return tuple(order)

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def is_categorical(self) -> np.ndarray:
        return np.array([p.is_categorical for p in self.params], dtype=bool)

    def __getitem__(self, name: str) -> ParamDef:
        return self.params[self._index[name]]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.params)

    # activity ---------------------------------------------------------

    def _condition_met(self, p: ParamDef, values: Mapping[str, Any], active: Mapping[str, bool]) -> bool:
        if p.condition is None:
            return True
        parent, allowed = p.condition
        if not active.get(parent, False):
            return False
        key = _level_key(values[parent])
        return any(_level_key(lv) == key for lv in allowed)

    def make_config(self, values: Mapping[str, Any]) -> Config:
        """Build a valid Config, resolving activity top-down.

        Values for parameters whose condition is unmet are replaced by the
        inactive sentinel; missing values for active parameters are an error.
        """
        out: dict[str, Any] = {}
        active: dict[str, bool] = {}
        for i in self._order:
            p = self.params[i]
            act = self._condition_met(p, out, active)
            active[p.name] = act
            if act:
                if values.get(p.name) is None:
                    raise EncodingError(f"missing value for active parameter {p.name!r}")
                v = values[p.name]
                if p.is_categorical:
                    v = p.levels[p.level_index(v)]
                else:
                    p.to_unit(v)
                    v = int(v) if p.kind == "integer" else float(v)
                out[p.name] = v
            else:
                out[p.name] = None
        return Config({n: out[n] for n in self.names}, {n: active[n] for n in self.names})

    def validate(self, c: Config) -> None:
        if set(c.values) != set(self.names):
            raise EncodingError("config parameters do not match the space")
        for i in self._order:
            p = self.params[i]
            act = self._condition_met(p, c.values, c.active)
            if c.active.get(p.name) != act:
                raise EncodingError(f"{p.name}: activity flag inconsistent with condition")
            if act:
                if c.values[p.name] is None:
                    raise EncodingError(f"{p.name}: active parameter without value")
                p.to_unit(c.values[p.name])
            elif c.values[p.name] is not None:
                raise EncodingError(f"{p.name}: inactive parameter must hold the sentinel")

    # encoding ---------------------------------------------------------

    def encode(self, c: Config) -> np.ndarray:
        if set(c.values) != set(self.names):
            raise EncodingError("config parameters do not match the space")
        out = np.empty(self.dim)
        for i, p in enumerate(self.params):
            v = c.values[p.name]
            out[i] = INACTIVE if (v is None or not c.active.get(p.name, True)) else p.to_unit(v)
        return out

    def encode_many(self, configs: Sequence[Config]) -> np.ndarray:
        if not configs:
            return np.empty((0, self.dim))
        return np.vstack([self.encode(c) for c in configs])

    def decode(self, v: Sequence[float]) -> Config:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise EncodingError(f"expected vector of length {self.dim}, got shape {v.shape}")
        if np.isnan(v).any():
            raise EncodingError("NaN in encoded vector")
        values = {}
        for p, u in zip(self.params, v):
            values[p.name] = None if u < 0 else p.from_unit(u)
        c = Config(values)
        self.validate(c)
        return c

    def decode_many(self, X: np.ndarray) -> list[Config]:
        return [self.decode(row) for row in np.atleast_2d(X)]

    # vectorized sampling in encoded space ------------------------------

    def resolve_activity(self, X: np.ndarray, fill: np.ndarray | None = None) -> np.ndarray:
        """Canonicalize encoded rows: snap values, mark unmet conditions inactive.

        Entries that are inactive in ``X`` but become active are taken from
        ``fill`` (which must then be given).
        """
        X = np.array(X, dtype=float, copy=True)
        for i in self._order:
            p = self.params[i]
            col = X[:, i]
            if p.condition is None:
                act = np.ones(len(X), dtype=bool)
            else:
                j = self._index[p.condition[0]]
                par = self.params[j]
                pcol = X[:, j]
                allowed = np.array([par.level_index(lv) for lv in p.condition[1]])
                lvl = np.floor(np.clip(pcol, 0, 1) * max(par.n_levels - 1, 0) + 0.5)
                act = (pcol >= 0) & np.isin(lvl, allowed)
            need = act & (col < 0)
            if need.any():
                if fill is None:
                    raise EncodingError(f"{p.name}: activated without a fill value")
                col[need] = fill[need, i]
            col[act] = p.snap_unit(col[act])
            col[~act] = INACTIVE
            X[:, i] = col
        return X

    def sample_encoded(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` uniform configurations directly in encoded form."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        X = np.empty((n, self.dim))
        for i, p in enumerate(self.params):
            X[:, i] = p.sample_unit(n, rng)
        return self.resolve_activity(X)

    def distance_kinds(self) -> np.ndarray:
        return self.is_categorical

    # text format -------------------------------------------------------

    def to_text(self) -> str:
        return "".join(format_param(p) + "\n" for p in self.params)

    @classmethod
    def from_text(cls, text: str) -> "ParamSpace":
        params = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = strip_comment(raw).strip()
            if not line:
                continue
            try:
                params.append(parse_param(line))
            except (SpaceError, ValueError) as e:
                raise SpaceError(f"line {lineno}: {e}") from None
        return cls(params)


def sample_uniform(space: ParamSpace, n: int, rng: np.random.Generator) -> list[Config]:
    """Draw ``n`` independent configurations uniformly on each axis's scale."""
    return space.decode_many(space.sample_encoded(n, rng)) if n else []


def encode(space: ParamSpace, c: Config) -> np.ndarray:
    return space.encode(c)


def decode(space: ParamSpace, v: Sequence[float]) -> Config:
    return space.decode(v)


# ----------------------------------------------------------------------
# declarative text format, one record per line:
#
#   <name> continuous [<lower>, <upper>] <scale> [if <parent> in {<lv>, ...}]
#   <name> integer    [<lower>, <upper>] <scale> [if <parent> in {<lv>, ...}]
#   <name> categorical {<lv>, ...}              [if <parent> in {<lv>, ...}]
#
# Levels are JSON scalars ("a", 3, true) or bare identifiers; "#" starts a
# comment; bounds accept "inf".

_LINE = re.compile(
    r"^(?P<name>\S+)\s+(?P<kind>continuous|integer|categorical)\s+"
    r"(?:\[(?P<lo>[^,\]]+),(?P<hi>[^\]]+)\]\s*(?P<scale>\w+)?|\{(?P<levels>[^}]*)\})"
    r"(?:\s+if\s+(?P<parent>\S+)\s+in\s+\{(?P<allowed>[^}]*)\})?\s*$"
)
_BARE = re.compile(r"[A-Za-z_][\w.\-]*")


def strip_comment(raw: str) -> str:
    quoted = False
    for i, ch in enumerate(raw):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return raw[:i]
    return raw


def _parse_levels(text: str) -> tuple:
    out = []
    for tok in _split_levels(text):
        tok = tok.strip()
        if not tok:
            raise SpaceError("empty level")
        try:
            out.append(json.loads(tok))
        except json.JSONDecodeError:
            if not _BARE.fullmatch(tok):
                raise SpaceError(f"bad level token {tok!r}") from None
            out.append(tok)
    return tuple(out)


def _split_levels(text: str) -> list[str]:
    parts, buf, quoted = [], [], False
    for ch in text:
        if ch == '"':
            quoted = not quoted
        if ch == "," and not quoted:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def _format_level(v: Any) -> str:
    if isinstance(v, str) and _BARE.fullmatch(v) and v not in ("true", "false", "null"):
        return v
    return json.dumps(v)


def _format_number(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def parse_param(line: str) -> ParamDef:
    m = _LINE.match(line.strip())
    if not m:
        raise SpaceError(f"cannot parse {line!r}")
    cond = None
    if m["parent"]:
        cond = (m["parent"], frozenset(_parse_levels(m["allowed"])))
    if m["kind"] == "categorical":
        if m["levels"] is None:
            raise SpaceError("categorical needs {levels}")
        return ParamDef(m["name"], "categorical", levels=_parse_levels(m["levels"]), condition=cond)
    if m["lo"] is None:
        raise SpaceError("numeric parameter needs [lower, upper]")
    return ParamDef(
        m["name"], m["kind"], float(m["lo"]), float(m["hi"]), (), m["scale"] or "linear", cond
    )


def format_param(p: ParamDef) -> str:
    if p.is_categorical:
        body = "{" + ", ".join(_format_level(v) for v in p.levels) + "}"
    else:
        body = f"[{_format_number(p.lower)}, {_format_number(p.upper)}] {p.scale}"
    out = f"{p.name} {p.kind} {body}"
    if p.condition is not None:
        parent, allowed = p.condition
        lv = sorted(allowed, key=lambda v: (type(v).__name__, str(v)))
        out += f" if {parent} in {{" + ", ".join(_format_level(v) for v in lv) + "}"
    return out
