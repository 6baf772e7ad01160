"""Vocabularies, sparse feature matrices, and the four representations.

Feature values become columns through a frozen first-seen-order vocabulary;
rows are apps. Supported representations: usage (binary presence), frequency
(occurrence counts), contiguous n-grams over token streams, and fixed-length
integer sequences. Hybrid datasets come from column-wise concatenation.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .apk import CallGraph, default_platform_prefixes, is_platform_class
from .base import Estimator
from .errors import (
    ColumnCollision,
    DimensionMismatch,
    EmptyVocabulary,
    NotFittedError,
    RouteExplosion,
    RowMismatch,
)
from .records import FeatureKind, FeatureReport

TokenSource = tuple[str, Sequence[str]]  # (app_id, ordered tokens)


class MatrixKind(enum.Enum):
    BINARY = "Binary"
    COUNT = "Count"
    NUMERIC = "Numeric"


_KIND_BY_NAME = {k.value: k for k in MatrixKind}


@dataclass(frozen=True)
class Vocabulary:
    entries: tuple[str, ...]
    kind: MatrixKind

    def __post_init__(self) -> None:
        if len(set(self.entries)) != len(self.entries):
            raise ColumnCollision("vocabulary names must be unique")

    @property
    def index(self) -> dict[str, int]:
        cached = self.__dict__.get("_index")
        if cached is None:
            cached = {name: i for i, name in enumerate(self.entries)}
            self.__dict__["_index"] = cached
        return cached

    def __len__(self) -> int:
        return len(self.entries)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.value.encode())
        for name in self.entries:
            h.update(b"\x00" + name.encode("utf-8"))
        return h.hexdigest()


def _format_value(value: float, kind: MatrixKind) -> str:
    if kind is MatrixKind.NUMERIC:
        return repr(float(value))
    return str(int(value))


@dataclass
class FeatureMatrix:
    """Sparse rows-by-features matrix with app ids attached."""

    vocab: Vocabulary
    row_ids: list[str]
    cells: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n, p = len(self.row_ids), len(self.vocab)
        for (r, c), v in self.cells.items():
            if not (0 <= r < n and 0 <= c < p):
                raise DimensionMismatch(f"cell ({r},{c}) outside {n}x{p}")
            if self.vocab.kind is MatrixKind.BINARY and v != 1:
                raise DimensionMismatch(f"binary matrix holds value {v!r}")
            if self.vocab.kind is MatrixKind.COUNT and (v != int(v) or v <= 0):
                raise DimensionMismatch(f"count matrix holds value {v!r}")
            if not np.isfinite(v):
                raise DimensionMismatch(f"non-finite cell value at ({r},{c})")

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    @property
    def n_cols(self) -> int:
        return len(self.vocab)

    def toarray(self) -> np.ndarray:
        arr = np.zeros((self.n_rows, self.n_cols), dtype=np.float64)
        for (r, c), v in self.cells.items():
            arr[r, c] = v
        return arr

    def column(self, col: int) -> np.ndarray:
        out = np.zeros(self.n_rows, dtype=np.float64)
        for (r, c), v in self.cells.items():
            if c == col:
                out[r] = v
        return out

    def rows_fingerprint(self) -> str:
        h = hashlib.sha256()
        for rid in self.row_ids:
            h.update(rid.encode("utf-8") + b"\n")
        return h.hexdigest()

    def select_columns(self, cols: Sequence[int]) -> "FeatureMatrix":
        """A new matrix keeping ``cols`` (in the given order) with their names."""
        col_map = {int(c): i for i, c in enumerate(cols)}
        if len(col_map) != len(cols):
            raise DimensionMismatch("duplicate columns in selection")
        for c in col_map:
            if not 0 <= c < self.n_cols:
                raise DimensionMismatch(f"column {c} out of range")
        vocab = Vocabulary(tuple(self.vocab.entries[int(c)] for c in cols), self.vocab.kind)
        cells = {
            (r, col_map[c]): v for (r, c), v in self.cells.items() if c in col_map
        }
        return FeatureMatrix(vocab=vocab, row_ids=list(self.row_ids), cells=cells)

    def select_rows(self, rows: Sequence[int]) -> "FeatureMatrix":
        row_map = {int(r): i for i, r in enumerate(rows)}
        if len(row_map) != len(rows):
            raise DimensionMismatch("duplicate rows in selection")
        for r in row_map:
            if not 0 <= r < self.n_rows:
                raise DimensionMismatch(f"row {r} out of range")
        cells = {
            (row_map[r], c): v for (r, c), v in self.cells.items() if r in row_map
        }
        return FeatureMatrix(
            vocab=self.vocab,
            row_ids=[self.row_ids[int(r)] for r in rows],
            cells=cells,
        )

    def to_text(self) -> str:
        """Deterministic text form: vocab block, sorted cell triples, row ids."""
        lines = [f"#vocab {self.n_cols} {self.vocab.kind.value}"]
        lines.extend(self.vocab.entries)
        for (r, c) in sorted(self.cells):
            lines.append(f"{r} {c} {_format_value(self.cells[(r, c)], self.vocab.kind)}")
        lines.append(f"#rows {self.n_rows}")
        lines.extend(self.row_ids)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureMatrix":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#vocab "):
            raise DimensionMismatch("matrix text missing #vocab header")
        parts = lines[0].split()
        if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in _KIND_BY_NAME:
            raise DimensionMismatch(f"bad #vocab header: {lines[0]!r}")
        n_cols = int(parts[1])
        kind = _KIND_BY_NAME[parts[2]]
        entries = tuple(lines[1 : 1 + n_cols])
        if len(entries) != n_cols:
            raise DimensionMismatch("vocab block shorter than declared")
        pos = 1 + n_cols
        cells: dict[tuple[int, int], float] = {}
        while pos < len(lines) and not lines[pos].startswith("#rows"):
            bits = lines[pos].split()
            if len(bits) != 3:
                raise DimensionMismatch(f"bad cell line: {lines[pos]!r}")
            value = float(bits[2]) if kind is MatrixKind.NUMERIC else int(bits[2])
            cells[(int(bits[0]), int(bits[1]))] = value
            pos += 1
        if pos >= len(lines):
            raise DimensionMismatch("matrix text missing #rows header")
        bits = lines[pos].split()
        if len(bits) != 2 or not bits[1].isdigit():
            raise DimensionMismatch(f"bad #rows header: {lines[pos]!r}")
        n_rows = int(bits[1])
        row_ids = lines[pos + 1 : pos + 1 + n_rows]
        if len(row_ids) != n_rows:
            raise DimensionMismatch("row id block shorter than declared")
        return cls(vocab=Vocabulary(entries, kind), row_ids=list(row_ids), cells=cells)


# ---------------------------------------------------------------------------
# Vocabulary construction


def _record_names(report: FeatureReport, kinds: frozenset[FeatureKind] | None) -> list[str]:
    names = [
        r.line() for r in report.records if kinds is None or r.kind in kinds
    ]
    return sorted(names)


def build_vocab(
    reports: Sequence[FeatureReport],
    kinds: Iterable[FeatureKind] | None = None,
    min_support: int = 1,
    kind: MatrixKind = MatrixKind.BINARY,
) -> Vocabulary:
    """First-seen-order vocabulary over record names in >= min_support reports."""
    kind_filter = frozenset(kinds) if kinds is not None else None
    order: list[str] = []
    support: dict[str, int] = {}
    for report in reports:
        for name in _record_names(report, kind_filter):
            if name not in support:
                order.append(name)
                support[name] = 0
            support[name] += 1
    entries = tuple(name for name in order if support[name] >= min_support)
    if not entries:
        raise EmptyVocabulary(f"no feature meets min_support={min_support}")
    return Vocabulary(entries, kind)


def build_token_vocab(
    sources: Sequence[TokenSource], min_support: int = 1, kind: MatrixKind = MatrixKind.COUNT
) -> Vocabulary:
    """Vocabulary over stream tokens; support counts distinct sources."""
    order: list[str] = []
    support: dict[str, int] = {}
    for _, tokens in sources:
        seen = set()
        for tok in tokens:
            if tok not in support:
                order.append(tok)
                support[tok] = 0
            if tok not in seen:
                support[tok] += 1
                seen.add(tok)
    entries = tuple(name for name in order if support[name] >= min_support)
    if not entries:
        raise EmptyVocabulary(f"no token meets min_support={min_support}")
    return Vocabulary(entries, kind)


# ---------------------------------------------------------------------------
# Representations


def encode_usage(reports: Sequence[FeatureReport], vocab: Vocabulary) -> FeatureMatrix:
    """Binary presence matrix; out-of-vocabulary record values are ignored."""
    index = vocab.index
    cells: dict[tuple[int, int], float] = {}
    row_ids = []
    for i, report in enumerate(reports):
        row_ids.append(report.app_id)
        for record in report.records:
            col = index.get(record.line())
            if col is not None:
                cells[(i, col)] = 1
    binary_vocab = Vocabulary(vocab.entries, MatrixKind.BINARY)
    return FeatureMatrix(vocab=binary_vocab, row_ids=row_ids, cells=cells)


def encode_frequency(reports: Sequence[FeatureReport], vocab: Vocabulary) -> FeatureMatrix:
    """Occurrence-count matrix using each report's record multiplicities."""
    index = vocab.index
    cells: dict[tuple[int, int], float] = {}
    row_ids = []
    for i, report in enumerate(reports):
        row_ids.append(report.app_id)
        for record in report.records:
            col = index.get(record.line())
            if col is not None:
                cells[(i, col)] = report.count(record)
    count_vocab = Vocabulary(vocab.entries, MatrixKind.COUNT)
    return FeatureMatrix(vocab=count_vocab, row_ids=row_ids, cells=cells)


def encode_bags(
    bags: Sequence[Mapping[str, int]],
    vocab: Vocabulary,
    row_ids: Sequence[str],
    usage: bool = False,
) -> FeatureMatrix:
    """Count (or presence) matrix from name->count bags, e.g. n-gram multisets."""
    if len(bags) != len(row_ids):
        raise DimensionMismatch(f"{len(bags)} bags for {len(row_ids)} row ids")
    index = vocab.index
    cells: dict[tuple[int, int], float] = {}
    for i, bag in enumerate(bags):
        for name, count in bag.items():
            col = index.get(name)
            if col is not None and count > 0:
                cells[(i, col)] = 1 if usage else count
    out_kind = MatrixKind.BINARY if usage else MatrixKind.COUNT
    return FeatureMatrix(
        vocab=Vocabulary(vocab.entries, out_kind), row_ids=list(row_ids), cells=cells
    )


def ngrams(tokens: Sequence[str], n: int) -> dict[str, int]:
    """Contiguous n-gram multiset; names are tokens joined with ``|``."""
    if n < 1:
        raise DimensionMismatch(f"n-gram order must be >= 1, got {n}")
    bag: dict[str, int] = {}
    for i in range(max(0, len(tokens) - n + 1)):
        name = "|".join(tokens[i : i + n])
        bag[name] = bag.get(name, 0) + 1
    return bag


def encode_sequence(tokens: Sequence[str], vocab: Vocabulary, max_len: int = 2048) -> np.ndarray:
    """1-based vocab ids, truncated to ``max_len``, right-padded with 0.

    Tokens outside the vocabulary map to 0 (the pad symbol).
    """
    if max_len < 1:
        raise DimensionMismatch(f"max_len must be >= 1, got {max_len}")
    index = vocab.index
    out = np.zeros(max_len, dtype=np.int64)
    for i, tok in enumerate(tokens[:max_len]):
        out[i] = index.get(tok, -1) + 1
    return out


@dataclass
class ApiSequence:
    """One app's ordered route tokens (canonical method references)."""

    app_id: str
    tokens: list[str] = field(default_factory=list)


def extract_api_routes(
    graph: CallGraph,
    platform_prefixes: tuple[str, ...] | None = None,
    cap: int = 10_000,
) -> list[list[str]]:
    """Depth-first routes from each entry point, filtered to platform nodes.

    A node may not repeat within one route (per-route visited set); children
    expand in stored edge order. Each returned route holds the canonical
    names of its platform-API nodes, in traversal order.
    """
    if platform_prefixes is None:
        platform_prefixes = default_platform_prefixes()
    children: dict[int, list[int]] = {}
    for src, dst in graph.edges:
        children.setdefault(src, []).append(dst)

    routes: list[list[int]] = []
    for entry in graph.entry_points:
        stack: list[tuple[int, int, bool]] = [(entry, 0, False)]
        path: list[int] = [entry]
        on_path: set[int] = {entry}
        while stack:
            node, next_child, expanded = stack[-1]
            kids = children.get(node, ())
            advanced = False
            while next_child < len(kids):
                child = kids[next_child]
                next_child += 1
                if child in on_path:
                    continue
                stack[-1] = (node, next_child, True)
                stack.append((child, 0, False))
                path.append(child)
                on_path.add(child)
                advanced = True
                break
            if advanced:
                continue
            stack[-1] = (node, next_child, expanded)
            if not expanded:
                routes.append(list(path))
                if len(routes) > cap:
                    raise RouteExplosion(f"more than {cap} routes")
            stack.pop()
            on_path.discard(path.pop())

    filtered: list[list[str]] = []
    for route in routes:
        filtered.append(
            [
                graph.nodes[i].canonical()
                for i in route
                if is_platform_class(graph.nodes[i].class_name, platform_prefixes)
            ]
        )
    return filtered


def api_sequence(
    graph: CallGraph,
    app_id: str,
    platform_prefixes: tuple[str, ...] | None = None,
    cap: int = 10_000,
) -> ApiSequence:
    """All routes concatenated (entry-point order, then route order)."""
    tokens: list[str] = []
    for route in extract_api_routes(graph, platform_prefixes, cap):
        tokens.extend(route)
    return ApiSequence(app_id=app_id, tokens=tokens)


# ---------------------------------------------------------------------------
# Hybrid fusion


def concat_matrices(
    left: FeatureMatrix,
    right: FeatureMatrix,
    left_tag: str | None = None,
    right_tag: str | None = None,
) -> FeatureMatrix:
    """Column-wise concatenation over identical row ids.

    Tags, when given, prefix the vocabulary names (``tag:name``) so sources
    with overlapping names stay distinct; an untagged name collision raises
    :class:`ColumnCollision`.
    """
    if left.row_ids != right.row_ids:
        for a, b in zip(left.row_ids, right.row_ids):
            if a != b:
                raise RowMismatch(f"row ids differ at {a!r} vs {b!r}")
        raise RowMismatch(
            f"row counts differ: {left.n_rows} vs {right.n_rows}"
        )
    left_names = [f"{left_tag}:{n}" if left_tag else n for n in left.vocab.entries]
    right_names = [f"{right_tag}:{n}" if right_tag else n for n in right.vocab.entries]
    names = tuple(left_names + right_names)
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})[0]
        raise ColumnCollision(f"duplicate column name {dup!r}; pass source tags")
    kind = left.vocab.kind if left.vocab.kind is right.vocab.kind else MatrixKind.NUMERIC
    if left.n_cols == 0:
        kind = right.vocab.kind
    elif right.n_cols == 0:
        kind = left.vocab.kind
    cells = dict(left.cells)
    for (r, c), v in right.cells.items():
        cells[(r, c + left.n_cols)] = v
    return FeatureMatrix(vocab=Vocabulary(names, kind), row_ids=list(left.row_ids), cells=cells)


def tcp_feature_matrix(rows: Sequence[tuple[str, Sequence[float]]]) -> FeatureMatrix:
    """Numeric matrix from (app_id, 7-value TCP feature row) pairs."""
    from .pcap import TCP_FEATURE_NAMES

    vocab = Vocabulary(tuple(TCP_FEATURE_NAMES), MatrixKind.NUMERIC)
    cells: dict[tuple[int, int], float] = {}
    row_ids = []
    for i, (app_id, values) in enumerate(rows):
        if len(values) != len(TCP_FEATURE_NAMES):
            raise DimensionMismatch(f"expected {len(TCP_FEATURE_NAMES)} values, got {len(values)}")
        row_ids.append(app_id)
        for j, v in enumerate(values):
            if v != 0:
                cells[(i, j)] = float(v)
    return FeatureMatrix(vocab=vocab, row_ids=row_ids, cells=cells)


# ---------------------------------------------------------------------------
# Estimator wrappers


class UsageEncoder(Estimator):
    """fit() freezes the vocabulary; transform() emits the binary matrix."""

    def __init__(self, kinds: tuple[FeatureKind, ...] | None = None, min_support: int = 1) -> None:
        self.kinds = kinds
        self.min_support = min_support
        self.vocab_: Vocabulary | None = None

    def fit(self, reports: Sequence[FeatureReport], y: object = None) -> "UsageEncoder":
        self.vocab_ = build_vocab(reports, self.kinds, self.min_support, MatrixKind.BINARY)
        return self

    def transform(self, reports: Sequence[FeatureReport]) -> FeatureMatrix:
        self._check_fitted("vocab_")
        return encode_usage(reports, self.vocab_)

    def fit_transform(self, reports: Sequence[FeatureReport], y: object = None) -> FeatureMatrix:
        return self.fit(reports).transform(reports)


class FrequencyEncoder(Estimator):
    """Like :class:`UsageEncoder` but emits occurrence counts."""

    def __init__(self, kinds: tuple[FeatureKind, ...] | None = None, min_support: int = 1) -> None:
        self.kinds = kinds
        self.min_support = min_support
        self.vocab_: Vocabulary | None = None

    def fit(self, reports: Sequence[FeatureReport], y: object = None) -> "FrequencyEncoder":
        self.vocab_ = build_vocab(reports, self.kinds, self.min_support, MatrixKind.COUNT)
        return self

    def transform(self, reports: Sequence[FeatureReport]) -> FeatureMatrix:
        self._check_fitted("vocab_")
        return encode_frequency(reports, self.vocab_)

    def fit_transform(self, reports: Sequence[FeatureReport], y: object = None) -> FeatureMatrix:
        return self.fit(reports).transform(reports)


class NgramEncoder(Estimator):
    """n-gram bag encoder over (app_id, tokens) sources."""

    def __init__(self, n: int = 2, min_support: int = 1, representation: str = "frequency") -> None:
        if representation not in ("usage", "frequency"):
            raise ValueError(f"unknown representation {representation!r}")
        self.n = n
        self.min_support = min_support
        self.representation = representation
        self.vocab_: Vocabulary | None = None

    def _bags(self, sources: Sequence[TokenSource]) -> list[dict[str, int]]:
        return [ngrams(tokens, self.n) for _, tokens in sources]

    def fit(self, sources: Sequence[TokenSource], y: object = None) -> "NgramEncoder":
        named = [(app_id, sorted(bag)) for (app_id, _), bag in zip(sources, self._bags(sources))]
        self.vocab_ = build_token_vocab(named, self.min_support, MatrixKind.COUNT)
        return self

    def transform(self, sources: Sequence[TokenSource]) -> FeatureMatrix:
        self._check_fitted("vocab_")
        return encode_bags(
            self._bags(sources),
            self.vocab_,
            [app_id for app_id, _ in sources],
            usage=self.representation == "usage",
        )

    def fit_transform(self, sources: Sequence[TokenSource], y: object = None) -> FeatureMatrix:
        return self.fit(sources).transform(sources)


class SequenceEncoder(Estimator):
    """Fixed-length 1-based-index sequence encoder over token sources."""

    def __init__(self, max_len: int = 2048, min_support: int = 1) -> None:
        self.max_len = max_len
        self.min_support = min_support
        self.vocab_: Vocabulary | None = None

    def fit(self, sources: Sequence[TokenSource], y: object = None) -> "SequenceEncoder":
        self.vocab_ = build_token_vocab(sources, self.min_support, MatrixKind.NUMERIC)
        return self

    def transform(self, sources: Sequence[TokenSource]) -> FeatureMatrix:
        self._check_fitted("vocab_")
        width = len(str(self.max_len - 1))
        position_vocab = Vocabulary(
            tuple(f"t{i:0{width}d}" for i in range(self.max_len)), MatrixKind.NUMERIC
        )
        cells: dict[tuple[int, int], float] = {}
        row_ids = []
        for i, (app_id, tokens) in enumerate(sources):
            row_ids.append(app_id)
            vec = encode_sequence(tokens, self.vocab_, self.max_len)
            for j in np.flatnonzero(vec):
                cells[(i, int(j))] = float(vec[j])
        return FeatureMatrix(vocab=position_vocab, row_ids=row_ids, cells=cells)

    def fit_transform(self, sources: Sequence[TokenSource], y: object = None) -> FeatureMatrix:
        return self.fit(sources).transform(sources)
