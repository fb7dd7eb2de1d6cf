"""Sparse binary LDPC code model: parity-check matrices, Tanner graphs,
array-based and lifted quasi-cyclic constructions, and alist I/O.

Conventions
-----------
* ``sigma^s`` is the p x p identity cyclically left-shifted by s positions:
  entry (i, j) = 1 iff j == (i + s) mod p.
* Edges are numbered in (check, variable) lexicographic order and neighbor
  lists are sorted ascending; this canonical ordering keeps downstream
  cluster-state indices reproducible across runs.
* alist files follow the MacKay convention: "n m" header, max degrees,
  per-column then per-row degree lists, then 1-based neighbor lists.
  Zero padding is emitted on write and tolerated on read.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class AlistFormatError(ValueError):
    """Raised for malformed or inconsistent alist input."""


class LiftSpecError(ValueError):
    """Raised when a lifting table does not match its base matrix."""


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


def gf2_rank(bitrows: list[int]) -> int:
    """Rank over GF(2) of rows given as integer bitmasks."""
    pivots: dict[int, int] = {}
    rank = 0
    for mask in bitrows:
        while mask:
            b = mask.bit_length() - 1
            if b in pivots:
                mask ^= pivots[b]
            else:
                pivots[b] = mask
                rank += 1
                break
    return rank


@dataclass(frozen=True, eq=False)
class ParityCheckMatrix:
    """Sparse binary parity-check matrix with m check rows and n bit columns.

    ``rows``/``cols`` hold the coordinates of the 1-entries sorted by
    (row, col). Every row and column must contain at least one entry and
    duplicates are rejected.
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def from_entries(cls, m: int, n: int, entries) -> "ParityCheckMatrix":
        if m < 1 or n < 1:
            raise ValueError(f"matrix shape must be positive, got {m}x{n}")
        ent = sorted((int(r), int(c)) for r, c in entries)
        if not ent:
            raise ValueError("parity-check matrix must have at least one entry")
        rows = np.array([e[0] for e in ent], dtype=np.int64)
        cols = np.array([e[1] for e in ent], dtype=np.int64)
        if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
            raise ValueError("entry position out of bounds")
        if len(set(ent)) != len(ent):
            raise ValueError("duplicate entry positions")
        if len(np.unique(rows)) != m:
            raise ValueError("every check row needs at least one entry")
        if len(np.unique(cols)) != n:
            raise ValueError("every bit column needs at least one entry")
        obj = cls(m=m, n=n, rows=rows, cols=cols)
        rows.setflags(write=False)
        cols.setflags(write=False)
        return obj

    @classmethod
    def from_dense(cls, arr) -> "ParityCheckMatrix":
        a = np.asarray(arr)
        r, c = np.nonzero(a)
        return cls.from_entries(a.shape[0], a.shape[1], zip(r, c))

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        h[self.rows, self.cols] = 1
        return h

    @property
    def num_edges(self) -> int:
        return len(self.rows)

    @cached_property
    def rank(self) -> int:
        masks = [0] * self.m
        for r, c in zip(self.rows, self.cols):
            masks[r] |= 1 << int(c)
        return gf2_rank(masks)

    @property
    def rate(self) -> float:
        """Design rate (n - rank(H)) / n."""
        return (self.n - self.rank) / self.n

    @cached_property
    def fingerprint(self) -> str:
        """sha256 over the canonical (m, n, sorted entries) serialization."""
        h = hashlib.sha256()
        h.update(f"{self.m} {self.n}".encode())
        h.update(np.ascontiguousarray(self.rows).tobytes())
        h.update(np.ascontiguousarray(self.cols).tobytes())
        return h.hexdigest()

    def entries(self):
        return zip(self.rows.tolist(), self.cols.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return (
            self.m == other.m
            and self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
        )

    def __hash__(self) -> int:
        return hash((self.m, self.n, self.fingerprint))

    def __repr__(self) -> str:
        return f"ParityCheckMatrix({self.m}x{self.n}, {self.num_edges} entries)"


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Bipartite adjacency of a parity-check matrix.

    ``edge_cn``/``edge_vn`` enumerate edges in canonical (check, variable)
    order; ``cn_neighbors[c]`` and ``vn_neighbors[v]`` are sorted ascending
    and are mutually consistent transposes.
    """

    matrix: ParityCheckMatrix
    cn_neighbors: tuple
    vn_neighbors: tuple
    edge_cn: np.ndarray
    edge_vn: np.ndarray
    cn_edge_ids: tuple
    vn_edge_ids: tuple

    @classmethod
    def from_matrix(cls, matrix: ParityCheckMatrix) -> "TannerGraph":
        m, n = matrix.m, matrix.n
        edge_cn = np.ascontiguousarray(matrix.rows)
        edge_vn = np.ascontiguousarray(matrix.cols)
        cn_nb = [[] for _ in range(m)]
        vn_nb = [[] for _ in range(n)]
        cn_eid = [[] for _ in range(m)]
        vn_eid = [[] for _ in range(n)]
        for e, (c, v) in enumerate(zip(edge_cn.tolist(), edge_vn.tolist())):
            cn_nb[c].append(v)
            cn_eid[c].append(e)
            vn_nb[v].append(c)
            vn_eid[v].append(e)
        return cls(
            matrix=matrix,
            cn_neighbors=tuple(np.array(x, dtype=np.int64) for x in cn_nb),
            vn_neighbors=tuple(np.array(x, dtype=np.int64) for x in vn_nb),
            edge_cn=edge_cn,
            edge_vn=edge_vn,
            cn_edge_ids=tuple(np.array(x, dtype=np.int64) for x in cn_eid),
            vn_edge_ids=tuple(np.array(x, dtype=np.int64) for x in vn_eid),
        )

    @property
    def m(self) -> int:
        return self.matrix.m

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def num_edges(self) -> int:
        return self.matrix.num_edges

    @cached_property
    def _edge_lookup(self) -> dict:
        return {
            (int(c), int(v)): e
            for e, (c, v) in enumerate(zip(self.edge_cn, self.edge_vn))
        }

    def edge_id(self, c: int, v: int) -> int:
        return self._edge_lookup[(c, v)]

    def cn_degree(self, c: int) -> int:
        return len(self.cn_neighbors[c])

    def vn_degree(self, v: int) -> int:
        return len(self.vn_neighbors[v])


def build_ab_code(gamma: int, p: int) -> ParityCheckMatrix:
    """Array-based (gamma, p) QC-LDPC parity-check matrix.

    Block (r, c) of the gamma*p x p^2 matrix is sigma^(r*c); column weight
    is exactly gamma and row weight exactly p.
    """
    if not is_prime(p):
        raise ValueError(f"p must be prime, got {p}")
    if not 2 <= gamma <= p:
        raise ValueError(f"gamma must satisfy 2 <= gamma <= p, got gamma={gamma}")
    entries = []
    for r in range(gamma):
        for c in range(p):
            shift = (r * c) % p
            for i in range(p):
                entries.append((r * p + i, c * p + (i + shift) % p))
    return ParityCheckMatrix.from_entries(gamma * p, p * p, entries)


@dataclass(frozen=True)
class LiftSpec:
    """Circulant lifting table: per-base-entry shifts plus the lift factor.

    ``shifts`` maps (base_row, base_col) to either an integer circulant
    shift in [0, lift_factor) or an explicit permutation (tuple pi where
    block row i connects to block column pi[i]). ``punctured_cols`` is a
    static list of base columns recorded for rate-matching bookkeeping;
    it does not alter the lifted matrix.
    """

    lift_factor: int
    shifts: dict
    punctured_cols: tuple = ()

    def __post_init__(self):
        if self.lift_factor < 1:
            raise LiftSpecError("lift factor must be >= 1")
        for key, val in self.shifts.items():
            if isinstance(val, (int, np.integer)):
                if not 0 <= val < self.lift_factor:
                    raise LiftSpecError(
                        f"shift {val} at {key} outside [0, {self.lift_factor})"
                    )
            else:
                perm = tuple(int(x) for x in val)
                if sorted(perm) != list(range(self.lift_factor)):
                    raise LiftSpecError(f"entry {key} is not a permutation")


def parse_lift_spec(text: str) -> LiftSpec:
    """Parse the plain-text lifting table.

    Format: '#' comments; a ``lift_factor L`` line; optional
    ``punctured_cols j0 j1 ...`` line; then one ``row col shift`` triple
    per line.
    """
    lift_factor = None
    punctured: tuple = ()
    shifts: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "lift_factor":
            lift_factor = int(parts[1])
        elif parts[0] == "punctured_cols":
            punctured = tuple(int(x) for x in parts[1:])
        else:
            if len(parts) != 3:
                raise LiftSpecError(f"line {lineno}: expected 'row col shift'")
            r, c, s = (int(x) for x in parts)
            if (r, c) in shifts:
                raise LiftSpecError(f"line {lineno}: duplicate entry ({r}, {c})")
            shifts[(r, c)] = s
    if lift_factor is None:
        raise LiftSpecError("missing 'lift_factor' line")
    return LiftSpec(lift_factor=lift_factor, shifts=shifts, punctured_cols=punctured)


def format_lift_spec(spec: LiftSpec) -> str:
    lines = [f"lift_factor {spec.lift_factor}"]
    if spec.punctured_cols:
        lines.append("punctured_cols " + " ".join(str(c) for c in spec.punctured_cols))
    for (r, c) in sorted(spec.shifts):
        val = spec.shifts[(r, c)]
        if not isinstance(val, (int, np.integer)):
            raise LiftSpecError("only integer shifts can be serialized")
        lines.append(f"{r} {c} {val}")
    return "\n".join(lines) + "\n"


def lift_code(
    base: ParityCheckMatrix,
    lift_factor: int,
    lift_spec: LiftSpec | None = None,
    rng_seed: int | None = None,
) -> ParityCheckMatrix:
    """Expand every nonzero base entry into an L x L permutation block.

    With ``lift_spec`` the blocks are the circulants (or explicit
    permutations) it prescribes; the table must cover every nonzero base
    entry. Without a spec, blocks are uniformly random permutations drawn
    from a generator keyed by ``rng_seed``, base entries processed in
    canonical order so the result is seed-deterministic.
    """
    if lift_factor < 1:
        raise ValueError("lift factor must be >= 1")
    if lift_spec is not None:
        if lift_spec.lift_factor != lift_factor:
            raise LiftSpecError(
                f"spec lift factor {lift_spec.lift_factor} != requested {lift_factor}"
            )
        base_entries = set(base.entries())
        missing = base_entries - set(lift_spec.shifts)
        if missing:
            raise LiftSpecError(f"lifting table misses base entries: {sorted(missing)[:5]}")
        extra = set(lift_spec.shifts) - base_entries
        if extra:
            raise LiftSpecError(f"lifting table labels zero entries: {sorted(extra)[:5]}")
    rng = np.random.default_rng(rng_seed)
    L = lift_factor
    entries = []
    for r, c in base.entries():
        if lift_spec is not None:
            val = lift_spec.shifts[(r, c)]
            if isinstance(val, (int, np.integer)):
                perm = [(i + int(val)) % L for i in range(L)]
            else:
                perm = list(val)
        else:
            perm = rng.permutation(L).tolist()
        for i in range(L):
            entries.append((r * L + i, c * L + perm[i]))
    return ParityCheckMatrix.from_entries(base.m * L, base.n * L, entries)


def load_alist(text: str) -> ParityCheckMatrix:
    """Parse an alist document into a ParityCheckMatrix."""
    tokens = text.split()
    pos = 0

    def take() -> int:
        nonlocal pos
        if pos >= len(tokens):
            raise AlistFormatError("truncated alist: ran out of tokens")
        tok = tokens[pos]
        pos += 1
        try:
            return int(tok)
        except ValueError as exc:
            raise AlistFormatError(f"non-integer token {tok!r}") from exc

    n = take()
    m = take()
    if n < 1 or m < 1:
        raise AlistFormatError(f"invalid dimensions n={n} m={m}")
    max_col = take()
    max_row = take()
    col_deg = [take() for _ in range(n)]
    row_deg = [take() for _ in range(m)]
    if any(d < 1 for d in col_deg):
        raise AlistFormatError("zero-weight column")
    if any(d < 1 for d in row_deg):
        raise AlistFormatError("zero-weight row")
    if max(col_deg) > max_col or max(row_deg) > max_row:
        raise AlistFormatError("declared degree exceeds declared maximum")
    if sum(col_deg) != sum(row_deg):
        raise AlistFormatError("column and row degree sums disagree")

    # Neighbor lists may be zero-padded to the max degree or written bare.
    padded = len(tokens) - pos == n * max_col + m * max_row

    def read_block(count: int, degrees, max_deg: int, limit: int):
        lists = []
        for d in degrees:
            width = max_deg if padded else d
            vals = [take() for _ in range(width)]
            nonzero = [v for v in vals if v != 0]
            if len(nonzero) != d:
                raise AlistFormatError(
                    f"degree mismatch: declared {d}, found {len(nonzero)}"
                )
            if any(not 1 <= v <= limit for v in nonzero):
                raise AlistFormatError("neighbor index out of range")
            lists.append([v - 1 for v in nonzero])
        return lists

    col_lists = read_block(n, col_deg, max_col, m)
    row_lists = read_block(m, row_deg, max_row, n)
    if pos != len(tokens):
        raise AlistFormatError("trailing tokens after neighbor lists")

    entries = [(r, c) for c, rows in enumerate(col_lists) for r in rows]
    from_rows = sorted((r, c) for r, row_cols in enumerate(row_lists) for c in row_cols)
    if sorted(entries) != from_rows:
        raise AlistFormatError("row and column neighbor lists disagree")
    return ParityCheckMatrix.from_entries(m, n, entries)


def dump_alist(matrix: ParityCheckMatrix) -> str:
    """Serialize to alist text (zero-padded neighbor lists)."""
    graph = TannerGraph.from_matrix(matrix)
    col_deg = [len(graph.vn_neighbors[v]) for v in range(matrix.n)]
    row_deg = [len(graph.cn_neighbors[c]) for c in range(matrix.m)]
    max_col = max(col_deg)
    max_row = max(row_deg)
    lines = [
        f"{matrix.n} {matrix.m}",
        f"{max_col} {max_row}",
        " ".join(str(d) for d in col_deg),
        " ".join(str(d) for d in row_deg),
    ]
    for v in range(matrix.n):
        nb = [str(int(c) + 1) for c in graph.vn_neighbors[v]]
        nb += ["0"] * (max_col - len(nb))
        lines.append(" ".join(nb))
    for c in range(matrix.m):
        nb = [str(int(v) + 1) for v in graph.cn_neighbors[c]]
        nb += ["0"] * (max_row - len(nb))
        lines.append(" ".join(nb))
    return "\n".join(lines) + "\n"


def read_alist_file(path) -> ParityCheckMatrix:
    with open(path, "r", encoding="ascii") as fh:
        return load_alist(fh.read())


def write_alist_file(matrix: ParityCheckMatrix, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_alist(matrix))
