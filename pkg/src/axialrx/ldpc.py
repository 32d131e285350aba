"""Regular LDPC code with systematic encoding and normalized min-sum decoding.

Construction is a seeded (col_weight, 2*col_weight)-regular edge matching:
duplicate edges are repaired by stub swaps, several candidates are drawn,
and the one with the fewest 4-cycles that also keeps the GF(2) rank
deficiency at most one (rate within 0.01 of one half) wins. The encoder
comes from the reduced row echelon form of H: free columns carry the
information bits, pivot columns are parity solved by a dense GF(2)
back-substitution block.

LLR sign convention at the API: positive means bit 1 is more likely
(matching the receiver chain); internally the decoder flips to the usual
positive-means-zero convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MIN_SUM_SCALE = 0.75
DEFAULT_MAX_ITER = 25
RATE_TARGET = 0.5
RATE_TOLERANCE = 0.01


class LdpcConstructionError(RuntimeError):
    """No acceptable parity-check matrix found within the retry budget."""


@dataclass
class LdpcCode:
    h: np.ndarray  # (m, n) uint8 parity-check matrix
    n: int
    k: int
    info_cols: np.ndarray  # (k,) column indices carrying information bits
    pivot_cols: np.ndarray  # (rank,) parity column indices
    back_sub: np.ndarray  # (rank, k) uint8 parity solver, parity = back_sub @ u mod 2
    row_cols: np.ndarray  # (m, row_weight) adjacency: columns of each check
    col_rows: np.ndarray  # (n, col_weight) rows of each variable
    col_slots: np.ndarray  # (n, col_weight) slot of the variable within row_cols
    four_cycles: int

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n


class DecodeResult(NamedTuple):
    bits: np.ndarray
    converged: bool
    iterations: int


def _sample_regular_h(n: int, m: int, col_weight: int, row_weight: int,
                      rng: np.random.Generator) -> np.ndarray | None:
    """Random stub matching; duplicate edges repaired by bounded stub swaps."""
    cols = np.repeat(np.arange(n), col_weight)
    rng.shuffle(cols)
    rows = np.repeat(np.arange(m), row_weight)
    for _ in range(500):
        key = rows.astype(np.int64) * n + cols
        order = np.argsort(key, kind="stable")
        sorted_key = key[order]
        dup_sorted = np.flatnonzero(sorted_key[1:] == sorted_key[:-1]) + 1
        if dup_sorted.size == 0:
            h = np.zeros((m, n), dtype=np.uint8)
            h[rows, cols] = 1
            return h
        dup_positions = order[dup_sorted]
        swap_with = rng.integers(0, cols.size, size=dup_positions.size)
        for p, q in zip(dup_positions, swap_with):
            cols[p], cols[q] = cols[q], cols[p]
    return None


def _count_four_cycles(h: np.ndarray) -> int:
    """4-cycles = column pairs shared by more than one check."""
    m, n = h.shape
    row_sums = h.sum(axis=1)
    if (row_sums == row_sums[0]).all():
        cols = np.nonzero(h)[1].reshape(m, row_sums[0]).astype(np.int64)
        ii, jj = np.triu_indices(row_sums[0], k=1)
        codes = (cols[:, ii] * n + cols[:, jj]).ravel()
    else:
        pair_codes = []
        for r in range(m):
            row = np.flatnonzero(h[r]).astype(np.int64)
            for i in range(len(row) - 1):
                pair_codes.append(row[i] * n + row[i + 1 :])
        codes = np.concatenate(pair_codes)
    counts = np.unique(codes, return_counts=True)[1]
    return int((counts * (counts - 1) // 2).sum())


def _gf2_rref(h: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2) on byte-packed rows."""
    m, n = h.shape
    packed = np.packbits(h, axis=1)
    pivots: list[int] = []
    r = 0
    for c in range(n):
        if r >= m:
            break
        byte, shift = c >> 3, 7 - (c & 7)
        column = (packed[:, byte] >> shift) & 1
        candidates = np.flatnonzero(column[r:])
        if candidates.size == 0:
            continue
        swap = r + candidates[0]
        if swap != r:
            packed[[r, swap]] = packed[[swap, r]]
            column[[r, swap]] = column[[swap, r]]
        hit = np.flatnonzero(column)
        hit = hit[hit != r]
        if hit.size:
            packed[hit] ^= packed[r]
        pivots.append(c)
        r += 1
    return np.unpackbits(packed, axis=1, count=n), pivots


def construct(n: int, col_weight: int = 3, seed: int = 0, tries: int = 60) -> LdpcCode:
    """Build a (col_weight, 2*col_weight)-regular code of length n."""
    if col_weight < 2:
        raise LdpcConstructionError(f"column weight must be >= 2, got {col_weight}")
    row_weight = 2 * col_weight
    if (n * col_weight) % row_weight != 0:
        raise LdpcConstructionError(f"n={n} incompatible with ({col_weight},{row_weight}) regularity")
    m = n * col_weight // row_weight
    rng = np.random.default_rng(seed)
    candidates = []
    for _ in range(tries):
        h = _sample_regular_h(n, m, col_weight, row_weight, rng)
        if h is not None:
            candidates.append((_count_four_cycles(h), h))
    candidates.sort(key=lambda pair: pair[0])
    for cycles, h in candidates:
        rref, pivots = _gf2_rref(h)
        rank = len(pivots)
        k = n - rank
        if m - rank > 1 or abs(k / n - RATE_TARGET) > RATE_TOLERANCE:
            continue
        return _assemble(h, rref, pivots, cycles, row_weight, col_weight)
    raise LdpcConstructionError(
        f"no valid ({col_weight},{row_weight})-regular matrix for n={n} in {tries} tries")


def _assemble(h: np.ndarray, rref: np.ndarray, pivots: list[int], cycles: int,
              row_weight: int, col_weight: int) -> LdpcCode:
    m, n = h.shape
    rank = len(pivots)
    pivot_cols = np.asarray(pivots, dtype=np.int64)
    info_cols = np.setdiff1d(np.arange(n), pivot_cols)
    back_sub = rref[:rank][:, info_cols].astype(np.uint8)

    edge_rows, edge_cols = np.nonzero(h)  # row-major scan: ascending (row, col)
    row_cols = edge_cols.reshape(m, row_weight).astype(np.int64)
    col_rows = np.empty((n, col_weight), dtype=np.int64)
    col_slots = np.empty((n, col_weight), dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for r in range(m):
        for s, c in enumerate(row_cols[r]):
            col_rows[c, fill[c]] = r
            col_slots[c, fill[c]] = s
            fill[c] += 1
    assert (fill == col_weight).all()
    return LdpcCode(h=h, n=n, k=n - rank, info_cols=info_cols, pivot_cols=pivot_cols,
                    back_sub=back_sub, row_cols=row_cols, col_rows=col_rows,
                    col_slots=col_slots, four_cycles=cycles)


def encode(code: LdpcCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic encoding; the result always satisfies H c = 0."""
    u = np.asarray(info_bits, dtype=np.uint8)
    if u.shape != (code.k,):
        raise ValueError(f"expected {code.k} information bits, got shape {u.shape}")
    c = np.zeros(code.n, dtype=np.uint8)
    c[code.info_cols] = u
    c[code.pivot_cols] = (code.back_sub @ u.astype(np.int64)) % 2
    return c


def syndrome(code: LdpcCode, bits: np.ndarray) -> np.ndarray:
    return bits[code.row_cols].sum(axis=1) % 2


def decode(code: LdpcCode, llr: np.ndarray, max_iter: int = DEFAULT_MAX_ITER) -> DecodeResult:
    """Normalized min-sum belief propagation with syndrome early exit.

    Convergence requires a zero syndrome with every posterior decided
    (nonzero); degenerate all-zero input therefore reports converged=False
    even though the all-zero word is a codeword.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape != (code.n,):
        raise ValueError(f"expected {code.n} LLRs, got shape {llr.shape}")
    chan = -llr  # decoder-internal convention: positive favors bit 0
    rows, slots = code.col_rows, code.col_slots
    v2c = chan[code.row_cols]  # (m, row_weight)
    posterior = chan
    iterations = 0
    for iterations in range(1, max_iter + 1):
        bits = (posterior < 0).astype(np.uint8)
        if (posterior != 0.0).all() and not syndrome(code, bits).any():
            return DecodeResult(bits=bits, converged=True, iterations=iterations)
        sgn = np.where(v2c < 0.0, -1.0, 1.0)
        mag = np.abs(v2c)
        row_sign = sgn.prod(axis=1)
        part = np.partition(mag, 1, axis=1)
        min1, min2 = part[:, 0], part[:, 1]
        argmin = mag.argmin(axis=1)
        use_min = np.where(np.arange(v2c.shape[1])[None, :] == argmin[:, None],
                           min2[:, None], min1[:, None])
        c2v = MIN_SUM_SCALE * row_sign[:, None] * sgn * use_min
        col_msgs = c2v[rows, slots]  # (n, col_weight)
        posterior = chan + col_msgs.sum(axis=1)
        v2c_scattered = np.empty_like(v2c)
        v2c_scattered[rows, slots] = posterior[:, None] - col_msgs
        v2c = v2c_scattered
    bits = (posterior < 0).astype(np.uint8)
    return DecodeResult(bits=bits, converged=False, iterations=iterations)


def decode_info(code: LdpcCode, llr: np.ndarray, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Decode and return only the information-bit positions."""
    return decode(code, llr, max_iter).bits[code.info_cols]


def bler(decoded_info: np.ndarray, reference_info: np.ndarray) -> float:
    """Fraction of blocks with at least one information-bit error."""
    decoded_info = np.atleast_2d(decoded_info)
    reference_info = np.atleast_2d(reference_info)
    if decoded_info.shape != reference_info.shape:
        raise ValueError(f"block shapes differ: {decoded_info.shape} vs {reference_info.shape}")
    errors = (decoded_info != reference_info).any(axis=1)
    return float(errors.mean())


def to_alist(code: LdpcCode) -> str:
    """Standard alist text for the parity-check matrix (1-based indices)."""
    m, n = code.h.shape
    col_deg = code.h.sum(axis=0)
    row_deg = code.h.sum(axis=1)
    lines = [f"{n} {m}", f"{col_deg.max()} {row_deg.max()}"]
    lines.append(" ".join(str(d) for d in col_deg))
    lines.append(" ".join(str(d) for d in row_deg))
    for c in range(n):
        lines.append(" ".join(str(r + 1) for r in np.flatnonzero(code.h[:, c])))
    for r in range(m):
        lines.append(" ".join(str(c + 1) for c in np.flatnonzero(code.h[r])))
    return "\n".join(lines) + "\n"
