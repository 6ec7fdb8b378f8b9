"""Low-discrepancy Sobol sampling over bounded input boxes.

The generator is the classic Gray-code construction driven by Joe-Kuo
direction numbers loaded from a checked-in data file (``data/joe_kuo_64.txt``,
one line per dimension in the ``d s a m_1 ... m_s`` format). Dimension 1 is
the base-2 van der Corput sequence. The all-zeros point at index 0 is never
emitted; streams start at index 1 so the first point is (0.5, ..., 0.5).

No scrambling is applied: two sequences of equal dimension emit bit-identical
point streams. Per-run variation comes from the ``start_index`` offset.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

MAX_DIMENSION = 64
MAX_BITS = 32
MAX_INDEX = 2**31  # sequence exhausted beyond this many points

_SCALE = float(2**MAX_BITS)


class SequenceExhaustedError(RuntimeError):
    """Raised when a Sobol stream is advanced past 2**31 points."""


def _load_direction_table() -> list[tuple[int, int, list[int]]]:
    """Parse the Joe-Kuo data file into (s, a, m) rows for dimensions 2..64."""
    text = (
        importlib.resources.files("surropt")
        .joinpath("data/joe_kuo_64.txt")
        .read_text()
    )
    rows = []
    for line in text.splitlines()[1:]:  # skip header
        if not line.strip():
            continue
        parts = line.split()
        d, s, a = int(parts[0]), int(parts[1]), int(parts[2])
        m = [int(v) for v in parts[3 : 3 + s]]
        if len(m) != s:
            raise ValueError(f"direction file: dimension {d} expects {s} m-values")
        rows.append((s, a, m))
    return rows


_DIRECTION_TABLE = _load_direction_table()


def _direction_numbers(dimension: int) -> np.ndarray:
    """Bit matrix V of shape (dimension, MAX_BITS), V[d, k] = v_{k+1} << (MAX_BITS-k-1)."""
    v = np.zeros((dimension, MAX_BITS), dtype=np.uint64)
    # First dimension: van der Corput, v_k = 2^(MAX_BITS - k).
    for k in range(MAX_BITS):
        v[0, k] = 1 << (MAX_BITS - k - 1)
    for d in range(1, dimension):
        s, a, m = _DIRECTION_TABLE[d - 1]
        if MAX_BITS <= s:
            raise ValueError("direction recurrence needs MAX_BITS > s")
        mk = list(m)
        for k in range(s, MAX_BITS):
            # Recurrence m_k = 2 a_1 m_{k-1} xor 4 a_2 m_{k-2} xor ... xor
            # 2^s m_{k-s} xor m_{k-s}, with a_i the bits of `a`.
            new = mk[k - s] ^ (mk[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= mk[k - i] << i
            mk.append(new)
        for k in range(MAX_BITS):
            v[d, k] = mk[k] << (MAX_BITS - k - 1)
    return v


@dataclass
class BoundsSpec:
    """Per-dimension box constraints x_min <= x <= x_max."""

    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        self.x_min = np.asarray(self.x_min, dtype=float)
        self.x_max = np.asarray(self.x_max, dtype=float)
        if self.x_min.ndim != 1 or self.x_min.shape != self.x_max.shape:
            raise ValueError("x_min and x_max must be 1-D vectors of equal length")
        if not np.all(np.isfinite(self.x_min)) or not np.all(np.isfinite(self.x_max)):
            raise ValueError("bounds must be finite")
        if not np.all(self.x_min < self.x_max):
            bad = np.nonzero(~(self.x_min < self.x_max))[0]
            raise ValueError(f"x_min must be strictly below x_max (dims {bad.tolist()})")

    @property
    def dimension(self) -> int:
        return self.x_min.shape[0]

    @property
    def span(self) -> np.ndarray:
        return self.x_max - self.x_min

    @classmethod
    def unit(cls, dimension: int) -> "BoundsSpec":
        return cls(np.zeros(dimension), np.ones(dimension))

    def scale(self, u: np.ndarray) -> np.ndarray:
        """Map unit-hypercube coordinates to physical coordinates."""
        return self.x_min + np.asarray(u, dtype=float) * self.span

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        """Map physical coordinates into unit-box coordinates (may exceed [0,1])."""
        return (np.asarray(x, dtype=float) - self.x_min) / self.span

    def contains(self, x: np.ndarray, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.x_min - atol) and np.all(x <= self.x_max + atol)
        )

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.x_min, self.x_max)


@dataclass
class SobolSequence:
    """Deterministic Gray-code Sobol stream in [0,1)^dimension.

    ``index`` is the index of the next point to emit (>= 1; index 0, the
    all-zeros corner, is skipped). Single-owner mutable state: hand off
    between threads, do not share concurrently.
    """

    dimension: int
    index: int = 1
    _state: np.ndarray = field(init=False, repr=False)
    _v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.dimension <= MAX_DIMENSION:
            raise ValueError(f"dimension must be in 1..{MAX_DIMENSION}")
        if not 1 <= self.index <= MAX_INDEX:
            raise ValueError(f"start index must be in 1..{MAX_INDEX}")
        self._v = _direction_numbers(self.dimension)
        self._state = self._state_at(self.index - 1)

    def _state_at(self, i: int) -> np.ndarray:
        """Integer state of the natural-order point gray(i) = i ^ (i >> 1)."""
        g = i ^ (i >> 1)
        state = np.zeros(self.dimension, dtype=np.uint64)
        bit = 0
        while g:
            if g & 1:
                state ^= self._v[:, bit]
            g >>= 1
            bit += 1
        return state

    def next_point(self) -> np.ndarray:
        """Emit the point at the current index and advance by one."""
        if self.index >= MAX_INDEX:
            raise SequenceExhaustedError(
                f"Sobol stream exhausted after {MAX_INDEX} points"
            )
        # Rightmost zero bit (1-based) of index-1 selects the direction column.
        i = self.index - 1
        c = 0
        while i & 1:
            i >>= 1
            c += 1
        self._state = self._state ^ self._v[:, c]
        self.index += 1
        return self._state.astype(np.float64) / _SCALE

    def sample_batch(self, count: int, bounds: BoundsSpec) -> np.ndarray:
        """Draw ``count`` points scaled componentwise into ``bounds``.

        Returns an array of shape (count, dimension); every row satisfies
        x_min <= x <= x_max.
        """
        if count < 1:
            raise ValueError("count must be >= 1")
        if bounds.dimension != self.dimension:
            raise ValueError(
                f"bounds dimension {bounds.dimension} != sequence dimension {self.dimension}"
            )
        u = np.empty((count, self.dimension))
        for i in range(count):
            u[i] = self.next_point()
        return bounds.scale(u)


def next_point(seq: SobolSequence) -> np.ndarray:
    return seq.next_point()


def sample_batch(seq: SobolSequence, count: int, bounds: BoundsSpec) -> np.ndarray:
    return seq.sample_batch(count, bounds)


def discrepancy_check(points) -> float:
    """Star-discrepancy estimate of a unit-hypercube point set; lower is more uniform.

    Evaluates the local discrepancy |#points in box / N - vol(box)| over all
    anchored boxes [0, a) and [0, a] whose corner a is one of the points
    (plus the full box), and returns the maximum. O(N^2 d); exact enough to
    rank point sets by uniformity.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least 2 points of common dimension")
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("points must lie in the unit hypercube")
    n = pts.shape[0]
    worst = 0.0
    for corner in pts:
        vol = float(np.prod(corner))
        inside_open = np.all(pts < corner, axis=1).sum() / n
        inside_closed = np.all(pts <= corner, axis=1).sum() / n
        worst = max(worst, abs(inside_open - vol), abs(inside_closed - vol))
    return worst
