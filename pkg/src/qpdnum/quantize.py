"""Encoder/decoder pairs for the exchanged variables, and bit-rate accounting.

Every codec works element-wise on arrays: one array element is one scalar
variable with its own independent stream.  An encoder turns true values
into :class:`Symbols`; a decoder turns symbols back into reconstructions.
The decoder sees nothing but symbols, so replaying a symbol trace through a
fresh decoder must reproduce the same reconstructions.

The zoom-in scheme (``ZoomIn*``) uses the step ``delta_k = alpha**(k+1)``.
At k = 0 it is a midpoint quantizer on ``(-L*alpha, L*alpha)`` with 2L
cells.  At k >= 1 the sender transmits two integers:

* the offset ``n = floor((v_k - v_{k-1}) / delta_{k-1})``, which pins the
  centre ``C = Q_{k-1} + n*delta_{k-1}`` of the zoomed interval, and
* the cell index ``clamp(floor((v_k - C)/delta_k), -m, m-1)`` with
  ``m = ceil(2/alpha)``.

The reconstruction is ``C + (cell + 1/2)*delta_k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DesyncError, EmptyLedger, IntervalViolation, NumericError, ParamError

LN2 = math.log(2.0)
ULP_SLACK = 4


def bits_for(alphabet_size: int) -> int:
    """Fixed-length code length for an alphabet: ceil(log2 |A|)."""
    return int(math.ceil(math.log2(alphabet_size))) if alphabet_size > 1 else 0


@dataclass
class Symbols:
    """Symbols emitted for one step.

    ``index`` is the cell index inside the step's alphabet (the raw value
    for passthrough), ``offset`` the zoom-in centre offset (zero for
    codecs without one).
    """

    k: int
    index: np.ndarray
    offset: np.ndarray
    alphabet: int | None
    bits: float


# ---------------------------------------------------------------- zoom-in


def _check_qa_params(alpha, L):
    if not 0.0 < alpha < 1.0:
        raise ParamError(f"alpha must lie in (0, 1), got {alpha}")
    if int(L) != L or L < 1:
        raise ParamError(f"L must be a positive integer, got {L}")


class _ZoomInBase:
    def __init__(self, alpha: float, L: int, shape=()):
        _check_qa_params(alpha, L)
        self.alpha = float(alpha)
        self.L = int(L)
        self.m = int(math.ceil(2.0 / self.alpha))
        self.k = 0
        self.last_q = np.zeros(shape)

    def delta(self, k: int) -> float:
        d = self.alpha ** (k + 1)
        if d == 0.0:
            raise NumericError(f"quantization step alpha**{k + 1} underflowed to zero")
        return d

    def alphabet_size(self, k: int) -> int:
        return 2 * self.L if k == 0 else 2 * self.m

    def bits(self, k: int) -> int:
        return bits_for(self.alphabet_size(k))

    def _reconstruct(self, k, offset, cell):
        if k == 0:
            return (cell - self.L) * self.alpha + self.alpha / 2
        centre = self.last_q + offset * self.delta(k - 1)
        return centre + (cell - self.m) * self.delta(k) + self.delta(k) / 2


class ZoomInEncoder(_ZoomInBase):
    """Sender side of the zoom-in scheme; keeps the last true value too."""

    def __init__(self, alpha: float, L: int, shape=()):
        super().__init__(alpha, L, shape)
        self.last_value = np.zeros(shape)

    def encode(self, value) -> Symbols:
        value = np.asarray(value, dtype=float)
        k = self.k
        if k == 0:
            lim = self.L * self.alpha
            if np.any((value < -lim) | (value >= lim)):
                raise IntervalViolation(f"initial value outside (-{lim}, {lim})", step=0)
            raw = np.floor(value / self.alpha)
            cell = np.clip(raw, -self.L, self.L - 1) + self.L
            offset = np.zeros_like(value)
        else:
            d_prev, d = self.delta(k - 1), self.delta(k)
            offset = np.floor((value - self.last_value) / d_prev)
            centre = self.last_q + offset * d_prev
            dist = np.abs(value - centre)
            slack = ULP_SLACK * np.spacing(np.maximum(np.abs(value), np.abs(centre)))
            if np.any(dist > self.m * d + slack):
                worst = float(np.max(dist / d))
                raise IntervalViolation(
                    f"value left the zoom interval at step {k}: |v - C|/delta = {worst:.4g} > {self.m}",
                    step=k,
                )
            cell = np.clip(np.floor((value - centre) / d), -self.m, self.m - 1) + self.m
        sym = Symbols(k, cell.astype(np.int64), offset, self.alphabet_size(k), float(self.bits(k)))
        q = self._reconstruct(k, offset, cell)
        err = np.abs(value - q)
        slack = ULP_SLACK * np.spacing(np.maximum(np.abs(value), np.abs(q)))
        if np.any(err > self.delta(k) + slack):
            raise IntervalViolation(
                f"reconstruction error {float(np.max(err)):.3e} exceeds delta_{k} = {self.delta(k):.3e}",
                step=k,
            )
        self.last_q = q
        self.last_value = value.copy()
        self.k += 1
        return sym


class ZoomInDecoder(_ZoomInBase):
    """Receiver side; its state depends on the symbol history only."""

    def decode(self, sym: Symbols) -> np.ndarray:
        if sym.k != self.k:
            raise DesyncError(f"decoder expects step {self.k}, got symbols for step {sym.k}")
        idx = np.asarray(sym.index)
        if np.any(idx < 0) or np.any(idx >= self.alphabet_size(self.k)):
            raise DesyncError(f"cell index outside alphabet of size {self.alphabet_size(self.k)}")
        q = self._reconstruct(self.k, np.asarray(sym.offset, dtype=float), idx.astype(float))
        self.last_q = q
        self.k += 1
        return q


# ---------------------------------------------------------------- others


class PassthroughEncoder:
    def __init__(self, shape=()):
        self.k = 0

    def encode(self, value) -> Symbols:
        value = np.array(value, dtype=float)
        sym = Symbols(self.k, value, np.zeros_like(value), None, math.inf)
        self.k += 1
        return sym


class PassthroughDecoder:
    def __init__(self, shape=()):
        self.k = 0

    def decode(self, sym: Symbols) -> np.ndarray:
        if sym.k != self.k:
            raise DesyncError(f"decoder expects step {self.k}, got {sym.k}")
        self.k += 1
        return np.array(sym.index, dtype=float)


class _StaticBase:
    def __init__(self, range_: float, bits: int, shape=()):
        if not range_ > 0:
            raise ParamError(f"range must be positive, got {range_}")
        if int(bits) != bits or bits < 1:
            raise ParamError(f"bits must be a positive integer, got {bits}")
        self.range = float(range_)
        self.nbits = int(bits)
        self.cells = 2**self.nbits
        self.width = 2.0 * self.range / self.cells
        self.k = 0

    def _reconstruct(self, idx):
        return -self.range + (idx + 0.5) * self.width


class StaticUniformEncoder(_StaticBase):
    """Time-invariant midpoint quantizer on [-range, range]; clamps outside."""

    def encode(self, value) -> Symbols:
        value = np.asarray(value, dtype=float)
        idx = np.clip(np.floor((value + self.range) / self.width), 0, self.cells - 1).astype(np.int64)
        sym = Symbols(self.k, idx, np.zeros(idx.shape), self.cells, float(self.nbits))
        self.k += 1
        return sym


class StaticUniformDecoder(_StaticBase):
    def decode(self, sym: Symbols) -> np.ndarray:
        if sym.k != self.k:
            raise DesyncError(f"decoder expects step {self.k}, got {sym.k}")
        idx = np.asarray(sym.index)
        if np.any(idx < 0) or np.any(idx >= self.cells):
            raise DesyncError(f"cell index outside alphabet of size {self.cells}")
        self.k += 1
        return self._reconstruct(idx.astype(float))


# ---------------------------------------------------------------- schemes


@dataclass(frozen=True)
class QaScheme:
    alpha: float
    L: int
    name: str = field(default="qa", init=False)

    def __post_init__(self):
        _check_qa_params(self.alpha, self.L)

    def encoder(self, shape=()):
        return ZoomInEncoder(self.alpha, self.L, shape)

    def decoder(self, shape=()):
        return ZoomInDecoder(self.alpha, self.L, shape)


@dataclass(frozen=True)
class PassthroughScheme:
    name: str = field(default="passthrough", init=False)

    def encoder(self, shape=()):
        return PassthroughEncoder(shape)

    def decoder(self, shape=()):
        return PassthroughDecoder(shape)


@dataclass(frozen=True)
class StaticUniformScheme:
    range: float
    bits: int
    name: str = field(default="static_uniform", init=False)

    def __post_init__(self):
        _StaticBase(self.range, self.bits)

    def encoder(self, shape=()):
        return StaticUniformEncoder(self.range, self.bits, shape)

    def decoder(self, shape=()):
        return StaticUniformDecoder(self.range, self.bits, shape)


@dataclass
class CodecStream:
    """An encoder and the decoder listening to it."""

    encoder: object
    decoder: object

    def send(self, value):
        sym = self.encoder.encode(value)
        return self.decoder.decode(sym), sym


def qa_init(alpha: float, L: int, shape=()) -> CodecStream:
    scheme = QaScheme(alpha, L)
    return CodecStream(scheme.encoder(shape), scheme.decoder(shape))


def qa_encode(stream: CodecStream, value) -> tuple[Symbols, float]:
    sym = stream.encoder.encode(value)
    return sym, sym.bits


def qa_decode(stream: CodecStream, symbols: Symbols) -> np.ndarray:
    return stream.decoder.decode(symbols)


def passthrough_codec(shape=()) -> CodecStream:
    s = PassthroughScheme()
    return CodecStream(s.encoder(shape), s.decoder(shape))


def static_uniform_codec(range_: float, bits: int, shape=()) -> CodecStream:
    s = StaticUniformScheme(range_, bits)
    return CodecStream(s.encoder(shape), s.decoder(shape))


# ---------------------------------------------------------------- traces


TRACE_HEADER = ("var", "k", "offset", "cell", "bits")


def write_trace(path, symbols: Iterable[Symbols]) -> None:
    """Append-only per-variable CSV record of a 1-D symbol stream."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for sym in symbols:
            idx = np.atleast_1d(sym.index)
            off = np.atleast_1d(sym.offset)
            for var in range(idx.shape[-1]):
                w.writerow([var, sym.k, int(off[var]), int(idx[var]), _fmt_bits(sym.bits)])


def read_trace(path, alphabet_of=None) -> list[Symbols]:
    """Inverse of :func:`write_trace`; ``alphabet_of(k)`` fills the alphabet field."""
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            rows.setdefault(int(row["k"]), []).append(row)
    out = []
    for k in sorted(rows):
        group = sorted(rows[k], key=lambda row: int(row["var"]))
        out.append(
            Symbols(
                k,
                np.array([int(g["cell"]) for g in group], dtype=np.int64),
                np.array([float(int(g["offset"])) for g in group]),
                None if alphabet_of is None else alphabet_of(k),
                float(group[0]["bits"]),
            )
        )
    return out


def _fmt_bits(bits: float) -> str:
    return "inf" if math.isinf(bits) else repr(int(bits)) if float(bits).is_integer() else repr(bits)


# ---------------------------------------------------------------- rates


@dataclass
class RateSummary:
    """Average aggregate rates over a finite horizon, in nats per step."""

    horizon: int
    r_x: float
    r_lambda: float

    @property
    def r_q(self) -> float:
        return self.r_x + self.r_lambda

    @property
    def r_x_bits(self) -> float:
        return self.r_x / LN2

    @property
    def r_lambda_bits(self) -> float:
        return self.r_lambda / LN2

    @property
    def r_q_bits(self) -> float:
        return self.r_q / LN2

    @property
    def finite(self) -> bool:
        return math.isfinite(self.r_q)


class RateLedger:
    """Bits charged to each agent and each network node at every step.

    Symbols travel over fixed-length codes, so a step with alphabet ``A``
    costs ``ceil(log2 |A|)`` bits, i.e. ``ceil(log2 |A|) * ln 2`` nats.
    """

    def __init__(self, M: int, N: int):
        self.M, self.N = M, N
        self._x: list[np.ndarray] = []
        self._lam: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._x)

    def record(self, bits_x, bits_lambda) -> None:
        bx = np.broadcast_to(np.asarray(bits_x, dtype=float), (self.M,)).copy()
        bl = np.broadcast_to(np.asarray(bits_lambda, dtype=float), (self.N,)).copy()
        if np.any(bx < 0) or np.any(bl < 0):
            raise ValueError("bit counts must be nonnegative")
        self._x.append(bx)
        self._lam.append(bl)

    @property
    def bits_x(self) -> np.ndarray:
        """Array of shape (steps, M)."""
        return np.array(self._x).reshape(len(self._x), self.M)

    @property
    def bits_lambda(self) -> np.ndarray:
        return np.array(self._lam).reshape(len(self._lam), self.N)

    def add_bits(self, extra_x, extra_lambda, from_step: int = 1) -> None:
        """Charge extra bits per variable on every step >= ``from_step``."""
        for t in range(from_step, len(self._x)):
            self._x[t] = self._x[t] + extra_x
            self._lam[t] = self._lam[t] + extra_lambda

    def cumulative_nats(self, k: int) -> tuple[float, float]:
        """Total (primal, dual) nats sent during steps 0..k-1."""
        if k > len(self._x):
            raise EmptyLedger(f"ledger holds {len(self._x)} steps, asked for {k}")
        if k == 0:
            return 0.0, 0.0
        bx = self.bits_x[:k].sum() * LN2
        bl = self.bits_lambda[:k].sum() * LN2
        return float(bx), float(bl)

    def cumulative_nats_curve(self, K: int) -> tuple[np.ndarray, np.ndarray]:
        """Arrays of length K+1: nats sent before step k, for k = 0..K."""
        if K > len(self._x):
            raise EmptyLedger(f"ledger holds {len(self._x)} steps, asked for {K}")
        cx = np.concatenate([[0.0], np.cumsum(self.bits_x[:K].sum(axis=1))]) * LN2
        cl = np.concatenate([[0.0], np.cumsum(self.bits_lambda[:K].sum(axis=1))]) * LN2
        return cx, cl

    def total_bits(self) -> float:
        return float(self.bits_x.sum() + self.bits_lambda.sum())


def rate_summary(ledger: RateLedger, k_horizon: int | None = None) -> RateSummary:
    """Finite-horizon version of the long-run average rates R_x, R_lambda, R_Q."""
    k = len(ledger) if k_horizon is None else int(k_horizon)
    if k <= 0 or len(ledger) == 0:
        raise EmptyLedger("no steps recorded")
    nx, nl = ledger.cumulative_nats(k)
    return RateSummary(k, nx / k, nl / k)
