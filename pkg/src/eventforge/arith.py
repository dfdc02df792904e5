"""Arithmetic coding: an exact interval coder and a streaming byte coder.

``FractionalCoder`` keeps the whole interval as exact rationals — useful
for reasoning and for pinning textbook values in tests, useless for real
payloads.  ``Encoder``/``Decoder`` are the production pair: 32-bit
renormalizing integer coder driven by adaptive frequency models, the
same construction CABAC-style entropy stages are built on.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Sequence

# ---------------------------------------------------------------------------
# exact rational coder


class FractionalCoder:
    """Interval coder over an explicit static model with exact arithmetic.

    The model maps each symbol to its half-open slice [lo, hi) of the
    unit interval; slices must tile [0, 1).
    """

    def __init__(self, model: Mapping[str, tuple[Fraction, Fraction]]):
        self.model = {s: (Fraction(lo), Fraction(hi))
                      for s, (lo, hi) in model.items()}
        spans = sorted(self.model.values())
        if spans[0][0] != 0 or spans[-1][1] != 1:
            raise ValueError("model must cover [0, 1)")
        for (_, a_hi), (b_lo, _) in zip(spans, spans[1:]):
            if a_hi != b_lo:
                raise ValueError("model slices must tile without gaps")

    def interval_for(self, symbols: Iterable[str]) -> tuple[Fraction, Fraction]:
        lo, hi = Fraction(0), Fraction(1)
        for s in symbols:
            s_lo, s_hi = self.model[s]
            width = hi - lo
            lo, hi = lo + width * s_lo, lo + width * s_hi
        return lo, hi

    def decode_value(self, value, *, stop: str = "EOF",
                     max_symbols: int = 10_000) -> list[str]:
        v = Fraction(value).limit_denominator(10**12) \
            if isinstance(value, float) else Fraction(value)
        out: list[str] = []
        for _ in range(max_symbols):
            for s, (lo, hi) in self.model.items():
                if lo <= v < hi:
                    if s == stop:
                        return out
                    out.append(s)
                    v = (v - lo) / (hi - lo)
                    break
            else:
                raise ValueError(f"value {v} not inside any symbol slice")
        raise ValueError("no stop symbol reached")


# ---------------------------------------------------------------------------
# streaming integer coder

_BITS = 32
_TOP = 1 << _BITS
_MASK = _TOP - 1
_HALF = _TOP >> 1
_QTR = _TOP >> 2
_3QTR = _HALF + _QTR


class Encoder:
    def __init__(self) -> None:
        self.lo = 0
        self.hi = _MASK
        self.pending = 0
        self._bits: list[int] = []
        self._out = bytearray()
        self._acc = 0
        self._nacc = 0

    def _emit(self, bit: int) -> None:
        self._acc = (self._acc << 1) | bit
        self._nacc += 1
        if self._nacc == 8:
            self._out.append(self._acc)
            self._acc = 0
            self._nacc = 0

    def _emit_with_pending(self, bit: int) -> None:
        self._emit(bit)
        other = bit ^ 1
        while self.pending:
            self._emit(other)
            self.pending -= 1

    def encode(self, cum_lo: int, cum_hi: int, total: int) -> None:
        span = self.hi - self.lo + 1
        self.hi = self.lo + span * cum_hi // total - 1
        self.lo = self.lo + span * cum_lo // total
        while True:
            if self.hi < _HALF:
                self._emit_with_pending(0)
            elif self.lo >= _HALF:
                self._emit_with_pending(1)
                self.lo -= _HALF
                self.hi -= _HALF
            elif self.lo >= _QTR and self.hi < _3QTR:
                self.pending += 1
                self.lo -= _QTR
                self.hi -= _QTR
            else:
                break
            self.lo <<= 1
            self.hi = (self.hi << 1) | 1

    def finish(self) -> bytes:
        # One disambiguating bit plus whatever is pending.
        self.pending += 1
        self._emit_with_pending(0 if self.lo < _QTR else 1)
        if self._nacc:
            self._out.append(self._acc << (8 - self._nacc))
        return bytes(self._out)


class Decoder:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0
        self.lo = 0
        self.hi = _MASK
        self.code = 0
        for _ in range(_BITS):
            self.code = (self.code << 1) | self._next_bit()

    def _next_bit(self) -> int:
        byte_i, bit_i = divmod(self.pos, 8)
        self.pos += 1
        if byte_i >= len(self.data):
            return 0  # reading past the payload pads with zeros
        return (self.data[byte_i] >> (7 - bit_i)) & 1

    def slot(self, total: int) -> int:
        """Where the code sits inside the current interval, scaled to total."""
        span = self.hi - self.lo + 1
        return ((self.code - self.lo + 1) * total - 1) // span

    def consume(self, cum_lo: int, cum_hi: int, total: int) -> None:
        span = self.hi - self.lo + 1
        self.hi = self.lo + span * cum_hi // total - 1
        self.lo = self.lo + span * cum_lo // total
        while True:
            if self.hi < _HALF:
                pass
            elif self.lo >= _HALF:
                self.lo -= _HALF
                self.hi -= _HALF
                self.code -= _HALF
            elif self.lo >= _QTR and self.hi < _3QTR:
                self.lo -= _QTR
                self.hi -= _QTR
                self.code -= _QTR
            else:
                break
            self.lo <<= 1
            self.hi = (self.hi << 1) | 1
            self.code = ((self.code << 1) | self._next_bit()) & _MASK


# ---------------------------------------------------------------------------
# adaptive models

_REBALANCE_TOTAL = 1 << 13


class AdaptiveModel:
    """Symbol frequencies that learn as they code (Laplace-1 start).

    Counts are halved (floor, min 1) whenever the total crosses
    ``limit``, so recent statistics dominate long streams.
    """

    def __init__(self, n_symbols: int, *, increment: int = 32,
                 limit: int = _REBALANCE_TOTAL):
        self.freq = [1] * n_symbols
        self.total = n_symbols
        self.increment = increment
        self.limit = limit

    def _update(self, symbol: int) -> None:
        self.freq[symbol] += self.increment
        self.total += self.increment
        if self.total > self.limit:
            total = 0
            for i, f in enumerate(self.freq):
                f = (f + 1) >> 1
                self.freq[i] = f
                total += f
            self.total = total

    def encode(self, enc: Encoder, symbol: int) -> None:
        cum = 0
        for f in self.freq[:symbol]:
            cum += f
        enc.encode(cum, cum + self.freq[symbol], self.total)
        self._update(symbol)

    def decode(self, dec: Decoder) -> int:
        target = dec.slot(self.total)
        cum = 0
        for symbol, f in enumerate(self.freq):
            if cum + f > target:
                dec.consume(cum, cum + f, self.total)
                self._update(symbol)
                return symbol
            cum += f
        raise AssertionError("slot outside cumulative range")


class BinaryModel:
    """Two-symbol adaptive context, kept branch-light for hot loops."""

    __slots__ = ("c0", "c1", "increment", "limit")

    def __init__(self, *, increment: int = 32, limit: int = _REBALANCE_TOTAL):
        self.c0 = 1
        self.c1 = 1
        self.increment = increment
        self.limit = limit

    def encode(self, enc: Encoder, bit: int) -> None:
        c0 = self.c0
        total = c0 + self.c1
        if bit:
            enc.encode(c0, total, total)
            self.c1 += self.increment
        else:
            enc.encode(0, c0, total)
            self.c0 += self.increment
        if total + self.increment > self.limit:
            self.c0 = (self.c0 + 1) >> 1
            self.c1 = (self.c1 + 1) >> 1

    def decode(self, dec: Decoder) -> int:
        c0 = self.c0
        total = c0 + self.c1
        bit = 1 if dec.slot(total) >= c0 else 0
        if bit:
            dec.consume(c0, total, total)
            self.c1 += self.increment
        else:
            dec.consume(0, c0, total)
            self.c0 += self.increment
        if total + self.increment > self.limit:
            self.c0 = (self.c0 + 1) >> 1
            self.c1 = (self.c1 + 1) >> 1
        return bit


def encode_symbols(symbols: Sequence[int], n_symbols: int) -> bytes:
    """One-shot helper: adaptive-code a sequence from a given alphabet."""
    enc = Encoder()
    model = AdaptiveModel(n_symbols)
    for s in symbols:
        model.encode(enc, s)
    return enc.finish()


def decode_symbols(data: bytes, count: int, n_symbols: int) -> list[int]:
    dec = Decoder(data)
    model = AdaptiveModel(n_symbols)
    return [model.decode(dec) for _ in range(count)]
