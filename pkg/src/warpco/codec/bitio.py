"""MSB-first bit writer/reader and 0th-order exp-Golomb codes."""

from __future__ import annotations

from ..errors import BitstreamError


def ue_length(value: int) -> int:
    if value < 0:
        raise ValueError(f"ue(v) needs a non-negative value, got {value}")
    return 2 * (value + 1).bit_length() - 1


def se_to_ue(value: int) -> int:
    return 2 * value - 1 if value > 0 else -2 * value


def ue_to_se(code: int) -> int:
    return (code + 1) // 2 if code % 2 else -(code // 2)


def se_length(value: int) -> int:
    return ue_length(se_to_ue(value))


class BitWriter:
    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_count = 0

    def write_bits(self, value: int, n: int) -> None:
        if n == 0:
            return
        if value < 0 or value >> n:
            raise ValueError(f"value {value} does not fit in {n} bits")
        self._acc = (self._acc << n) | value
        self._nacc += n
        self.bit_count += n
        while self._nacc >= 8:
            self._nacc -= 8
            self._bytes.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_bit(self, bit: int) -> None:
        self.write_bits(bit & 1, 1)

    def write_ue(self, value: int) -> None:
        v = value + 1
        n = v.bit_length()
        self.write_bits(0, n - 1)
        self.write_bits(v, n)

    def write_se(self, value: int) -> None:
        self.write_ue(se_to_ue(value))

    def write_bytes(self, data: bytes) -> None:
        if self._nacc:
            for b in data:
                self.write_bits(b, 8)
        else:
            self._bytes.extend(data)
            self.bit_count += 8 * len(data)

    def align(self) -> int:
        """Pad with zero bits to the next byte boundary; returns the padding length."""
        pad = (-self.bit_count) % 8
        self.write_bits(0, pad)
        return pad

    def getvalue(self) -> bytes:
        if self._nacc:
            raise ValueError("bit writer is not byte aligned")
        return bytes(self._bytes)


class BitReader:
    def __init__(self, data: bytes, bit_offset: int = 0):
        self.data = data
        self.pos = bit_offset
        self.frame: int | None = None

    @property
    def bits_left(self) -> int:
        return 8 * len(self.data) - self.pos

    def _fail(self, message: str, at: int | None = None):
        raise BitstreamError(message, self.pos if at is None else at, self.frame)

    def read_bits(self, n: int) -> int:
        if n > self.bits_left:
            self._fail(f"truncated stream reading {n} bits")
        value = 0
        for _ in range(n):
            byte = self.data[self.pos >> 3]
            value = (value << 1) | ((byte >> (7 - (self.pos & 7))) & 1)
            self.pos += 1
        return value

    def read_bit(self) -> int:
        return self.read_bits(1)

    def read_ue(self, max_prefix: int = 32) -> int:
        start = self.pos
        zeros = 0
        while True:
            if self.bits_left <= 0:
                self._fail("truncated exp-Golomb prefix", start)
            if self.read_bits(1):
                break
            zeros += 1
            if zeros > max_prefix:
                self._fail("malformed exp-Golomb prefix", start)
        return ((1 << zeros) | self.read_bits(zeros)) - 1

    def read_se(self) -> int:
        return ue_to_se(self.read_ue())

    def read_bytes(self, n: int) -> bytes:
        if self.pos & 7:
            return bytes(self.read_bits(8) for _ in range(n))
        if 8 * n > self.bits_left:
            self._fail(f"truncated stream reading {n} bytes")
        start = self.pos >> 3
        self.pos += 8 * n
        return self.data[start : start + n]

    def align(self) -> None:
        self.pos += (-self.pos) % 8
