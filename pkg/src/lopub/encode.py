"""Client-side transformation: Bloom filters, bitwise randomized response.

Each attribute value is hashed into an m-bit Bloom filter with h salted
hash slots; every bit is then kept with probability 1-f and replaced by a
fair coin with probability f. A user's report is the concatenation of the
d randomized segments, so its length is always sum(m_j).

Hashes are deterministic given (salt, value label, slot), which lets the
server rebuild the candidate filters exactly. Salts are re-selected (up to
64 attempts) until every value in an attribute maps to a distinct filter.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from lopub.schema import Dataset, Schema, load_schema

_LN2 = math.log(2.0)
_MAX_SALT_ATTEMPTS = 64
_REPORT_MAGIC = "#lopub-reports v1"


class EncodeError(ValueError):
    pass


@dataclass(frozen=True)
class BloomParams:
    """Per-attribute Bloom filter configuration."""

    m: int
    h: int
    p: float
    salt: bytes

    def __post_init__(self):
        if not (1 <= self.h <= self.m):
            raise EncodeError(f"need m >= h >= 1, got m={self.m}, h={self.h}")


def default_bit_cap(cardinality: int) -> int:
    """Bit-length cap: 32 for binary attributes, 128 otherwise."""
    return 32 if cardinality == 2 else 128


def bloom_params(cardinality: int, p: float = 1 / 16, m_max: int | None = None,
                 salt: bytes = b"") -> BloomParams:
    """Pick the Bloom filter size and hash count for a domain of given size.

    m = ceil(ln(1/p) / ln(2)^2 * cardinality), capped at m_max;
    h = round(ln(1/p) / ln 2), at least 1. The default p = 1/16 gives h = 4.
    """
    if not (0.0 < p < 1.0):
        raise EncodeError(f"false-positive rate must be in (0,1), got {p}")
    if cardinality < 2:
        raise EncodeError("cardinality must be >= 2")
    if m_max is None:
        m_max = default_bit_cap(cardinality)
    ln_inv_p = math.log(1.0 / p)
    m = min(m_max, math.ceil(ln_inv_p / (_LN2 * _LN2) * cardinality))
    h = max(1, round(ln_inv_p / _LN2))
    m = max(m, h)
    return BloomParams(m=m, h=h, p=p, salt=salt)


def _derive_salt(attr_name: str, attempt: int) -> bytes:
    return hashlib.blake2b(f"{attr_name}#{attempt}".encode("utf-8"), digest_size=16).digest()


def hash_value(label: str, params: BloomParams) -> np.ndarray:
    """Deterministic Bloom filter (uint8 0/1 array of length m) for a value."""
    bits = np.zeros(params.m, dtype=np.uint8)
    data = label.encode("utf-8")
    for slot in range(params.h):
        digest = hashlib.blake2b(
            data + b"\x1f" + slot.to_bytes(4, "big"), key=params.salt, digest_size=8
        ).digest()
        bits[int.from_bytes(digest, "big") % params.m] = 1
    return bits


def attribute_filters(values, params: BloomParams) -> np.ndarray:
    """Stack the filters of every value in a domain, shape (card, m)."""
    return np.stack([hash_value(v, params) for v in values])


def params_for_schema(schema: Schema, p: float = 1 / 16,
                      m_max: int | None = None) -> tuple[BloomParams, ...]:
    """Choose collision-free Bloom parameters for every attribute.

    A salt is retried (incrementing a counter) until all value filters of
    the attribute are pairwise distinct; after 64 attempts this fails loudly.
    """
    out = []
    for dom in schema.attributes:
        base = bloom_params(dom.cardinality, p=p, m_max=m_max)
        for attempt in range(_MAX_SALT_ATTEMPTS):
            cand = BloomParams(m=base.m, h=base.h, p=base.p,
                               salt=_derive_salt(dom.name, attempt))
            filters = attribute_filters(dom.values, cand)
            if len(np.unique(filters, axis=0)) == dom.cardinality:
                out.append(cand)
                break
        else:
            raise EncodeError(
                f"no collision-free salt found for attribute {dom.name!r} "
                f"(m={base.m}, h={base.h}, {dom.cardinality} values)"
            )
    return tuple(out)


def perturb(bits: np.ndarray, f: float, rng: np.random.Generator) -> np.ndarray:
    """Randomized response on a bit array.

    Each bit independently: kept with probability 1-f, set to 1 with
    probability f/2, set to 0 with probability f/2.
    """
    if not (0.0 <= f <= 1.0):
        raise EncodeError(f"flip probability must be in [0,1], got {f}")
    u = rng.random(bits.shape[0])
    out = np.where(u < 1.0 - f, bits, (u < 1.0 - f / 2).astype(np.uint8))
    return out.astype(np.uint8)


@dataclass
class PerturbedReport:
    """One user's randomized report: d bit segments plus the flip level."""

    segments: list[np.ndarray]
    flip_probability: float

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate(self.segments)

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def encode_record(record, schema: Schema, params, f: float,
                  rng: np.random.Generator) -> PerturbedReport:
    """Hash and randomize one record (a sequence of d domain indices)."""
    segments = []
    for j, dom in enumerate(schema.attributes):
        v = int(record[j])
        if not (0 <= v < dom.cardinality):
            raise EncodeError(f"value index {v} out of range for {dom.name!r}")
        segments.append(perturb(hash_value(dom.values[v], params[j]), f, rng))
    return PerturbedReport(segments=segments, flip_probability=f)


def privacy_epsilon(d: int, h: int, f: float) -> float:
    """Total per-user privacy budget: 2 * d * h * ln((2-f)/f).

    f = 0 has no randomness at all and returns infinity; f = 1 is a fully
    random report and gives epsilon = 0.
    """
    if not (0.0 <= f <= 1.0):
        raise EncodeError(f"flip probability must be in [0,1], got {f}")
    if f == 0.0:
        return math.inf
    return 2.0 * d * h * math.log((2.0 - f) / f)


class ReportSet:
    """A batch of randomized reports plus the header needed to decode them.

    Segments are stored column-major by attribute: ``segments[j]`` is a
    (N, m_j) uint8 array. The header (schema, per-attribute Bloom
    parameters, f, p) is everything the server needs to replay the hashes.
    """

    def __init__(self, schema: Schema, params, f: float,
                 segments, index=None):
        self.schema = schema
        self.params = tuple(params)
        self.f = float(f)
        self.segments = [np.asarray(s, dtype=np.uint8) for s in segments]
        if len(self.segments) != schema.d or len(self.params) != schema.d:
            raise EncodeError("need one segment array and one BloomParams per attribute")
        n = self.segments[0].shape[0]
        for j, (seg, prm) in enumerate(zip(self.segments, self.params)):
            if seg.shape != (n, prm.m):
                raise EncodeError(
                    f"segment {j} has shape {seg.shape}, expected ({n}, {prm.m})"
                )
        self.index = (np.arange(n, dtype=np.int64) if index is None
                      else np.asarray(index, dtype=np.int64))
        if self.index.shape != (n,):
            raise EncodeError("index length does not match segment rows")

    @property
    def n(self) -> int:
        return self.segments[0].shape[0]

    @property
    def total_bits(self) -> int:
        return sum(p.m for p in self.params)

    @property
    def p(self) -> float:
        return self.params[0].p

    def header_dict(self) -> dict:
        return {
            "n": self.n,
            "f": self.f,
            "p": self.p,
            "schema_digest": self.schema.digest(),
            "schema": self.schema.to_config(),
            "attributes": [
                {"name": dom.name, "m": prm.m, "h": prm.h, "salt": prm.salt.hex()}
                for dom, prm in zip(self.schema.attributes, self.params)
            ],
        }

    def _header_key(self):
        hd = self.header_dict()
        return (hd["schema_digest"], hd["f"], hd["p"],
                tuple((a["name"], a["m"], a["h"], a["salt"]) for a in hd["attributes"]))

    def extend(self, other: "ReportSet") -> "ReportSet":
        """Concatenate two report batches; headers must match exactly."""
        if self._header_key() != other._header_key():
            raise EncodeError("cannot mix reports with different headers")
        segs = [np.concatenate([a, b]) for a, b in zip(self.segments, other.segments)]
        return ReportSet(self.schema, self.params, self.f, segs,
                         index=np.concatenate([self.index, other.index]))

    def report_bits(self, i: int) -> np.ndarray:
        return np.concatenate([seg[i] for seg in self.segments])

    def save(self, path) -> None:
        header = json.dumps(self.header_dict(), separators=(",", ":"))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_REPORT_MAGIC + "\n")
            fh.write("#" + header + "\n")
            for i in range(self.n):
                bits = self.report_bits(i)
                fh.write(f"{self.index[i]}\t" + "".join("1" if b else "0" for b in bits) + "\n")

    @classmethod
    def load(cls, path) -> "ReportSet":
        with open(path, "r", encoding="utf-8") as fh:
            magic = fh.readline().rstrip("\n")
            if magic != _REPORT_MAGIC:
                raise EncodeError(f"not a report file: bad magic line {magic!r}")
            header_line = fh.readline().rstrip("\n")
            if not header_line.startswith("#"):
                raise EncodeError("missing report header")
            header = json.loads(header_line[1:])
            schema = load_schema(header["schema"])
            if schema.digest() != header["schema_digest"]:
                raise EncodeError("schema digest mismatch in report header")
            params = tuple(
                BloomParams(m=a["m"], h=a["h"], p=header["p"], salt=bytes.fromhex(a["salt"]))
                for a in header["attributes"]
            )
            total = sum(prm.m for prm in params)
            index, rows = [], []
            for lineno, line in enumerate(fh, start=3):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx, _, bitstr = line.partition("\t")
                if len(bitstr) != total:
                    raise EncodeError(
                        f"line {lineno}: report has {len(bitstr)} bits, expected {total}"
                    )
                index.append(int(idx))
                rows.append(np.frombuffer(bitstr.encode("ascii"), dtype=np.uint8) - ord("0"))
            if len(rows) != header["n"]:
                raise EncodeError(f"report count {len(rows)} != header n={header['n']}")
            flat = (np.stack(rows) if rows
                    else np.zeros((0, total), dtype=np.uint8))
            segments, offset = [], 0
            for prm in params:
                segments.append(np.ascontiguousarray(flat[:, offset:offset + prm.m]))
                offset += prm.m
            return cls(schema, params, header["f"], segments, index=np.asarray(index))


def encode_dataset(dataset: Dataset, params, f: float, seed: int) -> ReportSet:
    """Encode every record of a dataset into a ReportSet.

    Record i uses its own random stream seeded by (seed, i), so encoding is
    reproducible and order-independent across records.
    """
    if not (0.0 <= f <= 1.0):
        raise EncodeError(f"flip probability must be in [0,1], got {f}")
    if f == 1.0:
        warnings.warn("f=1 produces signal-free reports; estimation will be rejected")
    schema = dataset.schema
    if len(params) != schema.d:
        raise EncodeError("need one BloomParams per attribute")
    filters = [attribute_filters(dom.values, prm)
               for dom, prm in zip(schema.attributes, params)]
    widths = [prm.m for prm in params]
    total = sum(widths)
    # exact (unflipped) concatenated filter row per record
    exact = np.concatenate(
        [filters[j][dataset.rows[:, j]] for j in range(schema.d)], axis=1
    )
    flat = np.empty((dataset.n, total), dtype=np.uint8)
    for i in range(dataset.n):
        rng = np.random.default_rng((seed, i))
        u = rng.random(total)
        row = exact[i]
        flat[i] = np.where(u < 1.0 - f, row, (u < 1.0 - f / 2).astype(np.uint8))
    segments, offset = [], 0
    for w in widths:
        segments.append(np.ascontiguousarray(flat[:, offset:offset + w]))
        offset += w
    return ReportSet(schema, params, f, segments)
