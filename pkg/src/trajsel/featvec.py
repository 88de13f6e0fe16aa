"""Named feature vectors with per-feature validity."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FeatureVector", "Invalid", "collect", "validity_mask_hex", "parse_validity_hex"]


class Invalid(Exception):
    """Raised inside a feature function to mark its value invalid.

    The message is used as the reason code.
    """


@dataclass
class FeatureVector:
    names: tuple
    values: np.ndarray  # NaN is the sentinel for invalid entries
    reasons: dict = field(default_factory=dict)  # name -> reason code

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.names),):
            raise ValueError("values and names must have the same length")

    def __len__(self):
        return len(self.names)

    @property
    def valid(self):
        return np.array([n not in self.reasons for n in self.names], dtype=bool)

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def concat(self, other):
        return FeatureVector(
            self.names + other.names,
            np.concatenate([self.values, other.values]),
            {**self.reasons, **other.reasons},
        )

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.values, other.values, equal_nan=True)
            and self.reasons == other.reasons
        )


def collect(pairs):
    """Build a :class:`FeatureVector` from ``(name, thunk)`` pairs.

    Each thunk is called; an :class:`Invalid` (or a non-finite result) marks
    the entry invalid with NaN as value.
    """
    names, values, reasons = [], [], {}
    for name, thunk in pairs:
        try:
            v = float(thunk())
            if not np.isfinite(v):
                raise Invalid("non_finite")
        except Invalid as exc:
            v = np.nan
            reasons[name] = str(exc) or "invalid"
        names.append(name)
        values.append(v)
    return FeatureVector(tuple(names), np.array(values), reasons)


def validity_mask_hex(valid):
    """Encode a boolean validity array as a hex bitmask (bit i = entry i valid)."""
    m = 0
    for i, ok in enumerate(valid):
        if ok:
            m |= 1 << i
    return format(m, "x")


def parse_validity_hex(s, n):
    m = int(s, 16)
    return np.array([(m >> i) & 1 == 1 for i in range(n)], dtype=bool)
