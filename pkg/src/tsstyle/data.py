"""Dataset files, windowing/normalization, and synthetic series generation.

Dataset file format (line-delimited, diffable):
    <series id><TAB><v1>,<v2>,...
Values are decimal floats; missing values are the literal token ``NaN`` and
become quiet NaNs in memory. They are replaced by zero before normalization.

Windows are normalized as x' = (x - mu) / (sigma + 1e-8); the (mu, sigma) of
the window are returned so outputs can be mapped back to the original scale.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import Rng

EPS_SIGMA = 1e-8


@dataclass
class SeriesRecord:
    id: str
    values: np.ndarray  # float64, may contain NaN


def format_value(v) -> str:
    return "NaN" if np.isnan(v) else repr(float(v))


def save_dataset(path, records):
    """Write records; accepts SeriesRecord or (id, values) tuples."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            rid, values = (rec.id, rec.values) if isinstance(rec, SeriesRecord) else rec
            if "\t" in rid or "\n" in rid:
                raise DataError(f"series id {rid!r} contains a tab or newline")
            f.write(rid + "\t" + ",".join(format_value(v) for v in values) + "\n")


def load_dataset(path) -> list[SeriesRecord]:
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: missing tab between id and values")
            rid, payload = line.split("\t", 1)
            try:
                values = np.array(
                    [float("nan") if tok == "NaN" else float(tok)
                     for tok in payload.split(",")],
                    dtype=np.float64,
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unparseable value ({exc})") from None
            if values.size < 1:
                raise DataError(f"{path}:{lineno}: empty series")
            if np.isinf(values).any():
                raise DataError(f"{path}:{lineno}: infinite value in series {rid!r}")
            records.append(SeriesRecord(rid, values))
    if not records:
        raise DataError(f"dataset file {path} contains no records")
    return records


def convert_csv(src, dst, layout="wide"):
    """Convert a common CSV layout to the dataset format.

    "wide": one series per row, first column is the id, remaining columns are
    values. "long": rows of (id, value); consecutive rows with the same id
    form one series.
    """
    if not os.path.exists(src):
        raise DataError(f"csv file not found: {src}")
    records = []
    with open(src, "r", encoding="utf-8") as f:
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    if layout == "wide":
        for row in rows:
            vals = [float("nan") if tok.strip() in ("", "NaN", "nan") else float(tok)
                    for tok in row[1:]]
            records.append(SeriesRecord(row[0], np.array(vals, dtype=np.float64)))
    elif layout == "long":
        current, buf = None, []
        for row in rows:
            if len(row) != 2:
                raise DataError(f"long layout expects id,value rows, got {row}")
            if row[0] != current and current is not None:
                records.append(SeriesRecord(current, np.array(buf, dtype=np.float64)))
                buf = []
            current = row[0]
            tok = row[1].strip()
            buf.append(float("nan") if tok in ("", "NaN", "nan") else float(tok))
        if current is not None:
            records.append(SeriesRecord(current, np.array(buf, dtype=np.float64)))
    else:
        raise DataError(f"unknown csv layout {layout!r}")
    save_dataset(dst, records)
    return records


@dataclass(frozen=True)
class WindowSpec:
    length: int = 128

    def __post_init__(self):
        if self.length < 8:
            raise ValueError(f"window length must be >= 8, got {self.length}")


def normalize(x):
    """z-normalize; returns (x', mu, sigma) with the 1e-8 sigma guard."""
    x = np.asarray(x, dtype=np.float64)
    mu = float(x.mean())
    sigma = float(x.std())
    return (x - mu) / (sigma + EPS_SIGMA), mu, sigma


def denormalize(xn, mu, sigma):
    return np.asarray(xn, dtype=np.float64) * (sigma + EPS_SIGMA) + mu


def eligible_records(records, length):
    """Series long enough for the window; shorter sequences are discarded."""
    return [r for r in records if r.values.size >= length]


def load_window(records, spec: WindowSpec, rng: Rng):
    """Sample one normalized window: uniform series, uniform valid offset.

    Missing values become zero before normalization. Returns
    (window, (mu, sigma)).
    """
    usable = eligible_records(records, spec.length)
    if not usable:
        raise DataError(
            f"no series of length >= {spec.length} in dataset "
            f"({len(records)} records)"
        )
    rec = usable[int(rng.integers(0, len(usable)))]
    offset = int(rng.integers(0, rec.values.size - spec.length + 1))
    window = np.nan_to_num(rec.values[offset : offset + spec.length], nan=0.0)
    xn, mu, sigma = normalize(window)
    return xn, (mu, sigma)


def load_window_batch(records, spec: WindowSpec, batch, rng: Rng):
    """(batch, L) array of normalized windows; draw order is fixed."""
    out = np.empty((batch, spec.length), dtype=np.float64)
    for i in range(batch):
        out[i], _ = load_window(records, spec, rng)
    return out


# ---------------------------------------------------------------------------
# Synthetic series
# ---------------------------------------------------------------------------

FAMILIES = ("trend+sine", "piecewise-level", "ar1-noise", "sine+burst", "mixed")


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator spec; ``family`` is one of FAMILIES ("mixed" cycles through
    the four concrete families). ``overrides`` pins named parameters that are
    otherwise drawn from the documented ranges."""

    family: str = "mixed"
    length: int = 256
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.length < 8:
            raise ValueError(f"series length must be >= 8, got {self.length}")


def _param(rng, overrides, name, low, high):
    if name in overrides:
        return float(overrides[name])
    return float(rng.uniform((), low, high, dtype=np.float64))


def _trend_sine(rng, n, ov):
    """Linear trend plus one slow sinusoid plus faint white noise."""
    tau = np.linspace(0.0, 1.0, n)
    slope = _param(rng, ov, "slope", -2.0, 2.0)
    level = _param(rng, ov, "level", -1.0, 1.0)
    amp = _param(rng, ov, "amplitude", 0.5, 2.0)
    cycles = _param(rng, ov, "cycles", 1.0, 4.0)
    phase = _param(rng, ov, "phase", 0.0, 2.0 * np.pi)
    noise = _param(rng, ov, "noise", 0.0, 0.15)
    x = slope * tau + level + amp * np.sin(2.0 * np.pi * cycles * tau + phase)
    return x + noise * rng.normal((n,), dtype=np.float64)


def _piecewise_level(rng, n, ov):
    """A few constant plateaus with abrupt jumps, plus small AR(1) texture."""
    segments = int(_param(rng, ov, "segments", 3, 7))
    edges = np.sort(rng.integers(1, n, (segments - 1,)))
    x = np.empty(n)
    start = 0
    for edge in list(edges) + [n]:
        x[start:edge] = _param(rng, ov, f"_lvl{start}", -2.0, 2.0)
        start = int(edge)
    rho = _param(rng, ov, "rho", 0.6, 0.9)
    sig = _param(rng, ov, "noise", 0.05, 0.25)
    x += _ar1(rng, n, rho, sig)
    return x


def _ar1(rng, n, rho, sigma):
    eps = rng.normal((n,), dtype=np.float64)
    x = np.empty(n)
    # stationary start so short series match the process statistics
    x[0] = eps[0] * sigma / np.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + sigma * eps[t]
    return x


def _ar1_noise(rng, n, ov):
    """Strong autocorrelated texture around a faint slow drift."""
    rho = _param(rng, ov, "rho", 0.7, 0.95)
    sig = _param(rng, ov, "sigma", 0.5, 1.0)
    drift = _param(rng, ov, "drift", -0.5, 0.5)
    return drift * np.linspace(0.0, 1.0, n) + _ar1(rng, n, rho, sig)


def _sine_burst(rng, n, ov):
    """Slow sinusoid with localized high-frequency burst packets."""
    tau = np.linspace(0.0, 1.0, n)
    amp = _param(rng, ov, "amplitude", 0.8, 1.5)
    cycles = _param(rng, ov, "cycles", 1.0, 3.0)
    phase = _param(rng, ov, "phase", 0.0, 2.0 * np.pi)
    x = amp * np.sin(2.0 * np.pi * cycles * tau + phase)
    bursts = int(_param(rng, ov, "bursts", 2, 6))
    for b in range(bursts):
        center = _param(rng, ov, f"_c{b}", 0.05, 0.95)
        width = _param(rng, ov, f"_w{b}", 3.0, 10.0) / n
        bamp = _param(rng, ov, f"_a{b}", 0.5, 2.0)
        bfreq = _param(rng, ov, f"_f{b}", 20.0, 40.0)
        envelope = np.exp(-0.5 * ((tau - center) / width) ** 2)
        x += bamp * envelope * np.sin(2.0 * np.pi * bfreq * tau)
    return x


_GENERATORS = {
    "trend+sine": _trend_sine,
    "piecewise-level": _piecewise_level,
    "ar1-noise": _ar1_noise,
    "sine+burst": _sine_burst,
}


def generate_synthetic(spec: SyntheticSpec, count) -> list[SeriesRecord]:
    """Reproducible synthetic records; each series gets its own child seed."""
    names = list(_GENERATORS) if spec.family == "mixed" else [spec.family]
    records = []
    for i in range(count):
        family = names[i % len(names)]
        rng = Rng((spec.seed, i))
        values = _GENERATORS[family](rng, spec.length, spec.overrides)
        if not np.isfinite(values).all():
            raise ValueError(f"synthetic series {i} has non-finite values")
        records.append(SeriesRecord(f"{family}-{i:05d}", values))
    return records


def generate_eval_pairs(count, length, seed):
    """(content, style) reference pairs from distinct families: smooth
    trend+sine content against textured ar1-noise / sine+burst styles."""
    contents = generate_synthetic(
        SyntheticSpec(family="trend+sine", length=length, seed=seed), count
    )
    ar = generate_synthetic(
        SyntheticSpec(family="ar1-noise", length=length, seed=seed + 1), count
    )
    bursts = generate_synthetic(
        SyntheticSpec(family="sine+burst", length=length, seed=seed + 2), count
    )
    styles = [ar[i] if i % 2 == 0 else bursts[i] for i in range(count)]
    return contents, styles
