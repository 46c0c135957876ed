"""
BLER Model
MCS table with spectral efficiencies, and the sigmoid BLER approximation
per (MCS, code block size) with clipping, interpolation and curve fitting.

All SINR values are in dB. For an entry with center c and scale s,
BLER(gamma) = 1 - sigmoid((gamma - c) / s).
"""

import csv
import logging
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import yaml
from scipy.optimize import least_squares
from scipy.special import expit

from errors import ConfigError, FitError, TableLookupError

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "config")
MCS_TABLE_PATH = os.path.join(CONFIG_DIR, "mcs_table.yaml")
BLER_TABLE_PATH = os.path.join(CONFIG_DIR, "bler_sigmoid.csv")

DEFAULT_BLER_CLIP = (0.01, 0.99)
DEFAULT_SCALE_CLIP = (0.5, 10.0)

BLER_CSV_FIELDS = ["mcs", "cbs", "center_db", "scale_db"]


@dataclass(frozen=True)
class McsEntry:
    index: int
    se: float
    modulation: str = ""


class McsTable:
    """Ordered MCS indices with strictly increasing spectral efficiency."""

    def __init__(self, entries, name: str = ""):
        entries = tuple(entries)
        if not entries:
            raise ConfigError("MCS table is empty")
        for prev, cur in zip(entries, entries[1:]):
            if cur.index <= prev.index:
                raise ConfigError(f"MCS indices must be strictly increasing (got {prev.index}, {cur.index})")
            if cur.se <= prev.se:
                raise ConfigError(f"SE must increase with the MCS index (MCS {cur.index})")
        if entries[0].se <= 0:
            raise ConfigError("SE must be positive")

        self.name = name
        self.entries = entries
        self.indices = np.array([e.index for e in entries], dtype=int)
        self.se_values = np.array([e.se for e in entries], dtype=float)
        self._by_index = {e.index: e for e in entries}

    def se(self, u: int) -> float:
        """Spectral efficiency of MCS u in bits per symbol."""
        try:
            return self._by_index[u].se
        except KeyError:
            raise TableLookupError(f"MCS index {u} not in table {self.name!r}") from None

    def subset(self, indices) -> "McsTable":
        wanted = set(indices)
        missing = wanted - set(self._by_index)
        if missing:
            raise TableLookupError(f"MCS indices {sorted(missing)} not in table {self.name!r}")
        return McsTable([e for e in self.entries if e.index in wanted], name=self.name)

    @property
    def lowest(self) -> int:
        return self.entries[0].index

    @property
    def highest(self) -> int:
        return self.entries[-1].index

    @property
    def min_se(self) -> float:
        return self.entries[0].se

    def __contains__(self, u) -> bool:
        return u in self._by_index

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_mcs_table(path=None) -> McsTable:
    if path is None:
        path = MCS_TABLE_PATH
    with open(path, "r") as f:
        data = yaml.safe_load(f)
    try:
        entries = [
            McsEntry(int(row["index"]), float(row["se"]), str(row.get("modulation", "")))
            for row in data["entries"]
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: malformed MCS table ({e})") from e
    return McsTable(entries, name=data.get("name", os.path.basename(path)))


@dataclass(frozen=True)
class SigmoidBlerEntry:
    mcs: int
    cbs: int
    center: float
    scale: float
    synthetic: bool = False

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive for MCS {self.mcs}, CBS {self.cbs}")
        if self.cbs <= 0:
            raise ConfigError(f"CBS must be positive for MCS {self.mcs}")


def _check_interval(name, interval, upper=None):
    lo, hi = float(interval[0]), float(interval[1])
    if not (0 < lo < hi) or (upper is not None and hi >= upper):
        raise ConfigError(f"{name} interval {interval} is not nested in (0, {upper or 'inf'})")
    return lo, hi


def clip_bler_scale(p: float, s: float, bler_clip=DEFAULT_BLER_CLIP, scale_clip=DEFAULT_SCALE_CLIP):
    """Clip a BLER value and a sigmoid scale to their practical intervals."""
    return (
        min(max(p, bler_clip[0]), bler_clip[1]),
        min(max(s, scale_clip[0]), scale_clip[1]),
    )


class BlerTable:
    """
    Sigmoid BLER parameters keyed by (MCS, CBS).

    Every MCS of the MCS table must have an entry for every CBS in the table,
    and for a fixed CBS the center must be non-decreasing in the MCS index.
    """

    def __init__(self, entries, mcs_table: McsTable,
                 bler_clip=DEFAULT_BLER_CLIP, scale_clip=DEFAULT_SCALE_CLIP):
        self.mcs_table = mcs_table
        self.bler_clip = _check_interval("bler_clip", bler_clip, upper=1.0)
        self.scale_clip = _check_interval("scale_clip", scale_clip)

        self._entries = {}
        for e in entries:
            if e.mcs not in mcs_table:
                raise ConfigError(f"BLER entry for MCS {e.mcs} which is not in the MCS table")
            self._entries[(e.mcs, e.cbs)] = e

        self.cbs_values = tuple(sorted({cbs for _, cbs in self._entries}))
        if not self.cbs_values:
            raise ConfigError("BLER table is empty")

        self._centers = {}
        self._scales = {}
        for cbs in self.cbs_values:
            missing = [u for u in mcs_table.indices if (int(u), cbs) not in self._entries]
            if missing:
                raise ConfigError(f"BLER table has no entry for CBS {cbs} and MCS {missing}")
            rows = [self._entries[(int(u), cbs)] for u in mcs_table.indices]
            centers = np.array([r.center for r in rows])
            if np.any(np.diff(centers) < 0):
                raise ConfigError(f"sigmoid centers must be non-decreasing in MCS for CBS {cbs}")
            self._centers[cbs] = centers
            self._scales[cbs] = np.array([r.scale for r in rows])

        self._cbs_array = np.array(self.cbs_values)
        self._cbs_cache = {}

    def resolve_cbs(self, b: int) -> int:
        """Nearest bundled CBS to a TBS in bits; ties go to the larger CBS."""
        cbs = self._cbs_cache.get(b)
        if cbs is None:
            if b <= 0:
                raise TableLookupError(f"TBS must be positive, got {b}")
            dist = np.abs(self._cbs_array - b)
            # Last minimum wins, i.e. the larger CBS on a tie.
            pos = len(dist) - 1 - int(np.argmin(dist[::-1]))
            cbs = int(self._cbs_array[pos])
            self._cbs_cache[b] = cbs
        return cbs

    def entry(self, u: int, b: int) -> SigmoidBlerEntry:
        try:
            return self._entries[(u, self.resolve_cbs(b))]
        except KeyError:
            raise TableLookupError(f"no BLER entry for MCS {u}") from None

    def bler(self, u: int, gamma: float, b: int, clipped: bool = False) -> float:
        """Block error probability of MCS u at SINR gamma (dB) for TBS b."""
        e = self.entry(u, b)
        p = float(expit((e.center - gamma) / e.scale))
        if clipped:
            p = min(max(p, self.bler_clip[0]), self.bler_clip[1])
        return p

    def bler_vector(self, gamma: float, b: int, clipped: bool = False) -> np.ndarray:
        """BLER of every MCS in table order at SINR gamma for TBS b."""
        cbs = self.resolve_cbs(b)
        p = expit((self._centers[cbs] - gamma) / self._scales[cbs])
        if clipped:
            p = np.clip(p, self.bler_clip[0], self.bler_clip[1])
        return p

    def clip_bler_scale(self, p: float, s: float):
        return clip_bler_scale(p, s, self.bler_clip, self.scale_clip)

    def snr_for_bler(self, u: int, p: float, b: int) -> float:
        """SINR (dB) at which MCS u reaches BLER p."""
        if not 0 < p < 1:
            raise ValueError(f"BLER must lie in (0, 1), got {p}")
        e = self.entry(u, b)
        return float(e.center + e.scale * np.log((1 - p) / p))

    @property
    def mcs_indices(self):
        return self.mcs_table.indices

    def __iter__(self):
        return iter(sorted(self._entries.values(), key=lambda e: (e.cbs, e.mcs)))

    def __len__(self):
        return len(self._entries)

    def to_csv(self, path, include_synthetic: bool = True):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(BLER_CSV_FIELDS)
            for e in sorted(self._entries.values(), key=lambda e: (e.mcs, e.cbs)):
                if e.synthetic and not include_synthetic:
                    continue
                writer.writerow([e.mcs, e.cbs, f"{e.center:.9g}", f"{e.scale:.9g}"])


def read_bler_csv(path) -> list:
    """Read (mcs, cbs, center_db, scale_db) records; '#' lines are comments."""
    entries = []
    with open(path, "r", newline="") as f:
        lines = [(n, line) for n, line in enumerate(f, 1) if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise ConfigError(f"{path}: no records")
    header = [h.strip() for h in lines[0][1].strip().split(",")]
    if header != BLER_CSV_FIELDS:
        raise ConfigError(f"{path}:{lines[0][0]}: expected header {','.join(BLER_CSV_FIELDS)}")
    for lineno, line in lines[1:]:
        fields = [x.strip() for x in line.strip().split(",")]
        try:
            mcs, cbs, center, scale = int(fields[0]), int(fields[1]), float(fields[2]), float(fields[3])
        except (IndexError, ValueError):
            raise ConfigError(f"{path}:{lineno}: malformed BLER record {line.strip()!r}") from None
        entries.append(SigmoidBlerEntry(mcs, cbs, center, scale))
    return entries


def interpolate_missing(anchors, mcs_table: McsTable) -> list:
    """
    Complete a set of anchor rows to every MCS of the table.

    Per CBS, centers are linear in SE (extrapolated from the end segments)
    and scales are interpolated in SE (held constant beyond the ends).
    Generated rows are flagged synthetic.
    """
    by_cbs = {}
    for e in anchors:
        by_cbs.setdefault(e.cbs, {})[e.mcs] = e

    out = []
    for cbs, rows in sorted(by_cbs.items()):
        known = sorted(rows)
        if len(known) < 2:
            raise ConfigError(f"need at least two anchor rows to interpolate CBS {cbs}")
        x = np.array([mcs_table.se(u) for u in known])
        centers = np.array([rows[u].center for u in known])
        scales = np.array([rows[u].scale for u in known])
        lo_slope = (centers[1] - centers[0]) / (x[1] - x[0])
        hi_slope = (centers[-1] - centers[-2]) / (x[-1] - x[-2])

        for entry in mcs_table:
            if entry.index in rows:
                out.append(rows[entry.index])
                continue
            se = entry.se
            if se < x[0]:
                center = centers[0] + lo_slope * (se - x[0])
            elif se > x[-1]:
                center = centers[-1] + hi_slope * (se - x[-1])
            else:
                center = float(np.interp(se, x, centers))
            scale = float(np.interp(se, x, scales))
            out.append(SigmoidBlerEntry(entry.index, cbs, float(center), scale, synthetic=True))
    return out


def load_bler_table(path=None, mcs_table: McsTable = None, fill_missing: bool = True,
                    bler_clip=DEFAULT_BLER_CLIP, scale_clip=DEFAULT_SCALE_CLIP) -> BlerTable:
    if path is None:
        path = BLER_TABLE_PATH
    if mcs_table is None:
        mcs_table = load_mcs_table()
    entries = read_bler_csv(path)
    if fill_missing:
        entries = interpolate_missing(entries, mcs_table)
    return BlerTable(entries, mcs_table, bler_clip=bler_clip, scale_clip=scale_clip)


@lru_cache(maxsize=1)
def default_tables():
    """Bundled MCS table and completed BLER table (immutable, shared)."""
    mcs_table = load_mcs_table()
    return mcs_table, load_bler_table(mcs_table=mcs_table)


def sigmoid_success(snr, center: float, scale: float):
    """Success probability 1 - BLER of the sigmoid model."""
    return expit((np.asarray(snr, dtype=float) - center) / scale)


def sigmoid_mse(points, center: float, scale: float) -> float:
    arr = np.asarray(points, dtype=float)
    return float(np.mean((sigmoid_success(arr[:, 0], center, scale) - (1 - arr[:, 1])) ** 2))


def fit_sigmoid(points):
    """
    Fit (center, scale) to (SNR dB, BLER) samples by mean-square error on the
    success probability.

    Two samples are inverted in closed form. Otherwise a coarse grid picks the
    starting point and trust-region least squares refines it.

    Raises:
        FitError: fewer than two samples strictly between 0 and 1.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise FitError("need at least two (snr, bler) samples")
    snr, bler_obs = arr[:, 0], arr[:, 1]
    if np.any((bler_obs < 0) | (bler_obs > 1)) or not np.all(np.isfinite(arr)):
        raise FitError("BLER samples must be finite probabilities")
    interior = (bler_obs > 0) & (bler_obs < 1)
    if interior.sum() < 2:
        raise FitError("degenerate samples: fewer than two BLER values strictly inside (0, 1)")

    if len(arr) == 2:
        z = np.log((1 - bler_obs) / bler_obs)
        if z[1] == z[0]:
            raise FitError("two samples with equal BLER cannot be inverted")
        scale = (snr[1] - snr[0]) / (z[1] - z[0])
        if scale <= 0:
            raise FitError("samples imply a BLER increasing with SNR")
        return float(snr[0] - scale * z[0]), float(scale)

    success = 1 - bler_obs
    grid_c = np.linspace(snr.min(), snr.max(), 41)
    grid_s = np.geomspace(0.01, 10.0, 31)
    cc, ss = np.meshgrid(grid_c, grid_s, indexing="ij")
    pred = expit((snr[None, None, :] - cc[..., None]) / ss[..., None])
    sse = np.sum((pred - success) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(sse), sse.shape)

    result = least_squares(
        lambda x: expit((snr - x[0]) / x[1]) - success,
        x0=[grid_c[i], grid_s[j]],
        bounds=([-np.inf, 1e-6], [np.inf, np.inf]),
        method="trf",
        xtol=1e-8,
        ftol=1e-15,
        gtol=1e-15,
    )
    center, scale = result.x
    if not np.all(np.isfinite(result.x)) or scale <= 0:
        raise FitError("least-squares fit diverged")
    logger.debug("sigmoid fit: c=%.4f s=%.4f (%d evals)", center, scale, result.nfev)
    return float(center), float(scale)


if __name__ == "__main__":
    mcs_table, table = default_tables()
    print(f"{mcs_table.name}: {len(mcs_table)} MCS, CBS {table.cbs_values}")
    for e in table:
        tag = " (synthetic)" if e.synthetic else ""
        print(f"  MCS {e.mcs:>2} CBS {e.cbs:>5}: c={e.center:7.2f} dB s={e.scale:.2f}{tag}")
