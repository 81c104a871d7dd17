"""Link adaptation: distance -> CQI, CQI -> MCS, and transport block sizing.

Two table families are supported, named after their role in the evaluated
services: LEP (low error protection, MCS/CQI table 2, 0.1 target BLER) and
HEP (high error protection, MCS/CQI table 3, 1e-5 target BLER).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

from .phy import ConfigurationError

DEFAULT_CELL_RADIUS_M = 866.0

#: default resource elements per RB unusable for data (DMRS and other
#: reference signals); calibration knob for the RB-footprint anchors.
DEFAULT_OVERHEAD_RE_PER_RB = 12

#: lowest CQI index the default distance map assigns at the cell edge;
#: calibration knob paired with the overhead above.
DEFAULT_EDGE_CQI = 6

TARGET_BLER = {"LEP": 0.1, "HEP": 1e-5}


class NoTransmission(ConfigurationError):
    """CQI 0 reported: channel out of range, nothing can be scheduled."""


class AllocationInfeasible(ConfigurationError):
    """Packet cannot fit the carrier even with every resource block."""


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int
    code_rate: float
    spectral_efficiency: float


def _load_mcs(name: str) -> tuple[McsEntry, ...]:
    path = resources.files("nrv2x.data").joinpath(name)
    with path.open(newline="") as fh:
        return tuple(
            McsEntry(
                int(r["index"]),
                int(r["modulation_order"]),
                float(r["code_rate_x1024"]) / 1024.0,
                float(r["spectral_efficiency"]),
            )
            for r in csv.DictReader(fh)
        )


def _load_cqi(name: str) -> dict[int, float]:
    path = resources.files("nrv2x.data").joinpath(name)
    with path.open(newline="") as fh:
        return {int(r["index"]): float(r["efficiency"]) for r in csv.DictReader(fh)}


MCS_TABLES = {"LEP": _load_mcs("mcs_table2.csv"), "HEP": _load_mcs("mcs_table3.csv")}
CQI_TABLES = {"LEP": _load_cqi("cqi_table2.csv"), "HEP": _load_cqi("cqi_table3.csv")}

_TBS_TABLE: tuple[int, ...]
with resources.files("nrv2x.data").joinpath("tbs_table.csv").open(newline="") as _fh:
    _TBS_TABLE = tuple(int(r["tbs_bits"]) for r in csv.DictReader(_fh))


@dataclass(frozen=True)
class LinkProfile:
    """MCS table selection plus the distance -> CQI quantisation map.

    cqi_map is an ordered list of (upper distance bound in metres, cqi);
    bounds are strictly increasing and the last bound is the cell radius.
    """

    mcs_table: str
    target_bler: float
    cqi_map: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if self.mcs_table not in MCS_TABLES:
            raise ConfigurationError(f"unknown MCS table {self.mcs_table!r}")
        if self.target_bler != TARGET_BLER[self.mcs_table]:
            raise ConfigurationError(
                f"{self.mcs_table} requires target BLER {TARGET_BLER[self.mcs_table]}"
            )
        bounds = [b for b, _ in self.cqi_map]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ConfigurationError("cqi_map distance bounds must be strictly increasing")


def linear_cqi_map(
    cell_radius_m: float = DEFAULT_CELL_RADIUS_M,
    best_cqi: int = 15,
    edge_cqi: int = DEFAULT_EDGE_CQI,
) -> tuple[tuple[float, int], ...]:
    """Equal-width distance bins from best_cqi at the gNB down to edge_cqi.

    With vehicles placed uniformly this makes the CQI uniform over the
    [edge_cqi, best_cqi] index range; the default edge index together with
    the RB overhead constant is calibrated against the mean RB-per-packet
    anchors of the evaluated services.
    """
    if not 1 <= edge_cqi <= best_cqi <= 15:
        raise ConfigurationError("CQI map range must satisfy 1 <= edge <= best <= 15")
    steps = best_cqi - edge_cqi + 1
    width = cell_radius_m / steps
    return tuple((width * (i + 1), best_cqi - i) for i in range(steps))


def default_link_profile(mcs_table: str, edge_cqi: int = DEFAULT_EDGE_CQI) -> LinkProfile:
    return LinkProfile(mcs_table, TARGET_BLER[mcs_table], linear_cqi_map(edge_cqi=edge_cqi))


def cqi_from_distance(distance_m: float, profile: LinkProfile) -> int:
    """CQI of the first map entry whose bound covers the distance."""
    if distance_m < 0 or distance_m > profile.cqi_map[-1][0]:
        raise ConfigurationError(f"distance {distance_m} m outside the mapped cell")
    for bound, cqi in profile.cqi_map:
        if distance_m <= bound:
            return cqi
    raise AssertionError("unreachable: map covers the cell")


def mcs_from_cqi(cqi: int, mcs_table: str) -> McsEntry:
    """Highest-efficiency MCS admitted by the reported CQI for this table.

    CQI 1 of table 2 sits below the table's lowest MCS efficiency; the most
    robust entry is used there.  CQI 0 means out of range.
    """
    if cqi == 0:
        raise NoTransmission("CQI 0: out of range")
    cqi_eff = CQI_TABLES[mcs_table].get(cqi)
    if cqi_eff is None:
        raise ConfigurationError(f"CQI {cqi} not defined for {mcs_table}")
    admitted = [m for m in MCS_TABLES[mcs_table] if m.spectral_efficiency <= cqi_eff]
    if not admitted:
        return MCS_TABLES[mcs_table][0]
    return max(admitted, key=lambda m: m.spectral_efficiency)


def transport_block_size(
    mcs: McsEntry,
    n_rb: int,
    n_symbols: int,
    layers: int = 2,
    overhead_re_per_rb: int = DEFAULT_OVERHEAD_RE_PER_RB,
) -> int:
    """Payload bits carried by (MCS, RBs, symbols, layers), per TS 38.214 5.1.3.2.

    The intermediate round() is half-up, matching the procedure's convention.
    """
    if n_rb < 1 or not 1 <= n_symbols <= 14 or layers not in (1, 2):
        raise ConfigurationError("TBS arguments out of range")
    n_re = min(156, 12 * n_symbols - overhead_re_per_rb) * n_rb
    n_info = n_re * mcs.code_rate * mcs.modulation_order * layers
    if n_info <= 0:
        return 0
    if n_info <= 3824:
        n = max(3, math.floor(math.log2(n_info)) - 6)
        quantised = max(24, (1 << n) * math.floor(n_info / (1 << n)))
        idx = _bisect_tbs(quantised)
        return _TBS_TABLE[idx]
    n = math.floor(math.log2(n_info - 24)) - 5
    quantised = max(3840, (1 << n) * math.floor((n_info - 24) / (1 << n) + 0.5))
    if mcs.code_rate <= 0.25:
        blocks = math.ceil((quantised + 24) / 3816)
    elif quantised > 8424:
        blocks = math.ceil((quantised + 24) / 8424)
    else:
        blocks = 1
    return 8 * blocks * math.ceil((quantised + 24) / (8 * blocks)) - 24


def _bisect_tbs(value: int) -> int:
    lo, hi = 0, len(_TBS_TABLE) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _TBS_TABLE[mid] >= value:
            hi = mid
        else:
            lo = mid + 1
    return lo


def rbs_for_packet(
    payload_bits: int,
    mcs: McsEntry,
    n_symbols: int,
    layers: int = 2,
    overhead_re_per_rb: int = DEFAULT_OVERHEAD_RE_PER_RB,
    max_rb: int | None = None,
) -> int:
    """Smallest RB count whose transport block fits the payload."""
    if payload_bits <= 0:
        raise ConfigurationError("payload must be positive")
    hi = max_rb if max_rb is not None else 4096
    if transport_block_size(mcs, hi, n_symbols, layers, overhead_re_per_rb) < payload_bits:
        raise AllocationInfeasible(
            f"{payload_bits} bits do not fit in {hi} RBs at MCS {mcs.index}"
        )
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if transport_block_size(mcs, mid, n_symbols, layers, overhead_re_per_rb) >= payload_bits:
            hi = mid
        else:
            lo = mid + 1
    # guard against any residual non-monotonicity of the quantised TBS
    while lo > 1 and transport_block_size(mcs, lo - 1, n_symbols, layers, overhead_re_per_rb) >= payload_bits:
        lo -= 1
    return lo


def mean_rbs_over_cell(
    mcs_table: str,
    n_symbols: int,
    payload_bits: int = 2400,
    layers: int = 2,
    overhead_re_per_rb: int = DEFAULT_OVERHEAD_RE_PER_RB,
    edge_cqi: int = DEFAULT_EDGE_CQI,
) -> float:
    """Expected RBs per packet when vehicle distance is uniform over the cell.

    The default linear map makes the CQI uniform over its index range, so the
    expectation is an exact average over the map's CQI values.
    """
    profile = default_link_profile(mcs_table, edge_cqi)
    counts = [
        rbs_for_packet(payload_bits, mcs_from_cqi(cqi, mcs_table), n_symbols, layers,
                       overhead_re_per_rb)
        for _, cqi in profile.cqi_map
    ]
    return sum(counts) / len(counts)
