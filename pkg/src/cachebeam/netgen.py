"""Random scenario generation for cache-enabled multicast networks.

Covers the hexagonal multicell topology, large-scale and small-scale fading
channels, Zipf content requests, multicast grouping and the two cache
placement strategies (most popular caching and probabilistic caching).

File and user indices are 0-based throughout the package.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .units import amplitude_from_db, db_to_lin, dbm_to_watt, shannon_rate


@dataclass(frozen=True)
class TopologyConfig:
    n_bs: int = 7
    antennas: int = 2               # antennas per BS (L)
    cell_radius: float = 500.0      # hexagon circumradius [m]
    exclusion_radius: float = 50.0  # no user closer than this to any BS [m]
    n_users: int = 15
    max_draws_per_user: int = 10_000

    def __post_init__(self):
        if self.n_bs < 1:
            raise ValueError("n_bs must be >= 1")
        if self.antennas < 1:
            raise ValueError("antennas must be >= 1")
        if self.n_users < 0:
            raise ValueError("n_users must be >= 0")
        if not 0.0 < self.exclusion_radius < self.cell_radius:
            raise ValueError("need 0 < exclusion_radius < cell_radius")


@dataclass(frozen=True)
class ChannelParams:
    antenna_gain_dBi: float = 10.0
    pathloss_intercept: float = 148.1   # dB at 1 km
    pathloss_slope: float = 37.6        # dB per decade of distance
    shadowing_sigma_dB: float = 8.0
    noise_psd_dBm_per_Hz: float = -172.0
    bandwidth: float = 10e6             # Hz

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.shadowing_sigma_dB < 0:
            raise ValueError("shadowing_sigma_dB must be nonnegative")

    @property
    def noise_power(self) -> float:
        """Receiver noise power over the whole band [W]."""
        return float(dbm_to_watt(self.noise_psd_dBm_per_Hz) * self.bandwidth)


@dataclass(frozen=True)
class Topology:
    bs_pos: np.ndarray    # (N_B, 2) meters
    user_pos: np.ndarray  # (N_U, 2) meters
    cell_radius: float

    @property
    def n_bs(self) -> int:
        return self.bs_pos.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_pos.shape[0]

    def distances(self) -> np.ndarray:
        """User-to-BS distances, shape (N_U, N_B), meters."""
        diff = self.user_pos[:, None, :] - self.bs_pos[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ContentCatalog:
    n_files: int
    zipf_exponent: float
    popularity: np.ndarray


@dataclass(frozen=True)
class Grouping:
    members: tuple          # tuple of tuples of user indices, one per group
    requested_file: tuple   # file index per group
    target_sinr: np.ndarray  # linear SINR target per group

    @property
    def n_groups(self) -> int:
        return len(self.members)

    def user_group(self, n_users: int) -> np.ndarray:
        """Group index of every user."""
        out = np.full(n_users, -1, dtype=int)
        for m, users in enumerate(self.members):
            out[list(users)] = m
        return out


@dataclass(frozen=True)
class CacheMatrix:
    c: np.ndarray    # (N_F, N_B) in {0, 1}
    cache_size: int


# --------------------------------------------------------------------------
# topology


def hex_centers(n_cells: int, spacing: float) -> np.ndarray:
    """Centres of a hexagonal lattice ordered ring by ring.

    The first centre is the origin, the next six sit on the first ring at
    angles 0, 60, ..., 300 degrees, and further rings follow the same
    convention.  ``spacing`` is the distance between adjacent centres.
    """
    # axial lattice directions for a ring walk
    dirs = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
    a1 = np.array([spacing, 0.0])
    a2 = np.array([spacing * 0.5, spacing * np.sqrt(3.0) / 2.0])
    cells = [(0, 0)]
    ring = 1
    while len(cells) < n_cells:
        # ring walk starting from direction 0 scaled by ring index
        q, r = ring, 0
        ring_cells = []
        for d in range(6):
            dq, dr = dirs[(d + 2) % 6]
            for _ in range(ring):
                ring_cells.append((q, r))
                q, r = q + dq, r + dr
        cells.extend(ring_cells)
        ring += 1
    pts = np.array([q * a1 + r * a2 for q, r in cells[:n_cells]])
    return pts


def _inside_hexagon(points: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Membership test for a pointy-top hexagon with circumradius ``radius``.

    Pointy-top cells tile the plane when neighbouring centres differ by
    sqrt(3)*radius along the 0, 60, ... degree directions.
    """
    d = np.abs(points - center)
    x, y = d[:, 0], d[:, 1]
    half_width = radius * np.sqrt(3.0) / 2.0
    return (x <= half_width) & (y <= radius - x / np.sqrt(3.0))


def gen_topology(cfg: TopologyConfig, seed) -> Topology:
    """Place BSs on a hexagonal grid and drop users uniformly in the cells.

    Users are drawn cell by cell (cell chosen uniformly, point uniform in the
    hexagon), which is uniform over the union of equal-area cells.  Points
    closer than ``exclusion_radius`` to any BS are redrawn.
    """
    rng = np.random.default_rng(seed)
    bs = hex_centers(cfg.n_bs, np.sqrt(3.0) * cfg.cell_radius)
    users = np.zeros((cfg.n_users, 2))
    budget = cfg.max_draws_per_user * max(cfg.n_users, 1)
    draws = 0
    for k in range(cfg.n_users):
        while True:
            draws += 1
            if draws > budget:
                raise ValueError(
                    "user placement exceeded its retry cap; check exclusion_radius "
                    "against cell_radius")
            cell = rng.integers(cfg.n_bs)
            offset = rng.uniform(-cfg.cell_radius, cfg.cell_radius, size=2)
            p = bs[cell] + offset
            if not _inside_hexagon(p[None, :], bs[cell], cfg.cell_radius)[0]:
                continue
            if np.min(np.linalg.norm(bs - p, axis=1)) < cfg.exclusion_radius:
                continue
            users[k] = p
            break
    return Topology(bs_pos=bs, user_pos=users, cell_radius=cfg.cell_radius)


# --------------------------------------------------------------------------
# channels


def pathloss_db(d_m, params: ChannelParams = ChannelParams()) -> np.ndarray:
    """Distance-dependent path loss in dB (distance in meters)."""
    d_km = np.asarray(d_m, dtype=float) / 1000.0
    return params.pathloss_intercept + params.pathloss_slope * np.log10(d_km)


def channel_amplitude(d_m, shadowing_lin, gain_lin, params: ChannelParams = ChannelParams()):
    """Large-scale amplitude factor 10^(-PL/20) * sqrt(gain * shadowing)."""
    return amplitude_from_db(pathloss_db(d_m, params)) * np.sqrt(
        np.asarray(gain_lin) * np.asarray(shadowing_lin))


def gen_channels(topology: Topology, params: ChannelParams, antennas: int, seed) -> np.ndarray:
    """Draw the complex channel tensor ``H`` of shape (N_U, N_B, L).

    Each link combines path loss, log-normal shadowing (i.i.d. per link),
    the antenna gain, and i.i.d. unit-variance Rayleigh fading per antenna.
    """
    d = topology.distances()
    if np.any(d <= 0):
        raise ValueError("user-BS distances must be positive")
    rng = np.random.default_rng(seed)
    n_u, n_b = d.shape
    shadow = db_to_lin(params.shadowing_sigma_dB * rng.standard_normal((n_u, n_b)))
    fading = (rng.standard_normal((n_u, n_b, antennas))
              + 1j * rng.standard_normal((n_u, n_b, antennas))) / np.sqrt(2.0)
    amp = channel_amplitude(d, shadow, db_to_lin(params.antenna_gain_dBi), params)
    return amp[:, :, None] * fading


# --------------------------------------------------------------------------
# content, requests, caches


def zipf_popularity(n_files: int, exponent: float) -> np.ndarray:
    if n_files < 1:
        raise ValueError("n_files must be >= 1")
    if exponent < 0:
        raise ValueError("zipf exponent must be >= 0")
    w = np.arange(1, n_files + 1, dtype=float) ** (-exponent)
    return w / w.sum()


def make_catalog(n_files: int, exponent: float) -> ContentCatalog:
    return ContentCatalog(n_files, exponent, zipf_popularity(n_files, exponent))


def group_by_request(requests, sinr_target: float) -> Grouping:
    """Users requesting the same file form one multicast group.

    Groups are ordered by file index, members by user index.
    """
    requests = np.asarray(requests, dtype=int)
    files = np.unique(requests)
    members = tuple(tuple(int(k) for k in np.flatnonzero(requests == f)) for f in files)
    return Grouping(members=members,
                    requested_file=tuple(int(f) for f in files),
                    target_sinr=np.full(len(files), float(sinr_target)))


def sample_requests_and_group(catalog: ContentCatalog, n_users: int, sinr_target: float, seed) -> Grouping:
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    if sinr_target <= 0:
        raise ValueError("SINR target must be positive")
    rng = np.random.default_rng(seed)
    requests = rng.choice(catalog.n_files, size=n_users, p=catalog.popularity)
    return group_by_request(requests, sinr_target)


def cache_mpc(catalog: ContentCatalog, cache_size: int, n_bs: int) -> CacheMatrix:
    """Every BS stores the ``cache_size`` most popular files."""
    if not 0 <= cache_size <= catalog.n_files:
        raise ValueError("cache_size out of range")
    order = np.argsort(-catalog.popularity, kind="stable")
    c = np.zeros((catalog.n_files, n_bs), dtype=np.int8)
    c[order[:cache_size], :] = 1
    return CacheMatrix(c, cache_size)


def _weighted_sample_without_replacement(rng, weights: np.ndarray, size: int) -> np.ndarray:
    """Sequential popularity-weighted draws; zero-weight items are taken
    uniformly once the positive mass is exhausted."""
    remaining = np.ones(weights.size, dtype=bool)
    picked = []
    for _ in range(size):
        w = np.where(remaining, weights, 0.0)
        total = w.sum()
        if total <= 0:
            w = remaining.astype(float)
            total = w.sum()
        f = rng.choice(weights.size, p=w / total)
        picked.append(f)
        remaining[f] = False
    return np.asarray(picked, dtype=int)


def cache_probc(catalog: ContentCatalog, cache_size: int, n_bs: int, seed) -> CacheMatrix:
    """Each BS fills its cache by popularity-weighted sampling without replacement."""
    if not 0 <= cache_size <= catalog.n_files:
        raise ValueError("cache_size out of range")
    rng = np.random.default_rng(seed)
    c = np.zeros((catalog.n_files, n_bs), dtype=np.int8)
    for j in range(n_bs):
        if cache_size == catalog.n_files:
            c[:, j] = 1
            continue
        c[_weighted_sample_without_replacement(rng, catalog.popularity, cache_size), j] = 1
    return CacheMatrix(c, cache_size)


# --------------------------------------------------------------------------
# scenario bundle


@dataclass(frozen=True)
class PowerParams:
    """Per-BS power model constants (arrays of length N_B)."""
    P_A_bs: np.ndarray    # active BS static power [W]
    P_S_bs: np.ndarray    # sleep BS power [W]
    delta: np.ndarray     # PA slope
    P_A_bh: np.ndarray    # active backhaul static power [W]
    P_S_bh: np.ndarray    # sleep backhaul power [W]
    E_bh: np.ndarray      # backhaul energy per bit [J/bit]
    C_bh: np.ndarray      # backhaul capacity [bit/s]
    P_tx: np.ndarray      # maximum transmit power [W]

    def __post_init__(self):
        if np.any(self.P_A_bs <= self.P_S_bs) or np.any(self.P_S_bs < 0):
            raise ValueError("need P_A_bs > P_S_bs >= 0")
        if np.any(self.P_A_bh <= self.P_S_bh) or np.any(self.P_S_bh < 0):
            raise ValueError("need P_A_bh > P_S_bh >= 0")
        if np.any(self.C_bh <= 0) or np.any(self.delta <= 0) or np.any(self.P_tx <= 0):
            raise ValueError("C_bh, delta and P_tx must be positive")

    @property
    def relative_power(self) -> np.ndarray:
        """Cost of keeping a BS and its backhaul link awake [W]."""
        return (self.P_A_bs - self.P_S_bs) + (self.P_A_bh - self.P_S_bh)

    @property
    def sleep_power(self) -> np.ndarray:
        return self.P_S_bs + self.P_S_bh

    @classmethod
    def uniform(cls, n_bs, P_A_bs=6.8, P_S_bs=4.3, delta=4.0, P_A_bh=3.85, P_S_bh=0.75,
                E_bh=1e-7, C_bh=500e6, P_tx=1.0, relative_power=None):
        """Build per-BS arrays from scalars.

        ``relative_power`` (per-BS list) overrides the active-minus-sleep gap;
        the difference to the scalar model is attributed to the BS active power.
        """
        full = lambda x: np.full(n_bs, float(x))
        p_a = full(P_A_bs)
        if relative_power is not None:
            rel = np.asarray(relative_power, dtype=float)
            if rel.shape != (n_bs,):
                raise ValueError("relative_power must have one entry per BS")
            p_a = P_S_bs + rel - (P_A_bh - P_S_bh)
        return cls(p_a, full(P_S_bs), full(delta), full(P_A_bh), full(P_S_bh),
                   full(E_bh), full(C_bh), full(P_tx))

    def to_dict(self):
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


def default_relative_power(n_bs: int) -> np.ndarray:
    """Heterogeneous relative power 5.6 + (j-1) W used in the reference setup."""
    return 5.6 + np.arange(n_bs, dtype=float)


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    n_files: int = 100
    zipf_exponent: float = 1.2
    cache_size: int = 10
    cache_strategy: str = "mpc"       # "mpc" or "probc"
    sinr_dB: float = 5.0
    P_tx: float = 1.0
    delta: float = 4.0
    P_A_bs: float = 6.8
    P_S_bs: float = 4.3
    P_A_bh: float = 3.85
    P_S_bh: float = 0.75
    relative_power: Optional[tuple] = "default"   # "default", None, or per-BS values
    E_bh: float = 1e-7
    C_bh: float = 500e6

    def __post_init__(self):
        if self.n_files < 1:
            raise ValueError("n_files must be >= 1")
        if not 0 <= self.cache_size <= self.n_files:
            raise ValueError(f"cache_size must lie in 0..n_files ({self.n_files})")
        if self.cache_strategy not in ("mpc", "probc"):
            raise ValueError(f"unknown cache strategy {self.cache_strategy!r}")

    def power_params(self) -> PowerParams:
        n_bs = self.topology.n_bs
        if isinstance(self.relative_power, str):
            rel = default_relative_power(n_bs)
        elif self.relative_power is None:
            rel = None
        else:
            rel = np.asarray(self.relative_power, dtype=float)
        return PowerParams.uniform(n_bs, self.P_A_bs, self.P_S_bs, self.delta, self.P_A_bh,
                                   self.P_S_bh, self.E_bh, self.C_bh, self.P_tx, rel)


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance: geometry, channels, requests, caches, power model."""
    topology: Topology
    H: np.ndarray                 # (N_U, N_B, L) complex
    catalog: ContentCatalog
    grouping: Grouping
    cache: CacheMatrix
    power: PowerParams
    noise_power: np.ndarray       # (N_U,) W
    bandwidth: float
    seed: Optional[int] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.H)):
            raise ValueError("channel entries must be finite")
        n_u, n_b, _ = self.H.shape
        if n_b != self.power.P_A_bs.size or n_u != self.noise_power.size:
            raise ValueError("inconsistent scenario dimensions")

    # ---- dimensions
    @property
    def n_bs(self) -> int:
        return self.H.shape[1]

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def antennas(self) -> int:
        return self.H.shape[2]

    @property
    def n_groups(self) -> int:
        return self.grouping.n_groups

    # ---- derived quantities
    @property
    def user_group(self) -> np.ndarray:
        return self.grouping.user_group(self.n_users)

    @property
    def rates(self) -> np.ndarray:
        """Multicast rate of every group [bit/s]."""
        return shannon_rate(self.bandwidth, self.grouping.target_sinr)

    @property
    def uncached(self) -> np.ndarray:
        """(N_B, N_G) indicator that group m's file is missing at BS j."""
        files = np.asarray(self.grouping.requested_file, dtype=int)
        return 1.0 - self.cache.c[files, :].T.astype(float)

    @property
    def beta(self) -> np.ndarray:
        """(N_B, N_G) backhaul traffic power per delivered group [W]."""
        return self.power.E_bh[:, None] * self.rates[None, :]

    @property
    def eps_support(self) -> float:
        return 1e-4 * float(np.sqrt(np.max(self.power.P_tx)))

    def normalized_channels(self) -> np.ndarray:
        """Channels divided by the noise amplitude, shape (N_U, N_B, L)."""
        return self.H / np.sqrt(self.noise_power)[:, None, None]

    # ---- serialization
    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "topology": {"bs_pos": self.topology.bs_pos.tolist(),
                         "user_pos": self.topology.user_pos.tolist(),
                         "cell_radius": self.topology.cell_radius},
            "channels": {"shape": list(self.H.shape),
                         "re_im": np.stack([self.H.real, self.H.imag], axis=-1).ravel().tolist()},
            "catalog": {"n_files": self.catalog.n_files,
                        "zipf_exponent": self.catalog.zipf_exponent,
                        "popularity": self.catalog.popularity.tolist()},
            "grouping": {"members": [list(g) for g in self.grouping.members],
                         "requested_file": list(self.grouping.requested_file),
                         "target_sinr": self.grouping.target_sinr.tolist()},
            "cache": {"c": self.cache.c.tolist(), "cache_size": self.cache.cache_size},
            "power": self.power.to_dict(),
            "noise_power": self.noise_power.tolist(),
            "bandwidth": self.bandwidth,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        shape = tuple(d["channels"]["shape"])
        ri = np.asarray(d["channels"]["re_im"], dtype=float).reshape(shape + (2,))
        topo = Topology(np.asarray(d["topology"]["bs_pos"], dtype=float).reshape(-1, 2),
                        np.asarray(d["topology"]["user_pos"], dtype=float).reshape(-1, 2),
                        float(d["topology"]["cell_radius"]))
        cat = d["catalog"]
        grp = d["grouping"]
        return cls(
            topology=topo,
            H=ri[..., 0] + 1j * ri[..., 1],
            catalog=ContentCatalog(int(cat["n_files"]), float(cat["zipf_exponent"]),
                                   np.asarray(cat["popularity"], dtype=float)),
            grouping=Grouping(tuple(tuple(int(k) for k in g) for g in grp["members"]),
                              tuple(int(f) for f in grp["requested_file"]),
                              np.asarray(grp["target_sinr"], dtype=float)),
            cache=CacheMatrix(np.asarray(d["cache"]["c"], dtype=np.int8),
                              int(d["cache"]["cache_size"])),
            power=PowerParams.from_dict(d["power"]),
            noise_power=np.asarray(d["noise_power"], dtype=float),
            bandwidth=float(d["bandwidth"]),
            seed=d.get("seed"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    # ---- variants
    def with_sinr(self, sinr_lin: float) -> "Scenario":
        g = self.grouping
        return _replace(self, grouping=Grouping(g.members, g.requested_file,
                                                np.full(g.n_groups, float(sinr_lin))))

    def with_cache(self, cache: CacheMatrix) -> "Scenario":
        return _replace(self, cache=cache)

    def with_power(self, power: PowerParams) -> "Scenario":
        return _replace(self, power=power)


def _replace(obj, **changes):
    from dataclasses import replace
    return replace(obj, **changes)


def build_scenario(cfg: ScenarioConfig, seed: int) -> Scenario:
    """Generate a complete scenario; every random component gets its own stream."""
    ss_topo, ss_chan, ss_req, ss_cache = np.random.SeedSequence(seed).spawn(4)
    topo = gen_topology(cfg.topology, ss_topo)
    H = gen_channels(topo, cfg.channel, cfg.topology.antennas, ss_chan)
    catalog = make_catalog(cfg.n_files, cfg.zipf_exponent)
    grouping = sample_requests_and_group(catalog, cfg.topology.n_users,
                                         float(db_to_lin(cfg.sinr_dB)), ss_req)
    if cfg.cache_strategy == "mpc":
        cache = cache_mpc(catalog, cfg.cache_size, cfg.topology.n_bs)
    elif cfg.cache_strategy == "probc":
        cache = cache_probc(catalog, cfg.cache_size, cfg.topology.n_bs, ss_cache)
    else:
        raise ValueError(f"unknown cache strategy {cfg.cache_strategy!r}")
    noise = np.full(cfg.topology.n_users, cfg.channel.noise_power)
    return Scenario(topo, H, catalog, grouping, cache, cfg.power_params(), noise,
                    cfg.channel.bandwidth, seed)
