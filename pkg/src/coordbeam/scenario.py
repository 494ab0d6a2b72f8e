"""Drop generation: geometry, path loss with shadowing, RSRP-based CoMP
clustering, round-robin scheduling, small-scale fading and bounded CSI errors.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import NonPositiveDistance
from .system_model import ChannelSet


@dataclass
class TopologyConfig:
    """Cluster geometry and propagation constants (distances in meters, powers linear).

    Users are dropped uniformly over the annulus between ``min_serving_distance``
    and ``cell_radius`` around their serving BS. With ``require_full_cluster``
    a draw is kept only if every BS of the cluster is in its reporting set and
    the serving BS is its strongest.
    """

    n_bs: int = 3
    antennas: int = 4
    users_per_bs: int = 1
    power_limit: float = 10.0
    noise_power: float = 1e-13
    inter_bs_distance: float = 1000.0
    min_serving_distance: float = 350.0
    cell_radius: float = 500.0
    cluster_offset_fraction: float = 0.4
    pathloss_exponent: float = 3.8
    pathloss_scale: float = 10**-3.45
    shadowing_stddev: float = 8.0
    pool_size: int = None
    slot: int = 0
    require_full_cluster: bool = True
    max_draws: int = 100000
    bs_positions: list = None

    def __post_init__(self):
        if self.n_bs < 1 or self.antennas < 1 or self.users_per_bs < 1:
            raise ValueError("n_bs, antennas and users_per_bs must be positive")
        for name in ("power_limit", "noise_power", "inter_bs_distance", "min_serving_distance",
                     "cell_radius", "pathloss_exponent", "pathloss_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.shadowing_stddev < 0:
            raise ValueError("shadowing_stddev must be nonnegative")
        if not 0 <= self.cluster_offset_fraction < 1:
            raise ValueError("cluster_offset_fraction must lie in [0, 1)")
        if self.cell_radius <= self.min_serving_distance:
            raise ValueError("cell_radius must exceed min_serving_distance")
        if self.pool_size is None:
            self.pool_size = self.users_per_bs
        if self.pool_size < self.users_per_bs:
            raise ValueError("pool_size must be at least users_per_bs")

    @classmethod
    def from_mapping(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown topology keys: {sorted(unknown)}")
        return cls(**data)

    def positions(self):
        if self.bs_positions is not None:
            pos = np.asarray(self.bs_positions, dtype=float)
            if pos.shape != (self.n_bs, 2):
                raise ValueError("bs_positions must have shape (n_bs, 2)")
            return pos
        d = self.inter_bs_distance
        if self.n_bs == 1:
            return np.zeros((1, 2))
        if self.n_bs == 2:
            return np.array([[0.0, 0.0], [d, 0.0]])
        radius = d / (2 * np.sin(np.pi / self.n_bs))
        ang = 2 * np.pi * np.arange(self.n_bs) / self.n_bs
        return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass
class CsiErrorConfig:
    """Uniform-in-ball error of radius ``radius`` (scalar or per (user, BS) link)."""

    radius: object = 0.0

    def radii(self, K, B):
        r = np.broadcast_to(np.asarray(self.radius, dtype=float), (K, B))
        if np.any(r < 0):
            raise ValueError("CSI error radius must be nonnegative")
        return r


@dataclass
class DropScenario:
    bs_positions: np.ndarray
    user_positions: np.ndarray
    serving: np.ndarray
    clusters: list
    large_scale: np.ndarray
    small_scale: np.ndarray
    rng_seed: int
    config: TopologyConfig = field(default_factory=TopologyConfig)

    @property
    def K(self):
        return self.small_scale.shape[0]

    @property
    def B(self):
        return self.small_scale.shape[1]

    def channel_set(self, snr_db=None):
        """The problem instance for this drop.

        With ``snr_db`` every user's serving-link SNR P * gamma_kk / sigma^2 is
        set to snr_db and the other links keep their gain relative to the
        serving link (sigma^2 = 1, P = 10^(snr/10)). Without it the physical
        gains, noise power and power limit of the config are used.
        """
        if snr_db is None:
            h = np.sqrt(self.large_scale)[..., None] * self.small_scale
            return ChannelSet(h, self.config.noise_power, self.serving, self.config.power_limit)
        own = self.large_scale[np.arange(self.K), self.serving]
        rel = self.large_scale / own[:, None]
        h = np.sqrt(rel)[..., None] * self.small_scale
        return ChannelSet(h, 1.0, self.serving, 10 ** (snr_db / 10))

    def to_record(self):
        return {
            "bs_positions": self.bs_positions.tolist(),
            "user_positions": self.user_positions.tolist(),
            "serving": self.serving.tolist(),
            "clusters": [sorted(int(b) for b in c) for c in self.clusters],
            "large_scale": self.large_scale.tolist(),
            "small_scale": np.stack([self.small_scale.real, self.small_scale.imag], axis=-1).tolist(),
            "rng_seed": int(self.rng_seed),
            "config": asdict(self.config),
        }

    @classmethod
    def from_record(cls, rec):
        ss = np.asarray(rec["small_scale"], dtype=float)
        return cls(
            bs_positions=np.asarray(rec["bs_positions"], dtype=float),
            user_positions=np.asarray(rec["user_positions"], dtype=float),
            serving=np.asarray(rec["serving"], dtype=int),
            clusters=[set(c) for c in rec["clusters"]],
            large_scale=np.asarray(rec["large_scale"], dtype=float),
            small_scale=ss[..., 0] + 1j * ss[..., 1],
            rng_seed=int(rec["rng_seed"]),
            config=TopologyConfig.from_mapping(rec["config"]),
        )


def large_scale_gain(d, shadowing_db, cfg=None):
    """gamma = beta * 10^(mu/10) / d^l."""
    cfg = cfg or TopologyConfig()
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDistance("distance must be positive")
    out = cfg.pathloss_scale * 10 ** (np.asarray(shadowing_db, dtype=float) / 10) / d**cfg.pathloss_exponent
    return float(out) if out.ndim == 0 else out


def cluster_from_rsrp(rsrp, serving, fraction):
    """{serving} plus every BS whose RSRP is at least (1 - fraction) * RSRP_serving (linear scale)."""
    rsrp = np.asarray(rsrp, dtype=float)
    ref = rsrp[serving]
    members = {int(i) for i in np.flatnonzero(rsrp >= ref - fraction * ref)}
    members.add(int(serving))
    return members


def rsrp_cluster(user, drop, cfg=None):
    cfg = cfg or drop.config
    rsrp = cfg.power_limit * drop.large_scale[user]
    return cluster_from_rsrp(rsrp, drop.serving[user], cfg.cluster_offset_fraction)


def drop_seed(master_seed, drop_index):
    """64-bit seed of drop ``drop_index``, derived from the master seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(drop_index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _draw_user(rng, cfg, bs_pos, b):
    r2 = rng.uniform(cfg.min_serving_distance**2, cfg.cell_radius**2)
    ang = rng.uniform(0.0, 2 * np.pi)
    pos = bs_pos[b] + np.sqrt(r2) * np.array([np.cos(ang), np.sin(ang)])
    d = np.linalg.norm(bs_pos - pos, axis=1)
    mu = rng.normal(0.0, cfg.shadowing_stddev, size=len(bs_pos))
    return pos, large_scale_gain(d, mu, cfg)


def _accept(gains, b, cfg):
    if not cfg.require_full_cluster:
        return True
    rsrp = cfg.power_limit * gains
    if np.argmax(rsrp) != b:
        return False
    return len(cluster_from_rsrp(rsrp, b, cfg.cluster_offset_fraction)) == len(gains)


def generate_drop(cfg, seed):
    """One drop: ``users_per_bs`` round-robin scheduled users per BS from a per-BS pool."""
    seed = int(seed)
    rng = np.random.default_rng(seed)
    bs_pos = cfg.positions()
    B, M = cfg.n_bs, cfg.antennas
    positions, gains, serving = [], [], []
    for b in range(B):
        pool = []
        draws = 0
        while len(pool) < cfg.pool_size:
            draws += 1
            if draws > cfg.max_draws:
                raise RuntimeError(f"no admissible user position for BS {b} after {cfg.max_draws} draws")
            pos, g = _draw_user(rng, cfg, bs_pos, b)
            if _accept(g, b, cfg):
                pool.append((pos, g))
        start = cfg.slot * cfg.users_per_bs
        for j in range(cfg.users_per_bs):
            pos, g = pool[(start + j) % cfg.pool_size]
            positions.append(pos)
            gains.append(g)
            serving.append(b)
    K = len(serving)
    small = (rng.standard_normal((K, B, M)) + 1j * rng.standard_normal((K, B, M))) / np.sqrt(2)
    drop = DropScenario(
        bs_positions=bs_pos,
        user_positions=np.array(positions),
        serving=np.array(serving),
        clusters=[],
        large_scale=np.array(gains),
        small_scale=small,
        rng_seed=seed,
        config=cfg,
    )
    drop.clusters = [rsrp_cluster(k, drop, cfg) for k in range(K)]
    return drop


def ball_errors(shape, radii, rng):
    """Complex error vectors of length M, uniform in the ball of the given radii.

    The real dimension is 2M. Draws are produced as direction times
    radius * U^(1/2M), so the same generator state gives errors proportional
    to the radius across calls with different radii.
    """
    K, B, M = shape
    z = rng.standard_normal((K, B, 2 * M))
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    u = rng.random((K, B)) ** (1.0 / (2 * M))
    v = z * (radii * u)[..., None]
    return v[..., :M] + 1j * v[..., M:]


def perturb_csi(drop, err, seed):
    """Copy of ``drop`` whose small-scale channels carry a bounded estimation error."""
    radii = err.radii(drop.K, drop.B)
    if np.all(radii == 0):
        return replace(drop, small_scale=drop.small_scale.copy())
    e = ball_errors(drop.small_scale.shape, radii, np.random.default_rng(int(seed)))
    return replace(drop, small_scale=drop.small_scale + e)


def load_config(path):
    """Flat key/value config from a YAML or JSON file."""
    with open(path) as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        return json.loads(text)
    import yaml

    return yaml.safe_load(text) or {}


def load_topology(path):
    return TopologyConfig.from_mapping(load_config(path))
