"""Network realizations: hexagonal layout, user drops, path loss, DFT beams.

Conventions
-----------
* Cell ``k`` has BS ``k``; user ``u`` of cell ``k`` is node ``k * U + u``
  (0-based ``u``).
* ``path_loss_lin[j, k, u]`` is the linear channel gain (``10**(-PL/10)``) from
  BS ``j`` to user ``u`` of cell ``k``.
* ``gain_cache[k, u, j, v]`` is the Tx gain of the beam BS ``k`` uses for its
  user ``u``, seen by user ``v`` of cell ``j``.
* Azimuths are measured counter-clockwise from the +x axis; every BS array
  has the same orientation, broadside along +x.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .config import ConfigError, RadioConfig, dbm_to_w

SQRT3 = math.sqrt(3.0)
_SINGULAR_TOL = 1e-8


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

def build_hex_layout(K: int, radius_m: float, coords=None) -> np.ndarray:
    """BS positions for ``K`` hexagonal cells (one centre plus one ring).

    Other cell counts need explicit ``coords``.
    """
    if coords is not None:
        pos = np.asarray(coords, dtype=float).reshape(-1, 2)
        if len(pos) != K:
            raise ConfigError(f"got {len(pos)} coordinates for K={K}")
        return pos
    if K == 1:
        return np.zeros((1, 2))
    if K == 7:
        ang = np.deg2rad(np.arange(6) * 60.0)
        ring = SQRT3 * radius_m * np.column_stack([np.cos(ang), np.sin(ang)])
        return np.vstack([np.zeros((1, 2)), ring])
    raise ConfigError(f"K={K} needs explicit BS coordinates (only 1 or 7 built in)")


def in_hexagon(points, radius_m: float) -> np.ndarray:
    """Point-in-hexagon test for a hexagon centred at the origin.

    The hexagon has flat sides facing 0, 60 and 120 degrees, which is what
    the layout of :func:`build_hex_layout` tiles.
    """
    p = np.atleast_2d(points)
    apothem = SQRT3 / 2.0 * radius_m
    inside = np.ones(len(p), dtype=bool)
    for deg in (0.0, 60.0, 120.0):
        a = math.radians(deg)
        inside &= np.abs(p[:, 0] * math.cos(a) + p[:, 1] * math.sin(a)) <= apothem
    return inside


def drop_users(layout, U: int, radius_m: float, rng) -> np.ndarray:
    """Uniform user drops, ``U`` per hexagonal cell; returns ``(K, U, 2)``."""
    layout = np.asarray(layout, dtype=float)
    K = len(layout)
    out = np.empty((K, U, 2))
    half_w = SQRT3 / 2.0 * radius_m
    for k in range(K):
        got = 0
        while got < U:
            m = max(8, 2 * (U - got))
            cand = np.column_stack([rng.uniform(-half_w, half_w, m),
                                    rng.uniform(-radius_m, radius_m, m)])
            cand = cand[in_hexagon(cand, radius_m)]
            # coincident BS/user has no azimuth
            cand = cand[np.hypot(cand[:, 0], cand[:, 1]) > 0.0]
            take = cand[: U - got]
            out[k, got:got + len(take)] = take + layout[k]
            got += len(take)
    return out


# --------------------------------------------------------------------------
# propagation
# --------------------------------------------------------------------------

def path_loss_db(d_m, los, fc_GHz: float):
    """3GPP urban-macro path loss in dB (LoS or NLoS branch per element)."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    los_pl = 32.4 + 20.0 * np.log10(d) + 20.0 * math.log10(fc_GHz)
    nlos_pl = 13.54 + 39.08 * np.log10(d) + 20.0 * math.log10(fc_GHz)
    out = np.where(np.asarray(los, dtype=bool), los_pl, nlos_pl)
    return float(out) if out.ndim == 0 else out


def los_probability(d_m):
    """LoS probability ``18/d + exp(-(d/63)(1 - 18/d))`` clamped to [0, 1]."""
    d = np.asarray(d_m, dtype=float)
    raw = 18.0 / d + np.exp(-(d / 63.0) * (1.0 - 18.0 / d))
    out = np.clip(raw, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def noise_power_dbm(W_Hz: float, noise_figure_dB: float) -> float:
    if W_Hz <= 0:
        raise ValueError("bandwidth must be positive")
    return -174.0 + 10.0 * math.log10(W_Hz) + noise_figure_dB


# --------------------------------------------------------------------------
# DFT codebook beams
# --------------------------------------------------------------------------

def codebook_index_offset(b: int, N_t: int) -> int:
    """``f(b)``: codebook offset of beam ``b``."""
    if N_t // 2 <= b <= 3 * N_t // 2 - 1:
        return N_t - b
    return b


def beam_geometry(N_t: int):
    """Per-beam boresight sine, boresight azimuth and main-lobe extents.

    Returns arrays ``(s, theta_b, lo, hi)`` over the ``2 N_t`` beams.  A
    user at azimuth ``theta`` is inside the main lobe of beam ``b`` when the
    wrapped offset ``theta - theta_b`` lies in ``[-lo[b], hi[b]]``.  The
    lobe edges are the adjacent Dirichlet nulls ``s +- 2/N_t``; the two
    end-fire beams (``s = +-1``) have only one null in sine space, so their
    lobe is mirrored across the array axis.
    """
    nb = 2 * N_t
    s = np.empty(nb)
    theta_b = np.empty(nb)
    lo = np.empty(nb)
    hi = np.empty(nb)
    step = 2.0 / N_t
    for b in range(nb):
        sb = 2.0 * codebook_index_offset(b, N_t) / N_t
        back = N_t // 2 <= b <= 3 * N_t // 2 - 1
        # DFT phases are 2-periodic in sine space; front beams past 2f(b)/N_t >= 1
        # fold into [-1, 0)
        while not back and sb >= 1.0 - 1e-12:
            sb -= 2.0
        up = math.asin(sb + step) - math.asin(sb) if sb + step <= 1.0 + 1e-12 else None
        down = math.asin(sb) - math.asin(sb - step) if sb - step >= -1.0 - 1e-12 else None
        up = down if up is None else up
        down = up if down is None else down
        s[b] = sb
        if back:
            theta_b[b] = math.pi - math.asin(sb)
            lo[b], hi[b] = up, down
        else:
            theta_b[b] = math.asin(sb)
            lo[b], hi[b] = down, up
    return s, theta_b, lo, hi


def _wrap(a):
    return (np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi


def dirichlet_gain(x, N_t: int):
    """Normalised DFT array power gain ``|sin(N_t pi x/2)|^2 / (N_t |sin(pi x/2)|^2)``."""
    x = np.asarray(x, dtype=float)
    den = np.sin(0.5 * math.pi * x)
    num = np.sin(0.5 * N_t * math.pi * x)
    singular = np.abs(den) < _SINGULAR_TOL
    safe = np.where(singular, 1.0, den)
    return np.where(singular, float(N_t), num * num / (N_t * safe * safe))


def beam_gain_all(theta, N_t: int, g_min: float) -> np.ndarray:
    """Gains of all ``2 N_t`` beams; shape ``(2 N_t,) + theta.shape``."""
    theta = np.asarray(theta, dtype=float)
    s, theta_b, lo, hi = beam_geometry(N_t)
    shape = (-1,) + (1,) * theta.ndim
    off = _wrap(theta[None, ...] - theta_b.reshape(shape))
    inside = (off >= -lo.reshape(shape) - 1e-12) & (off <= hi.reshape(shape) + 1e-12)
    main = dirichlet_gain(np.sin(theta)[None, ...] - s.reshape(shape), N_t)
    return np.where(inside, main, g_min)


def beam_gain(b: int, theta, N_t: int, g_min: float):
    """Tx gain of beam ``b`` towards azimuth ``theta`` (radians)."""
    if not 0 <= b < 2 * N_t:
        raise ValueError(f"beam index {b} outside [0, {2 * N_t})")
    g = beam_gain_all(theta, N_t, g_min)[b]
    return float(g) if g.ndim == 0 else g


def best_beams(theta, N_t: int, g_min: float) -> np.ndarray:
    """Strongest beam per azimuth, ties (to 1e-12 relative) to the lowest index."""
    g = beam_gain_all(theta, N_t, g_min)
    top = g.max(axis=0)
    return np.argmax(g >= top * (1.0 - 1e-12), axis=0)


def select_serving_beam(bs_pos, user_pos, N_t: int, g_min: float) -> int:
    dx, dy = np.asarray(user_pos, dtype=float) - np.asarray(bs_pos, dtype=float)
    if dx == 0.0 and dy == 0.0:
        raise ValueError("user coincides with its BS; azimuth undefined")
    return int(best_beams(math.atan2(dy, dx), N_t, g_min))


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NetworkScenario:
    config: RadioConfig
    bs_pos: np.ndarray          # (K, 2)
    user_pos: np.ndarray        # (K, U, 2)
    los_flag: np.ndarray        # (K, K, U) bool
    path_loss_lin: np.ndarray   # (K, K, U)
    serving_beam: np.ndarray    # (K, U)
    gain_cache: np.ndarray      # (K, U, K, U)
    rng_seed: int | None = None

    @property
    def alpha(self) -> np.ndarray:
        """Local channel gain ``L G`` of every user's serving link, ``(K, U)``."""
        K, U = self.serving_beam.shape
        k = np.arange(K)[:, None]
        u = np.arange(U)[None, :]
        return self.path_loss_lin[k, k, u] * self.gain_cache[k, u, k, u]

    @property
    def noise_w(self) -> float:
        return dbm_to_w(noise_power_dbm(self.config.W_Hz, self.config.noise_figure_dB))

    def link_gain(self) -> np.ndarray:
        """``H[i, j]``: received power at node ``j`` per watt on node ``i``'s beam.

        Flattened over nodes (``i = k * U + u``); ``H[i, i]`` is node ``i``'s
        own desired-link gain.
        """
        K, U = self.serving_beam.shape
        # path_loss_lin[k, j, v] -> broadcast to (k, u, j, v)
        pl = self.path_loss_lin[:, None, :, :]
        return (pl * self.gain_cache).reshape(K * U, K * U)

    def to_dict(self) -> dict:
        with np.errstate(divide="ignore"):
            pl_db = -10.0 * np.log10(self.path_loss_lin)
        return {
            "rng_seed": self.rng_seed,
            "config": asdict(self.config),
            "bs_pos_m": self.bs_pos.tolist(),
            "user_pos_m": self.user_pos.tolist(),
            "los": self.los_flag.astype(int).tolist(),
            "path_loss_db": pl_db.tolist(),
            "serving_beam": self.serving_beam.tolist(),
            "gain_lin": self.gain_cache.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkScenario":
        return cls(
            config=RadioConfig(**doc["config"]),
            bs_pos=np.asarray(doc["bs_pos_m"], dtype=float),
            user_pos=np.asarray(doc["user_pos_m"], dtype=float),
            los_flag=np.asarray(doc["los"], dtype=bool),
            path_loss_lin=10.0 ** (-np.asarray(doc["path_loss_db"], dtype=float) / 10.0),
            serving_beam=np.asarray(doc["serving_beam"], dtype=int),
            gain_cache=np.asarray(doc["gain_lin"], dtype=float),
            rng_seed=doc.get("rng_seed"),
        )

    @classmethod
    def from_json(cls, text: str) -> "NetworkScenario":
        return cls.from_dict(json.loads(text))


def scenario_from_geometry(config: RadioConfig, bs_pos, user_pos, los_flag=None,
                           rng=None, rng_seed=None) -> NetworkScenario:
    """Assemble a scenario from given positions.

    Serving links are always LoS.  Remote links take ``los_flag`` when given,
    otherwise they are drawn from :func:`los_probability` with ``rng``.
    """
    bs_pos = np.asarray(bs_pos, dtype=float)
    user_pos = np.asarray(user_pos, dtype=float)
    K, U = user_pos.shape[:2]
    delta = user_pos[None, :, :, :] - bs_pos[:, None, None, :]      # (K_bs, K, U, 2)
    dist = np.hypot(delta[..., 0], delta[..., 1])
    if np.any(dist <= 0):
        raise ValueError("a user coincides with a BS")
    azimuth = np.arctan2(delta[..., 1], delta[..., 0])

    serving = np.eye(K, dtype=bool)[:, :, None].repeat(U, axis=2)
    if los_flag is None:
        if rng is None:
            raise ValueError("need rng or los_flag")
        los_flag = rng.random(dist.shape) < los_probability(dist)
    los_flag = np.asarray(los_flag, dtype=bool) | serving

    pl_db = path_loss_db(dist, los_flag, config.fc_GHz)
    path_loss_lin = 10.0 ** (-pl_db / 10.0)

    k_idx = np.arange(K)
    own_az = azimuth[k_idx, k_idx, :]                                # (K, U)
    beams = best_beams(own_az, config.N_t, config.g_min)             # (K, U)

    all_g = beam_gain_all(azimuth, config.N_t, config.g_min)         # (2N_t, K_bs, K, U)
    # gain_cache[k, u, j, v] = all_g[beams[k, u], k, j, v]
    gain_cache = all_g[beams, k_idx[:, None], :, :]
    return NetworkScenario(config, bs_pos, user_pos, los_flag, path_loss_lin,
                           beams.astype(int), gain_cache, rng_seed)


def _streams(seed):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def build_scenario(config: RadioConfig, seed: int, coords=None) -> NetworkScenario:
    geo_rng, _, _ = _streams(seed)
    layout = build_hex_layout(config.K, config.radius_m, coords)
    users = drop_users(layout, config.U, config.radius_m, geo_rng)
    return scenario_from_geometry(config, layout, users, rng=geo_rng, rng_seed=seed)


@dataclass(frozen=True)
class RateRequirements:
    gamma: np.ndarray   # (K, U) bits/s


def gen_rate_requirements(config: RadioConfig, rng, X=None) -> RateRequirements:
    """``gamma = W N_RF X / U`` with ``X ~ U(1, 4)`` i.i.d. per user."""
    if X is None:
        X = rng.uniform(1.0, 4.0, size=(config.K, config.U))
    gamma = config.W_Hz * config.N_RF * np.asarray(X, dtype=float) / config.U
    return RateRequirements(np.broadcast_to(gamma, (config.K, config.U)).copy())


def rate_requirements_for_seed(config: RadioConfig, seed: int) -> RateRequirements:
    _, rate_rng, _ = _streams(seed)
    return gen_rate_requirements(config, rate_rng)


def demand_rng(seed: int):
    """Independent stream for resource-element demand sampling."""
    return _streams(seed)[2]
