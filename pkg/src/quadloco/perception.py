"""Height-sample perception, the exteroceptive noise model, and observation assembly.

Height samples are taken on concentric rings around each foot and
expressed relative to the foot height (a value of -0.2 means the terrain
is 0.2 m below the foot). The noise model perturbs both the sample
positions and the measured values with per-point, per-foot and
per-episode components, adds intermittent outliers, and applies
perception-cell offsets; its parameters come from one of three mapping
regimes redrawn at episode start and at mid-episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import terrain as terrain_mod
from .kinematics import NUM_JOINTS, NUM_LEGS
from .rotations import gravity_in_body, quat_rotate_inverse
from .simulation import PRIVILEGED_DIM, SimParams, SimState, privileged_state

RING_COUNTS = (6, 8, 10, 12, 16)
RING_RADII = (0.08, 0.16, 0.26, 0.36, 0.48)
SAMPLES_PER_FOOT = sum(RING_COUNTS)  # 52
EXTERO_DIM = NUM_LEGS * SAMPLES_PER_FOOT  # 208
PROPRIO_DIM = 133

REGIMES = ("nominal", "offset", "noisy")
REGIME_PROBS = (0.60, 0.30, 0.10)

# z layout: z0 point-xy std, z1 point-z std, z2 foot-xy std, z3 foot-z std,
# z4 outlier std, z5 outlier probability, z6 episodic-xy std, z7 episodic-z std.
Z_DIM = 8
Z7_DEFAULT = 0.1

PROPRIO_LAYOUT = {
    "command": slice(0, 3),
    "gravity_axis": slice(3, 6),
    "lin_vel": slice(6, 9),
    "ang_vel": slice(9, 12),
    "joint_pos": slice(12, 24),
    "joint_vel": slice(24, 36),
    "joint_pos_hist": slice(36, 72),
    "joint_vel_hist": slice(72, 96),
    "joint_target_hist": slice(96, 120),
    "cpg": slice(120, 133),
}


def _ring_offsets() -> np.ndarray:
    """(52, 2) sample offsets: per ring, counter-clockwise starting at +x."""
    pts = []
    for count, radius in zip(RING_COUNTS, RING_RADII):
        theta = 2.0 * np.pi * np.arange(count) / count
        pts.append(np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=-1))
    return np.concatenate(pts, axis=0)


RING_OFFSETS = _ring_offsets()


def regime_vector(regime: str, c_sk: float, z7: float = Z7_DEFAULT) -> np.ndarray:
    """Eight noise parameters for a mapping regime at student-curriculum level c_sk."""
    c = float(c_sk)
    if regime == "nominal":
        seven = [0.004, 0.005, 0.01, 0.04, 0.03, 0.05, 0.1]
    elif regime == "offset":
        seven = [0.004, 0.005, 0.01, 0.1 * c, 0.1 * c, 0.02, 0.1]
    elif regime == "noisy":
        seven = [0.004, 0.1 * c, 0.1 * c, 0.3 * c, 0.3 * c, 0.3 * c, 0.1]
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return np.array(seven + [z7])


# evaluation presets
Z_SMALL = np.array([0.004, 0.005, 0.04, 0.04, 0.04, 0.01, 0.1, Z7_DEFAULT])
Z_LARGE = np.array([0.004, 0.3, 0.2, 0.1, 0.1, 0.03, 0.1, Z7_DEFAULT])


@dataclass
class NoiseParams:
    """Per-leg noise parameters plus the regime that produced them."""

    z: np.ndarray = field(default_factory=lambda: np.zeros((Z_DIM, NUM_LEGS)))
    regime: str = "nominal"
    c_sk: float = 0.0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.shape == (Z_DIM,):
            self.z = np.tile(self.z[:, None], (1, NUM_LEGS))
        if self.z.shape != (Z_DIM, NUM_LEGS):
            raise ValueError(f"z must be ({Z_DIM},) or ({Z_DIM}, {NUM_LEGS}), got {self.z.shape}")
        if (self.z[:5] < 0).any() or (self.z[6:] < 0).any():
            raise ValueError("noise stds must be non-negative")
        if ((self.z[5] < 0) | (self.z[5] > 1)).any():
            raise ValueError("outlier probability must lie in [0, 1]")

    @staticmethod
    def zero() -> "NoiseParams":
        return NoiseParams()

    @staticmethod
    def preset(name: str, c_sk: float = 1.0) -> "NoiseParams":
        if name == "z_small":
            return NoiseParams(z=Z_SMALL, regime="nominal", c_sk=c_sk)
        if name == "z_large":
            return NoiseParams(z=Z_LARGE, regime="noisy", c_sk=c_sk)
        return NoiseParams(z=regime_vector(name, c_sk), regime=name, c_sk=c_sk)


def select_regime(rng: np.random.Generator, c_sk: float, z7: float = Z7_DEFAULT,
                  leg_scale: np.ndarray | None = None) -> NoiseParams:
    """Draw a mapping regime (60/30/10) and its parameter matrix.

    ``leg_scale`` optionally scales each leg's column, the hook for
    per-leg parameterization; by default all legs share one vector.
    """
    u = rng.uniform()
    if u < REGIME_PROBS[0]:
        regime = "nominal"
    elif u < REGIME_PROBS[0] + REGIME_PROBS[1]:
        regime = "offset"
    else:
        regime = "noisy"
    z = np.tile(regime_vector(regime, c_sk, z7)[:, None], (1, NUM_LEGS))
    if leg_scale is not None:
        z = z * np.asarray(leg_scale)[None, :]
    return NoiseParams(z=z, regime=regime, c_sk=c_sk)


def draw_episode_noise(rng: np.random.Generator, params: NoiseParams) -> np.ndarray:
    """Episodic offsets w (4, 3): columns are (w_x, w_y, w_z), constant per segment."""
    w = np.zeros((NUM_LEGS, 3))
    w[:, 0] = rng.normal(0.0, 1.0, NUM_LEGS) * params.z[6]
    w[:, 1] = rng.normal(0.0, 1.0, NUM_LEGS) * params.z[6]
    w[:, 2] = rng.normal(0.0, 1.0, NUM_LEGS) * params.z[7]
    return w


def draw_cell_offsets(rng: np.random.Generator, patch: terrain_mod.TerrainPatch,
                      c_sk: float, scale: float = 0.1) -> np.ndarray:
    """Per-episode perception-cell height offsets, std scale * c_sk."""
    nx, ny = patch.num_cells
    return rng.normal(0.0, 1.0, (nx, ny)) * (scale * float(c_sk))


def foot_sample_points(feet: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unperturbed sample xy positions (n, 4, 52) for world foot positions (n, 4, 3)."""
    x = feet[..., 0:1] + RING_OFFSETS[:, 0]
    y = feet[..., 1:2] + RING_OFFSETS[:, 1]
    return x, y


def sample_heights(patch: terrain_mod.TerrainPatch, feet: np.ndarray) -> np.ndarray:
    """Clean height samples (n, 208), relative to each foot's height."""
    feet = np.asarray(feet, dtype=np.float64)
    n = feet.shape[0]
    x, y = foot_sample_points(feet)
    h = terrain_mod.height_at(patch, x.ravel(), y.ravel()).reshape(n, NUM_LEGS, SAMPLES_PER_FOOT)
    rel = h - feet[..., 2:3]
    return rel.reshape(n, EXTERO_DIM)


def apply_noise_batch(
    patch: terrain_mod.TerrainPatch,
    feet: np.ndarray,
    z: np.ndarray,
    rng: np.random.Generator,
    w: np.ndarray | None = None,
    cell_offsets: np.ndarray | None = None,
) -> np.ndarray:
    """Noisy height samples (n, 208) with per-environment parameters.

    ``z`` is (8, 4) shared or (n, 8, 4) per environment; ``w`` is the
    per-segment episodic offset (4, 3) or (n, 4, 3); ``cell_offsets`` is
    a per-episode cell-offset grid (nx, ny) or (n, nx, ny).

    Sample positions are shifted by per-point, per-foot and episodic xy
    noise before the terrain is re-queried; the measured value then picks
    up per-point, per-foot and episodic z noise, intermittent outliers,
    and the offset of the perception cell the perturbed point falls in.
    With all-zero parameters and no offsets this reproduces
    :func:`sample_heights` exactly.
    """
    feet = np.asarray(feet, dtype=np.float64)
    n = feet.shape[0]
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = np.tile(z[:, None], (1, NUM_LEGS))
    if z.ndim == 2:
        z = np.broadcast_to(z, (n, Z_DIM, NUM_LEGS))
    x, y = foot_sample_points(feet)

    def zcol(k):
        return z[:, k, :, None]

    eps_px = rng.normal(0.0, 1.0, (n, NUM_LEGS, SAMPLES_PER_FOOT)) * zcol(0)
    eps_py = rng.normal(0.0, 1.0, (n, NUM_LEGS, SAMPLES_PER_FOOT)) * zcol(0)
    eps_fx = rng.normal(0.0, 1.0, (n, NUM_LEGS, 1)) * zcol(2)
    eps_fy = rng.normal(0.0, 1.0, (n, NUM_LEGS, 1)) * zcol(2)
    if w is None:
        w = np.zeros((n, NUM_LEGS, 3))
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 2:
        w = np.broadcast_to(w, (n, NUM_LEGS, 3))

    xp = x + eps_px + eps_fx + w[..., 0:1]
    yp = y + eps_py + eps_fy + w[..., 1:2]

    h = terrain_mod.height_at(patch, xp.ravel(), yp.ravel()).reshape(n, NUM_LEGS, SAMPLES_PER_FOOT)
    h = h + rng.normal(0.0, 1.0, h.shape) * zcol(1)
    h = h + rng.normal(0.0, 1.0, (n, NUM_LEGS, 1)) * zcol(3)
    h = h + w[..., 2:3]

    outlier_mask = rng.uniform(size=h.shape) < zcol(5)
    outliers = rng.normal(0.0, 1.0, h.shape) * zcol(4)
    h = h + np.where(outlier_mask, outliers, 0.0)

    if cell_offsets is not None:
        cell_offsets = np.asarray(cell_offsets, dtype=np.float64)
        ix, iy = patch.cell_index(xp.ravel(), yp.ravel())
        if cell_offsets.ndim == 2:
            h = h + cell_offsets[ix, iy].reshape(h.shape)
        else:
            env = np.repeat(np.arange(n), NUM_LEGS * SAMPLES_PER_FOOT)
            h = h + cell_offsets[env, ix, iy].reshape(h.shape)

    rel = h - feet[..., 2:3]
    return rel.reshape(n, EXTERO_DIM)


def apply_noise(
    patch: terrain_mod.TerrainPatch,
    feet: np.ndarray,
    params: NoiseParams,
    rng: np.random.Generator,
    w: np.ndarray | None = None,
    cell_offsets: np.ndarray | None = None,
) -> np.ndarray:
    """Noisy height samples (n, 208) with one parameter set for all environments."""
    return apply_noise_batch(patch, feet, params.z, rng, w=w, cell_offsets=cell_offsets)


class RunningNorm:
    """Streaming mean/std normalizer (Welford); updates only while unfrozen."""

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.dim = dim
        self.clip = clip
        self.eps = eps
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.frozen = False

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return np.sqrt(np.maximum(self.m2 / self.count, self.eps))

    def update(self, batch: np.ndarray) -> None:
        if self.frozen:
            return
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.dim)
        k = batch.shape[0]
        if k == 0:
            return
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        delta = b_mean - self.mean
        total = self.count + k
        self.mean = self.mean + delta * (k / total)
        self.m2 = self.m2 + b_m2 + delta**2 * (self.count * k / total)
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        out = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        return np.clip(out, -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean.copy(), "m2": self.m2.copy(),
                "clip": self.clip, "frozen": self.frozen}

    def load_state_dict(self, d: dict) -> None:
        self.count = float(d["count"])
        self.mean = np.asarray(d["mean"], dtype=np.float64).copy()
        self.m2 = np.asarray(d["m2"], dtype=np.float64).copy()
        self.clip = float(d.get("clip", self.clip))
        self.frozen = bool(d.get("frozen", False))


class ObservationNormalizer:
    """One running normalizer per observation block."""

    def __init__(self):
        self.proprio = RunningNorm(PROPRIO_DIM)
        self.extero = RunningNorm(EXTERO_DIM)
        self.privileged = RunningNorm(PRIVILEGED_DIM)

    def freeze(self, frozen: bool = True) -> None:
        for norm in (self.proprio, self.extero, self.privileged):
            norm.frozen = frozen

    def state_dict(self) -> dict:
        return {
            "proprio": self.proprio.state_dict(),
            "extero": self.extero.state_dict(),
            "privileged": self.privileged.state_dict(),
        }

    def load_state_dict(self, d: dict) -> None:
        self.proprio.load_state_dict(d["proprio"])
        self.extero.load_state_dict(d["extero"])
        self.privileged.load_state_dict(d["privileged"])


@dataclass
class ObservationBundle:
    proprio: np.ndarray
    extero_clean: np.ndarray
    extero_noisy: np.ndarray
    privileged: np.ndarray

    def __post_init__(self):
        for name, arr, dim in (
            ("proprio", self.proprio, PROPRIO_DIM),
            ("extero_clean", self.extero_clean, EXTERO_DIM),
            ("extero_noisy", self.extero_noisy, EXTERO_DIM),
            ("privileged", self.privileged, PRIVILEGED_DIM),
        ):
            if arr.shape[-1] != dim:
                raise ValueError(f"{name} has dimension {arr.shape[-1]}, expected {dim}")


def proprio_vector(state: SimState, command: np.ndarray, params: SimParams) -> np.ndarray:
    """Proprioceptive observation (n, 133) in the PROPRIO_LAYOUT ordering."""
    n = state.num_envs
    command = np.asarray(command, dtype=np.float64).reshape(n, 3)
    grav = gravity_in_body(state.base_quat)
    lin_b = quat_rotate_inverse(state.base_quat, state.lin_vel)
    ang_b = state.ang_vel
    cpg = np.zeros((n, 13))
    cpg[:, 0:12:3] = state.last_phase_offsets
    cpg[:, 1:12:3] = np.cos(state.phases)
    cpg[:, 2:12:3] = np.sin(state.phases)
    cpg[:, 12] = params.base_phase_rate
    out = np.concatenate(
        [
            command,
            grav,
            lin_b,
            ang_b,
            state.q,
            state.dq,
            state.q_hist.reshape(n, -1),
            state.dq_hist.reshape(n, -1),
            state.target_hist[:, :2, :].reshape(n, -1),
            cpg,
        ],
        axis=1,
    )
    if out.shape[1] != PROPRIO_DIM:
        raise AssertionError(f"proprio assembled to {out.shape[1]} dims, expected {PROPRIO_DIM}")
    return out


def assemble(
    state: SimState,
    command: np.ndarray,
    extero_clean: np.ndarray,
    extero_noisy: np.ndarray,
    privileged: np.ndarray | None = None,
    sim_params: SimParams | None = None,
) -> ObservationBundle:
    """Bundle raw (unnormalized) observations for one control step."""
    sim_params = sim_params or SimParams()
    if privileged is None:
        privileged = privileged_state(state)
    return ObservationBundle(
        proprio=proprio_vector(state, command, sim_params),
        extero_clean=np.asarray(extero_clean, dtype=np.float64),
        extero_noisy=np.asarray(extero_noisy, dtype=np.float64),
        privileged=np.asarray(privileged, dtype=np.float64),
    )
