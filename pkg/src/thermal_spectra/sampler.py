"""Discretised Euclidean action and affine-invariant ensemble MCMC over paths.

Paths are stored as rows of a ``(n_walkers, dim)`` array. Open paths have
``n_slices + 1`` free coordinates (the first and last are the endpoints ``x`` and
``y``); periodic paths have ``n_slices`` coordinates with an extra link closing the
loop.

Two update schedules are available:

* the plain stretch move, where each walker proposes a move of its whole path
  along the line through a randomly chosen walker of the complementary half;
* a blocked stretch move, where the same proposal is applied independently to
  contiguous blocks of time slices, alternating even and odd blocks. Blocks of
  one parity are conditionally independent given the others (the action only
  couples neighbouring slices), so the combined update leaves the target
  invariant. The acceptance factor uses the block dimension. This mixes far
  better than whole-path moves once the path has more than a few dozen slices.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .hamiltonian import Potential

Boundary = Literal["open", "periodic"]

BANK_MAGIC = b"TSBANK1\n"


@dataclass(frozen=True)
class ActionConfig:
    beta: float
    n_slices: int
    potential: Potential = field(default_factory=Potential)
    boundary: Boundary = "open"

    def __post_init__(self):
        if self.beta <= 0 or self.n_slices < 1:
            raise ValueError("beta and n_slices must be positive")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def spacing(self) -> float:
        return self.beta / self.n_slices

    @property
    def dim(self) -> int:
        return self.n_slices + 1 if self.boundary == "open" else self.n_slices

    @property
    def times(self) -> np.ndarray:
        return self.spacing * np.arange(self.dim)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "n_slices": self.n_slices,
            "potential": self.potential.to_dict(),
            "boundary": self.boundary,
        }


def _link_action(cfg: ActionConfig, left, right):
    a = cfg.spacing
    d = right - left
    return d * d / (2 * a) + a * cfg.potential(0.5 * (left + right))


def discrete_action(cfg: ActionConfig, path) -> np.ndarray | float:
    """Sum over links of ``(q_z - q_{z-1})^2 / 2a + a V((q_z + q_{z-1}) / 2)``."""
    q = np.asarray(path, dtype=float)
    if q.shape[-1] != cfg.dim:
        raise ValueError(f"path length {q.shape[-1]} does not match config dim {cfg.dim}")
    if cfg.boundary == "periodic":
        right = np.roll(q, -1, axis=-1)
        s = np.sum(_link_action(cfg, q, right), axis=-1)
    else:
        s = np.sum(_link_action(cfg, q[..., :-1], q[..., 1:]), axis=-1)
    return float(s) if np.ndim(s) == 0 else s


def block_action_delta(cfg: ActionConfig, paths, start: int, new_block) -> np.ndarray:
    """Change in action when slices ``start .. start+len-1`` are replaced.

    Only the links touching the block are evaluated.
    """
    q = np.atleast_2d(np.asarray(paths, dtype=float))
    new_block = np.atleast_2d(np.asarray(new_block, dtype=float))
    b = new_block.shape[-1]
    d = cfg.dim
    idx = np.arange(start - 1, start + b + 1)
    valid = np.ones(b + 1, dtype=bool)
    if cfg.boundary == "periodic":
        idx = idx % d
    else:
        if start == 0:
            valid[0] = False
        if start + b == d:
            valid[-1] = False
        idx = np.clip(idx, 0, d - 1)
    old = q[:, idx]
    new = old.copy()
    new[:, 1:-1] = new_block
    s_old = _link_action(cfg, old[:, :-1], old[:, 1:])
    s_new = _link_action(cfg, new[:, :-1], new[:, 1:])
    return np.sum((s_new - s_old)[:, valid], axis=1)


def _block_layout(cfg: ActionConfig, block_size: int):
    """Partition slice indices into contiguous blocks; group by (parity, size)."""
    d = cfg.dim
    nblk = max(1, int(np.ceil(d / block_size)))
    if cfg.boundary == "periodic" and nblk % 2 and nblk > 1:
        nblk += 1
    blocks = np.array_split(np.arange(d), nblk)
    groups = []
    for parity in (0, 1):
        sel = blocks[parity::2]
        for size in sorted({len(b) for b in sel}):
            cols = np.array([b for b in sel if len(b) == size])
            if len(cols) == 0:
                continue
            left = cols[:, 0] - 1
            right = cols[:, -1] + 1
            if cfg.boundary == "periodic":
                has_left = np.ones(len(cols), bool)
                has_right = np.ones(len(cols), bool)
                left %= d
                right %= d
            else:
                has_left = left >= 0
                has_right = right < d
                left = np.where(has_left, left, cols[:, 0])
                right = np.where(has_right, right, cols[:, -1])
            ext = np.concatenate([left[:, None], cols, right[:, None]], axis=1)
            mask = np.ones((len(cols), size + 1), bool)
            mask[:, 0] = has_left
            mask[:, -1] = has_right
            groups.append((parity, cols, ext, mask))
    return groups


def _draw_z(rng: np.random.Generator, a_stretch: float, size):
    """Draw from g(z) ~ 1/sqrt(z) on [1/a, a] by inverting its CDF."""
    return ((a_stretch - 1.0) * rng.random(size) + 1.0) ** 2 / a_stretch


@dataclass
class PathEnsemble:
    walkers: np.ndarray
    rng_seed: int
    rng: np.random.Generator
    log_prob: np.ndarray
    n_accepted: int = 0
    n_proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else float("nan")

    @classmethod
    def initialize(
        cls,
        cfg: ActionConfig,
        n_walkers: int | None = None,
        seed: int = 0,
        center: float | None = None,
        scale: float = 1.0,
    ) -> "PathEnsemble":
        """I.i.d. Gaussian paths around the potential's global minimum."""
        n_walkers = 4 * cfg.dim if n_walkers is None else n_walkers
        if n_walkers % 2:
            raise ValueError("walker count must be even")
        rng = np.random.default_rng(seed)
        if center is None:
            center = cfg.potential.global_minimum()
        walkers = center + scale * rng.standard_normal((n_walkers, cfg.dim))
        return cls(walkers, seed, rng, -discrete_action(cfg, walkers))


def stretch_move(
    ensemble: PathEnsemble,
    cfg: ActionConfig,
    a_stretch: float = 2.0,
    block_size: int | None = None,
    z_override: float | None = None,
) -> PathEnsemble:
    """One sweep: update the first half of the walkers against the second, then
    the reverse. ``block_size=None`` moves whole paths."""
    if a_stretch <= 1:
        raise ValueError("a_stretch must exceed 1")
    n = len(ensemble.walkers)
    if n % 2:
        raise ValueError("walker count must be even")
    half = n // 2
    halves = (np.arange(half), np.arange(half, n))
    for active, other in (halves, halves[::-1]):
        if block_size is None or block_size >= cfg.dim:
            _full_update(ensemble, cfg, active, other, a_stretch, z_override)
        else:
            _blocked_update(ensemble, cfg, active, other, a_stretch, block_size, z_override)
    return ensemble


def _full_update(ens, cfg, active, other, a_stretch, z_override):
    rng = ens.rng
    h = len(active)
    cur = ens.walkers[active]
    comp = ens.walkers[other][rng.integers(0, len(other), h)]
    z = _draw_z(rng, a_stretch, h) if z_override is None else np.full(h, float(z_override))
    # written so that z = 1 reproduces the current state exactly
    prop = cur + (z[:, None] - 1.0) * (cur - comp)
    lp_new = -discrete_action(cfg, prop)
    log_ratio = (cfg.dim - 1) * np.log(z) + lp_new - ens.log_prob[active]
    accept = np.log(rng.random(h)) < log_ratio
    ens.walkers[active[accept]] = prop[accept]
    ens.log_prob[active[accept]] = lp_new[accept]
    ens.n_accepted += int(accept.sum())
    ens.n_proposed += h


def _blocked_update(ens, cfg, active, other, a_stretch, block_size, z_override):
    rng = ens.rng
    h = len(active)
    q_other = ens.walkers[other]
    for _, cols, ext, mask in _block_layout(cfg, block_size):
        nb, b = cols.shape
        q_act = ens.walkers[active]
        cur = q_act[:, cols]
        j = rng.integers(0, len(other), (h, nb))
        comp = q_other[j[:, :, None], cols[None, :, :]]
        if z_override is None:
            z = _draw_z(rng, a_stretch, (h, nb))
        else:
            z = np.full((h, nb), float(z_override))
        prop = cur + (z[..., None] - 1.0) * (cur - comp)
        seg_old = q_act[:, ext]
        seg_new = seg_old.copy()
        seg_new[..., 1:-1] = prop
        s_old = _link_action(cfg, seg_old[..., :-1], seg_old[..., 1:])
        s_new = _link_action(cfg, seg_new[..., :-1], seg_new[..., 1:])
        d_s = np.sum((s_new - s_old) * mask, axis=-1)
        accept = np.log(rng.random((h, nb))) < (b - 1) * np.log(z) - d_s
        q_act[:, cols] = np.where(accept[..., None], prop, cur)
        ens.walkers[active] = q_act
        ens.n_accepted += int(accept.sum())
        ens.n_proposed += accept.size
    ens.log_prob[active] = -discrete_action(cfg, ens.walkers[active])


def action_hessian(cfg: ActionConfig, center: float) -> np.ndarray:
    """Hessian of the discrete action at the constant path ``q = center``."""
    d = cfg.dim
    a = cfg.spacing
    curv = float(np.polynomial.polynomial.polyval(
        center, np.polynomial.polynomial.polyder(cfg.potential.coeffs, 2)))
    links = [(z - 1, z) for z in range(1, d)]
    if cfg.boundary == "periodic":
        links.append((d - 1, 0))
    h = np.zeros((d, d))
    for i, j in links:
        h[i, i] += 1 / a + a * curv / 4
        h[j, j] += 1 / a + a * curv / 4
        h[i, j] += -1 / a + a * curv / 4
        h[j, i] += -1 / a + a * curv / 4
    return h


def mode_blocks(cfg: ActionConfig, block_size: int, center: float | None = None) -> list[np.ndarray]:
    """Orthonormal ``(dim, b)`` column blocks of the action's normal modes.

    Modes come from the Hessian at the potential minimum, ordered by stiffness
    and grouped in consecutive runs of ``block_size``. For a quadratic action the
    blocks are exactly independent under the target.
    """
    if center is None:
        center = cfg.potential.global_minimum()
    h = action_hessian(cfg, center)
    _, vecs = np.linalg.eigh(h)
    return [vecs[:, i : i + block_size] for i in range(0, cfg.dim, block_size)]


class _ActionWorkspace:
    """Reusable buffers for evaluating the action of many paths at once.

    Avoids allocating large temporaries on every block update, which dominates
    the run time of mode moves on long periodic paths.
    """

    def __init__(self, cfg: ActionConfig, n_rows: int):
        self.cfg = cfg
        n_links = cfg.dim if cfg.boundary == "periodic" else cfg.dim - 1
        self.diff = np.empty((n_rows, n_links))
        self.mid = np.empty((n_rows, n_links))
        self.coeffs = tuple(reversed(cfg.potential.coeffs))

    def action(self, q: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        diff, mid = self.diff, self.mid
        np.subtract(q[:, 1:], q[:, :-1], out=diff[:, : cfg.dim - 1])
        np.add(q[:, 1:], q[:, :-1], out=mid[:, : cfg.dim - 1])
        if cfg.boundary == "periodic":
            np.subtract(q[:, 0], q[:, -1], out=diff[:, -1])
            np.add(q[:, 0], q[:, -1], out=mid[:, -1])
        mid *= 0.5
        np.multiply(diff, diff, out=diff)
        kinetic = diff.sum(axis=1)
        # Horner in place, reusing ``diff``
        diff.fill(self.coeffs[0])
        for c in self.coeffs[1:]:
            diff *= mid
            diff += c
        return kinetic / (2 * cfg.spacing) + cfg.spacing * diff.sum(axis=1)


def mode_stretch_move(
    ensemble: PathEnsemble,
    cfg: ActionConfig,
    blocks: list[np.ndarray],
    a_stretch: float = 2.0,
    workspace: _ActionWorkspace | None = None,
) -> PathEnsemble:
    """One sweep of stretch moves restricted to normal-mode subspaces.

    For each block ``U`` (orthonormal columns) the walker moves along
    ``q + (z - 1)(q - q_c) U U^T``: a stretch move in the block coordinates
    ``u = q U`` with the other coordinates held fixed. Acceptance uses the
    block dimension. Each block update is a valid Metropolis kernel for the
    conditional target, so the sweep preserves ``exp(-S_E)``.
    """
    n = len(ensemble.walkers)
    if n % 2:
        raise ValueError("walker count must be even")
    rng = ensemble.rng
    half = n // 2
    if workspace is None:
        workspace = _ActionWorkspace(cfg, half)
    prop = np.empty((half, cfg.dim))
    for lo, hi in ((0, half), (half, n)):
        q = ensemble.walkers[lo:hi]          # view: updated in place
        lp = ensemble.log_prob[lo:hi]
        q_other = ensemble.walkers[half:] if lo == 0 else ensemble.walkers[:half]
        for u in blocks:
            b = u.shape[1]
            comp = q_other[rng.integers(0, half, half)]
            z = _draw_z(rng, a_stretch, half)
            np.subtract(q, comp, out=prop)
            step = (prop @ u) * (z - 1.0)[:, None]
            np.matmul(step, u.T, out=prop)
            prop += q
            lp_new = -workspace.action(prop)
            log_ratio = (b - 1) * np.log(z) + lp_new - lp
            accept = np.log(rng.random(half)) < log_ratio
            q[accept] = prop[accept]
            lp[accept] = lp_new[accept]
            ensemble.n_accepted += int(accept.sum())
            ensemble.n_proposed += half
    return ensemble


MoveKind = Literal["full", "local", "modes"]


@dataclass
class SamplerSettings:
    """``moves``: ``full`` whole-path stretch, ``local`` checkerboard slice
    blocks, ``modes`` normal-mode blocks (default)."""

    n_walkers: int | None = None
    burn_in: int = 2000
    thin: int = 1
    a_stretch: float = 2.0
    moves: MoveKind = "modes"
    block_size: int = 4

    def __post_init__(self):
        if self.moves not in ("full", "local", "modes"):
            raise ValueError(f"unknown move kind {self.moves!r}")
        if self.block_size < 1 or self.burn_in < 0:
            raise ValueError("block_size must be >= 1 and burn_in >= 0")

    def to_dict(self) -> dict:
        return {
            "n_walkers": self.n_walkers,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "a_stretch": self.a_stretch,
            "moves": self.moves,
            "block_size": self.block_size,
        }


def make_sweep(cfg: ActionConfig, settings: SamplerSettings):
    """Return ``sweep(ensemble)`` performing one update of the chosen kind."""
    if settings.moves == "full":
        return lambda ens: stretch_move(ens, cfg, settings.a_stretch)
    if settings.moves == "local":
        return lambda ens: stretch_move(ens, cfg, settings.a_stretch, settings.block_size)
    blocks = mode_blocks(cfg, settings.block_size)
    work = {}

    def sweep(ens):
        half = len(ens.walkers) // 2
        if half not in work:
            work[half] = _ActionWorkspace(cfg, half)
        return mode_stretch_move(ens, cfg, blocks, settings.a_stretch, work[half])

    return sweep


def iter_sweeps(
    cfg: ActionConfig,
    n_retained: int,
    seed: int = 0,
    settings: SamplerSettings | None = None,
) -> Iterator[tuple[np.ndarray, PathEnsemble]]:
    """Burn in, then yield a copy of the walker array every ``thin`` sweeps."""
    settings = settings or SamplerSettings()
    if settings.thin < 1:
        raise ValueError("thin must be >= 1")
    sweep = make_sweep(cfg, settings)
    ens = PathEnsemble.initialize(cfg, settings.n_walkers, seed)
    for _ in range(settings.burn_in):
        sweep(ens)
    for _ in range(n_retained):
        for _ in range(settings.thin):
            sweep(ens)
        yield ens.walkers.copy(), ens


@dataclass
class OpenPathSamples:
    endpoints: np.ndarray          # (n, 2) columns x = q(0), y = q(beta)
    acceptance_rate: float
    config: ActionConfig
    paths: np.ndarray | None = None


def _n_sweeps(n_paths: int, n_walkers: int) -> int:
    # rounded up to whole sweeps: every retained sweep yields n_walkers paths
    return int(np.ceil(n_paths / n_walkers))


def sample_open_paths(
    cfg: ActionConfig,
    n_paths: int,
    burn_in: int = 2000,
    thin: int = 1,
    seed: int = 0,
    settings: SamplerSettings | None = None,
    keep_paths: bool = False,
) -> OpenPathSamples:
    """Draw open paths with density ``exp(-S_E)`` over all ``n_slices + 1`` coordinates.

    The endpoint pairs are distributed as ``rho_T(y, x)`` (normalised over the
    plane). The returned count is ``n_paths`` rounded up to a whole number of sweeps.
    """
    if cfg.boundary != "open":
        raise ValueError("sample_open_paths needs an open-boundary config")
    settings = settings or SamplerSettings(burn_in=burn_in, thin=thin)
    n_walkers = settings.n_walkers or 4 * cfg.dim
    settings = replace(settings, n_walkers=n_walkers)
    ends, paths = [], []
    ens = None
    for walkers, ens in iter_sweeps(cfg, _n_sweeps(n_paths, n_walkers), seed, settings):
        ends.append(walkers[:, [0, -1]])
        if keep_paths:
            paths.append(walkers)
    return OpenPathSamples(
        np.concatenate(ends),
        ens.acceptance_rate,
        cfg,
        np.concatenate(paths) if keep_paths else None,
    )


def sample_periodic_paths(
    cfg: ActionConfig,
    n_paths: int,
    burn_in: int = 2000,
    thin: int = 1,
    seed: int = 0,
    settings: SamplerSettings | None = None,
) -> np.ndarray:
    """Periodic paths with density ``exp(-S_E)``, in MCMC order (sweep-major)."""
    if cfg.boundary != "periodic":
        raise ValueError("sample_periodic_paths needs a periodic-boundary config")
    settings = settings or SamplerSettings(burn_in=burn_in, thin=thin)
    n_walkers = settings.n_walkers or 4 * cfg.dim
    settings = replace(settings, n_walkers=n_walkers)
    out = [w for w, _ in iter_sweeps(cfg, _n_sweeps(n_paths, n_walkers), seed, settings)]
    return np.concatenate(out)


def write_bank(path, data: np.ndarray, header: dict) -> Path:
    """Binary sample bank: magic, u64 header length, JSON header, LE float64 data."""
    path = Path(path)
    data = np.ascontiguousarray(data, dtype="<f8")
    head = dict(header)
    head["shape"] = list(data.shape)
    blob = json.dumps(head, sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(BANK_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes())
    return path


def read_bank(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(BANK_MAGIC):
        raise ValueError(f"{path} is not a sample bank")
    off = len(BANK_MAGIC)
    (n,) = struct.unpack("<Q", raw[off : off + 8])
    off += 8
    header = json.loads(raw[off : off + n])
    data = np.frombuffer(raw[off + n :], dtype="<f8").reshape(header["shape"]).copy()
    return data, header
