"""Training and evaluation of the receivers over randomized links.

Each training step samples SNR, velocity, and delay spread uniformly from
the configured ranges, draws a fresh channel and payload, runs the
receiver, and minimizes the bit-metric binary cross-entropy over data
resource elements (pilot positions carry no payload and are masked out).

Every random draw derives from the master seed through a SeedSequence
keyed by (seed, stream, index), so training traces, checkpoints, and
evaluation results are bitwise reproducible regardless of how work is
scheduled; evaluation may fan blocks out over a thread pool without
changing a single bit of the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import channel as channel_mod
from . import ldpc as ldpc_mod
from . import phy
from .autodiff import Tape, Tensor, abs_, backward, exp, log1p
from .autodiff import mul, relu, scale, sub, sum_all
from .layers import Receiver

TRAIN_STREAM = 101
EVAL_STREAM = 202


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the step index and sampled settings."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"non-finite loss at step {step}: {detail}")
        self.step = step


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 8
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # 0 = only the final state is kept

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")


@dataclass
class EvalConfig:
    snr_points_db: tuple[float, ...] = (0.0, 3.0, 6.0, 9.0, 12.0)
    tiers: tuple[str, ...] = ("tdl-lo",)
    max_blocks: int = 200
    target_errors: int = 100
    seed: int = 0
    threads: int = 1
    chunk_blocks: int = 32  # fixed early-stop granularity, thread-count independent


@dataclass
class EvalPoint:
    receiver: str
    snr_db: float
    velocity_tier: str
    blocks: int
    errors: int
    bler: float
    halfwidth: float
    target_errors: int = 0

    @property
    def undersampled(self) -> bool:
        """Budget exhausted before the target error count was observed."""
        return 0 < self.errors < self.target_errors


def bce_loss(llr: Tensor, bits: np.ndarray, data_mask: np.ndarray) -> Tensor:
    """Masked mean of the stable bit-metric cross-entropy.

    Uses log(1 + exp(-|L|)) + max(L, 0) - L*B per element, averaged over
    the data positions only.
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape != llr.shape:
        raise ValueError(f"bit grid shape {bits.shape} != LLR shape {llr.shape}")
    mask = np.broadcast_to(np.asarray(data_mask, dtype=bool)[..., None], llr.shape)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("empty data mask")
    mask_f = Tensor(mask.astype(np.float64))
    stable = log1p(exp(scale(abs_(llr), -1.0)))
    hinge = relu(llr)
    cross = mul(llr, Tensor(bits))
    per_element = sub(stable + hinge, cross)
    return scale(sum_all(mul(per_element, mask_f)), 1.0 / count)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[Tensor, np.ndarray],
              state: AdamState, cfg: TrainConfig) -> None:
    """Standard Adam with bias correction; parameters update in place."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for name in sorted(params):
        tensor = params[name]
        g = grads[tensor]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data = tensor.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


class LinkSimulator:
    """Seeded generator of received grids for one link configuration."""

    def __init__(self, link: phy.LinkConfig, code: ldpc_mod.LdpcCode | None = None,
                 n_taps: int = 8, n_sinusoids: int = 32):
        self.link = link
        self.pilots = link.pilots()
        self.code = code if code is not None else ldpc_mod.construct(
            link.n_coded_bits, col_weight=3, seed=link.pilot_seed)
        if self.code.n != link.n_coded_bits:
            raise ValueError(f"code length {self.code.n} does not fill the "
                             f"{link.n_coded_bits}-bit grid payload")
        self.n_taps = n_taps
        self.n_sinusoids = n_sinusoids

    def sample(self, entropy: Sequence[int], snr_db: float | None = None,
               velocity_range: tuple[float, float] | None = None,
               static_flat: bool = False) -> tuple[phy.ResourceGrid, np.ndarray, dict]:
        """One (grid, info_bits, meta) draw, fully determined by `entropy`."""
        link = self.link
        rng = np.random.default_rng(np.random.SeedSequence(list(entropy)))
        snr = float(rng.uniform(*link.snr_db)) if snr_db is None else float(snr_db)
        vel_range = velocity_range if velocity_range is not None else link.velocity_mps
        velocity = float(rng.uniform(*vel_range))
        spread = float(rng.uniform(*link.delay_spread_s))
        if static_flat:
            velocity = 0.0
            spread = 0.0
        profile = channel_mod.TdlProfile.make(spread, velocity, link.carrier_hz,
                                              n_taps=1 if static_flat else self.n_taps)
        realization = channel_mod.generate(profile, link.t, link.f, link.n_rx,
                                           link.subcarrier_spacing_hz, seed=rng,
                                           n_sinusoids=self.n_sinusoids)
        info = rng.integers(0, 2, self.code.k).astype(np.uint8)
        codeword = ldpc_mod.encode(self.code, info)
        n0 = phy.snr_to_n0(snr)
        grid = phy.make_grid(codeword, link, realization.h, n0, rng, pilots=self.pilots)
        meta = {"snr_db": snr, "velocity": velocity, "delay_spread": spread,
                "h": realization.h}
        return grid, info, meta


@dataclass
class TrainResult:
    trace: list[tuple[int, float, float, float]]  # (step, loss, snr_db, velocity)
    state: AdamState


def train(model: Receiver, sim: LinkSimulator, cfg: TrainConfig,
          log_fn: Callable[[str], None] | None = None,
          checkpoint_fn: Callable[[int, Receiver], None] | None = None) -> TrainResult:
    """Adam-optimize the receiver; deterministic for a fixed master seed.

    `checkpoint_fn(step, model)` fires every `cfg.checkpoint_every` steps
    when both are set; the caller owns serialization.
    """
    params = model.named_parameters()
    leaves = list(params.values())
    state = AdamState()
    trace: list[tuple[int, float, float, float]] = []
    for step in range(cfg.steps):
        snrs = []
        velocities = []
        with Tape() as tape:
            total = None
            for b in range(cfg.batch_size):
                grid, _, meta = sim.sample((cfg.seed, TRAIN_STREAM, step, b))
                snrs.append(meta["snr_db"])
                velocities.append(meta["velocity"])
                llr = model.forward(grid)
                loss_b = bce_loss(llr, grid.bits, grid.data_mask)
                total = loss_b if total is None else total + loss_b
            loss = scale(total, 1.0 / cfg.batch_size)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingDiverged(step, f"snr={snrs} velocity={velocities}")
        grads = backward(loss, tape, leaves=leaves)
        adam_step(params, grads, state, cfg)
        trace.append((step, loss_value, float(np.mean(snrs)), float(np.mean(velocities))))
        if log_fn is not None and (step % 50 == 0 or step == cfg.steps - 1):
            log_fn(f"step {step}: loss {loss_value:.4f}")
        if checkpoint_fn is not None and cfg.checkpoint_every > 0 \
                and (step + 1) % cfg.checkpoint_every == 0:
            checkpoint_fn(step + 1, model)
    return TrainResult(trace=trace, state=state)


ReceiverFn = Callable[[phy.ResourceGrid, dict], np.ndarray]


def neural_receiver(model: Receiver) -> ReceiverFn:
    def run(grid: phy.ResourceGrid, meta: dict) -> np.ndarray:
        return model.forward(grid).data

    return run


def lmmse_receiver(link: phy.LinkConfig, assumed_delay_spread_s: float | None = None) -> ReceiverFn:
    from .baseline import lmmse_receive

    constellation = link.constellation()
    pilots = link.pilots()
    # mismatched-by-default assumption: midpoint of the configured range
    assumed = (assumed_delay_spread_s if assumed_delay_spread_s is not None
               else 0.5 * (link.delay_spread_s[0] + link.delay_spread_s[1]))

    def run(grid: phy.ResourceGrid, meta: dict) -> np.ndarray:
        return lmmse_receive(grid.y, pilots, constellation, grid.n0,
                             link.subcarrier_spacing_hz, assumed)

    return run


def perfect_csi_receiver(link: phy.LinkConfig) -> ReceiverFn:
    from .baseline import perfect_csi_receive

    constellation = link.constellation()

    def run(grid: phy.ResourceGrid, meta: dict) -> np.ndarray:
        return perfect_csi_receive(grid.y, meta["h"], grid.n0, constellation)

    return run


def evaluate(receivers: dict[str, ReceiverFn], sim: LinkSimulator,
             cfg: EvalConfig) -> list[EvalPoint]:
    """Paired BLER sweep: every receiver decodes the same grids per point.

    Blocks accumulate until every receiver reaches the target error count
    or the block budget runs out; the early-stop check runs on fixed-size
    chunks so results do not depend on the thread count.
    """
    code = sim.code
    names = list(receivers)
    points: list[EvalPoint] = []
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        point_index = 0
        for tier in cfg.tiers:
            vel_range = channel_mod.VELOCITY_TIERS[tier]
            for snr_db in cfg.snr_points_db:
                errors = {name: 0 for name in names}
                blocks_done = 0

                def run_block(block: int, _point=point_index, _snr=snr_db,
                              _vel=vel_range) -> dict[str, bool]:
                    grid, info, meta = sim.sample((cfg.seed, EVAL_STREAM, _point, block),
                                                  snr_db=_snr, velocity_range=_vel)
                    wrong = {}
                    for name in names:
                        llr_grid = receivers[name](grid, meta)
                        llrs = phy.grid_to_bits(llr_grid, grid.pilot_mask)
                        decoded_info = ldpc_mod.decode_info(code, llrs)
                        wrong[name] = bool((decoded_info != info).any())
                    return wrong

                while blocks_done < cfg.max_blocks:
                    if all(errors[name] >= cfg.target_errors for name in names):
                        break
                    chunk = range(blocks_done, min(blocks_done + cfg.chunk_blocks, cfg.max_blocks))
                    if pool is not None:
                        results = list(pool.map(run_block, chunk))
                    else:
                        results = [run_block(b) for b in chunk]
                    for wrong in results:
                        for name in names:
                            errors[name] += wrong[name]
                    blocks_done = chunk.stop
                for name in names:
                    p = errors[name] / blocks_done if blocks_done else 0.0
                    halfwidth = 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / blocks_done) \
                        if blocks_done else 0.0
                    points.append(EvalPoint(receiver=name, snr_db=snr_db, velocity_tier=tier,
                                            blocks=blocks_done, errors=errors[name],
                                            bler=p, halfwidth=halfwidth,
                                            target_errors=cfg.target_errors))
                point_index += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return points


def monotonicity_violations(points: list[EvalPoint]) -> dict[str, list[tuple]]:
    """Per receiver/tier: SNR-adjacent BLER increases beyond one halfwidth sum."""
    out: dict[str, list[tuple]] = {}
    by_key: dict[tuple[str, str], list[EvalPoint]] = {}
    for p in points:
        by_key.setdefault((p.receiver, p.velocity_tier), []).append(p)
    for (name, tier), series in by_key.items():
        series = sorted(series, key=lambda p: p.snr_db)
        inversions = []
        for a, b in zip(series, series[1:]):
            if b.bler > a.bler:
                inversions.append((a.snr_db, b.snr_db, b.bler - a.bler,
                                   a.halfwidth + b.halfwidth))
        out[f"{name}/{tier}"] = inversions
    return out
