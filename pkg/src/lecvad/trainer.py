"""Training loop, finite-difference gradient check and checkpoint container.

Checkpoint container (``.lck``), little-endian::

    b"LECK" | version u32 | header_len u32 | header (UTF-8 JSON) | tensor payload | sha256

The header lists every tensor as ``{"name", "dtype", "shape", "offset", "nbytes"}`` with
offsets relative to the payload start. The trailing 32-byte SHA-256 digest covers every
preceding byte. Tensor names prefixed ``model/`` are the network state (including the
memory bank buffer ``bank.M``); ``opt/<param>/{exp_avg,exp_avg_sq,step}`` hold AdamW moments.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .featio import Manifest
from .model import LECVAD

log = logging.getLogger(__name__)

CKPT_MAGIC = b"LECK"
CKPT_VERSION = 1
ZERO_GRAD_FLOOR = 1e-6


class CheckpointError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 3e-5
    batch_size: int = 64
    epochs: int = 10
    weight_decay: float = 0.01
    seed: int = 0
    T_max: int = 256
    window_len: int = 64
    heads: int = 4
    beta: float = 0.7
    lam: float = 0.3
    gamma: float = 1e-4
    eta: float = 0.99
    m_blocks: int = 4
    use_vob: bool = True
    use_cmb: bool = True
    use_membank: bool = True
    use_gmm_loss: bool = True
    use_reg_loss: bool = True
    grad_clip: float = 10.0
    init_std: float = 0.02
    dtype: str = "float32"

    ALIASES = {
        "lambda": "lam",
        "loss.lambda": "lam",
        "loss.gamma": "gamma",
        "gmm.beta": "beta",
        "encoder.window_len": "window_len",
        "membank.eta": "eta",
        "membank.m": "m_blocks",
    }

    def __post_init__(self):
        for name in ("lr", "weight_decay", "lam", "gamma", "beta", "grad_clip", "init_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("batch_size", "epochs", "T_max", "window_len", "heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.m_blocks < 0:
            raise ConfigError("m_blocks must be >= 0")
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @classmethod
    def keys(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(cls)} | set(cls.ALIASES)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = cls.ALIASES.get(key, key)
            if name not in names:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def torch_dtype(self):
        return getattr(torch, self.dtype)


def init_parameters(model: nn.Module, seed: int, std: float = 0.02) -> None:
    """Truncated normal (std, +-2 std) for matrices; zeros for biases; unit LayerNorm gains."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.ndim >= 2:
                nn.init.trunc_normal_(p, std=std, a=-2 * std, b=2 * std, generator=gen)
            elif ".norm" in name and name.endswith("weight"):
                p.fill_(1.0)
            else:
                p.zero_()


def build_model(f_text, cfg: TrainConfig) -> LECVAD:
    model = LECVAD(
        torch.as_tensor(np.asarray(f_text), dtype=cfg.torch_dtype),
        window_len=cfg.window_len, heads=cfg.heads, m_blocks=cfg.m_blocks, eta=cfg.eta,
        beta=cfg.beta, use_vob=cfg.use_vob, use_cmb=cfg.use_cmb, use_membank=cfg.use_membank,
    ).to(cfg.torch_dtype)
    init_parameters(model, cfg.seed, cfg.init_std)
    return model


def build_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.AdamW:
    decay = [p for p in model.parameters() if p.ndim >= 2]
    no_decay = [p for p in model.parameters() if p.ndim < 2]
    return torch.optim.AdamW(
        [{"params": decay, "weight_decay": cfg.weight_decay}, {"params": no_decay, "weight_decay": 0.0}],
        lr=cfg.lr, foreach=False,
    )


@dataclass
class ModelState:
    model: LECVAD
    optimizer: torch.optim.AdamW
    config: TrainConfig
    step: int = 0
    log: list = field(default_factory=list)


def subsample(x: np.ndarray, T_max: int) -> np.ndarray:
    if x.shape[0] <= T_max:
        return x
    idx = np.linspace(0, x.shape[0] - 1, T_max).round().astype(np.int64)
    return x[idx]


def _load_training_videos(manifest: Manifest, cfg: TrainConfig):
    videos = []
    for entry in manifest.entries:
        seq = manifest.load_features(entry)
        x = torch.from_numpy(subsample(seq.data, cfg.T_max)).to(cfg.torch_dtype)
        videos.append((entry.video_id, x, entry.annotation.y, entry.annotation.g))
    return videos


def new_state(manifest: Manifest, cfg: TrainConfig) -> ModelState:
    model = build_model(manifest.load_text_bank().embeddings, cfg)
    return ModelState(model, build_optimizer(model, cfg), cfg)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_step(state: ModelState, batch) -> dict:
    """One optimizer step on ``batch`` (list of (video_id, x, y, g)); returns mean loss parts."""
    model, cfg = state.model, state.config
    model.train()
    totals, parts, f_augs = [], [], []
    for vid, x, y, g in batch:
        fwd = model(x)
        lb = model.loss(fwd, y, g, cfg.lam, cfg.gamma, cfg.use_gmm_loss, cfg.use_reg_loss)
        if not torch.isfinite(lb.l_total):
            raise FloatingPointError(f"non-finite loss at step {state.step} on video {vid}: {lb.as_floats()}")
        totals.append(lb.l_total)
        parts.append(lb.as_floats())
        if fwd.f_aug is not None:
            f_augs.append(fwd.f_aug.detach())
    loss = torch.stack(totals).mean()
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if cfg.grad_clip > 0:
        nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    state.optimizer.step()
    if f_augs and model.use_membank:
        model.bank.momentum_update(torch.stack(f_augs).mean(dim=0))
    state.step += 1
    return {k: float(np.mean([p[k] for p in parts])) for k in parts[0]}


def fit(manifest: Manifest, cfg: TrainConfig, state: ModelState | None = None,
        max_steps: int | None = None) -> ModelState:
    """Train (or resume) until ``cfg.epochs`` epochs or ``max_steps`` global steps.

    Batch order for epoch ``e`` is drawn from ``rng([seed, e])``, so a resumed run
    recovers its position from ``state.step`` alone.
    """
    if len(manifest) == 0:
        raise ValueError("empty manifest")
    if manifest.split != "train":
        log.warning("fitting on a %r split", manifest.split)
    videos = _load_training_videos(manifest, cfg)
    if state is None:
        state = new_state(manifest, cfg)
    n = len(videos)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = per_epoch * cfg.epochs if max_steps is None else min(max_steps, per_epoch * cfg.epochs)
    epoch_parts: dict[int, list] = {}
    while state.step < total:
        epoch, b = divmod(state.step, per_epoch)
        order = epoch_order(n, cfg.seed, epoch)
        batch = [videos[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
        parts = train_step(state, batch)
        epoch_parts.setdefault(epoch, []).append((len(batch), parts))
        if b == per_epoch - 1:
            rows = epoch_parts.pop(epoch)
            weight = sum(w for w, _ in rows)
            summary = {k: sum(w * p[k] for w, p in rows) / weight for k in rows[0][1]}
            summary["epoch"] = epoch + 1
            summary["complete"] = len(rows) == per_epoch
            state.log.append(summary)
            log.info("epoch %d: %s", epoch + 1, {k: round(v, 5) for k, v in summary.items() if k.startswith("l_")})
    return state


# --------------------------------------------------------------------------- gradient check

@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float
    seconds: float = 0.0

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.errors.items() if not v < self.tol]

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {"max_rel_error": self.max_error, "tol": self.tol, "passed": self.passed,
                "failed": self.failed, "per_tensor": self.errors, "seconds": self.seconds}


def grad_check(T=6, d=8, C=3, m_blocks=1, lam=0.3, gamma=1e-4, h=1e-5, tol=1e-4, seed=0,
               init_std=0.3, window_len=4, corrupt: str | None = None, **overrides) -> GradCheckReport:
    """Central finite differences against autograd for every parameter tensor of the total loss.

    Per-tensor error is ``||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-6)``;
    the floor keeps structurally zero gradients from dividing finite-difference noise by ~0.
    ``corrupt`` names a parameter whose analytic gradient is deliberately perturbed.
    """
    import time

    t0 = time.perf_counter()
    cfg = TrainConfig(lam=lam, gamma=gamma, m_blocks=m_blocks, window_len=window_len, seed=seed,
                      init_std=init_std, dtype="float64", **overrides)
    gen = torch.Generator().manual_seed(seed + 1)
    f_text = torch.randn(C + 1, d, generator=gen, dtype=torch.float64)
    x = torch.randn(T, d, generator=gen, dtype=torch.float64)
    model = build_model(f_text, cfg)
    y, g = 1, min(2, C)

    def objective():
        fwd = model(x)
        return model.loss(fwd, y, g, cfg.lam, cfg.gamma, cfg.use_gmm_loss, cfg.use_reg_loss).l_total

    model.zero_grad()
    objective().backward()
    errors = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            analytic = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            if name == corrupt:
                analytic = analytic * 1.5 + 1e-3
            numeric = torch.zeros_like(p)
            flat, nflat = p.view(-1), numeric.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = objective().item()
                flat[i] = orig - h
                down = objective().item()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * h)
            # key biases have an identically zero gradient; compare those absolutely
            scale = max(analytic.norm().item(), numeric.norm().item(), ZERO_GRAD_FLOOR)
            errors[name] = (analytic - numeric).norm().item() / scale
    if corrupt is not None and corrupt not in errors:
        raise KeyError(corrupt)
    return GradCheckReport(errors, tol, time.perf_counter() - t0)


# --------------------------------------------------------------------------- checkpoints

def _tensor_items(state: ModelState):
    items = [(f"model/{k}", v) for k, v in state.model.state_dict().items()]
    names = {id(p): n for n, p in state.model.named_parameters()}
    for group in state.optimizer.param_groups:
        for p in group["params"]:
            st = state.optimizer.state.get(p)
            if not st:
                continue
            base = f"opt/{names[id(p)]}"
            items.append((f"{base}/exp_avg", st["exp_avg"]))
            items.append((f"{base}/exp_avg_sq", st["exp_avg_sq"]))
            items.append((f"{base}/step", torch.as_tensor(st["step"]).reshape(1)))
    return items


def checkpoint_bytes(state: ModelState) -> bytes:
    tensors, payload, offset = [], [], 0
    for name, t in _tensor_items(state):
        arr = t.detach().cpu().contiguous().numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes()
        tensors.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        payload.append(raw)
        offset += len(raw)
    header = {"config": state.config.to_dict(), "step": state.step, "log": state.log,
              "C": state.model.C, "d": int(state.model.f_text.shape[1]), "tensors": tensors}
    head = json.dumps(header, sort_keys=True).encode()
    body = CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(head)) + head + b"".join(payload)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(state: ModelState, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(state))


def load_checkpoint(path) -> ModelState:
    buf = Path(path).read_bytes()
    if len(buf) < 44 or hashlib.sha256(buf[:-32]).digest() != buf[-32:]:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    if buf[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    version, head_len = struct.unpack_from("<II", buf, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(buf[12:12 + head_len])
    base = 12 + head_len
    arrays = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        arr = np.frombuffer(buf, dtype=np.dtype(t["dtype"]), count=int(np.prod(t["shape"], dtype=np.int64)),
                            offset=start).reshape(t["shape"])
        arrays[t["name"]] = torch.from_numpy(arr.copy())

    cfg = TrainConfig.from_dict(header["config"])
    model = build_model(arrays["model/f_text"], cfg)
    model.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("model/")})
    opt = build_optimizer(model, cfg)
    for name, p in model.named_parameters():
        key = f"opt/{name}"
        if f"{key}/exp_avg" in arrays:
            opt.state[p] = {"step": arrays[f"{key}/step"].reshape(()).clone(),
                            "exp_avg": arrays[f"{key}/exp_avg"], "exp_avg_sq": arrays[f"{key}/exp_avg_sq"]}
    return ModelState(model, opt, cfg, header["step"], header["log"])
