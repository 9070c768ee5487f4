"""End-to-end dual-path training: init, optimization, checkpoints, ablations.

Checkpoint files are a one-line JSON header (format tag, version, payload
sha256) followed by a torch-serialized payload holding per-module state
dicts, optimizer state, the step counter, the config and its hash, and the
vocabulary, so a checkpoint alone is enough to rebuild the model for
inference.
"""

from __future__ import annotations

import hashlib
import io
import json
import random
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn
from PIL import Image

from . import losses as L
from .data import (
    DatasetManifest,
    NoBoxesError,
    Vocabulary,
    build_mask,
    center_mask,
    load_image,
    load_manifest,
    rescale_boxes,
    tokenize,
)
from .generator import DivergenceError
from .losses import LossBreakdown, PathTerms, lsgan_discriminator_loss, total_loss
from .model import ModelConfig, TextGuidedInpainter, config_hash

CKPT_FORMAT = "textfill-ckpt"
CKPT_VERSION = 1

CHECKPOINT_MODULES = {
    "image_encoder": "image_encoder",
    "text_encoder": "text_encoder",
    "token_embeddings": "token_embeddings",
    "proj_W_inpaint": "attn.proj_inpaint",
    "proj_W_aux": "attn.proj_aux",
    "fusion_F": "fusion_inpaint",
    "fusion_Fprime": "fusion_aux",
    "decoder": "decoder",
    "D1": "d1",
    "D2": "d2",
    "match_region_encoder": "matcher",
}


class CheckpointError(Exception):
    pass


class TrainAbort(Exception):
    """Training diverged; carries the last good checkpoint path, if any."""

    def __init__(self, message: str, last_checkpoint: str | None = None):
        self.last_checkpoint = last_checkpoint
        if last_checkpoint:
            message += f" (last good checkpoint: {last_checkpoint})"
        super().__init__(message)


@dataclass
class TrainConfig:
    manifest: str
    out_dir: str
    mask_mode: str = "center"
    steps: int = 1000
    batch_size: int = 4
    learning_rate: float = 1e-4
    lambda_kl: float = L.LAMBDA_KL
    lambda_i: float = L.LAMBDA_I
    lambda_t: float = L.LAMBDA_T
    seed: int = 0
    image_size: int = 256
    base_channels: int = 32
    latent_dim: int = 256
    mask_area_fraction: float = 0.5
    mask_side_fraction: float | None = None  # side-based alternative to the area protocol
    save_every: int = 500
    attn_axis: str = "positions"
    no_match_loss: bool = False
    no_maxpool: bool = False
    no_dual_attention: bool = False
    stop_grad_aux: bool = False
    include_sentence_damsm: bool = True
    damsm_checkpoint: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if min(self.lambda_kl, self.lambda_i, self.lambda_t) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.mask_mode not in ("center", "object"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self.image_size,
            base_channels=self.base_channels,
            latent_dim=self.latent_dim,
            attn_axis=self.attn_axis,
            no_maxpool=self.no_maxpool,
            no_dual_attention=self.no_dual_attention,
        )


# ---------------------------------------------------------------------------
# initialization


def initialize_weights(model: nn.Module, seed: int) -> nn.Module:
    """Orthogonal init for every weight matrix/kernel, zeros for biases.

    Conv kernels are flattened to [out, in*k*k] before orthogonalization.
    Spectral-normalized modules expose the raw tensor as weight_orig, which
    is initialized the same way.
    """
    torch.manual_seed(seed)
    for name, p in model.named_parameters():
        if p.dim() >= 2 and ("weight" in name.rsplit(".", 1)[-1]):
            nn.init.orthogonal_(p)
        elif "bias" in name.rsplit(".", 1)[-1]:
            nn.init.zeros_(p)
    return model


# ---------------------------------------------------------------------------
# checkpoint archive


def _state_payload(model: TextGuidedInpainter, optimizers: dict | None, step: int,
                   cfg: dict, vocab: Vocabulary) -> dict:
    modules = {}
    for entry, attr in CHECKPOINT_MODULES.items():
        mod = model
        for part in attr.split("."):
            mod = getattr(mod, part)
        modules[entry] = mod.state_dict()
    return {
        "modules": modules,
        "optimizers": {k: o.state_dict() for k, o in (optimizers or {}).items()},
        "step": step,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "vocab": [vocab.id_to_token[i] for i in range(vocab.size)],
        "model_config": model.config.to_dict(),
        "vocab_size": model.vocab_size,
    }


def save_checkpoint(
    model: TextGuidedInpainter,
    path: str | Path,
    vocab: Vocabulary,
    step: int = 0,
    config: dict | None = None,
    optimizers: dict | None = None,
) -> str:
    """Write the archive; returns the payload sha256 digest."""
    cfg = dict(config or {})
    payload = _state_payload(model, optimizers, step, cfg, vocab)
    buf = io.BytesIO()
    torch.save(payload, buf)
    raw = buf.getvalue()
    digest = hashlib.sha256(raw).hexdigest()
    header = json.dumps(
        {"format": CKPT_FORMAT, "version": CKPT_VERSION, "sha256": digest,
         "config_hash": payload["config_hash"]}
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.encode() + b"\n" + raw)
    return digest


def read_checkpoint(path: str | Path) -> tuple[dict, dict]:
    """Return (header, payload); verifies format tag, version and checksum."""
    path = Path(path)
    with open(path, "rb") as f:
        header_line = f.readline()
        raw = f.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not a checkpoint archive") from e
    if header.get("format") != CKPT_FORMAT:
        raise CheckpointError(f"{path}: unknown archive format {header.get('format')!r}")
    if header.get("version") != CKPT_VERSION:
        raise CheckpointError(
            f"{path}: incompatible checkpoint version {header.get('version')} "
            f"(expected {CKPT_VERSION})"
        )
    digest = hashlib.sha256(raw).hexdigest()
    if digest != header.get("sha256"):
        raise CheckpointError(f"{path}: checksum mismatch; file is truncated or corrupt")
    payload = torch.load(io.BytesIO(raw), map_location="cpu", weights_only=False)
    return header, payload


def load_checkpoint(
    path: str | Path,
    expected_config: dict | None = None,
) -> tuple[TextGuidedInpainter, Vocabulary, dict]:
    """Rebuild model + vocabulary from an archive.

    Warns when the stored training config hash differs from the expected
    one (e.g. different loss weights).
    """
    _, payload = read_checkpoint(path)
    if expected_config is not None and config_hash(dict(expected_config)) != payload["config_hash"]:
        warnings.warn(
            f"checkpoint {path} was written with a different training config "
            f"(hash {payload['config_hash']})",
            stacklevel=2,
        )
    mc = ModelConfig(**payload["model_config"])
    model = TextGuidedInpainter(mc, payload["vocab_size"])
    for entry, attr in CHECKPOINT_MODULES.items():
        mod = model
        for part in attr.split("."):
            mod = getattr(mod, part)
        mod.load_state_dict(payload["modules"][entry])
    tokens = payload["vocab"]
    vocab = Vocabulary(
        token_to_id={t: i for i, t in enumerate(tokens)},
        id_to_token=dict(enumerate(tokens)),
    )
    return model, vocab, payload


# ---------------------------------------------------------------------------
# data batching


class TrainBatcher:
    """Seeded in-memory batcher over a manifest.

    Images are preprocessed once and cached. Batches walk a reshuffled
    epoch permutation rather than sampling with replacement, so every image
    is revisited evenly and a batch repeats an image only when the dataset
    is smaller than the batch (duplicate pairs would act as false negatives
    in the matching contrast). Captions are drawn per step; everything runs
    off the batcher's own RNG so runs are reproducible.
    """

    def __init__(self, manifest: DatasetManifest, cfg: TrainConfig):
        if not manifest.samples:
            raise ValueError("cannot train on an empty manifest")
        self.manifest = manifest
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.images: list[torch.Tensor] = []
        self.masks: list[torch.Tensor] = []
        self._warned_fallback = False
        self._order: list[int] = []
        for s in manifest.samples:
            img = load_image(s.image_path, target=cfg.image_size)
            self.images.append(img)
            self.masks.append(self._sample_mask(s))

    def _sample_mask(self, sample) -> torch.Tensor:
        size = self.cfg.image_size
        if self.cfg.mask_mode == "center":
            return center_mask(size, size, self.cfg.mask_area_fraction,
                               self.cfg.mask_side_fraction)
        with Image.open(sample.image_path) as im:
            w0, h0 = im.size
        boxes = rescale_boxes(sample.boxes, w0, h0, size)
        try:
            return build_mask("object", size, boxes)
        except NoBoxesError:
            if not self._warned_fallback:
                warnings.warn(
                    "sample without usable boxes: falling back to center mask", stacklevel=2
                )
                self._warned_fallback = True
            return center_mask(size, size, self.cfg.mask_area_fraction,
                               self.cfg.mask_side_fraction)

    def _next_indices(self) -> list[int]:
        idx = []
        while len(idx) < self.cfg.batch_size:
            if not self._order:
                self._order = list(range(len(self.images)))
                self.rng.shuffle(self._order)
            take = self._order.pop()
            if take in idx and len(self.images) >= self.cfg.batch_size:
                # keep the batch duplicate-free across an epoch boundary
                self._order.insert(0, take)
                continue
            idx.append(take)
        return idx

    def batch(self) -> dict:
        idx = self._next_indices()
        images = torch.stack([self.images[i] for i in idx])
        masks = torch.stack([self.masks[i] for i in idx])
        toks, lens = [], []
        for i in idx:
            cap = self.rng.choice(self.manifest.samples[i].captions)
            tc = tokenize(cap, self.manifest.vocab)
            toks.append(tc.ids)
            lens.append(tc.length)
        tokens = torch.stack(toks)
        lengths = torch.tensor(lens, dtype=torch.int64)
        lmax = int(lengths.max())
        return {"images": images, "masks": masks, "tokens": tokens[:, :lmax], "lengths": lengths}


# ---------------------------------------------------------------------------
# training loop


class Trainer:
    def __init__(self, cfg: TrainConfig, manifest: DatasetManifest | None = None):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.manifest = manifest or load_manifest(cfg.manifest, "train")
        self.model = TextGuidedInpainter(cfg.model_config(), self.manifest.vocab.size)
        initialize_weights(self.model, cfg.seed)
        self.sample_gen = torch.Generator().manual_seed(cfg.seed + 1)
        self.batcher = TrainBatcher(self.manifest, cfg)
        lr = cfg.learning_rate
        self.opt_g = torch.optim.Adam(self.model.generator_parameters(), lr=lr)
        self.opt_d = torch.optim.Adam(self.model.critic_parameters(), lr=lr)
        self.opt_m = torch.optim.Adam(self.model.matcher_parameters(), lr=lr)
        self.step = 0
        self.history: list[dict] = []
        self.last_checkpoint: str | None = None
        self.matcher_frozen = False
        if cfg.damsm_checkpoint:
            self._load_damsm(cfg.damsm_checkpoint)

    def _load_damsm(self, path: str) -> None:
        _, payload = read_checkpoint(path)
        self.model.matcher.load_state_dict(payload["modules"]["match_region_encoder"])
        self.model.text_encoder.load_state_dict(payload["modules"]["text_encoder"])
        self.model.token_embeddings.load_state_dict(payload["modules"]["token_embeddings"])
        for p in self.model.matcher.parameters():
            p.requires_grad_(False)
        self.matcher_frozen = True

    def _zero_all(self) -> None:
        self.opt_g.zero_grad(set_to_none=True)
        self.opt_d.zero_grad(set_to_none=True)
        self.opt_m.zero_grad(set_to_none=True)

    def _path_terms(self, kl, real, fake, t_wrd, t_sent, lengths) -> PathTerms:
        l1, feat, adv = L.image_loss(real, fake, self.model.d1, self.model.d2)
        zero = torch.zeros((), dtype=real.dtype)
        if self.cfg.no_match_loss:
            dw, ds = zero, zero
        else:
            regions, pooled = self.model.matcher(fake)
            dw, ds = L.damsm_loss(
                regions,
                pooled,
                t_wrd,
                t_sent,
                lengths,
                include_sentence=self.cfg.include_sentence_damsm,
            )
        return PathTerms(kl=kl, l1=l1, feat=feat, adv=adv, damsm_w=dw, damsm_s=ds)

    def train_step(self, batch: dict) -> LossBreakdown:
        """One matcher update, one critic update, one generator update."""
        cfg = self.cfg
        model = self.model
        model.train()
        images, masks = batch["images"], batch["masks"]
        tokens, lengths = batch["tokens"], batch["lengths"]

        # matcher sees real pairs only; text features detached so the text
        # encoder is steered by the main objective alone
        if not cfg.no_match_loss and not self.matcher_frozen:
            self._zero_all()
            t_wrd, t_sent = model.encode_text(tokens, lengths)
            regions, pooled = model.matcher(images)
            m_w, m_s = L.damsm_loss(
                regions,
                pooled,
                t_wrd.detach(),
                t_sent.detach(),
                lengths,
                include_sentence=cfg.include_sentence_damsm,
            )
            (m_w + m_s).backward()
            self.opt_m.step()

        out = model.forward_train(images, masks, tokens, lengths, generator=self.sample_gen)

        # critic update on both paths' fakes (detached inside the loss)
        self._zero_all()
        d_loss = 0.5 * (
            lsgan_discriminator_loss(images, out["i_g"], model.d2)
            + lsgan_discriminator_loss(images, out["i_g_aux"], model.d2)
        ) + 0.5 * (
            lsgan_discriminator_loss(images, out["i_g"], model.d1)
            + lsgan_discriminator_loss(images, out["i_g_aux"], model.d1)
        )
        d_loss.backward()
        self.opt_d.step()

        # generator/encoder update
        self._zero_all()
        kl_inp = L.kl_pair(
            out["mu_aux"], out["log_var_aux"], out["mu"], out["log_var"],
            stop_grad_aux=cfg.stop_grad_aux,
        )
        kl_aux = L.kl_to_standard(out["mu_aux"], out["log_var_aux"])
        inp_terms = self._path_terms(
            kl_inp, images, out["i_g"], out["t_wrd"], out["t_sent"], lengths
        )
        aux_terms = self._path_terms(
            kl_aux, images, out["i_g_aux"], out["t_wrd"], out["t_sent"], lengths
        )
        breakdown = total_loss(inp_terms, aux_terms, cfg.lambda_kl, cfg.lambda_i, cfg.lambda_t)
        if not torch.isfinite(breakdown.total):
            raise TrainAbort("training diverged: non-finite total loss", self.last_checkpoint)
        breakdown.total.backward()
        self.opt_g.step()
        return breakdown

    def run(self, log_file=None) -> list[dict]:
        out_dir = Path(self.cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg_dict = asdict(self.cfg)
        own_log = log_file is None
        log = open(out_dir / "loss_log.jsonl", "w") if own_log else log_file
        try:
            while self.step < self.cfg.steps:
                batch = self.batcher.batch()
                try:
                    breakdown = self.train_step(batch)
                except DivergenceError as e:
                    raise TrainAbort(str(e), self.last_checkpoint) from e
                self.step += 1
                rec = breakdown.scalars(step=self.step)
                self.history.append(rec)
                log.write(json.dumps(rec) + "\n")
                if self.step % self.cfg.save_every == 0 or self.step == self.cfg.steps:
                    ckpt = out_dir / f"step_{self.step:08d}.ckpt"
                    self.save(ckpt)
            return self.history
        finally:
            if own_log:
                log.close()

    def save(self, path: str | Path) -> str:
        digest = save_checkpoint(
            self.model,
            path,
            self.manifest.vocab,
            step=self.step,
            config=asdict(self.cfg),
            optimizers={"g": self.opt_g, "d": self.opt_d, "m": self.opt_m},
        )
        self.last_checkpoint = str(path)
        return digest


# ---------------------------------------------------------------------------
# matching-network pretraining


def pretrain_damsm(cfg: TrainConfig) -> str:
    """Train the matching networks on real (image, caption) pairs.

    Saves a checkpoint whose matcher/text entries can seed the main run;
    returns the checkpoint path.
    """
    torch.manual_seed(cfg.seed)
    manifest = load_manifest(cfg.manifest, "train")
    model = TextGuidedInpainter(cfg.model_config(), manifest.vocab.size)
    initialize_weights(model, cfg.seed)
    batcher = TrainBatcher(manifest, cfg)
    params = list(model.matcher_parameters()) + list(model.text_encoder.parameters()) + list(
        model.token_embeddings.parameters()
    )
    opt = torch.optim.Adam(params, lr=cfg.learning_rate)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "damsm_log.jsonl", "w") as log:
        for step in range(1, cfg.steps + 1):
            batch = batcher.batch()
            t_wrd, t_sent = model.encode_text(batch["tokens"], batch["lengths"])
            regions, pooled = model.matcher(batch["images"])
            loss_w, loss_s = L.damsm_loss(
                regions, pooled, t_wrd, t_sent, batch["lengths"],
                include_sentence=cfg.include_sentence_damsm,
            )
            loss = loss_w + loss_s
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            log.write(
                json.dumps(
                    {"step": step, "damsm_w": float(loss_w.detach()), "damsm_s": float(loss_s.detach())}
                )
                + "\n"
            )
    path = out_dir / "damsm.ckpt"
    save_checkpoint(model, path, manifest.vocab, step=cfg.steps, config=asdict(cfg))
    return str(path)
