"""Training objectives: KL terms, image quality terms, image-text matching.

All loss functions are pure functions of tensors and preserve dtype, so the
same code path serves float32 training and float64 verification. Scalars
are returned as 0-dim tensors; LossBreakdown.scalars() converts to floats
for logging.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

LAMBDA_KL = 20.0
LAMBDA_I = 20.0
LAMBDA_T = 0.1
GAMMA1 = 5.0
GAMMA2 = 5.0


class CosineError(Exception):
    """A zero-norm vector reached a cosine similarity."""


def kl_to_standard(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma) || N(0, 1)), closed form, summed over coordinates.

    Returned positive, to be minimized; averaged over the batch dimension.
    """
    var = torch.exp(log_var)
    per_coord = 0.5 * (mu * mu + var - 1.0 - log_var)
    return per_coord.flatten(1).sum(dim=1).mean() if mu.dim() > 1 else per_coord.sum()


def kl_pair(
    mu_aux: torch.Tensor,
    log_var_aux: torch.Tensor,
    mu_inp: torch.Tensor,
    log_var_inp: torch.Tensor,
    stop_grad_aux: bool = False,
) -> torch.Tensor:
    """KL(N(mu_aux, sigma_aux) || N(mu_inp, sigma_inp)), closed form.

    Steers the inpainting-path prior toward the auxiliary posterior. By
    default gradients flow to both parameter sets; stop_grad_aux freezes
    the auxiliary side as a pure target.
    """
    if stop_grad_aux:
        mu_aux = mu_aux.detach()
        log_var_aux = log_var_aux.detach()
    var_aux = torch.exp(log_var_aux)
    var_inp = torch.exp(log_var_inp)
    per_coord = (
        0.5 * (log_var_inp - log_var_aux)
        + (var_aux + (mu_aux - mu_inp) ** 2) / (2.0 * var_inp)
        - 0.5
    )
    return per_coord.flatten(1).sum(dim=1).mean() if mu_aux.dim() > 1 else per_coord.sum()


def image_loss(
    real: torch.Tensor,
    fake: torch.Tensor,
    d1,
    d2,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Appearance terms: per-pixel L1, critic feature distance, LSGAN generator term.

    The feature distance is the root of the mean squared feature gap (mean
    rather than sum over coordinates, for scale stability).
    """
    l1 = (real - fake).abs().mean()
    # one batched forward so both images see identical critic weights
    # (spectral norm advances its power-iteration state per forward)
    f_both = d1.features(torch.cat([real, fake], dim=0))
    f_real, f_fake = f_both.chunk(2, dim=0)
    feat = torch.sqrt(((f_real - f_fake) ** 2).mean())
    adv = ((d2.score(fake) - 1.0) ** 2).mean()
    return l1, feat, adv


def lsgan_discriminator_loss(real: torch.Tensor, fake: torch.Tensor, d2) -> torch.Tensor:
    """Least-squares critic objective [D(I)-1]^2 + [D(I_g)]^2, batch averaged.

    The fake image is detached so no gradient reaches the generator.
    """
    real_term = ((d2.score(real) - 1.0) ** 2).mean()
    fake_term = (d2.score(fake.detach()) ** 2).mean()
    return real_term + fake_term


# ---------------------------------------------------------------------------
# image-text matching


class RegionEncoder(nn.Module):
    """Small conv net producing region features for image-text matching.

    Regions come out at 1/16 resolution with the text feature width, plus a
    mean-pooled global image vector.
    """

    def __init__(self, base: int = 32, out_dim: int = 256):
        super().__init__()
        chans = [3, base, base * 2, base * 4, out_dim]
        layers = []
        for i in range(4):
            layers += [nn.Conv2d(chans[i], chans[i + 1], 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
        self.net = nn.Sequential(*layers)

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        maps = self.net(image)  # [B, D, h, w]
        regions = maps.flatten(2).transpose(1, 2)  # [B, N_r, D]
        pooled = regions.mean(dim=1)  # [B, D]
        return regions, pooled


def _cosine(a: torch.Tensor, b: torch.Tensor, dim: int = -1) -> torch.Tensor:
    na = a.norm(dim=dim)
    nb = b.norm(dim=dim)
    if (na == 0).any() or (nb == 0).any():
        raise CosineError("zero-norm vector in cosine similarity")
    return (a * b).sum(dim=dim) / (na * nb)


def word_context(
    regions: torch.Tensor,  # [N_r, D]
    words: torch.Tensor,  # [L, D]
    gamma_attn: float = GAMMA1,
) -> torch.Tensor:
    """Attention-weighted region context for each word, [L, D]."""
    rn = F.normalize(regions, dim=1, eps=1e-8)
    wn = F.normalize(words, dim=1, eps=1e-8)
    sim = rn @ wn.T  # [N_r, L]
    alpha = torch.softmax(gamma_attn * sim, dim=0)
    return alpha.T @ regions


def word_similarity(
    regions: torch.Tensor,
    words: torch.Tensor,
    gamma1: float = GAMMA1,
    return_cosines: bool = False,
):
    """Word-level image-text similarity via log-sum-exp of word/context cosines.

    S = (1/gamma1) * log sum_j exp(gamma1 * cos(context_j, word_j)).
    """
    contexts = word_context(regions, words, gamma_attn=gamma1)
    cosines = _cosine(contexts, words)
    s = torch.logsumexp(gamma1 * cosines, dim=0) / gamma1
    if return_cosines:
        return s, cosines
    return s


def damsm_batch_prob(scores: torch.Tensor, gamma2: float = GAMMA2) -> torch.Tensor:
    """Row softmax of the pairwise score matrix: P[i, j] = match prob of pair (i, j)."""
    return torch.softmax(gamma2 * scores, dim=1)


def contrastive_matching_loss(scores: torch.Tensor, gamma2: float = GAMMA2) -> torch.Tensor:
    """Symmetric negative log probability of the matched diagonal pairs."""
    B = scores.shape[0]
    if B == 1:
        warnings.warn("matching loss over a single pair has no contrast", stacklevel=2)
    p_it = damsm_batch_prob(scores, gamma2)
    p_ti = damsm_batch_prob(scores.T, gamma2)
    diag = torch.arange(B, device=scores.device)
    return -(torch.log(p_it[diag, diag]) + torch.log(p_ti[diag, diag])).sum()


def damsm_loss(
    regions: torch.Tensor,  # [B, N_r, D]
    pooled: torch.Tensor,  # [B, D]
    t_wrd: torch.Tensor,  # [B, L_max, D]
    t_sent: torch.Tensor,  # [B, D]
    lengths: torch.Tensor,  # [B]
    gamma1: float = GAMMA1,
    gamma2: float = GAMMA2,
    include_sentence: bool = True,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Word- and sentence-level matching losses over a batch of pairs."""
    B = regions.shape[0]
    s_word = torch.stack(
        [
            torch.stack(
                [
                    word_similarity(regions[i], t_wrd[j, : int(lengths[j])], gamma1)
                    for j in range(B)
                ]
            )
            for i in range(B)
        ]
    )
    loss_w = contrastive_matching_loss(s_word, gamma2)
    if not include_sentence:
        return loss_w, torch.zeros((), dtype=regions.dtype, device=regions.device)
    pn = F.normalize(pooled, dim=1, eps=1e-8)
    sn = F.normalize(t_sent, dim=1, eps=1e-8)
    s_sent = pn @ sn.T
    loss_s = contrastive_matching_loss(s_sent, gamma2)
    return loss_w, loss_s


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class PathTerms:
    """Per-path loss components (all 0-dim tensors)."""

    kl: torch.Tensor
    l1: torch.Tensor
    feat: torch.Tensor
    adv: torch.Tensor
    damsm_w: torch.Tensor
    damsm_s: torch.Tensor

    def image_term(self) -> torch.Tensor:
        return self.l1 + self.feat + self.adv

    def text_term(self) -> torch.Tensor:
        return self.damsm_w + self.damsm_s


@dataclass
class LossBreakdown:
    kl_aux: torch.Tensor
    kl_inpaint: torch.Tensor
    l1: torch.Tensor
    feat_match: torch.Tensor
    adv_gen: torch.Tensor
    damsm_word: torch.Tensor
    damsm_sent: torch.Tensor
    l1_aux: torch.Tensor
    feat_match_aux: torch.Tensor
    adv_gen_aux: torch.Tensor
    damsm_word_aux: torch.Tensor
    damsm_sent_aux: torch.Tensor
    total: torch.Tensor

    def scalars(self, step: int | None = None) -> dict:
        def f(t: torch.Tensor) -> float:
            return float(t.detach())

        rec = {
            "kl_aux": f(self.kl_aux),
            "kl_inpaint": f(self.kl_inpaint),
            "l1": f(self.l1),
            "feat": f(self.feat_match),
            "adv": f(self.adv_gen),
            "damsm_w": f(self.damsm_word),
            "damsm_s": f(self.damsm_sent),
            "l1_aux": f(self.l1_aux),
            "feat_aux": f(self.feat_match_aux),
            "adv_aux": f(self.adv_gen_aux),
            "damsm_w_aux": f(self.damsm_word_aux),
            "damsm_s_aux": f(self.damsm_sent_aux),
            "total": f(self.total),
        }
        if step is not None:
            rec = {"step": step, **rec}
        return rec


def total_loss(
    inpaint: PathTerms,
    aux: PathTerms,
    lambda_kl: float = LAMBDA_KL,
    lambda_i: float = LAMBDA_I,
    lambda_t: float = LAMBDA_T,
) -> LossBreakdown:
    """Weighted sum of both paths' components.

    Both KL terms enter with minimization sign; the total is linear in
    every component with the configured weights.
    """
    total = (
        lambda_kl * (aux.kl + inpaint.kl)
        + lambda_i * (inpaint.image_term() + aux.image_term())
        + lambda_t * (inpaint.text_term() + aux.text_term())
    )
    if not torch.isfinite(total):
        for name, val in [
            ("kl_aux", aux.kl),
            ("kl_inpaint", inpaint.kl),
            ("l1", inpaint.l1),
            ("feat", inpaint.feat),
            ("adv", inpaint.adv),
            ("damsm_w", inpaint.damsm_w),
            ("damsm_s", inpaint.damsm_s),
            ("l1_aux", aux.l1),
            ("feat_aux", aux.feat),
            ("adv_aux", aux.adv),
            ("damsm_w_aux", aux.damsm_w),
            ("damsm_s_aux", aux.damsm_s),
        ]:
            if not torch.isfinite(val):
                from .generator import DivergenceError

                raise DivergenceError(f"loss component {name}")
    return LossBreakdown(
        kl_aux=aux.kl,
        kl_inpaint=inpaint.kl,
        l1=inpaint.l1,
        feat_match=inpaint.feat,
        adv_gen=inpaint.adv,
        damsm_word=inpaint.damsm_w,
        damsm_sent=inpaint.damsm_s,
        l1_aux=aux.l1,
        feat_match_aux=aux.feat,
        adv_gen_aux=aux.adv,
        damsm_word_aux=aux.damsm_w,
        damsm_sent_aux=aux.damsm_s,
        total=total,
    )
