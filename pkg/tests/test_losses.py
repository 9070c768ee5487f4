import math

import numpy as np
import pytest
import torch

from oracles import central_difference, kl_pair_monte_carlo, kl_standard_monte_carlo
from textfill.generator import Critic
from textfill.losses import (
    LossBreakdown,
    PathTerms,
    RegionEncoder,
    contrastive_matching_loss,
    damsm_batch_prob,
    damsm_loss,
    image_loss,
    kl_pair,
    kl_to_standard,
    lsgan_discriminator_loss,
    total_loss,
    word_similarity,
)


def t(x):
    return torch.tensor(x, dtype=torch.float64)


class TestKLStandard:
    def test_standard_gaussian_is_zero(self):
        assert float(kl_to_standard(t([0.0]), t([0.0]))) == 0.0

    def test_unit_mean_shift_is_half(self):
        assert float(kl_to_standard(t([1.0]), t([0.0]))) == pytest.approx(0.5)

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            mu = rng.uniform(-2, 2, size=4)
            lv = rng.uniform(-1, 1, size=4)
            closed = float(kl_to_standard(t(mu), t(lv)))
            mc = kl_standard_monte_carlo(mu, lv, 100_000, rng)
            assert abs(closed - mc) / max(abs(closed), 1e-9) < 0.01, (closed, mc)

    def test_non_negative(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            mu = rng.uniform(-4, 4, size=6)
            lv = rng.uniform(-3, 3, size=6)
            assert float(kl_to_standard(t(mu), t(lv))) >= 0.0

    def test_batched_mean(self):
        mu = t([[1.0], [0.0]])
        lv = torch.zeros(2, 1, dtype=torch.float64)
        assert float(kl_to_standard(mu, lv)) == pytest.approx(0.25)


class TestKLPair:
    def test_identical_is_zero(self):
        mu, lv = t([0.3, -0.2]), t([0.1, 0.4])
        assert float(kl_pair(mu, lv, mu, lv)) == pytest.approx(0.0, abs=1e-12)

    def test_unit_shift_closed_form(self):
        assert float(kl_pair(t([0.0]), t([0.0]), t([1.0]), t([0.0]))) == pytest.approx(0.5)

    def test_non_negative_on_random_pairs(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            a, b = rng.uniform(-3, 3, 4), rng.uniform(-2, 2, 4)
            c, d = rng.uniform(-3, 3, 4), rng.uniform(-2, 2, 4)
            assert float(kl_pair(t(a), t(b), t(c), t(d))) >= -1e-12

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            mu_a, lv_a = rng.uniform(-2, 2, 4), rng.uniform(-1, 1, 4)
            mu_b, lv_b = rng.uniform(-2, 2, 4), rng.uniform(-1, 1, 4)
            closed = float(kl_pair(t(mu_a), t(lv_a), t(mu_b), t(lv_b)))
            mc = kl_pair_monte_carlo(mu_a, lv_a, mu_b, lv_b, 100_000, rng)
            assert abs(closed - mc) / max(abs(closed), 1e-9) < 0.01, (closed, mc)

    def test_stop_grad_aux_blocks_gradient(self):
        mu_a = t([0.5]).requires_grad_(True)
        lv_a = t([0.2]).requires_grad_(True)
        mu_b = t([0.0]).requires_grad_(True)
        lv_b = t([0.0]).requires_grad_(True)
        kl_pair(mu_a, lv_a, mu_b, lv_b, stop_grad_aux=True).backward()
        assert mu_a.grad is None
        assert mu_b.grad is not None


class LinearStubCritic:
    """Tiny deterministic critic so loss arithmetic can be checked by hand."""

    def __init__(self, dim, seed=0):
        g = torch.Generator().manual_seed(seed)
        self.w = torch.randn(dim, 6, generator=g, dtype=torch.float64)

    def features(self, img):
        return img.flatten(1).to(torch.float64) @ self.w

    def score(self, img):
        return self.features(img).sum(dim=1)


class TestImageLoss:
    @pytest.fixture()
    def critics(self):
        torch.manual_seed(0)
        return Critic(base=8).eval(), Critic(base=8).eval()

    def test_identity_images(self, critics):
        d1, d2 = critics
        img = torch.randn(1, 3, 64, 64, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            l1, feat, adv = image_loss(img, img, d1, d2)
            expected_adv = float(((d2.score(img) - 1.0) ** 2).mean())
        assert float(l1) == 0.0
        assert float(feat) == 0.0
        assert float(adv) == pytest.approx(expected_adv)

    def test_constant_offset(self, critics):
        d1, d2 = critics
        a = torch.zeros(1, 3, 64, 64)
        b = torch.full((1, 3, 64, 64), 0.5)
        l1, _, _ = image_loss(a, b, d1, d2)
        assert float(l1) == pytest.approx(0.5)

    def test_all_terms_match_naive_loop_oracle_on_4x4(self):
        stub = LinearStubCritic(dim=3 * 4 * 4)
        g = torch.Generator().manual_seed(2)
        a = torch.rand(1, 3, 4, 4, generator=g, dtype=torch.float64)
        b = torch.rand(1, 3, 4, 4, generator=g, dtype=torch.float64)
        l1, feat, adv = image_loss(a, b, stub, stub)
        l1_ref = np.mean([abs(float(x) - float(y)) for x, y in zip(a.flatten(), b.flatten())])
        assert float(l1) == pytest.approx(l1_ref, abs=1e-6)
        f1 = stub.features(a).numpy().ravel()
        f2 = stub.features(b).numpy().ravel()
        feat_ref = math.sqrt(np.mean([(x - y) ** 2 for x, y in zip(f1, f2)]))
        assert float(feat) == pytest.approx(feat_ref, abs=1e-6)
        adv_ref = (float(stub.score(b)[0]) - 1.0) ** 2
        assert float(adv) == pytest.approx(adv_ref, abs=1e-6)


class TestDiscriminatorLoss:
    class FakeD2:
        def __init__(self, real_score, fake_score):
            self.r, self.f = real_score, fake_score
            self.calls = 0

        def score(self, img):
            self.calls += 1
            return torch.full((img.shape[0],), self.r if self.calls == 1 else self.f)

    def test_perfect_discriminator_is_zero(self):
        d2 = self.FakeD2(1.0, 0.0)
        loss = lsgan_discriminator_loss(torch.zeros(2, 3, 4, 4), torch.zeros(2, 3, 4, 4), d2)
        assert float(loss) == 0.0

    def test_constant_half_scores_half(self):
        d2 = self.FakeD2(0.5, 0.5)
        loss = lsgan_discriminator_loss(torch.zeros(2, 3, 4, 4), torch.zeros(2, 3, 4, 4), d2)
        assert float(loss) == pytest.approx(0.5)

    def test_non_negative(self):
        torch.manual_seed(3)
        d2 = Critic(base=8)
        g = torch.Generator().manual_seed(4)
        for _ in range(5):
            a = torch.randn(2, 3, 64, 64, generator=g)
            b = torch.randn(2, 3, 64, 64, generator=g)
            assert float(lsgan_discriminator_loss(a, b, d2).detach()) >= 0.0

    def test_gradient_blocked_from_generator_side(self):
        torch.manual_seed(5)
        d2 = Critic(base=8)
        fake = torch.randn(1, 3, 64, 64, requires_grad=True)
        loss = lsgan_discriminator_loss(torch.randn(1, 3, 64, 64), fake, d2)
        loss.backward()
        assert fake.grad is None


class TestWordSimilarity:
    def test_single_word_perfect_cosine(self):
        # one word whose context equals itself: S = (1/5) ln e^5 = 1
        regions = t([[2.0, 0.0]])
        words = t([[1.0, 0.0]])
        s = word_similarity(regions, words, gamma1=5.0)
        assert float(s) == pytest.approx(1.0, abs=1e-9)

    def test_two_words_half_cosine_closed_form(self):
        s = torch.logsumexp(5.0 * t([0.5, 0.5]), dim=0) / 5.0
        assert float(s) == pytest.approx(math.log(2 * math.e**2.5) / 5.0, abs=1e-9)
        assert float(s) == pytest.approx(0.6386, abs=1e-4)

    def test_logsumexp_bounds(self):
        rng = np.random.default_rng(6)
        gamma = 5.0
        for _ in range(200):
            n_r = int(rng.integers(2, 10))
            L = int(rng.integers(1, 9))
            regions = t(rng.standard_normal((n_r, 8)))
            words = t(rng.standard_normal((L, 8)))
            s, cos = word_similarity(regions, words, gamma, return_cosines=True)
            mx = float(cos.max())
            assert mx - 1e-9 <= float(s) <= mx + math.log(L) / gamma + 1e-9


class TestBatchProb:
    def test_single_pair(self):
        p = damsm_batch_prob(t([[0.7]]), gamma2=5.0)
        assert float(p) == pytest.approx(1.0)

    def test_identity_dominant_2x2(self):
        p = damsm_batch_prob(t([[1.0, 0.0], [0.0, 1.0]]), gamma2=5.0)
        expected = math.e**5 / (math.e**5 + 1.0)
        assert float(p[0, 0]) == pytest.approx(expected, abs=1e-4)
        assert float(p[0, 0]) == pytest.approx(0.9933, abs=1e-4)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        s = t(rng.standard_normal((5, 5)))
        p = damsm_batch_prob(s)
        assert np.allclose(p.sum(dim=1).numpy(), 1.0, atol=1e-6)

    def test_row_shift_invariance(self):
        rng = np.random.default_rng(8)
        s = t(rng.standard_normal((4, 4)))
        shifted = s.clone()
        shifted[2] += 3.3
        assert torch.allclose(damsm_batch_prob(s), damsm_batch_prob(shifted), atol=1e-9)


class TestMatchingLoss:
    def test_uniform_scores_closed_form(self):
        s = torch.zeros(4, 4, dtype=torch.float64)
        loss = contrastive_matching_loss(s)
        assert float(loss) == pytest.approx(8.0 * math.log(4.0), abs=1e-9)

    def test_diagonal_limit_goes_to_zero(self):
        s = torch.eye(4, dtype=torch.float64)
        strong = contrastive_matching_loss(s, gamma2=50.0)
        weak = contrastive_matching_loss(s, gamma2=5.0)
        assert float(strong) < float(weak)
        assert float(strong) < 1e-15

    def test_batch_of_one_warns(self):
        with pytest.warns(UserWarning, match="contrast"):
            contrastive_matching_loss(t([[1.0]]))

    def test_full_damsm_runs_on_network_features(self):
        torch.manual_seed(9)
        enc = RegionEncoder(base=8, out_dim=32)
        imgs = torch.randn(3, 3, 64, 64, generator=torch.Generator().manual_seed(10))
        regions, pooled = enc(imgs)
        t_wrd = torch.randn(3, 5, 32, generator=torch.Generator().manual_seed(11))
        t_sent = torch.randn(3, 32, generator=torch.Generator().manual_seed(12))
        lw, ls = damsm_loss(regions, pooled, t_wrd, t_sent, torch.tensor([5, 3, 4]))
        assert torch.isfinite(lw) and torch.isfinite(ls)
        lw2, ls2 = damsm_loss(regions, pooled, t_wrd, t_sent, torch.tensor([5, 3, 4]),
                              include_sentence=False)
        assert float(ls2) == 0.0


class TestTotalLoss:
    def make_terms(self, kl, l1, feat, adv, dw, ds):
        z = lambda v: torch.tensor(float(v), dtype=torch.float64)
        return PathTerms(kl=z(kl), l1=z(l1), feat=z(feat), adv=z(adv), damsm_w=z(dw), damsm_s=z(ds))

    def test_documented_arithmetic(self):
        # kl components 0.1 (aux) + 0.2 (inpaint); image 0.5 + 0.4; text 2 + 3
        inp = self.make_terms(kl=0.2, l1=0.5, feat=0.0, adv=0.0, dw=2.0, ds=0.0)
        aux = self.make_terms(kl=0.1, l1=0.4, feat=0.0, adv=0.0, dw=3.0, ds=0.0)
        out = total_loss(inp, aux, lambda_kl=20.0, lambda_i=20.0, lambda_t=0.1)
        assert float(out.total) == pytest.approx(24.5)

    def test_all_zero(self):
        zero = self.make_terms(0, 0, 0, 0, 0, 0)
        assert float(total_loss(zero, zero).total) == 0.0

    def test_linearity_in_each_component(self):
        rng = np.random.default_rng(13)
        vals = rng.uniform(0.1, 2.0, size=12)
        inp = self.make_terms(*vals[:6])
        aux = self.make_terms(*vals[6:])
        base = float(total_loss(inp, aux).total)
        bumped = self.make_terms(vals[0], vals[1] + 1.0, *vals[2:6])
        assert float(total_loss(bumped, aux).total) == pytest.approx(base + 20.0, rel=1e-9)
        bumped_kl = self.make_terms(vals[0] + 1.0, *vals[1:6])
        assert float(total_loss(bumped_kl, aux).total) == pytest.approx(base + 20.0, rel=1e-9)
        bumped_t = self.make_terms(*vals[:4], vals[4] + 1.0, vals[5])
        assert float(total_loss(bumped_t, aux).total) == pytest.approx(base + 0.1, rel=1e-9)

    def test_breakdown_total_equals_weighted_sum(self):
        rng = np.random.default_rng(14)
        inp = self.make_terms(*rng.uniform(0, 3, 6))
        aux = self.make_terms(*rng.uniform(0, 3, 6))
        out = total_loss(inp, aux, 20.0, 20.0, 0.1)
        manual = (
            20.0 * (float(out.kl_aux) + float(out.kl_inpaint))
            + 20.0 * (float(out.l1) + float(out.feat_match) + float(out.adv_gen)
                      + float(out.l1_aux) + float(out.feat_match_aux) + float(out.adv_gen_aux))
            + 0.1 * (float(out.damsm_word) + float(out.damsm_sent)
                     + float(out.damsm_word_aux) + float(out.damsm_sent_aux))
        )
        assert float(out.total) == pytest.approx(manual, abs=1e-6)

    def test_nan_component_raises_named_error(self):
        from textfill.generator import DivergenceError

        inp = self.make_terms(0, float("nan"), 0, 0, 0, 0)
        aux = self.make_terms(0, 0, 0, 0, 0, 0)
        with pytest.raises(DivergenceError, match="l1"):
            total_loss(inp, aux)


class TestLossGradients:
    def check(self, build, params0, rel_tol=1e-3):
        value, grad_analytic = build(params0, want_grad=True)
        numeric = central_difference(lambda p: build(p, want_grad=False)[0], params0)
        denom = max(np.abs(numeric).max(), 1e-8)
        assert np.abs(grad_analytic - numeric).max() / denom < rel_tol

    def test_kl_standard_gradient(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            p0 = rng.standard_normal(8)

            def build(p, want_grad):
                mu = torch.tensor(p[:4], requires_grad=want_grad)
                lv = torch.tensor(p[4:], requires_grad=want_grad)
                out = kl_to_standard(mu, lv)
                if want_grad:
                    out.backward()
                    return float(out.detach()), np.concatenate([mu.grad, lv.grad])
                return float(out.detach()), None

            self.check(build, p0)

    def test_kl_pair_gradient(self):
        rng = np.random.default_rng(16)
        for _ in range(5):
            p0 = rng.standard_normal(8) * 0.7

            def build(p, want_grad):
                parts = [torch.tensor(p[i : i + 2], requires_grad=want_grad) for i in (0, 2, 4, 6)]
                out = kl_pair(*parts)
                if want_grad:
                    out.backward()
                    return float(out.detach()), np.concatenate([x.grad for x in parts])
                return float(out.detach()), None

            self.check(build, p0)

    def test_word_similarity_gradient(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            regions = rng.standard_normal((4, 5))
            p0 = rng.standard_normal(3 * 5)

            def build(p, want_grad):
                words = torch.tensor(p.reshape(3, 5), requires_grad=want_grad)
                out = word_similarity(torch.tensor(regions), words)
                if want_grad:
                    out.backward()
                    return float(out.detach()), words.grad.numpy().ravel()
                return float(out.detach()), None

            self.check(build, p0)

    def test_matching_loss_gradient(self):
        rng = np.random.default_rng(18)
        for _ in range(5):
            p0 = rng.standard_normal(9)

            def build(p, want_grad):
                s = torch.tensor(p.reshape(3, 3), requires_grad=want_grad)
                out = contrastive_matching_loss(s)
                if want_grad:
                    out.backward()
                    return float(out.detach()), s.grad.numpy().ravel()
                return float(out.detach()), None

            self.check(build, p0)
