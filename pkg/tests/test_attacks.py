import math

import pytest
import torch

from multirobust.attacks import (
    AttackSpec,
    PerturbationSet,
    SaltPepperSpec,
    default_epsilon,
    make_attack,
    pgd_attack,
    salt_pepper_attack,
)
from multirobust.geometry import NormBall, NumericError, ball_norm
from multirobust.losses import cls_loss
from multirobust.models import make_classifier, params_hash


def linear_model(weight, bias=None):
    model = make_classifier("linear", (1, 1, weight.shape[1]), weight.shape[0], seed=0)
    with torch.no_grad():
        model.fc.weight.copy_(weight)
        model.fc.bias.copy_(bias if bias is not None else torch.zeros(weight.shape[0]))
    return model


class TestAttackSpec:
    def test_validation(self):
        ball = NormBall("linf", 0.1)
        with pytest.raises(ValueError):
            AttackSpec("pgd-linf", ball, steps=0, step_size=0.01)
        with pytest.raises(ValueError):
            AttackSpec("pgd-linf", ball, steps=1, step_size=0.0)
        with pytest.raises(ValueError):
            AttackSpec("pgd-linf", ball, steps=1, step_size=0.25)

    def test_registry_names(self):
        for name in ("pgd-linf", "pgd-l1", "pgd-l2"):
            spec = make_attack(name, input_dim=3072)
            assert spec.name == name
        assert isinstance(make_attack("salt-pepper", 3072), SaltPepperSpec)
        with pytest.raises(ValueError):
            make_attack("autoattack", 3072)

    def test_reference_budgets_at_reference_dim(self):
        assert default_epsilon("linf", 3072) == pytest.approx(8 / 255)
        assert default_epsilon("l1", 3072) == pytest.approx(2000 / 255)
        assert default_epsilon("l2", 3072) == pytest.approx(128 / 255)

    def test_budget_scaling(self):
        assert default_epsilon("l1", 3072 // 4) == pytest.approx(2000 / 255 / 4)
        assert default_epsilon("l2", 3072 // 4) == pytest.approx(128 / 255 / 2)
        assert default_epsilon("linf", 3072 // 4) == pytest.approx(8 / 255)

    def test_step_size_tracks_budget(self):
        spec = make_attack("pgd-l2", 3072 // 4)
        assert spec.step_size == pytest.approx(0.1 / 2)

    def test_eval_steps(self):
        assert make_attack("pgd-l1", 3072).steps == 20
        assert make_attack("pgd-l1", 3072, for_eval=True).steps == 100


class TestPerturbationSet:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            PerturbationSet([])

    def test_singleton_always_returned(self):
        spec = make_attack("pgd-linf", 64)
        pset = PerturbationSet([spec], seed=0)
        assert all(pset.sample() is spec for _ in range(20))

    def test_uniform_frequencies(self):
        specs = [make_attack(n, 64) for n in ("pgd-linf", "pgd-l1", "pgd-l2")]
        pset = PerturbationSet(specs, seed=123)
        counts = {s.name: 0 for s in specs}
        draws = 30000
        for _ in range(draws):
            counts[pset.sample().name] += 1
        for c in counts.values():
            assert abs(c / draws - 1 / 3) < 0.01

    def test_seeded_determinism(self):
        specs = [make_attack(n, 64) for n in ("pgd-linf", "pgd-l1", "pgd-l2")]
        a = PerturbationSet(specs, seed=7)
        b = PerturbationSet(specs, seed=7)
        assert [a.sample().name for _ in range(50)] == [b.sample().name for _ in range(50)]


class TestPgdAttack:
    def test_epsilon_zero_identity(self):
        model = make_classifier("small_cnn", (1, 8, 8), 3, seed=0)
        x = torch.rand(4, 1, 8, 8)
        spec = AttackSpec("pgd-linf", NormBall("linf", 0.0), steps=3, step_size=0.01)
        out = pgd_attack(model, x, torch.zeros(4, dtype=torch.long), spec,
                         generator=torch.Generator().manual_seed(0))
        assert torch.equal(out, x)

    def test_fgsm_closed_form(self):
        # one step with alpha >= eps reduces to clamp(x + eps * sign(grad))
        w = torch.tensor([[1.0, -2.0], [-1.0, 2.0]])
        model = linear_model(w)
        x = torch.tensor([[[[0.5, 0.5]]]])
        y = torch.tensor([0])
        eps = 0.1
        spec = AttackSpec("pgd-linf", NormBall("linf", eps), steps=1,
                          step_size=1.5 * eps, random_init=False)
        out = pgd_attack(model, x, y, spec)
        xg = x.clone().requires_grad_(True)
        cls_loss(model(xg), y).backward()
        expected = (x + eps * xg.grad.sign()).clamp(0, 1)
        assert torch.allclose(out, expected, atol=1e-7)

    def test_grid_search_oracle_2d(self):
        # exhaustive 41x41 grid over the linf ball around a 2-pixel input
        w = torch.tensor([[2.0, -1.0], [-0.5, 1.5]])
        model = linear_model(w, torch.tensor([0.1, -0.2]))
        x = torch.tensor([[[[0.4, 0.6]]]])
        y = torch.tensor([1])
        eps = 0.1
        spec = AttackSpec("pgd-linf", NormBall("linf", eps), steps=10,
                          step_size=0.025, random_init=False)
        out = pgd_attack(model, x, y, spec)
        adv_loss = cls_loss(model(out).double(), y).item()
        best = -float("inf")
        for a in torch.linspace(-eps, eps, 41):
            for b in torch.linspace(-eps, eps, 41):
                cand = (x + torch.tensor([[[[a, b]]]])).clamp(0, 1)
                best = max(best, cls_loss(model(cand).double(), y).item())
        assert adv_loss >= best - 1e-7

    @pytest.mark.parametrize("name", ["pgd-linf", "pgd-l1", "pgd-l2"])
    def test_ball_membership_and_clamp(self, name):
        model = make_classifier("small_cnn", (1, 8, 8), 3, seed=1)
        x = torch.rand(6, 1, 8, 8, generator=torch.Generator().manual_seed(2))
        y = torch.tensor([0, 1, 2, 0, 1, 2])
        spec = make_attack(name, input_dim=64)
        out = pgd_attack(model, x, y, spec, generator=torch.Generator().manual_seed(3))
        assert (ball_norm(x, out, spec.ball.p) <= spec.ball.epsilon + 1e-6).all()
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_monotone_loss_linf_convex(self):
        w = torch.tensor([[1.0, 0.5, -0.3], [-1.0, 0.2, 0.8]])
        model = linear_model(w)
        x = torch.rand(3, 1, 1, 3, generator=torch.Generator().manual_seed(4))
        y = torch.tensor([0, 1, 0])
        losses = []
        for k in range(1, 6):
            spec = AttackSpec("pgd-linf", NormBall("linf", 0.2), steps=k,
                              step_size=0.03, random_init=False)
            out = pgd_attack(model, x, y, spec)
            losses.append(cls_loss(model(out), y).item())
        assert all(b >= a - 1e-9 for a, b in zip(losses, losses[1:]))

    def test_model_parameters_untouched(self):
        model = make_classifier("small_cnn", (1, 8, 8), 3, seed=5)
        before = params_hash(model)
        x = torch.rand(2, 1, 8, 8)
        pgd_attack(model, x, torch.tensor([0, 1]), make_attack("pgd-linf", 64),
                   generator=torch.Generator().manual_seed(0))
        assert params_hash(model) == before

    def test_seeded_determinism(self):
        model = make_classifier("small_cnn", (1, 8, 8), 3, seed=6)
        x = torch.rand(2, 1, 8, 8, generator=torch.Generator().manual_seed(7))
        y = torch.tensor([0, 1])
        spec = make_attack("pgd-l2", 64)
        a = pgd_attack(model, x, y, spec, generator=torch.Generator().manual_seed(11))
        b = pgd_attack(model, x, y, spec, generator=torch.Generator().manual_seed(11))
        assert torch.equal(a, b)

    def test_non_finite_loss_names_step(self):
        w = torch.tensor([[float("nan"), 1.0], [0.0, 1.0]])
        model = linear_model(w)
        x = torch.tensor([[[[0.5, 0.5]]]])
        spec = AttackSpec("pgd-linf", NormBall("linf", 0.1), steps=2,
                          step_size=0.01, random_init=False)
        with pytest.raises(NumericError, match="step 0"):
            pgd_attack(model, x, torch.tensor([1]), spec)


class TestSaltPepper:
    def test_zero_trials_identity(self):
        model = make_classifier("linear", (1, 2, 2), 2, seed=0)
        x = torch.rand(3, 1, 2, 2)
        spec = SaltPepperSpec("salt-pepper", max_fraction=0.5, trials=0)
        out = salt_pepper_attack(model, x, torch.tensor([0, 1, 0]), spec,
                                 torch.Generator().manual_seed(0))
        assert torch.equal(out, x)

    def test_constant_model_unchanged(self):
        model = linear_model(torch.zeros(2, 4), torch.tensor([1.0, 0.0]))
        x = torch.rand(4, 1, 1, 4)
        y = torch.tensor([0, 0, 1, 1])
        spec = SaltPepperSpec("salt-pepper", max_fraction=1.0, trials=5)
        out = salt_pepper_attack(model, x, y, spec, torch.Generator().manual_seed(1))
        assert torch.equal(out, x)

    def test_dominant_pixel_flips_prediction(self):
        # class 1 wins once pixel 0 saturates to 1
        w = torch.tensor([[-10.0, 0.0, 0.0, 0.0], [10.0, 0.0, 0.0, 0.0]])
        model = linear_model(w, torch.tensor([5.0, -5.0]))
        x = torch.full((1, 1, 1, 4), 0.2)
        y = torch.tensor([0])
        assert model(x).argmax(1).item() == 0
        spec = SaltPepperSpec("salt-pepper", max_fraction=1.0, trials=10)
        out = salt_pepper_attack(model, x, y, spec, torch.Generator().manual_seed(3))
        assert model(out).argmax(1).item() == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            SaltPepperSpec("salt-pepper", max_fraction=0.0, trials=5)
        with pytest.raises(ValueError):
            SaltPepperSpec("salt-pepper", max_fraction=1.2, trials=5)
