import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from multirobust.losses import LN3, ac_loss, cls_loss, total_loss
from multirobust.oracles import fd_gradient, relative_error


def kl_reference(p, m):
    """Per-term KL sum in float64, independent of the production path."""
    total = 0.0
    for pi, mi in zip(p, m):
        pi = max(pi, 1e-12)
        mi = max(mi, 1e-12)
        total += pi * (math.log(pi) - math.log(mi))
    return total


def jsd_reference(rows):
    m = [sum(col) / 3.0 for col in zip(*rows)]
    return sum(kl_reference(r, m) for r in rows) / 3.0


class TestClsLoss:
    def test_one_hot_correct_is_zero(self):
        logits = torch.tensor([[30.0, 0.0, 0.0]])
        assert cls_loss(logits, torch.tensor([0])).item() == pytest.approx(0.0, abs=1e-9)

    def test_uniform_posterior_is_log_c(self):
        logits = torch.zeros(4, 7)
        labels = torch.arange(4) % 7
        assert cls_loss(logits, labels).item() == pytest.approx(math.log(7.0), abs=1e-6)

    def test_log_sum_exp_value(self):
        # direct high-precision evaluation: L = log(e^2 + e^1 + e^0) - 2
        logits = torch.tensor([[2.0, 1.0, 0.0]], dtype=torch.float64)
        expected = math.log(math.exp(2) + math.exp(1) + 1.0) - 2.0
        assert cls_loss(logits, torch.tensor([0])).item() == pytest.approx(expected, abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cls_loss(torch.zeros(1, 3), torch.tensor([3]))

    def test_gradient_matches_finite_differences(self):
        g = torch.Generator().manual_seed(0)
        logits0 = torch.randn(2, 4, generator=g, dtype=torch.float64)
        labels = torch.tensor([1, 3])

        def f(flat):
            return float(cls_loss(flat.reshape(2, 4), labels))

        logits = logits0.clone().requires_grad_(True)
        cls_loss(logits, labels).backward()
        fd = fd_gradient(f, logits0.reshape(-1), h=1e-5)
        assert relative_error(fd, logits.grad.reshape(-1)) <= 1e-4


class TestAcLoss:
    def test_identical_rows_zero(self):
        p = torch.tensor([[0.2, 0.3, 0.5]])
        assert ac_loss(p, p.clone(), p.clone()).item() == pytest.approx(0.0, abs=1e-9)

    def test_disjoint_one_hot_maximum(self):
        a = torch.tensor([[1.0, 0.0, 0.0]])
        b = torch.tensor([[0.0, 1.0, 0.0]])
        c = torch.tensor([[0.0, 0.0, 1.0]])
        assert ac_loss(a, b, c).item() == pytest.approx(LN3, abs=1e-6)

    def test_reference_value(self):
        rows = [(0.7, 0.3), (0.5, 0.5), (0.6, 0.4)]
        expected = jsd_reference(rows)
        got = ac_loss(
            torch.tensor([rows[0]], dtype=torch.float64),
            torch.tensor([rows[1]], dtype=torch.float64),
            torch.tensor([rows[2]], dtype=torch.float64),
        )
        assert got.item() == pytest.approx(expected, abs=1e-12)
        # frozen constant from the reference evaluation
        assert got.item() == pytest.approx(0.014003950467891296, abs=1e-12)

    def test_permutation_symmetry(self):
        g = torch.Generator().manual_seed(1)
        rows = [
            torch.softmax(torch.randn(5, 4, generator=g, dtype=torch.float64), dim=1)
            for _ in range(3)
        ]
        values = [
            ac_loss(*[rows[i] for i in perm]).item()
            for perm in itertools.permutations(range(3))
        ]
        assert max(values) - min(values) < 1e-12

    @given(st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=200, deadline=None)
    def test_bounds_on_random_simplex_rows(self, seed):
        rng = np.random.default_rng(seed)
        rows = rng.dirichlet(np.ones(6), size=(3, 4)).astype(np.float64)
        value = ac_loss(*(torch.from_numpy(r) for r in rows)).item()
        assert -1e-12 <= value <= LN3 + 1e-9

    def test_zero_iff_equal(self):
        g = torch.Generator().manual_seed(2)
        p = torch.softmax(torch.randn(3, 5, generator=g), dim=1)
        q = torch.softmax(torch.randn(3, 5, generator=g), dim=1)
        assert ac_loss(p, p.clone(), q).item() > 1e-4

    def test_one_hot_rows_no_nan(self):
        a = torch.tensor([[1.0, 0.0]])
        out = ac_loss(a, a.clone(), a.clone())
        assert torch.isfinite(out)

    def test_invalid_rows_rejected(self):
        good = torch.tensor([[0.5, 0.5]])
        with pytest.raises(ValueError):
            ac_loss(torch.tensor([[0.9, 0.3]]), good, good)
        with pytest.raises(ValueError):
            ac_loss(torch.tensor([[-0.1, 1.1]]), good, good)

    def test_gradient_matches_finite_differences(self):
        g = torch.Generator().manual_seed(3)
        raw = torch.randn(3, 2, 4, generator=g, dtype=torch.float64)

        def f(flat):
            z = flat.reshape(3, 2, 4)
            ps = [torch.softmax(z[i], dim=1) for i in range(3)]
            return float(ac_loss(*ps))

        z = raw.clone().requires_grad_(True)
        ac_loss(*[torch.softmax(z[i], dim=1) for i in range(3)]).backward()
        fd = fd_gradient(f, raw.reshape(-1), h=1e-5)
        assert relative_error(fd, z.grad.reshape(-1)) <= 1e-4


class TestTotalLoss:
    def test_beta_zero_is_cls(self):
        assert total_loss(torch.tensor(1.7), torch.tensor(0.4), 0.0).item() == pytest.approx(1.7)

    def test_ac_zero_keeps_cls_at_paper_beta(self):
        assert total_loss(torch.tensor(0.9), torch.tensor(0.0), 12.0).item() == pytest.approx(0.9)

    def test_arithmetic(self):
        assert total_loss(torch.tensor(1.0), torch.tensor(0.5), 2.0).item() == pytest.approx(2.0)

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            total_loss(torch.tensor(1.0), torch.tensor(0.5), -1.0)
