import numpy as np
import pytest

from fwl import kernels
from fwl.data import Dataset, SyntheticTaskSpec, generate_synthetic, split_dataset
from fwl.deploy import EpochLedger, feedback_oracle, fwl_epoch, run_fwl
from fwl.estimator import FwlHyperparams
from fwl.mlp import AdamState, PARAM_NAMES, backward_ce, checkpoint_id, forward_batch, init_mlp
from fwl.train import evaluate_model, train_supervised

from conftest import make_dataset


@pytest.fixture(scope="module")
def calibrated():
    """The default synthetic task with S0 trained on a 10% split (seed 0)."""
    spec = SyntheticTaskSpec()
    pool, dev, test = generate_synthetic(spec)
    split = split_dataset(pool, 0.1, 0, dev, test)
    model = init_mlp(spec.dim, 200, spec.num_classes, np.random.default_rng([0, 1]))
    s0 = train_supervised(model, split.train, dev, 100, AdamState.for_model(model), np.random.default_rng([0, 2]))
    return split, s0.model


class TestFeedbackOracle:
    def test_match_and_mismatch(self):
        assert feedback_oracle(7, 7) == 1
        assert feedback_oracle(7, 3) == -1

    def test_single_positive_per_gold(self):
        assert sum(feedback_oracle(y, 4) == 1 for y in range(10)) == 1


class TestFwlEpoch:
    def test_ledger_accounting(self):
        d = make_dataset(70, 4, 5, 0)
        model = init_mlp(4, 6, 5, np.random.default_rng(0))
        hyper = FwlHyperparams(beta=5.0, lam=0.8, k_samples=3)
        ledger = EpochLedger(len(d), 3)
        opt = AdamState.for_model(model)
        rng = np.random.default_rng(1)
        for e in range(1, 3):
            fwl_epoch(model, d, hyper, opt, rng, ledger, batch_size=16)
            assert ledger.feedback_requests == e * 70 * 3
            assert ledger.epochs_completed == e
            assert ledger.positive_feedback_count + ledger.negative_feedback_count == ledger.feedback_requests
        assert ledger.touched_ids == set(d.ids.tolist())
        assert opt.step == 2 * 5

    def test_single_correct_sample_moves_towards_gold(self):
        rng = np.random.default_rng(3)
        model = init_mlp(3, 4, 3, rng)
        model.b2[:] = [0.0, 30.0, 0.0]  # q[1] ~ 1, so with lam=1 the one sample is the gold class
        x = rng.normal(size=3)
        d = Dataset(np.array(["only"], dtype=object), x[None, :], np.array([1]), 3)
        before = model.copy()
        g_ce = backward_ce(before, x, 1)
        ledger = EpochLedger(1, 1)
        fwl_epoch(model, d, FwlHyperparams(beta=2.0, lam=1.0, k_samples=1), AdamState.for_model(model),
                  np.random.default_rng(0), ledger)
        assert ledger.positive_feedback_count == 1
        # Adam's first step is -lr * sign(gradient) wherever the gradient is non-negligible
        for k in PARAM_NAMES:
            delta = getattr(model, k) - getattr(before, k)
            big = np.abs(g_ce[k]) > 1e-10
            np.testing.assert_array_equal(np.sign(delta[big]), -np.sign(g_ce[k][big]))

    def test_deterministic(self):
        d = make_dataset(40, 4, 5, 0)
        hyper = FwlHyperparams(beta=10.0, lam=0.9, k_samples=3)
        ids = []
        for _ in range(2):
            model = init_mlp(4, 6, 5, np.random.default_rng(0))
            fwl_epoch(model, d, hyper, AdamState.for_model(model), np.random.default_rng(9), EpochLedger(40, 3))
            ids.append(checkpoint_id(model))
        assert ids[0] == ids[1]

    def test_empty_deployment(self):
        d = make_dataset(0, 4, 5, 0)
        model = init_mlp(4, 6, 5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            fwl_epoch(model, d, FwlHyperparams(), AdamState.for_model(model), np.random.default_rng(0),
                      EpochLedger(0, 3))

    def test_exploration_floor(self):
        rng = np.random.default_rng(4)
        probs, _ = forward_batch(init_mlp(4, 6, 10, rng), rng.normal(size=(200, 4)) * 10)
        lam = 0.7
        out = kernels.fwl_logit_grad(probs, rng.integers(0, 10, 200), lam, 3.0, rng.random((200, 5)))
        assert out[5].min() >= (1 - lam) / 10 - 1e-15

    def test_improves_dev_after_one_epoch_at_selected_hyperparams(self, calibrated):
        split, s0 = calibrated
        before = evaluate_model(s0, split.dev).f1_micro
        model = s0.copy()
        fwl_epoch(model, split.deployment, FwlHyperparams(beta=76.0, lam=0.97, k_samples=3),
                  AdamState.for_model(model), np.random.default_rng(0), EpochLedger(len(split.deployment), 3))
        assert evaluate_model(model, split.dev).f1_micro > before


class TestRunFwl:
    def _split(self, n_deploy=30):
        data = make_dataset(n_deploy + 10, 4, 3, 0)
        dev = make_dataset(15, 4, 3, 1, "dev")
        return split_dataset(data, 10 / (n_deploy + 10), 0, dev, dev.subset([]))

    def test_fifty_epochs_feedback_count(self):
        split = self._split()
        model = init_mlp(4, 5, 3, np.random.default_rng(0))
        res = run_fwl(model, split, FwlHyperparams(k_samples=3), 50, 1, np.random.default_rng(0))
        n = len(split.deployment)
        assert res.ledger.feedback_requests == 150 * n
        assert len(res.curve) == 50
        assert [r["feedback_requests"] for r in res.curve] == [n * 3 * e for e in range(1, 51)]
        assert res.best_dev_f1 == max(r["dev_f1_micro"] for r in res.curve)
        assert evaluate_model(res.model, split.dev).f1_micro == res.best_dev_f1

    def test_eval_every(self):
        split = self._split()
        model = init_mlp(4, 5, 3, np.random.default_rng(0))
        res = run_fwl(model, split, FwlHyperparams(), 7, 3, np.random.default_rng(0))
        assert [r["epoch"] for r in res.curve] == [3, 6, 7]

    def test_does_not_mutate_s0(self):
        split = self._split()
        model = init_mlp(4, 5, 3, np.random.default_rng(0))
        cid = checkpoint_id(model)
        run_fwl(model, split, FwlHyperparams(), 2, 1, np.random.default_rng(0))
        assert checkpoint_id(model) == cid

    def test_empty_deployment_is_noop(self):
        split = self._split()
        split.deployment = split.deployment.subset([])
        model = init_mlp(4, 5, 3, np.random.default_rng(0))
        res = run_fwl(model, split, FwlHyperparams(), 3, 1, np.random.default_rng(0))
        assert checkpoint_id(res.model) == checkpoint_id(model) and res.curve == []

    def test_bad_epochs(self):
        with pytest.raises(ValueError):
            run_fwl(init_mlp(4, 5, 3, np.random.default_rng(0)), self._split(), FwlHyperparams(), 0, 1,
                    np.random.default_rng(0))


def test_tiny_task_converges_to_supervised():
    """Three classes, many samples per query: FWL reaches supervised fine-tuning within 2 points."""
    spec = SyntheticTaskSpec(num_classes=3, dim=5, per_class=200, dev_per_class=200, test_per_class=10,
                             noise=1.0, seed=77)
    pool, dev, test = generate_synthetic(spec)
    split = split_dataset(pool, 0.05, 0, dev, test)
    model = init_mlp(5, 16, 3, np.random.default_rng(0))
    s0 = train_supervised(model, split.train, dev, 20, AdamState.for_model(model), np.random.default_rng(1)).model

    fwl = run_fwl(s0, split, FwlHyperparams(beta=20.0, lam=0.9, k_samples=12), 20, 1, np.random.default_rng(2))
    ft_model = s0.copy()
    sup = train_supervised(ft_model, split.deployment, dev, 20, AdamState.for_model(ft_model),
                           np.random.default_rng(3))
    assert fwl.best_dev_f1 >= sup.best_dev_f1 - 0.02
