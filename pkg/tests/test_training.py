import math

import numpy as np
import pytest
import torch

from partlayout.latent import GaussianParams
from partlayout.training import (
    AnnealState,
    TrainingDivergenceError,
    advance,
    corpus_tensors,
    cyclic_beta,
    elbo_loss,
    freeze_gate,
    kl_gaussian,
    load_checkpoint,
    preset_config,
    train_stage,
)

from oracles import oracle_kl_mc


class TestKL:
    def test_prior_equals_posterior_is_zero(self):
        g = GaussianParams(torch.zeros(5), torch.zeros(5))
        assert float(kl_gaussian(g)) == 0.0

    def test_unit_mean_single_dim(self):
        g = GaussianParams(torch.tensor([1.0]), torch.tensor([0.0]))
        assert abs(float(kl_gaussian(g)) - 0.5) < 1e-7

    def test_zero_iff_standard_normal(self, rng):
        for _ in range(10):
            mu = torch.tensor(rng.normal(size=3))
            lv = torch.tensor(rng.normal(size=3) * 0.5)
            val = float(kl_gaussian(GaussianParams(mu, lv)))
            if mu.abs().max() > 1e-6 or lv.abs().max() > 1e-6:
                assert val > 0.0

    def test_matches_monte_carlo_oracle(self):
        mu = np.array([0.5, -0.8, 0.1])
        lv = np.array([0.3, -0.4, 0.0])
        closed = float(kl_gaussian(GaussianParams(torch.tensor(mu), torch.tensor(lv))))
        mc = oracle_kl_mc(mu, lv, n=1_000_000, seed=4)
        assert abs(closed - mc) < 0.01


class TestElbo:
    def test_zero_lambda_is_recon(self):
        recon = torch.tensor(1.7, dtype=torch.float64)
        assert float(elbo_loss(recon, torch.tensor(9.0, dtype=torch.float64), 0.0)) == 1.7

    def test_weighted_sum(self):
        assert float(elbo_loss(torch.tensor(0.0), torch.tensor(2.0), 0.5)) == 1.0

    def test_batch_mean_matches_per_sample(self, rng):
        recon = torch.tensor(rng.uniform(0, 2, 16))
        kl = torch.tensor(rng.uniform(0, 5, 16))
        lam = 0.3
        batch = float(elbo_loss(recon, kl, lam).mean())
        per_sample = sum(float(elbo_loss(recon[i], kl[i], lam)) for i in range(16)) / 16
        assert abs(batch - per_sample) < 1e-9


class TestCyclicBeta:
    def test_schedule_endpoints(self):
        assert cyclic_beta(0, 100) == 0.0
        assert cyclic_beta(50, 100) == 1.0
        assert cyclic_beta(75, 100) == 1.0
        assert cyclic_beta(100, 100) == 0.0

    def test_periodicity(self):
        for step in range(0, 250, 7):
            assert cyclic_beta(step, 80, 0.7) == cyclic_beta(step + 80, 80, 0.7)

    def test_scales_with_lambda_max(self):
        assert cyclic_beta(25, 100, lambda_max=0.4) == pytest.approx(0.2)


class TestFreezeGate:
    def test_small_gap_keeps_schedule(self):
        s = AnnealState(step=10, lam=cyclic_beta(10, 40), cycle_length=40)
        out = freeze_gate(1.0, 1.05, s)
        assert not out.frozen and out.lam == s.lam

    def test_large_gap_freezes(self):
        s = AnnealState(step=10, lam=0.5, cycle_length=40)
        out = freeze_gate(1.0, 1.2, s)
        assert out.frozen
        assert advance(out).lam == 0.5  # held

    def test_release_at_threshold(self):
        s = AnnealState(step=10, lam=0.5, cycle_length=40, frozen=True)
        # gap of 0.9 -> 1.0 is <= 0.1 in floats, so the gate releases
        out = freeze_gate(0.9, 1.0, s)
        assert not out.frozen
        assert out.lam == cyclic_beta(10, 40)

    def test_freeze_then_release_sequence(self):
        s = AnnealState(step=4, lam=cyclic_beta(4, 40), cycle_length=40)
        s = freeze_gate(1.0, 1.2, s)
        assert s.frozen
        held = s.lam
        for _ in range(5):
            s = advance(s)
            assert s.lam == held
        s = freeze_gate(1.0, 1.05, s)
        assert not s.frozen and s.lam == cyclic_beta(s.step, 40)

    def test_nonfinite_losses_rejected(self):
        with pytest.raises(ValueError):
            freeze_gate(float("nan"), 1.0, AnnealState())


class TestPresets:
    def test_stage_presets_pinned(self):
        from partlayout.training import PRESETS

        assert PRESETS["boxvae"] == (1e-4, 300, 32, "adam")
        assert PRESETS["labelmapvae"] == (1e-3, 110, 8, "adam")
        assert PRESETS["bmvae"] == (1e-3, 110, 8, "adam")
        assert PRESETS["bslstm"] == (1e-5, 300, 32, "adam")
        assert PRESETS["cggan"] == (1e-2, 110, 8, "adagrad")

    def test_default_latent_dim_is_128(self):
        from partlayout.boxvae import BoxVAE
        from partlayout.labelmapvae import LabelMapVAE

        assert BoxVAE(4, 2).latent_dim == 128
        assert LabelMapVAE(4, 2, conv_width=2).latent_dim == 128


SMALL = dict(gcn_widths=(8, 16), skip_dim=4, enc_hidden=32, dec_hidden=64, latent_dim=16)


class TestTrainStage:
    def test_boxvae_smoke_writes_checkpoint_and_log(self, small_corpus, tmp_path):
        cfg = preset_config("boxvae", epochs=1, batch_size=8, out_dir=tmp_path,
                            model_kwargs=SMALL)
        result = train_stage(small_corpus, "boxvae", cfg)
        assert len(result.metrics) == 1
        assert result.best_path.exists() and result.last_path.exists()
        assert (tmp_path / "metrics_boxvae.jsonl").exists()
        record = result.metrics[0]
        assert set(record) >= {"epoch", "train_recon", "val_recon", "kl", "lambda", "frozen"}

    def test_seed_determinism(self, small_corpus, tmp_path):
        cfg1 = preset_config("boxvae", epochs=2, batch_size=8, seed=3,
                             out_dir=tmp_path / "a", model_kwargs=SMALL)
        cfg2 = preset_config("boxvae", epochs=2, batch_size=8, seed=3,
                             out_dir=tmp_path / "b", model_kwargs=SMALL)
        r1 = train_stage(small_corpus, "boxvae", cfg1)
        r2 = train_stage(small_corpus, "boxvae", cfg2)
        assert r1.metrics == r2.metrics

    def test_loss_decreases_over_training(self, small_corpus, tmp_path):
        cfg = preset_config("boxvae", epochs=30, batch_size=8, learning_rate=3e-3,
                            out_dir=tmp_path, model_kwargs=SMALL)
        result = train_stage(small_corpus, "boxvae", cfg)
        assert result.metrics[-1]["train_recon"] < result.metrics[0]["train_recon"]

    def test_labelmapvae_smoke(self, small_corpus, tmp_path):
        cfg = preset_config("labelmapvae", epochs=1, batch_size=4, out_dir=tmp_path,
                            model_kwargs=dict(conv_width=2, latent_dim=16))
        result = train_stage(small_corpus, "labelmapvae", cfg)
        assert math.isfinite(result.metrics[0]["train_recon"])

    def test_checkpoint_round_trip(self, small_corpus, tmp_path):
        cfg = preset_config("boxvae", epochs=1, batch_size=8, out_dir=tmp_path,
                            model_kwargs=SMALL)
        result = train_stage(small_corpus, "boxvae", cfg)
        model, sidecar = load_checkpoint(result.last_path, small_corpus.schemas)
        assert sidecar["stage"] == "boxvae"
        assert sidecar["schema_hash"] == small_corpus.schemas.hash()
        tensors = corpus_tensors(small_corpus, "val")
        out = model.decode(torch.zeros(1, model.latent_dim),
                           tensors.category[:1], tensors.presence[:1])
        assert out.boxes_hat.shape == (1, 6, 4)

    def test_schema_mismatch_rejected(self, small_corpus, tmp_path):
        from partlayout.data import default_synth_config

        cfg = preset_config("boxvae", epochs=1, batch_size=8, out_dir=tmp_path,
                            model_kwargs=SMALL)
        result = train_stage(small_corpus, "boxvae", cfg)
        import dataclasses

        other = default_synth_config(3)
        other = dataclasses.replace(
            other,
            categories=(other.categories[0],
                        dataclasses.replace(other.categories[1], name="rocket")),
        )
        with pytest.raises(ValueError):
            load_checkpoint(result.last_path, other.schema_set())

    def test_divergence_aborts_with_dump(self, small_corpus, tmp_path):
        cfg = preset_config("boxvae", epochs=1, batch_size=8, learning_rate=1e9,
                            out_dir=tmp_path, model_kwargs=SMALL)
        with pytest.raises(TrainingDivergenceError):
            train_stage(small_corpus, "boxvae", cfg)
        assert list(tmp_path.glob("divergence_*.pt"))
