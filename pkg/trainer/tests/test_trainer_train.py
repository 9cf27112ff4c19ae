import pytest
import torch

from reranker_trainer.model import HashedCrossEncoder, parse_base_model
from reranker_trainer.train import TrainerConfig, TrainingArtifact, mean_positive_rank, train

from synthetic_data import separable_examples


class TestConfig:
    def test_defaults(self):
        cfg = TrainerConfig()
        assert cfg.n_neg == 8
        assert cfg.batch_size == 128
        assert cfg.epochs == 3
        assert cfg.learning_rate == 2e-7
        assert parse_base_model(cfg.base_model) == 1024

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainerConfig(n_neg=0)
        with pytest.raises(ValueError):
            TrainerConfig(learning_rate=0.0)


class TestBaseModel:
    def test_fresh_model_is_neutral(self):
        model = HashedCrossEncoder()
        scores = model.score("any query", ["a", "b", "c"])
        assert scores == [0.5, 0.5, 0.5]

    def test_save_load_round_trip(self, tmp_path):
        model = HashedCrossEncoder(n_features=128)
        with torch.no_grad():
            model.linear.weight += 0.25
        path = str(tmp_path / "m.pt")
        model.save(path)
        loaded = HashedCrossEncoder.load(path)
        query, passages = "alpha beta", ["alpha gamma", "delta"]
        assert loaded.score(query, passages) == model.score(query, passages)


class TestTraining:
    def test_zero_epochs_is_noop(self):
        examples = separable_examples(8)
        artifact = train(TrainerConfig(epochs=0), examples)
        assert artifact.loss_curve == []
        probe = ["key0 metric value 1 2 3", "unrelated"]
        assert artifact.model.score("what is key0 metric value", probe) == [0.5, 0.5]

    def test_loss_decreases_and_rank_improves(self):
        torch.manual_seed(0)
        training = separable_examples(48, n_neg=4)
        held_out = separable_examples(16, n_neg=4, offset=1000)
        config = TrainerConfig(batch_size=8, epochs=3, learning_rate=0.05)
        artifact = train(config, training)
        l1, l2, l3 = artifact.loss_curve
        assert l1 > l2 > l3
        base = HashedCrossEncoder()
        assert mean_positive_rank(artifact.model, held_out) < mean_positive_rank(
            base, held_out
        )

    def test_checkpoints_written_and_resumable(self, tmp_path):
        examples = separable_examples(8)
        config = TrainerConfig(batch_size=8, epochs=2, learning_rate=0.05)
        artifact = train(config, examples, out_dir=str(tmp_path))
        assert len(artifact.checkpoint_paths) == 2
        resumed = train(
            TrainerConfig(batch_size=8, epochs=0),
            examples,
            resume_from=artifact.checkpoint_paths[-1],
        )
        probe = ["key0 metric value 1 2 3"]
        assert resumed.model.score("what is key0 metric value", probe) == \
            artifact.model.score("what is key0 metric value", probe)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train(TrainerConfig(), [])

    def test_artifact_fields(self):
        artifact = train(
            TrainerConfig(batch_size=8, epochs=1, learning_rate=0.01),
            separable_examples(4),
        )
        assert isinstance(artifact, TrainingArtifact)
        assert len(artifact.loss_curve) == 1
        assert artifact.loss_curve[0] > 0
