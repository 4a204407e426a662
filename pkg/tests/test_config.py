import pytest

from qtgen.config import FIRST_TOKEN_MODES, ConfigError, RunConfig


class TestRunConfig:
    def test_text_round_trip(self):
        cfg = RunConfig(hidden_dim=16, lr=0.003, replace_bos=False, mode="plain_bos")
        back = RunConfig.from_text(cfg.to_text())
        assert back == cfg
        assert back.fingerprint() == cfg.fingerprint()

    def test_file_round_trip_with_override(self, tmp_path):
        RunConfig(epochs=3).save(tmp_path / "c.txt")
        cfg = RunConfig.load(tmp_path / "c.txt", epochs="7", seed=None)
        assert cfg.epochs == 7 and cfg.seed == RunConfig().seed

    def test_comments_and_blank_lines(self):
        cfg = RunConfig.from_text("# header\n\nhidden_dim = 10  # even\nlowercase = no\n")
        assert cfg.hidden_dim == 10 and cfg.lowercase is False

    @pytest.mark.parametrize("text, match", [
        ("bogus = 1", "unknown config key"),
        ("hidden_dim = ten", "cannot parse"),
        ("lowercase = maybe", "cannot parse"),
        ("hidden_dim 10", "line 1"),
        ("hidden_dim = 7", "even"),
        ("mode = sampled", "mode"),
        ("optimizer = rmsprop", "optimizer"),
        ("batch_size = 0", "positive"),
        ("lr = -1", "nonnegative"),
        ("vocab_size = 4", "special"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            RunConfig.from_text(text)

    def test_zero_lr_allowed(self):
        assert RunConfig(lr=0.0).lr == 0.0

    def test_fingerprint_tracks_values(self):
        assert RunConfig().fingerprint() != RunConfig(seed=2).fingerprint()

    def test_training_first_token(self):
        assert RunConfig().training_first_token == "gold_type"
        assert RunConfig(oracle_first_word=True).training_first_token == "gold_first_word"
        assert RunConfig(replace_bos=False).training_first_token == "plain_bos"

    def test_modes_and_paper_scale(self):
        assert FIRST_TOKEN_MODES == ("predicted", "gold_type", "gold_first_word", "plain_bos")
        big = RunConfig.paper_scale()
        assert (big.word_dim, big.feat_dim, big.hidden_dim, big.beam_size) == (300, 32, 512, 12)
