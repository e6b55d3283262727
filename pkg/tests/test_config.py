import pytest

from ftcbam.config import HELP, RunConfig, coerce, field_names, load_config, parse_config_text
from ftcbam.errors import ConfigError


def test_every_key_is_documented():
    assert set(field_names()) == set(HELP)


def test_parse_with_comments_and_coercion():
    cfg = parse_config_text("""
        # a comment line
        variant = t          # trailing comment
        batch_size = 8
        arc_margin = 0.35
        train_masking = yes
        stage_blocks = 1,2,1,1
    """)
    assert cfg.variant == "t" and cfg.batch_size == 8 and cfg.arc_margin == 0.35
    assert cfg.train_masking is True and cfg.blocks == (1, 2, 1, 1)


def test_text_round_trip(tmp_path):
    cfg = RunConfig(variant="spatial", epochs=3, log_compress=True)
    (tmp_path / "c.cfg").write_text(cfg.to_text())
    assert load_config(tmp_path / "c.cfg") == cfg


@pytest.mark.parametrize("text", [
    "varient = ft",
    "just words",
    "batch_size = eight",
    "train_masking = maybe",
    "variant = cbam",
    "stage_blocks = 3,x,6,3",
    "crop_frames = 8",
])
def test_rejections(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_updated_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig().updated(learning_rate=0.1)
    assert RunConfig().updated(epochs="7").epochs == 7
    assert coerce("lr0", 1) == 1.0
