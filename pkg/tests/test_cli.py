import json

import pytest

from bokehgan.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from bokehgan.checkpoint import load_checkpoint
from bokehgan.config import dump_config, parse_config, RunConfig
from bokehgan.exceptions import ConfigError

DESK_CFG = """
# tiny desk run
generator.stage1_base_channels = 4
generator.stage1_max_channels = 32
generator.stage2_base_channels = 4
generator.stage2_max_channels = 32
generator.n_resblocks = 1
critic.base_channels = 4
critic.depths = [2, 3]
schedule.stage1_steps = 2
schedule.stage2_steps = 1
schedule.critic_steps_per_gen_step = 1
data.crop_height = 32
data.crop_width = 32
"""


def test_parse_config_types():
    cfg = parse_config(DESK_CFG + "loss.w_adv = 0.5\nperceptual.mode = desk\n")
    assert cfg.generator.stage1_base_channels == 4
    assert cfg.critic.depths == (2, 3)
    assert cfg.loss.w_adv == 0.5 and cfg.loss.w_l1 == 0.5
    assert cfg.perceptual.mode == "desk"
    assert cfg.adam.beta2 == 0.9


def test_config_roundtrip():
    cfg = parse_config(DESK_CFG)
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(RunConfig())) == RunConfig()


@pytest.mark.parametrize("text", [
    "generator.widthz = 3",
    "nogroup.x = 1",
    "generator = 3",
    "generator.stage1_max_channels = 100",
    "perceptual.mode = vgg19",
    "not a line",
])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.fixture
def data_dir(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "data"), "--n", "3", "--size", "32", "48"]) == EXIT_OK
    assert main(["synth", "--out", str(tmp_path / "data"), "--n", "2", "--size", "32", "40",
                 "--split", "test"]) == EXIT_OK
    return tmp_path / "data"


def test_train_infer_eval(tmp_path, data_dir, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(DESK_CFG, encoding="utf-8")
    s1, s2 = tmp_path / "s1.ckpt", tmp_path / "s2.ckpt"
    assert main(["train", "--stage", "1", "--config", str(cfg), "--data", str(data_dir), "--out", str(s1)]) == EXIT_OK
    assert load_checkpoint(s1).meta["step"] == 2
    assert main(["train", "--stage", "2", "--config", str(cfg), "--data", str(data_dir),
                 "--resume", str(s1), "--out", str(s2)]) == EXIT_OK
    meta = load_checkpoint(s2).meta
    assert meta["stage"] == 2 and "d_gp" in meta["history"][0]

    img = data_dir / "test" / "source" / "synth_00000.png"
    assert main(["infer", "--ckpt", str(s2), "--input", str(img), "--output", str(tmp_path / "o.png")]) == EXIT_OK
    report = tmp_path / "report.json"
    assert main(["eval", "--ckpt", str(s2), "--data", str(data_dir), "--report", str(report)]) == EXIT_OK
    doc = json.loads(report.read_text())
    assert doc["aggregate"]["count"] == 2 and len(doc["images"]) == 2
    assert "PSNR" in capsys.readouterr().out


def test_exit_codes(tmp_path, data_dir):
    with pytest.raises(SystemExit) as info:
        main(["train", "--stage", "3"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("generator.nope = 1\n")
    assert main(["train", "--stage", "1", "--config", str(bad), "--data", str(data_dir),
                 "--out", str(tmp_path / "x.ckpt")]) == EXIT_USAGE
    assert main(["infer", "--ckpt", str(tmp_path / "missing.ckpt"), "--input", "a.png",
                 "--output", "b.png"]) == EXIT_RUNTIME
    (tmp_path / "trunc.ckpt").write_bytes(b"bggan-ckpt-1\nmeta {")
    assert main(["eval", "--ckpt", str(tmp_path / "trunc.ckpt"), "--data", str(data_dir),
                 "--report", str(tmp_path / "r.json")]) == EXIT_RUNTIME
    assert main(["train", "--stage", "1", "--data", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "x.ckpt")]) == EXIT_RUNTIME
