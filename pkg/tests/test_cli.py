import numpy as np
import pytest
from click.testing import CliRunner
from hypothesis import given, settings
from hypothesis import strategies as st

from transdeeplab.cli import RunConfig, main
from transdeeplab.config import ConfigError, tiny_config
from transdeeplab.tdl import load_tensor


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic dataset and a tiny run config pointing at it."""
    root = tmp_path_factory.mktemp("cli")
    result = CliRunner().invoke(main, ["synth", "--n", "4", "--height", "32", "--width", "32",
                                       "--classes", "2", "--seed", "0", "--out", str(root / "data")])
    assert result.exit_code == 0, result.output
    cfg = RunConfig(model=tiny_config(), dataset_root=str(root / "data"), out_dir=str(root / "run"),
                    steps=10, batch_size=2)
    (root / "tiny.cfg").write_text(cfg.to_text())
    return root


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


@pytest.fixture(scope="module")
def trained(workspace):
    result = run("train", "--config", workspace / "tiny.cfg")
    assert result.exit_code == 0, result.output
    return workspace / "run"


def test_train_writes_log_and_checkpoints(trained):
    lines = (trained / "loss_log.csv").read_text().splitlines()
    assert lines[0] == "step,lr,dice_loss,ce_loss,total"
    assert len(lines) == 1 + 10
    assert [int(line.split(",")[0]) for line in lines[1:]] == list(range(1, 11))
    assert (trained / "checkpoint.tdlc").exists()
    assert RunConfig.from_text((trained / "run.cfg").read_text()).steps == 10


def test_train_rerun_is_byte_identical(workspace, trained):
    first_log = (trained / "loss_log.csv").read_bytes()
    first_ckpt = (trained / "checkpoint.tdlc").read_bytes()
    out = workspace / "rerun"
    assert run("train", "--config", workspace / "tiny.cfg", "--out", out).exit_code == 0
    assert (out / "loss_log.csv").read_bytes() == first_log
    assert (out / "checkpoint.tdlc").read_bytes() == first_ckpt


def test_train_flags_override(workspace):
    out = workspace / "short"
    result = run("train", "--config", workspace / "tiny.cfg", "--steps", "3", "--seed", "7",
                 "--precision", "f64", "--out", out)
    assert result.exit_code == 0, result.output
    assert len((out / "loss_log.csv").read_text().splitlines()) == 4
    assert "seed = 7" in (out / "run.cfg").read_text()


def test_checkpoint_interval(workspace):
    cfg = RunConfig.from_text((workspace / "tiny.cfg").read_text())
    path = workspace / "interval.cfg"
    path.write_text(RunConfig(**{**cfg.__dict__, "steps": 4, "checkpoint_interval": 2,
                                 "out_dir": str(workspace / "interval")}).to_text())
    assert run("train", "--config", path).exit_code == 0
    names = sorted(p.name for p in (workspace / "interval").glob("checkpoint_step*.tdlc"))
    assert names == ["checkpoint_step000002.tdlc", "checkpoint_step000004.tdlc"]


def test_train_missing_masks_exit_3(workspace, tmp_path):
    (tmp_path / "images").mkdir()
    result = run("train", "--config", workspace / "tiny.cfg", "--data", tmp_path, "--out", tmp_path / "o")
    assert result.exit_code == 3
    assert str(tmp_path / "masks") in result.output


def test_train_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("seed = 0\n# comment\nembed_dim = eight\n")
    result = run("train", "--config", bad)
    assert result.exit_code == 2
    assert "line 3" in result.output and "embed_dim" in result.output
    bad.write_text("img_size = 32\n")
    result = run("train", "--config", bad)
    assert result.exit_code == 2 and "seed" in result.output
    result = run("train", "--config", tmp_path / "nope.cfg")
    assert result.exit_code == 2


def test_train_class_mismatch_exit_4(workspace, tmp_path):
    assert run("synth", "--n", "2", "--height", "32", "--width", "32", "--classes", "3",
               "--seed", "0", "--out", tmp_path / "k3").exit_code == 0
    result = run("train", "--config", workspace / "tiny.cfg", "--data", tmp_path / "k3", "--out", tmp_path / "o")
    assert result.exit_code == 4


def test_eval_table(trained, workspace, tmp_path):
    out = tmp_path / "metrics.csv"
    result = run("eval", "--checkpoint", trained / "checkpoint.tdlc", "--data", workspace / "data", "--out", out)
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == "class,dice,hausdorff,sensitivity,specificity,accuracy"
    assert len(lines) - 1 == 2 + 1 and lines[-1].startswith("mean,")
    assert result.output == out.read_text()
    assert run("eval", "--checkpoint", trained / "checkpoint.tdlc", "--data", workspace / "data",
               "--hd95").exit_code == 0


def test_eval_corrupt_checkpoint_exit_5(trained, workspace, tmp_path):
    raw = bytearray((trained / "checkpoint.tdlc").read_bytes())
    raw[1] ^= 0xFF
    bad = tmp_path / "bad.tdlc"
    bad.write_bytes(bytes(raw))
    result = run("eval", "--checkpoint", bad, "--data", workspace / "data")
    assert result.exit_code == 5 and "corrupt" in result.output
    bad.write_bytes(bytes(raw[:50]))
    assert run("eval", "--checkpoint", bad, "--data", workspace / "data").exit_code == 5


def test_eval_mismatch_exit_4(trained, tmp_path):
    assert run("synth", "--n", "2", "--height", "32", "--width", "32", "--classes", "4",
               "--seed", "0", "--out", tmp_path / "k4").exit_code == 0
    assert run("eval", "--checkpoint", trained / "checkpoint.tdlc", "--data", tmp_path / "k4").exit_code == 4


def test_eval_missing_dataset_exit_3(trained, tmp_path):
    assert run("eval", "--checkpoint", trained / "checkpoint.tdlc", "--data", tmp_path / "none").exit_code == 3


def test_predict_extents(trained, workspace, tmp_path):
    out = tmp_path / "pred.tdl"
    result = run("predict", "--checkpoint", trained / "checkpoint.tdlc",
                 "--image", workspace / "data" / "images" / "00000.tdl", "--out", out)
    assert result.exit_code == 0, result.output
    labels = load_tensor(out)
    assert labels.shape == (32, 32)
    assert set(np.unique(labels)) <= {0.0, 1.0}


def test_count_params(workspace):
    result = run("count-params")
    assert result.exit_code == 0
    assert "total" in result.output and "20,715,250" in result.output
    result = run("count-params", "--config", workspace / "tiny.cfg")
    assert "26,987" in result.output and "sspp.branch1" in result.output


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--n", "3", "--height", "16", "--width", "16", "--classes", "3",
                   "--seed", "5", "--out", tmp_path / name).exit_code == 0
    for sub in ("images/00002.tdl", "masks/00002.tdl"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()
    assert run("synth", "--n", "3", "--height", "16", "--width", "16", "--classes", "1",
               "--seed", "5", "--out", tmp_path / "c").exit_code == 3


def test_verify_single_suite():
    result = run("verify", "--suite", "metrics")
    assert result.exit_code == 0
    assert "metrics/dice_vs_naive" in result.output and "gradcheck" not in result.output


def test_verify_mask_suite():
    result = run("verify", "--suite", "mask")
    assert result.exit_code == 0 and result.output.count("[PASS]") == 18


def test_verify_injected_fault_fails():
    result = run("verify", "--suite", "gradcheck", "--inject-fault")
    assert result.exit_code == 1
    assert "[FAIL] gradcheck/gelu" in result.output and "FAILED suites: gradcheck" in result.output


def test_inject_fault_is_hidden():
    assert "inject" not in run("verify", "--help").output


# -- RunConfig text format --

def test_run_config_roundtrip_defaults():
    cfg = RunConfig(model=tiny_config())
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_run_config_rejects_bad_precision():
    with pytest.raises(ConfigError):
        RunConfig.from_text("seed = 0\nprecision = f16\n")


def test_run_config_comments_and_duplicates():
    cfg = RunConfig.from_text("# header\nseed = 3   # trailing\n\nsteps = 7\n")
    assert cfg.seed == 3 and cfg.steps == 7
    with pytest.raises(ConfigError) as info:
        RunConfig.from_text("seed = 0\nsteps = 1\nsteps = 2\n")
    assert info.value.line == 3 and info.value.key == "steps"


@settings(max_examples=200, deadline=None)
@given(
    level=st.integers(1, 4),
    fusion=st.sampled_from(["cross_attention", "basic"]),
    seed=st.integers(0, 2**31),
    steps=st.integers(0, 10_000),
    lr=st.floats(1e-6, 1.0, allow_nan=False),
    wd=st.floats(0.0, 1e-2, allow_nan=False),
    augment=st.booleans(),
    precision=st.sampled_from(["f32", "f64"]),
    root=st.one_of(st.none(), st.text(st.characters(whitelist_categories=("L", "N"), whitelist_characters="/_-."),
                                      min_size=1, max_size=20).filter(lambda s: s.lower() != "none")),
)
def test_run_config_roundtrip_property(level, fusion, seed, steps, lr, wd, augment, precision, root):
    cfg = RunConfig(model=tiny_config(sspp_level=level, fusion=fusion, seed=seed), steps=steps, base_lr=lr,
                    weight_decay=wd, augment=augment, precision=precision, dataset_root=root)
    text = cfg.to_text()
    again = RunConfig.from_text(text)
    assert again == cfg
    assert again.to_text() == text
