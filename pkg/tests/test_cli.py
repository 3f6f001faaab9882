import json

import pytest

from cfmlab import dataset, models
from cfmlab.cli import main
from cfmlab.config import RunConfig


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_collect_deterministic(workdir):
    args = ["collect", "--env", "rope", "--n-traj", "2", "--len", "3", "--seed", "1", "--size", "16"]
    assert main(args + ["--out", "a.cfmd"]) == 0
    assert main(args + ["--out", "b.cfmd"]) == 0
    assert (workdir / "a.cfmd").read_bytes() == (workdir / "b.cfmd").read_bytes()
    d = dataset.load_file(workdir / "a.cfmd")
    assert (d.n_traj, d.traj_len, d.image_size) == (2, 3, 16)


def test_missing_out_is_usage_error(workdir, capsys):
    assert main(["collect", "--env", "rope"]) == 1
    assert "--out" in capsys.readouterr().err


def test_no_command_is_usage_error():
    assert main([]) == 1


def test_unknown_objective_is_usage_error(workdir):
    assert main(["train", "--data", "x.cfmd", "--objective", "vae"]) == 1


def test_missing_data_file_is_runtime_error(workdir):
    assert main(["train", "--data", "nope.cfmd"]) == 2


def test_corrupt_data_file_is_runtime_error(workdir):
    (workdir / "bad.cfmd").write_bytes(b"JUNKJUNKJUNK")
    assert main(["train", "--data", "bad.cfmd"]) == 2


@pytest.fixture
def trained(workdir):
    assert main(["collect", "--env", "pointmass", "--n-traj", "4", "--len", "16", "--size", "16",
                 "--out", "pm.cfmd"]) == 0
    assert main(["train", "--objective", "cfm", "--data", "pm.cfmd", "--epochs", "2", "--seed", "1",
                 "--batch-size", "16", "--out", "pm.cfmc"]) == 0
    return workdir


def test_train_outputs(trained):
    ck = models.load_checkpoint_file(trained / "pm.cfmc")
    assert ck.objective == "cfm"
    curve = json.loads((trained / "pm.losses.json").read_text())
    assert len(curve["losses"]) == 2
    assert curve["config"]["seed"] == 1


def test_train_default_name_has_config_hash(trained):
    assert main(["train", "--objective", "joint", "--data", "pm.cfmd", "--epochs", "1", "--batch-size", "16"]) == 0
    names = [p.name for p in trained.glob("joint-pointmass-*.cfmc")]
    assert len(names) == 1


def test_train_divergence_removes_checkpoint(trained, monkeypatch):
    from cfmlab.errors import TrainingDivergedError

    (trained / "div.cfmc").write_bytes(b"partial")

    def boom(*a, **k):
        raise TrainingDivergedError("non-finite loss")

    monkeypatch.setattr(models, "train", boom)
    assert main(["train", "--data", "pm.cfmd", "--out", "div.cfmc"]) == 2
    assert not (trained / "div.cfmc").exists()


def test_eval_and_plan(trained, capsys):
    assert main(["eval", "--ckpt", "pm.cfmc", "--policy", "random", "--goals", "center,random",
                 "--episodes", "2", "--max-steps", "3", "--out", "res"]) == 0
    doc = json.loads((trained / "res.json").read_text())
    assert {(r["method"], r["goal"]) for r in doc["rows"]} == {
        (m, g) for m in ("pm", "random") for g in ("center", "random")}
    assert (trained / "res.tsv").read_text().startswith("method\tgoal")
    assert main(["plan", "--ckpt", "pm.cfmc", "--goal", "center", "--max-steps", "2"]) == 0
    out = capsys.readouterr().out
    assert "step   2" in out


def test_eval_random_only_needs_env(workdir):
    assert main(["eval", "--policy", "random", "--episodes", "1", "--max-steps", "1"]) == 1
    assert main(["eval", "--policy", "random", "--env", "rope", "--goals", "horizontal,vertical,random",
                 "--episodes", "1", "--max-steps", "1", "--out", "r"]) == 0
    assert len(json.loads((workdir / "r.json").read_text())["rows"]) == 3


def test_eval_without_policy_is_usage_error(workdir):
    assert main(["eval", "--env", "rope"]) == 1


def test_ablate_grid(trained):
    assert main(["ablate", "--data", "pm.cfmd", "--grid", "fm=linear,mlp", "sim=e2", "--epochs", "1",
                 "--batch-size", "16", "--episodes", "1", "--max-steps", "2", "--goals", "random", "--out", "abl"]) == 0
    rows = json.loads((trained / "abl.json").read_text())["rows"]
    assert {r["method"] for r in rows} == {"linear/e2", "mlp/e2", "random"}


def test_ablate_bad_grid(trained):
    assert main(["ablate", "--data", "pm.cfmd", "--grid", "fm=cnn"]) == 1


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    for name in ("conv2d", "dense", "infonce_e2", "autoencoder", "joint"):
        assert name in out
    assert main(["gradcheck", "--seeds", "1", "--tol", "1e-30"]) == 2


def test_config_file_and_flag_precedence(workdir):
    (workdir / "cfg.json").write_text(json.dumps({"env_kind": "pointmass", "image_size": 16, "n_traj": 2,
                                                  "traj_len": 2}))
    assert main(["collect", "--config", "cfg.json", "--len", "3", "--out", "c.cfmd"]) == 0
    d = dataset.load_file(workdir / "c.cfmd")
    assert (d.env_kind, d.n_traj, d.traj_len) == ("pointmass", 2, 3)


def test_config_unknown_key_rejected(workdir):
    (workdir / "cfg.json").write_text(json.dumps({"env_kind": "rope", "learning_rate": 0.1}))
    assert main(["collect", "--config", "cfg.json", "--out", "c.cfmd"]) == 1


def test_threads_env_fallback(workdir, monkeypatch):
    monkeypatch.setenv("CFM_THREADS", "1")
    assert main(["collect", "--env", "pointmass", "--n-traj", "1", "--len", "1", "--size", "16",
                 "--out", "t.cfmd"]) == 0


# -- RunConfig ------------------------------------------------------------------
def test_run_config_defaults():
    cfg = RunConfig().validate()
    assert (cfg.batch_size, cfg.lr, cfg.epochs, cfg.latent_dim, cfg.n_candidates) == (128, 1e-3, 30, 8, 100)
    tc = cfg.train_config()
    assert tc.batch_size == 128 and tc.objective == "cfm"


@pytest.mark.parametrize("bad", [{"env_kind": "fluid"}, {"image_size": 48}, {"objective": "vae"},
                                 {"batch_size": 1}, {"env_kind": "cloth", "goals": ["horizontal"]}])
def test_run_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad)


def test_run_config_hash_stable():
    assert RunConfig().hash() == RunConfig().hash()
    assert RunConfig(seed=1).hash() != RunConfig().hash()
