import dataclasses

import numpy as np
import pytest
import torch

from amm.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from amm.config import parse_config
from amm.game import PenaltyConfig, amm_train_step, build_train_state
from amm.networks import NetSpec

CONFIG_TEXT = """
model:
  k: 3
  latent_dim: 2
  means:
    kind: circle
    radius: 6.0
optimization:
  max_steps: 10
data:
  kind: synthetic
"""


def _cfg():
    return parse_config(CONFIG_TEXT)


def _state(seed=0):
    return build_train_state(
        image_shape=(2,),
        k=3,
        latent_dim=2,
        net_spec=NetSpec(kind="dense", hidden=(16,)),
        prior_means=np.zeros((3, 2)),
        penalty=PenaltyConfig(10.0, True),
        batch_size=8,
        init_gen=torch.Generator().manual_seed(seed),
    )


def _train(state, gen, rng, steps):
    for _ in range(steps):
        x = torch.as_tensor(rng.normal(size=(8, 2)).astype(np.float32))
        amm_train_step(state, x, gen)


def test_roundtrip_restores_everything(tmp_path):
    state = _state(seed=1)
    gen = torch.Generator().manual_seed(2)
    rng = np.random.default_rng(3)
    _train(state, gen, rng, 3)
    path = tmp_path / "ck.pt"
    save_checkpoint(path, state, _cfg(), gen, rng)

    other = _state(seed=9)  # different init, fully overwritten by load
    gen2, rng2 = load_checkpoint(path, other, _cfg())
    assert other.step == 3
    for name, mod in state.modules().items():
        for p, q in zip(mod.parameters(), other.modules()[name].parameters()):
            assert torch.equal(p, q)
    assert torch.equal(gen.get_state(), gen2.get_state())
    assert rng.bit_generator.state == rng2.bit_generator.state


def test_resume_is_bit_identical(tmp_path):
    # N steps, checkpoint, N more == 2N straight through
    straight = _state(seed=4)
    gen_s = torch.Generator().manual_seed(5)
    rng_s = np.random.default_rng(6)
    _train(straight, gen_s, rng_s, 6)

    first = _state(seed=4)
    gen_f = torch.Generator().manual_seed(5)
    rng_f = np.random.default_rng(6)
    _train(first, gen_f, rng_f, 3)
    path = tmp_path / "mid.pt"
    save_checkpoint(path, first, _cfg(), gen_f, rng_f)

    resumed = _state(seed=4)
    gen_r, rng_r = load_checkpoint(path, resumed, _cfg())
    _train(resumed, gen_r, rng_r, 3)

    assert resumed.step == straight.step == 6
    for name, mod in straight.modules().items():
        for p, q in zip(mod.parameters(), resumed.modules()[name].parameters()):
            assert torch.equal(p, q), f"{name} diverged after resume"
    for name, opt in straight.optimizers.items():
        sd_a = opt.state_dict()["state"]
        sd_b = resumed.optimizers[name].state_dict()["state"]
        for k in sd_a:
            for field in ("exp_avg", "exp_avg_sq"):
                assert torch.equal(sd_a[k][field], sd_b[k][field])


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.pt"
    path.write_bytes(b"not a torch file at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _state(), _cfg())


def test_wrong_payload_type(tmp_path):
    path = tmp_path / "plain.pt"
    torch.save([1, 2, 3], path)
    with pytest.raises(CheckpointError, match="not an AMM checkpoint"):
        load_checkpoint(path, _state(), _cfg())


def test_format_version_mismatch(tmp_path):
    state = _state()
    path = tmp_path / "v.pt"
    save_checkpoint(path, state, _cfg(), torch.Generator(), np.random.default_rng())
    payload = torch.load(path, weights_only=False)
    payload["format_version"] = 999
    torch.save(payload, path)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path, _state(), _cfg())


def test_k_conflict_detected(tmp_path):
    state = _state()
    path = tmp_path / "k.pt"
    save_checkpoint(path, state, _cfg(), torch.Generator(), np.random.default_rng())
    other_cfg = parse_config(CONFIG_TEXT.replace("k: 3", "k: 4"))
    with pytest.raises(CheckpointError, match="K="):
        load_checkpoint(path, _state(), other_cfg)


def test_latent_dim_conflict_detected(tmp_path):
    state = _state()
    path = tmp_path / "d.pt"
    save_checkpoint(path, state, _cfg(), torch.Generator(), np.random.default_rng())
    other_cfg = parse_config(CONFIG_TEXT.replace("latent_dim: 2", "latent_dim: 5"))
    with pytest.raises(CheckpointError, match="latent_dim"):
        load_checkpoint(path, _state(), other_cfg)


def test_truncated_file(tmp_path):
    state = _state()
    path = tmp_path / "t.pt"
    save_checkpoint(path, state, _cfg(), torch.Generator(), np.random.default_rng())
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _state(), _cfg())


def test_config_echo_saved(tmp_path):
    state = _state()
    path = tmp_path / "c.pt"
    cfg = _cfg()
    save_checkpoint(path, state, cfg, torch.Generator(), np.random.default_rng())
    payload = torch.load(path, weights_only=False)
    assert payload["config"] == dataclasses.asdict(cfg)
