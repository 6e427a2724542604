import numpy as np
import pytest

from tpddpg.config import ConfigError, SystemConfig, dump_config, load_config, spawn_stream


def test_empty_file_gives_table_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg = load_config(path)
    assert (cfg.K, cfg.N, cfg.B, cfg.p_max, cfg.f_max) == (3, 10, 1e6, 1.0, 3e9)
    assert cfg.c_n_range == (30.0, 100.0)
    assert (cfg.psi, cfg.zeta, cfg.M, cfg.M_prime, cfg.u_n) == (1e-9, 1.6e6, 32, 32, 2e-28)
    assert (cfg.gamma, cfg.F, cfg.xi, cfg.replay_capacity) == (0.99, 3, 5, 40000)
    assert (cfg.lr_actor, cfg.lr_critic) == (1e-4, 2e-4)
    assert (cfg.R, cfg.R1, cfg.R2) == (150, 5, 100)
    assert cfg.e_h_range == (0.2, 1.0)
    assert (cfg.c_reward, cfg.phi_penalty, cfg.lam) == (5.0, 5000.0, 0.35)


def test_n_less_than_k_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[topology]\nN = 2\nK = 5\n")
    with pytest.raises(ConfigError, match="N >= K violated"):
        load_config(path)


def test_single_override(tmp_path):
    path = tmp_path / "g.ini"
    path.write_text("[ddpg]\ngamma = 0.5\n")
    assert load_config(path) == SystemConfig(gamma=0.5)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "u.ini"
    path.write_text("[ddpg]\nwarp = 9\n")
    with pytest.raises(ConfigError, match="unknown config key 'warp'"):
        load_config(path)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text("[radio]\nB = 1e6\nthis line is junk\n")
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)


def test_lambda_alias_and_cli_override(tmp_path):
    path = tmp_path / "l.ini"
    path.write_text("[protocol]\nlambda = 0.5\n")
    assert load_config(path).lam == 0.5
    assert load_config(path, {"lam": "0.7"}).lam == 0.7


@pytest.mark.parametrize("key,value", [("gamma", "0"), ("phi_soft", "1.5"), ("B", "-1"),
                                       ("F", "0"), ("xi", "0"), ("c_n_range", "5, 1")])
def test_invariants_name_offending_key(tmp_path, key, value):
    path = tmp_path / "x.ini"
    path.write_text(f"[any]\n{key} = {value}\n")
    with pytest.raises(ConfigError, match=key):
        load_config(path)


def test_round_trip(tmp_path):
    cfg = SystemConfig(N=7, K=2, gamma=0.9, e_h_range=(0.3, 0.4), lam=0.2, seed=11)
    path = tmp_path / "rt.ini"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_stream_determinism():
    a = spawn_stream(42, "channel").random(100)
    b = spawn_stream(42, "channel").random(100)
    assert np.array_equal(a, b)


def test_streams_differ_by_label_and_seed():
    assert spawn_stream(42, "channel").random() != spawn_stream(42, "energy").random()
    assert spawn_stream(42, "x").random() != spawn_stream(43, "x").random()
