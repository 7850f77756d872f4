import numpy as np
import pytest

from confgame import game, gameio
from confgame.errors import CorruptRow, SchemaMismatch


def test_dataset_round_trip(tmp_path, t1):
    ds = game.simulate_dataset(t1, n=100, seed=4)
    path = tmp_path / "d.csv"
    gameio.write_dataset(ds, str(path))
    back = gameio.read_dataset(str(path), with_hidden=True)
    assert back == ds
    assert back.hidden == ds.hidden


def test_round_trip_is_byte_stable(tmp_path, t1):
    ds = game.simulate_dataset(t1, n=50, seed=1)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    gameio.write_dataset(ds, str(p1))
    gameio.write_dataset(gameio.read_dataset(str(p1)), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_dataset_round_trip(tmp_path, t1):
    ds = game.simulate_dataset(t1, n=0, seed=0)
    path = tmp_path / "empty.csv"
    gameio.write_dataset(ds, str(path))
    assert gameio.read_dataset(str(path)) == ds


def test_header_horizon_mismatch(tmp_path, t1):
    ds = game.simulate_dataset(t1, n=5, seed=2)
    path = tmp_path / "d.csv"
    gameio.write_dataset(ds, str(path))
    lines = path.read_text().splitlines()
    lines[0] = lines[0].replace("H=1", "H=2")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaMismatch):
        gameio.read_dataset(str(path))


def test_corrupt_row_reports_line_number(tmp_path, t1):
    ds = game.simulate_dataset(t1, n=5, seed=2)
    path = tmp_path / "d.csv"
    gameio.write_dataset(ds, str(path))
    lines = path.read_text().splitlines()
    lines[3] = "not,a,row"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptRow) as err:
        gameio.read_dataset(str(path))
    assert err.value.line_number == 4


def test_observed_file_has_no_hidden_column(tmp_path, t1):
    ds = game.simulate_dataset(t1, n=3, seed=0)
    path = tmp_path / "d.csv"
    gameio.write_dataset(ds, str(path))
    lines = path.read_text().splitlines()
    assert all(len(line.split(",")) == 10 for line in lines[1:] if line)
    # ten observed columns, no room for the private draw
    step_rows = [l for l in lines[1:] if l.split(",")[1] == "1"]
    assert len(step_rows[0].split(",")) == 10
    hidden = path.with_name(path.name + ".hidden")
    assert hidden.exists()


def test_spec_round_trip(tmp_path, t2):
    path = tmp_path / "t2.spec"
    gameio.write_spec(t2, str(path))
    back = gameio.read_spec(str(path))
    for name in (
        "init_state",
        "u_law",
        "trans",
        "alice_rew_act",
        "bob_act_base",
    ):
        assert np.array_equal(getattr(back, name), getattr(t2, name))
    assert back.horizon == t2.horizon and back.reward_noise == t2.reward_noise


def test_policy_round_trip(tmp_path, t2):
    pair = game.constant_policy_pair(t2, 0.25, 0.75, 1.0)
    path = tmp_path / "p.policy"
    gameio.write_policy(pair, str(path))
    back = gameio.read_policy(str(path))
    assert np.array_equal(back.alice, pair.alice)
    assert np.array_equal(back.bob, pair.bob)
    assert back.init_bob == pair.init_bob


def test_policy_csv_export(tmp_path, t1):
    pair = game.constant_policy_pair(t1, 1.0, 0.0, 1.0)
    path = tmp_path / "pair.csv"
    gameio.export_policy_csv(pair, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "step,player,s,u,prev_action,action"
    assert len(lines) == 1 + 1 + 2 + 2  # header, opening rule, alice cells, bob cells
