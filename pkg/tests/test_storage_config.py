import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deimlab.config import ExperimentConfig, dump_config, load_config, parse_config
from deimlab.errors import ConfigError, InputError
from deimlab.storage import (
    SnapshotMatrix,
    content_hash,
    read_checkpoint,
    read_csv,
    read_snapshots,
    write_checkpoint,
    write_csv,
    write_snapshots,
)

# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(1, 6)), elements=st.floats(allow_nan=False, allow_infinity=False)),
)
def test_snapshot_roundtrip_bit_exact(tmp_path_factory, cube):
    ny, nx, nt = cube.shape
    snaps = SnapshotMatrix(cube.reshape(ny * nx, nt), np.arange(nt) * 0.5, (ny, nx), {"seed": 3, "config": {"a": [1, 2]}})
    path = tmp_path_factory.mktemp("snap") / "s.dlab"
    write_snapshots(path, snaps)
    back = read_snapshots(path)
    assert back.data.tobytes() == snaps.data.tobytes()
    np.testing.assert_array_equal(back.times, snaps.times)
    assert back.field_shape == (ny, nx)
    assert back.meta["seed"] == 3 and back.meta["config"] == {"a": [1, 2]}


def test_snapshot_layout_is_column_major(tmp_path):
    data = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    path = tmp_path / "s.dlab"
    write_snapshots(path, SnapshotMatrix(data, [0.0, 1.0]))
    raw = path.read_bytes()
    assert raw[:4] == b"DLAB"
    version, nd = struct.unpack_from("<II", raw, 4)
    assert (version, nd) == (1, 1)
    assert struct.unpack_from("<II", raw, 12) == (3, 2)
    payload = np.frombuffer(raw, dtype="<f8", count=6, offset=20)
    np.testing.assert_array_equal(payload, [1.0, 3.0, 5.0, 2.0, 4.0, 6.0])


def test_content_hash_is_git_blob_style():
    # same digest git computes for a blob containing "hello\n"
    assert content_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_corrupt_payload_detected(tmp_path):
    path = tmp_path / "s.dlab"
    write_snapshots(path, SnapshotMatrix(np.ones((4, 2)), [0.0, 1.0]))
    raw = bytearray(path.read_bytes())
    raw[25] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(InputError, match="hash"):
        read_snapshots(path)


def test_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "s.dlab"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(InputError):
        read_snapshots(path)
    write_snapshots(path, SnapshotMatrix(np.ones((4, 2)), [0.0, 1.0]))
    path.write_bytes(path.read_bytes()[:30])
    with pytest.raises(InputError):
        read_snapshots(path)


def test_snapshot_shape_validation():
    with pytest.raises(InputError):
        SnapshotMatrix(np.ones((4, 2)), [0.0])
    with pytest.raises(InputError):
        SnapshotMatrix(np.ones((4, 2)), [0.0, 1.0], (3, 2))


def test_from_fields_and_field():
    f = [np.arange(6.0).reshape(2, 3) * k for k in range(3)]
    s = SnapshotMatrix.from_fields(f, [0, 1, 2])
    assert s.field_shape == (2, 3)
    np.testing.assert_array_equal(s.field(2), f[2])


def test_checkpoint_roundtrip(tmp_path):
    arrays_in = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([1.5, -2.0]), "s": np.array(3.0)}
    path = tmp_path / "c.ckpt"
    write_checkpoint(path, arrays_in, {"kind": "test", "seed": 1})
    arrays_out, meta = read_checkpoint(path)
    assert list(arrays_out) == ["w", "b", "s"]
    for k in arrays_in:
        np.testing.assert_array_equal(arrays_out[k], arrays_in[k])
    assert meta == {"kind": "test", "seed": 1}
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(InputError):
        read_checkpoint(path)


def test_csv_roundtrip_exact_floats(tmp_path):
    path = tmp_path / "t.csv"
    vals = [0.1 + 0.2, 1e-300, -3.0]
    write_csv(path, ["k", "v"], [(i, v) for i, v in enumerate(vals)], {"seed": 5})
    header, rows, comments = read_csv(path)
    assert header == ["k", "v"]
    assert [float(r[1]) for r in rows] == vals
    assert comments["schema_version"] == "1" and comments["seed"] == "5"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_defaults_match_reference_settings():
    cfg = ExperimentConfig()
    assert (cfg.burgers.n, cfg.burgers.n_steps, cfg.burgers.t_final) == (128, 300, 2.0)
    assert (cfg.rom.modes, cfg.rom.points) == (12, 24)
    assert (cfg.vortex.dt, cfg.vortex.n_steps, cfg.vortex.Re) == (0.02, 200, 1000.0)
    assert (cfg.windowed.window_size, cfg.windowed.stride) == (20, 1)


def test_parse_types_and_case():
    cfg = parse_config("[run]\nseed = 9\n[burgers]\nRe = 250\nn = 64\n[sampler]\nhidden = 32, 16\nnoise = off\nclip = none\n")
    assert cfg.seed == 9
    assert cfg.burgers.Re == 250.0 and cfg.burgers.n == 64
    assert cfg.sampler.hidden == (32, 16) and cfg.sampler.noise is False and cfg.sampler.clip is None


@pytest.mark.parametrize(
    "text",
    [
        "[bogus]\nx = 1\n",
        "[burgers]\nreynolds = 10\n",
        "[burgers]\nn = many\n",
        "[sampler]\nnoise = maybe\n",
        "[rom]\nmode = adaptive\n",
        "no section header\n",
    ],
)
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_seed_is_mandatory(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_config(None)
    assert load_config(None, seed=4).seed == 4
    with pytest.raises(ConfigError):
        load_config(None, seed=-1)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini", seed=1)


def test_dump_roundtrips():
    cfg = parse_config("[run]\nseed = 2\n[vortex]\nnx = 32\nrho = 2.5\n[node]\nbatch_size = 10\n")
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()
