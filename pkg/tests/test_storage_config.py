import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wavecip.config import load_config, parse_config_text, parse_number, parse_pairs
from wavecip.errors import ConfigError, ContainerError
from wavecip.storage import ControlCache, decode, encode, read_trace, write_trace
from wavecip.wave import BoundaryTrace

complex_arrays = arrays(np.complex128, st.tuples(st.integers(1, 6), st.integers(1, 5)),
                        elements=st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))


@settings(max_examples=40, deadline=None)
@given(complex_arrays, st.floats(1e-4, 1.0), st.text("abcdefgh_", max_size=16))
def test_container_round_trip(a, dt, tag):
    blob = encode(a, dt=dt, hx=0.1, hy=0.2, eta=(1.0, -2.0), alpha=0.02, tag=tag, dtype=np.complex128)
    back, hdr = decode(blob)
    assert np.array_equal(back, a)
    assert hdr.dims == a.shape and hdr.dt == dt and hdr.tag == tag and hdr.eta == (1.0, -2.0)


def test_container_complex64_default():
    a = np.arange(6).reshape(2, 3) * (1 + 1j) / 3
    back, hdr = decode(encode(a))
    assert back.dtype == np.complex64 and np.allclose(back, a, atol=1e-7)
    assert math.isnan(hdr.alpha)


@pytest.mark.parametrize("mutate", ["magic", "crc", "truncate", "version"])
def test_container_corruption(mutate):
    blob = bytearray(encode(np.ones((3, 4)), dt=0.1))
    if mutate == "magic":
        blob[:4] = b"XXXX"
    elif mutate == "crc":
        blob[-1] ^= 0xFF
    elif mutate == "truncate":
        blob = blob[:-3]
    else:
        blob[4] = 9
    with pytest.raises(ContainerError):
        decode(bytes(blob))


def test_trace_file_round_trip(tmp_path):
    tr = BoundaryTrace(np.arange(12).reshape(4, 3) * 0.5j, 0.25, "theta", (1.0, 2.0), 0.02)
    write_trace(tmp_path / "t.wcip", tr)
    back = read_trace(tmp_path / "t.wcip")
    assert back.quantity == "theta" and back.dt == 0.25 and back.eta == (1.0, 2.0) and back.alpha == 0.02
    assert np.array_equal(back.values, tr.values.astype(np.complex64))


def test_control_cache_hit_miss_and_corruption(tmp_path):
    c = ControlCache(tmp_path)
    assert c.load("k") is None
    c.store("k", np.ones((3, 2)), {"residual_energy": 1e-4}, dt=0.1, tag="control")
    arr, hdr, man = c.load("k")
    assert man["key"] == "k" and np.all(arr == 1)
    data, _ = c.paths("k")
    raw = bytearray(data.read_bytes())
    raw[:4] = b"JUNK"
    data.write_bytes(bytes(raw))
    assert c.load("k") is None
    assert c.hits == 1 and c.misses == 2


def test_parse_number_forms():
    assert parse_number("4pi") == pytest.approx(4 * math.pi)
    assert parse_number("pi/2") == pytest.approx(math.pi / 2)
    assert parse_number("-1.5*pi") == pytest.approx(-1.5 * math.pi)
    assert parse_number("2.5e-3") == 2.5e-3
    assert parse_pairs("2pi, 0; -pi, pi") == [(2 * math.pi, 0.0), (-math.pi, math.pi)]
    with pytest.raises(ValueError):
        parse_number("pie")


def test_default_config_loads():
    cfg = load_config()
    assert cfg["grid"]["nx"] == 64
    assert cfg["recon"]["eta_max"] == pytest.approx(4 * math.pi)
    assert cfg["boundary"]["gamma"] == ["right", "top"]
    assert len(cfg.digest()) == 64


MINIMAL = """[grid]
nx = 32
[boundary]
[coefficient]
[bump]
[control]
[recon]
"""


def test_config_errors_report_line_and_field():
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace("nx = 32", "nx = 32\nnz = 4"))
    assert exc.value.line == 3 and exc.value.field == "grid.nz"
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace("nx = 32", "nx = many"))
    assert exc.value.line == 2 and "grid.nx" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace("[recon]\n", ""))
    assert "missing section" in str(exc.value)
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL + "[extra]\n")
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace("[recon]", "[recon]\nconvention = other"))
    assert exc.value.field == "recon.convention"


def test_digest_tracks_values():
    a = parse_config_text(MINIMAL)
    b = parse_config_text(MINIMAL.replace("nx = 32", "nx = 32  # same"))
    c = parse_config_text(MINIMAL.replace("nx = 32", "nx = 33"))
    assert a.digest() == b.digest() != c.digest()
