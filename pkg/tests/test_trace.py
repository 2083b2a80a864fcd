import gzip
import json

import pytest

from forage.agents import TeamSpec
from forage.engine import EpisodeConfig, run_episode
from forage.metrics import trace_map
from forage.trace import TraceError, TraceVersionError, parse_trace, read_trace, write_trace


@pytest.fixture(scope="module")
def trace(open20):
    return run_episode(EpisodeConfig(open20, TeamSpec.scouts(1), TeamSpec.foragers(1), horizon=20, seed=4))


@pytest.mark.parametrize("name", ["t.jsonl", "t.jsonl.gz"])
def test_roundtrip(trace, tmp_path, name):
    path = write_trace(trace, tmp_path / name)
    back = read_trace(path)
    assert back == trace
    again = write_trace(back, tmp_path / ("b" + name))
    assert again.read_bytes() == path.read_bytes()


def test_gzip_is_deterministic(trace, tmp_path):
    a = write_trace(trace, tmp_path / "a.jsonl.gz").read_bytes()
    b = write_trace(trace, tmp_path / "b.jsonl.gz").read_bytes()
    assert a == b
    assert gzip.decompress(a).decode() == trace.to_text()


def test_map_rebuilt_from_header(trace, open20):
    m = trace_map(trace)
    assert m.digest == open20.digest
    assert (m.navigable == open20.navigable).all()


def test_truncated_trace_names_line(trace, tmp_path):
    lines = trace.to_text().splitlines()
    path = tmp_path / "cut.jsonl"
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(TraceError, match="truncated"):
        read_trace(path)
    path.write_text("\n".join(lines[:5]) + "\n" + lines[5][: len(lines[5]) // 2] + "\n")
    with pytest.raises(TraceError, match="line 6"):
        read_trace(path)


def test_damaged_gzip(trace, tmp_path):
    data = write_trace(trace, tmp_path / "t.jsonl.gz").read_bytes()
    bad = tmp_path / "bad.jsonl.gz"
    bad.write_bytes(data[: len(data) // 2])
    with pytest.raises(TraceError, match="gzip"):
        read_trace(bad)


def test_version_mismatch(trace):
    lines = trace.to_text().splitlines()
    header = json.loads(lines[0])
    header["trace_version"] = 99
    with pytest.raises(TraceVersionError, match="99"):
        parse_trace([json.dumps(header)] + lines[1:])


@pytest.mark.parametrize("lines, msg", [
    ([], "empty"),
    (['{"type": "step"}'], "header"),
    (["[1]"], "type"),
])
def test_malformed(lines, msg):
    with pytest.raises(TraceError, match=msg):
        parse_trace(lines)


def test_record_after_footer_and_unknown_type(trace):
    lines = trace.to_text().splitlines()
    with pytest.raises(TraceError, match="after footer"):
        parse_trace(lines + [lines[1]])
    with pytest.raises(TraceError, match="unknown record"):
        parse_trace(lines[:1] + ['{"type": "teleport"}'] + lines[1:])
