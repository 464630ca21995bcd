import json
from pathlib import Path

import pytest

from virtlevel.cli import EXIT_DOMAIN, EXIT_OK, main, parse_scenario, run
from virtlevel.errors import DomainError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL = """
[system]
masses = 1, 1, 1
"""


def test_defaults_are_recorded():
    sc = parse_scenario(MINIMAL, "detect")
    echo = sc.echo()
    assert echo["grid"]["h"] == 0.2
    assert echo["run"]["eps_grid"] == [0.5, 0.25, 0.1, 0.05, 0.01]
    assert echo["seed"] == 0


def test_all_errors_reported():
    bad = "[system]\nmasses = 1, -1\ndim = 5\n[grid]\nh = -1\nbogus = 2\n"
    with pytest.raises(DomainError) as exc:
        parse_scenario(bad, "detect")
    msg = str(exc.value)
    for part in ("not positive", "dim", "[grid] h", "bogus"):
        assert part in msg


def test_lenient_mode_warns():
    sc = parse_scenario(MINIMAL + "[extra]\nx = 1\n", "hardy", strict=False)
    assert sc.warnings


def test_custom_potential_needs_certificate():
    text = MINIMAL + "[potential]\nkind = custom\npieces = gaussian(-1, 1)\n"
    with pytest.raises(DomainError, match="certificate"):
        parse_scenario(text, "detect")


def test_hash_tracks_content():
    a = parse_scenario(MINIMAL, "hardy")
    b = parse_scenario(MINIMAL.replace("1, 1, 1", "1, 1, 2"), "hardy")
    assert a.digest() == parse_scenario(MINIMAL, "hardy").digest()
    assert a.digest() != b.digest()


def test_hardy_run(tmp_path):
    rec = run(parse_scenario(MINIMAL, "hardy"), tmp_path)
    lines = (tmp_path / "hardy.csv").read_text().splitlines()
    assert lines[0].startswith("quantity,value,method")
    assert float(lines[1].split(",")[1]) == pytest.approx(3.0, abs=1e-12)
    meta = json.loads((tmp_path / "hardy.meta.json").read_text())
    assert meta["scenario_hash"] == rec["scenario_hash"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(MINIMAL + "[potential]\nkind = gauss_well_barrier\n[grid]\nL = 6\nh = 0.4\n[run]\nbracket = 0, 40\n")
    for d in ("a", "b"):
        assert main(["threshold", "--config", str(cfg), "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("threshold.csv", "threshold.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_codes(tmp_path):
    assert main(["hardy", "--config", str(tmp_path / "missing.ini")]) == EXIT_DOMAIN
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[system]\nmasses = 1\n")
    assert main(["hardy", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_DOMAIN
    cfg.write_text("[system]\nmasses = 1, 1\n")
    assert main(["hardy", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_DOMAIN


def test_geometry_run(tmp_path):
    run(parse_scenario(MINIMAL + "[run]\nkappa_samples = 2000\n", "geometry"), tmp_path)
    assert "theta0" in (tmp_path / "geometry.csv").read_text()


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_scenarios_parse(path):
    sub = {"hardy": "hardy", "decay": "decay", "count": "count"}.get(path.stem.split("_")[1], "verify")
    parse_scenario(path.read_text(), sub)
