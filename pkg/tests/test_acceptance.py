"""Acceptance suite: one PASS/FAIL line per criterion, with runtimes.

Each criterion computes a JSON-serializable payload once per session; the
determinism criterion recomputes every payload and compares the bytes.
Scenario-backed criteria go through the command line runner on the INI
files in scenarios/.

    python3 tests/test_acceptance.py      # summary only
    pytest tests/test_acceptance.py -v    # same lines, as tests
"""

import json
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import step_family_threshold
from virtlevel.cli import parse_scenario, run
from virtlevel.discretize import Gaussian, GridSpec, Step, assemble_hamiltonian, identical_pairs, one_body
from virtlevel.geometry import ParticleSystem, Partition, from_frame, one_particle_system, project_X0
from virtlevel.hardy import hardy_constant, sector_angle_formula, sector_angle_vectors
from virtlevel.localization import build_cone_partition, build_scalar_cutoff, ims_decompose
from virtlevel.virtual_level import coupling_threshold, detect_via_perturbation, detect_virtual_level, verdicts_agree

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def scenario(name: str, subcommand: str) -> dict:
    """Run a shipped scenario; payload is the metadata record plus the raw CSV."""
    with tempfile.TemporaryDirectory() as d:
        out = Path(d)
        sc = parse_scenario((SCENARIOS / f"{name}.ini").read_text(), subcommand)
        rec = run(sc, out)
        rec["csv"] = (out / f"{subcommand}.csv").read_text()
        rec["rows"] = [line.split(",") for line in rec["csv"].splitlines()[1:]]
    return rec


# ------------------------------------------------------------- payloads

def c01():
    systems = {"equal_1d_3": ((1.0, 1.0, 1.0), 1), "heavy_1d_3": ((1e6, 1.0, 1.0), 1),
               "equal_2d_4": ((1.0,) * 4, 2), "equal_2d_5": ((1.0,) * 5, 2), "equal_2d_6": ((1.0,) * 6, 2),
               "equal_1d_4": ((1.0,) * 4, 1)}
    return {k: hardy_constant(ParticleSystem(m, d)).value for k, (m, d) in systems.items()}


def c02():
    rng = np.random.default_rng(0)
    worst, worst_sum = 0.0, 0.0
    for m in np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(1000, 3))):
        a, b = sector_angle_formula(m), sector_angle_vectors(m)
        worst = max(worst, float(np.max(np.abs(a - b))))
        worst_sum = max(worst_sum, abs(float(np.sum(a)) - np.pi))
    return {"max_angle_diff": worst, "max_sum_error": worst_sum}


def c03():
    return scenario("c03_hardy_numerical", "hardy")


def c04():
    return scenario("c04_scalar_hardy", "verify")


def c05():
    sys = one_particle_system(1)
    shape = one_body([Step(-1.0, 1.0), Step(4.0, 2.0, 1.0)])
    grid = GridSpec.from_spacing(1, 400.0, 0.02)
    lam = coupling_threshold(sys, shape, grid, bracket=(0.5, 3.0), rtol=1e-6).coupling
    out = {"lambda_bisection": lam, "lambda_shooting": step_family_threshold(), "points": {}}
    for f in (0.9, 1.0, 1.1):
        pot = shape.scaled(f * lam)
        direct = detect_virtual_level(sys, pot, grid)
        pert = detect_via_perturbation(sys, pot, grid)
        out["points"][str(f)] = {"direct": direct.verdict, "perturbation": pert.verdict,
                                 "agree": bool(verdicts_agree(direct, pert))}
    return out


def c06():
    return scenario("c06_decay_one_particle", "decay")


def c07():
    return scenario("c07_decay_three_body", "decay")


def c08():
    out = {"cutoff_margins": {}}
    for eps in (0.01, 0.1):
        for beta in (0.3, 0.5):
            u = build_scalar_cutoff(eps, beta)
            out["cutoff_margins"][f"{eps}/{beta}"] = float(np.min(u.bound_margin_s(u.sample_s(10_000))))
    sys = ParticleSystem((1.0, 1.0, 1.0), 1)
    pair = build_cone_partition(Partition(((0, 1), (2,)), 3), 0.5, 0.1)
    x = project_X0(sys, np.random.default_rng(0).normal(size=(10_000, 3, 1)))
    out["partition_error"] = float(np.max(np.abs(pair.u(sys, x) ** 2 + pair.v(sys, x) ** 2 - 1)))
    grid = GridSpec.from_spacing(2, 6.0, 0.2)
    H = assemble_hamiltonian(sys, identical_pairs(3, [Gaussian(-1.0, 1.0)]), grid)
    nodes = from_frame(grid.nodes(), H.frame)
    phi = np.random.default_rng(1).normal(size=grid.n_unknowns)
    out["ims_residual"] = ims_decompose(H, [pair.u(sys, nodes), pair.v(sys, nodes)], phi).residual
    return out


def c09():
    return scenario("c09_count_three_body", "count")


def c10():
    return {"free": scenario("c10_exterior_free", "verify"), "tuned": scenario("c10_exterior_tuned", "verify"),
            "tuned_count": scenario("c09_count_three_body", "count")}


def c11():
    return scenario("c11_boundary_lemmas", "verify")


# --------------------------------------------------------------- checks

def k01(p):
    ok = (abs(p["equal_1d_3"] - 3) < 1e-12 and abs(p["heavy_1d_3"] - 2) <= 1e-3
          and all(p[f"equal_2d_{n}"] == n - 2 for n in (4, 5, 6)) and p["equal_1d_4"] == 6.5)
    return ok, ", ".join(f"{k}={v:.6g}" for k, v in p.items())


def k02(p):
    ok = p["max_angle_diff"] <= 1e-12 and p["max_sum_error"] <= 1e-10
    return ok, f"max |diff|={p['max_angle_diff']:.2e}, max |sum-pi|={p['max_sum_error']:.2e}"


def k03(p):
    v = float(p["rows"][1][1])
    return abs(v - 3) / 3 <= 0.05, f"log-polar 300x300 estimate {v:.5f}"


def k04(p):
    vals = {r[0]: float(r[1]) for r in p["rows"]}
    ok = (0.24 <= vals["halfline_1d"] <= 0.26 and 0.24 <= vals["exterior_d3"] <= 0.26
          and vals["log_2d"] >= 0.20)
    return ok, ", ".join(f"{k}={v:.5f}" for k, v in vals.items())


def k05(p):
    rel = abs(p["lambda_bisection"] - p["lambda_shooting"]) / p["lambda_shooting"]
    ok = rel <= 1e-3 and all(v["agree"] for v in p["points"].values())
    verdicts = "; ".join(f"{k}: {v['direct']}/{v['perturbation']}" for k, v in p["points"].items())
    return ok, f"rel err {rel:.2e}; {verdicts}"


def k06(p):
    r = {float(row[0]): float(row[3]) for row in p["rows"]}
    ok = abs(r[0.45] - 1) <= 0.05 and r[1.0] >= 1.3
    return ok, f"ratio(alpha=0.45)={r[0.45]:.4f}, ratio(L2)={r[1.0]:.4f}"


def k07(p):
    r = {float(row[0]): float(row[3]) for row in p["rows"]}
    ok = abs(r[2.5] - 1) <= 0.05 and r[3.5] >= 1.15
    return ok, f"ratio(2.5)={r[2.5]:.4f}, ratio(3.5)={r[3.5]:.4f}, flag={p['result']['report']['flag']}"


def k08(p):
    m = min(p["cutoff_margins"].values())
    ok = m >= 0 and p["partition_error"] <= 1e-12 and p["ims_residual"] <= 1e-8
    return ok, f"min margin {m:.3e}, |u^2+v^2-1|={p['partition_error']:.1e}, IMS rel {p['ims_residual']:.1e}"


def k09(p):
    counts = [int(r[3]) for r in p["rows"]]
    curve, scan = counts[:3], counts[3:]
    ok = p["result"]["stable"] and p["result"]["monotone_in_coupling"] and scan[-1] > scan[0]
    return ok, f"counts {curve} over L=20,40,80; coupling scan {scan}"


def k10(p):
    rows = p["free"]["rows"]
    eps = np.array([float(r[0].split("=")[1]) for r in rows])
    margin = np.array([float(r[1]) for r in rows])
    i = int(np.flatnonzero(np.diff(np.sign(margin)) != 0)[0]) if np.any(margin < 0) and np.any(margin > 0) else None
    flip = None if i is None else float(eps[i] - margin[i] * (eps[i + 1] - eps[i]) / (margin[i + 1] - margin[i]))
    tuned_positive = p["tuned"]["rows"][0][2] == "true"
    stable = p["tuned_count"]["result"]["stable"]
    ok = flip is not None and abs(flip - 0.25) <= 0.02 and tuned_positive and stable
    return ok, f"sign flip at eps={flip}, tuned exterior positive={tuned_positive}, count stable={stable}"


def k11(p):
    vals = {r[0]: float(r[1]) for r in p["rows"]}
    return all(v >= 0 for v in vals.values()), ", ".join(f"{k}={v:.3g}" for k, v in vals.items())


CRITERIA = {
    1: ("Hardy constants, closed form", c01, k01, 1.0),
    2: ("sector angle formula vs vectors", c02, k02, 1.0),
    3: ("numerical Hardy constant", c03, k03, 120.0),
    4: ("scalar Hardy quotients", c04, k04, 60.0),
    5: ("virtual-level threshold and verdicts", c05, k05, 120.0),
    6: ("resonance dichotomy, one particle", c06, k06, 120.0),
    7: ("eigenvalue dichotomy, three bodies", c07, k07, 600.0),
    8: ("localization cutoffs and IMS", c08, k08, 10.0),
    9: ("finiteness probe", c09, k09, 900.0),
    10: ("exterior positivity", c10, k10, 300.0),
    11: ("boundary lemmas", c11, k11, 120.0),
}

_CACHE: dict = {}


def payload(n: int):
    if n not in _CACHE:
        t0 = time.perf_counter()
        p = CRITERIA[n][1]()
        _CACHE[n] = (p, time.perf_counter() - t0)
    return _CACHE[n]


def evaluate(n: int):
    name, _, check, limit = CRITERIA[n]
    p, secs = payload(n)
    ok, detail = check(p)
    ok = bool(ok) and secs <= limit
    return ok, f"{'PASS' if ok else 'FAIL'} criterion {n:2d} ({name}): {detail} [{secs:.1f}s, limit {limit:g}s]"


def evaluate_determinism():
    t0 = time.perf_counter()
    differing = []
    for n in CRITERIA:
        first, _ = payload(n)
        again = CRITERIA[n][1]()
        if json.dumps(first, sort_keys=True) != json.dumps(again, sort_keys=True):
            differing.append(n)
    ok = not differing
    secs = time.perf_counter() - t0
    detail = "all payloads byte-identical" if ok else f"payloads differ for criteria {differing}"
    return ok, f"{'PASS' if ok else 'FAIL'} criterion 12 (determinism): {detail} [{secs:.1f}s]"


@pytest.mark.parametrize("n", list(CRITERIA))
def test_criterion(n, capsys):
    ok, line = evaluate(n)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_12_determinism(capsys):
    ok, line = evaluate_determinism()
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    lines = [evaluate(n)[1] for n in CRITERIA] + [evaluate_determinism()[1]]
    print("\n".join(lines))
