import json

import pytest

from photospin.cli import (
    BUDGET_COLUMNS,
    RECOMBINATION_COLUMNS,
    SWEEP_COLUMNS,
    VALIDATE_COLUMNS,
    RunManifest,
    main,
    parse_scan,
    read_csv,
)
from photospin.params import load_preset
from photospin.protocol import run_protocol
from photospin.spectra import TRACE_COLUMNS

DEPHASING_SINGLE = ("t_ns", "eps_ueV", "coherence_charge_quasistatic", "coherence_charge_white",
                    "coherence_overhauser_B_OF", "coherence_overhauser_B_OF_tilde")
DEPHASING_ST = ("t_ns", "eps_ueV", "coherence_charge_quasistatic", "coherence_charge_white",
                "coherence_dd_quasistatic", "coherence_dd_white", "coherence_overhauser_B_OF",
                "coherence_overhauser_B_L", "coherence_overhauser_B_R")


def run_cli(*argv):
    return main([str(a) for a in argv])


def load_manifest(out):
    data = json.loads((out / "manifest.json").read_text())
    return RunManifest(**data)


@pytest.fixture(scope="module")
def st_budget_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("st")
    assert run_cli("budget", "--preset", "st", "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def weak_budget_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("weak")
    assert run_cli("budget", "--preset", "weak", "--out", out) == 0
    return out


def test_spectrum_schema(tmp_path):
    assert run_cli("spectrum", "--protocol", "single-spin", "--tc", "150ueV", "--grid-step", "10ueV",
                   "--out", tmp_path) == 0
    meta, header, rows = read_csv(tmp_path / "spectrum.csv")
    assert tuple(header) == TRACE_COLUMNS
    assert meta["command"] == "spectrum" and meta["t_c_ueV"] == "150.0"
    assert len(rows) == 8 * 301
    assert load_manifest(tmp_path).verify()


def test_st_spectrum(tmp_path):
    assert run_cli("spectrum", "--preset", "st", "--grid-stop", "400ueV", "--grid-step", "5ueV",
                   "--out", tmp_path) == 0
    _, header, rows = read_csv(tmp_path / "spectrum.csv")
    assert tuple(header) == TRACE_COLUMNS
    assert {r[2] for r in rows} >= {"T+", "S", "T0"}


def test_budget_schemas(weak_budget_dir, st_budget_dir):
    for out, deph in ((weak_budget_dir, DEPHASING_SINGLE), (st_budget_dir, DEPHASING_ST)):
        expected = {"budget.csv": BUDGET_COLUMNS, "sweep_speed.csv": SWEEP_COLUMNS,
                    "recombination.csv": RECOMBINATION_COLUMNS, "dephasing.csv": deph}
        for name, cols in expected.items():
            _, header, rows = read_csv(out / name)
            assert tuple(header) == cols, name
            assert rows
        manifest = load_manifest(out)
        assert set(manifest.files) == set(expected) | {"budget.txt"}
        assert manifest.verify()


def test_manifest_detects_tampering(weak_budget_dir, tmp_path):
    for name in ("budget.csv", "manifest.json"):
        (tmp_path / name).write_bytes((weak_budget_dir / name).read_bytes())
    m = load_manifest(tmp_path)
    m.out_dir = str(tmp_path)
    m.files = {"budget.csv": m.files["budget.csv"]}
    assert m.verify()
    with open(tmp_path / "budget.csv", "a") as fh:
        fh.write("\n")
    assert not m.verify()


def test_weak_report(weak_budget_dir):
    text = (weak_budget_dir / "budget.txt").read_text()
    success = [line for line in text.splitlines() if line.startswith("success")]
    assert len(success) == 1
    assert float(success[0].split()[-1].rstrip("%")) >= 97.2
    _, _, rows = read_csv(weak_budget_dir / "sweep_speed.csv")
    assert {r[1] for r in rows} == {"psi1", "psi2"}


def test_st_report_has_five_failure_rows(st_budget_dir):
    text = (st_budget_dir / "budget.txt").read_text()
    table = text.split("mechanism")[1].split("\n", 1)[1].split("success")[0]
    rows = [line for line in table.splitlines() if line.strip()]
    assert len(rows) == 5
    assert [r.split()[0] for r in rows] == ["Landau-Zener", "recombination", "dephasing", "Rabi", "Rabi"]


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("budget", "--preset", "strong", "--out", out) == 0
    assert load_manifest(a).files == load_manifest(b).files


def test_single_point_scan_equals_budget(tmp_path, weak_budget_dir):
    assert run_cli("scan", "--preset", "weak", "--scan", "tc=50ueV", "--out", tmp_path) == 0
    _, header, rows = read_csv(tmp_path / "scan.csv")
    assert tuple(header) == ("point", "t_c", "quantity", "value")
    _, bheader, brow = read_csv(weak_budget_dir / "budget.csv")
    budget = dict(zip(bheader, brow[0]))
    assert {r[2]: r[3] for r in rows} == budget


def test_two_point_scan_reproduces_both_single_spin_columns(tmp_path):
    assert run_cli("scan", "--preset", "weak", "--zip", "--scan", "tc=50ueV,150ueV",
                   "--scan", "eps_ep=-35ueV,-1meV", "--scan", "eps_final=250ueV,1.072meV",
                   "--jobs", 2, "--out", tmp_path) == 0
    _, header, rows = read_csv(tmp_path / "scan.csv")
    assert tuple(header) == ("point", "t_c", "eps_ep", "eps_final", "quantity", "value")
    got = {(r[0], r[4]): float(r[5]) for r in rows}
    for point, preset in (("0", "weak"), ("1", "strong")):
        b = run_protocol(*load_preset(preset)).budget
        assert got[(point, "p_success")] == b.p_success
        assert got[(point, "p_rec_psi2")] == b.p_rec[1]


def test_product_scan_size(tmp_path):
    assert run_cli("scan", "--preset", "weak", "--scan", "tc=40ueV,50ueV", "--scan", "plz=0.01,0.02",
                   "--grid-step", "5ueV", "--out", tmp_path) == 0
    _, _, rows = read_csv(tmp_path / "scan.csv")
    assert len({r[0] for r in rows}) == 4


@pytest.mark.parametrize("argv", [
    ("spectrum", "--grid-step", ""),
    ("spectrum", "--tc", "150mT"),
    ("scan", "--scan", ""),
    ("scan", "--scan", "t_c="),
    ("scan", "--scan", "bogus=1,2"),
    ("scan", "--zip", "--scan", "tc=50ueV", "--scan", "plz=0.01,0.02"),
    ("budget", "--config", "a.conf", "--preset", "weak"),
    ("scan",),
])
def test_usage_errors_exit_with_status_two(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli(*argv, "--out", tmp_path)
    assert exc.value.code == 2


def test_invalid_protocol_is_reported(tmp_path, capsys):
    assert run_cli("budget", "--protocol", "triplet-only", "--out", tmp_path) == 1
    assert "photospin: error" in capsys.readouterr().err


def test_config_errors_are_reported_verbatim(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("t_c = 100\nnot a pair\n")
    assert run_cli("budget", "--config", conf, "--out", tmp_path) == 1
    assert ":2:" in capsys.readouterr().err


def test_config_file_input(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("protocol = single-spin\nt_c = 50ueV\neps_ep = -35ueV\neps_final = 250ueV\n")
    assert run_cli("budget", "--config", conf, "--out", tmp_path / "o") == 0
    meta, _, _ = read_csv(tmp_path / "o" / "budget.csv")
    assert meta["config"] == str(conf)


def test_parse_scan():
    assert parse_scan(["tc=50ueV,0.15meV"]) == [("t_c", [50.0, 150.0])]
    assert parse_scan(["tau=1ns,500ps"]) == [("tau", [1.0, 0.5])]


def test_validate(tmp_path, capsys):
    assert run_cli("validate", "--preset", "strong", "--out", tmp_path) == 0
    _, header, rows = read_csv(tmp_path / "validate.csv")
    assert tuple(header) == VALIDATE_COLUMNS
    assert all(r[3] == "True" for r in rows)
    assert capsys.readouterr().out.count("PASS") == len(rows)
