"""Config parsing, writers, and the command-line interface."""

import math

import numpy as np
import pytest

from ldgflow.cli import main
from ldgflow.config import ConfigError, ConfigWarning, parse_config
from ldgflow.harness import DiagnosticsRecord, RateTable, preset_config, run_simulation
from ldgflow.io import (
    read_diagnostics,
    write_diagnostics,
    write_rate_table,
    write_snapshot,
)
from ldgflow.mesh import build_mesh
from ldgflow.qtensor import QTensorField, kappa_min

from conftest import random_traceless


# --- config parsing -----------------------------------------------------------


def test_minimal_preset_config_materializes_full_setup():
    cfg = parse_config("[scheme]\ninitial = hole2d\n")
    assert (cfg.dim, cfg.M, cfg.domain_length) == (2, 80, 2.0)
    p = cfg.params
    assert (p.a, p.b, p.c, p.L1, p.L2, p.L3) == (-4.0, 0.0, 4.0, 4.5e-3, 0.0, 0.0)
    assert p.kappa == 8.0
    assert p.eta == pytest.approx(1.0, rel=1e-12)
    assert p.c_star == pytest.approx(4.0, rel=1e-12)
    assert cfg.scheme == "mbp_sesav2"
    assert (cfg.T, cfg.tau) == (2.0, 0.01)


def test_config_overrides_beat_preset_values():
    cfg = parse_config(
        "[scheme]\ninitial = hole2d\nname = mbp_sesav1\n"
        "[mesh]\nM = 40\n[time]\ntau = 0.1\n"
    )
    assert cfg.M == 40
    assert cfg.scheme == "mbp_sesav1"
    assert cfg.tau == 0.1


def test_unknown_key_and_section_rejected():
    with pytest.raises(ConfigError, match="unknown key mesh.resolution"):
        parse_config("[scheme]\ninitial = hole2d\n[mesh]\nresolution = 4\n")
    with pytest.raises(ConfigError, match=r"unknown section \[grid\]"):
        parse_config("[scheme]\ninitial = hole2d\n[grid]\nM = 8\n")


def test_missing_mandatory_keys_aggregated():
    with pytest.raises(ConfigError) as err:
        parse_config("[scheme]\ninitial = zero\nname = sesav1\n[mesh]\ndim = 2\n")
    msg = str(err.value)
    for key in ("mesh.M", "mesh.domain_length", "model.a", "model.c",
                "model.L1", "time.T", "time.tau"):
        assert key in msg


def test_malformed_number_names_line_and_key():
    text = "[scheme]\ninitial = hole2d\n[time]\ntau = fast\n"
    with pytest.raises(ConfigError, match=r"line 4: time.tau: malformed number"):
        parse_config(text)


def test_out_of_range_values_name_constraint():
    with pytest.raises(ConfigError, match=r"model.c: must be > 0"):
        parse_config("[scheme]\ninitial = hole2d\n[model]\nc = -1\n")
    with pytest.raises(ConfigError, match=r"mesh.M: must be at least 4"):
        parse_config("[scheme]\ninitial = hole2d\n[mesh]\nM = 2\n")


def test_tau_and_adaptive_are_exclusive():
    text = ("[scheme]\ninitial = hole2d\n"
            "[time]\ntau = 0.1\nadaptive = yes\ntau_min = 1e-3\n"
            "tau_max = 0.1\nalpha = 1e5\n")
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(text)


def test_adaptive_preset_defaults_flow_through():
    cfg = parse_config("[scheme]\ninitial = orient3d\n[mesh]\nM = 8\n")
    assert cfg.tau is None
    assert cfg.adaptive is not None
    assert (cfg.adaptive.tau_min, cfg.adaptive.tau_max,
            cfg.adaptive.alpha) == (5e-4, 0.05, 1e5)


def test_kappa_default_rounds_min_up():
    text = ("[scheme]\ninitial = zero\nname = sesav1\n"
            "[mesh]\ndim = 2\nM = 8\ndomain_length = 1.0\n"
            "[model]\na = -0.25\nc = 1.0\nL1 = 1e-3\neta = 0.5\n"
            "[time]\nT = 1.0\ntau = 0.1\n")
    cfg = parse_config(text)
    k_min = kappa_min(cfg.params, 0.5)
    assert cfg.params.kappa >= k_min
    # 0.5 rounds to itself at two significant figures
    assert cfg.params.kappa == pytest.approx(0.5, rel=1e-12)


def test_low_kappa_in_reduced_scheme_warns_but_proceeds():
    text = ("[scheme]\ninitial = hole2d\n[model]\nkappa = 0.5\n")
    with pytest.warns(ConfigWarning):
        cfg = parse_config(text)
    assert cfg.params.kappa == 0.5


def test_cli_style_overrides():
    cfg = parse_config("[scheme]\ninitial = hole2d\n",
                       overrides=["time.tau=0.25", "mesh.M=16"])
    assert cfg.tau == 0.25 and cfg.M == 16
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[scheme]\ninitial = hole2d\n", overrides=["mesh.n=1"])
    with pytest.raises(ConfigError, match="not of the form"):
        parse_config("[scheme]\ninitial = hole2d\n", overrides=["tau 0.1"])


# --- diagnostics CSV ------------------------------------------------------------


def one_record(**kw):
    base = dict(step=1, time=0.1, tau=0.1, energy=-1.2345678901234567,
                sup_norm=0.7071067811865476, s=-3.0, g=1.0, clamped=False)
    base.update(kw)
    return DiagnosticsRecord(**base)


def test_diagnostics_single_record_layout(tmp_path):
    path = tmp_path / "diag.csv"
    write_diagnostics([one_record()], path)
    text = path.read_text()
    assert text.endswith("\n")
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[0] == "step,time,tau,energy,sup_norm,s,g,clamped"


def test_diagnostics_round_trip_bit_exact(tmp_path, rng):
    records = [
        one_record(step=k, time=k * math.pi / 7, tau=rng.uniform(),
                   energy=rng.standard_normal() * 10**rng.integers(-8, 8),
                   sup_norm=abs(rng.standard_normal()),
                   s=rng.standard_normal(), g=math.exp(rng.standard_normal()),
                   clamped=bool(k % 2))
        for k in range(1, 30)
    ]
    path = tmp_path / "diag.csv"
    write_diagnostics(records, path)
    assert read_diagnostics(path) == records


def test_diagnostics_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        write_diagnostics([], tmp_path / "diag.csv")


def test_diagnostics_deterministic(tmp_path):
    records = [one_record(), one_record(step=2, time=0.2, clamped=True)]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_diagnostics(records, p1)
    write_diagnostics(records, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_real_run_energy_column_monotone(tmp_path):
    cfg = preset_config("hole2d", M=16, scheme="mbp_sesav1", tau=0.05, T=0.5)
    result = run_simulation(cfg)
    path = tmp_path / "diag.csv"
    write_diagnostics(result.records, path)
    energies = [r.energy for r in read_diagnostics(path)]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_rate_table_csv_blank_rate_cells(tmp_path):
    table = RateTable.from_errors("tau", [0.2, 0.1], [4.0, 1.0], [4.0, 1.0],
                                  [4.0, 1.0])
    path = tmp_path / "rates.csv"
    write_rate_table(table, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("tau,error_grad")
    assert lines[1].endswith(",,,")  # coarsest row has no rates
    assert lines[2].split(",")[4] == "2"


# --- VTK / CSV snapshots ---------------------------------------------------------


def parse_legacy_vtk(text: str) -> dict:
    """Strict reference reader for the legacy STRUCTURED_POINTS dialect."""
    lines = text.splitlines()
    assert lines[0].startswith("# vtk DataFile Version")
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET STRUCTURED_POINTS"
    dims = tuple(int(v) for v in lines[4].split()[1:])
    assert lines[4].startswith("DIMENSIONS") and len(dims) == 3
    assert lines[5].startswith("ORIGIN")
    spacing = tuple(float(v) for v in lines[6].split()[1:])
    n_points = int(lines[7].split()[1])
    assert lines[7].startswith("POINT_DATA")
    assert n_points == dims[0] * dims[1] * dims[2]
    fields: dict[str, np.ndarray] = {}
    k = 8
    while k < len(lines):
        head = lines[k].split()
        if head[0] == "SCALARS":
            name, dtype, comps = head[1], head[2], int(head[3])
            assert dtype == "double" and comps == 1
            assert lines[k + 1] == "LOOKUP_TABLE default"
            vals = [float(v) for v in lines[k + 2: k + 2 + n_points]]
            assert len(vals) == n_points
            fields[name] = np.array(vals)
            k += 2 + n_points
        elif head[0] == "VECTORS":
            name, dtype = head[1], head[2]
            assert dtype == "double"
            rows = [tuple(float(v) for v in lines[k + 1 + i].split())
                    for i in range(n_points)]
            assert all(len(r) == 3 for r in rows)
            fields[name] = np.array(rows)
            k += 1 + n_points
        else:
            raise AssertionError(f"unexpected VTK section {lines[k]!r}")
    return {"dims": dims, "spacing": spacing, "fields": fields}


def test_vtk_snapshot_zero_field(tmp_path):
    mesh = build_mesh(2, 8, 1.0)
    path = tmp_path / "snap.vtk"
    write_snapshot(QTensorField.zeros(mesh, 2), None, path, "vtk")
    data = parse_legacy_vtk(path.read_text())
    assert data["dims"] == (9, 9, 1)
    assert data["spacing"] == (0.125, 0.125, 0.125)
    for name in ("q11", "q12", "q22", "eigen_gap"):
        assert not data["fields"][name].any()
    assert not data["fields"]["director"].any()


def test_vtk_snapshot_values_and_order(tmp_path, rng):
    mesh = build_mesh(2, 8, 1.0)
    Q = random_traceless(mesh, 2, rng)
    path = tmp_path / "snap.vtk"
    write_snapshot(Q, {"extra": Q.component(0, 1) * 2.0}, path, "vtk")
    data = parse_legacy_vtk(path.read_text())
    # x varies fastest in the flat arrays
    q11 = data["fields"]["q11"].reshape((9, 9), order="F")
    assert np.max(np.abs(q11 - Q.component(0, 0))) < 1e-14
    assert np.max(np.abs(data["fields"]["extra"].reshape((9, 9), order="F")
                         - 2.0 * Q.component(0, 1))) < 1e-14
    director = data["fields"]["director"]
    norms = np.sqrt(np.sum(director**2, axis=1))
    assert set(np.round(norms, 12)) <= {0.0, 1.0}


def test_vtk_snapshot_3d(tmp_path, rng):
    mesh = build_mesh(3, 5, 1.0)
    Q = random_traceless(mesh, 3, rng)
    path = tmp_path / "snap.vtk"
    write_snapshot(Q, None, path, "vtk")
    data = parse_legacy_vtk(path.read_text())
    assert data["dims"] == (6, 6, 6)
    assert set(data["fields"]) == {"q11", "q12", "q13", "q22", "q23", "q33",
                                   "eigen_gap", "director"}


def test_vtk_writer_deterministic(tmp_path, rng):
    mesh = build_mesh(2, 6, 1.0)
    Q = random_traceless(mesh, 2, rng)
    p1, p2 = tmp_path / "a.vtk", tmp_path / "b.vtk"
    write_snapshot(Q, None, p1, "vtk")
    write_snapshot(Q, None, p2, "vtk")
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_snapshot(tmp_path, rng):
    mesh = build_mesh(2, 6, 1.0)
    Q = random_traceless(mesh, 2, rng)
    path = tmp_path / "snap.csv"
    write_snapshot(Q, None, path, "csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "ix,iy,q11,q12,q22,eigen_gap,dir_x,dir_y"
    assert len(lines) == 1 + 7 * 7
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "0"
    assert float(first[2]) == Q.component(0, 0)[0, 0]


def test_snapshot_rejects_bad_extras(tmp_path, rng):
    mesh = build_mesh(2, 6, 1.0)
    Q = random_traceless(mesh, 2, rng)
    with pytest.raises(ValueError):
        write_snapshot(Q, {"bad": np.zeros((3, 3))}, tmp_path / "x.vtk", "vtk")
    with pytest.raises(ValueError):
        write_snapshot(Q, None, tmp_path / "x.bin", "binary")


# --- command line ----------------------------------------------------------------


RUN_INI = """
[scheme]
initial = hole2d
name = mbp_sesav1

[mesh]
M = 16

[time]
tau = 0.05
T = 0.2

[output]
every = 2
format = vtk
"""


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(RUN_INI)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    assert (out / "diagnostics.csv").exists()
    snaps = sorted(out.glob("snapshot_*.vtk"))
    assert [p.name for p in snaps] == [
        "snapshot_000000.vtk", "snapshot_000002.vtk", "snapshot_000004.vtk"]
    assert "finished mbp_sesav1" in capsys.readouterr().out


def test_cli_run_set_overrides(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(RUN_INI)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out),
                 "--set", "output.format=csv", "--set", "output.every=0"])
    assert code == 0
    assert list(out.glob("snapshot_*.csv"))


def test_cli_presets_lists_all(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("convergence2d", "hole2d", "orient3d"):
        assert name in out


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scheme]\ninitial = hole2d\n[mesh]\nM = two\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    capsys.readouterr()


def test_cli_solver_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[scheme]\ninitial = convergence2d\n[mesh]\nM = 16\n"
        "[model]\nL2 = -0.1\nkappa = 0\n[time]\nT = 20\ntau = 10\n"
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "solver failure" in capsys.readouterr().err


def test_cli_invariant_violation_exit_code(tmp_path, capsys):
    # the literal experiment constant C*=1 is below the valid bulk bound for
    # the hole parameters; the clamp then lifts the energy at step one
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[scheme]\ninitial = hole2d\n[mesh]\nM = 20\n"
        "[model]\nc_star = 1.0\n[time]\ntau = 0.05\nT = 1.0\n"
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
    assert "invariant violation" in capsys.readouterr().err


def test_cli_converge_time(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[scheme]\ninitial = convergence2d\n[mesh]\nM = 8\n"
                   "[time]\nT = 0.25\ntau = 0.25\n")
    out = tmp_path / "out"
    code = main(["converge-time", "--config", str(cfg),
                 "--taus", "1/16,1/32", "--ref-tau", "1/256",
                 "--out", str(out)])
    assert code == 0
    assert (out / "rates.csv").exists()
    assert "err_L2" in capsys.readouterr().out


def test_cli_converge_space(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[scheme]\ninitial = convergence2d\n[mesh]\nM = 8\n"
                   "[time]\nT = 0.2\ntau = 0.05\n")
    out = tmp_path / "out"
    code = main(["converge-space", "--config", str(cfg),
                 "--Ms", "8,16", "--out", str(out)])
    assert code == 0
    text = (out / "rates.csv").read_text()
    assert text.startswith("h,error_grad")
