import hashlib
import json
from importlib.resources import files

import pytest

from sqdrift import oracle
from sqdrift.pipeline import (
    ConfigError,
    RunConfig,
    StageError,
    config_from_manifest,
    execute,
    load_hamiltonian,
    median_errors,
    run_pipeline,
    sweep,
)

SMALL = dict(input="fixture:h4_chain_sto3g", n_steps=10, n_rand=6, shots=64, k_values=(1, 2), master_seed=3)


def test_run_writes_stage_artifacts(tmp_path):
    manifest = run_pipeline(RunConfig(**SMALL), tmp_path)
    for name, digest in manifest["artifacts"].items():
        text = (tmp_path / name).read_text(encoding="utf-8")
        assert hashlib.sha256(text.encode()).hexdigest() == digest
    assert {"samples.jsonl", "sequences.jsonl", "subspace.json", "oracle.json"} <= set(manifest["artifacts"])
    assert manifest["n_circuits"] == 12
    assert (tmp_path / "timing.json").exists() and "timing" not in manifest
    lines = (tmp_path / "samples.jsonl").read_text().splitlines()
    keys = [(json.loads(line)["k"], json.loads(line)["rid"]) for line in lines]
    assert keys == sorted(keys) and keys[0] == (1, 1)


def test_energy_is_variational(tmp_path):
    manifest = run_pipeline(RunConfig(**SMALL), tmp_path)
    assert manifest["energy"] >= manifest["fci_energy"] - 1e-9
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert 0 < doc["captured_ground_weight"] <= 1 + 1e-12


def test_manifest_replay_reproduces(tmp_path):
    first = run_pipeline(RunConfig(**SMALL), tmp_path / "a")
    second = run_pipeline(config_from_manifest(first), tmp_path / "b")
    assert first == second


def test_parallel_workers_match_serial():
    serial = execute(RunConfig(**SMALL, oracle=False))
    pooled = execute(RunConfig(**{**SMALL, "oracle": False, "workers": 2}))
    assert [c["samples"].to_line() for c in serial.circuits] == [c["samples"].to_line() for c in pooled.circuits]
    assert serial.energy == pooled.energy


def test_seed_changes_samples():
    a = execute(RunConfig(**SMALL, oracle=False))
    b = execute(RunConfig(**{**SMALL, "master_seed": 4, "oracle": False}))
    assert [c["sequence"] for c in a.circuits] != [c["sequence"] for c in b.circuits]


def test_subsample_fractions_nested_energies():
    run = execute(RunConfig(**{**SMALL, "subsample_fractions": (0.25, 0.5, 1.0)}))
    energies = [r.energy for _, r in run.results]
    dims = [r.dimension for _, r in run.results]
    assert dims == sorted(dims)
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_recombination_and_truncation():
    base = execute(RunConfig(**SMALL, oracle=False))
    rec = execute(RunConfig(**{**SMALL, "recombine": True, "oracle": False}))
    trunc = execute(RunConfig(**{**SMALL, "truncate_to": 3, "oracle": False}))
    assert rec.subspace.dimension >= base.subspace.dimension
    assert trunc.subspace.dimension == 3


def test_scaled_steps_per_krylov_index():
    run = execute(RunConfig(**{**SMALL, "scale_steps_with_k": True, "oracle": False}))
    steps = {c["k"]: json.loads(c["sequence"])["n_steps"] for c in run.circuits}
    assert steps == {1: 10, 2: 20}


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(input="x", n_steps=0)
    with pytest.raises(ConfigError):
        RunConfig(input="x", k_values=(1, 1))
    with pytest.raises(ConfigError):
        RunConfig(input="x", subsample_fractions=(1.5,))
    with pytest.raises(ConfigError):
        RunConfig.from_json({"input": "x", "bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_json({"n_steps": 3})


def test_stage_errors_are_tagged(tmp_path):
    with pytest.raises(StageError) as info:
        run_pipeline(RunConfig(input=str(tmp_path / "missing.fcidump")), tmp_path / "out")
    assert info.value.stage == "hamiltonian"
    with pytest.raises(StageError) as info:
        execute(RunConfig(input="fixture:h2_sto3g", threshold=1e9))
    assert info.value.stage == "hamiltonian"


def test_hamiltonian_inputs(tmp_path):
    h = load_hamiltonian("hubbard:4:1:2:2:2")
    assert h.n_orb == 4
    rotated = load_hamiltonian({"model": "hubbard", "sites": 4, "u": 2, "n_alpha": 2, "n_beta": 2,
                                "basis": "orbital"})
    assert oracle.fci_solve(rotated).energy == pytest.approx(oracle.fci_solve(h).energy, abs=1e-10)
    src = load_hamiltonian("fixture:h2_sto3g")
    path = tmp_path / "h2.fcidump"
    path.write_text(files("sqdrift").joinpath("data/h2_sto3g.fcidump").read_text())
    assert load_hamiltonian("h2.fcidump", tmp_path).e_core == src.e_core
    with pytest.raises(ConfigError):
        load_hamiltonian({"model": "ising"})
    with pytest.raises(ConfigError):
        load_hamiltonian("hubbard:4:1:2:2:2:momentum")


def test_sweep_rows_and_medians():
    rows = sweep(RunConfig(**SMALL), "n_rand", [2, 6], seeds=[0, 1])
    assert len(rows) == 4 and {r["seed"] for r in rows} == {0, 1}
    assert all(r["energy_error"] >= -1e-9 for r in rows)
    med = median_errors(rows)
    assert list(med) == [2, 6]
    frac = sweep(RunConfig(**SMALL), "subsample_fraction", [0.5, 1.0])
    assert [r["value"] for r in frac] == [0.5, 1.0]
    with pytest.raises(ConfigError):
        sweep(RunConfig(**SMALL), "shots", [1])
