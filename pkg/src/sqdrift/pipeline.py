"""End-to-end runs: terms -> qDRIFT circuits -> samples -> subspace energy.

Every random choice is drawn from a stream derived from the master seed and
the circuit's ``(k, rid)`` position, so results are independent of the
worker count and of task scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import BoundParams, concentration_profile, evaluate
from .determinant import hartree_fock, sector_dimension
from .f2q import IndexMap, compile_sequence, optimize_layout, sequence_batch
from .hamiltonian import (
    DEFAULT_THRESHOLD,
    MolecularHamiltonian,
    TermDistribution,
    build_hubbard,
    core_orbitals,
    enumerate_terms,
    load_fixture,
    read_fcidump,
    rotate_orbitals,
)
from .qdrift import SEQUENCE_STREAM, SHOTS_STREAM, derive_seed, sample_sequence
from .simulator import run_circuit, sample_bitstrings
from .sqd import collect_subspace, convergence_row, diagonalize, subsample

SUBSAMPLE_STREAM = 2
ORACLE_CAP = 20_000


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and artifacts written so far."""

    def __init__(self, stage: str, message: str, artifacts=()):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.artifacts = list(artifacts)


@dataclass(frozen=True)
class RunConfig:
    input: object
    n_steps: int = 25
    n_rand: int = 500
    shots: int = 512
    k_values: tuple[int, ...] = (1, 2, 3)
    t: float = 1.0
    layout_optimization: bool = True
    recombine: bool = False
    subsample_fractions: tuple[float, ...] = (1.0,)
    truncate_to: int | None = None
    master_seed: int = 0
    tol: float = 1e-8
    threshold: float = DEFAULT_THRESHOLD
    scale_steps_with_k: bool = False
    workers: int = 1
    write_circuits: bool = False
    oracle: bool = True
    bounds_d: int = 3
    bounds_delta: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "subsample_fractions", tuple(float(f) for f in self.subsample_fractions))
        for name in ("n_steps", "n_rand", "shots", "workers"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.k_values or min(self.k_values) < 0 or len(set(self.k_values)) != len(self.k_values):
            raise ConfigError(f"k_values must be distinct non-negative integers, got {self.k_values}")
        if self.t <= 0:
            raise ConfigError(f"t must be positive, got {self.t}")
        if not self.subsample_fractions or any(not 0 < f <= 1 for f in self.subsample_fractions):
            raise ConfigError(f"subsample fractions must lie in (0, 1], got {self.subsample_fractions}")
        if self.truncate_to is not None and self.truncate_to < 1:
            raise ConfigError("truncate_to must be positive")
        if self.tol <= 0 or self.threshold < 0:
            raise ConfigError("tol must be positive and threshold non-negative")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["k_values"] = list(self.k_values)
        doc["subsample_fractions"] = list(self.subsample_fractions)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "input" not in doc:
            raise ConfigError("config needs an 'input'")
        return cls(**doc)


def load_hamiltonian(source, base_dir: Path | None = None) -> MolecularHamiltonian:
    """Resolve ``fixture:<name>``, ``hubbard:<sites>:<t>:<u>:<na>:<nb>[:orbital]``, a model dict, or a path.

    The ``orbital`` basis rotates a Hubbard model into the eigenbasis of its
    hopping matrix, where the aufbau reference is the restricted mean-field state.
    """
    if isinstance(source, dict):
        source = dict(source)
        model = source.pop("model", None)
        if model != "hubbard":
            raise ConfigError(f"unknown model {model!r}")
        h = build_hubbard(int(source["sites"]), float(source.get("t_hop", 1.0)), float(source["u"]),
                          int(source["n_alpha"]), int(source["n_beta"]))
        return _hubbard_basis(h, source.get("basis", "site"))
    text = str(source)
    if text.startswith("fixture:"):
        return load_fixture(text.split(":", 1)[1])
    if text.startswith("hubbard:"):
        fields = text.split(":")
        if len(fields) not in (6, 7):
            raise ConfigError(f"cannot parse Hubbard input {text!r}")
        _, sites, t_hop, u, na, nb = fields[:6]
        h = build_hubbard(int(sites), float(t_hop), float(u), int(na), int(nb))
        return _hubbard_basis(h, fields[6] if len(fields) == 7 else "site")
    path = Path(text)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return read_fcidump(path)


def _hubbard_basis(h: MolecularHamiltonian, basis: str) -> MolecularHamiltonian:
    if basis == "site":
        return h
    if basis == "orbital":
        return rotate_orbitals(h, core_orbitals(h))
    raise ConfigError(f"unknown Hubbard basis {basis!r}")


# --------------------------------------------------------------------------
# circuit tasks

_WORKER: dict = {}


def _init_worker(dist, cfg, sector):
    _WORKER.update(dist=dist, cfg=cfg, sector=sector)


def circuit_task(dist: TermDistribution, cfg: RunConfig, sector, k: int, rid: int):
    """Sample, compile, simulate and measure circuit ``(k, rid)``."""
    seq_seed = derive_seed(cfg.master_seed, k, rid, SEQUENCE_STREAM)
    shot_seed = derive_seed(cfg.master_seed, k, rid, SHOTS_STREAM)
    n_steps = cfg.n_steps * max(k, 1) if cfg.scale_steps_with_k else cfg.n_steps
    seq = sample_sequence(dist, n_steps, k * cfg.t, seq_seed, k)
    if cfg.layout_optimization:
        layout = optimize_layout(sequence_batch(seq, dist), dist.n_modes)
    else:
        layout = IndexMap.identity(dist.n_modes)
    circuit = compile_sequence(seq, dist, layout, hartree_fock(*sector))
    state = run_circuit(circuit)
    batch = sample_bitstrings(state, cfg.shots, shot_seed, layout, sector, k, rid)
    return {
        "k": k,
        "rid": rid,
        "sequence": seq.to_line(),
        "circuit": circuit.to_line() if cfg.write_circuits else None,
        "samples": batch,
        "layout": list(layout.perm),
        "pauli_weight": circuit.pauli_weight,
        "seeds": [k, rid, seq_seed, shot_seed],
    }


def _pooled_task(key):
    return circuit_task(_WORKER["dist"], _WORKER["cfg"], _WORKER["sector"], *key)


def run_circuits(dist: TermDistribution, cfg: RunConfig, sector) -> list[dict]:
    keys = [(k, rid) for k in cfg.k_values for rid in range(1, cfg.n_rand + 1)]
    if cfg.workers == 1:
        out = [circuit_task(dist, cfg, sector, k, rid) for k, rid in keys]
    else:
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker,
                                 initargs=(dist, cfg, sector)) as pool:
            out = list(pool.map(_pooled_task, keys, chunksize=max(1, len(keys) // (4 * cfg.workers))))
    out.sort(key=lambda r: (r["k"], r["rid"]))
    return out


# --------------------------------------------------------------------------
# runs


@dataclass
class RunResult:
    config: RunConfig
    hamiltonian: MolecularHamiltonian
    distribution: TermDistribution
    circuits: list[dict]
    subspace: object
    results: list[tuple[float, object]]
    oracle: dict | None = None
    timing: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        """Energy of the largest subsample fraction."""
        return max(self.results, key=lambda fr: fr[0])[1].energy

    @property
    def batches(self):
        return [c["samples"] for c in self.circuits]


def _oracle_section(h, dist, cfg, subspace, results):
    from .oracle import fci_solve

    fci = fci_solve(h)
    index = {d: i for i, d in enumerate(fci.determinants)}
    captured = [index[d] for d in subspace.determinants]
    weight = float(np.sum(np.abs(fci.vector[captured]) ** 2))
    profile = concentration_profile(fci.vector)
    l_count = subspace.dimension
    params = BoundParams(
        d=cfg.bounds_d, n_steps=cfg.n_steps, n_rand=cfg.n_rand, shots=cfg.shots,
        delta_conf=cfg.bounds_delta, eps_reg=0.0, n_qubits=h.n_qubits, l_important=l_count,
        alpha0=min(1.0, profile.alpha_of(l_count)), beta0=profile.beta_of(l_count),
        lam=dist.lam, t=cfg.t,
    )
    report = evaluate(params, fci.spectrum)
    return {
        "fci_energy": fci.energy,
        "sector_dimension": len(fci.determinants),
        "spectrum": fci.spectrum.to_json(),
        "captured_ground_weight": weight,
        "energy_errors": {str(f): r.energy - fci.energy for f, r in results},
        "bound_params": asdict(params),
        "bounds": report.to_json(),
    }


def execute(cfg: RunConfig, h: MolecularHamiltonian | None = None, base_dir: Path | None = None) -> RunResult:
    """Run every stage in memory."""
    timing = {}
    stage = "hamiltonian"
    try:
        t0 = time.perf_counter()
        if h is None:
            h = load_hamiltonian(cfg.input, base_dir)
        dist = enumerate_terms(h, cfg.threshold)
        if len(dist) == 0:
            raise ValueError("no Hamiltonian terms above the threshold")
        timing[stage] = time.perf_counter() - t0
        sector = (h.n_alpha, h.n_beta)

        stage = "circuits"
        t0 = time.perf_counter()
        circuits = run_circuits(dist, cfg, sector)
        timing[stage] = time.perf_counter() - t0

        stage = "subspace"
        t0 = time.perf_counter()
        subspace = collect_subspace([c["samples"] for c in circuits], cfg.recombine, cfg.truncate_to,
                                    sector=sector, n_orb=h.n_orb)
        results = []
        sub_seed = derive_seed(cfg.master_seed, 0, 0, SUBSAMPLE_STREAM)
        for frac in cfg.subsample_fractions:
            part = subspace if frac == 1.0 else subsample(subspace, frac, sub_seed)
            results.append((frac, diagonalize(part, h, cfg.tol)))
        timing[stage] = time.perf_counter() - t0

        oracle = None
        if cfg.oracle and sector_dimension(h.n_orb, *sector) <= ORACLE_CAP:
            stage = "oracle"
            t0 = time.perf_counter()
            oracle = _oracle_section(h, dist, cfg, subspace, results)
            timing[stage] = time.perf_counter() - t0
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
    return RunResult(cfg, h, dist, circuits, subspace, results, oracle, timing)


def _jsonl(lines) -> str:
    return "".join(line + "\n" for line in lines)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def artifact_texts(run: RunResult) -> dict[str, str]:
    """Serialised per-stage artifacts keyed by file name."""
    h = run.hamiltonian
    reference = run.oracle["fci_energy"] if run.oracle else None
    out = {
        "hamiltonian.json": json.dumps(h.to_json(), indent=1),
        "sequences.jsonl": _jsonl(c["sequence"] for c in run.circuits),
        "samples.jsonl": _jsonl(c["samples"].to_line() for c in run.circuits),
        "layouts.jsonl": _jsonl(json.dumps({"k": c["k"], "rid": c["rid"], "layout": c["layout"],
                                            "pauli_weight": c["pauli_weight"]}, separators=(",", ":"))
                                for c in run.circuits),
        "subspace.json": json.dumps({
            "dimension": run.subspace.dimension,
            "recombined_dimension": run.subspace.recombined_dimension,
            "determinants": [d.to_hex(h.n_orb) for d in run.subspace.determinants],
        }),
        "results.json": json.dumps([{"subsample_fraction": f, **r.to_json()} for f, r in run.results],
                                   indent=1),
        "convergence.csv": _csv_text([convergence_row(f, r, reference) for f, r in run.results]),
    }
    if run.config.write_circuits:
        out["circuits.jsonl"] = _jsonl(c["circuit"] for c in run.circuits)
    if run.oracle is not None:
        out["oracle.json"] = json.dumps(run.oracle, indent=1)
    return out


def build_manifest(run: RunResult, texts: dict[str, str]) -> dict:
    best = max(run.results, key=lambda fr: fr[0])[1]
    return {
        "package": "sqdrift",
        "version": __version__,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
        "config": run.config.to_json(),
        "seeds": {
            "master_seed": run.config.master_seed,
            "derivation": "SeedSequence(master_seed, spawn_key=(k, rid, stream)); "
                          "stream 0 = sequence, 1 = shots, 2 = subsampling",
            "circuits": [c["seeds"] for c in run.circuits],
        },
        "system": {"n_orb": run.hamiltonian.n_orb, "n_alpha": run.hamiltonian.n_alpha,
                   "n_beta": run.hamiltonian.n_beta, "n_terms": len(run.distribution),
                   "lambda": run.distribution.lam},
        "n_circuits": len(run.circuits),
        "energy": best.energy,
        "dimension": best.dimension,
        "recombined_dimension": best.recombined_dimension,
        "fci_energy": run.oracle["fci_energy"] if run.oracle else None,
        "artifacts": {name: _sha256(text) for name, text in sorted(texts.items())},
    }


def run_pipeline(cfg: RunConfig, out_dir: str | Path, base_dir: Path | None = None) -> dict:
    """Execute and write per-stage artifacts plus ``manifest.json`` into ``out_dir``.

    Wall-clock timings go to ``timing.json`` so the manifest itself is
    reproducible byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    try:
        run = execute(cfg, base_dir=base_dir)
    except StageError as exc:
        exc.artifacts = written
        raise
    try:
        texts = artifact_texts(run)
        for name, text in texts.items():
            (out / name).write_text(text, encoding="utf-8")
            written.append(str(out / name))
        manifest = build_manifest(run, texts)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
        written.append(str(out / "manifest.json"))
        (out / "timing.json").write_text(json.dumps(run.timing, indent=1), encoding="utf-8")
    except OSError as exc:
        raise StageError("write", str(exc), written) from exc
    return manifest


def config_from_manifest(manifest: dict) -> RunConfig:
    return RunConfig.from_json(manifest["config"])


# --------------------------------------------------------------------------
# sweeps

SWEEP_AXES = ("n_steps", "n_rand", "subsample_fraction")


def sweep(cfg: RunConfig, axis: str, values, seeds=None, h: MolecularHamiltonian | None = None,
          base_dir: Path | None = None) -> list[dict]:
    """One row per (seed, axis value): subspace dimension, energy and its error.

    ``subsample_fraction`` reuses one pipeline run per seed and only
    re-diagonalises.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    seeds = [cfg.master_seed] if seeds is None else list(seeds)
    h = h if h is not None else load_hamiltonian(cfg.input, base_dir)
    reference = None
    if cfg.oracle and sector_dimension(h.n_orb, h.n_alpha, h.n_beta) <= ORACLE_CAP:
        from .oracle import fci_solve

        reference = fci_solve(h).energy
    quiet = replace(cfg, oracle=False)
    rows = []
    for seed in seeds:
        if axis == "subsample_fraction":
            run = execute(replace(quiet, master_seed=seed, subsample_fractions=tuple(values)), h)
            points = [(f, r) for f, r in run.results]
        else:
            points = []
            for v in values:
                run = execute(replace(quiet, master_seed=seed, **{axis: int(v)}), h)
                points.append((v, max(run.results, key=lambda fr: fr[0])[1]))
        for v, r in points:
            rows.append({
                "axis": axis, "value": v, "seed": seed, "dimension": r.dimension,
                "recombined_dimension": r.recombined_dimension, "energy": r.energy,
                "energy_error": None if reference is None else r.energy - reference,
            })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    return _csv_text(rows)


def median_errors(rows: list[dict]) -> dict:
    """Median ``energy_error`` per axis value, in first-seen value order."""
    by_value: dict = {}
    for row in rows:
        by_value.setdefault(row["value"], []).append(row["energy_error"])
    return {v: float(np.median(errs)) for v, errs in by_value.items()}
