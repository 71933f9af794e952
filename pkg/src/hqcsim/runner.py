"""Scenario execution and result emission.

A run samples the configured density, transports the cloud to each
observation time and extracts the quantum mixture (plus the grid-binned
operator field when a grid is configured).  Results go to one
self-describing JSON file per run and flat columnar CSV files for
downstream plotting.  Output bytes are a pure function of the
configuration and seed; wall-clock timing is kept on the in-memory record
and printed, never serialized.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ScenarioConfig, matrix_to_pairs
from .dynamics import step_schedule, total_energy_batch
from .ensembles import ParticleCloud, sample, transport
from .estimators import (bin_state_histogram, conditional_state,
                         estimate_quantum_state, mc_distance_band,
                         mc_error_band, trace_distance)
from .geometry import SQRT2


@dataclass
class ResultRecord:
    """Outcome of one scenario run."""

    scenario: dict
    mode: str
    observations: list
    compare: Optional[dict]
    steps_total: int
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        # wall-clock is intentionally excluded: result files must be
        # byte-identical across runs of the same configuration and seed.
        doc = {"scenario": self.scenario, "mode": self.mode,
               "steps_total": self.steps_total, "observations": self.observations}
        if self.compare is not None:
            doc["compare"] = self.compare
        return doc


def _cloud_diagnostics(cloud: ParticleCloud, hamiltonian, e_ref) -> dict:
    e_now = total_energy_batch(hamiltonian, cloud.q, cloud.p, cloud.c)
    scale = np.maximum(1.0, np.abs(e_ref))
    nrm = np.einsum("ni,ni->n", cloud.c.conj(), cloud.c).real
    return {"energy_drift_max": float(np.abs((e_now - e_ref) / scale).max()),
            "norm_drift_max": float(np.abs(nrm - 1.0).max())}


def _histogram_payload(hist, mass_floor) -> dict:
    grid = hist.grid
    d = hist.dim
    floor = 10.0 / hist.n_particles if mass_floor is None else mass_floor
    payload = {
        "coordinates": "qp" if grid.includes_momenta else "q",
        "q_bounds": [[a, b] for a, b in grid.q_bounds],
        "q_bins": list(grid.q_bins),
        "cell_volume": grid.cell_volume,
        "captured_weight": hist.total_weight_captured,
        "mass_floor": floor,
        "cells": [],
    }
    if grid.includes_momenta:
        payload["p_bounds"] = [[a, b] for a, b in grid.p_bounds]
        payload["p_bins"] = list(grid.p_bins)
    flat = hist.cells.reshape(grid.n_cells, d, d)
    for i in range(grid.n_cells):
        idx = tuple(int(j) for j in np.unravel_index(i, grid.shape))
        trace = float(np.trace(flat[i]).real)
        cell = {
            "index": list(idx),
            "center": [float(v) for v in grid.cell_center(idx)],
            "trace": trace,
            "matrix": matrix_to_pairs(flat[i]),
        }
        # conditional state is reliable only above the mass floor
        cell["conditional"] = (matrix_to_pairs(conditional_state(hist, idx, floor).matrix)
                               if trace >= floor else None)
        payload["cells"].append(cell)
    payload["outside"] = matrix_to_pairs(hist.outside)
    return payload


def _observe(cloud: ParticleCloud, hamiltonian, grid, e_ref, mass_floor=None) -> dict:
    rho = estimate_quantum_state(cloud)
    entry = {
        "time": cloud.time,
        "quantum_state": matrix_to_pairs(rho.matrix),
        "eigenvalues": [float(v) for v in rho.eigenvalues()],
        "trace": float(rho.matrix.trace().real),
        "mc_error_band": mc_error_band(len(cloud)),
    }
    entry.update(_cloud_diagnostics(cloud, hamiltonian, e_ref))
    if grid is not None:
        hist = bin_state_histogram(cloud, grid)
        entry["histogram"] = _histogram_payload(hist, mass_floor)
        identity = np.abs(hist.cell_sum() + hist.outside - rho.matrix).max()
        entry["estimator_identity_error"] = float(identity)
    return entry


def _advance_to_times(cloud, hamiltonian, times, dt):
    """Yield the cloud at each requested time, transporting sequentially."""
    steps = 0
    current = cloud
    prev = cloud.time
    for t in times:
        leg = t - prev
        if leg != 0.0:
            current = transport(current, hamiltonian, leg, dt)
            n_full, remainder = step_schedule(leg, dt)
            steps += n_full + (1 if remainder else 0)
        prev = t
        yield current, steps


def run_simulate(config: ScenarioConfig) -> ResultRecord:
    """Sample density A, transport it to each observation time and emit
    the estimated quantum mixture plus diagnostics."""
    started = time.perf_counter()
    hamiltonian = config.build_hamiltonian()
    spec = config.build_density("a")
    grid = config.build_grid()
    cloud = sample(spec, config.particles, config.seed, ensemble=0)
    e_ref = total_energy_batch(hamiltonian, cloud.q, cloud.p, cloud.c)

    observations = []
    steps_total = 0
    for snapshot, steps_total in _advance_to_times(cloud, hamiltonian,
                                                   config.observation_times, config.dt):
        observations.append(_observe(snapshot, hamiltonian, grid, e_ref,
                                     config.mass_floor))

    return ResultRecord(scenario=config.to_dict(), mode="simulate",
                        observations=observations, compare=None,
                        steps_total=steps_total,
                        wall_clock_s=time.perf_counter() - started)


def run_compare(config: ScenarioConfig) -> ResultRecord:
    """Run densities A and B with independent sub-seeds and emit the trace
    distance between their quantum mixtures at each observation time."""
    started = time.perf_counter()
    hamiltonian = config.build_hamiltonian()
    spec_a = config.build_density("a")
    spec_b = config.build_density("b")
    grid = config.build_grid()
    n = config.particles
    cloud_a = sample(spec_a, n, config.seed, ensemble=0)
    cloud_b = sample(spec_b, n, config.seed, ensemble=1)
    e_ref_a = total_energy_batch(hamiltonian, cloud_a.q, cloud_a.p, cloud_a.c)
    e_ref_b = total_energy_batch(hamiltonian, cloud_b.q, cloud_b.p, cloud_b.c)

    initial_distance = trace_distance(estimate_quantum_state(cloud_a),
                                      estimate_quantum_state(cloud_b))

    observations = []
    distances = []
    steps_total = 0
    gen_a = _advance_to_times(cloud_a, hamiltonian, config.observation_times, config.dt)
    gen_b = _advance_to_times(cloud_b, hamiltonian, config.observation_times, config.dt)
    for (snap_a, steps_a), (snap_b, steps_b) in zip(gen_a, gen_b):
        steps_total = steps_a + steps_b
        entry_a = _observe(snap_a, hamiltonian, grid, e_ref_a, config.mass_floor)
        entry_b = _observe(snap_b, hamiltonian, grid, e_ref_b, config.mass_floor)
        rho_a = estimate_quantum_state(snap_a)
        rho_b = estimate_quantum_state(snap_b)
        distances.append({"time": snap_a.time,
                          "trace_distance": trace_distance(rho_a, rho_b),
                          "error_band": mc_distance_band(n)})
        observations.append({"time": snap_a.time, "density_a": entry_a,
                             "density_b": entry_b})

    compare = {"initial_distance": initial_distance,
               "error_band": mc_distance_band(n),
               "distances": distances}
    return ResultRecord(scenario=config.to_dict(), mode="compare",
                        observations=observations, compare=compare,
                        steps_total=steps_total,
                        wall_clock_s=time.perf_counter() - started)


def dump_cloud_rows(config: ScenarioConfig, which: str = "a", at_time: float = 0.0):
    """Header and rows for the columnar cloud dump (one row per particle:
    weight, positions, momenta, chart coordinates)."""
    hamiltonian = config.build_hamiltonian()
    spec = config.build_density(which)
    cloud = sample(spec, config.particles, config.seed,
                   ensemble=0 if which == "a" else 1)
    if at_time != 0.0:
        cloud = transport(cloud, hamiltonian, at_time, config.dt)
    k, d = cloud.dof, cloud.dim
    header = (["weight"] + [f"q{i}" for i in range(k)] + [f"p{i}" for i in range(k)]
              + [f"x{j}" for j in range(d)] + [f"y{j}" for j in range(d)])
    X = SQRT2 * cloud.c.real
    Y = SQRT2 * cloud.c.imag
    rows = np.hstack([cloud.weights[:, None], cloud.q, cloud.p, X, Y])
    return header, rows


# ---------------------------------------------------------------------------
# File emission
# ---------------------------------------------------------------------------

def _csv_line(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_result(record: ResultRecord, out_dir) -> list:
    """Write result.json plus the flat time-series CSV; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    result_path = out / "result.json"
    result_path.write_text(json.dumps(record.to_dict(), indent=1) + "\n",
                           encoding="utf-8")
    paths.append(result_path)

    if record.mode == "simulate":
        d = len(record.observations[0]["eigenvalues"]) if record.observations else 0
        lines = ["time,energy_drift_max,norm_drift_max,mc_error_band,"
                 + ",".join(f"eigenvalue_{j}" for j in range(d))]
        for obs in record.observations:
            lines.append(_csv_line([obs["time"], obs["energy_drift_max"],
                                    obs["norm_drift_max"], obs["mc_error_band"]]
                                   + obs["eigenvalues"]))
        series_path = out / "observables.csv"
    else:
        lines = ["time,trace_distance,error_band"]
        for row in record.compare["distances"]:
            lines.append(_csv_line([row["time"], row["trace_distance"],
                                    row["error_band"]]))
        series_path = out / "distances.csv"
    series_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(series_path)
    return paths


def write_cloud_dump(header, rows, out_path) -> Path:
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(_csv_line(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
