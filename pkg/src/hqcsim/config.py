"""Scenario configuration: parsing, validation and emission.

Scenarios are declared in a single TOML file with nested sections.
Complex matrices appear as nested arrays of [re, im] pairs, one inner
array per row.  ``parse_config`` normalizes the file into a
ScenarioConfig; ``emit_config`` writes the normalized form back out and
round-trips semantically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .dynamics import (FreeClassical, HarmonicClassical, HybridHamiltonian,
                       LinearQCoupling, PolynomialClassical, ZeroClassical,
                       ZeroInteraction)
from .ensembles import (DensitySpec, GaussianClassical, HaarQuantum,
                        PointMassClassical, PointMixtureQuantum,
                        QuadraticFormQuantum)
from .errors import ConfigInvalid
from .estimators import ClassicalGrid
from .geometry import SQRT2, QuantumPoint

OBSERVATION_GRID_ATOL = 1e-9


def matrix_to_pairs(m: np.ndarray) -> list:
    """Complex matrix -> nested rows of [re, im] pairs."""
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m, dtype=complex)]


def pairs_to_matrix(rows, errors, where) -> Optional[np.ndarray]:
    try:
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError
        return arr[..., 0] + 1j * arr[..., 1]
    except (ValueError, TypeError):
        errors.append(f"{where}: expected a square matrix of [re, im] pairs")
        return None


def vector_to_pairs(v: np.ndarray) -> list:
    return [[float(x.real), float(x.imag)] for x in np.asarray(v, dtype=complex)]


def pairs_to_vector(rows, errors, where) -> Optional[np.ndarray]:
    try:
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError
        return arr[:, 0] + 1j * arr[:, 1]
    except (ValueError, TypeError):
        errors.append(f"{where}: expected an array of [re, im] pairs")
        return None


@dataclass
class DensityConfig:
    classical_kind: str            # gaussian | point
    q0: list
    p0: list
    sigma_q: Optional[list]        # gaussian only
    sigma_p: Optional[list]
    quantum_kind: str              # haar | point_mixture | quadratic_form
    components: Optional[list] = None      # [(weight, amplitude vector)] for mixtures
    base: Optional[np.ndarray] = None      # quadratic_form: f(q) = base + q_1 * linear_q
    linear_q: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        classical = {"kind": self.classical_kind,
                     "q0": [float(v) for v in self.q0],
                     "p0": [float(v) for v in self.p0]}
        if self.classical_kind == "gaussian":
            classical["sigma_q"] = [float(v) for v in self.sigma_q]
            classical["sigma_p"] = [float(v) for v in self.sigma_p]
        quantum = {"kind": self.quantum_kind}
        if self.quantum_kind == "point_mixture":
            quantum["components"] = [
                {"weight": float(w), "state": vector_to_pairs(c)}
                for w, c in self.components]
        elif self.quantum_kind == "quadratic_form":
            quantum["base"] = matrix_to_pairs(self.base)
            if self.linear_q is not None:
                quantum["linear_q"] = matrix_to_pairs(self.linear_q)
        return {"classical": classical, "quantum": quantum}

    def build(self, dim: int) -> DensitySpec:
        if self.classical_kind == "gaussian":
            classical = GaussianClassical(self.q0, self.p0, self.sigma_q, self.sigma_p)
        else:
            classical = PointMassClassical(self.q0, self.p0)
        if self.quantum_kind == "haar":
            quantum = HaarQuantum(dim)
        elif self.quantum_kind == "point_mixture":
            comps = []
            for w, c in self.components:
                comps.append((QuantumPoint(SQRT2 * c.real, SQRT2 * c.imag), w))
            quantum = PointMixtureQuantum(comps)
        else:
            base = self.base
            lin = self.linear_q

            def op(cp, base=base, lin=lin):
                f = base.copy()
                if lin is not None:
                    f = f + cp.q[0] * lin
                return f

            quantum = QuadraticFormQuantum(dim, op)
        return DensitySpec(classical, quantum)


@dataclass
class ScenarioConfig:
    hilbert_dim: int
    classical_dof: int
    hbar: float
    classical_kind: str                    # harmonic | free | zero | polynomial
    classical_params: dict
    h_q: np.ndarray
    interaction_kind: str                  # linear_q | none
    interaction_strength: float
    interaction_operator: Optional[np.ndarray]
    dt: float
    horizon: float
    observation_times: list
    particles: int
    seed: int
    mass_floor: Optional[float]
    density_a: DensityConfig
    density_b: Optional[DensityConfig]
    grid_coordinates: Optional[str]        # "q" | "qp" | None
    grid_q_bounds: Optional[list] = None
    grid_q_bins: Optional[list] = None
    grid_p_bounds: Optional[list] = None
    grid_p_bins: Optional[list] = None
    output_directory: str = "runs/out"

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        doc = {
            "system": {"hilbert_dim": self.hilbert_dim,
                       "classical_dof": self.classical_dof,
                       "hbar": float(self.hbar)},
            "classical_hamiltonian": {"kind": self.classical_kind,
                                      **{k: v for k, v in self.classical_params.items()}},
            "quantum_hamiltonian": {"matrix": matrix_to_pairs(self.h_q)},
            "interaction": {"kind": self.interaction_kind},
            "integrator": {"dt": float(self.dt), "horizon": float(self.horizon),
                           "observation_times": [float(t) for t in self.observation_times]},
            "ensemble": {"particles": self.particles, "seed": self.seed},
            "output": {"directory": self.output_directory},
        }
        if self.interaction_kind == "linear_q":
            doc["interaction"]["strength"] = float(self.interaction_strength)
            doc["interaction"]["operator"] = matrix_to_pairs(self.interaction_operator)
        if self.mass_floor is not None:
            doc["ensemble"]["mass_floor"] = float(self.mass_floor)
        doc["ensemble"]["density_a"] = self.density_a.to_dict()
        if self.density_b is not None:
            doc["ensemble"]["density_b"] = self.density_b.to_dict()
        if self.grid_coordinates is not None:
            grid = {"coordinates": self.grid_coordinates,
                    "q_bounds": [[float(a), float(b)] for a, b in self.grid_q_bounds],
                    "q_bins": [int(b) for b in self.grid_q_bins]}
            if self.grid_coordinates == "qp":
                grid["p_bounds"] = [[float(a), float(b)] for a, b in self.grid_p_bounds]
                grid["p_bins"] = [int(b) for b in self.grid_p_bins]
            doc["grid"] = grid
        return doc

    # ------------------------------------------------------------------
    def build_hamiltonian(self) -> HybridHamiltonian:
        k = self.classical_dof
        params = self.classical_params
        if self.classical_kind == "harmonic":
            h_c = HarmonicClassical(params.get("mass", 1.0), params.get("frequency", 1.0), k)
        elif self.classical_kind == "free":
            h_c = FreeClassical(params.get("mass", 1.0), k)
        elif self.classical_kind == "zero":
            h_c = ZeroClassical(k)
        else:
            h_c = PolynomialClassical(params["terms"])
        if self.interaction_kind == "linear_q":
            v = LinearQCoupling(self.interaction_strength, self.interaction_operator, k)
        else:
            v = ZeroInteraction(self.hilbert_dim, k)
        return HybridHamiltonian(h_c, self.h_q, v, hbar=self.hbar)

    def build_density(self, which: str = "a") -> DensitySpec:
        cfg = self.density_a if which == "a" else self.density_b
        if cfg is None:
            raise ConfigInvalid([f"ensemble.density_{which}: not configured"])
        return cfg.build(self.hilbert_dim)

    def build_grid(self) -> Optional[ClassicalGrid]:
        if self.grid_coordinates is None:
            return None
        if self.grid_coordinates == "qp":
            return ClassicalGrid(self.grid_q_bounds, self.grid_q_bins,
                                 self.grid_p_bounds, self.grid_p_bins)
        return ClassicalGrid(self.grid_q_bounds, self.grid_q_bins)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _get(doc, section, key, errors, default=None, required=False):
    sec = doc.get(section, {})
    if key not in sec:
        if required:
            errors.append(f"{section}.{key}: missing required field")
        return default
    return sec[key]


def _parse_density(node: dict, k: int, d: int, errors, where: str) -> Optional[DensityConfig]:
    cl = node.get("classical", {})
    qu = node.get("quantum", {})
    ckind = cl.get("kind", "")
    if ckind not in ("gaussian", "point"):
        errors.append(f"{where}.classical.kind: expected 'gaussian' or 'point', got {ckind!r}")
        return None
    q0 = list(np.atleast_1d(cl.get("q0", [])))
    p0 = list(np.atleast_1d(cl.get("p0", [])))
    if len(q0) != k or len(p0) != k:
        errors.append(f"{where}.classical: q0/p0 must have length {k}")
        return None
    sigma_q = sigma_p = None
    if ckind == "gaussian":
        sigma_q = list(np.broadcast_to(np.atleast_1d(cl.get("sigma_q", [])), (k,))) if cl.get("sigma_q") is not None else None
        sigma_p = list(np.broadcast_to(np.atleast_1d(cl.get("sigma_p", [])), (k,))) if cl.get("sigma_p") is not None else None
        if sigma_q is None or sigma_p is None:
            errors.append(f"{where}.classical: gaussian factor needs sigma_q and sigma_p")
            return None
        if any(s <= 0 for s in sigma_q + sigma_p):
            errors.append(f"{where}.classical: covariance entries must be positive")
            return None
    qkind = qu.get("kind", "")
    if qkind not in ("haar", "point_mixture", "quadratic_form"):
        errors.append(f"{where}.quantum.kind: expected 'haar', 'point_mixture' or "
                      f"'quadratic_form', got {qkind!r}")
        return None
    components = None
    base = linear_q = None
    if qkind == "point_mixture":
        raw = qu.get("components", [])
        if not raw:
            errors.append(f"{where}.quantum.components: mixture needs components")
            return None
        components = []
        total = 0.0
        for i, comp in enumerate(raw):
            w = float(comp.get("weight", -1))
            c = pairs_to_vector(comp.get("state"), errors, f"{where}.quantum.components[{i}].state")
            if c is None:
                return None
            if c.size != d:
                errors.append(f"{where}.quantum.components[{i}]: state length must be {d}")
                return None
            if w < 0:
                errors.append(f"{where}.quantum.components[{i}]: weight must be non-negative")
                return None
            total += w
            components.append((w, c))
        if abs(total - 1.0) > 1e-12:
            errors.append(f"{where}.quantum.components: weights sum to {total!r}, expected 1")
            return None
    elif qkind == "quadratic_form":
        base = pairs_to_matrix(qu.get("base"), errors, f"{where}.quantum.base")
        if base is None:
            return None
        if "linear_q" in qu:
            linear_q = pairs_to_matrix(qu.get("linear_q"), errors, f"{where}.quantum.linear_q")
            if linear_q is None:
                return None
        if base.shape[0] != d or (linear_q is not None and linear_q.shape[0] != d):
            errors.append(f"{where}.quantum: operator dimension must be {d}")
            return None
    return DensityConfig(ckind, [float(v) for v in q0], [float(v) for v in p0],
                         None if sigma_q is None else [float(v) for v in sigma_q],
                         None if sigma_p is None else [float(v) for v in sigma_p],
                         qkind, components, base, linear_q)


def parse_config_text(text: str) -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid([f"TOML syntax error: {exc}"])
    errors: list[str] = []

    d = int(_get(doc, "system", "hilbert_dim", errors, required=True) or 0)
    k = int(_get(doc, "system", "classical_dof", errors, default=0))
    hbar = float(_get(doc, "system", "hbar", errors, default=1.0))
    if d < 2:
        errors.append("system.hilbert_dim: must be at least 2")
    if k < 0:
        errors.append("system.classical_dof: must be non-negative")
    if hbar <= 0:
        errors.append("system.hbar: must be positive")

    ckind = str(_get(doc, "classical_hamiltonian", "kind", errors, default="zero"))
    cparams = {}
    if ckind in ("harmonic", "free"):
        cparams["mass"] = float(_get(doc, "classical_hamiltonian", "mass", errors, default=1.0))
        if ckind == "harmonic":
            cparams["frequency"] = float(
                _get(doc, "classical_hamiltonian", "frequency", errors, default=1.0))
        if cparams["mass"] <= 0:
            errors.append("classical_hamiltonian.mass: must be positive")
    elif ckind == "polynomial":
        terms = _get(doc, "classical_hamiltonian", "terms", errors, required=True) or []
        if k != 1:
            errors.append("classical_hamiltonian: polynomial form requires classical_dof = 1")
        cparams["terms"] = [[float(a), int(i), int(j)] for a, i, j in terms]
    elif ckind != "zero":
        errors.append(f"classical_hamiltonian.kind: unknown kind {ckind!r}")

    hq_raw = _get(doc, "quantum_hamiltonian", "matrix", errors, required=True)
    h_q = pairs_to_matrix(hq_raw, errors, "quantum_hamiltonian.matrix") if hq_raw is not None else None
    if h_q is not None and h_q.shape[0] != d:
        errors.append(f"quantum_hamiltonian.matrix: dimension must be {d}")
        h_q = None
    if h_q is not None and np.abs(h_q - h_q.conj().T).max() > 1e-12:
        errors.append("quantum_hamiltonian.matrix: must be Hermitian")

    ikind = str(_get(doc, "interaction", "kind", errors, default="none"))
    strength = 0.0
    i_op = None
    if ikind == "linear_q":
        if k < 1:
            errors.append("interaction: linear_q coupling requires classical_dof >= 1")
        strength = float(_get(doc, "interaction", "strength", errors, default=0.0))
        raw = _get(doc, "interaction", "operator", errors, required=True)
        if raw is not None:
            i_op = pairs_to_matrix(raw, errors, "interaction.operator")
            if i_op is not None and i_op.shape[0] != d:
                errors.append(f"interaction.operator: dimension must be {d}")
            if i_op is not None and np.abs(i_op - i_op.conj().T).max() > 1e-12:
                errors.append("interaction.operator: must be Hermitian")
    elif ikind != "none":
        errors.append(f"interaction.kind: unknown kind {ikind!r}")

    dt = float(_get(doc, "integrator", "dt", errors, required=True) or 0)
    horizon = float(_get(doc, "integrator", "horizon", errors, required=True) or 0)
    if dt <= 0:
        errors.append("integrator.dt: must be positive")
    if horizon <= 0:
        errors.append("integrator.horizon: must be positive")
    obs = _get(doc, "integrator", "observation_times", errors, default=None)
    if obs is None:
        obs = [0.0, horizon]
    obs = [float(t) for t in obs]
    if not obs:
        errors.append("integrator.observation_times: need at least one time")
    if any(t < -OBSERVATION_GRID_ATOL or t > horizon + OBSERVATION_GRID_ATOL for t in obs):
        errors.append("integrator.observation_times: must lie within [0, horizon]")
    if any(b <= a for a, b in zip(obs, obs[1:])):
        errors.append("integrator.observation_times: must be strictly increasing")

    particles = int(_get(doc, "ensemble", "particles", errors, required=True) or 0)
    seed = _get(doc, "ensemble", "seed", errors, required=True)
    if particles < 1:
        errors.append("ensemble.particles: must be at least 1")
    if seed is None or int(seed) < 0:
        errors.append("ensemble.seed: must be a non-negative integer")
        seed = 0
    seed = int(seed)
    mass_floor = _get(doc, "ensemble", "mass_floor", errors, default=None)
    if mass_floor is not None:
        mass_floor = float(mass_floor)
        if mass_floor <= 0:
            errors.append("ensemble.mass_floor: must be positive")

    ens = doc.get("ensemble", {})
    density_a = density_b = None
    if "density_a" not in ens:
        errors.append("ensemble.density_a: missing required section")
    else:
        density_a = _parse_density(ens["density_a"], k, d, errors, "ensemble.density_a")
    if "density_b" in ens:
        density_b = _parse_density(ens["density_b"], k, d, errors, "ensemble.density_b")

    grid_coords = None
    gq_bounds = gq_bins = gp_bounds = gp_bins = None
    if "grid" in doc:
        gnode = doc["grid"]
        grid_coords = str(gnode.get("coordinates", "q"))
        if grid_coords not in ("q", "qp"):
            errors.append("grid.coordinates: expected 'q' or 'qp'")
        gq_bounds = [tuple(map(float, b)) for b in gnode.get("q_bounds", [])]
        gq_bins = [int(b) for b in np.atleast_1d(gnode.get("q_bins", []))]
        if len(gq_bounds) != k or len(gq_bins) != k:
            errors.append(f"grid: q_bounds and q_bins must cover {k} dof(s)")
        if grid_coords == "qp":
            gp_bounds = [tuple(map(float, b)) for b in gnode.get("p_bounds", [])]
            gp_bins = [int(b) for b in np.atleast_1d(gnode.get("p_bins", []))]
            if len(gp_bounds) != k or len(gp_bins) != k:
                errors.append(f"grid: p_bounds and p_bins must cover {k} dof(s)")
        for axis, (bounds, bins) in (("q", (gq_bounds, gq_bins)),
                                     ("p", (gp_bounds or [], gp_bins or []))):
            if any(b < 1 for b in bins):
                errors.append(f"grid.{axis}_bins: bin counts must be at least 1")
            if any(not (np.isfinite(lo) and np.isfinite(hi) and lo < hi)
                   for lo, hi in bounds):
                errors.append(f"grid.{axis}_bounds: bounds must be finite with lo < hi")

    out_dir = str(_get(doc, "output", "directory", errors, default="runs/out"))

    if errors:
        raise ConfigInvalid(errors)

    return ScenarioConfig(
        hilbert_dim=d, classical_dof=k, hbar=hbar,
        classical_kind=ckind, classical_params=cparams, h_q=h_q,
        interaction_kind=ikind, interaction_strength=strength,
        interaction_operator=i_op, dt=dt, horizon=horizon,
        observation_times=obs, particles=particles, seed=seed,
        mass_floor=mass_floor, density_a=density_a, density_b=density_b,
        grid_coordinates=grid_coords, grid_q_bounds=gq_bounds,
        grid_q_bins=gq_bins, grid_p_bounds=gp_bounds, grid_p_bins=gp_bins,
        output_directory=out_dir)


def parse_config(path) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        out = repr(float(v))
        return out
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, dict):
        inner = ", ".join(f"{k} = {_format_value(val)}" for k, val in v.items())
        return "{ " + inner + " }"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit value of type {type(v).__name__}")


def _emit_section(name: str, node: dict, lines: list):
    scalars = {k: v for k, v in node.items() if not isinstance(v, dict)}
    subsections = {k: v for k, v in node.items() if isinstance(v, dict)}
    if scalars or not subsections:
        lines.append(f"[{name}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {_format_value(v)}")
        lines.append("")
    for k, v in subsections.items():
        _emit_section(f"{name}.{k}", v, lines)


def emit_config(config: ScenarioConfig) -> str:
    lines: list[str] = []
    for section, node in config.to_dict().items():
        _emit_section(section, node, lines)
    return "\n".join(lines).rstrip() + "\n"
