"""Loaders for the bundled component, NRTL and scenario data files."""

from __future__ import annotations

import hashlib
import sys as _sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .column import ColumnConfig, ControlInput
from .thermo import ComponentSpec, EnthalpyRef, HoldupConfig
from .vle import ChemSystem, NrtlParams

MIXTURES = ("mixture1", "mixture2", "mixture3")


def _data_dir():
    return resources.files("stillsim") / "data"


def _read_toml(traversable) -> dict:
    with traversable.open("rb") as fh:
        return tomllib.load(fh)


def data_file_hashes() -> dict[str, str]:
    """sha256 of every bundled data file, keyed by relative path."""
    out = {}
    root = _data_dir()
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            out[entry.name] = hashlib.sha256(entry.read_bytes()).hexdigest()
    scen = root / "scenarios"
    for entry in sorted(scen.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            out[f"scenarios/{entry.name}"] = hashlib.sha256(entry.read_bytes()).hexdigest()
    return out


def load_components(path: str | Path | None = None) -> dict[str, ComponentSpec]:
    """Component table; a user file may extend or override the bundled one."""
    raw = _read_toml(_data_dir() / "components.toml")
    if path is not None:
        with open(path, "rb") as fh:
            raw.update(tomllib.load(fh))
    out = {}
    for name, rec in raw.items():
        out[name] = ComponentSpec(
            name=name,
            antoine=tuple(rec["antoine"]),
            dippr=tuple(rec["dippr"]),
            validity=tuple(rec.get("validity", (250.0, 450.0))),
        )
    return out


def _nrtl_raw() -> dict:
    return _read_toml(_data_dir() / "nrtl.toml")


def pair_types(mixture: str) -> dict[tuple[int, int], str]:
    """Azeotropic/zeotropic flags per 0-based pair for a bundled mixture."""
    raw = _nrtl_raw()[mixture]
    out = {}
    for key, rec in raw["pairs"].items():
        i, j = (int(t) - 1 for t in key.split("-"))
        out[(i, j)] = rec["type"]
    return out


def available_tags(mixture: str) -> dict[tuple[int, int], list[str]]:
    raw = _nrtl_raw()[mixture]
    out = {}
    for key, rec in raw["pairs"].items():
        i, j = (int(t) - 1 for t in key.split("-"))
        out[(i, j)] = [t for t in ("ref", "alt") if t in rec]
    return out


def pair_params(mixture: str, pair: tuple[int, int], tag: str) -> tuple[float, float, float, float]:
    """Tabulated (a_ij, b_ij, a_ji, b_ji) for a 0-based pair and tag."""
    raw = _nrtl_raw()[mixture]
    i, j = pair
    key = f"{i + 1}-{j + 1}"
    rec = raw["pairs"].get(key)
    if rec is None:
        raise KeyError(f"{mixture} has no pair {key}")
    if tag not in rec:
        raise KeyError(f"{mixture} pair {key} has no {tag!r} parameters")
    return tuple(rec[tag])


def load_system(mixture: str,
                theta: str | Mapping[tuple[int, int], str] = "ref",
                components: list[str] | None = None,
                T_ref: float = 298.15) -> ChemSystem:
    """Build a ChemSystem for a bundled mixture.

    theta is either a uniform tag ("ref"/"alt", falling back to "ref" for
    pairs without an alternative) or a per-pair tag mapping (0-based pairs).
    components optionally restricts to a subsystem, by name.
    """
    raw = _nrtl_raw()[mixture]
    comp_names = raw["components"]
    comp_table = load_components()
    comps = [comp_table[n] for n in comp_names]
    C = len(comps)
    tags = available_tags(mixture)
    pairs = {}
    for (i, j), avail in tags.items():
        if isinstance(theta, str):
            tag = theta if theta in avail else "ref"
        else:
            tag = theta.get((i, j), "ref")
        pairs[(i, j)] = pair_params(mixture, (i, j), tag)
    system = ChemSystem(comps, NrtlParams(C, pairs), EnthalpyRef(T_ref))
    if components is not None:
        system = system.subsystem(components)
    return system


@dataclass
class Scenario:
    """A fully specified run: system, initial conditions, controls, configs."""

    id: str
    mixture: str
    system: ChemSystem
    theta_tags: dict[tuple[int, int], str]
    n_app0: float
    x_app0: np.ndarray
    t_pre: float
    controls: ControlInput
    column: ColumnConfig
    horizon: float = 10000.0
    subinterval: float = 20.0
    elements: int = 12
    collocation_points: int = 3
    stop_pot_moles: float = 0.75
    stop_min_fraction: float = 1e-12

    def __post_init__(self):
        self.x_app0 = np.asarray(self.x_app0, dtype=float)
        if abs(self.x_app0.sum() - 1.0) > 1e-12:
            raise ValueError(f"{self.id}: x_app0 must lie on the simplex")
        if self.n_app0 <= 0:
            raise ValueError(f"{self.id}: n_app0 must be positive")
        if self.t_pre >= 0:
            raise ValueError(f"{self.id}: t_pre must be negative")


def bundled_scenarios() -> list[str]:
    scen = _data_dir() / "scenarios"
    return sorted(e.name[:-5] for e in scen.iterdir() if e.name.endswith(".toml"))


def load_scenario(source: str | Path, theta_override: str | None = None) -> Scenario:
    """Load a scenario by bundled id or file path.

    theta_override replaces the file's per-pair tags: "ref" sets every pair
    to ref; "alt" sets every pair that has an alternative to alt.
    """
    if isinstance(source, (str, Path)) and Path(str(source)).exists():
        with open(source, "rb") as fh:
            raw = tomllib.load(fh)
        sid = raw.get("id", Path(str(source)).stem)
    else:
        trav = _data_dir() / "scenarios" / f"{source}.toml"
        try:
            raw = _read_toml(trav)
        except FileNotFoundError:
            raise FileNotFoundError(
                f"no scenario file and no bundled scenario named {source!r}; "
                f"bundled: {', '.join(bundled_scenarios())}") from None
        sid = raw.get("id", str(source))

    for section in ("init", "controls", "column", "simulation"):
        if section not in raw:
            raise ValueError(f"scenario {sid}: missing [{section}] section")
    mixture = raw["mixture"]
    comp_names = raw.get("components")

    full = _nrtl_raw()[mixture]
    n_parent = len(full["components"])
    tags: dict[tuple[int, int], str] = {}
    for key, tag in raw.get("theta", {}).items():
        i, j = (int(t) - 1 for t in key.split("-"))
        tags[(i, j)] = tag

    if comp_names is not None:
        # scenario tags are in subsystem indices; translate to parent pairs
        idx = [full["components"].index(n) for n in comp_names]
        parent_tags = {}
        for (p, q), tag in tags.items():
            i, j = sorted((idx[p], idx[q]))
            parent_tags[(i, j)] = tag
        tags = parent_tags

    if theta_override is not None:
        avail = available_tags(mixture)
        if comp_names is not None:
            idx = [full["components"].index(n) for n in comp_names]
            subset = {tuple(sorted((idx[p], idx[q])))
                      for p in range(len(idx)) for q in range(p + 1, len(idx))}
        else:
            subset = set(avail)
        tags = {}
        for pair in subset:
            if theta_override in avail[pair]:
                tags[pair] = theta_override
            else:
                tags[pair] = "ref"

    col_raw = raw["column"]
    T_ref = float(col_raw.get("T_ref", 298.15))
    system = load_system(mixture, tags, components=comp_names, T_ref=T_ref)

    S = int(col_raw.get("stages", 10))
    if "n_ref_percent" in col_raw:
        n_ref = float(col_raw["n_ref_percent"]) / 100.0
    else:
        n_ref = float(col_raw.get("n_ref", 0.042))
    holdup = HoldupConfig(n_ref=n_ref, B_ref=float(col_raw.get("B_ref", 5.0)),
                          h=float(col_raw.get("height", 1.0)), S=S)
    sim_raw = raw["simulation"]
    column = ColumnConfig(S=S, holdup=holdup,
                          delta_uniform=float(sim_raw.get("delta", 1e-6)),
                          T_ref=T_ref)
    ctr = raw["controls"]
    controls = ControlInput(epsilon=float(ctr["epsilon"]), P=float(ctr["P"]),
                            Q=float(ctr["Q"]), T_cond=float(ctr["T_cond"]),
                            P_dot=float(ctr.get("P_dot", 0.0)))
    ini = raw["init"]
    return Scenario(
        id=sid, mixture=mixture, system=system, theta_tags=tags,
        n_app0=float(ini["n_app0"]), x_app0=np.asarray(ini["x_app0"], float),
        t_pre=float(ini.get("t_pre", -20.0)), controls=controls, column=column,
        horizon=float(sim_raw.get("horizon", 10000.0)),
        subinterval=float(sim_raw.get("subinterval", 20.0)),
        elements=int(sim_raw.get("elements", 12)),
        collocation_points=int(sim_raw.get("collocation_points", 3)),
        stop_pot_moles=float(sim_raw.get("stop_pot_moles", 0.75)),
        stop_min_fraction=float(sim_raw.get("stop_min_fraction", 1e-12)),
    )
