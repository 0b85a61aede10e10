"""Experiment configuration: flat key-value text with INI-style sections.

Grammar (no interpolation, no includes)::

    [case]
    kind = flat_torus | product_sphere | mapping_torus
    # flat_torus
    periods = 1,1,1
    resolution = 12,12,12
    split = diagonal | crossed        # crossed only for dimension 2
    winding = 1,0,0
    # product_sphere (circle factor x icosphere)
    circle_length = 6.283185307179586
    circle_segments = 64
    subdivisions = 3
    # mapping_torus
    fiber_periods = 1,1
    fiber_resolution = 8,8
    fiber_split = crossed
    twist = identity | quarter_turn
    segments = 8
    winding = 1

    [solver]
    p = 3            # defaults to the mesh dimension
    tol = 1e-8
    max_iter = 5000

    [spectrum]
    count = 12
    cluster_tol = 0.05

    [perturb]
    mode = conformal | general
    amplitudes = 0.01,0.02,0.05
    seeds = 10
    frequency = 2

    [uniqueness]
    starts = 5
    amplitude = 1.0
    tol = 1e-10

    [bound_study]
    subdivision_levels = 1,2,3
    circle_segments = 64
    perturbations = 20
    noise = 0.1

    [output]
    directory = out
    case_id = run

Unknown sections or keys are rejected so typos fail loudly.
"""

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError

CASE_KINDS = ("flat_torus", "product_sphere", "mapping_torus")

_KNOWN_KEYS = {
    "case": {
        "kind", "periods", "resolution", "split", "winding",
        "circle_length", "circle_segments", "subdivisions",
        "fiber_periods", "fiber_resolution", "fiber_split", "twist", "segments",
    },
    "solver": {"p", "tol", "max_iter"},
    "spectrum": {"count", "cluster_tol"},
    "perturb": {"mode", "amplitudes", "seeds", "frequency"},
    "uniqueness": {"starts", "amplitude", "tol"},
    "bound_study": {"subdivision_levels", "circle_segments", "perturbations", "noise"},
    "output": {"directory", "case_id"},
}


@dataclass
class ExperimentConfig:
    kind: str
    periods: tuple = (1.0, 1.0, 1.0)
    resolution: tuple = (12, 12, 12)
    split: str = "diagonal"
    winding: tuple = (1, 0, 0)
    circle_length: float = 6.283185307179586
    circle_segments: int = 64
    subdivisions: int = 3
    fiber_periods: tuple = (1.0, 1.0)
    fiber_resolution: tuple = (8, 8)
    fiber_split: str = "crossed"
    twist: str = "quarter_turn"
    segments: int = 8
    p: float = None
    tol: float = 1e-8
    max_iter: int = 5000
    spectrum_count: int = 12
    cluster_tol: float = 0.05
    perturb_mode: str = "general"
    amplitudes: tuple = (0.01, 0.02, 0.05)
    seeds: int = 10
    frequency: int = 2
    uniq_starts: int = 5
    uniq_amplitude: float = 1.0
    uniq_tol: float = 1e-10
    subdivision_levels: tuple = (1, 2, 3)
    bound_circle_segments: int = 64
    bound_perturbations: int = 20
    bound_noise: float = 0.1
    out_dir: str = "out"
    case_id: str = "run"


def _floats(text):
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from exc


def _ints(text):
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"expected a list of integers, got {text!r}") from exc


def parse_config(path):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    if "case" not in parser or "kind" not in parser["case"]:
        raise ConfigError("config needs [case] kind = ...")
    kind = parser["case"]["kind"].strip()
    if kind not in CASE_KINDS:
        raise ConfigError(f"kind must be one of {CASE_KINDS}, got {kind!r}")

    cfg = ExperimentConfig(kind=kind)
    case = parser["case"]
    if "periods" in case:
        cfg.periods = _floats(case["periods"])
    if "resolution" in case:
        cfg.resolution = _ints(case["resolution"])
    if "split" in case:
        cfg.split = case["split"].strip()
    if "winding" in case:
        cfg.winding = _ints(case["winding"])
    elif kind == "mapping_torus":
        cfg.winding = (1,)
    if "circle_length" in case:
        cfg.circle_length = float(case["circle_length"])
    if "circle_segments" in case:
        cfg.circle_segments = int(case["circle_segments"])
    if "subdivisions" in case:
        cfg.subdivisions = int(case["subdivisions"])
    if "fiber_periods" in case:
        cfg.fiber_periods = _floats(case["fiber_periods"])
    if "fiber_resolution" in case:
        cfg.fiber_resolution = _ints(case["fiber_resolution"])
    if "fiber_split" in case:
        cfg.fiber_split = case["fiber_split"].strip()
    if "twist" in case:
        cfg.twist = case["twist"].strip()
        if cfg.twist not in ("identity", "quarter_turn"):
            raise ConfigError(f"twist must be identity or quarter_turn, got {cfg.twist!r}")
    if "segments" in case:
        cfg.segments = int(case["segments"])
    if kind == "mapping_torus" and len(cfg.winding) == 3:
        cfg.winding = (1,)

    if "solver" in parser:
        s = parser["solver"]
        if "p" in s:
            cfg.p = float(s["p"])
        if "tol" in s:
            cfg.tol = float(s["tol"])
        if "max_iter" in s:
            cfg.max_iter = int(s["max_iter"])
    if "spectrum" in parser:
        s = parser["spectrum"]
        if "count" in s:
            cfg.spectrum_count = int(s["count"])
        if "cluster_tol" in s:
            cfg.cluster_tol = float(s["cluster_tol"])
    if "perturb" in parser:
        s = parser["perturb"]
        if "mode" in s:
            cfg.perturb_mode = s["mode"].strip()
            if cfg.perturb_mode not in ("conformal", "general"):
                raise ConfigError(f"perturb mode must be conformal or general")
        if "amplitudes" in s:
            cfg.amplitudes = _floats(s["amplitudes"])
            if any(a < 0 for a in cfg.amplitudes):
                raise ConfigError("amplitudes must be >= 0")
            if list(cfg.amplitudes) != sorted(cfg.amplitudes):
                raise ConfigError("amplitudes must be sorted ascending")
        if "seeds" in s:
            cfg.seeds = int(s["seeds"])
        if "frequency" in s:
            cfg.frequency = int(s["frequency"])
    if "uniqueness" in parser:
        s = parser["uniqueness"]
        if "starts" in s:
            cfg.uniq_starts = int(s["starts"])
        if "amplitude" in s:
            cfg.uniq_amplitude = float(s["amplitude"])
        if "tol" in s:
            cfg.uniq_tol = float(s["tol"])
    if "bound_study" in parser:
        s = parser["bound_study"]
        if "subdivision_levels" in s:
            cfg.subdivision_levels = _ints(s["subdivision_levels"])
        if "circle_segments" in s:
            cfg.bound_circle_segments = int(s["circle_segments"])
        if "perturbations" in s:
            cfg.bound_perturbations = int(s["perturbations"])
        if "noise" in s:
            cfg.bound_noise = float(s["noise"])
    if "output" in parser:
        s = parser["output"]
        if "directory" in s:
            cfg.out_dir = s["directory"].strip()
        if "case_id" in s:
            cfg.case_id = s["case_id"].strip()
    return cfg
