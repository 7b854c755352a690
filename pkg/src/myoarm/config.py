"""Flat key-value configuration for experiments.

The file format is one `section.key = value` assignment per line, with `#`
comments and blank lines ignored. Values are parsed as int, float, bool, or
string; comma-separated values become lists. Keys are case-insensitive.

Example::

    experiment.kind = data_efficiency
    experiment.task = smooth-reach
    experiment.morphologies = muscle, torque
    experiment.seeds = 5
    grid.c = 0.05, 0.15, 0.3
    optimizer.generations = 50
    arm.l1 = 0.3
"""

from dataclasses import dataclass, field

EXPERIMENT_KINDS = ("data_efficiency", "sigma_sweep", "tpred_sweep",
                    "robustness_weights", "ablation", "ball_serve",
                    "pd_baseline", "lowpass_baseline")


def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines into a flat dict of typed values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        value = value.strip()
        if "," in value:
            out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def section(mapping: dict, name: str) -> dict:
    """All keys under `name.` with the prefix stripped."""
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in mapping.items()
            if k.startswith(prefix)}


def _as_list(value):
    if value is None:
        return None
    return list(value) if isinstance(value, list) else [value]


def _seed_list(value):
    """An int n means seeds 0..n-1; a list is taken verbatim."""
    if isinstance(value, list):
        seeds = [int(v) for v in value]
    else:
        n = int(value)
        seeds = list(range(n))
    if not seeds:
        raise ValueError("need at least one seed")
    return seeds


@dataclass
class ExperimentConfig:
    """One experiment sweep: a kind, a task, morphologies, grids, and seeds."""

    kind: str = "data_efficiency"
    task: str = "smooth-reach"
    morphologies: list = field(default_factory=lambda: ["muscle", "torque"])
    c_grid: list = field(default_factory=lambda: [0.05, 0.15, 0.3])
    sigma_grid: list = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    tpred_grid: list = field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5])
    masses: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0])
    ablations: list = field(default_factory=lambda: ["none", "fl", "fv", "actdyn"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    population: int = 36
    generations: int = 50
    sigma: float = 0.2
    c: float = 0.3
    tpred: float = 0.3
    mpc_resolution: float = 0.01
    warm_generations: int = 20
    refine_budget: int = 50
    out_dir: str = "results"
    arm_overrides: dict = field(default_factory=dict)
    weight_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(
                f"unknown experiment kind {self.kind!r}; expected one of "
                f"{EXPERIMENT_KINDS}")
        if not self.morphologies:
            raise ValueError("morphology list is empty")
        for name, grid in (("c", self.c_grid), ("sigma", self.sigma_grid),
                           ("tpred", self.tpred_grid), ("masses", self.masses)):
            if not grid:
                raise ValueError(f"{name} grid is empty")
            if any(v <= 0 for v in grid):
                raise ValueError(f"{name} grid values must be positive")
        if not self.ablations:
            raise ValueError("ablation list is empty")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.population < 4 or self.generations < 1:
            raise ValueError("optimizer budget too small")
        if self.sigma <= 0 or self.c <= 0 or self.tpred <= 0:
            raise ValueError("sigma, c, and tpred must be positive")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        exp = section(mapping, "experiment")
        grid = section(mapping, "grid")
        opt = section(mapping, "optimizer")
        mpc = section(mapping, "mpc")
        kw = {}
        if "kind" in exp:
            kw["kind"] = str(exp["kind"])
        if "task" in exp:
            kw["task"] = str(exp["task"])
        elif kw.get("kind") == "ball_serve":
            kw["task"] = "ball-serve"
        if "morphologies" in exp:
            kw["morphologies"] = [str(m) for m in _as_list(exp["morphologies"])]
        if "seeds" in exp:
            kw["seeds"] = _seed_list(exp["seeds"])
        if "out_dir" in exp:
            kw["out_dir"] = str(exp["out_dir"])
        if "ablations" in exp:
            kw["ablations"] = [str(a) for a in _as_list(exp["ablations"])]
        if "c" in grid:
            kw["c_grid"] = [float(v) for v in _as_list(grid["c"])]
        if "sigma" in grid:
            kw["sigma_grid"] = [float(v) for v in _as_list(grid["sigma"])]
        if "tpred" in grid:
            kw["tpred_grid"] = [float(v) for v in _as_list(grid["tpred"])]
        if "masses" in grid:
            kw["masses"] = [float(v) for v in _as_list(grid["masses"])]
        if "population" in opt:
            kw["population"] = int(opt["population"])
        if "generations" in opt:
            kw["generations"] = int(opt["generations"])
        if "sigma" in opt:
            kw["sigma"] = float(opt["sigma"])
        if "c" in opt:
            kw["c"] = float(opt["c"])
        if "tpred" in mpc:
            kw["tpred"] = float(mpc["tpred"])
        if "resolution" in mpc:
            kw["mpc_resolution"] = float(mpc["resolution"])
        if "warm_generations" in mpc:
            kw["warm_generations"] = int(mpc["warm_generations"])
        if "refine_budget" in mpc:
            kw["refine_budget"] = int(mpc["refine_budget"])
        kw["arm_overrides"] = section(mapping, "arm")
        kw["weight_overrides"] = section(mapping, "weights")
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        return cls.from_mapping(load_config(path))
