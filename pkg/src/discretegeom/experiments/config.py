"""Experiment configuration: defaults per experiment and INI round-tripping.

Config files are plain INI. Angles may be written as multiples of ``pi``
(``pi/2``, ``3*pi/2``, ``-pi/4``). Seed lists accept ``0..9`` ranges as well
as comma-separated values.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..geometry import DET_FLOOR
from ..network import ACTIVATIONS, TrainConfig
from ..numerics import InvalidInputError
from ..tasks import GATES, TaskSpec

EXPERIMENTS = ("fig1", "depth", "richlazy", "noise", "robustness", "lindyn", "bayes", "curvature-oracle")

_PI = math.pi
_ANGLE_RE = re.compile(r"^([+-]?\d*\.?\d*(?:e[+-]?\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?$")


@dataclass
class ExperimentConfig:
    name: str
    task: TaskSpec = field(default_factory=TaskSpec)
    arch: tuple = (4, 4, 4, 1)
    hidden_activation: str = "tanh"
    init_scale: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)
    grid_resolution: int = 64
    det_floor: float = DET_FLOOR
    init_scales: tuple = ()
    noise_sigmas: tuple = ()
    noise_variances: tuple = ()
    embed_dims: tuple = ()
    out_dir: str = "runs"
    seeds: tuple = tuple(range(10))
    options: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise InvalidInputError(f"unknown experiment {self.name!r}")
        if not self.seeds:
            raise InvalidInputError("seed list must be nonempty")
        if len(self.arch) < 2 or any(int(w) < 1 for w in self.arch):
            raise InvalidInputError(f"bad architecture {self.arch}")
        if self.hidden_activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.hidden_activation!r}")
        if self.grid_resolution < 5:
            raise InvalidInputError("geometry grid needs at least 5 points per axis")
        if self.init_scale < 0 or any(s < 0 for s in self.init_scales):
            raise InvalidInputError("init scales must be >= 0")
        if any(s < 0 for s in self.noise_sigmas) or any(v < 0 for v in self.noise_variances):
            raise InvalidInputError("noise levels must be >= 0")
        if any(int(d) < self.arch[0] for d in self.embed_dims):
            raise InvalidInputError("embedding dims must be >= the manifold input dim")
        self.arch = tuple(int(w) for w in self.arch)
        self.seeds = tuple(int(s) for s in self.seeds)

    def option(self, key: str):
        try:
            return self.options[key]
        except KeyError:
            raise InvalidInputError(f"experiment {self.name!r} needs option {key!r}") from None

    def threshold(self, key: str) -> float:
        try:
            return float(self.thresholds[key])
        except KeyError:
            raise InvalidInputError(f"experiment {self.name!r} needs threshold {key!r}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """sha256 over every field except the output directory."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- defaults

HOLDOUT_SQUARE = (0.5 * _PI, 1.5 * _PI, 0.5 * _PI, 1.5 * _PI)


def default_config(name: str) -> ExperimentConfig:
    """Calibrated defaults; see the shipped INI files for the same values."""
    return dataclasses.replace(_defaults(name), out_dir=f"runs/{name}")


def _defaults(name: str) -> ExperimentConfig:
    if name == "fig1":
        return ExperimentConfig(
            name,
            arch=(4, 4, 4, 1),
            init_scale=0.5,
            train=TrainConfig(learning_rate=1.0, epochs=1500, snapshot_every=500),
            grid_resolution=64,
            options={"band_halfwidth": _PI / 8, "center_radius": _PI / 4, "top_fraction": 0.05,
                     "rotated_alpha": _PI / 4, "curvature_layer": 1, "trace_layer": 1},
            thresholds={"accuracy_min": 0.99, "cos_sin_ratio_max": 0.1, "trace_ratio_min": 2.0,
                        "center_fraction_min": 0.9, "alignment_min": 0.95},
        )
    if name == "depth":
        return ExperimentConfig(
            name,
            arch=(4, 4, 4, 1),
            init_scale=0.5,
            train=TrainConfig(learning_rate=1.0, epochs=1500, snapshot_every=500),
            grid_resolution=64,
            options={"shallow_width": 8, "slice_theta2": _PI / 4, "slice_resolution": 256},
            thresholds={"accuracy_min": 0.99, "trace_corr_min": 0.5, "sign_change_excess_min": 0.0},
        )
    if name == "richlazy":
        return ExperimentConfig(
            name,
            arch=(4, 100, 1),
            train=TrainConfig(learning_rate=2.0, epochs=3000, snapshot_every=250,
                              holdout=HOLDOUT_SQUARE, keep_weights=True),
            grid_resolution=64,
            init_scales=(0.1, 16.0),
            options={"top_fraction": 0.05},
            thresholds={"rich_holdout_min": 0.9, "holdout_gap_min": 0.2,
                        "pr_order_violations_max": 0.0, "top_curvature_ratio_min": 1.0},
        )
    if name == "robustness":
        return ExperimentConfig(
            name,
            arch=(4, 100, 1),
            train=TrainConfig(learning_rate=2.0, epochs=3000, snapshot_every=3000),
            grid_resolution=32,
            init_scales=(0.1, 16.0),
            noise_variances=(0.0, 0.05, 0.1, 0.2, 0.4),
            embed_dims=(4, 16, 64),
            options={"noise_repeats": 4},
            thresholds={"gap_growth_min": 0.0, "task_noise_diff_max": 0.05},
        )
    if name == "noise":
        return ExperimentConfig(
            name,
            arch=(4, 100, 1),
            init_scale=0.2,
            train=TrainConfig(learning_rate=2.0, epochs=3000, snapshot_every=3000),
            grid_resolution=64,
            noise_sigmas=(0.0, 0.1, 0.2, 0.4, 0.6),
            seeds=(0, 1, 2),
            options={"posterior_sigma": 0.5, "slice_theta2": _PI / 4, "slice_resolution": 256,
                     "curvature_layer": 1, "k_max": 1},
            thresholds={"spearman_max": -0.8, "peak_increases_max": 0.0, "slice_mse_max": 0.01},
        )
    if name == "lindyn":
        return ExperimentConfig(
            name,
            task=TaskSpec("AND", 0.0, "torus"),
            arch=(4, 4, 1),
            hidden_activation="identity",
            init_scale=0.1,
            train=TrainConfig(learning_rate=0.05, epochs=1500, loss="mse", snapshot_every=1,
                              freeze_biases=True),
            grid_resolution=32,
            options={"u0": 0.01, "skip_epochs": 5, "tanh_phase_fraction": 0.5},
            thresholds={"linear_deviation_max": 0.05, "tanh_deviation_max": 0.15,
                        "perp_change_max": 1e-8},
        )
    if name == "bayes":
        return ExperimentConfig(
            name,
            noise_sigmas=(0.1, 0.3, 0.5, 0.8),
            seeds=(0,),
            options={"mc_sigma": 0.5, "mc_samples": 1_000_000, "mc_bins": 64, "k_max": 1,
                     "curve_resolution": 256},
            thresholds={"mc_max_se": 3.0, "slope_increases_max": 0.0},
        )
    if name == "curvature-oracle":
        return ExperimentConfig(
            name,
            grid_resolution=128,
            seeds=(0,),
            options={"torus_R": 2.0, "torus_r": 1.0, "sphere_R": 1.0, "sphere_margin": 0.2},
            thresholds={"oracle_error_max": 1e-4, "constant_error_max": 1e-10},
        )
    raise InvalidInputError(f"unknown experiment {name!r}")


# ---------------------------------------------------------------- parsing

def parse_angle(text: str) -> float:
    """Float or multiple of pi: ``1.5``, ``pi``, ``-pi/4``, ``3*pi/2``, ``0.5pi``."""
    s = str(text).strip().lower()
    m = _ANGLE_RE.match(s)
    if not m:
        return float(s)
    coef, denom = m.groups()
    c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
    return c * _PI / (float(denom) if denom else 1.0)


def parse_seeds(text: str) -> tuple:
    """``"3"``, ``"0..9"`` (inclusive) or ``"1,4,7"``."""
    s = str(text).strip()
    if ".." in s:
        lo, hi = (int(p) for p in s.split(".."))
        if hi < lo:
            raise InvalidInputError(f"empty seed range {s!r}")
        return tuple(range(lo, hi + 1))
    out = tuple(int(p) for p in s.split(",") if p.strip())
    if not out:
        raise InvalidInputError("seed list must be nonempty")
    return out


def format_seeds(seeds) -> str:
    seeds = tuple(seeds)
    if len(seeds) > 1 and seeds == tuple(range(seeds[0], seeds[-1] + 1)):
        return f"{seeds[0]}..{seeds[-1]}"
    return ", ".join(str(s) for s in seeds)


def _floats(text: str) -> tuple:
    return tuple(parse_angle(p) for p in str(text).split(",") if p.strip())


def _ints(text: str) -> tuple:
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _scalar(text: str):
    s = str(text).strip()
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return parse_angle(s)
    except ValueError:
        return s


def _bool(text: str) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"not a boolean: {text!r}")


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt_value(x) for x in v)
    if isinstance(v, float):
        return _fmt_angle(v) or repr(v)
    return str(v)


def _fmt_angle(v: float):
    """``k*pi/d`` text for exact multiples of pi with d a power of two, else None.

    Power-of-two denominators keep the parse round trip bit-exact.
    """
    if v == 0.0:
        return None
    for den in (1, 2, 4, 8):
        num = round(v * den / _PI)
        if num != 0 and abs(num) <= 16 * den and num * (_PI / den) == v:
            head = {1: "", -1: "-"}.get(num, f"{num}*")
            return f"{head}pi" + (f"/{den}" if den > 1 else "")
    return None


_TRAIN_FIELDS = {
    "learning_rate": float, "epochs": int, "loss": str, "grid_resolution": int,
    "noise_sigma": float, "snapshot_every": int, "freeze_biases": _bool,
    "keep_weights": _bool,
}


def load_config(path, name: str = None) -> ExperimentConfig:
    """Read an INI file on top of the defaults of the named experiment.

    ``name`` falls back to ``[experiment] name`` in the file.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with Path(path).open() as fh:
        cp.read_file(fh)
    file_name = cp.get("experiment", "name", fallback=None)
    name = name or file_name
    if name is None:
        raise InvalidInputError(f"{path}: no experiment name given")
    if file_name is not None and file_name != name:
        raise InvalidInputError(f"{path} configures {file_name!r}, not {name!r}")
    return apply_sections(default_config(name), cp)


def apply_sections(cfg: ExperimentConfig, cp: configparser.ConfigParser) -> ExperimentConfig:
    known = {"experiment", "task", "network", "train", "geometry", "sweep", "options", "thresholds"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise InvalidInputError(f"unknown config sections: {sorted(unknown)}")
    kw = {}
    if cp.has_section("experiment"):
        sec = cp["experiment"]
        _check_keys(sec, {"name", "out_dir", "seeds"})
        if "out_dir" in sec:
            kw["out_dir"] = sec["out_dir"]
        if "seeds" in sec:
            kw["seeds"] = parse_seeds(sec["seeds"])
    if cp.has_section("task"):
        sec = cp["task"]
        _check_keys(sec, {"gate", "alpha", "domain"})
        gate = sec.get("gate", cfg.task.gate).upper()
        if gate not in GATES:
            raise InvalidInputError(f"unknown gate {gate!r}")
        kw["task"] = TaskSpec(gate, parse_angle(sec.get("alpha", str(cfg.task.alpha))),
                              sec.get("domain", cfg.task.domain))
    if cp.has_section("network"):
        sec = cp["network"]
        _check_keys(sec, {"arch", "hidden_activation", "init_scale"})
        if "arch" in sec:
            kw["arch"] = _ints(sec["arch"])
        if "hidden_activation" in sec:
            kw["hidden_activation"] = sec["hidden_activation"]
        if "init_scale" in sec:
            kw["init_scale"] = float(sec["init_scale"])
    if cp.has_section("train"):
        sec = cp["train"]
        _check_keys(sec, set(_TRAIN_FIELDS) | {"holdout", "box"})
        tkw = {k: conv(sec[k]) for k, conv in _TRAIN_FIELDS.items() if k in sec}
        if "holdout" in sec:
            h = sec["holdout"].strip().lower()
            tkw["holdout"] = None if h in ("", "none") else _floats(h)
        if "box" in sec:
            tkw["box"] = _floats(sec["box"])
        kw["train"] = dataclasses.replace(cfg.train, **tkw)
    if cp.has_section("geometry"):
        sec = cp["geometry"]
        _check_keys(sec, {"grid_resolution", "det_floor"})
        if "grid_resolution" in sec:
            kw["grid_resolution"] = int(sec["grid_resolution"])
        if "det_floor" in sec:
            kw["det_floor"] = float(sec["det_floor"])
    if cp.has_section("sweep"):
        sec = cp["sweep"]
        _check_keys(sec, {"init_scales", "noise_sigmas", "noise_variances", "embed_dims"})
        for k in ("init_scales", "noise_sigmas", "noise_variances"):
            if k in sec:
                kw[k] = _floats(sec[k])
        if "embed_dims" in sec:
            kw["embed_dims"] = _ints(sec["embed_dims"])
    if cp.has_section("options"):
        kw["options"] = {**cfg.options, **{k: _scalar(v) for k, v in cp["options"].items()}}
    if cp.has_section("thresholds"):
        kw["thresholds"] = {**cfg.thresholds, **{k: float(v) for k, v in cp["thresholds"].items()}}
    return dataclasses.replace(cfg, **kw)


def _check_keys(section, allowed: set) -> None:
    extra = set(section) - allowed
    if extra:
        raise InvalidInputError(f"unknown keys in [{section.name}]: {sorted(extra)}")


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that :func:`load_config` reads back to an equal config."""
    t = cfg.train
    lines = [
        "[experiment]",
        f"name = {cfg.name}",
        f"out_dir = {cfg.out_dir}",
        f"seeds = {format_seeds(cfg.seeds)}",
        "",
        "[task]",
        f"gate = {cfg.task.gate}",
        f"alpha = {_fmt_value(float(cfg.task.alpha))}",
        f"domain = {cfg.task.domain}",
        "",
        "[network]",
        f"arch = {_fmt_value(cfg.arch)}",
        f"hidden_activation = {cfg.hidden_activation}",
        f"init_scale = {_fmt_value(float(cfg.init_scale))}",
        "",
        "[train]",
    ]
    for k, conv in _TRAIN_FIELDS.items():
        v = getattr(t, k)
        lines.append(f"{k} = {_fmt_value(float(v) if conv is float else v)}")
    lines.append(f"holdout = {'none' if t.holdout is None else _fmt_value(tuple(map(float, t.holdout)))}")
    lines.append(f"box = {_fmt_value(tuple(map(float, t.box)))}")
    lines += [
        "",
        "[geometry]",
        f"grid_resolution = {cfg.grid_resolution}",
        f"det_floor = {_fmt_value(float(cfg.det_floor))}",
        "",
        "[sweep]",
        f"init_scales = {_fmt_value(tuple(map(float, cfg.init_scales)))}",
        f"noise_sigmas = {_fmt_value(tuple(map(float, cfg.noise_sigmas)))}",
        f"noise_variances = {_fmt_value(tuple(map(float, cfg.noise_variances)))}",
        f"embed_dims = {_fmt_value(cfg.embed_dims)}",
        "",
        "[options]",
        *(f"{k} = {_fmt_value(v)}" for k, v in cfg.options.items()),
        "",
        "[thresholds]",
        *(f"{k} = {_fmt_value(float(v))}" for k, v in cfg.thresholds.items()),
    ]
    return "\n".join(lines) + "\n"
