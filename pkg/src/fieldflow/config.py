"""Plain-text run configuration (``key = value`` lines, ``#`` comments).

Every tunable has a registered key; unknown keys are rejected so a typo
can never silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from fieldflow.fasrm import DEFAULT_WEIGHTS, FasrmConfig
from fieldflow.flow import SamplerConfig
from fieldflow.task import TRANSITIONS, FieldTask
from fieldflow.velocity_net.optim import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(n):
    def parse(text: str):
        vals = tuple(float(x) for x in text.split(","))
        if n and len(vals) != n:
            raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
        return vals

    return parse


def _ints(n):
    def parse(text: str):
        vals = tuple(int(x) for x in text.split(","))
        if n and len(vals) != n:
            raise ValueError(f"expected {n} comma-separated integers, got {text!r}")
        return vals

    return parse


def _tasks(text: str):
    return tuple(FieldTask.parse(part) for part in text.split(","))


def _optional_int(text: str):
    return None if text.strip() == "auto" else int(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, FieldTask):
        return str(value)
    return str(value)


# key -> (parser, default)
SCHEMA = {
    "out_dir": (str, "run"),
    "seed": (int, 0),
    "data.n": (int, 20),
    "data.shape": (_ints(3), (16, 16, 16)),
    "data.tasks": (_tasks, (FieldTask("T1", "64mT", "3T"), FieldTask("T1", "3T", "7T"))),
    "data.n_ellipsoids": (int, 6),
    "data.texture_amp": (float, 0.1),
    "model.hidden": (_ints(0), (16, 16, 16)),
    "train.lr0": (float, 1e-4),
    "train.beta1": (float, 0.5),
    "train.beta2": (float, 0.999),
    "train.epsilon": (float, 1e-8),
    "train.total_iters": (int, 1000),
    "train.decay_start": (_optional_int, None),
    "train.batch_size": (int, 1),
    "fasrm.lambda_freq": (float, 0.1),
    "fasrm.lambda_spat": (float, 1.0),
    "fasrm.alpha": (float, 1.0),
    "fasrm.cutoffs": (_floats(2), (1 / 3, 2 / 3)),
    "fasrm.focal_grad": (_bool, False),
    "sampler.steps": (int, 20),
    "preprocess.plo": (float, 0.5),
    "preprocess.phi": (float, 99.5),
    "preprocess.target_z_mm": (float, 1.0),
    "preprocess.target_shape": (_ints(3), (256, 256, 160)),
}
for _src, _dst in TRANSITIONS:
    SCHEMA[f"fasrm.weights.{_src}_to_{_dst}"] = (_floats(3), DEFAULT_WEIGHTS[f"{_src}_to_{_dst}"])


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({key: default for key, (_, default) in SCHEMA.items()})

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls.defaults()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            cfg.set(key, value, where=f"{source}:{lineno}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, str(path))

    def set(self, key: str, value, where: str = "override"):
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
        self.values[key] = value

    def __getitem__(self, key):
        return self.values[key]

    def resolved_text(self) -> str:
        return "".join(f"{key} = {_fmt(self.values[key])}\n" for key in sorted(self.values))

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                lr0=self["train.lr0"],
                beta1=self["train.beta1"],
                beta2=self["train.beta2"],
                epsilon=self["train.epsilon"],
                total_iters=self["train.total_iters"],
                decay_start=self["train.decay_start"],
                batch_size=self["train.batch_size"],
                seed=self["seed"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def fasrm_config(self) -> FasrmConfig:
        weights = {
            key.removeprefix("fasrm.weights."): val
            for key, val in self.values.items()
            if key.startswith("fasrm.weights.")
        }
        try:
            return FasrmConfig(
                lambda_freq=self["fasrm.lambda_freq"],
                alpha=self["fasrm.alpha"],
                lambda_spat=self["fasrm.lambda_spat"],
                cutoffs=self["fasrm.cutoffs"],
                weights=weights,
                focal_grad=self["fasrm.focal_grad"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sampler_config(self, seed=None) -> SamplerConfig:
        try:
            return SamplerConfig(self["sampler.steps"], self["seed"] if seed is None else seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
