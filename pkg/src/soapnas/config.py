"""Run configuration: one flat ``key = value`` file drives the whole pipeline.

Unknown keys are errors so experiment typos fail loudly. The defaults are
the desk preset: CPU-tractable sizes that still exercise every stage.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from . import cellspace as cs
from . import gbpredictor as gb
from . import searcher
from . import supernet as sn
from .errors import BadConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    # search space
    space_max_nodes: int = 5
    space_max_edges: int = 7
    # synthetic data
    data_n_maps: int = 300
    data_height: int = 32
    data_width: int = 32
    data_hotspot_quantile: float = 0.1
    data_val_frac: float = 1 / 6
    data_test_frac: float = 1 / 6
    # macro network
    macro_channels: int = 16
    macro_n_cells: int = 3
    macro_calibration_maps: int = 16
    # one-shot supernets
    supernet_epochs: int = 8
    supernet_lr: float = 0.02
    supernet_batch_size: int = 16
    supernet_ghost_size: int = 8
    supernet_momentum: float = 0.9
    k: int = 5
    # candidate sets
    sets_n_per_set: int = 60
    sets_overlap: float = 0.5
    include_singletons: bool = False
    # augmentation
    factor_x: int = 7
    # standalone noise campaign (also the predictor's ground-truth cells)
    noise_n_archs: int = 12
    noise_n_retrains: int = 4
    noise_epochs: int = 6
    # standalone trainings outside the campaign (finalists, baseline)
    standalone_epochs: int = 6
    # predictor
    predictor_n_trees: int = 200
    predictor_max_depth: int = 4
    predictor_shrinkage: float = 0.1
    predictor_min_samples_leaf: int = 2
    predictor_cv_folds: int = 5
    # search
    search_n_scored: int = 500
    search_n_finalists: int = 5
    # execution
    workers: int = 2

    def validate(self) -> "RunConfig":
        if self.k < 1:
            raise BadConfig("k must be >= 1")
        if self.factor_x < 1:
            raise BadConfig("factor_x must be >= 1")
        if self.workers < 1:
            raise BadConfig("workers must be >= 1")
        if self.data_val_frac + self.data_test_frac >= 1.0:
            raise BadConfig("val and test fractions must leave room for train")
        # constructing the sub-configs runs their own validation
        self.space_config()
        self.macro_config()
        self.supernet_hyper()
        self.standalone_hyper(self.noise_epochs)
        self.predictor_hyper()
        self.search_budget()
        self.sample_plan()
        if self.noise_n_archs < 1 or self.noise_n_retrains < 2:
            raise BadConfig("noise campaign needs >= 1 arch and >= 2 retrains")
        return self

    # -- sub-config builders ------------------------------------------------

    def space_config(self) -> cs.SpaceConfig:
        return cs.SpaceConfig(max_nodes=self.space_max_nodes, max_edges=self.space_max_edges)

    def macro_config(self) -> sn.MacroConfig:
        return sn.MacroConfig(
            in_channels=3,
            channels=self.macro_channels,
            n_cells=self.macro_n_cells,
            calibration_maps=self.macro_calibration_maps,
        )

    def supernet_hyper(self) -> sn.TrainHyper:
        return sn.TrainHyper(
            epochs=self.supernet_epochs,
            lr=self.supernet_lr,
            batch_size=self.supernet_batch_size,
            ghost_size=self.supernet_ghost_size,
            momentum=self.supernet_momentum,
        )

    def standalone_hyper(self, epochs: int) -> sn.TrainHyper:
        return sn.TrainHyper(
            epochs=epochs,
            lr=self.supernet_lr,
            batch_size=self.supernet_batch_size,
            ghost_size=self.supernet_ghost_size,
            momentum=self.supernet_momentum,
        )

    def predictor_hyper(self) -> gb.PredictorHyper:
        return gb.PredictorHyper(
            n_trees=self.predictor_n_trees,
            max_depth=self.predictor_max_depth,
            shrinkage=self.predictor_shrinkage,
            min_samples_leaf=self.predictor_min_samples_leaf,
            seed=self.seed,
        )

    def search_budget(self) -> searcher.SearchBudget:
        return searcher.SearchBudget(
            n_scored=self.search_n_scored, n_finalists=self.search_n_finalists, seed=self.seed
        )

    def sample_plan(self, pinned=()) -> "object":
        from .soapcore import SamplePlan

        return SamplePlan(
            n_per_set=self.sets_n_per_set, overlap=self.sets_overlap, pinned=tuple(pinned)
        )

    def split_fractions(self):
        return (
            1.0 - self.data_val_frac - self.data_test_frac,
            self.data_val_frac,
            self.data_test_frac,
        )


def desk_config(**overrides) -> RunConfig:
    """The reference configuration for acceptance experiments."""
    return replace(RunConfig(), **overrides).validate()


def tiny_config(**overrides) -> RunConfig:
    """A minutes-scale configuration exercising every stage."""
    base = RunConfig(
        data_n_maps=60,
        data_height=16,
        data_width=16,
        data_val_frac=0.25,
        data_test_frac=0.25,
        macro_channels=8,
        macro_n_cells=2,
        macro_calibration_maps=8,
        supernet_epochs=2,
        k=2,
        sets_n_per_set=8,
        sets_overlap=0.5,
        factor_x=3,
        noise_n_archs=3,
        noise_n_retrains=2,
        noise_epochs=1,
        standalone_epochs=1,
        predictor_n_trees=50,
        predictor_cv_folds=3,
        search_n_finalists=2,
    )
    return replace(base, **overrides).validate()


_BOOL_TRUE = {"true", "yes", "1", "on"}
_BOOL_FALSE = {"false", "no", "0", "off"}


def _parse_value(raw: str, kind, key: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise BadConfig(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise BadConfig(f"{key}: expected {kind.__name__}, got {raw!r}") from exc


def config_to_text(config: RunConfig) -> str:
    lines = ["# soapnas run configuration"]
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Strict parse: every non-comment line is ``key = value`` with a known key."""
    known = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise BadConfig(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise BadConfig(f"line {lineno}: unknown key {key!r}")
        kind = kinds.get(known[key], str) if isinstance(known[key], str) else known[key]
        values[key] = _parse_value(raw, kind, key)
    config = replace(base or RunConfig(), **values)
    return config.validate()


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise BadConfig(f"cannot read config file {path}: {exc}") from exc
    return config_from_text(text, base=base)
