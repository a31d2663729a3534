"""Experiment orchestration: dataset -> model -> encode -> recover -> CSV.

A single configuration describes a dataset, a grid of refinement levels,
measurement counts, and recovery variants, and a master seed. Every random
object (sample cloud, held-out targets, per-cell ensembles) is derived from
the master seed with stable integer tags, so rerunning a configuration
reproduces the output file byte for byte. Because of that, wall-clock
runtimes are only recorded when explicitly requested; the column is zero
otherwise.
"""

import re
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import load_mnist, sample_sphere
from .errors import ConfigError
from .gmra import PointCloud, build_gmra
from .measure import MeasurementEnsemble, quantize
from .recovery import CenterSignCache, oms, oms_simple, recover_center_only

CSV_HEADER = "dataset,j,m,variant,trials,mean_rel_err,std_rel_err,infeasible,mean_runtime_ms,seed"

_SIMPLE_RE = re.compile(r"^oms-simple(?:\((\d+(?:\.\d+)?)\))?$")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    j_list: list
    m_list: list
    trials: int = 100
    variants: list = field(default_factory=lambda: ["oms"])
    search: str = "exhaustive"
    beam_width: int = 10
    R: float = 1.5
    seed: int = 0
    d: int | None = None
    j_min: int | None = None
    j_max: int | None = None
    holdout: bool = True
    measure_runtime: bool = False
    output: str | None = None

    @classmethod
    def from_dict(cls, raw):
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError("unknown configuration fields", fields=unknown)
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self):
        bad = []
        if not isinstance(self.dataset, dict) or "type" not in self.dataset:
            bad.append("dataset")
        if not self.j_list:
            bad.append("j_list")
        if not self.m_list or any(m < 1 or m > 10**6 for m in self.m_list):
            bad.append("m_list")
        if self.trials < 1:
            bad.append("trials")
        if not self.variants:
            bad.append("variants")
        else:
            for v in self.variants:
                try:
                    parse_variant(v, self.R)
                except ConfigError:
                    bad.append(f"variants[{v}]")
        if self.search not in ("exhaustive", "beam"):
            bad.append("search")
        if self.beam_width < 1:
            bad.append("beam_width")
        if self.R <= 0:
            bad.append("R")
        if bad:
            raise ConfigError("invalid configuration", fields=bad)
        kind = self.dataset.get("type")
        if kind == "synthetic-sphere":
            missing = [k for k in ("d", "D", "n") if k not in self.dataset]
            if missing or self.dataset.get("n", 0) < 1:
                raise ConfigError(
                    "synthetic-sphere dataset needs d, D, n",
                    fields=[f"dataset.{k}" for k in missing] or ["dataset.n"],
                )
        elif kind == "mnist":
            missing = [k for k in ("path", "digit", "n") if k not in self.dataset]
            if missing:
                raise ConfigError(
                    "mnist dataset needs path, digit, n",
                    fields=[f"dataset.{k}" for k in missing],
                )
            if self.d is None:
                raise ConfigError(
                    "mnist experiments need an explicit intrinsic dimension",
                    fields=["d"],
                )
        else:
            raise ConfigError("unknown dataset type", fields=["dataset.type"])


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    j: int
    m: int
    variant: str
    trials: int
    mean_rel_err: float
    std_rel_err: float
    infeasible: int
    mean_runtime_ms: float
    seed: int

    def to_csv(self):
        return ",".join(
            [
                self.dataset,
                repr(self.j),
                repr(self.m),
                self.variant,
                repr(self.trials),
                repr(self.mean_rel_err),
                repr(self.std_rel_err),
                repr(self.infeasible),
                repr(self.mean_runtime_ms),
                repr(self.seed),
            ]
        )


def parse_variant(name, default_R=1.5):
    """Split a variant tag into (kind, R); R only matters for the disk solver."""
    if name == "oms":
        return "oms", None
    if name == "oms-plus":
        return "plus", None
    if name == "center":
        return "center", None
    match = _SIMPLE_RE.match(name)
    if match:
        return "simple", float(match.group(1)) if match.group(1) else float(default_R)
    raise ConfigError("unknown variant", fields=[name])


def derived_seed(*parts):
    """Stable 64-bit seed derived from integer parts."""
    seq = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(seq.generate_state(1, np.uint64)[0])


def _prepare_data(config):
    kind = config.dataset["type"]
    if kind == "synthetic-sphere":
        d, D, n = (config.dataset[k] for k in ("d", "D", "n"))
        extra = config.trials if config.holdout else 0
        cloud = sample_sphere(d, D, n + extra, derived_seed(config.seed, 1))
        train = PointCloud(cloud.data[:n], normalized=True)
        if config.holdout:
            test = cloud.data[n:]
        else:
            if config.trials > n:
                raise ConfigError(
                    "trials exceed training size without holdout", fields=["trials"]
                )
            test = cloud.data[: config.trials]
        label = f"sphere-d{d}-D{D}-n{n}"
        intrinsic = config.d if config.d is not None else d
        return train, np.asarray(test), label, intrinsic
    # mnist
    ds = config.dataset
    extra = config.trials if config.holdout else 0
    cloud = load_mnist(ds["path"], ds["digit"], ds["n"] + extra)
    n = min(ds["n"], cloud.n)
    if config.holdout:
        if cloud.n < n + config.trials:
            raise ConfigError(
                f"only {cloud.n} images available for {n} training points "
                f"plus {config.trials} held-out trials",
                fields=["trials"],
            )
        test = cloud.data[n : n + config.trials]
    else:
        if config.trials > n:
            raise ConfigError(
                "trials exceed training size without holdout", fields=["trials"]
            )
        test = cloud.data[: config.trials]
    train = PointCloud(cloud.data[:n], normalized=cloud.normalized)
    label = f"mnist-{ds['digit']}-n{n}"
    return train, np.asarray(test), label, config.d


def run_experiment(config, gmra=None):
    """Run the full (j, m, variant) grid of a configuration.

    Builds (or reuses) the model once, then recovers every held-out target
    in every grid cell; each trial's ensemble is derived from
    (seed, j, m, trial) and shared across variants so comparisons are
    paired. Returns the result rows and writes them as CSV when the config
    names an output file.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    else:
        config.validate()
    train, test, label, intrinsic = _prepare_data(config)
    if gmra is None:
        gmra = build_gmra(
            train,
            intrinsic,
            j_min=config.j_min,
            j_max=config.j_max,
            source={"dataset": label, "seed": config.seed},
        )
    scales = set(gmra.scales())
    missing = [j for j in config.j_list if j not in scales]
    if missing:
        raise ConfigError(
            f"levels {missing} not stored in the model (stored: {sorted(scales)})",
            fields=["j_list"],
        )

    rows = []
    for j in config.j_list:
        for m in config.m_list:
            rows.extend(_run_grid_cell(config, gmra, j, m, test, label))
    if config.output:
        write_csv(rows, config.output)
    return rows


def _run_grid_cell(config, gmra, j, m, test, label):
    """All variants at one (j, m): per-trial ensembles, shared across variants.

    Each trial draws its own ensemble (seed derived from seed, j, m, trial),
    so cell means average over the measurement randomness while every variant
    sees the same measurements of the same target, keeping comparisons paired.
    """
    variants = [(name, *parse_variant(name, config.R)) for name in config.variants]
    errors = {name: [] for name in config.variants}
    runtimes = {name: [] for name in config.variants}
    infeasible = {name: 0 for name in config.variants}

    for idx, x in enumerate(test):
        ensemble = MeasurementEnsemble.generate(
            m, x.shape[0], derived_seed(config.seed, 2, j, m, idx)
        )
        cache = CenterSignCache(gmra, ensemble)
        y = quantize(ensemble, x)
        for name, kind, R in variants:
            start = time.perf_counter() if config.measure_runtime else 0.0
            res = _recover_one(config, gmra, j, ensemble, cache, y, kind, R)
            if config.measure_runtime:
                runtimes[name].append((time.perf_counter() - start) * 1000.0)
            if not res.feasible:
                infeasible[name] += 1
            else:
                errors[name].append(
                    float(np.linalg.norm(x - res.x_star) / np.linalg.norm(x))
                )

    rows = []
    for name in config.variants:
        errs = errors[name]
        rows.append(
            ResultRow(
                dataset=label,
                j=int(j),
                m=int(m),
                variant=name,
                trials=len(test),
                mean_rel_err=float(np.mean(errs)) if errs else float("nan"),
                std_rel_err=float(np.std(errs)) if errs else float("nan"),
                infeasible=infeasible[name],
                mean_runtime_ms=(
                    float(np.mean(runtimes[name])) if runtimes[name] else 0.0
                ),
                seed=config.seed,
            )
        )
    return rows


def _recover_one(config, gmra, j, ensemble, cache, y, kind, R):
    if kind == "oms":
        return oms(
            gmra, j, ensemble, y,
            variant="linear", search=config.search,
            beam_width=config.beam_width, cache=cache,
        )
    if kind == "plus":
        return oms(
            gmra, j, ensemble, y,
            variant="plus", search=config.search,
            beam_width=config.beam_width, cache=cache,
        )
    if kind == "simple":
        return oms_simple(
            gmra, j, ensemble, y, R=R,
            search=config.search, beam_width=config.beam_width, cache=cache,
        )
    return recover_center_only(
        gmra, j, ensemble, y,
        search=config.search, beam_width=config.beam_width, cache=cache,
    )


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def read_csv(path):
    """Parse a results file back into ResultRow objects (exact round-trip)."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError(f"unexpected CSV header in {path}")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        rows.append(
            ResultRow(
                dataset=parts[0],
                j=int(parts[1]),
                m=int(parts[2]),
                variant=parts[3],
                trials=int(parts[4]),
                mean_rel_err=float(parts[5]),
                std_rel_err=float(parts[6]),
                infeasible=int(parts[7]),
                mean_runtime_ms=float(parts[8]),
                seed=int(parts[9]),
            )
        )
    return rows
