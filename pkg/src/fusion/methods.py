from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Type

import numpy as np
import pandas as pd

from ..baselines.wknn import WknnLocalizer
from ..localizer.inference import localize_many
from ..localizer.model import LocalizerModel
from ..radio.errors import EmptyFingerprintError
from ..radio.types import GaussianLocation, RadioMap
from ..simulation.stream import SensorStream
from .filters import FilterConfig, build_filter, measurement_events, run_filter, trajectory_frame
from .prior_map import PriorMap, build_prior


logger = logging.getLogger(__name__)


@dataclass
class FusionInputs:
    """Everything one trial needs; the prior is built lazily from the radio map."""

    stream: SensorStream
    radio_map: RadioMap
    localizer: Optional[LocalizerModel] = None
    prior: Optional[PriorMap] = None
    wknn: Optional[WknnLocalizer] = None

    def prior_for(self, config: FilterConfig) -> PriorMap:
        if self.prior is None:
            self.prior = build_prior(self.radio_map, config.bandwidth, config.beta, config.prior_cell_size)
        return self.prior

    def fixes(self, source: str) -> List[Optional[GaussianLocation]]:
        fingerprints = self.stream.fingerprints
        if source == "localizer":
            if self.localizer is None:
                raise ValueError(
                    "Measurement source 'localizer' needs a trained localizer: run `train` first or pass --checkpoint"
                )
            return localize_many(self.localizer, fingerprints)
        if self.wknn is None:
            self.wknn = WknnLocalizer(self.radio_map)
        fixes: List[Optional[GaussianLocation]] = []
        for fp in fingerprints:
            try:
                fixes.append(self.wknn.localize(fp))
            except EmptyFingerprintError:
                fixes.append(None)
        return fixes


class FusionMethod(ABC):
    name = "method"

    @abstractmethod
    def run(self, inputs: FusionInputs, config: FilterConfig) -> pd.DataFrame:
        """Return a trajectory frame with the standard trajectory columns."""
        pass


class FilterMethod(FusionMethod):
    overrides: Dict[str, object] = {}

    def configure(self, config: FilterConfig) -> FilterConfig:
        return replace(config, **self.overrides)

    def run(self, inputs: FusionInputs, config: FilterConfig) -> pd.DataFrame:
        config = self.configure(config)
        fixes = inputs.fixes(config.measurement_source)
        measurements = measurement_events(inputs.stream.fingerprints, fixes, use_uncertainty=config.use_uncertainty)
        prior = None if config.method == "ekf" else inputs.prior_for(config)
        return run_filter(inputs.stream, build_filter(config, prior), measurements)


class EkpfMethod(FilterMethod):
    name = "ekpf"
    overrides = {"method": "ekpf"}


class EkfMethod(FilterMethod):
    name = "ekf"
    overrides = {"method": "ekf"}


class PfMethod(FilterMethod):
    name = "pf"
    overrides = {"method": "pf"}


class EkpfConstantSigmaMethod(FilterMethod):
    name = "ekpf-const-sigma"
    overrides = {"method": "ekpf", "use_uncertainty": False}


class EkpfWknnMethod(FilterMethod):
    name = "ekpf-wknn"
    overrides = {"method": "ekpf", "measurement_source": "wknn"}


class FixOnlyMethod(FusionMethod):
    """WiFi fixes alone, reported at their scan times with sigma as the spread."""

    source = "localizer"

    def run(self, inputs: FusionInputs, config: FilterConfig) -> pd.DataFrame:
        fixes = inputs.fixes(self.source)
        events = measurement_events(inputs.stream.fingerprints, fixes)
        rows = [
            {
                "t": e.t,
                "est_x": e.location.mu.x,
                "est_y": e.location.mu.y,
                "n_eff": np.nan,
                "spread": e.location.sigma,
            }
            for e in events
        ]
        return trajectory_frame(inputs.stream, rows)


class LocalizerOnlyMethod(FixOnlyMethod):
    name = "localizer-only"
    source = "localizer"


class WknnOnlyMethod(FixOnlyMethod):
    name = "wknn-only"
    source = "wknn"


class MethodRegistry:
    _methods: Dict[str, Type[FusionMethod]] = {
        "ekpf": EkpfMethod,
        "ekf": EkfMethod,
        "pf": PfMethod,
        "ekpf-const-sigma": EkpfConstantSigmaMethod,
        "ekpf-wknn": EkpfWknnMethod,
        "localizer-only": LocalizerOnlyMethod,
        "wknn-only": WknnOnlyMethod,
    }

    @classmethod
    def get_method(cls, name: str) -> Type[FusionMethod]:
        if name not in cls._methods:
            raise ValueError(f"Unknown method: {name!r}, expected one of {', '.join(cls.list_methods())}")
        return cls._methods[name]

    @classmethod
    def register(cls, name: str, method_cls: Type[FusionMethod]):
        cls._methods[name] = method_cls

    @classmethod
    def list_methods(cls) -> List[str]:
        return list(cls._methods.keys())


def run_method(name: str, inputs: FusionInputs, config: FilterConfig) -> pd.DataFrame:
    logger.info("Running method %s (seed %d)", name, config.seed)
    return MethodRegistry.get_method(name)().run(inputs, config)


__all__ = [
    "EkfMethod",
    "EkpfConstantSigmaMethod",
    "EkpfMethod",
    "EkpfWknnMethod",
    "FilterMethod",
    "FixOnlyMethod",
    "FusionInputs",
    "FusionMethod",
    "LocalizerOnlyMethod",
    "MethodRegistry",
    "PfMethod",
    "WknnOnlyMethod",
    "run_method",
]
