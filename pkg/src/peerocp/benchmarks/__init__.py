"""Benchmark problems: boundary heat control and 2D prostate cancer therapy."""

from .heat import HeatExact, build_heat_problem, heat_exact
from .pca import PCaParameters, build_pca_problem, pca_observables

__all__ = ["REGISTRY", "build_problem", "build_heat_problem", "build_pca_problem", "heat_exact",
           "HeatExact", "PCaParameters", "pca_observables"]


def _heat(cfg):
    return build_heat_problem(cfg.size)


def _pca(cfg):
    return build_pca_problem(cfg.size, cfg.protocol, triplet=cfg.triplet, **cfg.weights)


REGISTRY = {"heat1d": _heat, "pca2d": _pca}


def build_problem(cfg):
    """Problem instance for a validated :class:`~peerocp.config.RunConfig`."""
    try:
        factory = REGISTRY[cfg.problem]
    except KeyError:
        raise KeyError(f"unknown problem {cfg.problem!r}; known: {sorted(REGISTRY)}") from None
    return factory(cfg)
