"""Consistency/separability trade-off toolkit for frozen video patch embeddings."""

import json
from os import PathLike
from typing import Any, Mapping, Optional, Sequence, Union

from . import _core
from ._core import (
    DEFAULT_GAMMA,
    ContractError,
    CosettleError,
    FormatError,
    InvalidInputError,
    NumericError,
    ParameterError,
    ShapeError,
    delta_margin_closed_form,
    generate_corpus_file,
    lemma1_gradient_terms,
    margin,
    optimal_eigs_closed_form,
    optimize_surrogate_linear,
    pea_augment,
    per_eig_objective,
    sinusoidal_grid,
    softmax_rows,
    sym_eig,
)

Path = Union[str, PathLike]

__all__ = [
    "DEFAULT_GAMMA",
    "ContractError",
    "CosettleError",
    "FormatError",
    "InvalidInputError",
    "NumericError",
    "ParameterError",
    "ShapeError",
    "delta_margin_closed_form",
    "evaluate",
    "generate_corpus_file",
    "gradcheck",
    "lemma1_gradient_terms",
    "margin",
    "optimal_eigs_closed_form",
    "optimize_surrogate_linear",
    "pea_augment",
    "per_eig_objective",
    "probe_shortcut",
    "sinusoidal_grid",
    "softmax_rows",
    "sym_eig",
    "train",
    "verify_theory",
]


def _stringify(overrides: Optional[Mapping[str, Any]]) -> dict:
    out = {}
    for key, value in (overrides or {}).items():
        out[key] = str(value).lower() if isinstance(value, bool) else str(value)
    return out


def verify_theory(sigma: Sequence[float], lam: float, mode: str = "eigenbasis",
                  samples: int = 100_000, seed: int = 0) -> dict:
    """Closed forms, surrogate optimizer and Monte-Carlo margin oracle as a dict."""
    return json.loads(_core.verify_theory_json(list(sigma), lam, mode, samples, seed))


def gradcheck(instances: int = 100, seed: int = 0) -> dict:
    """Finite-difference gradient suite report."""
    return json.loads(_core.gradcheck_json(instances, seed))


def probe_shortcut(setting: str = "shuffled", alpha: float = 0.0, steps: int = 500,
                   dim: int = 64, videos: int = 32, seed: int = 0) -> dict:
    """Positional shortcut probe curves."""
    return json.loads(_core.probe_json(setting, alpha, steps, dim, videos, seed))


def train(corpus: Path, out: Path, **overrides: Any) -> list:
    """Trains a projection head; returns the history records."""
    text = _core.train_file(str(corpus), str(out), _stringify(overrides))
    return [json.loads(line) for line in text.splitlines() if line]


def evaluate(corpus: Path, checkpoint: Optional[Path] = None, gamma: float = DEFAULT_GAMMA,
             **overrides: Any) -> dict:
    """Trade-off metrics of a corpus under an optional checkpoint."""
    ckpt = None if checkpoint is None else str(checkpoint)
    return json.loads(_core.evaluate_file_json(str(corpus), ckpt, gamma, _stringify(overrides)))
