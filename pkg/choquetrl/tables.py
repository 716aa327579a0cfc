"""
CSV tables
----------
Fixed-schema CSV emission and ingestion: ``p,q`` quantile tables, ``p,h``
piecewise-linear distortion nodes, compare rows and transversality
checkpoints.
"""
from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from choquetrl.dist import TABLE_TOL, Distribution, GridQuantile, from_table, quantile_table
from choquetrl.errors import ConfigError
from choquetrl.lqcontrol import CompareRow

QUANTILE_COLUMNS = ["p", "q"]
NODE_COLUMNS = ["p", "h"]
COMPARE_COLUMNS = ["distortion", "x", "mu_star", "var_star", "V"]
CHECKPOINT_COLUMNS = ["T", "discounted_second_moment"]


def write_csv(frame: pd.DataFrame, path: str | os.PathLike | None = None) -> str | None:
    """Write to ``path``; with no path the CSV text is returned."""
    return frame.to_csv(path, index=False, float_format="%.17g")


def _read(path: str | os.PathLike, columns: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path} is missing columns {missing}; expected {','.join(columns)}")
    return frame


def quantile_frame(law: Distribution, size: int = 1025, tol: float = TABLE_TOL) -> pd.DataFrame:
    p, q = quantile_table(law, size, tol)
    return pd.DataFrame({"p": p, "q": q}, columns=QUANTILE_COLUMNS)


def read_quantile_table(path: str | os.PathLike) -> GridQuantile:
    frame = _read(path, QUANTILE_COLUMNS)
    return from_table(frame["p"].to_numpy(float), frame["q"].to_numpy(float))


def read_nodes(path: str | os.PathLike) -> list[tuple[float, float]]:
    frame = _read(path, NODE_COLUMNS)
    return list(zip(frame["p"].to_numpy(float).tolist(), frame["h"].to_numpy(float).tolist()))


def compare_frame(rows: Iterable[CompareRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.distortion, r.x, r.mu_star, r.var_star, r.V) for r in rows],
        columns=COMPARE_COLUMNS,
    )


def checkpoint_frame(points: Iterable[tuple[float, float]]) -> pd.DataFrame:
    data = np.asarray(list(points), dtype=float).reshape(-1, 2)
    return pd.DataFrame(data, columns=CHECKPOINT_COLUMNS)
