import csv
import io
import json
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy import stats

from config.classes import GeneratorFamily, TobitDataset
from core.errors import DataContractError

Model = TypeVar("Model", bound=BaseModel)


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys...), e.g. (seed, cell_id, replication)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


def load_config(file_path: str, model: Type[Model]) -> Model:
    with open(file_path, "r", encoding="utf-8") as file:
        return model.model_validate_json(file.read())


def _number(text: str, line: int, column: str) -> float:
    if text is None or not text.strip():
        raise DataContractError(f"missing value in column {column!r}", line=line, column=column)
    try:
        value = float(text)
    except ValueError:
        raise DataContractError(f"non-numeric value {text!r} in column {column!r}", line=line, column=column)
    if not math.isfinite(value):
        raise DataContractError(f"non-finite value in column {column!r}", line=line, column=column)
    return value


def read_table(file_path: str) -> Tuple[List[str], Dict[str, np.ndarray]]:
    """Read a numeric CSV with a header row into named columns."""
    with open(file_path, "r", encoding="utf-8", newline="") as file:
        reader = csv.DictReader(file)
        header = [h.strip() for h in (reader.fieldnames or [])]
        if not header:
            raise DataContractError("CSV has no header row")
        reader.fieldnames = header
        rows = []
        for line, row in enumerate(reader, start=2):
            if None in row:
                raise DataContractError("row has more fields than the header", line=line)
            rows.append({name: _number(row[name], line, name) for name in header})
    if not rows:
        raise DataContractError("CSV has no data rows")
    return header, {name: np.array([r[name] for r in rows]) for name in header}


def load_dataset(file_path: str, gamma: Optional[float] = None, gamma_scale: str = "log",
                 response_scale: str = "log", intercept: bool = True) -> Tuple[TobitDataset, List[str]]:
    """
    Load a tobit dataset from CSV.

    Columns: y, censored (0/1), then covariates in file order. An intercept
    column is prepended unless intercept is False.

    Args:
        file_path: path to the CSV file
        gamma: censoring point; defaults to the smallest observed response
        gamma_scale: "log" if gamma is given on the model scale, "natural" otherwise
        response_scale: "natural" log-transforms a positive response column
        intercept: prepend a column of ones

    Returns:
        (dataset, warnings)
    """
    header, columns = read_table(file_path)
    for required in ("y", "censored"):
        if required not in columns:
            raise DataContractError(f"missing required column {required!r}", column=required)

    flags = np.asarray(columns["censored"])
    bad = np.flatnonzero((flags != 0) & (flags != 1))
    if bad.size:
        raise DataContractError("censored must be 0 or 1", line=int(bad[0]) + 2, column="censored")
    censored = flags == 1

    y = np.asarray(columns["y"], dtype=float)
    if response_scale == "natural":
        bad = np.flatnonzero(y <= 0)
        if bad.size:
            raise DataContractError("natural-scale response must be positive", line=int(bad[0]) + 2, column="y")
        y = np.log(y)
    elif response_scale != "log":
        raise DataContractError(f"unknown response scale {response_scale!r}")

    warnings = []
    if gamma is None:
        if censored.any():
            gamma = float(y.min())
            warnings.append(f"gamma defaulted to the minimum observed response {gamma:.6g}")
        else:
            gamma = float(y.min()) - 1.0
            warnings.append(f"no censored rows; gamma placed below the data at {gamma:.6g}")
    elif gamma_scale == "natural":
        if not gamma > 0:
            raise DataContractError("natural-scale gamma must be positive")
        gamma = math.log(gamma)
    elif gamma_scale != "log":
        raise DataContractError(f"unknown gamma scale {gamma_scale!r}")

    names = [h for h in header if h not in ("y", "censored")]
    X = np.column_stack([columns[h] for h in names]) if names else np.empty((y.size, 0))
    if intercept:
        X = np.column_stack([np.ones(y.size), X])
        names = ["intercept"] + names
    if X.shape[1] == 0:
        raise DataContractError("design has no columns")

    try:
        data = TobitDataset(y=y, censored=censored, X=X, gamma=gamma, covariate_names=names)
    except ValidationError as e:
        raise DataContractError(e.errors()[0]["msg"]) from e
    return data, warnings


def parse_restriction(text: str) -> Dict[str, float]:
    """Parse "name=value,name=value"."""
    out = {}
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        name, sep, value = part.partition("=")
        if not sep or not name.strip():
            raise ValueError(f"restriction {part!r} is not name=value")
        out[name.strip()] = float(value)
    if not out:
        raise ValueError("empty restriction")
    return out


def parse_family(text: str) -> GeneratorFamily:
    """Parse "kind" or "kind:xi1[:xi2]"."""
    kind, *xi = [p.strip() for p in text.split(":")]
    return GeneratorFamily(kind=kind, xi=[float(x) for x in xi])


def write_csv(rows: Iterable[Dict], fieldnames: Sequence[str], file_path: Optional[str] = None) -> str:
    """Write dict rows as CSV to file_path, returning the text."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    text = buffer.getvalue()
    if file_path:
        with open(file_path, "w", encoding="utf-8", newline="") as file:
            file.write(text)
    return text


def _cell(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else value


def write_json(payload: Dict, file_path: Optional[str] = None) -> str:
    text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    if file_path:
        with open(file_path, "w", encoding="utf-8") as file:
            file.write(text)
    return text


def describe_response(data: TobitDataset) -> Dict[str, float]:
    """Descriptive statistics of the response on its natural scale."""
    t = np.exp(data.y)
    mean = float(np.mean(t))
    sd = float(np.std(t, ddof=1)) if t.size > 1 else 0.0
    return {
        "n": data.n,
        "n_censored": data.n_censored,
        "censored_proportion": data.censored_proportion,
        "median": float(np.median(t)),
        "mean": mean,
        "sd": sd,
        "cv_percent": 100.0 * sd / mean,
        "skewness": float(stats.skew(t)),
        "kurtosis": float(stats.kurtosis(t, fisher=False)),
        "min": float(t.min()),
        "max": float(t.max()),
    }
