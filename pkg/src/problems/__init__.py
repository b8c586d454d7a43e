"""Problem registry and dataset resolution."""
from __future__ import annotations

import os

from src.data import EMBEDDED, Dataset, DatasetKind, generate_compressible, load_embedded, yield_points_from_law
from src.errors import CorruptCheckpoint, UnknownDataset, UnknownProblem
from src.hyper import LAWS
from src.ingestion import ingest_csv
from src.models import Checkpoint
from src.nets import NetworkModel, network_from_dict
from src.plast import YIELD_LAWS
from src.problems.base import DataSplit, Problem, ProblemResult, tape_data_loss, value_range
from src.problems.hardening import HardeningProblem
from src.problems.hyperelastic import CompressibleProblem, IncompressibleProblem
from src.problems.yield_surface import YieldSurfaceProblem

PROBLEMS: dict[str, type[Problem]] = {
    CompressibleProblem.name: CompressibleProblem,
    IncompressibleProblem.name: IncompressibleProblem,
    YieldSurfaceProblem.name: YieldSurfaceProblem,
    HardeningProblem.name: HardeningProblem,
}

CSV_KINDS: dict[str, DatasetKind] = {
    CompressibleProblem.name: DatasetKind.COMPRESSIBLE,
    IncompressibleProblem.name: DatasetKind.MODE_CURVE,
    YieldSurfaceProblem.name: DatasetKind.YIELD_POINTS,
    HardeningProblem.name: DatasetKind.HARDENING,
}


def resolve_dataset(problem: str, data: str, params: dict) -> tuple[Dataset, dict]:
    """Dataset for `data` (embedded name, reference law or CSV path) and the params it implies."""
    params = dict(params)
    if os.path.isfile(data):
        return ingest_csv(data, CSV_KINDS[problem]), params
    if problem == CompressibleProblem.name and data in LAWS:
        seed = int(params.get("data_seed", 0))
        train = generate_compressible(data, float(params.get("delta_train", 0.2)),
                                      int(params.get("n_train", 50)), seed)
        params.setdefault("law", data)
        return train, params
    if problem == YieldSurfaceProblem.name and data in YIELD_LAWS:
        params.setdefault("law", data)
        if data not in EMBEDDED:
            return yield_points_from_law(data, int(params.get("n_points", 30))), params
    if data in EMBEDDED:
        return load_embedded(data), params
    raise UnknownDataset(f"Unknown dataset '{data}'", name=data)


def make_problem(problem: str, data: str, **params) -> Problem:
    """Problem instance for a registered name; `data` is an embedded name, reference law or CSV path."""
    try:
        cls = PROBLEMS[problem]
    except KeyError:
        raise UnknownProblem(f"Unknown problem '{problem}'; expected one of {sorted(PROBLEMS)}",
                             problem=problem) from None
    dataset, params = resolve_dataset(problem, data, params)
    if cls is CompressibleProblem and params.get("law") and "test" not in params:
        test = generate_compressible(params["law"], float(params.get("delta_test", 0.3)),
                                     int(params.get("n_test", 1000)), int(params.get("data_seed", 0)) + 1)
        params["test"] = test
    instance = cls(dataset, **params)
    instance.params.pop("test", None)
    instance.params["data"] = data
    return instance


def restore_problem(checkpoint: Checkpoint) -> tuple[Problem, NetworkModel]:
    """Rebuild the problem and trained network stored in a checkpoint."""
    params = dict(checkpoint.problem_params)
    data = params.pop("data", checkpoint.dataset.name)
    problem = make_problem(checkpoint.problem, data, **params)
    if problem.dataset.fingerprint() != checkpoint.dataset.fingerprint:
        raise CorruptCheckpoint(f"Dataset '{data}' no longer matches the checkpoint fingerprint",
                                dataset=data)
    return problem, network_from_dict(checkpoint.network)


__all__ = [
    "CSV_KINDS", "PROBLEMS", "DataSplit", "Problem", "ProblemResult", "make_problem", "resolve_dataset",
    "restore_problem",
    "tape_data_loss", "value_range", "CompressibleProblem", "IncompressibleProblem", "YieldSurfaceProblem",
    "HardeningProblem",
]
