"""Versioned JSON formats for experiments and analysis reports.

Matrices travel as row-major flat lists of [re, im] pairs.  Parsing failures
carry the JSON path of the offending field.  Reports embed everything needed
to re-verify a decomposition without the original input file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channels import Channel
from .expfam import ExponentialFamily
from .states import DensityMatrix, Experiment, build_dominating_state

FORMAT_VERSION = "1"


class FormatError(ValueError):
    """Input file is malformed; the message pinpoints the field."""


def matrix_to_json(m: np.ndarray) -> list[list[float]]:
    flat = np.asarray(m, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def matrix_from_json(entries, rows: int, cols: int, where: str) -> np.ndarray:
    if not isinstance(entries, list):
        raise FormatError(f"{where}: expected a list of [re, im] pairs")
    if len(entries) != rows * cols:
        raise FormatError(f"{where}: expected {rows * cols} entries for a "
                          f"{rows}x{cols} matrix, got {len(entries)}")
    out = np.zeros(rows * cols, dtype=complex)
    for k, pair in enumerate(entries):
        if (not isinstance(pair, list)) or len(pair) != 2 or \
                not all(isinstance(x, (int, float)) for x in pair):
            raise FormatError(f"{where}[{k}]: expected a [re, im] pair, got {pair!r}")
        out[k] = complex(pair[0], pair[1])
    return out.reshape(rows, cols)


@dataclass
class ExperimentFile:
    """Parsed contents of an input file."""

    dim: int
    tensor_dims: list[int] | None
    states: dict[str, DensityMatrix]
    weights: dict[str, float] | None
    channel: Channel | None
    subalgebra_generators: list[np.ndarray] | None
    expfam: ExponentialFamily | None

    def experiment(self) -> Experiment:
        if not self.states:
            raise FormatError("states: at least one state is required")
        return build_dominating_state(self.states, self.weights)


def _require(doc: dict, key: str, kind, where: str = ""):
    path = f"{where}.{key}" if where else key
    if key not in doc:
        raise FormatError(f"{path}: missing required field")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise FormatError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_experiment_file(path: str) -> ExperimentFile:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    return parse_experiment_doc(doc)


def parse_experiment_doc(doc: dict) -> ExperimentFile:
    if not isinstance(doc, dict):
        raise FormatError("top level must be a JSON object")
    version = _require(doc, "format_version", str)
    if version != FORMAT_VERSION:
        raise FormatError(f"format_version: unsupported version {version!r}")
    dim = _require(doc, "dim", int)
    if dim <= 0:
        raise FormatError("dim: must be positive")

    tensor_dims = None
    if doc.get("tensor_dims") is not None:
        tensor_dims = doc["tensor_dims"]
        if (not isinstance(tensor_dims, list)
                or not all(isinstance(x, int) and x > 0 for x in tensor_dims)):
            raise FormatError("tensor_dims: expected a list of positive integers")
        if int(np.prod(tensor_dims)) != dim:
            raise FormatError(f"tensor_dims: product {np.prod(tensor_dims)} != dim {dim}")

    raw_states = _require(doc, "states", list)
    if not raw_states:
        raise FormatError("states: must not be empty")
    states: dict[str, DensityMatrix] = {}
    for k, entry in enumerate(raw_states):
        where = f"states[{k}]"
        if not isinstance(entry, dict):
            raise FormatError(f"{where}: expected an object")
        label = _require(entry, "label", str, where)
        if label in states:
            raise FormatError(f"{where}.label: duplicate label {label!r}")
        mat = matrix_from_json(_require(entry, "matrix", list, where), dim, dim,
                               f"{where}.matrix")
        try:
            states[label] = DensityMatrix(mat)
        except ValueError as exc:
            raise FormatError(f"{where}.matrix: not a density matrix ({exc})")

    weights = None
    if doc.get("weights") is not None:
        w = doc["weights"]
        if not isinstance(w, list) or len(w) != len(states) or \
                not all(isinstance(x, (int, float)) for x in w):
            raise FormatError("weights: expected one number per state")
        weights = dict(zip(states, [float(x) for x in w]))

    channel = None
    if doc.get("channel") is not None:
        cdoc = doc["channel"]
        if not isinstance(cdoc, dict):
            raise FormatError("channel: expected an object")
        in_dim = _require(cdoc, "in_dim", int, "channel")
        out_dim = _require(cdoc, "out_dim", int, "channel")
        raw_kraus = _require(cdoc, "kraus", list, "channel")
        if not raw_kraus:
            raise FormatError("channel.kraus: must not be empty")
        kraus = [matrix_from_json(m, out_dim, in_dim, f"channel.kraus[{i}]")
                 for i, m in enumerate(raw_kraus)]
        try:
            channel = Channel(kraus)
        except ValueError as exc:
            raise FormatError(f"channel: {exc}")

    generators = None
    if doc.get("subalgebra_generators") is not None:
        raw = doc["subalgebra_generators"]
        if not isinstance(raw, list):
            raise FormatError("subalgebra_generators: expected a list of matrices")
        generators = [matrix_from_json(m, dim, dim, f"subalgebra_generators[{i}]")
                      for i, m in enumerate(raw)]

    fam = None
    if doc.get("expfam") is not None:
        edoc = doc["expfam"]
        if not isinstance(edoc, dict):
            raise FormatError("expfam: expected an object")
        h = matrix_from_json(_require(edoc, "H", list, "expfam"), dim, dim, "expfam.H")
        raw_gens = _require(edoc, "generators", list, "expfam")
        gens = [matrix_from_json(m, dim, dim, f"expfam.generators[{i}]")
                for i, m in enumerate(raw_gens)]
        try:
            fam = ExponentialFamily(h, gens)
        except ValueError as exc:
            raise FormatError(f"expfam: {exc}")

    return ExperimentFile(dim=dim, tensor_dims=tensor_dims, states=states,
                          weights=weights, channel=channel,
                          subalgebra_generators=generators, expfam=fam)


def experiment_to_doc(exp_file: ExperimentFile) -> dict:
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "dim": exp_file.dim,
        "states": [{"label": l, "matrix": matrix_to_json(s.matrix)}
                   for l, s in exp_file.states.items()],
    }
    if exp_file.tensor_dims is not None:
        doc["tensor_dims"] = list(exp_file.tensor_dims)
    if exp_file.weights is not None:
        doc["weights"] = [exp_file.weights[l] for l in exp_file.states]
    if exp_file.channel is not None:
        ch = exp_file.channel
        doc["channel"] = {"in_dim": ch.in_dim, "out_dim": ch.out_dim,
                          "kraus": [matrix_to_json(k) for k in ch.kraus]}
    if exp_file.subalgebra_generators is not None:
        doc["subalgebra_generators"] = [matrix_to_json(g)
                                        for g in exp_file.subalgebra_generators]
    if exp_file.expfam is not None:
        doc["expfam"] = {"H": matrix_to_json(exp_file.expfam.h),
                         "generators": [matrix_to_json(g)
                                        for g in exp_file.expfam.generators]}
    return doc


def dump_report(report: dict) -> str:
    """Deterministic serialization: sorted keys, fixed separators."""
    return json.dumps(report, sort_keys=True, indent=1, separators=(",", ": "))


def load_report(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict) or "report_kind" not in doc:
        raise FormatError(f"{path}: not a report file (missing report_kind)")
    return doc
