"""Model artifacts: a self-describing header followed by the sample matrix.

Layout on disk::

    BNN-ARTIFACT 1\\n
    <one line of canonical JSON: family, architecture, bayes spec, config, seed, shape, ...>\\n
    <n_samples * n_params little-endian float64, row-major>

An HMC chain stores every retained draw; a dropout network or the baseline
is stored as a single-row matrix with its dropout metadata in the header.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bayes import BayesSpec
from .network import Architecture, ParamVector
from .preprocess import Preprocessor

MAGIC = b"BNN-ARTIFACT 1\n"


@dataclass(eq=False)
class ModelArtifact:
    family: str
    arch: Architecture
    samples: np.ndarray
    spec: BayesSpec | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0
    preprocessor: Preprocessor | None = None
    metadata: dict = field(default_factory=dict)

    def params(self, i=0) -> ParamVector:
        return ParamVector(self.samples[i], self.arch.layout)

    def header(self):
        return {
            "family": self.family,
            "architecture": self.arch.to_dict(),
            "spec": None if self.spec is None else self.spec.to_dict(),
            "config": self.config,
            "seed": int(self.seed),
            "shape": list(self.samples.shape),
            "preprocessor": None if self.preprocessor is None else self.preprocessor.to_dict(),
            "metadata": self.metadata,
        }


def save_artifact(path, artifact: ModelArtifact):
    samples = np.ascontiguousarray(np.atleast_2d(artifact.samples), dtype="<f8")
    if samples.shape[1] != artifact.arch.parameter_count:
        raise ValueError("sample width does not match the architecture's parameter count")
    artifact.samples = samples
    header = json.dumps(artifact.header(), sort_keys=True, separators=(",", ":"), allow_nan=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(samples.tobytes(order="C"))


def load_artifact(path) -> ModelArtifact:
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path} is not a model artifact")
        header = json.loads(fh.readline().decode("utf-8"))
        body = fh.read()
    shape = tuple(header["shape"])
    samples = np.frombuffer(body, dtype="<f8")
    if samples.shape[0] != shape[0] * shape[1]:
        raise ValueError(f"{path} is truncated: expected {shape[0] * shape[1]} values, found {samples.shape[0]}")
    return ModelArtifact(
        family=header["family"],
        arch=Architecture.from_dict(header["architecture"]),
        samples=samples.reshape(shape).astype(np.float64),
        spec=None if header["spec"] is None else BayesSpec.from_dict(header["spec"]),
        config=header["config"],
        seed=header["seed"],
        preprocessor=None if header["preprocessor"] is None else Preprocessor.from_dict(header["preprocessor"]),
        metadata=header["metadata"],
    )
