"""Writes reference_writer.safetensors with the upstream safetensors package.

The C++ container tests load this file and compare against the literal
values below, so the reader is checked against an independent writer.
"""
import pathlib

import numpy as np
from safetensors.numpy import save_file

HERE = pathlib.Path(__file__).parent

tensors = {
    "emb": (np.arange(32, dtype=np.float32) * 0.25 - 4.0).reshape(4, 8),
    "vec64": np.array([1.0, -2.5, 1e-3, 3.141592653589793], dtype=np.float64),
    "half": np.array([[0.5, -1.0], [2.0, 65504.0]], dtype=np.float16),
    "empty": np.zeros((0, 768), dtype=np.float32),
    "ids": np.array([1, 2, 3], dtype=np.int64),
}
save_file(tensors, str(HERE / "reference_writer.safetensors"),
          metadata={"format": "np", "safer.concept_label": "fixture"})
