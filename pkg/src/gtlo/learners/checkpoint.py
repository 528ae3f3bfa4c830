"""Parameter checkpoints: one ``.npz`` holding every array plus a JSON header."""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from gtlo.core import ContractViolation

_HEADER = "__header__"


def save_checkpoint(path, estimator, config_hash: str = "") -> Path:
    """Write the online parameters of a fitted learner."""
    q = estimator.q_
    header = {"architecture": q.architecture(), "config_hash": config_hash, "n_steps": int(estimator.n_steps_)}
    arrays = {f"p{k:03d}": np.asarray(p) for k, p in enumerate(q.params)}
    arrays[_HEADER] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    # fixed member timestamps keep the file byte-identical across reruns
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
    return path


def read_header(path) -> dict:
    with np.load(path) as data:
        return json.loads(bytes(data[_HEADER]).decode())


def load_checkpoint(path, estimator, config_hash: str | None = None):
    """Copy stored parameters into ``estimator.q_`` (which must already be built).

    Rejects files whose architecture (or, if given, config hash) differs from
    the estimator's.
    """
    with np.load(path) as data:
        header = json.loads(bytes(data[_HEADER]).decode())
        params = [data[k] for k in sorted(k for k in data.files if k != _HEADER)]
    expected = estimator.q_.architecture()
    if header["architecture"] != expected:
        raise ContractViolation(f"checkpoint architecture {header['architecture']} does not match {expected}")
    if config_hash is not None and header["config_hash"] != config_hash:
        raise ContractViolation("checkpoint was written under a different configuration")
    current = estimator.q_.params
    if len(params) != len(current) or any(p.shape != c.shape for p, c in zip(params, current)):
        raise ContractViolation("checkpoint parameter shapes do not match the estimator")
    estimator.q_.set_params(params)
    if getattr(estimator, "q_target_", None) is not estimator.q_ and hasattr(estimator.q_, "copy"):
        estimator.q_target_ = estimator.q_.copy()
    return header
