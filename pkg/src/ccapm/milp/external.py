"""Adapter that hands a model to an external solver process.

The solver is invoked as ``<command...> <model.lp> <solution.sol>`` and must
write a solution file in the format read by :func:`read_solution`.
"""
from __future__ import annotations

import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AdapterError, ParameterError
from .lpformat import read_solution, write_lp
from .model import OPTIMAL, LinearModel, SolveOutcome, SolverParams


@dataclass(frozen=True)
class ExternalAdapter:
    command: tuple[str, ...]
    timeout: float | None = None

    @classmethod
    def from_backend(cls, backend: str) -> "ExternalAdapter":
        if not backend.startswith("external:"):
            raise ParameterError("external backend must look like 'external:<command>'")
        cmd = shlex.split(backend[len("external:"):])
        if not cmd:
            raise ParameterError("external backend command is empty")
        return cls(tuple(cmd))


def external_solve(model: LinearModel, adapter: ExternalAdapter,
                   params: SolverParams | None = None) -> SolveOutcome:
    params = params or SolverParams()
    if model.num_vars == 0:
        # nothing to hand over; the empty model is trivially solved here
        return SolveOutcome(OPTIMAL, x=np.zeros(0), objective=model.offset, bound=model.offset)
    names = model.var_names()
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="ccapm-ext-") as tmp:
        lp_path = Path(tmp) / "model.lp"
        sol_path = Path(tmp) / "solution.sol"
        lp_path.write_text(write_lp(model))
        timeout = adapter.timeout
        if timeout is None and np.isfinite(params.time_limit):
            timeout = params.time_limit + 30.0
        try:
            proc = subprocess.run([*adapter.command, str(lp_path), str(sol_path)],
                                  capture_output=True, text=True, timeout=timeout)
        except FileNotFoundError as exc:
            raise AdapterError(f"solver executable not found: {adapter.command[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise AdapterError("external solver timed out", str(exc.stdout or "")) from exc
        output = (proc.stdout or "") + (proc.stderr or "")
        if proc.returncode != 0:
            raise AdapterError(f"external solver exited with code {proc.returncode}", output)
        if not sol_path.exists():
            raise AdapterError("external solver wrote no solution file", output)
        try:
            outcome = read_solution(sol_path.read_text(), names)
        except AdapterError as exc:
            raise AdapterError(str(exc), output) from exc
    outcome.elapsed = time.perf_counter() - t0
    outcome.info["solver_output"] = output
    return outcome
