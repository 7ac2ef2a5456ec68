"""Experiment harness: workspace sweeps, complex-combination trials, the
autonomous dispense episode, and CSV/JSON reporting."""

from lucidlab.bench.tables import ErrorTable, write_csv, read_csv
from lucidlab.bench.dispense import DispenseResult, run_dispense_demo
from lucidlab.bench.sweep import ExperimentConfig, SweepResult, run_workspace_sweep
from lucidlab.bench.complexcombo import ComplexResult, run_complex_combinations

__all__ = ["ErrorTable", "write_csv", "read_csv", "DispenseResult",
           "run_dispense_demo", "ExperimentConfig", "SweepResult",
           "run_workspace_sweep", "ComplexResult", "run_complex_combinations"]
