"""File formats: CSV for tabular artifacts, JSON documents for structures.

Floats are written with ``repr`` so a value survives a write/read cycle
bit-exactly and identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

import numpy as np

from .noise_models import ArmaModel, Spectrum
from .qns_recon import BootstrapSpectrum, SpectrumEstimate
from .qubit_sim import ExperimentRecord
from .sequences import FilterFunction, PulseSequence

RECORD_FIELDS = (
    "seq_index",
    "n_pulses",
    "survival_mean",
    "survival_stderr",
    "shots",
    "trajectories",
    "seed",
)


class SchemaError(ValueError):
    """A file violates its documented schema."""


def _fmt(x: float) -> str:
    return repr(float(x))


# -- spectra ----------------------------------------------------------------

def write_spectrum_csv(path, spectrum: "Spectrum | SpectrumEstimate") -> None:
    with open(path, "w", newline="") as fh:
        fh.write("freq_hz,psd_rad2_per_hz\n")
        for f, v in zip(spectrum.freqs, spectrum.values):
            fh.write(f"{_fmt(f)},{_fmt(v)}\n")


def read_spectrum_csv(path, sample_period: float) -> Spectrum:
    freqs, values = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["freq_hz", "psd_rad2_per_hz"]:
            raise SchemaError(f"{path}: expected header freq_hz,psd_rad2_per_hz")
        for i, row in enumerate(reader, start=2):
            try:
                freqs.append(float(row["freq_hz"]))
                values.append(float(row["psd_rad2_per_hz"]))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {i}: {exc}") from exc
    return Spectrum(freqs=np.array(freqs), values=np.array(values), sample_period=sample_period)


def write_spectrum_estimate_csv(
    path, estimate: SpectrumEstimate, band: "BootstrapSpectrum | None" = None
) -> None:
    """Reconstruction CSV with confidence columns (stderr-based if no bootstrap)."""
    lo = band.lower if band is not None else np.clip(estimate.values - 2 * estimate.stderr, 0, None)
    hi = band.upper if band is not None else estimate.values + 2 * estimate.stderr
    with open(path, "w", newline="") as fh:
        fh.write("freq_hz,psd_rad2_per_hz,ci_lo,ci_hi\n")
        for f, v, a, b in zip(estimate.freqs, estimate.values, lo, hi):
            fh.write(f"{_fmt(f)},{_fmt(v)},{_fmt(a)},{_fmt(b)}\n")


# -- models ------------------------------------------------------------------

def model_to_dict(model: ArmaModel) -> dict:
    return {
        "ar": list(model.ar),
        "ma": list(model.ma),
        "drive_std": model.drive_std,
        "sample_period_s": model.sample_period,
    }


def write_model_json(path, model: ArmaModel) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def read_model_json(path) -> ArmaModel:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return ArmaModel(
            ar=tuple(doc["ar"]),
            ma=tuple(doc["ma"]),
            drive_std=float(doc["drive_std"]),
            sample_period=float(doc["sample_period_s"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: invalid model document: {exc}") from exc


# -- sequences ----------------------------------------------------------------

def sequence_to_dict(seq: PulseSequence) -> dict:
    return {
        "label": seq.label,
        "n_slots": seq.n_slots,
        "gate_period_s": seq.gate_period,
        "pulses": [
            {"slot": slot, "sign": sign}
            for slot, sign in zip(seq.pulse_slots, seq.pulse_signs)
        ],
    }


def write_sequences_json(path, sequences: Sequence[PulseSequence]) -> None:
    with open(path, "w") as fh:
        json.dump([sequence_to_dict(s) for s in sequences], fh, indent=2)
        fh.write("\n")


def read_sequences_json(path) -> "list[PulseSequence]":
    with open(path) as fh:
        docs = json.load(fh)
    out = []
    for doc in docs:
        try:
            out.append(
                PulseSequence(
                    n_slots=int(doc["n_slots"]),
                    pulse_slots=tuple(p["slot"] for p in doc["pulses"]),
                    pulse_signs=tuple(p["sign"] for p in doc["pulses"]),
                    gate_period=float(doc["gate_period_s"]),
                    label=int(doc.get("label", 0)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: invalid sequence document: {exc}") from exc
    return out


# -- filter functions ----------------------------------------------------------

def write_filter_csv(path, filt: FilterFunction) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("freq_hz,weight\n")
        for f, w in zip(filt.freqs, filt.weights):
            fh.write(f"{_fmt(f)},{_fmt(w)}\n")


# -- experiment records ---------------------------------------------------------

def records_to_csv_text(records: Sequence[ExperimentRecord]) -> str:
    out = io.StringIO()
    out.write(",".join(RECORD_FIELDS) + "\n")
    for r in records:
        out.write(
            f"{r.label},{r.n_pulses},{_fmt(r.survival_mean)},{_fmt(r.survival_stderr)},"
            f"{r.shots},{r.trajectories},{r.seed}\n"
        )
    return out.getvalue()


def write_records_csv(path, records: Sequence[ExperimentRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv_text(records))


def write_raw_survivals_csv(path, records: Sequence[ExperimentRecord]) -> None:
    """Per-trajectory survival fractions, one row per (sequence, trajectory)."""
    with open(path, "w", newline="") as fh:
        fh.write("seq_index,trajectory,survival\n")
        for r in records:
            if r.trajectory_survivals is None:
                raise ValueError(
                    f"record {r.label} has no per-trajectory data (keep_raw was off)"
                )
            for t, value in enumerate(r.trajectory_survivals):
                fh.write(f"{r.label},{t},{_fmt(value)}\n")


def read_raw_survivals_csv(
    path, records: Sequence[ExperimentRecord]
) -> "list[ExperimentRecord]":
    """Attach per-trajectory survivals from a sidecar file to matching records."""
    raw: "dict[int, list[float]]" = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["seq_index", "trajectory", "survival"]
        if reader.fieldnames != expected:
            raise SchemaError(f"{path}: expected header {','.join(expected)}")
        for i, row in enumerate(reader, start=2):
            try:
                raw.setdefault(int(row["seq_index"]), []).append(float(row["survival"]))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {i}: {exc}") from exc
    out = []
    for r in records:
        if r.label not in raw:
            raise SchemaError(f"{path}: no rows for sequence {r.label}")
        values = np.array(raw[r.label])
        if values.size != r.trajectories:
            raise SchemaError(
                f"{path}: sequence {r.label} has {values.size} rows, "
                f"record expects {r.trajectories}"
            )
        out.append(
            ExperimentRecord(
                label=r.label,
                n_pulses=r.n_pulses,
                survival_mean=r.survival_mean,
                survival_stderr=r.survival_stderr,
                shots=r.shots,
                trajectories=r.trajectories,
                seed=r.seed,
                trajectory_survivals=values,
            )
        )
    return out


def read_records_csv(path, impute_stderr: bool = False) -> "list[ExperimentRecord]":
    """Read records; with ``impute_stderr`` a missing/blank stderr column is
    replaced by the binomial estimate sqrt(p (1-p) / total_shots)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty records file")
        required = set(RECORD_FIELDS) - {"survival_stderr"}
        missing = required - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        has_stderr = "survival_stderr" in reader.fieldnames
        for i, row in enumerate(reader, start=2):
            try:
                label = int(row["seq_index"])
                n_pulses = int(row["n_pulses"])
                mean = float(row["survival_mean"])
                shots = int(row["shots"])
                trajectories = int(row["trajectories"])
                seed = int(row["seed"])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {i}: {exc}") from exc
            if not 0.0 <= mean <= 1.0:
                raise SchemaError(
                    f"{path}: line {i}: survival_mean {mean} outside [0, 1]"
                )
            if shots < 1 or trajectories < 1:
                raise SchemaError(f"{path}: line {i}: counts must be >= 1")
            raw_stderr = row.get("survival_stderr", "") if has_stderr else ""
            if raw_stderr not in ("", None):
                stderr = float(raw_stderr)
                if stderr < 0:
                    raise SchemaError(f"{path}: line {i}: negative stderr")
            elif impute_stderr:
                total = shots * trajectories
                stderr = float(np.sqrt(max(mean * (1.0 - mean), 0.0) / total))
            else:
                raise SchemaError(
                    f"{path}: line {i}: survival_stderr missing (pass impute_stderr=True "
                    f"to fill in the binomial estimate)"
                )
            records.append(
                ExperimentRecord(
                    label=label,
                    n_pulses=n_pulses,
                    survival_mean=mean,
                    survival_stderr=stderr,
                    shots=shots,
                    trajectories=trajectories,
                    seed=seed,
                )
            )
    return records
