"""Config-driven command-line front end.

Subcommands wire the library into full pipelines: ``design`` a noise model,
``simulate`` an injection experiment, ``reconstruct`` the spectrum from the
records, ``fit`` the survival model, ``export-circuits`` as OpenQASM text,
``ingest`` externally measured records, and ``report`` a run summary.

Configs are JSON documents carrying ``schema_version: 1``.  Exit codes:
0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import circuits, noise_models, predictor, qns_recon, qubit_sim, serialize, sequences
from .noise_models import UnstableModelError
from .qns_recon import RankDeficientError
from .seeds import STREAM_INJECTED, SeedLineage
from .serialize import SchemaError

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: key 'schema_version': expected {SCHEMA_VERSION}, got {version!r}"
        )
    return doc


_MISSING = object()


def _get(config: dict, key: str, kind, default=_MISSING):
    if key not in config:
        if default is _MISSING:
            raise ConfigError(f"key '{key}': required but missing")
        return default
    value = config[key]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is bool and isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    if kind is list and isinstance(value, list):
        return value
    if value is None and default is not _MISSING:
        return default
    raise ConfigError(f"key '{key}': expected {kind.__name__}, got {value!r}")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(config: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    return _get(config, "seed", int, 0)


# -- design -------------------------------------------------------------------

def cmd_design(config: dict, args) -> None:
    out = _out_dir(args)
    kind = _get(config, "kind", str)
    t_s = _get(config, "sample_period_s", float)
    taps = _get(config, "taps", int, noise_models.DEFAULT_TAPS)
    grid_size = _get(config, "grid_size", int, noise_models.DEFAULT_GRID_SIZE)
    if kind == "bandpass":
        model = noise_models.design_bandpass(
            _get(config, "center_hz", float),
            _get(config, "bandwidth_hz", float),
            _get(config, "power_rad2", float),
            t_s,
            taps=taps,
        )
    elif kind == "multiband":
        bands = [
            (
                _get(band, "center_hz", float),
                _get(band, "width_hz", float),
                _get(band, "power_rad2", float),
            )
            for band in _get(config, "bands", list)
        ]
        model = noise_models.design_multiband(bands, t_s, taps=taps)
    elif kind == "power_law":
        model = noise_models.design_power_law(
            _get(config, "alpha", float),
            (_get(config, "anchor_freq_hz", float), _get(config, "anchor_psd", float)),
            (_get(config, "band_lo_hz", float), _get(config, "band_hi_hz", float)),
            t_s,
            taps=taps,
        )
    elif kind == "lorentzian":
        model = noise_models.design_lorentzian(
            _get(config, "amplitude", float),
            _get(config, "cutoff_rad_per_s", float),
            _get(config, "white_floor", float),
            t_s,
            taps=taps,
        )
    else:
        raise ConfigError(
            f"key 'kind': unknown design kind {kind!r} "
            f"(expected bandpass, multiband, power_law or lorentzian)"
        )
    name = _get(config, "name", str, "model")
    serialize.write_model_json(out / f"{name}.json", model)
    serialize.write_spectrum_csv(out / f"{name}_psd.csv", noise_models.psd(model, grid_size))
    print(f"wrote {out / (name + '.json')} and {out / (name + '_psd.csv')}")


# -- simulate -------------------------------------------------------------------

def _sequences_from_config(config: dict) -> "list[sequences.PulseSequence]":
    family = _get(config, "family", str)
    if family not in ("fttps", "rfttps"):
        raise ConfigError(f"key 'family': expected fttps or rfttps, got {family!r}")
    maker = sequences.make_fttps if family == "fttps" else sequences.make_rfttps
    return maker(
        _get(config, "n_sequences", int),
        _get(config, "n_slots", int),
        _get(config, "gate_period_s", float),
    )


def _mode_from_config(config: dict):
    mode = _get(config, "mode", str)
    if mode == "gate":
        return qubit_sim.GateMode(
            trajectories=_get(config, "trajectories", int),
            shots_per_trajectory=_get(config, "shots_per_trajectory", int),
        )
    if mode == "sdr":
        return qubit_sim.SdrMode(
            shots=_get(config, "shots", int),
            phase_update_period=_get(config, "phase_update_period_s", float),
            random_time_offset=_get(config, "random_time_offset", bool, True),
        )
    raise ConfigError(f"key 'mode': expected gate or sdr, got {mode!r}")


def cmd_simulate(config: dict, args) -> None:
    out = _out_dir(args)
    seqs = _sequences_from_config(config)
    model = serialize.read_model_json(_get(config, "model", str))
    native_path = _get(config, "native_model", str, None)
    native = serialize.read_model_json(native_path) if native_path else None
    perr = qubit_sim.PulseErrorModel(
        over_rotation=_get(config, "over_rotation_rad", float, 0.0),
        jitter_std=_get(config, "jitter_std_rad", float, 0.0),
    )
    keep_raw = _get(config, "keep_raw", bool, False)
    records = qubit_sim.run_experiment(
        seqs,
        model,
        native_model=native,
        pulse_errors=perr,
        mode=_mode_from_config(config),
        seed=_seed(config, args),
        target_state=_get(config, "target_state", int, 1),
        keep_raw=keep_raw,
    )
    serialize.write_records_csv(out / "records.csv", records)
    serialize.write_sequences_json(out / "sequences.json", seqs)
    if keep_raw:
        serialize.write_raw_survivals_csv(out / "records_raw.csv", records)
    print(f"wrote {out / 'records.csv'} ({len(records)} sequences)")


# -- reconstruct ------------------------------------------------------------------

def _filters_for(seqs, grid_size):
    return [sequences.filter_function(s, grid_size) for s in seqs]


def cmd_reconstruct(config: dict, args) -> None:
    out = _out_dir(args)
    records = serialize.read_records_csv(_get(config, "records", str), impute_stderr=True)
    seqs = serialize.read_sequences_json(_get(config, "sequences", str))
    grid_size = _get(config, "grid_size", int, noise_models.DEFAULT_GRID_SIZE)
    filters = _filters_for(seqs, grid_size)
    floor = _get(config, "saturation_floor", float, qns_recon.DEFAULT_SATURATION_FLOOR)
    ridge = _get(config, "ridge", float, 0.0)
    bins = _get(config, "bins", int, None)
    estimate = qns_recon.reconstruct_spectrum(
        records, filters, bins=bins, ridge=ridge, saturation_floor=floor
    )
    resamples = _get(config, "bootstrap_resamples", int, 0)
    band = None
    if resamples > 0:
        raw_path = _get(config, "raw_survivals", str, None)
        if raw_path is None:
            raise ConfigError(
                "key 'raw_survivals': bootstrap needs the per-trajectory file "
                "written by simulate with keep_raw=true"
            )
        records = serialize.read_raw_survivals_csv(raw_path, records)
        quantiles = _get(config, "bootstrap_quantiles", list, [0.025, 0.975])
        band = qns_recon.bootstrap_spectrum(
            records,
            filters,
            resamples=resamples,
            quantiles=(float(quantiles[0]), float(quantiles[1])),
            seed=_seed(config, args),
            ridge=ridge,
            saturation_floor=floor,
            bins=bins,
        )
    delta_path = None
    native_records_path = _get(config, "native_records", str, None)
    if native_records_path:
        native_records = serialize.read_records_csv(native_records_path, impute_stderr=True)
        native_estimate = qns_recon.reconstruct_spectrum(
            native_records, filters, ridge=ridge, saturation_floor=floor,
            bins_like=estimate,
        )
        subtraction = qns_recon.subtract_native(estimate, native_estimate)
        delta_path = out / "spectrum_delta.csv"
        serialize.write_spectrum_estimate_csv(delta_path, subtraction.spectrum)
    serialize.write_spectrum_estimate_csv(out / "spectrum.csv", estimate, band)
    saturated = [
        r.label
        for r in records
        if qns_recon.decay_from_survival(r.survival_mean, floor).saturated
    ]
    meta = {
        "schema_version": SCHEMA_VERSION,
        "ridge": ridge,
        "saturation_floor": floor,
        "excluded_sequences": saturated,
        "bins": len(estimate.values),
        "seed": records[0].seed if records else None,
        "integrated_power_rad2": estimate.integrated_power(),
    }
    if delta_path is not None:
        meta["delta_spectrum"] = str(delta_path)
    with open(out / "reconstruction_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    print(f"wrote {out / 'spectrum.csv'} ({len(estimate.values)} bins)")


# -- fit -----------------------------------------------------------------------

def cmd_fit(config: dict, args) -> None:
    out = _out_dir(args)
    records = serialize.read_records_csv(_get(config, "records", str), impute_stderr=True)
    seqs = serialize.read_sequences_json(_get(config, "sequences", str))
    grid_size = _get(config, "grid_size", int, noise_models.DEFAULT_GRID_SIZE)
    filters = _filters_for(seqs, grid_size)
    injected_path = _get(config, "injected_spectrum", str, None)
    injected = None
    if injected_path:
        injected = serialize.read_spectrum_csv(injected_path, seqs[0].gate_period)
    kind = _get(config, "model_kind", str, predictor.LORENTZIAN_PLUS_WHITE)
    result = predictor.fit(
        records,
        filters,
        injected=injected,
        kind=kind,
        mask=_get(config, "mask", list, []),
        n_starts=_get(config, "n_starts", int, 8),
        seed=_seed(config, args),
    )
    report = {
        "schema_version": SCHEMA_VERSION,
        "model_kind": result.params.kind,
        "params": {
            "amplitude": result.params.amplitude,
            "cutoff_rad_per_s": result.params.cutoff,
            "white_floor": result.params.white_floor,
            "c1": result.params.c1,
            "c2": result.params.c2,
        },
        "param_stderr": list(result.param_stderr),
        "bounds_active": list(result.bounds_active),
        "loss": result.loss,
        "converged": result.converged,
        "message": result.message,
        "mask": sorted(result.params.mask),
        "jacobian_rel_err": result.jacobian_rel_err,
    }
    with open(out / "fit_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    with open(out / "fit_residuals.csv", "w", newline="") as fh:
        fh.write("seq_index,residual\n")
        for label, res in zip(result.labels, result.residuals):
            fh.write(f"{label},{res!r}\n")
    print(f"wrote {out / 'fit_report.json'} (loss {result.loss:.3e})")


# -- export-circuits ---------------------------------------------------------------

def cmd_export_circuits(config: dict, args) -> None:
    out = _out_dir(args)
    seqs = _sequences_from_config(config)
    model = serialize.read_model_json(_get(config, "model", str))
    n_traj = _get(config, "trajectories", int)
    target = _get(config, "target_state", int, 1)
    prefix = _get(config, "prefix", str, "circuit")
    seed = _seed(config, args)
    root = SeedLineage(seed)
    count = 0
    for seq in seqs:
        for r in range(n_traj):
            trajectory = noise_models.generate_trajectory(
                model, seq.n_slots, root.child(seq.label, r, STREAM_INJECTED)
            )
            text = circuits.emit_circuit(seq, trajectory.phases, target_state=target)
            circuits.verify_roundtrip(text, seq, trajectory.phases)
            path = out / f"{prefix}_seq{seq.label:03d}_traj{r:03d}.qasm"
            path.write_text(text)
            count += 1
    serialize.write_sequences_json(out / "sequences.json", seqs)
    print(f"wrote {count} circuits to {out}")


# -- ingest -----------------------------------------------------------------------

def cmd_ingest(config: dict, args) -> None:
    out = _out_dir(args)
    records = serialize.read_records_csv(_get(config, "records", str), impute_stderr=True)
    seq_path = _get(config, "sequences", str, None)
    if seq_path:
        seqs = {s.label: s for s in serialize.read_sequences_json(seq_path)}
        for r in records:
            if r.label not in seqs:
                raise SchemaError(f"record {r.label}: no matching sequence document")
            if seqs[r.label].n_pulses != r.n_pulses:
                raise SchemaError(
                    f"record {r.label}: n_pulses {r.n_pulses} contradicts sequence "
                    f"document ({seqs[r.label].n_pulses})"
                )
    floor = _get(config, "saturation_floor", float, qns_recon.DEFAULT_SATURATION_FLOOR)
    with open(out / "records_normalized.csv", "w", newline="") as fh:
        fh.write(",".join(serialize.RECORD_FIELDS) + ",saturated\n")
        for r in records:
            flag = int(qns_recon.decay_from_survival(r.survival_mean, floor).saturated)
            fh.write(
                f"{r.label},{r.n_pulses},{r.survival_mean!r},{r.survival_stderr!r},"
                f"{r.shots},{r.trajectories},{r.seed},{flag}\n"
            )
    print(f"wrote {out / 'records_normalized.csv'} ({len(records)} rows)")


# -- report -----------------------------------------------------------------------

def cmd_report(config: dict, args) -> None:
    out = _out_dir(args)
    records = serialize.read_records_csv(_get(config, "records", str), impute_stderr=True)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "n_sequences": len(records),
        "total_shots": sum(r.total_shots for r in records),
        "survival_min": min(r.survival_mean for r in records),
        "survival_max": max(r.survival_mean for r in records),
    }
    recon_path = _get(config, "reconstruction", str, None)
    plot_rows = [
        ("survival", str(r.n_pulses), repr(float(r.survival_mean))) for r in records
    ]
    if recon_path:
        spectrum = serialize.read_spectrum_csv(recon_path, 1.0)
        summary["reconstruction_bins"] = int(spectrum.freqs.size)
        summary["reconstruction_peak_hz"] = float(spectrum.freqs[np.argmax(spectrum.values)])
        plot_rows += [
            ("spectrum", repr(float(f)), repr(float(v)))
            for f, v in zip(spectrum.freqs, spectrum.values)
        ]
    fit_path = _get(config, "fit_report", str, None)
    if fit_path:
        with open(fit_path) as fh:
            summary["fit"] = json.load(fh)
    with open(out / "report.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if args.emit_plot_data:
        with open(out / "plot_data.csv", "w", newline="") as fh:
            fh.write("series,x,y\n")
            for series, x, y in plot_rows:
                fh.write(f"{series},{x},{y}\n")
    print(f"wrote {out / 'report.json'}")


_COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "fit": cmd_fit,
    "export-circuits": cmd_export_circuits,
    "ingest": cmd_ingest,
    "report": cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dephasekit",
        description="Correlated dephasing-noise synthesis, injection and spectroscopy",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name == "report":
            p.add_argument(
                "--emit-plot-data",
                action="store_true",
                help="write tidy long-format CSV for external plotting",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        _COMMANDS[args.command](config, args)
    except (ConfigError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (UnstableModelError, RankDeficientError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
