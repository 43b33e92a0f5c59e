"""Command-line entry point for the full pipeline.

Every artifact-producing subcommand writes a canonical run_manifest.json next
to its outputs (identical flags + seed give byte-identical manifests and
outputs) plus a timings.json sidecar, which carries the wall-clock numbers
and is deliberately outside the reproducibility contract.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, dataio, fdt, grid, metrics, scenario, synth
from .emulator import MlpConfig, load_bank, save_bank, train_lag_bank
from .errors import ConfigError, ToolkitError

DEFAULT_SEED = 1234
SPLITS_FILE = "splits.json"
ANOMALIES_FILE = "anomalies.json"


def _parse_channels(text: str):
    channels = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) not in (2, 3):
            raise ConfigError(
                f"channel spec {part!r} must look like name:role or name:role:units"
            )
        channels.append(dataio.ChannelSpec(bits[0], bits[1], bits[2] if len(bits) == 3 else ""))
    return channels


def _parse_floats(text: str):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _parse_ints(text: str):
    try:
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _write_run_manifest(outdir: str, subcommand: str, args_dict: dict,
                        outputs: list[str], started: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": args_dict.get("seed"),
        "config": args_dict,
        "outputs": sorted(outputs),
    }
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(os.path.join(outdir, "timings.json"), "w", encoding="utf-8") as fh:
        json.dump({"wall_seconds": time.perf_counter() - started}, fh)
        fh.write("\n")


def _args_dict(args, skip=("func",)):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_icosphere(args) -> int:
    started = time.perf_counter()
    mesh = grid.build_icosphere(args.level)
    grid.save_mesh(mesh, args.out)
    _write_run_manifest(args.out, "icosphere", _args_dict(args),
                        [grid.MESH_MANIFEST, grid.MESH_VERTICES], started)
    print(f"wrote level-{args.level} mesh with {mesh.n_vertices} vertices to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    started = time.perf_counter()
    channels = _parse_channels(args.channels)
    noise = _parse_floats(args.noise_scale)
    system = synth.make_truth_system(
        args.level, channels, args.rho, args.teleconnection, args.seed,
        noise_scale=noise if len(noise) > 1 else noise[0],
    )
    data = synth.simulate(
        system, args.members, args.months, args.burn_in, args.seed,
        seasonal_amplitude=args.seasonal_amplitude,
    )
    synth.save_system(system, args.out)
    dataio.save_dataset(data, args.out)
    outputs = [synth.SYSTEM_MANIFEST, dataio.DATASET_MANIFEST,
               "propagator.f64", "noise_cov.f64"]
    outputs += [f"member_{i:03d}.f32" for i in range(data.members)]
    _write_run_manifest(args.out, "synth", _args_dict(args), outputs, started)
    print(f"simulated {args.members} members x {args.months} months "
          f"(D={system.state_dim}) into {args.out}")
    return 0


def _cmd_preprocess(args) -> int:
    started = time.perf_counter()
    data = dataio.load_dataset(args.data)
    clim = dataio.compute_climatology(data)
    anoms = dataio.deseasonalize(data, clim)
    fractions = _parse_floats(args.fractions)
    if len(fractions) not in (2, 3):
        raise ConfigError("--fractions needs 2 (train,val) or 3 (train,val,test) values")
    groups = dataio.split_members(anoms.members, fractions, args.seed)
    train_m, val_m = groups[0], groups[1]
    test_m = groups[2] if len(groups) > 2 else []
    stats = dataio.compute_norm_stats(anoms, train_m)
    anoms.norm_stats = stats
    dataio.save_dataset(anoms, args.out, name=ANOMALIES_FILE)
    with open(os.path.join(args.out, SPLITS_FILE), "w", encoding="utf-8") as fh:
        json.dump(
            {"seed": args.seed, "fractions": fractions,
             "train": train_m, "val": val_m, "test": test_m},
            fh, sort_keys=True, separators=(",", ":"),
        )
        fh.write("\n")
    ci = dataio.channel_indices(anoms.channels, "input")
    train_inputs = anoms.values[train_m][..., ci].reshape(-1, anoms.n_nodes, len(ci))
    ood = metrics.fit_ood_stats(train_inputs, k=min(args.ood_k, len(train_m) * anoms.months - 1))
    metrics.save_ood_stats(ood, args.out)
    outputs = [ANOMALIES_FILE, "climatology.json", "climatology.f32",
               "norm_stats.json", "norm_stats.f32", SPLITS_FILE,
               "ood.json", "ood.f64"]
    outputs += [f"member_{i:03d}.f32" for i in range(anoms.members)]
    _write_run_manifest(args.out, "preprocess", _args_dict(args), outputs, started)
    print(f"preprocessed {anoms.members} members into {args.out} "
          f"(train/val/test = {len(train_m)}/{len(val_m)}/{len(test_m)})")
    return 0


def _load_preprocessed(data_dir: str):
    anoms = dataio.load_dataset(os.path.join(data_dir, ANOMALIES_FILE))
    splits_path = os.path.join(data_dir, SPLITS_FILE)
    splits = None
    if os.path.exists(splits_path):
        with open(splits_path, encoding="utf-8") as fh:
            splits = json.load(fh)
    return anoms, splits


def _cmd_train(args) -> int:
    started = time.perf_counter()
    anoms, splits = _load_preprocessed(args.data)
    config = MlpConfig(
        hidden_layers=args.layers,
        hidden_width=args.width,
        learning_rate=args.lr,
        lr_decay_per_epoch=args.lr_decay,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    kwargs = {}
    if splits is not None:
        kwargs = {"train_members": splits["train"], "val_members": splits["val"]}
    bank = train_lag_bank(
        anoms, _parse_ints(args.lags), config,
        kind=args.kind, ridge=args.ridge, parallel=args.parallel_lags, **kwargs,
    )
    save_bank(bank, args.out)
    outputs = ["bank.json"] + [f"lag_{l:03d}.emu" for l in bank.lags]
    _write_run_manifest(args.out, "train", _args_dict(args), outputs, started)
    print(f"trained {args.kind} bank for lags {bank.lags} into {args.out}")
    return 0


def _cmd_eval(args) -> int:
    started = time.perf_counter()
    anoms, splits = _load_preprocessed(args.data)
    bank = load_bank(args.bank)
    members = None
    if splits is not None and args.split in splits and splits[args.split]:
        members = splits[args.split]
    subset = dataio.take_members(anoms, members) if members else anoms
    lags = _parse_ints(args.lags) if args.lags else None
    report = metrics.evaluate_bank(bank, subset, lags=lags)
    os.makedirs(args.out, exist_ok=True)
    report.save(os.path.join(args.out, "metrics.json"), with_maps=True)
    _write_run_manifest(args.out, "eval", _args_dict(args),
                        ["metrics.json", "metrics_tcorr.f64"], started)
    for i, lag in enumerate(report.lags):
        beats = bool(np.all(report.model_rmse[i] < report.persistence_rmse[i]))
        print(f"lag {lag:3d}: rmse={report.model_rmse[i].round(4).tolist()} "
              f"persistence={report.persistence_rmse[i].round(4).tolist()} "
              f"beats_persistence={beats}")
    return 0


def _cmd_respond(args) -> int:
    started = time.perf_counter()
    sc = scenario.load_scenario(args.scenario)
    if args.seed != DEFAULT_SEED and args.seed != sc.seed:
        warnings.warn(
            f"--seed {args.seed} conflicts with scenario seed {sc.seed}; "
            "the scenario file wins"
        )
    anoms, _splits = _load_preprocessed(args.data)
    bank = load_bank(args.bank)
    mesh = grid.build_icosphere(anoms.mesh_level)
    est = scenario.run_scenario(sc, bank, anoms, mesh)
    fdt.save_response(est, os.path.join(args.out, "emulator"))
    outputs = ["emulator/response.json", "emulator/total.f64",
               "emulator/contributions.f64"]
    if args.classical:
        names_in = [anoms.channels[i].name
                    for i in dataio.channel_indices(anoms.channels, "input")]
        forcing = scenario.build_forcing(mesh, sc.regions, sc.amplitudes, names_in)
        classical = fdt.classical_response(
            anoms, args.classical_lags, forcing, args.eigenvalue_floor
        )
        fdt.save_response(classical, os.path.join(args.out, "classical"))
        outputs += ["classical/response.json", "classical/total.f64",
                    "classical/contributions.f64"]
    _write_run_manifest(args.out, "respond", _args_dict(args), outputs, started)
    print(f"scenario response over lags {est.lags} written to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import build_state, run_server

    state = build_state(args.data, args.bank, ui_dir=args.ui)
    run_server(state, port=args.port)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdtemu",
        description="Fluctuation-dissipation response emulation pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"master RNG seed (default {DEFAULT_SEED})")

    p = sub.add_parser("icosphere", help="emit an icosahedral mesh")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=_cmd_icosphere)

    p = sub.add_parser("synth", help="build a truth system and simulate an ensemble")
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--channels", default="cres:input,tas:output",
                   help="comma list of name:role[:units]")
    p.add_argument("--rho", type=float, default=0.8, help="target spectral radius")
    p.add_argument("--teleconnection", type=float, default=0.4)
    p.add_argument("--noise-scale", default="1.0,0.35",
                   help="noise std, scalar or one value per dynamic channel")
    p.add_argument("--members", type=int, default=8)
    p.add_argument("--months", type=int, default=240)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--seasonal-amplitude", type=float, default=1.0)
    add_seed(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("preprocess",
                       help="climatology, anomalies, norm stats, splits, OOD stats")
    p.add_argument("--data", required=True, help="dataset manifest or its directory")
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", default="0.6,0.2,0.2")
    p.add_argument("--ood-k", type=int, default=10)
    add_seed(p)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train a lag bank of emulators")
    p.add_argument("--data", required=True, help="preprocessed directory")
    p.add_argument("--out", required=True)
    p.add_argument("--lags", required=True, help="comma list, e.g. 1,2,3,4,5,6")
    p.add_argument("--kind", choices=("mlp", "linear"), default="mlp")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--lr-decay", type=float, default=1e-6)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--parallel-lags", type=int, default=1)
    add_seed(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="metric report incl. persistence baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--lags", default=None)
    add_seed(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("respond", help="run a scenario file through the FDT engine")
    p.add_argument("--scenario", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classical", action="store_true",
                   help="also compute the covariance-based classical estimate")
    p.add_argument("--classical-lags", type=int, default=40,
                   help="maximum lag K for the classical sum over 0..K")
    p.add_argument("--eigenvalue-floor", type=float, default=1e-6)
    add_seed(p)
    p.set_defaults(func=_cmd_respond)

    p = sub.add_parser("serve", help="start the scenario console HTTP service")
    p.add_argument("--data", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--ui", default=None, help="directory with the built web bundle")
    add_seed(p)
    p.set_defaults(func=_cmd_serve)
    return parser


def dispatch(argv) -> int:
    """Parse and run; exit 0 on success, 1 on validation failure, 2 on usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
