"""Command-line workbench: ``deimlab <subcommand> [--config F] [--seed S] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 missing or corrupt input,
4 numerical instability (solver blow-up, diverged training, singular
interpolation matrix), 1 anything else.

``DEIMLAB_THREADS`` caps the BLAS/OpenMP thread count; it must be set
before numpy loads, which is why this module reads it first.
"""

from __future__ import annotations

import os

_threads = os.environ.get("DEIMLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .burgers import BurgersConfig, run_fom  # noqa: E402
from .config import ExperimentConfig, dump_config, load_config  # noqa: E402
from .errors import ConfigError, InputError, InstabilityError, SingularMatrixError, TrainingDivergedError  # noqa: E402
from .node import CnnRhs, NodeTrainConfig, l2_error_series, rollout_node, train_node  # noqa: E402
from .rom import GalerkinRom, build_pod, deim_select, run_rom  # noqa: E402
from .sampler import AdaptiveSampler, SamplerNet, TrainConfig, train  # noqa: E402
from .storage import SnapshotMatrix, file_hash, read_snapshots, write_csv, write_snapshots  # noqa: E402
from .vortex import INIT_TAGS, Grid2D, init_config, run_vortex, write_pgm  # noqa: E402
from .windowed import WindowSpec, compare_streams, revisit_count, trajectories, winding  # noqa: E402

log = logging.getLogger("deimlab")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_INPUT, EXIT_INSTABILITY = 0, 1, 2, 3, 4


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


class Context:
    def __init__(self, cfg: ExperimentConfig, out: Path, fmt: str):
        self.cfg = cfg
        self.out = out
        self.fmt = fmt
        self.written: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def header(self) -> dict:
        return {"config": self.cfg.to_dict(), "seed": self.seed, "version": __version__}

    def path(self, name: str) -> Path:
        return self.out / name

    def save_fields(self, stem: str, snaps: SnapshotMatrix) -> Path:
        snaps = SnapshotMatrix(snaps.data, snaps.times, snaps.field_shape, dict(snaps.meta, **self.header()))
        if self.fmt == "csv":
            p = self.path(stem + ".csv")
            write_snapshot_csv(p, snaps)
        else:
            p = self.path(stem + ".dlab")
            write_snapshots(p, snaps)
        self.written.append(p)
        return p

    def load_fields(self, stem: str) -> SnapshotMatrix:
        for suffix, reader in ((".dlab", read_snapshots), (".csv", read_snapshot_csv)):
            p = self.path(stem + suffix)
            if p.is_file():
                return reader(p)
        raise InputError(f"missing input {self.path(stem)}.dlab (run the producing subcommand first)")

    def csv(self, name: str, header, rows, extra: dict | None = None) -> Path:
        p = self.path(name)
        write_csv(p, header, rows, dict(self.header(), **(extra or {})))
        self.written.append(p)
        return p

    def json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.written.append(p)
        return p

    def echo_config(self) -> None:
        p = self.path("config.resolved.ini")
        p.write_text(dump_config(self.cfg))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj)}")


def write_snapshot_csv(path, snaps: SnapshotMatrix) -> None:
    header = ["row"] + [f"col{k}" for k in range(snaps.n_cols)]
    rows = ([i] + snaps.data[i].tolist() for i in range(snaps.n_rows))
    write_csv(path, header, rows, {"times": snaps.times, "field_shape": list(snaps.field_shape), "meta": snaps.meta})


def read_snapshot_csv(path) -> SnapshotMatrix:
    from .storage import read_csv

    _, rows, comments = read_csv(path)
    data = np.array([[float(v) for v in r[1:]] for r in rows])
    times = np.array(json.loads(comments["times"]), dtype=np.float64)
    shape = tuple(json.loads(comments["field_shape"]))
    return SnapshotMatrix(data.reshape(len(rows), -1), times, shape, json.loads(comments["meta"]))


def burgers_config(cfg: ExperimentConfig) -> BurgersConfig:
    b = cfg.burgers
    return BurgersConfig(Re=b.Re, n=b.n, t_final=b.t_final, n_steps=b.n_steps, L=b.L)


def vortex_grid(cfg: ExperimentConfig) -> Grid2D:
    return Grid2D(cfg.vortex.nx, cfg.vortex.ny)


def window_spec(cfg: ExperimentConfig) -> WindowSpec:
    w = cfg.windowed
    return WindowSpec(w.window_size, w.stride, w.n_points)


def _rom_setup(ctx: Context, points: int):
    cfg = ctx.cfg
    bc = burgers_config(cfg)
    states = ctx.load_fields("burgers_states")
    nonlinear = ctx.load_fields("burgers_nonlinear")
    Psi = _basis_or_build(ctx, "pod_states", states, cfg.rom.modes)
    Phi = _basis_or_build(ctx, "pod_nonlinear", nonlinear, points)
    rom = GalerkinRom(bc.grid, bc.Re, Psi)
    return bc, states, rom, Psi, Phi


def _basis_or_build(ctx: Context, stem: str, snaps: SnapshotMatrix, modes: int) -> np.ndarray:
    """Saved basis if it has at least ``modes`` columns, else a fresh POD."""
    for suffix, reader in ((".dlab", read_snapshots), (".csv", read_snapshot_csv)):
        p = ctx.path(stem + suffix)
        if p.is_file():
            B = reader(p)
            if B.n_cols >= modes:
                return B.data[:, :modes]
    return build_pod(snaps, modes=modes).Psi


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_burgers_fom(ctx: Context, args) -> None:
    bc = burgers_config(ctx.cfg)
    res = run_fom(bc)
    ctx.save_fields("burgers_states", res.states)
    ctx.save_fields("burgers_nonlinear", res.nonlinear)
    err = res.squared_error
    rows = ((k, float(t), float(err[:, k].max()), float(np.sqrt(err[:, k].mean()))) for k, t in enumerate(res.states.times))
    ctx.csv("burgers_error.csv", ["step", "t", "max_sq_error", "rms_error"], rows, {"cfl": res.cfl})
    print(f"burgers-fom: {bc.n_steps} steps, CFL {res.cfl:.3f}, max squared error {res.max_squared_error:.4e}")


def cmd_pod(ctx: Context, args) -> None:
    cfg = ctx.cfg
    jobs = [("states", "burgers_states", args.modes or cfg.rom.modes), ("nonlinear", "burgers_nonlinear", args.modes or max(cfg.rom.points, cfg.sampler.points))]
    if args.snapshots:
        jobs = [(args.name or Path(args.snapshots).stem, None, args.modes or cfg.rom.modes)]
    for name, stem, modes in jobs:
        snaps = read_snapshots(args.snapshots) if stem is None else ctx.load_fields(stem)
        basis = build_pod(snaps, modes=modes if args.energy is None else None, energy=args.energy)
        mode_axis = np.arange(basis.m, dtype=np.float64)
        ctx.save_fields(f"pod_{name}", SnapshotMatrix(basis.Psi, mode_axis, (basis.n,), {"kind": "pod_basis", "source": name}))
        rows = ((k, float(s), float(c)) for k, (s, c) in enumerate(zip(basis.sigma, basis.energy_fractions)))
        ctx.csv(f"pod_{name}_energy.csv", ["mode", "sigma", "cumulative_energy"], rows, {"modes_kept": basis.m})
        print(f"pod {name}: kept {basis.m} modes, energy {basis.energy_fractions[basis.m - 1]:.6f}")


def _report_counts(counter, l: int, tag: str) -> dict:
    rep = counter.as_dict()
    print(f"{tag}: nonlinear evaluations per-step-batch {rep['per_step_batch']:,} (l={l}), per-stage {rep['per_stage']:,}")
    return rep


def _rom_outputs(ctx: Context, prefix: str, result, bc: BurgersConfig, extra: dict) -> None:
    times = np.arange(result.mse.size) * bc.dt
    ctx.csv(f"{prefix}_mse.csv", ["step", "t", "mse"], ((k, float(t), float(m)) for k, (t, m) in enumerate(zip(times, result.mse))), extra)
    if result.indices is not None:
        x = bc.grid.x
        rows = ((k, s, int(i), float(x[i])) for k, row in enumerate(result.indices) for s, i in enumerate(row))
        ctx.csv(f"{prefix}_indices.csv", ["step", "slot", "index", "x"], rows, extra)


def cmd_deim_rom(ctx: Context, args) -> None:
    cfg = ctx.cfg
    mode = args.mode or cfg.rom.mode
    l = args.points or cfg.rom.points
    bc, states, rom, Psi, Phi = _rom_setup(ctx, l)
    if mode == "full":
        res = run_rom(rom, states, bc.dt, bc.n_steps, "full")
        report = {"mode": "full", "time_mean_mse": res.mean_mse}
        prefix = "rom_full"
    else:
        op = deim_select(Phi, Psi)
        res = run_rom(rom, states, bc.dt, bc.n_steps, op)
        counts = _report_counts(res.counter, l, "deim-rom")
        report = {"mode": "static", "points": l, "indices": op.indices, "time_mean_mse": res.mean_mse, "evaluations": counts}
        prefix = f"rom_static_l{l}"
    _rom_outputs(ctx, prefix, res, bc, {"mode": mode, "points": l})
    ctx.json(f"{prefix}_report.json", dict(report, **ctx.header()))
    print(f"deim-rom {mode}: time-mean MSE {res.mean_mse:.4e}")


def sampler_train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    s = cfg.sampler
    return TrainConfig(
        epochs=s.epochs, lr=s.lr, beta1=s.beta1, beta2=s.beta2, eps=s.eps, segment=s.segment,
        tau_start=s.tau_start, tau_end=s.tau_end, noise=s.noise, seed=seed, net_input=s.net_input,
        eval_every=s.eval_every, clip=s.clip,
    )  # fmt: skip


def cmd_train_adaptive(ctx: Context, args) -> None:
    cfg = ctx.cfg
    s = cfg.sampler
    l = args.points or s.points
    bc, states, rom, Psi, Phi = _rom_setup(ctx, l)
    static = deim_select(Phi, Psi)
    net = SamplerNet.initialize(bc.n, rom.m, l, s.hidden, ctx.seed, static.indices, s.warm_logit, s.warm_width)
    tc = sampler_train_config(cfg, ctx.seed)
    result = train(net, states, rom, Phi, tc, bc.dt, static)
    ckpt = ctx.path(f"sampler_l{l}.ckpt")
    net.save(ckpt, {"config": cfg.to_dict(), "seed": ctx.seed, "modes": rom.m, "best_epoch": result.best_epoch, "best_mse": result.best_mse})
    ctx.written.append(ckpt)
    rows = ((h.epoch, h.tau, h.train_loss, h.eval_mse, h.best_mse, h.ridge_events, h.skipped_segments) for h in result.history)
    ctx.csv(
        f"sampler_l{l}_loss.csv",
        ["epoch", "tau", "train_loss", "eval_mse", "best_mse", "ridge_events", "skipped_segments"],
        rows,
        {"initial_mse": result.initial_mse, "best_epoch": result.best_epoch},
    )
    print(f"train-adaptive l={l}: hard-rollout MSE {result.initial_mse:.4e} -> {result.best_mse:.4e} (epoch {result.best_epoch})")


def cmd_rom_adaptive(ctx: Context, args) -> None:
    l = args.points or ctx.cfg.sampler.points
    ckpt = Path(args.checkpoint) if args.checkpoint else ctx.path(f"sampler_l{l}.ckpt")
    if not ckpt.is_file():
        raise InputError(f"missing checkpoint {ckpt}")
    net, meta = SamplerNet.load(ckpt)
    bc, states, rom, Psi, Phi = _rom_setup(ctx, net.l)
    static = deim_select(Phi, Psi)
    sampler = AdaptiveSampler(net, rom, Phi, static)
    res = run_rom(rom, states, bc.dt, bc.n_steps, sampler)
    ref = run_rom(rom, states, bc.dt, bc.n_steps, static)
    counts = _report_counts(res.counter, net.l, "rom-adaptive")
    _rom_outputs(ctx, f"rom_adaptive_l{net.l}", res, bc, {"points": net.l, "checkpoint": ckpt.name})
    report = {
        "points": net.l,
        "time_mean_mse": res.mean_mse,
        "static_time_mean_mse": ref.mean_mse,
        "fallback_steps": sampler.fallbacks,
        "evaluations": counts,
    }
    ctx.json(f"rom_adaptive_l{net.l}_report.json", dict(report, **ctx.header()))
    print(f"rom-adaptive l={net.l}: time-mean MSE {res.mean_mse:.4e} (static {ref.mean_mse:.4e})")


def _vortex_run(ctx: Context, tag: str):
    v = ctx.cfg.vortex
    init = init_config(tag, v.amplitude, v.rho, v.weak_ratio)
    return run_vortex(init, vortex_grid(ctx.cfg), v.Re, v.dt, v.n_steps, v.laplacian, v.jacobian, v.census_threshold)


def cmd_vortex_sim(ctx: Context, args) -> None:
    tags = INIT_TAGS if args.init == "all" else [args.init]
    for tag in tags:
        run = _vortex_run(ctx, tag)
        ctx.save_fields(f"vortex_{tag}_omega", run.omega)
        ctx.save_fields(f"vortex_{tag}_rhs", run.rhs)
        rows = ((k, float(t), float(e), float(en), int(c)) for k, (t, e, en, c) in enumerate(zip(run.omega.times, run.enstrophy, run.energy, run.census)))
        ctx.csv(f"vortex_{tag}_diagnostics.csv", ["step", "t", "enstrophy", "energy", "census"], rows, {"cfl": run.cfl})
        if args.pgm:
            for k in (0, run.omega.n_cols - 1):
                p = ctx.path(f"vortex_{tag}_{k:04d}.pgm")
                write_pgm(p, run.omega.field(k))
        print(f"vortex-sim {tag}: {run.omega.n_cols - 1} steps, census {run.census[0]} -> {run.census[-1]}")


def node_train_config(cfg: ExperimentConfig, seed: int) -> NodeTrainConfig:
    n = cfg.node
    return NodeTrainConfig(
        n_train=n.n_train, epochs=n.epochs, lr=n.lr, batch_size=n.batch_size, seed=seed,
        loss_mode=n.loss_mode, standardize=n.standardize, dt=cfg.vortex.dt,
    )  # fmt: skip


def cmd_train_node(ctx: Context, args) -> None:
    omega = ctx.load_fields("vortex_horizontal_omega")
    rhs = ctx.load_fields("vortex_horizontal_rhs")
    net = CnnRhs.initialize(ctx.cfg.node.channels, ctx.seed)
    result = train_node(net, omega, rhs, node_train_config(ctx.cfg, ctx.seed))
    ckpt = ctx.path("node.ckpt")
    net.save(ckpt, {"config": ctx.cfg.to_dict(), "seed": ctx.seed, "target_variance": result.target_variance})
    ctx.written.append(ckpt)
    ctx.csv(
        "node_loss.csv",
        ["epoch", "loss"],
        ((k + 1, v) for k, v in enumerate(result.history)),
        {"initial_loss": result.initial_loss, "final_loss": result.final_loss, "target_variance": result.target_variance},
    )
    print(f"train-node: loss {result.initial_loss:.4e} -> {result.final_loss:.4e} (target variance {result.target_variance:.4e})")


def cmd_node_rollout(ctx: Context, args) -> None:
    ckpt = Path(args.checkpoint) if args.checkpoint else ctx.path("node.ckpt")
    if not ckpt.is_file():
        raise InputError(f"missing checkpoint {ckpt}")
    net, _ = CnnRhs.load(ckpt)
    tags = INIT_TAGS if args.init == "all" else [args.init]
    v = ctx.cfg.vortex
    for tag in tags:
        truth = ctx.load_fields(f"vortex_{tag}_omega")
        ro = rollout_node(net, truth.field(0), v.dt, truth.n_cols - 1, ctx.cfg.node.blowup_factor, {"init": tag})
        ctx.save_fields(f"node_{tag}_omega", ro.omega)
        ctx.save_fields(f"node_{tag}_rhs", ro.rhs)
        err = l2_error_series(ro.omega, SnapshotMatrix(truth.data[:, : ro.omega.n_cols], truth.times[: ro.omega.n_cols], truth.field_shape))
        ctx.csv(
            f"node_{tag}_l2.csv",
            ["step", "t", "l2_error"],
            ((k, float(t), float(e)) for k, (t, e) in enumerate(zip(ro.omega.times, err))),
            {"truncated": ro.truncated},
        )
        print(f"node-rollout {tag}: final L2 error {err[-1]:.4e}{' (truncated)' if ro.truncated else ''}")


def cmd_windowed_deim(ctx: Context, args) -> None:
    spec = window_spec(ctx.cfg)
    tags = INIT_TAGS if args.init == "all" else [args.init]
    shape = (ctx.cfg.vortex.ny, ctx.cfg.vortex.nx)
    summary = {}
    for tag in tags:
        truth = ctx.load_fields(f"vortex_{tag}_rhs")
        streams = {"truth": truth}
        try:
            streams["node"] = ctx.load_fields(f"node_{tag}_rhs")
        except InputError:
            log.info("no NODE stream for %s; extracting ground-truth trajectories only", tag)
        shape = truth.field_shape
        info = {}
        for name, stream in streams.items():
            for mode in ("slot", "nearest"):
                tr = trajectories(stream, spec, shape, mode)
                suffix = "" if mode == "slot" else "_nearest"
                ctx.csv(f"windowed_{tag}_{name}_trajectory{suffix}.csv", ["window_index", "slot", "grid_index", "x", "y"], tr.rows(), {"mode": mode})
                if mode == "slot":
                    w = winding(tr, 0)
                    info[name] = {
                        "windows": tr.n_windows,
                        "degraded_windows": int(tr.degraded.sum()),
                        "revisits_slot0": revisit_count(tr, 0),
                        "revisits_slot1": revisit_count(tr, 1) if spec.n_points > 1 else 0,
                        "winding_slot0": float(w[-1] - w[0]) if np.isfinite(w).any() else float("nan"),
                    }
        if "node" in streams and streams["node"].n_cols == truth.n_cols:
            rep = compare_streams(truth, streams["node"], spec, shape)
            ctx.csv(f"windowed_{tag}_divergence.csv", ["window_index", "matched_distance", "truth_points", "node_points"], rep.rows())
            info["mean_matched_distance"] = float(np.nanmean(rep.matched_distance))
        summary[tag] = info
        print(f"windowed-deim {tag}: " + ", ".join(f"{k}={v}" for k, v in info.items()))
    ctx.json("windowed_summary.json", dict(summary=summary, **ctx.header()))


STAGES = [
    ("burgers-fom", cmd_burgers_fom, {}),
    ("pod", cmd_pod, {"snapshots": None, "modes": None, "energy": None, "name": None}),
    ("deim-rom", cmd_deim_rom, {"mode": "full", "points": None}),
    ("deim-rom", cmd_deim_rom, {"mode": "static", "points": 18}),
    ("deim-rom", cmd_deim_rom, {"mode": "static", "points": None}),
    ("train-adaptive", cmd_train_adaptive, {"points": None}),
    ("rom-adaptive", cmd_rom_adaptive, {"points": None, "checkpoint": None}),
    ("vortex-sim", cmd_vortex_sim, {"init": "all", "pgm": True}),
    ("train-node", cmd_train_node, {}),
    ("node-rollout", cmd_node_rollout, {"init": "all", "checkpoint": None}),
    ("windowed-deim", cmd_windowed_deim, {"init": "all"}),
]


def cmd_reproduce_all(ctx: Context, args) -> None:
    ctx.echo_config()
    timing = []
    for name, fn, defaults in STAGES:
        t0 = time.perf_counter()
        fn(ctx, argparse.Namespace(**defaults))
        timing.append({"stage": name, "args": defaults, "seconds": round(time.perf_counter() - t0, 3)})
    files = sorted({p for p in ctx.written if p.is_file()})
    manifest = {
        "version": __version__,
        "seed": ctx.seed,
        "config": ctx.cfg.to_dict(),
        "files": {p.name: file_hash(p) for p in files},
        "timing": timing,
        "total_seconds": round(sum(t["seconds"] for t in timing), 3),
    }
    (ctx.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"reproduce-all: {len(files)} files, {manifest['total_seconds']:.1f} s; manifest at {ctx.out / 'manifest.json'}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="seed override (unsigned 64-bit)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--format", choices=("csv", "binary"), help="bulk field output format")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="deimlab", description="POD/DEIM reduced-order modelling workbench")
    p.add_argument("--version", action="version", version=f"deimlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("burgers-fom", parents=[common], help="run the Burgers full-order model")
    sp = sub.add_parser("pod", parents=[common], help="POD bases of the Burgers snapshots")
    sp.add_argument("--snapshots", help="snapshot file (default: both Burgers outputs in --out)")
    sp.add_argument("--name", help="basis name when --snapshots is given")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--modes", type=int)
    g.add_argument("--energy", type=float)
    sp = sub.add_parser("deim-rom", parents=[common], help="Galerkin ROM with full or static-DEIM nonlinearity")
    sp.add_argument("--mode", choices=("static", "full"))
    sp.add_argument("--points", type=int)
    sp = sub.add_parser("train-adaptive", parents=[common], help="train the adaptive DEIM sampler")
    sp.add_argument("--points", type=int)
    sp = sub.add_parser("rom-adaptive", parents=[common], help="ROM rollout with a trained sampler")
    sp.add_argument("--points", type=int)
    sp.add_argument("--checkpoint")
    sp = sub.add_parser("vortex-sim", parents=[common], help="vortex-merging reference runs")
    sp.add_argument("--init", default="horizontal", choices=(*INIT_TAGS, "all"))
    sp.add_argument("--pgm", action="store_true", help="also write first/last vorticity as PGM images")
    sub.add_parser("train-node", parents=[common], help="train the CNN neural ODE")
    sp = sub.add_parser("node-rollout", parents=[common], help="roll out the trained neural ODE")
    sp.add_argument("--init", default="horizontal", choices=(*INIT_TAGS, "all"))
    sp.add_argument("--checkpoint")
    sp = sub.add_parser("windowed-deim", parents=[common], help="windowed DEIM point trajectories")
    sp.add_argument("--init", default="horizontal", choices=(*INIT_TAGS, "all"))
    sub.add_parser("reproduce-all", parents=[common], help="run every stage and write a manifest")
    return p


COMMANDS = {
    "burgers-fom": cmd_burgers_fom,
    "pod": cmd_pod,
    "deim-rom": cmd_deim_rom,
    "train-adaptive": cmd_train_adaptive,
    "rom-adaptive": cmd_rom_adaptive,
    "vortex-sim": cmd_vortex_sim,
    "train-node": cmd_train_node,
    "node-rollout": cmd_node_rollout,
    "windowed-deim": cmd_windowed_deim,
    "reproduce-all": cmd_reproduce_all,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        ctx = Context(cfg, Path(args.out), args.format or cfg.run.format)
        if args.command != "reproduce-all":
            ctx.echo_config()
        COMMANDS[args.command](ctx, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InstabilityError, TrainingDivergedError, SingularMatrixError) as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
