"""Command-line front end: ``ttfs-snn <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
All randomness derives from ``--seed``; see ``substream``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from . import metrics
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .dataset import DATA_DIR_ENV, load_mnist
from .hardware import VariationSpec, apply_variation, build_ladder, effective_weights, quantize_network, representable_weights
from .rate_baseline import AnalogConfig, convert_to_rate_snn, train_analog
from .snn import forward_rate_spikes, forward_ttfs_times, write_trace_csvs
from .encoding import encode_rate_batch, ttfs_times
from .training import TrainConfig, TrainingDiverged, evaluate, train

log = logging.getLogger("ttfs_snn")


class UsageError(Exception):
    pass


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named component of a run."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _data(args, split: str):
    path = args.data or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise UsageError(f"--data is required (or set ${DATA_DIR_ENV})")
    if not Path(path).is_dir():
        raise UsageError(f"--data {path}: not a directory")
    try:
        return load_mnist(path, split)
    except FileNotFoundError as exc:
        raise UsageError(f"--data {path}: {exc}") from exc


def _load(path) -> Checkpoint:
    if not Path(path).is_file():
        raise UsageError(f"checkpoint {path} does not exist")
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _spiking(ckpt: Checkpoint, hardware: bool = True):
    if ckpt.mode == "rate-analog":
        raise UsageError("rate-analog checkpoints must be converted before spiking inference")
    if hardware and ckpt.quantized is not None:
        return effective_weights(ckpt.quantized)
    return ckpt.network


def _accuracy(net, mode: str, ds, t_total: int, rng) -> float:
    if mode == "ttfs":
        return evaluate(net, ds, t_total).accuracy
    preds, _, _ = metrics.run_rate(net, ds, t_total, rng)
    return float(np.mean(preds == ds.labels))


def _coding(ckpt: Checkpoint) -> str:
    return "ttfs" if ckpt.mode == "ttfs" else "rate"


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


# -- commands ---------------------------------------------------------------


def cmd_train(args) -> int:
    train_set, test_set = _data(args, "train"), _data(args, "test")
    if args.n_test is not None:
        test_set = test_set.subset(args.n_test)
    hidden = tuple(args.hidden)
    if args.mode == "ttfs":
        cfg = TrainConfig(
            hidden=hidden, t_max=args.tmax, alpha=args.alpha, eta=args.eta, v_th=args.vth,
            i_init=args.init, epochs=args.epochs, lr_decay=args.lr_decay, patience=args.patience,
            seed=args.seed, target_rule=args.target_rule, surrogate=args.surrogate,
            hidden_scale=args.hidden_scale, n_train=args.n_train, max_seconds=args.max_seconds,
        )
        res = train(train_set, cfg, test_set, callback=lambda r: print(json.dumps(r), flush=True))
        ckpt = Checkpoint("ttfs", res.network, history=res.history, config=_config(args),
                          extra={"train_config": cfg.to_dict(), "stopped": res.stopped, "best_epoch": res.best_epoch})
        history = res.history
    else:
        cfg = AnalogConfig(hidden=hidden, eta=args.eta, lr_decay=args.lr_decay, epochs=args.epochs,
                           seed=args.seed, n_train=args.n_train)
        res = train_analog(train_set, cfg, test_set)
        net = convert_to_rate_snn(res.network, train_set.images, args.vth, quantize=False)
        acc = _accuracy(net, "rate", test_set, args.tmax, substream(args.seed, "rate-eval"))
        print(json.dumps({"rate_snn_test_acc": acc, "T": args.tmax}))
        ckpt = Checkpoint("rate-snn", net, history=res.history, config=_config(args),
                          extra={"analog_weights": [w.tolist() for w in res.network.weights], "analog_config": cfg.to_dict()})
        history = res.history
    save_checkpoint(args.out, ckpt)
    hist = args.history or str(Path(args.out).with_suffix(".history.csv"))
    metrics.write_csv(hist, [{k: r.get(k, float("nan")) for k in ("epoch", "eta", "train_acc", "test_acc", "mean_loss")} for r in history], _config(args))
    print(f"wrote {args.out} and {hist}")
    return 0


def cmd_eval(args) -> int:
    ckpt = _load(args.checkpoint)
    ds = _data(args, args.split)
    if args.n is not None:
        ds = ds.subset(args.n)
    net = _spiking(ckpt, hardware=not args.software)
    mode = _coding(ckpt)
    rep = metrics.measure(net, ds, mode, args.T or (args.tmax if mode == "ttfs" else 64),
                          metrics.calibrate_energy_model(), substream(args.seed, "rate-eval"))
    out = {"config": _config(args), "report": rep.to_dict()}
    if mode == "ttfs":
        out["confusion"] = evaluate(net, ds, rep.t_total).confusion.tolist()
    print(json.dumps(rep.row()))
    if args.out:
        _write_json(args.out, out)
    return 0


def _ladder(args):
    if args.ladder == "table":
        if not args.table:
            raise UsageError("--ladder table needs --table FILE with 51 values")
        return build_ladder("table", table=np.loadtxt(args.table, delimiter=",").ravel())
    return build_ladder(args.ladder, args.gmin, args.gmax, args.curvature)


def cmd_quantize(args) -> int:
    ckpt = _load(args.checkpoint)
    if ckpt.quantized is not None and not args.force:
        raise UsageError(f"{args.checkpoint} is already quantized (use --force to redo)")
    if ckpt.mode == "rate-analog":
        raise UsageError("convert the analog network before quantizing")
    try:
        ladder = _ladder(args)
        cnet = quantize_network(ckpt.network, ladder)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ckpt.quantized = cnet
    ckpt.extra["quantize_config"] = _config(args)
    print(json.dumps({"distinct_states": int(len(representable_weights(ladder)))}))
    if args.n_eval:
        ds = _data(args, "test").subset(args.n_eval)
        mode = _coding(ckpt)
        t = args.tmax
        before = _accuracy(ckpt.network, mode, ds, t, substream(args.seed, "rate-eval"))
        after = _accuracy(effective_weights(cnet), mode, ds, t, substream(args.seed, "rate-eval"))
        print(json.dumps({"accuracy_before": before, "accuracy_after": after}))
        ckpt.extra["quantize_accuracy"] = {"before": before, "after": after, "n": args.n_eval}
    save_checkpoint(args.out or args.checkpoint, ckpt)
    return 0


def cmd_inject(args) -> int:
    ckpt = _load(args.checkpoint)
    if ckpt.quantized is None:
        raise UsageError("inject needs a quantized checkpoint (run quantize first)")
    try:
        spec = VariationSpec(args.sigma_weight, args.sigma_th, args.r_synapse, args.r_neuron, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = _data(args, "test")
    if args.n is not None:
        ds = ds.subset(args.n)
    mode = _coding(ckpt)
    clean = effective_weights(ckpt.quantized)
    noisy = apply_variation(ckpt.quantized, spec, substream(args.seed, "inject"))
    res = {
        "config": _config(args),
        "clean_accuracy": _accuracy(clean, mode, ds, args.T, substream(args.seed, "rate-eval")),
        "accuracy": _accuracy(noisy, mode, ds, args.T, substream(args.seed, "rate-eval")),
    }
    print(json.dumps({k: v for k, v in res.items() if k != "config"}))
    if args.out:
        _write_json(args.out, res)
    return 0


def cmd_sweep(args) -> int:
    ckpts = {}
    if args.ttfs:
        ckpts["ttfs"] = _load(args.ttfs)
    if args.rate:
        ckpts["rate"] = _load(args.rate)
    if not ckpts:
        raise UsageError("sweep needs --ttfs and/or --rate checkpoints")
    if len(ckpts) == 2 and ckpts["ttfs"].layer_sizes != ckpts["rate"].layer_sizes:
        raise UsageError(
            f"architecture mismatch: ttfs {ckpts['ttfs'].layer_sizes} vs rate {ckpts['rate'].layer_sizes}"
        )
    for name, c in ckpts.items():
        if _coding(c) != name:
            raise UsageError(f"--{name} checkpoint has mode {c.mode}")
    ds = _data(args, "test")
    if args.n is not None:
        ds = ds.subset(args.n)
    out = Path(args.out)
    config = _config(args)
    if args.type == "timesteps":
        try:
            t_list = [int(v) for v in args.list.split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"--list: {exc}") from exc
        if not t_list or min(t_list) < 1:
            raise UsageError("--list needs positive time-step counts")
        model = metrics.calibrate_energy_model()
        nets = {m: _spiking(c) for m, c in ckpts.items()}
        reports = metrics.sweep_timesteps(nets, ds, t_list, model, args.seed)
        rows = [r.row() for r in reports]
        metrics.write_csv(out.with_suffix(".csv"), rows, config)
        _write_json(out.with_suffix(".json"), {"config": config, "energy_model": model.to_dict(), "reports": [r.to_dict() for r in reports]})
    else:
        if not args.param:
            raise UsageError("--type variation needs --param")
        try:
            grid = metrics.parse_grid(args.grid or "")
        except ValueError as exc:
            raise UsageError(f"--grid: {exc}") from exc
        for name, c in ckpts.items():
            if c.quantized is None:
                raise UsageError(f"--{name} checkpoint is not quantized")
        nets = {m: (c.quantized, m) for m, c in ckpts.items()}
        cells = metrics.sweep_variation(nets, ds, args.param, grid, args.trials, args.seed, args.T)
        rows = [c.row() for c in cells]
        metrics.write_csv(out.with_suffix(".csv"), rows, config)
        _write_json(out.with_suffix(".json"), {"config": config, "summary": metrics.summarize_variation(cells)})
    for r in rows:
        print(json.dumps(r))
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.json')}")
    return 0


def cmd_export_raster(args) -> int:
    ckpt = _load(args.checkpoint)
    ds = _data(args, args.split)
    if not 0 <= args.image < len(ds):
        raise UsageError(f"--image {args.image} out of range [0, {len(ds) - 1}]")
    net = _spiking(ckpt, hardware=not args.software)
    x = ds.flat[args.image : args.image + 1]
    if _coding(ckpt) == "ttfs":
        trace = forward_ttfs_times(net, ttfs_times(x, args.T, ds.i_max), args.T, record=True)
    else:
        spikes = encode_rate_batch(x, args.T, substream(args.seed, "rate-eval"), "poisson-random", ds.i_max)
        trace = forward_rate_spikes(net, spikes, record=True)
    names = ["input", "hidden", "output"] if len(trace.times) == 3 else None
    Path(args.prefix).parent.mkdir(parents=True, exist_ok=True)
    paths = write_trace_csvs(trace, args.prefix, names)
    from .snn import winners

    meta = {"config": _config(args), "label": int(ds.labels[args.image]), "winner": int(winners(trace)[0]), "files": paths}
    _write_json(f"{args.prefix}_meta.json", meta)
    print(json.dumps(meta))
    return 0


# -- parser -----------------------------------------------------------------


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttfs-snn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help=f"MNIST directory (default ${DATA_DIR_ENV})")
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a TTFS or rate-baseline network")
    common(t)
    t.add_argument("--mode", choices=["ttfs", "rate"], default="ttfs")
    t.add_argument("--hidden", type=int, nargs="+", default=[128])
    t.add_argument("--tmax", type=int, default=64)
    t.add_argument("--alpha", type=int, default=1)
    t.add_argument("--eta", type=float, default=0.02)
    t.add_argument("--vth", type=float, default=1.6)
    t.add_argument("--init", type=float, default=0.1)
    t.add_argument("--epochs", type=_nonneg_int, default=30)
    t.add_argument("--lr-decay", type=float, default=0.9)
    t.add_argument("--patience", type=int, default=5)
    t.add_argument("--target-rule", choices=["printed", "early-only"], default="early-only")
    t.add_argument("--surrogate", choices=["boundary", "constant"], default="constant")
    t.add_argument("--hidden-scale", choices=["unit", "output-norm"], default="output-norm")
    t.add_argument("--n-train", type=int)
    t.add_argument("--n-test", type=int)
    t.add_argument("--max-seconds", type=float)
    t.add_argument("--out", required=True)
    t.add_argument("--history")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy, spikes, latency and energy of a checkpoint")
    common(e)
    e.add_argument("checkpoint")
    e.add_argument("--split", choices=["train", "test"], default="test")
    e.add_argument("--tmax", type=int, default=64)
    e.add_argument("--T", type=int, help="window length (defaults to --tmax)")
    e.add_argument("--n", type=int)
    e.add_argument("--software", action="store_true", help="ignore the quantized section")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("quantize", help="map weights onto the 101-state conductance ladder")
    common(q)
    q.add_argument("checkpoint")
    q.add_argument("--out")
    q.add_argument("--ladder", choices=["saturating", "linear", "table"], default="saturating")
    q.add_argument("--gmin", type=float, default=0.0)
    q.add_argument("--gmax", type=float, default=1.0)
    q.add_argument("--curvature", type=float, default=15.0)
    q.add_argument("--table")
    q.add_argument("--force", action="store_true")
    q.add_argument("--n-eval", type=int, default=0, help="test images for before/after accuracy")
    q.add_argument("--tmax", type=int, default=64)
    q.set_defaults(func=cmd_quantize)

    i = sub.add_parser("inject", help="evaluate one hardware variation draw")
    common(i)
    i.add_argument("checkpoint")
    i.add_argument("--sigma-weight", type=float, default=0.0)
    i.add_argument("--sigma-th", type=float, default=0.0)
    i.add_argument("--r-synapse", type=float, default=0.0)
    i.add_argument("--r-neuron", type=float, default=0.0)
    i.add_argument("--T", type=int, default=64)
    i.add_argument("--n", type=int)
    i.add_argument("--out")
    i.set_defaults(func=cmd_inject)

    s = sub.add_parser("sweep", help="time-step or variation sweep to CSV/JSON")
    common(s)
    s.add_argument("--type", choices=["timesteps", "variation"], required=True)
    s.add_argument("--ttfs")
    s.add_argument("--rate")
    s.add_argument("--list", default="4,8,16,32,64,128,256")
    s.add_argument("--param", choices=list(metrics.VARIATION_PARAMS))
    s.add_argument("--grid")
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--T", type=int, default=64)
    s.add_argument("--n", type=int)
    s.add_argument("--out", default="sweep")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("export-raster", help="raster and membrane CSVs for one image")
    common(r)
    r.add_argument("checkpoint")
    r.add_argument("--image", type=int, required=True)
    r.add_argument("--split", choices=["train", "test"], default="test")
    r.add_argument("--T", type=int, default=64)
    r.add_argument("--software", action="store_true")
    r.add_argument("--prefix", default="raster")
    r.set_defaults(func=cmd_export_raster)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ttfs-snn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"ttfs-snn {args.command}: training diverged: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"ttfs-snn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
