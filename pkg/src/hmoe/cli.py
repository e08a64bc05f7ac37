"""Command-line entry point.

Subcommands: gen-data, train, eval, gradcheck, visualize, bench. Heavy
imports are deferred so HMOE_THREADS can cap BLAS parallelism before
numpy loads.
"""

import argparse
import json
import math
import os
import sys
import time


def _apply_thread_cap():
    cap = os.environ.get("HMOE_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hmoe",
        description="Train and inspect binary soft trees with subtree dropout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the toy sinusoid dataset")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sinusoid.csv")
    p.add_argument("--grid-out", default="sinusoid-grid.csv",
                   help="noiseless held-out grid CSV")
    p.add_argument("--grid-points", type=int, default=1000)

    p = sub.add_parser("train", help="train a model and write a run directory")
    p.add_argument("--task", choices=["regression", "classification"])
    p.add_argument("--depth", type=int)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--mask-granularity", choices=["example", "minibatch"],
                   default="example")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", dest="train_path",
                   help="dataset path (.csv, .fvec, or IDX pair 'images,labels')")
    p.add_argument("--val", dest="val_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--val-ratio", default="5:1",
                   help="train:val ratio used when --val is absent")
    p.add_argument("--classes", type=int,
                   help="class count (default: inferred from labels)")
    p.add_argument("--out-dir")
    p.add_argument("--from-manifest",
                   help="replay a previous run's manifest.json (flags ignored "
                        "except --out-dir)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("gradcheck",
                       help="compare exact gradients against finite differences")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("visualize",
                       help="export node images (PGM) or a prediction grid CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset for node responsibilities / grid range")
    p.add_argument("--out-dir", default="viz")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--xmin", type=float)
    p.add_argument("--xmax", type=float)

    p = sub.add_parser("bench", help="benchmark the kernel backends")
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--input-dim", type=int, default=1)
    p.add_argument("--output-dim", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--repeats", type=int, default=50)
    return parser


def _load_dataset(spec, for_classification):
    from . import data

    if "," in spec:
        images, labels = spec.split(",", 1)
        for part in (images, labels):
            if not os.path.exists(part):
                raise FileNotFoundError(f"no such file: {part}")
        return data.read_idx(images, labels)
    if not os.path.exists(spec):
        raise FileNotFoundError(f"no such file: {spec}")
    if spec.endswith(".fvec"):
        return data.read_fvec(spec)
    if spec.endswith(".csv"):
        if for_classification:
            raise ValueError("CSV datasets are regression-only (x,y columns)")
        return data.read_xy_csv(spec)
    raise ValueError(f"cannot infer dataset format of {spec!r}")


def _cmd_gen_data(args):
    import numpy as np

    from . import data

    ds = data.gen_sinusoid(args.n, args.noise_std, args.seed)
    data.write_xy_csv(ds, args.out)
    grid = data.sinusoid_grid(args.grid_points)
    data.write_xy_csv(grid, args.grid_out)
    print(f"wrote {args.out} ({ds.n_examples} rows) and {args.grid_out} "
          f"({grid.n_examples} rows)")
    return 0


def _timestamp():
    return time.strftime("%Y-%m-%dT%H:%M:%S")


def _cmd_train(args):
    from . import _backend, data, optim, tree

    if args.from_manifest:
        with open(args.from_manifest) as fh:
            manifest = json.load(fh)
        stored = manifest["args"]
        for key, value in stored.items():
            if key != "out_dir":
                setattr(args, key, value)

    for key in ("task", "depth", "epochs", "train_path"):
        if getattr(args, key) is None:
            raise ValueError(f"--{key.replace('_path', '').replace('_', '-')} is required")

    classification = args.task == "classification"
    train_set = _load_dataset(args.train_path, classification)
    val_set = _load_dataset(args.val_path, classification) if args.val_path else None
    test_set = _load_dataset(args.test_path, classification) if args.test_path else None
    if val_set is None:
        spec = data.SplitSpec.parse(args.val_ratio, seed=args.seed)
        train_set, val_set = data.split(train_set, spec)

    if classification:
        task = tree.TaskKind.CLASSIFICATION
        if args.classes:
            output_dim = args.classes
        else:
            output_dim = 1 + max(
                int(ds.targets.max())
                for ds in (train_set, val_set, test_set)
                if ds is not None and ds.n_examples
            )
    else:
        task = tree.TaskKind.REGRESSION
        t = train_set.targets
        output_dim = 1 if t.ndim == 1 else t.shape[1]

    config = tree.ModelConfig(args.depth, train_set.input_dim, output_dim, task)
    settings = optim.TrainSettings(
        epochs=args.epochs, dropout=args.dropout, learning_rate=args.lr,
        batch_size=args.batch_size, seed=args.seed,
        mask_granularity=args.mask_granularity,
    )

    out_dir = args.out_dir or f"run-{time.strftime('%Y%m%d-%H%M%S')}-seed{args.seed}"
    os.makedirs(out_dir, exist_ok=False)
    started = _timestamp()

    print(f"model: depth {config.depth}, {config.n_internal} internal nodes, "
          f"{config.n_leaves} leaves, input_dim {config.input_dim}, "
          f"output_dim {config.output_dim} [{_backend.BACKEND} backend]")
    report = optim.train(config, settings, train_set, val_set, test_set)
    for r in report.records:
        line = (f"epoch {r.epoch:4d}  train_loss {r.train_loss:.6f}  "
                f"train_err {r.train_err:.6f}  val_err {r.val_err:.6f}")
        if not math.isnan(r.test_err):
            line += f"  test_err {r.test_err:.6f}"
        print(line)

    curves = os.path.join(out_dir, "curves.csv")
    best_ckpt = os.path.join(out_dir, "best.ckpt")
    final_ckpt = os.path.join(out_dir, "final.ckpt")
    report.write_curves(curves)
    tree.save_checkpoint(report.best_model, best_ckpt)
    tree.save_checkpoint(report.final_model, final_ckpt)

    manifest = {
        "command": "train",
        "args": {
            "task": args.task, "depth": args.depth, "dropout": args.dropout,
            "mask_granularity": args.mask_granularity, "lr": args.lr,
            "epochs": args.epochs, "batch_size": args.batch_size,
            "seed": args.seed, "train_path": args.train_path,
            "val_path": args.val_path, "test_path": args.test_path,
            "val_ratio": args.val_ratio, "classes": args.classes,
        },
        "data": {
            "train": {"name": train_set.name, "n": train_set.n_examples,
                      "input_dim": train_set.input_dim},
            "val": {"name": val_set.name, "n": val_set.n_examples},
            "test": None if test_set is None else
                    {"name": test_set.name, "n": test_set.n_examples},
        },
        "model": {
            "depth": config.depth,
            "internal_nodes": config.n_internal,
            "leaves": config.n_leaves,
            "input_dim": config.input_dim,
            "output_dim": config.output_dim,
        },
        "backend": _backend.BACKEND,
        "started": started,
        "finished": _timestamp(),
        "results": {
            "best_val_epoch": report.best_val_epoch,
            "best_val_error": report.best_val_error,
            "final_val_error": report.records[-1].val_err,
            "final_train_error": report.records[-1].train_err,
            "final_test_error": report.records[-1].test_err,
        },
        "artifacts": {"curves": curves, "best": best_ckpt, "final": final_ckpt},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    print(f"best val err {report.best_val_error:.6f} at epoch "
          f"{report.best_val_epoch}; artifacts in {out_dir}/")
    return 0


def _cmd_eval(args):
    from . import optim, tree

    model = tree.load_checkpoint(args.ckpt)
    classification = model.config.task is tree.TaskKind.CLASSIFICATION
    ds = _load_dataset(args.data, classification)
    result = optim.evaluate(model, ds)
    print(f"mean_loss {result.mean_loss:.17g}")
    print(f"error {result.error:.17g}")
    return 0


def _cmd_gradcheck(args):
    from . import grad

    worst = grad.gradcheck(args.instances, args.h, args.seed)
    print(f"max relative error over {args.instances} instances: {worst:.3e} "
          f"(tolerance {args.tolerance:.3e})")
    if worst > args.tolerance:
        print("FAIL")
        return 1
    print("OK")
    return 0


def _cmd_visualize(args):
    import numpy as np

    from . import report, tree

    model = tree.load_checkpoint(args.ckpt)
    cfg = model.config
    if cfg.input_dim == 1 and cfg.output_dim == 1:
        classification = cfg.task is tree.TaskKind.CLASSIFICATION
        if args.xmin is not None and args.xmax is not None:
            lo, hi = args.xmin, args.xmax
        elif args.data:
            ds = _load_dataset(args.data, classification)
            lo = float(ds.features.min())
            hi = float(ds.features.max())
        else:
            lo, hi = -2.0 * np.pi, 2.0 * np.pi
        os.makedirs(args.out_dir, exist_ok=True)
        out = os.path.join(args.out_dir, "predictions.csv")
        grid = np.linspace(lo, hi, args.points)
        report.write_prediction_csv(model, grid, out)
        tv = report.total_variation(model, grid)
        print(f"wrote {out} ({args.points} rows), total variation {tv:.6g}")
        return 0

    if not args.data:
        raise ValueError("--data is required for node image export")
    if not args.width or not args.height:
        raise ValueError("--width and --height are required for node image export")
    classification = cfg.task is tree.TaskKind.CLASSIFICATION
    ds = _load_dataset(args.data, classification)
    images = report.node_visualizations(model, ds)
    os.makedirs(args.out_dir, exist_ok=True)
    written = 0
    for img in images:
        if not img.active:
            continue
        report.export_pgm(
            img, args.width, args.height,
            os.path.join(args.out_dir, f"node_{img.node}.pgm"),
        )
        written += 1
    skipped = len(images) - written
    print(f"wrote {written} node images to {args.out_dir}/ "
          f"({skipped} inactive nodes skipped)")
    return 0


def _cmd_bench(args):
    import numpy as np

    from . import _backend

    rng = np.random.Generator(np.random.PCG64(0))
    ni = (1 << args.depth) - 1
    B, o = args.batch_size, args.output_dim
    alphas = np.ascontiguousarray(rng.uniform(0.05, 0.95, (B, ni)))
    drops = (rng.random((B, ni)) < args.dropout).astype(np.uint8)
    leaves = np.ascontiguousarray(rng.normal(0.0, 1.0, (ni + 1, o)))
    upstream = np.ascontiguousarray(rng.normal(0.0, 1.0, (B, o)))

    print(f"depth {args.depth} ({ni} internal), batch {B}, output_dim {o}, "
          f"dropout {args.dropout}, {args.repeats} repeats")
    timings = {}
    for name in _backend.available_backends():
        impl = _backend.get_backend(name)
        out, pw = impl.mix_forward(alphas, drops, leaves)  # warmup
        impl.mix_backward(alphas, drops, out, pw, upstream)
        fwd = []
        bwd = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            out, pw = impl.mix_forward(alphas, drops, leaves)
            t1 = time.perf_counter()
            impl.mix_backward(alphas, drops, out, pw, upstream)
            t2 = time.perf_counter()
            fwd.append(t1 - t0)
            bwd.append(t2 - t1)
        timings[name] = (min(fwd), min(bwd))
        print(f"  {name:>6}: forward {min(fwd) * 1e6:9.1f} us   "
              f"backward {min(bwd) * 1e6:9.1f} us")
    if len(timings) == 2:
        f_ratio = timings["numpy"][0] / timings["cython"][0]
        b_ratio = timings["numpy"][1] / timings["cython"][1]
        print(f"  cython speedup: forward {f_ratio:.2f}x, backward {b_ratio:.2f}x")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "visualize": _cmd_visualize,
    "bench": _cmd_bench,
}


def main(argv=None):
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
