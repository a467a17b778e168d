"""Command-line surface.

Exit codes: 0 success, 1 runtime/verification failure, 2 usage error. Every
command writes a manifest (command, resolved config, seed, paths, version,
duration) next to its outputs. One flat JSON config document drives model,
training and loss settings; command-line flags override config fields.
"""

import argparse
import csv
import dataclasses
import io
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, formats
from .augment import AugmentConfig
from .codec import DistributionSpec, decode, encode
from .data import group_kfold, load_dataset
from .evalkit import evaluate_pairs
from .gradcheck import run_suite
from .losses import LossConfig
from .model import ModelConfig, param_shapes, predict
from .overlay import render_overlay
from .synth import synth_dataset, write_dataset
from .train import TrainConfig, train

_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_LOSS_KEYS = {"beta", "epsilon"}
_EXTRA_KEYS = {"augment", "folds", "experiments", "radius", "mode"}


def _write_manifest(target, command, config, seed, inputs, outputs, started):
    target = Path(target)
    if target.is_dir():
        path = target / "manifest.json"
    else:
        path = target.with_name(target.name + ".manifest.json")
    formats.write_json(path, {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_seconds": round(time.monotonic() - started, 3),
    })


def _load_config(path, overrides):
    doc = formats.read_json(path) if path else {}
    unknown = set(doc) - _MODEL_KEYS - _TRAIN_KEYS - _LOSS_KEYS - _EXTRA_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    doc = dict(doc)
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    model = ModelConfig(**{k: doc[k] for k in _MODEL_KEYS if k in doc})
    tr = TrainConfig(**{k: doc[k] for k in _TRAIN_KEYS if k in doc})
    loss = LossConfig(variant=model.variant,
                      **{k: doc[k] for k in _LOSS_KEYS if k in doc})
    aug = doc.get("augment")
    if aug is True:
        aug = AugmentConfig()
    elif isinstance(aug, dict):
        aug = AugmentConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in aug.items()})
    else:
        aug = None
    return model, tr, loss, aug, doc


def _resolved_config(model, tr, loss, aug):
    doc = dataclasses.asdict(model)
    doc.update(dataclasses.asdict(tr))
    doc.update({"beta": loss.beta, "epsilon": loss.epsilon})
    doc["augment"] = dataclasses.asdict(aug) if aug else None
    return doc


def _dist_spec(args):
    if args.dist == "gaussian":
        if args.sigma1 is None:
            raise UsageError("--dist gaussian requires --sigma1")
        return DistributionSpec("gaussian", sigma1=args.sigma1)
    if args.dist == "tanh":
        if args.alpha is None:
            raise UsageError("--dist tanh requires --alpha")
        return DistributionSpec("tanh", alpha=args.alpha)
    return DistributionSpec("binary")


class UsageError(Exception):
    pass


# -- commands -----------------------------------------------------------------


def cmd_encode(args):
    started = time.monotonic()
    points = formats.read_points_any(args.points)
    spec = _dist_spec(args)
    heat = encode(points, spec)
    out = Path(args.out)
    formats.write_hm01(out, heat)
    outputs = [out]
    if args.pgm:
        formats.write_pgm16(args.pgm, heat)
        outputs.append(Path(args.pgm))
    _write_manifest(out, "encode", dataclasses.asdict(spec), None,
                    [args.points], outputs, started)
    return 0


def cmd_decode(args):
    started = time.monotonic()
    heat = formats.read_hm01(args.heatmap)
    points = decode(heat, threshold=args.threshold, connectivity=args.connectivity)
    out = Path(args.out)
    formats.write_points_json(out, points)
    _write_manifest(out, "decode",
                    {"threshold": args.threshold, "connectivity": args.connectivity},
                    None, [args.heatmap], [out], started)
    return 0


def cmd_synth(args):
    started = time.monotonic()
    lo, hi = (int(v) for v in args.dots.split(","))
    samples = synth_dataset(
        args.n, dims=(args.height, args.width), dots_per_image=(lo, hi),
        min_separation=args.min_separation, n_groups=args.groups, seed=args.seed,
    )
    root = Path(args.out)
    write_dataset(samples, root)
    _write_manifest(root, "synth", {
        "n": args.n, "height": args.height, "width": args.width,
        "dots": [lo, hi], "min_separation": args.min_separation,
        "groups": args.groups,
    }, args.seed, [], [root], started)
    return 0


def cmd_split(args):
    started = time.monotonic()
    samples = load_dataset(args.data)
    folds = group_kfold(samples, args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, (train_ids, val_ids) in enumerate(folds):
        path = out / f"fold_{i}.json"
        formats.write_split_manifest(path, i, train_ids, val_ids)
        written.append(path)
    _write_manifest(out, "split", {"k": args.k}, None, [args.data], written, started)
    return 0


def cmd_train(args):
    started = time.monotonic()
    model_cfg, train_cfg, loss_cfg, aug_cfg, _ = _load_config(args.config, {
        "epochs": args.epochs, "seed": args.seed, "variant": args.variant,
        "sigma1": args.sigma1, "sigma2": args.sigma2,
        "learning_rate": args.learning_rate,
    })
    samples = load_dataset(args.data)
    weights, log = train(samples, model_cfg, train_cfg, loss_cfg, aug_cfg)
    out = Path(args.out)
    formats.write_hw01(out, weights)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.csv")
    _write_csv(log_path, log, ["epoch", "loss_total", "loss_l1", "loss_l2", "lr"])
    _write_manifest(out, "train",
                    _resolved_config(model_cfg, train_cfg, loss_cfg, aug_cfg),
                    train_cfg.seed, [args.data, args.config], [out, log_path],
                    started)
    return 0


def _load_model(args):
    model_cfg, _, _, _, _ = _load_config(args.config, {})
    raw = formats.read_hw01(args.weights)
    shapes = param_shapes(model_cfg)
    if set(raw) != set(shapes):
        raise ValueError("weights file does not match the configured model "
                         f"(missing {sorted(set(shapes) - set(raw))}, "
                         f"unexpected {sorted(set(raw) - set(shapes))})")
    weights = {name: raw[name].reshape(shapes[name]) for name in shapes}
    return model_cfg, weights


def _image_files(root):
    root = Path(root)
    files = sorted(root.rglob("*.ppm"))
    if not files:
        raise ValueError(f"no .ppm images under {root}")
    return files


def cmd_predict(args):
    started = time.monotonic()
    model_cfg, weights = _load_model(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for img_path in _image_files(args.data):
        image = formats.read_netpbm(img_path)
        points = predict(weights, model_cfg, image, threshold=args.threshold)
        rel = img_path.relative_to(args.data).with_suffix(".json")
        dest = out / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        formats.write_points_json(dest, points)
        written.append(dest)
    _write_manifest(out, "predict", {"threshold": args.threshold}, None,
                    [args.data, args.weights, args.config], written, started)
    return 0


def _points_files(root):
    root = Path(root)
    return {
        str(p.relative_to(root).with_suffix("")): p
        for p in sorted(root.rglob("*.json"))
        if not p.name.endswith("manifest.json")
    }


def _write_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                         for k in columns})
    formats._atomic_write_bytes(path, buf.getvalue().encode())


def cmd_eval(args):
    started = time.monotonic()
    pred_files = _points_files(args.pred)
    gt_files = _points_files(args.gt)
    orphans = sorted(set(pred_files) ^ set(gt_files))
    if orphans:
        raise ValueError(
            "prediction/ground-truth stems do not match; orphans: "
            + ", ".join(orphans)
        )
    stems = sorted(pred_files)
    pairs = [(formats.read_points_any(pred_files[s]),
              formats.read_points_any(gt_files[s])) for s in stems]
    radii = [float(r) for r in args.radii.split(",")]
    modes = args.mode.split(",")
    rows, reports = evaluate_pairs(pairs, radii, modes)

    out = Path(args.out)
    csv_rows = []
    for radius, mode, rep in rows:
        csv_rows.append({
            "radius": radius, "mode": mode, "ppv": rep.ppv, "tpr": rep.tpr,
            "f1": rep.f1, "rmse": rep.rmse, "mean_min_dist": rep.mean_min_dist,
            "images_with_predictions": rep.images_with_predictions,
            "images_total": rep.images_total,
        })
    columns = ["radius", "mode", "ppv", "tpr", "f1", "rmse", "mean_min_dist",
               "images_with_predictions", "images_total"]
    _write_csv(out, csv_rows, columns)
    formats.write_json(out.with_suffix(".json"), csv_rows)

    written = [out, out.with_suffix(".json")]
    for radius in radii:
        dump = {"radius": radius, "images": {}}
        for stem, report, (pred, gt) in zip(stems, reports[radius], pairs):
            p, g = pred.as_array(), gt.as_array()
            dump["images"][stem] = {
                "matches": [
                    {"pred": list(p[pi]), "gt": list(g[gi]), "distance": d}
                    for pi, gi, d in report.matches
                ],
                "false_positives": [list(p[i]) for i in report.unmatched_pred],
                "false_negatives": [list(g[i]) for i in report.unmatched_gt],
            }
        dump_path = out.with_name(f"{out.stem}.matches_r{radius:g}.json")
        formats.write_json(dump_path, dump)
        written.append(dump_path)
    _write_manifest(out, "eval", {"radii": radii, "modes": modes}, None,
                    [args.pred, args.gt], written, started)
    return 0


def cmd_gradcheck(args):
    scopes = args.scope.split(",")
    rows = run_suite(scopes, tolerance=args.tol, model_tolerance=args.model_tol,
                     step=args.step, seed=args.seed)
    print(f"{'scope':8s} {'case':24s} {'max_rel_err':>12s}  result")
    failures = []
    for scope, name, report in rows:
        ok = report.passed
        print(f"{scope:8s} {name:24s} {report.max_rel_err:12.3e}  "
              f"{'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)
    if failures:
        print(f"gradient check failed for: {', '.join(failures)}", file=sys.stderr)
        return 1
    return 0


def cmd_overlay(args):
    started = time.monotonic()
    image = formats.read_netpbm(args.image)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    dump = formats.read_json(args.matches)
    images = dump.get("images", {})
    stem = Path(args.image).stem
    entry = images.get(stem)
    if entry is None:
        for key in images:
            if key.rsplit("/", 1)[-1] == stem:
                entry = images[key]
                break
    if entry is None and len(images) == 1:
        entry = next(iter(images.values()))
    if entry is None:
        raise ValueError(f"no match-dump entry for image {stem!r}")
    out_img = render_overlay(image, entry["matches"], entry["false_positives"],
                             entry["false_negatives"])
    out = Path(args.out)
    formats.write_ppm8(out, out_img)
    _write_manifest(out, "overlay", {}, None, [args.image, args.matches],
                    [out], started)
    return 0


def cmd_xval(args):
    started = time.monotonic()
    model_cfg, train_cfg, loss_cfg, aug_cfg, doc = _load_config(args.config, {})
    samples = load_dataset(args.data)
    by_id = {s.sample_id: s for s in samples}
    k = doc.get("folds", 4)
    radius = float(doc.get("radius", 6.0))
    mode = doc.get("mode", "micro")
    experiments = doc.get("experiments")
    if not experiments:
        experiments = [{
            "distribution": model_cfg.distribution, "sigma1": model_cfg.sigma1,
            "sigma2": model_cfg.sigma2, "variant": model_cfg.variant,
            "alpha": model_cfg.alpha,
        }]
    folds = group_kfold(samples, k)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fold_rows = []
    summary_rows = []
    for exp in experiments:
        bad = set(exp) - _MODEL_KEYS
        if bad:
            raise ValueError(f"unknown experiment keys: {sorted(bad)}")
        cfg = dataclasses.replace(model_cfg, **exp)
        lcfg = dataclasses.replace(loss_cfg, variant=cfg.variant)
        if cfg.distribution == "tanh":
            label_dist = f"tanh(alpha={cfg.alpha:g})"
        else:
            label_dist = f"gaussian(sigma1={cfg.sigma1:g})"
        label = f"variant{cfg.variant}-{label_dist}-sigma2_{cfg.sigma2:g}"
        scores = []
        for fi, (train_ids, val_ids) in enumerate(folds):
            tcfg = dataclasses.replace(train_cfg, seed=train_cfg.seed + fi)
            weights, _ = train([by_id[i] for i in train_ids], cfg, tcfg,
                               lcfg, aug_cfg)
            pairs = [(predict(weights, cfg, by_id[i].image), by_id[i].points)
                     for i in val_ids]
            rows, _ = evaluate_pairs(pairs, radii=[radius], modes=(mode,))
            rep = rows[0][2]
            scores.append((rep.ppv, rep.tpr, rep.f1))
            fold_rows.append({
                "experiment": label, "distribution": label_dist, "fold": fi,
                "ppv": rep.ppv, "tpr": rep.tpr, "f1": rep.f1,
            })
        arr = np.asarray(scores)
        mean, std = arr.mean(axis=0), arr.std(axis=0)
        summary_rows.append({
            "experiment": label, "distribution": label_dist,
            "ppv_mean": mean[0], "ppv_std": std[0],
            "tpr_mean": mean[1], "tpr_std": std[1],
            "f1_mean": mean[2], "f1_std": std[2],
        })
    _write_csv(out / "xval.csv", summary_rows,
               ["experiment", "distribution", "ppv_mean", "ppv_std",
                "tpr_mean", "tpr_std", "f1_mean", "f1_std"])
    _write_csv(out / "xval_folds.csv", fold_rows,
               ["experiment", "distribution", "fold", "ppv", "tpr", "f1"])
    _write_manifest(out, "xval",
                    {"folds": k, "radius": radius, "mode": mode,
                     "experiments": experiments,
                     **_resolved_config(model_cfg, train_cfg, loss_cfg, aug_cfg)},
                    train_cfg.seed, [args.data, args.config],
                    [out / "xval.csv", out / "xval_folds.csv"], started)
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="suturepoint",
        description="Multi-instance point detection via heatmap regression",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="points JSON -> HM01 heatmap")
    p.add_argument("points")
    p.add_argument("--dist", choices=["gaussian", "tanh", "binary"],
                   default="gaussian")
    p.add_argument("--sigma1", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also write a 16-bit PGM rendering")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="HM01 heatmap -> points JSON")
    p.add_argument("heatmap")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("synth", help="write a synthetic labelled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--dots", default="3,12", help="min,max dots per image")
    p.add_argument("--min-separation", type=float, default=10.0)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="group-level k-fold split manifests")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a detector on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", type=int)
    p.add_argument("--sigma1", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict point sets for a directory")
    p.add_argument("--weights", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="match predictions to ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--radii", default="6,8,10")
    p.add_argument("--mode", default="micro,macro")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--scope", default="ops,layers")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--model-tol", dest="model_tol", type=float, default=1e-3)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("overlay", help="draw match outcomes onto an image")
    p.add_argument("--image", required=True)
    p.add_argument("--matches", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("xval", help="k-fold cross-validation over a config grid")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_xval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with code 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
